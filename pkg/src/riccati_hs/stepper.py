"""Backward Euler discretization of ``P' + A^T P + P A + P^2 = Q``.

Each step averages the coefficients over the cell and solves the algebraic
Riccati equation

    (A_n + I/(2 tau))^T P + P (A_n + I/(2 tau)) + P^2 = Q_n + P_{n-1} / tau

for its maximal solution. The shifted equation has right-hand side in
``C_{-(gamma + 1/(2 tau))^2}`` whenever ``Q_n >= -gamma^2`` and
``P_{n-1} >= -gamma``, so the stationary solver applies with the shifted
cone parameter; the step then checks the sharper bound ``P_n >= -gamma``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .are_solver import AreError, AreOptions, AreReport, continuation_solve
from .gelfand import (
    SYM_TOL,
    GelfandTriple,
    OperatorConstants,
    TripleError,
    estimate_constants,
    gamma_min,
    symmetrize,
)
from .resolvents import LyapunovCoefficient

__all__ = [
    "CoefficientPath",
    "ConstantPath",
    "AffinePath",
    "SampledPath",
    "ScaledPath",
    "SumPath",
    "as_path",
    "RiccatiProblem",
    "StepError",
    "StepRestrictionWarning",
    "BoundaryWarning",
    "Trajectory",
    "average_coefficients",
    "backward_euler_step",
    "integrate",
    "eval_interpolants",
]

logger = logging.getLogger(__name__)

CONE_SLACK = 1e-8

# 2-point Gauss-Legendre nodes on [0, 1]
_GAUSS = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


class StepError(RuntimeError):
    """A backward Euler step could not be taken."""


class StepRestrictionWarning(UserWarning):
    """The secondary step-size condition ``tau < C^2 / (2 mu)`` fails."""


class BoundaryWarning(UserWarning):
    """``gamma`` equals ``mu_v / c_vh^2`` instead of lying strictly below."""


# ---------------------------------------------------------------------------
# coefficient paths


class CoefficientPath:
    """Matrix-valued function of time with cell averages.

    Subclasses implement :meth:`value`; :meth:`average` defaults to 2-point
    Gauss quadrature, which is exact for polynomials of degree three.
    """

    kind = "general"

    def value(self, t):
        raise NotImplementedError

    def average(self, t0, t1):
        h = t1 - t0
        return 0.5 * (self.value(t0 + _GAUSS[0] * h) + self.value(t0 + _GAUSS[1] * h))

    def nodes(self, t0, t1):
        """Times at which pointwise constraints are checked on ``[t0, t1]``."""
        h = t1 - t0
        return (t0, t0 + _GAUSS[0] * h, t0 + _GAUSS[1] * h, t1)

    @property
    def dim(self):
        return self.value(0.0).shape[0]

    @property
    def is_constant(self):
        return False


class ConstantPath(CoefficientPath):
    kind = "constant"

    def __init__(self, mat):
        self.mat = np.array(mat, dtype=float, ndmin=2)
        self.mat.setflags(write=False)

    def value(self, t):
        return self.mat

    def average(self, t0, t1):
        return self.mat

    def nodes(self, t0, t1):
        return (t0,)

    @property
    def is_constant(self):
        return True


class AffinePath(CoefficientPath):
    """``t -> a0 + t a1``; averages are exact midpoint values."""

    kind = "affine"

    def __init__(self, a0, a1):
        self.a0 = np.array(a0, dtype=float, ndmin=2)
        self.a1 = np.array(a1, dtype=float, ndmin=2)
        if self.a0.shape != self.a1.shape:
            raise TripleError(f"affine path parts differ in shape: {self.a0.shape} vs {self.a1.shape}")

    def value(self, t):
        return self.a0 + t * self.a1

    def average(self, t0, t1):
        return self.value(0.5 * (t0 + t1))

    def nodes(self, t0, t1):
        return (t0, t1)


class SampledPath(CoefficientPath):
    """Piecewise linear interpolation of a table ``(times[i], values[i])``.

    Outside the table the end values are held constant.
    """

    kind = "sampled"

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.times.ndim != 1 or self.values.ndim != 3 or len(self.times) != len(self.values):
            raise TripleError("sampled path needs times (k,) and values (k, d, d)")
        if len(self.times) < 1 or np.any(np.diff(self.times) <= 0.0):
            raise TripleError("sampled path times must be strictly increasing")

    def value(self, t):
        i = int(np.searchsorted(self.times, t, side="right"))
        if i == 0:
            return self.values[0]
        if i == len(self.times):
            return self.values[-1]
        t0, t1 = self.times[i - 1], self.times[i]
        w = (t - t0) / (t1 - t0)
        return (1.0 - w) * self.values[i - 1] + w * self.values[i]

    def nodes(self, t0, t1):
        inner = self.times[(self.times > t0) & (self.times < t1)]
        return (t0, *inner.tolist(), t1)


class ScaledPath(CoefficientPath):
    """``t -> f(t) * base`` for a scalar function ``f``."""

    kind = "scaled"

    def __init__(self, func, base, label=None):
        self.func = func
        self.base = np.array(base, dtype=float, ndmin=2)
        self.label = label

    def value(self, t):
        return float(self.func(t)) * self.base


class SumPath(CoefficientPath):
    """Sum of paths, kept apart for norm bookkeeping of split data."""

    kind = "sum"

    def __init__(self, parts):
        self.parts = tuple(as_path(p) for p in parts)
        if not self.parts:
            raise TripleError("sum path needs at least one part")

    def value(self, t):
        return sum(p.value(t) for p in self.parts)

    def average(self, t0, t1):
        return sum(p.average(t0, t1) for p in self.parts)

    def nodes(self, t0, t1):
        return tuple(sorted({t for p in self.parts for t in p.nodes(t0, t1)}))

    @property
    def is_constant(self):
        return all(p.is_constant for p in self.parts)


def as_path(obj) -> CoefficientPath:
    """Wrap a matrix as a :class:`ConstantPath`; pass paths through."""
    if isinstance(obj, CoefficientPath):
        return obj
    return ConstantPath(obj)


# ---------------------------------------------------------------------------
# problem and trajectory


@dataclass
class RiccatiProblem:
    """Initial value problem in H-orthonormal coordinates of ``triple``.

    Parameters
    ----------
    triple : GelfandTriple
    a_path, q_path : CoefficientPath or array_like
        Coefficient ``A(t)`` and right-hand side ``Q(t)``.
    p0 : (d, d) array_like
        Symmetric initial value with ``p0 >= -gamma``.
    gamma : float
        Cone parameter, ``0 <= gamma < mu_v / c_vh**2``.
    horizon : float
        Final time ``T``.
    """

    triple: GelfandTriple
    a_path: CoefficientPath
    q_path: CoefficientPath
    p0: np.ndarray
    gamma: float
    horizon: float
    name: str = "problem"
    check_cells: int = 16
    strict: bool = False
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.a_path = as_path(self.a_path)
        self.q_path = as_path(self.q_path)
        self.p0 = symmetrize(np.array(self.p0, dtype=float, ndmin=2), SYM_TOL, "p0")
        self.gamma = float(self.gamma)
        self.horizon = float(self.horizon)
        self.validate(self.check_cells)

    @property
    def dim(self):
        return self.triple.dim

    def constants(self, a_mat) -> OperatorConstants:
        return estimate_constants(a_mat, self.triple)

    def validate(self, cells):
        """Check the hypotheses on a grid of ``cells`` equal cells.

        ``A`` is checked through its cell averages (which is what the scheme
        uses) and ``Q`` pointwise at the quadrature nodes of each cell.
        """
        d = self.dim
        if not self.horizon > 0.0:
            raise TripleError(f"horizon must be positive, got {self.horizon!r}")
        if self.gamma < 0.0:
            raise TripleError(f"gamma must be nonnegative, got {self.gamma!r}")
        if self.p0.shape != (d, d):
            raise TripleError(f"p0 has shape {self.p0.shape}, triple has dimension {d}")
        p0_min = float(np.linalg.eigvalsh(self.p0)[0])
        if p0_min < -self.gamma - 1e-10:
            raise TripleError(f"p0 is outside C_-gamma: smallest eigenvalue {p0_min:.6e} < {-self.gamma:.6e}")
        tau = self.horizon / cells
        mu_v = self.mu_v(cells)
        limit = self.triple.gamma_limit(mu_v)
        if self.gamma > limit * (1.0 + 1e-12):
            raise TripleError(
                f"gamma={self.gamma!r} violates gamma < mu_v / c_vh^2 = {limit:.6e}"
            )
        if not self.gamma < limit:
            msg = f"gamma={self.gamma!r} sits on the bound mu_v / c_vh^2 = {limit:.6e}"
            if self.strict:
                raise TripleError(msg)
            warnings.warn(msg, BoundaryWarning, stacklevel=4)
        floor = -self.gamma**2 - 1e-10 * max(1.0, self.gamma**2)
        for n in range(1, cells + 1):
            for t in self.q_path.nodes((n - 1) * tau, n * tau):
                q = self.q_path.value(t)
                if q.shape != (d, d):
                    raise TripleError(f"Q(t) has shape {q.shape}, triple has dimension {d}")
                q = symmetrize(q, SYM_TOL, f"Q({t!r})")
                q_min = float(np.linalg.eigvalsh(q)[0])
                if q_min < floor:
                    raise TripleError(
                        f"Q({t!r}) is outside C_-gamma^2: smallest eigenvalue {q_min:.6e} < {-self.gamma**2:.6e}"
                    )

    def mu_v(self, cells):
        """Smallest V-coercivity constant over the cell averages of ``A``."""
        tau = self.horizon / cells
        if self.a_path.is_constant:
            return self.constants(self.a_path.value(0.0)).mu_v
        return min(self.constants(self.a_path.average((n - 1) * tau, n * tau)).mu_v
                   for n in range(1, cells + 1))

    def step_limit(self, cells=None):
        """Exclusive bound on ``tau`` from the standing assumption."""
        return self.triple.step_limit(self.mu_v(cells or self.check_cells))


@dataclass
class Trajectory:
    """Backward Euler iterates on the grid ``t_n = n tau``.

    ``failed_at`` is the index of the step that failed (``None`` for a
    complete run); ``values`` then holds ``P_0, ..., P_{failed_at - 1}``.
    """

    tau: float
    values: list = field(default_factory=list)
    step_reports: list = field(default_factory=list)
    coefficients: list = field(default_factory=list)
    steps: int = 0
    failed_at: int | None = None
    error: str | None = None

    @property
    def grid(self):
        return self.tau * np.arange(len(self.values))

    @property
    def complete(self):
        return self.failed_at is None and len(self.values) == self.steps + 1

    @property
    def horizon(self):
        return self.tau * self.steps


def average_coefficients(problem: RiccatiProblem, n, tau):
    """Cell averages ``(A_n, Q_n)`` over ``(t_{n-1}, t_n]``."""
    if n < 1:
        raise ValueError(f"step index must be at least 1, got {n}")
    t0, t1 = (n - 1) * tau, n * tau
    return problem.a_path.average(t0, t1), problem.q_path.average(t0, t1)


def _check_step_size(tau, mu_v, c_vh, strict):
    limit = mu_v / (2.0 * c_vh**2)
    if not tau < limit:
        raise StepError(f"tau={tau!r} violates tau < mu_v / (2 c_vh^2) = {limit:.6e}")
    other = c_vh**2 / (2.0 * mu_v)
    if not tau < other:
        msg = f"tau={tau!r} does not satisfy tau < c_vh^2 / (2 mu_v) = {other:.6e}"
        if strict:
            raise StepError(msg)
        warnings.warn(msg, StepRestrictionWarning, stacklevel=3)


def backward_euler_step(p_prev, a_n, q_n, tau, gamma, options: AreOptions | None = None, *,
                        constants: OperatorConstants | None = None, c_vh=None, strict=False):
    """One backward Euler step; returns ``(P_n, AreReport)``.

    Parameters
    ----------
    p_prev : (d, d) array_like
        Previous iterate, ``p_prev >= -gamma``.
    a_n, q_n : (d, d) array_like or LyapunovCoefficient
        Cell averages of the coefficient and the data.
    tau : float
        Step size.
    gamma : float
        Cone parameter of the problem.
    constants : OperatorConstants, optional
        Constants of ``a_n``. When given together with ``c_vh`` the step
        restriction ``tau < mu_v / (2 c_vh^2)`` is enforced.
    strict : bool
        Promote the secondary step-size warning to an error.

    Raises
    ------
    StepError
        On a step-size violation, solver failure, or ``P_n`` leaving
        ``C_{-gamma}`` by more than ``1e-8``.
    """
    if not tau > 0.0:
        raise StepError(f"tau must be positive, got {tau!r}")
    coeff = a_n if isinstance(a_n, LyapunovCoefficient) else LyapunovCoefficient(a_n)
    p_prev = symmetrize(np.array(p_prev, dtype=float, ndmin=2), SYM_TOL, "p_prev")
    prev_min = float(np.linalg.eigvalsh(p_prev)[0])
    if prev_min < -gamma - CONE_SLACK:
        raise StepError(f"previous iterate outside C_-gamma: {prev_min:.6e} < {-gamma:.6e}")
    if constants is not None and c_vh is not None:
        _check_step_size(tau, constants.mu_v, c_vh, strict)
    shift = 0.5 / tau
    if constants is not None:
        mu_h = constants.mu_h_used
    else:
        mu_h = float(np.linalg.eigvalsh(0.5 * (coeff.a_mat + coeff.a_mat.T))[0])
    rhs = symmetrize(np.asarray(q_n, dtype=float), SYM_TOL, "q_n") + p_prev / tau
    # rhs >= -(gamma + shift)^2 holds by construction; the smallest cone
    # parameter of the actual data is never larger and gives a longer lambda
    gamma_step = min(gamma + shift, gamma_min(rhs))
    try:
        p, report = continuation_solve(rhs, coeff.shifted(shift), gamma_step, options,
                                       mu_h=mu_h + shift, p_init=p_prev)
    except (AreError, TripleError) as exc:
        raise StepError(f"stationary solve failed: {exc}") from exc
    if report.min_eig < -gamma - CONE_SLACK:
        raise StepError(f"step left C_-gamma: {report.min_eig:.6e} < {-gamma:.6e}")
    return p, report


def integrate(problem: RiccatiProblem, steps, options: AreOptions | None = None, *, strict=False):
    """Run ``steps`` backward Euler steps over ``[0, T]``.

    A failing step does not raise: the returned trajectory records the
    failing index and message, and holds the iterates computed before it.
    The step restriction is checked against every distinct coefficient and
    raises :class:`StepError`.
    """
    if steps < 1:
        raise ValueError(f"steps must be at least 1, got {steps}")
    tau = problem.horizon / steps
    traj = Trajectory(tau=tau, values=[problem.p0], steps=steps)
    const_cache = {}
    p = problem.p0
    for n in range(1, steps + 1):
        a_n, q_n = average_coefficients(problem, n, tau)
        key = id(a_n) if problem.a_path.is_constant else n
        if key not in const_cache:
            const_cache.clear()
            const_cache[key] = (problem.constants(a_n), LyapunovCoefficient(a_n))
        constants, coeff = const_cache[key]
        traj.coefficients.append((constants.mu_v, constants.mu_h))
        if n == 1 or not problem.a_path.is_constant:
            _check_step_size(tau, constants.mu_v, problem.triple.c_vh, strict)
        try:
            p, report = backward_euler_step(p, coeff, q_n, tau, problem.gamma, options,
                                            constants=constants, strict=strict)
        except StepError as exc:
            traj.failed_at = n
            traj.error = str(exc)
            logger.warning("step %d failed: %s", n, exc)
            break
        traj.values.append(p)
        traj.step_reports.append(report)
    return traj


def eval_interpolants(traj: Trajectory, t):
    """Piecewise constant, piecewise linear and slope interpolants at ``t``.

    For ``t`` in ``(t_{n-1}, t_n]`` the constant interpolant is ``P_n`` and
    the slope is ``(P_n - P_{n-1}) / tau``; at a grid point the slope of the
    cell to the left is used, and at ``t = 0`` that of the first cell.
    """
    n_avail = len(traj.values) - 1
    t_end = traj.tau * n_avail
    tol = 1e-12 * max(1.0, t_end)
    if n_avail < 1:
        raise ValueError("trajectory has no steps")
    if t < -tol or t > t_end + tol:
        raise ValueError(f"t={t!r} outside [0, {t_end!r}]")
    if t <= tol:
        p0, p1 = traj.values[0], traj.values[1]
        return p0, p0, (p1 - p0) / traj.tau
    n = int(math.ceil(t / traj.tau - 1e-9))
    n = min(max(n, 1), n_avail)
    p_prev, p_n = traj.values[n - 1], traj.values[n]
    w = (t - (n - 1) * traj.tau) / traj.tau
    w = min(max(w, 0.0), 1.0)
    slope = (p_n - p_prev) / traj.tau
    return p_n, p_prev + w * (p_n - p_prev), slope
