"""Maximal solutions of the algebraic Riccati equation ``A^T P + P A + P^2 = Q``.

The primary route regularizes the quadratic term by its Yosida
approximation and solves the fixed-point problem

    P = G(P) = lam (lam A0 + I)^{-1} Q + (lam A0 + I)^{-1} J_lam P

for a decreasing sequence of ``lam``. Newton-Kleinman serves both as an
independent oracle and as an optional final polish.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .gelfand import SYM_TOL, TripleError, symmetrize
from .resolvents import (
    LyapunovCoefficient,
    ResolventError,
    lyapunov_contraction,
    quadratic_floor,
    quadratic_lipschitz,
    scalar_quadratic_root,
)

__all__ = [
    "AreError",
    "AreMode",
    "AreOptions",
    "AreReport",
    "FixedPointInfo",
    "are_residual",
    "choose_lambda",
    "lambda_conditions",
    "contraction_bound",
    "fixed_point_solve",
    "continuation_solve",
    "newton_kleinman",
    "solve_are",
]

logger = logging.getLogger(__name__)

# relative size (in machine epsilons) below which a fixed-point step is
# considered lost to rounding
_RESOLUTION = 1e3


class AreError(RuntimeError):
    """The algebraic Riccati solve failed (divergence, cap, or cone exit)."""


class AreMode(str, Enum):
    PAPER = "paper_faithful"
    POLISH = "paper_plus_newton_polish"
    NEWTON = "newton_oracle"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"paper": cls.PAPER, "polish": cls.POLISH, "newton": cls.NEWTON}
        if value in aliases:
            return aliases[value]
        return cls(value)


@dataclass
class AreOptions:
    lambda0: float | None = None  # None: 1/mu_h
    lambda_shrink: float = 0.5
    fp_tol: float = 1e-12
    fp_max_iter: int = 500
    continuation_tol: float = 1e-12
    max_levels: int = 80
    mode: AreMode = AreMode.POLISH
    polish_switch_tol: float = 1e-6
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    anderson_depth: int = 10  # 0 disables acceleration
    max_contraction: float = 0.999  # continuation skips levels with a weaker bound
    cone_tol: float = 1e-9
    check_bounds: bool = False

    def __post_init__(self):
        self.mode = AreMode.parse(self.mode)
        if self.lambda0 is not None and not self.lambda0 > 0.0:
            raise ValueError(f"lambda0 must be positive, got {self.lambda0!r}")
        if not 0.0 < self.lambda_shrink < 1.0:
            raise ValueError(f"lambda_shrink must lie in (0, 1), got {self.lambda_shrink!r}")
        for name in ("fp_tol", "continuation_tol", "polish_switch_tol", "newton_tol", "cone_tol"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("fp_max_iter", "max_levels", "newton_max_iter"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.anderson_depth < 0:
            raise ValueError("anderson_depth must be nonnegative")
        if not 0.0 < self.max_contraction < 1.0:
            raise ValueError(f"max_contraction must lie in (0, 1), got {self.max_contraction!r}")


@dataclass
class FixedPointInfo:
    lam: float
    iterations: int
    contraction_estimate: float
    contraction_bound: float
    regularized_residual: float
    accelerated_steps: int = 0


@dataclass
class AreReport:
    residual_hs: float
    min_eig: float
    lambda_schedule: list = field(default_factory=list)
    fp_iters_per_lambda: list = field(default_factory=list)
    contraction_estimates: list = field(default_factory=list)
    mode_used: str = AreMode.POLISH.value
    newton_iters: int = 0
    clamp_magnitude: float = 0.0

    @property
    def total_iters(self):
        return int(sum(self.fp_iters_per_lambda)) + self.newton_iters

    def to_dict(self):
        return asdict(self)


def are_residual(p, coeff: LyapunovCoefficient, q):
    """``A^T P + P A + P^2 - Q``."""
    return coeff.apply(p) + p @ p - q


def lambda_conditions(lam, gamma, mu_h):
    """Evaluate the three admissibility conditions for ``lam``.

    Returns a tuple ``(below_quarter, cone_self_map, contraction)`` of bools.
    """
    if gamma > 0.0:
        below = lam * 4.0 * gamma < 1.0
    else:
        below = True
    if not below:
        return False, False, False
    s = math.sqrt(1.0 - 4.0 * lam * gamma)
    d = 1.0 + 2.0 * lam * mu_h
    self_map = gamma >= lam * gamma**2 / d + 2.0 * gamma / (d * (1.0 + s))
    contraction = mu_h + mu_h * s - 2.0 * gamma - 4.0 * lam * mu_h * gamma > 0.0
    return below, self_map, contraction


def contraction_bound(lam, gamma, mu_h):
    """Lipschitz bound of ``G`` on ``C_{-gamma}``."""
    return lyapunov_contraction(lam, mu_h) * quadratic_lipschitz(lam, gamma)


def choose_lambda(gamma, mu_h, options: AreOptions | None = None):
    """Largest ``lambda0 * shrink**k`` satisfying all three conditions.

    Raises
    ------
    AreError
        If ``gamma >= mu_h`` or no admissible value above ``1e-300`` exists.
    """
    options = options or AreOptions()
    if gamma < 0.0:
        raise AreError(f"gamma must be nonnegative, got {gamma!r}")
    if not gamma < mu_h:
        raise AreError(f"requires 0 <= gamma < mu_h, got gamma={gamma!r}, mu_h={mu_h!r}")
    lam = options.lambda0 if options.lambda0 is not None else 1.0 / mu_h
    while lam > 1e-300:
        if all(lambda_conditions(lam, gamma, mu_h)):
            return lam
        lam *= options.lambda_shrink
    raise AreError(f"no admissible lambda for gamma={gamma!r}, mu_h={mu_h!r}")


def _project_cone(p, gamma):
    """Clamp eigenvalues of symmetric ``p`` at ``-gamma``; returns (p, clamp)."""
    w, v = np.linalg.eigh(p)
    clamp = float(max(0.0, -gamma - w[0]))
    if clamp > 0.0:
        w = np.maximum(w, -gamma)
        p = (v * w) @ v.T
    return p, clamp


def _yosida_square(lam, p):
    """``(J_lam p)^2``, which equals ``(p - J_lam p) / lam`` exactly."""
    w, v = np.linalg.eigh(p)
    alpha = scalar_quadratic_root(lam, w)
    return (v * alpha**2) @ v.T


def fixed_point_solve(lam, q, coeff: LyapunovCoefficient, gamma, options: AreOptions | None = None,
                      *, p_init=None, mu_h=None):
    """Fixed point ``P_lam`` of ``G`` in ``C_{-gamma}``.

    The iteration is carried out in the increment form
    ``G(P) = P + lam (lam A0 + I)^{-1} (Q - A0 P - (J_lam P)^2)``, which is
    algebraically identical to the definition of ``G`` but avoids the
    cancellation in ``J_lam P - P`` for small ``lam``. Iteration stops once
    the a posteriori bound ``||G(P) - P|| / (1 - kappa)`` on the distance to
    the fixed point falls below ``fp_tol * (1 + ||P||)``, with ``kappa`` the
    theoretical Lipschitz bound of ``G``.

    Returns
    -------
    p : ndarray
    info : FixedPointInfo
    """
    options = options or AreOptions()
    q = np.asarray(q, dtype=float)
    if mu_h is None:
        mu_h = float(np.linalg.eigvalsh(0.5 * (coeff.a_mat + coeff.a_mat.T))[0])
    if not all(lambda_conditions(lam, gamma, mu_h)):
        raise AreError(f"lambda={lam!r} is not admissible for gamma={gamma!r}, mu_h={mu_h!r}")
    kappa = contraction_bound(lam, gamma, mu_h)
    p = np.zeros_like(q) if p_init is None else symmetrize(p_init, SYM_TOL, "p_init")
    p, clamp = _project_cone(p, gamma)
    if clamp > options.cone_tol:
        raise AreError(f"initial iterate outside C_-gamma by {clamp:.3e}")

    def step(x):
        f = q - coeff.apply(x) - _yosida_square(lam, x)
        r = lam * coeff.solve(f, alpha=lam, beta=1.0)
        return 0.5 * (r + r.T), f

    depth = options.anderson_depth
    xs, rs = [], []
    r, f = step(p)
    lip_est = 0.0
    accelerated = 0
    prev_p = prev_g = None
    eps = np.finfo(float).eps
    for it in range(1, options.fp_max_iter + 1):
        g = p + r
        r_norm = float(np.linalg.norm(r))
        p_norm = float(np.linalg.norm(p))
        # Mixing factor: 1 unless p + r would round back to p, in which case
        # the step is scaled to just above resolution (never beyond 1/(1-kappa)).
        beta = 1.0
        if 0.0 < r_norm < _RESOLUTION * eps * p_norm:
            beta = min(1.0 / (1.0 - kappa), _RESOLUTION * eps * p_norm / r_norm)
        if prev_p is not None:
            dp = np.linalg.norm(p - prev_p)
            if dp > 0.0:
                lip_est = max(lip_est, float(np.linalg.norm(g - prev_g) / dp))
        err_bound = r_norm / (1.0 - kappa)
        if err_bound <= options.fp_tol * (1.0 + p_norm):
            p = g
            floor = float(np.linalg.eigvalsh(p)[0])
            if floor < -gamma - options.cone_tol:
                raise AreError(f"fixed point left C_-gamma: {floor:.6e} < {-gamma:.6e}")
            p, _ = _project_cone(p, gamma)
            reg = float(np.linalg.norm(f))
            return p, FixedPointInfo(lam, it, lip_est, kappa, reg, accelerated)
        prev_p, prev_g = p, g
        candidate = g if beta == 1.0 else p + beta * r
        if depth > 0:
            xs.append(p)
            rs.append(r)
            if len(xs) > depth + 1:
                xs.pop(0)
                rs.pop(0)
            if len(xs) >= 2:
                d_r = np.stack([(rs[i + 1] - rs[i]).ravel() for i in range(len(rs) - 1)], axis=1)
                d_x = np.stack([(xs[i + 1] - xs[i]).ravel() for i in range(len(xs) - 1)], axis=1)
                coef, *_ = np.linalg.lstsq(d_r, r.ravel(), rcond=None)
                acc = (p.ravel() + beta * r.ravel() - (d_x + beta * d_r) @ coef).reshape(p.shape)
                acc = 0.5 * (acc + acc.T)
                if np.linalg.eigvalsh(acc)[0] >= -gamma - options.cone_tol:
                    candidate = acc
                    accelerated += 1
                else:
                    xs, rs = [], []
        p, _ = _project_cone(candidate, gamma)
        r_new, f = step(p)
        if (depth > 0 and beta == 1.0 and candidate is not g
                and np.linalg.norm(r_new) > 10.0 * r_norm):
            # accelerated step went astray; fall back to the plain map.
            # Scaled steps are skipped: they are tiny by construction.
            xs, rs = [], []
            p, _ = _project_cone(g, gamma)
            r_new, f = step(p)
        r = r_new
    raise AreError(f"fixed-point iteration did not converge in {options.fp_max_iter} iterations "
                   f"(lambda={lam!r})")


def newton_kleinman(q, coeff: LyapunovCoefficient, p_init=None, options: AreOptions | None = None):
    """Newton-Kleinman iteration for the maximal solution.

    Each step solves ``(A + P_k)^T X + X (A + P_k) = Q + P_k^2``. Returns
    ``(p, iterations)``.
    """
    options = options or AreOptions()
    q = np.asarray(q, dtype=float)
    p = np.zeros_like(q) if p_init is None else symmetrize(p_init, SYM_TOL, "p_init")
    scale = 1.0 + np.linalg.norm(q)
    best = math.inf
    for it in range(1, options.newton_max_iter + 1):
        closed = coeff.a_mat + p
        sym_min = float(np.linalg.eigvalsh(0.5 * (closed + closed.T))[0])
        if sym_min <= 0.0:
            raise AreError(f"shifted coefficient A + P_k is not positive (min sym eig {sym_min:.3e})")
        p = LyapunovCoefficient(closed).solve(q + p @ p, alpha=1.0, beta=0.0)
        p = 0.5 * (p + p.T)
        res = float(np.linalg.norm(are_residual(p, coeff, q)))
        logger.debug("newton iter %d residual %.3e", it, res)
        if res <= options.newton_tol * scale:
            return p, it
        if res >= best and res <= 1e-9 * scale:
            # stagnated at roundoff level
            return p, it
        best = min(best, res)
    raise AreError(f"Newton-Kleinman did not converge in {options.newton_max_iter} iterations")


def continuation_solve(q, coeff: LyapunovCoefficient, gamma, options: AreOptions | None = None,
                       *, mu_h=None, p_init=None):
    """Maximal solution in ``C_{-gamma}`` by lambda-continuation.

    Parameters
    ----------
    q : (d, d) array_like
        Symmetric right-hand side with ``q >= -gamma**2``.
    coeff : LyapunovCoefficient
    gamma : float
        Cone parameter, ``0 <= gamma < mu_h``.
    mu_h : float, optional
        H-coercivity constant of ``A``; defaults to ``min eig(sym A)``.
    p_init : array_like, optional
        Warm start (default zero).

    Returns
    -------
    p : ndarray
    report : AreReport
    """
    options = options or AreOptions()
    q = symmetrize(q, SYM_TOL, "q")
    if mu_h is None:
        mu_h = float(np.linalg.eigvalsh(0.5 * (coeff.a_mat + coeff.a_mat.T))[0])
    mode = options.mode
    if gamma < 0.0 or gamma > mu_h * (1.0 + 1e-12):
        raise AreError(f"requires 0 <= gamma < mu_h, got gamma={gamma!r}, mu_h={mu_h!r}")
    if not gamma < mu_h:
        # no lambda satisfies the contraction condition on the boundary, but
        # the Newton iteration does not need one
        if mode is AreMode.PAPER:
            raise AreError(f"gamma={gamma!r} equals mu_h; the fixed-point map has no admissible lambda")
        logger.info("gamma equals mu_h (%.6e); solving with Newton-Kleinman only", mu_h)
        mode = AreMode.NEWTON
    q_min = float(np.linalg.eigvalsh(q)[0])
    if q_min < -gamma**2 - 1e-10 * max(1.0, gamma**2):
        raise AreError(f"q is outside C_-gamma^2: smallest eigenvalue {q_min:.6e} < {-gamma**2:.6e}")
    q_scale = 1.0 + np.linalg.norm(q)
    report = AreReport(residual_hs=math.nan, min_eig=math.nan, mode_used=mode.value)

    if mode is AreMode.NEWTON:
        p, its = newton_kleinman(q, coeff, p_init, options)
        report.newton_iters = its
    else:
        p = np.zeros_like(q) if p_init is None else symmetrize(p_init, SYM_TOL, "p_init")
        p, clamp = _project_cone(p, gamma)
        report.clamp_magnitude = clamp
        lam = choose_lambda(gamma, mu_h, options)
        # The largest admissible lambda can sit on the edge of the contraction
        # condition, where the a posteriori stopping test is out of reach.
        # The bound tends to 1 again as lambda -> 0, so stop at its minimum.
        kappa = contraction_bound(lam, gamma, mu_h)
        while kappa > options.max_contraction:
            smaller = contraction_bound(lam * options.lambda_shrink, gamma, mu_h)
            if smaller >= kappa:
                break
            lam, kappa = lam * options.lambda_shrink, smaller
        prev = None
        history = []
        converged = False
        for _ in range(options.max_levels):
            start = p
            if len(history) == 2:
                # secant predictor in lambda; P_lam is smooth in lam
                (l1, p1), (l2, p2) = history
                start, _ = _project_cone(p2 + (lam - l2) * (p2 - p1) / (l2 - l1), gamma)
            try:
                p, info = fixed_point_solve(lam, q, coeff, gamma, options, p_init=start, mu_h=mu_h)
            except ResolventError as exc:
                raise AreError(str(exc)) from exc
            report.lambda_schedule.append(lam)
            report.fp_iters_per_lambda.append(info.iterations)
            report.contraction_estimates.append(info.contraction_estimate)
            res = float(np.linalg.norm(are_residual(p, coeff, q)))
            logger.debug("lambda %.3e: %d iterations, residual %.3e", lam, info.iterations, res)
            if mode is AreMode.POLISH:
                if res <= options.polish_switch_tol * q_scale:
                    converged = True
                    break
            elif prev is not None:
                cauchy = np.linalg.norm(p - prev)
                tol = options.continuation_tol
                if cauchy <= tol * (1.0 + np.linalg.norm(p)) and res <= 10.0 * tol * q_scale:
                    converged = True
                    break
            prev = p
            history = (history + [(lam, p)])[-2:]
            lam *= options.lambda_shrink
        if not converged:
            raise AreError(f"lambda schedule exhausted after {options.max_levels} levels "
                           f"(residual {res:.3e})")
        if mode is AreMode.POLISH:
            p, its = newton_kleinman(q, coeff, p, options)
            report.newton_iters = its

    lam_min = float(np.linalg.eigvalsh(p)[0])
    if lam_min < -gamma - 1e-8:
        raise AreError(f"solution left C_-gamma: {lam_min:.6e} < {-gamma:.6e}")
    report.min_eig = lam_min
    report.residual_hs = float(np.linalg.norm(are_residual(p, coeff, q)))
    return p, report


def solve_are(a_mat, q, gamma=None, options: AreOptions | None = None, **kwargs):
    """Convenience wrapper taking a raw coefficient matrix.

    ``gamma`` defaults to ``sqrt(max(0, -min eig q))``.
    """
    q = symmetrize(q, SYM_TOL, "q")
    if gamma is None:
        gamma = math.sqrt(max(0.0, -float(np.linalg.eigvalsh(q)[0])))
    coeff = a_mat if isinstance(a_mat, LyapunovCoefficient) else LyapunovCoefficient(a_mat)
    if coeff.dim != q.shape[0]:
        raise TripleError(f"dimension mismatch: A is {coeff.dim}, Q is {q.shape[0]}")
    return continuation_solve(q, coeff, gamma, options, **kwargs)
