"""Runnable checks of the discrete energy estimate, cone invariance,
convergence, stability and resolvent bounds.

Every check returns a :class:`CheckResult` (or a list of them) with a
``PASS``/``FAIL`` status, the smallest slack observed and, on failure, the
offending data as witnesses.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .are_solver import AreOptions, choose_lambda
from .gelfand import GelfandTriple, hs_inner, hs_norm, v_norm, vstar_norm
from .problems import scalar_riccati_flow, shift_to_floor
from .resolvents import (
    LyapunovCoefficient,
    lyapunov_contraction,
    lyapunov_resolvent,
    quadratic_bound,
    quadratic_floor,
    quadratic_lipschitz,
    quadratic_resolvent,
)
from .stepper import ConstantPath, RiccatiProblem, SumPath, Trajectory, average_coefficients, integrate

__all__ = [
    "PASS",
    "FAIL",
    "CheckResult",
    "Reference",
    "ReferenceError",
    "ConvergenceStudy",
    "apriori_check",
    "cone_monitor",
    "reference_solution",
    "convergence_study",
    "stability_check",
    "resolvent_property_suite",
    "observed_orders",
    "worker_count",
]

logger = logging.getLogger(__name__)

PASS = "PASS"
FAIL = "FAIL"

RK4_STABILITY_LIMIT = 2.7


@dataclass
class CheckResult:
    check: str
    status: str
    slack: float
    details: dict = field(default_factory=dict)
    witnesses: dict | None = None

    @property
    def passed(self):
        return self.status == PASS

    def to_dict(self):
        out = asdict(self)
        if out["witnesses"] is None:
            del out["witnesses"]
        return out


def _status(ok):
    return PASS if ok else FAIL


def worker_count():
    """Parallelism cap from ``RICC_HS_THREADS`` (default 1)."""
    raw = os.environ.get("RICC_HS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning("ignoring non-integer RICC_HS_THREADS=%r", raw)
        return 1


# ---------------------------------------------------------------------------
# trajectory checks


def apriori_check(traj: Trajectory, problem: RiccatiProblem, tol=1e-8):
    """Both sides of the discrete energy estimate at every ``n``.

    With ``c = mu - gamma C^2 / 2`` (``mu`` the smallest V-coercivity constant
    over the steps, ``C = c_vh``) the left side is
    ``||P_n||^2 + sum_k ||P_k - P_{k-1}||^2 + c tau sum_k ||P_k||_V^2`` and the
    right side ``||P_0||^2 + tau / c sum_{k=1}^N ||Q_k||_{V*}^2``. The check
    fails if ``min_n (rhs - lhs_n) < -tol * (1 + rhs)``.

    For data given in parts, ``details['rhs_parts']`` also reports the right
    side evaluated with the triangle-inequality bound over the parts.
    """
    triple = problem.triple
    tau = traj.tau
    n_steps = len(traj.values) - 1
    if n_steps < 1:
        return CheckResult("apriori", PASS, 0.0, {"steps": 0})
    mu = min(c[0] for c in traj.coefficients[:n_steps])
    c_mu = mu - 0.5 * problem.gamma * triple.c_vh**2
    if c_mu <= 0.0:
        return CheckResult("apriori", FAIL, -math.inf, {"reason": "mu - gamma C^2/2 <= 0", "c": c_mu})
    q_sum = 0.0
    q_parts_sum = 0.0
    parts = problem.q_path.parts if isinstance(problem.q_path, SumPath) else None
    for k in range(1, n_steps + 1):
        _, q_k = average_coefficients(problem, k, tau)
        q_sum += vstar_norm(q_k, triple) ** 2
        if parts is not None:
            t0, t1 = (k - 1) * tau, k * tau
            q_parts_sum += sum(vstar_norm(p.average(t0, t1), triple) for p in parts) ** 2
    rhs = hs_norm(traj.values[0]) ** 2 + tau / c_mu * q_sum
    incr = 0.0
    vsum = 0.0
    lhs = []
    for k in range(1, n_steps + 1):
        p_k = traj.values[k]
        incr += hs_norm(p_k - traj.values[k - 1]) ** 2
        vsum += v_norm(p_k, triple) ** 2
        lhs.append(hs_norm(p_k) ** 2 + incr + c_mu * tau * vsum)
    slacks = [rhs - x for x in lhs]
    worst = int(np.argmin(slacks))
    slack = float(slacks[worst])
    ok = slack >= -tol * (1.0 + rhs)
    details = {"rhs": rhs, "c": c_mu, "mu": mu, "worst_n": worst + 1, "slack_per_n": slacks}
    if parts is not None:
        details["rhs_parts"] = hs_norm(traj.values[0]) ** 2 + tau / c_mu * q_parts_sum
    witnesses = None if ok else {"n": worst + 1, "lhs": lhs[worst], "rhs": rhs}
    return CheckResult("apriori", _status(ok), slack, details, witnesses)


def cone_monitor(traj: Trajectory, gamma, tol=1e-8):
    """``min_n lambda_min(P_n) >= -gamma - tol`` and symmetry of every iterate."""
    mins = [float(np.linalg.eigvalsh(0.5 * (p + p.T))[0]) for p in traj.values]
    asym = max(float(np.linalg.norm(p - p.T) / (1.0 + np.linalg.norm(p))) for p in traj.values)
    worst = int(np.argmin(mins))
    slack = mins[worst] + gamma
    ok = slack >= -tol and asym <= 1e-9
    witnesses = None if ok else {"n": worst, "p": traj.values[worst].tolist()}
    return CheckResult("cone", _status(ok), slack,
                       {"min_eig": mins[worst], "worst_n": worst, "max_asymmetry": asym}, witnesses)


# ---------------------------------------------------------------------------
# references and convergence


class ReferenceError(RuntimeError):
    """The reference integrator refused a step (stability)."""


@dataclass
class Reference:
    """Reference values on the grid ``times`` (uniform spacing ``dt``)."""

    kind: str
    dt: float
    values: list

    @property
    def times(self):
        return self.dt * np.arange(len(self.values))

    def at(self, t):
        k = t / self.dt
        i = int(round(k))
        if abs(k - i) > 1e-8 * max(1.0, abs(k)) or not 0 <= i < len(self.values):
            raise ValueError(f"t={t!r} is not a reference grid point (dt={self.dt!r})")
        return self.values[i]


def _is_diagonal_constant(problem):
    info = problem.info.get("diagonal")
    return (info is not None and isinstance(problem.a_path, ConstantPath)
            and isinstance(problem.q_path, ConstantPath))


def _rk4_rhs(a, q, p):
    return q - a.T @ p - p @ a - p @ p


def _rk4(problem, dt, h_steps):
    """Classical RK4 on ``P' = Q - A^T P - P A - P^2``, storing every ``dt``."""
    n_store = int(round(problem.horizon / dt))
    h = dt / h_steps
    p = problem.p0.copy()
    values = [p.copy()]
    a_norms = {}

    def coeffs(t):
        return problem.a_path.value(t), problem.q_path.value(t)

    for i in range(n_store):
        for j in range(h_steps):
            t = (i * h_steps + j) * h
            a0, q0 = coeffs(t)
            a1, q1 = coeffs(t + 0.5 * h)
            a2, q2 = coeffs(t + h)
            key = id(a1)
            if key not in a_norms or not problem.a_path.is_constant:
                a_norms[key] = float(np.linalg.norm(a1, 2))
            growth = h * (2.0 * a_norms[key] + 2.0 * float(np.linalg.norm(p, 2)))
            if growth > RK4_STABILITY_LIMIT:
                raise ReferenceError(
                    f"RK4 step h={h:.3e} refused at t={t:.6g}: h*(2||A||+2||P||) = {growth:.3f} "
                    f"exceeds {RK4_STABILITY_LIMIT}"
                )
            k1 = _rk4_rhs(a0, q0, p)
            k2 = _rk4_rhs(a1, q1, p + 0.5 * h * k1)
            k3 = _rk4_rhs(a1, q1, p + 0.5 * h * k2)
            k4 = _rk4_rhs(a2, q2, p + h * k3)
            p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            p = 0.5 * (p + p.T)
        values.append(p.copy())
    return values


def reference_solution(problem: RiccatiProblem, kind="auto", resolution=None,
                       options: AreOptions | None = None):
    """Dense-in-time reference on the grid of spacing ``resolution``.

    Parameters
    ----------
    kind : {'auto', 'fine_tau', 'matrix_ode_rk4', 'scalar_oracle'}
        ``auto`` picks ``scalar_oracle`` for decoupled constant-data problems
        and ``matrix_ode_rk4`` otherwise.
    resolution : float
        Output spacing, normally the smallest step of a study. ``fine_tau``
        integrates with ``resolution / 64``; ``matrix_ode_rk4`` uses the
        inner step ``resolution / 256``.
    """
    if resolution is None:
        resolution = problem.horizon / 128
    n_out = problem.horizon / resolution
    if abs(n_out - round(n_out)) > 1e-8 * n_out:
        raise ValueError(f"resolution {resolution!r} does not divide the horizon")
    if kind == "auto":
        kind = "scalar_oracle" if _is_diagonal_constant(problem) else "matrix_ode_rk4"
    if kind == "scalar_oracle":
        if not _is_diagonal_constant(problem):
            raise ValueError("scalar_oracle needs a decoupled problem with constant data")
        diag = problem.info["diagonal"]
        times = resolution * np.arange(int(round(n_out)) + 1)
        modes = scalar_riccati_flow(np.array(diag["a"])[None, :], np.array(diag["q"])[None, :],
                                    np.array(diag["p0"])[None, :], times[:, None])
        return Reference(kind, resolution, [np.diag(row) for row in modes])
    if kind == "matrix_ode_rk4":
        return Reference(kind, resolution, _rk4(problem, resolution, 256))
    if kind == "fine_tau":
        fine = int(round(n_out)) * 64
        traj = integrate(problem, fine, options)
        if not traj.complete:
            raise ReferenceError(f"fine reference failed at step {traj.failed_at}: {traj.error}")
        return Reference(kind, resolution, traj.values[::64])
    raise ValueError(f"unknown reference kind {kind!r}")


def observed_orders(taus, errors):
    """Pairwise orders ``log(e_i / e_{i+1}) / log(tau_i / tau_{i+1})``."""
    out = []
    for i in range(len(taus) - 1):
        if errors[i] > 0.0 and errors[i + 1] > 0.0:
            out.append(math.log(errors[i] / errors[i + 1]) / math.log(taus[i] / taus[i + 1]))
        else:
            out.append(math.nan)
    return out


@dataclass
class ConvergenceStudy:
    taus: list
    errors_c_h: list
    errors_l2_v: list
    observed_orders: list
    orders_l2_v: list
    reference_kind: str
    status: str = PASS
    note: str = ""

    def to_dict(self):
        return asdict(self)


def _trajectory_errors(problem, ref, steps, options):
    traj = integrate(problem, steps, options)
    if not traj.complete:
        raise ReferenceError(f"integration with N={steps} failed at step {traj.failed_at}: {traj.error}")
    tau = traj.tau
    err_h = 0.0
    sq = 0.0
    for n, p in enumerate(traj.values):
        diff = p - ref.at(n * tau)
        err_h = max(err_h, hs_norm(diff))
        if n > 0:
            sq += tau * v_norm(diff, problem.triple) ** 2
    return err_h, math.sqrt(sq)


def convergence_study(problem: RiccatiProblem, taus, reference="auto", options: AreOptions | None = None,
                      order_window=(0.8, 1.2), steady_tol=1e-9):
    """Errors against a reference for decreasing step sizes.

    PASS requires both error sequences to decrease monotonically and the
    last observed order of each to lie in ``order_window``; if every error is
    below ``steady_tol`` the study passes trivially (steady state).
    """
    taus = [float(t) for t in taus]
    if len(taus) < 3:
        raise ValueError("a convergence study needs at least three step sizes")
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be strictly decreasing")
    steps = []
    for tau in taus:
        n = problem.horizon / tau
        if abs(n - round(n)) > 1e-8 * n:
            raise ValueError(f"tau={tau!r} does not divide the horizon")
        steps.append(int(round(n)))
    resolution = min(taus)
    ref = reference if isinstance(reference, Reference) else reference_solution(
        problem, reference, resolution, options)
    workers = min(worker_count(), len(steps))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda n: _trajectory_errors(problem, ref, n, options), steps))
    else:
        results = [_trajectory_errors(problem, ref, n, options) for n in steps]
    err_h = [r[0] for r in results]
    err_v = [r[1] for r in results]
    orders_h = observed_orders(taus, err_h)
    orders_v = observed_orders(taus, err_v)
    study = ConvergenceStudy(taus, err_h, err_v, orders_h, orders_v, ref.kind)
    if max(err_h) <= steady_tol and max(err_v) <= steady_tol:
        study.note = "steady state: errors at roundoff level, order undefined"
        return study
    lo, hi = order_window
    monotone = all(b < a for a, b in zip(err_h, err_h[1:])) and all(b < a for a, b in zip(err_v, err_v[1:]))
    in_window = lo <= orders_h[-1] <= hi and lo <= orders_v[-1] <= hi
    study.status = _status(monotone and in_window)
    if not monotone:
        study.note = "errors do not decrease monotonically"
    elif not in_window:
        study.note = f"final observed orders {orders_h[-1]:.3f}, {orders_v[-1]:.3f} outside [{lo}, {hi}]"
    return study


def stability_check(problem: RiccatiProblem, p0_a, p0_b, steps, options: AreOptions | None = None,
                    factor=1.05, abs_tol=1e-11):
    """Compare trajectories from two initial values with identical data.

    Asserts ``||P_n^a - P_n^b|| <= factor * exp(2 gamma t_n) ||P_0^a - P_0^b||``
    at every ``n``; ``abs_tol * (1 + max ||P_n||)`` absorbs solver roundoff.
    """
    def run(p0):
        prob = RiccatiProblem(problem.triple, problem.a_path, problem.q_path, p0, problem.gamma,
                              problem.horizon, name=problem.name, info=problem.info)
        traj = integrate(prob, steps, options)
        if not traj.complete:
            raise ReferenceError(f"trajectory failed at step {traj.failed_at}: {traj.error}")
        return traj

    ta, tb = run(p0_a), run(p0_b)
    d0 = hs_norm(np.asarray(p0_a) - np.asarray(p0_b))
    scale = 1.0 + max(hs_norm(p) for p in ta.values)
    diffs, slacks = [], []
    for n, (pa, pb) in enumerate(zip(ta.values, tb.values)):
        diff = hs_norm(pa - pb)
        bound = factor * math.exp(2.0 * problem.gamma * n * ta.tau) * d0
        diffs.append(diff)
        slacks.append(bound - diff)
    worst = int(np.argmin(slacks))
    slack = float(slacks[worst])
    ok = slack >= -abs_tol * scale
    monotone = all(b <= a * (1.0 + 1e-9) + abs_tol * scale for a, b in zip(diffs, diffs[1:]))
    details = {"initial_difference": d0, "differences": diffs, "worst_n": worst,
               "non_increasing": monotone}
    witnesses = None if ok else {"n": worst, "difference": diffs[worst], "bound": diffs[worst] + slack}
    return CheckResult("stability", _status(ok), slack, details, witnesses)


# ---------------------------------------------------------------------------
# resolvent properties


def _random_cone_member(rng, d, gamma, scale=1.0):
    """Random symmetric matrix with smallest eigenvalue in ``[-gamma, 0]``."""
    x = rng.standard_normal((d, d))
    return shift_to_floor(scale * 0.5 * (x + x.T), -gamma * rng.uniform())


def _summarize(name, slacks, witnesses, tol, details=None):
    worst = int(np.argmin(slacks))
    slack = float(slacks[worst])
    ok = slack >= -tol
    return CheckResult(name, _status(ok), slack, details or {"trials": len(slacks)},
                       None if ok else witnesses[worst])


def resolvent_property_suite(triple: GelfandTriple, coeff, trials=100, seed=0, lam=None,
                             gamma=0.5, tol=1e-8):
    """Randomized checks of the resolvent bounds on ``triple``.

    Covers the Lyapunov contraction ``1/(1 + 2 lam mu_h)``, the cone mapping
    ``C_{-gamma} -> C_{-gamma/(1 + 2 lam mu_h)}``, the norm bound, floor and
    Lipschitz constant of the quadratic resolvent, and the inner-product
    bounds ``<PR, R> >= -gamma ||R||^2`` and
    ``<PR + RP, R> >= -gamma C^2 ||R||_V^2`` for ``P`` in ``C_{-gamma}``.

    ``lam`` defaults to the admissible value from :func:`choose_lambda`.
    Returns a list of :class:`CheckResult`.
    """
    coeff = coeff if isinstance(coeff, LyapunovCoefficient) else LyapunovCoefficient(coeff)
    rng = np.random.default_rng(seed)
    d = coeff.dim
    mu_h = float(np.linalg.eigvalsh(0.5 * (coeff.a_mat + coeff.a_mat.T))[0])
    if lam is None:
        lam = choose_lambda(gamma, mu_h) if gamma < mu_h else 0.5 / (4.0 * gamma if gamma > 0 else 1.0)
    factor = lyapunov_contraction(lam, mu_h)
    floor_q = quadratic_floor(lam, gamma)
    bound_q = quadratic_bound(lam, gamma)
    lip_q = quadratic_lipschitz(lam, gamma)
    c_sq = triple.c_vh**2
    names = ("lyapunov_contraction", "lyapunov_cone", "quadratic_bound", "quadratic_floor",
             "quadratic_lipschitz", "inner_product_h", "inner_product_v")
    slacks = {k: [] for k in names}
    wits = {k: [] for k in names}
    for _ in range(trials):
        q = _random_cone_member(rng, d, gamma, scale=rng.uniform(0.1, 10.0))
        q2 = _random_cone_member(rng, d, gamma, scale=rng.uniform(0.1, 10.0))
        p_l = lyapunov_resolvent(lam, coeff, q)
        slacks["lyapunov_contraction"].append(factor * hs_norm(q) - hs_norm(p_l))
        wits["lyapunov_contraction"].append({"q": q.tolist()})
        lmin = float(np.linalg.eigvalsh(0.5 * (p_l + p_l.T))[0])
        slacks["lyapunov_cone"].append(lmin + gamma * factor)
        wits["lyapunov_cone"].append({"q": q.tolist(), "min_eig": lmin})
        j1 = quadratic_resolvent(lam, gamma, q)
        j2 = quadratic_resolvent(lam, gamma, q2)
        slacks["quadratic_bound"].append(bound_q * hs_norm(q) - hs_norm(j1))
        wits["quadratic_bound"].append({"q": q.tolist()})
        jmin = float(np.linalg.eigvalsh(j1)[0])
        slacks["quadratic_floor"].append(jmin - floor_q)
        wits["quadratic_floor"].append({"q": q.tolist(), "min_eig": jmin})
        slacks["quadratic_lipschitz"].append(lip_q * hs_norm(q - q2) - hs_norm(j1 - j2))
        wits["quadratic_lipschitz"].append({"q1": q.tolist(), "q2": q2.tolist()})
        r = rng.standard_normal((d, d))
        pr = q @ r
        slacks["inner_product_h"].append(hs_inner(pr, r) + gamma * hs_norm(r) ** 2)
        wits["inner_product_h"].append({"p": q.tolist(), "r": r.tolist()})
        slacks["inner_product_v"].append(hs_inner(pr + r @ q, r) + gamma * c_sq * v_norm(r, triple) ** 2)
        wits["inner_product_v"].append({"p": q.tolist(), "r": r.tolist()})
    details = {"trials": trials, "lambda": lam, "gamma": gamma, "mu_h": mu_h}
    return [_summarize(k, slacks[k], wits[k], tol, details) for k in names]
