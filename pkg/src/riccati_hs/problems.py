"""Reference problems: scalar, decoupled, 1D Laplacians and advection-diffusion.

All generators are deterministic in ``ProblemSpec.seed``. Operators are
returned in H-orthonormal coordinates of the generated triple, so a FEM
stiffness matrix ``K`` with mass matrix ``M`` enters as ``M^{-1/2} K M^{-1/2}``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .gelfand import build_triple, estimate_constants, identity_triple, load_matrix
from .stepper import (
    AffinePath,
    CoefficientPath,
    ConstantPath,
    RiccatiProblem,
    ScaledPath,
    SumPath,
)

__all__ = [
    "KINDS",
    "Q_TIME_KINDS",
    "A_TIME_KINDS",
    "DATA_KINDS",
    "ProblemSpec",
    "make_problem",
    "laplacian_fd",
    "laplacian_fem",
    "advection_matrix",
    "shift_to_floor",
    "scalar_oracle",
    "scalar_riccati_flow",
    "battery",
    "convergence_battery",
]

KINDS = ("scalar", "diagonal", "laplacian_fd", "laplacian_fem", "advection_diffusion",
         "random_spd", "custom_files")
Q_TIME_KINDS = ("constant", "affine", "sin", "two_part")
A_TIME_KINDS = ("constant", "affine")
DATA_KINDS = ("random", "smooth")


@dataclass
class ProblemSpec:
    """Parameters of a generated problem.

    ``gamma`` is used as given; if ``gamma_fraction`` is set instead, the
    cone parameter is that fraction of the admissible bound
    ``mu_v / c_vh**2``. For the generated (non-diagonal) kinds ``P0`` has
    smallest eigenvalue ``-p0_touch * gamma``. With ``data="random"`` the
    smallest eigenvalue of ``Q(t)`` over time is ``-q_touch * gamma**2``;
    ``data="smooth"`` keeps ``Q`` in the span of the two lowest sine modes,
    where the indefinite part carries that floor but the sum need not.
    """

    kind: str = "scalar"
    dim: int = 1
    gamma: float = 0.0
    gamma_fraction: float | None = None
    horizon: float = 1.0
    seed: int = 0
    diffusion: float = 1.0
    advection: float = 0.0
    # scalar / diagonal data
    a: list = field(default_factory=lambda: [1.0])
    q: list = field(default_factory=lambda: [3.0])
    p0: list = field(default_factory=lambda: [0.0])
    # generated data
    q_scale: float = 1.0
    q_touch: float = 1.0
    p0_scale: float = 0.0
    p0_touch: float = 0.0
    q_time: str = "constant"
    a_time: str = "constant"
    a_rate: float = 0.5
    data: str = "random"
    files: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}; expected one of {KINDS}")
        if self.q_time not in Q_TIME_KINDS:
            raise ValueError(f"unknown q_time {self.q_time!r}; expected one of {Q_TIME_KINDS}")
        if self.data not in DATA_KINDS:
            raise ValueError(f"unknown data kind {self.data!r}; expected one of {DATA_KINDS}")
        if self.a_time not in A_TIME_KINDS:
            raise ValueError(f"unknown a_time {self.a_time!r}; expected one of {A_TIME_KINDS}")
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if self.gamma_fraction is not None and not 0.0 <= self.gamma_fraction < 1.0:
            raise ValueError(f"gamma_fraction must lie in [0, 1), got {self.gamma_fraction!r}")
        for name in ("a", "q", "p0"):
            setattr(self, name, [float(x) for x in np.atleast_1d(getattr(self, name))])
        if self.kind in ("scalar", "diagonal"):
            if self.kind == "scalar":
                self.dim = 1
            else:
                self.dim = len(self.a)
            for name in ("a", "q", "p0"):
                vals = getattr(self, name)
                if len(vals) == 1 and self.dim > 1:
                    setattr(self, name, vals * self.dim)
                elif len(vals) != self.dim:
                    raise ValueError(f"{name} has {len(vals)} entries, expected {self.dim}")
        if not self.name:
            self.name = f"{self.kind}_d{self.dim}"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown problem spec keys: {sorted(unknown)}")
        return cls(**data)


def _tridiag(d, lower, diag, upper):
    return diag * np.eye(d) + lower * np.eye(d, k=-1) + upper * np.eye(d, k=1)


def laplacian_fd(dim):
    """Lumped mass ``h I`` and stiffness ``tridiag(-1, 2, -1) / h`` on (0, 1)."""
    h = 1.0 / (dim + 1)
    return h * np.eye(dim), _tridiag(dim, -1.0, 2.0, -1.0) / h


def laplacian_fem(dim):
    """Consistent P1 mass and stiffness matrices on (0, 1), Dirichlet ends."""
    h = 1.0 / (dim + 1)
    return _tridiag(dim, 1.0, 4.0, 1.0) * (h / 6.0), _tridiag(dim, -1.0, 2.0, -1.0) / h


def advection_matrix(dim):
    """Skew form of ``int u' v`` for central differences (or P1 elements)."""
    return _tridiag(dim, -0.5, 0.0, 0.5)


def shift_to_floor(sym, floor):
    """Shift symmetric ``sym`` by a multiple of ``I`` so its minimum eigenvalue is ``floor``."""
    w, v = np.linalg.eigh(0.5 * (sym + sym.T))
    w = w - w[0] + floor
    w[0] = floor
    out = (v * w) @ v.T
    return 0.5 * (out + out.T)


def _random_sym(rng, d):
    x = rng.standard_normal((d, d))
    return 0.5 * (x + x.T)


def _sine_modes(d):
    """First two discrete Dirichlet sine modes, normalized."""
    x = np.arange(1, d + 1) / (d + 1)
    s1 = np.sin(math.pi * x)
    s2 = np.sin(2.0 * math.pi * x)
    return s1 / np.linalg.norm(s1), s2 / np.linalg.norm(s2)


def _smooth_psd(d, full_rank=True):
    """Positive semidefinite data built from the lowest sine modes.

    With ``full_rank`` a multiple of the identity is added, which excites the
    stiff modes as well.
    """
    s1, s2 = _sine_modes(d)
    out = np.outer(s1, s1) + 0.5 * np.outer(s2, s2)
    return out + 0.25 * np.eye(d) if full_rank else out


def _triple_and_form(spec, rng):
    d = spec.dim
    if spec.kind in ("laplacian_fd", "advection_diffusion"):
        m, k = laplacian_fd(d)
    elif spec.kind == "laplacian_fem":
        m, k = laplacian_fem(d)
    elif spec.kind == "random_spd":
        g = rng.standard_normal((d, d))
        m = np.eye(d) + 0.1 * g @ g.T / d
        r = rng.standard_normal((d, d))
        k = m + r @ r.T / d + 0.5 * np.eye(d)
    else:  # pragma: no cover - dispatch guarded by caller
        raise ValueError(spec.kind)
    triple = build_triple(m, k)
    form = spec.diffusion * k
    if spec.kind == "advection_diffusion":
        form = form + spec.advection * advection_matrix(d)
    elif spec.kind == "random_spd":
        form = form + 0.3 * (lambda s: s - s.T)(rng.standard_normal((d, d))) / math.sqrt(d)
    return triple, triple.pullback(form)


class _OscillatingPath(CoefficientPath):
    """``t -> base + sin(omega t) amp``, averaged by Gauss quadrature."""

    kind = "sin"

    def __init__(self, base, amp, omega):
        self.base, self.amp, self.omega = base, amp, omega

    def value(self, t):
        return self.base + math.sin(self.omega * t) * self.amp


def _q_path(spec, q_pos, q_indef, touch):
    """Time dependence of ``Q`` built from a nonnegative and an indefinite part.

    With ``touch`` the path is shifted by a multiple of the identity so that
    its pointwise minimum attains the floor of ``q_indef`` (at ``t = 0`` for
    the affine and at ``t = 3T/4`` for the oscillating kind).
    """
    t_end = spec.horizon
    floor = float(np.linalg.eigvalsh(q_indef)[0])

    def lowest(mat):
        return shift_to_floor(mat, floor) if touch else mat

    if spec.q_time == "constant":
        return ConstantPath(lowest(q_indef + q_pos))
    if spec.q_time == "affine":
        return AffinePath(lowest(q_indef + q_pos), q_pos / t_end)
    if spec.q_time == "sin":
        low = lowest(q_indef + 0.5 * q_pos)
        return _OscillatingPath(low + 0.5 * q_pos, 0.5 * q_pos, 2.0 * math.pi / t_end)
    # two parts: a nonnegative time-dependent part, vanishing at t = 3T/4,
    # and a constant part carrying the indefinite floor
    return SumPath([ScaledPath(lambda t: 1.0 + math.sin(2.0 * math.pi * t / t_end), q_pos, "1+sin"),
                    ConstantPath(q_indef)])


def make_problem(spec: ProblemSpec) -> RiccatiProblem:
    """Build and validate the problem described by ``spec``.

    Raises
    ------
    TripleError
        If the generated data violate the problem hypotheses (for example a
        ``gamma`` at or beyond ``mu_v / c_vh**2``).
    """
    rng = np.random.default_rng(spec.seed)
    info = {"kind": spec.kind, "spec": spec.to_dict()}
    if spec.kind in ("scalar", "diagonal"):
        triple = identity_triple(spec.dim)
        a_mat = np.diag(spec.a)
        q_mat = np.diag(spec.q)
        p0 = np.diag(spec.p0)
        consts = estimate_constants(a_mat, triple)
        gamma = spec.gamma
        if spec.gamma_fraction is not None:
            gamma = spec.gamma_fraction * triple.gamma_limit(consts.mu_v)
        q_path = ConstantPath(q_mat)
        info["diagonal"] = {"a": list(spec.a), "q": list(spec.q), "p0": list(spec.p0)}
    elif spec.kind == "custom_files":
        files = {k: Path(v) for k, v in spec.files.items()}
        missing = {"gram_h", "gram_v", "a", "q"} - set(files)
        if missing:
            raise ValueError(f"custom_files needs paths for {sorted(missing)}")
        triple = build_triple(load_matrix(files["gram_h"], spd=True), load_matrix(files["gram_v"], spd=True))
        a_mat = triple.pullback(load_matrix(files["a"]))
        q_mat = load_matrix(files["q"])
        p0 = load_matrix(files["p0"]) if "p0" in files else np.zeros_like(q_mat)
        consts = estimate_constants(a_mat, triple)
        gamma = spec.gamma
        if spec.gamma_fraction is not None:
            gamma = spec.gamma_fraction * triple.gamma_limit(consts.mu_v)
        q_path = ConstantPath(q_mat)
    else:
        triple, a_mat = _triple_and_form(spec, rng)
        d = spec.dim
        consts = estimate_constants(a_mat, triple)
        gamma = spec.gamma
        if spec.gamma_fraction is not None:
            gamma = spec.gamma_fraction * triple.gamma_limit(consts.mu_v)
        if spec.data == "smooth":
            # spanned by the two lowest sine modes; floors attained on the first
            s1, s2 = _sine_modes(d)
            q_pos = spec.q_scale * _smooth_psd(d, full_rank=False)
            q_indef = -spec.q_touch * gamma**2 * np.outer(s1, s1)
            p0 = -spec.p0_touch * gamma * np.outer(s1, s1) + spec.p0_scale * np.outer(s2, s2)
        else:
            q_pos = spec.q_scale * _smooth_psd(d)
            # indefinite part: random symmetric data with the requested floor
            q_indef = shift_to_floor(_random_sym(rng, d), -spec.q_touch * gamma**2)
            p0_raw = _random_sym(rng, d)
            if spec.p0_scale == 0.0 and spec.p0_touch == 0.0:
                p0 = np.zeros((d, d))
            else:
                p0 = shift_to_floor(spec.p0_scale * p0_raw, -spec.p0_touch * gamma)
        q_path = _q_path(spec, q_pos, q_indef, touch=spec.data == "random")
    if spec.a_time == "affine":
        sym = 0.5 * (a_mat + a_mat.T)
        a_path = AffinePath(a_mat, spec.a_rate * sym / spec.horizon)
    else:
        a_path = ConstantPath(a_mat)
    info.update(c_vh=triple.c_vh, mu_v=consts.mu_v, mu_h=consts.mu_h, eta=consts.eta,
                gamma=float(gamma), gamma_limit=triple.gamma_limit(consts.mu_v))
    return RiccatiProblem(triple, a_path, q_path, p0, gamma, spec.horizon, name=spec.name, info=info)


def scalar_oracle(a, q, p0, tau, steps):
    """Backward Euler recursion ``p_n = -s + sqrt(s^2 + q + p_{n-1} / tau)``.

    ``a``, ``q`` and ``p0`` may be arrays of per-mode values; the result is
    a list of ``steps + 1`` floats (or arrays), starting with ``p0``. Uses
    the cancellation-free form ``(q + p/tau) / (s + sqrt(...))``.

    Raises
    ------
    ValueError
        If ``s = a + 1/(2 tau) <= 0`` or a discriminant is negative.
    """
    a = np.asarray(a, dtype=float)
    q = np.asarray(q, dtype=float)
    p = np.asarray(p0, dtype=float) + 0.0 * (a + q)
    s = a + 0.5 / tau
    if np.any(s <= 0.0):
        raise ValueError("a + 1/(2 tau) must be positive")
    out = [p.copy()]
    for _ in range(steps):
        c = q + p / tau
        disc = s * s + c
        if np.any(disc < 0.0):
            raise ValueError("negative discriminant in scalar recursion")
        p = c / (s + np.sqrt(disc))
        out.append(p.copy())
    if a.ndim == 0:
        return [float(x) for x in out]
    return out


def scalar_riccati_flow(a, q, p0, t):
    """Exact solution of ``p' = q - 2 a p - p^2`` with constant data.

    With ``r = sqrt(a^2 + q)`` and the stable root ``p_+ = -a + r``,
    ``p(t) = p_+ + 2 r y0 e^{-2rt} / (2r + y0 (1 - e^{-2rt}))`` where
    ``y0 = p0 - p_+``. Vectorized over modes and times.
    """
    a, q, p0, t = (np.asarray(x, dtype=float) for x in (a, q, p0, t))
    r = np.sqrt(a * a + q)
    p_plus = q / (a + r)
    y0 = p0 - p_plus
    e = np.exp(-2.0 * r * t)
    return p_plus + 2.0 * r * y0 * e / (2.0 * r + y0 * -np.expm1(-2.0 * r * t))


def battery(seed=0, dim=16):
    """Named specs covering every regime; used by the acceptance checks."""
    return [
        ProblemSpec(kind="scalar", a=[1.0], q=[3.0], p0=[0.0], gamma=0.0, name="scalar_basic"),
        ProblemSpec(kind="scalar", a=[2.0], q=[-1.0], p0=[-1.0], gamma=1.0, name="scalar_boundary"),
        ProblemSpec(kind="diagonal", a=[1.0, 2.0, 3.0, 4.0], q=[3.0, -0.81, 0.0, 8.0],
                    p0=[0.5, -0.9, 0.0, 2.0], gamma=0.9, name="diagonal_cone"),
        ProblemSpec(kind="laplacian_fd", dim=dim, gamma_fraction=0.9, q_time="two_part",
                    p0_scale=1.0, p0_touch=1.0, seed=seed, name="fd_two_part"),
        ProblemSpec(kind="laplacian_fem", dim=dim, gamma_fraction=0.9, q_time="affine",
                    p0_scale=1.0, p0_touch=1.0, seed=seed + 1, name="fem_affine"),
        ProblemSpec(kind="advection_diffusion", dim=dim, gamma_fraction=0.9, advection=5.0,
                    a_time="affine", q_time="sin", p0_scale=0.5, p0_touch=1.0, seed=seed + 2,
                    name="advdiff_timedep"),
        ProblemSpec(kind="random_spd", dim=8, gamma_fraction=0.9, p0_scale=1.0, p0_touch=1.0,
                    seed=seed + 3, name="random_spd"),
    ]


def convergence_battery(dim=16):
    """Smooth constant-coefficient specs whose solutions stay in two sine modes.

    Their transients decay at rates of order one, so first-order behaviour
    is visible already for ``tau`` between ``1/8`` and ``1/128``.
    """
    common = dict(dim=dim, gamma_fraction=0.5, data="smooth", p0_scale=1.0, p0_touch=1.0,
                  diffusion=0.1, q_scale=1.0)
    return [
        ProblemSpec(kind="scalar", a=[1.0], q=[3.0], p0=[0.0], gamma=0.0, name="conv_scalar"),
        ProblemSpec(kind="diagonal", a=[1.0, 2.0, 3.0, 4.0], q=[3.0, -0.81, 0.0, 8.0],
                    p0=[0.0, -0.9, 0.5, 1.0], gamma=0.9, name="conv_diagonal"),
        ProblemSpec(kind="laplacian_fd", name="conv_fd", **common),
        ProblemSpec(kind="laplacian_fem", name="conv_fem", **common),
        ProblemSpec(kind="advection_diffusion", advection=0.2, name="conv_advdiff", **common),
    ]
