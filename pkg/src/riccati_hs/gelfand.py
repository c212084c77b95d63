"""Finite-dimensional Gelfand triples and Hilbert-Schmidt operator spaces.

A triple ``V -> H -> V*`` is given by two Gram matrices: ``M`` for the H
inner product and ``K`` for the V inner product. Everything downstream works
in H-orthonormal coordinates ``x = L^{-1} u`` with ``L = M^{-1/2}``, where

* an operator on H is a plain ``(d, d)`` ndarray,
* the Hilbert-Schmidt norm is the Frobenius norm,
* the adjoint is the transpose, and
* the V Gram matrix becomes ``Kt = L^T K L``.

The operator space ``HS(V*, H) cap HS(H, V)`` carries the norm

    ||P||_V^2 = tr(P^T Kt P) + tr(P Kt P^T)

and its dual (with respect to the Frobenius pairing) is evaluated through the
Riesz map ``X -> Kt X + X Kt``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .io_utils import atomic_write_text

__all__ = [
    "GelfandTriple",
    "OperatorConstants",
    "SpectralDecomposition",
    "TripleError",
    "build_triple",
    "identity_triple",
    "hs_inner",
    "hs_norm",
    "v_norm",
    "vstar_norm",
    "riesz_representer",
    "estimate_constants",
    "sym_eig",
    "symmetrize",
    "asymmetry",
    "min_eig",
    "cone_check",
    "gamma_min",
    "load_matrix",
    "save_matrix",
]

logger = logging.getLogger(__name__)

SYM_TOL = 1e-10


class TripleError(ValueError):
    """Raised for invalid Gram matrices or operator data."""


def _check_square(mat, name):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim == 0:
        mat = mat.reshape(1, 1)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise TripleError(f"{name} must be a square matrix, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise TripleError(f"{name} contains non-finite entries")
    return mat


def _check_spd(mat, name):
    mat = _check_square(mat, name)
    scale = max(1.0, np.linalg.norm(mat))
    asym = np.linalg.norm(mat - mat.T) / scale
    if asym > 1e-12:
        raise TripleError(f"{name} is not symmetric (relative asymmetry {asym:.3e})")
    mat = 0.5 * (mat + mat.T)
    lam_min = np.linalg.eigvalsh(mat)[0]
    if lam_min <= 0.0:
        raise TripleError(
            f"{name} is not positive definite (smallest eigenvalue {lam_min:.6e})"
        )
    return mat


class SpectralDecomposition(NamedTuple):
    """Eigenpairs of a symmetric operator, eigenvalues in descending order."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


class OperatorConstants(NamedTuple):
    """Coercivity and boundedness constants of a coefficient ``A``.

    ``mu_h_paper`` is the value ``mu_v / c_vh**2`` implied by the embedding;
    ``mu_h_used`` is the sharper ``max(mu_h, mu_h_paper)`` used in bound
    checks.
    """

    mu_v: float
    mu_h: float
    eta: float
    mu_h_paper: float
    mu_h_used: float


@dataclass(frozen=True, eq=False)
class GelfandTriple:
    """Coordinates of ``V -> H -> V*`` built from Gram matrices.

    Use :func:`build_triple` rather than the constructor; it validates the
    input and fills the derived fields.
    """

    gram_h: np.ndarray
    gram_v: np.ndarray
    h_basis: np.ndarray
    gram_v_on: np.ndarray
    c_vh: float
    _kt_eigvals: np.ndarray = field(repr=False)
    _kt_eigvecs: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.gram_h.shape[0]

    def pullback(self, form):
        """Express a bilinear-form matrix in H-orthonormal coordinates.

        ``form`` is the matrix ``S`` of ``a(u, v) = v^T S u`` in the original
        coordinates; the result is ``L S L``.
        """
        form = _check_square(form, "form")
        if form.shape[0] != self.dim:
            raise TripleError(f"form has dimension {form.shape[0]}, triple has {self.dim}")
        return self.h_basis.T @ form @ self.h_basis

    def to_orthonormal(self, op):
        """Change an operator matrix from original to H-orthonormal coordinates."""
        op = _check_square(op, "operator")
        return np.linalg.solve(self.h_basis, op @ self.h_basis)

    def step_limit(self, mu_v):
        """Largest admissible backward Euler step ``mu_v / (2 c_vh^2)`` (exclusive)."""
        return mu_v / (2.0 * self.c_vh**2)

    def gamma_limit(self, mu_v):
        """Upper bound ``mu_v / c_vh^2`` (exclusive) on the cone parameter."""
        return mu_v / self.c_vh**2


def build_triple(gram_h, gram_v) -> GelfandTriple:
    """Validate Gram matrices and compute the H-orthonormal coordinates.

    Parameters
    ----------
    gram_h, gram_v : (d, d) array_like
        Symmetric positive definite Gram matrices of H and V.

    Returns
    -------
    GelfandTriple
        With ``h_basis = M^{-1/2}``, ``gram_v_on = L^T K L`` and the embedding
        constant ``c_vh = sqrt(max eig(M u = lam K u))``.
    """
    m = _check_spd(gram_h, "gram_h")
    k = _check_spd(gram_v, "gram_v")
    if m.shape != k.shape:
        raise TripleError(f"dimension mismatch: gram_h {m.shape} vs gram_v {k.shape}")
    w, u = np.linalg.eigh(m)
    basis = (u / np.sqrt(w)) @ u.T
    kt = basis.T @ k @ basis
    kt = 0.5 * (kt + kt.T)
    c_sq = sla.eigh(m, k, eigvals_only=True)[-1]
    kt_w, kt_u = np.linalg.eigh(kt)
    if kt_w[0] <= 0.0:
        raise TripleError(f"V Gram matrix lost definiteness in H coordinates ({kt_w[0]:.3e})")
    return GelfandTriple(
        gram_h=m,
        gram_v=k,
        h_basis=basis,
        gram_v_on=kt,
        c_vh=float(np.sqrt(c_sq)),
        _kt_eigvals=kt_w,
        _kt_eigvecs=kt_u,
    )


def identity_triple(dim: int) -> GelfandTriple:
    """Triple with ``M = K = I`` (``c_vh = 1``)."""
    eye = np.eye(dim)
    return build_triple(eye, eye)


def _as_op(p, name="operator"):
    p = np.asarray(p, dtype=float)
    if p.ndim == 0:
        p = p.reshape(1, 1)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise TripleError(f"{name} must be square, got shape {p.shape}")
    return p


def hs_inner(a, b) -> float:
    """Hilbert-Schmidt inner product ``tr(a^T b)``."""
    a = _as_op(a, "a")
    b = _as_op(b, "b")
    if a.shape != b.shape:
        raise TripleError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.vdot(a, b))


def hs_norm(p) -> float:
    return float(np.linalg.norm(_as_op(p)))


def v_norm(p, triple: GelfandTriple) -> float:
    """Norm of ``HS(V*, H) cap HS(H, V)``."""
    p = _as_op(p)
    kt = triple.gram_v_on
    val = np.vdot(p, kt @ p) + np.vdot(p, p @ kt)
    return float(np.sqrt(max(val, 0.0)))


def riesz_representer(r, triple: GelfandTriple):
    """Solve ``Kt X + X Kt = r``, the Riesz representer of ``r`` in the V norm."""
    r = _as_op(r)
    w, u = triple._kt_eigvals, triple._kt_eigvecs
    denom = w[:, None] + w[None, :]
    if np.any(denom <= 0.0):
        raise TripleError("Riesz map is singular")
    return u @ ((u.T @ r @ u) / denom) @ u.T


def vstar_norm(r, triple: GelfandTriple) -> float:
    """Dual norm ``sup <r, S> / ||S||_V`` evaluated via the Riesz map."""
    r = _as_op(r)
    x = riesz_representer(r, triple)
    return float(np.sqrt(max(np.vdot(r, x), 0.0)))


def estimate_constants(a_matrix, triple: GelfandTriple) -> OperatorConstants:
    """Coercivity constants of ``A`` given in H-orthonormal coordinates.

    ``mu_v`` is the smallest generalized eigenvalue of ``(sym A, Kt)``,
    ``mu_h`` the smallest eigenvalue of ``sym A`` and ``eta`` the spectral
    norm of ``Kt^{-1/2} A Kt^{-1/2}``.

    Raises
    ------
    TripleError
        If ``A`` is not strongly positive (``mu_v <= 0``).
    """
    a = _as_op(a_matrix, "a_matrix")
    if a.shape[0] != triple.dim:
        raise TripleError(f"a_matrix has dimension {a.shape[0]}, triple has {triple.dim}")
    sym = 0.5 * (a + a.T)
    kt = triple.gram_v_on
    mu_v = float(sla.eigh(sym, kt, eigvals_only=True)[0])
    if mu_v <= 0.0:
        raise TripleError(f"operator is not strongly positive (mu_v = {mu_v:.6e})")
    mu_h = float(np.linalg.eigvalsh(sym)[0])
    w, u = triple._kt_eigvals, triple._kt_eigvecs
    kt_isqrt = (u / np.sqrt(w)) @ u.T
    eta = float(np.linalg.norm(kt_isqrt @ a @ kt_isqrt, 2))
    mu_h_paper = mu_v / triple.c_vh**2
    return OperatorConstants(mu_v, mu_h, eta, mu_h_paper, max(mu_h, mu_h_paper))


def asymmetry(p) -> float:
    """Relative asymmetry ``||p - p^T|| / (1 + ||p||)``."""
    p = _as_op(p)
    return float(np.linalg.norm(p - p.T) / (1.0 + np.linalg.norm(p)))


def symmetrize(p, tol=SYM_TOL, name="operator"):
    """Return ``(p + p^T) / 2``; raise if the input is further than ``tol`` from symmetric."""
    p = _as_op(p, name)
    asym = asymmetry(p)
    if asym > tol:
        raise TripleError(f"{name} is not self-adjoint (relative asymmetry {asym:.3e})")
    if asym > 0.0:
        logger.debug("symmetrized %s, asymmetry %.3e", name, asym)
    return 0.5 * (p + p.T)


def sym_eig(p, tol=SYM_TOL) -> SpectralDecomposition:
    """Spectral decomposition of a self-adjoint operator, descending order."""
    p = symmetrize(p, tol)
    w, v = np.linalg.eigh(p)
    return SpectralDecomposition(w[::-1].copy(), v[:, ::-1].copy())


def min_eig(p, tol=SYM_TOL) -> float:
    return float(np.linalg.eigvalsh(symmetrize(p, tol))[0])


def cone_check(p, gamma, tol=0.0, sym_tol=SYM_TOL):
    """Membership in ``C_{-gamma}``: returns ``(lam_min >= -gamma - tol, lam_min)``."""
    lam = min_eig(p, sym_tol)
    return bool(lam >= -gamma - tol), lam


def gamma_min(q, tol=SYM_TOL) -> float:
    """Smallest ``gamma >= 0`` with ``q >= -gamma^2``."""
    return float(np.sqrt(max(0.0, -min_eig(q, tol))))


def load_matrix(path, spd=False):
    """Load a headerless row-major CSV matrix; optionally validate SPD."""
    mat = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    name = str(path)
    return _check_spd(mat, name) if spd else _check_square(mat, name)


def save_matrix(path, mat):
    """Write a matrix as CSV with shortest round-trip float formatting."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    lines = [",".join(repr(float(x)) for x in row) for row in mat]
    atomic_write_text(path, "\n".join(lines) + "\n")
