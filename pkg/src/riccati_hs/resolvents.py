"""Resolvents of the Lyapunov operator and of the quadratic term.

``(lam A0 + I)^{-1}`` with ``A0 P = A^T P + P A`` is a Sylvester solve on the
cached real Schur form of ``A``. ``J_lam = (lam B + I)^{-1}`` with
``B P = P^2`` acts on the spectrum of a self-adjoint ``Q`` and always picks
the larger root of ``lam x^2 + x = nu``.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.linalg as sla
from scipy.linalg.lapack import dtrsyl

from .gelfand import SYM_TOL, TripleError, asymmetry, symmetrize

__all__ = [
    "LyapunovCoefficient",
    "ResolventError",
    "lyapunov_resolvent",
    "quadratic_resolvent",
    "yosida_quadratic",
    "kronecker_lyapunov_solve",
    "lyapunov_contraction",
    "quadratic_floor",
    "quadratic_bound",
    "quadratic_lipschitz",
    "scalar_quadratic_root",
]

logger = logging.getLogger(__name__)

CONE_TOL = 1e-10


class ResolventError(ArithmeticError):
    """A resolvent was evaluated outside its domain or violated its bounds."""


class LyapunovCoefficient:
    """Coefficient ``A`` of the Lyapunov operator with a cached Schur form.

    Parameters
    ----------
    a_mat : (d, d) array_like
        ``A`` in H-orthonormal coordinates, not necessarily symmetric.
    """

    def __init__(self, a_mat):
        a = np.array(a_mat, dtype=float, ndmin=2)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise TripleError(f"coefficient must be square, got shape {a.shape}")
        self.a_mat = a
        self.a_mat.setflags(write=False)
        self._t, self._u = sla.schur(a, output="real")
        rec = np.linalg.norm(self._u @ self._t @ self._u.T - a)
        if rec > 1e-10 * (1.0 + np.linalg.norm(a)):
            raise ResolventError(f"Schur factorization inaccurate ({rec:.3e})")

    @property
    def dim(self):
        return self.a_mat.shape[0]

    def apply(self, p):
        """``A^T p + p A``."""
        return self.a_mat.T @ p + p @ self.a_mat

    def shifted(self, shift):
        """Coefficient ``A + shift I`` (Schur form reused)."""
        new = object.__new__(LyapunovCoefficient)
        new.a_mat = self.a_mat + shift * np.eye(self.dim)
        new.a_mat.setflags(write=False)
        new._t = self._t + shift * np.eye(self.dim)
        new._u = self._u
        return new

    def solve(self, rhs, alpha=1.0, beta=0.0):
        """Solve ``alpha (A^T X + X A) + beta X = rhs`` (Bartels-Stewart)."""
        rhs = np.asarray(rhs, dtype=float)
        tri = alpha * self._t + 0.5 * beta * np.eye(self.dim)
        c = self._u.T @ rhs @ self._u
        y, scale, info = dtrsyl(tri, tri, c, trana="T", tranb="N", isgn=1)
        if info < 0:
            raise ResolventError(f"dtrsyl argument error (info={info})")
        if info == 1:
            raise ResolventError("Sylvester system is (nearly) singular")
        return self._u @ (y / scale) @ self._u.T


def kronecker_lyapunov_solve(a_mat, rhs, alpha=1.0, beta=0.0):
    """Dense vectorized solve of ``alpha (A^T X + X A) + beta X = rhs``.

    O(d^6); only meant as an independent check for small ``d``.
    """
    a = np.atleast_2d(np.asarray(a_mat, dtype=float))
    d = a.shape[0]
    eye = np.eye(d)
    op = alpha * (np.kron(eye, a.T) + np.kron(a.T, eye)) + beta * np.eye(d * d)
    x = np.linalg.solve(op, np.asarray(rhs, dtype=float).reshape(-1, order="F"))
    return x.reshape(d, d, order="F")


def lyapunov_contraction(lam, mu_h):
    """Lipschitz constant ``1 / (1 + 2 lam mu_h)`` of the Lyapunov resolvent."""
    return 1.0 / (1.0 + 2.0 * lam * mu_h)


def _root_term(lam, gamma):
    disc = 1.0 - 4.0 * lam * gamma
    if disc < 0.0:
        raise ResolventError(f"lambda={lam!r} violates lambda < 1/(4 gamma) for gamma={gamma!r}")
    return np.sqrt(disc)


def quadratic_floor(lam, gamma):
    """Lower eigenvalue bound ``-2 gamma / (1 + sqrt(1 - 4 lam gamma))`` of ``J_lam Q``."""
    return -2.0 * gamma / (1.0 + _root_term(lam, gamma))


def quadratic_bound(lam, gamma):
    """Norm bound factor ``2 / (1 + sqrt(1 - 4 lam gamma))``."""
    return 2.0 / (1.0 + _root_term(lam, gamma))


def quadratic_lipschitz(lam, gamma):
    """Lipschitz factor of ``J_lam`` on ``C_{-gamma}``."""
    s = _root_term(lam, gamma)
    return (1.0 + s) / (1.0 + s - 4.0 * lam * gamma)


def scalar_quadratic_root(lam, nu):
    """Larger root of ``lam x^2 + x = nu``, in cancellation-free form."""
    nu = np.asarray(nu, dtype=float)
    disc = 1.0 + 4.0 * lam * nu
    if np.any(disc < 0.0):
        raise ResolventError("negative discriminant 1 + 4 lam nu")
    return 2.0 * nu / (1.0 + np.sqrt(disc))


def lyapunov_resolvent(lam, coeff: LyapunovCoefficient, q, *, mu_h=None, gamma=None, check=False):
    """Solve ``lam (A^T P + P A) + P = q``.

    With ``check=True`` (and ``mu_h`` given) the contraction bound and, for
    ``gamma`` given, the cone mapping ``C_{-gamma} -> C_{-gamma/(1+2 lam mu_h)}``
    are asserted with slack ``1e-8``.
    """
    if not lam > 0.0:
        raise ResolventError(f"lambda must be positive, got {lam!r}")
    q = np.asarray(q, dtype=float)
    p = coeff.solve(q, alpha=lam, beta=1.0)
    if check and mu_h is not None:
        factor = lyapunov_contraction(lam, mu_h)
        slack = factor * np.linalg.norm(q) - np.linalg.norm(p)
        if slack < -1e-8 * (1.0 + np.linalg.norm(q)):
            raise ResolventError(
                f"Lyapunov contraction bound violated by {-slack:.3e} (mu_h misestimated?)"
            )
        if gamma is not None:
            asym = asymmetry(p)
            logger.debug("Lyapunov resolvent symmetry residual %.3e", asym)
            floor = -gamma * factor
            lam_min = np.linalg.eigvalsh(0.5 * (p + p.T))[0]
            if lam_min < floor - 1e-8:
                raise ResolventError(
                    f"Lyapunov resolvent left cone: {lam_min:.6e} < {floor:.6e}"
                )
    return p


def quadratic_resolvent(lam, gamma, q, *, tol=CONE_TOL, sym_tol=SYM_TOL):
    """Maximal solution ``P`` of ``lam P^2 + P = q`` for ``q`` in ``C_{-gamma}``.

    Computed from the eigendecomposition ``q = sum nu_n e_n e_n^T`` with
    ``alpha_n = 2 nu_n / (1 + sqrt(1 + 4 lam nu_n))``.

    Raises
    ------
    ResolventError
        If ``lam >= 1/(4 gamma)``, or ``q`` has an eigenvalue below
        ``-gamma - tol * max(1, ||q||_2)``.
    """
    if not lam > 0.0:
        raise ResolventError(f"lambda must be positive, got {lam!r}")
    if gamma < 0.0:
        raise ResolventError(f"gamma must be nonnegative, got {gamma!r}")
    if gamma > 0.0 and not lam * 4.0 * gamma < 1.0:
        raise ResolventError(f"lambda={lam!r} violates lambda < 1/(4 gamma) for gamma={gamma!r}")
    q = symmetrize(q, sym_tol, "q")
    nu, vec = np.linalg.eigh(q)
    scale = max(1.0, float(np.max(np.abs(nu))))
    if nu[0] < -gamma - tol * scale:
        raise ResolventError(
            f"q is outside C_-gamma: smallest eigenvalue {nu[0]:.6e} < {-gamma:.6e}"
        )
    clamped = nu < -gamma
    if np.any(clamped):
        logger.debug("clamped %d eigenvalue(s) by %.3e", clamped.sum(), float(-gamma - nu[0]))
        nu = np.where(clamped, -gamma, nu)
    alpha = scalar_quadratic_root(lam, nu)
    return (vec * alpha) @ vec.T


def yosida_quadratic(lam, gamma, p, **kwargs):
    """Yosida approximation ``(p - J_lam p) / lam`` of ``p -> p^2``."""
    p = np.asarray(p, dtype=float)
    j = quadratic_resolvent(lam, gamma, p, **kwargs)
    return (0.5 * (p + p.T) - j) / lam
