import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riccati_hs.resolvents import (
    LyapunovCoefficient,
    ResolventError,
    kronecker_lyapunov_solve,
    lyapunov_contraction,
    lyapunov_resolvent,
    quadratic_bound,
    quadratic_floor,
    quadratic_lipschitz,
    quadratic_resolvent,
    scalar_quadratic_root,
    yosida_quadratic,
)


def test_lyapunov_resolvent_examples():
    coeff = LyapunovCoefficient(np.eye(3))
    np.testing.assert_array_equal(lyapunov_resolvent(0.5, coeff, np.zeros((3, 3))), 0.0)
    p = lyapunov_resolvent(0.5, LyapunovCoefficient([[1.0]]), [[3.0]])
    assert p[0, 0] == pytest.approx(1.5, abs=1e-15)
    p = lyapunov_resolvent(0.25, LyapunovCoefficient(np.diag([1.0, 2.0])), np.diag([4.0, 6.0]))
    np.testing.assert_allclose(p, np.diag([8.0 / 3.0, 3.0]), atol=1e-14)


def test_lyapunov_rejects_nonpositive_lambda():
    with pytest.raises(ResolventError):
        lyapunov_resolvent(0.0, LyapunovCoefficient(np.eye(2)), np.eye(2))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 6),
       alpha=st.floats(0.01, 10.0), beta=st.floats(0.0, 5.0))
def test_schur_solver_matches_kronecker(seed, d, alpha, beta):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d, d)) + d * np.eye(d)
    rhs = rng.standard_normal((d, d))
    coeff = LyapunovCoefficient(a)
    x = coeff.solve(rhs, alpha, beta)
    np.testing.assert_allclose(x, kronecker_lyapunov_solve(a, rhs, alpha, beta), atol=1e-9)
    np.testing.assert_allclose(alpha * coeff.apply(x) + beta * x, rhs, atol=1e-9)


def test_shifted_coefficient_reuses_schur_form():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((5, 5)) + 5 * np.eye(5)
    rhs = rng.standard_normal((5, 5))
    shifted = LyapunovCoefficient(a).shifted(2.0)
    np.testing.assert_allclose(shifted.solve(rhs), LyapunovCoefficient(a + 2.0 * np.eye(5)).solve(rhs),
                               atol=1e-12)


def test_quadratic_resolvent_examples():
    np.testing.assert_array_equal(quadratic_resolvent(0.5, 0.0, np.zeros((2, 2))), 0.0)
    p = quadratic_resolvent(0.5, 0.0, [[2.0]])
    assert p[0, 0] == pytest.approx(math.sqrt(5.0) - 1.0, abs=1e-15)
    assert 0.5 * p[0, 0] ** 2 + p[0, 0] == pytest.approx(2.0, abs=1e-15)
    p = quadratic_resolvent(0.1, 1.0, np.diag([-1.0, 3.0]))
    np.testing.assert_allclose(np.diag(p), [-1.1270166537925831, 2.4161984870956631], atol=1e-12)
    assert np.linalg.eigvalsh(p)[0] == pytest.approx(quadratic_floor(0.1, 1.0), abs=1e-15)


def test_quadratic_resolvent_domain_errors():
    with pytest.raises(ResolventError, match="lambda"):
        quadratic_resolvent(0.3, 1.0, np.eye(2))
    with pytest.raises(ResolventError, match="outside"):
        quadratic_resolvent(0.1, 1.0, np.diag([-2.0, 1.0]))


def test_scalar_root_against_mpmath():
    mpmath.mp.dps = 50
    for lam, nu in [(0.1, -1.0), (1e-8, 3.0), (1e3, 1e-9), (0.5, 2.0), (0.2, -1.2)]:
        exact = (-1 + mpmath.sqrt(1 + 4 * mpmath.mpf(lam) * mpmath.mpf(nu))) / (2 * mpmath.mpf(lam))
        assert scalar_quadratic_root(lam, nu) == pytest.approx(float(exact), rel=1e-14, abs=1e-300)


def test_yosida_identity():
    np.testing.assert_array_equal(yosida_quadratic(0.5, 0.0, np.zeros((2, 2))), 0.0)
    b = yosida_quadratic(0.5, 0.0, [[2.0]])[0, 0]
    assert b == pytest.approx(2.0 * (3.0 - math.sqrt(5.0)), abs=1e-14)
    assert b == pytest.approx(6.0 - 2.0 * math.sqrt(5.0), abs=1e-14)


def test_bound_factors():
    assert lyapunov_contraction(0.5, 1.0) == 0.5
    assert quadratic_bound(0.1, 0.0) == 1.0
    assert quadratic_floor(0.1, 1.0) == pytest.approx(-2.0 / (1 + math.sqrt(0.6)))
    assert quadratic_lipschitz(0.0, 1.0) == 1.0
    with pytest.raises(ResolventError):
        quadratic_floor(1.0, 1.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), gamma=st.floats(0.0, 2.0), frac=st.floats(0.01, 0.99))
def test_quadratic_resolvent_lipschitz_property(seed, gamma, frac):
    rng = np.random.default_rng(seed)
    lam = frac / (4.0 * gamma) if gamma > 1e-3 else frac
    qs = []
    for _ in range(2):
        x = rng.standard_normal((5, 5))
        x = 0.5 * (x + x.T)
        w, v = np.linalg.eigh(x)
        qs.append(x + (-gamma * rng.uniform() - w[0]) * np.eye(5))
    j1, j2 = (quadratic_resolvent(lam, gamma, q) for q in qs)
    assert np.linalg.norm(j1 - j2) <= quadratic_lipschitz(lam, gamma) * np.linalg.norm(qs[0] - qs[1]) + 1e-12
    assert np.linalg.eigvalsh(j1)[0] >= quadratic_floor(lam, gamma) - 1e-12
