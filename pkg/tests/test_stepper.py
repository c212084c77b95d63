import math

import numpy as np
import pytest

from riccati_hs.are_solver import AreOptions
from riccati_hs.gelfand import TripleError, identity_triple
from riccati_hs.problems import scalar_oracle
from riccati_hs import stepper
from riccati_hs.stepper import (
    AffinePath,
    BoundaryWarning,
    ConstantPath,
    RiccatiProblem,
    SampledPath,
    ScaledPath,
    StepError,
    StepRestrictionWarning,
    SumPath,
    average_coefficients,
    backward_euler_step,
    eval_interpolants,
    integrate,
)


def _scalar_problem(a=1.0, q=3.0, p0=0.0, gamma=0.0, horizon=1.0, **kw):
    return RiccatiProblem(identity_triple(1), [[a]], [[q]], [[p0]], gamma, horizon, **kw)


def _diagonal_problem():
    with pytest.warns(BoundaryWarning):
        return RiccatiProblem(identity_triple(4), np.diag([1.0, 2.0, 3.0, 4.0]),
                              np.diag([3.0, -1.0, 0.0, 8.0]), np.zeros((4, 4)), 1.0, 1.0)


def test_constant_paths_give_constant_averages():
    a, q = np.diag([1.0, 2.0]), np.eye(2)
    prob = RiccatiProblem(identity_triple(2), a, q, np.zeros((2, 2)), 0.0, 1.0)
    for n in (1, 5):
        a_n, q_n = average_coefficients(prob, n, 0.1)
        np.testing.assert_array_equal(a_n, a)
        np.testing.assert_array_equal(q_n, q)


def test_affine_average_is_exact():
    q1 = np.diag([1.0, 2.0])
    path = AffinePath(np.zeros((2, 2)), q1)
    np.testing.assert_allclose(path.average(0.0, 0.5), 0.25 * q1, atol=1e-15)


def test_gauss_average_of_sine():
    q1 = np.diag([1.0, -1.0])
    avg = ScaledPath(math.sin, q1).average(0.0, 0.1)
    exact = (math.cos(0.0) - math.cos(0.1)) / 0.1
    np.testing.assert_allclose(avg, exact * q1, atol=1e-6)


def test_sampled_and_sum_paths():
    path = SampledPath([0.0, 1.0], [np.zeros((1, 1)), np.ones((1, 1))])
    assert path.value(0.25)[0, 0] == 0.25
    assert path.value(2.0)[0, 0] == 1.0
    assert path.nodes(0.0, 2.0) == (0.0, 1.0, 2.0)
    total = SumPath([path, np.eye(1)])
    assert total.average(0.0, 1.0)[0, 0] == pytest.approx(1.5)
    assert not total.is_constant
    with pytest.raises(TripleError):
        SampledPath([1.0, 0.0], np.zeros((2, 1, 1)))


def test_step_preserves_steady_state():
    for tau in (0.01, 0.1, 0.4):
        p, report = backward_euler_step([[1.0]], [[1.0]], [[3.0]], tau, 0.0)
        assert p[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert report.residual_hs < 1e-10


def test_step_decay_value():
    p, _ = backward_euler_step([[1.0]], [[1.0]], [[0.0]], 0.5, 0.0)
    assert p[0, 0] == pytest.approx(-2.0 + math.sqrt(6.0), abs=1e-12)


def test_step_zero_data():
    p, _ = backward_euler_step(np.zeros((3, 3)), np.eye(3), np.zeros((3, 3)), 0.1, 0.0)
    np.testing.assert_allclose(p, 0.0, atol=1e-14)


def test_step_rejects_bad_input():
    with pytest.raises(StepError, match="positive"):
        backward_euler_step([[1.0]], [[1.0]], [[0.0]], 0.0, 0.0)
    with pytest.raises(StepError, match="outside"):
        backward_euler_step([[-2.0]], [[1.0]], [[0.0]], 0.1, 1.0)


def test_integrate_zero_problem():
    prob = RiccatiProblem(identity_triple(3), np.eye(3), np.zeros((3, 3)), np.zeros((3, 3)), 0.0, 1.0)
    traj = integrate(prob, 8)
    assert traj.complete
    assert all(np.abs(p).max() == 0.0 for p in traj.values)


def test_integrate_scalar_matches_recursion():
    traj = integrate(_scalar_problem(), 10)
    oracle = scalar_oracle(1.0, 3.0, 0.0, 0.1, 10)
    assert traj.complete and traj.tau == pytest.approx(0.1)
    for p, ref in zip(traj.values, oracle):
        assert p[0, 0] == pytest.approx(ref, abs=1e-10)


def test_integrate_diagonal_boundary_matches_modes():
    prob = _diagonal_problem()
    traj = integrate(prob, 16)
    oracle = scalar_oracle(np.array([1.0, 2.0, 3.0, 4.0]), np.array([3.0, -1.0, 0.0, 8.0]),
                           np.zeros(4), 1.0 / 16, 16)
    for p, ref in zip(traj.values, oracle):
        np.testing.assert_allclose(np.diag(p), ref, atol=1e-10)
        assert np.abs(p - np.diag(np.diag(p))).max() < 1e-10


def test_integrate_time_dependent_paths():
    a = AffinePath(np.diag([1.0, 2.0]), 0.5 * np.eye(2))
    q = ScaledPath(lambda t: 1.0 + t, np.diag([1.0, 3.0]))
    prob = RiccatiProblem(identity_triple(2), a, q, np.zeros((2, 2)), 0.0, 1.0)
    traj = integrate(prob, 20)
    assert traj.complete
    # decoupled: each mode follows the scalar recursion with averaged data
    p = np.zeros(2)
    for n, p_n in enumerate(traj.values[1:], start=1):
        a_n, q_n = average_coefficients(prob, n, traj.tau)
        p = np.array(scalar_oracle(np.diag(a_n), np.diag(q_n), p, traj.tau, 1)[1])
        np.testing.assert_allclose(np.diag(p_n), p, atol=1e-10)
    assert traj.coefficients[0][0] < traj.coefficients[-1][0]


def test_step_restriction_raises():
    with pytest.raises(StepError, match="violates tau"):
        integrate(_scalar_problem(), 1)


def test_secondary_step_condition_warns_or_raises():
    # c_vh = 1, mu = 4: tau = 0.125 is admissible but above c^2 / (2 mu)
    prob = _scalar_problem(a=4.0, horizon=1.0)
    with pytest.warns(StepRestrictionWarning):
        integrate(prob, 8)
    with pytest.raises(StepError, match="does not satisfy"):
        integrate(prob, 8, strict=True)


def test_failed_step_returns_partial_trajectory(monkeypatch):
    real = stepper.continuation_solve
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 3:
            raise stepper.AreError("forced failure")
        return real(*args, **kwargs)

    monkeypatch.setattr(stepper, "continuation_solve", flaky)
    traj = integrate(_scalar_problem(), 10)
    assert traj.failed_at == 3
    assert len(traj.values) == 3
    assert "forced failure" in traj.error
    assert not traj.complete


def test_problem_validation():
    with pytest.raises(TripleError, match="violates gamma"):
        _scalar_problem(gamma=1.5)
    with pytest.raises(TripleError, match="p0"):
        _scalar_problem(p0=-0.6, gamma=0.5)
    with pytest.raises(TripleError, match="Q"):
        _scalar_problem(q=-0.5, gamma=0.5)
    with pytest.warns(BoundaryWarning):
        _scalar_problem(gamma=1.0)
    with pytest.raises(TripleError, match="on the bound"):
        _scalar_problem(gamma=1.0, strict=True)
    assert _scalar_problem().step_limit() == pytest.approx(0.5)


def test_eval_interpolants():
    traj = integrate(_scalar_problem(), 10)
    p_c, p_l, slope = eval_interpolants(traj, 0.0)
    assert p_c is traj.values[0] and p_l is traj.values[0]
    p_c, p_l, _ = eval_interpolants(traj, 0.3)
    np.testing.assert_allclose(p_c, traj.values[3])
    np.testing.assert_allclose(p_l, traj.values[3], atol=1e-15)
    p_c, p_l, slope = eval_interpolants(traj, 0.35)
    np.testing.assert_allclose(p_c, traj.values[4])
    np.testing.assert_allclose(p_l, 0.5 * (traj.values[3] + traj.values[4]), atol=1e-15)
    np.testing.assert_allclose(slope, (traj.values[4] - traj.values[3]) / 0.1, atol=1e-12)
    with pytest.raises(ValueError):
        eval_interpolants(traj, 1.5)


def test_paper_mode_trajectory_agrees_with_polish():
    prob = _scalar_problem(a=2.0, q=-0.81, p0=-0.9, gamma=0.95)
    paper = integrate(prob, 16, AreOptions(mode="paper"))
    polish = integrate(prob, 16)
    for a, b in zip(paper.values, polish.values):
        assert abs(a[0, 0] - b[0, 0]) < 1e-9
