import math
import warnings

import numpy as np
import pytest

from riccati_hs.gelfand import TripleError, build_triple, min_eig, save_matrix
from riccati_hs.problems import (
    ProblemSpec,
    battery,
    convergence_battery,
    laplacian_fem,
    make_problem,
    scalar_oracle,
    scalar_riccati_flow,
    shift_to_floor,
)
from riccati_hs.stepper import BoundaryWarning


def test_scalar_spec_builds_unit_problem():
    prob = make_problem(ProblemSpec(kind="scalar", a=[1.0], q=[3.0], p0=[0.0], gamma=0.0))
    assert prob.dim == 1
    assert prob.info["mu_v"] == pytest.approx(1.0)
    assert prob.info["mu_h"] == pytest.approx(1.0)
    assert prob.horizon == 1.0


def test_scalar_oracle_examples():
    steady = -1.0 + math.sqrt(1.0 + 3.0)
    assert scalar_oracle(1.0, 3.0, steady, 0.1, 5) == pytest.approx([steady] * 6, abs=1e-15)
    assert scalar_oracle(1.0, 0.0, 1.0, 0.5, 1)[1] == pytest.approx(-2.0 + math.sqrt(6.0), abs=1e-15)
    assert scalar_oracle(1.0, 0.0, 0.0, 0.1, 3) == [0.0] * 4
    with pytest.raises(ValueError):
        scalar_oracle(-10.0, 0.0, 0.0, 0.1, 1)


def test_scalar_flow_solves_ode():
    a, q, p0 = 2.0, -1.0, -1.0
    assert scalar_riccati_flow(a, q, p0, 0.0) == pytest.approx(p0)
    assert scalar_riccati_flow(a, q, p0, 50.0) == pytest.approx(-a + math.sqrt(a * a + q), abs=1e-14)
    h = 1e-5
    for t in (0.1, 0.7):
        p = scalar_riccati_flow(a, q, p0, t)
        dp = (scalar_riccati_flow(a, q, p0, t + h) - scalar_riccati_flow(a, q, p0, t - h)) / (2 * h)
        assert dp == pytest.approx(q - 2 * a * p - p * p, abs=1e-8)


def test_scalar_oracle_converges_to_flow():
    errs = []
    for n in (16, 32, 64):
        errs.append(abs(scalar_oracle(1.0, 3.0, 0.0, 1.0 / n, n)[-1] - scalar_riccati_flow(1.0, 3.0, 0.0, 1.0)))
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.1)


def test_fem_poincare_constant():
    triple = build_triple(*laplacian_fem(32))
    assert abs(1.0 / triple.c_vh**2 - math.pi**2) / math.pi**2 < 0.02


def test_shift_to_floor():
    x = np.random.default_rng(0).standard_normal((5, 5))
    out = shift_to_floor(x + x.T, -0.3)
    assert min_eig(out) == pytest.approx(-0.3, abs=1e-14)


def _battery_problems():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryWarning)
        return [(spec, make_problem(spec)) for spec in battery()]


def test_battery_data_touch_cone_boundaries():
    for spec, prob in _battery_problems():
        gamma = prob.gamma
        if spec.gamma_fraction is not None:
            assert gamma == pytest.approx(spec.gamma_fraction * prob.info["gamma_limit"])
        if spec.kind in ("scalar", "diagonal"):
            continue
        assert min_eig(prob.p0) == pytest.approx(-gamma, abs=1e-12)
        times = np.linspace(0.0, prob.horizon, 33)
        q_mins = [min_eig(prob.q_path.value(t)) for t in times]
        assert min(q_mins) >= -gamma**2 - 1e-12
        assert min(q_mins) == pytest.approx(-gamma**2, abs=1e-10)


def test_battery_covers_time_dependence():
    kinds = {(spec.q_time, spec.a_time) for spec, _ in _battery_problems()}
    assert ("two_part", "constant") in kinds
    assert ("sin", "affine") in kinds
    assert ("affine", "constant") in kinds


def test_convergence_battery_is_smooth_and_constant():
    for spec in convergence_battery():
        prob = make_problem(spec)
        assert prob.a_path.is_constant and prob.q_path.is_constant


def test_gamma_beyond_limit_rejected():
    with pytest.raises(TripleError, match="violates gamma"):
        make_problem(ProblemSpec(kind="laplacian_fd", dim=8, gamma=20.0))


def test_spec_round_trip_and_validation():
    spec = battery()[3]
    assert ProblemSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ValueError, match="unknown problem spec keys"):
        ProblemSpec.from_dict({"kind": "scalar", "colour": 1})
    with pytest.raises(ValueError, match="unknown problem kind"):
        ProblemSpec(kind="wave")
    with pytest.raises(ValueError, match="entries"):
        ProblemSpec(kind="diagonal", a=[1.0, 2.0], q=[1.0, 2.0, 3.0])


def test_generation_is_deterministic():
    a = make_problem(ProblemSpec(kind="random_spd", dim=6, gamma_fraction=0.5, seed=7, p0_scale=1.0))
    b = make_problem(ProblemSpec(kind="random_spd", dim=6, gamma_fraction=0.5, seed=7, p0_scale=1.0))
    np.testing.assert_array_equal(a.a_path.value(0.0), b.a_path.value(0.0))
    np.testing.assert_array_equal(a.p0, b.p0)


def test_custom_files(tmp_path):
    m, k = laplacian_fem(5)
    files = {}
    for name, mat in {"gram_h": m, "gram_v": k, "a": k, "q": np.eye(5)}.items():
        save_matrix(tmp_path / f"{name}.csv", mat)
        files[name] = str(tmp_path / f"{name}.csv")
    prob = make_problem(ProblemSpec(kind="custom_files", dim=5, files=files))
    assert prob.dim == 5
    np.testing.assert_allclose(prob.a_path.value(0.0), prob.triple.gram_v_on, atol=1e-12)
    with pytest.raises(ValueError, match="needs paths"):
        make_problem(ProblemSpec(kind="custom_files", dim=5, files={"gram_h": files["gram_h"]}))
