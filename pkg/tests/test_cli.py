import json
import subprocess
import sys

import pytest

from riccati_hs.cli import main
from riccati_hs.cli_io import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_SOLVER,
    ConfigError,
    RunConfig,
    bundled_configs,
    dumps_json,
    load_config,
    parse_config,
    serialize_config,
)
from riccati_hs.problems import ProblemSpec

MINIMAL = "[triple]\nkind = scalar\n"


def _config(path, body):
    path.write_text(body, encoding="utf-8")
    return str(path)


def test_minimal_config_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg == RunConfig(spec=ProblemSpec(kind="scalar"))
    assert cfg.steps == 64 and cfg.options.mode.value == "paper_plus_newton_polish"


@pytest.mark.parametrize("path", bundled_configs(), ids=lambda p: p.stem)
def test_serialization_round_trip(path):
    cfg = load_config(path)
    text = serialize_config(cfg)
    again = parse_config(text, base_dir=path.parent)
    assert again == cfg
    assert serialize_config(again) == text


def test_fractions_and_comments():
    cfg = parse_config("# comment\n[triple]\nkind = scalar\n[grid]\ntaus = 1/8, 1/16, 1/32\n; another comment\n")
    assert cfg.taus == [0.125, 0.0625, 0.03125]


def test_gamma_bound_depends_on_triple():
    fd = "[triple]\nkind = laplacian_fd\ndim = 16\n[solver]\ngamma = 5\n"
    assert parse_config(fd).spec.gamma == 5.0
    scalar = "[triple]\nkind = scalar\n\n[solver]\ngamma = 5\n"
    with pytest.raises(ConfigError) as info:
        parse_config(scalar)
    (msg,) = info.value.errors
    assert msg.startswith("line 5: [solver] gamma")
    assert "mu_v / c_vh^2" in msg


def test_all_errors_reported_with_lines():
    text = ("[triple]\nkind = laplacian_fd\ndim = 8\nbogus = 1\n[solver]\nmode = fast\n"
            "[grid]\nsteps = x\n[solver]\ngamma = 1\n[nowhere]\n")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    errors = info.value.errors
    assert any(e.startswith("line 4:") and "bogus" in e for e in errors)
    assert any(e.startswith("line 6:") and "fast" in e for e in errors)
    assert any(e.startswith("line 8:") and "steps" in e for e in errors)
    assert any(e.startswith("line 11:") and "nowhere" in e for e in errors)
    assert len(errors) >= 4


def test_step_restriction_in_config():
    with pytest.raises(ConfigError, match="violating tau"):
        parse_config("[triple]\nkind = scalar\n[grid]\nsteps = 2\n")


def test_dumps_json_is_canonical():
    assert dumps_json({"b": float("nan"), "a": 0.1}) == '{\n  "a": 0.1,\n  "b": null\n}\n'


def test_cli_missing_config(capsys):
    assert main(["solve"]) == EXIT_CONFIG
    assert "--config is required" in capsys.readouterr().err


def test_cli_config_error_exit(tmp_path, capsys):
    path = _config(tmp_path / "bad.ini", "[triple]\nkind = scalar\n[solver]\ngamma = 2\n")
    assert main(["solve", "--config", path, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "line 4" in capsys.readouterr().err


def test_cli_override_revalidated(tmp_path, capsys):
    path = _config(tmp_path / "s.ini", MINIMAL)
    code = main(["converge", "--config", path, "--taus", "1,1/2,1/4", "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert "with overrides" in capsys.readouterr().err


def test_solve_steady_state(tmp_path):
    path = [p for p in bundled_configs() if p.stem == "steady_state"][0]
    assert main(["solve", "--config", str(path), "--out", str(tmp_path)]) == EXIT_OK
    rows = (tmp_path / "trajectory.csv").read_text().splitlines()
    header = rows[0].split(",")
    assert header[:3] == ["n", "t", "hs_norm"]
    norms = [float(r.split(",")[2]) for r in rows[1:]]
    assert len(norms) == 33
    assert max(abs(x - 1.0) for x in norms) < 1e-9
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["complete"] and report["status"] == "PASS"
    assert {c["check"] for c in report["checks"]} == {"apriori", "cone"}


def test_converge_scalar_orders(tmp_path):
    path = [p for p in bundled_configs() if p.stem == "scalar"][0]
    assert main(["converge", "--config", str(path), "--out", str(tmp_path)]) == EXIT_OK
    study = json.loads((tmp_path / "convergence.json").read_text())
    assert study["status"] == "PASS"
    assert all(abs(x - 1.0) < 0.1 for x in study["observed_orders"][-2:])


def test_gen_then_are_round_trip(tmp_path):
    src = _config(tmp_path / "fd.ini", "[triple]\nkind = laplacian_fd\ndim = 6\n[solver]\ngamma_fraction = 0.5\n"
                  "[data_q]\ntouch = 1\n")
    assert main(["gen", "--config", src, "--out", str(tmp_path / "gen")]) == EXIT_OK
    manifest = json.loads((tmp_path / "gen" / "manifest.json").read_text())
    assert set(manifest["files"]) >= {"gram_h.csv", "gram_v.csv", "a.csv", "q.csv", "p0.csv"}
    custom = str(tmp_path / "gen" / "custom.ini")
    assert main(["are", "--config", custom, "--out", str(tmp_path / "are")]) == EXIT_OK
    report = json.loads((tmp_path / "are" / "are_report.json").read_text())
    assert report["report"]["residual_hs"] < 1e-8


def test_verify_solver_error_exit(tmp_path):
    # the explicit reference refuses steps this far beyond its stability region
    path = _config(tmp_path / "c.ini", "[triple]\nkind = laplacian_fd\ndim = 64\n[operator_a]\ndiffusion = 50\n"
                   "[grid]\nsteps = 4\ntaus = 1/4, 1/8, 1/16\nreference = matrix_ode_rk4\n"
                   "[output]\nchecks = convergence\n")
    code = main(["verify", "--config", path, "--out", str(tmp_path / "o")])
    assert code == EXIT_SOLVER
    report = json.loads((tmp_path / "o" / "verify.json").read_text())
    assert report["status"] == "FAIL"
    assert "refused" in report["runs"][0]["error"]


def test_module_entry_point_version():
    out = subprocess.run([sys.executable, "-m", "riccati_hs", "--version"], capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.strip().startswith("riccati-hs ")


def test_repeated_runs_byte_identical(tmp_path):
    path = [p for p in bundled_configs() if p.stem == "advection"][0]
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["solve", "--config", str(path), "--out", str(out), "--dump-every", "16"]) == EXIT_OK
        outs.append(out)
    names = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    assert names
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
