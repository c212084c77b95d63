"""Run configuration files, deterministic output writers and the run driver.

A configuration is an INI-style document with the sections ``[triple]``,
``[operator_a]``, ``[data_q]``, ``[initial]``, ``[solver]``, ``[grid]`` and
``[output]``. The parser is hand-written so that every diagnostic carries
the line number of the offending entry, and it reports all problems at
once instead of stopping at the first.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .are_solver import AreError, AreMode, AreOptions, solve_are
from .gelfand import TripleError, gamma_min, hs_norm, save_matrix, v_norm
from .io_utils import atomic_write_text
from .problems import A_TIME_KINDS, DATA_KINDS, KINDS, Q_TIME_KINDS, ProblemSpec, make_problem
from .stepper import BoundaryWarning, StepError, StepRestrictionWarning, integrate
from .verify import (
    FAIL,
    PASS,
    ReferenceError,
    apriori_check,
    cone_monitor,
    convergence_study,
    resolvent_property_suite,
    stability_check,
)

__all__ = [
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_SOLVER",
    "EXIT_CHECK",
    "CHECKS",
    "ConfigError",
    "RunConfig",
    "parse_config",
    "load_config",
    "serialize_config",
    "bundled_configs",
    "run",
    "dumps_json",
    "trajectory_csv",
]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4

CHECKS = ("apriori", "cone", "stability", "resolvents", "convergence")
REFERENCE_KINDS = ("auto", "fine_tau", "matrix_ode_rk4", "scalar_oracle")
MODE_NAMES = {"paper": AreMode.PAPER, "polish": AreMode.POLISH, "newton": AreMode.NEWTON}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass
class RunConfig:
    spec: ProblemSpec = field(default_factory=ProblemSpec)
    options: AreOptions = field(default_factory=AreOptions)
    steps: int = 64
    taus: list = field(default_factory=lambda: [1 / 8, 1 / 16, 1 / 32, 1 / 64])
    reference: str = "auto"
    perturbations: list = field(default_factory=lambda: [1e-2, 1e-4])
    out_dir: str = "out"
    dump_every: int = 0
    checks: list = field(default_factory=lambda: ["apriori", "cone"])
    lines: dict = field(default_factory=dict, compare=False, repr=False)


# ---------------------------------------------------------------------------
# value types


def _parse_float(text):
    val = float(Fraction(text.strip()))
    if not math.isfinite(val):
        raise ValueError(f"not a finite number: {text!r}")
    return val


def _parse_int(text):
    return int(text.strip())


def _parse_optfloat(text):
    if text.strip().lower() in ("auto", "none", ""):
        return None
    return _parse_float(text)


def _parse_flist(text):
    items = [t for t in (s.strip() for s in text.split(",")) if t]
    return [_parse_float(t) for t in items]


def _choice(options):
    def parse(text):
        val = text.strip()
        if val not in options:
            raise ValueError(f"expected one of {', '.join(options)}; got {val!r}")
        return val
    parse.choices = tuple(options)
    return parse


def _parse_checks(text):
    items = [t for t in (s.strip() for s in text.split(",")) if t]
    bad = [t for t in items if t not in CHECKS]
    if bad:
        raise ValueError(f"unknown checks {bad}; expected a subset of {', '.join(CHECKS)}")
    return items


def _parse_path(text):
    return text.strip() or None


def _fmt_float(x):
    return repr(float(x))


def _fmt_value(kind, val):
    if val is None:
        return "auto" if kind is _parse_optfloat else ""
    if kind in (_parse_flist,):
        return ", ".join(_fmt_float(x) for x in val)
    if kind is _parse_checks:
        return ", ".join(val)
    if kind in (_parse_float, _parse_optfloat):
        return _fmt_float(val)
    return str(val)


# (section, key) -> (parser, target, attribute); target is one of
# "spec", "options", "files", "run"
SCHEMA = {
    "triple": {
        "kind": (_choice(KINDS), "spec", "kind"),
        "dim": (_parse_int, "spec", "dim"),
        "seed": (_parse_int, "spec", "seed"),
        "gram_h": (_parse_path, "files", "gram_h"),
        "gram_v": (_parse_path, "files", "gram_v"),
    },
    "operator_a": {
        "diffusion": (_parse_float, "spec", "diffusion"),
        "advection": (_parse_float, "spec", "advection"),
        "a": (_parse_flist, "spec", "a"),
        "time": (_choice(A_TIME_KINDS), "spec", "a_time"),
        "rate": (_parse_float, "spec", "a_rate"),
        "file": (_parse_path, "files", "a"),
    },
    "data_q": {
        "q": (_parse_flist, "spec", "q"),
        "scale": (_parse_float, "spec", "q_scale"),
        "touch": (_parse_float, "spec", "q_touch"),
        "time": (_choice(Q_TIME_KINDS), "spec", "q_time"),
        "data": (_choice(DATA_KINDS), "spec", "data"),
        "file": (_parse_path, "files", "q"),
    },
    "initial": {
        "p0": (_parse_flist, "spec", "p0"),
        "scale": (_parse_float, "spec", "p0_scale"),
        "touch": (_parse_float, "spec", "p0_touch"),
        "file": (_parse_path, "files", "p0"),
    },
    "solver": {
        "gamma": (_parse_float, "spec", "gamma"),
        "gamma_fraction": (_parse_optfloat, "spec", "gamma_fraction"),
        "mode": (_choice(tuple(MODE_NAMES)), "options", "mode"),
        "lambda0": (_parse_optfloat, "options", "lambda0"),
        "lambda_shrink": (_parse_float, "options", "lambda_shrink"),
        "fp_tol": (_parse_float, "options", "fp_tol"),
        "fp_max_iter": (_parse_int, "options", "fp_max_iter"),
        "continuation_tol": (_parse_float, "options", "continuation_tol"),
        "max_levels": (_parse_int, "options", "max_levels"),
        "polish_switch_tol": (_parse_float, "options", "polish_switch_tol"),
        "newton_tol": (_parse_float, "options", "newton_tol"),
        "newton_max_iter": (_parse_int, "options", "newton_max_iter"),
        "anderson_depth": (_parse_int, "options", "anderson_depth"),
        "max_contraction": (_parse_float, "options", "max_contraction"),
    },
    "grid": {
        "horizon": (_parse_float, "spec", "horizon"),
        "steps": (_parse_int, "run", "steps"),
        "taus": (_parse_flist, "run", "taus"),
        "reference": (_choice(REFERENCE_KINDS), "run", "reference"),
        "perturbations": (_parse_flist, "run", "perturbations"),
    },
    "output": {
        "name": (_parse_path, "spec", "name"),
        "dir": (_parse_path, "run", "out_dir"),
        "dump_every": (_parse_int, "run", "dump_every"),
        "checks": (_parse_checks, "run", "checks"),
    },
}

_MODE_KEYS = {v: k for k, v in MODE_NAMES.items()}


def _tokenize(text):
    """Yield ``(line_no, section, key, value)`` and collect syntax errors."""
    entries, errors = [], []
    section = None
    seen = set()
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                errors.append(f"line {no}: malformed section header {line!r}")
                continue
            section = line[1:-1].strip()
            if section not in SCHEMA:
                errors.append(f"line {no}: unknown section [{section}]; expected one of "
                              f"{', '.join('[' + s + ']' for s in SCHEMA)}")
            continue
        if "=" not in line:
            errors.append(f"line {no}: expected 'key = value', got {line!r}")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if section is None:
            errors.append(f"line {no}: key {key!r} appears before any section header")
            continue
        if section not in SCHEMA:
            continue
        if key not in SCHEMA[section]:
            errors.append(f"line {no}: unknown key {key!r} in [{section}]")
            continue
        if (section, key) in seen:
            errors.append(f"line {no}: duplicate key {key!r} in [{section}]")
            continue
        seen.add((section, key))
        entries.append((no, section, key, value))
    return entries, errors


def parse_config(text, base_dir=None, check_constraints=True) -> RunConfig:
    """Parse and validate a configuration document.

    Parameters
    ----------
    text : str
        Document contents.
    base_dir : path-like, optional
        Directory against which relative matrix paths are resolved.
    check_constraints : bool
        Build the problem and check the cone bound on ``gamma`` and the step
        restriction on ``steps`` and ``taus``.

    Raises
    ------
    ConfigError
        Listing every syntax, type and constraint error with its line.
    """
    entries, errors = _tokenize(text)
    spec_kw, opt_kw, run_kw, files = {}, {}, {}, {}
    lines = {}
    for no, section, key, value in entries:
        parser, target, attr = SCHEMA[section][key]
        try:
            val = parser(value)
        except (ValueError, ZeroDivisionError) as exc:
            errors.append(f"line {no}: [{section}] {key}: {exc}")
            continue
        lines[(section, key)] = no
        if target == "spec":
            if val is None and attr == "name":
                continue
            spec_kw[attr] = val
        elif target == "options":
            opt_kw[attr] = MODE_NAMES[val] if attr == "mode" else val
        elif target == "files":
            if val is not None:
                files[attr] = val
        else:
            if val is None and attr == "out_dir":
                continue
            run_kw[attr] = val
    if files:
        base = Path(base_dir) if base_dir is not None else None
        spec_kw["files"] = {k: str(base / v) if base is not None and not Path(v).is_absolute() else v
                            for k, v in files.items()}

    def where(*keys):
        for key in keys:
            if key in lines:
                return f"line {lines[key]}: "
        return ""

    spec = options = None
    try:
        spec = ProblemSpec(**spec_kw)
    except (ValueError, TypeError) as exc:
        errors.append(f"{where(('triple', 'kind'))}problem: {exc}")
    try:
        options = AreOptions(**opt_kw)
    except (ValueError, TypeError) as exc:
        errors.append(f"{where(('solver', 'mode'))}solver: {exc}")
    cfg = RunConfig(**run_kw) if spec is None else RunConfig(spec=spec, **run_kw)
    if options is not None:
        cfg.options = options
    cfg.lines = lines
    if cfg.steps < 1:
        errors.append(f"{where(('grid', 'steps'))}[grid] steps must be at least 1")
    if cfg.dump_every < 0:
        errors.append(f"{where(('output', 'dump_every'))}[output] dump_every must be nonnegative")
    if any(t <= 0.0 for t in cfg.taus):
        errors.append(f"{where(('grid', 'taus'))}[grid] taus must be positive")
    if any(p <= 0.0 for p in cfg.perturbations):
        errors.append(f"{where(('grid', 'perturbations'))}[grid] perturbations must be positive")
    if spec is not None and check_constraints and not errors:
        errors.extend(_constraint_errors(cfg, where))
    if errors:
        raise ConfigError(errors)
    return cfg


def _constraint_errors(cfg, where):
    errors = []
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundaryWarning)
            problem = make_problem(cfg.spec)
    except TripleError as exc:
        msg = str(exc)
        if "gamma" in msg and "mu_v / c_vh^2" in msg:
            loc = where(("solver", "gamma"), ("solver", "gamma_fraction"))
            errors.append(f"{loc}[solver] {msg} (the cone parameter must stay below the "
                          f"coercivity bound mu_v / c_vh^2)")
        else:
            errors.append(f"{where(('triple', 'kind'))}problem: {msg}")
        return errors
    except (ValueError, OSError) as exc:
        errors.append(f"{where(('triple', 'kind'))}problem: {exc}")
        return errors
    limit = problem.step_limit()
    tau = cfg.spec.horizon / cfg.steps
    if not tau < limit:
        errors.append(f"{where(('grid', 'steps'))}[grid] steps={cfg.steps} gives tau={tau!r}, "
                      f"violating tau < mu_v / (2 c_vh^2) = {limit!r}")
    bad = [t for t in cfg.taus if not t < limit]
    if bad:
        errors.append(f"{where(('grid', 'taus'))}[grid] taus {bad} violate tau < mu_v / (2 c_vh^2) = {limit!r}")
    return errors


def load_config(path, check_constraints=True) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    return parse_config(text, base_dir=path.parent, check_constraints=check_constraints)


def _current_values(cfg):
    spec, opts = cfg.spec, cfg.options
    for section, keys in SCHEMA.items():
        for key, (parser, target, attr) in keys.items():
            if target == "spec":
                val = getattr(spec, attr)
            elif target == "options":
                val = getattr(opts, attr)
                if attr == "mode":
                    val = _MODE_KEYS[val]
            elif target == "files":
                val = spec.files.get(attr)
            else:
                val = getattr(cfg, attr)
            yield section, key, parser, val


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text form; ``parse_config(serialize_config(c)) == c``."""
    out = []
    current = None
    for section, key, parser, val in _current_values(cfg):
        if section != current:
            if current is not None:
                out.append("")
            out.append(f"[{section}]")
            current = section
        if parser is _parse_path and val is None:
            continue
        out.append(f"{key} = {_fmt_value(parser, val)}")
    return "\n".join(out) + "\n"


def bundled_configs():
    """Paths of the configuration files shipped with the package."""
    root = resources.files("riccati_hs") / "configs"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".ini"))


# ---------------------------------------------------------------------------
# output


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.floating,)):
        return _clean(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, AreMode):
        return obj.value
    return obj


def dumps_json(obj) -> str:
    """Deterministic JSON (sorted keys, shortest round-trip floats, NaN as null)."""
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


TRAJECTORY_COLUMNS = ("n", "t", "hs_norm", "v_norm", "min_eig", "are_residual", "are_iters", "apriori_slack")


def trajectory_csv(traj, problem, apriori=None) -> str:
    slacks = apriori.details.get("slack_per_n", []) if apriori is not None else []
    rhs = apriori.details.get("rhs") if apriori is not None else None
    rows = [",".join(TRAJECTORY_COLUMNS)]
    for n, p in enumerate(traj.values):
        if n == 0:
            res, iters = 0.0, 0
            slack = rhs - hs_norm(p) ** 2 if rhs is not None else math.nan
        else:
            rep = traj.step_reports[n - 1]
            res, iters = rep.residual_hs, rep.total_iters
            slack = slacks[n - 1] if n - 1 < len(slacks) else math.nan
        row = [str(n), repr(n * traj.tau), repr(hs_norm(p)), repr(v_norm(p, problem.triple)),
               repr(float(np.linalg.eigvalsh(p)[0])), repr(float(res)), str(int(iters)), repr(float(slack))]
        rows.append(",".join(row))
    return "\n".join(rows) + "\n"


def _write(out_dir, name, text):
    path = Path(out_dir) / name
    atomic_write_text(path, text)
    return path


# ---------------------------------------------------------------------------
# commands


def _problem(cfg, strict):
    with warnings.catch_warnings():
        warnings.simplefilter("error" if strict else "default", BoundaryWarning)
        try:
            return make_problem(cfg.spec)
        except BoundaryWarning as exc:
            raise TripleError(str(exc)) from exc


def _cmd_gen(cfg, out, strict):
    problem = _problem(cfg, strict)
    triple = problem.triple
    sqrt_m = np.linalg.inv(triple.h_basis)
    a0 = problem.a_path.value(0.0)
    form = sqrt_m.T @ a0 @ sqrt_m
    save_matrix(out / "gram_h.csv", triple.gram_h)
    save_matrix(out / "gram_v.csv", triple.gram_v)
    save_matrix(out / "a.csv", form)
    save_matrix(out / "q.csv", problem.q_path.value(0.0))
    save_matrix(out / "p0.csv", problem.p0)
    time_dependent = not (problem.a_path.is_constant and problem.q_path.is_constant)
    manifest = {
        "problem": cfg.spec.to_dict(),
        "constants": {k: problem.info[k] for k in ("c_vh", "mu_v", "mu_h", "eta", "gamma", "gamma_limit")},
        "files": ["gram_h.csv", "gram_v.csv", "a.csv", "q.csv", "p0.csv", "custom.ini"],
        "time_dependent": time_dependent,
        "note": "a.csv is the bilinear form in the original basis; q.csv and p0.csv are in "
                "H-orthonormal coordinates; time-dependent data are written at t = 0",
    }
    custom = RunConfig(spec=ProblemSpec(kind="custom_files", gamma=problem.gamma, horizon=problem.horizon,
                                        files={"gram_h": "gram_h.csv", "gram_v": "gram_v.csv",
                                               "a": "a.csv", "q": "q.csv", "p0": "p0.csv"},
                                        name=f"{cfg.spec.name}_files"),
                       options=cfg.options, steps=cfg.steps, taus=list(cfg.taus), reference=cfg.reference,
                       perturbations=list(cfg.perturbations), out_dir=cfg.out_dir, dump_every=cfg.dump_every,
                       checks=list(cfg.checks))
    _write(out, "custom.ini", serialize_config(custom))
    _write(out, "manifest.json", dumps_json(manifest))
    return EXIT_OK


def _cmd_are(cfg, out, strict):
    problem = _problem(cfg, strict)
    a0 = problem.a_path.value(0.0)
    q0 = problem.q_path.value(0.0)
    gamma = max(problem.gamma, gamma_min(q0))
    try:
        p, report = solve_are(a0, q0, gamma, cfg.options)
    except (AreError, TripleError) as exc:
        _write(out, "are_report.json", dumps_json({"status": "error", "error": str(exc)}))
        logger.error("ARE solve failed: %s", exc)
        return EXIT_SOLVER
    save_matrix(out / "are_P.csv", p)
    scale = 1.0 + hs_norm(q0)
    ok = report.residual_hs <= 1e-8 * scale and report.min_eig >= -gamma - 1e-8
    body = {"status": PASS if ok else FAIL, "gamma": gamma, "report": report.to_dict(),
            "residual_tolerance": 1e-8 * scale, "total_iters": report.total_iters}
    _write(out, "are_report.json", dumps_json(body))
    return EXIT_OK if ok else EXIT_CHECK


def _trajectory(cfg, problem, strict):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error" if strict else "default", StepRestrictionWarning)
            traj = integrate(problem, cfg.steps, cfg.options, strict=strict)
    except (StepError, StepRestrictionWarning) as exc:
        return None, str(exc)
    if not traj.complete:
        return traj, f"step {traj.failed_at} failed: {traj.error}"
    return traj, None


def _cmd_solve(cfg, out, strict):
    problem = _problem(cfg, strict)
    traj, err = _trajectory(cfg, problem, strict)
    if traj is None:
        _write(out, "report.json", dumps_json({"status": "error", "error": err}))
        logger.error("%s", err)
        return EXIT_SOLVER
    checks = []
    apriori = apriori_check(traj, problem)
    if "apriori" in cfg.checks:
        checks.append(apriori)
    if "cone" in cfg.checks:
        checks.append(cone_monitor(traj, problem.gamma))
    _write(out, "trajectory.csv", trajectory_csv(traj, problem, apriori))
    if cfg.dump_every > 0:
        for n in range(0, len(traj.values), cfg.dump_every):
            save_matrix(out / "dumps" / f"P_{n:06d}.csv", traj.values[n])
    body = {
        "problem": problem.name,
        "steps": cfg.steps,
        "tau": traj.tau,
        "complete": traj.complete,
        "failed_at": traj.failed_at,
        "error": err,
        "checks": [c.to_dict() for c in checks],
        "status": PASS if err is None and all(c.passed for c in checks) else FAIL,
    }
    _write(out, "report.json", dumps_json(body))
    if err is not None:
        logger.error("%s", err)
        return EXIT_SOLVER
    return EXIT_OK if body["status"] == PASS else EXIT_CHECK


def _convergence(cfg, problem):
    try:
        return convergence_study(problem, cfg.taus, cfg.reference, cfg.options), None
    except (ReferenceError, StepError, ValueError) as exc:
        return None, str(exc)


def _cmd_converge(cfg, out, strict):
    problem = _problem(cfg, strict)
    study, err = _convergence(cfg, problem)
    if study is None:
        _write(out, "convergence.json", dumps_json({"status": "error", "error": err}))
        logger.error("%s", err)
        return EXIT_SOLVER
    _write(out, "convergence.json", dumps_json(study.to_dict()))
    return EXIT_OK if study.status == PASS else EXIT_CHECK


def verify_config(cfg, strict=False):
    """Run every check enabled in ``cfg``; returns ``(results, error)``."""
    problem = _problem(cfg, strict)
    results = []
    traj, err = _trajectory(cfg, problem, strict)
    if traj is None or err is not None:
        return results, err
    if "apriori" in cfg.checks:
        results.append(apriori_check(traj, problem).to_dict())
    if "cone" in cfg.checks:
        results.append(cone_monitor(traj, problem.gamma).to_dict())
    if "stability" in cfg.checks:
        rng = np.random.default_rng(cfg.spec.seed)
        d = problem.dim
        for size in cfg.perturbations:
            x = rng.standard_normal((d, d))
            x = 0.5 * (x + x.T)
            x *= size / hs_norm(x)
            p0_b = problem.p0 + x
            # shift upward if needed so the perturbed initial value stays in the cone
            w_min = float(np.linalg.eigvalsh(p0_b)[0])
            if w_min < -problem.gamma:
                p0_b = p0_b + (-problem.gamma - w_min) * np.eye(d)
            try:
                res = stability_check(problem, problem.p0, p0_b, cfg.steps, cfg.options)
            except (ReferenceError, StepError) as exc:
                return results, str(exc)
            entry = res.to_dict()
            entry["details"] = {k: v for k, v in entry["details"].items() if k != "differences"}
            entry["details"]["perturbation"] = size
            results.append(entry)
    if "resolvents" in cfg.checks:
        mu_h = problem.info["mu_h"]
        suite = resolvent_property_suite(problem.triple, problem.a_path.value(0.0), trials=50,
                                         seed=cfg.spec.seed, gamma=0.5 * mu_h)
        results.extend(r.to_dict() for r in suite)
    if "convergence" in cfg.checks:
        study, err = _convergence(cfg, problem)
        if study is None:
            return results, err
        final = (study.observed_orders[-1], study.orders_l2_v[-1])
        steady = study.note.startswith("steady")
        usable = not steady and all(math.isfinite(x) for x in final)
        slack = 0.2 - max(abs(x - 1.0) for x in final) if usable else 0.0
        entry = {"check": "convergence", "status": study.status, "slack": slack,
                 "details": study.to_dict()}
        results.append(entry)
    return results, None


def _strip_witness_bulk(entry):
    entry = dict(entry)
    if "details" in entry and "slack_per_n" in entry["details"]:
        entry["details"] = {k: v for k, v in entry["details"].items() if k != "slack_per_n"}
    return entry


def _cmd_verify(cfgs, out, strict):
    report = []
    code = EXIT_OK
    for label, cfg in cfgs:
        try:
            results, err = verify_config(cfg, strict)
        except TripleError as exc:
            results, err = [], str(exc)
        status = PASS if err is None and all(r["status"] == PASS for r in results) else FAIL
        report.append({"config": label, "status": status, "error": err,
                       "checks": [_strip_witness_bulk(r) for r in results]})
        if err is not None:
            code = max(code, EXIT_SOLVER)
        elif status == FAIL:
            code = max(code, EXIT_CHECK)
    overall = PASS if code == EXIT_OK else FAIL
    _write(out, "verify.json", dumps_json({"status": overall, "runs": report}))
    return code


COMMANDS = ("gen", "are", "solve", "converge", "verify")


def run(command, cfgs, out_dir, strict=False):
    """Execute ``command`` and return the process exit code.

    ``cfgs`` is a list of ``(label, RunConfig)``; all commands except
    ``verify`` use only the first entry.
    """
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if command == "verify":
        return _cmd_verify(cfgs, out, strict)
    cfg = cfgs[0][1]
    handler = {"gen": _cmd_gen, "are": _cmd_are, "solve": _cmd_solve, "converge": _cmd_converge}[command]
    try:
        return handler(cfg, out, strict)
    except TripleError as exc:
        logger.error("invalid problem: %s", exc)
        return EXIT_CONFIG


def with_overrides(cfg: RunConfig, *, seed=None, mode=None, taus=None, dump_every=None, out_dir=None):
    """Copy of ``cfg`` with command-line overrides applied."""
    spec = cfg.spec
    if seed is not None:
        spec = dataclasses.replace(spec, seed=seed)
    options = cfg.options
    if mode is not None:
        options = dataclasses.replace(options, mode=MODE_NAMES[mode])
    new = dataclasses.replace(cfg, spec=spec, options=options)
    if taus is not None:
        new.taus = list(taus)
    if dump_every is not None:
        new.dump_every = dump_every
    if out_dir is not None:
        new.out_dir = str(out_dir)
    new.lines = cfg.lines
    return new
