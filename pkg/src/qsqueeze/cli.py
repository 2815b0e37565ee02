"""Batch runner: ``qsqueeze run <experiment>`` and ``qsqueeze validate``.

A run is described by a JSON config::

    {"experiment": "fig3",
     "parameters": {"phis": [0.08, 0.159], "s_max": 64},
     "output": {"path": "fig3.csv", "format": "csv"}}

Command-line flags override the file. Every emitted table starts with ``#``
metadata lines carrying the package version, the fully resolved config and
its SHA-256 digest, so any output can be fed back to ``validate``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
4 Fock-space truncation.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import sys
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import __version__, analytic, dephasing, measurement, open_system
from .errors import ConfigurationError, QSqueezeError, TruncationError
from .fockspace import HilbertConfig

log = logging.getLogger("qsqueeze")

EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_TRUNCATION = 4

TWO_PI = 2 * math.pi
COMMON = {"seed": 0, "dim": None, "precision": "auto"}
DEVICE = {
    "omega_r": TWO_PI * 200e6,
    "omega_ge": TWO_PI * 10.8e9,
    "delta": TWO_PI * 4e9,
    "epsilon": None,
    "g": TWO_PI * 2e6,
    "i_p": 300e-9,
    "q_factor": 1e4,
    "t1_qubit": 10e-6,
    "temp_qubit": 0.050,
    "temp_ho": 0.015,
}
NOISE = {
    "g": 1e6,
    "omega_r": TWO_PI * 200e6,
    "n_p": 50,
    "t_e": None,
    "repetition_gap": 0.0,
    "phi": None,
    "s_max": 18,
    "phase_factor": dephasing.DEFAULT_PHASE_FACTOR,
    "w_source": "integrated",
    "u": 10.0,
    "v": 10.0,
}

SCHEMA: dict[str, dict[str, Any]] = {
    "fig1": {"phi": 0.159, "s": 500, "n_traj": 500, "alpha0": 0.0, "last": 50, "bins": 30, "series_stride": 1},
    "trajectories": {"phi": 0.159, "s": 100, "n_traj": 100, "alpha0": 0.0, "last": 50},
    "fig2": {"phi": 0.159, "s": 64, "alpha0": 0.0, "convention": "half"},
    "distribution": {"phi": 0.159, "s": 64, "alpha0": 0.0},
    "fig3": {"phis": [0.08, 0.159], "s_min": 2, "s_max": 64, "s_step": 2},
    "variance_scan": {"phi": 0.159, "s_min": 2, "s_max": 64, "s_step": 2, "alpha0": 0.0},
    "fig4": {**NOISE, "a_omegas": [1.2e7**2, 2.4e7**2]},
    "dephasing_scan": {**NOISE, "a_omega": 1.2e7**2},
    "lindblad_run": {
        **DEVICE,
        "s": 24,
        "n_traj": 8,
        "n_p": 8,
        "t_e": None,
        "gamma_phi": 0.0,
        "initial": "thermal",
        "alpha0": 0.0,
        "dissipation": True,
        "dim": 60,
    },
    "derivation_checks": {"phi": 0.159, "s": 64},
}
EXPERIMENTS = tuple(SCHEMA)
FORMATS = ("csv", "json-lines")

POSITIVE = {
    "phi", "omega_r", "omega_ge", "delta", "g", "i_p", "q_factor", "t1_qubit", "temp_qubit", "temp_ho", "u", "v",
    "phase_factor",
}
POSITIVE_INT = {"s", "n_traj", "last", "bins", "series_stride", "s_min", "s_max", "s_step", "n_p"}
NON_NEGATIVE = {"a_omega", "gamma_phi", "repetition_gap"}


# ---------------------------------------------------------------- validation


def _as_int(name, value, errors):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        errors.append(f"{name} must be an integer")
        return value
    return int(value)


def _as_float(name, value, errors):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        errors.append(f"{name} must be a finite number")
        return value
    return float(value)


def _check_params(experiment: str, params: dict, errors: list[str]) -> dict:
    spec = SCHEMA[experiment]
    allowed = {**COMMON, **spec}
    unknown = sorted(set(params) - set(allowed))
    for key in unknown:
        errors.append(f"unknown parameter {key!r} for experiment {experiment!r}")
    out = {k: copy.deepcopy(v) for k, v in allowed.items()}
    out.update({k: v for k, v in params.items() if k in allowed})

    for key, value in list(out.items()):
        if value is None:
            continue
        if key in POSITIVE_INT or key in ("seed", "dim"):
            out[key] = value = _as_int(key, value, errors)
            if not isinstance(value, int):
                continue
            if key in POSITIVE_INT and value < 1:
                errors.append(f"{key} must be a positive integer")
        elif key in POSITIVE or key in NON_NEGATIVE or key in ("epsilon", "t_e", "alpha0"):
            out[key] = value = _as_float(key, value, errors)
            if not isinstance(value, float):
                continue
            if key in POSITIVE and not value > 0:
                errors.append(f"{key} must be positive")
            if key in NON_NEGATIVE and value < 0:
                errors.append(f"{key} must be non-negative")
        elif key in ("phis", "a_omegas"):
            if not isinstance(value, list) or not value:
                errors.append(f"{key} must be a non-empty list of numbers")
                continue
            out[key] = [_as_float(key, v, errors) for v in value]
            bad = [v for v in out[key] if isinstance(v, float) and (v <= 0 if key == "phis" else v < 0)]
            if bad:
                errors.append(f"{key} entries must be {'positive' if key == 'phis' else 'non-negative'}")

    if out["seed"] is not None and isinstance(out["seed"], int) and not 0 <= out["seed"] < 2**64:
        errors.append("seed must be in [0, 2^64)")
    if isinstance(out.get("dim"), int) and out["dim"] < 2:
        errors.append("dim must be >= 2")
    try:
        analytic._parse_precision(out["precision"])
    except ConfigurationError as exc:
        errors.append(str(exc))
    for key, choices in (("convention", ("half", "literal")), ("w_source", ("integrated", "closed_form")),
                         ("initial", ("thermal", "vacuum", "coherent"))):
        if key in out and out[key] not in choices:
            errors.append(f"{key} must be one of {', '.join(choices)}")
    if "dissipation" in out and not isinstance(out["dissipation"], bool):
        errors.append("dissipation must be true or false")
    if "s_min" in out and all(isinstance(out[k], int) for k in ("s_min", "s_max")) and out["s_min"] > out["s_max"]:
        errors.append("s_min must not exceed s_max")
    if experiment in ("fig4", "dephasing_scan") and isinstance(out["s_max"], int):
        if out["s_max"] > dephasing.EXACT_MAX_STEPS:
            errors.append(f"s_max must be <= {dephasing.EXACT_MAX_STEPS} for noise runs")
    if experiment == "lindblad_run" and isinstance(out["s"], int) and out["s"] > 24:
        errors.append("s must be <= 24 for lindblad_run")
    if errors:
        return out
    _derive(experiment, out, errors)
    return out


def _derive(experiment: str, out: dict, errors: list[str]) -> None:
    """Fill cross-field quantities (``t_e``, ``epsilon``, ``phi``) or flag inconsistencies."""
    if "n_p" in out:
        ideal = out["n_p"] * math.pi / out["omega_r"]
        if out["t_e"] is None:
            out["t_e"] = ideal
        elif abs(out["t_e"] - ideal) > 1e-9 * ideal:
            errors.append(f"t_e={out['t_e']!r} s is inconsistent with n_p*pi/omega_r={ideal!r} s")
    if "epsilon" in out:
        if out["delta"] > out["omega_ge"]:
            errors.append("delta cannot exceed omega_ge")
        elif out["epsilon"] is None:
            out["epsilon"] = math.sqrt(out["omega_ge"] ** 2 - out["delta"] ** 2)
        elif abs(math.hypot(out["delta"], out["epsilon"]) - out["omega_ge"]) > 1e-12 * out["omega_ge"]:
            errors.append("omega_ge must equal sqrt(delta^2 + epsilon^2)")
    if experiment in ("fig4", "dephasing_scan") and out["phi"] is None and not errors:
        out["phi"] = 2 / math.pi * out["g"] * out["t_e"]


def validate(config: dict) -> dict:
    """Resolved config with every default and derived field filled in.

    Raises :class:`ConfigurationError` listing every violation, one per line.
    """
    errors: list[str] = []
    if not isinstance(config, dict):
        raise ConfigurationError("config must be a JSON object")
    extra = sorted(set(config) - {"experiment", "parameters", "output"})
    errors += [f"unknown top-level key {k!r}" for k in extra]
    experiment = config.get("experiment")
    if experiment not in SCHEMA:
        errors.append(f"experiment must be one of {', '.join(EXPERIMENTS)}")
        raise ConfigurationError("\n".join(errors))
    params = config.get("parameters") or {}
    if not isinstance(params, dict):
        errors.append("parameters must be an object")
        params = {}
    output = config.get("output") or {}
    if not isinstance(output, dict):
        errors.append("output must be an object")
        output = {}
    errors += [f"unknown output key {k!r}" for k in sorted(set(output) - {"path", "format"})]
    fmt = output.get("format", "csv")
    if fmt not in FORMATS:
        errors.append(f"output format must be one of {', '.join(FORMATS)}")
    path = output.get("path")
    if path is not None and not isinstance(path, str):
        errors.append("output path must be a string")
    resolved = _check_params(experiment, params, errors)
    if errors:
        raise ConfigurationError("\n".join(errors))
    return {"experiment": experiment, "parameters": resolved, "output": {"path": path, "format": fmt}}


def config_digest(resolved: dict) -> str:
    return hashlib.sha256(_canonical(resolved).encode()).hexdigest()


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# ------------------------------------------------------------------- output


@dataclass
class Table:
    name: str
    columns: list[str]
    rows: list[list]


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json_cell(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        v = float(v)
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def render(table: Table, resolved: dict) -> str:
    meta = {
        "version": __version__,
        "experiment": resolved["experiment"],
        "table": table.name,
        "config": resolved,
        "config_sha256": config_digest(resolved),
    }
    buf = io.StringIO()
    if resolved["output"]["format"] == "csv":
        buf.write(f"# qsqueeze {__version__}\n")
        buf.write(f"# experiment: {resolved['experiment']}\n")
        buf.write(f"# table: {table.name}\n")
        buf.write(f"# config: {_canonical(resolved)}\n")
        buf.write(f"# config_sha256: {meta['config_sha256']}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([_cell(v) for v in row])
    else:
        buf.write(_canonical({"meta": meta}) + "\n")
        for row in table.rows:
            record = {c: _json_cell(v) for c, v in zip(table.columns, row)}
            buf.write(json.dumps(record, separators=(",", ":")) + "\n")
    return buf.getvalue()


def _table_path(path: str, name: str, multi: bool) -> str:
    if not multi:
        return path
    stem, dot, ext = path.rpartition(".")
    if not dot or "/" in ext:
        return f"{path}_{name}"
    return f"{stem}_{name}.{ext}"


def write_tables(tables: list[Table], resolved: dict, stdout=None) -> list[str]:
    path = resolved["output"]["path"]
    multi = len(tables) > 1
    written = []
    for table in tables:
        text = render(table, resolved)
        if path is None or path == "-":
            (stdout or sys.stdout).write(text)
        else:
            target = _table_path(path, table.name, multi)
            with open(target, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            written.append(target)
    return written


def read_config_file(path: str) -> dict:
    """Load a JSON config, or recover the embedded config from an emitted table."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    for line in text.splitlines():
        if line.startswith("# config: "):
            return json.loads(line[len("# config: "):])
        if line.startswith('{"meta":'):
            return json.loads(line)["meta"]["config"]
        if line.strip() and not line.startswith("#"):
            break
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not a JSON config or emitted table ({exc})") from exc


# -------------------------------------------------------------- experiments


def _hilbert(p: dict, phi: float, steps: int, initial=None) -> HilbertConfig:
    if p["dim"] is not None:
        return HilbertConfig(p["dim"])
    return HilbertConfig(measurement.suggested_dim(phi, steps, initial))


def _ensemble(p: dict, keep: bool):
    initial = measurement.InitialState.coherent(p["alpha0"])
    params = measurement.ProtocolParams(
        phi=p["phi"], steps=p["s"], initial=initial, seed=p["seed"],
        hilbert=_hilbert(p, p["phi"], p["s"], initial),
    )
    return measurement.ensemble_statistics(params, p["n_traj"], last=p["last"], bins=p.get("bins", 30),
                                           keep_records=keep)


def run_fig1(p: dict) -> list[Table]:
    stats = _ensemble(p, keep=True)
    stride = p["series_stride"]
    steps = []
    for i, rec in enumerate(stats.records):
        for k in range(stride - 1, p["s"], stride):
            steps.append([i, k + 1, int(rec.results[k]), rec.means[k], rec.variances[k]])
    hist = []
    for quantity, (counts, edges) in (("mean_I", stats.hist_mean), ("var_I", stats.hist_var)):
        for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
            hist.append([quantity, lo, hi, int(c)])
    corr = [
        [i, stats.readout_averages[i], stats.final_means[i], stats.final_variances[i]]
        for i in range(p["n_traj"])
    ]
    corr.append(["pearson", stats.readout_correlation, "", ""])
    return [
        Table("steps", ["trajectory", "step", "result", "mean_I", "var_I"], steps),
        Table("hist", ["quantity", "bin_left", "bin_right", "count"], hist),
        Table("corr", ["trajectory", "readout_average", "final_mean_I", "final_var_I"], corr),
    ]


def run_trajectories(p: dict) -> list[Table]:
    stats = _ensemble(p, keep=False)
    rows = [
        [i, stats.final_means[i], stats.final_variances[i], stats.readout_averages[i]]
        for i in range(p["n_traj"])
    ]
    return [Table("final", ["trajectory", "final_mean_I", "final_var_I", "readout_average"], rows)]


def run_fig2(p: dict) -> list[Table]:
    s, phi = p["s"], p["phi"]
    dist = analytic.outcome_distribution(s, phi, p["alpha0"], precision=p["precision"])
    cfg = _hilbert(p, phi, s, measurement.InitialState.coherent(p["alpha0"]))
    rows = []
    for n in range(s + 1):
        st = dist.stats[n]
        fid = analytic.squeezed_target_fidelity(s, n, phi, cfg, p["convention"], re_alpha0=p["alpha0"])
        rows.append([n, dist.weight[n], st.mean_I, st.variance, fid])
    return [Table("fig2", ["n", "weight", "mean_I", "var_I", "fidelity"], rows)]


def run_distribution(p: dict) -> list[Table]:
    s = p["s"]
    dist = analytic.outcome_distribution(s, p["phi"], p["alpha0"], precision=p["precision"])
    rows = [
        [n, dist.weight[n], st.prob, st.log_prob, st.mean_I, st.variance, st.precision]
        for n, st in enumerate(dist.stats)
    ]
    return [Table("distribution", ["n", "weight", "prob", "log_prob", "mean_I", "var_I", "precision"], rows)]


def _s_grid(p: dict) -> range:
    return range(p["s_min"], p["s_max"] + 1, p["s_step"])


def _scan_row(s: int, phi: float, alpha0: float, precision) -> list:
    dist = analytic.outcome_distribution(s, phi, alpha0, precision=precision)
    sym = dist.stats[s // 2].variance if s % 2 == 0 else float("nan")
    return [s, phi, sym, dist.weighted_variance, analytic.variance_approx(phi, s)]


def run_fig3(p: dict) -> list[Table]:
    rows = [_scan_row(s, phi, 0.0, p["precision"]) for phi in p["phis"] for s in _s_grid(p)]
    return [Table("fig3", ["s", "phi", "var_most_likely", "var_weighted", "var_law"], rows)]


def run_variance_scan(p: dict) -> list[Table]:
    rows = []
    for s in _s_grid(p):
        row = _scan_row(s, p["phi"], p["alpha0"], p["precision"])
        rows.append(row + [(row[2] - row[4]) / row[4] if s % 2 == 0 else float("nan")])
    return [Table("variance_scan", ["s", "phi", "var_symmetric", "var_weighted", "var_law", "rel_dev_symmetric"], rows)]


def _noise_setup(p: dict, a_omega: float) -> tuple[dephasing.ProtocolTiming, float]:
    timing = dephasing.ProtocolTiming(p["n_p"], p["omega_r"], p["t_e"], p["repetition_gap"])
    spec = dephasing.NoiseSpectrum.for_protocol(max(a_omega, 1.0), timing, p["s_max"], p["u"], p["v"])
    if p["w_source"] == "closed_form":
        w_unit = dephasing.diagonal_approx(spec, timing) / spec.a_omega
    else:
        # W is linear in A, so one integral at unit amplitude serves every A
        unit = dephasing.NoiseSpectrum(1.0, spec.omega_min, spec.omega_max)
        w_unit = float(dephasing.correlation_matrix(unit, timing, 1, p["phase_factor"]).w[0, 0])
    return timing, w_unit


def _noise_cfg(p: dict) -> HilbertConfig:
    return _hilbert(p, p["phi"], p["s_max"])


def run_fig4(p: dict) -> list[Table]:
    _, w_unit = _noise_setup(p, max(p["a_omegas"]))
    cfg = _noise_cfg(p)
    curves = [dephasing.noisy_variance_curve(p["s_max"], p["phi"], a * w_unit, cfg=cfg) for a in p["a_omegas"]]
    cols = ["s", "var_noiseless"] + [f"var_noise_{i + 1}" for i in range(len(curves))]
    cols += [f"w_ii_{i + 1}" for i in range(len(curves))]
    rows = []
    for k, s in enumerate(curves[0].s):
        rows.append([int(s), curves[0].noiseless_weighted[k]] + [c.noisy_weighted[k] for c in curves]
                    + [c.w_ii for c in curves])
    return [Table("fig4", cols, rows)]


def run_dephasing_scan(p: dict) -> list[Table]:
    _, w_unit = _noise_setup(p, p["a_omega"])
    curve = dephasing.noisy_variance_curve(p["s_max"], p["phi"], p["a_omega"] * w_unit, cfg=_noise_cfg(p))
    deg = curve.degradation()
    rows = [
        [int(s), curve.w_ii, curve.noiseless_weighted[k], curve.noisy_weighted[k], deg[k],
         curve.noiseless_most_likely[k], curve.noisy_most_likely[k]]
        for k, s in enumerate(curve.s)
    ]
    cols = ["s", "w_ii", "var_noiseless", "var_noisy", "degradation", "var_noiseless_ml", "var_noisy_ml"]
    return [Table("dephasing_scan", cols, rows)]


def run_lindblad(p: dict) -> list[Table]:
    device = open_system.DeviceParams(**{k: p[k] for k in DEVICE})
    rates = open_system.LindbladRates.from_device(device, p["gamma_phi"]) if p["dissipation"] \
        else open_system.LindbladRates()
    timing = dephasing.ProtocolTiming(p["n_p"], p["omega_r"], p["t_e"])
    if p["initial"] == "thermal":
        initial = measurement.InitialState.thermal(device.n_ho)
    elif p["initial"] == "coherent":
        initial = measurement.InitialState.coherent(p["alpha0"])
    else:
        initial = measurement.InitialState.vacuum()
    run = open_system.protocol_with_dissipation(
        p["s"], device, rates, timing, initial, HilbertConfig(p["dim"]), n_traj=p["n_traj"], seed=p["seed"],
    )
    rows = [[0, run.initial_variance, 0.0]]
    rows += [[int(k), m, e] for k, m, e in zip(run.steps, run.mean_variance, run.stderr_variance)]
    return [Table("lindblad_run", ["step", "mean_var_I", "stderr_var_I"], rows)]


def run_derivation_checks(p: dict) -> list[Table]:
    report = analytic.derivation_checks(p["s"], p["phi"])
    rows = [[c.name, c.status, c.value, "" if c.tolerance is None else c.tolerance] for c in report.checks]
    return [Table("derivation_checks", ["check", "status", "value", "tolerance"], rows)]


RUNNERS: dict[str, Callable[[dict], list[Table]]] = {
    "fig1": run_fig1,
    "trajectories": run_trajectories,
    "fig2": run_fig2,
    "distribution": run_distribution,
    "fig3": run_fig3,
    "variance_scan": run_variance_scan,
    "fig4": run_fig4,
    "dephasing_scan": run_dephasing_scan,
    "lindblad_run": run_lindblad,
    "derivation_checks": run_derivation_checks,
}


def run(config: dict, stdout=None) -> int:
    """Validate ``config``, run it and write its tables. Returns the exit status."""
    try:
        resolved = validate(config)
        log.info("running %s", resolved["experiment"])
        tables = RUNNERS[resolved["experiment"]](resolved["parameters"])
        for path in write_tables(tables, resolved, stdout):
            log.info("wrote %s", path)
        if resolved["experiment"] == "derivation_checks":
            failed = [r for r in tables[0].rows if r[1] == "FAIL"]
            if failed:
                return _fail(EXIT_NUMERIC, "derivation", [f"{r[0]} failed" for r in failed])
        return 0
    except ConfigurationError as exc:
        return _fail(EXIT_VALIDATION, "validation", str(exc).split("\n"))
    except TruncationError as exc:
        return _fail(EXIT_TRUNCATION, "truncation", [str(exc)])
    except (QSqueezeError, ArithmeticError, ValueError) as exc:
        return _fail(EXIT_NUMERIC, "numeric", [f"{type(exc).__name__}: {exc}"])


def _fail(code: int, kind: str, messages: list[str]) -> int:
    sys.stderr.write(_canonical({"error": kind, "exit_code": code, "messages": messages}) + "\n")
    return code


# ---------------------------------------------------------------------- argv

FLAG_KEYS = ("phi", "s", "n_traj", "alpha0", "a_omega", "seed", "dim", "precision")


def _flag_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsqueeze", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"qsqueeze {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "run an experiment"), ("validate", "print the resolved config")):
        p = sub.add_parser(name, help=help_text)
        if name == "run":
            p.add_argument("experiment", nargs="?", choices=EXPERIMENTS)
        else:
            p.add_argument("source", nargs="?", help="config file or emitted table")
            p.add_argument("--experiment", choices=EXPERIMENTS)
        p.add_argument("--config", help="JSON config file (or an emitted table)")
        p.add_argument("--phi", type=float)
        p.add_argument("--s", type=int)
        p.add_argument("--n-traj", type=int, dest="n_traj")
        p.add_argument("--alpha0", type=float)
        p.add_argument("--a-omega", type=float, dest="a_omega")
        p.add_argument("--seed", type=int)
        p.add_argument("--dim", type=int)
        p.add_argument("--precision", type=_flag_value)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="any other parameter; VALUE is parsed as JSON when possible")
        p.add_argument("--out", help="output path; '-' or omitted writes to stdout")
        p.add_argument("--format", choices=FORMATS)
    return parser


def config_from_args(args) -> dict:
    source = getattr(args, "source", None) or args.config
    config = read_config_file(source) if source else {}
    config = copy.deepcopy(config)
    experiment = getattr(args, "experiment", None)
    if experiment:
        if config.get("experiment") not in (None, experiment):
            # a different experiment keeps none of the old parameters
            config = {"output": config.get("output", {})}
        config["experiment"] = experiment
    params = config.setdefault("parameters", {})
    for key in FLAG_KEYS:
        value = getattr(args, key)
        if value is not None:
            params[key] = value
    for item in args.set:
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        params[key.strip()] = _flag_value(value)
    output = config.setdefault("output", {})
    if args.out is not None:
        output["path"] = args.out
    if args.format is not None:
        output["format"] = args.format
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        config = config_from_args(args)
    except (ConfigurationError, OSError) as exc:
        return _fail(EXIT_VALIDATION, "validation", [str(exc)])
    if args.command == "validate":
        try:
            resolved = validate(config)
        except ConfigurationError as exc:
            return _fail(EXIT_VALIDATION, "validation", str(exc).split("\n"))
        sys.stdout.write(json.dumps(resolved, sort_keys=True, indent=2) + "\n")
        return 0
    if "experiment" not in config:
        return _fail(EXIT_VALIDATION, "validation", ["no experiment given"])
    return run(config)


if __name__ == "__main__":
    raise SystemExit(main())
