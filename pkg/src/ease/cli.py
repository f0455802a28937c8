"""Command-line entry point: ``ease fit | predict | simulate | diagnose``.

Settings come from built-in defaults, then an optional ``--config`` file
(flat ``key = value`` lines, or a JSON report whose ``config`` block is
reused), then command-line flags. Every report embeds the resolved
settings; ``out`` and ``jobs`` are left out because they do not affect
results.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. Failures print one line ``ease: error code=<c> kind=<type>: <reason>``
to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings

import numpy as np

from . import __version__
from .data import SemiSupervisedDataset, load_covariates, load_dataset
from .dimred import DimredPolicy, SliceScheme
from .errors import ConfigError, DataError, EaseError, NumericalError
from .kernels import KernelSpec
from .smoothing import SmootherPolicy

SCHEMA = 1
FIT_METHODS = ("ols", "np", "snp", "ease")
DEFAULT_ROSTER = "ols,snp-ks-sir,ease-ks-sir,snp-km,ease-km"


def _opt_float(v):
    return None if v in (None, "", "none", "None") else float(v)


def _opt_str(v):
    return None if v in (None, "", "none", "None") else str(v)


def _int(v):
    f = float(v)
    if f != int(f):
        raise ValueError(f"{v!r} is not an integer")
    return int(f)


# key -> (converter, default, commands)
KEYS = {
    "labeled": (_opt_str, None, {"fit", "predict", "diagnose"}),
    "unlabeled": (_opt_str, None, {"fit", "predict", "diagnose"}),
    "outcome": (str, "y", {"fit", "predict", "diagnose"}),
    "method": (str, None, {"fit", "predict", "simulate"}),
    "smoother": (str, "ks", {"fit", "predict"}),
    "dimred": (str, "sir", {"fit", "predict"}),
    "r": (_int, 2, {"fit", "predict", "simulate"}),
    "slices": (_int, 100, {"fit", "predict", "simulate"}),
    "folds": (_int, 5, {"fit", "predict", "simulate"}),
    "kernel_order": (_int, 2, {"fit", "predict", "simulate"}),
    "bandwidth": (_opt_float, None, {"fit", "predict", "simulate"}),
    "level": (float, 0.95, {"fit", "predict", "simulate"}),
    "seed": (_int, None, {"fit", "predict", "simulate"}),
    "reps": (_int, 500, {"simulate"}),
    "model": (str, "linear", {"simulate"}),
    "p": (_int, 10, {"simulate"}),
    "setting": (_int, 1, {"simulate"}),
    "nl_param": (_opt_float, None, {"simulate"}),
    "n": (_int, 500, {"simulate"}),
    "big_n": (_int, 10000, {"simulate"}),
    "mc_size": (_int, 2_000_000, {"simulate"}),
    "jobs": (_int, None, {"simulate"}),
    "out": (_opt_str, None, {"fit", "predict", "simulate", "diagnose"}),
    "format": (str, None, {"fit", "predict", "simulate", "diagnose"}),
    "log1p_cols": (str, "", {"diagnose"}),
}
NOT_ECHOED = {"out", "jobs"}
DEFAULT_FORMAT = {"fit": "json", "predict": "csv", "simulate": "csv", "diagnose": "csv"}
DEFAULT_METHOD = {"fit": "ols,snp,ease", "predict": "ols,snp,ease", "simulate": DEFAULT_ROSTER}


class CliError(Exception):
    def __init__(self, code, kind, reason):
        super().__init__(reason)
        self.code, self.kind, self.reason = code, kind, reason


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ease", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "fit": "estimate the least-squares coefficients with OLS, SNP and EASE",
        "predict": "fit, then predict at the unlabeled rows",
        "simulate": "run a Monte-Carlo study and write summary tables",
        "diagnose": "compare labeled and unlabeled covariates (MCAR checks)",
    }
    for cmd, text in helps.items():
        p = sub.add_parser(cmd, help=text, description=text)
        p.add_argument("--config", help="flat key=value file, or a previous JSON report")
        for key, (_, default, cmds) in KEYS.items():
            if cmd in cmds:
                p.add_argument("--" + key.replace("_", "-"), dest=key, default=None,
                               help=f"default: {DEFAULT_FORMAT[cmd] if key == 'format' else DEFAULT_METHOD.get(cmd) if key == 'method' else default}")
    return parser


def read_config_file(path) -> dict:
    """Parse a key=value file (``#`` comments) or a JSON report's ``config`` block."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        values = doc.get("config", doc)
        return {k.replace("-", "_"): v for k, v in values.items()}
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then config file, then flags; all values converted and validated."""
    raw = {k: d for k, (_, d, cmds) in KEYS.items() if command in cmds}
    raw["format"] = DEFAULT_FORMAT[command]
    if "method" in raw:
        raw["method"] = DEFAULT_METHOD[command]
    if args.config:
        for key, value in read_config_file(args.config).items():
            if key not in raw:
                raise ConfigError(f"unknown config key {key!r} for command {command}")
            raw[key] = value
    for key in raw:
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    cfg = {}
    for key, value in raw.items():
        conv = KEYS[key][0]
        try:
            cfg[key] = None if value is None else conv(value)
        except (TypeError, ValueError):
            raise ConfigError(f"invalid value {value!r} for {key}")
    if "seed" in cfg and cfg["seed"] is None:
        env = os.environ.get("EASE_SEED")
        try:
            cfg["seed"] = int(env) if env not in (None, "") else 0
        except ValueError:
            raise ConfigError(f"EASE_SEED={env!r} is not an integer")
    _validate(command, cfg)
    return cfg


def _validate(command, cfg):
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    fmt = cfg["format"]
    need(fmt in ("json", "csv"), f"format must be json or csv, got {fmt!r}")
    if command in ("fit", "predict", "diagnose"):
        need(cfg["labeled"] is not None, "--labeled is required")
    if command in ("fit", "predict"):
        methods = cfg["method"].split(",")
        for m in methods:
            need(m in FIT_METHODS, f"unknown method {m!r}; choose from {', '.join(FIT_METHODS)}")
        need(cfg["smoother"] in ("ks", "km"), f"smoother must be ks or km, got {cfg['smoother']!r}")
        need(cfg["dimred"] in ("identity", "pca", "sir", "ss-sir"),
             f"dimred must be identity, pca, sir or ss-sir, got {cfg['dimred']!r}")
    if command in ("fit", "predict", "simulate"):
        need(cfg["r"] >= 1, "r must be at least 1")
        need(cfg["slices"] >= 2, "slices must be at least 2")
        need(cfg["folds"] >= 1, "folds must be at least 1")
        need(cfg["kernel_order"] in (2, 4, 6), "kernel-order must be 2, 4 or 6")
        need(cfg["bandwidth"] is None or cfg["bandwidth"] > 0, "bandwidth must be positive")
        need(0 < cfg["level"] < 1, "level must lie in (0, 1)")
    if command == "simulate":
        need(cfg["reps"] >= 2, "reps must be at least 2")
        need(cfg["n"] >= 1 and cfg["big_n"] >= 1, "n and big-n must be positive")
        need(cfg["jobs"] is None or cfg["jobs"] >= 1, "jobs must be at least 1")
        need(cfg["mc_size"] >= 10000, "mc-size must be at least 10000")
        need(cfg["folds"] >= 2, "simulation inference needs folds >= 2")


def _kernel(cfg) -> KernelSpec:
    q = cfg["kernel_order"]
    return KernelSpec("gaussian" if q == 2 else "gaussian-higher-order", q)


def _policies(cfg):
    smoother = SmootherPolicy(cfg["smoother"], _kernel(cfg), cfg["bandwidth"])
    dimred = DimredPolicy(cfg["dimred"], cfg["r"], SliceScheme("equal-width", cfg["slices"]))
    return smoother, dimred


def _load(cfg) -> SemiSupervisedDataset:
    try:
        ds = load_dataset(cfg["labeled"], cfg["outcome"])
        if cfg.get("unlabeled"):
            extra = load_covariates(cfg["unlabeled"], list(ds.columns))
            ds = SemiSupervisedDataset(ds.labeled_y, ds.labeled_x, np.vstack([ds.unlabeled_x, extra]), ds.columns)
    except FileNotFoundError as exc:
        raise DataError(f"cannot read {exc.filename}: no such file")
    except OSError as exc:
        raise DataError(f"cannot read input: {exc}")
    return ds


def _clean(v):
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if np.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def _dumps(doc) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"


def _echo(cfg) -> dict:
    return {k: v for k, v in cfg.items() if k not in NOT_ECHOED}


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _fit_all(cfg, ds):
    """Run the requested methods; returns (estimates dict, ease fit or None)."""
    from .estimators import fit_np, fit_ols
    from .inference import confidence_report, estimate_influences, fit_ease

    methods = cfg["method"].split(",")
    gamma = "unlabeled" if ds.big_n > ds.p else "labeled"
    results, fit = {}, None
    if "snp" in methods or "ease" in methods:
        smoother, dimred = _policies(cfg)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fit = fit_ease(ds, smoother, dimred, cfg["folds"], cfg["seed"], cfg["level"], gamma)
        reports = fit.reports
        estimates = {"ols": fit.ols, "snp": fit.snp, "ease": fit.ease}
    else:
        ols = fit_ols(ds)
        reports = {"ols": confidence_report(ols, estimate_influences(ds, None, ols, gamma), 0.0, cfg["level"])}
        estimates = {"ols": ols}
    for m in methods:
        if m == "np":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                est = fit_np(ds)
            results["np"] = {"theta": est.theta, "se": None, "ci": None, "provenance": est.provenance}
            continue
        rep = reports[m]
        results[m] = {"theta": estimates[m].theta, "se": rep.se, "ci": rep.ci,
                      "provenance": estimates[m].provenance}
    return results, fit, reports


def cmd_fit(cfg) -> int:
    ds = _load(cfg)
    results, fit, reports = _fit_all(cfg, ds)
    var_ols = float(np.sum(reports["ols"].se ** 2))
    re = {m: var_ols / float(np.sum(reports[m].se ** 2)) for m in results if m in ("ols", "snp", "ease")}
    doc = {
        "schema": SCHEMA,
        "version": __version__,
        "command": "fit",
        "config": _echo(cfg),
        "seed": cfg["seed"],
        "data": {"n": ds.n, "big_n": ds.big_n, "p": ds.p, "columns": list(ds.columns)},
        "coefficients": ["(Intercept)", *ds.columns],
        "estimates": results,
        "relative_efficiency": re,
    }
    if fit is not None:
        doc["delta"] = fit.delta
        doc["epsilon_n"] = fit.reports["ease"].epsilon_n
        doc["z"] = fit.reports["ease"].z
        doc["folds"] = fit.model.folds.membership
    if cfg["format"] == "json":
        _emit(_dumps(doc), cfg["out"])
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "coefficient", "theta", "se", "lower", "upper"])
        for m, r in results.items():
            for j, name in enumerate(doc["coefficients"]):
                se = "NA" if r["se"] is None else repr(float(r["se"][j]))
                lo = "NA" if r["ci"] is None else repr(float(r["ci"][j][0]))
                hi = "NA" if r["ci"] is None else repr(float(r["ci"][j][1]))
                w.writerow([m, name, repr(float(r["theta"][j])), se, lo, hi])
        _emit(buf.getvalue(), cfg["out"])
    return 0


def cmd_predict(cfg) -> int:
    ds = _load(cfg)
    if ds.big_n == 0:
        raise DataError("no unlabeled rows to predict")
    results, fit, _ = _fit_all(cfg, ds)
    x = ds.unlabeled_x
    cols = {}
    for m, r in results.items():
        from .linalg import augment

        cols[f"{m}_linear"] = augment(x) @ np.asarray(r["theta"])
    if fit is not None:
        cols["mu"] = fit.model(x)
        cols["m"] = fit.model.smooth(x)
    if cfg["format"] == "json":
        doc = {"schema": SCHEMA, "version": __version__, "command": "predict", "config": _echo(cfg),
               "seed": cfg["seed"], "predictions": {k: v for k, v in cols.items()}}
        _emit(_dumps(doc), cfg["out"])
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", *cols])
        for i in range(x.shape[0]):
            w.writerow([i + 1, *(repr(float(c[i])) for c in cols.values())])
        _emit(buf.getvalue(), cfg["out"])
    return 0


def _groups(cfg):
    from .simulation import default_groups

    groups = default_groups(cfg["r"], cfg["slices"])
    ks = SmootherPolicy("ks", _kernel(cfg), cfg["bandwidth"])
    return {g: (ks if sm.method == "ks" else sm, dr) for g, (sm, dr) in groups.items()}


def cmd_simulate(cfg) -> int:
    from .simulation import DgpSpec, monte_carlo

    spec = DgpSpec(cfg["model"], cfg["p"], cfg["setting"], cfg["nl_param"])
    roster = tuple(cfg["method"].split(","))
    jobs = cfg["jobs"] or os.cpu_count() or 1
    summary = monte_carlo(spec, roster, cfg["n"], cfg["big_n"], cfg["folds"], cfg["reps"], cfg["seed"],
                          jobs, _groups(cfg), cfg["level"], cfg["mc_size"])
    doc = {"schema": SCHEMA, "version": __version__, "command": "simulate", "config": _echo(cfg),
           "seed": cfg["seed"], "summary": summary.to_dict()}
    seeds = "rep,seed\n" + "".join(f"{i},{s}\n" for i, s in enumerate(summary.seeds))
    out = cfg["out"]
    if out is None:
        _emit(_dumps(doc) if cfg["format"] == "json" else summary.table1_csv() + "\n" + summary.table2_csv(), None)
        return 0
    os.makedirs(out, exist_ok=True)
    _emit(_dumps(doc), os.path.join(out, "summary.json"))
    if cfg["format"] == "csv":
        _emit(summary.table1_csv(), os.path.join(out, "table1.csv"))
        _emit(summary.table2_csv(), os.path.join(out, "table2.csv"))
        _emit(seeds, os.path.join(out, "seeds.csv"))
    return 0


def cmd_diagnose(cfg) -> int:
    from .diagnostics import mcar_tests

    ds = _load(cfg)
    cols = [c for c in cfg["log1p_cols"].split(",") if c]
    report = mcar_tests(ds, cols)
    if cfg["format"] == "json":
        doc = {"schema": SCHEMA, "version": __version__, "command": "diagnose", "config": _echo(cfg),
               "report": report.to_dict()}
        _emit(_dumps(doc), cfg["out"])
    else:
        _emit(report.to_csv(), cfg["out"])
    return 0


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "simulate": cmd_simulate, "diagnose": cmd_diagnose}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, DataError):
        return 3
    if isinstance(exc, (NumericalError, np.linalg.LinAlgError)):
        return 4
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
        return COMMANDS[args.command](cfg)
    except (EaseError, np.linalg.LinAlgError) as exc:
        code = exit_code(exc)
        reason = " ".join(str(exc).split())
        print(f"ease: error code={code} kind={type(exc).__name__}: {reason}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
