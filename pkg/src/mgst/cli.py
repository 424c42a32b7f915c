"""Command line front end.

Every subcommand reads a JSON design document, validates it against
``CONFIG_SCHEMA`` (unknown keys are rejected) and writes a JSON report that
embeds the fully resolved configuration. Tables are also written as CSV when
``--out`` is given. Exit status is 0 on success, 1 when the computation is
infeasible and 2 for configuration errors.

Example::

    python -m mgst design configs/gst_linear.json --engine simpson --gridsize 6 --out out/t2
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import delta as delta_mod
from . import montecarlo, samplesize, simpson
from .design import Boundaries, DesignSpec, SpendingFunction, stage_targets
from .errors import ConfigurationError, MGSTError
from .statistic import LinearStatistic, make_statistic

ENGINES = ("simpson", "delta", "monte-carlo")
SIG_DIGITS = 6

_vector = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_spending = {
    "type": "object",
    "properties": {"family": {"enum": ["power"]}, "exponent": {"type": "number"}},
    "additionalProperties": False,
}
_bounds = {
    "type": "object",
    "properties": {
        "a": {"type": "array", "items": {"type": ["number", "null"]}},
        "b": {"type": "array", "items": {"type": ["number", "null"]}},
        "realized_psi": {"type": "array", "items": {"type": ["number", "null"]}},
        "realized_xi": {"type": "array", "items": {"type": ["number", "null"]}},
    },
    "required": ["a", "b"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "MGST design document",
    "type": "object",
    "properties": {
        "K": {"type": "integer"},
        "alpha": {"type": "number"},
        "beta": {"type": "number"},
        "theta0": _vector,
        "thetaA": _vector,
        "nuisance": {"type": "array", "items": _vector, "minItems": 1},
        "statistic": {
            "type": "object",
            "properties": {"name": {"enum": ["linear", "signed_product"]}, "weights": _vector},
            "required": ["name"],
            "additionalProperties": False,
        },
        "spending": {
            "type": "object",
            "properties": {"type1": _spending, "type2": _spending},
            "additionalProperties": False,
        },
        "schedule": {"oneOf": [{"const": "equal"}, _vector]},
        "n_schedule": _vector,
        "engine": {"enum": list(ENGINES)},
        "gridsize": {"type": "integer", "minimum": 1},
        "replicates": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "quantile": {"enum": list(montecarlo.QUANTILE_MODES)},
        "sizing": {
            "type": "object",
            "properties": {
                "gridsize": {"type": "integer", "minimum": 1},
                "delta_gridsize": {"type": "integer", "minimum": 1},
                "engine": {"enum": ["simpson", "delta"]},
            },
            "additionalProperties": False,
        },
        "sensitivity": {
            "type": "object",
            "properties": {
                "rho_design": _vector,
                "rho_true": _vector,
                "variance": {"type": "number"},
            },
            "additionalProperties": False,
        },
        "boundaries": _bounds,
    },
    "required": ["K", "alpha", "beta", "theta0", "thetaA", "nuisance", "statistic"],
    "additionalProperties": False,
}

DEFAULTS = {
    "spending": {"type1": {"family": "power", "exponent": 2.0}, "type2": {"family": "power", "exponent": 2.0}},
    "schedule": "equal",
    "engine": "simpson",
    "gridsize": 6,
    "replicates": 1_000_000,
    "seed": 20240101,
    "quantile": "conditional",
    "sizing": {"gridsize": 16, "delta_gridsize": 32, "engine": "simpson"},
    "sensitivity": {"rho_design": [-0.5, -0.25, 0.0, 0.25, 0.5], "rho_true": None, "variance": 40.0},
}


# ---------------------------------------------------------------------------
# configuration


def _merge(defaults: dict, given: dict) -> dict:
    out = dict(defaults)
    for key, val in given.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    return validate_config(raw)


def validate_config(raw: dict) -> dict:
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"config error at {where}: {exc.message}") from exc
    return _merge(DEFAULTS, raw)


def apply_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    cfg = dict(cfg)
    for key, attr in (("engine", "engine"), ("gridsize", "gridsize"), ("replicates", "replicates"),
                      ("seed", "seed"), ("quantile", "quantile")):
        val = getattr(args, attr, None)
        if val is not None:
            cfg[key] = val
    return cfg


def build_spec(cfg: dict) -> DesignSpec:
    sp = cfg["spending"]
    return DesignSpec(
        K=cfg["K"],
        alpha=cfg["alpha"],
        beta=cfg["beta"],
        theta0=cfg["theta0"],
        thetaA=cfg["thetaA"],
        nuisance=cfg["nuisance"],
        statistic=make_statistic(cfg["statistic"]),
        spending1=SpendingFunction(**sp["type1"]),
        spending2=SpendingFunction(**sp["type2"]),
        schedule=cfg["schedule"],
    )


def boundaries_from_json(d: dict) -> Boundaries:
    """Inverse of ``boundaries_to_json``; null stands for an infinite constant."""
    def conv(vals, fill):
        return [fill if v is None else v for v in vals]

    K = len(d["a"])
    return Boundaries(
        a=conv(d["a"], -np.inf),
        b=conv(d["b"], np.inf),
        realized_psi=conv(d.get("realized_psi", [None] * K), np.nan),
        realized_xi=conv(d.get("realized_xi", [None] * K), np.nan),
    )


def _num(x):
    """JSON-safe number with SIG_DIGITS significant digits (infinities and NaN become null)."""
    x = float(x)
    if not np.isfinite(x):
        return None
    return float(f"{x:.{SIG_DIGITS}g}")


def boundaries_to_json(b: Boundaries) -> dict:
    return {key: [_num(v) for v in val] for key, val in b.to_dict().items()}


# ---------------------------------------------------------------------------
# engine dispatch


def resolve_schedule(spec: DesignSpec, cfg: dict) -> tuple[np.ndarray, dict | None]:
    """The configured sample sizes, or the sized schedule when none is given."""
    if "n_schedule" in cfg:
        n = np.asarray(cfg["n_schedule"], dtype=float)
        if n.size != spec.K:
            raise ConfigurationError("n_schedule must have K entries")
        return n, None
    sz = cfg["sizing"]
    result = samplesize.max_information(spec, sz["gridsize"], sz["delta_gridsize"], sz["engine"])
    return np.asarray(result.n_schedule, dtype=float), result.to_dict()


def design_targets(spec: DesignSpec, n_schedule) -> object:
    levels = spec.information_levels(n_schedule)
    i_max = levels[-1] if isinstance(spec.schedule, str) else float(spec.schedule[-1])
    return stage_targets(spec, i_max, levels)


def solve(spec: DesignSpec, cfg: dict, targets, n_schedule) -> Boundaries:
    engine = cfg["engine"]
    if engine == "simpson":
        return simpson.solve_boundaries(spec, targets, n_schedule, cfg["gridsize"])
    if engine == "delta":
        return delta_mod.solve_boundaries_delta(spec, targets, n_schedule, cfg["gridsize"])
    return montecarlo.solve_boundaries_mc(
        spec, targets, n_schedule, cfg["replicates"], cfg["seed"], cfg["quantile"]
    )


def verify(spec: DesignSpec, cfg: dict, b: Boundaries, n_schedule, workers: int) -> tuple[str, dict]:
    """Independent check of the realised errors.

    Linear statistics are checked exactly on the univariate scale at r=128;
    other statistics by Monte Carlo with the configured replicates and seed.
    """
    if isinstance(spec.statistic, LinearStatistic):
        psi, xi = delta_mod.evaluate_boundaries_delta(spec, b, n_schedule, 128)
        return "delta r=128", {"check_psi": psi, "check_xi": xi}
    N, seed = cfg["replicates"], cfg["seed"]
    p0 = montecarlo.estimate_probabilities(spec, b, spec.theta0, N, seed, n_schedule, tag=2, workers=workers)
    pA = montecarlo.estimate_probabilities(spec, b, spec.thetaA, N, seed, n_schedule, tag=3, workers=workers)
    return f"monte-carlo N={N} seed={seed}", {
        "check_psi": p0.reject,
        "check_psi_se": p0.reject_se,
        "check_xi": pA.accept,
        "check_xi_se": pA.accept_se,
    }


# ---------------------------------------------------------------------------
# commands


def _table(columns: dict) -> list[dict]:
    keys = list(columns)
    n = len(columns[keys[0]])
    return [{k: (int(columns[k][i]) if k == "k" else _num(columns[k][i])) for k in keys} for i in range(n)]


def cmd_design(cfg: dict, args) -> dict:
    spec = build_spec(cfg)
    n, sizing = resolve_schedule(spec, cfg)
    targets = design_targets(spec, n)
    b = solve(spec, cfg, targets, n)
    K = b.K
    cols = {
        "k": np.arange(1, K + 1),
        "a": b.a,
        "b": b.b,
        "target_psi": targets.psi,
        "target_xi": targets.xi,
        "realized_psi": b.realized_psi,
        "realized_xi": b.realized_xi,
    }
    report = {"command": "design", "engine": cfg["engine"], "n_schedule": n.tolist()}
    if getattr(args, "verify", False):
        label, extra = verify(spec, cfg, b, n[:K], args.workers)
        cols.update(extra)
        report["verification"] = label
    if cfg["engine"] == "delta" and not isinstance(spec.statistic, LinearStatistic):
        report["approximation_warning"] = (
            "first-order Delta approximation of a non-linear statistic: "
            "boundary constants and realised errors are biased; verify with --verify"
        )
    if sizing is not None:
        report["sizing"] = {k: (v if isinstance(v, list) else _num(v)) for k, v in sizing.items()}
    report["boundaries"] = boundaries_to_json(b)
    report["table"] = _table(cols)
    return report


def cmd_samplesize(cfg: dict, args) -> dict:
    spec = build_spec(cfg)
    sz = cfg["sizing"]
    res = samplesize.max_information(spec, sz["gridsize"], sz["delta_gridsize"], sz["engine"])
    rows = [{"k": k + 1, "n": int(n)} for k, n in enumerate(res.n_schedule)]
    return {
        "command": "samplesize",
        "result": {k: (v if isinstance(v, list) or isinstance(v, int) else _num(v)) for k, v in res.to_dict().items()},
        "table": rows,
    }


def cmd_simulate(cfg: dict, args) -> dict:
    spec = build_spec(cfg)
    if args.boundaries:
        with open(args.boundaries) as fh:
            doc = json.load(fh)
        bdict = doc.get("boundaries", doc)
        if "n_schedule" not in cfg and "n_schedule" in doc:
            cfg = dict(cfg, n_schedule=doc["n_schedule"])
    elif "boundaries" in cfg:
        bdict = cfg["boundaries"]
    else:
        raise ConfigurationError("simulate needs boundaries inline or via --boundaries")
    if not isinstance(bdict, dict):
        raise ConfigurationError("boundaries must be a JSON object")
    jsonschema.validate(bdict, _bounds)
    b = boundaries_from_json(bdict)
    if b.K != spec.K:
        raise ConfigurationError(f"boundaries have {b.K} analyses but the design has K = {spec.K}")
    if "n_schedule" not in cfg:
        raise ConfigurationError("simulate needs n_schedule")
    n = np.asarray(cfg["n_schedule"], dtype=float)
    if n.size != spec.K:
        raise ConfigurationError("n_schedule must have K entries")
    targets = design_targets(spec, n)
    N, seed = cfg["replicates"], cfg["seed"]
    p0 = montecarlo.estimate_probabilities(spec, b, spec.theta0, N, seed, n, tag=0, workers=args.workers)
    pA = montecarlo.estimate_probabilities(spec, b, spec.thetaA, N, seed, n, tag=1, workers=args.workers)
    # the final acceptance probability is not a spending target; compare it to the design's claim
    ref_xi = targets.xi.copy()
    ref_xi[-1] = b.realized_xi[-1]
    K = b.K

    def flags(est, ref):
        se = np.sqrt(np.maximum(ref * (1 - ref), est * (1 - est)) / N)
        return np.where(np.isnan(ref), np.nan, (np.abs(est - ref) <= 4 * se + 1e-15).astype(float))

    cols = {
        "k": np.arange(1, K + 1),
        "psi_hat": p0.reject,
        "psi_se": p0.reject_se,
        "target_psi": targets.psi,
        "psi_pass": flags(p0.reject, targets.psi),
        "xi_hat": pA.accept,
        "xi_se": pA.accept_se,
        "target_xi": ref_xi,
        "xi_pass": flags(pA.accept, ref_xi),
    }
    total_psi = float(p0.reject.sum())
    total_se = np.sqrt(total_psi * (1 - total_psi) / N)
    passed = bool(np.nansum(cols["psi_pass"] == 0) == 0 and np.nansum(cols["xi_pass"] == 0) == 0)
    return {
        "command": "simulate",
        "n_schedule": n.tolist(),
        "boundaries": boundaries_to_json(b),
        "total_psi": _num(total_psi),
        "total_psi_se": _num(total_se),
        "total_xi": _num(pA.accept.sum()),
        "pass": passed,
        "table": [
            {k: (bool(v) if k.endswith("_pass") and v is not None else v) for k, v in row.items()}
            for row in _table(cols)
        ],
    }


def cmd_sensitivity(cfg: dict, args) -> dict:
    spec = build_spec(cfg)
    if spec.p != 2:
        raise ConfigurationError("the correlation sweep needs a two-endpoint design")
    sens = cfg["sensitivity"]
    if sens.get("rho_true") is None or args.rho_step is not None:
        lo = -0.9 if args.rho_min is None else args.rho_min
        hi = 0.9 if args.rho_max is None else args.rho_max
        step = 0.1 if args.rho_step is None else args.rho_step
        rho_true = np.round(np.arange(lo, hi + step / 2, step), 10).tolist()
    else:
        rho_true = sens["rho_true"]
    sz = cfg["sizing"]
    engine = cfg["engine"] if cfg["engine"] != "monte-carlo" else "simpson"
    rows = samplesize.sensitivity_sweep(
        spec,
        sens["rho_design"],
        rho_true,
        sens["variance"],
        cfg["gridsize"],
        engine,
        sz["gridsize"],
        sz["delta_gridsize"],
        workers=args.workers,
    )
    cfg["sensitivity"] = dict(sens, rho_true=rho_true)
    return {"command": "sensitivity", "engine": engine,
            "table": [{k: (_num(v) if isinstance(v, float) else v) for k, v in row.items()} for row in rows]}


COMMANDS = {
    "design": cmd_design,
    "samplesize": cmd_samplesize,
    "simulate": cmd_simulate,
    "sensitivity": cmd_sensitivity,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mgst", description="Multivariate group sequential test designs.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="JSON design document")
    common.add_argument("--engine", choices=ENGINES, default=None)
    common.add_argument("--gridsize", "-r", type=int, default=None, help="grid size r of the Simpson rule")
    common.add_argument("--replicates", "-N", type=int, default=None, help="Monte Carlo replicates")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--quantile", choices=montecarlo.QUANTILE_MODES, default=None,
                        help="Monte Carlo quantile convention")
    common.add_argument("--workers", type=int, default=1, help="worker processes for Monte Carlo and sweeps")
    common.add_argument("--out", default=None, help="output prefix; writes PREFIX.json and PREFIX.csv")
    common.add_argument("--verify", action="store_true", help="add cross-engine check columns")

    sub.add_parser("design", parents=[common], help="boundary constants for a design")
    sub.add_parser("samplesize", parents=[common], help="fixed and maximum information, integer schedule")
    sim = sub.add_parser("simulate", parents=[common], help="Monte Carlo check of given boundaries")
    sim.add_argument("--boundaries", default=None, help="a design report or a bare boundaries object")
    sens = sub.add_parser("sensitivity", parents=[common], help="power under a misspecified correlation")
    sens.add_argument("--rho-min", type=float, default=None)
    sens.add_argument("--rho-max", type=float, default=None)
    sens.add_argument("--rho-step", type=float, default=None)
    return parser


def write_outputs(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=2)
    if out is None:
        print(text)
        return
    prefix = Path(out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    prefix.with_suffix(".json").write_text(text + "\n")
    rows = report.get("table") or []
    if rows:
        with open(prefix.with_suffix(".csv"), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    print(text)


def _error(kind: str, exc: Exception, code: int) -> int:
    print(json.dumps({"error": {"type": kind, "message": str(exc)}}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.workers < 1:
        parser.error("--workers must be at least 1")
    try:
        cfg = apply_overrides(load_config(args.config), args)
        report = COMMANDS[args.command](cfg, args)
    except (ConfigurationError, jsonschema.ValidationError) as exc:
        return _error(type(exc).__name__, exc, 2)
    except MGSTError as exc:
        return _error(type(exc).__name__, exc, 1)
    report["config"] = cfg
    write_outputs(report, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
