"""``critscore`` command line.

Subcommands: ``test``, ``interval``, ``region``, ``fit``, ``simulate`` and
``generate``. Usage and input errors exit with status 1, numerical failures
(singular information, rank-deficient designs, empty regions) with status 2.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings

import numpy as np

from . import __version__
from .analysis import METHODS, componentwise_table, parameter_names
from .core import ParameterPoint, modified_statistic
from .dataio import parse_long_csv, write_csv, write_long_csv
from .exceptions import (CritScoreError, DomainError, EmptyGroup, MissingColumn, NonNumericCell,
                         NonOrthogonalNuisanceWarning)
from .lookalike import FEV_FORMULA, fev_lookalike
from .models.lmm import LmmModel, lmm_mle, lmm_modified_statistic_lambda, lmm_ols, lmm_sigma_profile
from .regions import invert_region
from .sim import SimConfig, run

DEFAULT_GRID = ((0.0, 0.15, 50), (0.015, 0.03, 50))
DEFAULT_LEVELS = (0.8, 0.9, 0.95, 0.99)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _emit_json(payload: dict, command: str, out=None):
    doc = {"version": __version__, "command": command, **payload}
    text = json.dumps(_jsonable(doc), indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _write_meta(path, command: str, extra: dict):
    meta = {"version": __version__, "command": command, **extra}
    with open(f"{path}.meta.json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(_jsonable(meta), indent=2) + "\n")


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _parse_at(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--at expects name=v1,v2,..., got {item!r}")
        key, val = item.split("=", 1)
        key = key.strip()
        if key not in ("lambda", "psi", "sigma"):
            raise UsageError(f"--at name must be lambda, psi or sigma, got {key!r}")
        out[key] = _floats(val, f"--at {key}")
    return out


def _parse_grid(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"--grid expects lo:hi:steps, got {text!r}")
    try:
        lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"--grid expects lo:hi:steps, got {text!r}") from None
    if steps < 1 or (steps > 1 and not hi > lo):
        raise UsageError(f"--grid needs steps >= 1 and hi > lo, got {text!r}")
    return lo, hi, steps


def _load(args):
    if not args.data or not args.formula:
        raise UsageError("--data and --formula are required")
    return parse_long_csv(args.data, args.formula, args.group)


def _sigma_known(args):
    if args.sigma_known is None:
        return None
    if not args.sigma_known > 0:
        raise UsageError("--sigma-known must be positive")
    return float(args.sigma_known)


def cmd_test(args):
    data = _load(args)
    at = _parse_at(args.at)
    if "lambda" not in at:
        raise UsageError("test needs --at lambda=...")
    lam = at["lambda"]
    if len(lam) != data.d1:
        raise UsageError(f"--at lambda needs {data.d1} values")
    psi_source = "given" if "psi" in at else "ols"
    psi = np.asarray(at["psi"]) if "psi" in at else lmm_ols(data)
    if psi.size != data.p:
        raise UsageError(f"--at psi needs {data.p} values")
    sk = _sigma_known(args)
    if sk is None and "sigma" in at:
        sk = at["sigma"][0]
    if args.joint:
        if "psi" not in at:
            raise UsageError("--joint needs --at psi=...")
        if sk is not None:
            res = modified_statistic(LmmModel(sigma_known=sk), ParameterPoint(lam, psi), data,
                                     zero_tol=args.zero_tol)
        else:
            raise UsageError("--joint needs sigma via --sigma-known or --at sigma=...")
        sigma_source = "given"
    elif sk is not None:
        res = lmm_modified_statistic_lambda(lam, psi, data, sk)
        sigma_source = "given"
    else:
        sk = lmm_sigma_profile(lam, data, psi=psi)[0]
        res = lmm_modified_statistic_lambda(lam, psi, data, sk, sigma_nuisance=True)
        sigma_source = "profiled"
    payload = res.to_dict()
    payload.update({"lambda": lam, "psi": psi, "psi_source": psi_source, "sigma": sk,
                    "sigma_source": sigma_source, "joint": bool(args.joint)})
    _emit_json(payload, "test", args.out)
    return 0


def _fit(args, data):
    fit = lmm_mle(data, _sigma_known(args))
    if not fit.converged:
        print(f"warning: maximum likelihood fit did not reach the gradient tolerance "
              f"(projected gradient {fit.grad_norm:.3g})", file=sys.stderr)
    return fit


def _methods(text):
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise UsageError(f"--methods must be a comma list from {METHODS}")
    return methods


def _fit_payload(data, fit):
    names = parameter_names(data, not fit.sigma_known)
    return {"estimate": dict(zip(names, fit.theta.flat())), "loglik": fit.loglik,
            "converged": fit.converged, "sigma_known": fit.sigma_known, "n_groups": data.n,
            "n_obs": int(data.y.size)}


def cmd_interval(args):
    data = _load(args)
    fit = _fit(args, data)
    table = componentwise_table(data, fit, args.level, _methods(args.methods))
    rows = []
    for s in table:
        row = {"name": s.name, "estimate": s.estimate, "notes": s.notes}
        for m, iv in s.intervals.items():
            row[m] = None if iv is None else {"lo": iv.lo, "hi": iv.hi, "disconnected": iv.disconnected,
                                              "segments": [list(g) for g in iv.segments]}
        rows.append(row)
    _emit_json({"level": args.level, "fit": _fit_payload(data, fit), "intervals": rows}, "interval", args.out)
    return 0


def cmd_fit(args):
    data = _load(args)
    fit = _fit(args, data)
    table = componentwise_table(data, fit, args.level, _methods(args.methods))
    payload = {"level": args.level, **_fit_payload(data, fit),
               "table": [s.to_dict() for s in table]}
    _emit_json(payload, "fit", args.out)
    return 0


def cmd_region(args):
    data = _load(args)
    if args.grid:
        grids = [_parse_grid(g) for g in args.grid]
    elif data.d1 == 2:
        grids = list(DEFAULT_GRID)
    else:
        raise UsageError("--grid lo:hi:steps is required once per scale parameter")
    if len(grids) != data.d1:
        raise UsageError(f"need {data.d1} --grid options, got {len(grids)}")
    axes = [np.linspace(lo, hi, steps) for lo, hi, steps in grids]
    levels = tuple(_floats(args.levels, "--levels")) if args.levels else DEFAULT_LEVELS
    if any(not 0 < lv < 1 for lv in levels):
        raise UsageError("--levels must lie in (0, 1)")
    psi = lmm_ols(data)
    sk = _sigma_known(args)
    if sk is not None:
        model = LmmModel(sigma_known=sk)
        base = ParameterPoint(np.zeros(data.d1), psi)
    else:
        model = LmmModel()
        base = ParameterPoint(np.zeros(data.d1), psi, _fit(args, data).sigma)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonOrthogonalNuisanceWarning)
        grid = invert_region(model, data, range(data.d1), base, axes, levels)
    header = [f"lambda{j + 1}" for j in range(data.d1)] + ["statistic"]
    header += [f"in_{round(100 * lv):d}" for lv in grid.levels] + ["singular"]
    rows = []
    for coords, stat, flags in grid.rows():
        idx = tuple(int(np.searchsorted(a, c)) for a, c in zip(grid.axes, coords))
        rows.append(coords + [stat] + [int(f) for f in flags] + [int(grid.singular[idx])])
    if args.out:
        write_csv(args.out, header, rows)
        _write_meta(args.out, "region", {"formula": args.formula, "levels": grid.levels,
                                         "psi": psi, "sigma": base.sigma if sk is None else sk})
    else:
        write_csv(sys.stdout, header, rows)
    return 0


def cmd_simulate(args):
    if not args.config:
        raise UsageError("simulate needs --config <json>")
    try:
        cfg = SimConfig.from_json(args.config)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from None
    upd = cfg.to_dict()
    if args.seed is not None:
        upd["seed"] = args.seed
    if args.reps is not None:
        upd["reps"] = args.reps
    if args.mode is not None:
        upd["mode"] = args.mode
    if args.out:
        upd["output"] = args.out
    if args.raw:
        upd["raw_output"] = args.raw
    cfg = SimConfig.from_dict(upd)
    res, table = run(cfg, threads=args.threads)
    if not cfg.output:
        if table is not None:
            from .sim import QQ_HEADER
            write_csv(sys.stdout, QQ_HEADER, table)
        else:
            res.write(sys.stdout)
    else:
        _write_meta(cfg.output, "simulate", {"config": cfg.to_dict()})
    for note in res.notes:
        print(f"note: {note}", file=sys.stderr)
    return 0


def cmd_generate(args):
    if args.kind != "fev":
        raise UsageError(f"unknown generator {args.kind!r}")
    if args.n < 1:
        raise UsageError("--n must be positive")
    data = fev_lookalike(args.seed, args.n)
    if not args.out:
        raise UsageError("generate needs --out")
    write_long_csv(args.out, data, FEV_FORMULA, args.group)
    print(f"formula: {FEV_FORMULA}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="critscore", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"critscore {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def data_opts(sp):
        sp.add_argument("--data", help="long-format CSV")
        sp.add_argument("--formula", help="e.g. 'y ~ 1 + x | re(1) + re(x)'")
        sp.add_argument("--group", default="group", help="group identifier column (default: group)")
        sp.add_argument("--sigma-known", type=float, default=None, help="treat the error scale as known")
        sp.add_argument("--out", help="output path (default: stdout)")

    sp = sub.add_parser("test", help="modified score test of lambda (psi by OLS unless given)")
    data_opts(sp)
    sp.add_argument("--at", action="append", help="lambda=v1,v2 | psi=... | sigma=v (repeatable)")
    sp.add_argument("--joint", action="store_true", help="test (lambda, psi) jointly")
    sp.add_argument("--zero-tol", type=float, default=0.0)
    sp.set_defaults(func=cmd_test)

    sp = sub.add_parser("interval", help="componentwise confidence intervals")
    data_opts(sp)
    sp.add_argument("--level", type=float, default=0.95)
    sp.add_argument("--methods", default="score", help="comma list from score,wald,lrt")
    sp.set_defaults(func=cmd_interval)

    sp = sub.add_parser("region", help="joint region for lambda on a grid (long CSV)")
    data_opts(sp)
    sp.add_argument("--grid", action="append", help="lo:hi:steps, once per scale parameter")
    sp.add_argument("--levels", help="comma list of levels (default 0.8,0.9,0.95,0.99)")
    sp.set_defaults(func=cmd_region)

    sp = sub.add_parser("fit", help="ML fit with score, Wald and LRT intervals")
    data_opts(sp)
    sp.add_argument("--level", type=float, default=0.95)
    sp.add_argument("--methods", default="score,wald,lrt")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("simulate", help="Monte Carlo coverage / power / QQ study")
    sp.add_argument("--config", help="JSON simulation config")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--reps", type=int)
    sp.add_argument("--mode", choices=("coverage", "power", "qq"))
    sp.add_argument("--threads", type=int, help="worker processes (default: CRITSCORE_THREADS or 1)")
    sp.add_argument("--out", help="summary CSV path (default: stdout)")
    sp.add_argument("--raw", help="per-replication CSV path")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("generate", help="write a synthetic longitudinal dataset")
    sp.add_argument("--kind", default="fev", choices=("fev",))
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--n", type=int, default=300)
    sp.add_argument("--group", default="group")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_generate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help(sys.stderr)
        return 1
    if hasattr(args, "level") and not 0 < args.level < 1:
        print("critscore: error: --level must lie in (0, 1)", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (UsageError, MissingColumn, NonNumericCell, EmptyGroup, DomainError, FileNotFoundError,
            IsADirectoryError, PermissionError) as exc:
        print(f"critscore: error: {exc}", file=sys.stderr)
        return 1
    except (CritScoreError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"critscore: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
