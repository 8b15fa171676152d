"""``mflab`` command-line driver.

Exit codes: 0 success, 1 an experiment verdict is FAIL or INAPPLICABLE,
2 usage error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .defaults import DEFAULTS
from .measures import write_cloud_csv
from .model import ZOO, ModelError, coerce_point, model_from_dict, validate_model
from .ode import FlowConfig, IntegrationError, detect_limit_set, flow
from .report import canonical_json, emit_report, to_jsonable
from .sim import RngSpec, round_to_grid, simulate, stationary_sample
from .verify import EXPERIMENTS, ExperimentPlan

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class CliConfig:
    command: str
    experiment: str | None = None
    model: dict = field(default_factory=dict)
    N: tuple = ()
    t: tuple = ()
    seed: int = 0
    y0: tuple | None = None
    out: str | None = None
    options: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# parsing


def _ints(text: str) -> tuple:
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError(f"N must be positive, got {text!r}")
    return vals


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _nonneg_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text!r}")
    return v


def _params(text: str) -> dict:
    out = {}
    for item in filter(None, text.split(",")):
        key, sep, val = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected key=value, got {item!r}")
        try:
            out[key.strip()] = float(val)
        except ValueError:
            raise argparse.ArgumentTypeError(f"parameter {key!r} is not a number: {val!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mflab", description="Mean-field stationary-regime verification lab.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def model_args(p):
        p.add_argument("--model", required=True, help="zoo name or path to a model JSON file")
        p.add_argument("--params", type=_params, default={}, help="zoo parameters, e.g. beta=2,gamma=1")

    def seed_arg(p):
        p.add_argument("--seed", type=int, default=None, help="RNG seed (fallback: $MFLAB_SEED, then 0)")

    sub.add_parser("zoo-list", help="list zoo models and their parameters")

    p = sub.add_parser("validate", help="check a model's rates and kernels")
    model_args(p)
    p.add_argument("--samples", type=_positive_int, default=1000)
    seed_arg(p)

    p = sub.add_parser("simulate", help="one path of the N-object process")
    model_args(p)
    p.add_argument("--N", type=_positive_int, required=True)
    p.add_argument("--t", type=_nonneg_float, required=True, help="horizon (steps for maps)")
    p.add_argument("--y0", type=_floats)
    p.add_argument("--out", help="write the final state as JSON here")
    seed_arg(p)

    p = sub.add_parser("flow", help="evaluate the mean-field flow or map")
    model_args(p)
    p.add_argument("--y0", type=_floats, required=True)
    p.add_argument("--t", type=_nonneg_float, required=True)
    p.add_argument("--dt", type=float, default=DEFAULTS["dt"])

    p = sub.add_parser("limitset", help="detect the limit set reached from y0")
    model_args(p)
    p.add_argument("--y0", type=_floats, required=True)
    p.add_argument("--dt", type=float, default=DEFAULTS["dt"])

    p = sub.add_parser("stationary", help="estimate a stationary cloud")
    model_args(p)
    p.add_argument("--N", type=_positive_int, required=True)
    p.add_argument("--burn-in", type=_nonneg_float, default=DEFAULTS["burn_in"])
    p.add_argument("--samples", type=_positive_int, default=DEFAULTS["n_samples"])
    p.add_argument("--spacing", type=float, default=DEFAULTS["spacing"])
    p.add_argument("--out", help="directory for cloud_N<N>.csv")
    seed_arg(p)

    p = sub.add_parser("verify", help="run an experiment and emit its report")
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    model_args(p)
    p.add_argument("--N", type=_ints, default=DEFAULTS["N_list"], help="ascending list, e.g. 100,1000,10000")
    p.add_argument("--t", type=_floats, default=None, help="time list for hypothesis1/theorem")
    p.add_argument("--y0", type=_floats, help="start point for hypothesis1")
    p.add_argument("--y-star", type=_floats, help="fixed point for corollary (default: Newton)")
    p.add_argument("--replicas", type=_positive_int, default=DEFAULTS["replicas"])
    p.add_argument("--burn-in", type=_nonneg_float, default=DEFAULTS["burn_in"])
    p.add_argument("--samples", type=_positive_int, default=DEFAULTS["n_samples"])
    p.add_argument("--spacing", type=float, default=DEFAULTS["spacing"])
    p.add_argument("--dt", type=float, default=DEFAULTS["dt"])
    p.add_argument("--threads", type=_positive_int, default=DEFAULTS["threads"])
    p.add_argument("--out", help="output directory (default: print report.json)")
    seed_arg(p)
    return parser


def _model_source(name: str, params: dict, warnings: list) -> dict:
    """Model dict from a zoo name or a JSON file; file params win over ``--params``."""
    if name in ZOO:
        return {"name": name, "params": dict(params)}
    path = Path(name)
    if not path.is_file():
        raise UsageError(f"--model {name!r} is neither a zoo model ({', '.join(sorted(ZOO))}) nor a readable file")
    try:
        d = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read model file {path}: {exc}") from exc
    if "kind" in d:
        if params:
            warnings.append(f"--params ignored: {path} defines a complete model")
        return d
    file_params = d.get("params", {})
    clash = sorted(k for k in params if k in file_params and float(file_params[k]) != params[k])
    if clash:
        warnings.append(f"model file {path} overrides --params for {', '.join(clash)}")
    return {"name": d["name"], "params": {**params, **file_params}}


def parse_args(argv=None) -> CliConfig:
    """Parse and validate ``argv``; usage problems exit with status 2."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    cfg = CliConfig(command=ns.command)
    if ns.command == "zoo-list":
        return cfg
    try:
        cfg.model = _model_source(ns.model, ns.params, cfg.warnings)
        model = model_from_dict(cfg.model)
        seed = ns.seed if getattr(ns, "seed", None) is not None else os.environ.get("MFLAB_SEED", "0")
        try:
            cfg.seed = int(seed)
        except ValueError:
            raise UsageError(f"MFLAB_SEED must be an integer, got {seed!r}") from None
        if getattr(ns, "y0", None) is not None:
            cfg.y0 = tuple(coerce_point(model.domain, ns.y0))
        if getattr(ns, "dt", None) is not None and not ns.dt > 0:
            raise UsageError("--dt must be positive")
        if getattr(ns, "spacing", None) is not None and not ns.spacing > 0:
            raise UsageError("--spacing must be positive")
        cfg.out = getattr(ns, "out", None)
        if ns.command == "verify":
            cfg.experiment = ns.experiment
            cfg.N = ns.N
            cfg.t = ns.t
            cfg.options = {"replicas": ns.replicas, "burn_in": ns.burn_in, "n_samples": ns.samples,
                           "spacing": ns.spacing, "dt": ns.dt, "threads": ns.threads,
                           "y_star": ns.y_star}
            if ns.y_star is not None:
                cfg.options["y_star"] = tuple(coerce_point(model.domain, ns.y_star))
            cfg.options["plan"] = _plan(cfg)
        else:
            if hasattr(ns, "N"):
                cfg.N = (ns.N,)
            if hasattr(ns, "t"):
                cfg.t = (ns.t,)
            cfg.options = {k: getattr(ns, k) for k in ("samples", "burn_in", "spacing", "dt") if hasattr(ns, k)}
            if ns.command == "flow" and model.kind == "dt" and ns.t != int(ns.t):
                raise UsageError("--t must be an integer number of steps for a map")
    except (ModelError, ValueError, UsageError) as exc:
        parser.error(str(exc))
    return cfg


def _plan(cfg: CliConfig) -> ExperimentPlan:
    o = cfg.options
    return ExperimentPlan(model=cfg.model, N_list=cfg.N, t_list=cfg.t, replicas=o["replicas"], burn_in=o["burn_in"],
                          n_samples=o["n_samples"], spacing=o["spacing"], seed=cfg.seed, y0=cfg.y0, dt=o["dt"],
                          threads=o["threads"])


# ---------------------------------------------------------------------------
# execution


def _fmt_point(y) -> str:
    return " ".join(f"{v:.12g}" for v in np.asarray(y, dtype=float))


def _resolved(cfg: CliConfig) -> dict:
    if cfg.command == "verify":
        d = cfg.options["plan"].resolved(cfg.experiment)
        d["experiment"] = cfg.experiment
    else:
        d = {"command": cfg.command, "model": cfg.model, "seed": cfg.seed, "N": list(cfg.N), "t": list(cfg.t),
             "y0": cfg.y0, **{k: v for k, v in cfg.options.items()}}
    d["out"] = cfg.out
    return to_jsonable(d)


def _zoo_list(out) -> int:
    for name, entry in ZOO.items():
        print(f"{name} ({entry['kind']}): {entry['doc']}", file=out)
        for key, val in entry["params"].items():
            lo, hi = entry["ranges"][key]
            print(f"    {key} = {val:g}    range [{lo:g}, {hi:g}]", file=out)
    return EXIT_OK


def run(cfg: CliConfig, out=None, err=None) -> int:
    """Execute a parsed configuration and return the exit code."""
    out = out or sys.stdout
    err = err or sys.stderr
    if cfg.command == "zoo-list":
        return _zoo_list(out)
    for w in cfg.warnings:
        print(f"warning: {w}", file=err)
    print("resolved plan: " + json.dumps(_resolved(cfg), sort_keys=True), file=err)
    model = model_from_dict(cfg.model)
    context = f"(model={model.name}, N={list(cfg.N)}, t={list(cfg.t or [])}, seed={cfg.seed})"
    try:
        if cfg.command == "validate":
            rep = validate_model(model, cfg.options["samples"], cfg.seed)
            print(canonical_json(rep.to_dict()), end="", file=out)
            return EXIT_OK if rep.passed else EXIT_FAIL
        if cfg.command == "flow":
            y = flow(model, np.array(cfg.y0), cfg.t[0], FlowConfig(dt=cfg.options["dt"]))
            print(_fmt_point(y), file=out)
            return EXIT_OK
        if cfg.command == "limitset":
            ls = detect_limit_set(model, np.array(cfg.y0), cfg=FlowConfig(dt=cfg.options["dt"]))
            d = ls.to_dict()
            d["point"] = ls.point.tolist()
            print(canonical_json(d), end="", file=out)
            return EXIT_OK
        if cfg.command == "simulate":
            y0 = cfg.y0 if cfg.y0 is not None else model.domain.centroid
            N = cfg.N[0]
            res = simulate(model, N, round_to_grid(model.domain, N, y0), cfg.t[0], RngSpec(cfg.seed).generator())
            d = {"model": model.name, "N": N, "t": cfg.t[0], "seed": cfg.seed, "final": list(res.final.y),
                 "final_counts": list(res.final.coords), "events": res.events, "truncations": res.truncations,
                 "frozen": res.frozen}
            text = canonical_json(d)
            if cfg.out:
                _write(Path(cfg.out), text)
            print(text, end="", file=out)
            return EXIT_OK
        if cfg.command == "stationary":
            N = cfg.N[0]
            o = cfg.options
            est = stationary_sample(model, N, o["burn_in"], o["samples"], o["spacing"],
                                    RngSpec(cfg.seed).derive("stationary", N).generator())
            d = {"model": model.name, "N": N, "seed": cfg.seed, "mean": est.cloud.mean(), **est.diagnostics()}
            if cfg.out:
                Path(cfg.out).mkdir(parents=True, exist_ok=True)
                write_cloud_csv(est.cloud, Path(cfg.out) / f"cloud_N{N}.csv")
            print(canonical_json(d), end="", file=out)
            return EXIT_OK
        if cfg.command == "verify":
            plan = cfg.options["plan"]
            if cfg.experiment == "corollary":
                doc = EXPERIMENTS["corollary"](plan, cfg.options["y_star"])
            else:
                doc = EXPERIMENTS[cfg.experiment](plan)
            if cfg.out:
                for path in emit_report(doc, cfg.out):
                    print(f"wrote {path}", file=err)
            else:
                print(canonical_json(doc.to_dict()), end="", file=out)
            print(f"{cfg.experiment}: {doc.status}", file=err)
            if doc.status == "INAPPLICABLE":
                print(doc.applicability.get("reason", "inapplicable"), file=err)
            return EXIT_OK if doc.passed else EXIT_FAIL
    except IntegrationError as exc:
        print(f"error: integration failed {context}: {exc}", file=err)
        return EXIT_RUNTIME
    except (RuntimeError, ModelError, OSError, ValueError) as exc:
        print(f"error: {exc} {context}", file=err)
        return EXIT_RUNTIME
    raise AssertionError(f"unhandled command {cfg.command}")


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def main(argv=None) -> int:
    cfg = parse_args(argv)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
