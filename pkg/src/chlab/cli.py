"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 invariant failure, 3 optimizer stall.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from typing import Optional

import numpy as np

from . import _kernels
from .contact_core import ContactStructure, energy_report, rescale_theta
from .lie_models import ModelSpec, build_model
from .optimizer import (
    OptConfig,
    minimize,
    read_trace_csv,
    smooth_perturbation,
    write_trace_csv,
)
from .torus_grid import TorusContactSpec, build_torus_model

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT, EXIT_STALL = 0, 1, 2, 3

REGISTRY = {
    "sl2": {
        "parameters": {"lambda": 1.0},
        "example": "sl2:lambda=1.0",
        "facts": [
            "[R, e1] = lambda e2, [e1, e2] = -2 R, [e2, R] = -lambda e1",
            "d alpha = 2 eta1 ^ eta2, d eta1 = -lambda alpha ^ eta2, d eta2 = -lambda alpha ^ eta1",
            "critical, non-Sasakian: E = 8 lambda^2 Vol, h e1 = -lambda e1, h e2 = lambda e2",
            "K(R, e_s) = K(R, e_u) = 1 - lambda^2",
        ],
    },
    "su2": {
        "parameters": {},
        "example": "su2",
        "facts": ["family(-2, 2): Sasakian (R Killing), E = 0", "round: all sectional curvatures 1"],
    },
    "nil": {
        "parameters": {},
        "example": "nil",
        "facts": ["family(0, 0): Heisenberg, d eta1 = d eta2 = 0, Sasakian, E = 0"],
    },
    "family": {
        "parameters": {"a": 0.0, "b": 0.0},
        "example": "family:a=1,b=0",
        "facts": [
            "[R, e1] = a e2, [R, e2] = b e1, [e1, e2] = -2 R",
            "|tau|^2 = 2 (a + b)^2, lambda^2 = (a + b)^2 / 4",
        ],
    },
    "torus": {
        "parameters": {"m": 1},
        "example": "torus:m=1",
        "facts": [
            "eta_m = sin(m x3) dx1 + cos(m x3) dx2 on T^3",
            "alpha = (m/2) eta_m with flat g0 = (m^2/4)(dx1^2 + dx2^2 + dx3^2), theta = 2",
            "g0 is compatible but not critical: |tau|^2 = 8, Tanno residual > 0",
        ],
    },
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_model_string(text: str):
    """``name[:k=v,k=v]`` -> (name, {k: Fraction})."""
    name, _, rest = text.strip().partition(":")
    if name not in REGISTRY:
        raise UsageError(f"unknown model {name!r}; known: {', '.join(REGISTRY)}")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise UsageError(f"malformed model parameter {item!r}")
        try:
            params[key.strip()] = Fraction(val.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise UsageError(f"bad value in {item!r}") from exc
    allowed = set(REGISTRY[name]["parameters"]) | ({"vol"} if name != "torus" else set())
    unknown = set(params) - allowed
    if unknown:
        raise UsageError(f"model {name} does not take {', '.join(sorted(unknown))}")
    return name, params


def load_model(text: str, n: int = 32, fd_order: int = 4):
    name, params = parse_model_string(text)
    try:
        if name == "torus":
            m = params.get("m", Fraction(1))
            if m.denominator != 1:
                raise ValueError("m must be an integer")
            return build_torus_model(TorusContactSpec(int(m)), n=n, fd_order=fd_order)
        vol = float(params.pop("vol", 1))
        return build_model(ModelSpec(name, params, vol))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


@dataclass
class RunConfig:
    """Resolved options of a run: defaults < config file < flags."""

    model: str = "sl2:lambda=1"
    n: int = 32
    fd_order: int = 4
    theta: float = 2.0
    tol: Optional[float] = None
    seed: int = 0
    init_u: float = 0.0
    init_r: float = 0.0
    init_amplitude: float = 0.0
    max_iter: int = 200
    grad_tol: float = 1e-8
    armijo_c: float = 1e-4
    shrink: float = 0.5
    initial_step: float = 1.0
    trace_every: int = 1
    max_shrinks: int = 60
    trace: str = "trace.csv"
    summary: str = "summary.json"
    output: Optional[str] = None
    threads: Optional[int] = None

    @classmethod
    def resolve(cls, args: argparse.Namespace, file_values: dict) -> "RunConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        values = {}
        for key, raw in file_values.items():
            if key not in kinds:
                raise UsageError(f"unknown config key {key!r}")
            values[key] = _coerce(key, raw, cls)
        for key in kinds:
            v = getattr(args, key, None)
            if v is not None:
                values[key] = v
        return cls(**values)

    def opt_config(self) -> OptConfig:
        try:
            return OptConfig(self.max_iter, self.grad_tol, self.armijo_c, self.shrink,
                             self.initial_step, self.trace_every, self.max_shrinks)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc


def _coerce(key, raw, cls):
    default = getattr(cls, key)
    if key in ("tol",):
        return float(raw)
    if key == "threads":
        return int(raw)
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        if not eq:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(text: str, path: Optional[str]):
    print(text)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")


# -- commands -----------------------------------------------------------------

def cmd_models_list(as_json: bool = False) -> str:
    if as_json:
        return _dump({k: {"parameters": v["parameters"], "example": v["example"],
                          "facts": v["facts"]} for k, v in REGISTRY.items()})
    lines = []
    for name, entry in REGISTRY.items():
        lines.append(f"{name:8s} {entry['example']}")
        lines.extend(f"         - {fact}" for fact in entry["facts"])
    return "\n".join(lines)


def cmd_model_describe(name: str) -> str:
    base = name.partition(":")[0]
    if base not in REGISTRY:
        raise UsageError(f"unknown model {name!r}")
    entry = REGISTRY[base]
    lines = [f"model {base}", f"  parameters: {entry['parameters']}",
             f"  example: {entry['example']}"]
    lines.extend(f"  {fact}" for fact in entry["facts"])
    return "\n".join(lines)


def cmd_check(cfg: RunConfig):
    model = load_model(cfg.model, cfg.n, cfg.fd_order)
    g, contact = model.metric, model.contact
    if cfg.theta <= 0:
        raise UsageError("theta must be positive")
    if cfg.theta != contact.theta:
        g = rescale_theta(g, contact.alpha, contact.theta, cfg.theta)
        contact = ContactStructure(contact.alpha, contact.d_alpha, contact.reeb, cfg.theta)
    report = energy_report(g, contact, model.backend, tol=cfg.tol)
    out = report.to_dict()
    out["model"] = model.name
    out["theta_energy"] = cfg.theta * report.energy
    out["volume"] = model.backend.reference_volume()
    out["kernels"] = _kernels.IMPLEMENTATION
    if model.info.get("kind") == "torus":
        out["grid"] = {"n": model.info["n"], "fd_order": model.info["fd_order"]}
    return out, (EXIT_OK if report.to_dict()["ok"] else EXIT_INVARIANT)


def cmd_optimize(cfg: RunConfig):
    model = load_model(cfg.model, cfg.n, cfg.fd_order)
    shape = model.backend.site_shape
    du, dr = smooth_perturbation(shape, cfg.seed, cfg.init_amplitude)
    init = (cfg.init_u + du, cfg.init_r + dr)
    t0 = time.perf_counter()
    result = minimize(model, cfg.opt_config(), init)
    wall = time.perf_counter() - t0
    write_trace_csv(cfg.trace, result.trace)
    st = result.state
    summary = {
        "model": model.name,
        "status": result.status,
        "converged": result.converged,
        "stalled": result.status == "stalled",
        "iterations": st.iter,
        "initial_energy": result.trace[0][1],
        "final_energy": st.energy,
        "grad_norm": st.grad_norm,
        "residual": result.trace[-1][3],
        "constraint_drift": result.constraint_drift,
        "u": {"min": float(np.min(st.u)), "max": float(np.max(st.u)), "mean": float(np.mean(st.u))},
        "r": {"min": float(np.min(st.r)), "max": float(np.max(st.r)),
              "max_abs": float(np.max(np.abs(st.r)))},
        "seed": cfg.seed,
        "trace": cfg.trace,
        "wall_time": wall,
    }
    code = EXIT_STALL if result.status == "stalled" else EXIT_OK
    return summary, code


def cmd_report(path: str) -> dict:
    try:
        rows = read_trace_csv(path)
    except OSError as exc:
        raise UsageError(f"cannot read trace {path}: {exc}") from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not rows:
        raise UsageError(f"{path}: empty trace")
    energies = [r[1] for r in rows]
    residuals = [r[3] for r in rows if math.isfinite(r[3])]
    return {
        "rows": len(rows),
        "first_iter": rows[0][0],
        "last_iter": rows[-1][0],
        "initial_energy": energies[0],
        "final_energy": energies[-1],
        "energy_drop": energies[0] - energies[-1],
        "monotone": all(b <= a for a, b in zip(energies, energies[1:])),
        "final_grad_norm": rows[-1][2],
        "residual_min": min(residuals) if residuals else None,
        "residual_max": max(residuals) if residuals else None,
        "final_residual": rows[-1][3],
    }


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chlab", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for per-site kernels (env CHLAB_THREADS)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    models = sub.add_parser("models", help="model registry")
    msub = models.add_subparsers(dest="action", required=True, parser_class=_Parser)
    ml = msub.add_parser("list", help="list models")
    ml.add_argument("--json", action="store_true")

    model = sub.add_parser("model", help="single model")
    mdsub = model.add_subparsers(dest="action", required=True, parser_class=_Parser)
    md = mdsub.add_parser("describe", help="describe a model")
    md.add_argument("name")

    def common(sp):
        sp.add_argument("--config", default=None, help="key = value file; flags override it")
        sp.add_argument("--model", default=None)
        sp.add_argument("--n", type=int, default=None, help="grid sites per axis")
        sp.add_argument("--fd-order", dest="fd_order", type=int, default=None, choices=(2, 4))
        sp.add_argument("--tol", type=float, default=None)

    ck = sub.add_parser("check", help="energy, residual and invariant report")
    common(ck)
    ck.add_argument("--theta", type=float, default=None)
    ck.add_argument("--output", default=None, help="also write the JSON report here")

    op = sub.add_parser("optimize", help="minimize the energy over compatible metrics")
    common(op)
    op.add_argument("--init-u", dest="init_u", type=float, default=None)
    op.add_argument("--init-r", dest="init_r", type=float, default=None)
    op.add_argument("--init-amplitude", dest="init_amplitude", type=float, default=None)
    op.add_argument("--seed", type=int, default=None)
    op.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    op.add_argument("--grad-tol", dest="grad_tol", type=float, default=None)
    op.add_argument("--armijo-c", dest="armijo_c", type=float, default=None)
    op.add_argument("--shrink", type=float, default=None)
    op.add_argument("--initial-step", dest="initial_step", type=float, default=None)
    op.add_argument("--trace-every", dest="trace_every", type=int, default=None)
    op.add_argument("--max-shrinks", dest="max_shrinks", type=int, default=None,
                    help="backtracking steps before the line search reports a stall")
    op.add_argument("--trace", default=None, help="CSV trace path (default trace.csv)")
    op.add_argument("--summary", default=None, help="JSON summary path (default summary.json)")

    rp = sub.add_parser("report", help="summarize a trace CSV")
    rp.add_argument("trace_csv")
    return p


def _set_threads(flag):
    n = flag
    if n is None and os.environ.get("CHLAB_THREADS"):
        try:
            n = int(os.environ["CHLAB_THREADS"])
        except ValueError as exc:
            raise UsageError("CHLAB_THREADS must be an integer") from exc
    if n is None:
        n = os.cpu_count() or 1
    if n < 1:
        raise UsageError("threads must be positive")
    _kernels.set_threads(n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _set_threads(args.threads)
        if args.command == "models":
            print(cmd_models_list(args.json))
            return EXIT_OK
        if args.command == "model":
            print(cmd_model_describe(args.name))
            return EXIT_OK
        if args.command == "report":
            print(_dump(cmd_report(args.trace_csv)))
            return EXIT_OK
        file_values = read_config_file(args.config) if args.config else {}
        cfg = RunConfig.resolve(args, file_values)
        if args.command == "check":
            out, code = cmd_check(cfg)
            _emit(_dump(out), cfg.output)
            return code
        summary, code = cmd_optimize(cfg)
        _emit(_dump(summary), cfg.summary)
        return code
    except UsageError as exc:
        print(f"chlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
