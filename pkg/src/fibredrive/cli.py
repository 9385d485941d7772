"""Command-line front end: ``fibredrive analyze|integrate|verify-calculus|list-models``.

Exit codes: 0 success, 1 usage or configuration error, 2 the algorithm did
not complete (rank instability, round cap, or nothing to integrate on),
3 the trajectory left the model's domain.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import (
    d0_prim_residual,
    integrate,
    primary_field_D0,
    stabilise,
    tangency_residual,
    x0_independence_residual,
)
from .errors import FibreDriveError
from .fibrecalc import RULE_TOL, run_calculus_suite
from .hamlink import resolution_check
from .jets import ChartPoint, primal
from .lagrangian import SecondOrderField, check_constant_rank, zero_field
from .models import ModelRegistryEntry, get_model, model_defaults, model_names

log = logging.getLogger("fibredrive")

EXIT_OK, EXIT_USAGE, EXIT_INCOMPLETE, EXIT_DOMAIN = 0, 1, 2, 3
MODEL_PARAMS = ("mass", "dim", "epsilon", "k")


class ConfigError(ValueError):
    """Invalid run configuration (exit code 1)."""


@dataclass
class RunConfig:
    """Flat run description; serialised as a JSON object with these keys."""

    model: str = "harmonic"
    mass: float | None = None
    dim: int | None = None
    epsilon: float | None = None
    k: float | None = None
    q0: list[float] | None = None
    v0: list[float] | None = None
    t_end: float = 1.0
    dt: float = 1e-3
    u: list[float] | None = None
    tol_kernel: float = 1e-8
    tol_class: float = 1e-7
    tol_residual: float = 1e-6
    max_rounds: int = 10
    seed: int = 42
    count: int = 100
    out: str | None = None

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def model_params(self) -> dict:
        allowed = model_defaults(self.model)
        params = {}
        for name in MODEL_PARAMS:
            val = getattr(self, name)
            if val is None:
                continue
            if name not in allowed:
                raise ConfigError(f"model {self.model} does not take --{name}")
            params[name] = int(val) if name == "dim" else float(val)
        return params

    def validate(self) -> None:
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.t_end <= 0:
            raise ConfigError("t_end must be positive")
        if self.max_rounds < 1:
            raise ConfigError("max_rounds must be at least 1")


def load_entry(cfg: RunConfig) -> ModelRegistryEntry:
    if cfg.model not in model_names():
        raise ConfigError(f"unknown model {cfg.model!r}; available: {', '.join(model_names())}")
    try:
        return get_model(cfg.model, **cfg.model_params())
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def initial_point(cfg: RunConfig, entry: ModelRegistryEntry) -> ChartPoint:
    """``(q0, v0)`` from the config, defaulting to the entry's first seed."""
    n = entry.n
    seed = entry.default_seeds[0]
    q0 = seed.q if cfg.q0 is None else np.asarray(cfg.q0, dtype=float)
    v0 = seed.v if cfg.v0 is None else np.asarray(cfg.v0, dtype=float)
    if q0.shape != (n,) or v0.shape != (n,):
        raise ConfigError(f"{entry.name} has dimension {n}; got q0 of length {q0.size} and v0 of length {v0.size}")
    p0 = ChartPoint(q0, v0)
    if not entry.model.contains(p0):
        raise ConfigError(f"initial state {p0} is outside the domain of {entry.name}")
    return p0


def _free_multipliers(cfg: RunConfig, report) -> list[float]:
    m = report.link.m
    free = report.free_multipliers
    given = [] if cfg.u is None else list(cfg.u)
    if given and len(given) != len(free):
        raise ConfigError(f"--u expects {len(free)} value(s), one per free multiplier; got {len(given)}")
    u = [0.0] * m
    for mu, val in zip(free, given):
        u[mu] = float(val)
    return u


# -- commands --------------------------------------------------------------------

def _stabilise(cfg: RunConfig, entry: ModelRegistryEntry):
    D0 = primary_field_D0(entry.model, entry.link)
    return stabilise(entry.model, entry.link, D0, entry.default_seeds, tol=cfg.tol_class, max_rounds=cfg.max_rounds)


def _stats(values) -> dict:
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        return {"max": 0.0, "mean": 0.0}
    return {"max": float(np.max(arr)), "mean": float(np.mean(arr))}


def analyze_report(cfg: RunConfig, entry: ModelRegistryEntry) -> dict:
    """Run the full pipeline and collect a JSON-ready report."""
    model, link = entry.model, entry.link
    seeds = entry.default_seeds
    rank = check_constant_rank(model, seeds, cfg.tol_kernel)
    report = _stabilise(cfg, entry)
    surface = report.surface

    rng = np.random.default_rng(cfg.seed)
    X1 = SecondOrderField(lambda p: rng.standard_normal(model.n), name="X_random")
    res = [resolution_check(link, model, p) for p in seeds]
    rounds = []
    for r in report.rounds:
        rounds.append({
            "level": r.level,
            "new_constraints": [
                {
                    "name": c.name,
                    "provenance": c.provenance,
                    "identically_zero": c.identically_zero,
                    "max_abs_on_surface": _stats(abs(float(primal(c(p)))) for p in surface)["max"],
                }
                for c in r.new_constraints
            ],
            "multiplier_relations": [
                {"source": rel.source.name, "row_at_first_sample": rel.row(surface[0]).tolist() if surface else None}
                for rel in r.relations
            ],
            "surface_points": len(r.surface),
        })
    multipliers = {}
    for mu, u in report.determined_u.items():
        if isinstance(u, str):
            multipliers[str(mu + 1)] = {"status": "free"}
        else:
            vals = [float(primal(u(p))) for p in surface]
            multipliers[str(mu + 1)] = {"status": "determined", "on_surface": _stats(np.abs(vals))}
    return {
        "model": entry.name,
        "params": dict(model.params),
        "n": model.n,
        "m": link.m,
        "kernel_rank": rank,
        "status": report.status,
        "message": report.message,
        "constraint_levels": sorted({c.level for c in report.constraints}),
        "constraints": [c.name for c in report.constraints],
        "rounds": rounds,
        "multipliers": multipliers,
        "residuals": {
            "lambda": _stats(r.lam_error for r in res),
            "resolution_of_identity": _stats(r.imw_error for r in res),
            "d0_prim": _stats(d0_prim_residual(model, link, None, p) for p in seeds),
            "x0_independence": _stats(
                x0_independence_residual(model, link, zero_field(model.n), X1, p)
                for p in seeds),
            "tangency_final": tangency_residual(report) if surface else 0.0,
        },
        "config": dataclasses.asdict(cfg),
    }


def _print_summary(rep: dict) -> None:
    print(f"model {rep['model']} (n = {rep['n']}, m = {rep['m']}, kernel rank {rep['kernel_rank']})")
    print(f"status: {rep['status']}" + (f" ({rep['message']})" if rep["message"] else ""))
    for r in rep["rounds"]:
        names = [c["name"] + (" [zero]" if c["identically_zero"] else "") for c in r["new_constraints"]]
        print(f"  round {r['level']}: constraints {names or '-'}, relations {len(r['multiplier_relations'])}")
    for mu, info in rep["multipliers"].items():
        print(f"  u_{mu}: {info['status']}")
    for name, val in rep["residuals"].items():
        shown = val["max"] if isinstance(val, dict) else val
        print(f"  residual {name}: {shown:.3e}")


def cmd_analyze(cfg: RunConfig, as_json: bool = False) -> int:
    entry = load_entry(cfg)
    rep = analyze_report(cfg, entry)
    if cfg.out:
        Path(cfg.out).write_text(json.dumps(rep, indent=2), encoding="utf-8")
    if as_json:
        print(json.dumps(rep, indent=2))
    else:
        _print_summary(rep)
    return EXIT_OK if rep["status"] in ("finished", "empty_final_set") else EXIT_INCOMPLETE


def write_trajectory_csv(path, traj, names: Sequence[str]) -> None:
    n = traj.q.shape[1]
    header = ["t"] + [f"q_{i + 1}" for i in range(n)] + [f"v_{i + 1}" for i in range(n)]
    header += ["energy", "el_residual"] + list(names)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, t in enumerate(traj.times):
            row = [t, *traj.q[i], *traj.v[i], traj.residual_log["energy"][i], traj.residual_log["el_residual"][i]]
            row += [traj.residual_log[c][i] for c in names]
            w.writerow([repr(float(x)) for x in row])


def cmd_integrate(cfg: RunConfig, as_json: bool = False) -> int:
    entry = load_entry(cfg)
    p0 = initial_point(cfg, entry)
    report = _stabilise(cfg, entry)
    if report.status != "finished":
        print(f"stabilisation ended with status {report.status}; nothing to integrate", file=sys.stderr)
        return EXIT_INCOMPLETE
    u = _free_multipliers(cfg, report)
    field = report.final_field(u)
    constraints = report.constraints
    off = [c.name for c in constraints if abs(float(primal(c(p0)))) > cfg.tol_residual]
    if off:
        print(f"warning: initial state violates {off}; drift will be logged", file=sys.stderr)
    traj = integrate(entry.model, field, p0, cfg.t_end, cfg.dt, constraints)
    names = [c.name for c in constraints]
    summary = {
        "model": entry.name,
        "params": dict(entry.model.params),
        "u": u,
        "steps": len(traj.times) - 1,
        "t_final": float(traj.times[-1]),
        "final_state": {"q": traj.q[-1].tolist(), "v": traj.v[-1].tolist()},
        "domain_exit": traj.domain_exit,
        "max_residuals": traj.max_residuals(),
        "columns": 2 * entry.n + 3 + len(names),
    }
    if cfg.out:
        write_trajectory_csv(cfg.out, traj, names)
        Path(cfg.out).with_suffix(".json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    if as_json:
        print(json.dumps(summary, indent=2))
    else:
        print(f"{entry.name}: {summary['steps']} steps to t = {summary['t_final']:.6g}")
        print(f"  final q = {traj.q[-1]}, v = {traj.v[-1]}")
        for k, v in summary["max_residuals"].items():
            print(f"  max {k}: {v:.3e}")
    if traj.domain_exit:
        print(f"left the domain after t = {traj.times[-1]:.6g}; last valid state reported", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_verify_calculus(cfg: RunConfig, as_json: bool = False, checks=None) -> int:
    if cfg.count < 0:
        raise ConfigError("count must be non-negative")
    res = run_calculus_suite(seed=cfg.seed, count=cfg.count, checks=checks, tol=RULE_TOL)
    if as_json:
        print(json.dumps(res, indent=2))
    else:
        for name, r in res.items():
            if name == "passed":
                continue
            print(f"{name:10s} max residual {r['max_residual']:.3e}  {'pass' if r['passed'] else 'FAIL'}")
        print("all rules pass" if res["passed"] else "some rules FAIL")
    return EXIT_OK if res["passed"] else EXIT_INCOMPLETE


def list_models(pattern: str | None = None) -> list[dict]:
    rows = []
    for name in model_names():
        if pattern and pattern not in name:
            continue
        entry = get_model(name)
        rows.append({"name": name, "dim": entry.n, "params": model_defaults(name), "constraints": entry.m,
                     "notes": entry.notes})
    return rows


def cmd_list_models(pattern: str | None = None, as_json: bool = False) -> int:
    rows = list_models(pattern)
    if as_json:
        print(json.dumps(rows, indent=2))
    else:
        for r in rows:
            params = ", ".join(f"{k}={v}" for k, v in r["params"].items()) or "-"
            print(f"{r['name']:26s} n={r['dim']}  m={r['constraints']}  params: {params}")
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON run configuration; flags override its values")
    common.add_argument("--json", action="store_true", help="print machine-readable output")
    common.add_argument("--out", help="output path")
    common.add_argument("-v", "--verbose", action="store_true")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--model", help="registry model name")
    model.add_argument("--mass", type=float)
    model.add_argument("--dim", type=int)
    model.add_argument("--epsilon", type=float, help="conformal factor strength")
    model.add_argument("--k", type=float, help="oscillator stiffness")
    model.add_argument("--tol-kernel", type=float)
    model.add_argument("--tol-class", type=float)
    model.add_argument("--max-rounds", type=int)
    model.add_argument("--seed", type=int)

    parser = argparse.ArgumentParser(prog="fibredrive", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    a = sub.add_parser("analyze", parents=[common, model], help="constraint and multiplier analysis")
    a.add_argument("model_name", nargs="?", help="model name (same as --model)")
    i = sub.add_parser("integrate", parents=[common, model], help="integrate the final dynamics")
    i.add_argument("model_name", nargs="?", help="model name (same as --model)")
    i.add_argument("--q0", type=_floats, help="initial positions a,b,... (use --q0=-1,2 for negatives)")
    i.add_argument("--v0", type=_floats, help="initial velocities a,b,...")
    i.add_argument("--t-end", type=float)
    i.add_argument("--dt", type=float)
    i.add_argument("--u", type=_floats, help="values of the free multipliers")
    i.add_argument("--tol-residual", type=float)
    c = sub.add_parser("verify-calculus", parents=[common], help="randomised derivation-rule checks")
    c.add_argument("--seed", type=int)
    c.add_argument("--count", type=int)
    lm = sub.add_parser("list-models", parents=[common], help="list built-in models")
    lm.add_argument("filter", nargs="?", help="substring filter on model names")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        try:
            cfg = RunConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    overrides = {}
    for f in fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            overrides[f.name] = val
    if getattr(args, "model_name", None):
        overrides["model"] = args.model_name
    cfg = dataclasses.replace(cfg, **overrides)
    cfg.validate()
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.command == "list-models":
            return cmd_list_models(args.filter, args.json)
        cfg = config_from_args(args)
        if args.command == "analyze":
            return cmd_analyze(cfg, args.json)
        if args.command == "integrate":
            return cmd_integrate(cfg, args.json)
        return cmd_verify_calculus(cfg, args.json)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FibreDriveError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE


if __name__ == "__main__":
    sys.exit(main())
