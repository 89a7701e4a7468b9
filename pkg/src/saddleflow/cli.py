"""Config-driven command-line front end.

Commands: ``gen`` (write an instance), ``solve`` (run one solver), ``bench``
(sweep instance/solver pairs into a results table), ``flow`` (integrate the
continuous test problem), ``denoise`` (image in, image out).

Each run is described by one JSON document; command-line flags override the
corresponding fields.  Unknown configuration keys are rejected before any
computation.  Exit codes: 0 on success/convergence, 1 on configuration or
solver errors, 2 when the iteration cap is reached without convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional

import numpy as np

from . import baselines, flowsim, pdflow, problems
from .linalg import write_matrix_market
from .pdflow import SaddleState, ScalingParams
from .ssn import SsnConfig

__all__ = ["main", "ConfigError", "RunConfig"]


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


_GEN_KEYS = {"kind", "m", "n", "rho", "sparsity", "seed", "size", "noise_scale", "out"}
_SSN_KEYS = {
    "nu", "delta", "j_max", "r_max", "residual_tol",
    "linear_solver", "pcg_rel_tol", "pcg_max_iter", "precond",
}
_RUN_KEYS = {
    "instance", "solver", "tol", "max_iters", "seed", "out",
    "alpha_mode", "alpha_value", "warm_steps", "mu", "ssn", "label",
    "tau0", "theta0",
}
_BENCH_KEYS = {"runs", "workers", "out", "tol", "max_iters", "seed"}
_FLOW_KEYS = {"p", "t_end", "h", "z0", "out", "seed", "max_rate"}
_DENOISE_KEYS = {
    "input", "rho", "out", "tol", "max_iters", "seed",
    "size", "noise_scale", "warm_steps",
}

_ALLOWED = {
    "gen": _GEN_KEYS,
    "solve": _RUN_KEYS,
    "bench": _BENCH_KEYS,
    "flow": _FLOW_KEYS,
    "denoise": _DENOISE_KEYS,
}

_SOLVERS = ("semi-pdpg", "im-pd", "alb", "a-pdhg", "a-admm")


class RunConfig:
    """Validated configuration for one command: JSON document plus flag
    overrides, with unknown keys rejected."""

    def __init__(self, command: str, data: dict):
        allowed = _ALLOWED[command]
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        if "ssn" in data and data["ssn"] is not None:
            if not isinstance(data["ssn"], dict):
                raise ConfigError("'ssn' must be an object")
            bad = sorted(set(data["ssn"]) - _SSN_KEYS)
            if bad:
                raise ConfigError(f"unknown ssn keys: {', '.join(bad)}")
        self.command = command
        self.data = data

    @classmethod
    def build(cls, command: str, config_path: Optional[str], overrides: dict) -> "RunConfig":
        data = {}
        if config_path:
            try:
                with open(config_path, "r", encoding="utf-8") as fh:
                    data = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
            if not isinstance(data, dict):
                raise ConfigError("config document must be a JSON object")
        for key, value in overrides.items():
            if value is not None:
                data[key] = value
        return cls(command, data)

    def get(self, key, default=None):
        return self.data.get(key, default)

    def require(self, key):
        if key not in self.data:
            raise ConfigError(f"missing required configuration key '{key}'")
        return self.data[key]


def _load_instance(spec):
    if isinstance(spec, str):
        recipe = problems.load_recipe(spec)
    elif isinstance(spec, dict):
        recipe = spec
    else:
        raise ConfigError("'instance' must be a recipe object or a path to one")
    try:
        return problems.build_instance(recipe), recipe
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid instance recipe: {exc}") from exc


def _instance_label(recipe: dict) -> str:
    kind = recipe.get("kind", "?")
    if kind == "l1l2":
        return f"l1l2 m={recipe['m']} n={recipe['n']} rho={recipe['rho']:g}"
    return f"rof {recipe['m']}x{recipe['n']} rho={recipe['rho']:g}"


# -- gen ---------------------------------------------------------------------

def cmd_gen(cfg: RunConfig) -> int:
    kind = cfg.require("kind")
    seed = int(cfg.get("seed", 0))
    out_dir = cfg.get("out", ".")
    os.makedirs(out_dir, exist_ok=True)
    if kind == "l1l2":
        recipe = problems.l1l2_recipe(
            int(cfg.require("m")), int(cfg.require("n")),
            float(cfg.require("rho")), float(cfg.get("sparsity", 0.3)), seed,
        )
        inst = problems.build_instance(recipe)
        problems.save_recipe(os.path.join(out_dir, "instance.json"), recipe)
        write_matrix_market(os.path.join(out_dir, "A.mtx"), inst.A)
    elif kind == "rof":
        recipe = problems.rof_recipe(
            int(cfg.get("size", 64)), float(cfg.require("rho")), seed,
            float(cfg.get("noise_scale", 10.0)),
        )
        inst = problems.build_instance(recipe)
        problems.save_recipe(os.path.join(out_dir, "instance.json"), recipe)
        problems.pgm_write(os.path.join(out_dir, "noisy.pgm"), inst.image)
    else:
        raise ConfigError(f"unknown instance kind {kind!r}")
    print(f"wrote {os.path.join(out_dir, 'instance.json')}")
    return 0


# -- solve -------------------------------------------------------------------

def _dispatch_solver(inst, recipe, solver, cfg_data: dict) -> dict:
    """Run one (instance, solver) pair and return a result row."""
    tol = float(cfg_data.get("tol", 1e-6))
    max_iters = int(cfg_data.get("max_iters", 100000))
    seed = int(cfg_data.get("seed", 0))
    csv_path = cfg_data.get("out")
    kind = recipe.get("kind")
    row = {
        "instance": _instance_label(recipe),
        "solver": solver,
        "seed": seed,
        "its": None,
        "ssn": None,
        "time_s": None,
        "warmup_s": None,
        "res_final": None,
        "converged": False,
    }
    if solver not in _SOLVERS:
        raise ConfigError(f"unknown solver {solver!r}; choose from {', '.join(_SOLVERS)}")

    if solver == "semi-pdpg":
        if kind != "l1l2":
            raise ConfigError("semi-pdpg applies to l1l2 instances")
        ssn_cfg = _ssn_config_from(cfg_data, SsnConfig(linear_solver="direct", j_max=300))
        result = pdflow.solve_l1l2_semi(
            inst, tol=tol, max_iters=max_iters, seed=seed,
            mu=cfg_data.get("mu"), ssn_cfg=ssn_cfg, csv_path=csv_path,
        )
        row.update(
            its=result.iterations, ssn=result.ssn_total, time_s=result.time_s,
            res_final=result.final_residual, converged=result.converged,
        )
    elif solver == "im-pd":
        alpha_mode = cfg_data.get("alpha_mode", "random")
        alpha_value = float(cfg_data.get("alpha_value", 1.5))
        if kind == "l1l2":
            ssn_cfg = _ssn_config_from(cfg_data, SsnConfig(linear_solver="direct", j_max=300))
            result = pdflow.solve_l1l2_impd(
                inst, tol=tol, max_iters=max_iters, seed=seed,
                alpha_mode=alpha_mode, alpha_value=alpha_value,
                ssn_cfg=ssn_cfg, csv_path=csv_path,
            )
        else:
            ssn_cfg = _ssn_config_from(
                cfg_data, SsnConfig(linear_solver="pcg", precond="ic0", j_max=50)
            )
            warm_steps = int(cfg_data.get("warm_steps", 3))
            t_w = time.perf_counter()
            init = _rof_warm_init(inst, warm_steps)
            row["warmup_s"] = time.perf_counter() - t_w
            result = pdflow.solve_rof_impd(
                inst, tol=tol, max_iters=max_iters, seed=seed,
                ssn_cfg=ssn_cfg, alpha_mode=alpha_mode, alpha_value=alpha_value,
                csv_path=csv_path, init=init,
            )
        row.update(
            its=result.iterations, ssn=result.ssn_total, time_s=result.time_s,
            res_final=result.final_residual, converged=result.converged,
        )
    elif solver == "alb":
        if kind != "l1l2":
            raise ConfigError("alb applies to l1l2 instances")
        result = baselines.solve_l1l2_alb(inst, tol=tol, max_iters=max_iters, csv_path=csv_path)
        row.update(
            its=result.iterations, time_s=result.time_s,
            res_final=result.final_residual, converged=result.converged,
        )
    elif solver == "a-pdhg":
        if kind != "rof":
            raise ConfigError("a-pdhg applies to rof instances")
        result = baselines.solve_rof_apdhg(
            inst, tol=tol, max_iters=max_iters, csv_path=csv_path,
            tau0=float(cfg_data.get("tau0", 0.01)),
            theta0=float(cfg_data.get("theta0", 1.0)),
        )
        row.update(
            its=result.iterations, time_s=result.time_s,
            res_final=result.final_residual, converged=result.converged,
        )
    else:
        if kind != "rof":
            raise ConfigError("a-admm applies to rof instances")
        result = baselines.solve_rof_aadmm(inst, tol=tol, max_iters=max_iters, csv_path=csv_path)
        row.update(
            its=result.iterations, time_s=result.time_s,
            res_final=result.final_residual, converged=result.converged,
        )
    return row


def _ssn_config_from(cfg_data: dict, default: SsnConfig) -> SsnConfig:
    spec = cfg_data.get("ssn")
    if not spec:
        return default
    fields = {k: getattr(default, k) for k in _SSN_KEYS}
    fields.update(spec)
    try:
        return SsnConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid ssn settings: {exc}") from exc


def _rof_warm_init(inst, warm_steps: int):
    if warm_steps <= 0:
        return None
    u0, p0, lam0 = baselines.aadmm_warmup(inst, warm_steps)
    prob = pdflow.rof_problem(inst)
    x0 = np.concatenate([u0, p0])
    state = SaddleState(x0, lam0, prob.constraint.apply(x0) - prob.b)
    return state, ScalingParams(1.0, 1.0, mu=0.0, lipschitz=0.0)


_TABLE_HEADER = f"{'instance':<30} {'solver':<10} {'its':>8} {'SsN':>8} {'time(s)':>9} {'Res':>11}"


def _print_row(row: dict) -> None:
    its = "-" if row["its"] is None else str(row["its"])
    ssn = "-" if row["ssn"] is None else str(row["ssn"])
    tm = "-" if row["time_s"] is None else f"{row['time_s']:.2f}"
    res = "-" if row["res_final"] is None else f"{row['res_final']:.2e}"
    print(f"{row['instance']:<30} {row['solver']:<10} {its:>8} {ssn:>8} {tm:>9} {res:>11}")


def cmd_solve(cfg: RunConfig) -> int:
    inst, recipe = _load_instance(cfg.require("instance"))
    solver = cfg.require("solver")
    row = _dispatch_solver(inst, recipe, solver, cfg.data)
    print(_TABLE_HEADER)
    _print_row(row)
    return 0 if row["converged"] else 2


# -- bench ---------------------------------------------------------------------

_BENCH_COLUMNS = [
    "instance", "solver", "seed", "its", "ssn",
    "time_s", "warmup_s", "res_final", "converged", "error",
]


def cmd_bench(cfg: RunConfig) -> int:
    runs = cfg.require("runs")
    if not isinstance(runs, list) or not runs:
        raise ConfigError("'runs' must be a non-empty list")
    shared = {k: cfg.get(k) for k in ("tol", "max_iters", "seed") if cfg.get(k) is not None}
    prepared = []
    for i, entry in enumerate(runs):
        if not isinstance(entry, dict):
            raise ConfigError(f"run {i} must be an object")
        unknown = sorted(set(entry) - _RUN_KEYS)
        if unknown:
            raise ConfigError(f"run {i} has unknown keys: {', '.join(unknown)}")
        merged = dict(shared)
        merged.update(entry)
        if "instance" not in merged or "solver" not in merged:
            raise ConfigError(f"run {i} needs 'instance' and 'solver'")
        prepared.append(merged)

    def execute(entry: dict) -> dict:
        try:
            inst, recipe = _load_instance(entry["instance"])
            row = _dispatch_solver(inst, recipe, entry["solver"], entry)
            row["error"] = None
            return row
        except Exception as exc:  # partial failure: mark the row, keep going
            spec = entry.get("instance")
            try:
                label = _instance_label(spec) if isinstance(spec, dict) else str(spec)
            except (KeyError, TypeError, ValueError):
                label = str(spec)
            return {
                "instance": label,
                "solver": str(entry.get("solver")),
                "seed": entry.get("seed", 0),
                "its": None, "ssn": None, "time_s": None, "warmup_s": None,
                "res_final": None, "converged": False, "error": str(exc),
            }

    workers = int(cfg.get("workers", 1))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(execute, prepared))
    else:
        rows = [execute(entry) for entry in prepared]

    out = cfg.get("out")
    if out:
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_BENCH_COLUMNS)
            for row in rows:
                writer.writerow([_bench_cell(row.get(c)) for c in _BENCH_COLUMNS])
    print(_TABLE_HEADER)
    for row in rows:
        if row.get("error"):
            print(f"{row['instance']:<30} {row['solver']:<10} failed: {row['error']}")
        else:
            _print_row(row)
    return 0


def _bench_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


# -- flow ------------------------------------------------------------------------

def cmd_flow(cfg: RunConfig) -> int:
    p = int(cfg.require("p"))
    t_end = float(cfg.get("t_end", 8.0))
    h = float(cfg.get("h", 1e-4))
    max_rate = float(cfg.get("max_rate", 2.5))
    z0 = cfg.get("z0")
    z0 = None if z0 is None else np.asarray(z0, dtype=float)
    out_dir = cfg.get("out", ".")
    os.makedirs(out_dir, exist_ok=True)
    terminals = {}
    for variant in ("original", "modified"):
        sys_ = flowsim.ToySystem(p=p, variant=variant)
        try:
            traj = flowsim.integrate_toy(sys_, z0=z0, t_end=t_end, h=h, max_rate=max_rate)
        except flowsim.BlowUpError as exc:
            print(f"{variant}: blow-up at t = {exc.time:.6g}", file=sys.stderr)
            return 1
        path = os.path.join(out_dir, f"flow_{variant}_p{p}.csv")
        flowsim.write_trajectory_csv(path, traj)
        terminals[variant] = traj.err_norm[-1]
        print(f"{variant}: wrote {path}; terminal error {traj.err_norm[-1]:.6e}")
    eig_o = [complex(v) for v in flowsim.linearization_eigs("original")]
    eig_m = flowsim.linearization_eigs("modified", math.log(2.0))
    print("linearized rates (common factor e^t pulled out):")
    print(f"  original: {eig_o[0]:.6g}, {eig_o[1]:.6g}, {eig_o[2]:.6g}")
    print(f"  modified at t=ln 2: {eig_m[0]:.6g}, {eig_m[1]:.6g}, {eig_m[2]:.6g}")
    print(
        f"terminal error ratio modified/original: "
        f"{terminals['modified'] / max(terminals['original'], 1e-300):.3e}"
    )
    return 0


# -- denoise ----------------------------------------------------------------------

def cmd_denoise(cfg: RunConfig) -> int:
    rho = float(cfg.get("rho", 20.0))
    seed = int(cfg.get("seed", 0))
    tol = float(cfg.get("tol", 1e-6))
    max_iters = int(cfg.get("max_iters", 100000))
    warm_steps = int(cfg.get("warm_steps", 3))
    noise_scale = cfg.get("noise_scale")
    source = cfg.get("input")
    if source:
        image = problems.pgm_read(source)
        if noise_scale is not None:
            image = problems.add_noise(image, seed, float(noise_scale))
        inst = problems.rof_from_image(image, rho, seed)
    else:
        inst = problems.gen_rof(
            int(cfg.get("size", 64)), rho, seed,
            10.0 if noise_scale is None else float(noise_scale),
        )
    t_w = time.perf_counter()
    init = _rof_warm_init(inst, warm_steps)
    warmup_s = time.perf_counter() - t_w
    result = pdflow.solve_rof_impd(
        inst, tol=tol, max_iters=max_iters, seed=seed, init=init
    )
    out = cfg.get("out", "denoised.pgm")
    u = result.x[: inst.image.size]
    problems.pgm_write(out, problems.vec_to_image(u, inst.image.shape))
    print(_TABLE_HEADER)
    _print_row(
        {
            "instance": f"rof {inst.image.shape[0]}x{inst.image.shape[1]} rho={rho:g}",
            "solver": "im-pd",
            "its": result.iterations,
            "ssn": result.ssn_total,
            "time_s": warmup_s + result.time_s,
            "res_final": result.final_residual,
            "converged": result.converged,
        }
    )
    print(f"wrote {out}")
    return 0 if result.converged else 2


# -- entry point --------------------------------------------------------------------

def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON configuration file")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out", help="output path (file or directory per command)")
    sub.add_argument("--tol", type=float)
    sub.add_argument("--max-iters", type=int, dest="max_iters")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saddleflow",
        description="Saddle-point solvers, baselines, and a continuous-flow lab.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("gen", help="generate an instance")
    _add_common(gen)
    gen.add_argument("--kind", choices=["l1l2", "rof"])
    gen.add_argument("--m", type=int)
    gen.add_argument("--n", type=int)
    gen.add_argument("--rho", type=float)
    gen.add_argument("--sparsity", type=float)
    gen.add_argument("--size", type=int)
    gen.add_argument("--noise-scale", type=float, dest="noise_scale")

    solve = subs.add_parser("solve", help="run one solver on one instance")
    _add_common(solve)
    solve.add_argument("--instance", help="path to an instance recipe JSON")
    solve.add_argument("--solver", choices=list(_SOLVERS))

    bench = subs.add_parser("bench", help="run a sweep of (instance, solver) pairs")
    _add_common(bench)

    flow = subs.add_parser("flow", help="integrate the continuous test problem")
    _add_common(flow)
    flow.add_argument("--p", type=int)
    flow.add_argument("--t-end", type=float, dest="t_end")
    flow.add_argument("--h", type=float)

    den = subs.add_parser("denoise", help="denoise an image end to end")
    _add_common(den)
    den.add_argument("--input", help="observed PGM image (synthetic if omitted)")
    den.add_argument("--rho", type=float)
    den.add_argument("--size", type=int)
    den.add_argument("--noise-scale", type=float, dest="noise_scale")

    return parser


_OVERRIDE_KEYS = {
    "gen": ["seed", "out", "kind", "m", "n", "rho", "sparsity", "size", "noise_scale"],
    "solve": ["seed", "out", "tol", "max_iters", "instance", "solver"],
    "bench": ["seed", "out", "tol", "max_iters"],
    "flow": ["seed", "out", "p", "t_end", "h"],
    "denoise": ["seed", "out", "tol", "max_iters", "input", "rho", "size", "noise_scale"],
}

_COMMANDS = {
    "gen": cmd_gen,
    "solve": cmd_solve,
    "bench": cmd_bench,
    "flow": cmd_flow,
    "denoise": cmd_denoise,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {k: getattr(args, k, None) for k in _OVERRIDE_KEYS[args.command]}
    try:
        cfg = RunConfig.build(args.command, args.config, overrides)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # solver or I/O failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
