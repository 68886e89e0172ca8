"""Command-line pipeline: JSON scenario configs in, CSV/JSON/DOT files out.

Exit codes: 0 success, 2 config error, 3 numerical-fidelity error
(e.g. a dropping-lemma violation signalling a too-coarse discretization).
"""

from __future__ import annotations

import argparse
import ast
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .field import (
    SpatialGrid,
    StateField,
    field_from_modes,
    write_field_csv,
    zero_number,
)
from .dynamics import (
    CoefficientSpec,
    StepController,
    DiscretizationFidelityError,
    integrate,
    build_cutoff,
    preset_spec,
)
from .equilibria import find_equilibria, sturm_permutation
from .compactify import infinity_equilibria, sphere_flow_run, mode_energy
from .connection import Scenario, assemble_attractor, ymap

__all__ = ["main", "ConfigError", "load_config"]


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config

_SCHEMA = {
    "grid": {"n": int},
    "coeff": {
        "preset": str, "b": float, "a_inf": float, "strength": float,
        "a_expr": str, "f_expr": str, "f_bound": float, "eps": float,
        "cutoff_radius": float,
    },
    "scan": {"eta_min": float, "eta_max": float, "scan_n": int},
    "integrate": {
        "dt_init": float, "dt_min": float, "dt_max": float, "t_max": float,
        "growup_threshold": float, "rtol": float, "atol": float,
        "convergence_tol": float,
    },
    "track": {"modes": int},
    "init": {"modes": dict, "noise_amplitude": float},
    "sphere": {"n_modes": int, "t_max": float},
    "ymap": {"n": int, "reference_id": int, "amplitude": float},
    "sweep": {"b_values": list},
    "seeds": list,
    "output": {"dir": str},
}


def _check_keys(cfg: dict, schema: dict, prefix: str = "") -> None:
    for key, val in cfg.items():
        path = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError(f"unknown config key: {path}")
        spec = schema[key]
        if isinstance(spec, dict) and spec and not isinstance(
                next(iter(spec.values()), None), type):
            pass
        if isinstance(spec, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {path} must be an object")
            _check_keys(val, spec, path + ".")
        elif spec is float:
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise ConfigError(f"config key {path} must be a number")
        elif spec is int:
            if not isinstance(val, int) or isinstance(val, bool):
                raise ConfigError(f"config key {path} must be an integer")
        elif not isinstance(val, spec):
            raise ConfigError(f"config key {path} must be {spec.__name__}")


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(cfg, _SCHEMA)
    return cfg


# --------------------------------------------- inline coefficient grammar

_ALLOWED_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "tanh": np.tanh,
    "cosh": np.cosh, "sinh": np.sinh, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "arctan": np.arctan, "atan": np.arctan,
}
_ALLOWED_NAMES = {"x", "u", "p", "norm", "pi"}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
    ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub,
    ast.UAdd,
)


def compile_expr(expr: str):
    """Compile a small arithmetic expression over {x, u, p, norm}.

    Returns (callable(x, u, p, norm) -> array, uses_norm).
    """
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"bad coefficient expression {expr!r}: {exc}") from exc
    uses_norm = False
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ConfigError(
                f"disallowed construct {type(node).__name__} in {expr!r}"
            )
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or \
                    node.func.id not in _ALLOWED_FUNCS or node.keywords:
                raise ConfigError(f"disallowed function call in {expr!r}")
        if isinstance(node, ast.Name):
            if node.id in _ALLOWED_FUNCS:
                continue
            if node.id not in _ALLOWED_NAMES:
                raise ConfigError(f"unknown name {node.id!r} in {expr!r}")
            if node.id == "norm":
                uses_norm = True
        if isinstance(node, ast.Constant) and not isinstance(
                node.value, (int, float)):
            raise ConfigError(f"non-numeric constant in {expr!r}")
    code = compile(tree, "<coefficient>", "eval")

    def fn(x, u, p, nrm=0.0):
        env = {"x": x, "u": u, "p": p, "norm": nrm, "pi": np.pi}
        env.update(_ALLOWED_FUNCS)
        out = eval(code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(out, dtype=float),
                               np.shape(u)).astype(float)

    return fn, uses_norm


# ------------------------------------------------------------- assembly

def build_coeff(cfg: dict) -> CoefficientSpec:
    co = cfg.get("coeff", {})
    b = float(co.get("b", 1.0))
    a_inf = float(co.get("a_inf", 1.0))
    if "preset" in co:
        spec = preset_spec(co["preset"], b=b, a_inf=a_inf,
                           strength=float(co.get("strength", 1.0)))
    elif "a_expr" in co or "f_expr" in co:
        a_fn, a_norm = compile_expr(co.get("a_expr", "1.0"))
        f_fn, f_norm = compile_expr(co.get("f_expr", "0.0"))
        if f_norm:
            raise ConfigError("f_expr may not depend on the global norm")
        if "f_bound" not in co:
            raise ConfigError("inline coefficients require coeff.f_bound")
        if a_norm:
            a = lambda x, u, p, nrm: a_fn(x, u, p, nrm)
        else:
            a = lambda x, u, p: a_fn(x, u, p)
        spec = CoefficientSpec(
            a=a, f=lambda x, u, p: f_fn(x, u, p), b=b, a_inf=a_inf,
            f_bound=float(co["f_bound"]), eps=float(co.get("eps", 1e-6)),
            a_takes_norm=a_norm, name="inline",
        )
    else:
        raise ConfigError("coeff needs either a preset or inline expressions")
    if "cutoff_radius" in co:
        spec = build_cutoff(spec, float(co["cutoff_radius"]))
    return spec


def build_controller(cfg: dict) -> StepController:
    it = cfg.get("integrate", {})
    return StepController(
        dt_init=float(it.get("dt_init", 1e-3)),
        dt_min=float(it.get("dt_min", 1e-8)),
        dt_max=float(it.get("dt_max", 1e-1)),
        rtol=float(it.get("rtol", 1e-6)),
        atol=float(it.get("atol", 1e-9)),
        growup_norm_threshold=float(it.get("growup_threshold", 1e6)),
        convergence_tol=float(it.get("convergence_tol", 1e-9)),
        t_max=float(it.get("t_max", 10.0)),
    )


def build_grid(cfg: dict) -> SpatialGrid:
    return SpatialGrid(int(cfg.get("grid", {}).get("n", 257)))


def _seeds(cfg: dict, override) -> list:
    if override is not None:
        return [int(override)]
    return [int(s) for s in cfg.get("seeds", [0])]


def build_initial(cfg: dict, grid: SpatialGrid, seed: int,
                  j_track: int) -> StateField:
    init = cfg.get("init", {})
    coeffs = np.zeros(max(j_track + 1, 1 + max(
        (int(k) for k in init.get("modes", {})), default=0)))
    for k, v in init.get("modes", {}).items():
        coeffs[int(k)] = float(v)
    amp = float(init.get("noise_amplitude", 0.0))
    if amp > 0:
        rng = np.random.default_rng(seed)
        coeffs[:j_track + 1] += amp * rng.standard_normal(j_track + 1)
    if not np.any(coeffs):
        coeffs[0] = 1.0
    return field_from_modes(grid, coeffs)


# ------------------------------------------------------------ subcommands

def _write_trajectory_csv(path: str, tr, j_track: int) -> None:
    with open(path, "w") as fh:
        cols = ",".join(f"u_{j}" for j in range(j_track + 1))
        fh.write(f"t,norm,z,{cols}\n")
        z = tr.zero_history if tr.zero_history is not None \
            else np.full(len(tr.times), -1)
        for i, t in enumerate(tr.times):
            mode_cols = ",".join(f"{v:.17g}" for v in tr.mode_history[i])
            fh.write(f"{t:.17g},{tr.norms[i]:.17g},{int(z[i])},{mode_cols}\n")


def cmd_simulate(cfg, out, seeds, emit_plots) -> int:
    grid = build_grid(cfg)
    c = build_coeff(cfg)
    ctrl = build_controller(cfg)
    j_track = int(cfg.get("track", {}).get("modes", 8))
    zero_ref = StateField(grid, np.zeros(grid.n_points))
    for seed in seeds:
        u0 = build_initial(cfg, grid, seed, j_track)
        tr = integrate(u0, ctrl, c, reference=zero_ref, j_track=j_track)
        tag = f"_seed{seed}" if len(seeds) > 1 else ""
        _write_trajectory_csv(os.path.join(out, f"trajectory{tag}.csv"),
                              tr, j_track)
        write_field_csv(tr.final_field(),
                        os.path.join(out, f"final_state{tag}.csv"))
        if emit_plots:
            with open(os.path.join(out, f"norm_vs_t{tag}.dat"), "w") as fh:
                for t, nv in zip(tr.times, tr.norms):
                    fh.write(f"{t:.17g} {nv:.17g}\n")
        print(f"simulate seed={seed}: outcome={tr.outcome} "
              f"t_end={tr.times[-1]:.6g} norm_end={tr.norms[-1]:.6g}")
    return 0


def _equilibria_records(cfg, grid, c):
    sc = cfg.get("scan", {})
    return find_equilibria(
        float(sc.get("eta_min", -2.0)), float(sc.get("eta_max", 2.0)),
        int(sc.get("scan_n", 101)), c, grid=grid,
    )


def cmd_equilibria(cfg, out, seeds, emit_plots) -> int:
    grid = build_grid(cfg)
    c = build_coeff(cfg)
    eqs = _equilibria_records(cfg, grid, c)
    with open(os.path.join(out, "equilibria.csv"), "w") as fh:
        lam_cols = ",".join(f"lambda_{k}" for k in range(16))
        fh.write(f"id,eta,u_pi,morse,hyperbolic,{lam_cols}\n")
        for e in eqs:
            lams = list(e.eigenvalues) + [math.nan] * (16 - len(e.eigenvalues))
            lam_txt = ",".join(f"{v:.17g}" for v in lams[:16])
            fh.write(f"{e.id},{e.eta:.17g},{e.right_value:.17g},"
                     f"{e.morse_index},{int(e.hyperbolic)},{lam_txt}\n")
        for e in eqs:
            write_field_csv(e.profile,
                            os.path.join(out, f"profile_e{e.id}.csv"))
    perm = sturm_permutation(eqs)
    with open(os.path.join(out, "permutation.json"), "w") as fh:
        json.dump(perm.one_based(), fh)
        fh.write("\n")
    print(f"equilibria: found {len(eqs)}")
    return 0


def cmd_infinity(cfg, out, seeds, emit_plots) -> int:
    grid = build_grid(cfg)
    c = build_coeff(cfg)
    eqs = infinity_equilibria(c.a_inf, c.b, grid)
    with open(os.path.join(out, "infinity.json"), "w") as fh:
        json.dump([{"j": p.j, "sign": p.sign} for p in eqs], fh)
        fh.write("\n")
    sph = cfg.get("sphere", {})
    n_modes = int(sph.get("n_modes", 32))
    t_max = float(sph.get("t_max", 50.0))
    for seed in seeds:
        rng = np.random.default_rng(seed)
        coeffs = rng.standard_normal(n_modes)
        coeffs /= np.linalg.norm(coeffs)
        chi0 = field_from_modes(grid, coeffs)
        res = sphere_flow_run(chi0, c.a_inf, t_max=t_max, n_modes=n_modes)
        tag = f"_seed{seed}" if len(seeds) > 1 else ""
        with open(os.path.join(out, f"sphere_trajectory{tag}.csv"), "w") as fh:
            cols = ",".join(f"chi_{j}" for j in range(n_modes))
            fh.write(f"t,z,{cols}\n")
            for t, cc in zip(res.times, res.coeff_history):
                row = ",".join(f"{v:.17g}" for v in cc)
                fh.write(f"{t:.17g},0,{row}\n")
        with open(os.path.join(out, f"e_infinity{tag}.csv"), "w") as fh:
            fh.write("t,E\n")
            for t, ev in zip(res.times, res.energies):
                fh.write(f"{t:.17g},{ev:.17g}\n")
        if emit_plots:
            with open(os.path.join(out, f"e_infinity{tag}.dat"), "w") as fh:
                for t, ev in zip(res.times, res.energies):
                    fh.write(f"{t:.17g} {ev:.17g}\n")
        print(f"infinity seed={seed}: limit={res.limit_index} "
              f"sign={res.limit_sign}")
    print(f"infinity: {len(eqs)} equilibria at infinity")
    return 0


def _graph_scenario(cfg, grid, c, ctrl, name) -> Scenario:
    sc = cfg.get("scan", {})
    return Scenario(
        coeff=c, ctrl=ctrl, grid=grid,
        eta_min=float(sc.get("eta_min", -2.0)),
        eta_max=float(sc.get("eta_max", 2.0)),
        scan_n=int(sc.get("scan_n", 101)),
        name=name,
    )


def cmd_graph(cfg, out, seeds, emit_plots) -> int:
    grid = build_grid(cfg)
    c = build_coeff(cfg)
    ctrl = build_controller(cfg)
    report = assemble_attractor(_graph_scenario(cfg, grid, c, ctrl, "graph"))
    with open(os.path.join(out, "report.json"), "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    with open(os.path.join(out, "graph.dot"), "w") as fh:
        fh.write(report.to_dot())
    n_ver = sum(e.status == "VerifiedNumerically" for e in report.graph.edges)
    print(f"graph: {len(report.graph.nodes)} nodes, "
          f"{len(report.graph.edges)} edges, {n_ver} verified, "
          f"{len(report.unverified)} unverified")
    return 0


def cmd_ymap(cfg, out, seeds, emit_plots) -> int:
    grid = build_grid(cfg)
    c = build_coeff(cfg)
    ctrl = build_controller(cfg)
    eqs = _equilibria_records(cfg, grid, c)
    ycfg = cfg.get("ymap", {})
    ref_id = int(ycfg.get("reference_id", 0))
    refs = [e for e in eqs if e.id == ref_id]
    if not refs:
        raise ConfigError(f"ymap.reference_id {ref_id} not among equilibria")
    ref = refs[0]
    n = int(ycfg.get("n", max(ref.morse_index - 1, 0)))
    amp = float(ycfg.get("amplitude", 1e-4))
    results = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        vals = ref.profile.values.copy()
        n_dirs = min(n + 1, ref.eigenfunctions.shape[1])
        w = rng.standard_normal(n_dirs)
        w /= np.linalg.norm(w)
        for k in range(n_dirs):
            vals = vals + amp * w[k] * ref.eigenfunctions[:, k]
        tr = integrate(StateField(grid, vals), ctrl, c,
                       reference=ref.profile, j_track=max(8, n))
        res = ymap(tr, ref, n)
        results.append({
            "seed": seed,
            "n": res.n,
            "t_k": [None if math.isinf(t) else t for t in res.dropping_times],
            "tau": list(res.tau),
            "iota": [int(s) for s in res.signs],
            "y": list(res.coords),
            "sum_y_sq": float(np.sum(res.coords ** 2)),
        })
    with open(os.path.join(out, "ymap.json"), "w") as fh:
        json.dump(results, fh, indent=2)
        fh.write("\n")
    print(f"ymap: {len(results)} trajectories against e{ref_id}")
    return 0


def _sweep_one(args):
    cfg, out, b = args
    sub = dict(cfg)
    sub = json.loads(json.dumps(cfg))  # deep copy
    sub.setdefault("coeff", {})["b"] = b
    sub.pop("sweep", None)
    subdir = os.path.join(out, f"b_{b:g}")
    os.makedirs(subdir, exist_ok=True)
    return cmd_graph(sub, subdir, [0], False)


def cmd_sweep(cfg, out, seeds, emit_plots, jobs: int = 1) -> int:
    b_values = cfg.get("sweep", {}).get("b_values")
    if not b_values:
        raise ConfigError("sweep requires sweep.b_values")
    tasks = [(cfg, out, float(b)) for b in b_values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            codes = list(pool.map(_sweep_one, tasks))
    else:
        codes = [_sweep_one(t) for t in tasks]
    return max(codes) if codes else 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "equilibria": cmd_equilibria,
    "infinity": cmd_infinity,
    "graph": cmd_graph,
    "ymap": cmd_ymap,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sturmlab",
        description="Simulate grow-up dynamics and assemble connection graphs",
    )
    parser.add_argument("subcommand",
                        choices=sorted(_COMMANDS) + ["sweep"])
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--emit-plots-data", action="store_true")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        out = args.out or cfg.get("output", {}).get("dir", ".")
        os.makedirs(out, exist_ok=True)
        seeds = _seeds(cfg, args.seed)
        if args.subcommand == "sweep":
            return cmd_sweep(cfg, out, seeds, args.emit_plots_data,
                             jobs=args.jobs)
        return _COMMANDS[args.subcommand](cfg, out, seeds,
                                         args.emit_plots_data)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DiscretizationFidelityError as exc:
        print(f"numerical-fidelity error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
