"""Experiment driver: config ingestion, estimator dispatch, convergence
studies, boundary-map evaluation, and CSV/JSON output emission.

Outputs are plain CSV (17 significant digits, round-trip exact for doubles)
plus a JSON report, so plotting tools and the surrogate trainer consume them
without shared code.
"""

import argparse
import dataclasses
import json
import math
import os
import sys
import time

import numpy as np

from .densities import InterfaceProblem, boundary_data, tabulated_boundary_data, zero_data
from .estimators import (
    EstimatorConfig,
    gradient_estimate,
    naive_woi_estimate,
    wob_estimate,
    woi_estimate,
    woi_vr_estimate,
)
from .geometry import Sphere, load_domain_json
from .problems import benchmark_by_name, l2_error, l2_error_vector

__all__ = ["RunConfig", "run", "ntd_map", "emit_training_set", "main"]

_ALLOWED_KEYS = {
    "benchmark",
    "benchmark_params",
    "problem",
    "estimator",
    "walkers",
    "steps",
    "schedules",
    "seed",
    "threads",
    "transition",
    "coupling",
    "gradient",
    "queries",
    "x_ref",
    "out",
    "convergence",
    "emit_training",
    "chain_groups",
}

_ALLOWED_QUERY_KEYS = {"kind", "resolution", "n", "surface", "n_theta", "n_phi", "margin", "extent"}


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class RunConfig:
    benchmark: str | None = None
    benchmark_params: dict = dataclasses.field(default_factory=dict)
    problem: dict | None = None
    estimator: str = "woi"
    walkers: int = 100_000
    steps: int | None = None
    schedules: int | None = None
    seed: int = 0
    threads: int = 1
    transition: str | None = None
    coupling: str | None = None
    gradient: bool = False
    queries: dict = dataclasses.field(default_factory=lambda: {"kind": "grid", "resolution": 20})
    x_ref: list | None = None
    out: str = "."
    convergence: list | None = None
    emit_training: dict | None = None
    # Chains are shared across batched queries for tractability; splitting the
    # batch over independent chain groups decorrelates the pointwise errors
    # (each point still sees the full walker budget).
    chain_groups: int = 1

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        unknown = set(doc) - _ALLOWED_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "queries" in doc:
            bad = set(doc["queries"]) - _ALLOWED_QUERY_KEYS
            if bad:
                raise ConfigError(f"unknown query keys: {sorted(bad)}")
        cfg = cls(**doc)
        if cfg.benchmark is None and cfg.problem is None:
            raise ConfigError("config needs either a benchmark name or a custom problem")
        if cfg.estimator not in ("wob", "naive-woi", "woi", "woi-vr"):
            raise ConfigError(f"unknown estimator {cfg.estimator!r}")
        if cfg.walkers < 1:
            raise ConfigError("walkers must be positive")
        return cfg


def _custom_problem(doc: dict) -> InterfaceProblem:
    """Build an InterfaceProblem from {domain, boundary_data, jump_data}."""
    tree = load_domain_json(doc["domain"])

    def make_data(spec):
        if spec is None:
            return zero_data
        if "csv" in spec:
            return tabulated_boundary_data(spec["csv"])
        params = {k: v for k, v in spec.items() if k != "name"}
        return boundary_data(spec["name"], **params)

    b1 = make_data(doc.get("boundary_data"))
    jumps = {int(k): make_data(v) for k, v in doc.get("jump_data", {}).items()}
    return InterfaceProblem(tree, b1, jumps, max_steps=doc.get("max_steps", 4))


def _resolve(config: RunConfig):
    """Benchmark (or custom problem wrapper) plus the estimator config."""
    if config.benchmark is not None:
        bench = benchmark_by_name(config.benchmark, **config.benchmark_params)
    else:
        from .problems import Benchmark

        problem = _custom_problem(config.problem)
        bench = Benchmark(name="custom", problem=problem)
    steps = config.steps if config.steps is not None else bench.default_steps
    transition = config.transition or bench.default_transition
    coupling = config.coupling or bench.default_coupling
    est_cfg = EstimatorConfig(
        steps=steps,
        walkers=config.walkers,
        schedules=config.schedules,
        transition=transition,
        seed=config.seed,
        variant=config.estimator,
        gradient=config.gradient,
        threads=config.threads,
        coupling=coupling,
    )
    return bench, est_cfg


def _dispatch(bench, est_cfg, queries, chain_groups=1):
    if est_cfg.variant == "woi":
        est = woi_estimate
    elif est_cfg.variant == "woi-vr":
        est = woi_vr_estimate
    elif est_cfg.variant == "wob":
        est = wob_estimate
    else:
        est = naive_woi_estimate
    if est_cfg.gradient:
        if est_cfg.variant not in ("woi", "woi-vr"):
            raise ValueError("gradient estimation is available for woi and woi-vr")
        est = gradient_estimate
    if chain_groups <= 1:
        return est(bench.problem, queries, est_cfg)
    return _grouped_dispatch(est, bench.problem, queries, est_cfg, chain_groups)


def _grouped_dispatch(est, problem, queries, est_cfg, groups):
    """Evaluate interleaved query subsets with independent chain groups.

    Round-robin assignment keeps spatial neighbors in different groups, so the
    per-point Monte Carlo errors decorrelate at neighbor scale while every
    point keeps the full walker budget.
    """
    import numpy as np

    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    n = queries.shape[0]
    groups = min(int(groups), n)
    first = None
    estimates = variance = None
    diagnostics = None
    total_wall = 0.0
    for g in range(groups):
        idx = np.arange(g, n, groups)
        cfg_g = dataclasses.replace(est_cfg, seed=est_cfg.seed * 0x10001 + 7919 * g)
        rep = est(problem, queries[idx], cfg_g)
        if first is None:
            first = rep
            estimates = np.zeros((n,) + rep.estimates.shape[1:])
            variance = np.zeros_like(estimates)
            diagnostics = rep.diagnostics
        else:
            diagnostics.merge(rep.diagnostics)
        estimates[idx] = rep.estimates
        variance[idx] = rep.variance
        total_wall += rep.wall_time
    from .estimators.config import EstimateReport

    return EstimateReport(
        points=queries,
        estimates=estimates,
        walkers=first.walkers,
        schedules=first.schedules,
        variance=variance,
        w_effective=first.w_effective,
        wall_time=total_wall,
        diagnostics=diagnostics,
    )


def _build_queries(bench, config: RunConfig):
    spec = dict(config.queries)
    kind = spec.get("kind", "grid")
    if kind == "grid":
        return bench.interior_queries(
            kind="grid",
            resolution=int(spec.get("resolution", 20)),
            margin=float(spec.get("margin", 0.99)),
        )
    if kind == "random":
        rng = np.random.default_rng(config.seed + 777)
        return bench.interior_queries(kind="random", n=int(spec.get("n", 1000)), rng=rng)
    if kind == "cartesian-grid":
        # Square grid centered on the domain; defaults to the inscribed square
        # of a circular/spherical boundary so every node is interior.
        surf = bench.problem.tree.surface(1)
        res = int(spec.get("resolution", 32))
        extent = spec.get("extent")
        if extent is None:
            extent = 0.98 * surf.diameter() / (2.0 * math.sqrt(2.0))
        axes = [np.linspace(-extent, extent, res) for _ in range(bench.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return surf.center + np.stack([m.ravel() for m in mesh], axis=-1)
    if kind == "surface-grid":
        return surface_grid_points(
            bench.problem.tree.surface(int(spec.get("surface", 1))),
            int(spec.get("n_theta", 24)),
            int(spec.get("n_phi", 12)),
        )[1]
    raise ConfigError(f"unknown query kind {kind!r}")


def surface_grid_points(surface, n_theta: int, n_phi: int):
    """Parametric grid on a circle (theta) or sphere (theta, phi).

    Returns (param_rows, points); param_rows carries the angles for the CSV.
    """
    if not isinstance(surface, Sphere):
        raise ValueError("surface grids require a spherical boundary/interface")
    if surface.dim == 2:
        theta = np.linspace(0.0, 2.0 * math.pi, max(n_theta, 0), endpoint=False)
        pts = surface.center + surface.radius * np.stack(
            [np.cos(theta), np.sin(theta)], axis=-1
        )
        return theta.reshape(-1, 1), pts
    if surface.dim == 3:
        theta = np.linspace(0.0, 2.0 * math.pi, max(n_theta, 0), endpoint=False)
        # Interior phi nodes avoid the poles where theta degenerates.
        phi = (np.arange(n_phi) + 0.5) * math.pi / max(n_phi, 1)
        tt, pp = np.meshgrid(theta, phi, indexing="ij")
        pts = surface.center + surface.radius * np.stack(
            [np.sin(pp) * np.cos(tt), np.sin(pp) * np.sin(tt), np.cos(pp)], axis=-1
        ).reshape(-1, 3)
        return np.stack([tt.ravel(), pp.ravel()], axis=-1), pts.reshape(-1, 3)
    raise ValueError("surface grids support dim 2 and 3 only")


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _solution_rows(report, gradient):
    est = np.atleast_1d(report.estimates)
    var = np.atleast_1d(report.variance)
    ci = np.atleast_1d(report.ci_halfwidth)
    rows = []
    for i, p in enumerate(report.points):
        row = list(p)
        if gradient:
            row += list(est[i]) + [float(np.max(var[i])), float(np.max(ci[i]))]
        else:
            row += [est[i], var[i], ci[i]]
        rows.append(row)
    return rows


def _solution_header(dim, gradient):
    cols = [f"x_{j+1}" for j in range(dim)]
    if gradient:
        cols += [f"grad_{j+1}" for j in range(dim)]
    else:
        cols += ["estimate"]
    cols += ["variance", "ci_halfwidth"]
    return cols


def run(config: RunConfig) -> dict:
    """Execute one run; writes solution.csv and report.json under config.out."""
    bench, est_cfg = _resolve(config)
    os.makedirs(config.out, exist_ok=True)
    t_start = time.perf_counter()

    queries = _build_queries(bench, config)
    x_ref = np.asarray(
        config.x_ref if config.x_ref is not None else
        (bench.x_ref if bench.x_ref is not None else queries[0]),
        dtype=float,
    )
    # The reference point always rides along as row 0 so the gauge shift is
    # computable from the emitted batch alone.
    batch = np.vstack([x_ref[None, :], queries])

    report = _dispatch(bench, est_cfg, batch, config.chain_groups)

    out = {"config": _config_echo(config, est_cfg)}
    out["estimator"] = est_cfg.variant
    out["seed"] = est_cfg.seed
    out["walkers"] = report.walkers
    out["schedules"] = report.schedules
    out["steps"] = est_cfg.steps
    out["threads"] = est_cfg.threads
    out["transition"] = est_cfg.transition
    out["wall_time"] = report.wall_time
    out["diagnostics"] = report.diagnostics.as_dict()

    if bench.truth is not None:
        if config.gradient and bench.truth_gradient is not None:
            l2, rel = l2_error_vector(report.estimates, bench.truth_gradient(batch))
            out["l2_error"], out["relative_l2"] = l2, rel
        elif not config.gradient:
            l2, rel = l2_error(report.estimates, bench.truth(batch), 0)
            out["l2_error"], out["relative_l2"] = l2, rel

    if config.convergence:
        out["convergence"] = _convergence_study(bench, est_cfg, config, batch)

    if config.emit_training:
        out["training_files"] = emit_training_set(config, bench=bench, est_cfg=est_cfg)

    sol_path = os.path.join(config.out, "solution.csv")
    _write_csv(sol_path, _solution_header(bench.dim, config.gradient), _solution_rows(report, config.gradient))
    out["solution_csv"] = sol_path
    out["total_wall_time"] = time.perf_counter() - t_start

    report_path = os.path.join(config.out, "report.json")
    with open(report_path, "w") as fh:
        json.dump(out, fh, indent=2)
    out["report_json"] = report_path
    return out


def _config_echo(config: RunConfig, est_cfg: EstimatorConfig) -> dict:
    echo = dataclasses.asdict(config)
    echo["resolved_steps"] = est_cfg.steps
    echo["resolved_transition"] = est_cfg.transition
    return echo


def _convergence_study(bench, est_cfg, config, batch):
    """Relative error versus walker count, with the fitted log-log slope."""
    if bench.truth is None:
        raise ValueError("convergence study needs a benchmark with a ground truth")
    ladder = []
    for w in config.convergence:
        cfg_w = dataclasses.replace(est_cfg, walkers=int(w))
        rep = _dispatch(bench, cfg_w, batch)
        if config.gradient:
            _, rel = l2_error_vector(rep.estimates, bench.truth_gradient(batch))
        else:
            _, rel = l2_error(rep.estimates, bench.truth(batch), 0)
        ladder.append({"walkers": int(w), "relative_l2": rel})
    logw = np.log([e["walkers"] for e in ladder])
    logr = np.log([e["relative_l2"] for e in ladder])
    slope = float(np.polyfit(logw, logr, 1)[0])
    return {"ladder": ladder, "slope": slope}


def ntd_map(config: RunConfig) -> dict:
    """Flux-to-solution surface map over a parametric grid, written as CSV."""
    bench, est_cfg = _resolve(config)
    os.makedirs(config.out, exist_ok=True)
    spec = dict(config.queries)
    surf_idx = int(spec.get("surface", 1))
    surface = bench.problem.tree.surface(surf_idx)
    params, pts = surface_grid_points(
        surface, int(spec.get("n_theta", 24)), int(spec.get("n_phi", 12))
    )
    out_doc = {"surface": surf_idx, "estimator": est_cfg.variant}
    path = os.path.join(config.out, "ntd_map.csv")
    dim = bench.dim
    angle_cols = ["theta"] if dim == 2 else ["theta", "phi"]
    header = angle_cols + [f"x_{j+1}" for j in range(dim)] + ["estimate", "variance", "ci_halfwidth"]
    if pts.shape[0] == 0:
        _write_csv(path, header, [])
        out_doc["rows"] = 0
        out_doc["csv"] = path
        return out_doc

    x_ref = np.asarray(
        config.x_ref if config.x_ref is not None else
        (bench.x_ref if bench.x_ref is not None else pts[0]),
        dtype=float,
    )
    batch = np.vstack([x_ref[None, :], pts])
    report = _dispatch(bench, est_cfg, batch)
    est = report.estimates
    var = report.variance
    ci = report.ci_halfwidth
    rows = []
    for i in range(pts.shape[0]):
        rows.append(list(params[i]) + list(pts[i]) + [est[i + 1], var[i + 1], ci[i + 1]])
    _write_csv(path, header, rows)
    out_doc["rows"] = len(rows)
    out_doc["csv"] = path
    if bench.truth is not None:
        l2, rel = l2_error(est, bench.truth(batch), 0)
        out_doc["l2_error"], out_doc["relative_l2"] = l2, rel
    out_doc["wall_time"] = report.wall_time
    return out_doc


def emit_training_set(config: RunConfig, bench=None, est_cfg=None) -> dict:
    """Interior estimates plus boundary flux rows for the surrogate trainer.

    interior.csv: x_1..x_d, u_hat;  boundary.csv: x_1..x_d, n_1..n_d, b1.
    """
    if bench is None:
        bench, est_cfg = _resolve(config)
    os.makedirs(config.out, exist_ok=True)
    spec = config.emit_training or {}
    n_int = int(spec.get("interior", 1000))
    n_bc = int(spec.get("boundary", 200))
    # Training sets default to decorrelated pointwise errors; the surrogate's
    # smoothing premise needs spatially white noise, not one shared error field.
    groups = int(spec.get("groups", 64))
    rng = np.random.default_rng(config.seed + 12345)

    interior = bench.interior_queries(kind="random", n=n_int, rng=rng)
    report = _dispatch(bench, est_cfg, interior, groups)
    int_path = os.path.join(config.out, "interior.csv")
    _write_csv(
        int_path,
        [f"x_{j+1}" for j in range(bench.dim)] + ["u_hat"],
        [list(p) + [e] for p, e in zip(interior, report.estimates)],
    )

    boundary = bench.problem.tree.surface(1)
    bpts = boundary.sample_batch(rng, n_bc)
    normals = boundary.normals(bpts)
    b1 = bench.problem.boundary_flux(bpts, normals)
    bc_path = os.path.join(config.out, "boundary.csv")
    _write_csv(
        bc_path,
        [f"x_{j+1}" for j in range(bench.dim)]
        + [f"n_{j+1}" for j in range(bench.dim)]
        + ["b1"],
        [list(p) + list(n) + [v] for p, n, v in zip(bpts, normals, b1)],
    )
    return {"interior_csv": int_path, "boundary_csv": bc_path, "interior": n_int, "boundary": n_bc}


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------


def _parser():
    p = argparse.ArgumentParser(prog="woi", description=__doc__)
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--benchmark", help="built-in benchmark name")
    p.add_argument("--estimator", choices=["wob", "naive-woi", "woi", "woi-vr"])
    p.add_argument("--walkers", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--schedules", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--transition", choices=["uniform-area", "ray-cast"])
    p.add_argument("--gradient", action="store_true", default=None)
    p.add_argument("--out")
    p.add_argument("--grid", type=int, help="interior grid resolution")
    p.add_argument("--cartesian-grid", type=int, help="square cartesian grid resolution")
    p.add_argument("--random", type=int, help="random interior query count")
    p.add_argument(
        "--surface-grid",
        help="surface query grid as SURFACE,NTHETA[,NPHI]; runs the boundary map",
    )
    p.add_argument("--convergence", help="comma-separated walker ladder, e.g. 1e4,1e5,1e6")
    p.add_argument("--emit-training", help="INTERIOR,BOUNDARY row counts")
    p.add_argument(
        "--chain-groups",
        type=int,
        help="independent chain groups for batched queries (decorrelates errors)",
    )
    return p


def _merge_args(doc: dict, args) -> dict:
    if args.benchmark:
        doc["benchmark"] = args.benchmark
    if args.estimator:
        doc["estimator"] = args.estimator
    if args.walkers is not None:
        doc["walkers"] = int(args.walkers)
    for key in ("steps", "schedules", "seed", "threads", "transition", "out"):
        val = getattr(args, key)
        if val is not None:
            doc[key] = val
    if args.gradient is not None:
        doc["gradient"] = args.gradient
    if args.grid is not None:
        doc["queries"] = {"kind": "grid", "resolution": args.grid}
    if args.cartesian_grid is not None:
        doc["queries"] = {"kind": "cartesian-grid", "resolution": args.cartesian_grid}
    if args.random is not None:
        doc["queries"] = {"kind": "random", "n": args.random}
    if args.surface_grid:
        parts = [int(v) for v in args.surface_grid.split(",")]
        q = {"kind": "surface-grid", "surface": parts[0]}
        if len(parts) > 1:
            q["n_theta"] = parts[1]
        if len(parts) > 2:
            q["n_phi"] = parts[2]
        doc["queries"] = q
    if args.convergence:
        doc["convergence"] = [float(v) for v in args.convergence.split(",")]
    if args.emit_training:
        n_int, n_bc = (int(v) for v in args.emit_training.split(","))
        doc["emit_training"] = {"interior": n_int, "boundary": n_bc}
    if args.chain_groups is not None:
        doc["chain_groups"] = args.chain_groups
    return doc


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    doc = {}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
    doc = _merge_args(doc, args)
    if "threads" not in doc and os.environ.get("WOI_THREADS"):
        doc["threads"] = int(os.environ["WOI_THREADS"])
    try:
        config = RunConfig.from_dict(doc)
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if config.queries.get("kind") == "surface-grid":
            out = ntd_map(config)
            rel = out.get("relative_l2")
            print(f"boundary map: {out['rows']} rows -> {out['csv']}"
                  + (f" (relative_l2={rel:.4g})" if rel is not None else ""))
            report_path = os.path.join(config.out, "report.json")
            with open(report_path, "w") as fh:
                json.dump(out, fh, indent=2)
        else:
            out = run(config)
            rel = out.get("relative_l2")
            msg = f"run complete -> {out['solution_csv']}"
            if rel is not None:
                msg += f" (relative_l2={rel:.4g})"
            if "convergence" in out:
                msg += f" slope={out['convergence']['slope']:.3f}"
            print(msg)
    except Exception as exc:  # estimator/problem failures
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
