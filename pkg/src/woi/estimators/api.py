"""Public estimator entry points built on the shared walk engine."""

import numpy as np

from ..densities import InterfaceProblem, SchedulePDF, build_coefficients
from ..geometry import Ray
from ..kernels import KernelContext, poincare_kernel
from .config import EstimateReport, EstimatorConfig
from .engine import run_walk_estimator, stream_rng

__all__ = [
    "woi_estimate",
    "woi_vr_estimate",
    "gradient_estimate",
    "wob_estimate",
    "naive_woi_estimate",
    "transition_sample",
    "WalkState",
]

NAIVE_TREE_GUARD = 10**5


def woi_estimate(problem: InterfaceProblem, queries, cfg: EstimatorConfig) -> EstimateReport:
    """Accelerated walk estimator for the interface problem at batched queries."""
    return run_walk_estimator(problem, queries, cfg, vr=False)


def woi_vr_estimate(problem: InterfaceProblem, queries, cfg: EstimatorConfig) -> EstimateReport:
    """Variance-reduced variant: every sample averages a coupled chain pair,
    so cfg.walkers chains yield cfg.walkers/2 aggregation units."""
    return run_walk_estimator(problem, queries, cfg, vr=True)


def gradient_estimate(problem: InterfaceProblem, queries, cfg: EstimatorConfig) -> EstimateReport:
    """Solution-gradient estimate: identical walks, with the Green's function
    replaced by its query-point gradient.  Queries inside the near-surface
    guard band are flagged in the report, not rejected."""
    import dataclasses

    gcfg = dataclasses.replace(cfg, gradient=True)
    return run_walk_estimator(problem, queries, gcfg, vr=(cfg.variant == "woi-vr"))


def wob_estimate(problem: InterfaceProblem, x, cfg: EstimatorConfig) -> EstimateReport:
    """Boundary-walk estimator for the single-surface interior Neumann problem.

    The chain moves by ray casting on the boundary; with N = 1 the interface
    series reduces exactly to the classic boundary-walk weights (the 2^i
    growth against the per-step halving cancels, leaving 2 Q_0 T_i per term
    and half that at the truncation step).
    """
    if problem.n != 1:
        raise ValueError("the boundary-walk estimator needs a single-surface problem")
    import dataclasses

    rcfg = dataclasses.replace(cfg, transition="ray-cast")
    return run_walk_estimator(problem, x, rcfg, vr=False)


def naive_woi_estimate(problem: InterfaceProblem, x, cfg: EstimatorConfig, n_traversals=None):
    """Exhaustive Markov-tree estimator (the slow structural oracle).

    Enumerates every index tuple (h_0..h_i) for i = 0..M over one shared tree
    of chain prefixes per traversal and accumulates

        w_i * (prod_m alpha_{h_m}) * Q*_i * Phi(x, Y_i)

    with uniform-area transitions.  Returns an EstimateReport whose units are
    whole traversals.
    """
    queries = np.atleast_2d(np.asarray(x, dtype=float))
    n = problem.n
    m_steps = cfg.steps
    if n**m_steps > NAIVE_TREE_GUARD:
        raise ValueError(
            f"N^M = {n**m_steps} exceeds the tree-traversal guard ({NAIVE_TREE_GUARD}); "
            "use the accelerated estimator instead"
        )
    trees = int(n_traversals if n_traversals is not None else cfg.walkers)
    coeffs = build_coefficients(problem)
    ctx = KernelContext(problem.dim)
    tree = problem.tree
    surfaces = [tree.surface(i) for i in range(1, n + 1)]
    areas = [s.area() for s in surfaces]
    weights = np.ones(m_steps + 1)
    weights[m_steps] = 0.5
    rng = stream_rng(cfg.seed, 0x4E414956)

    from ..kernels import green_from_r2

    def phi_sum(y, qstar, w_i):
        # qstar-weighted Green's contributions of (trees, d) points y at the
        # query batch; returns (trees, n_q).
        r2 = ((queries[None, :, :] - y[:, None, :]) ** 2).sum(axis=2)
        with np.errstate(divide="ignore"):
            return w_i * qstar[:, None] * green_from_r2(ctx, r2)

    totals = np.zeros((trees, queries.shape[0]))

    def visit(level, h_prev0, y_prev, qstar_prev, alpha_prod):
        # Tuple (h_0..h_level) with h_level = h_prev0 + 1; contributions of
        # this node, then recurse one level deeper for every next index.
        nonlocal totals
        totals += phi_sum(y_prev, alpha_prod * qstar_prev, weights[level])
        if level == m_steps:
            return
        for k in range(n):
            y = surfaces[k].sample_batch(rng, trees)
            nrm = surfaces[k].normals(y)
            diff = y - y_prev
            r2 = np.einsum("ij,ij->i", diff, diff)
            dots = np.einsum("ij,ij->i", diff, nrm)
            with np.errstate(divide="ignore", invalid="ignore"):
                kvals = ctx.inv_sphere_area * dots * r2 ** (-0.5 * problem.dim)
            kvals = np.where(np.isfinite(kvals), kvals, 0.0)
            qstar = qstar_prev * kvals * areas[k]
            visit(level + 1, k, y, qstar, alpha_prod * coeffs.alpha[k])

    for k in range(n):
        y0 = surfaces[k].sample_batch(rng, trees)
        beta0 = coeffs.betas[k](y0, surfaces[k].normals(y0))
        visit(0, k, y0, beta0 * areas[k], 1.0)

    estimates = totals.mean(axis=0)
    variance = totals.var(axis=0, ddof=1) if trees > 1 else np.zeros(queries.shape[0])
    return EstimateReport(
        points=queries,
        estimates=estimates,
        walkers=trees,
        schedules=trees,
        variance=variance,
        w_effective=trees,
    )


class WalkState:
    """Single-walker chain state for the scalar transition API."""

    def __init__(self, step, point, surface_index, q, t):
        self.step = int(step)
        self.point = np.asarray(point, dtype=float)
        self.surface_index = int(surface_index)
        self.q = float(q)
        self.t = float(t)


def transition_sample(mode, problem, state: WalkState, to_surface: int, rng):
    """One transition draw: (point, pdf value, T factor, diagnostics dict).

    uniform-area: a uniform draw on the target surface, pdf 1/area, T = 1.
    ray-cast (same surface only): uniform line direction, one of the q
    intersections chosen uniformly; pdf per the boundary-walk density and
    T = q * sign((y_new - y_old) . n(y_new)).  A cross-surface ray-cast
    request falls back to uniform-area and reports it.
    """
    tree = problem.tree
    surf = tree.surface(to_surface)
    ctx = KernelContext(problem.dim)
    diagnostics = {"cross_surface_fallback": False, "ray_retries": 0}

    if mode == "ray-cast" and to_surface != state.surface_index:
        diagnostics["cross_surface_fallback"] = True
        mode = "uniform-area"

    if mode == "uniform-area":
        pt, pdf = surf.sample(rng)
        return pt, pdf, 1.0, diagnostics

    if mode != "ray-cast":
        raise ValueError(f"unknown transition mode {mode!r}")

    origin = state.point
    for attempt in range(64):
        z = rng.standard_normal(problem.dim)
        u = z / np.linalg.norm(z)
        if attempt > 0:
            diagnostics["ray_retries"] += 1
        hits = surf.intersections(Ray(origin, u))
        hits += surf.intersections(Ray(origin, -u))
        if not hits:
            continue
        q = len(hits)
        _, p = hits[int(rng.integers(q))]
        n_p = surf.normals(np.atleast_2d(p))[0]
        dot = float(np.dot(p - origin, n_p))
        r = float(np.linalg.norm(p - origin))
        pdf = 2.0 * ctx.inv_sphere_area * abs(dot) / (q * r**problem.dim)
        return p, pdf, q * np.sign(dot), diagnostics
    raise RuntimeError("no ray intersection after 64 direction resamples")
