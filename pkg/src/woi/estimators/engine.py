"""Vectorized Markov-chain walk engine shared by the estimator variants.

One run draws interface schedules h_0..h_M, walks chains Y_0..Y_M with
Y_i on surface h_i, and accumulates for every query x the prefix series

    sum_i  w_i * N * ||alpha||_1^i * prod_{m<=i} sign(alpha_{h_m})
            * Q*_i * T_i * Phi(x, Y_i)

where Q*_i carries the kernel-over-transition-density products and T_i the
intersection-count/orientation bookkeeping of ray-cast steps.  One chain
serves every truncation order i simultaneously, and all query points share
the same chains (the chain law never depends on x).

Parallelism is over fixed-size walker blocks; every block owns a
counter-based RNG stream keyed by (seed, schedule-group, block), so results
are bitwise reproducible for any thread count.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..densities import InterfaceProblem, SchedulePDF, build_coefficients
from ..geometry import Ray
from ..kernels import KernelContext, green_from_r2, poincare_kernel_rows
from .config import Diagnostics, EstimateReport, EstimatorConfig, Stopwatch

__all__ = ["run_walk_estimator", "walk_debug", "stream_rng"]

SINGULAR2 = 1e-28  # squared distance below which a query/sample pair resamples
MAX_RESAMPLE = 8
RETRY_STREAM = 0x52455452
SCHEDULE_STREAM = 0x53434845
GRAD_GUARD_FRACTION = 1e-3  # of the domain diameter


def _mix64(x: int) -> int:
    x &= 0xFFFFFFFFFFFFFFFF
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & 0xFFFFFFFFFFFFFFFF
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def stream_rng(seed: int, *ids: int) -> np.random.Generator:
    """Independent counter-based stream keyed by (seed, *ids)."""
    h = _mix64(seed ^ 0x9E3779B97F4A7C15)
    for v in ids:
        h = _mix64(h ^ _mix64(v + 0x165667B19E3779F9))
    key = np.array([h, _mix64(h + 1)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class _Tables:
    """Problem quantities precomputed once per run."""

    def __init__(self, problem: InterfaceProblem, steps: int):
        self.problem = problem
        self.tree = problem.tree
        self.n = problem.n
        self.dim = problem.dim
        self.ctx = KernelContext(self.dim)
        coeffs = build_coefficients(problem)
        coeffs.max_steps = steps
        self.coeffs = coeffs
        self.pdf = SchedulePDF(coeffs)
        self.surfaces = [self.tree.surface(i) for i in range(1, self.n + 1)]
        self.areas = np.array([s.area() for s in self.surfaces])
        self.signs = np.sign(coeffs.alpha)
        # Per-step deterministic prefactor w_i * N * ||alpha||_1^i.
        w = np.ones(steps + 1)
        w[steps] = 0.5
        self.prefactor = w * self.n * coeffs.alpha_l1 ** np.arange(steps + 1)
        self.steps = steps

    def _grouped(self, idx0, apply):
        for k in range(self.n):
            rows = np.nonzero(idx0 == k)[0]
            if rows.size:
                apply(k, rows)

    def sample_grouped(self, idx0, rng):
        """Uniform samples on per-row surfaces (idx0 is 0-based); draws happen
        in fixed surface order so the stream stays deterministic."""
        out = np.empty((idx0.shape[0], self.dim))
        self._grouped(idx0, lambda k, r: out.__setitem__(r, self.surfaces[k].sample_batch(rng, r.size)))
        return out

    def antipode_grouped(self, idx0, pts):
        out = np.empty_like(pts)
        self._grouped(idx0, lambda k, r: out.__setitem__(r, self.surfaces[k].antipode(pts[r])))
        return out

    def normals_grouped(self, idx0, pts):
        out = np.empty_like(pts)
        self._grouped(idx0, lambda k, r: out.__setitem__(r, self.surfaces[k].normals(pts[r])))
        return out

    def beta_grouped(self, idx0, pts):
        out = np.zeros(pts.shape[0])

        def apply(k, rows):
            sub = pts[rows]
            out[rows] = self.coeffs.betas[k](sub, self.surfaces[k].normals(sub))

        self._grouped(idx0, apply)
        return out


def _ray_step_grouped(tables, idx0, pts, dirs, rng, diag):
    """Same-surface ray-cast step.  Quadrics use the closed-form chord; other
    surfaces enumerate line intersections per walker.  Returns
    (new_points, t_factors) with t = intersection count * orientation sign."""
    out = np.empty_like(pts)
    tfac = np.zeros(pts.shape[0])
    for k in range(tables.n):
        rows = np.nonzero(idx0 == k)[0]
        if not rows.size:
            continue
        surf = tables.surfaces[k]
        if surf.supports_chord:
            new, t = surf.chord_far_point(pts[rows], dirs[rows])
            out[rows], tfac[rows] = new, t
        else:
            for r in rows:
                origin = pts[r]
                placed = False
                for attempt in range(64):
                    u = dirs[r] if attempt == 0 else _unit_vec(rng, tables.dim)
                    if attempt > 0:
                        diag.ray_retries += 1
                    hits = surf.intersections(Ray(origin, u))
                    hits += surf.intersections(Ray(origin, -u))
                    if hits:
                        q = len(hits)
                        _, p = hits[int(rng.integers(q))]
                        n_p = surf.normals(np.atleast_2d(p))[0]
                        sgn = np.sign(float(np.dot(p - origin, n_p)))
                        out[r], tfac[r] = p, q * sgn
                        placed = True
                        break
                if not placed:
                    out[r], tfac[r] = origin, 0.0
                    diag.aborted_walkers += 1
    return out, tfac


def _unit_vec(rng, d):
    z = rng.standard_normal(d)
    return z / np.linalg.norm(z)


def _generate_chain(tables, schedules, rng, transition, diag, coupled_from=None, coupling=None):
    """Walk one block of chains.

    Returns (points, qt, dirs_per_step): points (M+1, B, dim); qt the running
    Q*T weight per step, shape (M+1, B); dirs_per_step the drawn ray
    directions (None for steps without ray rows).  When ``coupled_from``
    carries a primary chain's (points, dirs, schedules), the new chain is its
    antithetic partner under ``coupling``.
    """
    m_steps = tables.steps
    b = schedules.shape[0]
    idx0 = schedules - 1
    pts = np.empty((m_steps + 1, b, tables.dim))
    qt = np.empty((m_steps + 1, b))

    primary_pts = primary_dirs = primary_sched = None
    if coupled_from is not None:
        primary_pts, primary_dirs, primary_sched = coupled_from

    # Step 0: uniform draw on the scheduled surface.
    if coupled_from is None:
        pts[0] = tables.sample_grouped(idx0[:, 0], rng)
    elif coupling in ("identical", "antithetic"):
        # The default coupling shares the initial point with the primary chain.
        pts[0] = primary_pts[0].copy()
    else:  # antithetic-y0 / antithetic-full: flip the step-0 draw as well
        same = np.nonzero(primary_sched[:, 0] == schedules[:, 0])[0]
        pts[0] = tables.sample_grouped(idx0[:, 0], rng)
        if same.size:
            pts[0][same] = tables.antipode_grouped(idx0[same, 0], primary_pts[0][same])
    qt[0] = tables.beta_grouped(idx0[:, 0], pts[0]) * tables.areas[idx0[:, 0]]

    dirs_per_step = []
    for i in range(1, m_steps + 1):
        prev = pts[i - 1]
        cur = np.empty((b, tables.dim))
        step_factor = np.empty(b)
        if transition == "ray-cast":
            ray_mask = schedules[:, i] == schedules[:, i - 1]
        else:
            ray_mask = np.zeros(b, dtype=bool)
        ray_rows = np.nonzero(ray_mask)[0]
        uni_rows = np.nonzero(~ray_mask)[0]
        if transition == "ray-cast":
            diag.cross_surface_fallbacks += uni_rows.size

        dirs = None
        if ray_rows.size:
            if coupled_from is None:
                z = rng.standard_normal((b, tables.dim))
                dirs = z / np.linalg.norm(z, axis=1, keepdims=True)
            elif coupling == "identical":
                dirs = primary_dirs[i - 1]
            elif primary_dirs[i - 1] is not None:
                # Plain negation is a no-op under the inward chord flip, so the
                # antithetic partner reflects the direction across the outward
                # normal at its own previous point (orthogonal map: uniform law
                # preserved, mirrored landing).
                u = primary_dirs[i - 1]
                nrm_prev = tables.normals_grouped(idx0[:, i - 1], prev)
                dirs = 2.0 * np.einsum("ij,ij->i", u, nrm_prev)[:, None] * nrm_prev - u
            else:
                z = rng.standard_normal((b, tables.dim))
                dirs = z / np.linalg.norm(z, axis=1, keepdims=True)
            new, tfac = _ray_step_grouped(
                tables, idx0[ray_rows, i], prev[ray_rows], dirs[ray_rows], rng, diag
            )
            cur[ray_rows] = new
            step_factor[ray_rows] = 0.5 * tfac
        dirs_per_step.append(dirs)

        if uni_rows.size:
            if coupled_from is None:
                cur[uni_rows] = tables.sample_grouped(idx0[uni_rows, i], rng)
            elif coupling == "identical":
                cur[uni_rows] = primary_pts[i][uni_rows]
            else:
                # Couple rows whose primary step was also a uniform draw on
                # the same surface; everything else gets a fresh sample.
                prim_same = primary_sched[:, i] == schedules[:, i]
                if transition == "uniform-area":
                    prim_uniform = np.ones(b, dtype=bool)
                else:
                    prim_uniform = primary_sched[:, i] != primary_sched[:, i - 1]
                couple = ~ray_mask & prim_same & prim_uniform
                fresh = ~ray_mask & ~couple
                frows = np.nonzero(fresh)[0]
                crows = np.nonzero(couple)[0]
                if frows.size:
                    cur[frows] = tables.sample_grouped(idx0[frows, i], rng)
                if crows.size:
                    cur[crows] = tables.antipode_grouped(idx0[crows, i], primary_pts[i][crows])
            nrm = tables.normals_grouped(idx0[uni_rows, i], cur[uni_rows])
            kvals = poincare_kernel_rows(tables.ctx, cur[uni_rows], nrm, prev[uni_rows])
            step_factor[uni_rows] = kvals * tables.areas[idx0[uni_rows, i]]

        bad = ~np.isfinite(step_factor)
        if np.any(bad):
            step_factor[bad] = 0.0
            diag.aborted_walkers += int(np.sum(bad))
        pts[i] = cur
        qt[i] = qt[i - 1] * step_factor

    return pts, qt, dirs_per_step


def _step_coefficients(tables, schedules, qt):
    """Per-step scalar weights c_i = w_i N ||alpha||^i signprod_i Q*T_i."""
    c = np.empty_like(qt)
    c[0] = tables.prefactor[0] * qt[0]
    if tables.steps >= 1:
        signprod = np.cumprod(tables.signs[schedules[:, 1:] - 1], axis=1)
        for i in range(1, tables.steps + 1):
            c[i] = tables.prefactor[i] * signprod[:, i - 1] * qt[i]
    return c


def _scalar_totals(tables, queries, qnorm2, pts, c):
    """Per-walker totals sum_i c_i Phi(x, Y_i) over all queries.

    Returns (totals (B, n_q), bad_rows); bad rows hit a singular query/sample
    pair and must be resampled by the caller.
    """
    b = pts.shape[1]
    totals = np.zeros((b, queries.shape[0]))
    bad = np.zeros(b, dtype=bool)
    qt_t = queries.T
    for i in range(pts.shape[0]):
        rows = np.nonzero(c[i] != 0.0)[0]
        if rows.size == 0:
            continue
        y = pts[i][rows]
        r2 = y @ qt_t
        r2 *= -2.0
        r2 += qnorm2[None, :]
        r2 += np.einsum("ij,ij->i", y, y)[:, None]
        np.maximum(r2, 0.0, out=r2)
        rmin = r2.min(axis=1)
        if np.any(rmin < SINGULAR2):
            bad[rows[rmin < SINGULAR2]] = True
        with np.errstate(divide="ignore"):
            phi = green_from_r2(tables.ctx, r2)
        phi *= c[i][rows][:, None]
        totals[rows] += phi
    return totals, bad


def _gradient_totals(tables, queries, qnorm2, pts, c):
    """Per-walker vector totals with Phi replaced by grad_x Phi."""
    b = pts.shape[1]
    nq, d = queries.shape
    totals = np.zeros((b, nq, d))
    bad = np.zeros(b, dtype=bool)
    scale = -tables.ctx.inv_sphere_area
    qt_t = queries.T
    for i in range(pts.shape[0]):
        rows = np.nonzero(c[i] != 0.0)[0]
        if rows.size == 0:
            continue
        y = pts[i][rows]
        r2 = y @ qt_t
        r2 *= -2.0
        r2 += qnorm2[None, :]
        r2 += np.einsum("ij,ij->i", y, y)[:, None]
        np.maximum(r2, 0.0, out=r2)
        rmin = r2.min(axis=1)
        if np.any(rmin < SINGULAR2):
            bad[rows[rmin < SINGULAR2]] = True
        with np.errstate(divide="ignore"):
            w = (c[i][rows] * scale)[:, None] * r2 ** (-0.5 * tables.dim)
        for j in range(d):
            totals[rows, :, j] += w * (queries[None, :, j] - y[:, None, j])
    return totals, bad


def _single_pass(tables, queries, qnorm2, cfg, schedules, rng, diag):
    pts, qt, dirs = _generate_chain(tables, schedules, rng, cfg.transition, diag)
    c = _step_coefficients(tables, schedules, qt)
    totals_fn = _gradient_totals if cfg.gradient else _scalar_totals
    totals, bad = totals_fn(tables, queries, qnorm2, pts, c)
    return totals, bad, (pts, dirs, schedules)


def _block_units(tables, queries, qnorm2, cfg, group_row, n_units, rng, task_id, diag, vr):
    """Per-unit values for one block: walkers, or coupled pair averages."""
    m1 = tables.steps + 1
    if group_row is not None:
        sched1 = np.broadcast_to(group_row, (n_units, m1)).copy()
        sched2 = sched1
    else:
        u = rng.random((n_units, m1))
        sched1 = tables.pdf.indices_from_uniforms(u)
        if vr and cfg.coupling == "antithetic-full":
            sched2 = tables.pdf.indices_from_uniforms(1.0 - u)
        else:
            sched2 = sched1

    totals, bad, primary = _single_pass(tables, queries, qnorm2, cfg, sched1, rng, diag)

    if vr:
        totals_fn = _gradient_totals if cfg.gradient else _scalar_totals
        pts2, qt2, _ = _generate_chain(
            tables, sched2, rng, cfg.transition, diag, primary, cfg.coupling
        )
        c2 = _step_coefficients(tables, sched2, qt2)
        t2, bad2 = totals_fn(tables, queries, qnorm2, pts2, c2)
        bad |= bad2
        if np.any(bad):
            # Coupled redraws would break the antithesis bookkeeping; zero the
            # pair instead (measure-zero event, counted for forensics).
            totals[bad] = 0.0
            t2[bad] = 0.0
            diag.resampled_walkers += int(np.sum(bad))
        return 0.5 * (totals + t2)

    for attempt in range(MAX_RESAMPLE):
        if not np.any(bad):
            break
        rows = np.nonzero(bad)[0]
        diag.resampled_walkers += rows.size
        retry_rng = stream_rng(cfg.seed, RETRY_STREAM, task_id, attempt)
        sub, bad_sub, _ = _single_pass(
            tables, queries, qnorm2, cfg, sched1[rows], retry_rng, diag
        )
        totals[rows] = sub
        bad = np.zeros_like(bad)
        bad[rows[bad_sub]] = True
    if np.any(bad):
        totals[bad] = 0.0
        diag.aborted_walkers += int(np.sum(bad))
    return totals


def _near_surface_flags(problem, queries):
    guard = GRAD_GUARD_FRACTION * problem.tree.diameter()
    flags = np.zeros(queries.shape[0], dtype=bool)
    for i in range(1, problem.n + 1):
        flags |= problem.tree.surface(i).approx_distance(queries) < guard
    return flags


def run_walk_estimator(problem, queries, cfg: EstimatorConfig, vr: bool = False) -> EstimateReport:
    """Drive the walk engine over blocks/schedule groups and aggregate moments."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if queries.shape[1] != problem.dim:
        raise ValueError("query dimension mismatch")
    tables = _Tables(problem, cfg.steps)
    qnorm2 = np.einsum("ij,ij->i", queries, queries)
    diag = Diagnostics()

    flags = None
    if cfg.gradient:
        flags = _near_surface_flags(problem, queries)
        diag.near_surface_queries = int(np.sum(flags))

    units_total = cfg.walkers // 2 if vr else cfg.walkers
    if units_total < 1:
        raise ValueError("walker budget too small for the variant")
    block = max(1, min(cfg.block_size, 2**22 // max(1, queries.shape[0])))
    if cfg.gradient:
        block = max(1, block // max(1, problem.dim))

    # Task decomposition: (schedule_group, block_index, units_in_block).
    tasks = []
    if cfg.schedules is None:
        for bidx in range((units_total + block - 1) // block):
            tasks.append((0, bidx, min(block, units_total - bidx * block)))
        group_schedules = None
        n_schedule_draws = (
            2 * units_total if (vr and cfg.coupling == "antithetic-full") else units_total
        )
    else:
        s_count = min(cfg.schedules, units_total)
        per_schedule = units_total // s_count
        group_schedules = tables.pdf.draw(stream_rng(cfg.seed, SCHEDULE_STREAM), cfg.steps, s_count)
        for sidx in range(1, s_count + 1):
            for bidx in range((per_schedule + block - 1) // block):
                tasks.append((sidx, bidx, min(block, per_schedule - bidx * block)))
        units_total = s_count * per_schedule
        n_schedule_draws = s_count

    def work(task):
        sidx, bidx, n_units = task
        rng = stream_rng(cfg.seed, sidx, bidx)
        local_diag = Diagnostics()
        row = None if sidx == 0 else group_schedules[sidx - 1]
        units = _block_units(
            tables, queries, qnorm2, cfg, row, n_units,
            rng, (sidx << 32) | bidx, local_diag, vr,
        )
        return task, units.sum(axis=0), (units**2).sum(axis=0), local_diag

    with Stopwatch() as sw:
        if cfg.threads == 1 or len(tasks) == 1:
            results = [work(t) for t in tasks]
        else:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                results = list(pool.map(work, tasks))
    results.sort(key=lambda r: (r[0][0], r[0][1]))
    for r in results:
        diag.merge(r[3])

    out_shape = (queries.shape[0], problem.dim) if cfg.gradient else (queries.shape[0],)
    if cfg.schedules is None:
        total = np.zeros(out_shape)
        total2 = np.zeros(out_shape)
        count = 0
        for (_, _, n_units), s, s2, _ in results:
            total += s
            total2 += s2
            count += n_units
        estimates = total / count
        variance = (
            np.maximum(total2 - count * estimates**2, 0.0) / (count - 1)
            if count > 1
            else np.zeros(out_shape)
        )
        w_eff = count
    else:
        sums = np.zeros((n_schedule_draws,) + out_shape)
        counts = np.zeros(n_schedule_draws)
        for (sidx, _, n_units), s, _, _ in results:
            sums[sidx - 1] += s
            counts[sidx - 1] += n_units
        means = sums / counts.reshape((-1,) + (1,) * len(out_shape))
        estimates = means.mean(axis=0)
        variance = (
            means.var(axis=0, ddof=1) if n_schedule_draws > 1 else np.zeros(out_shape)
        )
        w_eff = n_schedule_draws
        count = int(counts.sum())

    return EstimateReport(
        points=queries,
        estimates=estimates,
        walkers=2 * count if vr else count,
        schedules=n_schedule_draws,
        variance=variance,
        w_effective=w_eff,
        wall_time=sw.elapsed,
        diagnostics=diag,
        near_surface_flags=flags,
    )


def walk_debug(problem, cfg: EstimatorConfig, n_walkers: int):
    """Expose one block's raw chain state for tests: schedules, points,
    running Q*T weights, and the per-step coefficients c_i."""
    tables = _Tables(problem, cfg.steps)
    rng = stream_rng(cfg.seed, 0, 0)
    diag = Diagnostics()
    u = rng.random((n_walkers, tables.steps + 1))
    schedules = tables.pdf.indices_from_uniforms(u)
    pts, qt, _ = _generate_chain(tables, schedules, rng, cfg.transition, diag)
    c = _step_coefficients(tables, schedules, qt)
    return {
        "schedules": schedules,
        "points": pts,
        "qt": qt,
        "coefficients": c,
        "prefactor": tables.prefactor,
        "diagnostics": diag,
    }
