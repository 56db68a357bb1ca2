"""Built-in benchmark problems with analytic ground truths and the error metric.

All benchmarks with a known global truth manufacture their boundary/jump data
from it: b_1 = sigma_1 * du/dn on the domain boundary and b_i =
(sigma_parent - sigma_i) * du/dn on interior interfaces, so the stated truth
solves the interface system exactly (flux jumps vanish when the truth is
globally smooth only if the sigma contrast does, hence the explicit factor).
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .densities import InterfaceProblem, boundary_data, zero_data
from .geometry import DomainTree, Ellipsoid, Sphere, StarCurve2D

__all__ = [
    "Benchmark",
    "example1_harmonic",
    "example2_point_charge",
    "example3_2d",
    "example3_3d",
    "disk_neumann",
    "benchmark_by_name",
    "l2_error",
    "l2_error_vector",
    "BENCHMARKS",
]


@dataclass
class Benchmark:
    name: str
    problem: InterfaceProblem
    truth: Optional[Callable] = None
    truth_gradient: Optional[Callable] = None
    default_steps: int = 4
    default_transition: str = "uniform-area"
    default_coupling: str = "antithetic"
    x_ref: Optional[np.ndarray] = None
    notes: str = ""
    params: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.problem.dim

    def interior_queries(self, kind="grid", n=1000, resolution=40, rng=None, margin=0.99):
        """Query points inside the domain: a natural grid or uniform draws."""
        if kind == "random":
            rng = np.random.default_rng(0) if rng is None else rng
            return self._random_interior(n, rng)
        return self._grid_interior(resolution, margin)

    def _random_interior(self, n, rng):
        surf = self.problem.tree.surface(1)
        if isinstance(surf, Sphere):
            d = surf.dim
            z = rng.standard_normal((n, d))
            z /= np.linalg.norm(z, axis=1, keepdims=True)
            r = surf.radius * rng.random(n) ** (1.0 / d)
            return surf.center + z * r[:, None]
        if isinstance(surf, Ellipsoid):
            d = surf.dim
            z = rng.standard_normal((n, d))
            z /= np.linalg.norm(z, axis=1, keepdims=True)
            r = rng.random(n) ** (1.0 / d)
            return surf.center + (z * r[:, None]) @ surf._L
        # Rejection from the bounding box for star-shaped boundaries.
        out = []
        half = 0.5 * surf.diameter()
        while len(out) < n:
            cand = surf.center + (rng.random((4 * n, 2)) - 0.5) * 2 * half
            cand = cand[surf.contains_batch(cand)]
            out.extend(cand.tolist())
        return np.asarray(out[:n])

    def _grid_interior(self, resolution, margin):
        surf = self.problem.tree.surface(1)
        if isinstance(surf, Sphere) and surf.dim == 2:
            # Polar grid over the disk.
            rr = np.linspace(1.0 / resolution, margin, resolution) * surf.radius
            tt = np.linspace(0.0, 2.0 * math.pi, resolution, endpoint=False)
            r, t = np.meshgrid(rr, tt, indexing="ij")
            pts = np.stack([r * np.cos(t), r * np.sin(t)], axis=-1).reshape(-1, 2)
            return surf.center + pts
        raise ValueError(f"no natural grid for boundary kind {surf.kind!r} in dim {surf.dim}")


# ---------------------------------------------------------------------------
# Manufactured-data helpers
# ---------------------------------------------------------------------------


def _flux_of(grad_fn, scale):
    def fn(pts, normals):
        return scale * np.einsum("ij,ij->i", grad_fn(pts), normals)

    return fn


def _harmonic_cubic_truth(pts):
    x1, x2 = pts[:, 0], pts[:, 1]
    return x1**3 - 3.0 * x1 * x2**2


def _harmonic_cubic_grad(pts):
    x1, x2 = pts[:, 0], pts[:, 1]
    return np.stack([3.0 * x1**2 - 3.0 * x2**2, -6.0 * x1 * x2], axis=-1)


def example1_harmonic(max_steps=4) -> Benchmark:
    """Smooth harmonic truth u = x1^3 - 3 x1 x2^2 on a three-region 2D domain.

    The domain boundary is a circle of radius 2 at (0.5, -0.5); the children
    are a circle and a five-lobed star (placements are free parameters of the
    setup since the truth is global; chosen nested and disjoint).
    """
    boundary = Sphere((0.5, -0.5), 2.0)
    circle = Sphere((1.0, 0.1), 0.6)
    star = StarCurve2D((-0.1, -1.0), 0.45, 0.12, 5)
    sigma = [1.5, 0.5, 1.1]
    tree = DomainTree([boundary, circle, star], {2: 1, 3: 1}, sigma)
    b1 = _flux_of(_harmonic_cubic_grad, sigma[0])
    jumps = {
        2: _flux_of(_harmonic_cubic_grad, sigma[0] - sigma[1]),
        3: _flux_of(_harmonic_cubic_grad, sigma[0] - sigma[2]),
    }
    problem = InterfaceProblem(tree, b1, jumps, max_steps=max_steps)
    return Benchmark(
        name="example1",
        problem=problem,
        truth=_harmonic_cubic_truth,
        truth_gradient=_harmonic_cubic_grad,
        default_steps=max_steps,
        default_transition="uniform-area",
        x_ref=np.array([0.5, -0.5]),
    )


_ELLIPSOID_SIGMA = (1.1, 1.3, 0.9)


def _ellipsoid_table(d):
    def mat(diag, off12=0.0):
        a = np.diag(np.asarray(diag, dtype=float))
        a[0, 1] = a[1, 0] = off12
        return a

    c1 = np.zeros(d)
    c1[0] = 1.3
    c2 = np.zeros(d)
    c2[0] = 1.4
    c3 = np.zeros(d)
    c3[0] = 1.6
    a1 = mat([1.0, 0.9] + [1.2] * (d - 2))
    a2 = mat([1.5, 3.2] + [2.0] * (d - 2), off12=-1.0)
    a3 = mat([8.0, 6.0] + [4.0] * (d - 2), off12=-2.0)
    return [(c1, a1), (c2, a2), (c3, a3)]


def example2_point_charge(d: int, max_steps=None) -> Benchmark:
    """Point-charge potential u = |x|^(2-d) on three nested ellipsoids.

    Valid for d in 3..6; the domain sits away from the origin so the
    singularity is excluded.  Default step counts follow the published setup:
    M = d + 2.
    """
    if d not in (3, 4, 5, 6):
        raise ValueError("supported dimensions are 3..6")
    ells = [Ellipsoid(c, a) for c, a in _ellipsoid_table(d)]
    origin = np.zeros(d)
    for e in ells:
        if e.contains(origin):
            raise ValueError("origin inside the domain; the truth is singular there")
    tree = DomainTree(ells, {2: 1, 3: 2}, list(_ELLIPSOID_SIGMA))

    def truth(pts):
        return np.linalg.norm(pts, axis=1) ** (2.0 - d)

    def grad(pts):
        r = np.linalg.norm(pts, axis=1)
        return (2.0 - d) * r[:, None] ** (-d) * pts

    s = _ELLIPSOID_SIGMA
    jumps = {2: _flux_of(grad, s[0] - s[1]), 3: _flux_of(grad, s[1] - s[2])}
    steps = int(max_steps if max_steps is not None else d + 2)
    problem = InterfaceProblem(tree, _flux_of(grad, s[0]), jumps, max_steps=steps)
    return Benchmark(
        name=f"example2-{d}d",
        problem=problem,
        truth=truth,
        truth_gradient=grad,
        default_steps=steps,
        default_transition="ray-cast",
        default_coupling="antithetic-y0",
        x_ref=np.array([1.3] + [0.0] * (d - 1)),
        params={"dim": d},
    )


def example3_2d(alpha=0.4, sigma_ratio=1.0 / 3.0, m=3, lam=20.0, max_steps=4) -> Benchmark:
    """Two concentric circles with a kinked-gradient separable truth.

    Outer radius 1 (unit conductivity), inner radius alpha with conductivity
    ratio sigma = sigma_in/sigma_out; flux lambda*sin(m theta) on the rim.
    """
    if not 0 < alpha < 1:
        raise ValueError("need 0 < alpha < 1")
    if m < 1:
        raise ValueError("need m >= 1")
    sig = float(sigma_ratio)
    a_const = (2.0 / m) / (alpha ** (2 * m) * (sig - 1.0) + sig + 1.0)
    b_const = 0.5 * a_const * (sig + 1.0)
    c_const = b_const - 1.0 / m

    tree = DomainTree(
        [Sphere((0.0, 0.0), 1.0), Sphere((0.0, 0.0), alpha)], {2: 1}, [1.0, sig]
    )
    b1 = boundary_data("sin-m-theta", **{"lambda": lam, "m": m})
    problem = InterfaceProblem(tree, b1, {2: zero_data}, max_steps=max_steps)

    def truth(pts):
        r = np.linalg.norm(pts, axis=1)
        th = np.arctan2(pts[:, 1], pts[:, 0])
        r_safe = np.maximum(r, alpha)  # the r^-m branch is only used for r > alpha
        inner = lam * a_const * r**m
        outer = lam * (b_const * r**m + c_const * r_safe ** (-1.0 * m))
        return np.where(r <= alpha, inner, outer) * np.sin(m * th)

    def grad(pts):
        r = np.linalg.norm(pts, axis=1)
        th = np.arctan2(pts[:, 1], pts[:, 0])
        r_safe = np.maximum(r, 0.5 * alpha)
        f = np.where(
            r <= alpha,
            lam * a_const * r**m,
            lam * (b_const * r**m + c_const * r_safe ** (-1.0 * m)),
        )
        fp = np.where(
            r <= alpha,
            lam * a_const * m * r ** (m - 1),
            lam * (b_const * m * r ** (m - 1) - c_const * m * r_safe ** (-m - 1)),
        )
        s, c = np.sin(m * th), np.cos(m * th)
        ur = fp * s
        ut = f * m * c / r_safe
        return np.stack(
            [ur * np.cos(th) - ut * np.sin(th), ur * np.sin(th) + ut * np.cos(th)], axis=-1
        )

    return Benchmark(
        name="example3-2d",
        problem=problem,
        truth=truth,
        truth_gradient=grad,
        default_steps=max_steps,
        default_transition="uniform-area",
        x_ref=np.array([0.0, 0.0]),
        params={
            "alpha": alpha,
            "sigma_ratio": sig,
            "m": m,
            "lambda": lam,
            "A": a_const,
            "B": b_const,
            "C": c_const,
        },
    )


def example3_3d(alpha=0.4, sigma_ratio=0.5, lam=5.0, max_steps=6) -> Benchmark:
    """Two concentric spheres; truth is a degree-one spherical harmonic mode.

    The radial profile constants solve the 3x3 system expressing the rim flux
    condition, continuity at r = alpha, and the flux jump there; the angular
    factor satisfies sin(phi) cos(theta) = sqrt(4 pi / 3) * Y_1^1, i.e.
    Y_1^1 = sqrt(3 / 4 pi) * x_1 / r.
    """
    if not 0 < alpha < 1:
        raise ValueError("need 0 < alpha < 1")
    sig = float(sigma_ratio)
    sys_mat = np.array(
        [
            [0.0, 1.0, -2.0],
            [alpha, -alpha, -(alpha**-2.0)],
            [sig, -1.0, 2.0 * alpha**-3.0],
        ]
    )
    rhs = np.array([math.sqrt(4.0 * math.pi / 3.0), 0.0, 0.0])
    a1, b1c, c1 = np.linalg.solve(sys_mat, rhs)

    tree = DomainTree(
        [Sphere((0.0, 0.0, 0.0), 1.0), Sphere((0.0, 0.0, 0.0), alpha)], {2: 1}, [1.0, sig]
    )
    flux = boundary_data("spherical-harmonic-11", **{"lambda": lam, "radius": 1.0})
    problem = InterfaceProblem(tree, flux, {2: zero_data}, max_steps=max_steps)

    y11 = math.sqrt(3.0 / (4.0 * math.pi))

    def radial(r):
        return np.where(r <= alpha, a1 * r, b1c * r + c1 * r**-2.0)

    def truth(pts):
        r = np.linalg.norm(pts, axis=1)
        # lam * f(r) * Y_1^1 with Y_1^1 = y11 * x/r.
        return lam * radial(r) * y11 * pts[:, 0] / r

    def grad(pts):
        r = np.linalg.norm(pts, axis=1)
        f = radial(r)
        fp = np.where(r <= alpha, a1, b1c - 2.0 * c1 * r**-3.0)
        # grad[f(r) x/r] = (f'/r - f/r^2) (x/r) * pts + (f/r) e_x
        coef = (fp - f / r) * pts[:, 0] / r**2
        out = coef[:, None] * pts
        out[:, 0] += f / r
        return lam * y11 * out

    return Benchmark(
        name="example3-3d",
        problem=problem,
        truth=truth,
        truth_gradient=grad,
        default_steps=max_steps,
        default_transition="ray-cast",
        default_coupling="antithetic-y0",
        x_ref=np.array([0.5, 0.0, 0.0]),
        params={
            "alpha": alpha,
            "sigma_ratio": sig,
            "lambda": lam,
            "A11": float(a1),
            "B11": float(b1c),
            "C11": float(c1),
        },
    )


def disk_neumann(radius=1.0, max_steps=8) -> Benchmark:
    """Single unit disk with flux cos(theta); truth r cos(theta) up to a
    constant.  The boundary-walk benchmark."""
    tree = DomainTree([Sphere((0.0, 0.0), radius)], {}, [1.0])

    def flux(pts, normals):
        return np.cos(np.arctan2(pts[:, 1], pts[:, 0]))

    problem = InterfaceProblem(tree, flux, {}, max_steps=max_steps)

    def truth(pts):
        return pts[:, 0] / radius

    def grad(pts):
        out = np.zeros_like(pts)
        out[:, 0] = 1.0 / radius
        return out

    return Benchmark(
        name="disk-neumann",
        problem=problem,
        truth=truth,
        truth_gradient=grad,
        default_steps=max_steps,
        default_transition="ray-cast",
        x_ref=np.array([0.0, 0.0]),
    )


BENCHMARKS = {
    "example1": example1_harmonic,
    "example2-3d": lambda **kw: example2_point_charge(3, **kw),
    "example2-4d": lambda **kw: example2_point_charge(4, **kw),
    "example2-5d": lambda **kw: example2_point_charge(5, **kw),
    "example2-6d": lambda **kw: example2_point_charge(6, **kw),
    "example3-2d": example3_2d,
    "example3-3d": example3_3d,
    "disk-neumann": disk_neumann,
}


def benchmark_by_name(name: str, **kwargs) -> Benchmark:
    if name not in BENCHMARKS:
        raise KeyError(f"unknown benchmark {name!r}; available: {sorted(BENCHMARKS)}")
    return BENCHMARKS[name](**kwargs)


def l2_error(estimates, truth_values, ref_index: int):
    """Reference-aligned error norms over a discrete query set.

    The estimate is shifted so it matches the truth at the reference entry
    (the additive-constant gauge of pure Neumann data), then
    (||e||_2, ||e||_2 / ||u||_2) is returned with the plain Euclidean norm
    over the set.
    """
    est = np.asarray(estimates, dtype=float)
    tv = np.asarray(truth_values, dtype=float)
    if est.shape != tv.shape:
        raise ValueError("estimate/truth shape mismatch")
    if not 0 <= ref_index < est.shape[0]:
        raise ValueError("reference point missing from the estimate batch")
    shift = est[ref_index] - tv[ref_index]
    err = np.abs(est - shift - tv)
    l2 = float(np.linalg.norm(err))
    denom = float(np.linalg.norm(tv))
    return l2, l2 / denom if denom > 0 else math.inf


def l2_error_vector(estimates, truth_values):
    """Gauge-free error norms for vector fields (gradients)."""
    est = np.asarray(estimates, dtype=float)
    tv = np.asarray(truth_values, dtype=float)
    err = np.linalg.norm(est - tv, axis=-1)
    l2 = float(np.linalg.norm(err))
    denom = float(np.linalg.norm(np.linalg.norm(tv, axis=-1)))
    return l2, l2 / denom if denom > 0 else math.inf
