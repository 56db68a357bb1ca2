"""Hypersurfaces in R^d and the tree-structured multi-region domain.

Every surface provides the five primitives the walk estimators need:
surface area (Hausdorff measure), outward normals, uniform area sampling,
ray intersection enumeration, and strict point containment.  Surfaces are
immutable after construction; sampling takes a caller-owned RNG so parallel
callers can hold independent streams.
"""

import json
import math

import numpy as np
from scipy.integrate import quad

__all__ = [
    "Surface",
    "Sphere",
    "Ellipsoid",
    "StarCurve2D",
    "Ray",
    "DomainTree",
    "TreeValidationError",
    "validate_tree",
    "load_domain_json",
]

# Parameter offset excluding the ray origin from its own intersection list.
RAY_EPS = 1e-9
# Quadratic discriminants below this are treated as zero crossings (tangency).
TANGENT_EPS = 1e-12


class Ray:
    """Origin plus unit direction."""

    __slots__ = ("origin", "direction")

    def __init__(self, origin, direction):
        self.origin = np.asarray(origin, dtype=float)
        self.direction = np.asarray(direction, dtype=float)
        norm = np.linalg.norm(self.direction)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"ray direction must be unit length (|d| = {norm})")


class Surface:
    """Common interface for closed hypersurfaces."""

    dim: int
    kind: str

    # -- scalar interface -------------------------------------------------
    def area(self) -> float:
        raise NotImplementedError

    def normal(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if abs(self.implicit_residual(y)[0]) > 1e-8:
            raise ValueError("point is not on the surface")
        return self.normals(y)[0]

    def sample(self, rng):
        """One uniform surface point and the (constant) sampling pdf."""
        pts = self.sample_batch(rng, 1)
        return pts[0], 1.0 / self.area()

    def intersections(self, ray: Ray):
        """All (t, point) with t > RAY_EPS along the ray, sorted ascending."""
        raise NotImplementedError

    def contains(self, x) -> bool:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return bool(self.contains_batch(x)[0])

    # -- vectorized interface ---------------------------------------------
    def normals(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample_batch(self, rng, n: int) -> np.ndarray:
        raise NotImplementedError

    def contains_batch(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def implicit_residual(self, pts: np.ndarray) -> np.ndarray:
        """Signed implicit-function value, ~0 on surface, < 0 inside."""
        raise NotImplementedError

    def antipode(self, pts: np.ndarray) -> np.ndarray:
        """Antithetic partner of uniform samples (preserves the uniform law)."""
        raise NotImplementedError

    def chord_far_point(self, pts: np.ndarray, dirs: np.ndarray):
        """Far intersection of the line through each point (convex quadrics only).

        Deterministic given the directions; directions pointing to the t < 0
        side are flipped, which leaves the landing law unchanged (u ~ -u).
        Returns (new_points, t_factor) with t_factor = +1 on convex surfaces.
        """
        raise NotImplementedError(f"{self.kind} has no closed-form chord transition")

    @property
    def supports_chord(self) -> bool:
        return False

    def approx_distance(self, pts: np.ndarray) -> np.ndarray:
        """Cheap distance estimate used for near-surface warning bands."""
        raise NotImplementedError

    def diameter(self) -> float:
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


def _unit_directions(rng, n, d):
    z = rng.standard_normal((n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


class Sphere(Surface):
    """Hypersphere |y - center| = radius in R^d, d >= 2."""

    kind = "sphere"

    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.dim = self.center.shape[0]
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        from .kernels import unit_ball_volume

        self._area = self.dim * unit_ball_volume(self.dim) * self.radius ** (self.dim - 1)

    def area(self):
        return self._area

    def normals(self, pts):
        return (pts - self.center) / self.radius

    def sample_batch(self, rng, n):
        return self.center + self.radius * _unit_directions(rng, n, self.dim)

    def implicit_residual(self, pts):
        d = pts - self.center
        return np.einsum("ij,ij->i", d, d) / self.radius**2 - 1.0

    def contains_batch(self, pts):
        return self.implicit_residual(pts) < 0.0

    def intersections(self, ray: Ray):
        oc = ray.origin - self.center
        b = float(np.dot(ray.direction, oc))
        c = float(np.dot(oc, oc)) - self.radius**2
        disc = b * b - c
        if disc < TANGENT_EPS:
            return []
        sq = math.sqrt(disc)
        out = []
        for t in (-b - sq, -b + sq):
            if t > RAY_EPS:
                out.append((t, ray.origin + t * ray.direction))
        return out

    def antipode(self, pts):
        return 2.0 * self.center - pts

    @property
    def supports_chord(self):
        return True

    def chord_far_point(self, pts, dirs):
        oc = pts - self.center
        dots = np.einsum("ij,ij->i", dirs, oc)
        u = np.where((dots > 0)[:, None], -dirs, dirs)
        t_far = 2.0 * np.abs(dots)
        new = pts + t_far[:, None] * u
        # Convex surface: one far intersection, and the chord exits along the
        # outward normal, so the count-and-sign factor is +1.
        return new, np.ones(pts.shape[0])

    def approx_distance(self, pts):
        return np.abs(np.linalg.norm(pts - self.center, axis=1) - self.radius)

    def diameter(self):
        return 2.0 * self.radius

    def to_config(self):
        return {"kind": "sphere", "center": self.center.tolist(), "radius": self.radius}


class Ellipsoid(Surface):
    """Implicit quadric (y - c)^T A (y - c) = 1 with A symmetric positive definite."""

    kind = "ellipsoid"

    def __init__(self, center, A):
        self.center = np.asarray(center, dtype=float)
        self.A = np.asarray(A, dtype=float)
        self.dim = self.center.shape[0]
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.A.shape != (self.dim, self.dim):
            raise ValueError("quadratic form shape mismatch")
        if not np.allclose(self.A, self.A.T, atol=1e-12):
            raise ValueError("quadratic form must be symmetric")
        evals, evecs = np.linalg.eigh(self.A)
        if np.min(evals) <= 0:
            raise ValueError("quadratic form must be positive definite")
        self._evals = evals
        # L = A^(-1/2) maps the unit sphere onto the ellipsoid.
        self._L = (evecs * (evals**-0.5)) @ evecs.T
        self._sqrtA = (evecs * (evals**0.5)) @ evecs.T
        self._detL = float(np.prod(evals**-0.5))
        self._jac_max = self._detL * math.sqrt(float(np.max(evals)))
        self._area = self._compute_area()

    def _compute_area(self):
        """Surface area as the normalizing constant of the sampling map.

        |E| = |S^{d-1}| * det(L) * E_u[ sqrt(u^T A u) ] with u uniform on the
        sphere.  Writing u = z/|z| for standard normal z decouples radius and
        direction, and E_z[ sqrt(z^T A z) ] reduces to a 1-D integral through
        the Gaussian moment identity sqrt(q) = (2 sqrt(pi))^-1 *
        Int_0^inf (1 - e^{-q s}) s^{-3/2} ds.
        """
        from .kernels import unit_ball_volume

        lam = self._evals

        def integrand(t):
            # s = t/(1-t) maps [0, 1) onto [0, inf); ds = dt/(1-t)^2.
            s = t / (1.0 - t)
            return (1.0 - np.prod((1.0 + 2.0 * s * lam) ** -0.5)) * s**-1.5 / (1.0 - t) ** 2

        val, _ = quad(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-11, limit=400)
        e_norm_Az = val / (2.0 * math.sqrt(math.pi))
        d = self.dim
        # E|z| for standard normal z in R^d, exact half-integer gamma ratio.
        e_norm_z = math.sqrt(2.0) * math.gamma((d + 1) / 2.0) / math.gamma(d / 2.0)
        sphere_area = d * unit_ball_volume(d)
        return sphere_area * self._detL * e_norm_Az / e_norm_z

    def area(self):
        return self._area

    def normals(self, pts):
        g = (pts - self.center) @ self.A
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    def implicit_residual(self, pts):
        d = pts - self.center
        return np.einsum("ij,jk,ik->i", d, self.A, d) - 1.0

    def contains_batch(self, pts):
        return self.implicit_residual(pts) < 0.0

    def sample_batch(self, rng, n):
        """Rejection from the sphere parametrization, weighted by area distortion."""
        out = np.empty((n, self.dim))
        filled = 0
        while filled < n:
            m = max(n - filled, 64)
            u = _unit_directions(rng, m, self.dim)
            jac = self._detL * np.linalg.norm(u @ self._sqrtA, axis=1)
            keep = rng.random(m) * self._jac_max < jac
            pts = self.center + u[keep] @ self._L
            take = min(pts.shape[0], n - filled)
            out[filled : filled + take] = pts[:take]
            filled += take
        return out

    def intersections(self, ray: Ray):
        oc = ray.origin - self.center
        Ad = self.A @ ray.direction
        a = float(np.dot(ray.direction, Ad))
        b = float(np.dot(oc, Ad))
        c = float(oc @ self.A @ oc) - 1.0
        disc = b * b - a * c
        if disc < TANGENT_EPS * a * a:
            return []
        sq = math.sqrt(disc)
        out = []
        for t in ((-b - sq) / a, (-b + sq) / a):
            if t > RAY_EPS:
                out.append((t, ray.origin + t * ray.direction))
        return out

    def antipode(self, pts):
        # Central symmetry preserves both the surface and the uniform law.
        return 2.0 * self.center - pts

    @property
    def supports_chord(self):
        return True

    def chord_far_point(self, pts, dirs):
        Aoc = (pts - self.center) @ self.A
        num = np.einsum("ij,ij->i", dirs, Aoc)
        u = np.where((num > 0)[:, None], -dirs, dirs)
        den = np.einsum("ij,jk,ik->i", u, self.A, u)
        t_far = 2.0 * np.abs(num) / den
        return pts + t_far[:, None] * u, np.ones(pts.shape[0])

    def approx_distance(self, pts):
        # Radial-scaling estimate: distance along the center ray to the shell.
        d = pts - self.center
        q = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", d, self.A, d), 1e-300))
        return np.linalg.norm(d, axis=1) * np.abs(1.0 - 1.0 / q)

    def diameter(self):
        return 2.0 / math.sqrt(float(np.min(self._evals)))

    def to_config(self):
        return {"kind": "ellipsoid", "center": self.center.tolist(), "A": self.A.tolist()}


class StarCurve2D(Surface):
    """Closed C^2 star-shaped curve r(theta) = R + a cos(k (theta - rot)) in R^2."""

    kind = "star2d"
    dim = 2

    # Dense tables drive arc-length sampling and polyline ray bracketing.
    NODES_PER_LOBE = 512

    def __init__(self, center, base_radius, amplitude, lobes, rotation=0.0):
        self.center = np.asarray(center, dtype=float)
        self.R = float(base_radius)
        self.a = float(amplitude)
        self.k = int(lobes)
        self.rotation = float(rotation)
        if self.R <= 0 or abs(self.a) >= self.R:
            raise ValueError("need R > 0 and |a| < R so the polar radius stays positive")
        if self.k < 1:
            raise ValueError("lobe count must be a positive integer")
        n_nodes = max(4 * self.k * 64, self.k * self.NODES_PER_LOBE)
        self._theta = np.linspace(0.0, 2.0 * math.pi, n_nodes + 1)
        speed = self._speed(self._theta)
        # Cumulative arc length on the theta grid (trapezoid; the grid is dense
        # enough that interpolation error is far below sampling tolerances).
        seg = 0.5 * (speed[1:] + speed[:-1]) * np.diff(self._theta)
        self._cum = np.concatenate([[0.0], np.cumsum(seg)])
        self._length = float(self._cum[-1])

    # -- parametrization ---------------------------------------------------
    def radius_at(self, theta):
        return self.R + self.a * np.cos(self.k * (theta - self.rotation))

    def _radius_deriv(self, theta):
        return -self.a * self.k * np.sin(self.k * (theta - self.rotation))

    def _speed(self, theta):
        r = self.radius_at(theta)
        dr = self._radius_deriv(theta)
        return np.sqrt(r * r + dr * dr)

    def point_at(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self.radius_at(theta)
        return self.center + np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)

    def theta_of(self, pts):
        d = pts - self.center
        return np.mod(np.arctan2(d[:, 1], d[:, 0]), 2.0 * math.pi)

    def arclength_of_theta(self, theta):
        return np.interp(np.mod(theta, 2.0 * math.pi), self._theta, self._cum)

    def _theta_of_arclength(self, s):
        return np.interp(np.mod(s, self._length), self._cum, self._theta)

    # -- surface interface ---------------------------------------------------
    def area(self):
        return self._length

    def normals(self, pts):
        theta = self.theta_of(pts)
        r = self.radius_at(theta)
        dr = self._radius_deriv(theta)
        # Tangent (r' cos - r sin, r' sin + r cos); outward normal is the
        # clockwise rotation for a counterclockwise parametrization.
        tx = dr * np.cos(theta) - r * np.sin(theta)
        ty = dr * np.sin(theta) + r * np.cos(theta)
        n = np.stack([ty, -tx], axis=-1)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def implicit_residual(self, pts):
        d = pts - self.center
        rho = np.linalg.norm(d, axis=1)
        theta = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2.0 * math.pi)
        return rho - self.radius_at(theta)

    def contains_batch(self, pts):
        # The curve is star-shaped about its center, so the radial test is the
        # winding test.
        return self.implicit_residual(pts) < 0.0

    def sample_batch(self, rng, n):
        s = rng.random(n) * self._length
        return self.point_at(self._theta_of_arclength(s))

    def antipode(self, pts):
        s = self.arclength_of_theta(self.theta_of(pts))
        return self.point_at(self._theta_of_arclength(s + 0.5 * self._length))

    def intersections(self, ray: Ray):
        """Enumerate crossings by sign changes of the polyline residual.

        The curve nodes are projected onto the signed lateral offset from the
        ray line; each sign change brackets one crossing which is refined by
        bisection on the lateral offset in theta.
        """
        o, d = ray.origin, ray.direction
        nodes = self.point_at(self._theta)
        rel = nodes - o
        lateral = rel[:, 0] * d[1] - rel[:, 1] * d[0]
        out = []
        sign = np.sign(lateral)
        flips = np.nonzero(sign[1:] * sign[:-1] < 0)[0]
        exact = np.nonzero(sign[:-1] == 0)[0]
        candidates = list(flips) + list(exact)
        for j in candidates:
            lo, hi = self._theta[j], self._theta[j + 1]
            flo = lateral[j]
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                p = self.point_at(np.array([mid]))[0]
                fm = (p[0] - o[0]) * d[1] - (p[1] - o[1]) * d[0]
                if flo * fm <= 0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            theta_star = 0.5 * (lo + hi)
            p = self.point_at(np.array([theta_star]))[0]
            t = float(np.dot(p - o, d))
            if t > RAY_EPS:
                out.append((t, p))
        out.sort(key=lambda tp: tp[0])
        # Merge near-duplicate roots from node-exact hits.
        merged = []
        for t, p in out:
            if merged and abs(t - merged[-1][0]) < 1e-9:
                continue
            merged.append((t, p))
        return merged

    def approx_distance(self, pts):
        return np.abs(self.implicit_residual(pts))

    def diameter(self):
        return 2.0 * (self.R + abs(self.a))

    def to_config(self):
        return {
            "kind": "star2d",
            "center": self.center.tolist(),
            "base_radius": self.R,
            "amplitude": self.a,
            "lobes": self.k,
            "rotation": self.rotation,
        }


class TreeValidationError(ValueError):
    """Malformed parent map: cycle, bad root, or out-of-range index."""


class DomainTree:
    """N nested regions: surfaces[0] is the domain boundary, indices are 1-based.

    parent[i] gives the enclosing region of surface i (i >= 2); sigma[i] is the
    conductivity of region i.  Immutable after construction.
    """

    def __init__(self, surfaces, parent, sigma):
        self.surfaces = list(surfaces)
        self.n = len(self.surfaces)
        if self.n < 1:
            raise TreeValidationError("need at least the domain boundary")
        self.dim = self.surfaces[0].dim
        if any(s.dim != self.dim for s in self.surfaces):
            raise TreeValidationError("all surfaces must share one ambient dimension")
        self.parent = {int(k): int(v) for k, v in parent.items()}
        self.sigma = np.asarray(sigma, dtype=float)
        if self.sigma.shape != (self.n,):
            raise TreeValidationError("sigma must list one value per region")
        if np.any(self.sigma < 0):
            raise TreeValidationError("conductivities must be nonnegative")
        self._check_parent_map()

    def _check_parent_map(self):
        if 1 in self.parent:
            raise TreeValidationError("region 1 is the root and has no parent")
        for i in range(2, self.n + 1):
            if i not in self.parent:
                raise TreeValidationError(f"missing parent for region {i}")
            if not 1 <= self.parent[i] <= self.n:
                raise TreeValidationError(f"parent of {i} out of range")
        # Every node must reach the root without revisiting.
        for i in range(2, self.n + 1):
            seen = set()
            j = i
            while j != 1:
                if j in seen:
                    raise TreeValidationError(f"cycle in parent map at region {j}")
                seen.add(j)
                j = self.parent[j]

    def surface(self, i: int) -> Surface:
        return self.surfaces[i - 1]

    def sigma_of(self, i: int) -> float:
        return float(self.sigma[i - 1])

    def children(self, i: int):
        return [j for j in range(2, self.n + 1) if self.parent[j] == i]

    def region_of(self, x) -> int:
        """Index of the innermost region containing x (0 if outside the domain)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if not self.surface(1).contains_batch(x)[0]:
            return 0
        i = 1
        while True:
            inner = next(
                (j for j in self.children(i) if self.surface(j).contains_batch(x)[0]),
                None,
            )
            if inner is None:
                return i
            i = inner

    def diameter(self) -> float:
        return self.surface(1).diameter()


def validate_tree(tree: DomainTree, n_probe: int, rng=None) -> dict:
    """Probe the claimed nesting: child surface points must fall inside the
    parent and outside all siblings.  Returns a report listing violations."""
    if n_probe < 1:
        raise ValueError("n_probe must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    violations = []
    for i in range(2, tree.n + 1):
        pts = tree.surface(i).sample_batch(rng, n_probe)
        parent = tree.parent[i]
        inside_parent = tree.surface(parent).contains_batch(pts)
        n_bad = int(np.sum(~inside_parent))
        if n_bad:
            violations.append(
                {"surface": i, "kind": "outside-parent", "parent": parent, "count": n_bad}
            )
        for j in tree.children(parent):
            if j == i:
                continue
            overlap = int(np.sum(tree.surface(j).contains_batch(pts)))
            if overlap:
                violations.append(
                    {"surface": i, "kind": "overlaps-sibling", "sibling": j, "count": overlap}
                )
    return {"valid": not violations, "n_probe": n_probe, "violations": violations}


# ---------------------------------------------------------------------------
# JSON loading
# ---------------------------------------------------------------------------

_SURFACE_BUILDERS = {
    "sphere": lambda c: Sphere(c["center"], c["radius"]),
    "ellipsoid": lambda c: Ellipsoid(c["center"], c["A"]),
    "star2d": lambda c: StarCurve2D(
        c["center"], c["base_radius"], c["amplitude"], c["lobes"], c.get("rotation", 0.0)
    ),
}


def surface_from_config(cfg: dict) -> Surface:
    kind = cfg.get("kind")
    if kind not in _SURFACE_BUILDERS:
        raise ValueError(f"unknown surface kind {kind!r}")
    return _SURFACE_BUILDERS[kind](cfg)


def load_domain_json(path_or_dict) -> DomainTree:
    """Build a DomainTree from the JSON domain description.

    Schema: {"dim": d, "surfaces": [ {...}, ... ], "parent": {"2": 1, ...},
    "sigma": [s_1, ..., s_N]}.
    """
    if isinstance(path_or_dict, dict):
        doc = path_or_dict
    else:
        with open(path_or_dict) as fh:
            doc = json.load(fh)
    surfaces = [surface_from_config(c) for c in doc["surfaces"]]
    dim = int(doc.get("dim", surfaces[0].dim))
    if surfaces[0].dim != dim:
        raise ValueError("declared dim does not match surface dim")
    parent = {int(k): int(v) for k, v in doc.get("parent", {}).items()}
    return DomainTree(surfaces, parent, doc["sigma"])
