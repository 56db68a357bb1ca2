"""Coefficients and right-hand sides of the charge-density integral system.

The N coupled integral equations are rearranged to unit diagonal, giving per
region a constant alpha_i and a boundary function beta_i:

    alpha_1 = 2,              beta_1 = (2/sigma_1) b_1,
    alpha_i = 2(sigma_i - sigma_p) / (sigma_p + sigma_i),
    beta_i  = -2 b_i / (sigma_p + sigma_i),     i >= 2,

with p the parent region.  Truncating the Neumann series after M applications
halves the last term: w_i = 1 for i < M and w_M = 1/2.
"""

import csv

import numpy as np

from .geometry import DomainTree

__all__ = [
    "InterfaceProblem",
    "CoefficientSet",
    "SchedulePDF",
    "build_coefficients",
    "sample_schedule",
    "check_compatibility",
    "boundary_data",
    "tabulated_boundary_data",
]


class DegenerateConductivityError(ValueError):
    """sigma_i + sigma_parent vanished; the unit-diagonal rescaling is undefined."""


class InterfaceProblem:
    """Domain tree plus boundary flux and interface jump data.

    ``boundary_flux`` is b_1 on the domain boundary; ``jump_data[i]`` is b_i on
    interface i (i >= 2).  Every data callable has signature f(points, normals)
    with (n, d) arrays, returning (n,) values.  ``max_steps`` is the default
    series truncation depth; estimator configs may override it.
    """

    def __init__(self, tree: DomainTree, boundary_flux, jump_data=None, max_steps=4):
        self.tree = tree
        self.boundary_flux = boundary_flux
        self.jump_data = dict(jump_data or {})
        self.max_steps = int(max_steps)
        if self.max_steps < 0:
            raise ValueError("max_steps must be nonnegative")
        if tree.sigma_of(1) <= 0:
            raise ValueError("outer conductivity sigma_1 must be positive")
        for i in range(2, tree.n + 1):
            self.jump_data.setdefault(i, zero_data)

    @property
    def n(self):
        return self.tree.n

    @property
    def dim(self):
        return self.tree.dim

    def data(self, i: int):
        """Raw boundary/jump data b_i on surface i."""
        return self.boundary_flux if i == 1 else self.jump_data[i]


def zero_data(pts, normals):
    return np.zeros(pts.shape[0])


class CoefficientSet:
    """alpha constants, beta boundary functions, and truncation weights."""

    def __init__(self, alpha, betas, max_steps):
        self.alpha = np.asarray(alpha, dtype=float)
        self.betas = list(betas)
        self.max_steps = int(max_steps)
        self.alpha_l1 = float(np.sum(np.abs(self.alpha)))
        self.weights = np.ones(self.max_steps + 1)
        self.weights[-1] = 0.5

    @property
    def n(self):
        return self.alpha.shape[0]

    def beta(self, i: int):
        return self.betas[i - 1]

    def sign(self, i: int) -> float:
        return float(np.sign(self.alpha[i - 1]))


def build_coefficients(problem: InterfaceProblem) -> CoefficientSet:
    """Assemble the unit-diagonal system coefficients from the sigma map."""
    tree = problem.tree
    n = tree.n
    alpha = np.empty(n)
    betas = []
    alpha[0] = 2.0
    s1 = tree.sigma_of(1)

    def _scaled(fn, c):
        return lambda pts, normals: c * fn(pts, normals)

    betas.append(_scaled(problem.boundary_flux, 2.0 / s1))
    for i in range(2, n + 1):
        sp = tree.sigma_of(tree.parent[i])
        si = tree.sigma_of(i)
        if sp + si == 0.0:
            raise DegenerateConductivityError(
                f"sigma_{tree.parent[i]} + sigma_{i} = 0 at interface {i}"
            )
        alpha[i - 1] = 2.0 * (si - sp) / (sp + si)
        betas.append(_scaled(problem.data(i), -2.0 / (sp + si)))
    return CoefficientSet(alpha, betas, problem.max_steps)


class SchedulePDF:
    """Interface-index distribution: uniform at step 0, |alpha|-proportional after."""

    def __init__(self, coeffs: CoefficientSet):
        if coeffs.alpha_l1 <= 0:
            raise ValueError("all alpha coefficients vanish; schedule is degenerate")
        self.n = coeffs.n
        self.p0 = np.full(self.n, 1.0 / self.n)
        self.p_later = np.abs(coeffs.alpha) / coeffs.alpha_l1
        self._cdf0 = np.cumsum(self.p0)
        self._cdf_later = np.cumsum(self.p_later)

    def draw(self, rng, m_steps: int, size: int) -> np.ndarray:
        """(size, m_steps+1) array of 1-based indices h_0..h_M."""
        u = rng.random((size, m_steps + 1))
        return self.indices_from_uniforms(u)

    def indices_from_uniforms(self, u: np.ndarray) -> np.ndarray:
        """Inverse-CDF transform; column 0 uses the uniform law, the rest |alpha|."""
        out = np.empty(u.shape, dtype=np.int64)
        out[:, 0] = np.searchsorted(self._cdf0, u[:, 0], side="right")
        out[:, 1:] = np.searchsorted(self._cdf_later, u[:, 1:], side="right")
        return np.minimum(out, self.n - 1) + 1


def sample_schedule(coeffs: CoefficientSet, m_steps: int, rng) -> np.ndarray:
    """One schedule h_0..h_M of 1-based interface indices."""
    return SchedulePDF(coeffs).draw(rng, m_steps, 1)[0]


def check_compatibility(problem: InterfaceProblem, n_samples: int, rng) -> list:
    """Monte Carlo check of the solvability conditions Int b_i dA = 0.

    Returns one report dict per surface with the integral estimate, its
    standard error, and a flag when |estimate| > 4 SE.
    """
    if n_samples < 10**3:
        raise ValueError("need at least 1e3 samples for a meaningful check")
    reports = []
    for i in range(1, problem.n + 1):
        surf = problem.tree.surface(i)
        pts = surf.sample_batch(rng, n_samples)
        vals = problem.data(i)(pts, surf.normals(pts))
        area = surf.area()
        est = float(np.mean(vals)) * area
        se = float(np.std(vals, ddof=1)) * area / np.sqrt(n_samples)
        reports.append(
            {
                "surface": i,
                "integral": est,
                "standard_error": se,
                "flagged": bool(abs(est) > 4.0 * se + 1e-300),
            }
        )
    return reports


# ---------------------------------------------------------------------------
# Named boundary-data built-ins (config surface) and tabulated data.
# ---------------------------------------------------------------------------


def _harmonic_cubic(scale, center=None):
    """scale * d/dn (x1^3 - 3 x1 x2^2), the flux of a harmonic cubic."""

    def fn(pts, normals):
        x1, x2 = pts[:, 0], pts[:, 1]
        gx = 3.0 * x1 * x1 - 3.0 * x2 * x2
        gy = -6.0 * x1 * x2
        return scale * (gx * normals[:, 0] + gy * normals[:, 1])

    return fn


def _sin_m_theta(lam, m, center):
    center = np.asarray(center, dtype=float)

    def fn(pts, normals):
        d = pts - center
        return lam * np.sin(m * np.arctan2(d[:, 1], d[:, 0]))

    return fn


def _spherical_harmonic_11(lam, center, radius):
    # sin(phi) cos(theta) on a sphere equals (x_1 - c_1)/R.
    center = np.asarray(center, dtype=float)

    def fn(pts, normals):
        return lam * (pts[:, 0] - center[0]) / radius

    return fn


def _sin9cos9(scale, center, radius):
    center = np.asarray(center, dtype=float)

    def fn(pts, normals):
        return scale * ((pts[:, 0] - center[0]) / radius) ** 9

    return fn


def _radial_power_flux(scale, dim):
    """scale * d/dn |x|^(2-d): flux of the free-space point-charge potential."""

    def fn(pts, normals):
        r = np.linalg.norm(pts, axis=1)
        grad = (2.0 - dim) * r ** (-dim)
        return scale * grad * np.einsum("ij,ij->i", pts, normals)

    return fn


def boundary_data(name: str, **params):
    """Named boundary-data builder used by JSON problem configs."""
    if name == "zero":
        return zero_data
    if name == "harmonic-cubic":
        return _harmonic_cubic(params.get("scale", 1.0))
    if name == "sin-m-theta":
        return _sin_m_theta(params["lambda"], params["m"], params.get("center", (0.0, 0.0)))
    if name == "spherical-harmonic-11":
        return _spherical_harmonic_11(
            params["lambda"], params.get("center", (0.0, 0.0, 0.0)), params.get("radius", 1.0)
        )
    if name == "sin9cos9":
        return _sin9cos9(
            params.get("scale", 1.0),
            params.get("center", (0.0, 0.0, 0.0)),
            params.get("radius", 1.0),
        )
    if name == "point-charge-flux":
        return _radial_power_flux(params.get("scale", 1.0), params["dim"])
    raise ValueError(f"unknown boundary data {name!r}")


def tabulated_boundary_data(csv_path):
    """Nearest-neighbor lookup of tabulated boundary data.

    CSV columns: surface-local coordinates (one or more) followed by the value.
    """
    with open(csv_path) as fh:
        rows = [r for r in csv.reader(fh) if r]
    header_offset = 0
    try:
        float(rows[0][0])
    except ValueError:
        header_offset = 1
    table = np.asarray([[float(v) for v in r] for r in rows[header_offset:]])
    coords, values = table[:, :-1], table[:, -1]

    def fn(local_coords, normals=None):
        local = np.atleast_2d(np.asarray(local_coords, dtype=float))
        d2 = ((local[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
        return values[np.argmin(d2, axis=1)]

    return fn
