"""Free-space Green's function of the Laplacian and the adjoint double-layer kernel.

All formulas are dimension-generic (d >= 2).  The kernel routines come in two
flavours: scalar reference implementations that validate their inputs, and
vectorized variants used by the walk engines that assume well-separated points.
"""

import math

import numpy as np

__all__ = [
    "KernelContext",
    "SingularKernelError",
    "unit_ball_volume",
    "green",
    "green_of_distance",
    "green_gradient",
    "poincare_kernel",
    "green_from_r2",
    "poincare_kernel_rows",
]

# Distance below which kernel evaluation is considered singular.
SINGULAR_EPS = 1e-14


class SingularKernelError(ValueError):
    """Raised when a kernel is evaluated at (almost) coincident points."""


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d, by the exact two-step recursion.

    alpha(d) = 2*pi*alpha(d-2)/d with alpha(0) = 1, alpha(1) = 2, so the
    value is exact for integer d without a general gamma routine.
    """
    if not 0 <= d <= 64:
        raise ValueError(f"dimension {d} outside supported range [0, 64]")
    if d == 0:
        return 1.0
    if d == 1:
        return 2.0
    return 2.0 * math.pi * unit_ball_volume(d - 2) / d


class KernelContext:
    """Precomputed dimension-dependent constants for kernel evaluation."""

    def __init__(self, dim: int):
        if dim < 2:
            raise ValueError("kernel context requires dim >= 2")
        self.dim = int(dim)
        self.ball_volume = unit_ball_volume(self.dim)
        # 1/(d*alpha(d)) is the surface-measure normalizer shared by both kernels.
        self.inv_sphere_area = 1.0 / (self.dim * self.ball_volume)
        if self.dim >= 3:
            self._green_scale = 1.0 / (self.dim * (self.dim - 2) * self.ball_volume)
        else:
            self._green_scale = -0.5 / math.pi

    def __repr__(self):
        return f"KernelContext(dim={self.dim})"


def _checked_distance(x, y):
    r = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    if r < SINGULAR_EPS:
        raise SingularKernelError(f"kernel evaluated at coincident points (|x-y|={r:.3e})")
    return r


def green_of_distance(ctx: KernelContext, r: float) -> float:
    """Green's function as a function of the distance alone.

    d = 2:  -(1/2pi) ln r;  d >= 3:  r^(2-d) / (d(d-2)alpha(d)).
    """
    if ctx.dim == 2:
        return -0.5 / math.pi * math.log(r)
    return ctx._green_scale * r ** (2 - ctx.dim)


def green(ctx: KernelContext, x, y) -> float:
    """Free-space Green's function evaluated at a pair of points."""
    return green_of_distance(ctx, _checked_distance(x, y))


def green_gradient(ctx: KernelContext, x, y) -> np.ndarray:
    """Gradient in the first argument: -(x-y) / (d*alpha(d)*|x-y|^d)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = _checked_distance(x, y)
    return -ctx.inv_sphere_area * (x - y) / r**ctx.dim


def poincare_kernel(ctx: KernelContext, x, n_x, y) -> float:
    """Adjoint Neumann-Poincare kernel K*(x, y) = -d Phi(x,y)/d n(x).

    Equals ((x-y).n(x)) / (d*alpha(d)*|x-y|^d); positive when x-y aligns
    with the normal at x.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n_x = np.asarray(n_x, dtype=float)
    r = _checked_distance(x, y)
    return ctx.inv_sphere_area * float(np.dot(x - y, n_x)) / r**ctx.dim


# ---------------------------------------------------------------------------
# Vectorized variants for the walk engines.  These operate on (n, d) arrays and
# do not raise on near-singular pairs; callers are expected to mask/resample.
# ---------------------------------------------------------------------------


def green_from_r2(ctx: KernelContext, r2: np.ndarray) -> np.ndarray:
    """Green's function from squared distances (array-valued)."""
    if ctx.dim == 2:
        return -0.25 / math.pi * np.log(r2)
    if ctx.dim == 3:
        return ctx._green_scale / np.sqrt(r2)
    if ctx.dim == 4:
        return ctx._green_scale / r2
    return ctx._green_scale * r2 ** (0.5 * (2 - ctx.dim))


def poincare_kernel_rows(ctx: KernelContext, x, n_x, y) -> np.ndarray:
    """K*(x_i, y_i) for paired rows of (n, d) arrays x, y with normals n_x at x."""
    diff = x - y
    r2 = np.einsum("ij,ij->i", diff, diff)
    dots = np.einsum("ij,ij->i", diff, n_x)
    return ctx.inv_sphere_area * dots * r2 ** (-0.5 * ctx.dim)
