"""Closed-form reference solutions for the built-in benchmark problems.

These mirror the solver's benchmark definitions so the trainer can score a
learned field without importing any solver code.
"""

import math

import numpy as np


def harmonic_cubic(pts, **_):
    x1, x2 = pts[:, 0], pts[:, 1]
    return x1**3 - 3.0 * x1 * x2**2


def kinked_two_circles_2d(pts, alpha=0.4, sigma_ratio=1.0 / 3.0, m=3, lam=20.0):
    sig = float(sigma_ratio)
    a = (2.0 / m) / (alpha ** (2 * m) * (sig - 1.0) + sig + 1.0)
    b = 0.5 * a * (sig + 1.0)
    c = b - 1.0 / m
    r = np.linalg.norm(pts, axis=1)
    th = np.arctan2(pts[:, 1], pts[:, 0])
    r_safe = np.maximum(r, alpha)
    inner = lam * a * r**m
    outer = lam * (b * r**m + c * r_safe ** (-1.0 * m))
    return np.where(r <= alpha, inner, outer) * np.sin(m * th)


def point_charge(pts, dim=None, **_):
    d = pts.shape[1] if dim is None else dim
    return np.linalg.norm(pts, axis=1) ** (2.0 - d)


def spherical_mode_3d(pts, alpha=0.4, sigma_ratio=0.5, lam=5.0):
    sig = float(sigma_ratio)
    mat = np.array(
        [
            [0.0, 1.0, -2.0],
            [alpha, -alpha, -(alpha**-2.0)],
            [sig, -1.0, 2.0 * alpha**-3.0],
        ]
    )
    a, b, c = np.linalg.solve(mat, [math.sqrt(4 * math.pi / 3.0), 0.0, 0.0])
    r = np.linalg.norm(pts, axis=1)
    radial = np.where(r <= alpha, a * r, b * r + c * np.maximum(r, alpha) ** -2.0)
    return lam * radial * math.sqrt(3.0 / (4 * math.pi)) * pts[:, 0] / np.maximum(r, 1e-300)


TRUTHS = {
    "example1": harmonic_cubic,
    "example3-2d": kinked_two_circles_2d,
    "example3-3d": spherical_mode_3d,
    "point-charge": point_charge,
}


def truth_by_name(name):
    if name not in TRUTHS:
        raise KeyError(f"unknown truth {name!r}; available: {sorted(TRUTHS)}")
    return TRUTHS[name]
