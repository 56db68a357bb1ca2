import json
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import chisquare, kstest

from woi.geometry import (
    DomainTree,
    Ellipsoid,
    Ray,
    Sphere,
    StarCurve2D,
    TreeValidationError,
    load_domain_json,
    validate_tree,
)


def test_unit_circle_area():
    assert Sphere((0, 0), 1.0).area() == pytest.approx(2 * math.pi, rel=1e-14)


def test_unit_sphere_area():
    assert Sphere((0, 0, 0), 1.0).area() == pytest.approx(4 * math.pi, rel=1e-14)


def test_ellipse_perimeter_vs_quadrature_oracle():
    # Ellipse with semi-axes 2 and 3: A = diag(1/4, 1/9).
    ell = Ellipsoid((0, 0), [[0.25, 0.0], [0.0, 1.0 / 9.0]])
    oracle, _ = quad(
        lambda t: math.sqrt(4 * math.sin(t) ** 2 + 9 * math.cos(t) ** 2),
        0.0,
        2 * math.pi,
        epsabs=1e-12,
    )
    assert abs(ell.area() - oracle) / oracle < 1e-4


def test_ellipsoid_area_dim3_matches_sphere_limit():
    ell = Ellipsoid((1, 2, 3), np.eye(3) / 4.0)
    assert ell.area() == pytest.approx(4 * math.pi * 4.0, rel=1e-8)


def test_sphere_normal_radial():
    s = Sphere((0, 0, 0), 1.0)
    np.testing.assert_allclose(s.normal((1.0, 0.0, 0.0)), [1.0, 0.0, 0.0], atol=1e-14)


def test_ellipsoid_normal_formula():
    A = np.array([[2.0, 0.3], [0.3, 1.0]])
    ell = Ellipsoid((0.5, -0.2), A)
    y = ell.sample_batch(np.random.default_rng(0), 8)
    expected = (y - ell.center) @ A
    expected /= np.linalg.norm(expected, axis=1, keepdims=True)
    np.testing.assert_allclose(ell.normals(y), expected, atol=1e-12)


def test_star_with_zero_amplitude_is_circle():
    star = StarCurve2D((0, 0), 1.0, 0.0, 5)
    theta = np.linspace(0, 2 * math.pi, 17)
    pts = star.point_at(theta)
    np.testing.assert_allclose(star.normals(pts), pts, atol=1e-12)
    assert star.area() == pytest.approx(2 * math.pi, rel=1e-10)


def test_normal_rejects_off_surface_point():
    with pytest.raises(ValueError):
        Sphere((0, 0), 1.0).normal((0.5, 0.0))


def test_sphere_sample_mean_near_center(rng):
    s = Sphere((1.0, -2.0, 0.5), 2.0)
    pts = s.sample_batch(rng, 100_000)
    se = 2.0 / math.sqrt(pts.shape[0])  # per-coordinate std is radius/sqrt(d) < radius
    assert np.all(np.abs(pts.mean(axis=0) - s.center) < 4 * se)


def test_ellipsoid_halfspace_fraction(rng):
    ell = Ellipsoid((0.0, 0.0, 0.0), np.diag([1.0, 2.0, 0.5]))
    pts = ell.sample_batch(rng, 100_000)
    frac = np.mean(pts @ np.array([1.0, 1.0, 1.0]) > 0)
    se = 0.5 / math.sqrt(pts.shape[0])
    assert abs(frac - 0.5) < 3 * se


def test_circle_sampling_uniform_chisquare(rng):
    s = Sphere((0.3, 0.7), 1.5)
    pts = s.sample_batch(rng, 100_000)
    ang = np.mod(np.arctan2(pts[:, 1] - 0.7, pts[:, 0] - 0.3), 2 * math.pi)
    counts, _ = np.histogram(ang, bins=32, range=(0, 2 * math.pi))
    assert chisquare(counts).pvalue > 0.01


def test_sphere_sampling_uniform_chisquare(rng):
    s = Sphere((0.0, 0.0, 0.0), 1.0)
    pts = s.sample_batch(rng, 100_000)
    # z-slices and azimuthal sectors are both equal-area bins on the sphere.
    for coords in (pts[:, 2], np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * math.pi)):
        lo, hi = (-1, 1) if coords.min() < 0 else (0, 2 * math.pi)
        counts, _ = np.histogram(coords, bins=24, range=(lo, hi))
        assert chisquare(counts).pvalue > 0.01


def test_star_sampling_uniform_in_arclength(rng):
    star = StarCurve2D((0.2, -0.1), 1.0, 0.25, 5)
    pts = star.sample_batch(rng, 100_000)
    # Independent dense-polyline arc-length table as the oracle.
    theta = np.linspace(0, 2 * math.pi, 200_001)
    poly = star.point_at(theta)
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s_of_theta = lambda th: np.interp(th, theta, cum)
    svals = s_of_theta(star.theta_of(pts)) / cum[-1]
    assert kstest(svals, "uniform").pvalue > 0.01


def test_sphere_ray_intersections_axis_chord():
    s = Sphere((0.0, 0.0, 0.0), 1.0)
    hits = s.intersections(Ray((-2.0, 0.0, 0.0), (1.0, 0.0, 0.0)))
    ts = [t for t, _ in hits]
    np.testing.assert_allclose(ts, [1.0, 3.0], atol=1e-12)


def test_tangent_ray_treated_as_zero_crossings():
    # Tangency (discriminant below threshold) counts as no crossing, keeping
    # crossing parity consistent with containment.
    s = Sphere((0.0, 0.0), 1.0)
    assert s.intersections(Ray((-2.0, 1.0), (1.0, 0.0))) == []


def test_ray_intersection_residual_refined():
    ell = Ellipsoid((0.2, -0.1, 0.4), np.diag([1.0, 2.0, 3.0]))
    rng = np.random.default_rng(5)
    for _ in range(50):
        origin = ell.center + np.array([3.0, 0.0, 0.0]) + 0.1 * rng.standard_normal(3)
        d = rng.standard_normal(3)
        d /= np.linalg.norm(d)
        for t, p in ell.intersections(Ray(origin, d)):
            assert t > 0
            assert abs(ell.implicit_residual(p[None, :])[0]) < 1e-8


def test_star_ray_intersections_vs_polyline_oracle(rng):
    star = StarCurve2D((0.0, 0.0), 1.0, 0.2, 4)
    theta = np.linspace(0, 2 * math.pi, 10_001)
    poly = star.point_at(theta)

    def polyline_crossings(o, d):
        rel = poly - o
        lateral = rel[:, 0] * d[1] - rel[:, 1] * d[0]
        t_along = rel @ d
        count = 0
        for j in range(len(poly) - 1):
            if lateral[j] * lateral[j + 1] < 0:
                w = abs(lateral[j]) / (abs(lateral[j]) + abs(lateral[j + 1]))
                t = (1 - w) * t_along[j] + w * t_along[j + 1]
                if t > 1e-9:
                    count += 1
        return count

    agree = 0
    n_rays = 2000
    for _ in range(n_rays):
        o = rng.standard_normal(2) * 2.0
        d = rng.standard_normal(2)
        d /= np.linalg.norm(d)
        if abs(star.implicit_residual(o[None, :])[0]) < 1e-3:
            agree += 1
            continue
        if len(star.intersections(Ray(o, d))) == polyline_crossings(o, d):
            agree += 1
    assert agree / n_rays >= 0.999


def test_contains_trivials():
    s = Sphere((0.0, 0.0, 0.0), 1.0)
    assert s.contains((0.0, 0.0, 0.0))
    assert not s.contains((2.0, 0.0, 0.0))
    star = StarCurve2D((0.0, 0.0), 1.0, 0.3, 3)
    assert not star.contains((1.3 + 1e-9, 0.0))


def test_contains_matches_ray_parity_for_quadrics(rng):
    surfaces = [
        Sphere((0.1, -0.2, 0.4), 1.3),
        Ellipsoid((0.5, 0.0, -0.3), np.diag([0.8, 1.7, 2.5])),
    ]
    for surf in surfaces:
        checked = 0
        for _ in range(1000):
            x = surf.center + rng.standard_normal(3) * 1.5
            d = rng.standard_normal(3)
            d /= np.linalg.norm(d)
            # Exclude near-tangency via the quadric discriminant (misses have
            # a clearly negative discriminant and count as parity 0).
            oc = x - surf.center
            A = surf.A if isinstance(surf, Ellipsoid) else np.eye(3) / surf.radius**2
            a = d @ A @ d
            b = d @ A @ oc
            c = oc @ A @ oc - 1.0
            if abs(b * b - a * c) < 1e-12:
                continue
            checked += 1
            inside = surf.contains(x)
            parity = len(surf.intersections(Ray(x, d))) % 2
            assert inside == (parity == 1)
        assert checked > 800


def test_sampled_points_on_surface_invariant(rng):
    surfaces = [
        Sphere((0.0, 1.0), 2.0),
        Ellipsoid((0.0, 0.0, 0.0), np.diag([1.0, 2.0, 4.0])),
        StarCurve2D((0.0, 0.0), 1.0, 0.2, 5),
    ]
    for surf in surfaces:
        pts = surf.sample_batch(rng, 2000)
        # Residuals are quadratic-form or radial offsets; both ~machine level.
        assert np.max(np.abs(surf.implicit_residual(pts))) < 1e-10
        nrm = surf.normals(pts)
        assert np.max(np.abs(np.linalg.norm(nrm, axis=1) - 1.0)) < 1e-12


def test_antipode_preserves_surface_and_uniformity(rng):
    star = StarCurve2D((0.5, 0.5), 1.0, 0.15, 3)
    pts = star.sample_batch(rng, 5000)
    anti = star.antipode(pts)
    assert np.max(np.abs(star.implicit_residual(anti))) < 1e-8
    ell = Ellipsoid((1.0, 0.0), [[1.0, 0.2], [0.2, 2.0]])
    pts = ell.sample_batch(rng, 5000)
    anti = ell.antipode(pts)
    assert np.max(np.abs(ell.implicit_residual(anti))) < 1e-10


def test_validate_tree_concentric_circles():
    tree = DomainTree([Sphere((0, 0), 1.0), Sphere((0, 0), 0.4)], {2: 1}, [1.0, 0.5])
    assert validate_tree(tree, 500)["valid"]


def test_validate_tree_disjoint_siblings():
    tree = DomainTree(
        [Sphere((0, 0), 5.0), Sphere((-2, 0), 0.5), Sphere((2, 0), 0.5)],
        {2: 1, 3: 1},
        [1.0, 2.0, 3.0],
    )
    assert validate_tree(tree, 500)["valid"]


def test_validate_tree_reports_impossible_containment():
    tree = DomainTree([Sphere((0, 0), 1.0), Sphere((0, 0), 2.0)], {2: 1}, [1.0, 1.0])
    report = validate_tree(tree, 200)
    assert not report["valid"]
    assert report["violations"][0]["kind"] == "outside-parent"


def test_malformed_parent_maps_rejected():
    with pytest.raises(TreeValidationError):
        DomainTree(
            [Sphere((0, 0), 3.0), Sphere((0, 0), 1.0), Sphere((0, 0), 2.0)],
            {2: 3, 3: 2},
            [1.0, 1.0, 1.0],
        )
    with pytest.raises(TreeValidationError):
        DomainTree([Sphere((0, 0), 1.0)], {1: 1}, [1.0])


def test_ray_requires_unit_direction():
    with pytest.raises(ValueError):
        Ray((0, 0), (1.0, 1.0))


def test_domain_json_roundtrip(tmp_path):
    doc = {
        "dim": 2,
        "surfaces": [
            {"kind": "sphere", "center": [0.0, 0.0], "radius": 1.0},
            {"kind": "star2d", "center": [0.1, 0.0], "base_radius": 0.4,
             "amplitude": 0.05, "lobes": 3, "rotation": 0.1},
        ],
        "parent": {"2": 1},
        "sigma": [1.0, 2.0],
    }
    path = tmp_path / "domain.json"
    path.write_text(json.dumps(doc))
    tree = load_domain_json(str(path))
    assert tree.n == 2
    assert tree.sigma_of(2) == 2.0
    assert validate_tree(tree, 200)["valid"]


def test_region_of_nested():
    tree = DomainTree(
        [Sphere((0, 0), 2.0), Sphere((0, 0), 1.0), Sphere((0, 0), 0.3)],
        {2: 1, 3: 2},
        [1.0, 1.0, 1.0],
    )
    assert tree.region_of((1.5, 0.0)) == 1
    assert tree.region_of((0.5, 0.0)) == 2
    assert tree.region_of((0.0, 0.1)) == 3
    assert tree.region_of((3.0, 0.0)) == 0
