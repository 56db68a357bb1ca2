import math

import numpy as np
import pytest

from woi.densities import (
    InterfaceProblem,
    SchedulePDF,
    boundary_data,
    build_coefficients,
    check_compatibility,
    sample_schedule,
    tabulated_boundary_data,
    zero_data,
)
from woi.geometry import DomainTree, Sphere


def _two_circle_problem(sigma, b1=None, b2=None):
    tree = DomainTree([Sphere((0, 0), 1.0), Sphere((0, 0), 0.4)], {2: 1}, list(sigma))
    return InterfaceProblem(tree, b1 or zero_data, {2: b2 or zero_data}, max_steps=3)


def test_alpha_zero_when_sigma_matches():
    coeffs = build_coefficients(_two_circle_problem((1.2, 1.2)))
    assert coeffs.alpha[1] == 0.0


def test_alpha_example1_sigmas():
    coeffs = build_coefficients(_two_circle_problem((1.5, 0.5)))
    assert coeffs.alpha[0] == 2.0
    assert coeffs.alpha[1] == pytest.approx(-1.0, rel=1e-15)


def test_alpha_insulating_child():
    coeffs = build_coefficients(_two_circle_problem((1.2, 0.0)))
    assert coeffs.alpha[1] == pytest.approx(-2.0, rel=1e-15)


def test_alpha_always_bounded_by_two(rng):
    for _ in range(200):
        s = rng.random(2) * 5
        if s[0] == 0:
            continue
        coeffs = build_coefficients(_two_circle_problem(s))
        assert np.all(np.abs(coeffs.alpha) <= 2.0 + 1e-15)
        assert coeffs.alpha_l1 >= 2.0


def test_beta_scalings():
    def b1(pts, normals):
        return np.full(pts.shape[0], 3.0)

    def b2(pts, normals):
        return np.full(pts.shape[0], 5.0)

    problem = _two_circle_problem((2.0, 6.0), b1=b1, b2=b2)
    coeffs = build_coefficients(problem)
    pts = np.array([[1.0, 0.0]])
    nrm = np.array([[1.0, 0.0]])
    assert coeffs.beta(1)(pts, nrm)[0] == pytest.approx(2.0 / 2.0 * 3.0)
    assert coeffs.beta(2)(pts, nrm)[0] == pytest.approx(-2.0 / 8.0 * 5.0)


def test_truncation_weights_halve_last_term():
    coeffs = build_coefficients(_two_circle_problem((1.0, 0.5)))
    np.testing.assert_array_equal(coeffs.weights, [1.0, 1.0, 1.0, 0.5])


def test_degenerate_conductivity_rejected():
    from woi.densities import DegenerateConductivityError

    # Both sides of interface 3 insulate: the unit-diagonal rescaling divides
    # by sigma_2 + sigma_3 = 0.
    tree = DomainTree(
        [Sphere((0, 0), 1.0), Sphere((0, 0), 0.5), Sphere((0, 0), 0.2)],
        {2: 1, 3: 2},
        [1.0, 0.0, 0.0],
    )
    with pytest.raises(DegenerateConductivityError):
        build_coefficients(InterfaceProblem(tree, zero_data))


def test_sigma1_must_be_positive():
    tree = DomainTree([Sphere((0, 0), 1.0)], {}, [0.0])
    with pytest.raises(ValueError):
        InterfaceProblem(tree, zero_data)


def test_single_surface_schedule_deterministic(rng):
    tree = DomainTree([Sphere((0, 0), 1.0)], {}, [1.0])
    problem = InterfaceProblem(tree, zero_data, max_steps=5)
    sched = sample_schedule(build_coefficients(problem), 5, rng)
    np.testing.assert_array_equal(sched, np.ones(6, dtype=int))


def test_schedule_probabilities_match_alpha_weights(rng):
    coeffs = build_coefficients(_two_circle_problem((1.5, 0.5)))  # alpha = (2, -1)
    pdf = SchedulePDF(coeffs)
    n = 100_000
    draws = pdf.draw(rng, 3, n)
    # Steps >= 1 follow |alpha|/||alpha||_1 = (2/3, 1/3).
    for col in (1, 2, 3):
        freq = np.mean(draws[:, col] == 1)
        se = math.sqrt((2 / 3) * (1 / 3) / n)
        assert abs(freq - 2 / 3) < 4 * se
    # Step 0 is uniform regardless of alpha.
    freq0 = np.mean(draws[:, 0] == 1)
    assert abs(freq0 - 0.5) < 4 * math.sqrt(0.25 / n)


def test_schedule_never_emits_zero_alpha_interface(rng):
    tree = DomainTree(
        [Sphere((0, 0), 1.0), Sphere((0.4, 0), 0.2), Sphere((-0.4, 0), 0.2)],
        {2: 1, 3: 1},
        [1.0, 1.0, 0.25],  # alpha_2 = 0
    )
    problem = InterfaceProblem(tree, zero_data, max_steps=4)
    pdf = SchedulePDF(build_coefficients(problem))
    draws = pdf.draw(rng, 4, 50_000)
    assert not np.any(draws[:, 1:] == 2)
    # ...but index 2 still receives uniform step-0 mass.
    assert abs(np.mean(draws[:, 0] == 2) - 1 / 3) < 0.02


def test_compatibility_odd_function_passes(rng):
    def b1(pts, normals):
        return pts @ np.array([1.0, 0.0])

    problem = _two_circle_problem((1.0, 1.0), b1=b1)
    reports = check_compatibility(problem, 100_000, rng)
    assert not reports[0]["flagged"]


def test_compatibility_constant_flagged(rng):
    def b1(pts, normals):
        return np.ones(pts.shape[0])

    problem = _two_circle_problem((1.0, 1.0), b1=b1)
    reports = check_compatibility(problem, 10_000, rng)
    assert reports[0]["flagged"]


def test_compatibility_sin_m_theta_passes(rng):
    b1 = boundary_data("sin-m-theta", **{"lambda": 20.0, "m": 3})
    problem = _two_circle_problem((1.0, 1.0 / 3.0), b1=b1)
    reports = check_compatibility(problem, 100_000, rng)
    assert not reports[0]["flagged"]


def test_compatibility_sample_floor():
    problem = _two_circle_problem((1.0, 1.0))
    with pytest.raises(ValueError):
        check_compatibility(problem, 100, np.random.default_rng(0))


def test_boundary_data_builtins():
    pts = np.array([[1.0, 0.0], [0.0, 1.0]])
    nrm = pts.copy()
    hc = boundary_data("harmonic-cubic", scale=2.0)
    # d/dn (x^3 - 3xy^2) at (1,0) with n = e_x is 3.
    assert hc(pts, nrm)[0] == pytest.approx(6.0)
    sm = boundary_data("sin-m-theta", **{"lambda": 3.0, "m": 2})
    assert sm(pts, nrm)[0] == pytest.approx(0.0, abs=1e-14)
    zero = boundary_data("zero")
    np.testing.assert_array_equal(zero(pts, nrm), [0.0, 0.0])
    sh = boundary_data("spherical-harmonic-11", **{"lambda": 5.0, "radius": 1.0})
    pts3 = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    np.testing.assert_allclose(sh(pts3, pts3), [5.0, 0.0], atol=1e-14)
    s9 = boundary_data("sin9cos9", scale=10.0, radius=2.0)
    assert s9(np.array([[2.0, 0.0, 0.0]]), None)[0] == pytest.approx(10.0)
    pc = boundary_data("point-charge-flux", scale=1.0, dim=3)
    # At |x| = 2 with radial normal: d/dn r^-1 = -1/4.
    assert pc(np.array([[2.0, 0.0, 0.0]]), np.array([[1.0, 0.0, 0.0]]))[0] == pytest.approx(-0.25)


def test_tabulated_boundary_data(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("theta,value\n0.0,1.0\n3.14159,-1.0\n")
    fn = tabulated_boundary_data(str(path))
    np.testing.assert_allclose(fn([[0.1]]), [1.0])
    np.testing.assert_allclose(fn([[3.0]]), [-1.0])
