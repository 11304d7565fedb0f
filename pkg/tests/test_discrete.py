import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tubebumps.discrete import (
    GridField,
    StripGrid,
    apply_operator,
    build_tube_grid,
    check_coercive,
    cross_section_eigenvalue,
    eigen_residual,
    read_field_csv,
    smallest_eigenpairs,
    solve_linear,
    strip_spectrum_bottom,
    write_field_csv,
)
from tubebumps.errors import CurvatureTooLarge, IndefiniteOperator, ResolutionError
from tubebumps.geometry import make_curve

LAMBDA_11 = math.pi ** 2 / 4


@pytest.fixture(scope="module")
def small_strip():
    return StripGrid(3.0, 0.1)


@pytest.fixture(scope="module")
def circle_tube():
    return build_tube_grid(make_curve("circle", radius=1.0), 5.0, 0.1)


def test_cross_section_closed_form():
    assert cross_section_eigenvalue(0.02) == pytest.approx(LAMBDA_11, rel=1e-4)
    assert cross_section_eigenvalue(1e-4) == pytest.approx(LAMBDA_11, rel=1e-8)


def test_periodic_strip_spectrum_is_cross_section_value():
    for h in (0.1, 0.05):
        assert strip_spectrum_bottom(h, 10.0) == pytest.approx(cross_section_eigenvalue(h), rel=1e-10)


def test_strip_spectrum_converges_monotonically():
    errs = [abs(strip_spectrum_bottom(h, 10.0) - LAMBDA_11) for h in (0.2, 0.1, 0.05, 0.02)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    # second order: halving h divides the error by about 4
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.02)


def test_dirichlet_strip_adds_longitudinal_mode():
    # Dirichlet ends at +-L add (pi / 2L)^2 to the cross-section value
    lam = strip_spectrum_bottom(0.05, 10.0, closure="dirichlet")
    h = 0.05
    long = 4 / h ** 2 * math.sin(math.pi * h / 40) ** 2
    assert lam == pytest.approx(cross_section_eigenvalue(h) + long, rel=1e-9)


def test_segment_tube_equals_strip_bitwise():
    seg = make_curve("segment", start=(0, 0), end=(1, 0))
    tube = build_tube_grid(seg, 20.0, 0.05)
    strip = StripGrid(10.0, 0.05)
    assert tube.shape == strip.shape
    assert (tube.K != strip.K).nnz == 0
    assert np.array_equal(tube.mass, strip.mass)


def test_operator_symmetric_and_positive(circle_tube):
    A = circle_tube.operator(1.0)
    assert abs(A - A.T).max() < 1e-12
    rng = np.random.default_rng(0)
    u = rng.standard_normal(circle_tube.size)
    assert u @ (A @ u) > 0


def test_mass_is_jacobian_weighted(circle_tube):
    # the tube integral of 1 is 2 * length for the symmetric Jacobian 1 - kappa eta / R
    area = circle_tube.integrate(np.ones(circle_tube.shape))
    n_eta = circle_tube.shape[1]
    assert area == pytest.approx(circle_tube.length * circle_tube.h2 * n_eta, rel=1e-12)


def test_coercivity_threshold(small_strip):
    with pytest.raises(IndefiniteOperator):
        check_coercive(small_strip, -2.5)
    check_coercive(small_strip, -2.0)
    check_coercive(small_strip, 1.0)


def test_curvature_too_large():
    with pytest.raises(CurvatureTooLarge):
        build_tube_grid(make_curve("circle", radius=1.0), 0.8, 0.1)


def test_resolution_checks():
    with pytest.raises(ResolutionError):
        StripGrid(10.0, 0.3)
    with pytest.raises(ResolutionError):
        StripGrid(2.0, 0.05, mu=1.86)


def test_solve_linear_residual(circle_tube):
    rng = np.random.default_rng(1)
    rhs = rng.standard_normal(circle_tube.shape)
    u = solve_linear(circle_tube, 1.0, rhs)
    assert np.max(np.abs(apply_operator(circle_tube, 1.0, u.values) - rhs)) < 1e-10


def test_solve_linear_manufactured_strip():
    # u = cos(pi eta / 2) sin(pi xi / L) solves -Lap u + u = (1 + pi^2/4 + pi^2/L^2) u
    g = StripGrid(4.0, 0.025)
    X, E = np.meshgrid(g.xi, g.eta, indexing="ij")
    L = 4.0
    u = np.cos(math.pi * E / 2) * np.sin(math.pi * X / L)
    rhs = (1 + LAMBDA_11 + (math.pi / L) ** 2) * u
    sol = solve_linear(g, 1.0, rhs)
    assert np.max(np.abs(sol.values - u)) < 5e-4


def test_eigenpairs_with_potential(small_strip):
    pot = np.full(small_strip.shape, 0.7)
    pairs = smallest_eigenpairs(small_strip, pot, k=2)
    bare = smallest_eigenpairs(small_strip, None, k=2)
    for (a, va), (b, _) in zip(pairs, bare):
        assert a == pytest.approx(b + 0.7, rel=1e-9)
        assert eigen_residual(small_strip, pot, a, va) < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-2.4, 5.0))
def test_a_inner_symmetric_and_coercive(seed, lam):
    g = StripGrid(2.0, 0.1)
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2,) + g.shape)
    assert g.a_inner(u, v, lam) == pytest.approx(g.a_inner(v, u, lam), rel=1e-10, abs=1e-10)
    assert g.a_inner(u, u, lam) > 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_kinetic_matches_stiffness(seed):
    g = StripGrid(2.0, 0.1)
    u = np.random.default_rng(seed).standard_normal(g.shape)
    assert g.kinetic(u) == pytest.approx(float(u.ravel() @ (g.K @ u.ravel())), rel=1e-10)


def test_gridfield_is_read_only_and_arithmetic(small_strip):
    f = GridField(small_strip, np.ones(small_strip.shape))
    with pytest.raises(ValueError):
        f.values[0, 0] = 2.0
    g = f + f * 2.0
    assert g.max_abs() == pytest.approx(3.0)
    assert (-g).values.max() == pytest.approx(-3.0)


def test_field_csv_round_trip(tmp_path, small_strip):
    X, E = np.meshgrid(small_strip.xi, small_strip.eta, indexing="ij")
    f = GridField(small_strip, np.exp(-X ** 2) * np.cos(math.pi * E / 2))
    path = tmp_path / "f.csv"
    write_field_csv(f, path, digits=17)
    x1, eta, vals = read_field_csv(path)
    assert np.array_equal(vals[1:-1, 1:-1], f.values)
    assert x1[0] == pytest.approx(-3.0) and eta[-1] == pytest.approx(1.0)
    assert path.read_text().splitlines()[0] == "xi,eta,value"
