import math

import numpy as np
import pytest

from tubebumps.ansatz import Ansatz
from tubebumps.discrete import build_tube_grid
from tubebumps.errors import ContractionFailure, LeftTrustRegion, SignPatternBroken
from tubebumps.geometry import SeparationScales, make_curve
from tubebumps.pipeline import loglog_slope
from tubebumps.reduction import (
    calibrate_interactions,
    cross_energy,
    energy,
    energy_report,
    gradient,
    gradient_norm,
    grid_search_gap,
    hessian_apply,
    interaction_integral,
    minimize_chain,
    normal_min_eigenvalue,
    normal_refine,
)

CIRCLE = make_curve("circle", radius=1.0)
SEGMENT = make_curve("segment", start=(0.0, 0.0), end=(1.0, 0.0))
R_SWEEP = (20.0, 40.0, 80.0)


@pytest.fixture(scope="module")
def model(profiles):
    return calibrate_interactions(profiles)


@pytest.fixture(scope="module")
def circle_runs(cfg, profiles):
    out = {}
    for R in R_SWEEP:
        anz = Ansatz(build_tube_grid(CIRCLE, R, cfg.h), profiles)
        out[R] = (anz, normal_refine(anz, (0.0, 0.5), tol=cfg.tol_reduce))
    return out


@pytest.fixture(scope="module")
def pair_tube(cfg, profiles):
    # long strip so that the partner bump covers the other peak
    tube = build_tube_grid(SEGMENT, 60.0, cfg.h)
    return Ansatz(tube, profiles, half_width=profiles[1].L_xi - 1.0, clip=True)


def test_energy_of_zero_and_profile(plus):
    g = plus.grid
    assert energy(np.zeros(g.shape), g, plus.lam, plus.nl) == 0.0
    assert energy(plus.values, g, plus.lam, plus.nl) == pytest.approx(plus.energy, rel=1e-12)


def test_energy_scaling_derivative_vanishes(plus):
    g, eps = plus.grid, 1e-4
    jp = energy((1 + eps) * plus.values, g, plus.lam, plus.nl)
    jm = energy((1 - eps) * plus.values, g, plus.lam, plus.nl)
    assert abs((jp - jm) / (2 * eps)) <= 1e-6


def test_gradient_at_profile_and_zero(plus):
    g = plus.grid
    assert gradient_norm(plus.values, g, plus.lam, plus.nl) <= 1e-8
    assert not gradient(np.zeros(g.shape), g, plus.lam, plus.nl).values.any()


def test_gradient_directional_consistency(plus):
    g = plus.grid
    rng = np.random.default_rng(0)
    u = 0.8 * plus.values
    grad = gradient(u, g, plus.lam, plus.nl).values
    eps = 1e-4
    for _ in range(10):
        w = rng.standard_normal(g.shape) * plus.values
        fd = (energy(u + eps * w, g, plus.lam, plus.nl) - energy(u - eps * w, g, plus.lam, plus.nl)) / (2 * eps)
        assert g.a_inner(grad, w, plus.lam) == pytest.approx(fd, rel=1e-5)


def test_hessian_matches_gradient_difference(plus):
    g = plus.grid
    rng = np.random.default_rng(1)
    u = 0.9 * plus.values
    z = rng.standard_normal(g.shape) * plus.values
    eps = 1e-5
    fd = (gradient(u + eps * z, g, plus.lam, plus.nl).values
          - gradient(u - eps * z, g, plus.lam, plus.nl).values) / (2 * eps)
    hz = hessian_apply(u, z, g, plus.lam, plus.nl)
    assert np.max(np.abs(fd - hz)) <= 1e-6 * np.max(np.abs(hz))


def test_interaction_signs(plus, profiles):
    g = plus.grid
    same = interaction_integral(plus.values, plus.values, plus.nl, g)
    opposite = interaction_integral(plus.values, profiles[-1].values, plus.nl, g)
    assert same > 0
    assert opposite == pytest.approx(-g.integrate(plus.nl.f(plus.values) * plus.values), rel=1e-14)
    assert opposite < 0


def test_pair_cross_energy_leading_term(pair_tube):
    tube, R = pair_tube.tube, pair_tube.tube.R
    nl, lam = pair_tube.nl, pair_tube.lam
    mu = pair_tube.profiles[1].mu
    for d in (4.0, 5.0, 6.0):
        b1 = pair_tube.bump((R / 2 - d / 2) / R, 1)
        b2 = pair_tube.bump((R / 2 + d / 2) / R, -1)
        b3 = pair_tube.bump((R / 2 + d / 2) / R, 1)
        cross = cross_energy(b1.embedded(), b2.embedded(), tube, lam, nl)
        lead = -0.5 * (interaction_integral(b1, b2, nl) + interaction_integral(b2, b1, nl))
        assert d >= 6 / mu
        assert cross > 0 and lead > 0
        assert abs(cross - lead) <= 0.1 * lead
        assert cross_energy(b1.embedded(), b3.embedded(), tube, lam, nl) < 0


def test_normal_refine_contracts(circle_runs, cfg):
    for R, (anz, red) in circle_runs.items():
        assert red.projected_grad_norm <= cfg.tol_reduce
        assert red.contraction < 1
        assert red.orthonormality_error <= 1e-10
        w = (red.v - red.u).ravel()
        K = anz.tube.operator(anz.lam)
        # the correction lies in the a-orthogonal complement of the tangent space
        assert np.max(np.abs(red.tangent @ (K @ w))) <= 1e-10 * max(red.w_norm, 1e-300)
        assert red.w_norm < red.trust_radius


def test_relative_correction_decreases_on_circle(circle_runs):
    rc = [circle_runs[R][1].relative_correction for R in R_SWEEP]
    assert rc[0] > rc[1] > rc[2]


def test_gap_quadratic_in_gradient(circle_runs):
    reds = [circle_runs[R][1] for R in R_SWEEP]
    C = reds[0].gap / reds[0].grad_norm ** 2
    for red in reds[1:]:
        ratio = red.gap / (C * red.grad_norm ** 2)
        assert 0.5 <= ratio <= 2.0
    # halving the gradient quarters the gap within a factor 2
    for a, b in zip(reds, reds[1:]):
        assert 0.5 <= (b.gap / a.gap) / (b.grad_norm / a.grad_norm) ** 2 <= 2.0


def test_gradient_decreases_along_R(circle_runs):
    g = [circle_runs[R][1].grad_norm for R in R_SWEEP]
    assert g[0] > g[1] > g[2]


def test_gradient_slope_window(circle_runs):
    # invariant window for the log-log slope of ||grad J(phi)||_a against R
    g = [circle_runs[R][1].grad_norm for R in R_SWEEP]
    slope = loglog_slope(R_SWEEP, g)
    assert -0.8 <= slope <= -0.3, f"gradient slope {slope:.4f} outside [-0.8, -0.3]"


def test_normal_hessian_bounded_away_from_zero(circle_runs):
    eig = [normal_min_eigenvalue(*circle_runs[R]) for R in R_SWEEP]
    assert min(eig) > 0
    assert all(e >= 0.5 * eig[0] for e in eig)


def test_empty_chain(circle_runs):
    anz, _ = circle_runs[20.0]
    red = normal_refine(anz, ())
    assert red.G_R == 0.0
    assert energy_report(anz, ()).J_phi == 0.0


def test_overlapping_chain_is_never_silent(cfg, profiles):
    anz = Ansatz(build_tube_grid(CIRCLE, 20.0, cfg.h), profiles)
    t = (0.0, 1.0 / (20.0 * 2 * math.pi))
    with pytest.raises((ContractionFailure, LeftTrustRegion, SignPatternBroken)):
        normal_refine(anz, t)


def test_model_calibration_rates(model, profiles):
    mu = profiles[1].mu
    assert model.beta_rate == pytest.approx(mu, rel=0.05)
    assert model.end_rate == pytest.approx(2 * mu, rel=0.05)
    # a bump near a Dirichlet end meets its odd image: half the pair amplitude
    assert model.c_end == pytest.approx(model.beta / 2, rel=0.05)


def test_remainder_small_for_close_pairs(pair_tube):
    R = pair_tube.tube.R
    ratios = []
    for d in (4.0, 5.0, 6.0, 7.0):
        t = ((R / 2 - d / 2) / R, (R / 2 + d / 2) / R)
        rep = energy_report(pair_tube, t, refine=False)
        ratios.append(abs(rep.remainder) / rep.max_interaction)
    assert max(ratios) <= 0.3
    assert all(b < a for a, b in zip(ratios, ratios[1:]))


def _scales(profiles):
    return SeparationScales(profiles[1].mu, profiles[1].nl.alpha_prime)


def test_antipodal_minimizer(cfg, profiles, model):
    anz = Ansatz(build_tube_grid(CIRCLE, 40.0, cfg.h), profiles)
    res = minimize_chain(anz, (0.0, 0.3), _scales(profiles), model, rescore=False)
    gap = (res.t[1] - res.t[0]) % 1.0
    oracle = grid_search_gap(model, 40.0, 40.0 * CIRCLE.length)
    assert abs(gap - oracle) <= 5e-3
    assert abs(gap - 0.5) <= 5e-3
    assert res.margin > 0


def test_four_bumps_equispaced(cfg, profiles, model):
    anz = Ansatz(build_tube_grid(CIRCLE, 80.0, cfg.h), profiles)
    res = minimize_chain(anz, (0.0, 0.2, 0.45, 0.7), _scales(profiles), model, rescore=False)
    gaps = np.diff(np.r_[res.t, res.t[0] + 1.0]) % 1.0
    assert np.max(np.abs(gaps - 0.25)) <= 1e-2


def test_segment_pair_symmetric_and_interior(cfg, profiles, model):
    R = 40.0
    anz = Ansatz(build_tube_grid(SEGMENT, R, cfg.h), profiles)
    res = minimize_chain(anz, (0.3, 0.7), _scales(profiles), model, rescore=False)
    # 2-D grid search oracle on the same objective
    grid = np.arange(0.01, 1.0, 0.005)
    best, arg = math.inf, None
    for a in grid:
        for b in grid[grid > a]:
            v = model.excess(np.array([a, b]) * R, (1, -1), R, False)
            if v < best:
                best, arg = v, (a, b)
    assert abs(res.t[0] + res.t[1] - 1.0) <= 1e-2
    assert abs(res.t[0] - arg[0]) <= 1e-2 and abs(res.t[1] - arg[1]) <= 1e-2
    assert 0 < res.t[0] < res.t[1] < 1
    assert res.margin > 0
