import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tubebumps.errors import DegeneracySuspected, PreconditionError, WindowUnderflow
from tubebumps.profile import (
    NonlinearitySpec,
    check_nondegeneracy,
    decay_constant,
    decay_rate,
    h1_norm,
    load_profile,
    profile_energy_identity,
    save_profile,
    solve_ground_state,
    truncated_projection,
)

MU = math.sqrt(1 + math.pi ** 2 / 4)


def test_decay_constant_values():
    assert decay_constant(1.0) == pytest.approx(1.8620958891, rel=1e-10)
    assert decay_constant(0.0) == pytest.approx(math.pi / 2, rel=1e-12)
    with pytest.raises(PreconditionError):
        decay_constant(-3.0)


def test_ground_state_invariants(plus):
    U = plus.values
    assert plus.residual <= 1e-9
    assert np.all(U > 0)
    assert np.max(np.abs(U - U[::-1, :])) < 1e-8
    assert np.max(np.abs(U - U[:, ::-1])) < 1e-8
    i, j = np.unravel_index(np.argmax(U), U.shape)
    assert plus.grid.xi[i] == pytest.approx(0.0, abs=1e-12)
    assert plus.grid.eta[j] == pytest.approx(0.0, abs=1e-12)
    assert plus.energy > 0


def test_ground_state_decreasing_in_xi(plus):
    j0 = int(np.argmin(np.abs(plus.grid.eta)))
    right = plus.values[plus.grid.xi >= 0, j0]
    assert np.all(np.diff(right) < 0)


def test_energy_critical_point_identity(plus):
    e2 = profile_energy_identity(plus.grid, plus.nl, plus.U)
    assert e2 == pytest.approx(plus.energy, rel=1e-6)


def test_energy_scaling_identity(plus):
    # d/ds J(U(xi/s, eta)) = 0 at s = 1: the xi and eta kinetic parts balance the potential
    g = plus.grid
    U = plus.values
    full = np.pad(U, 1)
    w = g.h1 * g.h2
    kx = np.sum((np.diff(full, axis=0)[:, 1:-1] / g.h1) ** 2) * w
    ke = np.sum((np.diff(full, axis=1)[1:-1, :] / g.h2) ** 2) * w
    lhs = 0.5 * (ke - kx) + 0.5 * plus.lam * g.integrate(U ** 2) - g.integrate(plus.nl.F(U))
    assert abs(lhs) < 2e-3 * plus.energy


def test_gradient_flow_cross_check(cfg, plus):
    gf = solve_ground_state(plus.nl, 1.0, 1, h=cfg.h, method="gradient-flow")
    assert np.max(np.abs(gf.values - plus.values)) < 1e-6
    assert gf.energy == pytest.approx(plus.energy, rel=1e-6)


def test_negative_state_is_reflection_for_odd_f(profiles):
    assert np.max(np.abs(profiles[-1].values + profiles[1].values)) < 1e-10
    assert np.all(profiles[-1].values < 0)


def test_two_power_states():
    nl = NonlinearitySpec.two_power(3.0, 2.0)
    up = solve_ground_state(nl, 1.0, 1, h=0.1)
    um = solve_ground_state(nl, 1.0, -1, h=0.1)
    assert np.all(up.values > 0) and np.all(um.values < 0)
    assert up.residual <= 1e-9 and um.residual <= 1e-9
    # u^2 growth is weaker than u^3 near zero, so the negative bump is taller
    assert abs(um.values).max() > up.values.max()


def test_precondition_lambda():
    with pytest.raises(PreconditionError):
        solve_ground_state(NonlinearitySpec.power(3), -3.0, 1)


def test_decay_fit_and_refinement(cfg, plus):
    fit = decay_rate(plus, (4.0, 8.0))
    assert fit.rel_error < 0.03
    fine = solve_ground_state(plus.nl, 1.0, 1, h=cfg.h / 2)
    assert decay_rate(fine, (4.0, 8.0)).rel_error < fit.rel_error


def test_decay_window_errors(plus):
    with pytest.raises(WindowUnderflow):
        decay_rate(plus, (4.0, 9.5))


def test_nondegeneracy(plus):
    rep = check_nondegeneracy(plus, eps0=1e-2)
    assert rep.kernel_dimension == 1
    assert rep.cosine >= 0.999
    assert rep.gap >= 0.1
    assert rep.passed


def test_nondegeneracy_without_potential_has_no_kernel(plus):
    pot = np.full(plus.grid.shape, plus.lam)
    rep = check_nondegeneracy(plus, eps0=1e-2, potential=pot)
    assert rep.kernel_dimension == 0
    assert min(rep.eigenvalues) > plus.lam + 2.0


def test_nondegeneracy_widened_threshold_raises(plus):
    with pytest.raises(DegeneracySuspected):
        check_nondegeneracy(plus, eps0=5.0)


def test_truncation_rate_and_sandwich(plus):
    errs, sup = [], []
    for a in range(3, 9):
        Ut = truncated_projection(plus, a, a).values
        assert np.min(plus.values - Ut) >= -1e-12
        assert np.min(Ut) >= -1e-12
        errs.append(h1_norm(plus.grid, plus.values - Ut))
        sup.append(np.max(np.abs(plus.values - Ut)))
    slope = np.polyfit(np.arange(3, 9), np.log(errs), 1)[0]
    assert slope == pytest.approx(-MU, rel=0.05)
    assert all(b < a for a, b in zip(sup, sup[1:]))


def test_truncation_asymmetric_and_preconditions(plus):
    Ut = truncated_projection(plus, 2.0, 6.0).values
    xi = plus.grid.xi
    assert np.all(Ut[xi <= -2.0] == 0)
    with pytest.raises(PreconditionError):
        truncated_projection(plus, 0.5, 3.0)
    with pytest.raises(PreconditionError):
        truncated_projection(plus, 3.0, plus.L_xi)


def test_profile_cache_round_trip(tmp_path, plus):
    path = save_profile(plus, tmp_path)
    meta = path.with_suffix(".meta").read_text()
    for key in ("lambda", "p", "h", "L_xi", "mu", "mu_fit", "energy", "residual"):
        assert f"{key}=" in meta
    back = load_profile(path)
    assert np.array_equal(back.values, plus.values)
    assert back.energy == plus.energy
    assert back.residual <= 1e-9


@settings(max_examples=50, deadline=None)
@given(st.floats(1.2, 6.0), st.floats(-3.0, 3.0).filter(lambda u: abs(u) > 1e-3))
def test_nonlinearity_invariants(p, u):
    nl = NonlinearitySpec.power(p)
    assert nl.f(np.array(u)) * u > 0
    assert nl.f(np.array(0.0)) == 0 and nl.df(np.array(0.0)) == 0
    assert nl.f(np.array(-u)) == pytest.approx(-nl.f(np.array(u)))
    eps = 1e-6
    dF = (nl.F(np.array(u + eps)) - nl.F(np.array(u - eps))) / (2 * eps)
    assert dF == pytest.approx(nl.f(np.array(u)), rel=1e-6, abs=1e-9)
    df = (nl.f(np.array(u + eps)) - nl.f(np.array(u - eps))) / (2 * eps)
    assert df == pytest.approx(nl.df(np.array(u)), rel=1e-5, abs=1e-8)
    assert 0.5 < nl.alpha <= 1.0
    assert 0.5 < nl.alpha_prime < min(nl.alpha, nl.p1 / 2, 1.0)
    assert nl.alpha == pytest.approx(min((p + 1) / 4, 1.0))


def test_nonlinearity_rejects_bad_exponents():
    with pytest.raises(ValueError):
        NonlinearitySpec.power(1.0)
    with pytest.raises(ValueError):
        NonlinearitySpec.power(3.0, alpha_prime=0.5)
