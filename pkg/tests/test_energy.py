"""Weighted norms, seed energy quadrature, envelope ODE, bootstrap gate."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wedgelab.background import SeedParams
from wedgelab.energy import (
    EnvelopeParams,
    bernoulli_envelope,
    bootstrap_check,
    energy_Ek,
    envelope_integrate,
    gronwall_fit,
    initial_energy,
    l2mu_norm,
    sobolev_norm_sq,
    transfer_detector,
    write_envelope_csv,
    x_sigma,
)
from wedgelab.errors import ConfigError, GapError
from wedgelab.grid import WedgeGrid, make_field


# ---------------------------------------------------------------------------
# weighted norms
# ---------------------------------------------------------------------------

def test_l2mu_norm_single_mode_pin():
    # ||x^2/(1+x^2)^3 (1-xi^2)||^2 = (1/30)(16/15) in the default measure:
    # the x factor integrates to B(3,3) = 1/30 after u = x^2, and the xi
    # factor is int (1-xi^2)^2 = 16/15
    g = WedgeGrid.log(-8.0, 8.0, 513, 63)
    f = make_field(g, lambda x, xi: x**2 / (1 + x**2) ** 3 * (1 - xi**2),
                   parity_x="even", parity_xi="even")
    exact = np.sqrt(8.0 / 225.0)
    assert l2mu_norm(f) == pytest.approx(exact, rel=1e-6)


def test_norm_homogeneity_and_zero(log_grid):
    f = make_field(log_grid, lambda x, xi: x * np.exp(-x * x) * (1 - xi**2))
    assert l2mu_norm(f.like(2.0 * f.values)) == pytest.approx(
        2.0 * l2mu_norm(f), rel=1e-14)
    assert l2mu_norm(f.like(0.0 * f.values)) == 0.0


def test_sobolev_norm_monotone_in_k(log_grid):
    f = make_field(log_grid, lambda x, xi: x**2 * np.exp(-x * x) * (1 - xi**2) ** 2,
                   parity_x="even", parity_xi="even")
    norms = [sobolev_norm_sq(f, k) for k in range(3)]
    assert norms[0] < norms[1] < norms[2]


def test_energy_Ek_zero_and_positive(log_grid, op_small):
    from wedgelab.simulate import make_state
    zero = make_state(log_grid, op_small, amplitude=0.0)
    assert energy_Ek(zero.u, zero.omega, zero.psi) == 0.0
    bump = make_state(log_grid, op_small, amplitude=1e-2)
    assert energy_Ek(bump.u, bump.omega, bump.psi) > 0.0
    with pytest.raises(ConfigError):
        energy_Ek(bump.u, bump.omega, bump.psi, k=-1)


# ---------------------------------------------------------------------------
# seed energy
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("seed,expected", [
    (SeedParams(A=1.0, B=1.0), 0.3979505297477995),
    (SeedParams(A=6.0, B=1.0), 12.14992710563565),
    (SeedParams(A=1.0, B=1.0, r_def="ridge-x2"), 0.750382716024612),
])
def test_initial_energy_pins(seed, expected):
    rep = initial_energy(seed)
    assert rep.value == pytest.approx(expected, rel=1e-8)
    assert rep.tail_converged
    assert rep.tail_slope == pytest.approx(-9.0, abs=0.3)


def test_initial_energy_scaling_and_zero():
    seed = SeedParams(A=1.0, B=1.0)
    base = initial_energy(seed).value
    doubled = initial_energy(seed, scale=2.0).value
    assert doubled == pytest.approx(4.0 * base, rel=1e-12)
    assert initial_energy(seed, scale=0.0).value == 0.0


def test_initial_energy_converges_under_cut_doubling():
    seed = SeedParams(A=1.0, B=1.0)
    vals = [initial_energy(seed, x_cut=c, nx=n).value
            for c, n in ((5.0, 501), (10.0, 1001), (20.0, 2001))]
    rel = np.abs(np.diff(vals)) / vals[-1]
    assert np.all(np.diff(rel) < 0)     # shrinking under refinement
    assert rel[-1] < 5e-4               # at least 3 significant digits


# ---------------------------------------------------------------------------
# envelope ODE
# ---------------------------------------------------------------------------

def test_bernoulli_linear_branch_pin():
    # C_nl = 0, C_lin = 1: Y = Y0 T/(T - t), so Y(1/2) = 2
    p = EnvelopeParams(T=1.0, C_lin=1.0, C_nl=0.0, sigma=1.25, Y0=1.0)
    assert bernoulli_envelope(p, 0.5) == pytest.approx(2.0, rel=1e-12)
    assert bernoulli_envelope(p, 0.0) == pytest.approx(1.0, rel=1e-14)


def test_bernoulli_zero_seed_stays_zero():
    p = EnvelopeParams(T=1.0, C_lin=1.0, C_nl=0.7, sigma=1.25, Y0=0.0)
    assert np.all(bernoulli_envelope(p, np.linspace(0, 0.99, 50)) == 0.0)


def test_bernoulli_domain_gate():
    p = EnvelopeParams(T=1.0, C_lin=1.0, C_nl=0.0, sigma=1.25, Y0=1.0)
    for t in (-0.1, 1.0, 1.5):
        with pytest.raises(ConfigError):
            bernoulli_envelope(p, t)


def test_bernoulli_nonlinear_blowup_is_inf():
    p = EnvelopeParams(T=1.0, C_lin=1.0, C_nl=8.0, sigma=1.25, Y0=1.0)
    Y = bernoulli_envelope(p, np.linspace(0.0, 0.999, 1000))
    assert np.any(np.isinf(Y)) and np.all(Y > 0)


def test_integrator_matches_bernoulli():
    p = EnvelopeParams(T=1.0, C_lin=0.8, C_nl=0.6, sigma=1.25, Y0=0.2)
    t, Y, status = envelope_integrate(p, np.linspace(0.0, 0.9, 181))
    assert status == "completed"
    rel = np.max(np.abs(Y - bernoulli_envelope(p, t)) / bernoulli_envelope(p, t))
    assert rel < 1e-8


@given(st.floats(0.3, 1.5), st.floats(0.0, 0.8))
def test_x_sigma_initial_value(C_lin, C_nl):
    p = EnvelopeParams(T=1.0, C_lin=C_lin, C_nl=C_nl, sigma=1.25, Y0=0.2)
    X0 = x_sigma(0.0, bernoulli_envelope(p, 0.0), 1.0, 1.25)
    assert X0 == pytest.approx(0.2, rel=1e-12)


# ---------------------------------------------------------------------------
# bootstrap gate
# ---------------------------------------------------------------------------

def test_bootstrap_requires_exponent_gap():
    with pytest.raises(GapError):
        bootstrap_check(1.0, 1.0, sigma=0.9)
    with pytest.raises(GapError):
        bootstrap_check(1.0, 1.0, sigma=1.0)


def test_bootstrap_trivial_without_nonlinearity():
    res = bootstrap_check(1.0, 0.0, sigma=1.25)
    assert res.trivial and np.isinf(res.eps0)


def test_bootstrap_threshold_pins():
    res = bootstrap_check(1.0, 1.0, sigma=1.25)
    assert res.eps0 == pytest.approx(0.071, abs=1e-12)
    half = bootstrap_check(1.0, 2.0, sigma=1.25)
    # doubling the nonlinear constant roughly halves the admissible seed
    assert res.eps0 / half.eps0 == pytest.approx(2.0, rel=0.05)


def test_bootstrap_threshold_is_sharp():
    res = bootstrap_check(1.0, 1.0, sigma=1.25)
    tt = np.linspace(0.0, res.t_star, 2000)
    at = EnvelopeParams(T=1.0, C_lin=1.0, C_nl=1.0, sigma=1.25, Y0=res.eps0)
    Y = bernoulli_envelope(at, tt)
    assert np.max(x_sigma(tt, Y, 1.0, 1.25)) <= 2.0 * res.eps0
    above = EnvelopeParams(T=1.0, C_lin=1.0, C_nl=1.0, sigma=1.25,
                           Y0=1.06 * res.eps0)
    assert np.any(np.isinf(bernoulli_envelope(above, tt)))


# ---------------------------------------------------------------------------
# transfer detector and envelope fit
# ---------------------------------------------------------------------------

def _log_clustered_times(T, floor, n):
    return T - np.logspace(0.0, np.log10(floor), n)


def test_transfer_detector_declares_gap():
    T = 1.0
    ts = _log_clustered_times(T, 1e-6, 241)
    bg = 6.0 / (T - ts)
    rem = 0.7 * np.ones_like(ts)
    rep = transfer_detector(ts, bg, rem, T, sigma=0.75)
    assert rep.declared and rep.reason == "exponent-gap"
    assert rep.exponent_bg == pytest.approx(1.0, abs=1e-6)
    assert rep.c0 == pytest.approx(6.0, rel=1e-6)
    assert abs(rep.exponent_rem) < 1e-6


def test_transfer_detector_rejections():
    T = 1.0
    ts = _log_clustered_times(T, 1e-6, 241)
    bg = 6.0 / (T - ts)
    # a remainder growing faster than (T-t)^-sigma blocks the declaration
    growing = transfer_detector(ts, bg, 0.2 * (T - ts) ** -1.5, T, sigma=0.75)
    assert not growing.declared and growing.reason == "no-gap"
    # sigma >= 1 leaves no room between remainder and background rates
    wide = transfer_detector(ts, bg, 0.7 * np.ones_like(ts), T, sigma=1.25)
    assert not wide.declared


def test_transfer_detector_zero_remainder_shortcut():
    T = 1.0
    ts = _log_clustered_times(T, 1e-6, 241)
    rep = transfer_detector(ts, 6.0 / (T - ts), np.zeros_like(ts), T, 1.25)
    assert rep.declared and rep.reason == "zero-remainder"


def test_transfer_detector_input_gates():
    with pytest.raises(ConfigError):
        transfer_detector(np.array([0.5, 1.0]), np.ones(2), np.ones(2), 1.0, 0.75)
    ts = np.array([0.0, 0.5, 0.99])  # only one sample in the last decade
    with pytest.raises(ConfigError):
        transfer_detector(ts, np.ones(3), np.ones(3), 1.0, 0.75)


def test_gronwall_fit_roundtrip():
    p = EnvelopeParams(T=1.0, C_lin=1.0, C_nl=0.5, sigma=1.25, Y0=0.5)
    tt = np.unique(1.0 - 0.1 ** np.linspace(0.0, 1.0, 300))
    fit = gronwall_fit(tt, bernoulli_envelope(p, tt), 1.0)
    assert fit.C_lin_hat == pytest.approx(1.0, abs=0.02)
    assert fit.C_nl_hat == pytest.approx(0.5, abs=0.02)
    assert not fit.ill_conditioned


def test_gronwall_fit_flat_series():
    fit = gronwall_fit(np.linspace(0.0, 0.5, 100), np.ones(100), 1.0)
    assert abs(fit.C_lin_hat) < 1e-12
    assert abs(fit.C_nl_hat) < 1e-12


def test_envelope_csv(tmp_path):
    p = EnvelopeParams(T=1.0, C_lin=1.0, C_nl=0.0, sigma=1.25, Y0=1.0)
    t, Y, status = envelope_integrate(p, np.linspace(0.0, 0.5, 11))
    path = tmp_path / "envelope.csv"
    write_envelope_csv(path, t, Y, x_sigma(t, Y, 1.0, 1.25), status)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,Y,X_sigma,status"
    assert len(lines) == 12
