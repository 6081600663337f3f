"""Remainder marching: forcing-free exactness, RK4 order, guard rails."""
import numpy as np
import pytest

from wedgelab.background import SeedParams, build_bundle
from wedgelab.elliptic import EllipticOperator, apply_operator
from wedgelab.errors import CflError
from wedgelab.grid import WedgeGrid
from wedgelab.simulate import (
    SimConfig,
    cfl_limit,
    eval_rhs,
    make_state,
    run,
    step,
    write_sim_csv,
)

SEED = SeedParams(A=2.0, B=1.0)


@pytest.fixture(scope="module")
def sim_grid():
    return WedgeGrid.log(-6.0, 6.0, 65, 15)


@pytest.fixture(scope="module")
def sim_op(sim_grid):
    return EllipticOperator(sim_grid)


# ---------------------------------------------------------------------------
# state construction
# ---------------------------------------------------------------------------

def test_make_state_scales_linearly(sim_grid, sim_op):
    s1 = make_state(sim_grid, sim_op, amplitude=1e-3)
    s2 = make_state(sim_grid, sim_op, amplitude=2e-3)
    np.testing.assert_allclose(s2.u.values, 2.0 * s1.u.values, rtol=1e-13)
    # omega is the operator image of psi by construction
    np.testing.assert_allclose(s1.omega.values,
                               apply_operator(s1.psi).values, atol=0)


def test_cfl_limit_positive(sim_grid, sim_op):
    state = make_state(sim_grid, sim_op, amplitude=1e-3)
    bundle = build_bundle(SEED, 0.0, sim_grid)
    cfg = SimConfig(seed=SEED)
    assert cfl_limit(state, bundle, cfg) > 0.0


# ---------------------------------------------------------------------------
# exactness and convergence
# ---------------------------------------------------------------------------

def test_forcing_free_zero_state_is_preserved():
    # the closed-form background satisfies the system identically, so a
    # zero remainder must stay zero to rounding over many steps
    grid = WedgeGrid.log(-6.0, 6.0, 33, 7)
    op = EllipticOperator(grid)
    cfg = SimConfig(seed=SeedParams(A=6.0, B=1.0))
    state = make_state(grid, op, amplitude=0.0)
    traj = run(state, op, cfg, t_end=0.01, dt=1e-4, n_log=4)
    assert traj.status == "completed"
    assert traj.rows[-1]["t"] == pytest.approx(0.01, rel=1e-12)
    assert np.max(np.abs(traj.final.u.values)) < 1e-12
    assert np.max(np.abs(traj.final.omega.values)) < 1e-12


def test_rk4_fourth_order(sim_grid, sim_op):
    cfg = SimConfig(seed=SEED)
    t_end = 0.12
    finals = []
    for n in (24, 48, 96):
        state = make_state(sim_grid, sim_op, amplitude=0.2)
        traj = run(state, sim_op, cfg, t_end, dt=t_end / n, n_log=1)
        assert traj.status == "completed"
        finals.append(traj.final.u.values.copy())
    d1 = np.max(np.abs(finals[0] - finals[1]))
    d2 = np.max(np.abs(finals[1] - finals[2]))
    assert 11.0 < d1 / d2 < 21.0     # successive-difference ratio ~ 2^4


def test_small_amplitude_response_is_linear(sim_grid, sim_op):
    cfg = SimConfig(seed=SEED)
    amps = np.array([1e-6, 1e-5, 1e-4])
    finals = []
    for amp in amps:
        state = make_state(sim_grid, sim_op, amplitude=amp)
        traj = run(state, sim_op, cfg, t_end=0.05, dt=2.5e-3, n_log=1)
        finals.append(traj.rows[-1]["Y"])
    slope = np.polyfit(np.log(amps), np.log(finals), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.05)


def test_parity_preserved_without_resymmetrization(sim_grid, sim_op):
    cfg = SimConfig(seed=SEED, resymmetrize=False)
    state = make_state(sim_grid, sim_op, amplitude=1e-3)
    traj = run(state, sim_op, cfg, t_end=0.02, dt=1e-3, n_log=1)
    u = traj.final.u.values
    assert np.max(np.abs(u - u[:, ::-1])) <= 1e-12 * max(1e-30, np.max(np.abs(u)))


# ---------------------------------------------------------------------------
# failure modes are statuses, not crashes
# ---------------------------------------------------------------------------

def test_cfl_violation_recorded(sim_grid, sim_op):
    cfg = SimConfig(seed=SeedParams(A=6.0, B=1.0))
    state = make_state(sim_grid, sim_op, amplitude=1e-3)
    traj = run(state, sim_op, cfg, t_end=0.2, dt=0.2)
    assert traj.status == "failed: CflError"
    assert traj.rows[-1]["status"] == traj.status


def test_ceiling_violation_recorded(sim_grid, sim_op):
    cfg = SimConfig(seed=SEED, ceiling=1e-9)
    state = make_state(sim_grid, sim_op, amplitude=1e-3)
    traj = run(state, sim_op, cfg, t_end=0.01, dt=1e-3)
    assert traj.status == "failed: CeilingError"


def test_step_raises_cfl_directly(sim_grid, sim_op):
    from wedgelab.simulate import _BundleCache
    cfg = SimConfig(seed=SeedParams(A=6.0, B=1.0))
    state = make_state(sim_grid, sim_op, amplitude=1e-3)
    bundles = _BundleCache(lambda t: build_bundle(cfg.seed, t, sim_grid))
    with pytest.raises(CflError):
        step(state, 0.5, sim_op, cfg, bundles)


# ---------------------------------------------------------------------------
# right-hand side structure
# ---------------------------------------------------------------------------

def test_rhs_vanishes_on_zero_remainder(sim_grid, sim_op):
    zero = make_state(sim_grid, sim_op, amplitude=0.0)
    bundle = build_bundle(SEED, 0.1, sim_grid)
    br = eval_rhs(zero.u, zero.omega, zero.psi, bundle)
    assert np.max(np.abs(br.du_dt)) == 0.0
    assert np.max(np.abs(br.dom_dt)) == 0.0
    assert br.heuristic    # inherits the extension choice of the bundle


def test_bundle_cache_reuses_stage_times(sim_grid, sim_op):
    calls = []

    def provider(t):
        calls.append(t)
        return build_bundle(SEED, t, sim_grid)

    cfg = SimConfig(seed=SEED)
    state = make_state(sim_grid, sim_op, amplitude=1e-4)
    n_steps = 5
    run(state, sim_op, cfg, t_end=5e-3, dt=1e-3, n_log=1,
        bundle_provider=provider)
    # RK4 touches t, t + dt/2 (twice), t + dt; the cache collapses repeats
    # and reuses the end of one step as the start of the next
    assert len(calls) <= 2 * n_steps + 2
    assert len(calls) == len(set(round(t, 12) for t in calls))


def test_sim_csv(tmp_path, sim_grid, sim_op):
    cfg = SimConfig(seed=SEED)
    state = make_state(sim_grid, sim_op, amplitude=1e-4)
    traj = run(state, sim_op, cfg, t_end=4e-3, dt=1e-3, n_log=2)
    path = tmp_path / "sim.csv"
    write_sim_csv(traj, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,E_k,Y,X_sigma,sup_u,sup_omega,cfl,status"
    assert len(lines) == 1 + len(traj.rows)
