"""Wedge elliptic solver: stencil/matrix agreement, MMS order, reconstruction."""
import numpy as np
import pytest

from wedgelab.corpus import GaussPoly, PolyFactor, SeparableProbe
from wedgelab.elliptic import (
    EllipticOperator,
    apply_operator,
    boundary_velocity_relation,
    measure_elliptic_constant,
    mms_error,
    mms_forcing,
    omega_consistency,
    reconstruct_vg,
)
from wedgelab.errors import ConfigError
from wedgelab.grid import ScalarField, WedgeGrid, make_field
from wedgelab.verify import corpus_probe

MMS_PROFILE = (GaussPoly([1.0], 0.5), PolyFactor([1.0, 0.0, -2.0, 0.0, 1.0]))


def _probe_field(grid, name):
    pr = corpus_probe(name)
    return make_field(grid, pr.val, parity_x=pr.parity_x, parity_xi=pr.parity_xi)


# ---------------------------------------------------------------------------
# operator application
# ---------------------------------------------------------------------------

def test_apply_annihilates_constants(log_grid):
    c = make_field(log_grid, lambda x, xi: 1.0 + 0.0 * x * xi,
                   parity_x="even", parity_xi="even")
    assert np.max(np.abs(apply_operator(c).values)) == 0.0


def test_matrix_agrees_with_stencil(op_small, log_grid, rng):
    vals = rng.standard_normal((log_grid.nx, log_grid.nxi))
    vals[0, :] = vals[-1, :] = vals[:, 0] = vals[:, -1] = 0.0
    f = ScalarField(log_grid, vals)
    stencil = apply_operator(f).values[1:-1, 1:-1]
    inner = vals[1:-1, 1:-1]
    A = op_small.matrix()
    assert A.shape == (inner.size, inner.size)
    via_matrix = (A @ inner.ravel()).reshape(inner.shape)
    np.testing.assert_allclose(via_matrix, stencil,
                               atol=1e-13 * np.max(np.abs(stencil)))


def test_operator_requires_log_grid(lin_grid):
    with pytest.raises(ConfigError):
        EllipticOperator(lin_grid)


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def test_solve_zero_gives_zero(op_small, log_grid):
    zero = ScalarField(log_grid, np.zeros((log_grid.nx, log_grid.nxi)),
                       parity_x="even", parity_xi="even")
    assert np.max(np.abs(op_small.solve(zero).values)) == 0.0


def test_roundtrip_apply_solve(op_small, log_grid):
    psi = _probe_field(log_grid, "x4g-cup2")
    omega = apply_operator(psi)
    psi_h = op_small.solve(omega)
    omega_back = apply_operator(psi_h)
    scale = np.max(np.abs(omega.values))
    assert np.max(np.abs(omega_back.values - omega.values)) / scale < 1e-8


def test_solution_faces_are_exactly_zero(op_small, log_grid):
    omega = apply_operator(_probe_field(log_grid, "x4g-cup3"))
    psi = op_small.solve(omega)
    assert np.all(psi.values[:, 0] == 0.0)
    assert np.all(psi.values[:, -1] == 0.0)


def test_solve_preserves_xi_parity(op_small, log_grid):
    omega = apply_operator(_probe_field(log_grid, "x4g-cup2"))
    psi = op_small.solve(omega)
    asym = np.max(np.abs(psi.values - psi.values[:, ::-1]))
    assert asym <= 1e-12 * max(1.0, np.max(np.abs(psi.values)))


def test_mms_second_order():
    errs = []
    for ny, K in ((65, 15), (129, 31)):
        grid = WedgeGrid.log(-6.0, 6.0, ny, K)
        op = EllipticOperator(grid)
        psi_star, omega_star = mms_forcing(*MMS_PROFILE, grid)
        errs.append(mms_error(op, psi_star, omega_star))
    assert errs[0] == pytest.approx(1.8506e-2, rel=1e-3)
    assert 3.4 < errs[0] / errs[1] < 4.8


# ---------------------------------------------------------------------------
# velocity reconstruction
# ---------------------------------------------------------------------------

def test_reconstruct_constant_stream(log_grid):
    c = make_field(log_grid, lambda x, xi: 1.0 + 0.0 * x * xi,
                   parity_x="even", parity_xi="even")
    v, g = reconstruct_vg(c)
    np.testing.assert_allclose(v.values, 1.0, atol=1e-14)
    np.testing.assert_allclose(g.values, 1.0, atol=1e-14)


def test_boundary_velocity_relation_is_identity(op_small, log_grid):
    omega = apply_operator(_probe_field(log_grid, "x4g-cup2"))
    psi = op_small.solve(omega)
    assert boundary_velocity_relation(psi) < 1e-13


def test_omega_consistency_converges():
    rms = []
    for ny, K in ((65, 15), (129, 31)):
        grid = WedgeGrid.log(-6.0, 6.0, ny, K)
        psi = _probe_field(grid, "g1-cup2")
        rms.append(omega_consistency(psi)["rms_difference"])
    assert 3.3 < rms[0] / rms[1] < 4.6


# ---------------------------------------------------------------------------
# inversion constant
# ---------------------------------------------------------------------------

def test_elliptic_constant_value_and_homogeneity(op_small):
    probes = [corpus_probe(n) for n in ("x2g-cup2", "x2g-cup3", "x2g-bell")]
    cd = measure_elliptic_constant(op_small, probes)
    assert cd["C_delta"] == pytest.approx(1.2927022, rel=1e-5)
    assert set(cd["per_probe"]) == {"x2g-cup2", "x2g-cup3", "x2g-bell"}
    assert all(v > 0 for v in cd["per_probe"].values())

    # the ratio ||psi|| / ||L psi|| is invariant under probe amplitude
    base = SeparableProbe("u", GaussPoly([1.0, 0.0, 0.0], 1.0),
                          PolyFactor([1.0, 0.0, -2.0, 0.0, 1.0]))
    big = SeparableProbe("s", GaussPoly([7.0, 0.0, 0.0], 1.0),
                         PolyFactor([1.0, 0.0, -2.0, 0.0, 1.0]))
    c1 = measure_elliptic_constant(op_small, [base])["C_delta"]
    c7 = measure_elliptic_constant(op_small, [big])["C_delta"]
    assert c7 == pytest.approx(c1, rel=1e-12)


def test_export_matrix(tmp_path, op_small):
    path = tmp_path / "matrix.csv"
    op_small.export_matrix(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "row,col,value"
    assert len(lines) == 1 + op_small.matrix().nnz
