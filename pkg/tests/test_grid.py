"""Lattice construction, adapted derivatives, parity bookkeeping, CSV I/O."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wedgelab.errors import GridError, NonFiniteError, ParityError
from wedgelab.grid import (
    ScalarField,
    WedgeGrid,
    adapted_Dxi,
    adapted_Zx,
    diff_x,
    diff_xi,
    make_field,
    symmetrize_xi,
    write_field_csv,
    xi_lattice,
)


# ---------------------------------------------------------------------------
# lattice
# ---------------------------------------------------------------------------

def test_xi_lattice_structure():
    K = 3
    xi = xi_lattice(K)
    h = 2.0 / (2 * K + 1)
    assert xi.size == 2 * K + 2
    assert xi[0] == -1.0 and xi[-1] == 1.0
    assert np.all(np.abs(xi) > 1e-13)          # axis excluded
    # staggering makes the *whole* lattice uniform, boundary included
    np.testing.assert_allclose(np.diff(xi), h, rtol=0, atol=1e-15)
    expected_interior = (np.arange(1, K + 1) - 0.5) * h
    np.testing.assert_allclose(xi[K + 1:-1], expected_interior, atol=1e-15)


def test_xi_lattice_rejects_bad_K():
    with pytest.raises(GridError):
        xi_lattice(0)


@given(st.integers(min_value=1, max_value=40))
def test_xi_lattice_invariants(K):
    xi = xi_lattice(K)
    assert xi.size == 2 * K + 2
    np.testing.assert_allclose(xi, -xi[::-1], atol=0)  # mirror symmetric
    np.testing.assert_allclose(np.diff(xi), 2.0 / (2 * K + 1), atol=1e-15)


def test_linear_grid_basic():
    g = WedgeGrid.linear(0.0, 2.0, 41, 7)
    assert g.nx == 41 and g.nxi == 16
    assert g.mode == "linear-x"
    assert g.h_x == pytest.approx(0.05)
    X, XI = g.mesh()
    assert X.shape == (41, 1) and XI.shape == (1, 16)
    with pytest.raises(GridError):
        g.y  # log coordinate undefined on a linear grid


def test_log_grid_x_is_exp_y():
    g = WedgeGrid.log(-2.0, 2.0, 33, 7)
    np.testing.assert_allclose(g.x, np.exp(g.y), rtol=1e-15)
    assert g.h_x == pytest.approx(4.0 / 32)
    assert np.all(g.x > 0)


@pytest.mark.parametrize("bad_xi", [
    np.array([-1.0, -0.5, 0.0, 0.5, 1.0]),       # contains the axis
    np.array([-1.0, -0.5, 0.5, 1.0, 1.0]),       # duplicate face node
    np.array([-1.0, -0.4, 0.5, 1.0]),            # not uniform
])
def test_bad_xi_lattices_rejected(bad_xi):
    x = np.linspace(0.0, 1.0, 5)
    h_xi = bad_xi[1] - bad_xi[0]
    with pytest.raises(GridError):
        WedgeGrid(x, bad_xi, "linear-x", 0.25, float(h_xi))


def test_field_shape_checked(lin_grid):
    with pytest.raises(GridError):
        ScalarField(lin_grid, np.zeros((3, 3)))


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------

def test_diff_x_exact_on_polynomials(lin_grid):
    # second-order stencils differentiate quadratics without truncation error
    f = make_field(lin_grid, lambda x, xi: x + 0.0 * xi)
    np.testing.assert_allclose(diff_x(f).values, 1.0, atol=1e-12)
    f2 = make_field(lin_grid, lambda x, xi: x * x + 0.0 * xi)
    np.testing.assert_allclose(diff_x(f2, order=2).values, 2.0, atol=1e-10)


def test_diff_x_second_order_convergence():
    errs = []
    for nx in (65, 129):
        g = WedgeGrid.linear(0.25, 2.25, nx, 7)
        f = make_field(g, lambda x, xi: np.sin(x) + 0.0 * xi)
        exact = np.cos(g.x)[:, None]
        errs.append(np.max(np.abs(diff_x(f).values - exact)))
    ratio = errs[0] / errs[1]
    assert 3.2 < ratio < 4.8


def test_diff_xi_exact_on_quadratic(lin_grid):
    f = make_field(lin_grid, lambda x, xi: xi * xi + 0.0 * x, parity_xi="even")
    exact = np.broadcast_to(2.0 * lin_grid.xi[None, :], f.values.shape)
    np.testing.assert_allclose(diff_xi(f).values, exact, atol=1e-11)
    np.testing.assert_allclose(diff_xi(f, order=2).values, 2.0, atol=1e-9)


def test_diff_xi_second_order_convergence():
    errs = []
    for K in (15, 31):
        g = WedgeGrid.linear(0.25, 2.25, 17, K)
        f = make_field(g, lambda x, xi: np.cos(xi) + 0.0 * x)
        exact = -np.sin(g.xi)[None, :]
        errs.append(np.max(np.abs(diff_xi(f).values - exact)))
    ratio = errs[0] / errs[1]
    assert 3.2 < ratio < 4.8


def test_derivatives_flip_parity_tags(lin_grid):
    f = make_field(lin_grid, lambda x, xi: x * x * (1 - xi * xi),
                   parity_x="even", parity_xi="even")
    assert diff_x(f).parity_x == "odd"
    assert diff_x(f, order=2).parity_x == "even"
    assert diff_xi(f).parity_xi == "odd"
    assert diff_xi(f, order=2).parity_xi == "even"
    assert adapted_Zx(f).parity_x == "even"   # x * d/dx preserves parity


def test_nonfinite_input_rejected(lin_grid):
    vals = np.zeros((lin_grid.nx, lin_grid.nxi))
    vals[3, 4] = np.nan
    f = ScalarField(lin_grid, vals)
    with pytest.raises(NonFiniteError):
        diff_x(f)


def test_adapted_Zx_linear_grid_exact_on_quadratic(lin_grid):
    f = make_field(lin_grid, lambda x, xi: x * x + 0.0 * xi)
    X, _ = lin_grid.mesh()
    exact = np.broadcast_to(2.0 * X * X, f.values.shape)
    np.testing.assert_allclose(adapted_Zx(f).values, exact, rtol=1e-12)


def test_adapted_Zx_log_grid_monomial():
    # Z_x x^p = p x^p; on the log grid the stencil differentiates e^{py} in y
    g = WedgeGrid.log(-3.0, 3.0, 241, 7)
    f = make_field(g, lambda x, xi: x**3 + 0.0 * xi)
    got = adapted_Zx(f).values
    exact = 3.0 * g.x[:, None] ** 3
    rel = np.max(np.abs(got - exact)) / np.max(np.abs(exact))
    assert rel <= 5.0 * g.h_x**2


def test_adapted_Dxi_matches_exact_and_converges():
    # error constant ~4h^2 in the interior, ~8h^2 at the one-sided faces
    errs = []
    for K in (15, 31):
        g = WedgeGrid.linear(0.5, 1.5, 9, K)
        f = make_field(g, lambda x, xi: (1.0 - xi * xi) ** 2 + 0.0 * x,
                       parity_xi="even")
        exact = np.broadcast_to(-4.0 * (1.0 - g.xi[None, :] ** 2),
                                f.values.shape)
        errs.append(np.max(np.abs(adapted_Dxi(f).values - exact)))
        assert errs[-1] <= 9.0 * g.h_xi**2
    assert 3.3 < errs[0] / errs[1] < 5.0


def test_adapted_Dxi_rejects_odd_fields(lin_grid):
    f = make_field(lin_grid, lambda x, xi: xi + 0.0 * x, parity_xi="odd")
    with pytest.raises(ParityError):
        adapted_Dxi(f)


# ---------------------------------------------------------------------------
# symmetrization
# ---------------------------------------------------------------------------

def test_symmetrize_projects_and_is_idempotent(lin_grid, rng):
    f = ScalarField(lin_grid, rng.standard_normal((lin_grid.nx, lin_grid.nxi)),
                    parity_xi="even")
    s = symmetrize_xi(f)
    np.testing.assert_allclose(s.values, s.values[:, ::-1], atol=0)
    np.testing.assert_allclose(symmetrize_xi(s).values, s.values, atol=0)

    f_odd = f.like(f.values, parity_xi="odd")
    a = symmetrize_xi(f_odd)
    np.testing.assert_allclose(a.values, -a.values[:, ::-1], atol=0)


def test_symmetrize_untagged_is_identity(lin_grid, rng):
    f = ScalarField(lin_grid, rng.standard_normal((lin_grid.nx, lin_grid.nxi)))
    assert symmetrize_xi(f) is f


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def test_write_field_csv_roundtrip(tmp_path):
    g = WedgeGrid.linear(0.0, 1.0, 5, 2)
    f = make_field(g, lambda x, xi: x + 10.0 * xi)
    path = tmp_path / "field.csv"
    write_field_csv(f, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,xi,value"
    assert len(lines) == 1 + g.nx * g.nxi
    x0, xi0, v0 = (float(tok) for tok in lines[1].split(","))
    assert (x0, xi0) == (g.x[0], g.xi[0])
    assert v0 == f.values[0, 0]
