r"""Tensor grids and finite-difference primitives on the wedge.

The computational domain is a tensor product of a radial-like coordinate x
(either uniformly spaced, mode ``"linear-x"``, or geometrically spaced as
x = e^y with uniform y, mode ``"log-x"``) and the wedge slope coordinate
xi in [-1, 1].

The xi lattice is fixed by construction: with K interior half-nodes per
side and h = 2/(2K+1), the nodes are

    -1, -(K-1/2)h, ..., -h/2, +h/2, ..., +(K-1/2)h, +1

i.e. fully uniform with spacing h, no node at xi = 0, and the boundary
values +-1 appearing exactly once each.  Avoiding xi = 0 matters because
the adapted derivative D_xi = (1/xi) d/dxi appears throughout the wedge
equations and the number-theoretic staggering keeps every 1/xi finite.

Derivatives are second-order centred stencils in the interior with
second-order one-sided stencils at the edges.  Odd derivative orders flip
the parity tag of the differentiated axis; even orders preserve it.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace
from typing import Callable, Literal

import numpy as np

from .errors import GridError, NonFiniteError, ParityError

Parity = Literal["even", "odd", "none"]
GridMode = Literal["linear-x", "log-x"]

_FLIP = {"even": "odd", "odd": "even", "none": "none"}


def xi_lattice(K: int) -> np.ndarray:
    """Staggered-uniform xi nodes for K interior half-nodes per side."""
    if K < 1:
        raise GridError(f"xi lattice needs K >= 1, got {K}")
    h = 2.0 / (2 * K + 1)
    interior = (np.arange(1, K + 1) - 0.5) * h
    return np.concatenate([[-1.0], -interior[::-1], interior, [1.0]])


@dataclass(frozen=True)
class WedgeGrid:
    """Immutable tensor grid (x outer axis, xi inner axis)."""

    x: np.ndarray
    xi: np.ndarray
    mode: GridMode
    h_x: float          # x spacing (linear-x) or y = log x spacing (log-x)
    h_xi: float

    def __post_init__(self):
        x, xi = np.asarray(self.x, float), np.asarray(self.xi, float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)
        if x.ndim != 1 or xi.ndim != 1:
            raise GridError("grid coordinate arrays must be one-dimensional")
        if np.any(np.abs(xi) < 1e-13):
            raise GridError("xi lattice must not contain xi = 0")
        for b in (-1.0, 1.0):
            if np.count_nonzero(np.abs(xi - b) < 1e-13) != 1:
                raise GridError(f"xi lattice must contain {b:+.0f} exactly once")
        dxi = np.diff(xi)
        if np.any(np.abs(dxi - self.h_xi) > 1e-10 * max(1.0, self.h_xi)):
            raise GridError("xi lattice is not uniform")
        if self.mode == "log-x":
            if np.any(x <= 0):
                raise GridError("log-x grid requires strictly positive x")
            dy = np.diff(np.log(x))
            if np.any(np.abs(dy - self.h_x) > 1e-10):
                raise GridError("log-x grid is not uniform in log x")
        else:
            dx = np.diff(x)
            if np.any(np.abs(dx - self.h_x) > 1e-10 * max(1.0, self.h_x)):
                raise GridError("linear-x grid is not uniform")

    # -- constructors ------------------------------------------------------

    @classmethod
    def linear(cls, x_min: float, x_max: float, nx: int, K: int) -> "WedgeGrid":
        if nx < 2 or x_max <= x_min:
            raise GridError("need nx >= 2 and x_max > x_min")
        x = np.linspace(x_min, x_max, nx)
        xi = xi_lattice(K)
        return cls(x, xi, "linear-x", float(x[1] - x[0]), 2.0 / (2 * K + 1))

    @classmethod
    def log(cls, y_min: float, y_max: float, ny: int, K: int) -> "WedgeGrid":
        if ny < 2 or y_max <= y_min:
            raise GridError("need ny >= 2 and y_max > y_min")
        y = np.linspace(y_min, y_max, ny)
        xi = xi_lattice(K)
        return cls(np.exp(y), xi, "log-x", float(y[1] - y[0]), 2.0 / (2 * K + 1))

    # -- conveniences ------------------------------------------------------

    @property
    def nx(self) -> int:
        return self.x.size

    @property
    def nxi(self) -> int:
        return self.xi.size

    @property
    def y(self) -> np.ndarray:
        """Uniform log coordinate (log-x mode only)."""
        if self.mode != "log-x":
            raise GridError("y coordinate is only defined for log-x grids")
        return np.log(self.x)

    def mesh(self):
        """Broadcastable (X, XI) coordinate arrays of shape (nx, nxi)."""
        return self.x[:, None], self.xi[None, :]


@dataclass
class ScalarField:
    """Grid function with parity metadata.

    ``values`` has shape (nx, nxi).  Parity tags record symmetry under
    x -> -x and xi -> -xi; they propagate through the derivative operators
    and gate the adapted (1/xi) d/dxi operator.
    """

    grid: WedgeGrid
    values: np.ndarray
    parity_x: Parity = "none"
    parity_xi: Parity = "none"

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if self.values.shape != (self.grid.nx, self.grid.nxi):
            raise GridError(
                f"field shape {self.values.shape} does not match grid "
                f"({self.grid.nx}, {self.grid.nxi})"
            )

    def like(self, values: np.ndarray, parity_x: Parity | None = None,
             parity_xi: Parity | None = None) -> "ScalarField":
        return ScalarField(
            self.grid, values,
            self.parity_x if parity_x is None else parity_x,
            self.parity_xi if parity_xi is None else parity_xi,
        )


def make_field(grid: WedgeGrid, fn: Callable, parity_x: Parity = "none",
               parity_xi: Parity = "none") -> ScalarField:
    """Sample fn(x, xi) (broadcasting) onto the grid."""
    X, XI = grid.mesh()
    return ScalarField(grid, np.broadcast_to(fn(X, XI), (grid.nx, grid.nxi)).copy(),
                       parity_x, parity_xi)


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def _check_finite(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise NonFiniteError("non-finite values in differentiation input")


def _diff_uniform(values: np.ndarray, h: float, axis: int, order: int) -> np.ndarray:
    """Second-order FD along a uniformly spaced axis (order 1 or 2)."""
    n = values.shape[axis]
    if order == 1:
        if n < 3:
            raise GridError("first derivative needs at least 3 nodes")
        return np.gradient(values, h, axis=axis, edge_order=2)
    if order == 2:
        if n < 4:
            raise GridError("second derivative needs at least 4 nodes")
        f = np.moveaxis(values, axis, 0)
        out = np.empty_like(f)
        out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2])
        out[0] = 2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]
        out[-1] = 2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]
        return np.moveaxis(out, 0, axis) / h**2
    raise GridError(f"derivative order must be 1 or 2, got {order}")


def diff_x(f: ScalarField, order: int = 1) -> ScalarField:
    """d/dx (order 1) or d2/dx2 (order 2), second-order accurate.

    On log-x grids the stencil acts in y = log x and the chain rule
    converts back, so the result is still a genuine x-derivative.
    """
    _check_finite(f.values)
    g = f.grid
    if g.mode == "linear-x":
        vals = _diff_uniform(f.values, g.h_x, 0, order)
    else:
        fy = _diff_uniform(f.values, g.h_x, 0, 1)
        if order == 1:
            vals = fy / g.x[:, None]
        else:
            fyy = _diff_uniform(f.values, g.h_x, 0, 2)
            vals = (fyy - fy) / g.x[:, None] ** 2
    px = f.parity_x if order % 2 == 0 else _FLIP[f.parity_x]
    return f.like(vals, parity_x=px)


def diff_xi(f: ScalarField, order: int = 1) -> ScalarField:
    """d/dxi (order 1) or d2/dxi2 (order 2), second-order accurate."""
    _check_finite(f.values)
    vals = _diff_uniform(f.values, f.grid.h_xi, 1, order)
    pxi = f.parity_xi if order % 2 == 0 else _FLIP[f.parity_xi]
    return f.like(vals, parity_xi=pxi)


def adapted_Zx(f: ScalarField) -> ScalarField:
    """Scaling derivative Z_x = x d/dx.

    In log-x mode this is exactly d/dy on the uniform y lattice (no
    division), the preferred form near x = 0+.
    """
    _check_finite(f.values)
    g = f.grid
    if g.mode == "log-x":
        vals = _diff_uniform(f.values, g.h_x, 0, 1)
    else:
        vals = g.x[:, None] * _diff_uniform(f.values, g.h_x, 0, 1)
    return f.like(vals)  # x * odd flip = parity preserved


def adapted_Dxi(f: ScalarField) -> ScalarField:
    """Adapted derivative D_xi = (1/xi) d/dxi.

    Only fields even (or untagged) in xi admit a bounded D_xi; odd input
    is rejected because 2f/xi^2 grows without bound at the axis.
    """
    if f.parity_xi == "odd":
        raise ParityError("D_xi of an odd-in-xi field is unbounded at the axis")
    d = diff_xi(f, 1)
    return f.like(d.values / f.grid.xi[None, :])


def symmetrize_xi(f: ScalarField) -> ScalarField:
    """Project onto the field's declared xi parity by mirror averaging."""
    if f.parity_xi == "none":
        return f
    sign = 1.0 if f.parity_xi == "even" else -1.0
    vals = 0.5 * (f.values + sign * f.values[:, ::-1])
    return f.like(vals)


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def write_field_csv(f: ScalarField, path) -> None:
    """Write ``x,xi,value`` rows (x-major order, 17 significant digits)."""
    X, XI = f.grid.mesh()
    X = np.broadcast_to(X, f.values.shape)
    XI = np.broadcast_to(XI, f.values.shape)
    with open(path, "w") as fh:
        fh.write("x,xi,value\n")
        for xv, xiv, val in zip(X.ravel(), XI.ravel(), f.values.ravel()):
            fh.write(f"{xv:.17g},{xiv:.17g},{val:.17g}\n")
