r"""Fixed corpus of analytic test functions with exact derivatives.

Verification checks need smooth probe fields whose derivatives are known in
closed form, so that finite-difference residuals can be measured against an
exact reference instead of against another finite difference.  The corpus is
deliberately boring: Gaussians (times even polynomials) in x, crossed with
even polynomials in xi that vanish at xi = +-1.  Vanishing at the wedge
boundary makes every probe admissible as a stream function or as Dirichlet
data for the elliptic problem.

A ``GaussPoly`` is p(s) * exp(-c s^2); this family is closed under d/ds, so
arbitrary-order exact derivatives come from repeated symbolic-free
differentiation of the polynomial factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class GaussPoly:
    """p(s) * exp(-c*s**2) with exact derivatives of any order."""

    def __init__(self, poly, c: float):
        self.poly = np.poly1d(poly)
        self.c = float(c)

    def __call__(self, s):
        return self.poly(s) * np.exp(-self.c * np.asarray(s, float) ** 2)

    def deriv(self) -> "GaussPoly":
        # (p e^{-cs^2})' = (p' - 2 c s p) e^{-cs^2}
        p = self.poly
        return GaussPoly(p.deriv() - 2.0 * self.c * np.poly1d([1.0, 0.0]) * p, self.c)


class PolyFactor:
    """Plain polynomial factor sharing the GaussPoly interface."""

    def __init__(self, poly):
        self.poly = np.poly1d(poly)

    def __call__(self, s):
        return self.poly(np.asarray(s, float))

    def deriv(self) -> "PolyFactor":
        return PolyFactor(self.poly.deriv())


@dataclass(frozen=True)
class SeparableProbe:
    """F(x) * H(xi) with exact mixed partials via factor differentiation."""

    name: str
    fx: object          # GaussPoly (or PolyFactor) in x
    hxi: object         # PolyFactor (or GaussPoly) in xi
    parity_x: str = "even"
    parity_xi: str = "even"

    def _fx_d(self, j: int):
        f = self.fx
        for _ in range(j):
            f = f.deriv()
        return f

    def _hxi_d(self, l: int):
        h = self.hxi
        for _ in range(l):
            h = h.deriv()
        return h

    def partial(self, j: int, l: int):
        """Exact d^{j+l} / dx^j dxi^l as a callable of (x, xi)."""
        fj, hl = self._fx_d(j), self._hxi_d(l)
        return lambda x, xi: fj(x) * hl(xi)

    # common shorthands ---------------------------------------------------
    def val(self, x, xi):
        return self.partial(0, 0)(x, xi)

    def dx(self, x, xi):
        return self.partial(1, 0)(x, xi)

    def dxi(self, x, xi):
        return self.partial(0, 1)(x, xi)

    def dxx(self, x, xi):
        return self.partial(2, 0)(x, xi)

    def dxxi(self, x, xi):
        return self.partial(1, 1)(x, xi)

    def dxixi(self, x, xi):
        return self.partial(0, 2)(x, xi)


# polynomial xi factors, all even and vanishing at xi = +-1
_H_CUP2 = np.poly1d([1.0, 0.0, -2.0, 0.0, 1.0])                 # (1-xi^2)^2
_H_CUP3 = np.poly1d([-1.0, 0.0, 3.0, 0.0, -3.0, 0.0, 1.0])      # (1-xi^2)^3
_H_BELL = _H_CUP2 * np.poly1d([1.0, 0.0, 0.0])                  # xi^2 (1-xi^2)^2

_F_SPECS = [
    ("g1", [1.0], 1.0),               # e^{-x^2}
    ("g0h", [1.0], 0.5),              # e^{-x^2/2}
    ("x2g", [1.0, 0.0, 0.0], 1.0),    # x^2 e^{-x^2}
    ("x4g", [1.0, 0.0, 0.0, 0.0, 0.0], 1.0),  # x^4 e^{-x^2}
]
_H_SPECS = [("cup2", _H_CUP2), ("cup3", _H_CUP3), ("bell", _H_BELL)]


@lru_cache(maxsize=1)
def default_corpus() -> tuple:
    """The 12 even probes used by every verification sweep."""
    probes = []
    for fname, fpoly, c in _F_SPECS:
        for hname, hpoly in _H_SPECS:
            probes.append(SeparableProbe(f"{fname}-{hname}",
                                         GaussPoly(fpoly, c), PolyFactor(hpoly)))
    return tuple(probes)


# negative-control probes for parity rejection tests
ODD_XI_PROBE = SeparableProbe("odd-xi", GaussPoly([1.0], 1.0),
                              PolyFactor(_H_CUP2 * np.poly1d([1.0, 0.0])),
                              parity_x="even", parity_xi="odd")
ODD_X_PROBE = SeparableProbe("odd-x", GaussPoly([1.0, 0.0], 1.0),
                             PolyFactor(_H_CUP2),
                             parity_x="odd", parity_xi="even")
