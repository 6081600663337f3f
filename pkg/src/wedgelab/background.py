r"""Closed-form background fields on the wedge and their scaled derivatives.

A background is specified by a seed pair (V0, U0) built from a radial shape
r(x, xi) and an amplitude pair (A, B).  Writing a = V0 and b = U0, the
pointwise-in-(x, xi) evolution has the closed form

    D(t) = 2 (t a - 6)^2 + 5 t^2 b^2
    V(t) = -6 (5 t b^2 + 2 a (t a - 6)) / D(t)
    U(t) = 72 b / D(t)

which blows up first at the apex x = 0 on the wedge faces xi = +-1 at time
T = 6 / A, with (T - t) V(t, 0, +-1) -> 6.  Everything downstream (norm
scans, envelopes, the simulator's frozen coefficients) evaluates this form.

Derivative conventions.  The natural derivatives on the wedge are the
scaling derivative Z_x = x d/dx and the adapted derivative
D_xi = (1/xi) d/dxi.  Both are computed here through an exact change of
variables rather than nested differencing: in y = log x, Z_x = d/dy, and in
q = xi^2, D_xi = 2 d/dq.  All seed shapes are rational in (x, q), so small
q-offsets leaving [0, 1] during stencil evaluation are harmless.

The transverse profile G (the xi-face analogue of V) is only pinned to equal
V on the faces themselves; any off-face extension is a modelling choice.
Results that consume the extension carry ``heuristic=True``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from types import SimpleNamespace
from typing import Callable, Literal

import numpy as np

from .errors import BlowupError, ConfigError
from .grid import WedgeGrid

R_DEFS = ("ridge-x2", "aniso-poly", "aniso-trig")
SEED_SHAPES = ("cubic-3-6", "cubic-r3")
G_EXTENSIONS = ("match-v", "zero-blend")

#: refuse evaluation when (T - t) <= EPS_T * T
EPS_T = 1e-12
#: hard floor for the closed-form denominator
EPS_DEN = 1e-300


@dataclass(frozen=True)
class SeedParams:
    """Seed amplitudes and shape selectors for the background family."""

    A: float = 6.0
    B: float = 1.0
    A1: float = 0.0
    m: int = 1
    r_def: str = "aniso-trig"
    seed_shape: str = "cubic-r3"
    u_sign: int = 1

    def __post_init__(self):
        if not self.A > 0:
            raise ConfigError(f"seed amplitude A must be positive, got {self.A}")
        if self.B < 0:
            raise ConfigError(f"seed amplitude B must be >= 0, got {self.B}")
        if self.A1 < 0:
            raise ConfigError(f"anisotropy A1 must be >= 0, got {self.A1}")
        if self.m < 1 or int(self.m) != self.m:
            raise ConfigError(f"anisotropy exponent m must be an integer >= 1, got {self.m}")
        if self.r_def not in R_DEFS:
            raise ConfigError(f"unknown r_def {self.r_def!r}; choose from {R_DEFS}")
        if self.seed_shape not in SEED_SHAPES:
            raise ConfigError(f"unknown seed_shape {self.seed_shape!r}; choose from {SEED_SHAPES}")
        if self.u_sign not in (-1, 1):
            raise ConfigError(f"u_sign must be +1 or -1, got {self.u_sign}")


def blowup_time(seed: SeedParams) -> float:
    """First blow-up time T = 6/A (apex of the wedge faces)."""
    return 6.0 / seed.A


# ---------------------------------------------------------------------------
# seed profiles, rational in (x, q = xi^2)
# ---------------------------------------------------------------------------

def seed_fields(seed: SeedParams, x, q) -> SimpleNamespace:
    """Seed data at (x, q): r, a = V0, b = U0 and their exact derivatives.

    Returns r, r_x (= dr/dx), a, b, a_r (= da/dr), b_r (= db/dr), all
    broadcast over the inputs.
    """
    x = np.asarray(x, float)
    q = np.asarray(q, float)
    if seed.r_def == "ridge-x2":
        r = x * x
        r_x = 2.0 * x
    elif seed.r_def == "aniso-poly":
        r = x * x + seed.A1 * (q - 1.0) ** (2 * seed.m)
        r_x = 2.0 * x
    else:  # aniso-trig: r = x^2 (1 + cos^2 2theta), cos 2theta = (1-q)/(1+q)
        w = (1.0 - q) / (1.0 + q)
        r = x * x * (1.0 + w * w)
        r_x = 2.0 * x * (1.0 + w * w)
    if seed.seed_shape == "cubic-3-6":
        den = 1.0 + r
        a = seed.A / den**3
        b = seed.u_sign * seed.B * r / den**6
        a_r = -3.0 * seed.A / den**4
        b_r = seed.u_sign * seed.B * (1.0 - 5.0 * r) / den**7
    else:  # cubic-r3
        den = 1.0 + r**3
        a = seed.A / den
        b = seed.u_sign * seed.B * r / den**2
        a_r = -3.0 * seed.A * r**2 / den**2
        b_r = seed.u_sign * seed.B * (1.0 - 5.0 * r**3) / den**3
    return SimpleNamespace(r=r, r_x=r_x, a=a, b=b, a_r=a_r, b_r=b_r)


def _check_time(seed: SeedParams, t: float) -> float:
    T = blowup_time(seed)
    if t < 0:
        raise ConfigError(f"background time must be >= 0, got {t}")
    if T - t <= EPS_T * T:
        raise BlowupError(
            f"t = {t} is within {EPS_T:g} * T of the blow-up time T = {T}")
    return T


def closed_form_VU(seed: SeedParams, t: float, x, q):
    """(V, U, D) of the pointwise closed form at time t.

    Raises BlowupError at or past T (refusal band EPS_T * T) and when the
    denominator underflows the EPS_DEN floor.
    """
    _check_time(seed, t)
    s = seed_fields(seed, x, q)
    D = 2.0 * (t * s.a - 6.0) ** 2 + 5.0 * t * t * s.b * s.b
    if np.any(D <= EPS_DEN):
        raise BlowupError("closed-form denominator at or below floor")
    V = -6.0 * (5.0 * t * s.b**2 + 2.0 * s.a * (t * s.a - 6.0)) / D
    U = 72.0 * s.b / D
    return V, U, D


def ridge_rates(V, U):
    """Exact time derivatives (V_t, U_t) of the closed form (pointwise)."""
    V = np.asarray(V, float)
    U = np.asarray(U, float)
    return V * V / 6.0 - 5.0 * U * U / 12.0, V * U / 3.0


@dataclass
class BackgroundFields:
    """Snapshot of (V, U, G) and the closed-form denominator."""

    t: float
    V: np.ndarray
    U: np.ndarray
    G: np.ndarray
    denominator: np.ndarray
    extension: str
    heuristic: bool = True  # G off the faces is always an extension choice


def _extend_G(V: np.ndarray, q: np.ndarray, extension: str) -> np.ndarray:
    if extension == "match-v":
        return V.copy() if isinstance(V, np.ndarray) else V
    if extension == "zero-blend":
        return q * V
    raise ConfigError(f"unknown G extension {extension!r}; choose from {G_EXTENSIONS}")


def eval_background(seed: SeedParams, t: float, x, xi,
                    extension: str = "match-v") -> BackgroundFields:
    """Evaluate V, U and the extended G at points (x, xi) (broadcasting)."""
    x = np.asarray(x, float)
    xi = np.asarray(xi, float)
    q = xi * xi
    V, U, D = closed_form_VU(seed, t, x, q)
    # ridge-x2 seeds give xi-independent fields with x's shape; widen all
    # outputs to the common broadcast shape so G and the snapshot agree
    V, U, D, q = (np.array(a, float)
                  for a in np.broadcast_arrays(V, U, D, q))
    G = _extend_G(V, q, extension)
    return BackgroundFields(t=t, V=V, U=U, G=np.asarray(G, float),
                            denominator=D, extension=extension)


# ---------------------------------------------------------------------------
# scaled-derivative engine
# ---------------------------------------------------------------------------

# minimal-width central stencils, second-order accurate
_STENCILS = {
    0: (np.array([0]), np.array([1.0])),
    1: (np.arange(-1, 2), np.array([-0.5, 0.0, 0.5])),
    2: (np.arange(-1, 2), np.array([1.0, -2.0, 1.0])),
    3: (np.arange(-2, 3), np.array([-0.5, 1.0, 0.0, -1.0, 0.5])),
    4: (np.arange(-2, 3), np.array([1.0, -4.0, 6.0, -4.0, 1.0])),
    5: (np.arange(-3, 4), np.array([-0.5, 2.0, -2.5, 0.0, 2.5, -2.0, 0.5])),
}
# steps tuned per order against roundoff/truncation trade-off
_STEPS = {1: 5e-6, 2: 2e-4, 3: 1e-3, 4: 5e-3, 5: 1e-2}


def scaling_derivative(phi: Callable, x, q, j: int, l: int) -> np.ndarray:
    """Z_x^j D_xi^l of phi(x, q) at the tensor points (x[i], q[k]).

    phi must accept broadcastable array arguments.  Z_x acts as d/dy with
    y = log x (multiplicative offsets, exact at x = 0 where every scaled
    derivative of a smooth field vanishes), and D_xi acts as 2 d/dq.
    """
    if j < 0 or l < 0 or j > max(_STENCILS) or l > max(_STENCILS):
        raise ConfigError(f"derivative orders (j={j}, l={l}) out of range")
    x = np.atleast_1d(np.asarray(x, float))
    q = np.atleast_1d(np.asarray(q, float))
    offs_y, w_y = _STENCILS[j]
    offs_q, w_q = _STENCILS[l]
    h_y = _STEPS.get(j, 1.0)
    h_q = _STEPS.get(l, 1.0)
    # offset tensor: axes (x, q, y-stencil, q-stencil)
    X = x[:, None, None, None] * np.exp(offs_y * h_y)[None, None, :, None]
    Q = q[None, :, None, None] + (offs_q * h_q)[None, None, None, :]
    vals = phi(X, Q)
    out = np.einsum("s,t,iqst->iq", w_y, w_q, vals)
    scale = (2.0**l) / (h_y**j * h_q**l)
    return out * scale


def _phi_factory(seed: SeedParams, t: float, field: str, extension: str) -> Callable:
    """Closure phi(x, q) for one of the background fields V, U, G."""
    _check_time(seed, t)

    def phi(x, q):
        V, U, _ = closed_form_VU(seed, t, x, q)
        if field == "V":
            return V
        if field == "U":
            return U
        if field == "G":
            return _extend_G(V, q, extension)
        raise ConfigError(f"unknown background field {field!r}")

    return phi


def field_derivative(seed: SeedParams, t: float, field: str, j: int, l: int,
                     x, q, extension: str = "match-v") -> np.ndarray:
    """Z_x^j D_xi^l of a background field at tensor points (x, q)."""
    return scaling_derivative(_phi_factory(seed, t, field, extension), x, q, j, l)


# ---------------------------------------------------------------------------
# derivative bundle for the remainder right-hand side
# ---------------------------------------------------------------------------

@dataclass
class BackgroundBundle:
    """All background data the remainder equations consume, on one grid.

    Arrays have shape (nx, nxi).  ``Omega`` and its derivatives depend on
    the G extension and are therefore heuristic-tagged alongside G.
    """

    t: float
    V: np.ndarray
    U: np.ndarray
    G: np.ndarray
    ZxV: np.ndarray        # x V_x
    ZxU: np.ndarray
    ZxG: np.ndarray
    DxiV: np.ndarray       # (1/xi) V_xi
    DxiU: np.ndarray
    DxiG: np.ndarray
    Omega: np.ndarray
    ZxOmega: np.ndarray
    DxiOmega: np.ndarray
    extension: str
    heuristic: bool = True

    def xi_partial(self, name: str, q: np.ndarray) -> np.ndarray:
        """xi * d/dxi = q * D_xi of a bundled field."""
        return q * getattr(self, "Dxi" + name)


def build_bundle(seed: SeedParams, t: float, grid: WedgeGrid,
                 extension: str = "match-v") -> BackgroundBundle:
    """Evaluate the background and its scaled derivatives on a grid.

    Omega = -Z_x G - (5/3) Z_x V + (1+q)(q D_xi G - (5/3) D_xi V) and its
    scaled derivatives are assembled from exact compositions of engine
    derivatives (no nested differencing).
    """
    x = grid.x
    q_nodes = grid.xi**2
    # xi nodes come in mirror pairs; evaluate on unique q and scatter back
    q_uniq, inv = np.unique(np.round(q_nodes, 15), return_inverse=True)

    def D(field, j, l):
        return field_derivative(seed, t, field, j, l, x, q_uniq, extension)[:, inv]

    V, U, G = D("V", 0, 0), D("U", 0, 0), D("G", 0, 0)
    ZxV, ZxU, ZxG = D("V", 1, 0), D("U", 1, 0), D("G", 1, 0)
    DxiV, DxiU, DxiG = D("V", 0, 1), D("U", 0, 1), D("G", 0, 1)
    q = q_nodes[None, :]
    Omega = -ZxG - 5.0 / 3.0 * ZxV + (1.0 + q) * (q * DxiG - 5.0 / 3.0 * DxiV)
    # Z_x Omega: Z_x commutes with multiplication by functions of q
    ZxOmega = (-D("G", 2, 0) - 5.0 / 3.0 * D("V", 2, 0)
               + (1.0 + q) * (q * D("G", 1, 1) - 5.0 / 3.0 * D("V", 1, 1)))
    # D_xi Omega = 2 d/dq Omega, expanded by the product rule
    DxiOmega = (-D("G", 1, 1) - 5.0 / 3.0 * D("V", 1, 1)
                + 2.0 * (1.0 + 2.0 * q) * DxiG + q * (1.0 + q) * D("G", 0, 2)
                - 5.0 / 3.0 * (2.0 * DxiV + (1.0 + q) * D("V", 0, 2)))
    return BackgroundBundle(
        t=t, V=V, U=U, G=G, ZxV=ZxV, ZxU=ZxU, ZxG=ZxG,
        DxiV=DxiV, DxiU=DxiU, DxiG=DxiG,
        Omega=Omega, ZxOmega=ZxOmega, DxiOmega=DxiOmega,
        extension=extension,
    )


# ---------------------------------------------------------------------------
# coefficient scan: M_k(t) = max |Z_x^j D_xi^l {V, U, xV_x, xU_x}|
# ---------------------------------------------------------------------------

@dataclass
class ScanReport:
    t: float
    k: int
    M_k: float
    scaled: float                      # (T - t) * M_k
    by_term: dict
    x_samples: np.ndarray
    heuristic: bool = False            # V, U only; no G extension involved


def coefficient_scan(seed: SeedParams, t: float, k: int,
                     x_samples, xi_samples) -> ScanReport:
    """Sup over sample points of all scaled derivatives up to order k.

    The x = 0 column is always appended: the k = 0 maximum of |V| sits
    exactly at the apex and pins (T - t) M_0 = 6.  The xV_x and xU_x
    families are handled as Z_x^{j+1} via the commutation Z_x^j D_xi^l
    (x F_x) = Z_x^{j+1} D_xi^l F.
    """
    if k < 0 or k > 4:
        raise ConfigError(f"scan order k must be in 0..4, got {k}")
    T = _check_time(seed, t)
    x = np.unique(np.concatenate([[0.0], np.asarray(x_samples, float).ravel()]))
    q = np.unique(np.asarray(xi_samples, float).ravel() ** 2)
    by_term = {}
    M = 0.0
    for field in ("V", "U"):
        for j in range(k + 1):
            for l in range(k + 1 - j):
                for extra, tag in ((0, field), (1, f"x{field}_x")):
                    d = field_derivative(seed, t, field, j + extra, l, x, q)
                    m = float(np.max(np.abs(d)))
                    by_term[(tag, j, l)] = m
                    M = max(M, m)
    return ScanReport(t=t, k=k, M_k=M, scaled=(T - t) * M, by_term=by_term,
                      x_samples=x)


# ---------------------------------------------------------------------------
# localization: time envelopes at fixed offsets
# ---------------------------------------------------------------------------

@dataclass
class PointEnvelope:
    x: float
    xi: float
    sup_V: float
    sup_U: float
    t_at_V: float
    t_at_U: float
    D_min: float


def envelope_VU(seed: SeedParams, x: float, xi: float, t_hi: float) -> PointEnvelope:
    """Exact sup over t in [0, t_hi] of |V| and |U| at one point.

    V(t) is a ratio of a linear and a quadratic polynomial in t, so its
    critical points are roots of a quadratic; U(t) = 72 b / D(t) has a
    single interior critical point where D' = 0.  Candidates plus endpoints
    give the envelope without time stepping.
    """
    T = _check_time(seed, t_hi)
    s = seed_fields(seed, np.asarray(x, float), np.asarray(float(xi) ** 2, float))
    a, b = float(s.a), float(s.b)
    num = np.poly1d([-6.0 * (5.0 * b * b + 2.0 * a * a), 72.0 * a])
    den = np.poly1d([2.0 * a * a + 5.0 * b * b, -24.0 * a, 72.0])

    def cands(p: np.poly1d):
        r = p.roots if p.order > 0 else np.array([])
        r = r[np.isreal(r)].real if r.size else r
        return [float(t) for t in r if 0.0 < t < t_hi]

    crit_V = cands(num.deriv() * den - num * den.deriv())
    crit_U = cands(den.deriv())
    ts_V = np.array([0.0, t_hi] + crit_V)
    ts_U = np.array([0.0, t_hi] + crit_U)
    ts_D = np.array([0.0, t_hi] + cands(den.deriv()))
    Vv = np.abs(num(ts_V) / den(ts_V))
    Uv = np.abs(72.0 * b / den(ts_U))
    iV, iU = int(np.argmax(Vv)), int(np.argmax(Uv))
    return PointEnvelope(x=float(x), xi=float(xi),
                         sup_V=float(Vv[iV]), sup_U=float(Uv[iU]),
                         t_at_V=float(ts_V[iV]), t_at_U=float(ts_U[iU]),
                         D_min=float(np.min(den(ts_D))))


@dataclass
class LocalizationReport:
    envelopes: list
    slope_V: float
    slope_U: float
    u_identically_zero: bool


def localization_check(seed: SeedParams, x_offsets, xi: float = 1.0,
                       t_margin: float = 1e-6) -> LocalizationReport:
    """Envelope decay across off-apex stations.

    Fits the log-log slope of sup_t |V| and sup_t |U| against the offsets;
    for both seed shapes the far-field rates are x^-6 and x^-10.  With
    B = 0 the U component is identically zero and its slope is reported as
    NaN.
    """
    T = blowup_time(seed)
    t_hi = T - t_margin
    envs = [envelope_VU(seed, xo, xi, t_hi) for xo in x_offsets]
    xs = np.log([e.x for e in envs])
    supV = np.array([e.sup_V for e in envs])
    supU = np.array([e.sup_U for e in envs])
    slope_V = float(np.polyfit(xs, np.log(supV), 1)[0])
    zero_U = bool(np.all(supU == 0.0))
    slope_U = float("nan") if zero_U else float(np.polyfit(xs, np.log(supU), 1)[0])
    return LocalizationReport(envelopes=envs, slope_V=slope_V, slope_U=slope_U,
                              u_identically_zero=zero_U)


# ---------------------------------------------------------------------------
# CSV writers
# ---------------------------------------------------------------------------

def write_background_csv(path, seed: SeedParams, ts, grid: WedgeGrid,
                         extension: str = "match-v") -> None:
    """Rows t,x,xi,V,U,G,denominator at every grid node and time."""
    with open(path, "w") as fh:
        fh.write("t,x,xi,V,U,G,denominator\n")
        for t in ts:
            bf = eval_background(seed, float(t), grid.x[:, None],
                                 grid.xi[None, :], extension)
            X, XI = grid.mesh()
            X = np.broadcast_to(X, bf.V.shape)
            XI = np.broadcast_to(XI, bf.V.shape)
            for row in zip(X.ravel(), XI.ravel(), bf.V.ravel(), bf.U.ravel(),
                           bf.G.ravel(), bf.denominator.ravel()):
                fh.write(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n")


def write_scan_csv(path, reports) -> None:
    """Rows t,k,M_k,scaled for a ladder of scan reports."""
    with open(path, "w") as fh:
        fh.write("t,k,M_k,scaled\n")
        for r in reports:
            fh.write(f"{r.t:.17g},{r.k},{r.M_k:.17g},{r.scaled:.17g}\n")
