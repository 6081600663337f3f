r"""Weighted energies, blow-up envelopes, and bootstrap bookkeeping.

Norms.  The working measure is d(mu_w) = w(xi) |x| dx dxi with w >= 0
configurable (default w == 1).  On log-x grids |x| dx = e^{2y} dy and the
integral runs over x > 0 doubled (fields are even in x).  The order-k
energy of a state (u, omega, psi) is

    E_k = sum_{j+l<=k} ( ||Z_x^j D_xi^l u||^2 + ||Z_x^j D_xi^l omega||^2 )
        + sum_{j+l<=k+1} ||Z_x^j D_xi^l psi||^2

with Z_x = x d/dx and D_xi = (1/xi) d/dxi taken as grid operators.

Envelopes.  The scalar comparison ODE Y' = C_lin/(T-t) Y + C_nl Y^2 has the
Bernoulli closed form (coded first, used as the oracle for the adaptive
integrator): with Z = 1/Y,

    Z(t) = (T-t)^{C_lin} [ Z(0) T^{-C_lin} - C_nl I(t) ],
    I(t) = ((T-t)^{1-C_lin} - T^{1-C_lin}) / (C_lin - 1)     (C_lin != 1)
         = log(T/(T-t))                                      (C_lin == 1).

The bootstrap quantity is X_sigma = (T-t)^sigma Y; closing the argument
needs the exponent gap sigma > C_lin, and the certified smallness
eps0 = T^sigma Y(0) is *measured* by bisection, never asserted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp, simpson

from .background import SeedParams, seed_fields
from .errors import ConfigError, GapError, NumericError
from .grid import ScalarField, WedgeGrid, adapted_Dxi, adapted_Zx


# ---------------------------------------------------------------------------
# weights and weighted norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightSpec:
    """Transverse weight w(xi); default is the unit weight."""

    fn: Callable | None = None
    table: tuple | None = None      # (xi_nodes, w_values) for interpolation

    def values(self, xi: np.ndarray) -> np.ndarray:
        if self.fn is not None:
            w = np.asarray(self.fn(xi), float)
        elif self.table is not None:
            w = np.interp(xi, self.table[0], self.table[1])
        else:
            w = np.ones_like(xi)
        if np.any(w < 0):
            raise ConfigError("weight w(xi) must be non-negative")
        return w


def quad_weights(grid: WedgeGrid, weight: WeightSpec = WeightSpec()) -> np.ndarray:
    """Trapezoid quadrature weights for d(mu_w) on the grid, shape (nx, nxi)."""
    def trap(h, n):
        w = np.full(n, h)
        w[0] = w[-1] = 0.5 * h
        return w

    wxi = trap(grid.h_xi, grid.nxi) * weight.values(grid.xi)
    if grid.mode == "log-x":
        # |x| dx = e^{2y} dy, times 2 for the even extension to x < 0
        wx = 2.0 * trap(grid.h_x, grid.nx) * grid.x**2
    else:
        wx = trap(grid.h_x, grid.nx) * np.abs(grid.x)
    return wx[:, None] * wxi[None, :]


def l2mu_norm(f: ScalarField, weight: WeightSpec = WeightSpec()) -> float:
    """Weighted L^2 norm ||f||_{L^2_{mu_w}} by trapezoid quadrature."""
    return float(np.sqrt(np.sum(f.values**2 * quad_weights(f.grid, weight))))


def derivative_table(f: ScalarField, kmax: int) -> dict:
    """All Z_x^j D_xi^l f for j + l <= kmax, built by canonical composition."""
    tab = {(0, 0): f}
    for total in range(1, kmax + 1):
        for j in range(total + 1):
            l = total - j
            if j > 0:
                tab[(j, l)] = adapted_Zx(tab[(j - 1, l)])
            else:
                tab[(0, l)] = adapted_Dxi(tab[(0, l - 1)])
    return tab


def sobolev_norm_sq(f: ScalarField, k: int,
                    weight: WeightSpec = WeightSpec()) -> float:
    """sum_{j+l<=k} ||Z_x^j D_xi^l f||^2 in the weighted measure."""
    qw = quad_weights(f.grid, weight)
    tab = derivative_table(f, k)
    return float(sum(np.sum(g.values**2 * qw) for g in tab.values()))


def energy_Ek(u: ScalarField, omega: ScalarField, psi: ScalarField,
              k: int = 2, weight: WeightSpec = WeightSpec()) -> float:
    """Order-k energy of a remainder state (psi enters at order k + 1)."""
    if k < 0:
        raise ConfigError("energy order k must be >= 0")
    return (sobolev_norm_sq(u, k, weight) + sobolev_norm_sq(omega, k, weight)
            + sobolev_norm_sq(psi, k + 1, weight))


# ---------------------------------------------------------------------------
# seed energy at t = 0
# ---------------------------------------------------------------------------

@dataclass
class InitialEnergyReport:
    value: float
    tail_fraction: float        # relative change when doubling the x cutoff
    tail_converged: bool
    tail_slope: float           # log-log slope of the x-integrand far field
    x_cut: float


def initial_energy(seed: SeedParams, scale: float = 1.0, x_cut: float = 40.0,
                   nx: int = 4001, ntheta: int = 241) -> InitialEnergyReport:
    """E(0) = int_{-pi/4}^{pi/4} int_R x^2 (V0^2 + U0^2) |x| dx dtheta.

    Simpson quadrature on [0, x_cut] (doubled for the even integrand), with
    a doubled-cutoff tail check: if the value moves by more than 1% the
    report is flagged non-converged.  The far-field x-integrand slope is
    also fitted; the decaying seed shapes give -9.
    """
    theta = np.linspace(-np.pi / 4, np.pi / 4, ntheta)
    q = np.tan(theta) ** 2

    def xline(cut: float, n: int) -> tuple:
        x = np.linspace(0.0, cut, n)
        s = seed_fields(seed, x[:, None], q[None, :])
        dens = (scale * s.a) ** 2 + (scale * s.b) ** 2
        # isotropic seeds come back with a collapsed angular axis
        dens = np.broadcast_to(dens, (x.size, theta.size))
        integ_x = simpson(dens, x=theta, axis=1) * x**3
        return x, 2.0 * simpson(integ_x, x=x), integ_x

    x1, e1, integ = xline(x_cut, nx)
    _, e2, _ = xline(2.0 * x_cut, 2 * nx - 1)
    tail = abs(e2 - e1) / max(abs(e2), 1e-300)
    # far-field slope from the last decade of the x-integrand
    mask = (x1 >= x_cut / 10.0) & (integ > 0)
    if np.count_nonzero(mask) > 10:
        slope = float(np.polyfit(np.log(x1[mask]), np.log(integ[mask]), 1)[0])
    else:
        slope = float("nan")
    return InitialEnergyReport(value=float(e2), tail_fraction=float(tail),
                               tail_converged=bool(tail <= 0.01),
                               tail_slope=slope, x_cut=x_cut)


# ---------------------------------------------------------------------------
# envelopes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnvelopeParams:
    T: float = 1.0
    C_lin: float = 1.0
    C_nl: float = 0.0
    sigma: float = 1.25
    Y0: float = 1.0

    def __post_init__(self):
        if self.T <= 0:
            raise ConfigError("envelope horizon T must be positive")
        if self.C_nl < 0 or self.Y0 < 0:
            raise ConfigError("C_nl and Y0 must be non-negative")


def bernoulli_envelope(p: EnvelopeParams, t) -> np.ndarray:
    """Closed-form solution of Y' = C_lin/(T-t) Y + C_nl Y^2 (the oracle).

    Returns +inf wherever the solution has already blown up.  Y0 = 0 gives
    the zero solution.
    """
    t = np.asarray(t, float)
    if np.any(t < 0) or np.any(t >= p.T):
        raise ConfigError("envelope times must lie in [0, T)")
    if p.Y0 == 0.0:
        return np.zeros_like(t)
    tau = p.T - t
    if p.C_lin == 1.0:
        I = np.log(p.T / tau)
    else:
        I = (tau ** (1.0 - p.C_lin) - p.T ** (1.0 - p.C_lin)) / (p.C_lin - 1.0)
    Z = tau**p.C_lin * (p.T ** (-p.C_lin) / p.Y0 - p.C_nl * I)
    out = np.where(Z > 0.0, 1.0 / np.where(Z > 0.0, Z, 1.0), np.inf)
    return out


def envelope_integrate(p: EnvelopeParams, t_eval) -> tuple:
    """Adaptive-RK integration of the envelope ODE (validated against the
    Bernoulli closed form).  Returns (t, Y, status)."""
    t_eval = np.asarray(t_eval, float)
    if t_eval.size == 0 or np.any(np.diff(t_eval) <= 0):
        raise ConfigError("t_eval must be strictly increasing and non-empty")
    if t_eval[-1] >= p.T:
        raise ConfigError("cannot integrate the envelope up to or past T")

    def rhs(t, y):
        return [p.C_lin / (p.T - t) * y[0] + p.C_nl * y[0] ** 2]

    def escape(t, y):
        return y[0] - 1e12

    escape.terminal = True
    sol = solve_ivp(rhs, (float(t_eval[0]), float(t_eval[-1])), [p.Y0],
                    method="RK45", rtol=1e-10, atol=1e-14, t_eval=t_eval,
                    events=escape)
    if sol.status == -1:
        raise NumericError(f"envelope integration failed: {sol.message}")
    status = "escaped" if sol.status == 1 else "completed"
    return sol.t, sol.y[0], status


def x_sigma(t, Y, T: float, sigma: float) -> np.ndarray:
    """Bootstrap quantity X_sigma = (T - t)^sigma Y."""
    return (T - np.asarray(t, float)) ** sigma * np.asarray(Y, float)


# ---------------------------------------------------------------------------
# bootstrap bisection
# ---------------------------------------------------------------------------

@dataclass
class BootstrapResult:
    eps0: float
    Y0_max: float
    trivial: bool               # C_nl = 0: any amplitude closes
    sigma: float
    C_lin: float
    C_nl: float
    t_star: float


def bootstrap_check(C_lin: float, C_nl: float, sigma: float, T: float = 1.0,
                    t_star_frac: float = 1.0 - 1e-6,
                    n_samples: int = 2000) -> BootstrapResult:
    """Largest eps0 = T^sigma Y0 with X_sigma(t) <= 2 X_sigma(0) on [0, t*].

    Requires the exponent gap sigma > C_lin (GapError otherwise).  The
    envelope is evaluated through the Bernoulli closed form, so the
    bisection is exact up to the sampling of [0, t*]; the result is
    reported to two significant digits.
    """
    if sigma <= C_lin:
        raise GapError(
            f"bootstrap gap violated: sigma = {sigma} <= C_lin = {C_lin}")
    t_star = T * t_star_frac
    # cluster samples toward T where X_sigma peaks
    s = np.linspace(0.0, 1.0, n_samples)
    ts = T - (T - t_star) ** s * T ** (1.0 - s)

    def closes(Y0: float) -> bool:
        p = EnvelopeParams(T=T, C_lin=C_lin, C_nl=C_nl, sigma=sigma, Y0=Y0)
        Y = bernoulli_envelope(p, ts)
        X = x_sigma(ts, Y, T, sigma)
        return bool(np.all(np.isfinite(X)) and np.all(X <= 2.0 * X[0] + 1e-300))

    if C_nl == 0.0:
        return BootstrapResult(eps0=math.inf, Y0_max=math.inf, trivial=True,
                               sigma=sigma, C_lin=C_lin, C_nl=C_nl, t_star=t_star)
    lo, hi = 0.0, 1.0
    while closes(hi):
        hi *= 4.0
        if hi > 1e14:
            return BootstrapResult(eps0=math.inf, Y0_max=math.inf, trivial=True,
                                   sigma=sigma, C_lin=C_lin, C_nl=C_nl,
                                   t_star=t_star)
    if not closes(lo + 1e-300):
        raise NumericError("bootstrap fails even for vanishing amplitude")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if closes(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-4 * max(lo, 1e-300):
            break
    Y0_max = lo
    eps0 = T**sigma * Y0_max
    # two significant digits, rounded down so the reported value still closes
    if eps0 > 0:
        mag = 10.0 ** math.floor(math.log10(eps0))
        eps0 = math.floor(eps0 / mag * 10.0) / 10.0 * mag
    return BootstrapResult(eps0=eps0, Y0_max=Y0_max, trivial=False,
                           sigma=sigma, C_lin=C_lin, C_nl=C_nl, t_star=t_star)


# ---------------------------------------------------------------------------
# transfer detector and envelope fit
# ---------------------------------------------------------------------------

@dataclass
class TransferReport:
    exponent_bg: float
    c0: float
    exponent_rem: float
    declared: bool
    reason: str


def transfer_detector(ts, bg_series, rem_series, T: float, sigma: float,
                      tol: float = 0.1, zero_tol: float = 1e-14) -> TransferReport:
    """Compare blow-up exponents of a background norm and a remainder norm.

    Log-log regression of each series against (T - t) over the last decade
    of approach.  Transfer is declared when the remainder exponent is at
    most sigma + tol, sigma < 1, and the background exponent reaches 1
    within tol (so the background dominates the detector norm near T).
    """
    ts = np.asarray(ts, float)
    bg = np.asarray(bg_series, float)
    rem = np.asarray(rem_series, float)
    tau = T - ts
    if np.any(tau <= 0):
        raise ConfigError("transfer series must stop before T")
    mask = tau <= 10.0 * tau.min()
    if np.count_nonzero(mask) < 3:
        raise ConfigError("need at least 3 samples in the last decade")
    pb, ib = np.polyfit(np.log(tau[mask]), np.log(bg[mask]), 1)
    exponent_bg = -float(pb)
    c0 = float(np.exp(ib))
    if np.max(np.abs(rem)) < zero_tol:
        return TransferReport(exponent_bg=exponent_bg, c0=c0,
                              exponent_rem=0.0, declared=True,
                              reason="zero-remainder")
    pr = np.polyfit(np.log(tau[mask]), np.log(np.abs(rem[mask])), 1)[0]
    exponent_rem = -float(pr)
    ok = (exponent_rem <= sigma + tol) and (sigma < 1.0) \
        and (exponent_bg >= 1.0 - tol)
    return TransferReport(exponent_bg=exponent_bg, c0=c0,
                          exponent_rem=exponent_rem, declared=bool(ok),
                          reason="exponent-gap" if ok else "no-gap")


@dataclass
class GronwallFit:
    C_lin_hat: float
    C_nl_hat: float
    residual: float
    ill_conditioned: bool


def gronwall_fit(ts, Ys, T: float) -> GronwallFit:
    """Least-squares (a, b) in Y' ~ a/(T-t) Y + b Y^2 from a logged series."""
    ts = np.asarray(ts, float)
    Ys = np.asarray(Ys, float)
    if ts.size < 3:
        raise ConfigError("need at least 3 samples to fit")
    dY = np.gradient(Ys, ts)
    A = np.stack([Ys / (T - ts), Ys**2], axis=1)
    coef, *_ = np.linalg.lstsq(A, dY, rcond=None)
    resid = A @ coef - dY
    scale = max(float(np.max(np.abs(dY))), 1e-300)
    sv = np.linalg.svd(A, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    return GronwallFit(C_lin_hat=float(coef[0]), C_nl_hat=float(coef[1]),
                       residual=float(np.max(np.abs(resid))) / scale,
                       ill_conditioned=bool(cond > 1e8))


# ---------------------------------------------------------------------------
# CSV writers
# ---------------------------------------------------------------------------

def write_envelope_csv(path, ts, Ys, Xs, status: str) -> None:
    with open(path, "w") as fh:
        fh.write("t,Y,X_sigma,status\n")
        for t, y, x in zip(ts, Ys, Xs):
            fh.write(f"{t:.17g},{y:.17g},{x:.17g},{status}\n")


def write_fit_csv(path, fit: GronwallFit) -> None:
    with open(path, "w") as fh:
        fh.write("C_lin_hat,C_nl_hat,residual\n")
        fh.write(f"{fit.C_lin_hat:.17g},{fit.C_nl_hat:.17g},{fit.residual:.17g}\n")
