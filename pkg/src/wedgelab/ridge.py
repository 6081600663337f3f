r"""Dynamics on the wedge faces: the pointwise (U, V) system.

On the faces xi = +-1 the quotient equations close into an ODE system per
spatial point,

    U_t = V U / (2 lambda)
    V_t = ((mu^2 - 1) V^2 - mu^2 U^2) / (lambda (1 + mu^2))

with the standard scaling (lambda, mu^2) = (3/2, 5/3) giving

    U_t = V U / 3,        V_t = V^2 / 6 - (5/12) U^2.

The system has the closed-form solution (a = V(0), b = U(0))

    D(t) = 2 (t a - 6)^2 + 5 t^2 b^2,
    V = -6 (5 t b^2 + 2 a (t a - 6)) / D,      U = 72 b / D,

blowing up at T = 6/a when b = 0 (pure Riccati V = 6a/(6 - t a)).

The same quadratic structure appears in a classical one-dimensional
vorticity model; ``clm_map_check`` fits the change of variables
(omega, H) = (k U, 2 V), t = s tau by least squares on exact trajectories
and reports how well candidate constant pairs close the model system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigError, NumericError

ESCAPE_MAGNITUDE = 1e12


@dataclass(frozen=True)
class RidgeSpec:
    """Face selector and scaling constants."""

    xi0: float = 1.0
    lam: float = 1.5
    mu: float = math.sqrt(5.0 / 3.0)

    def __post_init__(self):
        if self.xi0 not in (-1.0, 1.0):
            raise ConfigError(f"xi0 must be +1 or -1, got {self.xi0}")
        if self.lam <= 0 or self.mu <= 0:
            raise ConfigError("scaling constants lam and mu must be positive")


def ridge_rhs(t: float, y, spec: RidgeSpec = RidgeSpec()):
    """Right-hand side of the face system for y = (U, V)."""
    U, V = y
    mu2 = spec.mu**2
    dU = V * U / (2.0 * spec.lam)
    dV = ((mu2 - 1.0) * V * V - mu2 * U * U) / (spec.lam * (1.0 + mu2))
    return np.array([dU, dV])


def closed_form_ridge(t, a, b):
    """Closed-form (U, V) at time(s) t for initial data (U, V)(0) = (b, a)."""
    t = np.asarray(t, float)
    D = 2.0 * (t * a - 6.0) ** 2 + 5.0 * t * t * b * b
    V = -6.0 * (5.0 * t * b * b + 2.0 * a * (t * a - 6.0)) / D
    U = 72.0 * b / D
    return U, V


@dataclass
class RidgeTrajectory:
    t: np.ndarray
    U: np.ndarray
    V: np.ndarray
    status: str                 # "completed" | "escaped"
    spec: RidgeSpec
    t_escape: float | None = None


def integrate_ridge(U0: float, V0: float, t_end: float,
                    spec: RidgeSpec = RidgeSpec(), rtol: float = 1e-10,
                    n_out: int | None = 400) -> RidgeTrajectory:
    """Integrate the face system with adaptive RK.

    Escape past |V| = 1e12 is a *status*, not an exception: the trajectory
    up to the escape time is returned with ``status="escaped"``.  Genuine
    solver failures raise NumericError.  ``n_out=None`` returns the
    solver's own steps, which cluster toward a blow-up and are the right
    sampling for :func:`fit_blowup_time`.
    """

    def escape(t, y, _spec):
        return abs(y[1]) - ESCAPE_MAGNITUDE

    escape.terminal = True
    t_eval = None if n_out is None else np.linspace(0.0, t_end, n_out)
    sol = solve_ivp(ridge_rhs, (0.0, t_end), [U0, V0], args=(spec,),
                    method="RK45", rtol=rtol, atol=1e-12 * max(1.0, abs(U0), abs(V0)),
                    t_eval=t_eval, events=escape,
                    dense_output=False)
    if sol.status == -1:
        raise NumericError(f"face ODE integration failed: {sol.message}")
    escaped = sol.status == 1
    t, (U, V) = sol.t, sol.y
    if escaped and sol.t_events[0].size:
        te = float(sol.t_events[0][0])
        ye = sol.y_events[0][0]
        t = np.append(t, te)
        U = np.append(U, ye[0])
        V = np.append(V, ye[1])
    return RidgeTrajectory(t=t, U=U, V=V,
                           status="escaped" if escaped else "completed",
                           spec=spec,
                           t_escape=float(sol.t_events[0][0]) if escaped else None)


# ---------------------------------------------------------------------------
# model-equivalence fit
# ---------------------------------------------------------------------------

@dataclass
class ClmReport:
    s_fit: float
    k2_fit: float
    residual_first: float       # s U_t - 2 U V, k-independent
    residual_second: float      # 2 s V_t - 2 V^2 + (k^2/2) U^2
    printed_pair_residual: float
    k2_matches_printed: bool


def clm_map_check(a: float = 1.0, b: float = 0.7, n: int = 400,
                  frac: float = 0.7, printed_k2: float = 8.0 / 5.0,
                  printed_s: float = 6.0) -> ClmReport:
    """Least-squares recovery of the model map constants.

    The candidate map is omega = k U, H = 2 V with model time tau = t / s.
    The model system d(omega)/dtau = omega H, dH/dtau = (H^2 - omega^2)/2
    then demands s U_t = 2 U V (fixing s independently of k) and
    2 s V_t = 2 V^2 - (k^2/2) U^2 (fixing k^2 given s).  Residuals are
    reported relative to the scale of the matched terms, together with the
    misfit of the externally suggested constant pair.
    """
    if b == 0.0:
        raise ConfigError("model fit needs b != 0 (U must not vanish)")
    T_loc = 6.0 / a if a > 0 else float("inf")
    ts = np.linspace(0.0, frac * T_loc if np.isfinite(T_loc) else 1.0, n)
    U, V = closed_form_ridge(ts, a, b)
    Ut = V * U / 3.0
    Vt = V * V / 6.0 - 5.0 * U * U / 12.0
    s_fit = float(np.sum(2.0 * U * V * Ut) / np.sum(Ut * Ut))
    k2_fit = float(2.0 * np.sum((2.0 * V**2 - 2.0 * s_fit * Vt) * U**2)
                   / np.sum(U**4))
    scale1 = float(np.max(np.abs(2.0 * U * V)))
    scale2 = float(np.max(np.abs(2.0 * V**2)))
    res1 = float(np.max(np.abs(s_fit * Ut - 2.0 * U * V))) / scale1
    res2 = float(np.max(np.abs(2.0 * s_fit * Vt - 2.0 * V**2 + 0.5 * k2_fit * U**2))) / scale2
    resp = float(np.max(np.abs(2.0 * printed_s * Vt - 2.0 * V**2
                               + 0.5 * printed_k2 * U**2))) / scale2
    return ClmReport(s_fit=s_fit, k2_fit=k2_fit, residual_first=res1,
                     residual_second=res2, printed_pair_residual=resp,
                     k2_matches_printed=abs(k2_fit - printed_k2) < 1e-8)


# ---------------------------------------------------------------------------
# pressure-gradient closure on the faces
# ---------------------------------------------------------------------------

def ridge_pressure_gradient(U, V, x, spec: RidgeSpec = RidgeSpec()):
    """P_x on a face: x (U^2 - 2 V^2) / (1 + mu^2)."""
    mu2 = spec.mu**2
    return np.asarray(x, float) * (np.asarray(U, float) ** 2
                                   - 2.0 * np.asarray(V, float) ** 2) / (1.0 + mu2)


def pressure_consistency_residual(U, V, spec: RidgeSpec = RidgeSpec()) -> float:
    """Two routes to lam * V_t must agree identically.

    Route one scales the ODE right-hand side; route two evaluates the
    momentum form V^2 - U^2 + (1/x) P_x with the face pressure closure.
    The difference is zero in exact arithmetic for every (lam, mu).
    """
    U = np.asarray(U, float)
    V = np.asarray(V, float)
    mu2 = spec.mu**2
    lam_Vt = ((mu2 - 1.0) * V * V - mu2 * U * U) / (1.0 + mu2)
    momentum = V * V - U * U + (U * U - 2.0 * V * V) / (1.0 + mu2)
    scale = max(1.0, float(np.max(np.abs(lam_Vt))))
    return float(np.max(np.abs(lam_Vt - momentum))) / scale


# ---------------------------------------------------------------------------
# blow-up time fit
# ---------------------------------------------------------------------------

@dataclass
class BlowupFit:
    T_est: float
    c_est: float
    residual: float


def fit_blowup_time(traj: RidgeTrajectory) -> BlowupFit:
    """Fit V ~ c / (T - t) over the last magnitude decade of |V|.

    1/V is linear in t under the ansatz; an ordinary least-squares line
    through the last-decade samples gives (T_est, c_est) and a relative
    misfit diagnostic.
    """
    V = traj.V
    mask = np.abs(V) >= np.max(np.abs(V)) / 10.0
    if np.count_nonzero(mask) < 3:
        raise NumericError("not enough samples in the last decade for a fit")
    t, invV = traj.t[mask], 1.0 / V[mask]
    slope, intercept = np.polyfit(t, invV, 1)
    if slope == 0.0:
        raise NumericError("flat 1/V; no blow-up trend to fit")
    T_est = -intercept / slope
    c_est = -1.0 / slope
    fit = (T_est - t) / c_est
    residual = float(np.max(np.abs(fit - invV)) / np.max(np.abs(invV)))
    return BlowupFit(T_est=float(T_est), c_est=float(c_est), residual=residual)


def write_trajectory_csv(traj: RidgeTrajectory, path) -> None:
    with open(path, "w") as fh:
        fh.write("t,U,V\n")
        for t, u, v in zip(traj.t, traj.U, traj.V):
            fh.write(f"{t:.17g},{u:.17g},{v:.17g}\n")
