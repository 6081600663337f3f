r"""Time integration of the linearized-plus-quadratic remainder system.

State: (u, omega) on a log-x strip, with psi recovered from omega through
the elliptic solver at every stage.  The evolution is

    (3/2) u_t     = L1 + M1
    (3/2) omega_t = L2 + M2

where the L-terms collect background-remainder couplings (they vanish for a
zero background) and the M-terms the remainder self-interactions (they
vanish for a zero remainder).  Every 1/xi in the printed forms is routed
through the adapted derivative D_xi = (1/xi) d/dxi, and x-derivatives
through Z_x = x d/dx, so the assembled right-hand side only ever touches
scaled derivatives that are regular on the strip.

The L2 assembly supports two variants: ``"derived"`` (default) includes the
+ (xi^2/(1+xi^2)) omega Omega coupling required for the pressure-gradient
consistency identity; ``"printed"`` omits it and exists as a negative
control for the verification suite.

Stepping is classical RK4 with a CFL guard computed from the transport
speeds |(xi^2 G - V)/(1+xi^2)| (in y) and |(G + V) xi| (in xi), remainder
advection included.  Boundary rows are masked: u and omega are evolved on
interior nodes only, with the wedge faces and strip ends held at zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .background import BackgroundBundle, SeedParams, blowup_time, build_bundle
from .elliptic import EllipticOperator, apply_operator
from .energy import WeightSpec, energy_Ek, x_sigma
from .errors import CeilingError, CflError, ConfigError
from .grid import ScalarField, WedgeGrid, adapted_Zx, diff_xi, symmetrize_xi


@dataclass
class RhsBreakdown:
    """Term-by-term right-hand side (arrays on the full grid)."""

    L1: np.ndarray
    M1: np.ndarray
    L2: np.ndarray
    M2: np.ndarray
    du_dt: np.ndarray
    dom_dt: np.ndarray
    heuristic: bool


def _interior_mask(shape) -> np.ndarray:
    m = np.zeros(shape)
    m[1:-1, 1:-1] = 1.0
    return m


def eval_rhs(u: ScalarField, omega: ScalarField, psi: ScalarField,
             bundle: BackgroundBundle, l2_variant: str = "derived") -> RhsBreakdown:
    """Assemble L1, M1, L2, M2 and the masked time derivatives."""
    if l2_variant not in ("derived", "printed"):
        raise ConfigError(f"unknown l2_variant {l2_variant!r}")
    g = u.grid
    xi = g.xi[None, :]
    q = xi**2
    e = 1.0 + q

    # remainder derivatives (grid FD, scaled forms only)
    Zxu = adapted_Zx(u).values
    du_xi = diff_xi(u).values
    Dxiu = du_xi / xi
    xiu = xi * du_xi

    Zxw = adapted_Zx(omega).values
    dw_xi = diff_xi(omega).values
    xiw = xi * dw_xi

    Zxp = adapted_Zx(psi).values
    dp_xi = diff_xi(psi).values
    xip = xi * dp_xi

    B = bundle
    xiV = q * B.DxiV          # xi V_xi
    xiG = q * B.DxiG
    xiU = q * B.DxiU
    xiOm = q * B.DxiOmega

    uu, ww, pp = u.values, omega.values, psi.values

    L1 = (0.5 * B.V * uu - (B.G + B.V) * xiu + (B.V - q * B.G) / e * Zxu
          + 0.5 * (B.U - 4.0 * xiU - 2.0 * (q - 1.0) / e * B.ZxU) * pp
          + 0.5 * (B.U + 2.0 * B.ZxU) * xip
          + 0.5 * (q / e * B.U - 2.0 * xiU) * Zxp)

    M1 = (0.5 * uu * pp + 0.5 * uu * (xip + q / e * Zxp)
          - pp * (2.0 * xiu + (q - 1.0) / e * Zxu)
          + (Zxu * xip - xiu * Zxp))

    L2 = (10.0 / 3.0 * (e * B.DxiU + B.ZxU) * uu
          + 10.0 / 3.0 * B.U * (e * Dxiu + Zxu)
          + (e * (2.0 * xiV - 3.0 * e * xiG) - 6.0 * B.G) / (3.0 * e) * ww
          + ((5.0 * q + 3.0) * B.ZxV + 6.0 * q * B.V) / (3.0 * e) * ww
          + (B.V - q * B.G) / e * Zxw - (B.G + B.V) * xiw
          + (2.0 * (q - 1.0) / e * B.Omega - 2.0 * xiOm
             - (q - 1.0) / e * B.ZxOmega) * pp
          + ((q - 1.0) / e * B.Omega - xiOm) * Zxp
          + B.ZxOmega * xip)
    if l2_variant == "derived":
        L2 = L2 + q / e * ww * B.Omega

    M2 = (10.0 / 3.0 * (e * Dxiu + Zxu) * uu
          + (q - 1.0) / e * (Zxp + 2.0 * pp) * ww
          - (Zxp + 2.0 * pp) * xiw
          + (xip - (q - 1.0) / e * pp) * Zxw)

    mask = _interior_mask(uu.shape)
    du = 2.0 / 3.0 * (L1 + M1) * mask
    dw = 2.0 / 3.0 * (L2 + M2) * mask
    return RhsBreakdown(L1=L1, M1=M1, L2=L2, M2=M2, du_dt=du, dom_dt=dw,
                        heuristic=B.heuristic)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

@dataclass
class SimConfig:
    seed: SeedParams = SeedParams()
    extension: str = "match-v"
    l2_variant: str = "derived"
    cfl: float = 0.4
    ceiling: float = 1e8
    resymmetrize: bool = True
    k_energy: int = 2
    sigma: float = 1.25
    weight: WeightSpec = dc_field(default_factory=WeightSpec)


@dataclass
class RemainderState:
    t: float
    u: ScalarField
    omega: ScalarField
    psi: ScalarField
    diagnostics: dict = dc_field(default_factory=dict)


def make_state(grid: WedgeGrid, op: EllipticOperator, amplitude: float,
               t: float = 0.0) -> RemainderState:
    """Even, face-vanishing bump initial data of the given amplitude.

    u0 and psi0 are x^4 e^{-x^2} (1 - xi^2)^2 profiles (negligible at the
    strip ends) and omega0 is the discrete image of psi0 under the
    operator, so solve(omega0) reproduces psi0 to solver precision.
    """
    X, XI = grid.mesh()
    prof = X**4 * np.exp(-(X**2)) * (1.0 - XI**2) ** 2
    u = ScalarField(grid, amplitude * prof, parity_x="even", parity_xi="even")
    psi = ScalarField(grid, amplitude * prof, parity_x="even", parity_xi="even")
    omega = apply_operator(psi)
    return RemainderState(t=t, u=u, omega=omega, psi=psi)


def transport_speeds(state: RemainderState, bundle: BackgroundBundle) -> tuple:
    """Max advection speeds (a_y, a_xi), background plus remainder."""
    g = state.u.grid
    xi = g.xi[None, :]
    q = xi**2
    e = 1.0 + q
    from .elliptic import reconstruct_vg
    v, gg = reconstruct_vg(state.psi)
    a_y = np.max(np.abs((q * bundle.G - bundle.V) / e)) \
        + np.max(np.abs((q * gg.values - v.values) / e))
    a_xi = np.max(np.abs((bundle.G + bundle.V) * xi)) \
        + np.max(np.abs((gg.values + v.values) * xi))
    return float(a_y), float(a_xi)


def cfl_limit(state: RemainderState, bundle: BackgroundBundle,
              cfg: SimConfig) -> float:
    a_y, a_xi = transport_speeds(state, bundle)
    g = state.u.grid
    lims = []
    if a_y > 0:
        lims.append(g.h_x / a_y)
    if a_xi > 0:
        lims.append(g.h_xi / a_xi)
    return cfg.cfl * min(lims) if lims else np.inf


class _BundleCache:
    """Tiny per-run cache of background bundles keyed by stage time."""

    def __init__(self, provider: Callable, cap: int = 8):
        self.provider = provider
        self.cap = cap
        self._store: dict = {}

    def __call__(self, t: float) -> BackgroundBundle:
        key = round(float(t), 12)
        if key not in self._store:
            if len(self._store) >= self.cap:
                self._store.pop(next(iter(self._store)))
            self._store[key] = self.provider(t)
        return self._store[key]


def step(state: RemainderState, dt: float, op: EllipticOperator,
         cfg: SimConfig, bundles: Callable) -> RemainderState:
    """One RK4 step; psi is re-solved from omega at every stage."""
    grid = state.u.grid
    b0 = bundles(state.t)
    limit = cfl_limit(state, b0, cfg)
    if dt > limit:
        raise CflError(f"dt = {dt:.3e} exceeds CFL limit {limit:.3e}")

    def rate(t_stage, u_vals, w_vals):
        u = state.u.like(u_vals)
        w = state.omega.like(w_vals)
        psi = op.solve(w)
        rhs = eval_rhs(u, w, psi, bundles(t_stage), cfg.l2_variant)
        return rhs.du_dt, rhs.dom_dt

    u0, w0 = state.u.values, state.omega.values
    k1u, k1w = rate(state.t, u0, w0)
    k2u, k2w = rate(state.t + 0.5 * dt, u0 + 0.5 * dt * k1u, w0 + 0.5 * dt * k1w)
    k3u, k3w = rate(state.t + 0.5 * dt, u0 + 0.5 * dt * k2u, w0 + 0.5 * dt * k2w)
    k4u, k4w = rate(state.t + dt, u0 + dt * k3u, w0 + dt * k3w)
    u1 = u0 + dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
    w1 = w0 + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    u_f = state.u.like(u1)
    w_f = state.omega.like(w1)
    if cfg.resymmetrize:
        u_f = symmetrize_xi(u_f)
        w_f = symmetrize_xi(w_f)
    ceiling = max(np.max(np.abs(u_f.values)), np.max(np.abs(w_f.values)))
    if ceiling > cfg.ceiling:
        raise CeilingError(f"field magnitude {ceiling:.3e} exceeds ceiling")
    psi_f = op.solve(w_f)
    return RemainderState(t=state.t + dt, u=u_f, omega=w_f, psi=psi_f)


@dataclass
class SimTrajectory:
    rows: list
    final: RemainderState
    status: str
    config: SimConfig


def run(state: RemainderState, op: EllipticOperator, cfg: SimConfig,
        t_end: float, dt: float | None = None, n_log: int = 10,
        bundle_provider: Callable | None = None) -> SimTrajectory:
    """March to t_end, logging energy diagnostics in n_log blocks.

    Failures (CFL, ceiling, elliptic) terminate the march but return the
    partial trajectory with the failure recorded in ``status``.
    """
    if bundle_provider is None:
        def bundle_provider(t):
            return build_bundle(cfg.seed, t, state.u.grid, cfg.extension)
    bundles = _BundleCache(bundle_provider)
    T = blowup_time(cfg.seed)
    if dt is None:
        dt = 0.8 * cfl_limit(state, bundles(state.t), cfg)
        if not np.isfinite(dt) or dt <= 0:
            dt = (t_end - state.t) / max(n_log, 1) / 10.0
    n_steps = max(1, int(np.ceil((t_end - state.t) / dt)))
    dt = (t_end - state.t) / n_steps
    log_every = max(1, n_steps // max(n_log, 1))

    rows = []
    status = "completed"

    def log_row(st: RemainderState):
        Ek = energy_Ek(st.u, st.omega, st.psi, cfg.k_energy, cfg.weight)
        Y = float(np.sqrt(Ek))
        Xs = float(x_sigma(st.t, Y, T, cfg.sigma)) if st.t < T else float("nan")
        b = bundles(st.t)
        a_y, a_xi = transport_speeds(st, b)
        g = st.u.grid
        cfl_now = dt * max(a_y / g.h_x, a_xi / g.h_xi)
        row = {"t": st.t, "E_k": Ek, "Y": Y, "X_sigma": Xs,
               "sup_u": float(np.max(np.abs(st.u.values))),
               "sup_omega": float(np.max(np.abs(st.omega.values))),
               "cfl": float(cfl_now), "status": "ok", "gronwall_ratio": float("nan")}
        if rows and rows[-1]["Y"] > 0 and st.t > rows[-1]["t"]:
            dY = (Y - rows[-1]["Y"]) / (st.t - rows[-1]["t"])
            row["gronwall_ratio"] = float(dY * (T - st.t) / Y) if Y > 0 else float("nan")
        rows.append(row)

    log_row(state)
    try:
        for i in range(n_steps):
            state = step(state, dt, op, cfg, bundles)
            if (i + 1) % log_every == 0 or i + 1 == n_steps:
                log_row(state)
    except (CflError, CeilingError) as exc:
        status = f"failed: {exc.__class__.__name__}"
        if rows:
            rows[-1]["status"] = status
    return SimTrajectory(rows=rows, final=state, status=status, config=cfg)


def write_sim_csv(traj: SimTrajectory, path) -> None:
    cols = ["t", "E_k", "Y", "X_sigma", "sup_u", "sup_omega", "cfl", "status"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in traj.rows:
            fh.write(",".join(
                r["status"] if c == "status" else f"{r[c]:.17g}" for c in cols)
                + "\n")
