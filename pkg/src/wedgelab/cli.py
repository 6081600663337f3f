"""Command-line interface.

Subcommands map one-to-one onto the library's main entry points:

  ridge      integrate the face system, optionally fit the blow-up time
  verify     run the reduction/identity suite over a refinement ladder
  elliptic   manufactured-solution and consistency checks of the solver
  simulate   march the remainder system and log energy diagnostics
  energy     evaluate the initial energy of a seed
  bootstrap  envelope closure check for given (C_lin, C_nl, sigma)
  compat     face compatibility / flatness obstruction report

Options resolve in three layers: built-in defaults, then a JSON config file
(--config; either flat keys or grouped under the subcommand name), then
explicit flags.  The effective configuration is echoed as one sorted JSON
line so runs are reproducible from their logs.  Output files (--out DIR)
have fixed names and carry no timestamps.

Exit codes: 0 success, 2 configuration errors (argparse uses the same
code), 3 numerical failures, 4 failed verification.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import verify
from .background import SeedParams
from .corpus import GaussPoly, PolyFactor, default_corpus
from .elliptic import EllipticOperator, mms_error, mms_forcing, \
    measure_elliptic_constant
from .energy import (EnvelopeParams, bernoulli_envelope, bootstrap_check,
                     envelope_integrate, initial_energy, write_envelope_csv,
                     x_sigma)
from .errors import EXIT_OK, ConfigError, VerificationError, WedgeError, \
    exit_code_for
from .grid import WedgeGrid
from .ridge import (closed_form_ridge, fit_blowup_time, integrate_ridge,
                    write_trajectory_csv)
from .simulate import SimConfig, make_state, run, write_sim_csv

_BREAK_TOKENS = ("n1-factor", "div-printed", "l2-printed")


def _apply_thread_env() -> None:
    """Honour WEDGELAB_THREADS by seeding the usual BLAS/OpenMP knobs.

    Best-effort only: libraries already initialised in this process may
    ignore late changes.
    """
    n = os.environ.get("WEDGELAB_THREADS")
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, n)


def _effective(args, defaults: dict) -> dict:
    """Merge defaults <- config file <- explicit flags, echo, and return."""
    eff = dict(defaults)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}")
        section = data.get(args.command, data) if isinstance(data, dict) else None
        if not isinstance(section, dict):
            raise ConfigError("config file must contain a JSON object")
        unknown = set(section) - set(defaults)
        if unknown:
            raise ConfigError(
                f"unknown config keys for {args.command}: {sorted(unknown)}")
        eff.update(section)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            eff[key] = val
    print("config: " + json.dumps({"command": args.command, **eff},
                                  sort_keys=True))
    return eff


def _outdir(args) -> str | None:
    out = getattr(args, "out", None)
    if out:
        os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_ridge(args) -> int:
    eff = _effective(args, {"a": 6.0, "b": 1.0, "t_end": 0.9, "n_out": 400})
    t_end = eff["t_end"]
    traj = integrate_ridge(U0=eff["b"], V0=eff["a"], t_end=t_end,
                           n_out=int(eff["n_out"]))
    U_cf, V_cf = closed_form_ridge(traj.t[-1], eff["a"], eff["b"])
    print(f"ridge: t = {traj.t[-1]:.12g} status = {traj.status}")
    print(f"ridge: V = {traj.V[-1]:.12g} (closed form {V_cf:.12g})")
    print(f"ridge: U = {traj.U[-1]:.12g} (closed form {U_cf:.12g})")
    if traj.status == "escaped":
        print(f"ridge: escaped at t = {traj.t_escape:.12g}")
    if args.fit_blowup:
        # refit on the solver's own steps (they cluster toward the blow-up),
        # integrating past the nominal horizon so the escape event can fire
        horizon = max(t_end, 2.0 * 6.0 / max(abs(eff["a"]), 1e-12))
        dense = integrate_ridge(U0=eff["b"], V0=eff["a"], t_end=horizon,
                                n_out=None)
        if dense.status != "escaped":
            print("ridge: no blow-up detected on the horizon "
                  "(U0 != 0 keeps the face fields bounded); skipping fit")
        else:
            fit = fit_blowup_time(dense)
            print(f"ridge: blow-up fit T = {fit.T_est:.12g} "
                  f"c = {fit.c_est:.12g} misfit = {fit.residual:.3e}")
    out = _outdir(args)
    if out:
        write_trajectory_csv(traj, os.path.join(out, "ridge_trajectory.csv"))
        print(f"wrote {os.path.join(out, 'ridge_trajectory.csv')}")
    return EXIT_OK


def cmd_verify(args) -> int:
    eff = _effective(args, {"levels": 2})
    variants = {"div_variant": "corrected", "n1_variant": "corrected",
                "l2_variant": "derived"}
    if args.break_check:
        if args.break_check not in _BREAK_TOKENS:
            raise ConfigError(
                f"unknown --break token {args.break_check!r}; "
                f"choose from {_BREAK_TOKENS}")
        key = {"n1-factor": "n1_variant", "div-printed": "div_variant",
               "l2-printed": "l2_variant"}[args.break_check]
        variants[key] = "printed"
    levels = 3 if args.full else int(eff["levels"])
    rows = verify.reduction_suite(levels=levels, **variants)

    by_check: dict = {}
    for r in rows:
        by_check.setdefault(r["check"], []).append(r)
    for name, group in by_check.items():
        tag = "PASS" if group[0]["passed"] else "FAIL"
        if len(group) > 1:
            res = [g["residual"] for g in group]
            ratios = " ".join(f"{res[i - 1] / res[i]:.2f}"
                              for i in range(1, len(res)) if res[i] > 0)
            print(f"check {name}: residual {res[0]:.3e} -> {res[-1]:.3e} "
                  f"(ratios {ratios}) {tag}")
        else:
            print(f"check {name}: residual {group[0]['residual']:.3e} {tag}")
    out = _outdir(args)
    if out:
        verify.write_suite_csv(rows, os.path.join(out, "verification_report.csv"))
        print(f"wrote {os.path.join(out, 'verification_report.csv')}")
    failing = sorted({r["check"] for r in rows if not r["passed"]})
    if failing:
        raise VerificationError("identity checks failed: " + ", ".join(failing))
    print("verification suite: all checks passed")
    return EXIT_OK


def cmd_elliptic(args) -> int:
    eff = _effective(args, {"ny": 65, "K": 15, "y_min": -6.0, "y_max": 6.0})
    grid = WedgeGrid.log(eff["y_min"], eff["y_max"], int(eff["ny"]),
                         int(eff["K"]))
    op = EllipticOperator(grid)
    psi_star, omega_star = mms_forcing(
        GaussPoly([1.0], 0.5), PolyFactor([1.0, 0.0, -2.0, 0.0, 1.0]), grid)
    err = mms_error(op, psi_star, omega_star)
    print(f"elliptic: grid {grid.nx} x {grid.nxi} (h_y = {grid.h_x:.4g}, "
          f"h_xi = {grid.h_xi:.4g})")
    print(f"elliptic: manufactured-solution error = {err:.6e}")
    probes = [p for p in default_corpus() if p.name.startswith("x2g")]
    cd = measure_elliptic_constant(op, probes)
    print(f"elliptic: inversion constant estimate C = {cd['C_delta']:.6g}")
    out = _outdir(args)
    if out and args.export_matrix:
        path = os.path.join(out, "matrix.csv")
        op.export_matrix(path)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    eff = _effective(args, {
        "amplitude": 1e-3, "t_end": 0.05, "ny": 65, "K": 15,
        "y_min": -6.0, "y_max": 6.0, "dt": None, "a": 6.0, "b": 1.0,
        "extension": "match-v", "l2_variant": "derived", "n_log": 5,
    })
    grid = WedgeGrid.log(eff["y_min"], eff["y_max"], int(eff["ny"]),
                         int(eff["K"]))
    op = EllipticOperator(grid)
    cfg = SimConfig(seed=SeedParams(A=eff["a"], B=eff["b"]),
                    extension=eff["extension"], l2_variant=eff["l2_variant"])
    state = make_state(grid, op, eff["amplitude"])
    traj = run(state, op, cfg, eff["t_end"], dt=eff["dt"],
               n_log=int(eff["n_log"]))
    last = traj.rows[-1]
    print(f"simulate: t = {last['t']:.12g} E_k = {last['E_k']:.6e} "
          f"sup|u| = {last['sup_u']:.6e} status = {traj.status}")
    if eff["amplitude"] == 0.0:
        if last["sup_u"] < 1e-12 and last["sup_omega"] < 1e-12:
            print("simulate: forcing-free OK (zero state preserved)")
        else:
            raise VerificationError(
                "zero remainder did not stay zero under a pure background")
    out = _outdir(args)
    if out:
        write_sim_csv(traj, os.path.join(out, "sim_trajectory.csv"))
        print(f"wrote {os.path.join(out, 'sim_trajectory.csv')}")
    return EXIT_OK


def cmd_energy(args) -> int:
    eff = _effective(args, {"a": 1.0, "b": 1.0, "x_cut": 40.0,
                            "r_def": "aniso-trig", "seed_shape": "cubic-r3"})
    seed = SeedParams(A=eff["a"], B=eff["b"], r_def=eff["r_def"],
                      seed_shape=eff["seed_shape"])
    rep = initial_energy(seed, x_cut=eff["x_cut"])
    print(f"energy: E(0) = {rep.value:.12g}")
    print(f"energy: tail converged = {rep.tail_converged} "
          f"(fraction {rep.tail_fraction:.3e}, slope {rep.tail_slope:.3f})")
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    eff = _effective(args, {"c_lin": 1.0, "c_nl": 0.0, "sigma": 1.25,
                            "T": 1.0})
    res = bootstrap_check(eff["c_lin"], eff["c_nl"], eff["sigma"], eff["T"])
    print(f"bootstrap: sigma = {res.sigma:.6g} eps0 = {res.eps0:.6g} "
          f"trivial = {res.trivial}")
    p = EnvelopeParams(T=eff["T"], C_lin=eff["c_lin"], C_nl=eff["c_nl"],
                       sigma=eff["sigma"], Y0=1.0)
    ts = np.linspace(0.0, 0.9 * eff["T"], 181)
    t_num, Y_num, status = envelope_integrate(p, ts)
    if eff["c_nl"] == 0.0:
        diff = float(np.max(np.abs(Y_num - bernoulli_envelope(p, t_num))))
        print(f"bootstrap: closed-form match, max |Y_num - Y_exact| = {diff:.3e}")
    out = _outdir(args)
    if out:
        path = os.path.join(out, "envelope.csv")
        write_envelope_csv(path, t_num, Y_num,
                           x_sigma(t_num, Y_num, eff["T"], eff["sigma"]),
                           status)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_compat(args) -> int:
    eff = _effective(args, {"a": 1.0, "b": 1.0, "a1": 0.1, "m": 2,
                            "t0": 0.0, "xi0": 1.0})
    seed = SeedParams(A=eff["a"], B=eff["b"], A1=eff["a1"], m=int(eff["m"]),
                      r_def="aniso-poly")
    xs = np.array([0.5, 0.75, 1.0, 1.5, 2.0])
    rep = verify.compatibility_evolution(seed, xs, xi0=eff["xi0"],
                                         t0=eff["t0"])
    i1 = int(np.argmin(np.abs(xs - 1.0)))
    print(f"compat: flat seed = {rep.flat} "
          f"(max |U_xixi| = {np.max(np.abs(rep.U_xixi)):.3e})")
    print(f"compat: identity mismatch sup = {np.max(rep.mismatch):.3e}")
    print(f"compat: family rate sup = {np.max(np.abs(rep.family_rate)):.3e}")
    print(f"compat: reduced demand at x = 1: {rep.reduced[i1]:.12g}")
    print(f"compat: obstruction sup = {np.max(rep.obstruction):.6g}")
    out = _outdir(args)
    if out:
        path = os.path.join(out, "compat.csv")
        verify.write_compat_csv(rep, path)
        print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="directory for CSV outputs")

    p = argparse.ArgumentParser(prog="wedgelab",
                                description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("ridge", parents=[common],
                       help="integrate the face system")
    r.add_argument("--a", type=float, help="initial V on the face")
    r.add_argument("--b", type=float, help="initial U on the face")
    r.add_argument("--t-end", dest="t_end", type=float)
    r.add_argument("--n-out", dest="n_out", type=int)
    r.add_argument("--fit-blowup", action="store_true")
    r.set_defaults(func=cmd_ridge)

    v = sub.add_parser("verify", parents=[common],
                       help="reduction/identity suite")
    v.add_argument("--levels", type=int, help="refinement levels (2 or 3)")
    v.add_argument("--full", action="store_true",
                   help="three levels regardless of --levels")
    v.add_argument("--break", dest="break_check", metavar="TOKEN",
                   help="deliberately break one identity "
                        f"({', '.join(_BREAK_TOKENS)})")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("elliptic", parents=[common],
                       help="elliptic solver checks")
    e.add_argument("--ny", type=int)
    e.add_argument("--K", type=int)
    e.add_argument("--y-min", dest="y_min", type=float)
    e.add_argument("--y-max", dest="y_max", type=float)
    e.add_argument("--export-matrix", action="store_true")
    e.set_defaults(func=cmd_elliptic)

    s = sub.add_parser("simulate", parents=[common],
                       help="march the remainder system")
    s.add_argument("--amplitude", type=float)
    s.add_argument("--t-end", dest="t_end", type=float)
    s.add_argument("--ny", type=int)
    s.add_argument("--K", type=int)
    s.add_argument("--y-min", dest="y_min", type=float)
    s.add_argument("--y-max", dest="y_max", type=float)
    s.add_argument("--dt", type=float)
    s.add_argument("--a", type=float, help="background seed amplitude A")
    s.add_argument("--b", type=float, help="background seed amplitude B")
    s.add_argument("--extension", choices=("match-v", "zero-blend"))
    s.add_argument("--l2-variant", dest="l2_variant",
                   choices=("derived", "printed"))
    s.add_argument("--n-log", dest="n_log", type=int)
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("energy", parents=[common],
                       help="initial energy of a seed")
    g.add_argument("--a", type=float)
    g.add_argument("--b", type=float)
    g.add_argument("--x-cut", dest="x_cut", type=float)
    g.add_argument("--r-def", dest="r_def",
                   choices=("ridge-x2", "aniso-poly", "aniso-trig"))
    g.add_argument("--seed-shape", dest="seed_shape",
                   choices=("cubic-3-6", "cubic-r3"))
    g.set_defaults(func=cmd_energy)

    b = sub.add_parser("bootstrap", parents=[common],
                       help="envelope closure check")
    b.add_argument("--c-lin", dest="c_lin", type=float)
    b.add_argument("--c-nl", dest="c_nl", type=float)
    b.add_argument("--sigma", type=float)
    b.add_argument("--T", dest="T", type=float)
    b.set_defaults(func=cmd_bootstrap)

    c = sub.add_parser("compat", parents=[common],
                       help="face compatibility report")
    c.add_argument("--a", type=float)
    c.add_argument("--b", type=float)
    c.add_argument("--a1", type=float, help="anisotropy amplitude")
    c.add_argument("--m", type=int, help="anisotropy exponent")
    c.add_argument("--t0", type=float)
    c.add_argument("--xi0", type=float)
    c.set_defaults(func=cmd_compat)
    return p


def main(argv=None) -> int:
    _apply_thread_env()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except WedgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
