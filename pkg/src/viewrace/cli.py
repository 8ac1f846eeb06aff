"""Command-line front end: ``viewrace <command> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 non-convergence,
4 internal verification failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import export
from .bestresponse import (BracketFailure, VerificationFailed, best_response,
                           cost_quadrature, verify_best_response)
from .calibrate import DegenerateSeries, estimate_lambda
from .dynamics import simulate, trajectory_rows
from .equilibrium import (NonConvergence, OrderViolation, PreconditionError,
                          best_response_iteration, epsilon_equilibrium, symmetric_equilibrium_for)
from .finitehorizon import GridInsufficient, finite_horizon_value
from .model import (ControlLevel, GameConfig, ScenarioError, Strategy, load_scenario,
                    threshold_profile, validate)
from .montecarlo import McConfig, mc_convergence_report, mc_run, sample_rows, sup_error, thread_limit
from .sweeps import KINDS, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_VERIFY = 0, 2, 3, 4

log = logging.getLogger("viewrace")


class ConfigError(Exception):
    pass


def _load(args, *, need_infinite=None) -> GameConfig:
    if not args.scenario:
        raise ConfigError("--scenario is required")
    config = load_scenario(args.scenario)
    if getattr(args, "tau", None) is not None:
        config = GameConfig(config.players, config.u_min, config.u_max, args.tau)
    problems = validate(config)
    if problems:
        raise ConfigError("invalid scenario " + str(args.scenario) + ":\n  " + "\n  ".join(problems))
    if need_infinite is True and not config.infinite:
        raise ConfigError("this command needs an infinite-horizon scenario")
    if need_infinite is False and config.infinite:
        raise ConfigError("this command needs a finite horizon (set horizon = finite and tau, or --tau)")
    return config


def _epsilon_applicable(config: GameConfig) -> bool:
    lam = config.players[0].lam
    g = [pl.gamma for pl in config.players]
    return (config.n >= 2 and all(pl.lam == lam for pl in config.players)
            and all(a > b for a, b in zip(g, g[1:])) and lam > g[0])


def _equilibrium(config: GameConfig, method: str, p_eps: float | None, tol: float,
                 max_rounds: int):
    if method == "auto":
        if config.is_symmetric:
            method = "symmetric"
        elif _epsilon_applicable(config):
            method = "epsilon"
        else:
            method = "iterate"
    if method == "symmetric":
        return symmetric_equilibrium_for(config)
    if method == "epsilon":
        return epsilon_equilibrium(config, p_eps)
    return best_response_iteration(config, max_rounds=max_rounds, tol=tol,
                                   workers=thread_limit())


def _profile(config: GameConfig, args):
    if args.thresholds:
        vals = [float(v) for v in args.thresholds.split(",")]
        if len(vals) == 1:
            vals *= config.n
        if len(vals) != config.n:
            raise ConfigError(f"--thresholds needs 1 or {config.n} values")
        return threshold_profile(vals)
    if args.profile == "all-min":
        return (Strategy.constant(ControlLevel.MIN),) * config.n
    if args.profile == "all-max":
        return (Strategy.constant(ControlLevel.MAX),) * config.n
    if config.infinite:
        return _equilibrium(config, "auto", None, args.tol, 50).profile
    # finite horizon: use the stationary equilibrium of the discounted game
    inf_cfg = GameConfig(config.players, config.u_min, config.u_max)
    if validate(inf_cfg):
        raise ConfigError("equilibrium profile needs p > 0; pass --thresholds instead")
    return _equilibrium(inf_cfg, "auto", None, args.tol, 50).profile


def _player(config: GameConfig, args) -> int:
    i = args.player - 1
    if not 0 <= i < config.n:
        raise ConfigError(f"--player must lie in 1..{config.n}")
    return i


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(args) -> int:
    config = _load(args)
    profile = _profile(config, args)
    traj = simulate(config, profile)
    path = export.write_csv(_out(args) / "trajectory.csv", export.trajectory_header(config.n),
                            trajectory_rows(traj, config, args.sample_dt))
    print(f"segments: {len(traj.segments)}")
    print(f"saturation time (x >= 1 - {traj.tol_x:g}): {traj.t_saturation:.9g} d")
    if config.infinite:
        bound = max(math.exp(-pl.p * traj.t_saturation)
                    * (config.u_max * pl.lam + pl.gamma * (config.u_max - config.u_min)) / pl.p
                    for pl in config.players)
        print(f"tail bound beyond saturation: {bound:.3g}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_best_response(args) -> int:
    config = _load(args, need_infinite=True)
    i = _player(config, args)
    profile = _profile(config, args)
    res = best_response(config, i, profile)
    print(res.summary())
    out = _out(args)
    export.write_csv(out / "best_response.csv", ["interval", "x_lo", "x_hi", "level", "K"], res.rows())
    export.write_csv(out / "value_function.csv", export.VALUE_HEADER, res.value_function.rows())
    if args.verify:
        rep = verify_best_response(config, i, profile, res, args.verify, args.seed, args.tol)
        print(f"verified against {rep.n_alternatives} alternatives "
              f"(value gap {rep.value_gap:.3g}, best alternative {rep.best_alternative_cost:.9g})")
    return EXIT_OK


def cmd_equilibrium(args) -> int:
    config = _load(args, need_infinite=True)
    res = _equilibrium(config, args.method, args.p, args.tol, args.max_rounds)
    print(res.summary())
    export.write_csv(_out(args) / "equilibrium.csv", export.EQUILIBRIUM_HEADER, res.rows())
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    config = _load(args)
    profile = _profile(config, args)
    out = _out(args)
    if args.M_list:
        ms = [int(float(m)) for m in args.M_list.split(",")]
        rep = mc_convergence_report(config, profile, ms, args.reps, args.seed)
        print(rep.summary())
        export.write_csv(out / "mc_summary.csv", export.MC_SUMMARY_HEADER, rep.rows())
        return EXIT_OK
    mc = McConfig(args.M, args.reps, args.seed, args.sample_dt)
    paths = mc_run(config, profile, mc)
    errs = np.array([sup_error(pth, config, profile) for pth in paths])
    std = float(errs.std(ddof=1)) if errs.size > 1 else math.nan
    print(f"M={mc.M} reps={mc.replications} seed={mc.seed}")
    print(f"mean sup error {errs.mean():.6g}, std {std:.6g}, max {errs.max():.6g}")
    print(f"fraction of replications within 0.05: {np.mean(errs <= 0.05):.3f}")
    if mc.replications == 1:
        print("warning: single replication: error estimates have very wide variance")
    export.write_csv(out / "mc_summary.csv", export.MC_SUMMARY_HEADER,
                     [[mc.M, float(errs.mean()), std]])
    if args.write_paths:
        header = ["t"] + [f"xhat_{k}" for k in range(1, config.n + 1)]
        for r, pth in enumerate(paths):
            export.write_csv(out / f"mc_rep_{r:04d}.csv", header, sample_rows(pth, mc.sample_dt))
    return EXIT_OK


def cmd_finite_horizon(args) -> int:
    config = _load(args, need_infinite=False)
    i = _player(config, args)
    profile = _profile(config, args)
    fv = finite_horizon_value(config, i, profile, n_grid=args.grid)
    print(f"player {i + 1}: {len(fv.pieces)} time pieces over horizon {config.horizon:g} d")
    for k, pc in enumerate(fv.pieces):
        print(f"  piece {k}: t in [{pc.t_lo:.6g}, {pc.t_hi:.6g}], a={pc.a:g}, "
              f"match defect {pc.match_defect:.3g}, interpolation defect {pc.interp_defect:.3g}")
    v0 = fv(config.z_total, config.horizon)
    print(f"V(z, tau) = {v0:.9g}   (cost quadrature {cost_quadrature(config, profile, i).value:.9g})")
    export.write_csv(_out(args) / "fh_surface.csv", export.SURFACE_HEADER, fv.surface_rows())
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if not args.input:
        raise ConfigError("--input is required")
    path = Path(args.input)
    try:
        data = np.genfromtxt(path, delimiter=",", names=True)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        series = list(zip(data["t"], data["views"]))
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: need columns t, views") from exc
    fit = estimate_lambda(series, args.viewer_base, args.u_assumed)
    print(f"lambda_hat = {fit.lambda_hat:.9g} /day")
    print(f"z_hat      = {fit.z_hat:.9g}")
    print(f"rms residual = {fit.rms_residual:.3g}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load(args) if args.kind == "custom" else None
    sweep = run_sweep(args.kind, config, args.gamma)
    out = _out(args)
    name = f"sweep_{args.kind}.csv"
    export.write_csv(out / name, sweep.columns, sweep.rows())
    export.write_text(out / f"sweep_{args.kind}.gp", export.gnuplot_script(
        name, sweep.columns, title=f"switching threshold vs rival rate ({args.kind})",
        xlabel="a_{-i} (1/day)", ylabel="x_0", output=f"sweep_{args.kind}.png"))
    for col, vals in sweep.curves.items():
        print(f"{col}: x0 from {vals[0]:.6f} (a={sweep.a_minus[0]:g}) "
              f"to {vals[-1]:.6f} (a={sweep.a_minus[-1]:g})")
    print(f"wrote {out / name}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario file (INI)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=1)
    common.add_argument("--tol", type=float, default=1e-6)
    common.add_argument("-v", "--verbose", action="store_true")

    prof = argparse.ArgumentParser(add_help=False)
    prof.add_argument("--thresholds", help="comma-separated thresholds, one per player or one shared")
    prof.add_argument("--profile", choices=("equilibrium", "all-min", "all-max"),
                      default="equilibrium")

    ap = argparse.ArgumentParser(prog="viewrace", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common, prof], help="fluid trajectory CSV")
    p.add_argument("--sample-dt", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("best-response", parents=[common, prof], help="best response of one player")
    p.add_argument("--player", type=int, default=1, help="1-based player index")
    p.add_argument("--verify", type=int, default=0, metavar="N",
                   help="check against N random alternative strategies")
    p.set_defaults(func=cmd_best_response)

    p = sub.add_parser("equilibrium", parents=[common], help="Nash equilibrium report")
    p.add_argument("--method", choices=("auto", "symmetric", "epsilon", "iterate"), default="auto")
    p.add_argument("--p", type=float, help="discount used to measure epsilon")
    p.add_argument("--max-rounds", type=int, default=50)
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("montecarlo", parents=[common, prof], help="finite-M stochastic validation")
    p.add_argument("--M", type=int, default=10_000)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--M-list", help="comma-separated increasing sizes for a convergence table")
    p.add_argument("--sample-dt", type=float)
    p.add_argument("--write-paths", action="store_true", help="one CSV per replication")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("finite-horizon", parents=[common, prof], help="finite-horizon value surface")
    p.add_argument("--player", type=int, default=1)
    p.add_argument("--tau", type=float, help="override the scenario horizon (days)")
    p.add_argument("--grid", type=int, default=1000)
    p.set_defaults(func=cmd_finite_horizon)

    p = sub.add_parser("calibrate", parents=[common], help="fit lambda to a viewcount series")
    p.add_argument("--input", help="CSV with columns t, views")
    p.add_argument("--viewer-base", type=float, required=True, metavar="M")
    p.add_argument("--u-assumed", type=float, default=1.0)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sweep", parents=[common], help="threshold vs rival-rate sweeps")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--gamma", type=float, default=70.0, help="cost rate for the preset sweeps")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ScenarioError, PreconditionError, OrderViolation, DegenerateSeries) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except VerificationFailed as exc:
        print(f"verification failed: {exc.report.reason}", file=sys.stderr)
        return EXIT_VERIFY
    except (BracketFailure, GridInsufficient) as exc:
        print(f"internal check failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
