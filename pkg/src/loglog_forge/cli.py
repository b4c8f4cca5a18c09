"""Command-line front end.

Exit status: 0 on success, 1 on a computation error (its code is printed on
stderr), 2 on a usage or configuration error."""
from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import ConfigError, ForgeError
from .io import read_columns, write_csv, write_snapshot_binary, write_snapshot_csv


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _threads(arg) -> int:
    if arg is not None:
        if arg < 1:
            raise ConfigError("--threads must be a positive integer")
        return arg
    env = os.environ.get("LOGLOG_FORGE_THREADS")
    if env is None:
        return 1
    try:
        n = int(env)
    except ValueError:
        raise ConfigError("LOGLOG_FORGE_THREADS must be a positive integer") from None
    if n < 1:
        raise ConfigError("LOGLOG_FORGE_THREADS must be a positive integer")
    return n


def _map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(threads, len(items))) as ex:
        return list(ex.map(fn, items))


def _outdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ------------------------------------------------------------- profile

def _profile_item(args):
    from .profiles import profile_invariants, solve_profile, truncate
    b, eta = args
    p = solve_profile(b, eta)
    tp = truncate(p)
    inv = profile_invariants(tp)
    return b, p.y, p.P, p.P_prime, tp.y, tp.Psi, inv


def cmd_profile(a):
    out = _outdir(a.out)
    res = _map(_profile_item, [(b, a.eta) for b in a.b], _threads(a.threads))
    summary = []
    for b, y, P, Pp, yt, psi, inv in res:
        write_csv(out / f"profile_b{b:g}.csv", ["y", "P", "P_prime"], zip(y, P, Pp))
        write_csv(out / f"psi_b{b:g}.csv", ["y", "Re_psi", "Im_psi"], zip(yt, psi.real, psi.imag))
        summary.append([b, a.eta, inv.mass_excess, inv.energy_1d, inv.momentum, inv.closeness])
    write_csv(out / "profiles.csv", ["b", "eta", "mass_excess", "energy", "momentum",
                                     "closeness"], summary)
    return 0


# ----------------------------------------------------------- radiation

def _radiation_item(args):
    from .radiation import solve_zeta
    b, eta, dps = args
    s = solve_zeta(b, eta=eta, dps=dps, check_plateau=False)
    return b, s


def cmd_radiation(a):
    from .radiation import RADIATION_HEADER, gamma_slope_fit, radiation_row
    out = _outdir(a.out)
    res = _map(_radiation_item, [(b, a.eta, a.dps) for b in a.b], _threads(a.threads))
    write_csv(out / "radiation.csv", RADIATION_HEADER, [radiation_row(s) for _, s in res])
    if a.dump:
        for b, s in res:
            write_csv(out / f"zeta_b{b:g}.csv", ["r", "ReZ", "ImZ"],
                      zip(s.r, s.Z.real, s.Z.imag))
    if len(res) >= 3:
        rep = gamma_slope_fit([(b, s.Gamma_b) for b, s in res])
        write_csv(out / "gamma_fit.csv", ["slope", "intercept"], [[rep.slope, rep.intercept]])
    return 0


# ------------------------------------------------------------ spectral

def cmd_spectral(a):
    from .spectral import COERCIVITY_HEADER, coercivity_delta
    out = _outdir(a.out)
    rows = [coercivity_delta(a.L, n).as_row() for n in a.N]
    write_csv(out / "spectral.csv", COERCIVITY_HEADER, rows)
    return 0


# ------------------------------------------------------------ simulate

def _setup(cfg):
    from .evolution import SimConfig, synthesize_initial
    from .geometry import RadialGrid, make_metric
    metric = make_metric(cfg["metric"]["kind"])
    g = cfg["grid"]
    grid = RadialGrid(metric, g["r_lo"], g["r_hi"], g["n"])
    e = cfg["evolution"]
    spec = {"nu": e["nu"], "width": e["width"]} if e["nu"] else None
    u0 = synthesize_initial(grid, e["lambda0"], e["r0"], e["gamma0"], e["b0"], spec,
                            e["alpha_star"], strict=e["strict"])
    sim = SimConfig(c_dt=e["c_dt"], t_max=e["t_max"], lam_floor_cells=e["lam_floor_cells"],
                    grad_ceiling=e["grad_ceiling"], max_steps=e["max_steps"],
                    record_every=e["record_every"], snapshot_every=e["snapshot_every"],
                    tracking=e["tracking"], focusing=e["focusing"])
    return grid, u0, sim


def cmd_simulate(a):
    from .evolution import run
    cfg = cfgmod.load(a.config)
    out = _outdir(a.out or cfg["output"]["dir"])
    grid, u0, sim = _setup(cfg)
    traj = run(sim, u0)
    rows = [row + [traj.grad[k], traj.local_energy[k]] for k, row in enumerate(traj.rows())]
    write_csv(out / "trajectory.csv", traj.header + ["grad", "E_local"], rows)
    binary = cfg["output"]["snapshot_format"] == "binary"
    snaps = [(0.0, u0.values)] + traj.snapshots + [(traj.times[-1], traj.fields[-1])]
    for k, (t, v) in enumerate(snaps):
        if binary:
            write_snapshot_binary(out / f"snapshot_{k:04d}.rnls", grid.nodes, v)
        else:
            write_snapshot_csv(out / f"snapshot_{k:04d}.csv", t, grid.nodes, v)
    write_csv(out / "run.csv", ["stop_reason", "steps", "t_end", "flags"],
              [[traj.stop_reason, traj.steps[-1], traj.times[-1], len(traj.flags)]])
    print(f"stop: {traj.stop_reason} after {traj.steps[-1]} steps, t = {traj.times[-1]:.6g}")
    return 0


def cmd_check_init(a):
    from .modulation import decompose, regime_check
    cfg = cfgmod.load(a.config)
    out = _outdir(a.out or cfg["output"]["dir"])
    grid, u0, _ = _setup(cfg)
    st, ep = decompose(u0)
    led = regime_check(st, ep, u0, "A", alpha_star=cfg["evolution"]["alpha_star"])
    rows = [[c.name, "skipped" if c.passed is None else ("pass" if c.passed else "fail"),
             c.value, c.threshold, c.note] for c in led.conditions]
    write_csv(out / "check_init.csv", ["condition", "status", "value", "threshold", "note"], rows)
    for r in rows:
        print(f"{r[0]:8s} {r[1]:8s} value={r[2]:.6g} threshold={r[3]:.6g} {r[4]}")
    return 0


def cmd_fit(a):
    from .diagnostics import law_monitor, loglog_fit, s_clock
    out = _outdir(a.out)
    cols = read_columns(a.trajectory)
    t, lam, b = cols["t"], cols["lambda"], cols["b"]
    b0 = a.b0 if a.b0 is not None else float(b[0])
    fit = loglog_fit(t, cols["grad"])
    write_csv(out / "fit.csv", ["T_hat", "exponent", "ratio_lo", "ratio_hi", "loglog"],
              [[fit.T_hat, fit.exponent, fit.ratio_band[0], fit.ratio_band[1], fit.loglog]])
    ok = np.isfinite(b)
    if ok.any():
        s = s_clock(times=t, lams=lam, b0=b0)
        rep = law_monitor(s_series=s[ok], b=b[ok], lam=lam[ok], E_local=cols["E_local"][ok],
                          delta=a.delta, slack=(a.slack_lo, a.slack_hi))
        write_csv(out / "laws.csv", rep.header, rep.rows())
    print(f"T_hat = {fit.T_hat:.10g}, exponent = {fit.exponent:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="loglog-forge", description="log-log blow-up laboratory")
    p.add_argument("--threads", type=int, default=None, help="worker count for sweeps")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("profile", help="self-similar profile sweep")
    q.add_argument("--b", type=float, nargs="+", required=True)
    q.add_argument("--eta", type=float, default=0.01)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_profile)

    q = sub.add_parser("radiation", help="radiation and Gamma_b sweep")
    q.add_argument("--b", type=float, nargs="+", required=True)
    q.add_argument("--eta", type=float, default=0.01)
    q.add_argument("--dps", type=int, default=34)
    q.add_argument("--dump", action="store_true", help="also write the Z fields")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_radiation)

    q = sub.add_parser("spectral", help="coercivity report")
    q.add_argument("--L", type=float, default=20.0)
    q.add_argument("--N", type=int, nargs="+", default=[2000])
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_spectral)

    q = sub.add_parser("simulate", help="run from a config file")
    q.add_argument("--config", required=True)
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("check-init", help="A-condition ledger for the configured data")
    q.add_argument("--config", required=True)
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_check_init)

    q = sub.add_parser("fit", help="law monitors and log-log fit on a trajectory CSV")
    q.add_argument("--trajectory", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--b0", type=float, default=None)
    q.add_argument("--delta", type=float, default=0.25)
    q.add_argument("--slack-lo", type=float, default=0.5)
    q.add_argument("--slack-hi", type=float, default=2.0)
    q.set_defaults(func=cmd_fit)
    return p


def execute(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _threads(a.threads)
        return a.func(a)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except ForgeError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(execute())


if __name__ == "__main__":
    main()
