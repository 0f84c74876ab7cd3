"""Command-line experiments.

Each subcommand reads a config (``--config`` file or preset name), runs one
experiment, and writes CSV tables, a JSON summary with one pass/fail entry per
acceptance item, and optionally a gnuplot script into ``--out``.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigError, DataGapError, KppLabError
from .io import write_csv, write_json, atomic_write_text

__all__ = ["main", "COMMANDS", "Outcome", "run_command"]


@dataclass
class Outcome:
    """What an experiment produced: scalar results, acceptance items and tables."""

    results: dict = field(default_factory=dict)
    acceptance: dict = field(default_factory=dict)
    tables: Dict[str, tuple] = field(default_factory=dict)  # name -> (header, rows)
    plots: List[str] = field(default_factory=list)

    def item(self, name: str, passed: bool, value, target: str):
        self.acceptance[name] = {"pass": bool(passed), "value": value, "target": target}

    @property
    def passed(self) -> bool:
        return all(v["pass"] for v in self.acceptance.values())


def _bundle(cfg: RunConfig, N: Optional[int] = None, richardson: Optional[bool] = None):
    from .spectral import speed_bundle

    sp = cfg["spectral"]
    return speed_bundle(cfg.coefficient(), N=N or sp["N"],
                        richardson=sp["richardson"] if richardson is None else richardson,
                        identity_tol=sp["identity_tol"])


def _bump(y):
    return np.where((y > 0) & (y < 3), (y * (3 - y)) ** 2, 0.0)


# ---------------------------------------------------------------------------
# experiments


def exp_speed(cfg: RunConfig) -> Outcome:
    from .spectral import adjoint_kernel, perturbed_eigenvalue

    out = Outcome()
    b = _bundle(cfg)
    k = adjoint_kernel(b)
    out.results.update(b.summary())
    lam = b.extrapolated["lambda_star"] if b.extrapolated else b.lambda_star
    c = b.extrapolated["c_star"] if b.extrapolated else b.c_star
    if cfg.is_homogeneous and abs(cfg["medium"]["g_mean"] - 1.0) < 1e-15:
        out.item("spectral_exactness", abs(lam - 1) <= 1e-8 and abs(c - 2) <= 1e-8,
                 {"lambda_star": lam, "c_star": c}, "lambda* = 1 +- 1e-8, c* = 2 +- 1e-8")
    r = b.residuals
    ok = (abs(r["gamma_prime_minus_c"]) <= 1e-6 and abs(r["kappa_nu_plus_c"]) <= 1e-8
          and abs(r["kappa_eff_identity_gap"]) <= 1e-6 and 1 + b.kappa_eff > 0)
    out.item("identities", ok, {k_: r[k_] for k_ in ("gamma_prime_minus_c", "kappa_nu_plus_c",
                                                     "kappa_eff_identity_gap")} | {"one_plus_kappa": 1 + b.kappa_eff},
             "|gamma'-c*| <= 1e-6, |<kappa nu> + c*| <= 1e-8, identity gap <= 1e-6, 1 + kappa > 0")
    if cfg.is_homogeneous:
        errs = {a: abs(perturbed_eigenvalue(b.nu, b.c_star, a) - a * a)
                for a in (0.01, 0.05, 0.1)}
        out.item("mu_alpha", max(errs.values()) <= 1e-8, errs, "|mu(alpha) - alpha^2| <= 1e-8")
    else:
        rem = abs(r["mu3"]) * 0.08**3
        quad = b.mu0 * 0.08**2
        out.item("mu_alpha", b.mu0 > 0 and rem <= 0.1 * quad, {"mu0": b.mu0, "mu3": r["mu3"]},
                 "mu0 > 0, cubic remainder <= 10% of the quadratic term at alpha = 0.08")
    x = b.psi_star.x
    out.tables["fields"] = (("x", "psi", "kappa", "nu", "chi0", "eta"),
                            np.column_stack([x, b.psi_star(x), b.kappa_drift(x), b.nu(x), b.chi0(x), k.eta(x)]))
    out.plots.append("plot 'fields.csv' using 1:2 with lines title 'psi', '' using 1:4 with lines title 'nu'")
    return out


def _nonlinear(cfg: RunConfig, b, t_end: float, snapshot_times=()):
    from .rd_solver import MovingFrame, run_nonlinear

    s = cfg["solver"]
    frame = MovingFrame(left_edge=-s["back"], speed=b.c_star, h=s["h"], width=s["width"])
    return run_nonlinear(cfg.initial_data(), cfg.coefficient(), cfg.reaction(), frame, s["dt"], t_end,
                         trace_every=s["trace_every"], eps=(cfg["delay"]["eps"],), snapshot_times=snapshot_times)


def exp_simulate(cfg: RunConfig) -> Outcome:
    out = Outcome()
    b = _bundle(cfg, richardson=False)
    run = _nonlinear(cfg, b, cfg["solver"]["horizon"])
    e = cfg["delay"]["eps"]
    tr = run.trace(e)
    fin = run.final
    u_left = float(np.interp(0.0, fin.x, fin.u)) if fin.x[0] <= 0 else float("nan")
    out.results.update({"c_star": b.c_star, "t_end": fin.t, "meta": run.meta, "u_at_0": u_left})
    out.item("invariant_region", float(fin.u.min()) >= 0 and float(fin.u.max()) <= 1,
             {"min": float(fin.u.min()), "max": float(fin.u.max())}, "0 <= u <= 1")
    if math.isfinite(u_left):
        out.item("invasion", u_left >= 0.99, u_left, "u(t_end, 0) >= 0.99")
    out.tables["trace"] = (("t", "X", "Y"), np.column_stack([tr.times, tr.X, tr.Y]))
    out.plots.append("plot 'trace.csv' using 1:2 with lines title 'X(t)'")
    return out


def exp_delay_fit(cfg: RunConfig) -> Outcome:
    from .analysis import FrontTrace, delay_fit

    out = Outcome()
    b = _bundle(cfg, richardson=False)
    d = cfg["delay"]
    run = _nonlinear(cfg, b, d["t_max"])
    tr = run.trace(d["eps"])
    fit = delay_fit(tr, b, (d["t_min"], d["t_max"]))
    # Y_eps gets its own fit; the two intercepts are reported side by side without a claimed relation
    try:
        fit_y = delay_fit(FrontTrace(tr.eps, tr.times, tr.Y, tr.Y), b, (d["t_min"], d["t_max"])).as_dict()
    except DataGapError:
        fit_y = None
    target = 1.5 / b.lambda_star
    out.results.update({"fit": fit.as_dict(), "fit_Y": fit_y, "prediction": target, "c_star": b.c_star,
                        "meta": run.meta})
    if cfg.is_homogeneous:
        out.item("delay_slope", abs(fit.slope - 1.5) <= 0.25, fit.slope, "1.5 +- 0.25")
    else:
        out.item("delay_slope", abs(fit.slope - target) <= 0.2 * target, fit.slope, f"{target:.6g} +- 20%")
    out.tables["trace"] = (("t", "X", "delay"), np.column_stack([tr.times, tr.X, tr.delay(b.c_star)]))
    out.plots.append("set logscale x; plot 'trace.csv' using 1:3 with lines title 'c* t - X(t)'")
    return out


def exp_linear(cfg: RunConfig) -> Outcome:
    from .analysis import power_law_fit, sigma_scan
    from .rd_solver import conserved_integral, linear_weight, solve_linear_dirichlet

    out = Outcome()
    b = _bundle(cfg, richardson=False)
    li, s = cfg["linear"], cfg["solver"]
    g = cfg.coefficient()
    ts = np.linspace(li["t_min"], li["t_end"], li["n_out"])
    run = solve_linear_dirichlet(g, _bump, b, li["t_end"], dt=s["dt"], h=s["h"], width=s["width"], output_times=ts)
    fit = power_law_fit(run.times, run.sup_w(), (li["t_min"], li["t_end"]))
    tol = 0.05 if cfg.is_homogeneous else 0.10
    out.item("linear_decay", abs(fit.slope + 1.5) <= tol, fit.slope, f"-1.5 +- {tol}")
    rows, best, widest = sigma_scan(run, li["sigmas"], (li["t_min"], li["t_end"]))
    out.item("lower_bound", best.minimum > 0 and best.ratio <= 25, best.as_dict(), "min > 0, max/min <= 25")
    out.results.update({"decay_fit": fit.as_dict(), "sigma_scan": [r.as_dict() for r in rows],
                        "widest_sigma": widest.sigma if widest else None})
    tc = li["conservation_t_end"]
    tcs = np.linspace(0.0, tc, 21)
    F = linear_weight(b, tc, dt=s["dt"], h=s["h"], width=200.0, output_times=tcs)
    crun = solve_linear_dirichlet(g, _bump, b, tc, dt=s["dt"], h=s["h"], width=200.0, output_times=tcs)
    I = np.array([conserved_integral(st, F, b.nu) for st in crun.states])
    drift = float(np.max(np.abs(I / I[0] - 1)))
    out.item("conservation", drift <= 1e-4, drift, "|I(t)/I(0) - 1| <= 1e-4")
    out.results["weight_fixed_point_gap"] = F.fixed_point_gap
    out.tables["linear"] = (("t", "sup_w"), np.column_stack([run.times, run.sup_w()]))
    out.tables["conservation"] = (("t", "I"), np.column_stack([crun.times, I]))
    out.plots.append("set logscale xy; plot 'linear.csv' using 1:2 with lines title 'sup w'")
    return out


def exp_shifted(cfg: RunConfig) -> Outcome:
    from .rd_solver import ShiftedFrameConfig, solve_shifted_dirichlet

    out = Outcome()
    b = _bundle(cfg, richardson=False)
    sh = cfg["shifted"]
    fc = ShiftedFrameConfig(b.c_star, b.lambda_star)
    ts = np.linspace(sh["tau_min"], sh["tau_end"], 91)
    run = solve_shifted_dirichlet(cfg.coefficient(), _bump, b, fc, sh["tau_end"], dt=sh["dt"], h=sh["h"],
                                  width=sh["width"], output_times=ts)
    lo, hi = run.window_statistic(sh["k"], sh["y_min"])
    ratio = float(hi.max() / lo.min())
    out.item("shifted_window", lo.min() > 0 and ratio <= 25, {"min": float(lo.min()), "max": float(hi.max()),
                                                              "ratio": ratio}, "positive, max/min <= 25")
    out.results.update({"r": fc.r, "T": fc.T, "max_omega": fc.check(sh["tau_end"])})
    out.tables["window"] = (("tau", "W_min", "W_max"), np.column_stack([run.taus, lo, hi]))
    out.plots.append("plot 'window.csv' using 1:2 with lines, '' using 1:3 with lines")
    return out


def exp_theta_app(cfg: RunConfig) -> Outcome:
    from .asymptotics import build_theta_app, leading_order_constant, residual_sweep
    from .rd_solver import ShiftedFrameConfig
    from .spectral import adjoint_kernel

    out = Outcome()
    th = cfg["theta_app"]
    b = _bundle(cfg, richardson=False)
    fc = ShiftedFrameConfig(b.c_star, b.lambda_star)
    exp = build_theta_app(b, adjoint_kernel(b), th["chi_bar"], th["sigma"], n_colloc=th["n_colloc"],
                          p0_form=th["p0_form"])
    taus = np.geomspace(th["tau_min"], th["tau_max"], th["n_tau"])
    res, fit = residual_sweep(exp, b, fc, taus, th["sigma"], hx=th["hx"])
    out.item("theta_app_residual", fit.slope <= -2.5, fit.slope, "fitted exponent <= -2.5")
    # bound constant on the default grid and on a grid of half the size
    tb = np.geomspace(100.0, 1000.0, 5)
    C1, _ = leading_order_constant(exp, tb, th["sigma"])
    b2 = _bundle(cfg, N=cfg["spectral"]["N"] // 2, richardson=False)
    exp2 = build_theta_app(b2, adjoint_kernel(b2), th["chi_bar"], th["sigma"], n_colloc=th["n_colloc"] // 2,
                           p0_form=th["p0_form"])
    C2, _ = leading_order_constant(exp2, tb, th["sigma"])
    rel = abs(C1 - C2) / max(abs(C1), 1e-300)
    out.item("bound_constant", rel <= 0.2, {"C": C1, "C_coarse": C2, "relative_change": rel}, "stable within 20%")
    out.results.update({"beta1": exp.beta1, "beta2": exp.beta2, "kappa": exp.kappa_eff,
                        "solvability": exp.solvability, "fit": fit.as_dict()})
    out.tables["residual"] = (("tau", "residual"), np.column_stack([taus, res]))
    z = np.linspace(0.0, 6.0, 301)
    out.tables["profiles"] = (("z", "v0", "p0"), exp.dump_z(z))
    out.plots.append("set logscale xy; plot 'residual.csv' using 1:2 with linespoints")
    return out


def exp_front(cfg: RunConfig) -> Outcome:
    from .asymptotics import convergence_to_front, pulsating_front
    from .rd_solver import MovingFrame, run_nonlinear

    out = Outcome()
    fr = cfg["front"]
    s = cfg["solver"]
    b = _bundle(cfg, richardson=False)
    g = cfg.coefficient()
    prof = pulsating_front(g, cfg.reaction(), b, fr["relax_horizon"], h=s["h"], n_phase=fr["n_phase"],
                           width=s["width"], back=s["back"])
    lam_fit = prof.fit["lambda_fit"]
    per_ok = prof.periodicity_residual <= 1e-3
    out.item("pulsating_front", per_ok and abs(lam_fit - b.lambda_star) <= 0.02 * b.lambda_star
             and prof.fit["rss_ratio"] >= 2,
             {"periodicity_residual": prof.periodicity_residual, "lambda_fit": lam_fit,
              "rss_ratio": prof.fit["rss_ratio"]}, "residual <= 1e-3, lambda within 2%, RSS ratio >= 2")
    ts = np.linspace(fr["t_min"], fr["t_end"], fr["n_out"])
    frame = MovingFrame(left_edge=-s["back"], speed=b.c_star, h=s["h"], width=s["width"])
    run = run_nonlinear(cfg.initial_data(), g, cfg.reaction(), frame, prof.meta["dt"], fr["t_end"],
                        trace_every=10.0, snapshot_times=ts)
    W = fr["shift_window"] / b.c_star
    cs = convergence_to_front(run, prof, b, (-W, W))
    d = cs.distance
    tol = 0.02 if cfg.is_homogeneous else 0.05
    inside = bool(np.all((cs.xi > -W) & (cs.xi < W)))
    decreasing = bool(np.all(np.diff(d) <= 0))
    out.item("front_convergence", decreasing and d[-1] <= tol and inside and cs.edge_hits == 0,
             {"final_distance": float(d[-1]), "decreasing": decreasing, "xi_inside": inside},
             f"decreasing, final <= {tol}, xi inside the window")
    out.results.update({"B": prof.B, "fit": prof.fit, "anchor": prof.meta["anchor"]})
    out.tables["distance"] = (("t", "xi", "distance"), cs.as_rows())
    out.plots.append("set logscale y; plot 'distance.csv' using 1:3 with linespoints")
    return out


def exp_bbm(cfg: RunConfig) -> Outcome:
    from .bbm import BbmConfig, estimate_u

    out = Outcome()
    bb = cfg["bbm"]
    bc = BbmConfig(cfg.coefficient(), 0.0, bb["T"], bb["dt"], bb["trials"], cfg["run"]["seed"], bb["max_particles"])
    xs = np.linspace(bb["x_min"], bb["x_max"], bb["n_x"])
    est = estimate_u(bc, xs, threads=cfg["run"]["threads"])
    excess = float(np.max(est.diff - 3 * est.stderr - 0.01))
    out.item("bbm_vs_pde", excess <= 0, {"max_diff": float(est.diff.max()), "excess": excess},
             "max |u_hat - u_pde| <= 3 SE + 0.01")
    out.results.update(est.meta)
    out.tables["bbm"] = (("x", "u_hat", "stderr", "u_pde", "diff"), est.as_rows())
    out.plots.append("plot 'bbm.csv' using 1:2:3 with yerrorbars, '' using 1:4 with lines")
    return out


def exp_check(cfg: RunConfig) -> Outcome:
    """Spectral identities plus fast solver invariants on short runs."""
    from .rd_solver import MovingFrame, run_nonlinear

    out = exp_speed(cfg)
    out.tables.clear()
    out.plots.clear()
    g = cfg.coefficient()
    f = cfg.reaction()
    rng = np.random.default_rng(cfg["run"]["seed"])
    frame = MovingFrame(left_edge=-20.0, speed=0.0, h=0.05, width=60.0, shift_policy="none")
    worst_cmp, lo, hi = -np.inf, np.inf, -np.inf
    for _ in range(5):
        a = rng.uniform(0, 1, frame.n_nodes) * (np.abs(frame.x) < 5)
        bvec = np.minimum(1.0, a + rng.uniform(0, 0.5, frame.n_nodes) * (np.abs(frame.x) < 5))
        ra = run_nonlinear(a, g, f, frame, 0.01, 2.0, trace_every=1.0)
        rb = run_nonlinear(bvec, g, f, frame, 0.01, 2.0, trace_every=1.0)
        worst_cmp = max(worst_cmp, float(np.max(ra.final.u - rb.final.u)))
        lo, hi = min(lo, float(ra.final.u.min())), max(hi, float(ra.final.u.max()))
    out.item("comparison_principle", worst_cmp <= 1e-10, worst_cmp, "u <= v + 1e-10 for ordered data")
    out.item("invariant_region", lo >= 0 and hi <= 1, {"min": lo, "max": hi}, "0 <= u <= 1")
    return out


COMMANDS: Dict[str, Callable[[RunConfig], Outcome]] = {
    "speed": exp_speed,
    "simulate": exp_simulate,
    "delay-fit": exp_delay_fit,
    "linear": exp_linear,
    "shifted": exp_shifted,
    "theta-app": exp_theta_app,
    "front": exp_front,
    "bbm": exp_bbm,
    "check": exp_check,
}


HELP = {
    "speed": "principal eigenpair, minimal speed and derived periodic fields",
    "simulate": "nonlinear run with level-position traces",
    "delay-fit": "fit of the logarithmic front delay",
    "linear": "Dirichlet decay, lower-bound scan and conserved integral",
    "shifted": "window statistic in the log-shifted frame",
    "theta-app": "multiscale approximate solution and its residual sweep",
    "front": "pulsating profile and distance to the shifted front",
    "bbm": "branching Brownian motion against the PDE",
    "check": "spectral identities and fast solver invariants",
}


def _origin(exc: BaseException) -> str:
    """Name of the innermost kpplab module in the traceback of ``exc``."""
    name = "kpplab"
    tb = exc.__traceback__
    pkg = str(Path(__file__).parent)
    while tb is not None:
        fn = tb.tb_frame.f_code.co_filename
        if fn.startswith(pkg):
            name = "kpplab." + Path(fn).stem
        tb = tb.tb_next
    return name


def _plot_text(outcome: Outcome, command: str) -> str:
    lines = [f"# gnuplot script for '{command}'; run with: gnuplot -p plot.gp", "set datafile separator ','",
             "set key autotitle columnhead"]
    return "\n".join(lines + outcome.plots) + "\n"


def run_command(command: str, cfg: RunConfig, out_dir) -> Outcome:
    out_dir = Path(out_dir)
    t0 = time.perf_counter()
    outcome = COMMANDS[command](cfg)
    elapsed = time.perf_counter() - t0
    for name, (header, rows) in outcome.tables.items():
        write_csv(out_dir / f"{name}.csv", header, rows)
    summary = {
        "command": command,
        "config": cfg.as_dict(),
        "config_source": cfg.source,
        "results": outcome.results,
        "acceptance": outcome.acceptance,
        "passed": outcome.passed,
        "metadata": {"version": __version__, "elapsed_seconds": elapsed,
                     "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")},
    }
    write_json(out_dir / "summary.json", summary)
    atomic_write_text(out_dir / "config.ini", cfg.to_ini())
    if cfg["run"]["plot_script"] and outcome.plots:
        atomic_write_text(out_dir / "plot.gp", _plot_text(outcome, command))
    return outcome


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kpplab", description="KPP front experiments in periodic media.")
    p.add_argument("--version", action="version", version=f"kpplab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HELP[name])
        sp.add_argument("--config", default="homogeneous", help="config file or preset name")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. solver.dt=0.005 (repeatable)")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="random seed (64-bit unsigned)")
        sp.add_argument("--threads", type=int, default=None, help="worker threads for Monte Carlo trials")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides, seed=args.seed, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        outcome = run_command(args.command, cfg, args.out)
    except KppLabError as exc:
        print(f"error ({type(exc).__name__} from {_origin(exc)}): {exc}", file=sys.stderr)
        return 1
    for name, item in outcome.acceptance.items():
        print(f"{'PASS' if item['pass'] else 'FAIL'}  {name}: {item['value']}  (target {item['target']})")
    print(f"outputs written to {Path(args.out).resolve()}")
    return 0 if outcome.passed else 3


if __name__ == "__main__":
    sys.exit(main())
