"""Command-line front end (``cskam``)."""
from __future__ import annotations

import argparse
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .config import COMMANDS, RunConfig, load_config, validate
from .errors import ConfigError, ConservativeCase, InsufficientData, KAMError

log = logging.getLogger("cskam")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_RESOURCE = 0, 1, 2, 3

ARTIFACTS = ("table1", "fig_basins", "fig_tongues", "fig_existence", "fig_rotnum",
             "fig_drift_mu")


def pmap(fn, items, jobs: int = 1) -> list:
    """Ordered map, optionally over a process pool."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


class Run:
    """Output helper bound to a configuration."""

    def __init__(self, cfg: RunConfig, echo=print):
        self.cfg = cfg
        self.out = Path(cfg.output.dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.echo = echo

    def path(self, name: str) -> Path:
        return self.out / f"{self.cfg.output.prefix}{name}"

    def report(self, name: str, text: str):
        self.path(name).write_text(text)
        self.echo(text.rstrip("\n"))


def _exit_for(reason: str) -> int:
    return EXIT_RESOURCE if "resource_cap" in (reason or "") else EXIT_NONCONVERGED


def _initial_torus(cfg: RunConfig, source: str | None):
    if not source:
        return None
    K, _ = io.read_torus(source)
    return K


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg: RunConfig, source: str | None = None, echo=print) -> int:
    from .bundles import lyapunov_multipliers, stable_bundle
    from .newton import fine_grid_error, newton_step, solve

    run = Run(cfg, echo)
    model = cfg.model.build()
    initial = _initial_torus(cfg, source) or "cold"
    K, rep = solve(model, cfg.omega_value(), initial, cfg.solver_options(),
                   n_modes=cfg.solver.n_modes_init, cold_threshold=math.inf)
    summary = {
        "converged": rep.converged,
        "reason": rep.reason or "converged",
        "iterations": len(rep.iterations),
        "mu": K.mu,
        "mu_normalized": K.mu_normalized,
        "sup_error": rep.final_error,
        "n_modes": K.n_modes,
    }
    if rep.converged:
        summary["fine_grid_error"] = fine_grid_error(K)
        summary["sobolev_norms"] = {f"H{m}": v for m, v in K.sobolev_norms((1, 2, 3)).items()}
        try:
            _, _, diag = newton_step(K)
            summary["nondegeneracy_det"] = diag.nondegeneracy_det
        except KAMError as exc:
            summary["nondegeneracy_det"] = f"failed: {exc}"
    extra = {}
    if rep.converged and cfg.bundle.report and not K.conservative:
        bd = stable_bundle(K)
        mult = lyapunov_multipliers(None, K, cfg.bundle.n_iter, cfg.bundle.theta0)
        extra["bundle"] = {"min_angle": bd.min_angle, "argmin_theta": bd.argmin_theta,
                           "multipliers": list(mult),
                           "reducibility_residual": bd.reducibility_residual,
                           "metric": "euclidean (y, x)"}
        summary.update({f"bundle_{k}": v for k, v in extra["bundle"].items()})
    run.report("solve_report.txt", io.format_block("solve", summary))
    if rep.converged:
        io.write_torus(run.path("torus.json"), K, extra)
        return EXIT_OK
    return _exit_for(rep.reason)


def _continue(cfg: RunConfig, source: str | None, eps_end: float | None = None):
    from .continuation import continue_torus
    c = cfg.continuation
    model = cfg.model.build(epsilon=c.eps_start)
    initial = _initial_torus(cfg, source)
    return continue_torus(model, cfg.omega_value(), c.eps_start,
                          c.eps_end if eps_end is None else eps_end,
                          cfg.policy(), initial=initial)


def cmd_continue(cfg: RunConfig, source: str | None = None, echo=print) -> int:
    run = Run(cfg, echo)
    trace = _continue(cfg, source)
    io.write_trace(run.path("trace.tsv"), trace, cfg.output.timings)
    if trace.last_torus is not None:
        io.write_torus(run.path("torus.json"), trace.last_torus)
    reached = trace.records and trace.last_converged_epsilon >= cfg.continuation.eps_end
    run.report("continue_report.txt", io.format_block("continuation", {
        "records": len(trace.records),
        "last_converged_epsilon": trace.last_converged_epsilon,
        "failure_reason": trace.failure_reason or "none",
        "anomalies": trace.anomalies()}))
    if reached:
        return EXIT_OK
    return _exit_for(trace.failure_reason)


def cmd_breakdown(cfg: RunConfig, source: str | None = None, echo=print) -> int:
    from .continuation import estimate_breakdown
    run = Run(cfg, echo)
    trace = _continue(cfg, source)
    io.write_trace(run.path("trace.tsv"), trace, cfg.output.timings)
    c = cfg.continuation
    try:
        est = estimate_breakdown(trace, c.m, c.min_points, c.growth)
    except InsufficientData as exc:
        echo(f"breakdown: {exc}")
        return EXIT_NONCONVERGED
    text = io.estimate_block(est)
    others = [m for m in c.sobolev_orders if m != c.m]
    cross = {}
    for m in others:
        try:
            cross[f"m{m}"] = estimate_breakdown(trace, m, c.min_points, c.growth).epsilon_crit
        except InsufficientData:
            cross[f"m{m}"] = float("nan")
    text += "\n" + io.format_block("cross_check", {
        **cross, "last_converged_epsilon": trace.last_converged_epsilon,
        "failure_reason": trace.failure_reason or "none"})
    run.report("estimate.txt", text)
    return EXIT_OK


def cmd_greene(cfg: RunConfig, source: str | None = None, echo=print) -> int:
    from .continuation import continue_torus
    from .greene import greene_estimate, trace_tongue

    run = Run(cfg, echo)
    g = cfg.greene
    model = cfg.model.build(epsilon=0.0)
    lam = model.conformal_factor
    trace = continue_torus(model, cfg.omega_value(), 0.0, max(g.eps_grid), cfg.policy())
    est = greene_estimate(model, cfg.omega_value(), g.eps_grid, q_max=g.q_max, q_min=g.q_min,
                          threshold=g.threshold, persistence=g.persistence, tol=g.tol,
                          n_samples=g.n_samples, tori=trace.tori)
    rows = [io.orbit_row(d.orbit, d.epsilon, lam) + [d.value]
            for d in est.diagnostics if d.orbit is not None]
    io.write_table(run.path("orbits.tsv"), io.ORBIT_COLUMNS + ("indicator",), rows)
    tongue_rows = []
    for p, q in g.tongues:
        tg = trace_tongue(cfg.model.build(), int(p), int(q), n_samples=g.tongue_samples)
        tongue_rows += [io.orbit_row(o, tg.epsilon, lam) for o in tg.orbit_family]
    if tongue_rows:
        io.write_table(run.path("tongues.tsv"), io.ORBIT_COLUMNS, tongue_rows)
    run.report("greene_estimate.txt", io.format_block("greene", {
        "epsilon_crit": est.epsilon_crit, "bracket": list(est.bracket),
        "method": est.method,
        "heuristic": est.method == "multiplier_defect"}))
    return EXIT_OK if est.method != "not_bracketed" else EXIT_NONCONVERGED


def cmd_basins(cfg: RunConfig, source: str | None = None, echo=print) -> int:
    from .dynamics import classify_basins
    run = Run(cfg, echo)
    b = cfg.basins
    basin = classify_basins(cfg.model.build(), b.n, (b.x_min, b.x_max), (b.y_min, b.y_max),
                            b.transient, b.kept, b.tol, b.mode, cfg.seed)
    io.write_pgm(run.path("basins.pgm"), basin.labels, basin.buckets)
    np.savetxt(run.path("basins_rho.tsv"), basin.rho, fmt="%.17g", delimiter="\t")
    run.report("basins_report.txt", io.format_block("basins", {
        "buckets": basin.buckets, "counts": basin.counts(), "unresolved": basin.unresolved}))
    return EXIT_OK


def cmd_bundle(cfg: RunConfig, source: str | None = None, echo=print) -> int:
    from .bundles import lyapunov_multipliers, stable_bundle
    from .fourier import grid

    run = Run(cfg, echo)
    if cfg.model.build().conformal_factor == 1.0:
        raise ConfigError("[model] lam: bundle analysis needs a dissipative map (lam < 1)")
    eps = cfg.model.epsilon
    trace = _continue(cfg, source, eps_end=eps)
    K = trace.last_torus
    if K is None or K.epsilon < eps:
        echo(f"bundle: no converged torus at epsilon={eps} ({trace.failure_reason})")
        return _exit_for(trace.failure_reason)
    try:
        bd = stable_bundle(K)
    except ConservativeCase as exc:
        raise ConfigError(str(exc)) from None
    mult = lyapunov_multipliers(None, K, cfg.bundle.n_iter, cfg.bundle.theta0)
    th = grid(K.n_modes)
    io.write_table(run.path("alpha.tsv"), ("theta", "alpha", "alpha_direct", "B"),
                   zip(th, bd.alpha.samples, bd.alpha_direct, bd.B.samples))
    run.report("bundle_report.txt", io.format_block("bundle", {
        "epsilon": K.epsilon, "min_angle": bd.min_angle, "argmin_theta": bd.argmin_theta,
        "multipliers": list(mult), "reducibility_residual": bd.reducibility_residual,
        "invariance_residual": bd.invariance_residual,
        "invariance_residual_c1": bd.invariance_residual_c1,
        "angle_agreement": bd.angle_agreement, "metric": "euclidean (y, x)"}))
    io.write_torus(run.path("torus.json"), K, {"bundle": {
        "min_angle": bd.min_angle, "argmin_theta": bd.argmin_theta,
        "multipliers": list(mult), "reducibility_residual": bd.reducibility_residual}})
    return EXIT_OK


def cmd_rotation_scan(cfg: RunConfig, source: str | None = None, echo=print) -> int:
    from .dynamics import rotation_vs_parameter
    run = Run(cfg, echo)
    s = cfg.scan
    values = np.linspace(s.start, s.stop, s.count)
    curve = rotation_vs_parameter(cfg.model.build(), values, s.y0, s.x0, s.parameter,
                                  s.transient, s.kept)
    io.write_curve(run.path("rotation.tsv"), curve.values, curve.rho, (s.parameter, "rho"))
    run.report("rotation_report.txt", io.format_block("rotation_scan", {
        "parameter": s.parameter, "monotone": curve.monotone,
        "decreasing": [list(d) for d in curve.decreasing],
        "plateaus": [list(p) for p in curve.plateaus]}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# reproduction scripts

TABLE1 = (("conservative", 1.0, 0.9716), ("dissipative", 0.9, 0.9721),
          ("dissipative", 0.5, 0.9792))


def _table1_row(args):
    kind, lam, reference, policy, with_greene = args
    from .continuation import continue_torus, estimate_breakdown
    from .greene import greene_estimate
    from .models import StandardMap
    model = StandardMap(lam=lam)
    trace = continue_torus(model, "golden", 0.0, 1.0, policy)
    e2 = estimate_breakdown(trace, 2)
    e3 = estimate_breakdown(trace, 3)
    greene = math.nan
    if with_greene:
        grid = [0.90, 0.92, 0.94, 0.96, 0.98, 1.0]
        greene = greene_estimate(model, "golden", grid, tori=trace.tori).epsilon_crit
    trace.tori = []
    return [kind, lam, e2.epsilon_crit, e2.beta, e3.epsilon_crit, greene, reference,
            trace.last_converged_epsilon], trace


def reproduce(artifact: str, cfg: RunConfig, echo=print) -> int:
    if artifact not in ARTIFACTS:
        raise ConfigError(f"artifact: unknown artifact id {artifact!r}; "
                          f"choose from {', '.join(ARTIFACTS)}")
    run = Run(cfg, echo)
    manifest = {"artifact": artifact}
    if artifact == "table1":
        policy = cfg.policy()
        results = pmap(_table1_row, [(k, l, r, policy, True) for k, l, r in TABLE1], cfg.jobs)
        rows = []
        for (row, trace), (kind, lam, _) in zip(results, TABLE1):
            rows.append(row)
            io.write_trace(run.path(f"table1_trace_lambda{lam}.tsv"), trace, cfg.output.timings)
        io.write_table(run.path("table1.tsv"),
                       ("case", "lambda", "eps_crit_m2", "beta_m2", "eps_crit_m3",
                        "eps_crit_greene", "reference", "last_converged"), rows)
        manifest["policy"] = {"max_step": policy.max_step, "mode_cap": policy.max_modes,
                              "omega": "golden"}
        echo("\n".join(f"{r[0]:12s} lambda={r[1]:<4} sobolev={r[2]:.5f} "
                       f"greene={r[5]:.5f} reference={r[6]}" for r in rows))
    elif artifact == "fig_basins":
        from .dynamics import classify_basins
        from .fourier import GOLDEN_MEAN
        from .models import StandardMap
        lam = 0.91
        model = StandardMap(lam=lam, epsilon=0.9, mu=2 * math.pi * (1 - lam) * GOLDEN_MEAN)
        b = cfg.basins
        basin = classify_basins(model, b.n, (b.x_min, b.x_max), (b.y_min, b.y_max),
                                b.transient, b.kept, b.tol, b.mode, cfg.seed)
        io.write_pgm(run.path("fig_basins.pgm"), basin.labels, basin.buckets)
        np.savetxt(run.path("fig_basins_rho.tsv"), basin.rho, fmt="%.17g", delimiter="\t")
        manifest["model"] = io.model_record(model)
        manifest["grid"] = {"n": b.n, "x": [b.x_min, b.x_max], "y": [b.y_min, b.y_max],
                            "transient": b.transient, "kept": b.kept, "mode": b.mode}
        echo(f"fig_basins: {basin.n_buckets} buckets {basin.buckets} counts {basin.counts()}")
    elif artifact == "fig_tongues":
        from .continuation import continue_torus
        from .errors import IncompleteTongue
        from .greene import trace_tongue
        from .models import StandardMap
        lam = 0.9
        eps_grid = np.round(np.arange(0.0, 0.55, 0.05), 10)
        rows = []
        for p, q in ((1, 3), (1, 2), (2, 3)):
            for eps in eps_grid:
                try:
                    tg = trace_tongue(StandardMap(lam=lam, epsilon=float(eps)), p, q, n_samples=32)
                    rows.append([p, q, float(eps), tg.mu_interval[0], tg.mu_interval[1]])
                except (IncompleteTongue, KAMError) as exc:
                    log.warning("tongue %d/%d at eps=%s: %s", p, q, eps, exc)
        io.write_table(run.path("fig_tongues.tsv"), ("p", "q", "epsilon", "mu_min", "mu_max"), rows)
        trace = continue_torus(StandardMap(lam=lam), "golden", 0.0, float(eps_grid[-1]), cfg.policy())
        io.write_table(run.path("fig_tongues_golden_drift.tsv"), ("epsilon", "mu"),
                       [[r.epsilon, r.mu] for r in trace.records])
        manifest["lambda"] = lam
        manifest["epsilon_grid"] = list(map(float, eps_grid))
    elif artifact == "fig_existence":
        from .continuation import ContinuationPolicy, existence_region_scan
        from .models import StandardMap
        policy = ContinuationPolicy(max_modes=min(cfg.continuation.mode_cap, 2 ** 12))
        for lam in (0.9, 0.1):
            reg = existence_region_scan(StandardMap(lam=lam), "golden", n=32, n_rays=32,
                                        policy=policy)
            np.savetxt(run.path(f"fig_existence_lambda{lam}.tsv"), reg.exists.astype(int),
                       fmt="%d", delimiter="\t")
            b = reg.boundary
            io.write_table(run.path(f"fig_existence_boundary_lambda{lam}.tsv"),
                           ("angle", "radius", "eps1", "eps2", "method"),
                           [[a, r, x, y, m] for a, r, (x, y), m in
                            zip(reg.ray_angles, reg.radii, b, reg.methods)])
            echo(f"fig_existence lambda={lam}: {int(reg.exists.sum())} of "
                 f"{reg.exists.size} cells; violations {reg.violations}")
        manifest["policy"] = {"mode_cap": policy.max_modes, "grid": 32, "rays": 32}
    elif artifact == "fig_rotnum":
        from .dynamics import rotation_vs_parameter
        from .models import NonTwistMap
        model = NonTwistMap(lam=0.9, epsilon=0.1, mu=0.1)
        values = np.linspace(-1.0, 1.0, 201)
        curve = rotation_vs_parameter(model, values, 0.0, 0.0, "a", 2000, 4000)
        io.write_curve(run.path("fig_rotnum.tsv"), curve.values, curve.rho, ("a", "rho"))
        manifest["model"] = io.model_record(model)
        manifest["decreasing"] = [list(d) for d in curve.decreasing]
        echo(f"fig_rotnum: decreasing intervals {curve.decreasing[:5]}")
    elif artifact == "fig_drift_mu":
        from .continuation import continue_torus
        from .models import StandardMap
        lams = [0.05 * k for k in range(1, 20)] + [0.99, 1.0]
        rows = []
        for lam in lams:
            trace = continue_torus(StandardMap(lam=round(lam, 10)), "golden", 0.0, 0.1, cfg.policy())
            rows.append([round(lam, 10), trace.records[-1].mu, trace.records[-1].mu_normalized])
        io.write_table(run.path("fig_drift_mu.tsv"), ("lambda", "mu", "mu_normalized"), rows)
        manifest["epsilon"] = 0.1
        echo("\n".join(f"lambda={r[0]:<5} mu_normalized={r[2]:.7f}" for r in rows))
    io.write_manifest(run.path(f"{artifact}_manifest.txt"), manifest)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

HANDLERS = {
    "solve": cmd_solve, "continue": cmd_continue, "breakdown": cmd_breakdown,
    "greene": cmd_greene, "basins": cmd_basins, "bundle": cmd_bundle,
    "rotation-scan": cmd_rotation_scan,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cskam", description=(
        "Invariant circles of conformally symplectic maps: Newton solves, "
        "continuation, breakdown estimates and dynamics tools."))
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "reproduce":
            p.add_argument("artifact", help=" | ".join(ARTIFACTS))
        p.add_argument("-c", "--config", help="run configuration file")
        p.add_argument("--family")
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--eps", type=float, help="epsilon of the model")
        p.add_argument("--mu", type=float)
        p.add_argument("--omega", help="preset name or angle in radians")
        p.add_argument("--eps-start", type=float)
        p.add_argument("--eps-end", type=float)
        p.add_argument("--out", help="output directory")
        p.add_argument("--from", dest="source", help="torus file used as initial guess")
        p.add_argument("--jobs", type=int)
        p.add_argument("--seed", type=int)
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    m = cfg.model
    if args.family is not None:
        m.family = args.family
    if args.lam is not None:
        m.lam = args.lam
    if args.eps is not None:
        m.epsilon = args.eps
    if args.mu is not None:
        m.mu = args.mu
    if args.omega is not None:
        try:
            cfg.omega = float(args.omega)
        except ValueError:
            cfg.omega = args.omega
    if args.eps_start is not None:
        cfg.continuation.eps_start = args.eps_start
    if args.eps_end is not None:
        cfg.continuation.eps_end = args.eps_end
    if args.out is not None:
        cfg.output.dir = args.out
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg.command = args.command
        cfg = _apply_overrides(cfg, args)
        validate(cfg, args.config or "<command line>")
        if args.command == "reproduce":
            return reproduce(args.artifact, cfg)
        return HANDLERS[args.command](cfg, args.source)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KAMError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
