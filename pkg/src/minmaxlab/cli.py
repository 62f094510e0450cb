"""Command-line experiment runner.

Subcommands: simulate, flow, abelian, cycle, critical, montecarlo, apt-check,
portrait, reproduce, config-reference.  Exit codes: 0 success, 1 usage or
config error, 2 numerical divergence, 3 acceptance-check failure in reproduce.
The default output directory comes from --out-dir or $MINMAXLAB_OUT_DIR.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import algorithms, analysis, dynamics, output, plotting
from .config import (ConfigError, ExperimentConfig, load_toml, parse_experiment,
                     parse_problem, REFERENCE_CONFIG)
from .core import DivergenceError
from .experiments import experiment_names, run_experiment, run_simulation
from .problems import PolynomialPerturbation

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGED = 2
EXIT_CHECK_FAILED = 3


def _out_dir(args) -> Path:
    if args.out_dir:
        return Path(args.out_dir)
    env = os.environ.get("MINMAXLAB_OUT_DIR")
    return Path(env) if env else Path(".")


def _load_experiment(args) -> ExperimentConfig:
    raw = load_toml(args.config)
    return parse_experiment(raw)


def cmd_simulate(args) -> int:
    cfg = _load_experiment(args)
    try:
        run_simulation(cfg, _out_dir(args), seed=args.seed, quiet=args.quiet)
    except DivergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_flow(args) -> int:
    raw = load_toml(args.config)
    problem = parse_problem(raw.get("problem", {}), "problem")
    flow_raw = raw.get("flow", {})
    z0 = flow_raw.get("z0") or raw.get("run", {}).get("z0")
    if z0 is None:
        raise ConfigError("flow.z0", "missing initial point")
    T = float(flow_raw.get("T", 100.0))
    h = float(flow_raw.get("h_int", 1e-3))
    record_every = int(flow_raw.get("record_every", 10))
    try:
        path = dynamics.integrate_flow(problem, [float(v) for v in z0], T, h,
                                       record_every=record_every)
    except DivergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    csv = out / raw.get("outputs", {}).get("csv", "flow.csv")
    output.write_flow_csv(csv, path, problem.d1, problem.d2)
    if not args.quiet:
        print(f"[flow] {problem.label}: T={T}, h={h} -> {csv}")
    return EXIT_OK


def cmd_abelian(args) -> int:
    coeffs = {}
    for deg in range(1, 9):
        val = getattr(args, f"a{deg}")
        if val is not None:
            coeffs[deg] = val
    for spec in args.coeff or []:
        k, _, v = spec.partition("=")
        coeffs[int(k)] = float(v)
    if not coeffs:
        print("error: no coefficients given (use --a2 0.5 --a4 -0.25 ...)",
              file=sys.stderr)
        return EXIT_USAGE
    pert = PolynomialPerturbation(coeffs)
    print("h,I(h)")
    for h in np.geomspace(args.h_min, args.h_max, 20):
        print(f"{h:.6g},{analysis.abelian_integral(pert, h):.12g}")
    if args.h is not None:
        print(f"I({args.h:g}) = {analysis.abelian_integral(pert, args.h):.12g}")
    pred = analysis.predict_cycle_radius(pert)
    if pred.identically_zero:
        print("I identically zero (no even-degree coefficients)")
    elif pred.h_star is None:
        print("no positive root")
    else:
        print(f"h* = {pred.h_star:.9f}")
    return EXIT_OK


def cmd_cycle(args) -> int:
    raw = load_toml(args.config)
    problem = parse_problem(raw.get("problem", {}), "problem")
    cyc_raw = raw.get("cycle", {})
    source = cyc_raw.get("source", "flow")
    if source == "flow":
        z0 = cyc_raw.get("z0") or raw.get("flow", {}).get("z0")
        if z0 is None:
            raise ConfigError("cycle.z0", "missing initial point")
        path = dynamics.integrate_flow(problem, [float(v) for v in z0],
                                       float(cyc_raw.get("T", 300.0)),
                                       float(cyc_raw.get("h_int", 5e-3)),
                                       record_every=int(cyc_raw.get("record_every", 2)))
        res = analysis.detect_cycle(path, burn_in=float(cyc_raw.get("burn_in", 0.5)))
    elif source == "trajectory":
        cfg = parse_experiment(raw)
        traj = algorithms.run(cfg.build_scheme(), cfg.problem, cfg.z0, cfg.schedule,
                              cfg.noise, cfg.horizon, record_every=cfg.record_every,
                              seed=cfg.seed if args.seed is None else args.seed)
        res = analysis.detect_cycle(traj, burn_in=float(cyc_raw.get("burn_in", 0.5)))
    else:
        raise ConfigError("cycle.source", f"unknown source {source!r}")
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"reason": res.reason,
               "cycle": res.cycle.to_json_dict() if res.cycle else None}
    dest = output.write_json(out / raw.get("outputs", {}).get("json", "cycle.json"),
                             payload)
    if not args.quiet:
        if res.cycle:
            print(f"[cycle] {res.reason}: mean radius {res.cycle.radius_mean:.5f}, "
                  f"period {res.cycle.period:.5f}, {res.cycle.stability} -> {dest}")
        else:
            print(f"[cycle] none ({res.reason}) -> {dest}")
    return EXIT_OK


def cmd_critical(args) -> int:
    raw = load_toml(args.config)
    problem = parse_problem(raw.get("problem", {}), "problem")
    crit_raw = raw.get("critical", {})
    box = crit_raw.get("box", [-2.0, 2.0, -2.0, 2.0])
    pts = analysis.find_critical_points(problem, tuple(float(v) for v in box),
                                        int(crit_raw.get("grid", 21)))
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    dest = output.write_json(out / raw.get("outputs", {}).get("json", "critical.json"),
                             {"critical_points": [p.to_json_dict() for p in pts]})
    if not args.quiet:
        for p in pts:
            loc = ", ".join(f"{v:.6f}" for v in p.location)
            print(f"[critical] ({loc}): {p.classification}")
        print(f"[critical] {len(pts)} point(s) -> {dest}")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    raw = load_toml(args.config)
    cfg = parse_experiment(raw)
    if cfg.montecarlo is None:
        raise ConfigError("montecarlo", "missing [montecarlo] table")
    mc = cfg.montecarlo
    rep = analysis.monte_carlo(
        cfg.scheme_name, cfg.problem, cfg.init_center, cfg.init_radius,
        cfg.noise, mc["runs"], cfg.horizon, cfg.schedule, mc["target"],
        mc["threshold"], seed=cfg.seed if args.seed is None else args.seed,
        scheme_hyper=cfg.scheme_hyper or None)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    dest = output.write_json(out / cfg.outputs.get("json", "montecarlo.json"),
                             rep.to_json_dict())
    if not args.quiet:
        print(f"[montecarlo] {rep.runs} runs: fraction converged "
              f"{rep.fraction_converged:.4f} ({rep.n_diverged} diverged) -> {dest}")
    return EXIT_OK


def cmd_apt_check(args) -> int:
    raw = load_toml(args.config)
    cfg = parse_experiment(raw)
    apt_raw = raw.get("apt", {})
    window = float(apt_raw.get("window", 5.0))
    t_values = [float(t) for t in apt_raw.get("at", [10.0, 20.0, 40.0])]
    seeds = apt_raw.get("seeds", [cfg.seed])
    devs = {}
    for seed in seeds:
        try:
            traj = algorithms.run(cfg.build_scheme(), cfg.problem, cfg.z0,
                                  cfg.schedule, cfg.noise, cfg.horizon,
                                  record_every=1, seed=int(seed))
        except DivergenceError as err:
            print(f"error: {err}", file=sys.stderr)
            return EXIT_DIVERGED
        devs[int(seed)] = {str(t): dynamics.apt_deviation(traj, cfg.problem, t, window)
                           for t in t_values}
    medians = {str(t): float(np.median([devs[s][str(t)] for s in devs]))
               for t in t_values}
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    dest = output.write_json(out / cfg.outputs.get("json", "apt_check.json"),
                             {"window": window, "at": t_values,
                              "per_seed": devs, "median": medians})
    if not args.quiet:
        print("[apt-check] median deviations: "
              + ", ".join(f"t={t}: {medians[str(t)]:.4g}" for t in t_values)
              + f" -> {dest}")
    return EXIT_OK


def cmd_portrait(args) -> int:
    raw = load_toml(args.config)
    spec = raw.get("portrait", {})
    box = tuple(float(v) for v in spec.get("box", [-2.0, 2.0, -2.0, 2.0]))
    if not (box[0] < box[1] and box[2] < box[3]):
        raise ConfigError("portrait.box", "box must be [xmin, xmax, ymin, ymax] "
                                          "with xmin < xmax and ymin < ymax")
    grid = int(spec.get("grid", 20))
    panels_raw = raw.get("panel", [])
    if not panels_raw:
        raise ConfigError("panel", "at least one [[panel]] table is required")
    panels = []
    for i, praw in enumerate(panels_raw):
        problem = parse_problem(praw, f"panel[{i}]")
        paths = []
        for j, traw in enumerate(praw.get("path", [])):
            kind = traw.get("kind", "scheme")
            color = traw.get("color", "tab:red")
            label = traw.get("label", "")
            if kind == "flow":
                fp = dynamics.integrate_flow(
                    problem, [float(v) for v in traw["z0"]],
                    float(traw.get("T", 50.0)), float(traw.get("h_int", 1e-3)),
                    record_every=int(traw.get("record_every", 10)))
                paths.append((fp.states, label or "flow", color))
            elif kind == "scheme":
                sub = {
                    "problem": {k: praw[k] for k in ("label", "epsilon", "perturbation")
                                if k in praw},
                    "scheme": {"name": traw.get("scheme", "sgda")},
                    "schedule": traw.get("schedule", {"kind": "constant", "gamma": 0.03}),
                    "noise": traw.get("noise"),
                    "run": {"z0": traw["z0"], "horizon": int(traw.get("horizon", 1000)),
                            "record_every": int(traw.get("record_every", 1))},
                    "seed": int(traw.get("seed", raw.get("seed", 0))),
                }
                if sub["noise"] is None:
                    sub.pop("noise")
                cfg = parse_experiment(sub)
                traj = algorithms.run(cfg.build_scheme(), cfg.problem, cfg.z0,
                                      cfg.schedule, cfg.noise, cfg.horizon,
                                      record_every=cfg.record_every,
                                      seed=cfg.seed if args.seed is None else args.seed)
                paths.append((traj.iterates, label or cfg.scheme_name, color))
            else:
                raise ConfigError(f"panel[{i}].path[{j}].kind",
                                  f"unknown kind {kind!r}")
        crit = []
        if praw.get("mark_critical_points", True):
            crit = analysis.find_critical_points(problem, box + () if len(box) == 4 else box,
                                                 int(praw.get("critical_grid", 15)))
        predicted = praw.get("predicted_cycle_radius")
        if predicted == "auto" and problem.label == "almost-bilinear":
            pert = PolynomialPerturbation(
                {int(k): float(v) for k, v in problem.params["perturbation"].items()})
            pred = analysis.predict_cycle_radius(pert)
            predicted = pred.h_star
        cycle_radius = None
        if praw.get("detect_cycle", False) and paths:
            fp = dynamics.integrate_flow(problem, paths[0][0][0],
                                         float(praw.get("cycle_T", 300.0)), 5e-3,
                                         record_every=2)
            res = analysis.detect_cycle(fp, burn_in=0.0)
            if res.cycle:
                cycle_radius = res.cycle.section_radius
        panels.append({
            "problem": problem, "box": box, "grid": grid,
            "paths": paths, "critical_points": crit,
            "predicted_radius": float(predicted) if predicted else None,
            "cycle_radius": cycle_radius,
            "title": praw.get("title", problem.label),
        })
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    dest = plotting.render_portrait(panels, out / spec.get("out", "portrait.svg"))
    if not args.quiet:
        print(f"[portrait] {len(panels)} panel(s) -> {dest}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    names = [args.name] if args.name != "all" else experiment_names()
    for name in names:
        if name not in experiment_names():
            print(f"error: unknown experiment {name!r}; valid names: "
                  f"{', '.join(experiment_names())}, all", file=sys.stderr)
            return EXIT_USAGE
    out = _out_dir(args)
    seed = args.seed if args.seed is not None else 0
    all_ok = True
    for name in names:
        result = run_experiment(name, out, seed=seed, quiet=args.quiet)
        all_ok &= result.passed
        if not args.quiet:
            state = "pass" if result.passed else "FAIL"
            print(f"[reproduce] {name}: {state} "
                  f"({len(result.artifacts)} artifacts, {result.seconds:.1f}s)")
    return EXIT_OK if all_ok else EXIT_CHECK_FAILED


def cmd_config_reference(args) -> int:
    if args.out:
        Path(args.out).write_text(REFERENCE_CONFIG)
        if not args.quiet:
            print(f"[config-reference] -> {args.out}")
    else:
        print(REFERENCE_CONFIG, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minmaxlab",
        description="Simulation and analysis laboratory for stochastic "
                    "min-max optimization dynamics.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--out-dir", default=None,
                       help="output directory (default $MINMAXLAB_OUT_DIR or .)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--quiet", action="store_true")

    common(sub.add_parser("simulate", help="run one configured trajectory"))
    common(sub.add_parser("flow", help="integrate the mean dynamics"))

    p = sub.add_parser("abelian", help="Abelian integral table and root")
    for deg in range(1, 9):
        p.add_argument(f"--a{deg}", type=float, default=None,
                       help=f"coefficient of y^{deg}")
    p.add_argument("--coeff", action="append", metavar="K=V",
                   help="extra degree=coefficient pairs")
    p.add_argument("--h", type=float, default=None, help="also print I(h) here")
    p.add_argument("--h-min", type=float, default=0.2)
    p.add_argument("--h-max", type=float, default=3.0)
    p.add_argument("--quiet", action="store_true")

    common(sub.add_parser("cycle", help="detect a limit cycle"))
    common(sub.add_parser("critical", help="find and classify critical points"))
    common(sub.add_parser("montecarlo", help="attraction/avoidance statistics"))
    common(sub.add_parser("apt-check", help="measure APT deviations over windows"))
    common(sub.add_parser("portrait", help="render a phase portrait SVG"))

    p = sub.add_parser("reproduce", help="run a bundled named experiment")
    p.add_argument("name", help=f"one of: {', '.join(experiment_names())}, all")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("config-reference",
                       help="print the reference config with all defaults")
    p.add_argument("--out", default=None, help="write to a file instead of stdout")
    p.add_argument("--quiet", action="store_true")
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "flow": cmd_flow,
    "abelian": cmd_abelian,
    "cycle": cmd_cycle,
    "critical": cmd_critical,
    "montecarlo": cmd_montecarlo,
    "apt-check": cmd_apt_check,
    "portrait": cmd_portrait,
    "reproduce": cmd_reproduce,
    "config-reference": cmd_config_reference,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except KeyError as err:
        print(f"error: {err.args[0]}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
