"""Command-line front end: baseline, train, simulate, surface, robustness.

Exit codes: 0 success, 2 validation error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from gftlqr import evo, harness, persist
from gftlqr.gft import FIS_NAMES, control_surface
from gftlqr.persist import BaselineStore, ConfigError, RunConfig

log = logging.getLogger("gftlqr")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2


class CliError(Exception):
    def __init__(self, message, code=EXIT_VALIDATION):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# helpers

def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out if args.out is not None else cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}", EXIT_RUNTIME) from None
    return out


def _provenance(cfg: RunConfig, **extra) -> dict:
    prov = {"config_digest": cfg.dynamics_digest, "run_digest": persist.digest(cfg.to_dict()),
            "seed": cfg.seed}
    prov.update(extra)
    return prov


def _cases(args, spec):
    if getattr(args, "cases", None):
        spec = persist.parse_case_list(args.cases)
    return persist.resolve_cases(spec)


def _load_store(path, cfg: RunConfig) -> BaselineStore:
    if path is None:
        raise CliError("--baseline PATH is required")
    try:
        store = BaselineStore.load(path)
    except FileNotFoundError:
        raise CliError(f"baseline store {path} not found") from None
    store.check(cfg.dynamics_digest)
    return store


def _maybe_plot(args, fn, path, prov, *a):
    if args.no_plots:
        return
    from gftlqr import plots

    plots.save(getattr(plots, fn)(*a), path, prov)


def _summary(result, params, penalty) -> str:
    return (f"settled={int(result.settled)} T_s={result.settle_time:.4f} "
            f"IAC=({result.iac[0]:.4f}, {result.iac[1]:.4f}) "
            f"cost={harness.case_cost(result, params, penalty):.6f}")


# ---------------------------------------------------------------------------
# commands

def cmd_baseline(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    path = out / "baseline.json"
    if path.exists() and not args.force:
        raise CliError(f"{path} exists; pass --force to overwrite")
    cases = _cases(args, cfg.scenarios)
    store = BaselineStore(cfg.dynamics_digest, cfg.seed)
    print(f"{'case':>4}  {'scenario':<24} {'cost':>10}  log10(q1..q4)")
    for case in cases:
        res = harness.optimize_baseline(case, cfg.params, cfg.sim, cfg.baseline_ga)
        store.add(res)
        q = " ".join(f"{v:6.2f}" for v in np.log10(res.weights.q))
        print(f"{case.id:>4}  {case.label():<24} {res.cost:>10.5f}  {q}", flush=True)
    prov = _provenance(cfg)
    try:
        store.save(path)
        ids = sorted(store.records)
        costs = [store.records[i].cost for i in ids]
        persist.write_csv(out / "baseline_costs.csv", ["case_id", "cost"], zip(ids, costs), prov)
        _maybe_plot(args, "baseline_figure", out / "baseline_costs.png", prov, ids, costs)
    except OSError as exc:
        raise CliError(f"cannot write outputs: {exc}", EXIT_RUNTIME) from None
    print(f"wrote {path} ({len(store.records)} cases)")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    if args.full_scale:
        cfg = persist.RunConfig(**{**cfg.__dict__, "ga": evo.GaConfig(
            **{**persist.FULL_SCALE_TRAIN_GA.to_dict(), "seed": cfg.seed}), "train_scenarios": "full88"})
    out = _out_dir(args, cfg)
    store = _load_store(args.baseline, cfg)
    cases = _cases(args, cfg.train_scenarios)
    baselines = store.costs()
    harness.baseline_costs_for(cases, baselines)  # fail fast on missing ids

    rows = []

    def sink(gen, best, mean):
        rows.append((gen, best, mean))
        if gen % 10 == 0 or gen == cfg.ga.n_generations:
            log.info("generation %d best %.5f mean %.5f", gen, best, mean)

    seeds = None
    if not args.no_seed:
        seeds = harness.warm_start_population(cases, store, cfg.ga.population_size, cfg.ga.seed)
    res = harness.train_gft(cases, cfg.params, cfg.sim, cfg.ga, baselines, report_sink=sink,
                            initial=seeds, **cfg.controller_kwargs())
    wins = int(np.sum(res.relative_costs < 1.0))
    meta = {
        **_provenance(cfg),
        "ga": cfg.ga.to_dict(),
        "case_ids": [c.id for c in cases],
        "final_mean_relative_cost": res.mean_relative_cost,
        "relative_costs": res.relative_costs.tolist(),
        "wins": wins,
        "genes": res.genes.tolist(),
    }
    prov = _provenance(cfg)
    try:
        persist.save_controller(out / "controller.json", res.controller, meta)
        persist.write_csv(out / "history.csv", ["generation", "best", "mean"], rows, prov)
        _maybe_plot(args, "history_figure", out / "history.png", prov, rows)
    except OSError as exc:
        raise CliError(f"cannot write outputs: {exc}", EXIT_RUNTIME) from None
    print(f"final mean relative cost {res.mean_relative_cost:.6f}; "
          f"beats baseline on {wins}/{len(cases)} cases")
    return EXIT_OK


def _controller_for(args, cfg, case, store):
    if args.controller == "baseline":
        if case.id not in store.records:
            raise harness.MissingBaseline([case.id])
        return "lqr", store.controllers(cfg.params, cfg.sim.saturate)[case.id]
    ctrl, _ = persist.load_controller(args.controller)
    return "gft", ctrl


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    try:
        (case,) = persist.resolve_cases((args.case,))
    except ConfigError:
        raise CliError(f"unknown case id {args.case}; valid ids are 0..87") from None
    store = _load_store(args.baseline, cfg) if (args.baseline or args.controller == "baseline") else None
    name, ctrl = _controller_for(args, cfg, case, store)
    result = harness.simulate_case(ctrl, case, cfg.params, cfg.sim, record=True)
    prov = _provenance(cfg, case_id=case.id, controller=name)
    path = out / f"trajectory_{name}_case{case.id}.csv"
    tau = np.vstack([result.torques, np.full((1, 2), np.nan)])
    rows = (
        (t, *x, *u) for t, x, u in zip(result.times, result.states, tau)
    )
    header = ["t", "theta1", "theta2", "omega1", "omega2", "tau1", "tau2"]
    runs = {name: (result.times, result.states, result.torques)}
    if name == "gft" and store is not None and case.id in store.records:
        other = harness.simulate_case(store.controllers(cfg.params, cfg.sim.saturate)[case.id],
                                      case, cfg.params, cfg.sim, record=True)
        runs["lqr"] = (other.times, other.states, other.torques)
        print(f"lqr case {case.id} {case.label()}: {_summary(other, cfg.params, cfg.sim.unsettled_penalty)}")
    try:
        persist.write_csv(path, header, rows, prov)
        _maybe_plot(args, "trajectory_figure", out / f"trajectory_{name}_case{case.id}.png", prov,
                    runs, case.target.as_array())
    except OSError as exc:
        raise CliError(f"cannot write outputs: {exc}", EXIT_RUNTIME) from None
    print(f"{name} case {case.id} {case.label()}: {_summary(result, cfg.params, cfg.sim.unsettled_penalty)}")
    return EXIT_OK


def cmd_surface(args) -> int:
    cfg = _config(args)
    if args.fis not in FIS_NAMES:
        raise CliError(f"unknown FIS {args.fis!r}; valid names: {', '.join(FIS_NAMES)}")
    if args.grid < 2:
        raise CliError("--grid must be >= 2")
    out = _out_dir(args, cfg)
    ctrl, meta = persist.load_controller(args.controller)
    fis = ctrl.fis(args.fis)
    values = control_surface(fis, args.grid)
    g = np.linspace(-1.0, 1.0, args.grid)
    rows = ((g[i], g[j], values[i, j]) for i in range(args.grid) for j in range(args.grid))
    prov = _provenance(cfg, fis=args.fis, controller_digest=persist.digest(persist.controller_to_dict(ctrl)))
    try:
        persist.write_csv(out / f"surface_{args.fis}.csv", ["in1", "in2", "out"], rows, prov)
        _maybe_plot(args, "surface_figure", out / f"surface_{args.fis}.png", prov, g, values, args.fis)
    except OSError as exc:
        raise CliError(f"cannot write outputs: {exc}", EXIT_RUNTIME) from None
    print(f"{args.fis}: bounds [{fis.out_lo:.6g}, {fis.out_hi:.6g}], "
          f"surface range [{values.min():.6g}, {values.max():.6g}]")
    return EXIT_OK


REFERENCE_SUCCESS = {"gft": 1.0, "lqr": 0.898}


def cmd_robustness(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    store = _load_store(args.baseline, cfg)
    cases = _cases(args, cfg.scenarios)
    harness.baseline_costs_for(cases, store.costs())
    ctrl, _ = persist.load_controller(args.controller)
    seed = cfg.seed
    report = harness.robustness_mc(ctrl, store.controllers(cfg.params, cfg.sim.saturate), cases,
                                   args.n_per_case, seed, cfg.params, cfg.sim, width=args.width)
    prov = _provenance(cfg, n_per_case=args.n_per_case, width=args.width)
    summary = report.summary()
    summary["provenance"] = prov
    summary["reference_full_scale_success"] = REFERENCE_SUCCESS
    cols = ["case_id", "draw", "m1_scale", "m2_scale", "l1_scale", "l2_scale"]
    for name in report.names:
        cols += [f"{name}_{k}" for k in ("settled", "settle_time", "iac1", "iac2", "var1", "var2")]
    rows = []
    for r in report.draws:
        row = list(r)
        row[0], row[1] = int(row[0]), int(row[1])
        row[6], row[12] = int(row[6]), int(row[12])
        rows.append(row)
    try:
        persist.write_json(out / "robustness_report.json", summary)
        persist.write_csv(out / "robustness_draws.csv", cols, rows, prov)
        _maybe_plot(args, "robustness_figure", out / "robustness.png", prov, report)
    except OSError as exc:
        raise CliError(f"cannot write outputs: {exc}", EXIT_RUNTIME) from None
    for w, name in enumerate(report.names):
        print(f"{name}: success {100 * report.success_rate(w):.2f}% "
              f"(full-scale reference {100 * REFERENCE_SUCCESS[name]:.1f}%)")
    print(f"mutually successful draws: {int(report.mutual.sum())}/{report.n_draws}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--cases", help="'full88', 'desk' or comma-separated case ids")
    common.add_argument("--force", action="store_true", help="overwrite existing stores")
    common.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="gftlqr", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("baseline", parents=[common], help="optimize per-case static LQR weights")

    p = sub.add_parser("train", parents=[common], help="train the fuzzy tree")
    p.add_argument("--baseline", help="baseline store JSON")
    p.add_argument("--full-scale", action="store_true",
                   help="112 chromosomes, 4 islands, 1500 generations on all 88 cases")
    p.add_argument("--no-seed", action="store_true",
                   help="start from a purely random population instead of the baseline warm start")

    p = sub.add_parser("simulate", parents=[common], help="single-case trajectory")
    p.add_argument("--controller", required=True, help="controller JSON or 'baseline'")
    p.add_argument("--case", type=int, required=True)
    p.add_argument("--baseline", help="baseline store JSON")

    p = sub.add_parser("surface", parents=[common], help="FIS control surface")
    p.add_argument("--controller", required=True)
    p.add_argument("--fis", required=True, help=", ".join(FIS_NAMES))
    p.add_argument("--grid", type=int, default=51)

    p = sub.add_parser("robustness", parents=[common], help="mass/length Monte Carlo")
    p.add_argument("--controller", required=True)
    p.add_argument("--baseline", help="baseline store JSON")
    p.add_argument("--n-per-case", type=int, default=25)
    p.add_argument("--width", type=float, default=0.1, help="relative perturbation half-width")
    return ap


COMMANDS = {
    "baseline": cmd_baseline,
    "train": cmd_train,
    "simulate": cmd_simulate,
    "surface": cmd_surface,
    "robustness": cmd_robustness,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except harness.MissingBaseline as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
