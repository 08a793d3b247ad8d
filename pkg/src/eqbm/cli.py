"""Command-line front end: ``python -m eqbm <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 failed verification check.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .channels import ExactModel, Observable
from .config import ConfigError, ExperimentConfig
from .critic import clamp_events
from .objective import Objective
from .optimizers import ALGORITHMS, DivergenceError, OptState, RidgeSolveError, local_minimax_check, orientation_flip

log = logging.getLogger("eqbm")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_CHECK = 0, 2, 3, 4
TRACE_HEADER = ("iteration", "f_value", "grad_gamma_norm", "grad_w_norm", "rel_entropy_exact", "shots_cumulative")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, Path):
        return str(x)
    return x


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _load_config(args):
    if not args.config:
        return None
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.threads is not None:
        cfg.mode = {**cfg.mode, "threads": args.threads}
    return cfg


# -- subcommands -----------------------------------------------------------
def cmd_train(args) -> int:
    cfg = _load_config(args)
    if cfg is None:
        raise ConfigError(["train requires --config"])
    exp = cfg.build()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", cfg.to_dict())

    obj = exp.objective
    maximin = exp.objective_cfg.orientation == "maximin"
    run_obj = orientation_flip(obj) if maximin else obj
    sign = -1.0 if maximin else 1.0
    exact = exp.objective_cfg.mode == "exact"
    monitor = obj.relative_entropy if exact else None
    clamp_events.reset()

    summary = {"algorithm": exp.algorithm, "orientation": exp.objective_cfg.orientation,
               "mode": exp.objective_cfg.mode, "iterations": exp.schedule.iterations}
    status = EXIT_OK
    with open(out / "trace.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)

        def sink(row):
            writer.writerow([row.iteration, _fmt(sign * row.f_value), _fmt(row.grad_gamma_norm),
                             _fmt(row.grad_w_norm), _fmt(row.rel_entropy), row.shots_cumulative])

        run = ALGORITHMS[exp.algorithm]
        try:
            state, _ = run(run_obj, exp.schedule, OptState(exp.gamma0, exp.w0),
                           monitor=(lambda g, w: monitor(g)) if monitor else None, sink=sink)
            gamma, w = state.gamma, state.w
        except DivergenceError as exc:
            summary["error"] = str(exc)
            gamma, w = exc.gamma, exc.w
            status = EXIT_DIVERGED
        except RidgeSolveError as exc:
            summary["error"] = f"{exc} (condition estimate {exc.condition:.3e})"
            gamma, w = exp.gamma0, exp.w0
            status = EXIT_DIVERGED

    # diagnostics always use exact evaluation
    twin = Objective(dataclasses.replace(exp.objective_cfg, mode="exact"), exp.family, exp.critic)
    twin_run = orientation_flip(twin) if maximin else twin
    summary.update(final_gamma=gamma, final_w=w, total_shots=obj.shots_used,
                   clamp_events=clamp_events.count)
    if np.all(np.isfinite(gamma)) and np.all(np.isfinite(w)):
        summary["final_objective"] = twin.value(gamma, w)
        summary["final_rel_entropy"] = twin.relative_entropy(gamma)
        try:
            rep = local_minimax_check(twin_run, gamma, w)
            summary["local_minimax"] = dataclasses.asdict(rep)
        except np.linalg.LinAlgError as exc:
            summary["local_minimax"] = {"error": str(exc)}
    write_json(out / "summary.json", summary)
    print(json.dumps(_jsonable({k: summary.get(k) for k in ("final_objective", "final_rel_entropy", "total_shots")})))
    return status


def _config_instances(exp, trials: int, rng):
    fam, obj = exp.family, exp.objective
    for _ in range(trials):
        gamma = rng.uniform(-1, 1, fam.M)
        w = exp.w0 + rng.normal(scale=0.3, size=exp.w0.size)
        yield obj, gamma, w


def cmd_grad_check(args) -> int:
    cfg = _load_config(args)
    seed = args.seed if args.seed is not None else 0
    if cfg is not None:
        exp = cfg.build()
        if exp.objective_cfg.mode != "exact":
            raise ConfigError(["grad-check requires exact mode"])
        report = ex.grad_check(_config_instances(exp, args.trials, np.random.default_rng(cfg.master_seed)))
    else:
        report = ex.random_grad_check(args.trials, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "grad_check.json", report)
    for f in report["failures"]:
        print(f"FAIL trial {f['trial']} block {f['block']}: {f['error']:.3e} > {f['tol']:g}")
    print("max relative error: " + ", ".join(f"{k}={v:.2e}" for k, v in report["max_error"].items()))
    return EXIT_OK if report["passed"] else EXIT_CHECK


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    seed = args.seed if args.seed is not None else 0
    threads = args.threads or 1
    eps, delta = args.epsilon, args.delta
    reports = {}
    if cfg is not None:
        exp = cfg.build()
        eps = float(cfg.mode.get("epsilon", eps))
        delta = float(cfg.mode.get("delta", delta))
        model = ExactModel(exp.family, exp.gamma0)
        obs = Observable(np.exp(exp.critic.values()), exp.povm)
        inst = (model, obs, 0, 0 if exp.family.K else None)
        reports["config"] = ex.calibrate(args.reps, eps, delta, cfg.master_seed, threads, inst)
    else:
        reports["default"] = ex.calibrate(args.reps, eps, delta, seed, threads)
        reports["commuting"] = ex.calibrate(args.reps, eps, delta, seed, threads, ex.commuting_instance())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "calibration.json", reports)
    ok = True
    for name, rep in reports.items():
        for alg in ("alg1", "alg2"):
            if alg in rep:
                r = rep[alg]
                print(f"{name} {alg}: n={r['shots']} failure_rate={r['failure_rate']:.4f} "
                      f"bias={r['bias']:+.2e} se={r['standard_error']:.2e}")
        ok &= rep["passed"]
    return EXIT_OK if ok else EXIT_CHECK


def cmd_nonconvexity(args) -> int:
    rep = ex.nonconvexity_sweep(args.lo, args.hi, args.points)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "nonconvexity.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("mu", "rel_entropy_closed_form", "rel_entropy_pipeline"))
        for row in zip(rep["grid"], rep["closed_form"], rep["pipeline"]):
            writer.writerow([repr(float(v)) for v in row])
    summary = {k: v for k, v in rep.items() if k not in ("grid", "closed_form", "pipeline")}
    write_json(out / "nonconvexity.json", summary)
    print(f"max |closed - pipeline| = {rep['max_abs_diff']:.2e}; D(0.5) = {rep['D_half']:.6f} "
          f"vs chord {rep['chord_midpoint']:.6f}: convexity violated = {rep['convexity_violated']}")
    return EXIT_OK if rep["passed"] else EXIT_CHECK


def cmd_dv_exactness(args) -> int:
    cfg = _load_config(args)
    if cfg is not None:
        exp = cfg.build()
        case = ex.dv_exactness_case(exp.target.distribution.probabilities, exp.family, exp.povm, exp.gamma0)
        rep = {"cases": [case], "passed": case["passed"]}
    else:
        rep = ex.dv_exactness_suite(args.instances, args.seed if args.seed is not None else 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "dv_exactness.json", rep)
    for i, c in enumerate(rep["cases"]):
        err = "n/a" if c["error"] is None else f"{c['error']:.2e}"
        print(f"case {i}: D = {c['D']:.6f}, |max f - D| = {err}")
    return EXIT_OK if rep["passed"] else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads for shot emulation")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="eqbm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="run an optimizer").set_defaults(fn=cmd_train)
    p = sub.add_parser("grad-check", parents=[common], help="compare derivative blocks to finite differences")
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(fn=cmd_grad_check)
    p = sub.add_parser("calibrate", parents=[common], help="repeat the shot estimators against exact values")
    p.add_argument("--reps", type=int, default=400)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.05)
    p.set_defaults(fn=cmd_calibrate)
    p = sub.add_parser("nonconvexity", parents=[common], help="single-qubit relative-entropy sweep")
    p.add_argument("--lo", type=float, default=-5.0)
    p.add_argument("--hi", type=float, default=5.0)
    p.add_argument("--points", type=int, default=201)
    p.set_defaults(fn=cmd_nonconvexity)
    p = sub.add_parser("dv-exactness", parents=[common], help="tabular inner maximum versus D(p||q)")
    p.add_argument("--instances", type=int, default=10)
    p.set_defaults(fn=cmd_dv_exactness)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
