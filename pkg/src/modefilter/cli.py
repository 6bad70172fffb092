"""Command-line front end.

Four subcommands share a TOML scenario file (see :mod:`modefilter.config`):

``simulate``
    Generate ground truth only; writes ``truth.csv`` and the scenario
    echo.
``estimate``
    Simulate, run the configured multiple-model estimator, and score it;
    writes ``traces.csv``, ``report.json``, and the echo.
``analyze``
    Stationary divergence / ergodicity report over the scenario's model
    set; writes ``report.json`` and the echo.
``mc``
    Monte-Carlo batch of ``estimate`` runs over consecutive seeds,
    optionally in parallel processes; writes ``traces_0000.csv`` ... and
    an aggregate ``report.json``.

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical
breakdown.  Outputs are deterministic given the file and seed; parallel
``mc`` workers return serialized traces which the parent writes in run
order, so ``--jobs`` never changes the bytes on disk.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .asymptotics import analyze_model_set, predict_winner
from .config import (load_scenario_file, load_toml, scenario_from_config,
                     write_scenario_echo)
from .errors import (ConfigError, DegenerateUpdate, InvalidModel,
                     NoConvergence, NoSteadyState, NumericalBreakdown,
                     Unstable)
from .sim import metrics, run_estimator, simulate

__all__ = ["main"]

_BREAKDOWN = (NumericalBreakdown, DegenerateUpdate, Unstable, NoSteadyState,
              NoConvergence)


def _json_ready(obj):
    """Recursively convert numpy scalars/arrays; non-finite floats -> None."""
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _write_report(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(_json_ready(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _truth_csv(truth, path) -> None:
    groups = (("k", np.arange(truth.x.shape[0])), ("q_true", truth.q),
              ("x_true", truth.x), ("d_true", truth.d), ("u", truth.u),
              ("y", truth.y))
    ints = {"k", "q_true"}
    names = []
    for name, arr in groups:
        if arr.ndim == 1:
            names.append(name)
        else:
            names.extend(f"{name}_{i}" for i in range(arr.shape[1]))
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for r in range(truth.x.shape[0]):
            cells = []
            for name, arr in groups:
                vals = [arr[r]] if arr.ndim == 1 else arr[r]
                if name in ints:
                    cells.extend(str(int(v)) for v in vals)
                else:
                    cells.extend(f"{float(v):.17g}" for v in vals)
            fh.write(",".join(cells) + "\n")


def _cmd_simulate(args) -> int:
    cfg = load_toml(args.scenario)
    sc = scenario_from_config(cfg)
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    out = _outdir(args)
    truth = simulate(sc)
    _truth_csv(truth, os.path.join(out, "truth.csv"))
    write_scenario_echo(sc, None, os.path.join(out, "scenario.json"))
    return 0


def _cmd_estimate(args) -> int:
    sc, est = load_scenario_file(args.scenario, args.estimator, args.seed)
    out = _outdir(args)
    truth = simulate(sc)
    tr = run_estimator(truth, sc, est)
    tr.to_csv(os.path.join(out, "traces.csv"))
    _write_report(metrics(tr), os.path.join(out, "report.json"))
    write_scenario_echo(sc, est, os.path.join(out, "scenario.json"))
    return 0


def _cmd_analyze(args) -> int:
    cfg = load_toml(args.scenario)
    sc = scenario_from_config(cfg)
    out = _outdir(args)
    decs = sc.system.decomposed()
    rows = []
    for t, true_dec in enumerate(decs):
        kl = analyze_model_set(true_dec, decs)
        row = {
            "true_mode": t,
            "divergence": kl.D,
            "innovation_ranks": kl.ranks,
            "true_rank": kl.rank_true,
            "spectral_radii": kl.spectral_radii,
            "lyapunov_residuals": kl.lyapunov_residuals,
            "ergodic": [bool(r < 1.0) for r in kl.spectral_radii],
            "closest_mode": kl.closest_mode,
        }
        finite = np.isfinite(kl.D)
        if finite.sum() >= 2:
            win = predict_winner(kl)
            row["winner"] = {"mode": win.mode, "margin": win.margin,
                             "unique": win.unique}
        else:
            row["winner"] = None
        rows.append(row)
    doc = {"mode_names": list(sc.system.names),
           "per_true_mode": rows}
    _write_report(doc, os.path.join(out, "report.json"))
    write_scenario_echo(sc, None, os.path.join(out, "scenario.json"))
    return 0


def _mc_run(task):
    sc, est = task
    truth = simulate(sc)
    tr = run_estimator(truth, sc, est)
    return tr.to_csv_text(), metrics(tr)


def _cmd_mc(args) -> int:
    sc, est = load_scenario_file(args.scenario, args.estimator)
    out = _outdir(args)
    base = sc.seed if args.seed is None else args.seed
    tasks = [(replace(sc, seed=base + i), est) for i in range(args.runs)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_mc_run, tasks, chunksize=1))
    else:
        results = [_mc_run(t) for t in tasks]
    run_reports = []
    for i, (csv_text, rep) in enumerate(results):
        with open(os.path.join(out, f"traces_{i:04d}.csv"), "w",
                  newline="") as fh:
            fh.write(csv_text)
        rep["seed"] = base + i
        run_reports.append(rep)
    pooled = {
        "runs": args.runs,
        "base_seed": base,
        "mode_accuracy_mean": float(np.mean(
            [r["mode_accuracy"] for r in run_reports])),
        "state_rmse_mean": list(np.mean(
            [r["state_rmse"] for r in run_reports], axis=0)),
        "mu_true_final_mean": float(np.mean(
            [r["mu_true_final"] for r in run_reports])),
    }
    _write_report({"pooled": pooled, "per_run": run_reports},
                  os.path.join(out, "report.json"))
    write_scenario_echo(replace(sc, seed=base), est,
                        os.path.join(out, "scenario.json"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modefilter",
        description="Unknown-input multiple-model estimation: simulate, "
                    "estimate, analyze, and batch scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, estimator=False):
        p.add_argument("--scenario", required=True,
                       help="scenario TOML file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
        p.add_argument("--out", default=".",
                       help="output directory (created if missing)")
        if estimator:
            p.add_argument("--estimator", choices=("static", "dynamic"),
                           default=None,
                           help="override the configured estimator kind")

    p = sub.add_parser("simulate", help="generate ground truth only")
    common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate",
                       help="run the multiple-model estimator on one "
                            "simulated scenario")
    common(p, estimator=True)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("analyze",
                       help="stationary divergence / ergodicity report "
                            "for the scenario's model set")
    common(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("mc", help="Monte-Carlo batch over consecutive seeds")
    common(p, estimator=True)
    p.add_argument("--runs", type=int, default=10,
                   help="number of runs (seeds seed..seed+runs-1)")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes (results are independent of "
                        "this setting)")
    p.set_defaults(func=_cmd_mc)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidModel) as exc:
        # Model-validity failures surfacing during a run (ill-posed mode
        # models, bad priors) are configuration problems too.
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _BREAKDOWN as exc:
        print(f"numerical breakdown: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
