"""Command-line harness.

Subcommands:
  gen-data          sample a dataset from a config and write it to disk
  train             train the configured learners, write predictors + reports
  distortion-check  run the divergence/loss sandwich suites on a grid
  experiment        sweep instances x seeds x learners x checks into a CSV
  verify            run the acceptance suite; exit 0 iff everything passes

Exit codes: 0 success, 2 configuration error, 3 numeric failure (training
divergence or non-convergence).  CSV artifacts are byte-stable for a fixed
config and seed; the runtime_ms column is written as 0 unless --timing is
given, so timing noise never touches the bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from . import acceptance, config as config_mod, fenchel, synth, transfer
from .errors import (
    ConfigError,
    DivergenceError,
    InvalidInputError,
    NoConvergenceError,
    SimlearnError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

CSV_HEADER = acceptance.CSV_HEADER


def _fail(code, message):
    print(f"error: {message}", file=sys.stderr)
    return code


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------


def cmd_gen_data(args):
    cfg = config_mod.load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    ds = synth.make_dataset(cfg.marginal, cfg.label_model, cfg.n_train, seed)
    synth.save_dataset(ds, args.out)
    print(f"wrote {ds.n} x {ds.d} dataset to {args.out} "
          f"(certified opt bound {ds.certified_opt_upper_bound:.6g})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def cmd_train(args):
    cfg = config_mod.load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    train_ds = synth.make_dataset(cfg.marginal, cfg.label_model,
                                  cfg.n_train, seed)
    eval_ds = synth.make_dataset(cfg.marginal, cfg.label_model,
                                 cfg.n_eval, seed + 1)
    pairs = [fenchel.pair_from_tag(t) for t in cfg.pairs]
    for entry in cfg.learners:
        predictor = config_mod.train_learner(entry, train_ds, seed)
        name = entry["name"]
        pred_path = os.path.join(out_dir, f"{name}.predictor.txt")
        with open(pred_path, "w") as fh:
            fh.write(predictor.serialize())
        report = transfer.evaluate(predictor, eval_ds, pairs=pairs)
        rep_path = os.path.join(out_dir, f"{name}.report.json")
        with open(rep_path, "w") as fh:
            fh.write(report.to_json())
            fh.write("\n")
        print(f"{name}: err2={report.err2:.6g} err1={report.err1:.6g} "
              f"-> {pred_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# distortion-check
# ---------------------------------------------------------------------------


def cmd_distortion_check(args):
    grid_n = args.grid_density
    if grid_n < 4:
        print(f"warning: grid density {grid_n} is too low to be informative",
              file=sys.stderr)
    tags = args.pairs.split(",") if args.pairs else ["identity",
                                                     "leaky_relu(0.1)"]
    floor = -1e-9
    failures = []
    print(f"{'suite':34s} {'pair':22s} {'worst slack':>14s}")
    for tag in tags:
        pair = fenchel.pair_from_tag(tag.strip())
        rep = fenchel.bilipschitz_sandwich_report(pair, grid_n=grid_n)
        worst = min(rep["lower_slack"], rep["upper_slack"])
        bad = worst < floor or rep["identity_gap"] > 10 * pair.inversion_tolerance
        print(f"{'bilipschitz_sandwich':34s} {pair.tag:22s} {worst:14.3e}"
              + ("  VIOLATED" if bad else ""))
        if bad:
            failures.append(("bilipschitz_sandwich", pair.tag))
    kl = fenchel.kl_sandwich_report(grid_n=grid_n)
    worst = min(kl["lower_slack"], kl["upper_slack"])
    print(f"{'kl_sandwich':34s} {'sigmoid':22s} {worst:14.3e}"
          + ("  VIOLATED" if worst < floor else ""))
    if worst < floor:
        failures.append(("kl_sandwich", "sigmoid"))
    ce = fenchel.crossentropy_absolute_report(grid_n=grid_n)
    worst = min(ce["lower_slack"], ce["upper_slack"])
    print(f"{'crossentropy_absolute_sandwich':34s} {'sigmoid':22s} {worst:14.3e}"
          + ("  VIOLATED" if worst < floor else ""))
    if worst < floor:
        failures.append(("crossentropy_absolute_sandwich", "sigmoid"))
    if failures:
        print("violations: " + ", ".join(f"{s} ({p})" for s, p in failures))
        return 1
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------


def _row_key(row):
    return (row.instance, row.learner, row.theorem)


def _run_instance(payload):
    """One (instance, seed, learner) unit: train once, run all its checks."""
    cfg, inst_name, model, seed, entry = payload
    train_ds = synth.make_dataset(cfg.marginal, model, cfg.n_train, seed)
    eval_ds = synth.make_dataset(cfg.marginal, model, cfg.n_eval, seed + 1)
    t0 = time.time()
    predictor = config_mod.train_learner(entry, train_ds, seed)
    train_ms = int((time.time() - t0) * 1000)
    report = transfer.evaluate(predictor, eval_ds)
    rows = []
    extra = [predictor.w] if hasattr(predictor, "w") else []
    B = float(entry["norm_bound"])
    for check in cfg.checks:
        parts = check.split(":")
        kind = parts[0]
        try:
            if kind == "sim_sqrt":
                chk = transfer.check_sim_bound(
                    predictor, eval_ds, B, cfg.marginal.second_moment, cfg.eps)
                c_rep = chk.extras["c_needed"]
            elif kind == "bilipschitz":
                pair = fenchel.pair_from_tag(parts[1])
                chk = transfer.check_bilipschitz_transfer(
                    predictor, eval_ds, pair, B, seed=seed,
                    extra_candidates=extra)
                c_rep = None
            elif kind == "general":
                g_pair = fenchel.pair_from_tag(parts[1])
                phi_pair = fenchel.pair_from_tag(parts[2])
                chk = transfer.check_general_activation_transfer(
                    predictor, eval_ds, g_pair, phi_pair, B, seed=seed,
                    extra_candidates=extra)
                c_rep = None
            elif kind == "logistic_squared":
                chk = transfer.check_logistic_squared(
                    predictor, eval_ds, B, seed=seed, extra_candidates=extra)
                c_rep = chk.extras["c_needed"]
            elif kind == "logistic_absolute":
                chk = transfer.check_logistic_absolute(
                    predictor, eval_ds, B, seed=seed, extra_candidates=extra)
                c_rep = chk.extras["c_needed"]
            elif kind == "pconcept":
                rep = transfer.pconcept_disagreement(predictor, eval_ds,
                                                     seed=seed)
                rows.append(acceptance.Row(
                    f"{inst_name}_s{seed}", entry["name"], None, report.err2,
                    report.err1, "pconcept_identity", 3.0 * rep.stderr,
                    3.0 * rep.stderr - rep.gap, None, train_ms))
                continue
            else:  # pragma: no cover - filtered during config parsing
                continue
        except (InvalidInputError, NoConvergenceError):
            # partial failure: record the row as inapplicable, keep going
            rows.append(acceptance.Row(
                f"{inst_name}_s{seed}", entry["name"],
                eval_ds.certified_opt_upper_bound, report.err2, report.err1,
                f"{kind}_inapplicable", 0.0, -1.0, None, train_ms))
            continue
        rows.append(acceptance.Row(
            f"{inst_name}_s{seed}", entry["name"], chk.params.get(
                "opt_hat", chk.params.get("opt1_hat")), report.err2,
            report.err1, chk.theorem_tag, chk.rhs, chk.slack, c_rep, train_ms))
    return rows


def cmd_experiment(args):
    cfg = config_mod.load_config(args.config)
    if not cfg.learners:
        raise ConfigError("empty learner list")
    existing = {}
    if args.resume and os.path.exists(args.out):
        with open(args.out) as fh:
            header = fh.readline().strip()
            if header != CSV_HEADER:
                raise ConfigError(f"cannot resume: {args.out} has a foreign header")
            for line in fh:
                parts = line.rstrip("\n").split(",")
                existing[(parts[0], parts[1], parts[5])] = line.rstrip("\n")

    units = []
    for inst_name, model in cfg.instance_models():
        for seed in cfg.seeds:
            for entry in cfg.learners:
                units.append((cfg, inst_name, model, seed, entry))
    needed = []
    for unit in units:
        key_prefix = (f"{unit[1]}_s{unit[3]}", unit[4]["name"])
        missing = any((key_prefix[0], key_prefix[1], _check_tag(c))
                      not in existing for c in cfg.checks)
        if missing or not existing:
            needed.append(unit)

    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            produced = list(pool.map(_run_instance, needed))
    else:
        produced = [_run_instance(u) for u in needed]

    rows = {}
    for line in existing.values():
        parts = line.split(",")
        rows[(parts[0], parts[1], parts[5])] = line
    for batch in produced:
        for row in batch:
            if not args.timing:
                row.runtime_ms = 0
            rows[_row_key(row)] = row.render()
    ordered = sorted(rows)
    with open(args.out, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for key in ordered:
            fh.write(rows[key] + "\n")
    print(f"wrote {len(ordered)} rows to {args.out}")
    return EXIT_OK


def _check_tag(check):
    kind = check.split(":")[0]
    return {"sim_sqrt": "sim_sqrt_transfer",
            "bilipschitz": "bilipschitz_transfer",
            "general": "general_activation_transfer",
            "logistic_squared": "logistic_squared_transfer",
            "logistic_absolute": "logistic_absolute_transfer",
            "pconcept": "pconcept_identity"}.get(kind, kind)


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(args):
    seed = args.seed if args.seed is not None else acceptance.DEFAULT_SEED
    results = acceptance.run_all(seed)
    for res in results:
        print(res.summary())
    csv_text = acceptance.results_csv(results)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(csv_text)
        print(f"artifact: {args.out}")
    all_ok = all(r.ok for r in results)
    print(f"verify: {'ALL PASS' if all_ok else 'FAILURES PRESENT'} "
          f"({sum(r.ok for r in results)}/{len(results)})")
    return EXIT_OK if all_ok else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="simlearn",
        description="Matching-loss learners for single-index models, with "
                    "executable error-transfer checks on planted instances.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="sample a dataset from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train configured learners")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("distortion-check",
                       help="verify the loss/divergence sandwiches on a grid")
    p.add_argument("--grid-density", type=int, default=100)
    p.add_argument("--pairs", default=None,
                   help="comma-separated activation tags")
    p.set_defaults(func=cmd_distortion_check)

    p = sub.add_parser("experiment", help="run a sweep into a CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true",
                   help="compute only rows missing from the output CSV")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true",
                   help="record real runtimes (makes the CSV non-reproducible)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="write the CSV artifact here")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except (DivergenceError, NoConvergenceError) as exc:
        return _fail(EXIT_NUMERIC, str(exc))
    except InvalidInputError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except SimlearnError as exc:
        return _fail(EXIT_NUMERIC, str(exc))


if __name__ == "__main__":
    sys.exit(main())
