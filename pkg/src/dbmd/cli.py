"""Command-line interface: ``dbmd synth|fit|eval|varratio|convergence``."""

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import datagen, experiments, io, noise
from .h_solver import assign_clusters
from .metrics import hungarian_accuracy
from .model import DataShard, Hyperparams
from .runtime import SCHEMA, RunConfig, fit, partition_indices
from .w_solvers import STRATEGIES


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers, got %r" % text)


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers, got %r" % text)


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("invalid int value: %r" % text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1, got %d" % v)
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="dbmd", description="Distributed Bayesian matrix decomposition")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate synthetic shards and truth labels")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--kind", choices=["bernoulli", "dirichlet", "onehot"], default="bernoulli")
    s.add_argument("--a", type=float, default=1.5)
    s.add_argument("--l", type=int, default=20)
    s.add_argument("--coh", type=int, default=2)
    s.add_argument("--rank", type=_positive_int, default=10)
    s.add_argument("--nc", type=_positive_int, default=100, help="samples per shard")
    s.add_argument("--shards", type=_positive_int, default=5)
    s.add_argument("--p", type=float, default=None, help="Bernoulli rate (default 1/rank)")
    s.add_argument("--alpha0", type=float, default=1.0, help="Dirichlet parameter")
    s.add_argument("--sigma", type=_float_list, default=[1.0],
                   help="noise std per shard (one value is broadcast)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--format", choices=["csv", "bin"], default="csv")

    f = sub.add_parser("fit", help="fit the model to one or more data files")
    f.add_argument("data", nargs="+", help="data files; one sample per CSV row")
    f.add_argument("--format", choices=["csv", "bin"], default=None)
    f.add_argument("--solver", choices=STRATEGIES, default="admm")
    f.add_argument("--workers", type=_positive_int, default=None)
    f.add_argument("--scheme", choices=["contiguous", "strided"], default="contiguous")
    f.add_argument("--rank", type=_positive_int, required=True)
    f.add_argument("--lambda", dest="lam", type=float, default=0.0)
    f.add_argument("--alpha0", type=float, default=2.0)
    f.add_argument("--rho", type=float, default=300.0)
    f.add_argument("--gamma", type=float, default=0.001)
    f.add_argument("--weighted", action="store_true")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--repeats", type=_positive_int, default=1,
                   help="run with seeds seed, seed+1, ... and report the spread")
    f.add_argument("--w-tol", type=float, default=1e-2)
    f.add_argument("--max-w-iters", type=_positive_int, default=1000)
    f.add_argument("--max-outer", type=_positive_int, default=100)
    f.add_argument("--outer-tol", type=float, default=1e-5)
    f.add_argument("--threads", type=_positive_int, default=None)
    f.add_argument("--truth", default=None, help="true labels, to report accuracy")
    f.add_argument("--metrics-out", default=None)
    f.add_argument("--labels-out", default=None)
    f.add_argument("--basis-out", default=None)

    e = sub.add_parser("eval", help="Hungarian-matched clustering accuracy")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--json", action="store_true")

    v = sub.add_parser("varratio", help="variance ratio of weighted vs plain aggregation")
    v.add_argument("--solver", choices=["admm", "cease", "both"], default="admm")
    v.add_argument("--reps", type=_positive_int, default=100)
    v.add_argument("--s-max", type=_positive_int, default=10)
    v.add_argument("--rho", type=float, default=50.0)
    v.add_argument("--gamma", type=float, default=0.001)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default=None, help="CSV path (default: stdout)")

    c = sub.add_parser("convergence", help="per-iteration objective of the W-update")
    c.add_argument("--data", choices=["A", "B", "both"], default="both")
    c.add_argument("--nc", type=_int_list, default=[100, 500, 5000])
    c.add_argument("--solver", choices=list(STRATEGIES) + ["all"], default="all")
    c.add_argument("--lambda", dest="lam", type=float, default=1.0)
    c.add_argument("--rho", type=float, default=50.0)
    c.add_argument("--gamma", type=float, default=1.0)
    c.add_argument("--w-tol", type=float, default=1e-3)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default=None, help="CSV path (default: stdout)")
    c.add_argument("--summary-out", default=None, help="JSON with round counts")
    return p


def _open_out(path):
    return open(path, "w", newline="", encoding="utf-8") if path else sys.stdout


def cmd_synth(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sigmas = args.sigma * args.shards if len(args.sigma) == 1 else args.sigma
    if len(sigmas) != args.shards:
        raise SystemExit("--sigma needs 1 or %d values" % args.shards)
    W = datagen.gen_basis(args.a, args.l, args.coh, args.rank)
    if args.kind == "bernoulli":
        H = [datagen.gen_h_bernoulli(args.rank, args.nc, args.p or 1.0 / args.rank, args.seed, c)
             for c in range(args.shards)]
    elif args.kind == "dirichlet":
        H = [datagen.gen_h_dirichlet(args.rank, args.nc, args.alpha0, args.seed, c)
             for c in range(args.shards)]
    else:
        H = [datagen.gen_h_onehot(args.rank, args.nc, args.seed, c) for c in range(args.shards)]
    shards = datagen.gen_observations(W, H, sigmas, args.seed)
    files = []
    for c, s in enumerate(shards):
        name = "shard_%d.%s" % (c, args.format)
        io.save_matrix(out / name, s.X, args.format)
        files.append(name)
    io.save_labels(out / "labels.csv", np.concatenate([assign_clusters(h) for h in H]))
    io.save_matrix(out / "W_true.csv", W, "csv")
    manifest = {"schema": SCHEMA, "shards": files, "labels": "labels.csv",
                "basis": "W_true.csv", "m": W.shape[0], "rank": args.rank,
                "sigma": sigmas, "kind": args.kind, "seed": args.seed}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print("wrote %d shards (%dx%d each) to %s" % (len(shards), W.shape[0], args.nc, out))
    return 0


def _load_shards(args):
    mats = [io.load_matrix(p, args.format) for p in args.data]
    rows = {M.shape[0] for M in mats}
    if len(rows) != 1:
        raise SystemExit("data files disagree on the number of features: %s" % sorted(rows))
    C = args.workers or len(mats)
    if C == len(mats):
        offsets = np.cumsum([0] + [M.shape[1] for M in mats])
        idx = [np.arange(offsets[c], offsets[c + 1]) for c in range(C)]
        return [DataShard(M) for M in mats], idx
    X = np.concatenate(mats, axis=1)
    idx = partition_indices(X.shape[1], C, args.scheme)
    return [DataShard(X[:, ix]) for ix in idx], idx


def cmd_fit(args):
    shards, idx = _load_shards(args)
    n = sum(s.n for s in shards)
    truth = io.load_labels(args.truth) if args.truth else None
    if truth is not None and truth.size != n:
        raise SystemExit("--truth has %d labels for %d samples" % (truth.size, n))
    runs = []
    for rep in range(args.repeats):
        hp = Hyperparams.from_alpha0(
            args.rank, args.alpha0, lam=args.lam, rho=args.rho, gamma=args.gamma,
            w_tol=args.w_tol, max_w_iters=args.max_w_iters, max_outer=args.max_outer,
            outer_tol=args.outer_tol, seed=args.seed + rep, weighted=args.weighted)
        state, report = fit(shards, RunConfig(args.solver, hp, threads=args.threads))
        pred = np.empty(n, dtype=np.int64)
        for ix, Hc in zip(idx, state.H):
            pred[ix] = assign_clusters(Hc)
        doc = report.to_dict()
        doc["seed"] = hp.seed
        if truth is not None:
            doc["accuracy"] = hungarian_accuracy(pred, truth, args.rank, int(truth.max()) + 1)
        runs.append((doc, state, pred))

    doc, state, pred = runs[0]
    if args.repeats > 1:
        doc = dict(doc)
        doc["repeats"] = [r[0] for r in runs]
        if truth is not None:
            accs = [r[0]["accuracy"] for r in runs]
            doc["accuracy_mean"] = float(np.mean(accs))
            doc["accuracy_std"] = float(np.std(accs))
    if args.metrics_out:
        Path(args.metrics_out).write_text(json.dumps(doc, indent=2))
    if args.labels_out:
        io.save_labels(args.labels_out, pred)
    if args.basis_out:
        io.save_matrix(args.basis_out, state.W)

    last = runs[0][0]
    print("solver=%s workers=%d outer_rounds=%d converged=%s"
          % (args.solver, len(shards), len(last["objective"]), last["converged"]))
    if last["objective"]:
        print("objective: %.10g -> %.10g" % (last["initial_objective"], last["objective"][-1]))
    led = last["ledger"]
    print("communicated entries: %d broadcast, %d collected"
          % (led["broadcasts"], led["collections"]))
    if truth is not None:
        if args.repeats > 1:
            print("accuracy: %.4f +/- %.4f over %d runs"
                  % (doc["accuracy_mean"], doc["accuracy_std"], args.repeats))
        else:
            print("accuracy: %.4f" % last["accuracy"])
    return 0


def cmd_eval(args):
    pred = io.load_labels(args.pred)
    truth = io.load_labels(args.truth)
    if pred.size != truth.size:
        raise SystemExit("label files differ in length: %d vs %d" % (pred.size, truth.size))
    acc = hungarian_accuracy(pred, truth)
    if args.json:
        print(json.dumps({"schema": SCHEMA, "accuracy": acc, "n": int(pred.size)}))
    else:
        print(acc)
    return 0


def cmd_varratio(args):
    solvers = ["admm", "cease"] if args.solver == "both" else [args.solver]
    cfg = noise.VarRatioConfig(rho=args.rho, gamma=args.gamma, seed=args.seed)
    fh = _open_out(args.out)
    try:
        w = csv.writer(fh)
        w.writerow(["s", "solver", "theoretical", "empirical", "reps_used"])
        for solver in solvers:
            for s in range(1, args.s_max + 1):
                r = noise.empirical_variance_ratio(cfg, solver, s, args.reps)
                w.writerow([s, solver, "%.6f" % r.theoretical, "%.6f" % r.empirical, r.reps_used])
                fh.flush()
                logging.info("%s s=%d theoretical=%.4f empirical=%.4f",
                             solver, s, r.theoretical, r.empirical)
    finally:
        if args.out:
            fh.close()
    return 0


def cmd_convergence(args):
    kinds = ["A", "B"] if args.data == "both" else [args.data]
    solvers = list(STRATEGIES) if args.solver == "all" else [args.solver]
    cfg = experiments.ConvergenceConfig(lam=args.lam, rho=args.rho, gamma=args.gamma,
                                        w_tol=args.w_tol, seed=args.seed)
    summary = []
    fh = _open_out(args.out)
    try:
        w = csv.writer(fh)
        w.writerow(["data", "n_c", "solver", "iteration", "objective", "log_objective"])
        for kind in kinds:
            for n_c in args.nc:
                for solver in solvers:
                    q, ok, trace, ledger = experiments.convergence_run(cfg, kind, n_c, solver)
                    for k, obj in enumerate(trace, start=1):
                        w.writerow([kind, n_c, solver, k, "%.12g" % obj, "%.12g" % np.log(obj)])
                    summary.append({"data": kind, "n_c": n_c, "solver": solver, "rounds": q,
                                    "converged": ok, "entries": ledger.entries(solver)})
    finally:
        if args.out:
            fh.close()
    for row in summary:
        print("data=%s n_c=%d %-5s rounds=%d" % (row["data"], row["n_c"], row["solver"],
                                                 row["rounds"]), file=sys.stderr)
    if args.summary_out:
        Path(args.summary_out).write_text(json.dumps({"schema": SCHEMA, "runs": summary},
                                                     indent=2))
    return 0


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "eval": cmd_eval,
            "varratio": cmd_varratio, "convergence": cmd_convergence}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None):
        os.environ["DBMD_THREADS"] = str(args.threads)
    try:
        return COMMANDS[args.command](args)
    except (io.ParseError, ValueError, FloatingPointError, RuntimeError) as exc:
        print("dbmd: error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
