"""Command-line harness: generate datasets, run variants over seeds, compare, profile.

    arcdyn gen --n 9000 --ntest 1000 --d 100 --cond 1e5 --seed 7 --out syn1/
    arcdyn run --data syn1/ --variant dynamic --seeds 20 --out runs/dyn/
    arcdyn compare --ref runs/dyn/summary.json runs/sub/summary.json
    arcdyn profile --solver dyn=runs/dyn/summary.json --solver sub=runs/sub/summary.json

Exit status is 0 on success, 2 on bad input and 3 on numerical breakdown.
"""
import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import arc, data_io, laws, metrics
from .cubic_model import InnerCriterion
from .objective import FiniteSumProblem
from .second_order import run_so

log = logging.getLogger("arcdyn")

TRACE_SCHEMA = "# arcdyn-trace v1"
TRACE_FIELDS = [f.name for f in dataclasses.fields(arc.IterationRecord)] + ["test_loss"]

VARIANT_NAMES = {
    "dynamic": arc.DYNAMIC,
    "safeguarded": arc.SAFEGUARDED,
    "full": arc.FULL,
    "sub": arc.SUB_EPS,
    "kl": arc.KL,
    "fix": arc.FIX_P,
}

# numeric ArcConfig fields settable from a config file or the command line
_FLOAT_KEYS = ("sigma0", "sigma_min", "eta1", "eta2", "gamma1", "gamma2", "gamma3",
               "alpha", "theta", "eps", "C", "delta_bar", "f_rel_stop", "calib_frac")
_INT_KEYS = ("max_iters", "inner_budget")
_RUN_KEYS = {"variant": str, "p": float, "chi": float, "rho": float, "inner": str,
             "inner_theta": float, "seeds": int, "workers": int, "eps_h": float, "so": bool}


class InputError(Exception):
    """Bad files, flags or configuration (exit status 2)."""


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def read_config(path):
    """``key = value`` lines; blank lines and ``#`` comments ignored."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip().replace("-", "_"), value.strip()
        if not sep or not key:
            raise InputError(f"{path}:{lineno}: expected key = value")
        out[key] = _coerce(key, value, f"{path}:{lineno}")
    return out


def _coerce(key, value, where):
    try:
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _INT_KEYS:
            return int(value)
        if key in _RUN_KEYS:
            kind = _RUN_KEYS[key]
            return _bool(value) if kind is bool else kind(value)
    except ValueError as exc:
        raise InputError(f"{where}: bad value for {key}: {exc}") from None
    raise InputError(f"{where}: unknown key {key!r}")


def build_config(settings):
    """ArcConfig from merged settings (defaults < config file < flags)."""
    name = settings.get("variant", "dynamic")
    if name not in VARIANT_NAMES:
        raise InputError(f"unknown variant {name!r}; choose from {', '.join(VARIANT_NAMES)}")
    try:
        variant = arc.HessianVariant(VARIANT_NAMES[name], p=settings.get("p"),
                                     chi=settings.get("chi"), rho=settings.get("rho"))
        inner = InnerCriterion(settings.get("inner", "theta_grad"),
                               settings.get("inner_theta", 0.5))
        kw = {k: settings[k] for k in _FLOAT_KEYS + _INT_KEYS if k in settings}
        return arc.ArcConfig(variant=variant, inner=inner, **kw)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_trace(path, trace, test_losses):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(TRACE_SCHEMA + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        for r, tl in zip(trace.records, test_losses):
            w.writerow([_fmt(getattr(r, n)) for n in TRACE_FIELDS[:-1]] + [_fmt(tl)])


def read_trace(path):
    with open(path, newline="", encoding="utf-8") as fh:
        head = fh.readline().rstrip("\n")
        if head != TRACE_SCHEMA:
            raise InputError(f"{path}: unsupported trace schema {head!r}")
        return list(csv.DictReader(fh))


def write_series(path, trace, test_losses):
    """Whitespace columns for plotting loss, gradient norm and sample size against EGE."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# k cum_EGE f_value grad_norm sample_size test_loss\n")
        for r, tl in zip(trace.records, test_losses):
            fh.write(f"{r.k} {r.cum_EGE!r} {r.f_value!r} {r.grad_norm!r} {r.sample_size} {tl!r}\n")


def load_split(args):
    """Training and test problems from --data DIR or --train/--test paths."""
    if args.data:
        ext = "csv" if args.format == "csv" else "libsvm"
        train = os.path.join(args.data, f"train.{ext}")
        test = os.path.join(args.data, f"test.{ext}")
    else:
        train, test = args.train, args.test
    if not train or not test:
        raise InputError("give --data DIR or both --train and --test")
    try:
        if args.format == "csv":
            Xtr, ytr = data_io.read_csv(train)
            Xte, yte = data_io.read_csv(test)
        else:
            with open(train, encoding="utf-8") as fh:
                raw_tr = data_io.parse_libsvm(fh.read())
            with open(test, encoding="utf-8") as fh:
                raw_te = data_io.parse_libsvm(fh.read())
            d = max(raw_tr.d, raw_te.d)
            Xtr, ytr = data_io.to_dense(raw_tr, d)
            Xte, yte = data_io.to_dense(raw_te, d)
    except OSError as exc:
        raise InputError(str(exc)) from None
    except data_io.ParseError as exc:
        raise InputError(f"{exc}") from None
    if Xtr.shape[1] != Xte.shape[1]:
        raise InputError("train and test have different feature counts")
    try:
        if args.scale == "none":
            return data_io.make_split(Xtr, ytr, Xte, yte, scale=False)
        return data_io.make_split(Xtr, ytr, Xte, yte, scale=True, leak=args.scale == "joint")
    except ValueError as exc:
        raise InputError(str(exc)) from None


def run_one(job):
    """Worker entry: one seed of one variant; returns everything needed to write outputs."""
    train, test, cfg, seed, so, eps_h = job
    losses = []

    def on_record(rec, state):
        losses.append(metrics.testing_loss(test, state.x))

    if so:
        trace = run_so(train, cfg, eps_H=eps_h, seed=seed, callback=on_record)
    else:
        trace = arc.run(train, cfg, seed=seed, callback=on_record)
    return trace, losses


def _settings(args, keys):
    merged = {}
    if getattr(args, "config", None):
        merged.update(read_config(args.config))
    for key in keys:
        v = getattr(args, key, None)
        if v is not None:
            merged[key] = v
    return merged


def _seed_list(args, settings):
    if args.seed_list:
        try:
            seeds = [int(s) for s in args.seed_list.split(",") if s.strip()]
        except ValueError:
            raise InputError("--seed-list must be comma-separated integers") from None
    else:
        seeds = list(range(settings.get("seeds", 1)))
    if not seeds:
        raise InputError("no seeds given")
    return seeds


def run_jobs(jobs, workers):
    if workers <= 1 or len(jobs) == 1:
        return [run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_one, jobs))


def cmd_gen(args):
    try:
        X, y, _ = data_io.synthetic_arrays(args.n, args.ntest, args.d, args.cond, args.seed,
                                           signal=args.signal)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if args.ntest < 1:
        raise InputError("--ntest must be at least 1")
    Xtr, Xte = data_io.scale_pair(X[:args.n], X[args.n:], leak=not args.no_leak)
    try:
        os.makedirs(args.out, exist_ok=True)
        data_io.write_libsvm(os.path.join(args.out, "train.libsvm"), Xtr, y[:args.n])
        data_io.write_libsvm(os.path.join(args.out, "test.libsvm"), Xte, y[args.n:])
        with open(os.path.join(args.out, "manifest"), "w", encoding="utf-8") as fh:
            for k, v in (("N", args.n), ("N_T", args.ntest), ("d", args.d),
                         ("cond_target", repr(float(args.cond))), ("seed", args.seed),
                         ("signal", repr(float(args.signal))),
                         ("scaling", "train" if args.no_leak else "joint")):
                fh.write(f"{k} = {v}\n")
    except OSError as exc:
        raise InputError(f"cannot write to {args.out}: {exc}") from None
    log.info("wrote %s", args.out)
    return 0


def cmd_run(args):
    settings = _settings(args, _FLOAT_KEYS + _INT_KEYS + tuple(_RUN_KEYS))
    cfg = build_config(settings)
    seeds = _seed_list(args, settings)
    split = load_split(args)
    so = bool(settings.get("so", False))
    eps_h = settings.get("eps_h")
    jobs = [(split.train, split.test, cfg, s, so, eps_h) for s in seeds]
    try:
        results = run_jobs(jobs, settings.get("workers", 1))
    except (FloatingPointError, arc.DegenerateStep) as exc:
        log.error("numerical breakdown: %s", exc)
        return 3
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot write to {args.out}: {exc}") from None
    runs = []
    breakdown = False
    for seed, (trace, losses) in zip(seeds, results):
        write_trace(os.path.join(args.out, f"trace_seed{seed}.csv"), trace, losses)
        if args.series:
            write_series(os.path.join(args.out, f"series_seed{seed}.dat"), trace, losses)
        violations = laws.check_trace(trace, cfg) if args.check else []
        for v in violations:
            log.warning("seed %d: %s at k=%d: %s", seed, v.law, v.k, v.detail)
        breakdown |= trace.status == arc.INNER_FAILURE
        runs.append({
            "seed": seed,
            "status": trace.status,
            "n_iter": trace.iterations,
            "ege": trace.final_ege,
            "f_final": trace.records[-1].f_value,
            "grad_norm": trace.records[-1].grad_norm,
            "test_loss": metrics.testing_loss(split.test, trace.x_final),
            "classification_rate": metrics.classification_rate(split.test, trace.x_final),
            "law_violations": len(violations),
        })
    summary = {
        "schema": 1,
        "dataset": args.name or (os.path.normpath(args.data) if args.data else args.train),
        "variant": settings.get("variant", "dynamic"),
        "second_order": so,
        "N": split.train.N,
        "d": split.train.d,
        "mean_n_iter": math.fsum(r["n_iter"] for r in runs) / len(runs),
        "mean_ege": math.fsum(r["ege"] for r in runs) / len(runs),
        "runs": runs,
    }
    with open(os.path.join(args.out, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{summary['variant']}: n-iter {summary['mean_n_iter']:.1f}  EGE {summary['mean_ege']:.1f}"
          f"  over {len(runs)} seed(s)")
    return 3 if breakdown else 0


def _load_summary(path):
    try:
        with open(path, encoding="utf-8") as fh:
            s = json.load(fh)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read summary {path}: {exc}") from None
    if "runs" not in s:
        raise InputError(f"{path} is not a run summary")
    return s


def compare_summaries(ref, others):
    rows = []
    ref_ege = [r["ege"] for r in ref["runs"]]
    for s in [ref] + others:
        ege = [r["ege"] for r in s["runs"]]
        if len(ege) != len(ref_ege):
            raise InputError(f"{s['variant']} has {len(ege)} seeds, reference has {len(ref_ege)}")
        if [r["seed"] for r in s["runs"]] != [r["seed"] for r in ref["runs"]]:
            raise InputError(f"{s['variant']} was run on different seeds than the reference")
        sv = metrics.savings_summary(ref_ege, ege)
        rows.append({"variant": s["variant"], "mean_n_iter": s["mean_n_iter"],
                     "mean_ege": s["mean_ege"], **sv})
    return rows


def cmd_compare(args):
    ref = _load_summary(args.ref)
    others = [_load_summary(p) for p in args.summaries]
    if not others:
        raise InputError("need at least one summary besides the reference")
    rows = compare_summaries(ref, others)
    fields = ["variant", "mean_n_iter", "mean_ege", "save_w", "save_b", "save_m"]
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r[f]) for f in fields])
    finally:
        if args.out:
            out.close()
    return 0


def profile_matrix(solvers):
    """Cost matrix over the union of (dataset, seed) problems; failures cost inf."""
    tables = {}
    for name, paths in solvers:
        table = {}
        for p in paths:
            s = _load_summary(p)
            for r in s["runs"]:
                ok = r["status"] in (arc.CONVERGED, arc.STAGNATED)
                table[(s["dataset"], r["seed"])] = r["ege"] if ok else math.inf
        tables[name] = table
    problems = sorted(set().union(*(t.keys() for t in tables.values())), key=str)
    for name, t in tables.items():
        missing = [p for p in problems if p not in t]
        if missing:
            raise InputError(f"solver {name} has no run for problem {missing[0]}")
    return problems, np.array([[tables[n][p] for n, _ in solvers] for p in problems])


def cmd_profile(args):
    solvers = []
    for spec in args.solver:
        name, sep, paths = spec.partition("=")
        if not sep or not name or not paths:
            raise InputError(f"--solver expects NAME=summary.json[,summary.json...], got {spec!r}")
        solvers.append((name, paths.split(",")))
    if len(solvers) < 2:
        raise InputError("need at least two solvers")
    if not args.tau_max >= 1 or args.points < 1:
        raise InputError("need --tau-max >= 1 and --points >= 1")
    _, E = profile_matrix(solvers)
    taus = np.linspace(1.0, args.tau_max, args.points) if args.points > 1 else [1.0]
    points = metrics.performance_profile(E, taus)
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["tau"] + [n for n, _ in solvers])
        for pt in points:
            w.writerow([_fmt(pt.tau)] + [_fmt(v) for v in pt.rho])
    finally:
        if args.out:
            out.close()
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="arcdyn", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic ill-conditioned dataset")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--ntest", type=int, required=True)
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--cond", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--signal", type=float, default=5.0)
    g.add_argument("--no-leak", action="store_true", help="scale test rows with training extrema")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run one variant over several seeds")
    r.add_argument("--data", help="directory holding train.* and test.*")
    r.add_argument("--train")
    r.add_argument("--test")
    r.add_argument("--format", choices=("libsvm", "csv"), default="libsvm")
    r.add_argument("--scale", choices=("none", "joint", "train"), default="none")
    r.add_argument("--name", help="dataset name recorded in the summary")
    r.add_argument("--config", help="file of key = value lines")
    r.add_argument("--variant", choices=tuple(VARIANT_NAMES))
    r.add_argument("--p", type=float)
    r.add_argument("--chi", type=float)
    r.add_argument("--rho", type=float)
    r.add_argument("--C", type=float)
    r.add_argument("--inner", choices=("theta_grad", "min_square", "step_scaled"))
    r.add_argument("--inner-theta", dest="inner_theta", type=float)
    for key in _FLOAT_KEYS:
        if key not in ("C",):
            r.add_argument("--" + key.replace("_", "-"), dest=key, type=float)
    for key in _INT_KEYS:
        r.add_argument("--" + key.replace("_", "-"), dest=key, type=int)
    r.add_argument("--seeds", type=int, help="run seeds 0..SEEDS-1")
    r.add_argument("--seed-list", help="explicit comma-separated seeds")
    r.add_argument("--workers", type=int)
    r.add_argument("--so", action="store_const", const=True, help="second-order variant")
    r.add_argument("--eps-h", dest="eps_h", type=float)
    r.add_argument("--series", action="store_true", help="also write plot-ready series")
    r.add_argument("--check", action="store_true", help="check trace laws and report violations")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="savings of a reference run against others")
    c.add_argument("--ref", required=True, help="reference summary.json")
    c.add_argument("summaries", nargs="+")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    p = sub.add_parser("profile", help="performance profile over EGE at termination")
    p.add_argument("--solver", action="append", default=[], help="NAME=summary.json[,...]")
    p.add_argument("--tau-max", dest="tau_max", type=float, default=4.0)
    p.add_argument("--points", type=int, default=61)
    p.add_argument("--out")
    p.set_defaults(func=cmd_profile)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        log.error("%s", exc)
        return 2
    except (FloatingPointError, arc.DegenerateStep) as exc:
        log.error("numerical breakdown: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
