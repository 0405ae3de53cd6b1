"""Command-line entry point: ``adaptmas <subcommand> ...``.

Exit codes: 0 on success, 2 for usage problems (bad flags, missing files,
invalid configs), 3 for data errors raised while computing. Failures
print ``ERR <name>`` on stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

from . import analysis, config as cfgmod, population
from .diagnostics import classify_trajectory
from .engine import replicate, split_seed, write_summary
from .exceptions import AdaptMASError, DataError, SchemaError
from .scenarios import build_scenario


class UsageError(Exception):
    name = "Usage"


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _need_file(path):
    if path is None or not Path(path).is_file():
        raise FileNotFoundError(path)
    return path


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args):
    raw = cfgmod.load(_need_file(args.config))
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        raw["workers"] = args.workers
    if getattr(args, "do", None):
        try:
            raw["intervention"] = cfgmod.parse_assignments(args.do)
        except ValueError as exc:
            raise SchemaError("intervention", str(exc)) from None
    return raw


def _pool_map(workers, fn, items):
    workers = workers or os.cpu_count() or 1
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args):
    marg = population.read_marginals(_need_file(args.marginals))
    dims = [m.dimension_name for m in marg]
    seed = population.read_microdata(_need_file(args.microdata), dims)
    raw = cfgmod.load(_need_file(args.config)) if args.config else cfgmod.resolve({})
    weights = population.ipf_fit(seed, marg)
    pop = population.sample_population(weights, seed, args.n, split_seed(args.seed, "sample"))
    pop = population.impute_missing(pop, seed, dims, split_seed(args.seed, "impute"))
    priors = [
        population.AttributePrior.from_spec("theta", raw["agents"]["theta"]),
        population.AttributePrior.from_spec("eta", raw["agents"]["eta"]),
    ]
    pop = population.draw_behavioral_attributes(pop, priors, split_seed(args.seed, "attributes"))
    nodes = raw["environment"]["nodes"]
    pop["node"] = np.random.default_rng(split_seed(args.seed, "nodes")).integers(0, nodes, len(pop)) if nodes > 1 else 0
    out = _outdir(args) / "population.csv"
    population.write_population(pop.drop(columns="_record"), out, dims)
    print(out)
    return 0


def cmd_simulate(args):
    raw = _load_config(args)
    sc = build_scenario(raw)
    res = replicate(sc, args.replications)
    out = _outdir(args)
    h = sc.fingerprint
    for r, rec in enumerate(res.records):
        rec.to_csv(out / f"run_{h}_r{r:03d}.csv")
    summary = res.summary()
    summary.update({"config_hash": h, "regime": sc.regime.value, "replications": len(res.records)})
    write_summary(summary, out / f"summary_{h}.json")
    print(json.dumps({"config_hash": h, "mean_J": res.mean_J, "var_J": res.var_J}, sort_keys=True))
    return 0


def _sweep_job(job):
    cfg, point_id, _regime, diag = job
    sc = build_scenario(cfg)
    res = replicate(sc, workers=1)
    rows = []
    for r, rec in enumerate(res.records):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            info, kind = analysis.diagnose_record(rec, diag)
        run_id = f"{sc.fingerprint}-p{point_id:04d}-{sc.regime.value}-r{r:03d}"
        rows.append(analysis.extract_features(rec, info, run_id, f"p{point_id:04d}", kind))
    return rows


def sweep_rows(raw, workers=None):
    spec = raw.get("sweep") or {}
    space = {k: tuple(v) for k, v in (spec.get("parameters") or {}).items()}
    points = analysis.sample_design(
        space,
        spec.get("method", "grid"),
        spec.get("levels", 3),
        spec.get("n", 10),
        spec.get("seed", 0),
        spec.get("max_points", 100_000),
    )
    regimes = spec.get("regimes") or [raw["regime"]]
    jobs = []
    for i, pt in enumerate(points):
        for regime in regimes:
            cfg = dict(raw, regime=regime, sweep=None)
            for path, v in pt.items():
                cfg = cfgmod.set_path(cfg, path, v)
            cfg = _coerce_ints(cfg, pt)
            cfgmod.resolve(cfg)
            jobs.append((cfg, i, regime, raw["diagnostics"]))
    nested = _pool_map(workers or raw.get("workers"), _sweep_job, jobs)
    return [row for rows in nested for row in rows]


def _coerce_ints(cfg, pt):
    # integer-typed fields receive rounded design values
    for path in pt:
        for key in ("agents.n", "horizon", "window", "environment.nodes", "search.epoch"):
            if path == key:
                node = cfg
                parts = path.split(".")
                for p in parts[:-1]:
                    node = node[p]
                node[parts[-1]] = int(round(node[parts[-1]]))
    return cfg


def cmd_sweep(args):
    raw = _load_config(args)
    h = cfgmod.fingerprint(cfgmod.resolve(raw))
    rows = sweep_rows(raw, args.workers)
    out = _outdir(args) / f"features_{h}.csv"
    analysis.write_features(rows, out)
    print(out)
    return 0


def cmd_diagnose(args):
    df = pd.read_csv(_need_file(args.input))
    if args.column not in df.columns:
        raise UsageError(f"column {args.column!r} not in {list(df.columns)}")
    y = df[args.column].to_numpy(dtype=float)[args.burn_in :]
    info = analysis.diagnose_series(y, args.alphabet, args.max_length, args.alpha, args.min_count)
    try:
        kind = classify_trajectory(y)
    except DataError:
        kind = None
    result = dict(info.as_dict(), machine_h_mu=info.machine_h_mu, classification=kind, n=int(y.size))
    text = json.dumps(result, sort_keys=True, indent=2)
    if args.out:
        path = _outdir(args) / (Path(args.input).stem + "_diagnostics.json")
        path.write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_cluster(args):
    df = analysis.read_features(_need_file(args.features))
    if len(df) < max(2, args.k):
        raise DataError(f"need at least {max(2, args.k)} feature rows")
    Z = analysis.standardize(df[analysis.FEATURES].to_numpy(dtype=float))[0]
    if args.pca is not None:
        Z = analysis.pca(Z, args.pca)[2]
    if args.method == "gmm":
        labels = analysis.GaussianMixture(args.k, random_state=args.seed).fit(Z).responsibilities_.argmax(axis=1)
    else:
        labels = analysis.kmeans(Z, args.k, args.restarts, args.seed)[0]
    truth = df["label"].astype(str).to_numpy() if "label" in df.columns else None
    rep = analysis.cluster_report(df, labels, truth)
    rep_json = {
        "k": args.k,
        "method": args.method,
        "clusters": json.loads(rep["clusters"].to_json(orient="index")),
        "silhouette": {str(k): v for k, v in analysis.silhouette_guide(Z, rng_seed=args.seed).items()},
    }
    if "ari" in rep:
        rep_json["ari"] = rep["ari"]
    out = _outdir(args)
    stem = Path(args.features).stem
    pd.DataFrame({"run_id": df["run_id"], "cluster": labels}).to_csv(out / f"{stem}_clusters.csv", index=False, lineterminator="\n")
    (out / f"{stem}_clusters.json").write_text(json.dumps(rep_json, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({k: rep_json[k] for k in ("k", "ari") if k in rep_json}, sort_keys=True))
    return 0


class _MorrisEvaluator:
    def __init__(self, raw):
        self.raw = raw

    def __call__(self, point):
        cfg = self.raw
        for path, v in point.items():
            cfg = cfgmod.set_path(cfg, path, v)
        return replicate(build_scenario(cfg), workers=1).mean_J


def cmd_morris(args):
    raw = _load_config(args)
    spec = raw.get("morris")
    if not spec or not spec.get("parameters"):
        raise SchemaError("morris", "config has no morris section")
    base = dict(raw, morris=None)
    h = cfgmod.fingerprint(cfgmod.resolve(raw))
    space = {k: tuple(v) for k, v in spec["parameters"].items()}
    workers = args.workers or raw.get("workers") or 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            res = analysis.morris_screen(
                _MorrisEvaluator(base), space, spec.get("trajectories", 10), spec.get("levels", 4), spec.get("seed", 0), ex.map
            )
    else:
        res = analysis.morris_screen(_MorrisEvaluator(base), space, spec.get("trajectories", 10), spec.get("levels", 4), spec.get("seed", 0))
    out = _outdir(args) / f"morris_{h}.csv"
    res.frame().to_csv(out, index=False, lineterminator="\n", float_format="%.17g")
    print(res.frame().to_string(index=False))
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="adaptmas", description="Policy/agent co-adaptation simulator and diagnostics.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="synthesize a population from marginals and seed microdata")
    s.add_argument("--marginals", required=True)
    s.add_argument("--microdata", required=True)
    s.add_argument("--n", type=_positive_int, required=True)
    s.add_argument("--seed", type=_u64, default=0)
    s.add_argument("--config", help="optional config supplying theta/eta priors and node count")
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_synth)

    for name, func, helptext in (
        ("simulate", cmd_simulate, "run R replications of a config"),
        ("sweep", cmd_sweep, "run a design sweep and write run features"),
        ("morris", cmd_morris, "Morris elementary-effects screening of J"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", required=True)
        s.add_argument("--seed", type=_u64)
        s.add_argument("--out", default=".")
        s.add_argument("--do", help="pin policy coordinates, e.g. lambda=2.0,tau=0.8")
        s.add_argument("--workers", type=_positive_int)
        if name == "simulate":
            s.add_argument("--replications", type=_positive_int)
        s.set_defaults(func=func)

    s = sub.add_parser("diagnose", help="information measures of one CSV column")
    s.add_argument("--input", required=True)
    s.add_argument("--column", default="aggregate")
    s.add_argument("--alphabet", type=int, default=2)
    s.add_argument("--max-length", type=_positive_int)
    s.add_argument("--alpha", type=float, default=0.005)
    s.add_argument("--min-count", type=_positive_int, default=10)
    s.add_argument("--burn-in", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("cluster", help="cluster a features CSV")
    s.add_argument("--features", required=True)
    s.add_argument("--k", type=_positive_int, default=2)
    s.add_argument("--method", choices=("kmeans", "gmm"), default="kmeans")
    s.add_argument("--restarts", type=_positive_int, default=10)
    s.add_argument("--pca", type=float, help="keep components reaching this explained-variance fraction")
    s.add_argument("--seed", type=_u64, default=0)
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_cluster)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage; --help exits 0
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        where = exc.filename or (exc.args[0] if exc.args else "")
        print(f"ERR FileNotFound {where}".rstrip(), file=sys.stderr)
        return 2
    except (SchemaError, UsageError) as exc:
        print(f"ERR {exc.name} {exc}", file=sys.stderr)
        return 2
    except AdaptMASError as exc:
        print(f"ERR {exc.name} {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, pd.errors.ParserError) as exc:
        print(f"ERR {type(exc).__name__} {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
