"""``pcpq`` command line: gen, build, ground-truth, query, eval.

Exit codes: 0 ok, 2 usage or configuration error, 3 data error (missing or
malformed files), 4 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .core import ConfigError, DataError, Method, PQConfig
from .evaluation import DegenerateQueryError, brute_force_topN, evaluate, rank_desc
from .ivf import IVFIndex, build_ivf, load_any, query_ivf, save_any, score_ivf_all
from .numerics import DegenerateClusterError
from .pq_index import IndexFormatError, OpCounter, PQIndex, build_pq_index, score_all
from .synth import DISTRIBUTIONS, generate
from .vecio import VecFormatError, read_dataset, read_ivecs, write_fvecs, write_ivecs

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

METHODS = {"kmeans": Method.KMEANS, "scann": Method.ANISO,
           "pcpq": Method.PCPQ, "apcpq": Method.APCPQ}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> list:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("values must be positive integers")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pcpq", description="Projective-clustering product quantization for MIPS.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic fvecs dataset")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--dist", choices=DISTRIBUTIONS, default="gaussian")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    b = sub.add_parser("build", help="train an index over an fvecs dataset")
    b.add_argument("--data", required=True)
    b.add_argument("--method", choices=sorted(METHODS), default="kmeans")
    b.add_argument("--quantize-scalars", action="store_true",
                   help="store projective scalars as s-entry codebook codes")
    b.add_argument("--m", type=int, required=True)
    b.add_argument("--k", type=int, default=16, help="16 for the 4-bit setting, 256 for 8-bit")
    b.add_argument("--s", type=int, default=8)
    b.add_argument("--t-frac", type=float, default=0.2)
    b.add_argument("--iters", type=int, default=20)
    b.add_argument("--tol", type=float, default=1e-6)
    b.add_argument("--ivf-kbar", type=int, default=0,
                   help="number of coarse clusters; 0 builds a flat index")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)

    t = sub.add_parser("ground-truth", help="exact top-N ids by inner product")
    t.add_argument("--data", required=True)
    t.add_argument("--queries", required=True)
    t.add_argument("--topN", type=int, default=100)
    t.add_argument("--out", required=True)

    q = sub.add_parser("query", help="approximate top-N ids for each query")
    q.add_argument("--index", required=True)
    q.add_argument("--queries", required=True)
    q.add_argument("--kprobe", type=int, default=0, help="clusters to probe; 0 probes all")
    q.add_argument("--topN", type=int, default=10)
    q.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="Recall1@N and top-1 relative error report")
    e.add_argument("--results", required=True)
    e.add_argument("--ground-truth", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--queries", required=True)
    e.add_argument("--recall-at", type=_int_list, default=[1, 10])
    e.add_argument("--index", help="index file; enables the relative-error metric")
    e.add_argument("--report", required=True, help="JSON output; a CSV is written next to it")
    e.add_argument("--timings", action="store_true", help="include wall-clock times in the JSON")
    return p


def _cmd_gen(args) -> None:
    write_fvecs(generate(args.n, args.d, args.dist, args.seed), args.out)


def _cmd_build(args) -> None:
    X = read_dataset(args.data).data
    cfg = PQConfig(m=args.m, k=args.k, s=args.s, method=METHODS[args.method],
                   quantize_scalars=args.quantize_scalars, t_frac=args.t_frac,
                   max_iters=args.iters, tol=args.tol, seed=args.seed)
    if args.ivf_kbar < 0:
        raise ConfigError("--ivf-kbar must be >= 0")
    if args.ivf_kbar:
        index = build_ivf(X, args.ivf_kbar, cfg, seed=args.seed)
    else:
        index = build_pq_index(X, cfg)
    save_any(index, args.out)


def _read_queries(path, index) -> np.ndarray:
    Q = read_dataset(path).data
    if Q.shape[1] != index.d:
        raise DataError(f"queries have dimension {Q.shape[1]}, index expects {index.d}")
    return Q


def _cmd_ground_truth(args) -> None:
    X = read_dataset(args.data).data
    Q = read_dataset(args.queries).data
    if Q.shape[1] != X.shape[1]:
        raise DataError(f"queries have dimension {Q.shape[1]}, data has {X.shape[1]}")
    if not 1 <= args.topN <= X.shape[0]:
        raise ConfigError(f"--topN must be between 1 and n={X.shape[0]}")
    ids = np.stack([brute_force_topN(X, q, args.topN)[0] for q in Q])
    write_ivecs(ids.astype(np.int32), args.out)


def _search(index, q, kprobe: int, topN: int) -> np.ndarray:
    if isinstance(index, IVFIndex):
        return query_ivf(q, index, kprobe or index.kbar, topN).ids
    return rank_desc(score_all(q, index), topN)


def _cmd_query(args) -> None:
    index = load_any(args.index)
    Q = _read_queries(args.queries, index)
    if args.topN < 1:
        raise ConfigError("--topN must be >= 1")
    if isinstance(index, IVFIndex) and not 0 <= args.kprobe <= index.kbar:
        raise ConfigError(f"--kprobe must be between 1 and kbar={index.kbar}")
    out = np.full((Q.shape[0], args.topN), -1, dtype=np.int32)
    for i, q in enumerate(Q):
        ids = _search(index, q, args.kprobe, args.topN)
        out[i, :ids.size] = ids
    write_ivecs(out, args.out)


def _index_summary(index) -> dict:
    if isinstance(index, IVFIndex):
        pqs = [s for s in index.sub_indexes if isinstance(s, PQIndex)]
        base = max(pqs, key=lambda s: s.k).config if pqs else None
        info = {"kind": "ivf", "kbar": index.kbar}
    else:
        base = index.config
        info = {"kind": "flat"}
    if base is not None:
        info.update(method=Method.parse(base.method).name, label=base.label,
                    bits=base.bits_label, m=base.m, k=base.k, s=base.s,
                    quantize_scalars=base.quantize_scalars)
    return info


def _cmd_eval(args) -> None:
    X = read_dataset(args.data).data
    Q = read_dataset(args.queries).data
    results = read_ivecs(args.results)
    truth = read_ivecs(args.ground_truth)
    if Q.shape[1] != X.shape[1]:
        raise DataError(f"queries have dimension {Q.shape[1]}, data has {X.shape[1]}")
    if results.shape[0] != Q.shape[0] or truth.shape[0] != Q.shape[0]:
        raise DataError(f"{Q.shape[0]} queries but {results.shape[0]} result rows and "
                        f"{truth.shape[0]} ground-truth rows")
    if results.max(initial=-1) >= X.shape[0] or truth.max(initial=-1) >= X.shape[0]:
        raise DataError("result or ground-truth ids exceed the dataset size")
    score_fn = None
    counter = OpCounter()
    index = None
    if args.index:
        index = load_any(args.index)
        if index.d != X.shape[1] or index.n != X.shape[0]:
            raise DataError("index does not match the dataset shape")
        if isinstance(index, IVFIndex):
            score_fn = lambda q: score_ivf_all(q, index, counter)  # noqa: E731
        else:
            score_fn = lambda q: score_all(q, index, counter=counter)  # noqa: E731
    start = time.perf_counter()
    report = evaluate(list(results), score_fn, X, Q, recall_at=args.recall_at)
    for qi, row in enumerate(report.per_query):
        exact = X[int(truth[qi, 0])].astype(np.float64) @ Q[qi].astype(np.float64)
        if not np.isclose(exact, row["exact_top1_score"], rtol=1e-9, atol=1e-12):
            raise DataError(f"query {qi}: ground truth does not match the data")
    report.wall_times["eval_seconds"] = time.perf_counter() - start
    report.config = {"n": int(X.shape[0]), "d": int(X.shape[1]), "queries": int(Q.shape[0]),
                     "recall_at": list(args.recall_at)}
    if index is not None:
        report.config["index"] = _index_summary(index)
        report.op_counters = counter.as_dict()
    report.write_json(args.report, include_timings=args.timings)
    report.write_csv(os.path.splitext(args.report)[0] + ".csv")
    print(f"recall1@N {report.recall1_at}  mean relative error {report.mean_relative_error}")


COMMANDS = {"gen": _cmd_gen, "build": _cmd_build, "ground-truth": _cmd_ground_truth,
            "query": _cmd_query, "eval": _cmd_eval}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        COMMANDS[args.command](args)
    except (ConfigError, argparse.ArgumentTypeError) as exc:
        print(f"pcpq {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, VecFormatError, IndexFormatError, OSError) as exc:
        print(f"pcpq {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DegenerateClusterError, DegenerateQueryError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"pcpq {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"pcpq {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
