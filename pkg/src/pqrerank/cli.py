"""Command-line pipeline: gen, train, build, groundtruth, search, eval, bench."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .adc import adc_build, map_queries
from .evaluation import (METHODS, compute_groundtruth, recall_curve, reports_table,
                         reports_tsv, run_experiment, make_searcher)
from .ivf import IvfIndex, ivf_build, ivf_refine_encode, ivf_refine_train, ivf_train
from .quant import TrainParams, pq_train
from .refine import refine_encode, refine_train

log = logging.getLogger("pqrerank")


def _ranks(text: str) -> list[int]:
    return sorted(int(x) for x in text.split(","))


def _params(args) -> TrainParams:
    return TrainParams(iterations=args.iterations, seed=args.seed, redo=args.redo)


def cmd_gen(args):
    data = io.generate_synthetic(args.nlearn + args.nq + args.n, args.d, args.clusters, args.seed,
                                 decay=args.decay)
    io.write_vectors(data[:args.nlearn], args.learn, "fvecs")
    io.write_vectors(data[args.nlearn:args.nlearn + args.nq], args.queries, "fvecs")
    io.write_vectors(data[args.nlearn + args.nq:], args.base, "fvecs")
    log.info("wrote %d learn, %d query, %d base vectors (d=%d)", args.nlearn, args.nq, args.n, args.d)


def cmd_train(args):
    learn = io.read_vectors(args.learn, args.kind)
    if args.max_learn:
        learn = learn[:args.max_learn]
    _check_train(args, learn.shape[1])
    params = _params(args)
    # first half trains the first stage, second half the refinement quantizer
    half = len(learn) // 2 if args.mprime else len(learn)
    first, second = learn[:half], learn[half:]
    coarse, rq = None, None
    if args.coarse:
        coarse, pq = ivf_train(first, args.coarse, args.m, args.ks, params)
        log.info("coarse quantizer c=%d mse=%.6g", coarse.k, coarse.mse)
    else:
        pq = pq_train(first, args.m, args.ks, params)
    log.info("first-stage quantizer m=%d ks=%d mse=%.6g", pq.m, pq.ks, pq.mse)
    if args.mprime:
        if coarse is not None:
            rq = ivf_refine_train(coarse, pq, second, args.mprime, params, args.ks)
        else:
            rq = refine_train(pq, second, args.mprime, params, args.ks)
        log.info("refinement quantizer m'=%d mse=%.6g", rq.m, rq.mse)
    io.save_model(io.Model(pq, rq, coarse), args.out)


def _check_train(args, d: int):
    if args.m < 1 or d % args.m:
        raise ValueError(f"dimension not divisible: d={d}, m={args.m}")
    if args.mprime < 0 or (args.mprime and d % args.mprime):
        raise ValueError(f"dimension not divisible: d={d}, m'={args.mprime}")
    if not 1 <= args.ks <= 256:
        raise ValueError("ks must be in [1, 256]")
    if args.coarse < 0 or args.iterations < 1 or args.redo < 1:
        raise ValueError("c must be >= 0, iterations and redo >= 1")


def cmd_build(args):
    model = io.load_model(args.model)
    base = io.read_vectors(args.base, args.kind)
    if base.shape[1] != model.pq.d:
        raise ValueError(f"dimension mismatch: quantizer d={model.pq.d}, base d={base.shape[1]}")
    if model.coarse is not None:
        index = ivf_build(model.coarse, model.pq, base, args.threads)
        if model.refine is not None:
            ivf_refine_encode(index, model.refine, base, args.threads)
    else:
        index = adc_build(model.pq, base, args.threads)
        if model.refine is not None:
            refine_encode(index, model.refine, base, args.threads)
    io.save_index(index, args.out)
    log.info("indexed n=%d vectors, %d bytes/vector", index.n, index.bytes_per_vector)


def cmd_groundtruth(args):
    base = io.read_vectors(args.base, args.kind)
    queries = io.read_vectors(args.queries, args.kind)
    gt = compute_groundtruth(base, queries, args.k, args.threads)
    io.save_groundtruth(gt, args.out, args.dists)
    log.info("ground truth for %d queries, k=%d", len(gt), gt.ids.shape[1])


def _default_method(index, refine: bool) -> str:
    ivf = "IVF" if isinstance(index, IvfIndex) else ""
    return f"{ivf}ADC" + ("+R" if refine and index.refine is not None else "")


def _check_method(index, method: str, v: int):
    if v and not isinstance(index, IvfIndex):
        raise ValueError("--v requires an IVF index")
    if method.startswith("IVF") and not v:
        raise ValueError(f"{method} requires --v")


def cmd_search(args):
    index = io.load_index(args.index)
    queries = io.read_vectors(args.queries, args.kind)
    if args.nq:
        queries = queries[:args.nq]
    method = args.method or _default_method(index, True)
    v = args.v if args.v is not None else (8 if isinstance(index, IvfIndex) else 0)
    _check_method(index, method, v)
    kprime = args.kprime or 2 * args.k
    search = make_searcher(index, method, args.k, kprime, v)
    results = map_queries(search, queries, args.threads)
    out = sys.stdout
    for qi, res in enumerate(results):
        pairs = " ".join(f"{i}:{d:.6g}" for i, d in res)
        out.write(f"{qi}\t{pairs}\n")
    if args.out:
        width = max((len(r) for r in results), default=0)
        ids = np.full((len(results), width), -1, dtype=np.int32)
        for qi, res in enumerate(results):
            ids[qi, :len(res)] = res.ids
        io.write_vectors(ids, args.out, "ivecs")


def cmd_eval(args):
    results = io.read_vectors(args.results, "ivecs")
    gt = io.load_groundtruth(args.gt)
    if args.nq:
        results, gt = results[:args.nq], gt.head(args.nq)
    curve = recall_curve(list(results), gt, _ranks(args.ranks))
    lines = ["r\trecall"] + [f"{r}\t{rec:.4f}" for r, rec in curve]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        with io.atomic_write(args.out) as f:
            f.write(text.encode())


def cmd_bench(args):
    index = io.load_index(args.index)
    queries = io.read_vectors(args.queries, args.kind)
    gt = io.load_groundtruth(args.gt)
    ivf = isinstance(index, IvfIndex)
    methods = args.methods.split(",") if args.methods else (
        [m for m in METHODS if m.startswith("IVF") == ivf and (not m.endswith("+R") or index.refine is not None)])
    v = args.v if args.v is not None else (8 if ivf else 0)
    reports = []
    for method in methods:
        _check_method(index, method, v)
        reports.append(run_experiment(index, queries, gt, method, args.k, args.kprime or 2 * args.k,
                                      v, args.nq))
    sys.stdout.write(reports_table(reports, timing=not args.no_timing))
    if args.tsv:
        with io.atomic_write(args.tsv) as f:
            f.write(reports_tsv(reports, timing=not args.no_timing).encode())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pqrerank", description=__doc__)
    p.add_argument("--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(fn=fn)
        sp.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--kind", choices=sorted(io.KINDS), help="vector file kind (default: from extension)")
        return sp

    sp = add("gen", cmd_gen, "write a synthetic learn/query/base set")
    sp.add_argument("--n", type=int, default=100_000)
    sp.add_argument("--nq", type=int, default=1000)
    sp.add_argument("--nlearn", type=int, default=50_000)
    sp.add_argument("--d", type=int, default=128)
    sp.add_argument("--clusters", type=int, default=1024)
    sp.add_argument("--decay", type=float, default=0.0)
    sp.add_argument("--learn", type=Path, required=True)
    sp.add_argument("--queries", type=Path, required=True)
    sp.add_argument("--base", type=Path, required=True)

    sp = add("train", cmd_train, "train first-stage, refinement and coarse quantizers")
    sp.add_argument("--learn", type=Path, required=True)
    sp.add_argument("--max-learn", type=int, default=0)
    sp.add_argument("--m", type=int, default=8)
    sp.add_argument("--mprime", type=int, default=0)
    sp.add_argument("--ks", type=int, default=256)
    sp.add_argument("--coarse", "-c", type=int, default=0, help="coarse centroids c (0: exhaustive ADC)")
    sp.add_argument("--iterations", type=int, default=25)
    sp.add_argument("--redo", type=int, default=1)
    sp.add_argument("--out", type=Path, required=True)

    sp = add("build", cmd_build, "encode a base set into an index file")
    sp.add_argument("--model", type=Path, required=True)
    sp.add_argument("--base", type=Path, required=True)
    sp.add_argument("--out", type=Path, required=True)

    sp = add("groundtruth", cmd_groundtruth, "exact k nearest neighbors")
    sp.add_argument("--base", type=Path, required=True)
    sp.add_argument("--queries", type=Path, required=True)
    sp.add_argument("--k", type=int, default=100)
    sp.add_argument("--out", type=Path, required=True, help=".ivecs neighbor ids")
    sp.add_argument("--dists", type=Path, help=".fvecs squared distances")

    for name, fn, help in (("search", cmd_search, "print top-k (id:distance) per query"),
                           ("bench", cmd_bench, "recall@1/10/100 and time per query")):
        sp = add(name, fn, help)
        sp.add_argument("--index", type=Path, required=True)
        sp.add_argument("--queries", type=Path, required=True)
        sp.add_argument("--k", type=int, default=100)
        sp.add_argument("--kprime", type=int, default=0, help="shortlist size (default 2k)")
        sp.add_argument("--v", type=int, default=None, help="probed lists (IVF only)")
        sp.add_argument("--nq", type=int, default=1000 if name == "bench" else 0)
    sub.choices["search"].add_argument("--method", choices=METHODS)
    sub.choices["search"].add_argument("--out", type=Path, help="write result ids as .ivecs")
    sub.choices["bench"].add_argument("--gt", type=Path, required=True)
    sub.choices["bench"].add_argument("--methods", help="comma-separated subset of " + ",".join(METHODS))
    sub.choices["bench"].add_argument("--tsv", type=Path)
    sub.choices["bench"].add_argument("--no-timing", action="store_true",
                                      help="omit timings so reports are byte-reproducible")

    sp = add("eval", cmd_eval, "recall@r of stored results against ground truth")
    sp.add_argument("--results", type=Path, required=True)
    sp.add_argument("--gt", type=Path, required=True)
    sp.add_argument("--ranks", default="1,10,100")
    sp.add_argument("--nq", type=int, default=0)
    sp.add_argument("--out", type=Path)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        args.fn(args)
    except (ValueError, OSError) as e:
        log.error("%s", e)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
