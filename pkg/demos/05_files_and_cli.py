"""
Files and the command-line pipeline
===================================

Vector sets live in .fvecs/.bvecs/.ivecs files; quantizers and indexes in
one container format. The same steps are available as ``pqrerank``
subcommands; this script calls them in-process.
"""

import tempfile
from pathlib import Path

from pqrerank.cli import main
from pqrerank.io import inspect_vectors, load_index

with tempfile.TemporaryDirectory() as tmp:
    d = Path(tmp)
    steps = [
        ["gen", "--n", "20000", "--nq", "50", "--nlearn", "10000", "--d", "32", "--seed", "7",
         "--learn", d / "learn.fvecs", "--queries", d / "q.fvecs", "--base", d / "base.fvecs"],
        ["train", "--learn", d / "learn.fvecs", "--m", "8", "--mprime", "8", "-c", "32",
         "--iterations", "10", "--seed", "7", "--out", d / "model.pqrr"],
        ["build", "--model", d / "model.pqrr", "--base", d / "base.fvecs", "--out", d / "index.pqrr"],
        ["groundtruth", "--base", d / "base.fvecs", "--queries", d / "q.fvecs", "--k", "100",
         "--out", d / "gt.ivecs"],
        ["bench", "--index", d / "index.pqrr", "--queries", d / "q.fvecs", "--gt", d / "gt.ivecs", "--v", "4"],
    ]
    for argv in steps:
        print("$ pqrerank", " ".join(str(a) for a in argv), flush=True)
        assert main([str(a) for a in argv]) == 0

    info = inspect_vectors(d / "base.fvecs")
    index = load_index(d / "index.pqrr")
    print("base file:", info.n, "records of d =", info.d, f"({(d / 'base.fvecs').stat().st_size} bytes)")
    print("index file:", (d / "index.pqrr").stat().st_size, "bytes,", index.bytes_per_vector, "per vector")
