#!/usr/bin/env python3
"""Run the full benchmark set from the checked-in config files: spectral
bound verification, the solver comparison, the mesh study, and the
(alpha, n_obs) sweep. Extra arguments are passed through to every step,
so e.g. `run_all.py --set seed=7` reruns everything under another seed."""

import sys

from kktprec.cli import main

STEPS = [
    ["verify-theory", "--config", "configs/theory.cfg"],
    ["convergence", "--config", "configs/benchmark.cfg"],
    ["mesh-study", "--config", "configs/mesh-study.cfg"],
    ["sweep", "--config", "configs/sweep.cfg"],
]

if __name__ == "__main__":
    for argv in STEPS:
        print("::", " ".join(argv), flush=True)
        code = main(argv + sys.argv[1:])
        if code != 0:
            sys.exit(code)
