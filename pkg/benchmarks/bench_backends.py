"""Wall-clock comparison of the numba kernels and the numpy fallback.

Each backend runs in its own interpreter (the backend is fixed at import
time by ``GLRSM_DISABLE_NUMBA``). The numba run is warmed up first so JIT
compilation is not counted.

    python benchmarks/bench_backends.py [--repeat 3]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from glrsm._backend import BACKEND
from glrsm.models import ModelSpec, fit_mle
from glrsm.pipeline import detect
from glrsm.refine import refine_changepoint
from glrsm.scan import ScanConfig, scan_series
from glrsm.sim import builtin_model, generate_piecewise

repeat = int(sys.argv[1])
c = generate_piecewise(builtin_model("C"), seed=1)
g = generate_piecewise(builtin_model("G"), seed=1)
e = generate_piecewise(builtin_model("E"), seed=1)
cases = {
    "scan AR(1), n=1000": lambda: scan_series(c, ScanConfig(100, ModelSpec.ar(1))),
    "scan AR(5), n=1000": lambda: scan_series(c, ScanConfig(100, ModelSpec.ar(5))),
    "scan GARCH, n=600": lambda: scan_series(g[:600], ScanConfig(100, ModelSpec.garch())),
    "fit GARCH, n=2000": lambda: fit_mle(ModelSpec.garch(), g),
    "refine ARMA(1,1)": lambda: refine_changepoint(e, 410, 100, ModelSpec.arma(1, 1)),
    "detect model C": lambda: detect(c, builtin_model("C").pipeline_config()),
}
for f in cases.values():
    f()  # compile / warm caches
out = {"backend": BACKEND, "times": {}}
for name, f in cases.items():
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        f()
        best = min(best, time.perf_counter() - t0)
    out["times"][name] = best
json.dump(out, sys.stdout)
"""


def run(disable: bool, repeat: int) -> dict:
    env = dict(os.environ, GLRSM_DISABLE_NUMBA="1" if disable else "0")
    proc = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3, help="best-of-N timing")
    ap.add_argument("--json", help="also write raw timings here")
    args = ap.parse_args(argv)
    nb = run(False, args.repeat)
    py = run(True, args.repeat)
    print(f"{'case':<22} {nb['backend']:>10} {py['backend']:>10} {'speedup':>8}")
    for name, t_nb in nb["times"].items():
        t_py = py["times"][name]
        print(f"{name:<22} {t_nb:>9.4f}s {t_py:>9.4f}s {t_py / t_nb:>7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"numba": nb, "numpy": py}, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
