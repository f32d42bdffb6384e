"""The numba kernels and the numpy fallback must give the same answers."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from glrsm._backend import BACKEND, ENV_FLAG

PROBE = r"""
import json, sys
import numpy as np
from glrsm._backend import BACKEND
from glrsm.models import ModelSpec, fit_mle
from glrsm.pipeline import detect
from glrsm.scan import ScanConfig, scan_series
from glrsm.sim import builtin_model, generate_piecewise

out = {"backend": BACKEND}
x = generate_piecewise(builtin_model("C"), seed=3)
out["ar_scan"] = scan_series(x, ScanConfig(100, ModelSpec.ar(2))).stats.tolist()
out["detect_c"] = detect(x, builtin_model("C").pipeline_config()).positions
g = generate_piecewise(builtin_model("d"), seed=4)
out["garch_scan"] = scan_series(g[:400], ScanConfig(100, ModelSpec.garch(), stride=10)).stats.tolist()
f = fit_mle(ModelSpec.garch(), g[:500])
out["garch_fit"] = [f.loglik, *f.params.tolist()]
e = generate_piecewise(builtin_model("E"), seed=5)
f = fit_mle(ModelSpec.arma(1, 1), e[:400])
out["arma_fit"] = [f.loglik, *f.params.tolist()]
out["detect_e"] = detect(e, builtin_model("E").pipeline_config()).positions
json.dump(out, sys.stdout)
"""


def run_probe(disable: bool) -> dict:
    env = dict(os.environ)
    env[ENV_FLAG] = "1" if disable else "0"
    proc = subprocess.run([sys.executable, "-c", PROBE], env=env, capture_output=True, text=True, timeout=900, check=True)
    return json.loads(proc.stdout)


@pytest.fixture(scope="module")
def both():
    return run_probe(False), run_probe(True)


def test_flag_selects_backend(both):
    nb, py = both
    assert py["backend"] == "numpy"
    assert nb["backend"] == BACKEND


def test_ar_scan_identical(both):
    nb, py = both
    np.testing.assert_allclose(nb["ar_scan"], py["ar_scan"], rtol=0, atol=1e-10)


def test_fits_agree(both):
    nb, py = both
    for key in ("garch_fit", "arma_fit"):
        assert nb[key][0] == pytest.approx(py[key][0], abs=1e-4)
        np.testing.assert_allclose(nb[key][1:], py[key][1:], atol=5e-3)


def test_garch_scan_agrees(both):
    nb, py = both
    np.testing.assert_allclose(nb["garch_scan"], py["garch_scan"], atol=2.5e-4)


def test_detections_identical(both):
    nb, py = both
    assert nb["detect_c"] == py["detect_c"]
    assert nb["detect_e"] == py["detect_e"]
