import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glrsm.errors import InsufficientDataError
from glrsm.models import ModelSpec
from glrsm.pipeline import detect
from glrsm.refine import extended_window, refine_all, refine_changepoint, single_changepoint_estimate
from glrsm.sim import builtin_model, generate_piecewise

AR0 = ModelSpec.ar(0)
AR1 = ModelSpec.ar(1)


def gauss_split_oracle(w, ks):
    """Zero-mean Gaussian split loglik with the variance profiled out on each side."""
    out = []
    for k in ks:
        ll = 0.0
        for seg in (w[:k], w[k:]):
            s2 = np.mean(seg**2)
            ll += -0.5 * seg.size * (math.log(2 * math.pi * s2) + 1)
        out.append(ll)
    return np.array(out)


def test_extended_window():
    w = extended_window(500, 100, 1000)
    assert (w.start, w.stop, w.width, w.clamped) == (300, 700, 400, False)
    w = extended_window(150, 100, 1000)
    assert (w.start, w.stop, w.clamped) == (0, 350, True)
    w = extended_window(500, 100, 1000, lo=420, hi=650)
    assert (w.start, w.stop, w.clamped) == (420, 650, True)


def test_variance_jump_recovered_exactly():
    # alternating +-1 then +-10: each side has an exact variance, so the split
    # at the junction is the unique maximum
    n, tau0 = 1000, 500
    x = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    x[tau0:] *= 10.0
    r = refine_changepoint(x, tau0 + 10, 100, AR0)
    assert r.tau3 == tau0
    w = x[r.window.start : r.window.stop]
    oracle = gauss_split_oracle(w, r.taus - r.window.start)
    np.testing.assert_allclose(r.profile, oracle, rtol=1e-10)
    assert int(r.taus[np.argmax(oracle)]) == tau0


def test_variance_jump_random():
    rng = np.random.default_rng(1)
    x = np.concatenate([rng.standard_normal(500), 10 * rng.standard_normal(500)])
    r = refine_changepoint(x, 510, 100, AR0)
    w = x[r.window.start : r.window.stop]
    oracle = gauss_split_oracle(w, r.taus - r.window.start)
    assert r.tau3 == int(r.taus[np.argmax(oracle)])
    assert abs(r.tau3 - 500) <= 2


def test_idempotent_at_argmax():
    n = 1000
    x = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    x[400:] *= 10.0
    first = refine_changepoint(x, 430, 100, AR0)
    again = refine_changepoint(x, first.tau3, 100, AR0)
    assert again.tau3 == first.tau3 == 400


@pytest.fixture(scope="module")
def c_series():
    return generate_piecewise(builtin_model("C"), seed=21)


@settings(max_examples=30, deadline=None)
@given(st.integers(100, 900))
def test_range_and_maximality(c_series, tau2):
    r = refine_changepoint(c_series, tau2, 100, AR1)
    assert tau2 - 100 < r.tau3 <= tau2 + 100
    assert r.taus[0] > tau2 - 100 and r.taus[-1] <= tau2 + 100
    best = np.max(r.profile)
    assert r.profile[r.taus.tolist().index(r.tau3)] == best
    # smallest tau wins ties
    assert r.tau3 == int(r.taus[np.flatnonzero(r.profile == best)[0]])
    assert r.left_fit.window == (r.window.start, r.tau3)
    assert r.right_fit.window == (r.tau3, r.window.stop)


def test_search_range_shrinks_at_boundary(c_series):
    r = refine_changepoint(c_series, 110, 100, AR1)
    assert r.window.clamped and r.range_shrunk
    assert r.taus[0] == AR1.min_fit_length


def test_refine_all_cuts_at_midpoints(c_series):
    rs = refine_all(c_series, [400, 560, 700], 100, AR1)
    assert rs[0].window.stop == 480
    assert (rs[1].window.start, rs[1].window.stop) == (480, 630)
    assert rs[2].window.start == 630


def test_garch_and_arma_refine():
    x = generate_piecewise(builtin_model("d"), seed=3)
    r = refine_changepoint(x, 520, 100, ModelSpec.garch())
    assert 420 < r.tau3 <= 620
    assert r.profile[r.taus.tolist().index(r.tau3)] == np.max(r.profile)
    assert r.left_fit.params.shape == (3,)
    x = generate_piecewise(builtin_model("E"), seed=3)
    r = refine_changepoint(x, 405, 100, ModelSpec.arma(1, 1))
    assert abs(r.tau3 - 400) <= 20


def test_single_change_mean_shift():
    rng = np.random.default_rng(2)
    x = np.concatenate([rng.standard_normal(200), 5 + rng.standard_normal(200)])
    assert single_changepoint_estimate(x, ModelSpec.ar(0, mean=True)) == 200


def test_single_change_homogeneous_returns_something():
    rng = np.random.default_rng(3)
    tau = single_changepoint_estimate(rng.standard_normal(300), AR1)
    assert AR1.min_fit_length <= tau <= 300 - AR1.min_fit_length


def test_single_change_too_short():
    with pytest.raises(InsufficientDataError):
        single_changepoint_estimate(np.zeros(30), AR1)


def test_single_change_truncated_model_c():
    spec = builtin_model("C")
    hits = sum(
        abs(single_changepoint_estimate(generate_piecewise(spec, seed=500 + r)[:550], AR1) - 400) <= 15
        for r in range(200)
    )
    assert hits >= 180


def test_model_c_final_estimates():
    spec = builtin_model("C")
    cfg = spec.pipeline_config()
    est = []
    for r in range(200):
        res = detect(generate_piecewise(spec, seed=700 + r), cfg)
        near = [t for t in res.positions if abs(t - 400) <= 50]
        if near:
            est.append(near[0])
    est = np.array(est)
    assert est.size >= 190
    assert abs(np.median(est) - 400) <= 1
    q = np.quantile(est, [0.05, 0.95], method="inverted_cdf")
    assert q[1] - q[0] <= 30
