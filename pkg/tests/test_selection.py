import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glrsm.models import Family, ModelSpec, fit_mle, simulate
from glrsm.pipeline import detect
from glrsm.scan import CandidateSet
from glrsm.selection import (
    SegmentCostCache,
    SelectionConfig,
    exhaustive_subset,
    mdl,
    segment_cost,
    select_subset,
)
from glrsm.sim import builtin_model, generate_piecewise

AR_CFG = SelectionConfig(Family.AR, p_max=5)


def cands(positions):
    positions = np.asarray(sorted(positions), dtype=np.int64)
    return CandidateSet(positions, np.ones(positions.shape[0]))


@pytest.fixture(scope="module")
def model_c_series():
    return generate_piecewise(builtin_model("C"), seed=11)


def test_total_is_sum_of_parts(model_c_series):
    s = mdl(model_c_series, [400, 700], AR_CFG)
    parts = s.count_term + s.segment_count_term + s.order_terms + s.param_terms + s.negative_loglik
    assert s.total == pytest.approx(parts, abs=1e-10)
    assert s.as_dict()["total"] == s.total


def test_null_score_by_hand(model_c_series):
    x = model_c_series
    n = x.shape[0]
    s = mdl(x, [], AR_CFG)
    # the m = 0 count term is defined as zero
    assert s.count_term == 0.0
    assert s.segment_count_term == pytest.approx(math.log(n))
    best = min(
        (math.log(p) if p else 0.0) + 0.5 * (p + 1) * math.log(n) - fit_mle(ModelSpec.ar(p), x).loglik
        for p in range(6)
    )
    assert s.order_terms + s.param_terms + s.negative_loglik == pytest.approx(best, rel=1e-12)


def test_garch_segment_terms():
    x = simulate(ModelSpec.garch(), [0.4, 0.1, 0.5], 600, seed=3)
    c = segment_cost(x, SelectionConfig(Family.GARCH))
    assert c.order_term == 0.0
    assert c.param_term == pytest.approx(1.5 * math.log(600))


def test_empty_candidates(model_c_series):
    sel = select_subset(model_c_series, cands([]), AR_CFG)
    assert sel.m2 == 0
    assert sel.mdl.total == mdl(model_c_series, [], AR_CFG).total
    assert len(sel.segments) == 1


def test_infeasible_segment_is_inf_not_error(model_c_series):
    s = mdl(model_c_series, [3, 700], AR_CFG)
    assert s.total == math.inf and not s.feasible


def test_rejects_unsorted_positions(model_c_series):
    with pytest.raises(ValueError):
        mdl(model_c_series, [700, 400], AR_CFG)
    with pytest.raises(ValueError):
        mdl(model_c_series, [0, 400], AR_CFG)


def test_cache_matches_direct(model_c_series):
    cache = SegmentCostCache(model_c_series, AR_CFG)
    for pos in ([], [400], [400, 700], [250, 400, 700]):
        assert mdl(model_c_series, pos, AR_CFG, cache) == mdl(model_c_series, pos, AR_CFG)


def test_dp_matches_exhaustive_model_d():
    x = generate_piecewise(builtin_model("D"), seed=5)
    c = cands([300, 1000, 1250, 1500, 1800])
    dp = select_subset(x, c, AR_CFG)
    ex = exhaustive_subset(x, c, AR_CFG)
    assert dp.positions.tolist() == ex.positions.tolist()
    assert dp.mdl.total == ex.mdl.total


@settings(max_examples=40, deadline=None)
@given(
    st.integers(0, 2**31 - 1),
    st.lists(st.integers(1, 399), min_size=0, max_size=7, unique=True),
    st.integers(0, 3),
)
def test_dp_matches_exhaustive_random(seed, positions, p_max):
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.standard_normal(200), 3.0 * rng.standard_normal(200)])
    cfg = SelectionConfig(Family.AR, p_max=p_max)
    c = cands(positions)
    dp = select_subset(x, c, cfg)
    ex = exhaustive_subset(x, c, cfg)
    assert dp.positions.tolist() == ex.positions.tolist()
    assert dp.mdl.total == ex.mdl.total
    assert set(dp.positions.tolist()) <= set(positions)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 24), min_size=1, max_size=5, unique=True), st.data())
def test_extra_point_raises_penalty(slots, data):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(500)
    cfg = SelectionConfig(Family.AR, p_max=0)
    positions = sorted(20 * s for s in slots)
    extra = 20 * data.draw(st.integers(1, 24).filter(lambda v: v not in slots))
    small = mdl(x, positions, cfg)
    big = mdl(x, sorted(positions + [extra]), cfg)

    def penalty(s):
        return s.count_term + s.segment_count_term + s.order_terms + s.param_terms

    assert penalty(big) > penalty(small)


def test_homogeneous_split_penalized():
    spec = ModelSpec.ar(1)
    worse = sum(
        mdl(x, [500], AR_CFG).total > mdl(x, [], AR_CFG).total
        for x in (simulate(spec, [0.4, 1.0], 1000, seed=100 + r) for r in range(200))
    )
    assert worse >= 190


def test_true_pair_beats_single_changes():
    spec = builtin_model("C")
    wins = 0
    for r in range(200):
        x = generate_piecewise(spec, seed=200 + r)
        both = mdl(x, [400, 700], AR_CFG).total
        wins += both < min(mdl(x, [400], AR_CFG).total, mdl(x, [700], AR_CFG).total)
    assert wins >= 190


def test_model_c_count_consistency():
    spec = builtin_model("C")
    cfg = spec.pipeline_config()
    correct = close = 0
    for r in range(200):
        res = detect(generate_piecewise(spec, seed=400 + r), cfg)
        if len(res.selected) == 2:
            correct += 1
            close += all(abs(s - t) < res.h for s, t in zip(res.selected, spec.change_points))
    assert correct >= 180
    assert close == correct
