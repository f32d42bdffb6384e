import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.stats import norm

from glrsm import ci as ci_mod
from glrsm.ci import (
    TABLE_ENV,
    ArgmaxLawTable,
    CIComponents,
    argmax_law_quantile,
    build_ci,
    confidence_interval,
    default_table,
    estimate_ci_components,
    simulate_argmax_law,
    simulate_random_walk_argmax,
    simultaneous_level,
)
from glrsm.errors import DegenerateContrastError, DomainError
from glrsm.models import FittedModel, ModelSpec
from glrsm.refine import ExtendedWindow, RefinedChangePoint, refine_all, refine_changepoint
from glrsm.sim import builtin_model, generate_piecewise

AR1 = ModelSpec.ar(1)


def quantile_se(table, p):
    """Asymptotic s.d. of an empirical quantile, density from table differences."""
    i = int(round(p * 1000)) - 1
    dens = 0.002 / (table.quantiles[i + 1] - table.quantiles[i - 1])
    return math.sqrt(p * (1 - p) / table.paths) / dens


def argmax_density(v):
    """Density of argmax_r {B(r) - |r|/2} at |r| = v (closed form, Yao 1987)."""
    v = abs(v)
    return 1.5 * math.exp(v + norm.logcdf(-1.5 * math.sqrt(v))) - 0.5 * norm.cdf(-0.5 * math.sqrt(v))


def fake_rcp(left, right, n, tau3, spec=AR1):
    win = ExtendedWindow(tau3, 0, n, True)
    taus = np.arange(tau3 - 5, tau3 + 6)
    return RefinedChangePoint(
        tau3, tau3, win,
        FittedModel(spec, np.asarray(left, float), 0.0, (0, tau3)),
        FittedModel(spec, np.asarray(right, float), 0.0, (tau3, n)),
        taus, np.zeros(taus.size),
    )


class TestTable:
    def test_bundled_provenance(self):
        t = default_table()
        assert (t.R, t.delta, t.paths, t.seed) == (200.0, 0.01, 1_000_000, 20240917)
        assert t.probs.size == 999

    def test_frozen_values(self):
        # generated once with the parameters above; kept to catch silent drift
        assert argmax_law_quantile(0.95) == pytest.approx(7.65, abs=1e-9)
        assert argmax_law_quantile(0.975) == pytest.approx(11.01, abs=1e-9)
        assert argmax_law_quantile(0.5) == pytest.approx(0.0, abs=0.02)

    @pytest.mark.parametrize("p", [0.01, 0.05, 0.1, 0.25])
    def test_symmetry(self, p):
        t = default_table()
        s = abs(t.quantile(p) + t.quantile(1 - p))
        assert s <= 3 * math.sqrt(2) * max(quantile_se(t, p), quantile_se(t, 1 - p))

    def test_domain(self):
        with pytest.raises(DomainError):
            argmax_law_quantile(0.0)
        with pytest.raises(DomainError):
            argmax_law_quantile(1.2)
        with pytest.warns(UserWarning):
            argmax_law_quantile(0.9999)

    def test_text_round_trip(self):
        t = default_table()
        back = ArgmaxLawTable.from_text(t.to_text())
        assert back.to_text() == t.to_text()
        np.testing.assert_array_equal(back.quantiles, t.quantiles)

    def test_env_override(self, tmp_path, monkeypatch):
        t = default_table()
        scaled = dataclasses.replace(t, quantiles=2 * t.quantiles, seed=1)
        path = tmp_path / "table.csv"
        scaled.save(path)
        monkeypatch.setenv(TABLE_ENV, str(path))
        assert argmax_law_quantile(0.95) == pytest.approx(2 * 7.65)
        monkeypatch.delenv(TABLE_ENV)
        assert argmax_law_quantile(0.95) == pytest.approx(7.65)

    def test_generation_deterministic(self):
        a = ArgmaxLawTable.generate(R=20, delta=0.05, paths=5000, seed=3)
        b = ArgmaxLawTable.generate(R=20, delta=0.05, paths=5000, seed=3)
        assert a.to_text() == b.to_text()
        assert a.to_text() != ArgmaxLawTable.generate(R=20, delta=0.05, paths=5000, seed=4).to_text()

    def test_truncation_reported(self):
        _, mass = simulate_argmax_law(R=1.0, delta=0.01, paths=20_000, seed=0)
        assert mass > 1e-3
        _, mass = simulate_argmax_law(R=60.0, delta=0.05, paths=20_000, seed=0)
        assert mass < 1e-4

    def test_law_second_moment(self):
        # the closed-form density integrates to E[T^2] = 26
        assert 2 * quad(lambda v: v * v * argmax_density(v), 0, np.inf, limit=200)[0] == pytest.approx(26.0)
        s, _ = simulate_argmax_law(R=100.0, delta=0.02, paths=40_000, seed=9)
        assert np.mean(s) == pytest.approx(0.0, abs=0.1)
        assert np.mean(s**2) == pytest.approx(26.0, rel=0.05)

    @pytest.mark.parametrize("p", [0.75, 0.9, 0.95, 0.975, 0.995])
    def test_table_against_closed_form(self, p):
        # the grid argmax is biased slightly inward, well under 1%
        exact = brentq(lambda q: 0.5 + quad(argmax_density, 0, q)[0] - p, 0.01, 100)
        assert argmax_law_quantile(p) == pytest.approx(exact, rel=0.01)


class TestLevels:
    def test_single_interval(self):
        assert simultaneous_level(0.1, 1) == pytest.approx(0.1)

    def test_two_intervals(self):
        a = simultaneous_level(0.1, 2)
        assert a == pytest.approx(1 - math.sqrt(0.9))
        assert a == pytest.approx(0.0513, abs=1e-4)

    @given(st.floats(0.001, 0.999), st.integers(1, 50))
    def test_identity(self, alpha, m):
        assert (1 - simultaneous_level(alpha, m)) ** m == pytest.approx(1 - alpha, rel=1e-12)

    def test_invalid(self):
        with pytest.raises(ValueError):
            simultaneous_level(0.1, 0)


class TestInterval:
    def test_zero_delta(self):
        rcp = fake_rcp([0.5, 1.0], [0.0, 1.0], 1000, 400)
        comps = CIComponents(np.array([1.0, 0.0]), np.eye(2), np.zeros((2, 2)), (0, 1000))
        c = build_ci(rcp, comps, 0.1, 1000)
        assert (c.lo, c.hi) == (399, 401)

    def test_formula_and_clamp(self):
        rcp = fake_rcp([0.5, 1.0], [0.0, 1.0], 1000, 5)
        comps = CIComponents(np.array([1.0, 0.0]), 0.5 * np.eye(2), np.eye(2), (0, 1000))
        c = build_ci(rcp, comps, 0.1, 1000)
        assert c.delta == pytest.approx(4.0)
        half = math.floor(4.0 * argmax_law_quantile(0.95)) + 1
        assert (c.lo, c.hi) == (1, 5 + half)

    def test_sign_of_sigma_immaterial(self):
        d, s, o = np.array([0.3, -0.2]), np.array([[2.0, 0.3], [0.3, 1.0]]), np.array([[1.0, 0.1], [0.1, 0.5]])
        assert CIComponents(d, s, o, (0, 1)).delta == CIComponents(d, -s, o, (0, 1)).delta

    def test_degenerate_contrast(self):
        x = np.random.default_rng(0).standard_normal(800)
        rcp = fake_rcp([0.2, 1.0], [0.2, 1.0], 800, 400)
        with pytest.raises(DegenerateContrastError):
            estimate_ci_components(x, rcp, 100, AR1)
        with pytest.warns(UserWarning):
            c = confidence_interval(x, rcp, 100, AR1)
        assert c.degenerate and c.delta == math.inf
        assert (c.lo, c.hi) == (395, 405)

    def test_omega_fisher_limit(self):
        # scores of AR(1) at (0, 1) on white noise have covariance diag(1, 1/2)
        x = np.random.default_rng(1).standard_normal(40_000)
        rcp = fake_rcp([0.5, 1.0], [0.0, 1.0], 40_000, 20_000)
        comps = estimate_ci_components(x, rcp, 10_000, AR1)
        np.testing.assert_allclose(comps.omega, np.diag([1.0, 0.5]), atol=0.03)
        np.testing.assert_allclose(comps.sigma, np.diag([1.0, 0.5]), atol=0.03)

    def test_alpha_monotone(self, model_c_refined):
        x, rs = model_c_refined
        for r in rs:
            comps = estimate_ci_components(x, r, 100, AR1)
            widths = [build_ci(r, comps, a, x.size).width for a in (0.05, 0.1, 0.2)]
            assert widths[0] >= widths[1] >= widths[2]


@pytest.fixture(scope="module")
def model_c_refined():
    x = generate_piecewise(builtin_model("C"), seed=31)
    return x, refine_all(x, [400, 700], 100, AR1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["C", "D", "d"]))
def test_components_psd_and_valid(seed, name):
    spec = builtin_model(name)
    x = generate_piecewise(spec, seed=seed)
    model = spec.pipeline_config().refine_model
    h = 100
    rs = refine_all(x, spec.change_points, h, model)
    for r in rs:
        comps = estimate_ci_components(x, r, h, model)
        assert np.allclose(comps.omega, comps.omega.T)
        assert np.linalg.eigvalsh(comps.omega).min() >= -1e-10
        assert np.allclose(comps.sigma, comps.sigma.T, atol=1e-8)
        c = build_ci(r, comps, 0.1, x.size)
        assert c.delta > 0
        assert c.lo <= r.tau3 <= c.hi and c.width > 0


def test_delta_stable_under_one_step_shift():
    rel = []
    for s in range(20):
        x = generate_piecewise(builtin_model("C"), seed=900 + s)
        x = np.concatenate([x, generate_piecewise(builtin_model("C"), seed=1900 + s)])
        r = refine_changepoint(x, 400, 100, AR1)
        base = estimate_ci_components(x, r, 100, AR1).delta
        win = r.window
        moved = dataclasses.replace(r, window=ExtendedWindow(win.center, win.start + 1, win.stop + 1, win.clamped))
        rel.append(abs(estimate_ci_components(x, moved, 100, AR1).delta / base - 1))
    assert np.median(rel) < 0.05


class TestRandomWalk:
    def test_strong_contrast_concentrates(self):
        s = simulate_random_walk_argmax([0.9, 1.0], [-0.9, 1.0], AR1, trunc=20, paths=100_000, seed=0)
        assert np.mean(s == 0) > 0.5

    def test_equal_parameters_still_sample(self):
        s = simulate_random_walk_argmax([0.4, 1.0], [0.4, 1.0], AR1, trunc=10, paths=1000, seed=1)
        assert s.shape == (1000,) and np.all(np.abs(s) <= 10)
        # increments are identically zero, every tie resolves to 0
        assert np.all(s == 0)

    def test_garch(self):
        s = simulate_random_walk_argmax([0.4, 0.1, 0.5], [4.0, 0.1, 0.5], ModelSpec.garch(), 15, 5000, seed=2)
        assert np.all(np.abs(s) <= 15)
        assert np.mean(np.abs(s) <= 3) > 0.5

    def test_non_stationary(self):
        with pytest.raises(DomainError):
            simulate_random_walk_argmax([1.1, 1.0], [0.0, 1.0], AR1, 10, 10, seed=0)

    def test_deterministic(self):
        a = simulate_random_walk_argmax([0.4, 1.0], [-0.6, 1.0], AR1, 10, 500, seed=5)
        b = simulate_random_walk_argmax([0.4, 1.0], [-0.6, 1.0], AR1, 10, 500, seed=5)
        np.testing.assert_array_equal(a, b)

    def test_matches_loop_oracle(self):
        # direct per-path construction of W_tau for a handful of paths
        th1, th2 = np.array([0.4, 1.0]), np.array([-0.6, 1.0])
        trunc, burn = 8, 50
        rng = np.random.default_rng(7)
        z = rng.standard_normal((3, burn + 2 * trunc))
        x = ci_mod._simulate_batch(AR1, th1, th2, z, burn + trunc)
        got = []
        for row in x:
            def l(th, t):
                e = row[t] - th[0] * (row[t - 1] if t > 0 else 0.0)
                return -0.5 * math.log(2 * math.pi * th[1]) - 0.5 * e * e / th[1]
            W = {0: 0.0}
            for k in range(1, trunc + 1):
                W[k] = W[k - 1] + l(th1, burn + trunc + k - 1) - l(th2, burn + trunc + k - 1)
                W[-k] = W[-(k - 1)] + l(th2, burn + trunc - k) - l(th1, burn + trunc - k)
            order = [0] + [v for k in range(1, trunc + 1) for v in (k, -k)]
            got.append(max(order, key=lambda k: (W[k], -order.index(k))))
        ours = simulate_random_walk_argmax(th1, th2, AR1, trunc, 3, seed=7, burn_in=burn)
        assert ours.tolist() == got
