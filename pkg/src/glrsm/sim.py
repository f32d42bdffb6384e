"""Piecewise-stationary generators, built-in test models and a replication harness."""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from glrsm._backend import kernels as K
from glrsm.ci import ArgmaxLawTable
from glrsm.errors import ConfigurationError
from glrsm.models import Family, ModelSpec, check_params, split_params
from glrsm.pipeline import PipelineConfig, detect

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Segment:
    spec: ModelSpec
    theta: tuple[float, ...]
    length: int


@dataclass(frozen=True)
class PiecewiseSpec:
    """Consecutive stationary segments.

    ``continuity=True`` carries the recursion state (past observations,
    innovations and, for GARCH, the conditional variance) across each change;
    otherwise every segment restarts from zero state with its own burn-in.
    """

    segments: tuple[Segment, ...]
    analysis: ModelSpec | None = None
    continuity: bool = True
    burn_in: int = 500
    name: str = ""

    def __post_init__(self):
        segs = tuple(
            s if isinstance(s, Segment) else Segment(s[0], tuple(float(v) for v in s[1]), int(s[2]))
            for s in self.segments
        )
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ConfigurationError("a piecewise spec needs at least one segment")
        garch = {s.spec.family is Family.GARCH for s in segs}
        if len(garch) > 1:
            raise ConfigurationError("cannot mix GARCH and linear segments")
        for s in segs:
            if s.length < 1:
                raise ConfigurationError("segment lengths must be positive")
            check_params(s.spec, s.theta, stationary=True)
        if self.burn_in < 0:
            raise ConfigurationError("burn_in must be non-negative")

    @property
    def n(self) -> int:
        return sum(s.length for s in self.segments)

    @property
    def change_points(self) -> tuple[int, ...]:
        return tuple(int(c) for c in np.cumsum([s.length for s in self.segments])[:-1])

    @property
    def m(self) -> int:
        return len(self.segments) - 1

    def pipeline_config(self, **kw) -> PipelineConfig:
        spec = self.analysis or self.segments[0].spec
        return PipelineConfig.for_model(spec, **kw)


def _arma_segment(spec, theta, z, x_hist, e_hist):
    c, phi, ma, sig2 = split_params(spec, theta)
    e = math.sqrt(sig2) * z
    x = K.sim_arma(phi, ma, e + c, x_hist, e_hist)
    return x, e


def generate_piecewise(spec: PiecewiseSpec, seed=None) -> np.ndarray:
    """One realization of ``spec``; deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    total = spec.burn_in + spec.n
    if not spec.continuity:
        total += spec.burn_in * (len(spec.segments) - 1)
    z = rng.standard_normal(total)
    out, pos = [], 0
    garch = spec.segments[0].spec.family is Family.GARCH
    x_hist, e_hist = np.zeros(0), np.zeros(0)
    x_prev, sig2_prev = 0.0, None
    for k, seg in enumerate(spec.segments):
        theta = np.asarray(seg.theta)
        fresh = k == 0 or not spec.continuity
        burn = spec.burn_in if fresh else 0
        zz = z[pos : pos + burn + seg.length]
        pos += burn + seg.length
        if garch:
            omega, alpha, beta = theta
            if fresh:
                x_prev, sig2_prev = 0.0, omega / (1.0 - alpha - beta)
            x, sig2 = K.sim_garch(omega, alpha, beta, zz, x_prev, sig2_prev)
            x_prev, sig2_prev = float(x[-1]), float(sig2[-1])
        else:
            if fresh:
                x_hist, e_hist = np.zeros(0), np.zeros(0)
            x, e = _arma_segment(seg.spec, theta, zz, x_hist, e_hist)
            x_hist, e_hist = x[-8:].copy(), e[-8:].copy()
        out.append(x[burn:])
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# built-in models
# ---------------------------------------------------------------------------

_GARCH_PAIRS = {
    "a": ((0.4, 0.1, 0.5), (0.4, 0.1, 0.5)),
    "b": ((0.1, 0.1, 0.8), (0.1, 0.1, 0.8)),
    "c": ((0.4, 0.1, 0.5), (0.4, 0.1, 0.6)),
    "d": ((0.4, 0.1, 0.5), (0.4, 0.1, 0.8)),
    "e": ((0.1, 0.1, 0.8), (0.1, 0.1, 0.7)),
    "f": ((0.1, 0.1, 0.8), (0.1, 0.1, 0.4)),
    "g": ((0.4, 0.1, 0.5), (0.5, 0.1, 0.5)),
    "h": ((0.4, 0.1, 0.5), (0.8, 0.1, 0.5)),
    "i": ((0.1, 0.1, 0.8), (0.3, 0.1, 0.8)),
    "j": ((0.1, 0.1, 0.8), (0.5, 0.1, 0.8)),
}

MODEL_NAMES = ("C", "D", "E", "F", "G", *_GARCH_PAIRS)


def builtin_model(name: str, continuity: bool = True) -> PiecewiseSpec:
    """Test models C-G (AR, ARMA, GARCH with two changes) and a-j (GARCH, n=1000)."""
    ar1, ar2 = ModelSpec.ar(1), ModelSpec.ar(2)
    arma11, arma22 = ModelSpec.arma(1, 1), ModelSpec.arma(2, 2)
    g = ModelSpec.garch()
    if name == "C":
        segs = [(ar1, (0.4, 1.0), 400), (ar1, (-0.6, 1.0), 300), (ar1, (0.5, 1.0), 300)]
        analysis = ar1
    elif name == "D":
        segs = [(ar2, (0.7, 0.1, 1.0), 1000), (ar2, (-0.4, 0.0, 1.0), 500), (ar2, (0.5, -0.2, 1.0), 500)]
        analysis = ar2
    elif name == "E":
        segs = [(arma11, (-0.8, 0.5, 1.0), 400), (arma11, (0.9, 0.0, 1.0), 200), (arma11, (0.1, -0.5, 1.0), 400)]
        analysis = arma11
    elif name == "F":
        segs = [
            (arma22, (-0.6, -0.2, 0.0, 0.0, 1.0), 800),
            (arma22, (0.4, 0.0, 0.3, 0.0, 1.0), 400),
            (arma22, (0.0, 0.0, -0.3, -0.2, 1.0), 800),
        ]
        analysis = arma22
    elif name == "G":
        segs = [(g, (3.0, 0.1, 0.5), 400), (g, (0.5, 0.1, 0.5), 1200), (g, (0.8, 0.1, 0.8), 400)]
        analysis = g
    elif name in _GARCH_PAIRS:
        t1, t2 = _GARCH_PAIRS[name]
        segs = [(g, t1, 1000)] if t1 == t2 else [(g, t1, 500), (g, t2, 500)]
        analysis = g
    else:
        raise ConfigurationError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
    return PiecewiseSpec(tuple(segs), analysis, continuity, name=name)


def true_change_points(name: str) -> tuple[int, ...]:
    """Change positions of a built-in model (models a and b have none)."""
    return builtin_model(name).change_points


# ---------------------------------------------------------------------------
# replications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Replication:
    index: int
    m_hat: int
    estimates: list[int]
    intervals: list[tuple[int, int]]
    runtime: float
    error: str | None = None


@dataclass(frozen=True)
class ChangePointSummary:
    """Location and coverage statistics over detections matched to one true change."""

    tau0: int
    matched: int
    median: float | None
    mean: float | None
    range90: tuple[float, float] | None
    mean_ci: tuple[float, float] | None
    coverage: float | None


@dataclass(frozen=True)
class CountSummary:
    """Count accuracy; location estimates come from runs with the correct count."""

    accuracy: float
    correct_runs: int
    mean: list[float]
    median: list[float]
    se: list[float]


@dataclass
class SimReport:
    model: str
    n: int
    true_change_points: list[int]
    reps: int
    alpha: float
    seed: int
    changepoints: list[ChangePointSummary]
    count: CountSummary
    false_positives: int
    failures: int
    replications: list[Replication] = field(repr=False)
    runtime_total: float = 0.0
    runtime_mean: float = 0.0

    def to_dict(self, timestamps: bool = True) -> dict:
        d = asdict(self)
        if not timestamps:
            d["runtime_total"] = d["runtime_mean"] = 0.0
            for r in d["replications"]:
                r["runtime"] = 0.0
        return d

    def to_json(self, timestamps: bool = True) -> str:
        return json.dumps(self.to_dict(timestamps), indent=2, sort_keys=True)

    def raw_csv(self) -> str:
        lines = ["rep,m_hat,estimates,ci_lo,ci_hi,error"]
        for r in self.replications:
            lines.append(",".join([
                str(r.index), str(r.m_hat),
                " ".join(map(str, r.estimates)),
                " ".join(str(i[0]) for i in r.intervals),
                " ".join(str(i[1]) for i in r.intervals),
                r.error or "",
            ]))
        return "\n".join(lines) + "\n"

    def table(self) -> str:
        """Human-readable summary, with per-change columns when the model has changes."""
        out = [f"model {self.model}: n={self.n}, reps={self.reps}, alpha={self.alpha}, seed={self.seed}"]
        out.append(f"correct count: {100 * self.count.accuracy:.1f}%  false positives: {self.false_positives}  failures: {self.failures}")
        if self.changepoints:
            out.append(f"{'tau0':>6} {'median':>8} {'mean':>9} {'90% range':>16} {'mean CI':>22} {'coverage':>9}")
            for c in self.changepoints:
                if c.matched == 0:
                    out.append(f"{c.tau0:>6}  (no matched detections)")
                    continue
                rng = f"[{c.range90[0]:.0f}, {c.range90[1]:.0f}]"
                ci = f"[{c.mean_ci[0]:.2f}, {c.mean_ci[1]:.2f}]"
                out.append(f"{c.tau0:>6} {c.median:>8.1f} {c.mean:>9.2f} {rng:>16} {ci:>22} {100 * c.coverage:>8.1f}%")
            if self.count.correct_runs:
                se = ", ".join(f"{s:.2f}" for s in self.count.se)
                mean = ", ".join(f"{s:.2f}" for s in self.count.mean)
                out.append(f"correct-count runs: {self.count.correct_runs}  mean [{mean}]  s.e. [{se}]")
        return "\n".join(out)


def _one_replication(args):
    spec, cfg, seed_seq, index, table = args
    t0 = time.perf_counter()
    try:
        x = generate_piecewise(spec, np.random.default_rng(seed_seq))
        res = detect(x, cfg, table)
    except Exception as exc:  # per-replication failures are counted, not fatal
        log.warning("replication %d failed: %s", index, exc)
        return Replication(index, -1, [], [], time.perf_counter() - t0, f"{type(exc).__name__}: {exc}")
    return Replication(
        index, res.m, [c.tau3 for c in res.changepoints], [(c.ci_lo, c.ci_hi) for c in res.changepoints],
        time.perf_counter() - t0,
    )


def match_detections(truth, estimates, tol: float):
    """Greedy one-to-one nearest-neighbour matching within ``tol``.

    Returns ``{true index: estimate index}``.
    """
    pairs = sorted(
        (abs(e - t), i, j) for i, t in enumerate(truth) for j, e in enumerate(estimates) if abs(e - t) <= tol
    )
    used_t, used_e, out = set(), set(), {}
    for _, i, j in pairs:
        if i in used_t or j in used_e:
            continue
        used_t.add(i)
        used_e.add(j)
        out[i] = j
    return out


def summarize_replications(spec: PiecewiseSpec, reps: list[Replication], alpha: float, seed: int, eps_match: float = 0.05) -> SimReport:
    truth = list(spec.change_points)
    tol = spec.n * eps_match
    ok = [r for r in reps if r.error is None]
    per_true: list[list[tuple[int, tuple[int, int]]]] = [[] for _ in truth]
    false_pos = 0
    for r in ok:
        match = match_detections(truth, r.estimates, tol)
        false_pos += len(r.estimates) - len(match)
        for i, j in match.items():
            per_true[i].append((r.estimates[j], r.intervals[j]))
    summaries = []
    for t, rows in zip(truth, per_true):
        if not rows:
            summaries.append(ChangePointSummary(t, 0, None, None, None, None, None))
            continue
        est = np.array([e for e, _ in rows], dtype=float)
        lo = np.array([c[0] for _, c in rows], dtype=float)
        hi = np.array([c[1] for _, c in rows], dtype=float)
        q = np.quantile(est, [0.05, 0.95], method="inverted_cdf")
        summaries.append(ChangePointSummary(
            t, len(rows), float(np.median(est)), float(est.mean()), (float(q[0]), float(q[1])),
            (float(lo.mean()), float(hi.mean())), float(np.mean((lo <= t) & (t <= hi))),
        ))
    m0 = len(truth)
    correct = [r for r in ok if r.m_hat == m0]
    accuracy = len(correct) / len(reps) if reps else 0.0
    if m0 and correct:
        est = np.array([r.estimates for r in correct], dtype=float)
        se = est.std(axis=0, ddof=1) if len(correct) > 1 else np.zeros(m0)
        count = CountSummary(accuracy, len(correct), est.mean(0).tolist(), np.median(est, 0).tolist(), se.tolist())
    else:
        count = CountSummary(accuracy, len(correct), [], [], [])
    runtimes = [r.runtime for r in reps]
    return SimReport(
        spec.name, spec.n, truth, len(reps), alpha, int(seed), summaries, count, false_pos,
        len(reps) - len(ok), reps, float(sum(runtimes)), float(np.mean(runtimes)) if runtimes else 0.0,
    )


def run_replications(
    spec: PiecewiseSpec,
    reps: int,
    config: PipelineConfig | None = None,
    alpha: float = 0.1,
    seed: int = 0,
    workers: int = 1,
    eps_match: float = 0.05,
    table: ArgmaxLawTable | None = None,
) -> SimReport:
    """Run the detection pipeline on ``reps`` independent realizations.

    Replication ``i`` draws from child ``i`` of ``SeedSequence(seed)``, so the
    report does not depend on ``workers``.
    """
    if reps < 1:
        raise ConfigurationError("reps must be >= 1")
    config = config or spec.pipeline_config(alpha=alpha)
    if config.alpha != alpha:
        config = PipelineConfig(**{**config.__dict__, "alpha": alpha})
    children = np.random.SeedSequence(seed).spawn(reps)
    jobs = [(spec, config, c, i, table) for i, c in enumerate(children)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_one_replication, jobs, chunksize=max(1, reps // (4 * workers))))
    else:
        results = [_one_replication(j) for j in jobs]
    return summarize_replications(spec, results, alpha, seed, eps_match)
