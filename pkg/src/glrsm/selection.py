"""MDL scoring of change-point subsets and optimal-partition subset selection."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from glrsm.errors import InsufficientDataError
from glrsm.models import Family, FittedModel, ModelSpec, as_series, fit_mle
from glrsm.scan import CandidateSet


@dataclass(frozen=True)
class SelectionConfig:
    """Segment model family used by the MDL.

    For ``family="ar"`` each segment picks its AR order in ``0..p_max``; for
    ``"garch"`` every segment is GARCH(1,1).
    """

    family: Family = Family.AR
    p_max: int = 5
    mean: bool = False

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.family is Family.ARMA:
            raise ValueError("MDL selection runs on AR or GARCH segment models")


@dataclass(frozen=True)
class SegmentCost:
    order_term: float
    param_term: float
    loglik: float
    fit: FittedModel | None = field(default=None, compare=False)

    @property
    def cost(self) -> float:
        return self.order_term + self.param_term - self.loglik


INFEASIBLE = SegmentCost(math.inf, 0.0, 0.0)


@dataclass(frozen=True)
class MdlScore:
    count_term: float
    segment_count_term: float
    order_terms: float
    param_terms: float
    negative_loglik: float

    @property
    def total(self) -> float:
        return (
            self.count_term
            + self.segment_count_term
            + self.order_terms
            + self.param_terms
            + self.negative_loglik
        )

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.total)

    def as_dict(self) -> dict[str, float]:
        return {
            "count_term": self.count_term,
            "segment_count_term": self.segment_count_term,
            "order_terms": self.order_terms,
            "param_terms": self.param_terms,
            "negative_loglik": self.negative_loglik,
            "total": self.total,
        }


@dataclass(frozen=True)
class SelectedChangePoints:
    positions: np.ndarray
    segments: list[FittedModel]
    mdl: MdlScore

    @property
    def m2(self) -> int:
        return int(self.positions.shape[0])


class SegmentCostCache:
    """Memoized per-segment MDL contributions for one series."""

    def __init__(self, x, cfg: SelectionConfig):
        self.x = as_series(x)
        self.cfg = cfg
        self._cache: dict[tuple[int, int], SegmentCost] = {}

    def __call__(self, lo: int, hi: int) -> SegmentCost:
        key = (lo, hi)
        if key not in self._cache:
            self._cache[key] = segment_cost(self.x[lo:hi], self.cfg, offset=lo)
        return self._cache[key]


def segment_cost(seg, cfg: SelectionConfig, offset: int = 0) -> SegmentCost:
    """MDL contribution of one segment: order codes + parameter precision - loglik."""
    n_j = seg.shape[0]
    if cfg.family is Family.GARCH:
        spec = ModelSpec.garch()
        if n_j < spec.min_fit_length:
            return INFEASIBLE
        fit = fit_mle(spec, seg)
        fit = FittedModel(spec, fit.params, fit.loglik, (offset, offset + n_j), fit.degenerate, fit.status)
        # orders fixed at (1, 1): log 1 + log 1
        return SegmentCost(0.0, 0.5 * spec.dim * math.log(n_j), fit.loglik, fit)
    best = INFEASIBLE
    for p in range(cfg.p_max + 1):
        spec = ModelSpec.ar(p, cfg.mean)
        if n_j < spec.min_fit_length:
            continue
        fit = fit_mle(spec, seg)
        order_term = math.log(p) if p > 0 else 0.0
        cand = SegmentCost(order_term, 0.5 * spec.dim * math.log(n_j), fit.loglik, fit)
        if cand.cost < best.cost:
            best = cand
    if best.fit is not None:
        f = best.fit
        best = SegmentCost(
            best.order_term, best.param_term, best.loglik,
            FittedModel(f.spec, f.params, f.loglik, (offset, offset + n_j), f.degenerate, f.status),
        )
    return best


def _bounds(n, positions):
    return [0, *(int(p) for p in positions), n]


def _count_term(m: int) -> float:
    return math.log(m) if m >= 1 else 0.0


def mdl(x, positions, cfg: SelectionConfig, cache: SegmentCostCache | None = None) -> MdlScore:
    """MDL of the segmentation implied by ``positions``; infeasible segments give +inf."""
    x = as_series(x)
    n = x.shape[0]
    positions = [int(p) for p in positions]
    if any(b <= a for a, b in zip(positions, positions[1:])) or (positions and not 0 < positions[0] <= positions[-1] < n):
        raise ValueError("positions must be strictly increasing inside (0, n)")
    cache = cache or SegmentCostCache(x, cfg)
    m = len(positions)
    bounds = _bounds(n, positions)
    costs = [cache(a, b) for a, b in zip(bounds, bounds[1:])]
    if any(not math.isfinite(c.cost) for c in costs):
        return MdlScore(_count_term(m), (m + 1) * math.log(n), math.inf, 0.0, 0.0)
    return MdlScore(
        _count_term(m),
        (m + 1) * math.log(n),
        sum(c.order_term for c in costs),
        sum(c.param_term for c in costs),
        -sum(c.loglik for c in costs),
    )


def _result(x, positions, cfg, cache):
    n = x.shape[0]
    bounds = _bounds(n, positions)
    segs = [cache(a, b).fit for a, b in zip(bounds, bounds[1:])]
    return SelectedChangePoints(np.asarray(positions, dtype=np.int64), segs, mdl(x, positions, cfg, cache))


def select_subset(x, candidates: CandidateSet, cfg: SelectionConfig, cache: SegmentCostCache | None = None) -> SelectedChangePoints:
    """Exact MDL minimizer over subsets of the candidates.

    Optimal partitioning over the candidate grid, indexed additionally by the
    number of segments because the ``log(m)`` count term is not additive.
    """
    x = as_series(x)
    n = x.shape[0]
    cache = cache or SegmentCostCache(x, cfg)
    grid = [0, *(int(c) for c in candidates.positions), n]
    M = len(grid) - 1  # index of the right endpoint
    if cache(0, n).cost == math.inf and M == 1:
        raise InsufficientDataError("series is too short for a single segment fit")
    inf = math.inf
    # best[k][j]: minimal segment-cost sum covering (0, grid[j]] with k segments
    best = [[inf] * (M + 1) for _ in range(M + 1)]
    back = [[-1] * (M + 1) for _ in range(M + 1)]
    best[0][0] = 0.0
    for k in range(1, M + 1):
        for j in range(k, M + 1):
            for i in range(k - 1, j):
                prev = best[k - 1][i]
                if prev == inf:
                    continue
                c = cache(grid[i], grid[j]).cost
                if prev + c < best[k][j]:
                    best[k][j] = prev + c
                    back[k][j] = i
    best_total, best_k = inf, -1
    for k in range(1, M + 1):
        if best[k][M] == inf:
            continue
        total = best[k][M] + _count_term(k - 1) + k * math.log(n)
        if total < best_total:
            best_total, best_k = total, k
    if best_k < 0:
        raise InsufficientDataError("no feasible segmentation of the series")
    idx, j = [], M
    for k in range(best_k, 0, -1):
        i = back[k][j]
        idx.append(i)
        j = i
    positions = sorted(grid[i] for i in idx if i != 0)
    return _result(x, positions, cfg, cache)


def exhaustive_subset(x, candidates: CandidateSet, cfg: SelectionConfig) -> SelectedChangePoints:
    """Brute-force enumeration of all ``2^m`` candidate subsets (test oracle)."""
    x = as_series(x)
    cache = SegmentCostCache(x, cfg)
    pos = [int(c) for c in candidates.positions]
    best, best_score = None, math.inf
    for r in range(len(pos) + 1):
        for subset in itertools.combinations(pos, r):
            score = mdl(x, subset, cfg, cache).total
            if score < best_score:
                best, best_score = list(subset), score
    if best is None:
        raise InsufficientDataError("no feasible segmentation of the series")
    return _result(x, best, cfg, cache)
