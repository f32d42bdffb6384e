"""Likelihood-ratio scan over sliding windows and local-maximum candidates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from glrsm._backend import kernels as K
from glrsm.errors import ConfigurationError, InsufficientDataError
from glrsm.models import Family, ModelSpec, as_series, fit_mle

#: optimizer tolerance allowed below zero for scan statistics
EPS_OPT = 1e-6


def default_h(n: int) -> int:
    """Rule-of-thumb window radius ``max(100, floor((log n)^4 / 25))``."""
    return max(100, int(math.floor(math.log(n) ** 4 / 25.0)))


@dataclass(frozen=True)
class ScanConfig:
    h: int
    model: ModelSpec
    max_candidates: int | None = None
    stride: int = 1

    def __post_init__(self):
        if self.model.family is Family.ARMA:
            raise ConfigurationError("scan with an AR model; ARMA is only used for refinement")
        if self.h < self.model.min_fit_length:
            raise ConfigurationError(
                f"h={self.h} is below the minimum fit length {self.model.min_fit_length} of {self.model}"
            )
        if self.stride < 1:
            raise ConfigurationError("stride must be >= 1")
        if self.max_candidates is not None and self.max_candidates < 1:
            raise ConfigurationError("max_candidates must be positive")


@dataclass(frozen=True)
class ScanProfile:
    """``stats[i]`` is ``S_h(h + i)``; NaN marks positions skipped by a stride."""

    stats: np.ndarray
    h: int
    n: int

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.h, self.n - self.h + 1)

    def value(self, t: int) -> float:
        if t < self.h or t > self.n - self.h:
            return 0.0
        return float(self.stats[t - self.h])


@dataclass(frozen=True)
class CandidateSet:
    positions: np.ndarray
    scores: np.ndarray

    @property
    def m1(self) -> int:
        return int(self.positions.shape[0])


def _check(x, cfg):
    n = x.shape[0]
    if 2 * cfg.h > n:
        raise InsufficientDataError(f"series of length {n} is shorter than 2h = {2 * cfg.h}")


def _garch_stat_careful(x, t, h):
    w = x[t - h : t + h]
    v0 = float(np.mean(w * w))
    pooled = fit_mle(ModelSpec.garch(), w, v0=v0)
    left = fit_mle(ModelSpec.garch(), w[:h], v0=v0, seeds=pooled.params)
    right = fit_mle(ModelSpec.garch(), w, start=h, v0=v0, seeds=pooled.params)
    return (left.loglik + right.loglik - pooled.loglik) / h


def _stats_at(x, ts, cfg):
    ts = np.asarray(ts, dtype=np.int64)
    spec = cfg.model
    if spec.family is Family.AR:
        return K.ar_scan(x, ts, cfg.h, spec.p, int(spec.mean))
    stats, status = K.garch_scan(x, ts, cfg.h)
    # line-search failures are refit with the slower multi-start + simplex path
    for idx in np.flatnonzero(status >= 2):
        stats[idx] = _garch_stat_careful(x, int(ts[idx]), cfg.h)
    return stats


def scan_statistic(x, t: int, cfg: ScanConfig) -> float:
    """``S_h(t)``: split versus pooled maximized log-likelihood on the window
    ``x[t-h:t+h]``, divided by ``h``."""
    x = as_series(x)
    _check(x, cfg)
    if not cfg.h <= t <= x.shape[0] - cfg.h:
        raise IndexError(f"t={t} outside [{cfg.h}, {x.shape[0] - cfg.h}]")
    if cfg.model.family is Family.GARCH:
        return float(_garch_stat_careful(x, t, cfg.h))
    return float(_stats_at(x, [t], cfg)[0])


def scan_series(x, cfg: ScanConfig) -> ScanProfile:
    x = as_series(x)
    _check(x, cfg)
    n, h = x.shape[0], cfg.h
    ts = np.arange(h, n - h + 1)
    if cfg.stride > 1:
        ts = np.unique(np.append(ts[:: cfg.stride], n - h))
    stats = np.full(n - 2 * h + 1, np.nan)
    stats[ts - h] = _stats_at(x, ts, cfg)
    return ScanProfile(stats, h, n)


def _local_maxima(profile: ScanProfile) -> np.ndarray:
    h, n = profile.h, profile.n
    # S_h is zero outside [h, n-h]; pad so index i holds S_h(i) for i in [0, n+h]
    full = np.zeros(n + h + 1)
    full[h : n - h + 1] = profile.stats
    valid = np.zeros(n + h + 1, dtype=bool)
    valid[:] = True
    valid[h : n - h + 1] = ~np.isnan(profile.stats)
    full[~valid] = -np.inf
    out = []
    for m in range(h, n - h + 1):
        if not valid[m]:
            continue
        s = full[m]
        lo, hi = max(m - h + 1, 0), m + h
        before = full[lo:m]
        after = full[m + 1 : hi + 1]
        # leftmost of equal maxima wins
        if np.all(before < s) and np.all(after <= s):
            out.append(m)
    return np.asarray(out, dtype=np.int64)


def extract_candidates(profile: ScanProfile, cfg: ScanConfig, x=None) -> CandidateSet:
    """Positions ``m`` where ``S_h(m)`` is the maximum over ``(m-h, m+h]``.

    With a stride > 1 pass ``x`` so each coarse maximum is moved to the
    stride-1 maximum of its neighbourhood.
    """
    if profile.h != cfg.h:
        raise ConfigurationError("profile and config disagree on h")
    pos = _local_maxima(profile)
    if cfg.stride > 1 and pos.size:
        if x is None:
            raise ConfigurationError("strided profiles need the series to refine candidates")
        x = as_series(x)
        refined = []
        for m in pos:
            ts = np.arange(max(profile.h, m - cfg.stride + 1), min(profile.n - profile.h, m + cfg.stride - 1) + 1)
            vals = _stats_at(x, ts, cfg)
            refined.append(int(ts[np.argmax(vals)]))
            profile.stats[ts - profile.h] = vals
        pos = np.unique(np.asarray(refined, dtype=np.int64))
    scores = profile.stats[pos - profile.h] if pos.size else np.zeros(0)
    # enforce strict separation > h (exact distance h can tie under the half-open window)
    order = sorted(range(pos.size), key=lambda i: (-scores[i], pos[i]))
    keep: list[int] = []
    for i in order:
        if all(abs(int(pos[i]) - int(pos[j])) > cfg.h for j in keep):
            keep.append(i)
    if cfg.max_candidates is not None:
        keep = keep[: cfg.max_candidates]
    keep.sort(key=lambda i: pos[i])
    return CandidateSet(pos[keep].astype(np.int64), np.asarray(scores[keep], dtype=float))
