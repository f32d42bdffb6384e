"""Final change-point estimates by split-likelihood maximization in a local window.

Positions follow the usual convention: a change-point ``tau`` means the first
segment ends with observation ``tau`` (1-based), i.e. ``x[:tau]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from glrsm._backend import kernels as K
from glrsm.errors import InsufficientDataError
from glrsm.models import Family, FittedModel, ModelSpec, as_series, fit_mle


@dataclass(frozen=True)
class ExtendedWindow:
    """Observations ``x[start:stop]`` around a selected change-point."""

    center: int
    start: int
    stop: int
    clamped: bool

    @property
    def width(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class RefinedChangePoint:
    tau2: int
    tau3: int
    window: ExtendedWindow
    left_fit: FittedModel
    right_fit: FittedModel
    taus: np.ndarray = field(repr=False)
    profile: np.ndarray = field(repr=False)
    range_shrunk: bool = False


def extended_window(tau2: int, h: int, n: int, lo: int = 0, hi: int | None = None) -> ExtendedWindow:
    """``{tau2-2h+1, ..., tau2+2h}`` clamped to ``[lo, hi)`` (defaults to the series)."""
    hi = n if hi is None else hi
    start, stop = tau2 - 2 * h, tau2 + 2 * h
    cs, ce = max(start, lo, 0), min(stop, hi, n)
    return ExtendedWindow(tau2, cs, ce, (cs, ce) != (start, stop))


def _split_profile(w, ks, spec: ModelSpec):
    """Left/right log-likelihoods (and fitted parameters when numeric)."""
    if spec.family is Family.AR:
        left, right = K.ar_split_profile(w, ks, spec.p, int(spec.mean))
        return left, right, None, None
    if spec.family is Family.GARCH:
        v0 = float(np.mean(w * w))
        left, right, th_l, th_r, _ = K.garch_split_profile(w, ks, v0)
        return left, right, th_l, th_r
    seed = np.zeros(spec.p + spec.q)
    if spec.p:
        seed[: spec.p] = np.clip(K.ar_fit(w, 0, spec.p, 0)[0], -0.95 * spec.bound, 0.95 * spec.bound)
    left, right, th_l, th_r, _ = K.arma_split_profile(w, ks, spec.p, spec.q, spec.bound, seed)
    return left, right, th_l, th_r


def _fits_at(w, k, spec, th_l, th_r, left_ll, right_ll, offset):
    n = w.shape[0]
    if th_l is None:
        lf = fit_mle(spec, w[:k])
        rf = fit_mle(spec, w, start=k)
        return (
            FittedModel(spec, lf.params, lf.loglik, (offset, offset + k), lf.degenerate),
            FittedModel(spec, rf.params, rf.loglik, (offset + k, offset + n), rf.degenerate),
        )
    return (
        FittedModel(spec, np.asarray(th_l), float(left_ll), (offset, offset + k)),
        FittedModel(spec, np.asarray(th_r), float(right_ll), (offset + k, offset + n)),
    )


def refine_changepoint(x, tau2: int, h: int, spec: ModelSpec, bounds: tuple[int, int] | None = None) -> RefinedChangePoint:
    """Maximize the split likelihood over ``tau`` in ``(tau2-h, tau2+h]``.

    Both sides are refit for every ``tau``; the right side's terms condition
    on the window observations before it. ``bounds`` truncates the extended
    window, e.g. at midpoints between neighbouring change-points.
    """
    x = as_series(x)
    n = x.shape[0]
    lo, hi = bounds if bounds is not None else (0, n)
    win = extended_window(tau2, h, n, lo, hi)
    w = x[win.start : win.stop]
    mfl = spec.min_fit_length
    t_lo, t_hi = tau2 - h + 1, tau2 + h
    s_lo = max(t_lo, win.start + mfl)
    s_hi = min(t_hi, win.stop - mfl)
    if s_lo > s_hi:
        raise InsufficientDataError(
            f"extended window [{win.start}, {win.stop}) cannot hold two segments of {mfl} observations"
        )
    taus = np.arange(s_lo, s_hi + 1, dtype=np.int64)
    ks = taus - win.start
    left, right, th_l, th_r = _split_profile(w, ks, spec)
    profile = left + right
    best = int(np.argmax(profile))  # first maximum: smallest tau wins ties
    lf, rf = _fits_at(
        w, int(ks[best]), spec,
        None if th_l is None else th_l[best],
        None if th_r is None else th_r[best],
        left[best], right[best], win.start,
    )
    return RefinedChangePoint(
        tau2=int(tau2), tau3=int(taus[best]), window=win, left_fit=lf, right_fit=rf,
        taus=taus, profile=profile, range_shrunk=(s_lo, s_hi) != (t_lo, t_hi),
    )


def refine_all(x, taus2, h: int, spec: ModelSpec) -> list[RefinedChangePoint]:
    """Refine every selected change-point; overlapping windows are cut at midpoints."""
    x = as_series(x)
    n = x.shape[0]
    taus2 = [int(t) for t in taus2]
    out = []
    for j, t in enumerate(taus2):
        lo = 0 if j == 0 else (taus2[j - 1] + t) // 2
        hi = n if j == len(taus2) - 1 else (t + taus2[j + 1]) // 2
        out.append(refine_changepoint(x, t, h, spec, (lo, hi)))
    return out


def single_changepoint_estimate(x, spec: ModelSpec) -> int:
    """Global single change-point MLE over every admissible split of ``x``."""
    x = as_series(x)
    n = x.shape[0]
    mfl = spec.min_fit_length
    if n < 2 * mfl:
        raise InsufficientDataError(f"need at least {2 * mfl} observations, got {n}")
    ks = np.arange(mfl, n - mfl + 1, dtype=np.int64)
    left, right, _, _ = _split_profile(x, ks, spec)
    return int(ks[int(np.argmax(left + right))])
