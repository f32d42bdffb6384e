"""Confidence intervals for change-point locations.

The interval half-width is ``floor(Delta * F) + 1`` where ``F`` is an upper
quantile of ``argmax_r {B(r) - |r|/2}`` (two-sided Brownian motion ``B``) and
``Delta = (d' Omega d) / (d' Sigma d)^2`` is built from the parameter jump
``d``, the averaged observed information ``Sigma`` and the score covariance
``Omega`` around the estimate.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from glrsm.errors import DegenerateContrastError, DomainError
from glrsm.models import Family, ModelSpec, as_series, check_params, hessian, scores, split_params
from glrsm.refine import RefinedChangePoint

TABLE_ENV = "GLRSM_QUANTILE_TABLE"
TABLE_VERSION = 1
PROB_GRID = np.round(np.arange(1, 1000) / 1000.0, 3)

# a side whose walk sits this far below its running maximum is stopped: with
# drift -1/2 the chance of ever climbing back is exp(-STOP_GAP)
STOP_GAP = 20.0
_BATCH = 10_000
_BLOCK = 500


# ---------------------------------------------------------------------------
# argmax law of B(r) - |r|/2
# ---------------------------------------------------------------------------


def _one_side(rng, paths, n_steps, delta):
    """Max and argmax (in steps) of a discretized BM with drift -1/2 on one side."""
    sd = math.sqrt(delta)
    drift = -0.5 * delta
    cur = np.zeros(paths)
    mx = np.zeros(paths)
    amx = np.zeros(paths, dtype=np.int64)
    alive = np.arange(paths)
    done = 0
    while alive.size and done < n_steps:
        b = min(_BLOCK, n_steps - done)
        walk = cur[alive, None] + np.cumsum(sd * rng.standard_normal((alive.size, b)) + drift, axis=1)
        j = np.argmax(walk, axis=1)
        bm = walk[np.arange(alive.size), j]
        better = bm > mx[alive]
        idx = alive[better]
        mx[idx] = bm[better]
        amx[idx] = done + 1 + j[better]
        cur[alive] = walk[:, -1]
        done += b
        alive = alive[cur[alive] > mx[alive] - STOP_GAP]
    # expected fraction of alive paths whose maximum lies beyond the grid
    trunc = float(np.sum(np.exp(-(mx[alive] - cur[alive])))) if done >= n_steps else 0.0
    return mx, amx, trunc


def simulate_argmax_law(R: float = 200.0, delta: float = 0.01, paths: int = 1_000_000, seed: int = 0):
    """Monte-Carlo draws of ``argmax_{|r| <= R} {B(r) - |r|/2}`` on a ``delta`` grid.

    Returns ``(samples, truncated_mass)``; the second value estimates the
    fraction of paths whose unrestricted argmax lies beyond ``R``.
    """
    if R <= 0 or delta <= 0 or paths < 1:
        raise ValueError("R, delta and paths must be positive")
    rng = np.random.default_rng(seed)
    n_steps = int(round(R / delta))
    out = np.empty(paths)
    trunc = 0.0
    for lo in range(0, paths, _BATCH):
        b = min(_BATCH, paths - lo)
        mr, ar, tr = _one_side(rng, b, n_steps, delta)
        ml, al, tl = _one_side(rng, b, n_steps, delta)
        out[lo : lo + b] = np.where(mr >= ml, ar, -al) * delta
        trunc += tr + tl
    return out, trunc / paths


@dataclass(frozen=True)
class ArgmaxLawTable:
    """Quantiles ``F_p`` of the argmax law on the permille grid, with provenance."""

    probs: np.ndarray = field(repr=False)
    quantiles: np.ndarray = field(repr=False)
    R: float = 200.0
    delta: float = 0.01
    paths: int = 1_000_000
    seed: int = 0
    truncated_mass: float = 0.0

    @classmethod
    def generate(cls, R=200.0, delta=0.01, paths=1_000_000, seed=0) -> ArgmaxLawTable:
        samples, trunc = simulate_argmax_law(R, delta, paths, seed)
        q = np.quantile(samples, PROB_GRID)
        return cls(PROB_GRID.copy(), q, float(R), float(delta), int(paths), int(seed), float(trunc))

    def quantile(self, p: float) -> float:
        if not 0.0 < p < 1.0:
            raise DomainError(f"probability {p} outside (0, 1)")
        if p < self.probs[0] or p > self.probs[-1]:
            warnings.warn(f"p={p} beyond the tabulated range; using the nearest table entry", stacklevel=2)
        return float(np.interp(p, self.probs, self.quantiles))

    def to_text(self) -> str:
        lines = [
            "# glrsm argmax-law table",
            f"# version={TABLE_VERSION}",
            f"# R={self.R!r}",
            f"# delta={self.delta!r}",
            f"# paths={self.paths}",
            f"# seed={self.seed}",
            f"# stop_gap={STOP_GAP!r}",
            f"# truncated_mass={self.truncated_mass!r}",
            "p,F_p",
        ]
        lines += [f"{p!r},{q!r}" for p, q in zip(self.probs.tolist(), self.quantiles.tolist())]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> ArgmaxLawTable:
        meta: dict[str, str] = {}
        probs, qs = [], []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "=" in line:
                    key, val = line[1:].strip().split("=", 1)
                    meta[key.strip()] = val.strip()
                continue
            if line.startswith("p,"):
                continue
            a, b = line.split(",")
            probs.append(float(a))
            qs.append(float(b))
        if int(meta.get("version", "0")) != TABLE_VERSION:
            raise ValueError("unsupported argmax-law table version")
        return cls(
            np.asarray(probs), np.asarray(qs),
            float(meta["R"]), float(meta["delta"]), int(meta["paths"]), int(meta["seed"]),
            float(meta.get("truncated_mass", "0.0")),
        )

    @classmethod
    def load(cls, path) -> ArgmaxLawTable:
        return cls.from_text(Path(path).read_text())


_DEFAULT_TABLE: ArgmaxLawTable | None = None


def default_table() -> ArgmaxLawTable:
    """Bundled table, or the file named by ``GLRSM_QUANTILE_TABLE``."""
    global _DEFAULT_TABLE
    override = os.environ.get(TABLE_ENV)
    if override:
        return ArgmaxLawTable.load(override)
    if _DEFAULT_TABLE is None:
        text = resources.files("glrsm").joinpath("data/argmax_law.csv").read_text()
        _DEFAULT_TABLE = ArgmaxLawTable.from_text(text)
    return _DEFAULT_TABLE


def argmax_law_quantile(p: float, table: ArgmaxLawTable | None = None) -> float:
    return (table or default_table()).quantile(p)


# ---------------------------------------------------------------------------
# interval construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CIComponents:
    d: np.ndarray
    sigma: np.ndarray
    omega: np.ndarray
    window: tuple[int, int]

    @property
    def delta(self) -> float:
        dsd = float(self.d @ self.sigma @ self.d)
        return float(self.d @ self.omega @ self.d) / dsd**2


@dataclass(frozen=True)
class ChangePointCI:
    tau3: int
    alpha: float
    delta: float
    lo: int
    hi: int
    quantile: float
    degenerate: bool = False
    components: CIComponents | None = field(default=None, compare=False, repr=False)

    def covers(self, tau: int) -> bool:
        return self.lo <= tau <= self.hi

    @property
    def width(self) -> int:
        return self.hi - self.lo


def estimate_ci_components(x, rcp: RefinedChangePoint, h: int, spec: ModelSpec) -> CIComponents:
    """Parameter jump, observed information and score covariance at the
    right-hand fit, averaged over ``2h`` observations either side of the
    final estimate (clipped to the extended window)."""
    x = as_series(x)
    win = rcp.window
    w = x[win.start : win.stop]
    lo = max(win.start, rcp.tau3 - 2 * h) - win.start
    hi = min(win.stop, rcp.tau3 + 2 * h) - win.start
    theta_r = rcp.right_fit.params
    v0 = float(np.mean(w * w)) if spec.family is Family.GARCH else None
    d = np.asarray(rcp.left_fit.params, dtype=float) - np.asarray(theta_r, dtype=float)
    sigma = -hessian(spec, theta_r, w, (lo, hi), v0)
    D = scores(spec, theta_r, w, v0)[lo:hi]
    Dc = D - D.mean(axis=0)
    omega = Dc.T @ Dc / D.shape[0]
    scale = float(d @ d) * max(float(np.max(np.abs(sigma))), 1e-300)
    dsd = float(d @ sigma @ d)
    if not np.any(d) or abs(dsd) <= 1e-12 * scale:
        raise DegenerateContrastError(f"no parameter contrast at tau={rcp.tau3}")
    return CIComponents(d, sigma, omega, (win.start + lo, win.start + hi))


def build_ci(rcp: RefinedChangePoint, components: CIComponents, alpha: float = 0.1, n: int | None = None, table: ArgmaxLawTable | None = None) -> ChangePointCI:
    """``[tau3 - floor(Delta F) - 1, tau3 + floor(Delta F) + 1]`` clipped to ``[1, n]``."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha={alpha} outside (0, 1)")
    F = argmax_law_quantile(1.0 - alpha / 2.0, table)
    delta = components.delta
    half = int(math.floor(delta * F)) + 1
    lo = rcp.tau3 - half
    hi = rcp.tau3 + half
    if n is not None:
        lo, hi = max(lo, 1), min(hi, n)
    return ChangePointCI(rcp.tau3, alpha, delta, lo, hi, F, components=components)


def confidence_interval(x, rcp: RefinedChangePoint, h: int, spec: ModelSpec, alpha: float = 0.1, table: ArgmaxLawTable | None = None) -> ChangePointCI:
    """CI for one refined change-point; a degenerate contrast yields the
    whole search range, flagged."""
    x = as_series(x)
    try:
        comps = estimate_ci_components(x, rcp, h, spec)
    except DegenerateContrastError:
        warnings.warn(f"degenerate parameter contrast at tau={rcp.tau3}; reporting the search range", stacklevel=2)
        F = argmax_law_quantile(1.0 - alpha / 2.0, table)
        return ChangePointCI(rcp.tau3, alpha, math.inf, int(rcp.taus[0]), int(rcp.taus[-1]), F, degenerate=True)
    return build_ci(rcp, comps, alpha, x.shape[0], table)


def simultaneous_level(alpha: float, m: int) -> float:
    """Per-interval level so that ``m`` independent intervals jointly cover with ``1 - alpha``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha={alpha} outside (0, 1)")
    return 1.0 - (1.0 - alpha) ** (1.0 / m)


# ---------------------------------------------------------------------------
# double-sided random walk of log-likelihood differences
# ---------------------------------------------------------------------------


def _simulate_batch(spec, theta1, theta2, z, n1):
    """Simulate rows with parameters theta1 for the first ``n1`` steps then theta2."""
    B, T = z.shape
    x = np.zeros((B, T))
    if spec.family is Family.GARCH:
        w1, a1, b1 = theta1
        sig2 = np.full(B, w1 / (1.0 - a1 - b1))
        xp = np.zeros(B)
        for t in range(T):
            om, al, be = theta1 if t < n1 else theta2
            sig2 = om + al * xp * xp + be * sig2
            xp = np.sqrt(sig2) * z[:, t]
            x[:, t] = xp
        return x
    p, q = spec.p, spec.q
    eps = np.zeros((B, T))
    for t in range(T):
        c, phi, ma, s2 = split_params(spec, theta1 if t < n1 else theta2)
        e = math.sqrt(s2) * z[:, t]
        v = c + e
        for j in range(1, p + 1):
            if t - j >= 0:
                v = v + phi[j - 1] * x[:, t - j]
        for j in range(1, q + 1):
            if t - j >= 0:
                v = v + ma[j - 1] * eps[:, t - j]
        x[:, t] = v
        eps[:, t] = e
    return x


def _batch_loglik(spec, theta, x):
    if spec.family is Family.GARCH:
        om, al, be = theta
        x2 = x * x
        x2prev = np.concatenate((np.zeros((x.shape[0], 1)), x2[:, :-1]), axis=1)
        v0 = om / (1.0 - al - be)
        zi = np.full((x.shape[0], 1), be * v0)
        sig2 = lfilter([1.0], [1.0, -be], om + al * x2prev, axis=1, zi=zi)[0]
        return -0.5 * (np.log(2 * np.pi) + np.log(sig2) + x2 / sig2)
    c, phi, ma, s2 = split_params(spec, theta)
    e = lfilter(np.concatenate(([1.0], -phi)), np.concatenate(([1.0], ma)), x, axis=1)
    if spec.mean:
        e = e - c
    return -0.5 * (np.log(2 * np.pi) + np.log(s2)) - 0.5 * e * e / s2


def simulate_random_walk_argmax(theta1, theta2, spec: ModelSpec, trunc: int, paths: int, seed=None, burn_in: int = 200) -> np.ndarray:
    """Draws of ``argmax_{|tau| <= trunc} W_tau`` for a change from theta1 to theta2.

    ``W_tau`` sums ``l_t(theta1) - l_t(theta2)`` over the first ``tau``
    post-change observations (``tau > 0``) and ``l_t(theta2) - l_t(theta1)``
    over the last ``|tau|`` pre-change observations (``tau < 0``). Ties go to
    the smallest ``|tau|``.
    """
    theta1 = check_params(spec, theta1, stationary=True)
    theta2 = check_params(spec, theta2, stationary=True)
    if trunc < 1 or paths < 1:
        raise ValueError("trunc and paths must be positive")
    rng = np.random.default_rng(seed)
    n1 = burn_in + trunc
    T = n1 + trunc
    # offsets ordered 0, 1, -1, 2, -2, ... so argmax ties resolve toward 0
    order = np.zeros(2 * trunc + 1, dtype=np.int64)
    order[1::2] = np.arange(1, trunc + 1)
    order[2::2] = -np.arange(1, trunc + 1)
    out = np.empty(paths, dtype=np.int64)
    for lo in range(0, paths, 20_000):
        b = min(20_000, paths - lo)
        x = _simulate_batch(spec, theta1, theta2, rng.standard_normal((b, T)), n1)
        diff = _batch_loglik(spec, theta1, x) - _batch_loglik(spec, theta2, x)
        W = np.zeros((b, 2 * trunc + 1))
        W[:, 1:trunc + 1] = np.cumsum(diff[:, n1:], axis=1)
        W[:, trunc + 1:] = np.cumsum(-diff[:, n1 - 1 : burn_in - 1 if burn_in > 0 else None : -1], axis=1)[:, :trunc]
        cols = np.where(order >= 0, order, trunc - order)
        out[lo : lo + b] = order[np.argmax(W[:, cols], axis=1)]
    return out
