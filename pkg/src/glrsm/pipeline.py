"""Scan, select, refine and interval estimation composed into one call."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

from glrsm.ci import ArgmaxLawTable, confidence_interval, simultaneous_level
from glrsm.errors import ConfigurationError, DomainError
from glrsm.models import Family, ModelSpec, as_series, fit_mle
from glrsm.refine import refine_all
from glrsm.scan import ScanConfig, default_h, extract_candidates, scan_series
from glrsm.selection import SelectionConfig, select_subset

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    """Models and tuning for one detection run.

    ``scan_model`` drives the scan and (through its family) the MDL segment
    models; ``refine_model`` is used for the final estimates and intervals.
    ``h=None`` resolves to :func:`glrsm.scan.default_h` of the series length.
    """

    scan_model: ModelSpec
    refine_model: ModelSpec | None = None
    h: int | None = None
    p_max: int = 5
    max_candidates: int | None = None
    stride: int = 1
    alpha: float = 0.1
    simultaneous: bool = False

    def __post_init__(self):
        if self.refine_model is None:
            object.__setattr__(self, "refine_model", self.scan_model)
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha={self.alpha} outside (0, 1)")
        if self.h is not None and self.h < 1:
            raise ConfigurationError("h must be positive")
        if self.scan_model.family is Family.ARMA:
            raise ConfigurationError("scan with an AR or GARCH model")
        if (self.scan_model.family is Family.GARCH) != (self.refine_model.family is Family.GARCH):
            raise ConfigurationError("scan and refinement models must both be GARCH or both be linear")

    @classmethod
    def for_model(cls, spec: ModelSpec, scan_order: int = 5, **kw) -> PipelineConfig:
        """AR and GARCH models scan with themselves; ARMA data are scanned with
        an AR(``scan_order``) and only refined with the ARMA model."""
        scan = ModelSpec.ar(scan_order) if spec.family is Family.ARMA else spec
        return cls(scan_model=scan, refine_model=spec, **kw)

    def selection(self) -> SelectionConfig:
        return SelectionConfig(self.scan_model.family, self.p_max, self.scan_model.mean)


@dataclass(frozen=True)
class ChangePointResult:
    tau2: int
    tau3: int
    ci_lo: int
    ci_hi: int
    level: float
    delta: float
    quantile: float
    degenerate: bool = False
    range_shrunk: bool = False


@dataclass(frozen=True)
class SegmentResult:
    start: int
    stop: int
    params: dict[str, float]
    loglik: float | None


@dataclass(frozen=True)
class DetectionResult:
    """Plain-data output of :func:`detect`; positions are 1-based segment ends."""

    n: int
    h: int
    scan_model: str
    refine_model: str
    alpha: float
    simultaneous: bool
    candidates: list[int]
    candidate_scores: list[float]
    selected: list[int]
    mdl: dict[str, float]
    changepoints: list[ChangePointResult]
    segments: list[SegmentResult]
    timings: dict[str, float] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @property
    def positions(self) -> list[int]:
        return [c.tau3 for c in self.changepoints]

    @property
    def m(self) -> int:
        return len(self.changepoints)

    def to_dict(self, timestamps: bool = True) -> dict:
        d = asdict(self)
        if not timestamps:
            d["timings"] = {}
        return d

    def to_json(self, timestamps: bool = True, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(timestamps), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> DetectionResult:
        d = dict(d)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {d.get('schema_version')}")
        d["changepoints"] = [ChangePointResult(**c) for c in d["changepoints"]]
        d["segments"] = [SegmentResult(**s) for s in d["segments"]]
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> DetectionResult:
        return cls.from_dict(json.loads(text))


def detect(x, cfg: PipelineConfig, table: ArgmaxLawTable | None = None) -> DetectionResult:
    """Run scan, MDL selection, refinement and intervals on ``x``."""
    x = as_series(x)
    n = x.shape[0]
    h = cfg.h if cfg.h is not None else default_h(n)
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    scfg = ScanConfig(h, cfg.scan_model, cfg.max_candidates, cfg.stride)
    profile = scan_series(x, scfg)
    cands = extract_candidates(profile, scfg, x)
    timings["scan"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    sel = select_subset(x, cands, cfg.selection())
    timings["select"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    refined = refine_all(x, sel.positions, h, cfg.refine_model)
    timings["refine"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    m = len(refined)
    level = simultaneous_level(cfg.alpha, m) if cfg.simultaneous and m else cfg.alpha
    cps = []
    for r in refined:
        ci = confidence_interval(x, r, h, cfg.refine_model, level, table)
        cps.append(ChangePointResult(
            r.tau2, r.tau3, ci.lo, ci.hi, level, float(ci.delta), ci.quantile, ci.degenerate, r.range_shrunk,
        ))
    timings["ci"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    segments = _segment_fits(x, [c.tau3 for c in cps], cfg.refine_model)
    timings["segments"] = time.perf_counter() - t0

    mdl = {k: (v if math.isfinite(v) else None) for k, v in sel.mdl.as_dict().items()}
    return DetectionResult(
        n=n, h=h, scan_model=str(cfg.scan_model), refine_model=str(cfg.refine_model),
        alpha=cfg.alpha, simultaneous=cfg.simultaneous,
        candidates=[int(c) for c in cands.positions], candidate_scores=[float(s) for s in cands.scores],
        selected=[int(p) for p in sel.positions], mdl=mdl, changepoints=cps, segments=segments,
        timings=timings,
    )


def _segment_fits(x, positions, spec):
    n = x.shape[0]
    bounds = [0, *positions, n]
    out = []
    for a, b in zip(bounds, bounds[1:]):
        if b - a < spec.min_fit_length:
            out.append(SegmentResult(a, b, {}, None))
            continue
        try:
            fit = fit_mle(spec, x[a:b])
        except DomainError:
            out.append(SegmentResult(a, b, {}, None))
            continue
        out.append(SegmentResult(a, b, fit.as_dict(), float(fit.loglik)))
    return out


def summarize(result: DetectionResult) -> str:
    """Short human-readable report."""
    lines = [f"n={result.n} h={result.h} model={result.refine_model} change-points={result.m}"]
    for c in result.changepoints:
        flag = " (degenerate contrast)" if c.degenerate else ""
        lines.append(f"  tau={c.tau3:6d}  CI[{c.ci_lo}, {c.ci_hi}]  level={1 - c.level:.3f}{flag}")
    return "\n".join(lines)


__all__ = [
    "PipelineConfig", "DetectionResult", "ChangePointResult", "SegmentResult", "detect", "summarize",
    "SCHEMA_VERSION",
]
