"""Chip and batch quality metrics computed from a probe-level fit.

* USE / NUSE: ``1/sqrt(W)`` per chip and probeset, divided by its median
  over chips.
* RLE: chip expression minus the median-chip expression.
* Per-chip median and IQR of log2 PM, RLE and NUSE, with outlier flags.
* RSF / NRSF: median residual scale of a batch, optionally after dividing
  each probeset's scale by its median over batches.
* Average Background and Scale Factor computed from raw intensities.

Medians of even-sized samples average the two central order statistics.
Quartiles use linear interpolation between order statistics (numpy's
default ``"linear"`` method).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import ConfigError, DegenerateChip, LayoutMismatch, ParseError, RefMismatch, ShapeError
from .plm import PlmConfig, PlmResult, ProbesetFit, fit_all
from .preprocess import background_adjust, compute_target, quantile_normalize
from .ingest import IntensityMatrix

__all__ = [
    "QaMatrices",
    "ReferenceChip",
    "Thresholds",
    "Flag",
    "ChipQaSummary",
    "BatchQuality",
    "compute_use",
    "compute_nuse",
    "reference_chip",
    "compute_rle",
    "compute_qa",
    "iqr",
    "chip_summaries",
    "compute_rsf",
    "gcos_avg_background",
    "gcos_scale_factor",
    "parse_thresholds",
    "parse_expression_table",
]


def iqr(values, axis=None):
    q1, q3 = np.quantile(values, [0.25, 0.75], axis=axis)
    return q3 - q1


@dataclass(frozen=True, eq=False)
class QaMatrices:
    """Probeset x chip NUSE, RLE and USE."""

    probeset_ids: tuple
    chip_names: tuple
    nuse: np.ndarray
    rle: np.ndarray
    use: np.ndarray


@dataclass(frozen=True)
class ReferenceChip:
    expression: Mapping[str, float]


def compute_use(fit: ProbesetFit) -> np.ndarray:
    return 1.0 / np.sqrt(fit.total_weight)


def compute_nuse(result: PlmResult):
    """NUSE matrix (probesets x chips) and the USE it was derived from."""
    use = np.vstack([compute_use(f) for f in result.fits.values()])
    return use / np.median(use, axis=1, keepdims=True), use


def reference_chip(result: PlmResult) -> ReferenceChip:
    mu = result.mu_matrix()
    med = np.median(mu, axis=1)
    return ReferenceChip(dict(zip(result.probeset_ids, med.tolist())))


def compute_rle(result, ref: ReferenceChip) -> np.ndarray:
    """RLE matrix (probesets x chips).

    ``result`` is a :class:`PlmResult` or any object with ``probeset_ids``
    and ``mu_matrix()``, e.g. an externally supplied expression table.
    """
    missing = [ps for ps in result.probeset_ids if ps not in ref.expression]
    if missing:
        raise RefMismatch(f"reference chip lacks {len(missing)} probeset(s), e.g. {missing[0]!r}")
    refv = np.array([ref.expression[ps] for ps in result.probeset_ids])
    return result.mu_matrix() - refv[:, None]


@dataclass(frozen=True, eq=False)
class ExpressionTable:
    """Log2 expressions from an arbitrary summarization, probesets x chips."""

    probeset_ids: tuple
    chip_names: tuple
    values: np.ndarray

    def mu_matrix(self):
        return self.values


def parse_expression_table(text: str) -> ExpressionTable:
    """TSV with header ``probeset\\t<chip>...`` and one row per probeset."""
    lines = [
        (n, ln.rstrip("\r"))
        for n, ln in enumerate(text.split("\n"), start=1)
        if ln.strip() and not ln.startswith("#")
    ]
    if not lines:
        raise ParseError("empty expression table")
    header = lines[0][1].split("\t")
    chips = tuple(header[1:])
    if not chips:
        raise ParseError("expression table has no chip columns", line=lines[0][0])
    ids, rows = [], []
    for n, ln in lines[1:]:
        parts = ln.split("\t")
        if len(parts) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(parts)}", line=n)
        try:
            rows.append([float(v) for v in parts[1:]])
        except ValueError:
            raise ParseError("non-numeric expression value", line=n) from None
        ids.append(parts[0])
    vals = np.array(rows, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ParseError("expression values must be finite")
    return ExpressionTable(tuple(ids), chips, vals)


def compute_qa(result: PlmResult, expressions: Optional[ExpressionTable] = None) -> QaMatrices:
    """NUSE from the fit; RLE from the fit or from ``expressions`` when given."""
    nuse, use = compute_nuse(result)
    source = result
    if expressions is not None:
        pos = {ps: i for i, ps in enumerate(expressions.probeset_ids)}
        missing = [ps for ps in result.probeset_ids if ps not in pos]
        if missing:
            raise RefMismatch(f"expression table lacks probeset {missing[0]!r}")
        cpos = {c: i for i, c in enumerate(expressions.chip_names)}
        absent = [c for c in result.chip_names if c not in cpos]
        if absent:
            raise RefMismatch(f"expression table lacks chip {absent[0]!r}")
        vals = expressions.values[np.ix_([pos[p] for p in result.probeset_ids],
                                         [cpos[c] for c in result.chip_names])]
        source = ExpressionTable(result.probeset_ids, result.chip_names, vals)
    ref = ReferenceChip(dict(zip(source.probeset_ids, np.median(source.mu_matrix(), axis=1).tolist())))
    rle = compute_rle(source, ref)
    return QaMatrices(result.probeset_ids, result.chip_names, nuse, rle, use)


@dataclass(frozen=True)
class Thresholds:
    """Outlier-flag cutoffs.  The defaults are heuristics, not standards."""

    nuse_warn: float = 1.05
    nuse_fail: float = 1.10
    rle_med_warn: float = 0.10
    rle_med_fail: float = 0.20
    rle_iqr_ratio_warn: float = 2.0

    def __post_init__(self):
        if not self.nuse_warn <= self.nuse_fail:
            raise ConfigError("nuse_warn must not exceed nuse_fail")
        if not self.rle_med_warn <= self.rle_med_fail:
            raise ConfigError("rle_med_warn must not exceed rle_med_fail")


def parse_thresholds(text: str) -> Thresholds:
    """``key = value`` lines; ``#`` starts a comment."""
    names = set(Thresholds.__dataclass_fields__)
    kw = {}
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", line=lineno)
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in names:
            raise ConfigError(f"line {lineno}: unknown threshold {key!r}")
        try:
            kw[key] = float(val)
        except ValueError:
            raise ParseError(f"threshold {key} = {val!r} is not a number", line=lineno) from None
    return Thresholds(**kw)


@dataclass(frozen=True)
class Flag:
    level: str  # "warn" | "fail"
    metric: str  # "nuse" | "rle"
    statistic: str
    value: float
    threshold: float

    def label(self):
        return f"{self.level}:{self.metric}"

    def describe(self):
        return f"{self.level} {self.statistic}={self.value!r} (threshold {self.threshold!r})"


@dataclass(frozen=True)
class ChipQaSummary:
    chip_name: str
    med_pm: float
    iqr_pm: float
    med_rle: float
    iqr_rle: float
    med_nuse: float
    iqr_nuse: float
    flags: tuple = field(default=())

    @property
    def failed(self):
        return any(f.level == "fail" for f in self.flags)


def _flags(med_nuse, med_rle, iqr_rle, cohort_iqr, t: Thresholds):
    out = []
    if med_nuse >= t.nuse_fail:
        out.append(Flag("fail", "nuse", "med_nuse", med_nuse, t.nuse_fail))
    elif med_nuse >= t.nuse_warn:
        out.append(Flag("warn", "nuse", "med_nuse", med_nuse, t.nuse_warn))
    a = abs(med_rle)
    if a >= t.rle_med_fail:
        out.append(Flag("fail", "rle", "abs_med_rle", a, t.rle_med_fail))
    elif a >= t.rle_med_warn:
        out.append(Flag("warn", "rle", "abs_med_rle", a, t.rle_med_warn))
    else:
        cut = t.rle_iqr_ratio_warn * cohort_iqr
        # a zero cohort IQR means identical chips; nothing to flag
        if iqr_rle > 0 and iqr_rle >= cut:
            out.append(Flag("warn", "rle", "iqr_rle", iqr_rle, cut))
    return tuple(out)


def chip_summaries(log_pm, qa: QaMatrices, thresholds: Thresholds = Thresholds()):
    """Per-chip medians, IQRs and flags.

    ``log_pm`` is a chips x probes matrix of log2 PM intensities (raw, or
    any other stage the caller wants summarized), or an object with a
    ``values`` attribute holding one.
    """
    pm = np.asarray(getattr(log_pm, "values", log_pm), dtype=float)
    n = len(qa.chip_names)
    if pm.shape[0] != n or qa.nuse.shape[1] != n or qa.rle.shape[1] != n:
        raise ShapeError("PM, NUSE and RLE matrices disagree on the number of chips")
    med_pm = np.median(pm, axis=1)
    iqr_pm = iqr(pm, axis=1)
    med_rle = np.median(qa.rle, axis=0)
    iqr_rle = iqr(qa.rle, axis=0)
    med_nuse = np.median(qa.nuse, axis=0)
    iqr_nuse = iqr(qa.nuse, axis=0)
    cohort_iqr = float(np.median(iqr_rle))
    out = []
    for i, chip in enumerate(qa.chip_names):
        out.append(
            ChipQaSummary(
                chip,
                float(med_pm[i]),
                float(iqr_pm[i]),
                float(med_rle[i]),
                float(iqr_rle[i]),
                float(med_nuse[i]),
                float(iqr_nuse[i]),
                _flags(float(med_nuse[i]), float(med_rle[i]), float(iqr_rle[i]), cohort_iqr, thresholds),
            )
        )
    return out


@dataclass(frozen=True, eq=False)
class BatchQuality:
    batch_name: str
    n_chips: int
    probeset_ids: tuple
    residual_scales: np.ndarray
    rsf: float
    normalized_scales: Optional[np.ndarray] = None
    nrsf: Optional[float] = None


def compute_rsf(batches, config=None, background="none", names=None):
    """Residual scale factors for batches normalized to one shared target.

    ``batches`` is a sequence of :class:`~chipqa.ingest.ChipSet` objects
    over the same layout.  The quantile target is computed from the union
    of all chips after identical background adjustment; each batch is then
    fitted on its own.
    """
    if not batches:
        raise ShapeError("compute_rsf needs at least one batch")
    config = config or PlmConfig()
    layout = batches[0].layout
    for b in batches[1:]:
        if b.layout != layout:
            raise LayoutMismatch("all batches must share one chip layout")
    if names is None:
        names = [f"batch{i + 1}" for i in range(len(batches))]
    adjusted = [background_adjust(b.raw, background) for b in batches]
    union = IntensityMatrix(
        tuple(f"{n}/{c}" for n, a in zip(names, adjusted) for c in a.chip_names),
        np.vstack([a.values for a in adjusted]),
    )
    target = compute_target(union)

    scales = []
    for a in adjusted:
        res = fit_all(quantile_normalize(a, target), layout, config)
        scales.append(res.sigmas())
    ids = layout.probesets
    out = []
    if len(batches) >= 2:
        pooled = np.median(np.vstack(scales), axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            normed = [np.where(pooled > 0, s / np.where(pooled > 0, pooled, 1.0), 1.0) for s in scales]
    for i, (name, a, s) in enumerate(zip(names, adjusted, scales)):
        bq = BatchQuality(name, a.n_chips, ids, s, float(np.median(s)))
        if len(batches) >= 2:
            bq = BatchQuality(name, a.n_chips, ids, s, bq.rsf, normed[i], float(np.median(normed[i])))
        out.append(bq)
    return out


def _two_pct(n):
    return math.ceil(0.02 * n)


def gcos_avg_background(raw: IntensityMatrix) -> np.ndarray:
    """Mean of the lowest 2% (rounded up) raw intensities, per chip."""
    v = np.asarray(raw.values)
    n = v.shape[1]
    if n < 50:
        raise ShapeError(f"average background needs >= 50 probes per chip, got {n}")
    low = np.sort(v, axis=1)[:, : _two_pct(n)]
    return low.mean(axis=1)


def gcos_scale_factor(raw: IntensityMatrix, constant: float = 500.0) -> np.ndarray:
    """``constant`` over the 2%-trimmed mean of each chip's intensities.

    Every layout probe counts as a signal value here; the vendor software
    restricts this to a selection of probesets that is not reproduced.
    """
    if not constant > 0:
        raise ConfigError(f"scale factor constant must be > 0, got {constant}")
    v = np.asarray(raw.values)
    n = v.shape[1]
    cut = _two_pct(n)
    if n - 2 * cut < 1:
        raise ShapeError(f"too few probes ({n}) for a 2% trimmed mean")
    tm = np.sort(v, axis=1)[:, cut : n - cut].mean(axis=1)
    if np.any(tm <= 0):
        raise DegenerateChip("trimmed mean intensity is zero")
    return constant / tm
