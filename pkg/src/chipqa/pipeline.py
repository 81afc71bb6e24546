"""End-to-end quality run on one chip set."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NotEnoughChips, ShapeError
from .ingest import ChipSet
from .metrics import (
    QaMatrices,
    Thresholds,
    chip_summaries,
    compute_qa,
    compute_rsf,
    gcos_avg_background,
    gcos_scale_factor,
)
from .plm import PlmConfig, PlmResult, fit_all
from .preprocess import NormalizedMatrix, QuantileTarget, parse_background, preprocess

__all__ = ["PipelineConfig", "RunResults", "run_pipeline", "run_rsf"]


@dataclass(frozen=True)
class PipelineConfig:
    background: str = "none"
    target: Optional[QuantileTarget] = None
    plm: PlmConfig = PlmConfig()
    thresholds: Thresholds = Thresholds()
    scale_factor_constant: float = 500.0

    def __post_init__(self):
        parse_background(self.background)

    def echo(self):
        """JSON-friendly description of the configuration."""
        return {
            "background": self.background,
            "target": "self" if self.target is None else f"fixed({len(self.target)})",
            "huber_k": self.plm.huber_k,
            "tol": self.plm.tol,
            "max_iter": self.plm.max_iter,
            "thresholds": dict(self.thresholds.__dict__),
            "scale_factor_constant": self.scale_factor_constant,
        }


@dataclass(frozen=True, eq=False)
class RunResults:
    chipset: ChipSet
    config: PipelineConfig
    log_pm: np.ndarray
    target: QuantileTarget
    norm: NormalizedMatrix
    plm: PlmResult
    qa: QaMatrices
    summaries: list
    avg_background: np.ndarray  # NaN when the chip has < 50 probes
    scale_factor: np.ndarray
    batches: list = field(default_factory=list)


def run_pipeline(chipset: ChipSet, config: PipelineConfig = PipelineConfig(), expressions=None,
                 with_rsf=True) -> RunResults:
    """Preprocess, fit, and compute every chip metric.

    ``expressions`` optionally replaces the fitted expressions as the RLE
    source.  When the chip set carries batch labels and ``with_rsf`` is set,
    per-batch residual scale factors are computed as well.
    """
    if chipset.raw.n_chips < 2:
        raise NotEnoughChips("at least 2 chips are needed")
    norm, target = preprocess(chipset.raw, config.background, config.target)
    plm = fit_all(norm, chipset.layout, config.plm)
    qa = compute_qa(plm, expressions)
    log_pm = np.log2(chipset.raw.values)
    summaries = chip_summaries(log_pm, qa, config.thresholds)
    try:
        bg = gcos_avg_background(chipset.raw)
    except ShapeError:
        bg = np.full(chipset.raw.n_chips, np.nan)
    try:
        sf = gcos_scale_factor(chipset.raw, config.scale_factor_constant)
    except ShapeError:
        sf = np.full(chipset.raw.n_chips, np.nan)
    batches = run_rsf(chipset, config) if with_rsf and chipset.batch_labels else []
    return RunResults(chipset, config, log_pm, target, norm, plm, qa, summaries, bg, sf, batches)


def run_rsf(chipset: ChipSet, config: PipelineConfig = PipelineConfig()):
    """Split by batch label and compute RSF / NRSF per batch."""
    groups = chipset.batches()
    if not groups:
        raise NotEnoughChips("chip set has no batch labels")
    small = [b for b, chips in groups.items() if len(chips) < 2]
    if small:
        raise NotEnoughChips(f"batch {small[0]!r} has fewer than 2 chips")
    subsets = [chipset.subset(chips) for chips in groups.values()]
    return compute_rsf(subsets, config.plm, background=config.background, names=list(groups))
