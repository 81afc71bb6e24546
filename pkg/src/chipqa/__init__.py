"""Post-hybridization quality assessment for short-oligonucleotide microarrays.

Robust probe-level model fits, NUSE / RLE / RSF quality metrics, chip-level
summaries with outlier flags, and spatial quality landscapes.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .ingest import ChipLayout, ChipSet, IntensityMatrix, load_chipset, parse_chip, parse_layout
from .preprocess import background_adjust, compute_target, preprocess, quantile_normalize
from .plm import PlmConfig, PlmResult, ProbesetFit, fit_all, fit_probeset, huber_weight, mad_scale
from .metrics import (
    Thresholds,
    chip_summaries,
    compute_nuse,
    compute_qa,
    compute_rle,
    compute_rsf,
    compute_use,
    gcos_avg_background,
    gcos_scale_factor,
    reference_chip,
)
from .landscape import build_landscape, render
from .synthgen import ArtifactSpec, SynthSpec, artifact_mask, generate
from .pipeline import PipelineConfig, run_pipeline
