"""Background adjustment, quantile normalization and log2 transform.

The staging is fixed: ``background_adjust`` on linear intensities, then
``quantile_normalize`` to a target distribution, which also takes log2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParseError, ShapeError
from .ingest import IntensityMatrix

__all__ = [
    "BACKGROUND_FLOOR",
    "NormalizedMatrix",
    "QuantileTarget",
    "parse_background",
    "background_adjust",
    "compute_target",
    "quantile_normalize",
    "parse_target",
    "serialize_target",
    "preprocess",
]

BACKGROUND_FLOOR = 2.0**-20


@dataclass(frozen=True, eq=False)
class NormalizedMatrix:
    """log2-scale normalized intensities, chips x probes in layout order."""

    chip_names: tuple
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != len(self.chip_names):
            raise ShapeError("values do not match chip names")
        if not np.all(np.isfinite(self.values)):
            raise ShapeError("normalized values must be finite")
        self.values.setflags(write=False)


@dataclass(frozen=True, eq=False)
class QuantileTarget:
    """Sorted linear-scale reference distribution, one entry per probe."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ShapeError("target must be a nonempty vector")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ShapeError("target values must be finite and strictly positive")
        if np.any(np.diff(v) < 0):
            raise ShapeError("target must be nondecreasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


def parse_background(spec):
    """``'none'`` or ``'offset:<c>'`` -> ``('none', 0.0)`` / ``('offset', c)``."""
    if isinstance(spec, tuple):
        name, c = spec
    elif spec == "none":
        return ("none", 0.0)
    elif isinstance(spec, str) and spec.startswith("offset:"):
        name = "offset"
        try:
            c = float(spec[len("offset:"):])
        except ValueError:
            raise ConfigError(f"bad background offset in {spec!r}") from None
    else:
        raise ConfigError(f"unknown background method {spec!r}; expected 'none' or 'offset:<c>'")
    if name == "none":
        return ("none", 0.0)
    if name != "offset":
        raise ConfigError(f"unknown background method {name!r}")
    if not np.isfinite(c) or c < 0:
        raise ConfigError(f"background offset must be >= 0, got {c}")
    return ("offset", float(c))


def background_adjust(raw: IntensityMatrix, method="none") -> IntensityMatrix:
    """Subtract a constant offset, flooring results at ``2**-20``.

    ``method`` is ``'none'``, ``'offset:<c>'`` or a ``(name, c)`` tuple.
    """
    name, c = parse_background(method)
    if name == "none":
        return raw
    return IntensityMatrix(raw.chip_names, np.maximum(raw.values - c, BACKGROUND_FLOOR))


def compute_target(raw: IntensityMatrix) -> QuantileTarget:
    """Per-rank mean of the chips' order statistics."""
    return QuantileTarget(np.sort(raw.values, axis=1).mean(axis=0))


def _normalize_row(row, target):
    order = np.argsort(row, kind="stable")
    srt = row[order]
    # boundaries of runs of tied values in sorted order
    starts = np.flatnonzero(np.r_[True, srt[1:] != srt[:-1]])
    if starts.size == srt.size:
        out = np.empty_like(target)
        out[order] = target
        return out
    counts = np.diff(np.r_[starts, srt.size])
    means = np.add.reduceat(target, starts) / counts
    out = np.empty_like(target)
    out[order] = np.repeat(means, counts)
    return out


def quantile_normalize(raw: IntensityMatrix, target: QuantileTarget) -> NormalizedMatrix:
    """Replace each chip's rank-q value by ``target[q]`` and take log2.

    Tied intensities within a chip all receive the mean of the target
    entries over the rank span they occupy.  Without ties every chip ends up
    with exactly the sorted vector ``log2(target)``.
    """
    t = target.values
    if raw.values.shape[1] != t.size:
        raise ShapeError(f"target has {t.size} entries for {raw.values.shape[1]} probes")
    out = np.vstack([_normalize_row(row, t) for row in raw.values])
    return NormalizedMatrix(raw.chip_names, np.log2(out))


def parse_target(text: str) -> QuantileTarget:
    """One linear-scale value per line; ``#`` comments allowed."""
    vals = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            vals.append(float(line))
        except ValueError:
            raise ParseError(f"target value {line!r} is not a number", line=lineno) from None
    return QuantileTarget(np.array(vals))


def serialize_target(target: QuantileTarget) -> str:
    return "".join(f"{float(v)!r}\n" for v in target.values)


def preprocess(raw: IntensityMatrix, background="none", target=None):
    """Run the full staging. Returns ``(normalized, target_used)``."""
    adj = background_adjust(raw, background)
    if target is None:
        target = compute_target(adj)
    return quantile_normalize(adj, target), target
