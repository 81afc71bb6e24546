"""Synthetic chip sets drawn from the additive log2 model, with defects.

All chips share one expression value per probeset (technical replicates),
probe affinities are centered normal draws, and noise is normal in log2
space with a per-chip standard deviation.  Spatial artifacts add a constant
to the log2 intensities of the cells they cover; ``global_bias`` shifts a
whole chip and ``noise_scale`` multiplies its noise.

Random numbers come from numpy's PCG64 generator seeded with
``SynthSpec.seed``.  Draw order: probe placement, mu, alpha, noise.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import BadArtifact, ConfigError
from .ingest import ChipLayout, ChipSet, IntensityMatrix, serialize_chip, serialize_layout

__all__ = [
    "ARTIFACT_KINDS",
    "ArtifactSpec",
    "SynthSpec",
    "GroundTruth",
    "artifact_mask",
    "generate",
    "synth_layout",
    "spec_from_dict",
    "write_synth",
]

ARTIFACT_KINDS = ("disc", "line", "corner", "global_bias", "noise_scale")
CORNERS = ("top_left", "top_right", "bottom_left", "bottom_right")


@dataclass(frozen=True)
class ArtifactSpec:
    """One defect on one chip.

    Geometry is in grid units with ``(x, y)`` = (column, row):
    ``disc`` uses ``center`` and ``radius``; ``line`` uses ``start``,
    ``end`` and ``width``; ``corner`` uses ``size`` and ``corner``.
    ``delta`` is added to log2 intensities; ``factor`` scales the noise.
    """

    chip: int
    kind: str
    delta: float = 0.0
    center: Optional[tuple] = None
    radius: Optional[float] = None
    start: Optional[tuple] = None
    end: Optional[tuple] = None
    width: Optional[float] = None
    size: Optional[int] = None
    corner: str = "top_left"
    factor: float = 1.0

    @property
    def spatial(self):
        return self.kind in ("disc", "line", "corner")


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_probesets: int = 2000
    probes_per_set: int = 11
    n_chips: int = 24
    mu_range: tuple = (6.0, 12.0)
    alpha_sd: float = 0.5
    sigma: Optional[tuple] = None  # per chip; defaults to 0.25 everywhere
    artifacts: tuple = ()
    rows: Optional[int] = None
    cols: Optional[int] = None

    def __post_init__(self):
        for name in ("n_probesets", "probes_per_set", "n_chips"):
            if getattr(self, name) < 2:
                raise ConfigError(f"{name} must be >= 2")
        sigma = (0.25,) * self.n_chips if self.sigma is None else tuple(float(s) for s in self.sigma)
        if len(sigma) != self.n_chips:
            raise ConfigError(f"sigma has {len(sigma)} entries for {self.n_chips} chips")
        if any(not s >= 0 for s in sigma):
            raise ConfigError("sigma must be >= 0")
        object.__setattr__(self, "sigma", sigma)
        lo, hi = self.mu_range
        if not lo <= hi:
            raise ConfigError("mu_range must be (low, high) with low <= high")
        n = self.n_probesets * self.probes_per_set
        rows, cols = self.rows, self.cols
        if rows is None and cols is None:
            cols = math.ceil(math.sqrt(n))
            rows = math.ceil(n / cols)
        elif rows is None:
            rows = math.ceil(n / cols)
        elif cols is None:
            cols = math.ceil(n / rows)
        if rows * cols < n:
            raise ConfigError(f"{rows}x{cols} grid cannot hold {n} probes")
        object.__setattr__(self, "rows", int(rows))
        object.__setattr__(self, "cols", int(cols))
        object.__setattr__(self, "artifacts", tuple(self.artifacts))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    mu: np.ndarray  # per probeset
    alpha: np.ndarray  # per probe, layout order
    sigma: tuple
    masks: tuple  # per artifact: sorted list of (x, y), empty for non-spatial kinds

    def to_dict(self, spec: SynthSpec, layout: ChipLayout):
        return {
            "spec": _spec_to_dict(spec),
            "probesets": list(layout.probesets),
            "mu": self.mu.tolist(),
            "alpha": self.alpha.tolist(),
            "sigma": list(self.sigma),
            "artifacts": [
                {**_artifact_to_dict(a), "mask": [list(c) for c in m]}
                for a, m in zip(spec.artifacts, self.masks)
            ],
        }


def _cells(rows, cols):
    yy, xx = np.mgrid[0:rows, 0:cols]
    return xx.ravel(), yy.ravel()


def _check_point(p, rows, cols, what):
    if p is None or len(p) != 2:
        raise BadArtifact(f"{what} must be an (x, y) pair")
    x, y = p
    if not (0 <= x <= cols - 1 and 0 <= y <= rows - 1):
        raise BadArtifact(f"{what} {tuple(p)} outside the {cols}x{rows} grid")


def _seg_distance(px, py, a, b):
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0:
        t = np.zeros_like(px, dtype=float)
    else:
        t = np.clip(((px - ax) * dx + (py - ay) * dy) / L2, 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _grid_mask(spec: ArtifactSpec, rows, cols):
    """Boolean rows x cols coverage of a spatial artifact."""
    xx, yy = _cells(rows, cols)
    if spec.kind == "disc":
        _check_point(spec.center, rows, cols, "disc center")
        if spec.radius is None or spec.radius < 0:
            raise BadArtifact("disc radius must be >= 0")
        cx, cy = spec.center
        hit = np.hypot(xx - cx, yy - cy) <= spec.radius
    elif spec.kind == "line":
        _check_point(spec.start, rows, cols, "line start")
        _check_point(spec.end, rows, cols, "line end")
        if spec.width is None or spec.width < 0:
            raise BadArtifact("line width must be >= 0")
        hit = _seg_distance(xx, yy, spec.start, spec.end) <= spec.width / 2
    elif spec.kind == "corner":
        s = spec.size
        if s is None or s < 1 or s > min(rows, cols):
            raise BadArtifact(f"corner size must be in 1..{min(rows, cols)}")
        if spec.corner not in CORNERS:
            raise BadArtifact(f"corner must be one of {CORNERS}")
        xin = xx < s if "left" in spec.corner else xx >= cols - s
        yin = yy < s if "top" in spec.corner else yy >= rows - s
        hit = xin & yin
    else:
        raise BadArtifact(f"{spec.kind!r} has no spatial extent")
    return hit.reshape(rows, cols)


def artifact_mask(spec: ArtifactSpec, layout: ChipLayout):
    """Set of layout probe coordinates ``(x, y)`` covered by ``spec``."""
    if spec.kind not in ("disc", "line", "corner"):
        return set()
    m = _grid_mask(spec, layout.rows, layout.cols)
    return {(int(x), int(y)) for x, y in zip(layout.x, layout.y) if m[y, x]}


def _probeset_name(i, n):
    return f"PS{i:0{max(5, len(str(n)))}d}"


def synth_layout(spec: SynthSpec, rng) -> ChipLayout:
    n = spec.n_probesets * spec.probes_per_set
    cells = rng.permutation(spec.rows * spec.cols)[:n]
    probes = []
    for i in range(spec.n_probesets):
        name = _probeset_name(i, spec.n_probesets)
        for r in range(spec.probes_per_set):
            c = int(cells[i * spec.probes_per_set + r])
            probes.append((name, r, c % spec.cols, c // spec.cols))
    return ChipLayout.from_probes(spec.rows, spec.cols, probes)


def _validate_artifact(a: ArtifactSpec, spec: SynthSpec):
    if a.kind not in ARTIFACT_KINDS:
        raise BadArtifact(f"unknown artifact kind {a.kind!r}")
    if not 0 <= a.chip < spec.n_chips:
        raise BadArtifact(f"artifact chip index {a.chip} out of range")
    if a.kind == "noise_scale" and not a.factor > 0:
        raise BadArtifact("noise_scale factor must be > 0")
    if not math.isfinite(a.delta):
        raise BadArtifact("artifact delta must be finite")


def generate(spec: SynthSpec):
    """Draw a chip set. Returns ``(ChipSet, GroundTruth)``."""
    for a in spec.artifacts:
        _validate_artifact(a, spec)
        if a.spatial:
            _grid_mask(a, spec.rows, spec.cols)

    rng = np.random.Generator(np.random.PCG64(spec.seed))
    layout = synth_layout(spec, rng)
    P, K, I = spec.n_probesets, spec.probes_per_set, spec.n_chips
    mu = rng.uniform(spec.mu_range[0], spec.mu_range[1], size=P)
    alpha = rng.normal(0.0, spec.alpha_sd, size=(P, K))
    alpha -= alpha.mean(axis=1, keepdims=True)
    eps = rng.standard_normal((I, P * K))

    noise_sd = np.array(spec.sigma, dtype=float)
    for a in spec.artifacts:
        if a.kind == "noise_scale":
            noise_sd[a.chip] *= a.factor
    logy = np.repeat(mu, K)[None, :] + alpha.ravel()[None, :] + noise_sd[:, None] * eps

    masks = []
    for a in spec.artifacts:
        if a.kind == "global_bias":
            logy[a.chip] += a.delta
            masks.append(())
        elif a.spatial:
            g = _grid_mask(a, spec.rows, spec.cols)
            hit = g[layout.y, layout.x]
            logy[a.chip, hit] += a.delta
            masks.append(tuple(sorted((int(x), int(y)) for x, y in zip(layout.x[hit], layout.y[hit]))))
        else:
            masks.append(())

    names = tuple(f"chip{i + 1:02d}" for i in range(I))
    raw = IntensityMatrix(names, np.exp2(logy))
    truth = GroundTruth(mu, alpha.ravel(), spec.sigma, tuple(masks))
    return ChipSet(layout, raw), truth


def _artifact_to_dict(a: ArtifactSpec):
    d = {"chip": a.chip, "kind": a.kind}
    if a.kind == "disc":
        d.update(center=list(a.center), radius=a.radius, delta=a.delta)
    elif a.kind == "line":
        d.update(start=list(a.start), end=list(a.end), width=a.width, delta=a.delta)
    elif a.kind == "corner":
        d.update(size=a.size, corner=a.corner, delta=a.delta)
    elif a.kind == "global_bias":
        d.update(delta=a.delta)
    else:
        d.update(factor=a.factor)
    return d


def _spec_to_dict(spec: SynthSpec):
    d = asdict(spec)
    d["mu_range"] = list(spec.mu_range)
    d["sigma"] = list(spec.sigma)
    d["artifacts"] = [_artifact_to_dict(a) for a in spec.artifacts]
    return d


def spec_from_dict(d) -> SynthSpec:
    """Build a :class:`SynthSpec` from parsed JSON."""
    d = dict(d)
    unknown = set(d) - set(SynthSpec.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown synth spec keys: {sorted(unknown)}")
    arts = []
    fields_ = set(ArtifactSpec.__dataclass_fields__)
    for a in d.pop("artifacts", []):
        bad = set(a) - fields_
        if bad:
            raise ConfigError(f"unknown artifact keys: {sorted(bad)}")
        a = dict(a)
        for key in ("center", "start", "end"):
            if a.get(key) is not None:
                a[key] = tuple(a[key])
        arts.append(ArtifactSpec(**a))
    if "mu_range" in d:
        d["mu_range"] = tuple(d["mu_range"])
    if d.get("sigma") is not None:
        d["sigma"] = tuple(d["sigma"])
    return SynthSpec(artifacts=tuple(arts), **d)


def write_synth(spec: SynthSpec, out_dir):
    """Write layout, chip files, a manifest and ``ground_truth.json``.

    Returns the path of the manifest.
    """
    chipset, truth = generate(spec)
    os.makedirs(os.path.join(out_dir, "chips"), exist_ok=True)
    with open(os.path.join(out_dir, "layout.tsv"), "w", newline="\n") as fh:
        fh.write(serialize_layout(chipset.layout))
    lines = ["layout\tlayout.tsv"]
    for name, row in zip(chipset.chip_names, chipset.raw.values):
        rel = f"chips/{name}.tsv"
        with open(os.path.join(out_dir, rel), "w", newline="\n") as fh:
            fh.write(serialize_chip(row, chipset.layout))
        lines.append(f"chip\t{name}\t{rel}")
    manifest = os.path.join(out_dir, "manifest.tsv")
    with open(manifest, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(out_dir, "ground_truth.json"), "w", newline="\n") as fh:
        json.dump(truth.to_dict(spec, chipset.layout), fh, indent=1)
        fh.write("\n")
    return manifest
