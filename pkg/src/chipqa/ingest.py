"""Text formats for chip layouts, chip intensities and run manifests.

Layout file::

    rows=<R>\tcols=<C>
    <probeset_id>\t<probe_rank>\t<x>\t<y>
    ...

Chip file: ``x\ty\tintensity`` rows.  Manifest: ``layout\t<path>`` plus
``chip\t<name>\t<path>[\t<batch>]`` rows.  Lines starting with ``#`` and
blank lines are ignored everywhere.

The canonical probe order (probeset id, then probe rank) defined by
:func:`parse_layout` is the column order of every chips x probes matrix in
the package.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    BadIntensity,
    ChipQAError,
    CoordinateOutOfRange,
    DuplicateCoordinate,
    LayoutError,
    MissingProbe,
    NotEnoughChips,
    ParseError,
    ProbesetTooSmall,
    ShapeError,
    UnknownCoordinate,
)

__all__ = [
    "ChipLayout",
    "IntensityMatrix",
    "ChipSet",
    "parse_layout",
    "serialize_layout",
    "parse_chip",
    "serialize_chip",
    "parse_manifest",
    "load_chipset",
]

_HEADER = re.compile(r"^rows=(\d+)\tcols=(\d+)$")


@dataclass(frozen=True, eq=False)
class ChipLayout:
    """Probe-to-probeset and probe-to-grid mapping of one chip type.

    Probes are stored in canonical order.  ``probesets`` lists the distinct
    ids in that order and ``slices[ps]`` gives the column range of a
    probeset in any aligned matrix.
    """

    rows: int
    cols: int
    probeset_ids: tuple
    probe_ranks: np.ndarray
    x: np.ndarray
    y: np.ndarray
    probesets: tuple = field(init=False)
    slices: dict = field(init=False, repr=False)
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        ids = self.probeset_ids
        n = len(ids)
        if not (len(self.probe_ranks) == len(self.x) == len(self.y) == n):
            raise LayoutError("layout columns have different lengths")
        if self.rows < 1 or self.cols < 1:
            raise LayoutError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")
        for arr in (self.probe_ranks, self.x, self.y):
            arr.setflags(write=False)

        index = {}
        for j in range(n):
            xy = (int(self.x[j]), int(self.y[j]))
            if not (0 <= xy[0] < self.cols and 0 <= xy[1] < self.rows):
                raise CoordinateOutOfRange(
                    f"probe {ids[j]}#{self.probe_ranks[j]} at {xy} outside {self.cols}x{self.rows} grid"
                )
            if xy in index:
                other = index[xy]
                raise DuplicateCoordinate(
                    f"coordinate {xy} used by {ids[other]}#{self.probe_ranks[other]} "
                    f"and {ids[j]}#{self.probe_ranks[j]}"
                )
            index[xy] = j

        order = sorted(range(n), key=lambda j: (ids[j], int(self.probe_ranks[j])))
        if order != list(range(n)):
            raise LayoutError("probes are not in canonical (probeset_id, probe_rank) order")

        slices = {}
        start = 0
        for j in range(1, n + 1):
            if j == n or ids[j] != ids[start]:
                ps = ids[start]
                if not ps:
                    raise LayoutError("empty probeset id")
                k = j - start
                if k < 2:
                    raise ProbesetTooSmall(f"probeset {ps!r} has {k} probe; at least 2 required")
                if not np.array_equal(self.probe_ranks[start:j], np.arange(k)):
                    raise LayoutError(f"probeset {ps!r} ranks are not 0..{k - 1}")
                slices[ps] = slice(start, j)
                start = j
        object.__setattr__(self, "probesets", tuple(slices))
        object.__setattr__(self, "slices", slices)
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_probes(cls, rows, cols, probes):
        """Build from ``(probeset_id, rank, x, y)`` tuples in any order."""
        probes = sorted(probes, key=lambda p: (p[0], p[1]))
        if not probes:
            raise LayoutError("layout has no probes")
        for a, b in zip(probes, probes[1:]):
            if (a[0], a[1]) == (b[0], b[1]):
                raise LayoutError(f"probe {a[0]}#{a[1]} listed twice")
        ids, ranks, xs, ys = zip(*probes)
        return cls(
            rows=int(rows),
            cols=int(cols),
            probeset_ids=tuple(ids),
            probe_ranks=np.asarray(ranks, dtype=np.int64),
            x=np.asarray(xs, dtype=np.int64),
            y=np.asarray(ys, dtype=np.int64),
        )

    @property
    def n_probes(self):
        return len(self.probeset_ids)

    def index_of(self, x, y):
        """Column index of the probe at ``(x, y)``, or ``None``."""
        return self._index.get((x, y))

    def probes(self):
        return [
            (self.probeset_ids[j], int(self.probe_ranks[j]), int(self.x[j]), int(self.y[j]))
            for j in range(self.n_probes)
        ]

    def __eq__(self, other):
        if not isinstance(other, ChipLayout):
            return NotImplemented
        return (self.rows, self.cols) == (other.rows, other.cols) and self.probes() == other.probes()

    __hash__ = None


@dataclass(frozen=True, eq=False)
class IntensityMatrix:
    """Raw linear-scale PM intensities, chips x probes in layout order."""

    chip_names: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != len(self.chip_names):
            raise ShapeError(
                f"values shape {values.shape} does not match {len(self.chip_names)} chip names"
            )
        if len(set(self.chip_names)) != len(self.chip_names):
            raise ShapeError("chip names are not unique")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise BadIntensity("intensities must be finite and strictly positive")
        values.setflags(write=False)
        object.__setattr__(self, "chip_names", tuple(self.chip_names))
        object.__setattr__(self, "values", values)

    @property
    def n_chips(self):
        return self.values.shape[0]

    def select(self, chips):
        """Sub-matrix for the given chip names, in the given order."""
        pos = {c: i for i, c in enumerate(self.chip_names)}
        return IntensityMatrix(tuple(chips), self.values[[pos[c] for c in chips]])


@dataclass(frozen=True, eq=False)
class ChipSet:
    layout: ChipLayout
    raw: IntensityMatrix
    batch_labels: Optional[Mapping[str, str]] = None

    def __post_init__(self):
        if self.raw.values.shape[1] != self.layout.n_probes:
            raise ShapeError(
                f"{self.raw.values.shape[1]} intensity columns for {self.layout.n_probes} layout probes"
            )
        if self.batch_labels is not None:
            missing = [c for c in self.raw.chip_names if c not in self.batch_labels]
            if missing:
                raise ParseError(f"chips without batch label: {', '.join(missing)}")
            object.__setattr__(
                self, "batch_labels", {c: self.batch_labels[c] for c in self.raw.chip_names}
            )

    @property
    def chip_names(self):
        return self.raw.chip_names

    def batches(self):
        """Batch name -> chip names, in first-appearance order."""
        if self.batch_labels is None:
            return {}
        out = {}
        for chip in self.raw.chip_names:
            out.setdefault(self.batch_labels[chip], []).append(chip)
        return out

    def subset(self, chips):
        labels = None
        if self.batch_labels is not None:
            labels = {c: self.batch_labels[c] for c in chips}
        return ChipSet(self.layout, self.raw.select(chips), labels)


def _data_lines(text):
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        yield lineno, line


def _int(field_, lineno, what):
    try:
        return int(field_)
    except ValueError:
        raise ParseError(f"{what} {field_!r} is not an integer", line=lineno) from None


def parse_layout(text: str) -> ChipLayout:
    lines = _data_lines(text)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise ParseError("empty layout file") from None
    m = _HEADER.match(header.strip())
    if not m:
        raise ParseError(f"expected 'rows=<R>\\tcols=<C>' header, got {header!r}", line=lineno)
    rows, cols = int(m.group(1)), int(m.group(2))

    probes = []
    seen = {}
    for lineno, line in lines:
        parts = line.split("\t")
        if len(parts) != 4:
            raise ParseError(f"expected 4 tab-separated fields, got {len(parts)}", line=lineno)
        ps, rank, x, y = parts
        if not ps:
            raise ParseError("empty probeset id", line=lineno)
        key = (ps, _int(rank, lineno, "probe_rank"))
        if key in seen:
            raise ParseError(f"probe {ps}#{key[1]} already defined on line {seen[key]}", line=lineno)
        seen[key] = lineno
        probes.append((ps, key[1], _int(x, lineno, "x"), _int(y, lineno, "y")))
    if not probes:
        raise ParseError("layout has no probes")
    return ChipLayout.from_probes(rows, cols, probes)


def serialize_layout(layout: ChipLayout) -> str:
    out = [f"rows={layout.rows}\tcols={layout.cols}"]
    out += [f"{ps}\t{r}\t{x}\t{y}" for ps, r, x, y in layout.probes()]
    return "\n".join(out) + "\n"


def parse_chip(text: str, layout: ChipLayout, ignore_unmapped: bool = False) -> np.ndarray:
    """Parse one chip file into an intensity vector in layout probe order.

    Coordinates outside the layout raise :class:`UnknownCoordinate` unless
    ``ignore_unmapped`` is set, in which case those rows are skipped (their
    intensity is still validated as a number).
    """
    values = np.full(layout.n_probes, np.nan)
    seen = np.zeros(layout.n_probes, dtype=bool)
    for lineno, line in _data_lines(text):
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(f"expected 3 tab-separated fields, got {len(parts)}", line=lineno)
        x, y = _int(parts[0], lineno, "x"), _int(parts[1], lineno, "y")
        try:
            v = float(parts[2])
        except ValueError:
            raise ParseError(f"intensity {parts[2]!r} is not a number", line=lineno) from None
        j = layout.index_of(x, y)
        if j is None:
            if ignore_unmapped:
                continue
            raise UnknownCoordinate(x, y, line=lineno)
        if not math.isfinite(v) or v <= 0:
            raise BadIntensity(f"line {lineno}: intensity {parts[2]} at ({x}, {y}) is not positive and finite")
        if seen[j]:
            raise ParseError(f"coordinate ({x}, {y}) listed twice", line=lineno)
        seen[j] = True
        values[j] = v
    if not seen.all():
        j = int(np.flatnonzero(~seen)[0])
        raise MissingProbe(int(layout.x[j]), int(layout.y[j]))
    return values


def serialize_chip(values: Sequence[float], layout: ChipLayout) -> str:
    out = [f"{int(x)}\t{int(y)}\t{float(v)!r}" for x, y, v in zip(layout.x, layout.y, values)]
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class Manifest:
    layout_path: str
    chips: tuple  # of (name, path, batch-or-None)


def parse_manifest(text: str) -> Manifest:
    layout_path = None
    chips = []
    names = set()
    for lineno, line in _data_lines(text):
        parts = line.split("\t")
        kind = parts[0]
        if kind == "layout":
            if len(parts) != 2:
                raise ParseError("layout row must be 'layout\\t<path>'", line=lineno)
            if layout_path is not None:
                raise ParseError("second layout row", line=lineno)
            layout_path = parts[1]
        elif kind == "chip":
            if len(parts) not in (3, 4) or not parts[1] or not parts[2]:
                raise ParseError("chip row must be 'chip\\t<name>\\t<path>[\\t<batch>]'", line=lineno)
            if parts[1] in names:
                raise ParseError(f"chip name {parts[1]!r} used twice", line=lineno)
            names.add(parts[1])
            batch = parts[3] if len(parts) == 4 and parts[3] else None
            chips.append((parts[1], parts[2], batch))
        else:
            raise ParseError(f"unknown manifest row type {kind!r}", line=lineno)
    if layout_path is None:
        raise ParseError("manifest has no layout row")
    labelled = [c for c in chips if c[2] is not None]
    if labelled and len(labelled) != len(chips):
        raise ParseError("batch labels must be given for every chip or for none")
    return Manifest(layout_path, tuple(chips))


def load_chipset(
    manifest: str,
    file_reader: Callable[[str], str],
    ignore_unmapped: bool = False,
) -> ChipSet:
    """Read every file named in ``manifest`` through ``file_reader``.

    Errors from individual files carry the file path as context.
    """
    man = parse_manifest(manifest)
    if len(man.chips) < 2:
        raise NotEnoughChips(f"manifest lists {len(man.chips)} chip(s); at least 2 required")
    try:
        layout = parse_layout(file_reader(man.layout_path))
    except ChipQAError as err:
        raise err.with_context(man.layout_path)

    rows = []
    for name, path, _ in man.chips:
        try:
            rows.append(parse_chip(file_reader(path), layout, ignore_unmapped=ignore_unmapped))
        except ChipQAError as err:
            raise err.with_context(path)
    raw = IntensityMatrix(tuple(c[0] for c in man.chips), np.vstack(rows))
    labels = None
    if man.chips[0][2] is not None:
        labels = {name: batch for name, _, batch in man.chips}
    return ChipSet(layout, raw, labels)
