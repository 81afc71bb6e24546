"""Report files: score tables, boxplot series, landscapes, run summary.

Floats are written with Python's shortest round-trip ``repr`` in both CSV
and JSON, so the two agree exactly.  SVG output contains nothing that
depends on time or environment, so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from . import __version__
from .errors import ChipQAError, IoError, ShapeError
from .landscape import CLI_CHANNELS, build_landscape, render

__all__ = [
    "PALETTE",
    "SCORE_COLUMNS",
    "RSF_COLUMNS",
    "CAVEATS",
    "BoxStats",
    "box_stats",
    "boxplot_series",
    "RunReport",
    "format_number",
    "score_rows",
    "scores_csv",
    "rsf_rows",
    "rsf_csv",
    "emit_report",
    "emit_rsf_report",
]

# ColorBrewer "Paired", cycled by group order of first appearance.
PALETTE = (
    "#a6cee3", "#1f78b4", "#b2df8a", "#33a02c", "#fb9a99", "#e31a1c",
    "#fdbf6f", "#ff7f00", "#cab2d6", "#6a3d9a", "#ffff99", "#b15928",
)
SCORE_COLUMNS = (
    "chip", "med_pm", "iqr_pm", "med_rle", "iqr_rle", "med_nuse", "iqr_nuse",
    "avg_background", "scale_factor", "flags",
)
RSF_COLUMNS = ("batch", "rsf", "nrsf", "n_chips", "n_probesets")

CAVEATS = (
    "RLE spread reads as technical noise only if most genes keep the same expression across chips.",
    "A nonzero Med(RLE) reads as technical bias only if up- and down-regulated genes are roughly balanced.",
    "Flag thresholds are heuristic defaults; NUSE has no meaning outside the batch fitted together.",
    "Scale Factor uses all layout probes instead of a vendor-selected subset of probesets.",
)


def format_number(v):
    """Shortest round-trip text for a float; empty for NaN/None."""
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def _json_number(v):
    if v is None:
        return None
    v = float(v)
    return None if math.isnan(v) else v


@dataclass(frozen=True)
class BoxStats:
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: tuple
    n: int


def box_stats(values) -> BoxStats:
    """Tukey box: quartiles by linear interpolation, whiskers at 1.5 IQR."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ShapeError("cannot summarize an empty column")
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    med = float(np.median(v))
    spread = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * spread, q3 + 1.5 * spread
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    outliers = v[(v < lo_fence) | (v > hi_fence)]
    return BoxStats(med, float(q1), float(q3), float(inside[0]), float(inside[-1]),
                    tuple(float(o) for o in outliers), int(v.size))


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + step * 1e-9:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _group_colors(chips, group_keys):
    if not group_keys:
        return {c: PALETTE[1] for c in chips}, {}
    order = {}
    for c in chips:
        order.setdefault(group_keys.get(c, ""), len(order))
    legend = {g: PALETTE[i % len(PALETTE)] for g, i in order.items()}
    return {c: legend[group_keys.get(c, "")] for c in chips}, legend


def _f(v):
    return f"{v:.2f}"


def boxplot_series(matrix, chip_names, group_keys=None, title="", ylabel="") -> bytes:
    """SVG with one box per column of ``matrix`` (rows x chips).

    Each box is a ``<g class="box">`` element whose ``data-*`` attributes
    hold the exact statistics it draws.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.size == 0 or m.shape[1] == 0:
        raise ShapeError("boxplot needs a nonempty rows x chips matrix")
    chip_names = list(chip_names)
    if len(chip_names) != m.shape[1]:
        raise ShapeError("one chip name per column required")
    colors, legend = _group_colors(chip_names, group_keys)
    stats = [box_stats(m[:, i]) for i in range(m.shape[1])]

    lo = min(min(s.whisker_low, *s.outliers) if s.outliers else s.whisker_low for s in stats)
    hi = max(max(s.whisker_high, *s.outliers) if s.outliers else s.whisker_high for s in stats)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    left, right, top, bottom = 70.0, 20.0, 40.0, 90.0
    step = 24.0
    plot_h = 300.0
    width = left + right + step * len(stats)
    height = top + plot_h + bottom
    if legend:
        height += 18.0 * len(legend)

    def ypx(v):
        return top + plot_h * (hi - v) / (hi - lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" height="{_f(height)}" '
        f'viewBox="0 0 {_f(width)} {_f(height)}" font-family="sans-serif" font-size="11">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{_f(width)}" height="{_f(height)}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="{_f(width / 2)}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(
        f'<line class="axis" x1="{_f(left)}" y1="{_f(top)}" x2="{_f(left)}" y2="{_f(top + plot_h)}" stroke="#000000"/>'
    )
    for t in _nice_ticks(lo, hi):
        y = ypx(t)
        out.append(f'<line x1="{_f(left - 4)}" y1="{_f(y)}" x2="{_f(left)}" y2="{_f(y)}" stroke="#000000"/>')
        out.append(f'<text x="{_f(left - 6)}" y="{_f(y + 4)}" text-anchor="end">{t:g}</text>')
    if ylabel:
        cy = top + plot_h / 2
        out.append(
            f'<text x="16" y="{_f(cy)}" text-anchor="middle" transform="rotate(-90 16 {_f(cy)})">{escape(ylabel)}</text>'
        )

    half = step * 0.32
    for i, (chip, s) in enumerate(zip(chip_names, stats)):
        cx = left + step * (i + 0.5)
        group = group_keys.get(chip, "") if group_keys else ""
        out.append(
            f'<g class="box" data-chip={quoteattr(chip)} data-group={quoteattr(group)} '
            f'data-median="{s.median!r}" data-q1="{s.q1!r}" data-q3="{s.q3!r}" '
            f'data-iqr="{(s.q3 - s.q1)!r}" data-whisker-low="{s.whisker_low!r}" '
            f'data-whisker-high="{s.whisker_high!r}" data-n="{s.n}" data-outliers="{len(s.outliers)}">'
        )
        out.append(
            f'<line x1="{_f(cx)}" y1="{_f(ypx(s.whisker_high))}" x2="{_f(cx)}" y2="{_f(ypx(s.q3))}" stroke="#000000"/>'
        )
        out.append(
            f'<line x1="{_f(cx)}" y1="{_f(ypx(s.q1))}" x2="{_f(cx)}" y2="{_f(ypx(s.whisker_low))}" stroke="#000000"/>'
        )
        for w in (s.whisker_low, s.whisker_high):
            out.append(
                f'<line x1="{_f(cx - half / 2)}" y1="{_f(ypx(w))}" x2="{_f(cx + half / 2)}" y2="{_f(ypx(w))}" stroke="#000000"/>'
            )
        out.append(
            f'<rect x="{_f(cx - half)}" y="{_f(ypx(s.q3))}" width="{_f(2 * half)}" '
            f'height="{_f(ypx(s.q1) - ypx(s.q3))}" fill="{colors[chip]}" stroke="#000000"/>'
        )
        out.append(
            f'<line class="median" x1="{_f(cx - half)}" y1="{_f(ypx(s.median))}" x2="{_f(cx + half)}" '
            f'y2="{_f(ypx(s.median))}" stroke="#000000" stroke-width="2"/>'
        )
        for o in s.outliers:
            out.append(f'<circle cx="{_f(cx)}" cy="{_f(ypx(o))}" r="1.5" fill="none" stroke="#555555"/>')
        ly = top + plot_h + 8
        out.append(
            f'<text x="{_f(cx + 3)}" y="{_f(ly)}" text-anchor="end" transform="rotate(-60 {_f(cx + 3)} {_f(ly)})">{escape(chip)}</text>'
        )
        out.append("</g>")

    y = top + plot_h + bottom
    for g, color in legend.items():
        out.append(f'<rect x="{_f(left)}" y="{_f(y - 10)}" width="12" height="12" fill="{color}" stroke="#000000"/>')
        out.append(f'<text x="{_f(left + 18)}" y="{_f(y)}">{escape(g)}</text>')
        y += 18.0
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


def score_rows(results):
    """One dict per chip with the score columns, floats left as floats."""
    rows = []
    for i, s in enumerate(results.summaries):
        rows.append({
            "chip": s.chip_name,
            "med_pm": s.med_pm,
            "iqr_pm": s.iqr_pm,
            "med_rle": s.med_rle,
            "iqr_rle": s.iqr_rle,
            "med_nuse": s.med_nuse,
            "iqr_nuse": s.iqr_nuse,
            "avg_background": _json_number(results.avg_background[i]),
            "scale_factor": _json_number(results.scale_factor[i]),
            "flags": ";".join(f.label() for f in s.flags),
        })
    return rows


def _csv_text(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([r[c] if isinstance(r[c], str) else
                    (str(r[c]) if isinstance(r[c], int) else format_number(r[c])) for c in columns])
    return buf.getvalue()


def scores_csv(results) -> str:
    return _csv_text(SCORE_COLUMNS, score_rows(results))


def rsf_rows(batches):
    return [
        {"batch": b.batch_name, "rsf": b.rsf, "nrsf": b.nrsf, "n_chips": b.n_chips,
         "n_probesets": len(b.probeset_ids)}
        for b in batches
    ]


def rsf_csv(batches) -> str:
    return _csv_text(RSF_COLUMNS, rsf_rows(batches))


def _matrix_tsv(ids, chips, m):
    lines = ["probeset\t" + "\t".join(chips)]
    for ps, row in zip(ids, m):
        lines.append(ps + "\t" + "\t".join(format_number(v) for v in row))
    return "\n".join(lines) + "\n"


@dataclass
class RunReport:
    metadata: dict
    chips: list
    batches: list
    files: list
    caveats: list = field(default_factory=lambda: list(CAVEATS))

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


class _Writer:
    """Tracks written files so a failed emit can remove them."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.written = []
        self.dirs = []

    def ensure_dir(self, rel=""):
        path = os.path.join(self.out_dir, rel)
        missing = []
        p = os.path.abspath(path)
        while not os.path.isdir(p):
            missing.append(p)
            parent = os.path.dirname(p)
            if parent == p:
                break
            p = parent
        try:
            os.makedirs(path, exist_ok=True)
        except OSError as err:
            raise IoError(f"cannot create output directory {path}: {err}") from err
        self.dirs.extend(reversed(missing))

    def write(self, rel, data):
        path = os.path.join(self.out_dir, rel)
        mode = "wb" if isinstance(data, bytes) else "w"
        try:
            with open(path, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"})) as fh:
                fh.write(data)
        except OSError as err:
            raise IoError(f"cannot write {path}: {err}") from err
        self.written.append(rel)

    def cleanup(self):
        for rel in self.written:
            try:
                os.remove(os.path.join(self.out_dir, rel))
            except OSError:
                pass
        for d in reversed(self.dirs):
            try:
                os.rmdir(d)
            except OSError:
                pass
        self.written = []


def _metadata(config_echo, extra=None):
    meta = {
        "created": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        "versions": {
            "chipqa": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "config": config_echo,
    }
    if extra:
        meta.update(extra)
    return meta


def _chip_dicts(results):
    out = []
    for row, s in zip(score_rows(results), results.summaries):
        row = dict(row)
        row["flag_details"] = [asdict(f) for f in s.flags]
        out.append(row)
    return out


def _batch_dicts(batches):
    return rsf_rows(batches)


def emit_report(results, out_dir, formats=("csv", "json", "svg"), landscapes=(), palette="color",
                scale=1, group_keys=None) -> RunReport:
    """Write the report files for one pipeline run.

    ``formats`` selects among ``csv`` (scores.csv, rsf.csv), ``json``
    (scores.json), ``svg`` (boxplot_pm/rle/nuse.svg, rsf_boxplot.svg),
    ``png`` (landscapes, when ``landscapes`` names channels) and ``tsv``
    (full NUSE/RLE matrices).  ``report.json`` is always written.  If any
    write fails, files written so far are removed and :class:`IoError` is
    raised.
    """
    formats = set(formats)
    unknown = formats - {"csv", "json", "svg", "png", "tsv"}
    if unknown:
        raise ChipQAError(f"unknown output formats: {sorted(unknown)}")
    if group_keys is None and results.chipset.batch_labels:
        group_keys = results.chipset.batch_labels
    chips = list(results.chipset.chip_names)
    w = _Writer(out_dir)
    try:
        w.ensure_dir()
        if "csv" in formats:
            w.write("scores.csv", scores_csv(results))
            if results.batches:
                w.write("rsf.csv", rsf_csv(results.batches))
        if "json" in formats:
            w.write("scores.json", json.dumps(score_rows(results), indent=1) + "\n")
        if "svg" in formats:
            w.write("boxplot_pm.svg", boxplot_series(results.log_pm.T, chips, group_keys,
                                                     "PM distributions", "log2 PM"))
            w.write("boxplot_rle.svg", boxplot_series(results.qa.rle, chips, group_keys,
                                                      "RLE distributions", "RLE"))
            w.write("boxplot_nuse.svg", boxplot_series(results.qa.nuse, chips, group_keys,
                                                       "NUSE distributions", "NUSE"))
            if results.batches:
                w.write("rsf_boxplot.svg", _rsf_svg(results.batches))
        if "tsv" in formats:
            ids = results.qa.probeset_ids
            w.write("nuse.tsv", _matrix_tsv(ids, chips, results.qa.nuse))
            w.write("rle.tsv", _matrix_tsv(ids, chips, results.qa.rle))
        if "png" in formats and landscapes:
            w.ensure_dir("landscapes")
            for chip in chips:
                for ch in landscapes:
                    channel = CLI_CHANNELS.get(ch, ch)
                    ls = build_landscape(results.plm, results.chipset.layout, chip, channel)
                    w.write(os.path.join("landscapes", f"{chip}_{ch}.png"), render(ls, palette, scale))
        report = RunReport(
            metadata=_metadata(results.config.echo(), {"n_chips": len(chips),
                                                       "n_probesets": len(results.qa.probeset_ids),
                                                       "unconverged_fits": results.plm.n_unconverged()}),
            chips=_chip_dicts(results),
            batches=_batch_dicts(results.batches),
            files=sorted(w.written + ["report.json"]),
        )
        w.write("report.json", report.to_json())
    except Exception:
        w.cleanup()
        raise
    return report


def _rsf_svg(batches):
    m = np.column_stack([b.residual_scales for b in batches])
    return boxplot_series(m, [b.batch_name for b in batches], {b.batch_name: b.batch_name for b in batches},
                          "Residual scales by batch", "residual scale (log2)")


def emit_rsf_report(batches, out_dir, config_echo=None, formats=("csv", "svg")) -> RunReport:
    """rsf.csv, rsf_boxplot.svg and report.json for a batch-only run."""
    w = _Writer(out_dir)
    try:
        w.ensure_dir()
        if "csv" in formats:
            w.write("rsf.csv", rsf_csv(batches))
        if "svg" in formats:
            w.write("rsf_boxplot.svg", _rsf_svg(batches))
        report = RunReport(
            metadata=_metadata(config_echo or {}),
            chips=[],
            batches=_batch_dicts(batches),
            files=sorted(w.written + ["report.json"]),
        )
        w.write("report.json", report.to_json())
    except Exception:
        w.cleanup()
        raise
    return report
