"""Quality landscapes: per-probe weights or residuals painted on the chip grid.

Color mode:
    weights           white-ish to dark green, darker = lower weight
    residuals_signed  positive residuals on a red ramp, negative on a blue ramp
    residuals_pos/neg one ramp each (red / blue)
Gray mode uses one light-to-black ramp and refuses ``residuals_signed``,
whose sign would not survive the conversion.

Shade is linear in the value up to ``clamp`` and saturates beyond it.
Cells with no layout probe are pure white; the lightest shade of every ramp
is a faint gray so they stay distinguishable.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ConfigError, PaletteError, UnknownChip

__all__ = ["CHANNELS", "Landscape", "build_landscape", "render", "shade_levels", "LIGHTEST"]

CHANNELS = ("weights", "residuals_pos", "residuals_neg", "residuals_signed")
CLI_CHANNELS = {"weights": "weights", "pos": "residuals_pos", "neg": "residuals_neg", "signed": "residuals_signed"}

ABSENT = (255, 255, 255)
LIGHTEST = (246, 246, 246)
_DARK = {
    "red": (165, 0, 38),
    "blue": (33, 49, 148),
    "green": (0, 90, 50),
    "gray": (0, 0, 0),
}
CLAMP_QUANTILE = 0.98


@dataclass(frozen=True, eq=False)
class Landscape:
    chip_name: str
    channel: str
    grid: np.ndarray  # rows x cols, NaN where no probe
    clamp: float

    @property
    def mask(self):
        """True on cells that hold a layout probe."""
        return ~np.isnan(self.grid)


def build_landscape(result, layout, chip, channel) -> Landscape:
    if channel not in CHANNELS:
        raise ConfigError(f"unknown landscape channel {channel!r}; expected one of {CHANNELS}")
    try:
        i = result.chip_names.index(chip)
    except ValueError:
        raise UnknownChip(f"chip {chip!r} not in fit") from None

    if channel == "weights":
        vals = result.weight_matrix()[i]
        clamp = 1.0
    else:
        r = result.residual_matrix()[i]
        # probesets fitted with zero scale are perfect fits; their residuals are rounding noise
        for ps, f in result.fits.items():
            if f.sigma == 0:
                r[layout.slices[ps]] = 0.0
        clamp = float(np.quantile(np.abs(r), CLAMP_QUANTILE))
        if not clamp > 0:
            clamp = 1.0
        vals = {
            "residuals_pos": np.maximum(r, 0.0),
            "residuals_neg": np.maximum(-r, 0.0),
            "residuals_signed": r,
        }[channel]
    grid = np.full((layout.rows, layout.cols), np.nan)
    grid[layout.y, layout.x] = vals
    grid.setflags(write=False)
    return Landscape(chip, channel, grid, clamp)


def shade_levels(landscape: Landscape) -> np.ndarray:
    """Darkness in [0, 1] per cell (NaN where absent)."""
    g = landscape.grid
    if landscape.channel == "weights":
        t = 1.0 - g
    else:
        t = np.abs(g) / landscape.clamp
    return np.clip(t, 0.0, 1.0)


def _ramp(t, dark):
    lo = np.array(LIGHTEST, dtype=float)
    hi = np.array(dark, dtype=float)
    rgb = lo + t[..., None] * (hi - lo)
    return np.rint(rgb).astype(np.uint8)


def render(landscape: Landscape, palette="color", scale=1) -> bytes:
    """PNG bytes, one pixel per grid cell times ``scale``."""
    if palette not in ("color", "gray"):
        raise ConfigError(f"unknown palette {palette!r}")
    if int(scale) != scale or scale < 1:
        raise ConfigError(f"scale must be a positive integer, got {scale}")
    ch = landscape.channel
    if palette == "gray" and ch == "residuals_signed":
        raise PaletteError("a gray residual image loses the sign; render residuals_pos and residuals_neg instead")

    t = shade_levels(landscape)
    present = ~np.isnan(t)
    t0 = np.where(present, t, 0.0)
    if palette == "gray":
        rgb = _ramp(t0, _DARK["gray"])
    elif ch == "weights":
        rgb = _ramp(t0, _DARK["green"])
    elif ch == "residuals_pos":
        rgb = _ramp(t0, _DARK["red"])
    elif ch == "residuals_neg":
        rgb = _ramp(t0, _DARK["blue"])
    else:
        neg = np.where(present, landscape.grid, 0.0) < 0
        rgb = np.where(neg[..., None], _ramp(t0, _DARK["blue"]), _ramp(t0, _DARK["red"]))
    rgb[~present] = ABSENT

    scale = int(scale)
    if scale > 1:
        rgb = np.repeat(np.repeat(rgb, scale, axis=0), scale, axis=1)
    if palette == "gray":
        img = Image.fromarray(np.ascontiguousarray(rgb[..., 0]))
    else:
        img = Image.fromarray(np.ascontiguousarray(rgb))
    buf = io.BytesIO()
    img.save(buf, format="PNG", optimize=False)
    return buf.getvalue()
