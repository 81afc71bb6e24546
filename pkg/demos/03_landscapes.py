"""Paint a bubble-like defect and find it again in the weight image.

Writes PNG landscapes for the damaged chip and one clean chip into
``demo_out/`` (or the directory given as the first argument).
"""

import os
import sys

import numpy as np

from chipqa.landscape import build_landscape, render
from chipqa.pipeline import run_pipeline
from chipqa.synthgen import ArtifactSpec, SynthSpec, generate

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
os.makedirs(out, exist_ok=True)

spec = SynthSpec(
    seed=2,
    n_probesets=800,
    n_chips=8,
    artifacts=(ArtifactSpec(chip=1, kind="disc", center=(60, 25), radius=12, delta=2.0),),
)
chips, truth = generate(spec)
results = run_pipeline(chips)

for chip in ("chip01", "chip02"):
    for channel, tag in (("weights", "weights"), ("residuals_signed", "signed")):
        ls = build_landscape(results.plm, chips.layout, chip, channel)
        path = os.path.join(out, f"{chip}_{tag}.png")
        with open(path, "wb") as fh:
            fh.write(render(ls, scale=3))
        print("wrote", path)

ls = build_landscape(results.plm, chips.layout, "chip02", "weights")
inside = np.zeros(ls.grid.shape, dtype=bool)
for x, y in truth.masks[0]:
    inside[y, x] = True
print(f"median weight inside the disc  {np.median(ls.grid[inside]):.3f}")
print(f"median weight outside the disc {np.median(ls.grid[ls.mask & ~inside]):.3f}")
