"""Compare batches by their residual scales.

Three batches share one layout and one set of true expressions.  The first
two are the same draw; the third was run with twice the noise.  RSF rises
with the noise, and NRSF puts each batch relative to the cross-batch median.
"""

from chipqa.metrics import compute_rsf
from chipqa.synthgen import SynthSpec, generate

batches = []
for name, sd in (("monday", 0.2), ("tuesday", 0.2), ("friday", 0.4)):
    cs, _ = generate(SynthSpec(seed=31, n_probesets=500, n_chips=5, sigma=(sd,) * 5))
    batches.append(cs)

for q in compute_rsf(batches, names=["monday", "tuesday", "friday"]):
    print(f"{q.batch_name:8} chips={q.n_chips}  RSF={q.rsf:.4f}  NRSF={q.nrsf:.4f}")
