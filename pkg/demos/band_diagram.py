"""Band diagram along M - Gamma - K - M through the command-line interface.

Run with ``python3 demos/band_diagram.py [output.csv]``.  The first six bands
are written as CSV; if matplotlib is installed a plot is saved next to it.
The two lowest bands touch at K, the Dirac point.  Expect a few minutes on
a single core; the Bloch points are spread over all available cores.
"""

import csv
import sys

from diracbands import bandcli

out = sys.argv[1] if len(sys.argv) > 1 else "bands.csv"
code = bandcli.main(["bands", "--eps", "0.1", "--path", "M,G,K,M", "--samples", "8",
                     "--omega-max", "1.2", "--bands", "6", "--out", out])
if code:
    sys.exit(code)

with open(out) as fh:
    rows = list(csv.DictReader(fh))
s = [float(r["s"]) for r in rows]
bands = [[float(r[f"band{i}"]) if r[f"band{i}"] else float("nan") for r in rows] for i in range(1, 7)]
print(f"wrote {len(rows)} rows to {out}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit(0)

fig, ax = plt.subplots(figsize=(5, 4))
for b in bands:
    ax.plot(s, b, "k.-", ms=3, lw=0.8)
ax.set_xlabel("path length")
ax.set_ylabel("omega a / 2 pi")
fig.tight_layout()
fig.savefig(out.rsplit(".", 1)[0] + ".png", dpi=120)
