"""Sensitivity of the sweep slope and spectral gap to the torus aspect ratio R/r."""
import argparse

from llmaxwell.config import RunConfig
from llmaxwell.report import Laboratory

ap = argparse.ArgumentParser()
ap.add_argument("--cells", type=int, default=32)
ap.add_argument("--major", type=float, default=0.3)
ap.add_argument("--minor", type=float, nargs="+", default=[0.06, 0.08, 0.1, 0.12])
args = ap.parse_args()

print(f"{'R/r':>6} {'volume':>8} {'sup slope':>10} {'Holder slope':>13} {'gap':>10} {'limit energy':>13}")
for r in args.minor:
    lab = Laboratory(RunConfig(cells=args.cells, major_radius=args.major, minor_radius=r))
    sw = lab.sweep()
    gap = lab.spectrum(-1, 0.0).gap
    e = sw.points[0].state.energy_value
    print(f"{args.major / r:6.2f} {lab.mask.volume:8.5f} {sw.sup_slope:10.4f} {sw.holder_slope:13.4f} {gap:10.3f} {e:13.6f}")
