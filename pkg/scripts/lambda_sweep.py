"""Steady states along the anisotropy schedule; writes sweep.csv and prints slopes."""
import argparse
from pathlib import Path

from llmaxwell.config import RunConfig, load_config
from llmaxwell.report import Laboratory

ap = argparse.ArgumentParser()
ap.add_argument("--config", type=Path)
ap.add_argument("--cells", type=int)
ap.add_argument("--out", type=Path, default=Path("sweep.csv"))
args = ap.parse_args()

cfg = load_config(args.config) if args.config else RunConfig()
if args.cells:
    cfg = cfg.with_(cells=args.cells)
lab = Laboratory(cfg)
sw = lab.sweep()
sw.write_csv(args.out)
print(f"{'lambda':>12} {'sup|xi|':>11} {'lambda*sup':>11} {'|th-th*|':>10} {'iters':>5}")
for q in sw.points:
    print(f"{q.lam:12.5g} {q.xi_sup:11.4e} {q.lam * q.xi_sup:11.5f} {q.theta_dist_l2:10.3e} {q.state.iterations:5d}")
print(f"sup slope {sw.sup_slope:.4f}, Holder slope {sw.holder_slope:.4f} -> {args.out}")
