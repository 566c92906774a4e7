"""Perturbation batteries at the largest lambda for every gamma of the schedule."""
import argparse
from pathlib import Path

from llmaxwell.config import RunConfig, load_config
from llmaxwell.dynamics import perturbation_battery
from llmaxwell.report import Laboratory

ap = argparse.ArgumentParser()
ap.add_argument("--config", type=Path)
ap.add_argument("--cells", type=int)
ap.add_argument("--seeds", type=int, default=3)
ap.add_argument("--outdir", type=Path, default=Path("battery"))
args = ap.parse_args()

cfg = load_config(args.config) if args.config else RunConfig()
if args.cells:
    cfg = cfg.with_(cells=args.cells)
lab = Laboratory(cfg)
target = lab.state(-1)
args.outdir.mkdir(parents=True, exist_ok=True)
for g in cfg.gammas:
    p = target.params.with_(gamma=g)
    gap = lab.spectrum(-1, g).gap
    bat = perturbation_battery(target, p, seeds=range(args.seeds), eps=cfg.perturbation, T_max=cfg.t_max,
                               tol=cfg.decay_tol)
    for rec in bat.records:
        rec.write_csv(args.outdir / f"decay_g{g:g}_s{rec.seed}.csv")
    rates = ", ".join(f"{r:.1f}" for r in bat.rates)
    print(f"gamma {g:<5g} gap {gap:9.2f}  rates {rates}  all decay: {bat.all_decay}")
