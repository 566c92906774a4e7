"""Grid dependence of the demag factor, the box eigenvalue and the spectral gap."""
import argparse
import math

import numpy as np

from llmaxwell.config import RunConfig
from llmaxwell.domain import GridSpec, build_ball_mask
from llmaxwell.maxwell import solve_demag
from llmaxwell.report import Laboratory

ap = argparse.ArgumentParser()
ap.add_argument("--cells", type=int, nargs="+", default=[24, 32, 48])
args = ap.parse_args()

print(f"{'N':>4} {'demag factor':>13} {'box rel err':>12} {'gap':>10}")
for N in args.cells:
    ball = build_ball_mask(0.3, GridSpec(1.0, N))
    H = solve_demag(np.tile([0.0, 0.0, 1.0], (ball.n, 1)), ball).H
    deep = -ball.level_set(*ball.centers.T) >= 2 * ball.h
    lab = Laboratory(RunConfig(cells=N, lambdas=(1600.0,), lambda_min=50.0))
    box = lab.box_diagnostic()
    print(f"{N:4d} {-H[deep, 2].mean():13.6f} {box['rel_err']:12.3e} {lab.spectrum(-1, 0.0).gap:10.3f}")
print(f"exact demag factor {1 / 3:.6f}; box eigenvalue 2*lambda + 3 pi^2/L^2 = {100 + 3 * math.pi**2 / 0.25:.4f}")
