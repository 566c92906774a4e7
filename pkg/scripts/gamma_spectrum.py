"""Leading eigenvalues of the linearization against gamma at fixed lambda.

Shows that the phi-branch eigenvalues grow like (1 + gamma^2) times the
limit-problem eigenvalues, which is why the limit comparison uses gamma = 0.
"""
import argparse

from llmaxwell.config import RunConfig
from llmaxwell.report import Laboratory
from llmaxwell.spectrum import limit_eigenvalues

ap = argparse.ArgumentParser()
ap.add_argument("--cells", type=int, default=32)
ap.add_argument("--gammas", type=float, nargs="+", default=[0.0, 0.1, 0.25, 0.5, 1.0])
args = ap.parse_args()

lab = Laboratory(RunConfig(cells=args.cells))
ref = limit_eigenvalues(*lab.limit(), k=1)[0].real
print(f"limit problem mu1 = {ref:.4f}")
for g in args.gammas:
    mu = lab.spectrum(-1, g).branch("phi")[0]
    print(f"gamma {g:5.2f}  mu1 {mu.real:10.4f}{mu.imag:+.2e}j  ratio {mu.real / ref:.5f}  1+gamma^2 {1 + g * g:.5f}")
