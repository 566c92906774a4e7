"""Print the acceptance table (same checks as tests/test_acceptance.py)."""
import argparse
import sys

from llmaxwell.config import RunConfig
from llmaxwell.report import Laboratory

ap = argparse.ArgumentParser()
ap.add_argument("--cells", type=int, default=48)
args = ap.parse_args()

results = []
for r in Laboratory(RunConfig(cells=args.cells)).all_criteria():
    print(f"{r.line()} ({r.seconds:.1f}s)", flush=True)
    results.append(r.passed)
print(f"{sum(results)}/{len(results)} passed")
sys.exit(0 if all(results) else 1)
