"""Acceptance criteria at the reference resolution (N=48, six lambda points).

Each criterion is one test; the PASS/FAIL line with the measured numbers
is printed in the terminal summary.  Runs in a few minutes on one core.
Run directly with ``python tests/test_acceptance.py`` for the table alone.
"""

import pytest

from llmaxwell.config import RunConfig
from llmaxwell.report import Laboratory

CHECKS = {
    1: Laboratory.maxwell_check,
    2: Laboratory.xi_scaling,
    3: Laboratory.homotopy,
    4: Laboratory.limit_convergence,
    5: Laboratory.uniqueness,
    6: Laboratory.spectral_gap_check,
    7: Laboratory.psi_mass_scaling,
    8: Laboratory.dynamic_stability,
    9: Laboratory.linearization_consistency,
}


@pytest.fixture(scope="session")
def lab():
    return Laboratory(RunConfig())


@pytest.mark.parametrize("number", sorted(CHECKS))
def test_criterion(lab, acceptance_log, number):
    result = CHECKS[number](lab)
    line = result.line()
    acceptance_log.append(line)
    print(line)
    assert result.passed, line


if __name__ == "__main__":
    import sys

    lab = Laboratory(RunConfig())
    ok = True
    for n in sorted(CHECKS):
        r = CHECKS[n](lab)
        print(r.line(), flush=True)
        ok &= r.passed
    sys.exit(0 if ok else 1)
