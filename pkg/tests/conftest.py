import numpy as np
import pytest

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0

# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def golden_run():
    """Reducibility run for cos_decay, eps = 1e-3, N = 64 at the golden-mean frequency."""
    from qho_kam.hermite import HermiteBasis, perturbation_series, potential
    from qho_kam.kam import run
    from qho_kam.spectrum import qho

    P0 = perturbation_series(HermiteBasis.build(64), potential("cos_decay"), 2, 1e-3)
    res = run(P0, qho(), [GOLDEN], max_steps=4, stop_tol=0.0)
    return P0, res
