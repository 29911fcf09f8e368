import numpy as np
import pytest


def jointly_diagonalizable(rng, d, k):
    """``k`` matrices ``A D_j A^T`` with iid normal ``A`` and Unif(0, 1) diagonals."""
    A = rng.standard_normal((d, d))
    D = rng.uniform(0.0, 1.0, size=(k, d))
    mats = np.einsum("ij,kj,lj->kil", A, D, A)
    return A, 0.5 * (mats + mats.transpose(0, 2, 1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
