import numpy as np
import pytest

from hklab.cones import ConeFunction


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class SaturatingSum(ConeFunction):
    """f = sum(1 - exp(-lam_i)) on the positive orthant; bounded above by n."""

    name = "saturating"

    def value(self, lam):
        lam = np.asarray(lam, dtype=float)
        with np.errstate(over="ignore"):
            return (1.0 - np.exp(-lam)).sum(axis=-1)

    def gradient(self, lam):
        return np.exp(-np.asarray(lam, dtype=float))

    def margin(self, lam):
        return np.asarray(lam, dtype=float).min(axis=-1)


@pytest.fixture
def saturating():
    return SaturatingSum


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record the outcome of one acceptance criterion, printed at the end of the run."""

    def record(number, ok, detail=""):
        ACCEPTANCE[number] = (bool(ok), detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
