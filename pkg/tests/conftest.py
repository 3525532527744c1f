import numpy as np
import pytest

from bottomwell.core import SymmetryClass, TaylorPotential


@pytest.fixture
def quartic():
    """x^2/2 + 0.05 x^4."""
    return TaylorPotential((1.0,), {(4,): 1.2}, symmetry=SymmetryClass.EVEN)


@pytest.fixture
def cubic_quartic():
    """x^2/2 + 0.1 x^3 + 0.05 x^4."""
    return TaylorPotential((1.0,), {(3,): 0.6, (4,): 1.2})


@pytest.fixture
def sextic():
    """x^2/2 + 0.1 x^3 + 0.05 x^4 + 0.02 x^5 + 0.01 x^6."""
    return TaylorPotential((1.0,), {(3,): 0.6, (4,): 1.2, (5,): 2.4, (6,): 7.2})


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line for the acceptance summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(label: str, ok: bool, detail: str) -> None:
        line = f"{label}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
