import numpy as np
import pytest

from metasel.sdt import Type2Model, sample_trials


def sdt_window(meta_d, dprime, n, seed, bins=4, spread=0.5):
    """(confidence, correct) arrays drawn from the generative type-2 model.

    Confidence is the midpoint of the drawn bin on [0, 1].
    """
    rng = np.random.default_rng(seed)
    model = Type2Model.evenly_spaced(meta_d, bins, spread)
    correct, conf_bin = sample_trials(model, dprime, n, rng)
    return (conf_bin - 0.5) / bins, correct.astype(int)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion.

    Lines are echoed to stdout and repeated in the terminal summary so they
    are visible without ``-s``.
    """

    def record(number, title, ok, detail):
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
