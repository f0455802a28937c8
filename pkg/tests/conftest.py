import numpy as np
import pytest

from ease.data import SemiSupervisedDataset


def make_dataset(n=60, big_n=300, p=2, seed=0, fn=None, noise=1.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    u = rng.standard_normal((big_n, p))
    fn = fn or (lambda a: a.sum(axis=1) + 0.5 * a[:, 0] ** 2)
    y = fn(x) + noise * rng.standard_normal(n)
    return SemiSupervisedDataset(y, x, u)


@pytest.fixture
def small_dataset():
    return make_dataset()


_ACCEPTANCE_LINES = []


def record_acceptance(line):
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
