import numpy as np
import pytest


def random_unit(rng, m):
    v = rng.standard_normal(m)
    return v / np.linalg.norm(v)


def random_probs(rng, m):
    p = rng.dirichlet(np.full(m, 2.0))
    p = np.maximum(p, 1e-3)
    return p / p.sum()


def orthonormal_pair(rng, m):
    a, _ = np.linalg.qr(rng.standard_normal((m, 2)))
    return a[:, 0], a[:, 1]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record ``(number, passed, detail)`` as one PASS/FAIL line."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        lines.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    lines = terminalreporter.config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
