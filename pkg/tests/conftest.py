import numpy as np
import pytest

from rankselect import moments


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path_factory, monkeypatch):
    # one cache file per session keeps MC moments shared across tests without touching $HOME
    path = tmp_path_factory.getbasetemp() / "moments-cache" / "moments.csv"
    monkeypatch.setenv(moments.CACHE_ENV, str(path))
    yield


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


def random_instance(gen, n, m, q, r, b=1.0, sigma=1.0):
    """Y = XA + E with a rank-q design and a rank-r signal."""
    from rankselect import linalg

    X = gen.standard_normal((n, q))
    A = b * gen.standard_normal((q, r)) @ gen.standard_normal((r, m))
    E = sigma * gen.standard_normal((n, m))
    return X, A, E, X @ A + E, linalg.projection(X)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":").rstrip("b"))):
            terminalreporter.write_line(line)
