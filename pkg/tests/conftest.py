import numpy as np
import pytest

from carstream.stream import Chunk


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_chunk(X, y, index=0):
    return Chunk(np.asarray(X, dtype=float).reshape(len(y), -1), np.asarray(y), index=index)


@pytest.fixture
def blobs():
    """Two well separated Gaussian blobs in 2-D (centroid distance 4 sigma)."""
    gen = np.random.default_rng(7)

    def draw(n):
        y = gen.integers(0, 2, n)
        X = gen.standard_normal((n, 2))
        X[:, 0] += np.where(y == 1, 2.0, -2.0)
        return X, y

    return draw


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
