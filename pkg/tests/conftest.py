import os

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def lattice(n, L=1.0):
    """Cell-centred ``n x n`` lattice on ``[0, L]^2``."""
    dx = L / n
    g = (np.arange(n) + 0.5) * dx
    X, Y = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()]), dx


def smooth_modes(x, M=4, seed=0):
    """Orthonormal smooth (3N, M) mode matrix sampled on ``x`` (periodic on the unit square)."""
    rng = np.random.default_rng(seed)
    cols = []
    for _ in range(M):
        a, b = rng.integers(1, 3, 2)
        ph = rng.uniform(0, 2 * np.pi, 3)
        f = [np.sin(2 * np.pi * (a * x[:, 0] + b * x[:, 1]) + p) for p in ph]
        cols.append(np.column_stack(f).ravel())
    Q, _ = np.linalg.qr(np.column_stack(cols))
    return Q


_ACCEPTANCE: list[str] = []


class Verdicts:
    """Collects one pass/fail line per acceptance criterion."""

    def record(self, name: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    def note(self, name: str, detail: str) -> None:
        line = f"       {name}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)


@pytest.fixture(scope="session")
def verdicts():
    return Verdicts()


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
