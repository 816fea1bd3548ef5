import numpy as np
import pytest

from cosgf.data import ClusteredDataset

ACCEPTANCE_LINES: list[str] = []


def make_dataset(sizes, a, w=None, x=None, y=None, seed=0, unit_names=None, cluster_names=None):
    """Dataset with clusters of the given sizes; random covariates when not supplied."""
    rng = np.random.default_rng(seed)
    sizes = list(sizes)
    m, n = len(sizes), int(sum(sizes))
    unit_cluster = np.repeat(np.arange(m), sizes)
    if w is None:
        w = rng.normal(size=(m, 1))
    if x is None:
        x = np.column_stack([rng.normal(size=n), rng.integers(0, 2, size=n)])
    if y is None:
        y = rng.normal(size=n)
    w = np.asarray(w, dtype=float).reshape(m, -1)
    x = np.asarray(x, dtype=float).reshape(n, -1)
    return ClusteredDataset(
        [f"u{i}" for i in range(n)],
        unit_cluster,
        y,
        x,
        [f"c{j}" for j in range(m)],
        a,
        w,
        unit_names or [f"x{k + 1}" for k in range(x.shape[1])],
        cluster_names or [f"w{k + 1}" if w.shape[1] > 1 else "w" for k in range(w.shape[1])],
    )


@pytest.fixture
def small_dataset():
    return make_dataset([3, 4, 2, 5, 3, 4], [1, 0, 1, 0, 1, 0], seed=11)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
