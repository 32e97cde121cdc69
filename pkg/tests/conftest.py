import itertools

import numpy as np
import pytest

from homopart.config import get_settings


@pytest.fixture(autouse=True)
def _fresh_settings(monkeypatch):
    monkeypatch.delenv("HOMOPART_THREADS", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


def naive_density(cells, subsets):
    """Average cell value over the product of index lists, one cell at a time."""
    total, count = 0.0, 0
    for cell in itertools.product(*subsets):
        total += float(cells[cell])
        count += 1
    return total / count


def shatters(rows, cols):
    patterns = {tuple(bool(row[c]) for c in cols) for row in rows}
    return len(patterns) == 2 ** len(cols)


def brute_vc(adjacency):
    """Largest set of columns (or rows) shattered by the rows (or columns)."""
    adjacency = np.asarray(adjacency, dtype=bool)
    best = 0
    for matrix in (adjacency, adjacency.T):
        for d in range(1, matrix.shape[1] + 1):
            if any(shatters(matrix, cols) for cols in itertools.combinations(range(matrix.shape[1]), d)):
                best = max(best, d)
            else:
                break
    return best


def naive_disagreement(cells, labels):
    """T_i by enumerating ordered (edge, non-edge) pairs differing in coordinate i."""
    k = cells.ndim
    counts = [0] * k
    for e in itertools.product(*[range(n) for n in cells.shape]):
        if not cells[e]:
            continue
        for i in range(k):
            for v in range(cells.shape[i]):
                f = e[:i] + (v,) + e[i + 1:]
                if not cells[f] and labels[i][v] == labels[i][e[i]] and labels[i][v] != 0:
                    counts[i] += 1
    return counts


def random_cells(seed, shape, p=0.5):
    return np.random.default_rng(seed).random(shape) < p
