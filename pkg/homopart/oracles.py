"""Providers of small homogeneous partitions for the links of a hypergraph.

An oracle answers ``partition(pins, side)`` with a partition of ``side`` that,
together with the partition of the other free part, is meant to be homogeneous
for the link of ``pins``. All oracles return at most ``r`` blocks.
"""

import logging
import threading

import numpy as np

from .auditor import homogeneity_audit
from .config import get_settings
from .errors import InfeasibleParametersError, PartitionError
from .hypercore import BipartiteGraph
from .partitions import LayeredPartition, PartPartition

log = logging.getLogger(__name__)


def _pin_key(pins):
    return tuple(sorted((int(p), int(v)) for p, v in pins))


class LinkPartitionOracle:
    provenance = None

    def __init__(self, r):
        self.r = int(r)

    def partition(self, pins, side):
        raise NotImplementedError

    def __call__(self, pins, side):
        return self.partition(pins, side)

    def pair(self, pins, left, right):
        """Partitions of both free parts, as a two-part LayeredPartition."""
        return LayeredPartition([self.partition(pins, left).with_part(0), self.partition(pins, right).with_part(1)])


class PlantedOracle(LinkPartitionOracle):
    """Returns the planted partition of the requested part for every pin tuple."""

    provenance = "planted"

    def __init__(self, labels, r):
        super().__init__(r)
        self.parts = [PartPartition(l, part=i) for i, l in enumerate(labels)]
        for p in self.parts:
            if p.block_count > self.r:
                raise PartitionError(f"Planted partition of part {p.part} has {p.block_count} blocks, more than r = {self.r}.")

    def partition(self, pins, side):
        return self.parts[side]


class TableOracle(LinkPartitionOracle):
    """Per-pin partitions read from a ``.links`` sidecar."""

    provenance = "external-file"

    def __init__(self, table, r, provenance=None):
        super().__init__(r)
        self.table = {(_pin_key(pins), int(side)): p for (pins, side), p in table.items()}
        if provenance:
            self.provenance = provenance

    def partition(self, pins, side):
        try:
            return self.table[(_pin_key(pins), int(side))]
        except KeyError:
            raise PartitionError(f"No link partition for pins {_pin_key(pins)} on side {side}.")


class _LinkSearchOracle(LinkPartitionOracle):
    """Shared caching for oracles that compute partitions from the links of H."""

    def __init__(self, H, r, eps_prime):
        super().__init__(r)
        self.H = H
        self.eps_prime = float(eps_prime)
        self._cache = {}
        self._lock = threading.Lock()

    def partition(self, pins, side):
        key = _pin_key(pins)
        with self._lock:
            cached = self._cache.get(key)
        if cached is None:
            # Both sides come from one search so the pair stays consistent.
            graph = self.H.link(pins)
            x, y = self.search(graph.adjacency)
            cached = {
                graph.left_part: PartPartition(x, part=graph.left_part),
                graph.right_part: PartPartition(y, part=graph.right_part),
            }
            with self._lock:
                self._cache[key] = cached
        if side not in cached:
            raise PartitionError(f"Part {side} is pinned in {key}; it has no link partition.")
        return cached[side]


def _mass(adjacency, x_labels, y_labels, eps):
    layered = LayeredPartition([PartPartition(x_labels, 0), PartPartition(y_labels, 1)])
    return homogeneity_audit(BipartiteGraph(adjacency), layered, eps)


def _split(block, rows):
    degrees = rows.sum(axis=1)
    above = degrees > degrees.mean()
    if above.all() or not above.any():
        # Equal degrees: split off the rows that disagree with the first one.
        above = (rows != rows[0]).sum(axis=1) * 2 < rows.shape[1]
        if above.all():
            return None
    return block[above], block[~above]


class GreedyOracle(_LinkSearchOracle):
    """
    Recursive degree splitting.

    Starting from one block per side, the non-homogeneous block pair of largest
    mass is split by degree on whichever side still has room, or by agreement with
    its first row when all degrees are equal, until the pair of partitions is
    eps'-homogeneous or neither side can grow.
    """

    provenance = "greedy"

    def search(self, adjacency):
        n_x, n_y = adjacency.shape
        x = np.ones(n_x, dtype=np.int64)
        y = np.ones(n_y, dtype=np.int64)
        while True:
            report = _mass(adjacency, x, y, self.eps_prime)
            if report.passed:
                break
            order = np.argsort(-report.sizes * ~report.homogeneous, kind="stable")
            grown = False
            for row in order:
                if report.homogeneous[row]:
                    break
                lx, ly = (int(v) for v in report.labels[row])
                bx, by = np.flatnonzero(x == lx), np.flatnonzero(y == ly)
                if x.max() < self.r:
                    pieces = _split(bx, adjacency[np.ix_(bx, by)])
                    if pieces is not None:
                        x[pieces[1]] = x.max() + 1
                        grown = True
                        break
                if y.max() < self.r:
                    pieces = _split(by, adjacency[np.ix_(bx, by)].T)
                    if pieces is not None:
                        y[pieces[1]] = y.max() + 1
                        grown = True
                        break
            if not grown:
                log.debug("Greedy split stopped at %d x %d blocks with mass %.4g", x.max(), y.max(), report.normalized_mass)
                break
        return x, y


def restricted_growth_strings(n, max_blocks):
    """Every partition of range(n) into at most ``max_blocks`` blocks, labels from 1."""
    labels = [1] * n

    def extend(i, used):
        if i == n:
            yield np.array(labels, dtype=np.int64)
            return
        for label in range(1, min(used + 1, max_blocks) + 1):
            labels[i] = label
            yield from extend(i + 1, max(used, label))

    if n == 0:
        yield np.zeros(0, dtype=np.int64)
        return
    labels[0] = 1
    yield from extend(1, 1)


def signature_partition(adjacency, x_labels):
    """Group the columns by which row blocks they are mostly adjacent to."""
    indicator = (x_labels[:, None] == np.arange(1, x_labels.max() + 1)[None, :]).astype(np.float64)
    degrees = indicator.T @ adjacency
    majority = degrees * 2 >= indicator.sum(axis=0)[:, None]
    _, first, inverse = np.unique(majority.T, axis=0, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(1, first.size + 1)
    return rank[inverse.reshape(-1)]


class ExhaustiveOracle(_LinkSearchOracle):
    """
    Best partition of the lower free part among all partitions into at most r blocks.

    Side sizes are limited to ``cap`` (12 by default). The other side is
    grouped by majority adjacency to the candidate blocks; a candidate only
    counts when that grouping has at most r blocks as well. The candidate of
    least non-homogeneous mass wins, ties going to the first one enumerated.
    """

    provenance = "exhaustive"

    def __init__(self, H, r, eps_prime, cap=None):
        super().__init__(H, r, eps_prime)
        self.cap = get_settings().exhaustive_oracle_cap if cap is None else cap

    def search(self, adjacency):
        n_x = adjacency.shape[0]
        if max(adjacency.shape) > self.cap:
            raise InfeasibleParametersError(
                f"Exhaustive link search is limited to {self.cap} vertices per side, got {adjacency.shape}."
            )
        best, fallback = None, None
        for labels in restricted_growth_strings(n_x, self.r):
            y = signature_partition(adjacency, labels)
            mass = _mass(adjacency, labels, y, self.eps_prime).mass
            if fallback is None or mass < fallback[0]:
                fallback = (mass, labels, y)
            if y.max() <= self.r and (best is None or mass < best[0]):
                best = (mass, labels, y)
                if mass == 0:
                    break
        if best is None:
            log.warning("No candidate keeps the other side within %d blocks; using the best unconstrained one", self.r)
            best = fallback
        return best[1], best[2]
