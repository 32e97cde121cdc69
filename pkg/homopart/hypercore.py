"""Dense k-partite hypergraphs, bipartite graphs and their weighted variants.

Vertices are 0-based per part. Every structure stores its cells as an
n_1 x ... x n_k array; 0/1 structures additionally keep per-target packed
neighbourhood rows so symmetric differences are popcounts of XORs.
"""

import dataclasses
import itertools
import logging
import math
import threading

import numpy as np

from .errors import EmptySubsetError, ParameterError, PartitionError

log = logging.getLogger(__name__)


def _readonly(array):
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclasses.dataclass(frozen=True, eq=False)
class VertexSet:
    """A subset of one part, stored as a boolean mask."""

    part: int
    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 1:
            raise ParameterError("VertexSet masks must be one-dimensional.")
        object.__setattr__(self, "mask", _readonly(mask.copy()))

    @classmethod
    def full(cls, part, n):
        return cls(part, np.ones(n, dtype=bool))

    @classmethod
    def empty(cls, part, n):
        return cls(part, np.zeros(n, dtype=bool))

    @classmethod
    def from_indices(cls, part, n, indices):
        mask = np.zeros(n, dtype=bool)
        mask[np.asarray(list(indices), dtype=np.int64)] = True
        return cls(part, mask)

    @property
    def universe(self):
        return self.mask.shape[0]

    @property
    def size(self):
        return int(self.mask.sum())

    @property
    def indices(self):
        return np.flatnonzero(self.mask)

    def __len__(self):
        return self.size

    def __contains__(self, v):
        return bool(self.mask[v])

    def __eq__(self, other):
        if not isinstance(other, VertexSet):
            return NotImplemented
        return self.part == other.part and np.array_equal(self.mask, other.mask)

    def __hash__(self):
        return hash((self.part, self.mask.tobytes()))

    def symmetric_difference_size(self, other):
        return int(np.count_nonzero(self.mask ^ other.mask))


def popcount_distance(a, b):
    """Hamming distance between packed rows, broadcast over leading axes."""
    return np.bitwise_count(np.bitwise_xor(a, b)).sum(axis=-1, dtype=np.int64)


class _CellBox:
    """Shared storage for all box-shaped structures."""

    weighted = False

    def __init__(self, cells):
        self.cells = _readonly(cells)
        self.part_sizes = tuple(int(s) for s in self.cells.shape)
        if any(s < 1 for s in self.part_sizes):
            raise ParameterError(f"Every part needs at least one vertex, got {self.part_sizes}.")
        self._packed = {}
        self._lock = threading.Lock()

    @property
    def k(self):
        return self.cells.ndim

    @property
    def total_cells(self):
        return math.prod(self.part_sizes)

    def full_subsets(self):
        return [VertexSet.full(i, n) for i, n in enumerate(self.part_sizes)]

    def __eq__(self, other):
        return type(self) is type(other) and np.array_equal(self.cells, other.cells)

    def __hash__(self):
        return hash((type(self).__name__, self.part_sizes, self.cells.tobytes()))


class KPartiteHypergraph(_CellBox):
    def __init__(self, cells):
        """
        Parameters:
            cells (array-like): Boolean array of shape (n_1, ..., n_k); entry
                                (i_1, ..., i_k) is True iff that tuple is an edge.
        """
        cells = np.asarray(cells, dtype=bool)
        if cells.ndim < 2:
            raise ParameterError(f"Uniformity must be at least 2, got {cells.ndim}.")
        super().__init__(cells)

    @classmethod
    def from_edges(cls, part_sizes, edges):
        part_sizes = tuple(int(s) for s in part_sizes)
        cells = np.zeros(part_sizes, dtype=bool)
        edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, len(part_sizes))
        if edges.size:
            if (edges < 0).any() or (edges >= np.asarray(part_sizes)).any():
                raise PartitionError(f"Edge coordinate out of range for parts {part_sizes}.")
            cells[tuple(edges.T)] = True
        return cls(cells)

    @classmethod
    def empty(cls, part_sizes):
        return cls(np.zeros(tuple(part_sizes), dtype=bool))

    @classmethod
    def complete(cls, part_sizes):
        return cls(np.ones(tuple(part_sizes), dtype=bool))

    def edges(self):
        """Edges as an (|E|, k) array in row-major order."""
        return np.argwhere(self.cells)

    @property
    def edge_count(self):
        return int(np.count_nonzero(self.cells))

    def source_parts(self, target):
        return tuple(p for p in range(self.k) if p != target)

    def source_shape(self, target):
        return tuple(self.part_sizes[p] for p in self.source_parts(target))

    def packed_neighborhoods(self, target=None):
        """
        Packed neighbourhood rows for every (k-1)-tuple of the source parts.

        Parameters:
            target (int): The part neighbourhoods live in (default: the last part).

        Returns:
            numpy.ndarray: uint8 array of shape (N, ceil(n_target / 8)), rows in
                           row-major order of the source parts.
        """
        target = self.k - 1 if target is None else target
        with self._lock:
            packed = self._packed.get(target)
            if packed is None:
                moved = np.moveaxis(self.cells, target, -1)
                rows = moved.reshape(-1, self.part_sizes[target])
                packed = _readonly(np.packbits(rows, axis=1))
                self._packed[target] = packed
        return packed

    def tuple_index(self, e, target=None):
        target = self.k - 1 if target is None else target
        shape = self.source_shape(target)
        if len(e) != len(shape) or any(not 0 <= v < n for v, n in zip(e, shape)):
            raise ParameterError(f"Tuple {tuple(e)} out of range for source parts of shape {shape}.")
        return int(np.ravel_multi_index(tuple(int(v) for v in e), shape))

    def neighborhood(self, e, target=None):
        """
        Vertices v of the target part such that e together with v is an edge.

        Parameters:
            e (tuple): One vertex in each non-target part, in part order.
            target (int): Target part (default: the last part).

        Returns:
            VertexSet: The neighbourhood N(e).
        """
        target = self.k - 1 if target is None else target
        self.tuple_index(e, target)
        index = list(e)
        index.insert(target, slice(None))
        return VertexSet(target, self.cells[tuple(index)])

    def neighborhood_distance(self, e, f, target=None):
        packed = self.packed_neighborhoods(target)
        return int(popcount_distance(packed[self.tuple_index(e, target)], packed[self.tuple_index(f, target)]))

    def link(self, pins):
        """
        The bipartite link of k-2 pinned vertices.

        Parameters:
            pins (sequence): (part, vertex) pairs, one for each of k-2 distinct parts.

        Returns:
            BipartiteGraph: Graph between the two unpinned parts, lower part on the left.
        """
        pins = [(int(p), int(v)) for p, v in pins]
        if len(pins) != self.k - 2:
            raise PartitionError(f"A {self.k}-graph link needs {self.k - 2} pins, got {len(pins)}.")
        parts = [p for p, _ in pins]
        if len(set(parts)) != len(parts):
            raise PartitionError(f"Pins must lie in distinct parts, got parts {parts}.")
        index = [slice(None)] * self.k
        for p, v in pins:
            if not 0 <= p < self.k or not 0 <= v < self.part_sizes[p]:
                raise ParameterError(f"Pin ({p}, {v}) out of range.")
            index[p] = v
        left, right = [p for p in range(self.k) if p not in parts]
        return BipartiteGraph(self.cells[tuple(index)], left_part=left, right_part=right)

    def pin_tuples(self, free_pair):
        """All pin assignments leaving the two parts in ``free_pair`` unpinned."""
        pinned = [p for p in range(self.k) if p not in free_pair]
        for values in itertools.product(*(range(self.part_sizes[p]) for p in pinned)):
            yield tuple(zip(pinned, values))


class WeightedTripartite(_CellBox):
    weighted = True

    def __init__(self, weights):
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim != 3:
            raise ParameterError(f"Weighted tripartite graphs need a 3-d weight array, got {weights.ndim}-d.")
        if not np.isfinite(weights).all() or weights.min(initial=0.0) < 0 or weights.max(initial=0.0) > 1:
            raise ParameterError("Weights must lie in [0, 1].")
        super().__init__(weights)

    @property
    def weights(self):
        return self.cells

    def link(self, part, vertex):
        """Weighted link of a single vertex, as a weighted bipartite graph."""
        index = [slice(None)] * 3
        index[part] = int(vertex)
        left, right = [p for p in range(3) if p != part]
        return WeightedBipartite(self.cells[tuple(index)], left_part=left, right_part=right)


class BipartiteGraph(_CellBox):
    def __init__(self, adjacency, left_part=0, right_part=1):
        adjacency = np.asarray(adjacency, dtype=bool)
        if adjacency.ndim != 2:
            raise ParameterError("Bipartite adjacency must be two-dimensional.")
        super().__init__(adjacency)
        self.left_part = left_part
        self.right_part = right_part

    @classmethod
    def from_edges(cls, n_x, n_y, edges, **kwargs):
        adjacency = np.zeros((n_x, n_y), dtype=bool)
        edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if edges.size:
            adjacency[edges[:, 0], edges[:, 1]] = True
        return cls(adjacency, **kwargs)

    @property
    def adjacency(self):
        return self.cells

    @property
    def n_x(self):
        return self.part_sizes[0]

    @property
    def n_y(self):
        return self.part_sizes[1]

    def degrees(self, side=0):
        return self.cells.sum(axis=1 - side, dtype=np.int64)

    def transpose(self):
        return BipartiteGraph(self.cells.T, left_part=self.right_part, right_part=self.left_part)

    def packed_rows(self):
        with self._lock:
            packed = self._packed.get(0)
            if packed is None:
                packed = _readonly(np.packbits(self.cells, axis=1))
                self._packed[0] = packed
        return packed

    def neighborhood(self, x):
        return VertexSet(self.right_part, self.cells[x])

    def distance_matrix(self, rows=None):
        """|N(x) xor N(x')| for every pair of (selected) left vertices."""
        packed = self.packed_rows()
        if rows is not None:
            packed = packed[np.asarray(rows)]
        return popcount_distance(packed[:, None, :], packed[None, :, :])

    def codegrees(self, side=0):
        """Common neighbours of every pair of vertices on one side."""
        a = self.cells.astype(np.int64)
        return a @ a.T if side == 0 else a.T @ a


class WeightedBipartite(_CellBox):
    weighted = True

    def __init__(self, weights, left_part=0, right_part=1):
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim != 2:
            raise ParameterError("Weighted bipartite graphs need a 2-d weight array.")
        super().__init__(weights)
        self.left_part = left_part
        self.right_part = right_part

    @property
    def weights(self):
        return self.cells


def _subset_indices(box, subsets):
    if len(subsets) != box.k:
        raise ParameterError(f"Expected {box.k} subsets, got {len(subsets)}.")
    indices = []
    for i, (subset, n) in enumerate(zip(subsets, box.part_sizes)):
        mask = subset.mask if isinstance(subset, VertexSet) else np.asarray(subset)
        if mask.dtype != bool:
            full = np.zeros(n, dtype=bool)
            full[mask.astype(np.int64)] = True
            mask = full
        if mask.shape != (n,):
            raise ParameterError(f"Subset for part {i} has length {mask.shape[0]}, part has {n}.")
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            raise EmptySubsetError(i)
        indices.append(idx)
    return indices


def box_sum(box, subsets):
    """Total cell weight of the sub-box, and its number of cells."""
    indices = _subset_indices(box, subsets)
    sub = box.cells[np.ix_(*indices)]
    return float(sub.sum(dtype=np.float64)), math.prod(idx.size for idx in indices)


def density(box, subsets=None):
    """
    Density of a sub-box: total weight divided by the number of cells.

    Parameters:
        box: Any hypergraph, (weighted) bipartite graph or weighted tripartite graph.
        subsets (list): One VertexSet, boolean mask or index array per part
                        (default: every part in full).

    Returns:
        float: The density in [0, 1].
    """
    if subsets is None:
        subsets = box.full_subsets()
    total, cells = box_sum(box, subsets)
    return total / cells


def partite_cover(n_vertices, edges, k=None):
    """
    The k-partite cover of a k-graph on ``range(n_vertices)``.

    Each part is a copy of the vertex set and every ordering of every edge is a
    transversal edge, so the cover has k! edges per input edge.
    """
    edge_sets = []
    for edge in edges:
        edge = tuple(int(v) for v in edge)
        if k is None:
            k = len(edge)
        if len(edge) != k:
            raise PartitionError(f"Edge {edge} has {len(edge)} vertices, expected {k}.")
        if len(set(edge)) != k:
            raise PartitionError(f"Edge {edge} repeats a vertex.")
        if any(not 0 <= v < n_vertices for v in edge):
            raise PartitionError(f"Edge {edge} has a vertex outside 0..{n_vertices - 1}.")
        edge_sets.append(edge)
    if k is None:
        raise ParameterError("Uniformity k is required for an empty edge list.")
    cells = np.zeros((n_vertices,) * k, dtype=bool)
    for edge in set(frozenset(e) for e in edge_sets):
        for order in itertools.permutations(sorted(edge)):
            cells[order] = True
    log.debug("Partite cover of %d edges on %d vertices built", len(edge_sets), n_vertices)
    return KPartiteHypergraph(cells)
