"""Partition algebra on a single part: refinements, equalizing and beta-refinement.

Label 0 is always the exceptional block (possibly empty); labels 1..c are the
regular blocks and are all non-empty.
"""

import dataclasses
import logging

import numpy as np

from .errors import DivisibilityError, ParameterError, PartitionError
from .reports import dump_yaml

log = logging.getLogger(__name__)


class PartPartition:
    def __init__(self, labels, part=0):
        """
        Parameters:
            labels (array-like): Block label per vertex; 0 marks the exceptional block.
            part (int): Index of the part this partition lives on.
        """
        labels = np.array(labels, dtype=np.int64).reshape(-1)
        if labels.size and labels.min() < 0:
            raise PartitionError("Block labels must be non-negative.")
        count = int(labels.max(initial=0))
        present = np.bincount(labels, minlength=count + 1)
        if count and (present[1:] == 0).any():
            missing = (np.flatnonzero(present[1:] == 0) + 1).tolist()
            raise PartitionError(f"Regular block labels must be contiguous; labels {missing} are unused.")
        labels.setflags(write=False)
        self.labels = labels
        self.part = int(part)
        self.count = count
        self._sizes = present

    @classmethod
    def from_blocks(cls, n, blocks, part=0, exceptional=()):
        labels = np.zeros(n, dtype=np.int64)
        seen = np.zeros(n, dtype=bool)
        for label, block in enumerate(list(blocks) + [exceptional]):
            block = np.asarray(list(block), dtype=np.int64)
            if seen[block].any():
                raise PartitionError("Blocks overlap.")
            seen[block] = True
            labels[block] = label + 1 if label < len(blocks) else 0
        if not seen.all():
            raise PartitionError(f"Blocks leave {int((~seen).sum())} vertices uncovered.")
        return cls(labels, part)

    @classmethod
    def trivial(cls, n, part=0):
        return cls(np.ones(n, dtype=np.int64), part)

    @classmethod
    def singletons(cls, n, part=0):
        return cls(np.arange(1, n + 1), part)

    @property
    def n(self):
        return self.labels.shape[0]

    @property
    def exceptional(self):
        return np.flatnonzero(self.labels == 0)

    @property
    def exceptional_size(self):
        return int(self._sizes[0])

    @property
    def block_sizes(self):
        """Sizes of the regular blocks 1..c."""
        return self._sizes[1:].copy()

    @property
    def block_count(self):
        """Number of non-empty blocks, the exceptional block included."""
        return self.count + (1 if self.exceptional_size else 0)

    def block(self, label):
        return np.flatnonzero(self.labels == label)

    def blocks(self):
        order = np.argsort(self.labels, kind="stable")
        bounds = np.cumsum(self._sizes)
        return np.split(order, bounds[:-1])[1:]

    def is_equitable(self):
        sizes = self.block_sizes
        return sizes.size == 0 or bool((sizes == sizes[0]).all())

    def indicator(self, include_exceptional=False):
        """
        Block membership matrix.

        Returns:
            numpy.ndarray: (n, c) float array, or (n, c + 1) with the exceptional
                           block as column 0 when ``include_exceptional`` is set.
        """
        if include_exceptional:
            return (self.labels[:, None] == np.arange(self.count + 1)[None, :]).astype(np.float64)
        return (self.labels[:, None] == np.arange(1, self.count + 1)[None, :]).astype(np.float64)

    def with_part(self, part):
        return PartPartition(self.labels, part)

    def __eq__(self, other):
        return isinstance(other, PartPartition) and self.part == other.part and np.array_equal(self.labels, other.labels)

    def __hash__(self):
        return hash((self.part, self.labels.tobytes()))

    def __repr__(self):
        return f"PartPartition(part={self.part}, n={self.n}, blocks={self.count}, exceptional={self.exceptional_size})"


class LayeredPartition:
    def __init__(self, parts):
        parts = list(parts)
        indices = sorted(p.part for p in parts)
        if indices != list(range(len(parts))):
            raise PartitionError(f"Layered partitions need parts 0..{len(parts) - 1} once each, got {indices}.")
        self.parts = sorted(parts, key=lambda p: p.part)

    @classmethod
    def from_labels(cls, labels):
        return cls([PartPartition(l, part=i) for i, l in enumerate(labels)])

    @property
    def k(self):
        return len(self.parts)

    @property
    def sizes(self):
        return tuple(p.n for p in self.parts)

    @property
    def block_counts(self):
        return tuple(p.count for p in self.parts)

    def __getitem__(self, i):
        return self.parts[i]

    def __iter__(self):
        return iter(self.parts)

    def __len__(self):
        return len(self.parts)

    def __eq__(self, other):
        return isinstance(other, LayeredPartition) and self.parts == other.parts

    def __hash__(self):
        return hash(tuple(self.parts))

    def check_shape(self, part_sizes):
        if self.sizes != tuple(part_sizes):
            raise PartitionError(f"Partition sizes {self.sizes} do not match parts {tuple(part_sizes)}.")


def _label_atoms(signatures, part):
    """Label rows of ``signatures`` 1..c by first occurrence."""
    if signatures.shape[0] == 0:
        return PartPartition(np.zeros(0, dtype=np.int64), part)
    _, first, inverse = np.unique(signatures, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(1, first.size + 1)
    return PartPartition(rank[inverse], part)


def common_refinement(n, sets, part=0):
    """
    Venn atoms of a family of subsets of one part.

    Parameters:
        n (int): Size of the universe.
        sets (list): VertexSets or boolean masks over ``range(n)``.

    Returns:
        PartPartition: Non-empty atoms labelled 1..c in order of their first
                       vertex; no exceptional block.
    """
    masks = []
    for s in sets:
        mask = np.asarray(getattr(s, "mask", s), dtype=bool)
        if mask.shape != (n,):
            raise PartitionError(f"Set of length {mask.shape[0]} does not live on a universe of size {n}.")
        masks.append(mask)
    if not masks:
        return PartPartition.trivial(n, part)
    signatures = np.packbits(np.stack(masks, axis=1), axis=1)
    return _label_atoms(signatures, part)


def refine_partitions(partitions, part=0):
    """Common refinement of partitions of one universe; every label is a block."""
    partitions = list(partitions)
    n = partitions[0].n
    if any(p.n != n for p in partitions):
        raise PartitionError("Partitions live on universes of different sizes.")
    return _label_atoms(np.stack([p.labels for p in partitions], axis=1), part)


def collapse_layers(layered):
    """Common refinement of all parts of a partition of a partite cover."""
    return refine_partitions(layered.parts, part=0)


def equalize(partition, m, mode="practical"):
    """
    Split every block into pieces of exactly ``m`` vertices.

    Leftovers of each block and the old exceptional block are pooled in label
    order and cut into further blocks of size ``m``; what remains becomes the
    new exceptional block.

    Parameters:
        partition (PartPartition): Partition to equalize.
        m (int): Target block size.
        mode (str): "practical" keeps a remainder, "paper" requires there is none.

    Returns:
        PartPartition: An equitable partition with blocks of size ``m``.
    """
    m = int(m)
    if m < 1:
        raise ParameterError(f"Block size must be at least 1, got {m}.")
    if m > partition.n:
        raise ParameterError(f"Block size {m} exceeds the part size {partition.n}.")
    labels = np.zeros(partition.n, dtype=np.int64)
    pool = [partition.exceptional]
    next_label = 1
    for block in partition.blocks():
        full = (block.size // m) * m
        for start in range(0, full, m):
            labels[block[start:start + m]] = next_label
            next_label += 1
        pool.append(block[full:])
    pool = np.concatenate(pool)
    full = (pool.size // m) * m
    for start in range(0, full, m):
        labels[pool[start:start + m]] = next_label
        next_label += 1
    remainder = pool.size - full
    if remainder and mode == "paper":
        raise DivisibilityError(f"Equalizing at block size {m} leaves a remainder of {remainder}.")
    log.debug("Equalized part %d at m=%d: %d blocks, remainder %d", partition.part, m, next_label - 1, remainder)
    return PartPartition(labels, partition.part)


@dataclasses.dataclass(frozen=True)
class RefinementReport:
    beta: float
    fine_labels: tuple
    parents: tuple
    unmatched: int
    block_count: int

    @property
    def unmatched_fraction(self):
        return self.unmatched / self.block_count if self.block_count else 0.0

    @property
    def refines(self):
        return self.unmatched <= self.beta * self.block_count

    def parent_of(self, label):
        return self.parents[self.fine_labels.index(label)]

    def to_dict(self):
        return {
            "beta": float(self.beta),
            "refines": bool(self.refines),
            "unmatched": int(self.unmatched),
            "block_count": int(self.block_count),
            "unmatched_fraction": float(self.unmatched_fraction),
            "parents": {int(f): (None if p is None else int(p)) for f, p in zip(self.fine_labels, self.parents)},
        }

    def to_yaml(self, file_path=None, digest=None):
        return dump_yaml(self.to_dict(), file_path, digest)


def beta_refines(fine, coarse, beta):
    """
    Test whether ``fine`` beta-refines ``coarse``.

    A fine block P has parent A when |P & A| >= (1 - beta)|P|. Every non-empty
    label, the exceptional one included, counts as a block.

    Parameters:
        fine (PartPartition): The candidate refinement.
        coarse (PartPartition): The partition being refined.
        beta (float): Tolerance in [0, 1/2).

    Returns:
        RefinementReport: Parents per fine block and the overall verdict.
    """
    if not 0 <= beta < 0.5:
        raise ParameterError(f"beta must lie in [0, 1/2), got {beta}.")
    if fine.n != coarse.n:
        raise PartitionError(f"Universes differ: {fine.n} vs {coarse.n}.")
    table = np.zeros((fine.count + 1, coarse.count + 1), dtype=np.int64)
    np.add.at(table, (fine.labels, coarse.labels), 1)
    sizes = table.sum(axis=1)
    fine_labels = tuple(int(l) for l in np.flatnonzero(sizes))
    parents = []
    for label in fine_labels:
        best = int(np.argmax(table[label]))
        parents.append(best if table[label, best] >= (1 - beta) * sizes[label] else None)
    unmatched = sum(p is None for p in parents)
    return RefinementReport(float(beta), fine_labels, tuple(parents), unmatched, len(fine_labels))
