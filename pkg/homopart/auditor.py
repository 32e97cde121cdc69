"""Exact and sampled checks for homogeneity, regularity and VC-dimension."""

import dataclasses
import itertools
import logging
import math

import numpy as np

from .config import get_settings
from .errors import InfeasibleParametersError, ParameterError
from .hypercore import BipartiteGraph, VertexSet, density
from .parallel import parallel_map
from .partitions import LayeredPartition
from .reports import dump_yaml
from .seeding import derive_rng

log = logging.getLogger(__name__)


def block_sums(box, partition):
    """
    Total weight and cell count of every block tuple.

    Returns:
        tuple: Two arrays of shape (c_1 + 1, ..., c_k + 1) indexed by block
               labels, label 0 being the exceptional block of each part.
    """
    partition.check_shape(box.part_sizes)
    sums = box.cells.astype(np.float64)
    for p in partition.parts:
        # Contracting axis 0 each time rotates the label axes into part order.
        sums = np.tensordot(sums, p.indicator(include_exceptional=True), axes=([0], [0]))
    counts = np.ones((), dtype=np.int64)
    for p in partition.parts:
        sizes = np.bincount(p.labels, minlength=p.count + 1)
        counts = np.multiply.outer(counts, sizes)
    return sums, counts


@dataclasses.dataclass(frozen=True, eq=False)
class HomogeneityReport:
    eps: float
    labels: np.ndarray
    densities: np.ndarray
    homogeneous: np.ndarray
    sizes: np.ndarray
    total: int
    weighted: bool = False

    @property
    def mass(self):
        """Number of cells covered by non-homogeneous block tuples."""
        return int(self.sizes[~self.homogeneous].sum())

    @property
    def normalized_mass(self):
        return self.mass / self.total

    @property
    def passed(self):
        return self.mass <= self.eps * self.total

    @property
    def failing(self):
        return [tuple(int(l) for l in row) for row in self.labels[~self.homogeneous]]

    def records(self):
        for row, d, ok in zip(self.labels, self.densities, self.homogeneous):
            yield tuple(int(l) for l in row), float(d), bool(ok)

    def to_dict(self):
        return {
            "kind": "homogeneity",
            "eps": float(self.eps),
            "passed": bool(self.passed),
            "mass": self.mass,
            "normalized_mass": float(self.normalized_mass),
            "tuples": int(self.labels.shape[0]),
            "failing_tuples": len(self.failing),
            "weighted_extension": bool(self.weighted),
        }

    def to_yaml(self, file_path=None, digest=None):
        return dump_yaml(self.to_dict(), file_path, digest)


def is_homogeneous_density(d, eps):
    return (d <= eps) | (d >= 1 - eps)


def homogeneity_audit(box, partition, eps):
    """
    Exact eps-homogeneity audit of a layered partition.

    Every non-empty block tuple is checked, exceptional blocks included. For
    weighted inputs the same density bands are used and the report is marked
    as an extension.

    Parameters:
        box: A KPartiteHypergraph or weighted graph.
        partition (LayeredPartition): One partition per part.
        eps (float): Homogeneity tolerance.

    Returns:
        HomogeneityReport
    """
    sums, counts = block_sums(box, partition)
    nonempty = counts > 0
    labels = np.argwhere(nonempty)
    sizes = counts[nonempty]
    densities = sums[nonempty] / sizes
    report = HomogeneityReport(
        eps=float(eps),
        labels=labels,
        densities=densities,
        homogeneous=is_homogeneous_density(densities, eps),
        sizes=sizes,
        total=box.total_cells,
        weighted=bool(box.weighted),
    )
    log.debug("Homogeneity audit at eps=%g: mass %d of %d", eps, report.mass, report.total)
    return report


def general_homogeneity_audit(cover, partition, eps):
    """
    Audit a partition of V(H) on the partite cover of H.

    The same partition is applied to every part, so block tuples that repeat a
    block are audited too.
    """
    layered = LayeredPartition([partition.with_part(i) for i in range(cover.k)])
    return homogeneity_audit(cover, layered, eps)


@dataclasses.dataclass(frozen=True)
class DisagreementCounts:
    regular: tuple
    exceptional: tuple

    @property
    def total(self):
        return sum(self.regular)

    def to_dict(self):
        return {"regular": [int(t) for t in self.regular], "exceptional": [int(t) for t in self.exceptional]}


def disagreement_pairs(H, partition):
    """
    Count ordered pairs (edge, non-edge) differing in one coordinate inside one block.

    For coordinate i, T_i counts pairs that agree outside coordinate i and whose
    i-th vertices share a regular block of part i. Pairs inside the exceptional
    block of part i are counted separately.

    Returns:
        DisagreementCounts: T_1..T_k over regular blocks and over exceptional blocks.
    """
    partition.check_shape(H.part_sizes)
    regular, exceptional = [], []
    cells = H.cells.astype(np.int64)
    for i, p in enumerate(partition.parts):
        indicator = p.indicator(include_exceptional=True).astype(np.int64)
        edges = np.tensordot(np.moveaxis(cells, i, -1), indicator, axes=([-1], [0]))
        sizes = indicator.sum(axis=0)
        pairs = edges * (sizes - edges)
        exceptional.append(int(pairs[..., 0].sum()))
        regular.append(int(pairs[..., 1:].sum()))
    return DisagreementCounts(tuple(regular), tuple(exceptional))


def disagreement_threshold(eps, n, k, s):
    """Pairs guaranteed to exist when an s-equipartition is not eps-homogeneous."""
    return eps ** 2 * (1 - eps) * n ** (k + 1) / s


def coordinate_disagreement_bound(eps, n, k, s):
    """Upper bound on each T_i for the partition built by the homogenizer."""
    return eps ** 2 / (2 * k) * n ** (k + 1) / s


@dataclasses.dataclass(frozen=True, eq=False)
class RegularityWitness:
    found: bool
    eps: float
    mode: str
    outer: float
    subsets: tuple = None
    inner: float = None
    deviation: float = None
    evaluated: int = 0
    budget: int = None

    @property
    def conclusive(self):
        """A found witness always decides; a miss decides only in exact mode."""
        return self.found or self.mode == "exact"

    def to_dict(self):
        data = {
            "found": bool(self.found),
            "mode": self.mode,
            "eps": float(self.eps),
            "outer": float(self.outer),
            "evaluated": int(self.evaluated),
            "budget": self.budget,
            "conclusive": bool(self.conclusive),
        }
        if self.found:
            data.update(
                inner=float(self.inner),
                deviation=float(self.deviation),
                subsets=[[int(v) for v in s] for s in self.subsets],
            )
        return data

    def to_yaml(self, file_path=None, digest=None):
        return dump_yaml(self.to_dict(), file_path, digest)


def _block_indices(box, blocks):
    if blocks is None:
        return [np.arange(n) for n in box.part_sizes]
    indices = []
    for block, n in zip(blocks, box.part_sizes):
        if isinstance(block, VertexSet):
            indices.append(block.indices)
        else:
            block = np.asarray(block)
            indices.append(np.flatnonzero(block) if block.dtype == bool else np.sort(block.astype(np.int64)))
    return indices


def _min_sizes(indices, eps):
    return [max(1, math.ceil(eps * idx.size - 1e-12)) for idx in indices]


def _subset_matrix(size, minimum):
    codes = np.arange(1 << size, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(size)) & 1).astype(np.float64)
    return bits[bits.sum(axis=1) >= minimum]


def _expand(subsets, indices):
    return tuple(np.asarray(idx[s], dtype=np.int64) for s, idx in zip(subsets, indices))


def _witness_from(box, indices, subsets, outer, eps, mode, evaluated, budget):
    chosen = _expand(subsets, indices)
    inner = density(box, [VertexSet.from_indices(p, n, c) for p, (n, c) in enumerate(zip(box.part_sizes, chosen))])
    deviation = abs(inner - outer)
    if deviation <= eps:
        return None
    return RegularityWitness(True, float(eps), mode, outer, chosen, inner, deviation, evaluated, budget)


def _exact_search(box, indices, eps, cap):
    k = box.k
    free = int(np.argmax([idx.size for idx in indices]))
    enumerated = [p for p in range(k) if p != free]
    total = sum(indices[p].size for p in enumerated)
    if total > cap:
        raise InfeasibleParametersError(
            f"Exact witness search enumerates {total} vertices, above the cap of {cap}; use sampled mode."
        )
    sub = box.cells[np.ix_(*indices)].astype(np.float64)
    sub = np.moveaxis(sub, free, -1)
    minimums = _min_sizes(indices, eps)
    z_min = minimums[free]
    z_size = indices[free].size
    outer = float(sub.sum() / sub.size)
    matrices = [_subset_matrix(indices[p].size, minimums[p]) for p in enumerated]
    tail = [m.shape[0] for m in matrices[1:]]
    chunk = max(1, (1 << 22) // max(1, math.prod(tail) * z_size))

    best, evaluated = None, 0
    first = matrices[0]
    for start in range(0, first.shape[0], chunk):
        block = first[start:start + chunk]
        contrib = np.tensordot(block, sub, axes=([1], [0]))
        sizes = block.sum(axis=1)
        for matrix in matrices[1:]:
            contrib = np.moveaxis(np.tensordot(contrib, matrix, axes=([1], [1])), -1, 1)
            contrib = np.moveaxis(contrib, 1, -2)
            sizes = np.multiply.outer(sizes, matrix.sum(axis=1))
        # contrib now has shape (chunk, *tail, z_size); sizes has shape (chunk, *tail).
        ordered = np.sort(contrib, axis=-1)
        high = ordered[..., z_size - z_min:].sum(axis=-1) / (sizes * z_min)
        low = ordered[..., :z_min].sum(axis=-1) / (sizes * z_min)
        deviation = np.maximum(high - outer, outer - low)
        evaluated += deviation.size
        flat = int(np.argmax(deviation))
        if deviation.flat[flat] > eps and (best is None or deviation.flat[flat] > best[0]):
            position = np.unravel_index(flat, deviation.shape)
            best = (float(deviation.flat[flat]), start + position[0], position[1:], high[position] - outer >= outer - low[position])
    if best is None:
        return None, outer, evaluated

    _, row, rest, upper = best
    picks = [first[row]] + [m[r] for m, r in zip(matrices[1:], rest)]
    vec = np.tensordot(picks[0], sub, axes=([0], [0]))
    for pick in picks[1:]:
        vec = np.tensordot(pick, vec, axes=([0], [0]))
    order = np.argsort(vec, kind="stable")
    z_pick = order[z_size - z_min:] if upper else order[:z_min]
    subsets = [None] * k
    for p, pick in zip(enumerated, picks):
        subsets[p] = np.flatnonzero(pick > 0)
    subsets[free] = np.sort(z_pick)
    return subsets, outer, evaluated


def _sampled_search(box, indices, eps, budget, batch, seed):
    k = box.k
    sub = box.cells[np.ix_(*indices)].astype(np.float64)
    outer = float(sub.sum() / sub.size)
    minimums = _min_sizes(indices, eps)
    p_in = max(eps, 0.5)
    evaluated = 0
    for b in range(math.ceil(budget / batch)):
        rng = derive_rng(seed, "witness", b)
        draws = min(batch, budget - b * batch)
        masks = [rng.random((draws, idx.size)) < p_in for idx in indices]
        keep = np.ones(draws, dtype=bool)
        for mask, minimum in zip(masks, minimums):
            keep &= mask.sum(axis=1) >= minimum
        evaluated += draws
        if not keep.any():
            continue
        masks = [m[keep].astype(np.float64) for m in masks]
        totals = np.tensordot(masks[0], sub, axes=([1], [0]))
        for m in masks[1:]:
            totals = np.einsum("xa...,xa->x...", totals, m)
        sizes = np.prod([m.sum(axis=1) for m in masks], axis=0)
        deviation = np.abs(totals / sizes - outer)
        hit = int(np.argmax(deviation))
        if deviation[hit] > eps:
            subsets = [np.flatnonzero(m[hit] > 0) for m in masks]
            return subsets, outer, evaluated
    return None, outer, evaluated


def weak_regularity_witness(box, blocks=None, eps=0.1, mode="auto", budget=None, seed=0, cap=None):
    """
    Search for sub-blocks whose density deviates from the block density by more than eps.

    Each sub-block must hold at least an eps fraction of its block. Exact mode
    enumerates joint subsets of every block but the largest, whose best subset
    is found in closed form, and decides the question. Sampled mode only ever
    proves irregularity.

    Parameters:
        box: Any hypergraph or (weighted) graph; k = 2 gives the bipartite notion.
        blocks (list): One VertexSet, mask or index array per part (default: full parts).
        eps (float): Regularity tolerance.
        mode (str): "exact", "sampled" or "auto".
        budget (int): Number of sampled subset tuples.
        seed (int): Seed of the sampled search.
        cap (int): Largest number of enumerated vertices in exact mode.

    Returns:
        RegularityWitness
    """
    if not 0 < eps < 1:
        raise ParameterError(f"eps must lie in (0, 1), got {eps}.")
    settings = get_settings()
    cap = settings.exact_subset_cap if cap is None else cap
    budget = settings.witness_budget if budget is None else budget
    indices = _block_indices(box, blocks)
    if any(idx.size == 0 for idx in indices):
        raise ParameterError("Witness search needs non-empty blocks.")
    if mode == "auto":
        enumerated = sum(idx.size for idx in indices) - max(idx.size for idx in indices)
        mode = "exact" if enumerated <= cap else "sampled"

    if mode == "exact":
        subsets, outer, evaluated = _exact_search(box, indices, eps, cap)
        budget = None
    elif mode == "sampled":
        subsets, outer, evaluated = _sampled_search(box, indices, eps, budget, settings.witness_batch, seed)
    else:
        raise ParameterError(f"Unknown witness search mode '{mode}'.")

    if subsets is not None:
        witness = _witness_from(box, indices, subsets, outer, eps, mode, evaluated, budget)
        if witness is not None:
            log.debug("%s witness found with deviation %.6g", mode, witness.deviation)
            return witness
    return RegularityWitness(False, float(eps), mode, outer, evaluated=evaluated, budget=budget)


def bipartite_regularity_witness(graph, blocks=None, delta=0.1, mode="auto", budget=None, seed=0, cap=None):
    """Two-part version of ``weak_regularity_witness`` for (weighted) bipartite graphs."""
    if graph.k != 2:
        raise ParameterError("Bipartite regularity needs a two-part graph.")
    return weak_regularity_witness(graph, blocks, delta, mode, budget, seed, cap)


def verify_witness(box, witness, blocks=None):
    """Recompute a witness from scratch; True iff it reproduces and still deviates."""
    if not witness.found:
        return False
    indices = _block_indices(box, blocks)
    for chosen, idx in zip(witness.subsets, indices):
        if not np.isin(chosen, idx).all() or chosen.size < math.ceil(witness.eps * idx.size - 1e-12):
            return False
    outer = density(box, [VertexSet.from_indices(p, n, idx) for p, (n, idx) in enumerate(zip(box.part_sizes, indices))])
    inner = density(box, [VertexSet.from_indices(p, n, c) for p, (n, c) in enumerate(zip(box.part_sizes, witness.subsets))])
    return inner == witness.inner and outer == witness.outer and abs(inner - outer) > witness.eps


def _as_rows(graph):
    if isinstance(graph, BipartiteGraph):
        return graph.adjacency
    return np.asarray(graph, dtype=bool)


def _shattered_dimension(rows, d_max):
    """Largest d <= d_max such that some d columns are shattered by the rows."""
    n_cols = rows.shape[1]
    shattered = [()]
    best = 0
    for d in range(1, d_max + 1):
        if rows.shape[0] < (1 << d):
            break
        weights = np.left_shift(1, np.arange(d, dtype=np.int64))
        found = []
        for prefix in shattered:
            for c in range((prefix[-1] + 1) if prefix else 0, n_cols):
                cols = prefix + (c,)
                # Every subset of a shattered set is shattered.
                if d > 2 and any(cols[:j] + cols[j + 1:] not in shattered_set for j in range(d - 1)):
                    continue
                signatures = rows[:, cols].astype(np.int64) @ weights
                if np.unique(signatures).size == (1 << d):
                    found.append(cols)
        if not found:
            break
        best = d
        shattered = found
        shattered_set = set(found)
    return best


def vc_dimension_bound(graph, d_max=None):
    """
    VC-dimension of a bipartite graph, capped at ``d_max``.

    Sets are taken on one side and witnesses on the other; both orientations
    are tried.

    Returns:
        tuple: (d, at_least) where ``at_least`` is True when the cap was reached.
    """
    d_max = get_settings().vc_cap if d_max is None else d_max
    rows = _as_rows(graph)
    d = max(_shattered_dimension(rows, d_max), _shattered_dimension(rows.T, d_max))
    return d, d >= d_max


def vc_dimension(graph, d_max=None):
    return vc_dimension_bound(graph, d_max)[0]


def slicewise_vc(H, cap=None, threads=None):
    """Maximum VC-dimension over the links of all (k-2)-tuples of pins."""
    cap = get_settings().vc_cap if cap is None else cap
    pins = [p for pair in itertools.combinations(range(H.k), 2) for p in H.pin_tuples(pair)]
    dims = parallel_map(lambda pin: vc_dimension(H.link(pin), cap), pins, threads)
    return max(dims, default=0)
