"""Homogeneous equipartitions of k-partite k-graphs with well-behaved links.

The pipeline has three layers:

* ``similarity_partition`` turns a homogeneous partition of a bipartite graph
  into equal blocks of vertices with nearly equal neighbourhoods,
* ``tuple_partition`` groups (k-1)-tuples around sampled anchors so that every
  class has nearly equal neighbourhoods in the target part,
* ``homogeneous_partition`` runs the tuple step once per target part and turns
  the class neighbourhoods into an equipartition of every part.

``mode="paper"`` uses the constants of the proofs verbatim, which are far out
of reach at desk scale. ``mode="practical"`` keeps every structural step but
draws anchors adaptively and rounds block sizes.
"""

import dataclasses
import functools
import logging
import math
from fractions import Fraction

import numpy as np

from .auditor import coordinate_disagreement_bound, disagreement_pairs, homogeneity_audit
from .config import get_settings
from .errors import CoverageError, DivisibilityError, InfeasibleParametersError, ParameterError
from .hypercore import popcount_distance
from .parallel import parallel_map
from .partitions import LayeredPartition, PartPartition, common_refinement, equalize
from .reports import dump_yaml
from .seeding import derive_rng

log = logging.getLogger(__name__)

MODES = ("paper", "practical")


def _exact(x):
    return x if isinstance(x, Fraction) else Fraction(str(x))


def _check_mode(mode):
    if mode not in MODES:
        raise ParameterError(f"Unknown mode '{mode}'. Available modes: {MODES}")


def similarity_block_count(gamma, r):
    """q = ceil((1 - gamma) * 3r / gamma)."""
    gamma = _exact(gamma)
    return math.ceil((1 - gamma) * 3 * r / gamma)


def anchor_count(gamma, q, eps, k):
    """Number of anchors (q / gamma)^(k-1) * log(2 / eps), rounded up."""
    return math.ceil(float((Fraction(q) / _exact(gamma)) ** (k - 1)) * math.log(2 / float(eps)))


def excellence_threshold(gamma, n, q, k):
    return (float(gamma) * n / q) ** (k - 1)


@dataclasses.dataclass(frozen=True)
class ToleranceParams:
    """
    Tolerances of the tuple step.

    Parameters:
        eps (float): Neighbourhood tolerance of the tuple classes.
        k (int): Uniformity.
        r (int): Bound on the size of the link partitions.
        mode (str): "paper" or "practical".
        link_eps (float): Link homogeneity used by heuristic oracles in practical
                          mode; paper mode always uses ``gamma_prime``.
    """

    eps: float
    k: int
    r: int
    mode: str = "practical"
    link_eps: float = None

    def __post_init__(self):
        _check_mode(self.mode)
        if not 0 < self.eps < 0.5:
            raise ParameterError(f"eps must lie in (0, 1/2), got {self.eps}.")
        if self.k < 2:
            raise ParameterError(f"k must be at least 2, got {self.k}.")
        if self.r < 1:
            raise ParameterError(f"r must be at least 1, got {self.r}.")

    @property
    def gamma(self):
        return _exact(self.eps) / (6 * self.k)

    @property
    def gamma_prime(self):
        return self.gamma ** 3 / 48

    @property
    def eps_prime(self):
        if self.mode == "practical" and self.link_eps is not None:
            return _exact(self.link_eps)
        return self.gamma_prime

    @property
    def q(self):
        return similarity_block_count(self.gamma, self.r)

    @property
    def anchors(self):
        return anchor_count(self.gamma, self.q, self.eps, self.k)

    def to_dict(self):
        return {
            "eps": float(self.eps),
            "k": self.k,
            "r": self.r,
            "mode": self.mode,
            "gamma": float(self.gamma),
            "gamma_prime": float(self.gamma_prime),
            "eps_prime": float(self.eps_prime),
            "q": self.q,
        }


@dataclasses.dataclass(frozen=True, eq=False)
class SimilarityPartition:
    partition: PartPartition
    gamma: float
    q: int
    m: int
    mode: str
    shortfall: int
    max_intra_distance: int
    input_mass: float
    good_blocks: tuple
    bad_blocks: tuple
    representatives: tuple
    evicted: int

    @property
    def exceptional_size(self):
        return self.partition.exceptional_size

    @property
    def input_homogeneous(self):
        return self.input_mass <= float(_exact(self.gamma) ** 3 / 48)

    @property
    def contract_holds(self):
        n = self.partition.n
        return (
            self.shortfall == 0
            and self.partition.count == self.q
            and bool((self.partition.block_sizes == self.m).all())
            and self.exceptional_size <= float(self.gamma) * n + 1e-9
            and self.max_intra_distance <= float(self.gamma) * n + 1e-9
        )

    def to_dict(self):
        return {
            "gamma": float(self.gamma),
            "q": self.q,
            "m": self.m,
            "mode": self.mode,
            "shortfall": self.shortfall,
            "exceptional": self.exceptional_size,
            "max_intra_distance": self.max_intra_distance,
            "input_mass": float(self.input_mass),
            "good_blocks": list(self.good_blocks),
            "bad_blocks": list(self.bad_blocks),
            "evicted": self.evicted,
            "contract_holds": bool(self.contract_holds),
        }


def _participation(graph, block, threshold, samples, rng):
    """Number of (x', y) with y in N(x) xor N(x') for every x in the block."""
    if block.size <= threshold:
        return graph.distance_matrix(block).sum(axis=1)
    packed = graph.packed_rows()
    partners = block[rng.integers(0, block.size, size=samples)]
    estimate = popcount_distance(packed[block][:, None, :], packed[partners][None, :, :]).sum(axis=1)
    return estimate * (block.size / samples)


def similarity_partition(graph, given_x, given_y, gamma, r, mode="practical", seed=0):
    """
    Equal blocks of left vertices whose neighbourhoods differ by at most gamma * n.

    Parameters:
        graph (BipartiteGraph): The graph; blocks are built on the left side.
        given_x (PartPartition): Homogeneous partition of the left side, at most r blocks.
        given_y (PartPartition): The matching partition of the right side.
        gamma (float): Target tolerance.
        r (int): Bound on the number of left blocks.
        mode (str): "paper" needs gamma * n / (3r) to be an integer.
        seed (int): Seed for sampled participation counts on large blocks.

    Returns:
        SimilarityPartition: Blocks 1..q of size m, the rest in the exceptional block.
    """
    _check_mode(mode)
    settings = get_settings()
    n, n_y = graph.n_x, graph.n_y
    gamma_q = _exact(gamma)
    if given_x.n != n or given_y.n != n_y:
        raise ParameterError("Given partitions do not match the graph's sides.")
    x_blocks = [b for b in given_x.blocks() if b.size] + ([given_x.exceptional] if given_x.exceptional_size else [])
    if len(x_blocks) > r:
        raise ParameterError(f"Given left partition has {len(x_blocks)} blocks, more than r = {r}.")

    m_exact = gamma_q * n / (3 * r)
    if mode == "paper":
        if m_exact.denominator != 1:
            raise DivisibilityError(f"gamma * n / (3r) = {m_exact} is not an integer.")
        m = int(m_exact)
        q = similarity_block_count(gamma_q, r)
    else:
        m = math.floor(m_exact)
        q = math.ceil((1 - gamma_q) * n / m) if m else 0
    if m < 1 or q * m > n:
        raise InfeasibleParametersError(
            f"Block size m = {m_exact} with q = {q} blocks does not fit n = {n}; gamma or r is inconsistent with n."
        )

    # Densities of every (given X block, given Y block) pair at tolerance gamma'.
    gamma_prime = gamma_q ** 3 / 48
    labels = np.zeros(n, dtype=np.int64)
    for label, block in enumerate(x_blocks, start=1):
        labels[block] = label
    x_partition = PartPartition(labels, 0)
    audit = homogeneity_audit(graph, LayeredPartition([x_partition, given_y.with_part(1)]), float(gamma_prime))
    y_sizes = np.bincount(given_y.labels, minlength=given_y.count + 1)
    bad_mass = np.zeros(len(x_blocks) + 1)
    for (lx, ly), ok in zip(audit.labels, audit.homogeneous):
        if not ok:
            bad_mass[lx] += y_sizes[ly]
    limit = gamma_q ** 2 / 16 * n_y
    good = tuple(i for i in range(1, len(x_blocks) + 1) if bad_mass[i] <= limit)
    bad = tuple(i for i in range(1, len(x_blocks) + 1) if bad_mass[i] > limit)

    rng = derive_rng(seed, "participation")
    half = gamma_q * n_y / 2
    chunks, representatives, evicted = [], [], 0
    for label in good:
        block = x_blocks[label - 1]
        participation = _participation(graph, block, settings.pair_sample_threshold, settings.pair_samples, rng)
        rep = int(block[int(np.argmin(participation))])
        representatives.append(rep)
        packed = graph.packed_rows()
        dist = popcount_distance(packed[block], packed[rep])
        keep = block[dist < half]
        evicted += block.size - keep.size
        full = (keep.size // m) * m
        chunks.extend(keep[start:start + m] for start in range(0, full, m))

    shortfall = max(0, q - len(chunks))
    if shortfall:
        log.warning(
            "Similarity partition found %d blocks of size %d, %d short of q = %d; the given partition "
            "is not gamma'-homogeneous enough.", len(chunks), m, shortfall, q,
        )
    out = np.zeros(n, dtype=np.int64)
    for label, chunk in enumerate(chunks[:q], start=1):
        out[chunk] = label
    partition = PartPartition(out, given_x.part)

    max_intra = 0
    for block in partition.blocks():
        if block.size > 1:
            max_intra = max(max_intra, int(graph.distance_matrix(block).max()))
    result = SimilarityPartition(
        partition=partition,
        gamma=float(gamma),
        q=q,
        m=m,
        mode=mode,
        shortfall=shortfall,
        max_intra_distance=max_intra,
        input_mass=audit.normalized_mass,
        good_blocks=good,
        bad_blocks=bad,
        representatives=tuple(representatives),
        evicted=int(evicted),
    )
    if not result.input_homogeneous:
        log.warning("Given partition has non-homogeneous mass %.4g above gamma' = %.4g", audit.normalized_mass, float(gamma_prime))
    log.debug("Similarity partition: q=%d m=%d exceptional=%d evicted=%d", q, m, partition.exceptional_size, evicted)
    return result


@dataclasses.dataclass(frozen=True, eq=False)
class TuplePartition:
    """
    Classes of (k-1)-tuples of the source parts, in row-major tuple order.

    Label 0 marks uncovered tuples; class j >= 1 collects the tuples within
    ``radius`` of anchor j.
    """

    target: int
    source_shape: tuple
    labels: np.ndarray
    anchors: tuple
    anchor_masks: np.ndarray
    radius: int
    eps: float
    mode: str
    anchors_drawn: int

    @property
    def class_count(self):
        return len(self.anchors)

    @property
    def tuple_count(self):
        return self.labels.shape[0]

    @property
    def exceptional_size(self):
        return int(np.count_nonzero(self.labels == 0))

    @property
    def budget(self):
        return self.eps * self.tuple_count

    def members(self, label):
        return np.flatnonzero(self.labels == label)

    def tuple_at(self, index):
        return tuple(int(v) for v in np.unravel_index(index, self.source_shape))

    def class_diameters(self, H, chunk=512):
        """Largest neighbourhood distance inside every class, by full scan."""
        packed = H.packed_neighborhoods(self.target)
        diameters = []
        for label in range(1, self.class_count + 1):
            rows = packed[self.members(label)]
            best = 0
            for start in range(0, rows.shape[0], chunk):
                best = max(best, int(popcount_distance(rows[start:start + chunk, None, :], rows[None, :, :]).max()))
            diameters.append(best)
        return diameters

    def to_dict(self):
        return {
            "target": self.target,
            "classes": self.class_count,
            "exceptional": self.exceptional_size,
            "budget": float(self.budget),
            "radius": self.radius,
            "mode": self.mode,
            "anchors_drawn": self.anchors_drawn,
            "anchors": [list(self.tuple_at(a)) for a in self.anchors],
        }


def _distances_to(packed, anchor_row, chunk, threads):
    starts = range(0, packed.shape[0], chunk)
    parts = parallel_map(lambda s: popcount_distance(packed[s:s + chunk], anchor_row), starts, threads)
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def tuple_partition(H, oracle, params, seed=0, target=None, max_anchors=None, threads=None):
    """
    Partition the (k-1)-tuples of the source parts by their target neighbourhoods.

    Every tuple joins the lowest-index anchor within floor(eps * n / 2) of its
    neighbourhood, so any two tuples of one class differ by at most eps * n.

    Parameters:
        H (KPartiteHypergraph): The hypergraph.
        oracle (LinkPartitionOracle): Link partitions; supplies r when params is None.
        params (ToleranceParams): Tolerances and mode.
        seed (int): Run seed.
        target (int): Target part (default: the last part).
        max_anchors (int): Cap on the number of anchors.
        threads (int): Worker threads for the distance scans.

    Returns:
        TuplePartition
    """
    settings = get_settings()
    target = H.k - 1 if target is None else target
    max_anchors = settings.max_anchors if max_anchors is None else max_anchors
    if params.k != H.k:
        raise ParameterError(f"Parameters are for k = {params.k}, hypergraph has k = {H.k}.")
    packed = H.packed_neighborhoods(target)
    shape = H.source_shape(target)
    total = packed.shape[0]
    n = H.part_sizes[target]
    radius = math.floor(_exact(params.eps) * n / 2)
    budget = params.eps * total
    labels = np.zeros(total, dtype=np.int64)
    anchors, masks = [], []

    def claim(anchor):
        distances = _distances_to(packed, packed[anchor], settings.distance_chunk, threads)
        covered = (distances <= radius) & (labels == 0)
        if covered.any():
            anchors.append(anchor)
            masks.append(H.neighborhood(np.unravel_index(anchor, shape), target).mask)
            labels[covered] = len(anchors)

    if params.mode == "paper":
        t = params.anchors
        if t > max_anchors:
            raise InfeasibleParametersError(
                f"Paper-mode anchor count {t} exceeds the cap of {max_anchors}; use practical mode."
            )
        draws = derive_rng(seed, "anchors", target).integers(0, total, size=t)
        for anchor in draws:
            claim(int(anchor))
        drawn = t
    else:
        drawn = 0
        while np.count_nonzero(labels == 0) > budget and drawn < max_anchors:
            uncovered = np.flatnonzero(labels == 0)
            rng = derive_rng(seed, "anchors", target, drawn)
            claim(int(uncovered[rng.integers(0, uncovered.size)]))
            drawn += 1
            log.debug("Anchor %d placed, %d tuples uncovered", drawn, int(np.count_nonzero(labels == 0)))

    uncovered = int(np.count_nonzero(labels == 0))
    if uncovered > budget:
        raise CoverageError(uncovered, budget, drawn, target)
    anchor_masks = np.stack(masks) if masks else np.zeros((0, n), dtype=bool)
    anchor_masks.setflags(write=False)
    labels.setflags(write=False)
    log.info(
        "Tuple partition of target %d: %d classes from %d anchors, %d of %d tuples uncovered",
        target, len(anchors), drawn, uncovered, total,
    )
    return TuplePartition(target, shape, labels, tuple(anchors), anchor_masks, radius, float(params.eps), params.mode, drawn)


@dataclasses.dataclass(frozen=True)
class TwinDiagnostics:
    gamma: float
    q: int
    threshold: float
    sample: tuple
    good_fraction: tuple
    twin_counts: tuple
    chain_counts: tuple
    infeasible_links: int = 0

    @property
    def excellent_fraction(self):
        if not self.sample:
            return 0.0
        return sum(c >= self.threshold for c in self.chain_counts) / len(self.sample)

    def to_dict(self):
        return {
            "gamma": self.gamma,
            "q": self.q,
            "threshold": self.threshold,
            "good_fraction": list(self.good_fraction),
            "excellent_fraction": self.excellent_fraction,
            "sample": [list(e) for e in self.sample],
            "chain_counts": list(self.chain_counts),
            "infeasible_links": self.infeasible_links,
        }


class TwinStructure:
    """Lazily computed similarity partitions of every link touching the target part."""

    def __init__(self, H, oracle, gamma, r, target=None, mode="practical", seed=0):
        self.H = H
        self.oracle = oracle
        self.gamma = gamma
        self.r = r
        self.target = H.k - 1 if target is None else target
        self.mode = mode
        self.seed = seed
        self.sources = H.source_parts(self.target)
        self._cache = {}
        self.infeasible = set()

    def similarity(self, i, e):
        """Similarity partition of source coordinate i for the pins of tuple e."""
        part = self.sources[i]
        pins = tuple((p, int(v)) for j, (p, v) in enumerate(zip(self.sources, e)) if j != i)
        if pins not in self._cache:
            graph = self.H.link(pins)
            if graph.left_part != part:
                graph = graph.transpose()
            given_x = self.oracle.partition(pins, part)
            given_y = self.oracle.partition(pins, self.target)
            try:
                self._cache[pins] = similarity_partition(
                    graph, given_x.with_part(0), given_y.with_part(1), self.gamma, self.r, self.mode, self.seed
                )
            except (InfeasibleParametersError, DivisibilityError):
                # No block size fits gamma n / (3r) on this link: no twins.
                self._cache[pins] = None
                self.infeasible.add(pins)
        return self._cache[pins]

    def twins(self, i, e):
        """Values at coordinate i of the i-twins of e, or an empty array when e is i-bad."""
        similarity = self.similarity(i, e)
        if similarity is None:
            return np.zeros(0, dtype=np.int64)
        labels = similarity.partition.labels
        label = labels[e[i]]
        if label == 0:
            return np.zeros(0, dtype=np.int64)
        return np.flatnonzero(labels == label)

    def chain_count(self, e):
        """Number of e_1 joined to e by a chain of 1-, 2-, ..., (k-1)-twins."""

        @functools.lru_cache(maxsize=None)
        def count(i, current):
            if i < 0:
                return 1
            total = 0
            for y in self.twins(i, current):
                step = list(current)
                step[i] = int(y)
                total += count(i - 1, tuple(step))
            return total

        return count(len(self.sources) - 1, tuple(int(v) for v in e))


def twin_diagnostics(H, oracle, params, sample=64, target=None, seed=0, gamma=None):
    """
    Twin statistics of sampled tuples.

    Parameters:
        sample (int or list): Number of tuples to draw, or explicit tuples.
        gamma (float): Override of params.gamma.

    Returns:
        TwinDiagnostics
    """
    gamma = params.gamma if gamma is None else _exact(gamma)
    structure = TwinStructure(H, oracle, gamma, params.r, target, params.mode, seed)
    shape = H.source_shape(structure.target)
    if isinstance(sample, int):
        rng = derive_rng(seed, "twins")
        flat = rng.integers(0, math.prod(shape), size=sample)
        sample = [tuple(int(v) for v in np.unravel_index(f, shape)) for f in flat]
    sample = tuple(tuple(int(v) for v in e) for e in sample)

    good = np.zeros(len(shape))
    twin_counts, chain_counts = [], []
    q = None
    for e in sample:
        counts = []
        for i in range(len(shape)):
            twins = structure.twins(i, e)
            similarity = structure.similarity(i, e)
            if similarity is not None:
                q = similarity.q
            counts.append(int(twins.size))
            good[i] += twins.size > 0
        twin_counts.append(tuple(counts))
        chain_counts.append(structure.chain_count(e))
    if structure.infeasible:
        log.warning(
            "%d links are too small for similarity blocks at gamma = %.4g; their tuples have no twins.",
            len(structure.infeasible), float(gamma),
        )
    n = H.part_sizes[structure.target]
    q = q if q is not None else similarity_block_count(gamma, params.r)
    return TwinDiagnostics(
        gamma=float(gamma),
        q=q,
        threshold=excellence_threshold(gamma, n, q, H.k),
        sample=sample,
        good_fraction=tuple(float(g / len(sample)) if sample else 0.0 for g in good),
        twin_counts=tuple(twin_counts),
        chain_counts=tuple(chain_counts),
        infeasible_links=len(structure.infeasible),
    )


@dataclasses.dataclass(frozen=True, eq=False)
class HomogeneousResult:
    partition: LayeredPartition
    eps: float
    mode: str
    tuple_partitions: tuple
    atoms: tuple
    p: tuple
    m: tuple
    block_size_override: bool

    @property
    def budgets(self):
        """s = 8kp / eps^2 per part."""
        k = self.partition.k
        return tuple(8 * k * p / self.eps ** 2 for p in self.p)

    @property
    def within_budget(self):
        return all(c <= s for c, s in zip(self.partition.block_counts, self.budgets))

    def audit(self, H, eps=None):
        return homogeneity_audit(H, self.partition, self.eps if eps is None else eps)

    def disagreement_report(self, H):
        counts = disagreement_pairs(H, self.partition)
        n = max(H.part_sizes)
        bounds = [coordinate_disagreement_bound(self.eps, n, H.k, s) for s in self.budgets]
        return {"counts": counts.to_dict(), "coordinate_bounds": bounds}

    def to_dict(self):
        return {
            "eps": float(self.eps),
            "mode": self.mode,
            "block_counts": list(self.partition.block_counts),
            "exceptional": [p.exceptional_size for p in self.partition],
            "atoms": list(self.atoms),
            "p": list(self.p),
            "m": list(self.m),
            "budgets": [float(s) for s in self.budgets],
            "within_budget": bool(self.within_budget),
            "block_size_override": self.block_size_override,
            "tuple_partitions": [t.to_dict() for t in self.tuple_partitions],
        }

    def to_yaml(self, file_path=None, digest=None):
        return dump_yaml(self.to_dict(), file_path, digest)


def homogeneous_partition(H, oracle, eps, seed=0, mode="practical", block_size=None, max_anchors=None, threads=None):
    """
    An eps-homogeneous equipartition of every part of H.

    Each part takes the target role once; the tuple step runs at eps^2 / (8k),
    the neighbourhoods of one member per class are refined into Venn atoms and
    the atoms are equalized at m = eps^2 n / (8kp).

    Parameters:
        H (KPartiteHypergraph): The hypergraph.
        oracle (LinkPartitionOracle): Link partitions of size at most ``oracle.r``.
        eps (float): Target homogeneity in (0, 1/2).
        seed (int): Run seed.
        mode (str): "paper" or "practical".
        block_size (int): Replaces the computed m in every part.
        max_anchors (int): Cap on anchors per target part.
        threads (int): Worker threads.

    Returns:
        HomogeneousResult
    """
    _check_mode(mode)
    if not 0 < eps < 0.5:
        raise ParameterError(f"eps must lie in (0, 1/2), got {eps}.")
    k = H.k
    inner = ToleranceParams(float(_exact(eps) ** 2 / (8 * k)), k, oracle.r, mode)
    log.info("Homogenizing %s at eps=%g (inner %.4g, r=%d, mode=%s)", H.part_sizes, eps, inner.eps, oracle.r, mode)

    parts, tuple_parts, atoms, ps, ms = [], [], [], [], []
    for target in range(k):
        tp = tuple_partition(H, oracle, inner, seed, target, max_anchors, threads)
        n = H.part_sizes[target]
        sets = []
        for label in range(1, tp.class_count + 1):
            representative = tp.tuple_at(int(tp.members(label)[0]))
            sets.append(H.neighborhood(representative, target))
        refined = common_refinement(n, sets, part=target)
        p = 2 ** tp.class_count if mode == "paper" else refined.count
        if block_size is not None:
            m = int(block_size)
        elif mode == "paper":
            m_exact = _exact(eps) ** 2 * n / (8 * k * p)
            if m_exact.denominator != 1 or m_exact < 1:
                raise DivisibilityError(f"Paper-mode block size eps^2 n / (8kp) = {float(m_exact):.4g} is not a positive integer.")
            m = int(m_exact)
        else:
            m = max(1, math.floor(_exact(eps) ** 2 * n / (8 * k * p)))
        parts.append(equalize(refined, m, mode))
        tuple_parts.append(tp)
        atoms.append(refined.count)
        ps.append(p)
        ms.append(m)
        log.info("Part %d: %d classes, %d atoms, block size %d", target, tp.class_count, refined.count, m)

    return HomogeneousResult(
        partition=LayeredPartition(parts),
        eps=float(eps),
        mode=mode,
        tuple_partitions=tuple(tuple_parts),
        atoms=tuple(atoms),
        p=tuple(ps),
        m=tuple(ms),
        block_size_override=block_size is not None,
    )
