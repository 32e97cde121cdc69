"""A weighted 3-graph whose links are all regular but which is hard to regularize.

The construction overlays t bipartite graphs G_1..G_t on A x B, each built
from a family of nearly orthogonal partitions, and puts G_r on the layer C_r
of C with weight 2^-r. Besides building it, this module certifies small
regular partitions of every link, audits the quasirandomness of the G_r,
follows the refinement cascade that forces any weakly regular partition to be
large, and samples an unweighted 3-graph from the weights.
"""

import dataclasses
import decimal
import logging
import math
from fractions import Fraction

import numpy as np
from scipy import stats

from .auditor import verify_witness, weak_regularity_witness, RegularityWitness
from .config import get_settings
from .errors import DivisibilityError, GenerationError, InfeasibleParametersError, ParameterError, VerificationError
from .hypercore import BipartiteGraph, KPartiteHypergraph, VertexSet, WeightedTripartite, density
from .partitions import LayeredPartition, PartPartition, beta_refines, common_refinement
from .reports import dump_yaml
from .seeding import derive_rng

log = logging.getLogger(__name__)

MODES = ("paper", "toy")
MAX_GROWTH_ARGUMENT = 10 ** 7


def _exact(x):
    return x if isinstance(x, Fraction) else Fraction(str(x))


def growth_ceiling(m):
    """max(e^(m/16), 2) as a float, or inf when it does not fit."""
    if m / 16 > 700:
        return math.inf
    return max(math.exp(m / 16), 2.0)


def phi(m):
    """max(floor(e^(m/16)), 2), exact for every m the sequence can reach."""
    if m > MAX_GROWTH_ARGUMENT:
        raise InfeasibleParametersError(f"phi({m}) has more digits than can be handled.")
    if m <= 16 * 700:
        return max(math.floor(math.exp(m / 16)), 2)
    context = decimal.Context(prec=int(m / 36) + 30)
    return int((decimal.Decimal(m) / 16).exp(context).to_integral_value(decimal.ROUND_FLOOR))


def derived_layer_count(eps):
    """t = floor(log_7(1/eps) / 4 - 3)."""
    return math.floor(math.log(1 / eps, 7) / 4 - 3 + 1e-9)


def s0_threshold(delta):
    """s_0 = ceil(4 / delta^4)."""
    return math.ceil(4 / _exact(delta) ** 4)


@dataclasses.dataclass(frozen=True)
class GowersParams:
    eps: float
    delta: float
    t: int
    s0: int
    m: tuple
    mode: str
    seed: int = 0
    growth_name: str = "phi"
    relaxations: tuple = ()

    @property
    def ratios(self):
        return tuple(b // a for a, b in zip(self.m, self.m[1:]))

    def beta(self, r):
        return 7 ** r * self.eps ** 0.25

    def to_dict(self):
        return {
            "eps": float(self.eps),
            "delta": float(self.delta),
            "t": self.t,
            "s0": self.s0,
            "m": [int(v) for v in self.m],
            "mode": self.mode,
            "seed": self.seed,
            "growth": self.growth_name,
            "relaxations": list(self.relaxations),
        }


def build_sequence(eps, delta, mode="paper", t=None, growth=None, s0=None, seed=0):
    """
    The layer count t, the threshold s_0 and the sequence m_0 = 1, ..., m_t.

    m_r is m_{r-1} * s_0 when m_{r-1} < s_0 <= growth(m_{r-1}), and
    m_{r-1} * growth(m_{r-1}) otherwise.

    Parameters:
        eps (float): Regularity parameter.
        delta (float): Link regularity, 0 < delta <= eps.
        mode (str): "paper" or "toy".
        t (int): Number of layers; required in toy mode.
        growth (callable): Growth function for toy mode (default phi); must
                           satisfy 2 <= growth(m) <= max(e^(m/16), 2).
        s0 (int): Toy-mode override of s_0.
        seed (int): Seed stored with the parameters.

    Returns:
        GowersParams
    """
    if mode not in MODES:
        raise ParameterError(f"Unknown mode '{mode}'. Available modes: {MODES}")
    if not 0 < delta <= eps < 1:
        raise ParameterError(f"Need 0 < delta <= eps < 1, got delta={delta}, eps={eps}.")
    relaxations = []
    derived_t = derived_layer_count(eps)
    if mode == "paper":
        if t is not None or growth is not None or s0 is not None:
            raise ParameterError("Paper mode derives t, growth and s0; use toy mode to set them.")
        if derived_t < 1:
            raise ParameterError(
                f"eps = {eps} gives t = {derived_t} < 1; paper mode needs eps <= 7^-16. Use toy mode."
            )
        t = derived_t
        s0 = s0_threshold(delta)
    else:
        if t is None or t < 1:
            raise ParameterError("Toy mode needs an explicit t >= 1.")
        if t != derived_t:
            relaxations.append(f"t = {t} set explicitly (derived value {derived_t})")
        if s0 is None:
            s0 = s0_threshold(delta)
        elif s0 != s0_threshold(delta):
            relaxations.append(f"s0 = {s0} set explicitly (derived value {s0_threshold(delta)})")
        if growth is not None:
            relaxations.append(f"growth function {getattr(growth, '__name__', repr(growth))}")
    growth = growth or phi

    m = [1]
    for _ in range(t):
        prev = m[-1]
        step = growth(prev)
        if step < 2 or step > growth_ceiling(prev):
            raise ParameterError(f"growth({prev}) = {step} lies outside [2, max(e^(m/16), 2)].")
        m.append(prev * s0 if prev < s0 <= step else prev * step)
    params = GowersParams(
        eps=float(eps),
        delta=float(delta),
        t=int(t),
        s0=int(s0),
        m=tuple(m),
        mode=mode,
        seed=int(seed),
        growth_name=getattr(growth, "__name__", "custom"),
        relaxations=tuple(relaxations),
    )
    log.info("Sequence for eps=%g delta=%g (%s): t=%d s0=%d m=%s", eps, delta, mode, t, s0, m)
    return params


@dataclasses.dataclass(frozen=True)
class FamilyStatistics:
    m: int
    M: int
    item1_checked: bool
    item1_ok: bool
    size_deviation: float
    intersection_deviation: float
    event_ok: bool
    max_agreement: int
    hypothesis_ok: bool
    item1_union_bound: float
    event_union_bound: float
    item1_exact_tail: float
    event_exact_tail: float

    def to_dict(self):
        return {k: (v.item() if isinstance(v, np.generic) else v) for k, v in dataclasses.asdict(self).items()}


def family_statistics(X):
    """Item 1 bands, agreement counts and failure bounds of a family X (m x M booleans)."""
    m, M = X.shape
    Y = ~X
    band = M ** (2 / 3)
    item1_checked = M >= math.log(4 * m * m) ** 3
    sizes = np.concatenate([X.sum(axis=1), Y.sum(axis=1)])
    size_deviation = float(np.abs(sizes - M / 2).max())
    xi, yi = X.astype(np.int64), Y.astype(np.int64)
    if m > 1:
        off = ~np.eye(m, dtype=bool)
        inter = np.concatenate([(xi @ xi.T)[off], (xi @ yi.T)[off], (yi @ yi.T)[off]])
        intersection_deviation = float(np.abs(inter - M / 4).max())
    else:
        intersection_deviation = 0.0
    item1_ok = size_deviation <= band and intersection_deviation <= band
    if M > 1:
        agreement = xi.T @ xi + yi.T @ yi
        max_agreement = int(agreement[~np.eye(M, dtype=bool)].max())
    else:
        max_agreement = 0
    event_ok = max_agreement <= 3 * m / 4
    lo, hi = math.ceil(M / 2 - band) - 1, math.floor(M / 2 + band)
    return FamilyStatistics(
        m=m,
        M=M,
        item1_checked=bool(item1_checked),
        item1_ok=bool(item1_ok),
        size_deviation=size_deviation,
        intersection_deviation=intersection_deviation,
        event_ok=bool(event_ok),
        max_agreement=max_agreement,
        hypothesis_ok=bool(M <= growth_ceiling(m)),
        item1_union_bound=float(m * m * 2 * math.exp(-2 * M ** (1 / 3))),
        event_union_bound=float(math.comb(M, 2) * math.exp(-m / 8)),
        item1_exact_tail=float(stats.binom.cdf(lo, M, 0.5) + stats.binom.sf(hi, M, 0.5)),
        event_exact_tail=float(stats.binom.sf(math.floor(3 * m / 4), m, 0.5)),
    )


@dataclasses.dataclass(frozen=True, eq=False)
class OrthogonalFamily:
    """Partitions (X_i, Y_i) of range(M), stored as X; Y is its complement."""

    X: np.ndarray
    attempts: int
    statistics: FamilyStatistics

    @property
    def m(self):
        return self.X.shape[0]

    @property
    def M(self):
        return self.X.shape[1]

    @property
    def Y(self):
        return ~self.X

    @property
    def item1_checked(self):
        return self.statistics.item1_checked

    @property
    def event_ok(self):
        return self.statistics.event_ok

    def to_dict(self):
        return {
            "m": self.m,
            "M": self.M,
            "attempts": self.attempts,
            "X": [[int(j) for j in np.flatnonzero(row)] for row in self.X],
            "statistics": self.statistics.to_dict(),
        }


def orthogonal_family(m, M, seed=0, max_attempts=None, level=0):
    """
    Rejection-sample m uniform partitions of range(M).

    A draw is accepted when event A holds (no two elements of range(M) share a
    side in more than 3m/4 partitions) and, when M >= log^3(4m^2), all set
    sizes lie in M/2 +- M^(2/3) and all pairwise intersections in M/4 +- M^(2/3).

    Parameters:
        m (int): Number of partitions.
        M (int): Size of the ground set.
        seed (int): Run seed.
        max_attempts (int): Give up after this many draws.
        level (int): Level index, used to derive independent streams.

    Returns:
        OrthogonalFamily
    """
    if M < 2 or m < 1:
        raise ParameterError(f"Need m >= 1 and M >= 2, got m={m}, M={M}.")
    max_attempts = get_settings().family_attempts if max_attempts is None else max_attempts
    if M > growth_ceiling(m):
        log.warning("M = %d exceeds max(e^(m/16), 2) for m = %d; event A is unlikely to hold", M, m)
    failures = {"item1": 0, "event": 0}
    statistics = None
    for attempt in range(max_attempts):
        X = derive_rng(seed, "family", level, attempt).random((m, M)) < 0.5
        statistics = family_statistics(X)
        item1 = statistics.item1_ok or not statistics.item1_checked
        failures["item1"] += not item1
        failures["event"] += not statistics.event_ok
        if item1 and statistics.event_ok:
            X.setflags(write=False)
            log.debug("Family m=%d M=%d accepted after %d attempts", m, M, attempt + 1)
            return OrthogonalFamily(X, attempt + 1, statistics)
    raise GenerationError(
        f"No family with m={m}, M={M} passed after {max_attempts} attempts "
        f"(item 1 failed {failures['item1']} times, event A failed {failures['event']} times).",
        statistics={"failures": failures, "last": statistics.to_dict() if statistics else None},
    )


@dataclasses.dataclass(frozen=True)
class MarginResult:
    count: int
    required: float
    hypothesis_ok: bool
    violations: tuple

    def to_dict(self):
        return dataclasses.asdict(self)


def item2_margin(family, lam, eps, zeta, eta):
    """
    Count indices i with min(sum of lam over X_i, sum over Y_i) > eps.

    When the hypotheses hold (lam a probability vector with entries at most
    1 - zeta, zeta <= 1/2 and (1 - eta)(1 - 4 eps) >= 1 - zeta + zeta^2) and
    the family satisfies event A, the count is at least eta * m; a smaller
    count raises VerificationError.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape != (family.M,):
        raise ParameterError(f"lambda must have length {family.M}, got {lam.shape}.")
    violations = []
    if (lam < 0).any():
        violations.append("lambda has negative entries")
    if abs(lam.sum() - 1) > 1e-9:
        violations.append(f"lambda sums to {lam.sum():.12g}, not 1")
    if lam.max() > 1 - zeta + 1e-12:
        violations.append(f"max lambda {lam.max():.6g} exceeds 1 - zeta = {1 - zeta:.6g}")
    if not 0 < zeta <= 0.5 or eta <= 0 or eps <= 0:
        violations.append("need 0 < zeta <= 1/2 and eta, eps > 0")
    if (1 - eta) * (1 - 4 * eps) < 1 - zeta + zeta ** 2:
        violations.append("(1 - eta)(1 - 4 eps) < 1 - zeta + zeta^2")

    x_mass = family.X.astype(np.float64) @ lam
    y_mass = family.Y.astype(np.float64) @ lam
    count = int(np.count_nonzero(np.minimum(x_mass, y_mass) > eps))
    required = eta * family.m
    if violations:
        log.warning("item2_margin hypotheses violated: %s", "; ".join(violations))
    elif family.event_ok and count < required - 1e-9:
        raise VerificationError(f"Only {count} indices clear eps = {eps}, fewer than eta * m = {required}.")
    return MarginResult(count, float(required), not violations, tuple(violations))


class IntervalLayering:
    """
    Nested interval partitions of A = B = range(n) and the layers of C.

    ``labels[r]`` gives the 0-based level-r interval of every vertex; interval
    i * M + k of level r is the k-th piece of interval i of level r - 1.
    """

    def __init__(self, n, m, t):
        self.n = int(n)
        self.m = tuple(int(v) for v in m)
        self.t = int(t)
        if self.m[-1] > self.n:
            raise ParameterError(f"n = {n} is smaller than m_t = {self.m[-1]}; intervals would be empty.")
        if self.t > self.n:
            raise ParameterError(f"n = {n} cannot hold {t} layers.")
        labels = [np.zeros(self.n, dtype=np.int64)]
        for r in range(1, len(self.m)):
            M = self.m[r] // self.m[r - 1]
            level = np.empty(self.n, dtype=np.int64)
            for i in range(self.m[r - 1]):
                members = np.flatnonzero(labels[-1] == i)
                for k, piece in enumerate(np.array_split(members, M)):
                    if piece.size == 0:
                        raise ParameterError(f"Interval {i} of level {r - 1} is too short to split into {M} pieces.")
                    level[piece] = i * M + k
            labels.append(level)
        for level in labels:
            level.setflags(write=False)
        self.labels = tuple(labels)
        layer = np.empty(self.n, dtype=np.int64)
        for r, piece in enumerate(np.array_split(np.arange(self.n), self.t), start=1):
            layer[piece] = r
        layer.setflags(write=False)
        self.layer = layer

    @property
    def divisible(self):
        return self.n % self.m[-1] == 0 and self.n % self.t == 0

    def ratio(self, r):
        return self.m[r] // self.m[r - 1]

    def parent(self, r):
        """Level r - 1 interval of every vertex."""
        return self.labels[r - 1]

    def piece(self, r):
        """Position of every vertex's level-r interval inside its parent."""
        return self.labels[r] % self.ratio(r)

    def interval_partition(self, r, part):
        return PartPartition(self.labels[r] + 1, part)

    def layer_partition(self, part=2):
        return PartPartition(self.layer, part)

    def layer_members(self, r):
        return np.flatnonzero(self.layer == r)

    def to_dict(self):
        return {
            "n": self.n,
            "t": self.t,
            "m": list(self.m),
            "divisible": self.divisible,
            "layer_sizes": [int(np.count_nonzero(self.layer == r)) for r in range(1, self.t + 1)],
        }


def level_graph(layering, family, r):
    """
    Adjacency of G_r on A x B.

    a in A_{i,k} and b in B_{j,l} are adjacent iff k in X_j and l in X_i, or
    k in Y_j and l in Y_i.
    """
    i, k = layering.parent(r), layering.piece(r)
    return family.X[i[None, :], k[:, None]] == family.X[i[:, None], k[None, :]]


@dataclasses.dataclass(frozen=True, eq=False)
class GowersConstruction:
    params: GowersParams
    layering: IntervalLayering
    families: tuple
    graphs: tuple
    weights: WeightedTripartite

    @property
    def n(self):
        return self.layering.n

    def graph(self, r):
        return self.graphs[r - 1]

    def layer_of(self, c):
        return int(self.layering.layer[c])

    def metadata(self):
        return {
            "params": self.params.to_dict(),
            "layering": self.layering.to_dict(),
            "families": [f.to_dict() for f in self.families],
        }


def build_weighted(params, n):
    """
    The weighted 3-graph sum over r of 2^-r * (G_r x C_r) on three parts of size n.

    Returns:
        GowersConstruction: Weights, layering, per-level families and graphs.
    """
    layering = IntervalLayering(n, params.m, params.t)
    if not layering.divisible:
        if params.mode == "paper":
            raise DivisibilityError(f"n = {n} must be divisible by m_t = {params.m[-1]} and t = {params.t}.")
        log.info("n = %d is not divisible by m_t = %d or t = %d; intervals differ in length by one", n, params.m[-1], params.t)
        params = dataclasses.replace(params, relaxations=params.relaxations + ("n not divisible by m_t and t",))
    families, graphs = [], []
    weights = np.zeros((n, n, n), dtype=np.float64)
    for r in range(1, params.t + 1):
        family = orthogonal_family(params.m[r - 1], layering.ratio(r), params.seed, level=r)
        graph = level_graph(layering, family, r)
        graph.setflags(write=False)
        weights[:, :, layering.layer_members(r)] = (graph * 2.0 ** -r)[:, :, None]
        families.append(family)
        graphs.append(graph)
        log.debug("Level %d: m=%d M=%d density %.4f", r, family.m, family.M, graph.mean())
    return GowersConstruction(params, layering, tuple(families), tuple(graphs), WeightedTripartite(weights))


def weight_support_ok(construction):
    """Every cell on layer r has weight 0 or 2^-r."""
    w = construction.weights.weights
    layer = construction.layering.layer
    expected = 2.0 ** -layer.astype(np.float64)
    return bool(((w == 0) | (w == expected[None, None, :])).all())


@dataclasses.dataclass(frozen=True, eq=False)
class LinkCertificate:
    part: int
    vertex: int
    kind: str
    partition: LayeredPartition
    size: int
    size_bound: float
    verified: bool
    witness: RegularityWitness = None

    def to_dict(self):
        data = {
            "part": self.part,
            "vertex": self.vertex,
            "kind": self.kind,
            "size": self.size,
            "size_bound": float(self.size_bound),
            "verified": self.verified,
        }
        if self.witness is not None:
            data["witness"] = self.witness.to_dict()
        return data


def block_constant(weights, x_labels, y_labels):
    """True iff every (x block, y block) pair carries a single weight value."""
    shape = (int(x_labels.max()) + 1, int(y_labels.max()) + 1)
    hi = np.full(shape, -np.inf)
    lo = np.full(shape, np.inf)
    rows, cols = x_labels[:, None], y_labels[None, :]
    np.maximum.at(hi, (rows, cols), weights)
    np.minimum.at(lo, (rows, cols), weights)
    seen = np.isfinite(hi)
    return bool((hi[seen] == lo[seen]).all())


def link_certificate(construction, part, vertex, verify=True, budget=None, seed=0):
    """
    A regular partition of the link of one vertex, with its kind.

    * v in C_r with m_{r-1} >= s_0: the trivial partition ("quasirandom"),
      checked by a sampled witness search when ``verify`` is set;
    * v in C_r with m_{r-1} < s_0: the level-r intervals ("constant-boxes");
    * v in A or B: Venn atoms of its neighbourhoods in G_1..G_t against the
      layers of C ("layer-constant").

    The last two kinds are checked exactly: every block pair has one weight.
    """
    params, layering = construction.params, construction.layering
    link = construction.weights.link(part, vertex)
    n = construction.n
    if part == 2:
        r = construction.layer_of(vertex)
        if params.m[r - 1] >= params.s0:
            partition = LayeredPartition([PartPartition.trivial(n, 0), PartPartition.trivial(n, 1)])
            witness = None
            verified = None
            if verify:
                witness = weak_regularity_witness(link, eps=params.delta, mode="sampled", budget=budget, seed=seed)
                verified = not witness.found
            return LinkCertificate(part, vertex, "quasirandom", partition, 1, 1, verified, witness)
        partition = LayeredPartition([layering.interval_partition(r, 0), layering.interval_partition(r, 1)])
        verified = block_constant(link.weights, layering.labels[r], layering.labels[r]) if verify else None
        return LinkCertificate(part, vertex, "constant-boxes", partition, params.m[r], params.s0 ** 2, verified)

    neighbourhoods = [g[vertex] if part == 0 else g[:, vertex] for g in construction.graphs]
    atoms = common_refinement(n, neighbourhoods, part=0)
    layers = layering.layer_partition(part=1)
    partition = LayeredPartition([atoms, layers])
    verified = block_constant(link.weights, atoms.labels, layers.labels) if verify else None
    return LinkCertificate(part, vertex, "layer-constant", partition, atoms.count, 2 ** params.t, verified)


def link_certificates(construction, verify=True, budget=None, seed=0):
    """Certificates for every vertex of every part."""
    return [
        link_certificate(construction, part, v, verify, budget, seed)
        for part in range(3)
        for v in range(construction.n)
    ]


@dataclasses.dataclass(frozen=True)
class QuasirandomReport:
    delta: float
    density: float
    in_regular_range: bool
    degree_offenders: int
    degree_allowance: float
    condition1: bool
    condition2: bool
    condition2_method: str
    worst_codegree: float
    same_block_term: float
    degree_band_ok: bool = None
    codegree_band_ok: bool = None
    worst_offenders: tuple = ()

    @property
    def passed(self):
        return self.condition1 and self.condition2

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_yaml(self, file_path=None, digest=None):
        return dump_yaml(self.to_dict(), file_path, digest)


def _exact_condition2(codegree, d, n, delta, chunk=1 << 16):
    size = codegree.shape[0]
    f = codegree - d * d * n
    minimum = math.ceil(delta * n - 1e-12)
    worst = -math.inf
    for start in range(0, 1 << size, chunk):
        codes = np.arange(start, min(start + chunk, 1 << size), dtype=np.int64)
        S = ((codes[:, None] >> np.arange(size)) & 1).astype(np.float64)
        sizes = S.sum(axis=1)
        keep = sizes >= max(1, minimum)
        if not keep.any():
            continue
        S, sizes = S[keep], sizes[keep]
        totals = np.einsum("si,ij,sj->s", S, f, S)
        worst = max(worst, float((totals / (delta ** 3 / 2 * n * sizes ** 2)).max()))
    return worst < 1, worst


def quasirandomness_audit(graph, delta, coarse=None, M=None, exact_cap=None):
    """
    Check the degree and codegree conditions that make a bipartite graph delta-regular.

    Condition 1 allows at most delta^4 n / 8 vertices x of B with |d(x) - dn| > delta^4 n.
    Condition 2 bounds codegree sums over every B' with |B'| >= delta n; it is
    decided exactly when |B| <= ``exact_cap`` and otherwise through the pointwise
    bound f(x, y) <= delta^3 n / 4 for x, y in different coarse intervals plus
    the same-interval term.

    Parameters:
        graph (array or BipartiteGraph): Adjacency with rows A and columns B.
        delta (float): Regularity parameter.
        coarse (tuple): Level r-1 interval labels of (A, B); singletons by default.
        M (int): Pieces per coarse interval, enabling the 1/2 and 1/4 bands.
        exact_cap (int): Largest |B| decided exactly.

    Returns:
        QuasirandomReport
    """
    adjacency = np.asarray(getattr(graph, "adjacency", graph), dtype=bool)
    exact_cap = get_settings().exact_subset_cap if exact_cap is None else exact_cap
    n_a, n_b = adjacency.shape
    n = n_a
    d = float(adjacency.mean())
    degrees = adjacency.sum(axis=0)
    deviation = np.abs(degrees - d * n)
    offenders = np.flatnonzero(deviation > delta ** 4 * n)
    allowance = delta ** 4 * n / 8
    worst = tuple(int(v) for v in offenders[np.argsort(-deviation[offenders], kind="stable")][:5])
    a_coarse, b_coarse = coarse if coarse is not None else (np.arange(n_a), np.arange(n_b))

    codegree = BipartiteGraph(adjacency).codegrees(side=1)
    f = codegree - d * d * n
    cross = b_coarse[:, None] != b_coarse[None, :]
    worst_codegree = float(f[cross].max()) if cross.any() else -math.inf
    max_block = int(np.bincount(b_coarse).max())
    same_block_term = max_block / (delta ** 4 * n / 4)
    if n_b <= exact_cap:
        condition2, _ = _exact_condition2(codegree.astype(np.float64), d, n, delta)
        method = "exact"
    else:
        condition2 = worst_codegree <= delta ** 3 * n / 4 and same_block_term <= 1
        method = "pointwise-codegree"

    degree_band = codegree_band = None
    if M is not None and coarse is not None:
        tol = M ** (-1 / 3)
        blocks = [np.flatnonzero(a_coarse == i) for i in np.unique(a_coarse)]
        degree_band = codegree_band = True
        for block in blocks:
            part = BipartiteGraph(adjacency[block])
            frac = part.degrees(side=1) / block.size
            degree_band &= bool((np.abs(frac - 0.5) <= tol + 1e-12).all())
            common = part.codegrees(side=1) / block.size
            if cross.any():
                codegree_band &= bool((np.abs(common[cross] - 0.25) <= tol + 1e-12).all())
    return QuasirandomReport(
        delta=float(delta),
        density=d,
        in_regular_range=bool(2 * n ** -0.25 < delta < 1 / 16),
        degree_offenders=int(offenders.size),
        degree_allowance=float(allowance),
        condition1=bool(offenders.size <= allowance),
        condition2=bool(condition2),
        condition2_method=method,
        worst_codegree=worst_codegree,
        same_block_term=float(same_block_term),
        degree_band_ok=degree_band,
        codegree_band_ok=codegree_band,
        worst_offenders=worst,
    )


def level_audit(construction, r, delta=None, exact_cap=None):
    """Quasirandomness audit of G_r against the level r-1 intervals."""
    layering = construction.layering
    coarse = (layering.parent(r), layering.parent(r))
    return quasirandomness_audit(
        construction.graph(r), construction.params.delta if delta is None else delta,
        coarse=coarse, M=layering.ratio(r), exact_cap=exact_cap,
    )


@dataclasses.dataclass(frozen=True, eq=False)
class CascadeWitness:
    side: int
    level: int
    block: int
    parent: int
    h: int
    partner: int
    c_block: int
    gap: float
    gap_verified: bool
    sets: tuple
    regularity: RegularityWitness
    regularity_verified: bool

    def to_dict(self):
        return {
            "side": self.side,
            "level": self.level,
            "block": self.block,
            "parent": self.parent,
            "h": self.h,
            "partner": self.partner,
            "c_block": self.c_block,
            "gap": float(self.gap),
            "gap_verified": self.gap_verified,
            "regularity": self.regularity.to_dict(),
            "regularity_verified": self.regularity_verified,
        }


@dataclasses.dataclass(frozen=True, eq=False)
class CascadeLevel:
    level: int
    beta: float
    clamped: bool
    admissible: bool
    a_report: object
    b_report: object
    min_parts_implied: float
    witnesses: tuple

    @property
    def refines(self):
        return self.a_report.refines and self.b_report.refines

    def to_dict(self):
        return {
            "level": self.level,
            "beta": float(self.beta),
            "clamped": self.clamped,
            "admissible": self.admissible,
            "refines_a": bool(self.a_report.refines),
            "refines_b": bool(self.b_report.refines),
            "unmatched_a": self.a_report.unmatched,
            "unmatched_b": self.b_report.unmatched,
            "min_parts_implied": self.min_parts_implied,
            "witnesses": [w.to_dict() for w in self.witnesses],
        }


@dataclasses.dataclass(frozen=True, eq=False)
class CascadeReport:
    eps: float
    balanced: bool
    levels: tuple

    @property
    def witnesses(self):
        return [w for level in self.levels for w in level.witnesses]

    def to_dict(self):
        return {
            "eps": float(self.eps),
            "balanced": self.balanced,
            "levels": [level.to_dict() for level in self.levels],
        }

    def to_yaml(self, file_path=None, digest=None):
        return dump_yaml(self.to_dict(), file_path, digest)


def cascade_beta(eps, r):
    """beta_r = 7^r eps^(1/4), clamped to 1/72 when it reaches 1/2."""
    beta = 7 ** r * eps ** 0.25
    if beta >= 0.5:
        return 1 / 72, True
    return beta, False


def _balanced(partition):
    sizes = np.concatenate([p.block_sizes for p in partition.parts] + [[p.exceptional_size] for p in partition.parts if p.exceptional_size])
    return bool(sizes.max() <= 2 * sizes.min())


def _extract(construction, candidate, eps, r, side, beta_prev, beta, limit):
    """Irregular triples behind a failed refinement step on one side."""
    layering, family = construction.layering, construction.families[r - 1]
    other = 1 - side
    own, partner_partition, c_partition = candidate[side], candidate[other], candidate[2]
    prev_own = beta_refines(own, layering.interval_partition(r - 1, side), beta_prev)
    prev_other = beta_refines(partner_partition, layering.interval_partition(r - 1, other), beta_prev)
    fine = beta_refines(own, layering.interval_partition(r, side), beta)
    parent, piece = layering.parent(r), layering.piece(r)
    M = layering.ratio(r)
    c_members = layering.layer_members(r)
    found = []
    for s, prev_parent in zip(prev_own.fine_labels, prev_own.parents):
        if len(found) >= limit:
            break
        if s == 0 or prev_parent is None or fine.parent_of(s) is not None:
            continue
        i = prev_parent - 1
        block = own.block(s)
        inside = block[parent[block] == i]
        mu = np.bincount(piece[inside], minlength=M) / block.size
        lam = mu / mu.sum()
        x_mass = family.X.astype(np.float64) @ lam
        y_mass = family.Y.astype(np.float64) @ lam
        for h in np.flatnonzero(np.minimum(x_mass, y_mass) > 2 * eps):
            partners = [u for u, p in zip(prev_other.fine_labels, prev_other.parents) if u and p == h + 1]
            if not partners:
                continue
            u = partners[0]
            q_block = partner_partition.block(u)
            v_x = inside[family.X[h, piece[inside]]]
            v_y = inside[~family.X[h, piece[inside]]]
            in_h = q_block[parent[q_block] == h]
            w_x = in_h[family.X[i, piece[in_h]]]
            w_y = in_h[~family.X[i, piece[in_h]]]
            # (V_X, W_X) and (V_Y, W_Y) are complete in G_r, the crossed pairs empty.
            w, full, empty = (w_x, v_x, v_y) if w_x.size >= w_y.size else (w_y, v_y, v_x)
            for ell in range(1, c_partition.count + 1):
                r_block = c_partition.block(ell)
                z = np.intersect1d(r_block, c_members)
                if z.size < eps * r_block.size or full.size == 0 or empty.size == 0 or w.size == 0:
                    continue
                found.append(_witness(construction, side, r, s, i, h, u, ell, full, empty, w, z, block, q_block, r_block, eps))
                break
            break
    return found


def _triple(side, a_like, b_like, c):
    return (a_like, b_like, c) if side == 0 else (b_like, a_like, c)


def _witness(construction, side, r, s, i, h, u, ell, full, empty, w, z, block, q_block, r_block, eps):
    weights = construction.weights
    n = construction.n

    def d(sets):
        return density(weights, [VertexSet.from_indices(p, n, idx) for p, idx in enumerate(sets)])

    high = d(_triple(side, full, w, z))
    low = d(_triple(side, empty, w, z))
    gap = high - low
    blocks = _triple(side, block, q_block, r_block)
    outer = d(blocks)
    options = [(abs(high - outer), _triple(side, full, w, z), high), (abs(low - outer), _triple(side, empty, w, z), low)]
    deviation, sets, inner = max(options, key=lambda o: o[0])
    sizes_ok = all(len(x) >= eps * len(b) for x, b in zip(sets, blocks))
    regularity = RegularityWitness(
        found=bool(deviation > eps and sizes_ok),
        eps=float(eps),
        mode="extracted",
        outer=outer,
        subsets=tuple(np.sort(x) for x in sets),
        inner=inner,
        deviation=deviation,
        evaluated=1,
    )
    verified = verify_witness(weights, regularity, blocks) if regularity.found else False
    return CascadeWitness(
        side=side, level=r, block=s, parent=i, h=int(h), partner=u, c_block=ell,
        gap=gap, gap_verified=bool(gap == 2.0 ** -r), sets=sets,
        regularity=regularity, regularity_verified=bool(verified),
    )


def refinement_cascade(construction, candidate, eps, max_witnesses=8):
    """
    Follow a candidate partition of (A, B, C) through the levels of the construction.

    At level r the candidate should beta_r-refine the level-r intervals of A
    and B, with beta_r = 7^r eps^(1/4). Where a block refines its level r-1
    interval but no level-r piece of it, the orthogonal family yields sub-blocks
    of two candidate triples whose densities differ by exactly 2^-r; each is
    handed back as a re-verified irregularity witness.

    Parameters:
        construction (GowersConstruction): The weighted 3-graph and its layering.
        candidate (LayeredPartition): Partitions of A, B and C.
        eps (float): Weak regularity parameter.
        max_witnesses (int): Witnesses extracted per level and side.

    Returns:
        CascadeReport
    """
    params, layering = construction.params, construction.layering
    candidate.check_shape((construction.n,) * 3)
    balanced = _balanced(candidate)
    if not balanced:
        log.warning("Candidate blocks differ in size by more than a factor of two")
    levels = []
    for r in range(1, params.t + 1):
        beta, clamped = cascade_beta(eps, r)
        beta_prev = 0.0 if r == 1 else cascade_beta(eps, r - 1)[0]
        a_report = beta_refines(candidate[0], layering.interval_partition(r, 0), beta)
        b_report = beta_refines(candidate[1], layering.interval_partition(r, 1), beta)
        witnesses = []
        for side, report in ((0, a_report), (1, b_report)):
            if not report.refines:
                witnesses.extend(_extract(construction, candidate, eps, r, side, beta_prev, beta, max_witnesses))
        implied = params.m[r] / 2 if a_report.refines and b_report.refines else None
        levels.append(CascadeLevel(
            level=r,
            beta=beta,
            clamped=clamped,
            admissible=bool(eps ** 0.25 <= beta <= 1 / 72),
            a_report=a_report,
            b_report=b_report,
            min_parts_implied=implied,
            witnesses=tuple(witnesses),
        ))
        log.info("Cascade level %d: beta=%.4g refines=%s witnesses=%d", r, beta, levels[-1].refines, len(witnesses))
    return CascadeReport(float(eps), balanced, tuple(levels))


@dataclasses.dataclass(frozen=True)
class ConcentrationRecord:
    kind: str
    weighted: float
    sampled: float
    sigma: float
    within: bool
    hoeffding: float


@dataclasses.dataclass(frozen=True, eq=False)
class ConcentrationReport:
    sigmas: float
    boxes: tuple
    links: tuple

    @property
    def box_fraction(self):
        return sum(r.within for r in self.boxes) / len(self.boxes)

    @property
    def link_fraction(self):
        return sum(r.within for r in self.links) / len(self.links) if self.links else 1.0

    def to_dict(self):
        return {
            "sigmas": self.sigmas,
            "box_fraction": self.box_fraction,
            "link_fraction": self.link_fraction,
            "boxes": [dataclasses.asdict(r) for r in self.boxes],
            "links": [dataclasses.asdict(r) for r in self.links],
        }

    def to_yaml(self, file_path=None, digest=None):
        return dump_yaml(self.to_dict(), file_path, digest)


def _compare(kind, weights, sampled, index, sigmas):
    w = weights[index]
    cells = w.size
    weighted = float(w.sum() / cells)
    observed = float(sampled[index].sum() / cells)
    sigma = math.sqrt(float((w * (1 - w)).sum())) / cells
    gap = abs(observed - weighted)
    within = gap <= sigmas * sigma if sigma > 0 else gap == 0
    hoeffding = min(1.0, 2 * math.exp(-2 * (gap * cells) ** 2 / cells))
    return ConcentrationRecord(kind, weighted, observed, sigma, bool(within), hoeffding)


def _random_box(rng, sizes):
    while True:
        masks = [rng.random(n) < 0.5 for n in sizes]
        if all(m.any() for m in masks):
            return np.ix_(*[np.flatnonzero(m) for m in masks])


def sample_unweighted(weighted, seed=0, boxes=None, sigmas=None, link_vertices=None):
    """
    Sample every cell independently with probability equal to its weight.

    One uniform draw per cell comes from a single Philox stream in row-major
    order. The report compares sampled and weighted densities on the full box,
    on random sub-boxes and on random sub-boxes of the links of a few vertices
    of every part.

    Returns:
        tuple: (KPartiteHypergraph, ConcentrationReport)
    """
    settings = get_settings()
    boxes = settings.concentration_boxes if boxes is None else boxes
    sigmas = settings.concentration_sigmas if sigmas is None else sigmas
    link_vertices = settings.link_vertices_per_part if link_vertices is None else link_vertices
    w = weighted.weights
    u = derive_rng(seed, "cells").random(w.shape)
    cells = u < w
    sampled = KPartiteHypergraph(cells)

    full = tuple(slice(None) for _ in w.shape)
    box_records = [_compare("full", w, cells, full, sigmas)]
    rng = derive_rng(seed, "boxes")
    box_records += [_compare("box", w, cells, _random_box(rng, w.shape), sigmas) for _ in range(boxes)]

    link_records = []
    rng = derive_rng(seed, "links")
    for part in range(w.ndim):
        for v in rng.choice(w.shape[part], size=min(link_vertices, w.shape[part]), replace=False):
            w_link = np.take(w, v, axis=part)
            s_link = np.take(cells, v, axis=part)
            link_records.append(_compare(f"link-{part}", w_link, s_link, _random_box(rng, w_link.shape), sigmas))
    report = ConcentrationReport(float(sigmas), tuple(box_records), tuple(link_records))
    log.info("Sampled %d edges; %.0f%% of boxes within %g sigma", sampled.edge_count, 100 * report.box_fraction, sigmas)
    return sampled, report
