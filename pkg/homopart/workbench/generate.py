"""Instance families, most of them with planted link partitions."""

import dataclasses
import logging

import numpy as np

from ..errors import ParameterError
from ..hypercore import KPartiteHypergraph
from ..oracles import PlantedOracle
from ..seeding import derive_rng

log = logging.getLogger(__name__)

FAMILIES = ("planted-boxes", "product", "interval-threshold", "uniform-random")
PLANTED = ("planted-boxes", "product")


@dataclasses.dataclass(frozen=True)
class InstanceSpec:
    """
    Parameters:
        family (str): One of FAMILIES.
        n (int or tuple): Part size, or one size per part.
        k (int): Number of parts.
        r (int): Blocks per part of the planted partitions.
        eps_prime (float): Link homogeneity the instance is meant to have.
        seed (int): Instance seed.
        density (float): Edge probability of the uniform-random family.
    """

    family: str
    n: object = 60
    k: int = 3
    r: int = 3
    eps_prime: float = 0.0
    seed: int = 0
    density: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"Unknown family '{self.family}'. Available families: {FAMILIES}")
        if self.k < 2:
            raise ParameterError(f"k must be at least 2, got {self.k}.")
        if self.family in PLANTED and self.r < 1:
            raise ParameterError(f"The {self.family} family needs r >= 1, got {self.r}.")
        if self.family == "product" and (self.k < 3 or self.r < 2):
            raise ParameterError("The product family needs k >= 3 and r >= 2.")
        if not 0 <= self.density <= 1:
            raise ParameterError(f"density must lie in [0, 1], got {self.density}.")
        if min(self.part_sizes) < max(self.r, 1):
            raise ParameterError(f"Parts of size {self.part_sizes} cannot hold {self.r} blocks.")

    @property
    def part_sizes(self):
        if isinstance(self.n, int):
            return (self.n,) * self.k
        sizes = tuple(int(v) for v in self.n)
        if len(sizes) != self.k:
            raise ParameterError(f"Expected {self.k} part sizes, got {len(sizes)}.")
        return sizes

    @property
    def planted(self):
        return self.family in PLANTED

    def to_dict(self):
        data = dataclasses.asdict(self)
        data["n"] = list(self.part_sizes)
        return data


@dataclasses.dataclass(frozen=True, eq=False)
class Instance:
    spec: InstanceSpec
    H: KPartiteHypergraph
    labels: tuple = None

    @property
    def oracle(self):
        """Planted link partitions, or None for families without them."""
        if self.labels is None:
            return None
        return PlantedOracle(self.labels, self.spec.r)


def planted_labels(rng, n, r):
    """Labels 1..r, each used at least once, in random order."""
    labels = np.arange(n) % r + 1
    rng.shuffle(labels)
    return labels


def _planted_boxes(spec):
    rng = derive_rng(spec.seed, "planted")
    labels = tuple(planted_labels(rng, n, spec.r) for n in spec.part_sizes)
    pattern = derive_rng(spec.seed, "pattern").random((spec.r,) * spec.k) < 0.5
    cells = pattern[np.ix_(*[l - 1 for l in labels])]
    return cells, labels


def _product(spec):
    # H = G x C x ...: G is the union of r - 1 boxes on the first two parts.
    rng = derive_rng(spec.seed, "planted")
    sizes = spec.part_sizes
    labels = [planted_labels(rng, sizes[0], spec.r), planted_labels(rng, sizes[1], spec.r)]
    labels += [np.ones(n, dtype=np.int64) for n in sizes[2:]]
    boxes = np.zeros((spec.r, spec.r), dtype=bool)
    boxes[np.arange(spec.r - 1), np.arange(spec.r - 1)] = True
    graph = boxes[np.ix_(labels[0] - 1, labels[1] - 1)]
    cells = np.broadcast_to(graph.reshape(graph.shape + (1,) * (spec.k - 2)), sizes).copy()
    return cells, tuple(labels)


def _interval_threshold(spec):
    grids = np.meshgrid(*[(np.arange(n) + 0.5) / n for n in spec.part_sizes], indexing="ij")
    return sum(grids) >= spec.k / 2, None


def _uniform_random(spec):
    return derive_rng(spec.seed, "uniform").random(spec.part_sizes) < spec.density, None


_BUILDERS = {
    "planted-boxes": _planted_boxes,
    "product": _product,
    "interval-threshold": _interval_threshold,
    "uniform-random": _uniform_random,
}


def generate(spec):
    """
    Build an instance of ``spec.family``.

    Planted families come with per-part labels; every link of such an instance
    is a union of complete boxes over the labelled blocks, so the labels form a
    0-homogeneous partition of it.

    Returns:
        Instance
    """
    cells, labels = _BUILDERS[spec.family](spec)
    H = KPartiteHypergraph(cells)
    log.info("Generated %s instance %s with %d edges", spec.family, spec.part_sizes, H.edge_count)
    return Instance(spec, H, labels)
