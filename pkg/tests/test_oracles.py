import numpy as np
import pytest

from homopart.auditor import homogeneity_audit
from homopart.errors import InfeasibleParametersError, PartitionError
from homopart.hypercore import KPartiteHypergraph
from homopart.oracles import (
    ExhaustiveOracle,
    GreedyOracle,
    PlantedOracle,
    TableOracle,
    restricted_growth_strings,
    signature_partition,
)
from homopart.partitions import PartPartition
from homopart.workbench.generate import InstanceSpec, generate


BELL = [1, 1, 2, 5, 15, 52, 203]


@pytest.mark.parametrize("n", range(1, 7))
def test_restricted_growth_strings_count_set_partitions(n):
    strings = list(restricted_growth_strings(n, n))
    assert len(strings) == BELL[n]
    assert len({tuple(s) for s in strings}) == BELL[n]
    assert all(s[0] == 1 for s in strings)


def test_restricted_growth_strings_respect_block_limit():
    strings = list(restricted_growth_strings(4, 2))
    # Stirling numbers S(4, 1) + S(4, 2).
    assert len(strings) == 1 + 7
    assert max(int(s.max()) for s in strings) == 2


def test_signature_partition_groups_columns():
    adjacency = np.array([[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 1, 1]], dtype=bool)
    assert list(signature_partition(adjacency, np.array([1, 1, 2]))) == [1, 1, 2, 2]
    assert list(signature_partition(adjacency, np.array([1, 1, 1]))) == [1, 1, 2, 2]


def test_planted_oracle_returns_the_planted_part():
    labels = [np.array([1, 1, 2]), np.array([1, 2, 2]), np.array([1, 1, 1])]
    oracle = PlantedOracle(labels, 2)
    assert oracle([(2, 0)], 1) == PartPartition([1, 2, 2], part=1)
    pair = oracle.pair([(2, 0)], 0, 1)
    assert pair.block_counts == (2, 2)
    with pytest.raises(PartitionError):
        PlantedOracle(labels, 1)


def test_table_oracle_lookup_ignores_pin_order():
    p = PartPartition([1, 2], part=0)
    oracle = TableOracle({(((3, 1), (2, 0)), 0): p}, 2, provenance="test")
    assert oracle.partition([(2, 0), (3, 1)], 0) == p
    assert oracle.provenance == "test"
    with pytest.raises(PartitionError):
        oracle.partition([(2, 1), (3, 1)], 0)


@pytest.mark.parametrize("seed", range(4))
def test_greedy_oracle_on_box_links(seed):
    instance = generate(InstanceSpec("product", n=24, k=3, r=3, seed=seed))
    oracle = GreedyOracle(instance.H, 3, 0.0)
    for c in range(0, 24, 6):
        pins = [(2, c)]
        pair = oracle.pair(pins, 0, 1)
        assert max(pair.block_counts) <= 3
        report = homogeneity_audit(instance.H.link(pins), pair, 0.0)
        assert report.mass == 0


def test_greedy_oracle_pinned_side_has_no_partition():
    oracle = GreedyOracle(KPartiteHypergraph.complete((3, 3, 3)), 2, 0.1)
    with pytest.raises(PartitionError):
        oracle.partition([(2, 0)], 2)


def test_exhaustive_oracle_finds_two_blocks():
    G = np.zeros((6, 6), dtype=bool)
    G[:3, :3] = True
    H = KPartiteHypergraph(np.repeat(G[:, :, None], 2, axis=2))
    oracle = ExhaustiveOracle(H, 2, 0.0)
    pair = oracle.pair([(2, 1)], 0, 1)
    assert list(pair[0].labels) == [1, 1, 1, 2, 2, 2]
    assert list(pair[1].labels) == [1, 1, 1, 2, 2, 2]


def test_exhaustive_oracle_cap():
    oracle = ExhaustiveOracle(KPartiteHypergraph.complete((13, 2, 2)), 2, 0.1)
    with pytest.raises(InfeasibleParametersError):
        oracle.partition([(2, 0)], 0)
