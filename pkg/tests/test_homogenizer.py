from fractions import Fraction

import numpy as np
import pytest

from homopart.config import get_settings
from homopart.errors import CoverageError, InfeasibleParametersError, ParameterError
from homopart.homogenizer import (
    ToleranceParams,
    TwinStructure,
    excellence_threshold,
    homogeneous_partition,
    similarity_block_count,
    similarity_partition,
    tuple_partition,
    twin_diagnostics,
)
from homopart.hypercore import BipartiteGraph, KPartiteHypergraph
from homopart.oracles import PlantedOracle
from homopart.partitions import PartPartition
from homopart.workbench.generate import InstanceSpec, generate

from conftest import random_cells


def product(G, n_c):
    return KPartiteHypergraph(np.repeat(np.asarray(G, dtype=bool)[:, :, None], n_c, axis=2))


def test_constants():
    assert similarity_block_count(0.1, 5) == 135
    params = ToleranceParams(0.3, 3, 2)
    assert params.gamma == Fraction(1, 60)
    assert params.q == 354
    assert excellence_threshold(0.3, 120, 7, 3) == pytest.approx((36 / 7) ** 2)


def test_gamma_prime():
    params = ToleranceParams(0.3, 3, 2)
    assert float(params.gamma_prime) == pytest.approx(float(params.gamma) ** 3 / 48)


def test_tolerance_validation():
    with pytest.raises(ParameterError):
        ToleranceParams(0.6, 3, 2)
    with pytest.raises(ParameterError):
        ToleranceParams(0.2, 3, 0)


def test_similarity_partition_of_complete_graph():
    graph = BipartiteGraph(np.ones((120, 120), dtype=bool))
    trivial = PartPartition.trivial(120)
    result = similarity_partition(graph, trivial, trivial.with_part(1), 0.3, 1)
    assert (result.q, result.m) == (7, 12)
    assert result.exceptional_size == 36
    assert result.max_intra_distance == 0
    assert result.contract_holds


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
@pytest.mark.parametrize("gamma", [0.1, 0.2, 0.3])
def test_similarity_contract_on_planted_boxes(seed, gamma):
    r = 2 + seed % 3
    instance = generate(InstanceSpec("planted-boxes", n=120, k=2, r=r, seed=seed))
    graph = BipartiteGraph(instance.H.cells)
    given_x, given_y = (PartPartition(l, part=i) for i, l in enumerate(instance.labels))
    result = similarity_partition(graph, given_x, given_y, gamma, r, seed=seed)
    assert result.contract_holds
    assert result.input_homogeneous
    assert set(result.good_blocks) == set(range(1, r + 1))
    for block in result.partition.blocks():
        assert graph.distance_matrix(block).max() <= gamma * 120


def test_similarity_infeasible():
    graph = BipartiteGraph(np.ones((10, 10), dtype=bool))
    trivial = PartPartition.trivial(10)
    with pytest.raises(InfeasibleParametersError):
        similarity_partition(graph, trivial, trivial.with_part(1), 0.1, 1)


def test_tuple_partition_of_product():
    G = np.zeros((8, 8), dtype=bool)
    G[:4] = True
    H = product(G, 8)
    oracle = PlantedOracle([np.ones(8, dtype=np.int64)] * 3, 2)
    result = tuple_partition(H, oracle, ToleranceParams(0.2, 3, 2), seed=3)
    assert result.class_count == 2
    assert result.exceptional_size == 0
    for label in (1, 2):
        members = [result.tuple_at(i) for i in result.members(label)]
        assert len({bool(G[a, b]) for a, b in members}) == 1


def test_tuple_partition_of_empty_graph():
    H = KPartiteHypergraph.empty((5, 5, 5))
    oracle = PlantedOracle([np.ones(5, dtype=np.int64)] * 3, 1)
    result = tuple_partition(H, oracle, ToleranceParams(0.2, 3, 1))
    assert result.class_count == 1
    assert result.exceptional_size == 0


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("family", ["product", "planted-boxes"])
def test_tuple_classes_are_tight(family, seed):
    instance = generate(InstanceSpec(family, n=60, k=3, r=3, seed=seed))
    params = ToleranceParams(0.2, 3, 3)
    result = tuple_partition(instance.H, instance.oracle, params, seed=seed)
    assert result.exceptional_size <= 0.2 * 60 ** 2
    assert max(result.class_diameters(instance.H)) <= 0.2 * 60


def test_tuple_partition_reports_coverage_failure():
    H = KPartiteHypergraph(random_cells(5, (30, 30, 30)))
    oracle = PlantedOracle([np.ones(30, dtype=np.int64)] * 3, 1)
    with pytest.raises(CoverageError) as info:
        tuple_partition(H, oracle, ToleranceParams(0.05, 3, 1), max_anchors=3)
    assert info.value.anchors == 3
    assert info.value.uncovered > info.value.budget


def test_tuple_partition_paper_mode_is_infeasible():
    H = KPartiteHypergraph.complete((4, 4, 4))
    oracle = PlantedOracle([np.ones(4, dtype=np.int64)] * 3, 2)
    with pytest.raises(InfeasibleParametersError):
        tuple_partition(H, oracle, ToleranceParams(0.3, 3, 2, mode="paper"))


def test_twins_on_product():
    G = np.zeros((40, 40), dtype=bool)
    G[:20, :20] = True
    G[20:, 20:] = True
    H = product(G, 40)
    labels = [np.repeat([1, 2], 20), np.repeat([1, 2], 20), np.ones(40, dtype=np.int64)]
    oracle = PlantedOracle(labels, 2)
    structure = TwinStructure(H, oracle, 0.3, 2, target=0)
    assert structure.similarity(0, (1, 25)).m == 2
    assert list(structure.twins(0, (1, 25))) == [0, 1]
    assert list(structure.twins(1, (1, 25))) == [24, 25]
    assert structure.chain_count((1, 25)) == 4

    report = twin_diagnostics(H, oracle, ToleranceParams(0.3, 3, 2), sample=[(1, 25), (2, 6)], target=0, gamma=0.3)
    assert report.chain_counts == (4, 4)
    assert report.threshold == pytest.approx((0.3 * 40 / 14) ** 2)
    assert report.excellent_fraction == 1


def test_homogeneous_partition_of_complete_graph():
    H = KPartiteHypergraph.complete((20, 20, 20))
    oracle = PlantedOracle([np.ones(20, dtype=np.int64)] * 3, 1)
    result = homogeneous_partition(H, oracle, 0.2)
    assert result.atoms == (1, 1, 1)
    report = result.audit(H)
    assert report.passed and report.mass == 0


def test_homogeneous_partition_of_two_box_product():
    instance = generate(InstanceSpec("product", n=60, k=3, r=3, seed=11))
    result = homogeneous_partition(instance.H, instance.oracle, 0.2, block_size=10)
    report = result.audit(instance.H)
    assert report.mass == 0
    assert set(np.round(report.densities, 12)) <= {0.0, 1.0}
    assert all(p.is_equitable() for p in result.partition)
    assert result.block_size_override


@pytest.mark.parametrize("seed", range(6))
def test_homogeneous_partition_on_planted_instances(seed):
    n = (60, 120)[seed % 2]
    instance = generate(InstanceSpec("planted-boxes", n=n, k=3, r=3, seed=seed))
    result = homogeneous_partition(instance.H, instance.oracle, 0.2, seed=seed)
    report = result.audit(instance.H)
    assert report.normalized_mass <= 0.2
    assert result.within_budget
    for p, atoms in zip(result.p, result.atoms):
        assert p == atoms


def test_homogeneous_partition_rejects_eps():
    H = KPartiteHypergraph.complete((4, 4, 4))
    oracle = PlantedOracle([np.ones(4, dtype=np.int64)] * 3, 1)
    with pytest.raises(ParameterError):
        homogeneous_partition(H, oracle, 0.5)


def test_twin_diagnostics_at_default_gamma():
    # gamma = eps / 6k leaves no room for similarity blocks at n = 60.
    instance = generate(InstanceSpec("planted-boxes", n=60, k=3, r=3, seed=0))
    report = twin_diagnostics(instance.H, instance.oracle, ToleranceParams(0.2, 3, 3), sample=4)
    assert report.infeasible_links > 0
    assert report.chain_counts == (0, 0, 0, 0)
    assert report.good_fraction == (0.0, 0.0)
    assert report.excellent_fraction == 0
    assert report.to_dict()["infeasible_links"] == report.infeasible_links


@pytest.mark.parametrize("seed", range(4))
def test_homogeneous_partition_with_block_size(seed):
    n = (60, 120)[seed % 2]
    instance = generate(InstanceSpec("planted-boxes", n=n, k=3, r=3, seed=seed))
    result = homogeneous_partition(instance.H, instance.oracle, 0.2, seed=seed, block_size=5)
    assert result.m == (5, 5, 5)
    assert result.partition.block_counts == (n // 5,) * 3
    assert all(p.is_equitable() for p in result.partition)
    report = result.audit(instance.H)
    assert report.passed
    assert report.normalized_mass <= 0.2


@pytest.mark.parametrize("family", ["product", "planted-boxes"])
def test_tuple_partition_ignores_thread_count(family):
    instance = generate(InstanceSpec(family, n=40, k=3, r=3, seed=2))
    params = ToleranceParams(0.2, 3, 3)
    runs = [tuple_partition(instance.H, instance.oracle, params, seed=2, threads=t) for t in (1, 4, 8)]
    for other in runs[1:]:
        assert np.array_equal(other.labels, runs[0].labels)
        assert other.anchors == runs[0].anchors


def test_homogeneous_partition_ignores_thread_count(monkeypatch):
    instance = generate(InstanceSpec("planted-boxes", n=60, k=3, r=3, seed=5))
    partitions = []
    for threads in ("1", "4", "8"):
        monkeypatch.setenv("HOMOPART_THREADS", threads)
        get_settings.cache_clear()
        result = homogeneous_partition(instance.H, instance.oracle, 0.2, seed=5, block_size=5)
        partitions.append(result.partition)
    assert partitions[0] == partitions[1] == partitions[2]
