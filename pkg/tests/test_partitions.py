import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homopart.errors import DivisibilityError, ParameterError, PartitionError
from homopart.partitions import (
    LayeredPartition,
    PartPartition,
    beta_refines,
    collapse_layers,
    common_refinement,
    equalize,
    refine_partitions,
)


def test_labels_must_be_contiguous():
    with pytest.raises(PartitionError):
        PartPartition([1, 3, 3])


def test_from_blocks_and_counts():
    p = PartPartition.from_blocks(6, [[0, 1], [2, 3, 4]], exceptional=[5])
    assert list(p.labels) == [1, 1, 2, 2, 2, 0]
    assert p.count == 2
    assert p.block_count == 3
    assert list(p.block_sizes) == [2, 3]
    assert [list(b) for b in p.blocks()] == [[0, 1], [2, 3, 4]]
    with pytest.raises(PartitionError):
        PartPartition.from_blocks(3, [[0, 1], [1, 2]])
    with pytest.raises(PartitionError):
        PartPartition.from_blocks(3, [[0]])


def test_layered_partition_needs_every_part_once():
    with pytest.raises(PartitionError):
        LayeredPartition([PartPartition.trivial(3, 0), PartPartition.trivial(3, 2)])
    layered = LayeredPartition([PartPartition.trivial(3, 1), PartPartition.singletons(4, 0)])
    assert layered.sizes == (4, 3)
    assert layered.block_counts == (4, 1)


def test_identical_sets_give_two_atoms():
    s = np.array([1, 1, 0, 0, 1], dtype=bool)
    atoms = common_refinement(5, [s, s])
    assert list(atoms.labels) == [1, 1, 2, 2, 1]


def test_atoms_in_first_occurrence_order():
    a = np.array([1, 1, 0, 0], dtype=bool)
    b = np.array([0, 1, 1, 0], dtype=bool)
    assert list(common_refinement(4, [a, b]).labels) == [1, 2, 3, 4]


@settings(max_examples=60, deadline=None, derandomize=True)
@given(st.lists(st.lists(st.booleans(), min_size=8, max_size=8), min_size=1, max_size=4))
def test_atoms_match_signatures(sets):
    atoms = common_refinement(8, [np.array(s) for s in sets])
    signatures = [tuple(s[v] for s in sets) for v in range(8)]
    assert atoms.count == len(set(signatures)) <= 2 ** len(sets)
    for u in range(8):
        for v in range(8):
            assert (atoms.labels[u] == atoms.labels[v]) == (signatures[u] == signatures[v])


def test_refine_partitions_and_collapse_layers():
    p = PartPartition([1, 1, 2, 2])
    q = PartPartition([1, 2, 2, 2], part=1)
    assert list(refine_partitions([p, q]).labels) == [1, 2, 3, 3]
    assert collapse_layers(LayeredPartition([p, q])) == refine_partitions([p, q])


def test_equalize_even_blocks():
    p = PartPartition.from_blocks(12, [range(6), range(6, 12)])
    out = equalize(p, 3)
    assert list(out.block_sizes) == [3, 3, 3, 3]
    assert out.exceptional_size == 0


def test_equalize_pools_leftovers():
    p = PartPartition.from_blocks(12, [range(5), range(5, 12)])
    out = equalize(p, 3)
    assert list(out.block_sizes) == [3, 3, 3, 3]
    assert out.exceptional_size == 0
    assert sorted(out.block(4)) == [3, 4, 11]


def test_equalize_remainder():
    p = PartPartition.from_blocks(8, [range(5), range(5, 8)])
    out = equalize(p, 2)
    assert out.is_equitable()
    assert out.exceptional_size == 0
    p = PartPartition.from_blocks(7, [range(4), range(4, 7)])
    out = equalize(p, 2)
    assert out.exceptional_size == 1
    with pytest.raises(DivisibilityError):
        equalize(p, 2, mode="paper")
    with pytest.raises(ParameterError):
        equalize(p, 0)
    with pytest.raises(ParameterError):
        equalize(p, 8)


def test_beta_refines_identity_and_strict_refinement():
    coarse = PartPartition([1, 1, 1, 2, 2, 2])
    assert beta_refines(coarse, coarse, 0).refines
    fine = PartPartition([1, 2, 2, 3, 3, 4])
    report = beta_refines(fine, coarse, 0)
    assert report.refines and report.unmatched == 0
    assert report.parent_of(2) == 1 and report.parent_of(3) == 2


def test_straddling_block_is_unmatched():
    coarse = PartPartition([1] * 6 + [2] * 4)
    fine = PartPartition([1] * 10)
    report = beta_refines(fine, coarse, 0.3)
    assert report.parents == (None,)
    assert not report.refines
    assert beta_refines(fine, coarse, 0.4).parents == (1,)


def test_beta_range():
    p = PartPartition.trivial(3)
    with pytest.raises(ParameterError):
        beta_refines(p, p, 0.5)


def contiguous(values):
    return PartPartition(np.unique(values, return_inverse=True)[1].reshape(-1) + 1)


@settings(max_examples=100, deadline=None, derandomize=True)
@given(st.lists(st.lists(st.booleans(), min_size=10, max_size=10), min_size=1, max_size=5))
def test_common_refinement_is_idempotent(sets):
    atoms = common_refinement(10, sets)
    again = common_refinement(10, [atoms.labels == label for label in range(1, atoms.count + 1)])
    assert again == atoms
    assert refine_partitions([atoms, atoms]) == atoms


@settings(max_examples=200, deadline=None, derandomize=True)
@given(
    st.lists(st.integers(0, 3), min_size=12, max_size=12),
    st.lists(st.integers(0, 2), min_size=12, max_size=12),
    st.floats(0, 0.49),
    st.floats(0, 0.49),
)
def test_beta_refines_is_monotone_in_beta(fine, coarse, a, b):
    fine, coarse = contiguous(fine), contiguous(coarse)
    low, high = sorted((a, b))
    tight = beta_refines(fine, coarse, low)
    loose = beta_refines(fine, coarse, high)
    if tight.refines:
        assert loose.refines
    assert loose.unmatched <= tight.unmatched
    for p, q in zip(tight.parents, loose.parents):
        if p is not None:
            assert q == p


@settings(max_examples=100, deadline=None, derandomize=True)
@given(
    st.lists(st.integers(0, 2), min_size=12, max_size=12),
    st.lists(st.integers(0, 2), min_size=12, max_size=12),
    st.lists(st.integers(0, 2), min_size=12, max_size=12),
)
def test_true_refinement_is_transitive(coarse, split_mid, split_fine):
    coarse = contiguous(coarse)
    mid = refine_partitions([coarse, contiguous(split_mid)])
    fine = refine_partitions([mid, contiguous(split_fine)])
    assert beta_refines(fine, mid, 0).refines
    assert beta_refines(mid, coarse, 0).refines
    assert beta_refines(fine, coarse, 0).refines
    assert beta_refines(fine, coarse, 0).unmatched == 0
