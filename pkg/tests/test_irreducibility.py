import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rcmlab.irreducibility import (KernelMatrix, MarkGrid, build_kernel_matrix, check_irreducible,
                                   check_minimal_conditions)
from rcmlab.model import make_model


def _grid(k):
    return MarkGrid(np.arange(k, dtype=float), np.full(k, 1.0 / k))


def _power_sum_positive(D):
    # oracle: sum_{m <= k} of the m-fold composed kernel is entrywise positive
    k = len(D)
    B = (D > 0).astype(float)
    acc = np.zeros_like(B)
    P = np.eye(k)
    for _ in range(k):
        P = np.minimum(P @ B, 1.0)
        acc = np.maximum(acc, P)
    return bool(np.all(acc > 0))


def test_two_block_kernel_is_reducible_with_blocks():
    m = make_model("two_block", {"block_sizes": [2, 3]})
    rep = check_irreducible(build_kernel_matrix(m, MarkGrid.from_distribution(m.marks)))
    assert rep.verdict == "reducible"
    assert rep.blocks == [[0, 1], [2, 3, 4]]
    assert rep.rows_positive and not rep.connected


@pytest.mark.parametrize("size", [16, 32, 64])
def test_weighted_kernel_is_irreducible(size):
    m = make_model("weighted")
    rep = check_irreducible(build_kernel_matrix(m, MarkGrid.from_distribution(m.marks, size)))
    assert rep.verdict == "irreducible"
    assert rep.power_positive_at == 1
    assert rep.conditions["monotone_shortcut_applies"]


def test_factorized_kernel_entries_and_verdict():
    K = [[1.0, 0.5, 0.0], [0.5, 0.8, 0.3], [0.0, 0.3, 0.6]]
    m = make_model("factorized", {"kernel": K})
    km = build_kernel_matrix(m, MarkGrid.from_distribution(m.marks))
    # ball profile of unit scale has mass pi
    assert np.allclose(km.matrix, math.pi * np.array(K))
    rep = check_irreducible(km)
    assert rep.verdict == "irreducible"
    # the 0-2 entry is zero, so positivity needs a two-step path
    assert rep.power_positive_at == 2


def test_zero_row_is_flagged():
    D = np.array([[1.0, 0.0, 0.5], [0.0, 0.0, 0.0], [0.5, 0.0, 2.0]])
    rep = check_irreducible(KernelMatrix(D, MarkGrid([0.0, 1.0, 2.0], [0.3, 0.3, 0.4])))
    assert rep.verdict == "reducible"
    assert not rep.rows_positive
    assert rep.conditions["isolated"] == [1]


def test_atom_reachability():
    D = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    cond = check_minimal_conditions(KernelMatrix(D, _grid(3)), atoms=[0])
    assert cond["atom_reaches_all"] == {0: True}
    D = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    cond = check_minimal_conditions(KernelMatrix(D, _grid(3)), atoms=[0, 1])
    assert cond["atom_reaches_all"] == {0: False, 1: False}


def test_straddling_entries_are_undetermined():
    D = np.array([[1.0, 5e-12], [5e-12, 1.0]])
    rep = check_irreducible(KernelMatrix(D, _grid(2)))
    assert rep.verdict == "undetermined"
    assert rep.straddling == 2


def test_kernel_validation():
    with pytest.raises(ValueError):
        KernelMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]), _grid(2))
    with pytest.raises(ValueError):
        KernelMatrix(np.array([[-1.0]]), _grid(1))
    with pytest.raises(ValueError):
        MarkGrid([0.0, 1.0], [0.5, 0.6])


def test_compose_matches_weighted_product():
    gen = np.random.default_rng(0)
    A = gen.random((4, 4))
    A = A + A.T
    w = np.array([0.1, 0.2, 0.3, 0.4])
    km = KernelMatrix(A, MarkGrid(np.arange(4.0), w))
    expect = A @ np.diag(w) @ A
    assert np.allclose(km.compose(km).matrix, expect)
    assert np.allclose(km.power(3).matrix, expect @ np.diag(w) @ A)


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 7).flatmap(lambda k: arrays(np.float64, (k, k), elements=st.sampled_from([0.0, 0.0, 1.0, 2.5]))))
def test_verdict_matches_power_sum_definition(raw):
    D = np.triu(raw) + np.triu(raw, 1).T
    k = len(D)
    rep = check_irreducible(KernelMatrix(D, _grid(k)))
    assert (rep.verdict == "irreducible") == _power_sum_positive(D)
    assert sorted(i for b in rep.blocks for i in b) == list(range(k))
