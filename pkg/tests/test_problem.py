"""Kernel evaluation, problem construction, the Gram row cache, and the objective."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoplan import (
    Dataset,
    KernelCache,
    KernelSpec,
    gram_row,
    kernel_eval,
    make_problem,
    objective,
)
from smoplan.oracle import dense_objective

from conftest import random_problem, toy2


def test_kernel_eval_gaussian_same_point_is_one():
    spec = KernelSpec.gaussian_kernel(0.25)
    a = ((1, 0.7), (3, -2.0))
    assert kernel_eval(spec, a, a) == 1.0


def test_kernel_eval_gaussian_unit_distance():
    spec = KernelSpec.gaussian_kernel(0.25)
    # origin (empty sparse vector) vs (1, 0): squared distance 1
    got = kernel_eval(spec, (), ((1, 1.0),))
    assert got == pytest.approx(math.exp(-0.25), rel=0, abs=1e-15)
    assert got == pytest.approx(0.778800783, abs=1e-9)


def test_kernel_eval_linear_dot_product():
    spec = KernelSpec.linear_kernel()
    a = ((1, 1.0), (2, 2.0))
    b = ((1, 3.0), (2, -1.0))
    assert kernel_eval(spec, a, b) == 1.0


def test_kernel_eval_linear_disjoint_support():
    spec = KernelSpec.linear_kernel()
    assert kernel_eval(spec, ((1, 2.0),), ((2, 5.0),)) == 0.0


def test_kernel_eval_precomputed_lookup_and_range_error():
    M = np.array([[2.0, -1.0], [-1.0, 3.0]])
    spec = KernelSpec.precomputed_kernel(M)
    assert kernel_eval(spec, ((1, 1),), ((1, 2),)) == -1.0
    assert kernel_eval(spec, ((1, 2),), ((1, 2),)) == 3.0
    with pytest.raises(IndexError):
        kernel_eval(spec, ((1, 3),), ((1, 1),))
    with pytest.raises(IndexError):
        kernel_eval(spec, ((1, 1.5),), ((1, 1),))


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=4),
       st.lists(st.floats(-5, 5), min_size=1, max_size=4),
       st.floats(0.05, 3.0))
@settings(max_examples=60, deadline=None)
def test_kernel_eval_symmetric(va, vb, gamma):
    a = tuple((k + 1, v) for k, v in enumerate(va))
    b = tuple((k + 1, v) for k, v in enumerate(vb))
    for spec in (KernelSpec.linear_kernel(), KernelSpec.gaussian_kernel(gamma)):
        assert kernel_eval(spec, a, b) == kernel_eval(spec, b, a)


def test_dataset_rejects_bad_labels_and_indices():
    with pytest.raises(ValueError):
        Dataset(points=(((1, 1.0),),), labels=(2,))
    with pytest.raises(ValueError):
        Dataset(points=(((0, 1.0),),), labels=(1,))
    with pytest.raises(ValueError):
        Dataset(points=(((2, 1.0), (2, 2.0)),), labels=(1,))
    with pytest.raises(ValueError):
        Dataset(points=(((1, 1.0),),), labels=(1, -1))


def test_make_problem_bounds_positive_label():
    ds = Dataset(points=(((1, 1.0),), ((1, 2.0),)), labels=(1, -1))
    prob = make_problem(ds, KernelSpec.linear_kernel(), C=1.0)
    assert prob.lower[0] == 0.0 and prob.upper[0] == 1.0


def test_make_problem_bounds_negative_label_small_c():
    ds = Dataset(points=(((1, 1.0),),), labels=(-1,))
    prob = make_problem(ds, KernelSpec.linear_kernel(), C=0.6)
    assert prob.lower[0] == -0.6 and prob.upper[0] == 0.0


def test_make_problem_bounds_negative_label_large_c():
    ds = Dataset(points=(((1, 1.0),),), labels=(-1,))
    prob = make_problem(ds, KernelSpec.linear_kernel(), C=100.0)
    assert prob.lower[0] == -100.0 and prob.upper[0] == 0.0


def test_make_problem_box_width_is_c():
    for seed in range(8):
        prob = random_problem(seed)
        np.testing.assert_allclose(prob.upper - prob.lower, prob.C, rtol=0, atol=0)
        assert np.all(prob.lower <= 0.0) and np.all(prob.upper >= 0.0)


def test_make_problem_rejects_bad_c_and_empty():
    ds = Dataset(points=(((1, 1.0),),), labels=(1,))
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ValueError):
            make_problem(ds, KernelSpec.linear_kernel(), C=bad)
    with pytest.raises(ValueError):
        make_problem(Dataset(points=(), labels=()), KernelSpec.linear_kernel(), C=1.0)


def test_gram_row_second_request_hits_cache():
    prob = random_problem(11, l=5)
    cache = KernelCache.with_megabytes(64)
    gram_row(cache, prob, 0)
    evals = cache.kernel_evals
    gram_row(cache, prob, 0)
    assert cache.kernel_evals == evals
    assert cache.hits == 1 and cache.misses == 1


def test_gram_row_lru_eviction_at_minimum_capacity():
    # budget below one row still keeps two rows (a pair step reads two);
    # the third distinct row evicts the least recently used one
    prob = random_problem(12, l=6)
    cache = KernelCache(capacity_bytes=1)
    gram_row(cache, prob, 0)
    gram_row(cache, prob, 1)
    assert cache.max_rows == 2 and len(cache) == 2
    gram_row(cache, prob, 2)
    assert cache.evictions == 1 and len(cache) == 2
    misses = cache.misses
    gram_row(cache, prob, 0)  # was evicted, recomputes
    assert cache.misses == misses + 1


def test_gram_row_bit_identical_cached_or_not():
    prob = random_problem(13, l=7)
    big = KernelCache.with_megabytes(64)
    tiny = KernelCache(capacity_bytes=1)
    for i in range(len(prob)):
        np.testing.assert_array_equal(gram_row(big, prob, i), gram_row(tiny, prob, i))
    # re-served from the big cache: same bytes again
    np.testing.assert_array_equal(gram_row(big, prob, 0), gram_row(tiny, prob, 0))


def test_gram_row_read_only_and_index_error():
    prob = random_problem(14, l=4)
    cache = KernelCache.with_megabytes(64)
    row = gram_row(cache, prob, 2)
    with pytest.raises(ValueError):
        row[0] = 5.0
    with pytest.raises(IndexError):
        gram_row(cache, prob, 4)
    with pytest.raises(IndexError):
        gram_row(cache, prob, -1)


def test_gram_row_precomputed_passthrough():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(3, 3))
    M = A.T @ A
    M = 0.5 * (M + M.T)
    ds = Dataset(points=(((1, 1),), ((1, 2),), ((1, 3),)), labels=(1, -1, 1))
    prob = make_problem(ds, KernelSpec.precomputed_kernel(M), C=1.0)
    cache = KernelCache.with_megabytes(64)
    for i in range(3):
        np.testing.assert_array_equal(gram_row(cache, prob, i), M[i])


def test_objective_zero_vector_is_zero():
    for seed in range(6):
        prob = random_problem(seed)
        assert objective(prob, np.zeros(len(prob))) == 0.0


def test_objective_hand_value(toy_problem):
    got = objective(toy_problem, np.array([1.0, -1.0]))
    assert got == 1.0


def test_objective_matches_dense_evaluation():
    rng = np.random.default_rng(42)
    for seed in range(10):
        prob = random_problem(100 + seed)
        alpha = rng.uniform(prob.lower, prob.upper)
        np.testing.assert_allclose(objective(prob, alpha), dense_objective(prob, alpha),
                                   rtol=0, atol=1e-12)


def test_objective_rejects_wrong_length(toy_problem):
    with pytest.raises(ValueError):
        objective(toy_problem, np.zeros(3))


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec("cubic")
    with pytest.raises(ValueError):
        KernelSpec.gaussian_kernel(0.0)
    with pytest.raises(ValueError):
        KernelSpec.precomputed_kernel(np.ones((2, 3)))
    with pytest.raises(ValueError):
        KernelSpec.precomputed_kernel(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        KernelSpec("linear", matrix=np.eye(2))


def test_toy_problem_gram_is_identity(toy_problem):
    cache = KernelCache.with_megabytes(1)
    np.testing.assert_array_equal(gram_row(cache, toy_problem, 0), [1.0, 0.0])
    np.testing.assert_array_equal(gram_row(cache, toy_problem, 1), [0.0, 1.0])
