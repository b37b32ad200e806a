import math

import numpy as np
import pytest

from hcot import (
    LabelHierarchy,
    LogitBatch,
    ObjectiveError,
    complement_entropy,
    cot_loss,
    cross_entropy,
    flat_hierarchy,
    hcot_loss,
    hierarchical_complement_entropy,
    identity_hierarchy,
    shannon_entropy,
    subset_softmax,
    training_loss,
)
from oracles import (
    fd_logit_gradient,
    gradient_rel_error,
    random_two_level_hierarchy,
    ref_complement_entropy,
    ref_cross_entropy,
    ref_hierarchical_complement_entropy,
)

# Frozen expected values, computed once with an mpmath (50-digit) version of
# the loop oracles in oracles.py and rounded to double precision.
SUBSET_23_PROBS = (0.26894142136999512, 0.73105857863000488)
ENTROPY_SUBSET_23 = 0.58220310888821795
XE_1234_G3 = 0.44018969856119533
CE_1234_G3 = 0.83239558183993887
HCE_1234_PAIRS_G0 = 0.58220310888821795
XE_1234_G0 = 3.44018969856119533
HCOT_1234_PAIRS_G0 = 2.85798658967297738


def batch(values, labels):
    return LogitBatch(np.asarray(values, dtype=np.float64), np.asarray(labels))


# ---------------------------------------------------------------------------
# subset softmax and entropy
# ---------------------------------------------------------------------------

def test_subset_softmax_symmetry():
    d = subset_softmax(np.array([5.0, 5.0, 5.0]), [0, 1, 2])
    assert np.allclose(d.probs, [1 / 3] * 3, atol=1e-15)


def test_subset_softmax_frozen_value():
    d = subset_softmax(np.array([1.0, 2.0, 3.0, 4.0]), [2, 3])
    assert d.probs == pytest.approx(SUBSET_23_PROBS, abs=1e-15)


def test_subset_softmax_max_shift_stability():
    d = subset_softmax(np.array([1000.0, 0.0]), [0, 1])
    assert np.isfinite(d.probs).all()
    assert d.probs[0] == pytest.approx(1.0, abs=1e-12)
    assert d.probs[1] >= 0.0


def test_subset_softmax_empty_and_errors():
    d = subset_softmax(np.array([1.0, 2.0]), [])
    assert d.probs.size == 0
    with pytest.raises(ObjectiveError):
        subset_softmax(np.array([1.0, 2.0]), [0, 0])
    with pytest.raises(ObjectiveError):
        subset_softmax(np.array([1.0, 2.0]), [0, 2])


def test_subset_softmax_normalization():
    rng = np.random.default_rng(5)
    for _ in range(100):
        k = int(rng.integers(2, 12))
        z = rng.normal(scale=3.0, size=k)
        subset = rng.permutation(k)[: int(rng.integers(1, k + 1))]
        d = subset_softmax(z, subset)
        assert abs(d.probs.sum() - 1.0) < 1e-12
        assert (d.probs >= 0).all() and (d.probs <= 1).all()


def test_shannon_entropy_uniform_and_singleton():
    for m in (2, 3, 5, 17):
        d = subset_softmax(np.zeros(m), list(range(m)))
        assert shannon_entropy(d) == pytest.approx(math.log(m), abs=1e-12)
    singleton = subset_softmax(np.array([3.0, 1.0]), [0])
    assert shannon_entropy(singleton) == 0.0
    empty = subset_softmax(np.array([3.0]), [])
    assert shannon_entropy(empty) == 0.0


def test_shannon_entropy_frozen_value():
    d = subset_softmax(np.array([1.0, 2.0, 3.0, 4.0]), [2, 3])
    assert shannon_entropy(d) == pytest.approx(ENTROPY_SUBSET_23, abs=1e-12)


# ---------------------------------------------------------------------------
# cross entropy
# ---------------------------------------------------------------------------

def test_cross_entropy_uniform_logits():
    for k in (2, 5, 100):
        b = batch(np.zeros((3, k)), [0, 1, k - 1])
        assert cross_entropy(b).value == pytest.approx(math.log(k), abs=1e-12)


def test_cross_entropy_confident_limit():
    z = np.zeros((1, 6))
    z[0, 2] = 200.0
    assert cross_entropy(batch(z, [2])).value == pytest.approx(0.0, abs=1e-12)


def test_cross_entropy_frozen_value():
    b = batch([[1.0, 2.0, 3.0, 4.0]], [3])
    assert cross_entropy(b).value == pytest.approx(XE_1234_G3, abs=1e-12)


def test_cross_entropy_gradient_formula():
    rng = np.random.default_rng(11)
    z = rng.normal(size=(4, 6))
    g = rng.integers(0, 6, size=4)
    res = cross_entropy(batch(z, g))
    shifted = np.exp(z - z.max(axis=1, keepdims=True))
    probs = shifted / shifted.sum(axis=1, keepdims=True)
    onehot = np.zeros_like(z)
    onehot[np.arange(4), g] = 1.0
    assert np.allclose(res.grad, (probs - onehot) / 4, atol=1e-14)


def test_cross_entropy_empty_batch():
    with pytest.raises(ObjectiveError):
        cross_entropy(LogitBatch(np.zeros((0, 3)), np.zeros(0, dtype=int)))


# ---------------------------------------------------------------------------
# complement entropy
# ---------------------------------------------------------------------------

def test_complement_entropy_uniform_is_stationary():
    for k in (3, 7):
        b = batch(np.full((2, k), 1.5), [0, k - 1])
        res = complement_entropy(b)
        assert res.value == pytest.approx(math.log(k - 1), abs=1e-12)
        assert np.abs(res.grad).max() < 1e-14


def test_complement_entropy_two_classes():
    b = batch([[3.0, -1.0], [0.0, 9.0]], [0, 1])
    res = complement_entropy(b)
    assert res.value == 0.0
    assert np.all(res.grad == 0.0)


def test_complement_entropy_frozen_value():
    b = batch([[1.0, 2.0, 3.0, 4.0]], [3])
    assert complement_entropy(b).value == pytest.approx(CE_1234_G3, abs=1e-12)


def test_complement_entropy_needs_two_classes():
    with pytest.raises(ObjectiveError):
        complement_entropy(batch([[1.0]], [0]))


def test_complement_gradient_zero_at_ground_truth():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(6, 9))
    g = rng.integers(0, 9, size=6)
    res = complement_entropy(batch(z, g))
    assert np.all(res.grad[np.arange(6), g] == 0.0)


# ---------------------------------------------------------------------------
# hierarchical complement entropy
# ---------------------------------------------------------------------------

def test_hce_flat_degenerates_bitwise():
    rng = np.random.default_rng(17)
    for _ in range(20):
        k = int(rng.integers(2, 12))
        n = int(rng.integers(1, 6))
        b = batch(rng.normal(size=(n, k)), rng.integers(0, k, size=n))
        ce = complement_entropy(b)
        hce = hierarchical_complement_entropy(b, flat_hierarchy(k))
        assert hce.value == ce.value
        assert np.array_equal(hce.grad, ce.grad)


def test_hce_identity_reduces_to_complement():
    rng = np.random.default_rng(19)
    for _ in range(20):
        k = int(rng.integers(2, 12))
        n = int(rng.integers(1, 6))
        b = batch(rng.normal(size=(n, k)), rng.integers(0, k, size=n))
        ce = complement_entropy(b)
        hce = hierarchical_complement_entropy(b, identity_hierarchy(k))
        assert hce.value == ce.value
        assert np.array_equal(hce.grad, ce.grad)


def test_hce_frozen_value_and_inner_singleton():
    h = LabelHierarchy.from_fine_to_coarse([0, 0, 1, 1])
    b = batch([[1.0, 2.0, 3.0, 4.0]], [0])
    res = hierarchical_complement_entropy(b, h)
    assert res.value == pytest.approx(HCE_1234_PAIRS_G0, abs=1e-12)


def test_hce_size_mismatch():
    with pytest.raises(ObjectiveError):
        hierarchical_complement_entropy(batch([[1.0, 2.0]], [0]), flat_hierarchy(3))


def test_hce_entropy_bounds_per_term():
    rng = np.random.default_rng(23)
    for _ in range(30):
        k = int(rng.integers(2, 12))
        h = random_two_level_hierarchy(rng, k)
        z = rng.normal(scale=2.0, size=k)
        g = int(rng.integers(0, k))
        s = h.slices_for(g)
        inner_h = shannon_entropy(subset_softmax(z, list(s.inner)))
        outer_h = shannon_entropy(subset_softmax(z, list(s.outer)))
        assert 0.0 <= inner_h <= (math.log(len(s.inner)) if s.inner else 0.0) + 1e-12
        assert 0.0 <= outer_h <= (math.log(len(s.outer)) if s.outer else 0.0) + 1e-12
        res = hierarchical_complement_entropy(batch([z], [g]), h)
        assert res.value == pytest.approx(inner_h + outer_h, abs=1e-12)


def test_hce_gradient_zero_at_ground_truth():
    rng = np.random.default_rng(29)
    k = 10
    h = random_two_level_hierarchy(rng, k)
    z = rng.normal(size=(8, k))
    g = rng.integers(0, k, size=8)
    res = hierarchical_complement_entropy(batch(z, g), h)
    assert np.all(res.grad[np.arange(8), g] == 0.0)


# ---------------------------------------------------------------------------
# combined losses
# ---------------------------------------------------------------------------

def test_hcot_is_definitional_difference():
    rng = np.random.default_rng(31)
    k = 9
    h = random_two_level_hierarchy(rng, k)
    b = batch(rng.normal(size=(5, k)), rng.integers(0, k, size=5))
    combined = hcot_loss(b, h)
    xe = cross_entropy(b)
    hce = hierarchical_complement_entropy(b, h)
    assert abs(combined.value - (xe.value - hce.value)) < 1e-12
    assert np.allclose(combined.grad, xe.grad - hce.grad, atol=1e-15)


def test_hcot_frozen_value():
    h = LabelHierarchy.from_fine_to_coarse([0, 0, 1, 1])
    b = batch([[1.0, 2.0, 3.0, 4.0]], [0])
    assert cross_entropy(b).value == pytest.approx(XE_1234_G0, abs=1e-12)
    assert hcot_loss(b, h).value == pytest.approx(HCOT_1234_PAIRS_G0, abs=1e-12)


def test_hcot_flat_equals_cot():
    rng = np.random.default_rng(37)
    k = 7
    b = batch(rng.normal(size=(4, k)), rng.integers(0, k, size=4))
    a = hcot_loss(b, flat_hierarchy(k))
    c = cot_loss(b)
    assert a.value == c.value
    assert np.array_equal(a.grad, c.grad)


def test_training_loss_dispatch():
    rng = np.random.default_rng(41)
    k = 6
    h = random_two_level_hierarchy(rng, k)
    b = batch(rng.normal(size=(3, k)), rng.integers(0, k, size=3))
    xe = training_loss(b, h, "xe")
    assert not xe.complement_used and math.isnan(xe.complement_value)
    cot = training_loss(b, h, "cot")
    assert cot.complement_used
    assert cot.total.value == pytest.approx(cot.xe_value - cot.complement_value, abs=1e-12)
    hcot = training_loss(b, h, "hcot")
    assert hcot.total.value == pytest.approx(hcot.xe_value - hcot.complement_value, abs=1e-12)
    with pytest.raises(ObjectiveError):
        training_loss(b, None, "hcot")
    with pytest.raises(ObjectiveError):
        training_loss(b, h, "focal")


# ---------------------------------------------------------------------------
# analytic gradients vs finite differences
# ---------------------------------------------------------------------------

def _gradient_case(rng):
    n = int(rng.integers(1, 9))
    k = int(rng.integers(2, 13))
    values = rng.uniform(-2.0, 2.0, size=(n, k))
    labels = rng.integers(0, k, size=n)
    h = random_two_level_hierarchy(rng, k)
    return values, labels, h


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(43)
    worst = 0.0
    for _ in range(25):
        values, labels, h = _gradient_case(rng)
        b = batch(values, labels)
        cases = [
            (cross_entropy(b).grad, lambda v, l: cross_entropy(batch(v, l)).value),
            (complement_entropy(b).grad, lambda v, l: complement_entropy(batch(v, l)).value),
            (
                hierarchical_complement_entropy(b, h).grad,
                lambda v, l: hierarchical_complement_entropy(batch(v, l), h).value,
            ),
            (hcot_loss(b, h).grad, lambda v, l: hcot_loss(batch(v, l), h).value),
        ]
        for analytic, value_fn in cases:
            fd = fd_logit_gradient(value_fn, values, labels)
            worst = max(worst, gradient_rel_error(analytic, fd))
    assert worst < 1e-6


def test_normalized_gradients_match_finite_differences():
    rng = np.random.default_rng(47)
    for _ in range(5):
        values, labels, h = _gradient_case(rng)
        b = batch(values, labels)
        analytic = hierarchical_complement_entropy(b, h, normalize=True).grad
        fd = fd_logit_gradient(
            lambda v, l: hierarchical_complement_entropy(batch(v, l), h, normalize=True).value,
            values,
            labels,
        )
        assert gradient_rel_error(analytic, fd) < 1e-6


# ---------------------------------------------------------------------------
# invariants
# ---------------------------------------------------------------------------

def test_shift_invariance_all_objectives():
    rng = np.random.default_rng(53)
    for _ in range(20):
        values, labels, h = _gradient_case(rng)
        shifted = values + rng.uniform(-50, 50, size=(values.shape[0], 1))
        for fn in (
            lambda b: cross_entropy(b).value,
            lambda b: complement_entropy(b).value,
            lambda b: hierarchical_complement_entropy(b, h).value,
            lambda b: hcot_loss(b, h).value,
        ):
            assert fn(batch(values, labels)) == pytest.approx(
                fn(batch(shifted, labels)), abs=1e-9
            )


def test_loop_oracle_equivalence_small():
    rng = np.random.default_rng(59)
    for _ in range(100):
        n = int(rng.integers(1, 5))
        k = int(rng.integers(2, 7))
        values = rng.normal(size=(n, k))
        labels = rng.integers(0, k, size=n)
        h = random_two_level_hierarchy(rng, k)
        b = batch(values, labels)
        assert abs(cross_entropy(b).value - ref_cross_entropy(values, labels)) < 1e-10
        assert abs(complement_entropy(b).value - ref_complement_entropy(values, labels)) < 1e-10
        assert (
            abs(
                hierarchical_complement_entropy(b, h).value
                - ref_hierarchical_complement_entropy(values, labels, h.fine_to_coarse)
            )
            < 1e-10
        )


def test_normalization_flag():
    # Uniform logits: each subset entropy is log|S|, so the normalized
    # per-term value is exactly 1 wherever |S| > 1.
    h = LabelHierarchy.from_fine_to_coarse([0, 0, 0, 1, 1, 1])
    b = batch(np.zeros((1, 6)), [0])
    plain = hierarchical_complement_entropy(b, h)
    normed = hierarchical_complement_entropy(b, h, normalize=True)
    assert plain.value == pytest.approx(math.log(2) + math.log(3), abs=1e-12)
    assert normed.value == pytest.approx(2.0, abs=1e-12)
    # off by default
    assert hierarchical_complement_entropy(b, h).value == plain.value


def test_normalization_skips_tiny_subsets():
    h = LabelHierarchy.from_fine_to_coarse([0, 0, 1, 1])
    b = batch(np.zeros((1, 4)), [0])  # inner subset is a singleton
    normed = hierarchical_complement_entropy(b, h, normalize=True)
    assert normed.value == pytest.approx(1.0, abs=1e-12)  # outer pair only


def test_per_sample_values_mean_to_value():
    rng = np.random.default_rng(61)
    values, labels, h = _gradient_case(rng)
    for res in (
        cross_entropy(batch(values, labels)),
        complement_entropy(batch(values, labels)),
        hierarchical_complement_entropy(batch(values, labels), h),
    ):
        assert res.per_sample.shape == (values.shape[0],)
        assert res.value == pytest.approx(res.per_sample.mean(), abs=1e-15)


def test_logit_batch_validation():
    with pytest.raises(ObjectiveError):
        LogitBatch(np.array([[np.inf, 0.0]]), np.array([0]))
    with pytest.raises(ObjectiveError):
        LogitBatch(np.zeros((2, 3)), np.array([0, 3]))
    with pytest.raises(ObjectiveError):
        LogitBatch(np.zeros(3), np.array([0]))
    with pytest.raises(ObjectiveError):
        LogitBatch(np.zeros((2, 3)), np.array([0]))
