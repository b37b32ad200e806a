import os

import numpy as np
import pytest

from hcot import (
    LabelHierarchy,
    LogitBatch,
    Network,
    coarse_error,
    export_embeddings,
    fine_error,
    flat_hierarchy,
    identity_hierarchy,
    mass_summary,
    mlp_spec,
    probability_profile,
    staircase_gap,
    topk_error,
)
from hcot.metrics import (
    MetricsError,
    MetricsRecord,
    penultimate_activations,
    read_metrics_csv,
    read_profile_csv,
    write_metrics_csv,
    write_profile_csv,
)
from hcot.network import dense
from oracles import random_two_level_hierarchy


def onehot_batch(labels, k, hot=10.0):
    z = np.zeros((len(labels), k))
    z[np.arange(len(labels)), labels] = hot
    return z


# ---------------------------------------------------------------------------
# error rates
# ---------------------------------------------------------------------------

def test_fine_error_trivial_cases():
    labels = np.array([0, 3, 7])
    assert fine_error(LogitBatch(onehot_batch(labels, 9), labels)) == 0.0
    wrong = (labels + 1) % 9
    assert fine_error(LogitBatch(onehot_batch(wrong, 9), labels)) == 1.0


def test_fine_error_random_logits_monte_carlo():
    rng = np.random.default_rng(123)
    z = rng.random((10_000, 100))
    y = rng.integers(0, 100, 10_000)
    assert fine_error(LogitBatch(z, y)) == pytest.approx(0.99, abs=0.01)


def test_fine_error_tie_breaks_to_lowest_index():
    z = np.zeros((1, 4))  # all tied; argmax picks index 0
    assert fine_error(LogitBatch(z, np.array([0]))) == 0.0
    assert fine_error(LogitBatch(z, np.array([1]))) == 1.0


def test_coarse_error_wrong_sibling_not_coarse_error():
    h = LabelHierarchy.from_fine_to_coarse([0, 0, 1, 1])
    labels = np.array([0])
    sibling_pred = LogitBatch(onehot_batch(np.array([1]), 4), labels)
    assert fine_error(sibling_pred) == 1.0
    assert coarse_error(sibling_pred, h) == 0.0
    outsider_pred = LogitBatch(onehot_batch(np.array([2]), 4), labels)
    assert coarse_error(outsider_pred, h) == 1.0


def test_coarse_error_flat_and_identity():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(50, 8))
    y = rng.integers(0, 8, 50)
    b = LogitBatch(z, y)
    assert coarse_error(b, flat_hierarchy(8)) == 0.0
    assert coarse_error(b, identity_hierarchy(8)) == fine_error(b)


def test_coarse_error_never_exceeds_fine_error():
    rng = np.random.default_rng(5)
    for _ in range(30):
        k = int(rng.integers(2, 12))
        h = random_two_level_hierarchy(rng, k)
        b = LogitBatch(rng.normal(size=(40, k)), rng.integers(0, k, 40))
        assert coarse_error(b, h) <= fine_error(b)


def test_topk_error_trivial_cases():
    rng = np.random.default_rng(7)
    z = rng.normal(size=(30, 10))
    y = rng.integers(0, 10, 30)
    b = LogitBatch(z, y)
    assert topk_error(b, 10) == 0.0
    assert topk_error(b, 1) == fine_error(b)


def test_topk_boundary_rank_not_an_error():
    # Ground truth holds exactly the k-th largest logit.
    z = np.array([[5.0, 4.0, 3.0, 2.0]])
    b = LogitBatch(z, np.array([2]))  # ranked 3rd
    assert topk_error(b, 3) == 0.0
    assert topk_error(b, 2) == 1.0


def test_topk_monotone_in_k():
    rng = np.random.default_rng(9)
    b = LogitBatch(rng.normal(size=(100, 12)), rng.integers(0, 12, 100))
    errors = [topk_error(b, k) for k in range(1, 13)]
    assert all(a >= b_ for a, b_ in zip(errors, errors[1:]))


def test_topk_out_of_range():
    b = LogitBatch(np.zeros((1, 4)), np.array([0]))
    with pytest.raises(MetricsError):
        topk_error(b, 0)
    with pytest.raises(MetricsError):
        topk_error(b, 5)


# ---------------------------------------------------------------------------
# masses and profiles
# ---------------------------------------------------------------------------

def test_mass_summary_conserves_probability():
    rng = np.random.default_rng(11)
    for _ in range(20):
        k = int(rng.integers(2, 10))
        h = random_two_level_hierarchy(rng, k)
        b = LogitBatch(rng.normal(size=(25, k)), rng.integers(0, k, 25))
        g, inner, outer = mass_summary(b, h)
        assert g + inner + outer == pytest.approx(1.0, abs=1e-12)
        assert g >= 0 and inner >= 0 and outer >= 0


def test_profile_uniform_logits_flat_at_one_over_k():
    h = LabelHierarchy.from_fine_to_coarse([0, 0, 0, 1, 1, 1])
    b = LogitBatch(np.zeros((10, 6)), np.arange(10) % 6)
    for row in probability_profile(b, h):
        assert row.mean_probability == pytest.approx(1 / 6, abs=1e-12)


def test_profile_structure_and_rank_counts():
    h = LabelHierarchy.from_fine_to_coarse([0, 0, 0, 1, 1, 1])
    rng = np.random.default_rng(13)
    b = LogitBatch(rng.normal(size=(20, 6)), rng.integers(0, 6, 20))
    rows = probability_profile(b, h)
    groups = {}
    for row in rows:
        groups.setdefault(row.rank_group, []).append(row.rank)
    assert groups["g"] == [0]
    assert groups["inner"] == [0, 1]  # two siblings per sample
    assert groups["outer"] == [0, 1, 2]  # three non-relatives
    inner_rows = sorted((r.rank, r.mean_probability) for r in rows if r.rank_group == "inner")
    assert inner_rows[0][1] >= inner_rows[1][1]  # sorted descending by construction


def test_profile_unequal_groups():
    h = LabelHierarchy.from_fine_to_coarse([0, 0, 0, 1])  # group sizes 3 and 1
    rng = np.random.default_rng(15)
    b = LogitBatch(rng.normal(size=(8, 4)), np.array([0, 0, 3, 3, 1, 2, 3, 0]))
    rows = probability_profile(b, h)
    inner_ranks = [r.rank for r in rows if r.rank_group == "inner"]
    # rows with g in the big group have 2 siblings, rows with g=3 have none
    assert inner_ranks == [0, 1]


def test_staircase_gap_sign_conventions():
    rng = np.random.default_rng(17)
    z = rng.normal(size=(30, 9))
    y = rng.integers(0, 9, 30)
    b = LogitBatch(z, y)
    assert staircase_gap(b, flat_hierarchy(9)) > 0.0  # only inner side populated
    assert staircase_gap(b, identity_hierarchy(9)) < 0.0  # only outer side
    flat_gap = staircase_gap(b, flat_hierarchy(9))
    ident_gap = staircase_gap(b, identity_hierarchy(9))
    assert flat_gap == pytest.approx(-ident_gap, abs=1e-12)


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------

def test_export_embeddings_shape_and_determinism(tmp_path):
    net = Network(mlp_spec(6, [5], 4), seed=19)
    rng = np.random.default_rng(21)
    inputs = rng.normal(size=(12, 6))
    labels = rng.integers(0, 4, 12)
    h = LabelHierarchy.from_fine_to_coarse([0, 0, 1, 1])
    path_a = os.path.join(tmp_path, "a.csv")
    path_b = os.path.join(tmp_path, "b.csv")
    count = export_embeddings(net, inputs, labels, h, path_a)
    export_embeddings(net, inputs, labels, h, path_b)
    assert count == 12
    with open(path_a, "rb") as fa, open(path_b, "rb") as fb:
        assert fa.read() == fb.read()
    with open(path_a) as fh:
        header = fh.readline().strip().split(",")
        first = fh.readline().strip().split(",")
        n_rows = sum(1 for _ in fh) + 1
    assert header == [f"dim_{i}" for i in range(5)] + ["fine_label", "coarse_label"]
    assert len(first) == 5 + 2
    assert n_rows == 12


def test_export_embeddings_too_shallow():
    net = Network([dense(4, 3)], seed=0)
    h = flat_hierarchy(3)
    with pytest.raises(MetricsError):
        export_embeddings(net, np.zeros((2, 4)), np.zeros(2, dtype=int), h, "/dev/null")


def test_penultimate_matches_hidden_width():
    net = Network(mlp_spec(6, [5], 4), seed=23)
    acts = penultimate_activations(net, np.zeros((3, 6)))
    assert acts.shape == (3, 5)


# ---------------------------------------------------------------------------
# CSV round trips
# ---------------------------------------------------------------------------

def test_metrics_csv_round_trip(tmp_path):
    records = [
        MetricsRecord(0, 0.5, 0.25, 0.1, 0.4, 0.3, 0.3, 2.1970000000000001, 1.9),
        MetricsRecord(1, 0.25, 0.125, 0.05, 0.6, 0.2, 0.2, 1.1, 1.8),
    ]
    path = os.path.join(tmp_path, "metrics.csv")
    write_metrics_csv(records, path)
    assert read_metrics_csv(path) == records
    with open(path) as fh:
        header = fh.readline().strip()
    assert header == (
        "epoch,fine_error,coarse_error,top5_error,mean_mass_g,"
        "mean_mass_inner,mean_mass_outer,xe_loss,hce_loss"
    )


def test_profile_csv_round_trip(tmp_path):
    h = LabelHierarchy.from_fine_to_coarse([0, 0, 1, 1])
    rng = np.random.default_rng(25)
    b = LogitBatch(rng.normal(size=(6, 4)), rng.integers(0, 4, 6))
    rows = probability_profile(b, h)
    path = os.path.join(tmp_path, "profile.csv")
    write_profile_csv(rows, path)
    loaded = read_profile_csv(path)
    assert [(r.rank_group, r.rank) for r in loaded] == [(r.rank_group, r.rank) for r in rows]
    for a, b_ in zip(loaded, rows):
        assert a.mean_probability == b_.mean_probability
