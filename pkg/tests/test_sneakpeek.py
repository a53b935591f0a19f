import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import profile
from peeksched import sneakpeek as sp
from peeksched import workload
from peeksched.errors import DimensionError, InsufficientCorpus, MissingPriorHint
from peeksched.sneakpeek import DirichletBelief, Evidence, NeighborIndex, PriorKind


def test_priors():
    np.testing.assert_array_equal(sp.make_prior(PriorKind.UNINFORMATIVE, 2).alpha, [0.5, 0.5])
    np.testing.assert_array_equal(sp.make_prior("weak", 2, [0.95, 0.05]).alpha, [0.95, 0.05])
    np.testing.assert_allclose(sp.make_prior("strong", 2, [0.95, 0.05], 12).alpha, [11.4, 0.6])
    # zero-frequency classes keep a positive concentration
    assert sp.make_prior("strong", 3, [1.0, 0.0, 0.0], 12).alpha[1] == sp.STRONG_PRIOR_FLOOR
    with pytest.raises(MissingPriorHint):
        sp.make_prior("weak", 2)
    with pytest.raises(MissingPriorHint):
        sp.make_prior("strong", 2, [0.5, 0.5])


def test_belief_rejects_nonpositive():
    with pytest.raises(ValueError):
        DirichletBelief([0.5, 0.0])


def test_knn_evidence():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0], [6.0, 5.0], [5.0, 6.0], [9.0, 9.0]])
    labels = [0, 0, 0, 1, 1, 1, 1]
    idx = NeighborIndex(pts, labels)
    np.testing.assert_array_equal(sp.knn_evidence([5.0, 5.0], idx, 1).counts, [0, 1])
    np.testing.assert_array_equal(sp.knn_evidence([2.0, 2.0], idx, 5).counts, [3, 2])
    single = NeighborIndex(pts, [0] * 7)
    np.testing.assert_array_equal(sp.knn_evidence([3.0, 3.0], single, 5).counts, [5])
    with pytest.raises(DimensionError):
        sp.knn_evidence([1.0, 2.0, 3.0], idx, 1)
    with pytest.raises(InsufficientCorpus):
        sp.knn_evidence([1.0, 2.0], idx, 8)


def test_knn_ties_use_insertion_order():
    # four points equidistant from the origin, labels alternate
    idx = NeighborIndex([[1, 0], [0, 1], [-1, 0], [0, -1]], [1, 0, 0, 1])
    np.testing.assert_array_equal(idx.neighbors([0, 0], 2), [0, 1])
    np.testing.assert_array_equal(sp.knn_evidence([0, 0], idx, 1).counts, [0, 1])


def test_posterior_examples():
    prior = sp.make_prior("uninformative", 2)
    np.testing.assert_array_equal(sp.posterior(prior, Evidence([0, 0])).alpha, prior.alpha)
    np.testing.assert_array_equal(sp.posterior(prior, Evidence([2, 3])).alpha, [2.5, 3.5])
    np.testing.assert_array_equal(sp.posterior(DirichletBelief([1, 1, 1]), Evidence([0, 5, 0])).alpha, [1, 6, 1])
    with pytest.raises(DimensionError):
        sp.posterior(prior, Evidence([1, 2, 3]))


def test_theta_estimate_examples():
    np.testing.assert_allclose(sp.theta_estimate(DirichletBelief([2.5, 3.5])), [2.5 / 6, 3.5 / 6])
    np.testing.assert_allclose(sp.theta_estimate(DirichletBelief([3, 3, 3])), [1 / 3] * 3)
    np.testing.assert_allclose(sp.theta_estimate(DirichletBelief([1, 6, 1])), [0.125, 0.75, 0.125])


def test_dynamic_accuracy():
    m = profile([0.95, 0.40])
    assert sp.dynamic_accuracy(m.test_frequencies, m) == pytest.approx(m.profiled_accuracy, abs=1e-15)
    assert sp.dynamic_accuracy([0.0, 1.0], m) == pytest.approx(0.40)
    assert sp.dynamic_accuracy([0.4167, 0.5833], m) == pytest.approx(0.6292, abs=5e-5)


def test_simulated_estimator():
    for seed in range(5):
        np.testing.assert_array_equal(sp.simulated_estimator(1.0, 1, 3, 5, seed).counts, [0, 5, 0])
        np.testing.assert_array_equal(sp.simulated_estimator(0.0, 0, 2, 5, seed).counts, [0, 5])
    c = sp.simulated_estimator(0.5, 0, 2, 10_000, 42).counts
    assert abs(c[0] - 5000) <= 3 * np.sqrt(10_000 * 0.25)
    assert c.sum() == 10_000


def test_profile_sneakpeek_separable():
    rng = np.random.default_rng(0)
    pts = np.vstack([rng.normal(0, 0.1, (20, 2)), rng.normal(10, 0.1, (20, 2))])
    labels = [0] * 20 + [1] * 20
    idx = NeighborIndex(pts, labels)
    holdout = [(p, lab) for p, lab in zip(pts + 0.01, labels)]
    prof = sp.profile_sneakpeek(idx, 1, sp.make_prior("uninformative", 2), holdout)
    assert prof.profiled_accuracy == 1.0
    assert prof.infer_latency == 0.0 and prof.swap_latency == 0.0
    one_class = [(p, 0) for p in pts[:20]]
    prof1 = sp.profile_sneakpeek(idx, 1, sp.make_prior("uninformative", 2), one_class)
    assert prof1.per_class_recall[0] == 1.0
    with pytest.raises(InsufficientCorpus):
        sp.profile_sneakpeek(idx, 1, sp.make_prior("uninformative", 2), [])


def test_profile_sneakpeek_default_scenario_pinned():
    scen = workload.gen_scenario(workload.builtin("default_trio"), 0)
    accs = []
    for app_id, app in scen.apps.items():
        prior = sp.make_prior("uninformative", app.label_count)
        accs.append(sp.profile_sneakpeek(scen.corpora[app_id], 5, prior, scen.holdouts[app_id]).profiled_accuracy)
    assert all(0.5 < a < 1.0 for a in accs)


def test_split_groups_examples():
    ids = ["a", "b", "c", "d"]
    same = {i: np.array([0.9, 0.1]) for i in ids}
    assert sp.split_groups(ids, same) == [ids]
    halves = {"a": np.array([0.9, 0.1]), "b": np.array([0.1, 0.9]), "c": np.array([0.9, 0.1]), "d": np.array([0.1, 0.9])}
    assert sp.split_groups(ids, halves) == [["a", "c"], ["b", "d"]]
    flat = {i: np.array([0.4, 0.3, 0.3]) for i in ids}
    assert sp.split_groups(ids, flat) == [ids]


def test_split_residual_joins_largest():
    thetas = {
        "a": np.array([0.9, 0.05, 0.05]),
        "b": np.array([0.05, 0.9, 0.05]),
        "c": np.array([0.05, 0.9, 0.05]),
        "d": np.array([0.4, 0.3, 0.3]),
    }
    assert sp.split_groups(["a", "b", "c", "d"], thetas) == [["a"], ["b", "c", "d"]]


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0.01, 50.0), min_size=1, max_size=10).flatmap(
        lambda alpha: st.tuples(st.just(alpha), st.lists(st.integers(0, 100), min_size=len(alpha), max_size=len(alpha)))
    )
)
def test_posterior_is_exact_sum(case):
    alpha, counts = case
    post = sp.posterior(DirichletBelief(alpha), Evidence(counts))
    assert np.array_equal(post.alpha, np.asarray(alpha) + np.asarray(counts))
    theta = sp.theta_estimate(post)
    assert abs(theta.sum() - 1.0) < 1e-12 and np.all(theta > 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(0, 40), st.data())
def test_split_partitions_the_group(label_count, n, data):
    ids = [f"r{i}" for i in range(n)]
    thetas = {
        i: np.asarray(data.draw(st.lists(st.floats(0.01, 1.0), min_size=label_count, max_size=label_count)))
        for i in ids
    }
    thetas = {i: t / t.sum() for i, t in thetas.items()}
    parts = sp.split_groups(ids, thetas)
    assert sorted(x for p in parts for x in p) == sorted(ids)
    assert all(parts)
    for p in parts:
        assert p == [i for i in ids if i in set(p)]
