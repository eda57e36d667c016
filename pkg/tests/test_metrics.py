import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from fairac.metrics import (
    EvalReport,
    accuracy,
    auc,
    build_similarity,
    consistency,
    equal_opportunity,
    evaluate,
    statistical_parity,
)

from helpers import (
    brute_accuracy,
    brute_auc,
    brute_consistency,
    brute_deo,
    brute_dsp,
    brute_topk_cosine,
)


def test_accuracy_examples():
    y = np.array([0, 1, 1, 0])
    assert accuracy(y, y) == 1.0
    assert accuracy(1 - y, y) == 0.0
    assert accuracy([0, 1, 1, 1], y) == 0.75
    assert accuracy([9, 0, 1, 1, 9], [5, 1, 1, 0, 5], nodes=[1, 2, 3]) == pytest.approx(1 / 3)


def test_auc_examples():
    y = [1, 1, 0, 0]
    assert auc([0.9, 0.8, 0.2, 0.1], y) == 1.0
    assert auc([0.1, 0.2, 0.8, 0.9], y) == 0.0
    assert auc([0.9, 0.8, 0.8, 0.1], y) == 0.875
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [1, 1])


def test_statistical_parity_examples():
    assert statistical_parity([1, 0, 1, 0], [0, 0, 1, 1]) == 0.0
    assert statistical_parity([1, 1, 0, 0], [0, 0, 1, 1]) == 1.0
    assert statistical_parity([1, 0, 1, 1], [0, 0, 1, 1]) == 0.5
    with pytest.raises(ValueError):
        statistical_parity([1, 0], [1, 1])


def test_equal_opportunity_examples():
    y = np.array([1, 0, 1, 1])
    assert equal_opportunity(y, [0, 0, 1, 1], y) == 0.0
    assert equal_opportunity([1, 0, 1, 0], [0, 0, 1, 1], [1, 1, 1, 1]) == 0.0
    assert equal_opportunity([1, 1, 1, 0], [0, 0, 1, 1], [1, 1, 1, 1]) == 0.5
    with pytest.raises(ValueError):
        equal_opportunity([1, 1], [0, 1], [1, 0])


def test_similarity_examples():
    x = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 0.0], [0.0, 3.0]])
    S = build_similarity(x, k=3).toarray()
    assert S[0, 1] == pytest.approx(1.0)
    assert S[0, 3] == 0.0  # orthogonal
    assert np.all(S[2] == 0) and np.all(S[:, 2] == 0)  # zero row
    assert np.all(np.diag(S) == 0)


def test_consistency_examples():
    S = sp.csr_matrix(np.ones((3, 3)) - np.eye(3))
    assert consistency([1, 1, 1], [1, 1, 1], S) == 1.0
    S2 = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    # |y0 - yhat1| + |y1 - yhat0| = |1 - 1| + |0 - 0| = 0
    assert consistency([0, 1], [1, 0], S2) == 1.0
    assert consistency([0, 1], [1, 0], S2, "prediction_pair") == 0.0
    with pytest.raises(ValueError):
        consistency([0, 1], [1, 0], sp.csr_matrix((2, 2)))
    with pytest.raises(ValueError):
        consistency([0, 1], [1, 0], S2, "other")


def _instance(rng):
    n = int(rng.integers(4, 21))
    while True:
        y = rng.integers(0, 2, n)
        s = rng.integers(0, 2, n)
        if (
            len(set(y)) == 2
            and len(set(s)) == 2
            and ((s == 0) & (y == 1)).any()
            and ((s == 1) & (y == 1)).any()
        ):
            break
    scores = np.round(rng.random(n), 1)  # coarse grid forces ties
    preds = (scores > 0.5).astype(int)
    x = rng.normal(size=(n, 3))
    return y, s, scores, preds, x


def test_metrics_match_brute_force_on_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        y, s, scores, preds, x = _instance(rng)
        assert accuracy(preds, y) == brute_accuracy(preds, y)
        assert auc(scores, y) == pytest.approx(brute_auc(scores, y), abs=1e-12)
        assert statistical_parity(preds, s) == brute_dsp(preds, s)
        assert equal_opportunity(preds, s, y) == brute_deo(preds, s, y)
        k = int(rng.integers(1, 6))
        S = build_similarity(x, k=k)
        np.testing.assert_allclose(S.toarray(), brute_topk_cosine(x, k), atol=1e-12)
        dense = S.toarray()
        if dense.sum() > 0:
            for mode in ("label_pair", "prediction_pair"):
                assert consistency(preds, y, S, mode) == pytest.approx(
                    brute_consistency(preds, y, dense, mode), abs=1e-12
                )


def test_similarity_chunking_does_not_change_result():
    x = np.random.default_rng(0).normal(size=(50, 4))
    a = build_similarity(x, k=5, chunk=7).toarray()
    b = build_similarity(x, k=5, chunk=1024).toarray()
    assert np.array_equal(a, b)


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 30), st.integers(1, 12), st.integers(0, 2**31))
def test_similarity_invariants(n, k, seed):
    x = np.random.default_rng(seed).normal(size=(n, 3))
    S = build_similarity(x, k=k)
    D = S.toarray()
    np.testing.assert_array_equal(D, D.T)
    assert D.min() >= 0 and np.all(np.diag(D) == 0)
    # every row keeps its own top-k; symmetrization may add entries
    pre = brute_topk_cosine(x, k)
    assert np.all((D > 0) >= (pre > 0))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.floats(1e-3, 1e3))
def test_consistency_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    n = 12
    S = build_similarity(rng.normal(size=(n, 3)), k=4)
    y, p = rng.integers(0, 2, n), rng.integers(0, 2, n)
    assert consistency(p, y, S * c) == pytest.approx(consistency(p, y, S), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_group_metrics_symmetric_in_sensitive_relabel(seed):
    rng = np.random.default_rng(seed)
    y, s, _, p, _ = _instance(rng)
    assert statistical_parity(p, s) == statistical_parity(p, 1 - s)
    assert equal_opportunity(p, s, y) == equal_opportunity(p, 1 - s, y)
    assert 0 <= statistical_parity(p, s) <= 1 and 0 <= equal_opportunity(p, s, y) <= 1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_auc_invariant_to_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    y, _, scores, _, _ = _instance(rng)
    assert auc(np.exp(3 * scores) - 7, y) == auc(scores, y)


def test_evaluate_report():
    rng = np.random.default_rng(0)
    y, s, scores, preds, x = _instance(rng)
    S = build_similarity(x, k=3)
    r = evaluate(scores, preds, y, s, S)
    assert r.dsp_plus_deo == r.dsp + r.deo
    assert r.consistency == pytest.approx(100 * consistency(preds, y, S))
    assert EvalReport.from_dict(r.to_dict()) == r
    y2 = y.copy()
    y2[0] = -1
    with pytest.raises(ValueError):
        evaluate(scores, preds, y2, s, S)
