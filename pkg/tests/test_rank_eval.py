import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import auc_bruteforce, mrr_scan, ndcg_direct
from uigaug.rank_eval import Candidate, auc, evaluate, mrr, ndcg_at_k, read_scores, user_auc, user_ndcg, user_rr


def cands(scores, labels):
    return [Candidate(f"d{i}", float(s), bool(b)) for i, (s, b) in enumerate(zip(scores, labels))]


def random_table(rng, n_users=3, size=(2, 9), ties=True):
    out = {}
    for u in range(n_users):
        n = int(rng.integers(*size))
        scores = rng.integers(0, 5, n) / 4 if ties else rng.normal(size=n)
        labels = rng.random(n) < 0.4
        labels[0], labels[-1] = True, False
        out[f"u{u}"] = cands(scores, labels)
    return out


# ------------------------------------------------------------------- AUC


def test_auc_extremes():
    assert user_auc(cands([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])) == 1.0
    assert user_auc(cands([0.5] * 4, [1, 0, 1, 0])) == 0.0
    with pytest.raises(ValueError):
        user_auc(cands([0.5, 0.4], [1, 1]))
    with pytest.raises(ValueError):
        user_auc(cands([float("nan"), 0.4], [1, 0]))


@settings(max_examples=200)
@given(st.integers(0, 10**6))
def test_auc_matches_double_loop(seed):
    rng = np.random.default_rng(seed)
    c = random_table(rng, 1, (2, 7))["u0"]
    pos = [x.score for x in c if x.positive]
    neg = [x.score for x in c if not x.positive]
    assert user_auc(c) == auc_bruteforce(pos, neg)


def test_auc_pooled_vs_mean():
    sc = {"a": cands([1, 0], [1, 0]), "b": cands([0, 1], [1, 0])}
    assert auc(sc) == 0.5
    assert auc(sc, pooled=True) == auc_bruteforce([1.0, 0.0], [0.0, 1.0])


@settings(max_examples=50)
@given(st.integers(0, 10**6))
def test_auc_monotone_invariance(seed):
    rng = np.random.default_rng(seed)
    sc = random_table(rng)
    warped = {u: [Candidate(c.doc, np.exp(3 * c.score) - 7, c.positive) for c in cs] for u, cs in sc.items()}
    assert auc(sc) == auc(warped)


# ------------------------------------------------------------------- MRR


def test_mrr_examples(caplog):
    assert mrr({"a": cands([3, 2, 1], [1, 0, 0]), "b": cands([5, 1], [1, 0])}) == 1.0
    assert user_rr(cands([9, 8, 7, 6, 5], [0, 0, 0, 1, 0])) == 0.25
    assert mrr({"a": cands([1, 2], [0, 1]), "b": cands([1, 2], [0, 0])}) == 1.0
    assert "excluded" in caplog.text


def test_mrr_ties_keep_input_order():
    assert user_rr(cands([1, 1, 1], [0, 1, 0])) == 0.5


@settings(max_examples=200)
@given(st.integers(0, 10**6))
def test_mrr_matches_scan(seed):
    rng = np.random.default_rng(seed)
    sc = random_table(rng)
    want = np.mean([mrr_scan([(c.score, c.positive) for c in sc[u]]) for u in sorted(sc)])
    assert mrr(sc) == pytest.approx(want, abs=0)


# ------------------------------------------------------------------ nDCG


def test_ndcg_ideal_and_k1():
    c = cands([0.9, 0.7, 0.2, 0.1], [1, 1, 0, 0])
    assert user_ndcg(c, 4) == 1.0
    c = cands([0.9, 0.6, 0.3], [0, 1, 1])
    assert user_ndcg(c, 1) == 0.0
    c = cands([0.3, 0.9, 0.6], [1, 0, 1])
    assert user_ndcg(c, 1) == 0.0
    assert user_ndcg(cands([0.2, 0.9], [1, 0]), 2) == pytest.approx((0.2 / np.log2(3)) / 0.2)


def test_ndcg_zero_idcg_and_binary():
    assert user_ndcg(cands([-1.0, 0.5], [1, 0]), 2) == 0.0
    assert user_ndcg(cands([-1.0, 0.5], [1, 0]), 2, binary=True) == pytest.approx(1 / np.log2(3))
    with pytest.raises(ValueError):
        user_ndcg(cands([1.0], [1]), 0)


@settings(max_examples=200)
@given(st.integers(0, 10**6), st.integers(1, 6))
def test_ndcg_matches_direct_sum(seed, k):
    rng = np.random.default_rng(seed)
    sc = random_table(rng)
    want = np.mean([ndcg_direct([(c.score, c.positive) for c in sc[u]], k) for u in sorted(sc)])
    assert ndcg_at_k(sc, k) == pytest.approx(want, abs=1e-15)


@given(st.integers(0, 10**6), st.floats(0.1, 10), st.floats(-3, 3))
def test_order_preserving_invariances(seed, scale, shift):
    rng = np.random.default_rng(seed)
    sc = random_table(rng, ties=False)
    shifted = {u: [Candidate(c.doc, c.score + shift, c.positive) for c in cs] for u, cs in sc.items()}
    scaled = {u: [Candidate(c.doc, c.score * scale, c.positive) for c in cs] for u, cs in sc.items()}
    assert mrr(shifted) == mrr(sc)
    assert ndcg_at_k(shifted, 5, binary=True) == pytest.approx(ndcg_at_k(sc, 5, binary=True), abs=1e-15)
    # score-as-gain is scale-free but not shift-free
    assert ndcg_at_k(scaled, 5) == pytest.approx(ndcg_at_k(sc, 5), rel=1e-12)


@settings(max_examples=50)
@given(st.integers(0, 10**6))
def test_all_metrics_in_unit_interval(seed):
    rep = evaluate(random_table(np.random.default_rng(seed)))
    for v in (rep.auc, rep.mrr, *rep.ndcg.values()):
        assert 0.0 <= v <= 1.0


def test_read_scores(tmp_path):
    (tmp_path / "s.csv").write_text("user,doc,score,label\na,x,0.9,1\na,y,0.1,0\n")
    (tmp_path / "s.jsonl").write_text('{"user":"a","doc":"x","score":0.9,"label":true}\n{"user":"a","doc":"y","score":0.1,"label":false}\n')
    assert read_scores(tmp_path / "s.csv") == read_scores(tmp_path / "s.jsonl")
    assert evaluate(read_scores(tmp_path / "s.csv")).to_dict()["auc"] == 1.0
    (tmp_path / "bad.csv").write_text("user,doc,score,label\na,x,high,1\n")
    with pytest.raises(ValueError, match="row 1"):
        read_scores(tmp_path / "bad.csv")
