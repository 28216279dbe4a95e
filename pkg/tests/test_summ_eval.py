import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import su4_oracle
from uigaug.summ_eval import (
    EvalInstance,
    PersevalParams,
    acp,
    adp,
    degress_summary,
    edp,
    pairwise_softmax_weight,
    perseval,
    read_instances,
    rouge_su4,
    skip_bigrams,
    softmax_weight,
    write_instances,
)
from uigaug.uig import DocRecord

DOC = DocRecord("D", "a title", ("first line.", "second line."), "t")
words = st.lists(st.sampled_from("a b c d e f".split()), max_size=12).map(" ".join)


# ------------------------------------------------------------------- ROUGE


def test_identity_and_disjoint():
    s = "the cat sat on the mat"
    r = rouge_su4(s, s)
    assert (r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0)
    assert rouge_su4("a b c", "x y z").f1 == 0.0
    assert rouge_su4("", "a b").f1 == 0.0 and rouge_su4("", "").precision == 0.0


def test_abc_acb_fixture():
    r = rouge_su4("a b c", "a c b")
    assert (r.precision, r.recall, r.f1) == pytest.approx((2 / 3, 2 / 3, 2 / 3), abs=1e-15)
    assert su4_oracle("a b c", "a c b") == pytest.approx((2 / 3, 2 / 3, 2 / 3), abs=1e-15)
    assert set(skip_bigrams("a c b".split())) == {("a", "c"), ("c", "b"), ("a", "b")}


def test_gap_limit():
    toks = list("abcdefg")
    pairs = skip_bigrams(toks)
    assert ("a", "f") in pairs and ("a", "g") not in pairs  # four vs five in between


def test_sentences_do_not_bridge():
    assert rouge_su4("a b. c d.", "b c").f1 == 0.0
    assert rouge_su4(["a b", "c d"], "a b. c d.").f1 == 1.0


def test_unigram_variant():
    r = rouge_su4("a b", "b a", unigrams=True)
    assert r.f1 == pytest.approx(2 / 3)


@settings(max_examples=200)
@given(words, words)
def test_su4_matches_exhaustive_oracle(g, r):
    got = rouge_su4(g, r)
    assert (got.precision, got.recall, got.f1) == su4_oracle(g, r)


@given(words, words)
def test_swap_symmetry(a, b):
    x, y = rouge_su4(a, b), rouge_su4(b, a)
    assert x.precision == y.recall and x.recall == y.precision
    assert x.f1 == pytest.approx(y.f1, abs=1e-15)


# ----------------------------------------------------------------- DEGRESS


def table_divergence(pairs):
    """Divergence read from a symmetric lookup keyed on text labels."""

    def div(a, b):
        if isinstance(b, list):
            b = "DOC"
        if a == b:
            return 0.0
        return pairs[frozenset((a, b))]

    return div


def inst(users, gold, gen, doc=DOC):
    return EvalInstance(doc, tuple(users), dict(zip(users, gold)), dict(zip(users, gen)))


def test_identical_generated_is_unresponsive():
    users = ["u1", "u2", "u3"]
    i = inst(users, ["g one", "g two words", "g three more words"], ["the same text"] * 3)
    v = degress_summary(i, "u1")
    assert v < 1e-6


def test_equal_weights_equal_divergence_gives_one():
    # every text equally far from the document so the weights are uniform
    p = {
        frozenset(("g1", "g2")): 0.4, frozenset(("g1", "g3")): 0.7, frozenset(("g2", "g3")): 0.2,
        frozenset(("s1", "s2")): 0.4, frozenset(("s1", "s3")): 0.7, frozenset(("s2", "s3")): 0.2,
    }
    for t in ("g1", "g2", "g3", "s1", "s2", "s3"):
        p[frozenset((t, "DOC"))] = 0.5
    params = PersevalParams(divergence=table_divergence(p))
    i = inst(["a", "b", "c"], ["g1", "g2", "g3"], ["s1", "s2", "s3"])
    for u in "abc":
        assert degress_summary(i, u, params) == 1.0


def degress_oracle(G, S, gd, sd, j, eps=1e-8):
    n = len(gd)
    wg = [math.exp(x) for x in gd]
    ws = [math.exp(x) for x in sd]
    acc = 0.0
    for k in range(n):
        if k == j:
            continue
        x = wg[j] / sum(wg) * G[j][k]
        y = ws[j] / sum(ws) * S[j][k]
        acc += (min(x, y) + eps) / (max(x, y) + eps)
    return acc / (n - 1)


def test_three_user_term_expansion():
    G = [[0, 0.3, 0.9], [0.3, 0, 0.5], [0.9, 0.5, 0]]
    S = [[0, 0.6, 0.1], [0.6, 0, 0.8], [0.1, 0.8, 0]]
    gd, sd = [0.2, 0.6, 0.4], [0.9, 0.1, 0.3]
    p = {}
    for j in range(3):
        p[frozenset((f"g{j}", "DOC"))] = gd[j]
        p[frozenset((f"s{j}", "DOC"))] = sd[j]
        for k in range(j + 1, 3):
            p[frozenset((f"g{j}", f"g{k}"))] = G[j][k]
            p[frozenset((f"s{j}", f"s{k}"))] = S[j][k]
    params = PersevalParams(divergence=table_divergence(p))
    i = inst(["a", "b", "c"], ["g0", "g1", "g2"], ["s0", "s1", "s2"])
    for j, u in enumerate("abc"):
        assert degress_summary(i, u, params) == pytest.approx(degress_oracle(G, S, gd, sd, j), rel=1e-12)


def test_weight_policies():
    v = np.array([0.1, 0.5, 0.9])
    assert sum(softmax_weight(v, j, 0) for j in range(3)) == pytest.approx(1.0)
    assert pairwise_softmax_weight(v, 0, 1) + pairwise_softmax_weight(v, 1, 0) == pytest.approx(1.0)


def test_single_user_rejected():
    with pytest.raises(ValueError):
        degress_summary(inst(["a"], ["x"], ["y"]), "a")


# --------------------------------------------------------------- penalties


def logistic(e, x):
    return 1.0 / (1.0 + 10.0**e * math.exp(-x))


def test_penalty_closed_forms():
    assert adp(0.0) == pytest.approx(1 / (1 + 1e4), rel=1e-12)
    assert acp(0.0, 0.0, 0.0) == pytest.approx(1 / (1 + 1e4), rel=1e-12)
    assert edp(2e-4) == pytest.approx(1 - 1 / (1 + 1e3 * math.exp(-10 * 2e-4)), rel=1e-12)
    assert adp(0.3) == pytest.approx(logistic(4, 10 * 0.3 / (0.7 + 1e-8)), rel=1e-12)
    assert adp(1.0) == pytest.approx(1.0)
    assert edp(50.0) == pytest.approx(0.0, abs=1e-12)


@given(st.floats(0, 2), st.floats(0, 2))
def test_penalty_monotonicity(a, b):
    lo, hi = sorted((a, b))
    assert edp(lo) >= edp(hi)
    if hi - lo > 1e-9:
        assert edp(lo) > edp(hi) or edp(hi) == 0.0
    assert adp(min(lo, 0.99)) <= adp(min(hi, 0.99))
    assert acp(0.1 + lo, 0.1, 0.5) <= acp(0.1 + hi, 0.1, 0.5)


def test_exponent_floors():
    for bad in ({"alpha_exp": 2}, {"beta_exp": 0.5}, {"gamma_exp": 3}, {"epsilon": 0}):
        with pytest.raises(ValueError):
            PersevalParams(**bad)


# ---------------------------------------------------------------- PerSEval


def two_doc_fixture():
    d1 = DocRecord("D1", "t1", (), "x")
    d2 = DocRecord("D2", "t2", (), "x")
    a = inst(["u", "v"], ["gu1", "gv1"], ["su1", "sv1"], d1)
    b = inst(["u", "v"], ["gu2", "gv2"], ["su2", "sv2"], d2)
    p = {}
    for d in "12":
        p[frozenset((f"gu{d}", f"gv{d}"))] = 0.6
        p[frozenset((f"su{d}", f"sv{d}"))] = 0.3 if d == "1" else 0.6
        for t, v in (("gu", 0.2), ("gv", 0.4), ("su", 0.5), ("sv", 0.5)):
            p[frozenset((f"{t}{d}", "DOC"))] = v
    accs = {("su1", "gu1"): 0.1, ("sv1", "gv1"): 0.3, ("su2", "gu2"): 0.0, ("sv2", "gv2"): 0.0}
    return [a, b], p, accs


def test_two_doc_term_expansion():
    insts, p, accs = two_doc_fixture()
    params = PersevalParams(divergence=table_divergence(p), accuracy=lambda g, r: accs[(g, r)])
    rep = perseval(insts, params)
    want_doc = []
    for d in "12":
        G = [[0, 0.6], [0.6, 0]]
        S = [[0, p[frozenset((f"su{d}", f"sv{d}"))]], [p[frozenset((f"su{d}", f"sv{d}"))], 0]]
        gd = [0.2, 0.4]
        sd = [0.5, 0.5]
        a = [accs[(f"su{d}", f"gu{d}")], accs[(f"sv{d}", f"gv{d}")]]
        best, avg = min(a), sum(a) / 2
        adp_v = logistic(4, 10 * best / ((1 - best) + 1e-8))
        pse = []
        for j in range(2):
            acp_v = logistic(4, 10 * (a[j] - best) / ((avg - best) + 1e-8))
            e = 1 - logistic(3, 10 * (adp_v + acp_v))
            pse.append(degress_oracle(G, S, gd, sd, j) * e)
        want_doc.append(sum(pse) / 2)
    assert rep.system_perseval == pytest.approx(sum(want_doc) / 2, rel=1e-12)
    assert [x.doc for x in rep.pairs] == ["D1", "D1", "D2", "D2"]


def random_instance(rng, n_users, doc_id="D"):
    vocab = "a b c d e f g h".split()
    users = [f"u{i}" for i in range(n_users)]
    mk = lambda: " ".join(rng.choice(vocab, size=int(rng.integers(2, 9))))  # noqa: E731
    return inst(users, [mk() for _ in users], [mk() for _ in users], DocRecord(doc_id, "a b c", ("d e f g.",), "t"))


def test_perfect_accuracy_limit():
    rng = np.random.default_rng(0)
    insts = [random_instance(rng, 3, f"D{i}") for i in range(20)]
    rep = perseval(insts, PersevalParams(accuracy=lambda g, r: 0.0))
    assert abs(rep.system_perseval - rep.system_degress) <= 1e-2
    assert all(p.edp == pytest.approx(0.999, abs=1e-3) for p in rep.pairs)


@settings(max_examples=50)
@given(st.integers(0, 10**6), st.integers(2, 5))
def test_pse_bounded_by_degress(seed, n):
    rng = np.random.default_rng(seed)
    rep = perseval([random_instance(rng, n, f"D{i}") for i in range(3)])
    for p in rep.pairs:
        assert 0.0 <= p.perseval <= p.degress <= 1.0
    assert rep.system_perseval <= rep.system_degress


def test_zero_degress_zeroes_pse():
    p = {frozenset(("g1", "g2")): 0.5, frozenset(("s1", "s2")): 0.0}
    for t in ("g1", "g2", "s1", "s2"):
        p[frozenset((t, "DOC"))] = 0.3
    params = PersevalParams(divergence=table_divergence(p), accuracy=lambda g, r: 0.5, epsilon=1e-300)
    rep = perseval([inst(["a", "b"], ["g1", "g2"], ["s1", "s2"])], params)
    assert all(x.perseval == pytest.approx(0.0, abs=1e-200) for x in rep.pairs)


def test_user_order_invariance():
    rng = np.random.default_rng(5)
    i = random_instance(rng, 4)
    rev = EvalInstance(i.doc, tuple(reversed(i.users)), i.gold, i.generated)
    a = {p.user: p for p in perseval([i]).pairs}
    b = {p.user: p for p in perseval([rev]).pairs}
    for u in i.users:
        assert a[u].perseval == pytest.approx(b[u].perseval, rel=1e-12)


def test_exclusions_and_degenerate(caplog):
    single = inst(["a"], ["x y"], ["x y"], DocRecord("S", "t", (), ""))
    same = inst(["a", "b"], ["p q", "r s"], ["z z", "z z"], DocRecord("Z", "t", (), ""))
    rep = perseval([single, same])
    assert rep.excluded == ("S",) and rep.degenerate == ("Z",)
    assert "single user" in caplog.text
    with pytest.raises(ValueError):
        perseval([single])
    with pytest.raises(ValueError):
        EvalInstance(DOC, ("a",), {"a": "x"}, {"b": "y"})


def test_instance_io(tmp_path):
    rng = np.random.default_rng(1)
    insts = [random_instance(rng, 3, f"D{i}") for i in range(3)]
    write_instances(insts, tmp_path / "i.jsonl")
    back = read_instances(tmp_path / "i.jsonl")
    assert back == insts
    (tmp_path / "bad.jsonl").write_text('{"doc_id": "Q", "users": ["a"]}\n')
    with pytest.raises(ValueError, match=":1:"):
        read_instances(tmp_path / "bad.jsonl")
    rep = perseval(back)
    assert rep.to_csv().splitlines()[0].startswith("doc,user,acc")
    assert set(rep.to_dict()) >= {"system_degress", "system_perseval", "pairs"}
