"""Summary-level personalization scores: skip-bigram ROUGE, responsiveness (DEGRESS) and its accuracy-penalized form."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .uig import DocRecord

log = logging.getLogger(__name__)

Text = str | Sequence[str]  # raw string, or pre-split sentences

_TOKEN = re.compile(r"[a-z0-9]+")
_SENT = re.compile(r"(?<=[.!?])\s+")


# ------------------------------------------------------------------ ROUGE-SU4


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def sentence_tokens(text: Text) -> list[list[str]]:
    sents = _SENT.split(text) if isinstance(text, str) else list(text)
    return [toks for toks in (tokenize(s) for s in sents) if toks]


def skip_bigrams(tokens: Sequence[str], max_gap: int = 4) -> Counter:
    """Ordered pairs (a, b) with at most ``max_gap`` tokens between them."""
    out: Counter = Counter()
    n = len(tokens)
    for i in range(n):
        for j in range(i + 1, min(n, i + max_gap + 2)):
            out[(tokens[i], tokens[j])] += 1
    return out


def _units(text: Text, max_gap: int, unigrams: bool) -> Counter:
    out: Counter = Counter()
    for toks in sentence_tokens(text):
        out.update(skip_bigrams(toks, max_gap))
        if unigrams:
            out.update((t,) for t in toks)
    return out


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


def rouge_su4(generated: Text, reference: Text, max_gap: int = 4, unigrams: bool = False) -> RougeScore:
    """Skip-bigram overlap with clipped counts; ``unigrams`` adds single tokens as in classical SU4."""
    g = _units(generated, max_gap, unigrams)
    r = _units(reference, max_gap, unigrams)
    match = sum((g & r).values())
    ng, nr = sum(g.values()), sum(r.values())
    p = match / ng if ng else 0.0
    rc = match / nr if nr else 0.0
    f1 = 2 * p * rc / (p + rc) if p + rc else 0.0
    return RougeScore(p, rc, f1)


def su4_divergence(a: Text, b: Text) -> float:
    return 1.0 - rouge_su4(a, b).f1


# ----------------------------------------------------------------- instances


@dataclass(frozen=True)
class EvalInstance:
    doc: DocRecord
    users: tuple[str, ...]
    gold: Mapping[str, str]
    generated: Mapping[str, str]

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        if not self.users:
            raise ValueError(f"instance {self.doc.id} has no users")
        if len(set(self.users)) != len(self.users):
            raise ValueError(f"instance {self.doc.id} repeats a user")
        need = set(self.users)
        if set(self.gold) != need or set(self.generated) != need:
            raise ValueError(f"instance {self.doc.id}: gold and generated must cover exactly the users")


WeightPolicy = Callable[[np.ndarray, int, int], float]


def softmax_weight(div_to_doc: np.ndarray, j: int, k: int) -> float:
    """Share of user j among all users of the document."""
    z = div_to_doc - div_to_doc.max()
    e = np.exp(z)
    return float(e[j] / e.sum())


def pairwise_softmax_weight(div_to_doc: np.ndarray, j: int, k: int) -> float:
    """Share of user j within the pair (j, k)."""
    a, b = div_to_doc[j], div_to_doc[k]
    m = max(a, b)
    ea, eb = math.exp(a - m), math.exp(b - m)
    return ea / (ea + eb)


WEIGHT_POLICIES: dict[str, WeightPolicy] = {"softmax": softmax_weight, "pairwise": pairwise_softmax_weight}


@dataclass(frozen=True)
class PersevalParams:
    alpha_exp: float = 3.0
    beta_exp: float = 1.0
    gamma_exp: float = 4.0
    epsilon: float = 1e-8
    divergence: Callable[[Text, Text], float] = su4_divergence
    # acc(generated, gold); None means the divergence itself
    accuracy: Callable[[str, str], float] | None = None
    accuracy_is_similarity: bool = False
    weight_policy: WeightPolicy = softmax_weight
    doc_head: int | None = None  # sentences of the body used as document text

    def __post_init__(self):
        problems = []
        if self.alpha_exp < 3:
            problems.append(f"alpha_exp must be >= 3 (got {self.alpha_exp})")
        if self.beta_exp < 1:
            problems.append(f"beta_exp must be >= 1 (got {self.beta_exp})")
        if self.gamma_exp < 4:
            problems.append(f"gamma_exp must be >= 4 (got {self.gamma_exp})")
        if not self.epsilon > 0:
            problems.append(f"epsilon must be > 0 (got {self.epsilon})")
        if problems:
            raise ValueError("; ".join(problems))

    def acc(self, generated: str, gold: str) -> float:
        fn = self.accuracy or self.divergence
        v = float(fn(generated, gold))
        return 1.0 - v if self.accuracy_is_similarity else v


def doc_text(doc: DocRecord, head: int | None = None) -> list[str]:
    body = doc.body if head is None else doc.body[:head]
    return [doc.title, *body]


@dataclass(frozen=True)
class DivergenceTables:
    """Everything DEGRESS needs for one document, in ``users`` order."""

    gold: np.ndarray  # gold[j, k] = div(u_j, u_k)
    generated: np.ndarray
    gold_to_doc: np.ndarray
    generated_to_doc: np.ndarray


def divergence_tables(inst: EvalInstance, params: PersevalParams) -> DivergenceTables:
    n = len(inst.users)
    div = params.divergence
    text = doc_text(inst.doc, params.doc_head)
    gold = [inst.gold[u] for u in inst.users]
    gen = [inst.generated[u] for u in inst.users]
    G = np.zeros((n, n))
    S = np.zeros((n, n))
    for j in range(n):
        for k in range(j + 1, n):
            G[j, k] = G[k, j] = div(gold[j], gold[k])
            S[j, k] = S[k, j] = div(gen[j], gen[k])
    gd = np.array([div(g, text) for g in gold])
    sd = np.array([div(s, text) for s in gen])
    return DivergenceTables(G, S, gd, sd)


def degress_from_tables(tab: DivergenceTables, j: int, params: PersevalParams) -> float:
    n = tab.gold.shape[0]
    if n < 2:
        raise ValueError("responsiveness needs at least two users")
    eps = params.epsilon
    w = params.weight_policy
    total = 0.0
    for k in range(n):
        if k == j:
            continue
        x = w(tab.gold_to_doc, j, k) * tab.gold[j, k]
        y = w(tab.generated_to_doc, j, k) * tab.generated[j, k]
        total += (min(x, y) + eps) / (max(x, y) + eps)
    return total / (n - 1)


def degress_summary(inst: EvalInstance, j: str, params: PersevalParams = PersevalParams()) -> float:
    """Responsiveness of the summary generated for user ``j``, averaged over the other users."""
    if len(inst.users) < 2:
        raise ValueError(f"document {inst.doc.id} has a single user")
    return degress_from_tables(divergence_tables(inst, params), inst.users.index(j), params)


# ------------------------------------------------------------------ penalties


def adp(best: float, params: PersevalParams = PersevalParams()) -> float:
    x = 10.0 * best / ((1.0 - best) + params.epsilon)
    return _logistic(params.gamma_exp, x)


def acp(acc: float, best: float, avg: float, params: PersevalParams = PersevalParams()) -> float:
    x = 10.0 * (acc - best) / ((avg - best) + params.epsilon)
    return _logistic(params.gamma_exp, x)


def _logistic(exp10: float, x: float) -> float:
    """1 / (1 + 10^exp10 * e^{-x}), computed without overflow."""
    log_term = exp10 * math.log(10.0) - x
    if log_term > 700:
        return 0.0
    return 1.0 / (1.0 + math.exp(log_term))


def edp(dp: float, params: PersevalParams = PersevalParams()) -> float:
    return 1.0 - _logistic(params.alpha_exp, 10.0**params.beta_exp * dp)


@dataclass(frozen=True)
class PairScore:
    doc: str
    user: str
    acc: float
    degress: float
    adp: float
    acp: float
    edp: float
    perseval: float


@dataclass(frozen=True)
class PersevalReport:
    pairs: tuple[PairScore, ...]
    system_degress: float
    system_perseval: float
    excluded: tuple[str, ...] = ()  # documents with a single user
    degenerate: tuple[str, ...] = ()  # documents whose generated summaries are all identical

    def to_dict(self) -> dict:
        return {
            "system_degress": self.system_degress,
            "system_perseval": self.system_perseval,
            "excluded": list(self.excluded),
            "degenerate": list(self.degenerate),
            "pairs": [asdict(p) for p in self.pairs],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(PairScore.__dataclass_fields__)
        w.writerow(names)
        for p in self.pairs:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(p, n) for n in names)])
        return buf.getvalue()


def score_instance(inst: EvalInstance, params: PersevalParams = PersevalParams()) -> list[PairScore]:
    tab = divergence_tables(inst, params)
    accs = [params.acc(inst.generated[u], inst.gold[u]) for u in inst.users]
    best = min(accs)
    avg = float(np.mean(accs))
    a = adp(best, params)
    out = []
    for j, user in enumerate(inst.users):
        deg = degress_from_tables(tab, j, params)
        c = acp(accs[j], best, avg, params)
        e = edp(a + c, params)
        out.append(PairScore(inst.doc.id, user, accs[j], deg, a, c, e, deg * e))
    return out


def perseval(instances: Sequence[EvalInstance], params: PersevalParams = PersevalParams()) -> PersevalReport:
    """Score every (document, user) pair; system values average per document, then across documents."""
    if not instances:
        raise ValueError("no instances to score")
    pairs: list[PairScore] = []
    doc_deg, doc_pse, excluded, degenerate = [], [], [], []
    for inst in sorted(instances, key=lambda i: i.doc.id):
        if len(inst.users) < 2:
            log.warning("document %s has a single user; excluded", inst.doc.id)
            excluded.append(inst.doc.id)
            continue
        if len(set(inst.generated.values())) == 1:
            degenerate.append(inst.doc.id)
        scores = score_instance(inst, params)
        pairs.extend(scores)
        doc_deg.append(float(np.mean([s.degress for s in scores])))
        doc_pse.append(float(np.mean([s.perseval for s in scores])))
    if not doc_deg:
        raise ValueError("every document has a single user")
    return PersevalReport(
        tuple(pairs), float(np.mean(doc_deg)), float(np.mean(doc_pse)), tuple(excluded), tuple(degenerate)
    )


# ---------------------------------------------------------------------- I/O


def read_instances(path: str | Path, docs: Mapping[str, DocRecord] | None = None) -> list[EvalInstance]:
    """Instance JSONL: {doc_id, users, gold, generated[, doc_title, doc_body]}."""
    docs = docs or {}
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc_id = rec["doc_id"]
                doc = docs.get(doc_id)
                if doc is None:
                    if "doc_title" not in rec:
                        raise KeyError(f"document {doc_id} not in the doc table and no inline text")
                    body = rec.get("doc_body", [])
                    body = tuple(body if isinstance(body, list) else [body])
                    doc = DocRecord(doc_id, rec["doc_title"], body, rec.get("doc_topic", ""))
                out.append(EvalInstance(doc, tuple(rec["users"]), rec["gold"], rec["generated"]))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_instances(instances: Sequence[EvalInstance], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            rec = {
                "doc_id": inst.doc.id,
                "users": list(inst.users),
                "gold": dict(inst.gold),
                "generated": dict(inst.generated),
                "doc_title": inst.doc.title,
                "doc_body": list(inst.doc.body),
                "doc_topic": inst.doc.topic,
            }
            fh.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n")
