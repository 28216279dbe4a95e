"""Next-click ranking metrics over scored candidate lists: AUC, MRR and nDCG@k."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Candidate:
    doc: str
    score: float
    positive: bool


ScoredCandidates = Mapping[str, Sequence[Candidate]]


def _split(cands: Sequence[Candidate]) -> tuple[np.ndarray, np.ndarray]:
    pos = np.array([c.score for c in cands if c.positive], dtype=np.float64)
    neg = np.array([c.score for c in cands if not c.positive], dtype=np.float64)
    return pos, neg


def _check_finite(cands: Sequence[Candidate]) -> None:
    if not all(math.isfinite(c.score) for c in cands):
        raise ValueError("scores must be finite")


def auc_counts(pos: np.ndarray, neg: np.ndarray) -> int:
    """Number of (positive, negative) pairs where the positive scores strictly higher."""
    neg_sorted = np.sort(neg)
    return int(np.searchsorted(neg_sorted, pos, side="left").sum())


def user_auc(cands: Sequence[Candidate]) -> float:
    _check_finite(cands)
    pos, neg = _split(cands)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    return auc_counts(pos, neg) / (pos.size * neg.size)


def auc(sc: ScoredCandidates, pooled: bool = False) -> float:
    """Mean per-user AUC; ``pooled`` compares every positive with every negative across users."""
    if pooled:
        allc = [c for user in sorted(sc) for c in sc[user]]
        return user_auc(allc)
    vals = []
    for user in sorted(sc):
        try:
            vals.append(user_auc(sc[user]))
        except ValueError:
            log.warning("user %s lacks a positive or a negative; excluded from AUC", user)
    if not vals:
        raise ValueError("no user has both positives and negatives")
    return sum(vals) / len(vals)


def ranking(cands: Sequence[Candidate]) -> list[Candidate]:
    """Descending score; ties keep candidate order."""
    order = sorted(range(len(cands)), key=lambda i: -cands[i].score)
    return [cands[i] for i in order]


def user_rr(cands: Sequence[Candidate]) -> float | None:
    _check_finite(cands)
    for rank, c in enumerate(ranking(cands), start=1):
        if c.positive:
            return 1.0 / rank
    return None


def mrr(sc: ScoredCandidates) -> float:
    vals = []
    for user in sorted(sc):
        rr = user_rr(sc[user])
        if rr is None:
            log.warning("user %s has no positive; excluded from MRR", user)
        else:
            vals.append(rr)
    if not vals:
        raise ValueError("no user has a positive")
    return sum(vals) / len(vals)


def _dcg(gains: Sequence[float]) -> float:
    # sequential sum so results do not depend on BLAS summation order
    return sum(g / math.log2(rank + 1) for rank, g in enumerate(gains, start=1))


def user_ndcg(cands: Sequence[Candidate], k: int, binary: bool = False) -> float:
    """DCG over the predicted ranking with the target's prediction score as gain, over the ideal DCG."""
    if k < 1:
        raise ValueError("k must be >= 1")
    _check_finite(cands)

    def gain(c: Candidate) -> float:
        if not c.positive:
            return 0.0
        return 1.0 if binary else max(c.score, 0.0)

    idcg = _dcg(sorted((gain(c) for c in cands if c.positive), reverse=True)[:k])
    if idcg == 0.0:
        return 0.0
    return _dcg([gain(c) for c in ranking(cands)[:k]]) / idcg


def ndcg_at_k(sc: ScoredCandidates, k: int, binary: bool = False) -> float:
    vals = [user_ndcg(sc[u], k, binary) for u in sorted(sc)]
    if not vals:
        raise ValueError("no users")
    return sum(vals) / len(vals)


@dataclass(frozen=True)
class RankReport:
    auc: float
    mrr: float
    ndcg: dict[int, float]
    users: int

    def to_dict(self) -> dict:
        return {"auc": self.auc, "mrr": self.mrr, "ndcg": {f"@{k}": v for k, v in self.ndcg.items()}, "users": self.users}


def evaluate(sc: ScoredCandidates, ks: Sequence[int] = (5, 10), pooled_auc: bool = False, binary: bool = False) -> RankReport:
    return RankReport(auc(sc, pooled_auc), mrr(sc), {k: ndcg_at_k(sc, k, binary) for k in ks}, len(sc))


# ---------------------------------------------------------------------- I/O

_TRUE = {"1", "true", "pos", "positive", "yes"}


def read_scores(path: str | Path) -> dict[str, list[Candidate]]:
    """Rows of {user, doc, score, label} from CSV or JSONL."""
    path = Path(path)
    out: dict[str, list[Candidate]] = {}
    if path.suffix == ".jsonl":
        with open(path, encoding="utf-8") as fh:
            rows = [json.loads(line) for line in fh if line.strip()]
    else:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    for i, row in enumerate(rows, start=1):
        try:
            label = row["label"]
            positive = label if isinstance(label, bool) else str(label).strip().lower() in _TRUE
            out.setdefault(str(row["user"]), []).append(Candidate(str(row["doc"]), float(row["score"]), positive))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{path}: row {i}: {exc}") from exc
    return out
