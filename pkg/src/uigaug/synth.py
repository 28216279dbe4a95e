"""Seeded synthetic corpora: documents, click logs and gold summaries in the PENS-style layout."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import GoldSummary, build_uig_pens, inject_snodes_pens, PensImpressionRow
from .rng import substream
from .uig import DocRecord, Uig


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 100
    n_docs: int = 300
    n_topics: int = 8
    words_per_topic: int = 40
    sentences_per_doc: tuple[int, int] = (2, 6)
    history_len: tuple[int, int] = (3, 8)
    impressions: tuple[int, int] = (1, 3)
    clicks_per_impression: tuple[int, int] = (1, 3)
    skips_per_impression: tuple[int, int] = (0, 3)
    gold_per_user: tuple[int, int] = (2, 5)
    topic_focus: float = 0.7  # chance a pick stays in the user's favourite topics
    seed: int = 0


def _between(rng: np.random.Generator, lo_hi: tuple[int, int]) -> int:
    return int(rng.integers(lo_hi[0], lo_hi[1] + 1))


def _vocab(cfg: SynthConfig) -> list[list[str]]:
    return [[f"t{t}w{i}" for i in range(cfg.words_per_topic)] for t in range(cfg.n_topics)]


def _sentence(rng: np.random.Generator, words: list[str], shared: list[str], n: int) -> str:
    pool = words + shared
    toks = [pool[int(i)] for i in rng.integers(0, len(pool), size=n)]
    return " ".join(toks).capitalize() + "."


SHARED_WORDS = ["the", "a", "of", "news", "report", "today", "new", "local", "update", "story"]


def make_docs(cfg: SynthConfig) -> dict[str, DocRecord]:
    rng = substream(cfg.seed, "docs")
    vocab = _vocab(cfg)
    docs = {}
    for i in range(cfg.n_docs):
        topic = int(rng.integers(0, cfg.n_topics))
        title = _sentence(rng, vocab[topic], SHARED_WORDS, 6).rstrip(".")
        body = tuple(
            _sentence(rng, vocab[topic], SHARED_WORDS, int(rng.integers(6, 12)))
            for _ in range(_between(rng, cfg.sentences_per_doc))
        )
        doc_id = f"N{i:05d}"
        docs[doc_id] = DocRecord(doc_id, title, body, f"topic{topic}")
    return docs


def make_rows(cfg: SynthConfig, docs: dict[str, DocRecord]) -> list[PensImpressionRow]:
    by_topic: dict[str, list[str]] = {}
    for d in docs.values():
        by_topic.setdefault(d.topic, []).append(d.id)
    topics = sorted(by_topic)
    ids = list(docs)
    rows = []
    for u in range(cfg.n_users):
        rng = substream(cfg.seed, "user", u)
        fav = [topics[int(i)] for i in rng.choice(len(topics), size=min(2, len(topics)), replace=False)]

        def pick() -> str:
            if rng.random() < cfg.topic_focus:
                pool = by_topic[fav[int(rng.integers(0, len(fav)))]]
                return pool[int(rng.integers(0, len(pool)))]
            return ids[int(rng.integers(0, len(ids)))]

        hist = tuple(pick() for _ in range(_between(rng, cfg.history_len)))
        for k in range(_between(rng, cfg.impressions)):
            clk = tuple(pick() for _ in range(_between(rng, cfg.clicks_per_impression)))
            uclk = tuple(ids[int(i)] for i in rng.integers(0, len(ids), size=_between(rng, cfg.skips_per_impression)))
            rows.append(PensImpressionRow(f"U{u:05d}", f"2019-06-{13 + k:02d}", clk, uclk, hist))
    return rows


def make_gold(cfg: SynthConfig, docs: dict[str, DocRecord], rows: list[PensImpressionRow]) -> list[GoldSummary]:
    vocab = _vocab(cfg)
    seen: dict[str, list[str]] = {}
    for r in rows:
        lst = seen.setdefault(r.uID, [])
        for d in (*r.clkedHis, *r.clkNews):
            if d not in lst:
                lst.append(d)
    out = []
    for user in sorted(seen):
        rng = substream(cfg.seed, "gold", user)
        cand = seen[user]
        n = min(len(cand), _between(rng, cfg.gold_per_user))
        for order, i in enumerate(sorted(rng.choice(len(cand), size=n, replace=False))):
            doc = docs[cand[int(i)]]
            topic = int(doc.topic.removeprefix("topic"))
            text = _sentence(rng, vocab[topic], doc.title.lower().split(), 7).rstrip(".")
            out.append(GoldSummary(user, doc.id, text, order))
    return out


def make_uig(cfg: SynthConfig = SynthConfig()) -> Uig:
    """A validated pool with gold s-nodes injected."""
    docs = make_docs(cfg)
    rows = make_rows(cfg, docs)
    uig, errors = build_uig_pens(rows, docs)
    assert not errors, errors
    uig, _ = inject_snodes_pens(uig, make_gold(cfg, docs, rows))
    return uig


def write_pens_files(cfg: SynthConfig, directory: str | Path) -> dict[str, Path]:
    """news.tsv, behaviors.tsv and gold.tsv for driving the ingest command."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    docs = make_docs(cfg)
    rows = make_rows(cfg, docs)
    gold = make_gold(cfg, docs, rows)
    paths = {k: directory / f"{k}.tsv" for k in ("news", "behaviors", "gold")}

    def writer(path):
        fh = open(path, "w", encoding="utf-8", newline="")
        return fh, csv.writer(fh, delimiter="\t", quoting=csv.QUOTE_NONE, lineterminator="\n")

    fh, w = writer(paths["news"])
    with fh:
        w.writerow(["NewsID", "Category", "Headline", "News body"])
        for d in docs.values():
            w.writerow([d.id, d.topic, d.title, " ".join(d.body)])
    fh, w = writer(paths["behaviors"])
    with fh:
        w.writerow(["uID", "tmp", "clkNews", "uclkNews", "clkedHis"])
        for r in rows:
            w.writerow([r.uID, r.tmp, " ".join(r.clkNews), " ".join(r.uclkNews), " ".join(r.clkedHis)])
    fh, w = writer(paths["gold"])
    with fh:
        w.writerow(["user", "doc", "summary", "order"])
        for g in gold:
            w.writerow([g.user, g.doc, g.text, g.order])
    return paths
