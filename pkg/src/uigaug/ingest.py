"""Parsers for PENS-style and OAI-style sources, the encoder test harness, and canonical JSONL I/O."""

from __future__ import annotations

import csv
import json
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .rng import substream
from .uig import (
    Action,
    DocRecord,
    Event,
    NodeId,
    NodeKind,
    Origin,
    Provenance,
    ProvenanceKind,
    SummaryRecord,
    Trajectory,
    Uig,
)

log = logging.getLogger(__name__)

_SENT_SPLIT = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in _SENT_SPLIT.split(text.strip()) if s.strip())


@dataclass(frozen=True)
class RowError:
    row: int
    message: str


# ---------------------------------------------------------------- PENS rows


@dataclass(frozen=True)
class PensImpressionRow:
    uID: str
    tmp: str
    clkNews: tuple[str, ...] = ()
    uclkNews: tuple[str, ...] = ()
    clkedHis: tuple[str, ...] = ()


@dataclass(frozen=True)
class PensColumns:
    """Column names in a behaviours TSV; releases differ, so they are configurable."""

    user: str = "uID"
    time: str = "tmp"
    clicked: str = "clkNews"
    unclicked: str = "uclkNews"
    history: str = "clkedHis"


@dataclass(frozen=True)
class NewsColumns:
    id: str = "NewsID"
    topic: str = "Category"
    title: str = "Headline"
    body: str = "News body"


def _ids(cell: str | None) -> tuple[str, ...]:
    return tuple((cell or "").split())


def read_pens_tsv(path: str | Path, columns: PensColumns = PensColumns()) -> list[PensImpressionRow]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        for rec in reader:
            rows.append(
                PensImpressionRow(
                    uID=rec[columns.user],
                    tmp=rec.get(columns.time, "") or "",
                    clkNews=_ids(rec.get(columns.clicked)),
                    uclkNews=_ids(rec.get(columns.unclicked)),
                    clkedHis=_ids(rec.get(columns.history)),
                )
            )
    return rows


def read_news_tsv(path: str | Path, columns: NewsColumns = NewsColumns()) -> dict[str, DocRecord]:
    docs = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh, delimiter="\t", quoting=csv.QUOTE_NONE):
            doc_id = rec[columns.id]
            docs[doc_id] = DocRecord(
                id=doc_id,
                title=rec.get(columns.title, "") or "",
                body=split_sentences(rec.get(columns.body, "") or ""),
                topic=rec.get(columns.topic, "") or "",
            )
    return docs


def build_uig_pens(
    rows: Sequence[PensImpressionRow], docs: Mapping[str, DocRecord]
) -> tuple[Uig, list[RowError]]:
    """One trajectory per user: clicked history first, then each impression's clicks and skips.

    Rows of the same user are replayed in ``tmp`` order (stable on file
    position). The history prefix comes from the earliest row only.
    Rows referencing unknown documents are skipped and reported.
    """
    errors: list[RowError] = []
    by_user: dict[str, list[tuple[int, PensImpressionRow]]] = defaultdict(list)
    for i, row in enumerate(rows):
        if not row.uID:
            errors.append(RowError(i, "empty uID"))
            continue
        unknown = [d for d in (*row.clkedHis, *row.clkNews, *row.uclkNews) if d not in docs]
        if unknown:
            errors.append(RowError(i, f"unknown doc ids: {' '.join(unknown)}"))
            continue
        by_user[row.uID].append((i, row))

    trajectories = []
    for user in sorted(by_user):
        ordered = sorted(by_user[user], key=lambda p: (p[1].tmp, p[0]))
        events: list[Event] = []
        for n, (_, row) in enumerate(ordered):
            if n == 0:
                events += [Event(0, NodeId.doc(d), Action.CLICK) for d in row.clkedHis]
            events += [Event(0, NodeId.doc(d), Action.CLICK) for d in row.clkNews]
            events += [Event(0, NodeId.doc(d), Action.SKIP) for d in row.uclkNews]
        if events:
            trajectories.append(Trajectory.from_events(user, events, Provenance(ProvenanceKind.SEED, "pens")))
    return Uig(tuple(trajectories), dict(docs), {}), errors


@dataclass(frozen=True)
class GoldSummary:
    user: str
    doc: str
    text: str
    order: int = 0


def gold_summary_id(user: str, doc: str) -> str:
    return f"gold:{user}:{doc}"


def inject_snodes_pens(uig: Uig, gold: Iterable[GoldSummary]) -> tuple[Uig, list[str]]:
    """Insert (GenSumm on the doc, SummGen on a new s-node) right after the doc's last occurrence.

    Documents the user never touched get a Click appended first. Returns the
    new pool and a list of notes (duplicates dropped, unknown docs, etc.).
    """
    notes: list[str] = []
    per_user: dict[str, list[GoldSummary]] = defaultdict(list)
    seen: set[tuple[str, str]] = set()
    for g in sorted(gold, key=lambda g: (g.user, g.order)):
        key = (g.user, g.doc)
        if key in seen:
            notes.append(f"duplicate gold pair {g.user}/{g.doc}: kept first")
            log.warning("duplicate gold pair %s/%s ignored", g.user, g.doc)
            continue
        if g.doc not in uig.docs:
            notes.append(f"gold pair {g.user}/{g.doc}: unknown doc, skipped")
            continue
        if not g.text.strip():
            notes.append(f"gold pair {g.user}/{g.doc}: empty summary, skipped")
            continue
        seen.add(key)
        per_user[g.user].append(g)

    if not per_user:
        return uig, notes

    summaries = dict(uig.summaries)
    out = []
    existing = {t.user for t in uig.trajectories}
    for traj in uig.trajectories:
        pending = per_user.get(traj.user)
        if not pending:
            out.append(traj)
            continue
        events = list(traj.events)
        for g in pending:
            sid = gold_summary_id(g.user, g.doc)
            summaries[sid] = SummaryRecord(sid, g.text, g.doc, g.user)
            pair = [Event(0, NodeId.doc(g.doc), Action.GEN_SUMM), Event(0, NodeId.summary(sid), Action.SUMM_GEN)]
            hits = [
                i for i, e in enumerate(events) if e.node.id == g.doc and e.action in (Action.CLICK, Action.SKIP)
            ]
            if len(hits) > 1:
                notes.append(f"{g.user}/{g.doc}: doc occurs {len(hits)} times, attached to last")
            if hits:
                pos = hits[-1] + 1
                events[pos:pos] = pair
            else:
                events += [Event(0, NodeId.doc(g.doc), Action.CLICK), *pair]
        out.append(Trajectory.from_events(traj.user, events, traj.provenance))

    for user in sorted(set(per_user) - existing):
        notes.append(f"user {user} has no trajectory; created from gold pairs")
        events = []
        for g in per_user[user]:
            sid = gold_summary_id(g.user, g.doc)
            summaries[sid] = SummaryRecord(sid, g.text, g.doc, g.user)
            events += [
                Event(0, NodeId.doc(g.doc), Action.CLICK),
                Event(0, NodeId.doc(g.doc), Action.GEN_SUMM),
                Event(0, NodeId.summary(sid), Action.SUMM_GEN),
            ]
        out.append(Trajectory.from_events(user, events, Provenance(ProvenanceKind.SEED, "pens")))

    return Uig(tuple(out), uig.docs, summaries), notes


def read_gold_tsv(path: str | Path) -> list[GoldSummary]:
    """Gold summaries: columns user, doc, summary[, order]."""
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for i, rec in enumerate(csv.DictReader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)):
            out.append(GoldSummary(rec["user"], rec["doc"], rec["summary"], int(rec.get("order") or i)))
    return out


# ----------------------------------------------------------------- OAI rows


@dataclass(frozen=True)
class OaiRatingRow:
    post: str
    rater: str
    policy: str
    summary_text: str
    confidence: int
    ratings: Mapping[str, float] = field(default_factory=dict)
    title: str = ""
    body: str = ""
    topic: str = ""

    def __post_init__(self):
        if not 0 <= self.confidence <= 9:
            raise ValueError(f"confidence {self.confidence} outside [0, 9]")

    @property
    def rating(self) -> float:
        if "overall" in self.ratings:
            return float(self.ratings["overall"])
        if not self.ratings:
            return 0.0
        return float(np.mean(list(self.ratings.values())))


def read_oai_jsonl(path: str | Path) -> list[OaiRatingRow]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                rows.append(
                    OaiRatingRow(
                        post=str(rec["post"]),
                        rater=str(rec["rater"]),
                        policy=str(rec.get("policy", "")),
                        summary_text=rec["summary_text"],
                        confidence=int(rec["confidence"]),
                        ratings=rec.get("ratings", {}),
                        title=rec.get("title", ""),
                        body=rec.get("body", ""),
                        topic=rec.get("topic", ""),
                    )
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return rows


def oai_summary_id(rater: str, post: str, policy: str) -> str:
    return f"oai:{rater}:{post}:{policy}"


def build_uig_oai(
    rows: Sequence[OaiRatingRow],
    threshold: int = 6,
    seed: int = 0,
    docs: Mapping[str, DocRecord] | None = None,
) -> Uig:
    """A post is clicked by a rater iff some summary of it has confidence strictly above ``threshold``.

    Clicked posts carry the rater's best-rated summary (ties: lowest policy
    name); pairs and skipped posts are shuffled into one trajectory per rater.
    """
    if not 0 <= threshold <= 9:
        raise ValueError("threshold must be in [0, 9]")
    docs = dict(docs or {})
    for row in rows:
        if row.post not in docs:
            title = row.title or row.post
            docs[row.post] = DocRecord(row.post, title, split_sentences(row.body), row.topic)

    grouped: dict[str, dict[str, list[OaiRatingRow]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        grouped[row.rater][row.post].append(row)

    summaries: dict[str, SummaryRecord] = {}
    trajectories = []
    for rater in sorted(grouped):
        units: list[list[Event]] = []
        for post in sorted(grouped[rater]):
            cands = grouped[rater][post]
            if any(c.confidence > threshold for c in cands):
                best = min(cands, key=lambda c: (-c.rating, c.policy))
                sid = oai_summary_id(rater, post, best.policy)
                summaries[sid] = SummaryRecord(sid, best.summary_text, post, rater)
                units.append(
                    [
                        Event(0, NodeId.doc(post), Action.CLICK),
                        Event(0, NodeId.doc(post), Action.GEN_SUMM),
                        Event(0, NodeId.summary(sid), Action.SUMM_GEN),
                    ]
                )
            else:
                units.append([Event(0, NodeId.doc(post), Action.SKIP)])
        if not units:
            continue
        order = substream(seed, "oai", rater).permutation(len(units))
        events = [e for i in order for e in units[i]]
        trajectories.append(Trajectory.from_events(rater, events, Provenance(ProvenanceKind.SEED, "oai")))
    return Uig(tuple(trajectories), docs, summaries)


# ------------------------------------------------------- encoder test harness


@dataclass(frozen=True)
class SplitConfig:
    neg_window_start: int = 50
    negatives_per_positive: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class UserTestCase:
    user: str
    history: Trajectory
    candidates: tuple[tuple[str, bool], ...]  # (doc id, is_positive)
    targets: tuple[str, ...]


@dataclass(frozen=True)
class EncoderTestSet:
    cases: tuple[UserTestCase, ...]
    excluded: tuple[str, ...] = ()


def _pair_spans(events: Sequence[Event]) -> list[int]:
    """Indices of GenSumm events that open a (d, s) pair."""
    return [
        i
        for i, e in enumerate(events)
        if e.action is Action.GEN_SUMM and i + 1 < len(events) and events[i + 1].action is Action.SUMM_GEN
    ]


def build_encoder_testset(uig: Uig, cfg: SplitConfig = SplitConfig()) -> EncoderTestSet:
    """Next-click evaluation set.

    Phase 1 is the click/skip history before the first (d, s) pair; phase 2
    is the ordered list of (d, s) pairs. The first half of phase 2 extends the
    history, the second half supplies positive candidates. Negatives are drawn
    without replacement from the user's never-clicked documents (in doc-table
    order), restricted to indices ``[neg_window_start, n_s)``.
    """
    doc_order = list(uig.docs)
    cases = []
    excluded = []
    for traj in uig.trajectories:
        ev = traj.events
        starts = _pair_spans(ev)
        if len(starts) < 2:
            log.warning("user %s has %d (d, s) pairs; excluded", traj.user, len(starts))
            excluded.append(traj.user)
            continue
        phase1 = [e for e in ev[: starts[0]] if e.action in (Action.CLICK, Action.SKIP)]
        half = len(starts) // 2
        first, second = starts[:half], starts[half:]
        hist = list(phase1)
        for i in first:
            hist += [Event(0, ev[i].node, Action.CLICK), ev[i], ev[i + 1]]
        targets = tuple(ev[i].node.id for i in second)

        clicked = {e.node.id for e in ev if e.node.kind is NodeKind.DOC and e.action is not Action.SKIP}
        never = [d for d in doc_order if d not in clicked]
        n_s = len(starts)
        window = never[cfg.neg_window_start : n_s]
        n_neg = min(len(window), int(round(cfg.negatives_per_positive * len(targets))))
        rng = substream(cfg.seed, "negatives", traj.user)
        picks = sorted(rng.choice(len(window), size=n_neg, replace=False)) if n_neg else []
        negatives = [window[i] for i in picks]
        if n_neg < len(targets) * cfg.negatives_per_positive:
            log.warning("user %s: only %d negatives available", traj.user, n_neg)
        candidates = tuple((d, True) for d in targets) + tuple((d, False) for d in negatives)
        cases.append(
            UserTestCase(traj.user, Trajectory.from_events(traj.user, hist, traj.provenance), candidates, targets)
        )
    return EncoderTestSet(tuple(cases), tuple(excluded))


def negative_window(n_s: int, start: int = 50) -> range:
    return range(start, max(start, n_s))


# ---------------------------------------------------------- canonical JSONL


class ParseError(ValueError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def event_to_dict(e: Event) -> dict:
    out = {"t": e.t, "kind": e.node.kind.value, "id": e.node.id, "action": e.action.value}
    if e.origin is not None:
        o = e.origin
        out["origin"] = {
            "user": o.user,
            "index": o.index,
            "exchanged": o.exchanged,
            "wrapped": o.wrapped,
            "perturbed": o.perturbed,
        }
    return out


def trajectory_to_dict(traj: Trajectory) -> dict:
    p = traj.provenance
    return {
        "user": traj.user,
        "events": [event_to_dict(e) for e in traj.events],
        "provenance": {"kind": p.kind.value, "config": p.config, "offset": p.offset},
    }


def trajectory_to_line(traj: Trajectory) -> str:
    return _dumps(trajectory_to_dict(traj))


def _enum(cls, value, what):
    try:
        return cls(value)
    except ValueError:
        raise ValueError(f"unknown {what} {value!r}") from None


def trajectory_from_dict(rec: dict) -> Trajectory:
    events = []
    for e in rec["events"]:
        o = e.get("origin")
        origin = None
        if o is not None:
            origin = Origin(o["user"], int(o["index"]), o["exchanged"], o["wrapped"], o.get("perturbed", False))
        node = NodeId(_enum(NodeKind, e["kind"], "node kind"), e["id"])
        events.append(Event(int(e["t"]), node, _enum(Action, e["action"], "action tag"), origin))
    p = rec.get("provenance") or {}
    prov = Provenance(_enum(ProvenanceKind, p.get("kind", "seed"), "provenance"), p.get("config", ""), p.get("offset"))
    return Trajectory(rec["user"], tuple(events), prov)


def doc_to_dict(d: DocRecord) -> dict:
    return {"id": d.id, "title": d.title, "body": list(d.body), "topic": d.topic}


def summary_to_dict(s: SummaryRecord) -> dict:
    out = {"id": s.id, "text": s.text, "source_doc": s.source_doc, "author_user": s.author_user}
    if s.sentence_ref is not None:
        out["sentence_ref"] = [s.sentence_ref[0], s.sentence_ref[1]]
    return out


TRAJ_FILE = "trajectories.jsonl"
DOCS_FILE = "docs.jsonl"
SUMMARIES_FILE = "summaries.jsonl"


def _read_lines(path: Path, parse):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(parse(json.loads(line)))
            except (KeyError, ValueError, TypeError) as exc:
                raise ParseError(path, lineno, str(exc)) from exc
    return out


def read_trajectories(path: str | Path) -> list[Trajectory]:
    return _read_lines(Path(path), trajectory_from_dict)


def read_docs(path: str | Path) -> dict[str, DocRecord]:
    recs = _read_lines(
        Path(path), lambda r: DocRecord(r["id"], r["title"], tuple(r.get("body", ())), r.get("topic", ""))
    )
    return {d.id: d for d in recs}


def read_summaries(path: str | Path) -> dict[str, SummaryRecord]:
    def parse(r):
        ref = r.get("sentence_ref")
        return SummaryRecord(
            r["id"], r["text"], r["source_doc"], r["author_user"], (ref[0], int(ref[1])) if ref else None
        )

    return {s.id: s for s in _read_lines(Path(path), parse)}


def write_jsonl(uig: Uig, directory: str | Path) -> dict[str, Path]:
    """Write trajectories plus doc and summary sidecars; returns the paths written."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "trajectories": directory / TRAJ_FILE,
        "docs": directory / DOCS_FILE,
        "summaries": directory / SUMMARIES_FILE,
    }
    _write(paths["trajectories"], (trajectory_to_line(t) for t in uig.trajectories))
    _write(paths["docs"], (_dumps(doc_to_dict(uig.docs[k])) for k in sorted(uig.docs)))
    _write(paths["summaries"], (_dumps(summary_to_dict(uig.summaries[k])) for k in sorted(uig.summaries)))
    return paths


def _write(path: Path, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def read_jsonl(directory: str | Path) -> Uig:
    directory = Path(directory)
    trajs = read_trajectories(directory / TRAJ_FILE)
    docs = read_docs(directory / DOCS_FILE) if (directory / DOCS_FILE).exists() else {}
    sums = read_summaries(directory / SUMMARIES_FILE) if (directory / SUMMARIES_FILE).exists() else {}
    return Uig(tuple(trajs), docs, sums)
