"""Core data model: nodes, events, trajectories and the interaction-graph pool."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping


class NodeKind(str, enum.Enum):
    USER = "user"
    DOC = "doc"
    SUMMARY = "summary"


class Action(str, enum.Enum):
    CLICK = "click"
    SKIP = "skip"
    GEN_SUMM = "gensumm"
    SUMM_GEN = "summgen"

    @property
    def short(self) -> str:
        return _SHORT[self]


_SHORT = {
    Action.CLICK: "CLK",
    Action.SKIP: "SKP",
    Action.GEN_SUMM: "GSM",
    Action.SUMM_GEN: "SMG",
}

DOC_ACTIONS = frozenset({Action.CLICK, Action.SKIP, Action.GEN_SUMM})


class ProvenanceKind(str, enum.Enum):
    SEED = "seed"
    DS = "ds"
    DSSMP = "dssmp"


@dataclass(frozen=True, order=True)
class NodeId:
    kind: NodeKind
    id: str

    @classmethod
    def doc(cls, id: str) -> "NodeId":
        return cls(NodeKind.DOC, id)

    @classmethod
    def summary(cls, id: str) -> "NodeId":
        return cls(NodeKind.SUMMARY, id)

    @classmethod
    def user(cls, id: str) -> "NodeId":
        return cls(NodeKind.USER, id)


@dataclass(frozen=True)
class Origin:
    """Where an event came from after double shuffling.

    ``index`` is the event's position in the source trajectory. ``exchanged``
    marks events that were taken from another user's trajectory.
    """

    user: str
    index: int
    exchanged: bool = False
    wrapped: bool = False
    perturbed: bool = False


@dataclass(frozen=True)
class Event:
    t: int
    node: NodeId
    action: Action
    origin: Origin | None = None

    def label(self) -> str:
        return f"{self.action.short}:{self.node.id}"


@dataclass(frozen=True)
class Provenance:
    kind: ProvenanceKind = ProvenanceKind.SEED
    config: str = ""
    offset: int | None = None


@dataclass(frozen=True)
class Trajectory:
    user: str
    events: tuple[Event, ...]
    provenance: Provenance = field(default_factory=Provenance)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    @property
    def user_node(self) -> NodeId:
        return NodeId.user(self.user)

    def labels(self) -> list[str]:
        return [e.label() for e in self.events]

    @classmethod
    def from_events(
        cls,
        user: str,
        events: Iterable[Event],
        provenance: Provenance | None = None,
    ) -> "Trajectory":
        """Build a trajectory, renumbering time-steps to 0..l-1."""
        return cls(user, renumber(events), provenance or Provenance())


@dataclass(frozen=True)
class DocRecord:
    id: str
    title: str
    body: tuple[str, ...] = ()
    topic: str = ""

    @property
    def node(self) -> NodeId:
        return NodeId.doc(self.id)

    @property
    def title_only(self) -> bool:
        return not self.body

    def text(self, head: int | None = None) -> str:
        body = self.body if head is None else self.body[:head]
        return " ".join((self.title, *body))


@dataclass(frozen=True)
class SummaryRecord:
    id: str
    text: str
    source_doc: str
    author_user: str
    # (doc id, sentence index) when the text is verbatim a document sentence
    sentence_ref: tuple[str, int] | None = None

    @property
    def node(self) -> NodeId:
        return NodeId.summary(self.id)


@dataclass(frozen=True)
class Uig:
    trajectories: tuple[Trajectory, ...] = ()
    docs: Mapping[str, DocRecord] = field(default_factory=dict)
    summaries: Mapping[str, SummaryRecord] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.trajectories)

    def with_trajectories(self, trajectories: Iterable[Trajectory]) -> "Uig":
        return replace(self, trajectories=tuple(trajectories))

    def with_summaries(self, records: Iterable[SummaryRecord]) -> "Uig":
        merged = dict(self.summaries)
        for rec in records:
            merged[rec.id] = rec
        return replace(self, summaries=merged)

    def resolve(self, node: NodeId) -> DocRecord | SummaryRecord:
        if node.kind is NodeKind.DOC:
            return self.docs[node.id]
        if node.kind is NodeKind.SUMMARY:
            return self.summaries[node.id]
        raise KeyError(node)


def renumber(events: Iterable[Event]) -> tuple[Event, ...]:
    return tuple(e if e.t == i else replace(e, t=i) for i, e in enumerate(events))


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class Violation:
    user: str
    t: int | None
    rule: str
    detail: str = ""

    def __str__(self) -> str:
        where = "-" if self.t is None else str(self.t)
        return f"{self.user}@{where}: {self.rule} {self.detail}".rstrip()


def validate(uig: Uig) -> list[Violation]:
    """Check every structural invariant; an empty list means the pool is well formed."""
    out: list[Violation] = []
    seen_users: set[str] = set()
    for traj in uig.trajectories:
        if traj.user in seen_users:
            out.append(Violation(traj.user, None, "duplicate user"))
        seen_users.add(traj.user)
        out.extend(_validate_trajectory(traj, uig))
    for rec in uig.docs.values():
        if not rec.title:
            out.append(Violation("-", None, "empty title", rec.id))
    for rec in uig.summaries.values():
        if not rec.text:
            out.append(Violation(rec.author_user, None, "empty summary", rec.id))
        if rec.source_doc not in uig.docs:
            out.append(Violation(rec.author_user, None, "summary source not a doc", rec.id))
    return out


def _validate_trajectory(traj: Trajectory, uig: Uig) -> list[Violation]:
    out: list[Violation] = []
    u = traj.user
    if not u:
        out.append(Violation(u, None, "empty user id"))
    if not traj.events:
        out.append(Violation(u, None, "empty trajectory"))
    pairs: set[tuple[int, NodeId]] = set()
    for i, ev in enumerate(traj.events):
        if ev.t != i:
            out.append(Violation(u, ev.t, "non-dense time-step", f"expected {i}"))
        if not ev.node.id:
            out.append(Violation(u, ev.t, "empty node id"))
        key = (ev.t, ev.node)
        if key in pairs:
            out.append(Violation(u, ev.t, "duplicate event", ev.node.id))
        pairs.add(key)

        if ev.action in DOC_ACTIONS:
            if ev.node.kind is not NodeKind.DOC:
                out.append(Violation(u, ev.t, "action requires doc node", ev.label()))
            elif ev.node.id not in uig.docs:
                out.append(Violation(u, ev.t, "dangling node", ev.node.id))
        else:
            if ev.node.kind is not NodeKind.SUMMARY:
                out.append(Violation(u, ev.t, "summgen requires summary node", ev.label()))
            elif ev.node.id not in uig.summaries:
                out.append(Violation(u, ev.t, "dangling node", ev.node.id))

        if ev.action is Action.SUMM_GEN:
            prev = traj.events[i - 1] if i > 0 else None
            if prev is None or prev.action is not Action.GEN_SUMM:
                out.append(Violation(u, ev.t, "orphan summgen", ev.node.id))
            else:
                rec = uig.summaries.get(ev.node.id)
                if rec is not None and rec.source_doc != prev.node.id:
                    out.append(
                        Violation(u, ev.t, "summary/doc mismatch", f"{rec.source_doc}!={prev.node.id}")
                    )
        if ev.action is Action.GEN_SUMM:
            nxt = traj.events[i + 1] if i + 1 < len(traj.events) else None
            if nxt is None or nxt.action is not Action.SUMM_GEN:
                out.append(Violation(u, ev.t, "unpaired gensumm", ev.node.id))
    return out


def is_usable_for_diversity(traj: Trajectory) -> bool:
    return len(traj) >= 2


# ------------------------------------------------------------------- slicing


def slice_trajectory(traj: Trajectory, start: int, stop: int) -> Trajectory:
    """Events with ``start <= index < stop``; time-steps are kept as-is."""
    if not 0 <= start <= stop <= len(traj):
        raise IndexError(f"slice [{start}, {stop}) out of range for length {len(traj)}")
    return Trajectory(traj.user, traj.events[start:stop], traj.provenance)
