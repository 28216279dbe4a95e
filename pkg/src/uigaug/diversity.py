"""Diversity of a trajectory pool: topic counts, topic-change rate, and the interval-based DegreeD score."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .embed import DEFAULT_EPS, DistanceMetric, EmbeddingStore, MetricKind, doc_key, node_key, title_key
from .uig import Action, NodeId, Trajectory, Uig

log = logging.getLogger(__name__)


class DiversityError(ValueError):
    pass


@dataclass(frozen=True)
class DiversityConfig:
    alpha: float = 1.0
    epsilon: float = DEFAULT_EPS
    metric: DistanceMetric = field(default_factory=lambda: DistanceMetric(MetricKind.MANHATTAN))

    def __post_init__(self):
        problems = []
        if not 0.0 < self.alpha <= 1.0:
            problems.append(f"alpha must be in (0, 1] (got {self.alpha})")
        if not self.epsilon > 0.0:
            problems.append(f"epsilon must be > 0 (got {self.epsilon})")
        if problems:
            raise ValueError("; ".join(problems))


# ------------------------------------------------------------ logical steps


@dataclass(frozen=True)
class Step:
    """One interaction with a document, plus the summary written at that point if any."""

    doc: str
    summary: str | None = None
    t: int = 0  # time-step of the opening event


def logical_steps(traj: Trajectory) -> list[Step]:
    """Collapse a trajectory into document steps.

    A GenSumm right after an event on the same document belongs to that
    event's step; a SummGen attaches its summary to the current step.
    """
    steps: list[Step] = []
    prev = None
    for ev in traj.events:
        if ev.action is Action.SUMM_GEN:
            if steps and steps[-1].summary is None:
                last = steps[-1]
                steps[-1] = Step(last.doc, ev.node.id, last.t)
            else:
                log.warning("%s@%d: s-node without an open document step; ignored", traj.user, ev.t)
        elif not _continues_step(prev, ev, steps):
            steps.append(Step(ev.node.id, None, ev.t))
        prev = ev
    return steps


def _continues_step(prev, ev, steps: list[Step]) -> bool:
    return (
        ev.action is Action.GEN_SUMM
        and prev is not None
        and prev.action in (Action.CLICK, Action.SKIP)
        and prev.node == ev.node
        and steps[-1].summary is None
    )


def _topics(steps: Sequence[Step], uig: Uig) -> list[str]:
    out = []
    for s in steps:
        doc = uig.docs.get(s.doc)
        if doc is None:
            raise DiversityError(f"unknown document {s.doc}")
        if not doc.topic:
            raise DiversityError(f"document {s.doc} has no topic")
        out.append(doc.topic)
    return out


def tp(traj: Trajectory, uig: Uig) -> int:
    """Number of distinct topics the trajectory touches."""
    return len(set(_topics(logical_steps(traj), uig)))


def rtc(traj: Trajectory, uig: Uig) -> float | None:
    """Share of consecutive steps whose topic changes; None with fewer than two steps."""
    topics = _topics(logical_steps(traj), uig)
    if len(topics) < 2:
        return None
    changes = sum(a != b for a, b in zip(topics, topics[1:]))
    return changes / (len(topics) - 1)


def tp_dataset(uig: Uig) -> float:
    vals = [tp(t, uig) for t in uig.trajectories]
    if not vals:
        raise DiversityError("empty pool")
    return float(np.mean(vals))


def rtc_dataset(uig: Uig) -> tuple[float, list[str]]:
    """Mean RTC over trajectories with at least two steps, and the users left out."""
    vals, excluded = [], []
    for t in uig.trajectories:
        r = rtc(t, uig)
        if r is None:
            excluded.append(t.user)
        else:
            vals.append(r)
    if excluded:
        log.warning("%d trajectories with fewer than two steps excluded from RTC", len(excluded))
    if not vals:
        raise DiversityError("no trajectory has two or more steps")
    return float(np.mean(vals)), excluded


# ----------------------------------------------------------------- intervals


def deps(delta_d: float, delta_s: float, eps: float = DEFAULT_EPS) -> float:
    """(min + eps) / (max + eps): 1 when the two divergences agree, toward 0 as they part."""
    if delta_d < 0 or delta_s < 0:
        raise ValueError(f"divergences must be non-negative (got {delta_d}, {delta_s})")
    lo, hi = (delta_d, delta_s) if delta_d <= delta_s else (delta_s, delta_d)
    return (lo + eps) / (hi + eps)


def valid_intervals(traj: Trajectory) -> list[tuple[int, int]]:
    """Consecutive pairs of boundary steps (0-based step indices).

    Step 0 is always a boundary (its document title stands in when it has no
    summary); every later step carrying a summary is another boundary.
    """
    steps = logical_steps(traj)
    if not steps:
        return []
    bounds = [0] + [i for i, s in enumerate(steps) if i > 0 and s.summary is not None]
    return list(zip(bounds, bounds[1:]))


@dataclass(frozen=True)
class IntervalRecord:
    user: str
    interval: tuple[int, int]
    delta_d: float
    delta_s: float
    deps: float
    penalty: float


def _s_key(uig: Uig, step: Step) -> str:
    if step.summary is None:
        return title_key(step.doc)
    return node_key(uig, NodeId.summary(step.summary))


def interval_records(traj: Trajectory, uig: Uig, store: EmbeddingStore, cfg: DiversityConfig) -> list[IntervalRecord]:
    steps = logical_steps(traj)
    out = []
    for a, b in valid_intervals(traj):
        out.append(_interval(traj.user, steps, a, b, uig, store, cfg))
    return out


def deps_interval(
    traj: Trajectory, interval: tuple[int, int], uig: Uig, store: EmbeddingStore, cfg: DiversityConfig
) -> IntervalRecord:
    steps = logical_steps(traj)
    a, b = interval
    if not 0 <= a < b < len(steps):
        raise IndexError(f"interval {interval} outside {len(steps)} steps")
    return _interval(traj.user, steps, a, b, uig, store, cfg)


def _interval(user, steps, a, b, uig, store, cfg) -> IntervalRecord:
    sigma, eps = cfg.metric, cfg.epsilon
    d_a = store[doc_key(steps[a].doc)]
    later = store.stack(doc_key(s.doc) for s in steps[a + 1 : b + 1])
    delta_d = float(np.mean(sigma.pairwise(d_a, later)[0]))
    s_a = store[_s_key(uig, steps[a])]
    s_b = store[_s_key(uig, steps[b])]
    delta_s = sigma(s_a, s_b)
    faith_a = sigma(d_a, s_a)
    faith_b = sigma(store[doc_key(steps[b].doc)], s_b)
    penalty = (faith_a + eps) / (faith_b + eps)
    return IntervalRecord(user, (a, b), delta_d, delta_s, deps(delta_d, delta_s, eps), penalty)


# ------------------------------------------------------------------- DegreeD


@dataclass(frozen=True)
class UserRecord:
    user: str
    n_intervals: int
    expected_deps: float  # mean of deps * penalty
    delta_s: float  # mean boundary summary divergence

    @property
    def term(self) -> float:
        return self.delta_s * self.expected_deps


@dataclass(frozen=True)
class DiversityReport:
    tp: float
    rtc: float
    degreed: float
    per_user: tuple[UserRecord, ...]
    per_interval: tuple[IntervalRecord, ...]
    no_intervals: tuple[str, ...] = ()
    rtc_excluded: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "rtc": self.rtc,
            "degreed": self.degreed,
            "contributing_users": len(self.per_user),
            "no_intervals": list(self.no_intervals),
            "rtc_excluded": list(self.rtc_excluded),
            "per_user": [asdict(u) | {"term": u.term} for u in self.per_user],
            "per_interval": [asdict(r) | {"interval": list(r.interval)} for r in self.per_interval],
        }

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tp", "rtc", "degreed", "users"])
        w.writerow([repr(self.tp), repr(self.rtc), repr(self.degreed), len(self.per_user)])
        return buf.getvalue()


def user_record(user: str, records: Sequence[IntervalRecord]) -> UserRecord:
    e = float(np.mean([r.deps * r.penalty for r in records]))
    ds = float(np.mean([r.delta_s for r in records]))
    return UserRecord(user, len(records), e, ds)


def degreed_from_users(users: Sequence[UserRecord], alpha: float) -> float:
    if not users:
        raise DiversityError("no user has a valid interval")
    return alpha / len(users) * sum(u.term for u in users)


def degreed(uig: Uig, store: EmbeddingStore, cfg: DiversityConfig = DiversityConfig()) -> DiversityReport:
    """Full report; users are folded in id order so the sum is reproducible."""
    per_user, per_interval, empty = [], [], []
    for traj in sorted(uig.trajectories, key=lambda t: t.user):
        recs = interval_records(traj, uig, store, cfg)
        if not recs:
            empty.append(traj.user)
            continue
        per_interval.extend(recs)
        per_user.append(user_record(traj.user, recs))
    if empty:
        log.info("%d trajectories have no valid interval", len(empty))
    score = degreed_from_users(per_user, cfg.alpha)
    rtc_mean, rtc_excluded = rtc_dataset(uig)
    return DiversityReport(
        tp=tp_dataset(uig),
        rtc=rtc_mean,
        degreed=score,
        per_user=tuple(per_user),
        per_interval=tuple(per_interval),
        no_intervals=tuple(empty),
        rtc_excluded=tuple(rtc_excluded),
    )


def degreed_score(uig: Uig, store: EmbeddingStore, cfg: DiversityConfig = DiversityConfig()) -> float:
    """DegreeD alone, without topic statistics (no topics needed)."""
    users = []
    for traj in sorted(uig.trajectories, key=lambda t: t.user):
        recs = interval_records(traj, uig, store, cfg)
        if recs:
            users.append(user_record(traj.user, recs))
    return degreed_from_users(users, cfg.alpha)
