"""Trajectory augmentation: seeded sampling, double shuffling, Markovian s-node perturbation, mixing."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from .embed import DistanceMetric, EmbeddingStore, MetricKind, node_key, required_keys, sentence_key
from .rng import substream
from .uig import (
    Action,
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

T = TypeVar("T")
R = TypeVar("R")


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every issue found."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class AugmentError(RuntimeError):
    pass


# ------------------------------------------------------------------- configs


@dataclass(frozen=True)
class DsConfig:
    m: int = 5
    gap: int = 2
    target_len: int = 150
    seg_len_range: tuple[int, int] = (2, 2)
    seed: int = 0
    strict: bool = False  # in-place substitution: output length equals target length
    offset: int | None = None  # fixed offset instead of a random draw

    def __post_init__(self):
        object.__setattr__(self, "seg_len_range", tuple(int(x) for x in self.seg_len_range))
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def problems(self) -> list[str]:
        out = []
        if self.m < 2:
            out.append(f"ds.m must be >= 2 (got {self.m})")
        if self.gap < 0:
            out.append(f"ds.gap must be >= 0 (got {self.gap})")
        if self.target_len < 1:
            out.append(f"ds.target_len must be >= 1 (got {self.target_len})")
        if len(self.seg_len_range) != 2:
            out.append("ds.seg_len_range must be [min, max]")
        else:
            lo, hi = self.seg_len_range
            if lo < 1:
                out.append(f"ds.seg_len_range min must be >= 1 (got {lo})")
            if hi < lo:
                out.append(f"ds.seg_len_range max < min ({hi} < {lo})")
        if self.offset is not None and self.offset < 1:
            out.append(f"ds.offset must be >= 1 (got {self.offset})")
        return out

    @property
    def name(self) -> str:
        lo, hi = self.seg_len_range
        tag = f"m{self.m}-g{self.gap}-l{self.target_len}-s{lo}-{hi}"
        return tag + "-strict" if self.strict else tag


@dataclass(frozen=True)
class SmpConfig:
    k: int = 10
    lam: float = 0.3
    p_smp: float = 0.8
    top_p: int = 1
    metric: DistanceMetric = field(default_factory=lambda: DistanceMetric(MetricKind.RMSD))
    seed: int = 0
    all_snodes: bool = False  # also perturb s-nodes that were not exchanged

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def problems(self) -> list[str]:
        out = []
        if self.k < 1:
            out.append(f"smp.k must be >= 1 (got {self.k})")
        if not self.lam >= 0:
            out.append(f"smp.lambda must be >= 0 (got {self.lam})")
        if not 0.0 <= self.p_smp <= 1.0:
            out.append(f"smp.p must be in [0, 1] (got {self.p_smp})")
        if self.top_p < 1:
            out.append(f"smp.top_p must be >= 1 (got {self.top_p})")
        return out

    def weights(self, k: int | None = None) -> np.ndarray:
        """Decay weights exp(-lambda * pos) for pos = 0..k-1."""
        k = self.k if k is None else k
        return np.exp(-self.lam * np.arange(k, dtype=np.float64))


@dataclass(frozen=True)
class MixConfig:
    configs: tuple[tuple[DsConfig, SmpConfig | None], ...]
    sample_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "configs", tuple(self.configs))
        problems = []
        if not self.configs:
            problems.append("mix needs at least one config")
        if not 0.0 < self.sample_fraction <= 1.0:
            problems.append(f"mix.sample_fraction must be in (0, 1] (got {self.sample_fraction})")
        if problems:
            raise ConfigError(problems)


MIX_GAPS = (10, 15, 20, 25, 40)
MIX_LENGTHS = (50, 100, 125, 175, 200)


def ten_config_mix(m: int = 5, seed: int = 0, seg_len_range: tuple[int, int] = (2, 2), fraction: float = 0.1) -> MixConfig:
    """Ten configs: l=150 across five gaps, and g=25 across five lengths, with SMP on."""
    smp = SmpConfig(k=10, lam=0.3, p_smp=0.8, seed=seed)
    pairs = [(150, g) for g in MIX_GAPS] + [(l, 25) for l in MIX_LENGTHS]
    configs = tuple(
        (DsConfig(m=m, gap=g, target_len=l, seg_len_range=seg_len_range, seed=seed), smp) for l, g in pairs
    )
    return MixConfig(configs, fraction, seed)


# ------------------------------------------------------------------ sampling


def sample_without_replacement(
    pool: Sequence[T], m: int, seed: int | np.random.Generator
) -> tuple[list[T], list[T]]:
    """Draw ``m`` items; the remainder keeps pool order."""
    if len(pool) < m:
        raise ValueError(f"pool of {len(pool)} is smaller than m={m}")
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, "sample")
    idx = rng.choice(len(pool), size=m, replace=False)
    chosen = set(int(i) for i in idx)
    return [pool[int(i)] for i in idx], [x for i, x in enumerate(pool) if i not in chosen]


def _pmap(fn: Callable[[T], R], items: Sequence[T], jobs: int) -> list[R]:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------- double shuffling


def _is_pair_start(events: Sequence[Event], i: int) -> bool:
    return (
        events[i].action is Action.GEN_SUMM
        and i + 1 < len(events)
        and events[i + 1].action is Action.SUMM_GEN
    )


def _is_pair_end(events: Sequence[Event], i: int) -> bool:
    return i > 0 and events[i].action is Action.SUMM_GEN and events[i - 1].action is Action.GEN_SUMM


def adjust_offset(events: Sequence[Event], offset: int, limit: int) -> int:
    """Move an offset that would split a (GenSumm, SummGen) pair; ``limit`` is the largest allowed value."""
    if offset < len(events) and _is_pair_end(events, offset):
        return offset + 1 if offset + 1 <= limit else offset - 1
    return offset


def _target_run(events: Sequence[Event], cursor: int, want: int, cap: int) -> tuple[list[int], int]:
    """Indices of the next kept target events, never splitting a pair; returns (indices, new cursor)."""
    n = len(events)
    if cursor < n and _is_pair_end(events, cursor):
        cursor += 1  # its GenSumm was replaced by a source segment
    taken: list[int] = []
    while cursor < n and len(taken) < want:
        size = 2 if _is_pair_start(events, cursor) else 1
        if len(taken) + size > cap:
            break
        taken.extend(range(cursor, cursor + size))
        cursor += size
    return taken, cursor


def _source_segment(
    events: Sequence[Event], length: int, cap: int, rng: np.random.Generator
) -> tuple[list[int], bool]:
    """Indices (possibly wrapping past the end) of a source segment; pairs stay whole."""
    n = len(events)
    wrapped = length > n
    start = int(rng.integers(0, n)) if wrapped else int(rng.integers(0, n - length + 1))
    if _is_pair_end(events, start):
        start -= 1
    limit = min(length, cap)
    taken: list[int] = []
    pos = start
    steps = 0
    while len(taken) < limit and steps < n + length:
        i = pos % n
        size = 2 if _is_pair_start(events, i) else 1
        if len(taken) + size > cap:
            if taken:
                break
            # at capacity one, skip the pair and look for the next single event
            pos += size
            steps += size
            continue
        taken.extend([i, (i + 1) % n] if size == 2 else [i])
        pos += size
        steps += size
    return taken, wrapped or any(j < start for j in taken)


def double_shuffle(
    sample: Sequence[Trajectory], cfg: DsConfig, stream: tuple = ()
) -> list[Trajectory]:
    """Splice segments of the other sampled trajectories into each target.

    Each output keeps the target's user, a preserved prefix of length O and
    runs of ``gap`` original events between substituted source segments.
    ``stream`` extends the RNG key (the pipeline passes its iteration index).
    """
    m = len(sample)
    if m < 2:
        raise ConfigError([f"double shuffling needs at least 2 trajectories (got {m})"])
    for tr in sample:
        if len(tr) < 2:
            raise AugmentError(f"trajectory of {tr.user} has length {len(tr)} < 2")
    return [_shuffle_one(sample, j, cfg, stream) for j in range(m)]


def _shuffle_one(sample: Sequence[Trajectory], j: int, cfg: DsConfig, stream: tuple) -> Trajectory:
    target = sample[j]
    tev = target.events
    lt = len(tev)
    out_len = lt if cfg.strict else cfg.target_len
    hi = min(lt, out_len) - 1
    if hi < 1:
        raise ConfigError([f"target_len {out_len} leaves no room after an offset of at least 1"])
    rng = substream(cfg.seed, "ds", *stream, target.user, j)
    if cfg.offset is not None:
        if cfg.offset > out_len - 1:
            raise ConfigError([f"target_len {out_len} must exceed the offset {cfg.offset}"])
        offset = min(cfg.offset, hi)  # shorter targets keep what they can
    else:
        offset = int(rng.integers(1, hi + 1))
    offset = adjust_offset(tev, offset, out_len - 1)
    if offset < 1:
        raise AugmentError(f"no valid offset for {target.user}")

    def keep(i: int) -> Event:
        ev = tev[i]
        return ev if ev.origin is not None else replace(ev, origin=Origin(target.user, i))

    out: list[Event] = [keep(i) for i in range(offset)]
    cursor = offset
    m = len(sample)
    sources = [sample[(j + 1 + r) % m] for r in range(m - 1)]
    lo, hi_seg = cfg.seg_len_range
    turn = 0
    while len(out) < out_len:
        cap = out_len - len(out)
        seg: list[int] = []
        src = sources[0]
        for attempt in range(len(sources)):
            src = sources[(turn + attempt) % len(sources)]
            length = int(rng.integers(lo, hi_seg + 1))
            seg, wrapped = _source_segment(src.events, length, cap, rng)
            if seg:
                turn += attempt + 1
                break
        if not seg:
            # every source is made only of pairs and one slot remains
            run, cursor = _target_run(tev, cursor, cap, cap)
            if not run:
                raise AugmentError(f"cannot fill the last slot of {target.user} without splitting a pair")
            out.extend(keep(i) for i in run)
            continue
        first = seg[0]
        for i in seg:
            ev = src.events[i]
            origin = Origin(src.user, i, exchanged=True, wrapped=wrapped and i < first)
            out.append(replace(ev, origin=origin))
        cursor += len(seg)
        if len(out) >= out_len:
            break
        if cfg.gap > 0 and cursor < lt:
            run, cursor = _target_run(tev, cursor, cfg.gap, out_len - len(out))
            out.extend(keep(i) for i in run)

    prov = Provenance(ProvenanceKind.DS, cfg.name, offset)
    return Trajectory.from_events(target.user, out, prov)


# ----------------------------------------------------- Markovian perturbation


def smp_summary_id(doc_id: str, index: int, user: str) -> str:
    return f"smp:{doc_id}:{index}:{user}"


def smp_scores(
    sentences: np.ndarray, context: np.ndarray, metric: DistanceMetric, lam: float
) -> np.ndarray:
    """Decay-weighted distance of each sentence row to the context rows (most recent first)."""
    sigma = metric.pairwise(sentences, context)
    weights = np.exp(-lam * np.arange(context.shape[0], dtype=np.float64))
    return sigma @ weights


def select_sentence(scores: np.ndarray, top_p: int = 1) -> int:
    """Lowest score (earliest on ties); with top_p > 1, the earliest sentence among the p lowest."""
    order = np.argsort(scores, kind="stable")
    return int(order[0]) if top_p == 1 else int(np.min(order[:top_p]))


def smp_perturb(
    traj: Trajectory,
    uig: Uig,
    store: EmbeddingStore,
    cfg: SmpConfig,
    stream: tuple = (),
) -> tuple[Trajectory, list[SummaryRecord]]:
    """Replace eligible s-nodes by the preceding document's sentence that best fits the recent context.

    Returns the new trajectory and the summary records it references that
    are not yet in ``uig``.
    """
    rng = substream(cfg.seed, "smp", *stream, traj.user)
    events = list(traj.events)
    new_records: dict[str, SummaryRecord] = {}
    changed = False
    for t, ev in enumerate(traj.events):
        if ev.action is not Action.SUMM_GEN:
            continue
        if not (cfg.all_snodes or (ev.origin is not None and ev.origin.exchanged)):
            continue
        if rng.random() >= cfg.p_smp:
            continue
        prev = traj.events[t - 1] if t > 0 else None
        if prev is None or prev.node.kind is not NodeKind.DOC:
            log.warning("%s@%d: s-node has no preceding document; skipped", traj.user, t)
            continue
        doc = uig.docs[prev.node.id]
        if not doc.body:
            log.warning("%s@%d: document %s has no sentences; skipped", traj.user, t, doc.id)
            continue
        ctx_nodes = [traj.events[t - q].node for q in range(1, min(cfg.k, t) + 1)]
        ctx = store.stack(node_key(uig, n) for n in ctx_nodes)
        sents = store.stack(sentence_key(doc.id, p) for p in range(len(doc.body)))
        pick = select_sentence(smp_scores(sents, ctx, cfg.metric, cfg.lam), cfg.top_p)
        sid = smp_summary_id(doc.id, pick, traj.user)
        if sid not in uig.summaries:
            new_records[sid] = SummaryRecord(sid, doc.body[pick], doc.id, traj.user, (doc.id, pick))
        origin = replace(ev.origin, perturbed=True) if ev.origin else Origin(traj.user, t, perturbed=True)
        events[t] = Event(t, NodeId.summary(sid), Action.SUMM_GEN, origin)
        changed = True
    if not changed:
        return traj, []
    return Trajectory(traj.user, tuple(events), traj.provenance), list(new_records.values())


# ------------------------------------------------------------------ pipeline


def run_pipeline(
    uig: Uig,
    ds: DsConfig,
    smp: SmpConfig | None = None,
    store: EmbeddingStore | None = None,
    jobs: int = 1,
    resample_outputs: bool = True,
) -> Uig:
    """floor(|T|/m) rounds of sample, shuffle, optionally perturb, and return to the pool.

    With ``resample_outputs`` (default) the outputs rejoin the pool and can be
    drawn again; otherwise every trajectory is transformed at most once.
    """
    pool = list(uig.trajectories)
    if len(pool) < ds.m:
        raise ValueError(f"pool of {len(pool)} is smaller than m={ds.m}")
    if smp is not None:
        if store is None:
            raise ValueError("SMP needs an embedding store")
        store.require(sorted(required_keys(uig)))
    done: list[Trajectory] = []
    summaries = dict(uig.summaries)
    rounds = len(pool) // ds.m
    for it in range(rounds):
        sample, pool = sample_without_replacement(pool, ds.m, substream(ds.seed, "sample", it))
        outs = double_shuffle(sample, ds, stream=(it,))
        if smp is not None:
            view = replace(uig, summaries=summaries)
            results = _pmap(lambda tr: smp_perturb(tr, view, store, smp, stream=(it,)), outs, jobs)
            outs = []
            for tr, recs in results:
                for rec in recs:
                    summaries.setdefault(rec.id, rec)
                outs.append(replace(tr, provenance=replace(tr.provenance, kind=ProvenanceKind.DSSMP)))
        if resample_outputs:
            pool.extend(outs)
        else:
            done.extend(outs)
    return Uig(tuple(pool + done), uig.docs, summaries)


def mixed_user_id(user: str, config_index: int) -> str:
    return f"{user}~{config_index}"


def build_mix(uig: Uig, mix: MixConfig, store: EmbeddingStore | None = None, jobs: int = 1) -> Uig:
    """Run every config, keep floor(fraction * count) of each output, and concatenate.

    User ids get a ``~<config index>`` suffix so the mixed pool stays keyed by user.
    """
    trajectories: list[Trajectory] = []
    summaries = dict(uig.summaries)
    for ci, (ds, smp) in enumerate(mix.configs):
        out = run_pipeline(uig, ds, smp, store, jobs)
        n = math.floor(mix.sample_fraction * len(out))
        if n == 0:
            raise AugmentError(f"config {ci} ({ds.name}) contributes no trajectories at fraction {mix.sample_fraction}")
        picks = sorted(int(i) for i in substream(mix.seed, "mix", ci).choice(len(out), size=n, replace=False))
        for i in picks:
            tr = out.trajectories[i]
            trajectories.append(replace(tr, user=mixed_user_id(tr.user, ci)))
        summaries.update(out.summaries)
    used = {e.node.id for tr in trajectories for e in tr.events if e.node.kind is NodeKind.SUMMARY}
    kept = {k: v for k, v in summaries.items() if k in uig.summaries or k in used}
    return Uig(tuple(trajectories), uig.docs, kept)


def provenance_counts(uig: Uig) -> dict[str, int]:
    counts: dict[str, int] = {}
    for tr in uig.trajectories:
        counts[tr.provenance.config] = counts.get(tr.provenance.config, 0) + 1
    return counts


def trajectories_by_user(items: Iterable[Trajectory]) -> dict[str, Trajectory]:
    return {t.user: t for t in items}
