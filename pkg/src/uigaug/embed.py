"""Embedding lookup, store persistence and the distance metrics used downstream."""

from __future__ import annotations

import enum
import hashlib
import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping

import numpy as np

from .uig import DocRecord, NodeId, NodeKind, SummaryRecord, Uig

DEFAULT_EPS = 1e-8

# ------------------------------------------------------------------ metrics


class MetricKind(str, enum.Enum):
    MANHATTAN = "manhattan"
    EUCLIDEAN = "euclidean"
    RMSD = "rmsd"
    COSINE = "cosine"
    WEIGHTED_MANHATTAN = "weighted_manhattan"


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class DistanceMetric:
    """A distance on embedding vectors.

    ``scale`` multiplies every distance; it exists so pure rescalings of a
    metric can be expressed without a new kind.
    """

    kind: MetricKind = MetricKind.MANHATTAN
    weights: tuple[float, ...] | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.kind is MetricKind.WEIGHTED_MANHATTAN and self.weights is None:
            raise ValueError("weighted_manhattan needs weights")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @classmethod
    def parse(cls, name: str) -> "DistanceMetric":
        return cls(MetricKind(name.lower().replace("-", "_")))

    def __call__(self, a: np.ndarray, b: np.ndarray) -> float:
        return distance(self, a, b)

    def pairwise(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Distance matrix between the rows of ``rows`` and of ``cols``."""
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        cols = np.atleast_2d(np.asarray(cols, dtype=np.float64))
        if rows.shape[1] != cols.shape[1]:
            raise DimensionMismatch(f"{rows.shape[1]} != {cols.shape[1]}")
        diff = rows[:, None, :] - cols[None, :, :]
        k = self.kind
        if k is MetricKind.MANHATTAN:
            out = np.abs(diff).sum(axis=-1)
        elif k is MetricKind.WEIGHTED_MANHATTAN:
            out = (np.abs(diff) * self._weights(rows.shape[1])).sum(axis=-1)
        elif k is MetricKind.EUCLIDEAN:
            out = np.sqrt((diff**2).sum(axis=-1))
        elif k is MetricKind.RMSD:
            out = np.sqrt((diff**2).mean(axis=-1))
        else:
            rn = np.linalg.norm(rows, axis=1)
            cn = np.linalg.norm(cols, axis=1)
            if np.any(rn == 0) or np.any(cn == 0):
                raise ValueError("cosine distance undefined for zero vectors")
            out = 1.0 - (rows @ cols.T) / np.outer(rn, cn)
            out = np.clip(out, 0.0, 2.0)
        return out * self.scale if self.scale != 1.0 else out

    def _weights(self, dim: int) -> np.ndarray:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (dim,):
            raise DimensionMismatch(f"weights have length {w.size}, vectors have {dim}")
        return w


def distance(m: DistanceMetric, a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} != {b.shape}")
    diff = a - b
    k = m.kind
    if k is MetricKind.MANHATTAN:
        d = float(np.abs(diff).sum())
    elif k is MetricKind.WEIGHTED_MANHATTAN:
        d = float((np.abs(diff) * m._weights(a.size)).sum())
    elif k is MetricKind.EUCLIDEAN:
        d = float(np.sqrt((diff**2).sum()))
    elif k is MetricKind.RMSD:
        d = float(np.sqrt((diff**2).mean()))
    else:
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0 or nb == 0:
            raise ValueError("cosine distance undefined for zero vectors")
        d = min(max(1.0 - float(a @ b) / (na * nb), 0.0), 2.0)
    return d * m.scale if m.scale != 1.0 else d


def weighted_manhattan(weights: Iterable[float]) -> DistanceMetric:
    return DistanceMetric(MetricKind.WEIGHTED_MANHATTAN, tuple(float(w) for w in weights))


# --------------------------------------------------------------------- keys


def doc_key(doc_id: str) -> str:
    return f"doc:{doc_id}"


def title_key(doc_id: str) -> str:
    return f"title:{doc_id}"


def sentence_key(doc_id: str, index: int) -> str:
    return f"sent:{doc_id}:{index}"


def summary_key(summary_id: str) -> str:
    return f"sum:{summary_id}"


def text_key(text: str) -> str:
    return "text:" + hashlib.sha1(text.encode("utf-8")).hexdigest()


def summary_embedding_key(rec: SummaryRecord) -> str:
    if rec.sentence_ref is not None:
        return sentence_key(*rec.sentence_ref)
    return summary_key(rec.id)


def node_key(uig: Uig, node: NodeId) -> str:
    if node.kind is NodeKind.DOC:
        return doc_key(node.id)
    if node.kind is NodeKind.SUMMARY:
        return summary_embedding_key(uig.summaries[node.id])
    raise KeyError(f"users carry no embedding: {node}")


# -------------------------------------------------------------------- store


class MissingEmbedding(KeyError):
    pass


@dataclass
class EmbeddingStore:
    """Read-only mapping from string keys to float32 vectors of one fixed dimension."""

    dim: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)
    note: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        clean = {}
        for key, vec in self.entries.items():
            clean[key] = self._check(key, vec)
        self.entries = clean

    def _check(self, key: str, vec) -> np.ndarray:
        arr = np.asarray(vec, dtype=np.float32).reshape(-1)
        if arr.size != self.dim:
            raise DimensionMismatch(f"{key!r} has dim {arr.size}, store dim is {self.dim}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{key!r} has non-finite entries")
        arr.setflags(write=False)
        return arr

    def add(self, key: str, vec) -> None:
        self.entries[key] = self._check(key, vec)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def __iter__(self) -> Iterator[str]:
        return iter(self.entries)

    def __getitem__(self, key: str) -> np.ndarray:
        try:
            return self.entries[key]
        except KeyError:
            raise MissingEmbedding(key) from None

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.entries.keys() == other.entries.keys()
            and all(np.array_equal(v, other.entries[k]) for k, v in self.entries.items())
        )

    def stack(self, keys: Iterable[str]) -> np.ndarray:
        keys = list(keys)
        if not keys:
            return np.zeros((0, self.dim))
        return np.stack([self[k] for k in keys]).astype(np.float64)

    def missing(self, keys: Iterable[str]) -> list[str]:
        return sorted({k for k in keys if k not in self.entries})

    def require(self, keys: Iterable[str]) -> None:
        miss = self.missing(keys)
        if miss:
            shown = ", ".join(miss[:5])
            raise MissingEmbedding(f"{len(miss)} missing embeddings (first: {shown})")


# --------------------------------------------------------------- embedder

_TOKEN = re.compile(r"[a-z0-9]+")


def test_embedder(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic bag-of-tokens stand-in for a sentence encoder.

    Each token maps to a pseudo-random vector in [-1, 1]; the text vector is
    their mean, so texts sharing vocabulary land close together.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    tokens = _TOKEN.findall(text.lower()) or [""]
    acc = np.zeros(dim)
    for tok in tokens:
        acc += _token_vector(tok, dim, seed)
    return acc / len(tokens)


test_embedder.__test__ = False  # keep pytest from collecting it

_TOKEN_CACHE: dict[tuple[str, int, int], np.ndarray] = {}


def _token_vector(token: str, dim: int, seed: int) -> np.ndarray:
    key = (token, dim, seed)
    vec = _TOKEN_CACHE.get(key)
    if vec is None:
        digest = hashlib.sha256(f"{seed}\x00{token}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:16], "little"))
        vec = rng.uniform(-1.0, 1.0, size=dim)
        if len(_TOKEN_CACHE) < 200_000:
            _TOKEN_CACHE[key] = vec
    return vec


Embedder = Callable[[str], np.ndarray]


def hashing_embedder(dim: int, seed: int = 0) -> Embedder:
    return lambda text: test_embedder(text, dim, seed)


def doc_context_text(doc: DocRecord, head: int = 3) -> str:
    """Text embedded for a document acting as a context node: title plus body head."""
    return doc.text(head)


def embed_uig(uig: Uig, embed: Embedder, dim: int, note: str = "", head: int = 3) -> EmbeddingStore:
    """Populate every key the augmentation and diversity stages will request."""
    store = EmbeddingStore(dim, note=note)
    for doc in uig.docs.values():
        store.add(doc_key(doc.id), embed(doc_context_text(doc, head)))
        store.add(title_key(doc.id), embed(doc.title))
        for i, sent in enumerate(doc.body):
            store.add(sentence_key(doc.id, i), embed(sent))
    for rec in uig.summaries.values():
        if rec.sentence_ref is None:
            store.add(summary_key(rec.id), embed(rec.text))
    return store


def required_keys(uig: Uig, sentences: bool = True) -> set[str]:
    keys: set[str] = set()
    for traj in uig.trajectories:
        for ev in traj.events:
            keys.add(node_key(uig, ev.node))
            if ev.node.kind is NodeKind.DOC:
                keys.add(title_key(ev.node.id))
                if sentences:
                    doc = uig.docs[ev.node.id]
                    keys.update(sentence_key(doc.id, i) for i in range(len(doc.body)))
    return keys


# -------------------------------------------------------------- persistence

_MAGIC = b"UIGEMB1\n"


class StoreFormatError(ValueError):
    pass


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    """Write the binary store: magic, JSON header line, then (key, f32 values) records."""
    path = Path(path)
    if path.suffix in (".json", ".jsonl"):
        return save_store_json(store, path)
    header = {"dim": store.dim, "count": len(store), "note": store.note}
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for key in sorted(store.entries):
            kb = key.encode("utf-8")
            vec = store.entries[key]
            fh.write(struct.pack("<II", len(kb), vec.size))
            fh.write(kb)
            fh.write(vec.astype("<f4").tobytes())


def load_store(path: str | Path) -> EmbeddingStore:
    path = Path(path)
    if path.suffix in (".json", ".jsonl"):
        return load_store_json(path)
    data = path.read_bytes()
    if not data.startswith(_MAGIC):
        raise StoreFormatError(f"{path}: not an embedding store")
    nl = data.index(b"\n", len(_MAGIC))
    header = json.loads(data[len(_MAGIC) : nl])
    dim = int(header["dim"])
    store = EmbeddingStore(dim, note=header.get("note", ""))
    pos = nl + 1
    for rec in range(int(header["count"])):
        if pos + 8 > len(data):
            raise StoreFormatError(f"{path}: truncated at record {rec}")
        klen, vdim = struct.unpack_from("<II", data, pos)
        pos += 8
        key = data[pos : pos + klen].decode("utf-8")
        pos += klen
        if vdim != dim:
            raise StoreFormatError(f"{path}: record {rec} ({key!r}) has dim {vdim}, header says {dim}")
        vec = np.frombuffer(data, dtype="<f4", count=vdim, offset=pos)
        pos += 4 * vdim
        store.add(key, vec)
    return store


def save_store_json(store: EmbeddingStore, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"dim": store.dim, "count": len(store), "note": store.note}) + "\n")
        for key in sorted(store.entries):
            values = [float(x) for x in store.entries[key]]
            fh.write(json.dumps({"key": key, "values": values}) + "\n")


def load_store_json(path: str | Path) -> EmbeddingStore:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise StoreFormatError(f"{path}: missing header")
    header = json.loads(lines[0])
    store = EmbeddingStore(int(header["dim"]), note=header.get("note", ""))
    for lineno, line in enumerate(lines[1:], start=2):
        rec = json.loads(line)
        if len(rec["values"]) != store.dim:
            raise StoreFormatError(
                f"{path}:{lineno}: {rec['key']!r} has dim {len(rec['values'])}, header says {store.dim}"
            )
        store.add(rec["key"], rec["values"])
    return store


def store_from_mapping(mapping: Mapping[str, Iterable[float]], note: str = "") -> EmbeddingStore:
    items = {k: np.asarray(list(v), dtype=np.float32) for k, v in mapping.items()}
    if not items:
        raise ValueError("cannot infer dim from an empty mapping")
    dim = next(iter(items.values())).size
    return EmbeddingStore(dim, items, note=note)
