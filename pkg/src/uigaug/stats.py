"""Correlations between diversity and accuracy, and empirical checks of metric-substitution stability."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

# -------------------------------------------------------------- correlations


def _pair(x: Sequence[float], y: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"series must be 1-d and aligned ({x.shape} vs {y.shape})")
    if x.size < 2:
        raise ValueError("need at least two points")
    return x, y


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson r; nan when either series has zero variance."""
    x, y = _pair(x, y)
    if np.all(x == x[0]) or np.all(y == y[0]):
        return math.nan
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def rankdata(x: Sequence[float]) -> np.ndarray:
    """1-based ranks, ties get the average of the ranks they span."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    sx = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson on average ranks; 0 when either ranking is constant."""
    x, y = _pair(x, y)
    rx, ry = rankdata(x), rankdata(y)
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        return 0.0
    return pearson(rx, ry)


def spearman_from_d(x: Sequence[float], y: Sequence[float]) -> float:
    """1 - 6 sum d^2 / (n (n^2 - 1)); exact only without ties."""
    x, y = _pair(x, y)
    d = rankdata(x) - rankdata(y)
    n = x.size
    return 1.0 - 6.0 * float(d @ d) / (n * (n * n - 1))


def _count_inversions(a: list) -> int:
    """Pairs i < j with a[i] > a[j], by merge sort."""
    if len(a) < 2:
        return 0
    mid = len(a) // 2
    left, right = a[:mid], a[mid:]
    inv = _count_inversions(left) + _count_inversions(right)
    i = j = k = 0
    while i < len(left) and j < len(right):
        if right[j] < left[i]:
            a[k] = right[j]
            inv += len(left) - i
            j += 1
        else:
            a[k] = left[i]
            i += 1
        k += 1
    a[k:] = left[i:] + right[j:]
    return inv


def _tied_pairs(values) -> int:
    _, counts = np.unique(values, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


def concordance(x: Sequence[float], y: Sequence[float]) -> tuple[int, int]:
    """(concordant, discordant) pair counts in O(n log n)."""
    x, y = _pair(x, y)
    n = x.size
    order = np.lexsort((y, x))
    ys = [float(v) for v in y[order]]
    swaps = _count_inversions(ys)
    n0 = n * (n - 1) // 2
    n1 = _tied_pairs(x)
    n2 = _tied_pairs(y)
    n3 = sum(c * (c - 1) // 2 for c in Counter(zip(x.tolist(), y.tolist())).values())
    discordant = swaps
    concordant = n0 - n1 - n2 + n3 - discordant
    return concordant, discordant


def kendall(x: Sequence[float], y: Sequence[float]) -> float:
    """(C - D) / (n (n - 1) / 2); tied pairs count as neither."""
    c, d = concordance(x, y)
    n = len(x)
    return (c - d) / (n * (n - 1) / 2)


CORRELATIONS = {"pearson": pearson, "spearman": spearman, "kendall": kendall}


@dataclass(frozen=True)
class PairedSeries:
    labels: tuple[str, ...]
    x: tuple[float, ...]
    y: tuple[float, ...]

    def __post_init__(self):
        if not len(self.labels) == len(self.x) == len(self.y):
            raise ValueError("labels, x and y must have the same length")
        if len(self.labels) < 2:
            raise ValueError("need at least two datasets")

    def correlations(self) -> dict[str, float]:
        return {name: fn(self.x, self.y) for name, fn in CORRELATIONS.items()}


@dataclass(frozen=True)
class CorrelationRow:
    metric: str
    values: dict[str, float]
    # leave-one-out: dataset label -> correlation name -> value without it minus full value
    loo_delta: dict[str, dict[str, float]] = field(default_factory=dict)


def diversity_accuracy_correlation(
    diversity: Mapping[str, Mapping[str, float]], accuracy: Mapping[str, float]
) -> list[CorrelationRow]:
    """One row per diversity metric: Pearson, Spearman and Kendall against accuracy across datasets."""
    labels = sorted(accuracy)
    rows = []
    for metric in diversity:
        series = diversity[metric]
        if sorted(series) != labels:
            raise ValueError(f"metric {metric}: dataset labels do not match accuracy labels")
        x = [series[l] for l in labels]
        y = [accuracy[l] for l in labels]
        full = PairedSeries(tuple(labels), tuple(x), tuple(y)).correlations()
        loo: dict[str, dict[str, float]] = {}
        if len(labels) > 2:
            for i, lab in enumerate(labels):
                xs, ys = x[:i] + x[i + 1 :], y[:i] + y[i + 1 :]
                part = {name: fn(xs, ys) for name, fn in CORRELATIONS.items()}
                loo[lab] = {name: part[name] - full[name] for name in part}
        rows.append(CorrelationRow(metric, full, loo))
    return rows


def correlation_table_csv(rows: Sequence[CorrelationRow]) -> str:
    lines = ["metric,pearson,spearman,kendall"]
    for r in rows:
        vals = ["undefined" if math.isnan(r.values[n]) else repr(r.values[n]) for n in CORRELATIONS]
        lines.append(",".join([r.metric, *vals]))
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ stability


def _check_constants(lam: float, Lam: float) -> None:
    if not 0 < lam <= Lam:
        raise ValueError(f"need 0 < lambda <= Lambda (got {lam}, {Lam})")


def squeeze_constants(lam: float, Lam: float) -> tuple[float, float]:
    """(lambda^3 / Lambda^2, Lambda^3 / lambda^2)."""
    _check_constants(lam, Lam)
    return lam**3 / Lam**2, Lam**3 / lam**2


@dataclass(frozen=True)
class StabilityInput:
    F: tuple[float, ...]
    G: tuple[float, ...]
    lam: float
    Lam: float
    A: tuple[float, ...] | None = None

    def __post_init__(self):
        _check_constants(self.lam, self.Lam)
        if len(self.F) != len(self.G):
            raise ValueError("F and G must be aligned")
        if any(f <= 0 for f in self.F):
            raise ValueError("every F must be positive")


@dataclass(frozen=True)
class SqueezeVerdict:
    index: int
    F: float
    G: float
    lower: float
    upper: float
    ok: bool


def squeeze_check(si: StabilityInput, slack: float = 1e-9) -> list[SqueezeVerdict]:
    """Per dataset: K_- F <= G <= K_+ F, with relative slack."""
    k_lo, k_hi = squeeze_constants(si.lam, si.Lam)
    out = []
    for i, (f, g) in enumerate(zip(si.F, si.G)):
        lo, hi = k_lo * f, k_hi * f
        ok = lo * (1 - slack) <= g <= hi * (1 + slack)
        out.append(SqueezeVerdict(i, f, g, lo, hi, ok))
    return out


def ambiguity_band(lam: float, Lam: float) -> tuple[float, float]:
    _check_constants(lam, Lam)
    r = (lam / Lam) ** 5
    return r, 1.0 / r


def ranks_desc(values: Sequence[float]) -> list[int]:
    """Rank positions (0 = largest)."""
    order = sorted(range(len(values)), key=lambda i: -values[i])
    pos = [0] * len(values)
    for r, i in enumerate(order):
        pos[i] = r
    return pos


@dataclass(frozen=True)
class StabilityReport:
    band: tuple[float, float]
    in_band_pairs: tuple[tuple[int, int], ...]
    guaranteed: bool  # no pairwise ratio inside the band
    inversions: tuple[tuple[int, int], ...]
    d_squared: tuple[float, ...]
    spearman: float
    kendall: float

    @property
    def stable(self) -> bool:
        return not self.inversions


def rank_stability(si: StabilityInput) -> StabilityReport:
    F, G = list(si.F), list(si.G)
    if len(set(F)) != len(F):
        raise ValueError("F values must be distinct")
    lo, hi = ambiguity_band(si.lam, si.Lam)
    n = len(F)
    in_band = tuple((i, j) for i in range(n) for j in range(i + 1, n) if lo <= F[i] / F[j] <= hi)
    inversions = tuple(
        (i, j) for i in range(n) for j in range(i + 1, n) if (F[i] - F[j]) * (G[i] - G[j]) < 0
    )
    d = np.array(ranks_desc(F), dtype=np.float64) - np.array(ranks_desc(G), dtype=np.float64)
    return StabilityReport(
        band=(lo, hi),
        in_band_pairs=in_band,
        guaranteed=not in_band,
        inversions=inversions,
        d_squared=tuple(float(v) for v in d * d),
        spearman=spearman(F, G),
        kendall=kendall(F, G),
    )


def adjacency_bound(k_swaps: int, m: int) -> float:
    """Spearman floor after ``k_swaps`` disjoint adjacent transpositions of an m-ranking."""
    return 1.0 - 12.0 * k_swaps / (m * (m * m - 1))


def kappa0(lam: float, Lam: float) -> float:
    """Lower bound on the Pearson correlation between DegreeD under the two metrics."""
    _check_constants(lam, Lam)
    return (lam / Lam) ** 2.5


def pearson_transfer_bound(r_fg: float, r_fa: float) -> float:
    for r in (r_fg, r_fa):
        if not -1.0 <= r <= 1.0:
            raise ValueError(f"correlation {r} outside [-1, 1]")
    return r_fg * r_fa - math.sqrt(max(0.0, 1 - r_fg**2)) * math.sqrt(max(0.0, 1 - r_fa**2))
