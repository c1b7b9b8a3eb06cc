"""Posterior summaries of sampled clusterings: relabelling, occupancy, co-clustering."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import State
from .sampler import TraceBlock

__all__ = [
    "canonical",
    "canonical_rows",
    "Relabeler",
    "relabel",
    "PosteriorSummary",
    "SummaryAccumulator",
    "summarize",
    "compare_to_truth",
    "nmi",
    "occupancy_of",
]


def canonical(z) -> tuple[int, ...]:
    """Partition key: clusters numbered by their smallest member, empties dropped."""
    seen: dict[int, int] = {}
    return tuple(seen.setdefault(int(c), len(seen)) for c in z)


def canonical_rows(z: np.ndarray) -> np.ndarray:
    """Row-wise :func:`canonical` for a 2-D array of assignments."""
    z = np.asarray(z, dtype=np.int64)
    S, N = z.shape
    if S == 0 or N == 0:
        return z.copy()
    K = int(z.max()) + 1
    first = np.full((S, K), N, dtype=np.int64)
    for k in range(K):
        mask = z == k
        first[:, k] = np.where(mask.any(axis=1), mask.argmax(axis=1), N)
    rank = np.argsort(np.argsort(first, axis=1, kind="stable"), axis=1, kind="stable")
    return np.take_along_axis(rank, z, axis=1)


def _labels(x):
    return np.asarray(x.z if isinstance(x, State) else x, dtype=np.int64)


class Relabeler:
    """Running label-switching correction for one chain.

    Keeps an N x K table of how often each node carried each label among
    the relabelled samples so far; each new sample is permuted to maximise
    its agreement with that table.
    """

    def __init__(self, N: int):
        self.counts = np.zeros((N, 0), dtype=np.int64)

    def _grow(self, K):
        if K > self.counts.shape[1]:
            extra = np.zeros((self.counts.shape[0], K - self.counts.shape[1]), dtype=np.int64)
            self.counts = np.hstack([self.counts, extra])

    def agreement(self, z, K: int) -> np.ndarray:
        """``A[k, l]``: accumulated agreement if sample label k is renamed l."""
        self._grow(K)
        A = np.zeros((K, K), dtype=np.int64)
        np.add.at(A, z, self.counts[:, :K])
        return A

    def __call__(self, sample: State) -> State:
        z, K = sample.z, sample.K
        A = self.agreement(z, K)
        if A.any():
            rows, cols = linear_sum_assignment(A, maximize=True)
            perm = np.empty(K, dtype=np.int64)
            perm[rows] = cols
            # keep the identity when it is already optimal
            if A[np.arange(K), np.arange(K)].sum() == A[rows, cols].sum():
                perm = np.arange(K)
        else:
            perm = np.arange(K)
        out = perm[z]
        self.counts[np.arange(z.size), out] += 1
        return State(K, out)


def relabel(sample: State, reference: Relabeler) -> State:
    return reference(sample)


@dataclass
class PosteriorSummary:
    n_samples: int
    k_histogram: dict
    occupied_histogram: dict
    coclustering: np.ndarray
    top_states: list
    move_stats: dict = field(default_factory=dict)

    @property
    def modal_K(self) -> int:
        return max(self.k_histogram, key=lambda k: (self.k_histogram[k], -k))

    @property
    def modal_state(self) -> tuple:
        return self.top_states[0][0]

    def to_dict(self, top: int = 10) -> dict:
        return {
            "n_samples": self.n_samples,
            "modal_K": self.modal_K,
            "k_histogram": {str(k): v for k, v in sorted(self.k_histogram.items())},
            "occupied_histogram": {str(k): v for k, v in sorted(self.occupied_histogram.items())},
            "top_states": [{"clustering": [c + 1 for c in s], "fraction": f}
                           for s, f in self.top_states[:top]],
            "move_stats": self.move_stats,
        }


class SummaryAccumulator:
    """Streaming fold over trace blocks; usable directly as a trace sink.

    Accumulators from independent chains combine with :meth:`merge`.
    """

    def __init__(self, N: int | None = None):
        self.N = N
        self.count = 0
        self.k_counts: Counter = Counter()
        self.occ_counts: Counter = Counter()
        self.state_counts: Counter = Counter()
        self.together = None if N is None else np.zeros((N, N), dtype=np.int64)

    def _init(self, N):
        if self.N is None:
            self.N = N
            self.together = np.zeros((N, N), dtype=np.int64)
        elif self.N != N:
            raise ValueError(f"trace has {N} nodes, accumulator expects {self.N}")

    def add(self, z, K: int):
        z = np.asarray(z, dtype=np.int64)
        self._init(z.size)
        self.count += 1
        self.k_counts[int(K)] += 1
        key = canonical(z)
        self.occ_counts[max(key) + 1 if key else 0] += 1
        self.state_counts[key] += 1
        self.together += z[:, None] == z[None, :]

    def write(self, block: TraceBlock):
        if len(block) == 0:
            return
        self._init(block.z.shape[1])
        self.count += len(block)
        ks, kc = np.unique(block.K, return_counts=True)
        self.k_counts.update(dict(zip(ks.tolist(), kc.tolist())))
        canon = canonical_rows(block.z)
        occ = canon.max(axis=1) + 1 if canon.shape[1] else np.zeros(len(block), np.int64)
        os_, oc = np.unique(occ, return_counts=True)
        self.occ_counts.update(dict(zip(os_.tolist(), oc.tolist())))
        rows, rc = np.unique(canon, axis=0, return_counts=True)
        for row, c in zip(rows.tolist(), rc.tolist()):
            self.state_counts[tuple(row)] += c
        # co-clustering in one shot per block
        z = block.z
        for k in np.unique(z):
            m = (z == k).astype(np.int64)
            self.together += m.T @ m

    def merge(self, other: SummaryAccumulator) -> SummaryAccumulator:
        out = SummaryAccumulator(self.N if self.N is not None else other.N)
        for acc in (self, other):
            if acc.N is None:
                continue
            out._init(acc.N)
            out.count += acc.count
            out.k_counts.update(acc.k_counts)
            out.occ_counts.update(acc.occ_counts)
            out.state_counts.update(acc.state_counts)
            out.together += acc.together
        return out

    def summary(self, move_stats: dict | None = None) -> PosteriorSummary:
        if self.count == 0:
            raise ValueError("cannot summarise an empty trace")
        c = self.count
        top = sorted(self.state_counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return PosteriorSummary(
            n_samples=c,
            k_histogram={k: v / c for k, v in sorted(self.k_counts.items())},
            occupied_histogram={k: v / c for k, v in sorted(self.occ_counts.items())},
            coclustering=self.together / c,
            top_states=[(s, v / c) for s, v in top],
            move_stats=dict(move_stats or {}),
        )


def summarize(trace, move_stats: dict | None = None) -> PosteriorSummary:
    """Summarise a trace (a :class:`TraceBlock` or an iterable of states)."""
    acc = SummaryAccumulator()
    if isinstance(trace, TraceBlock):
        acc.write(trace)
    else:
        for s in trace:
            acc.add(s.z, s.K)
    return acc.summary(move_stats)


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(a, b) -> float:
    """Normalised mutual information, normalised by the mean of the two entropies."""
    a, b = _labels(a), _labels(b)
    if a.size != b.size:
        raise ValueError(f"clusterings have different lengths ({a.size} vs {b.size})")
    if a.size == 0:
        return 1.0
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)
    ha, hb = _entropy(table.sum(1)), _entropy(table.sum(0))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    joint = _entropy(table.ravel())
    mi = max(ha + hb - joint, 0.0)
    return min(mi / ((ha + hb) / 2), 1.0)


def compare_to_truth(clustering, truth) -> dict:
    """Exact partition match (labels ignored) and NMI against a reference."""
    a, b = _labels(clustering), _labels(truth)
    if a.size != b.size:
        raise ValueError(f"clusterings have different lengths ({a.size} vs {b.size})")
    return {"exact_match": canonical(a) == canonical(b), "nmi": nmi(a, b)}


def occupancy_of(trace, target) -> float:
    """Fraction of samples whose partition equals ``target`` up to relabelling."""
    key = canonical(_labels(target))
    if isinstance(trace, TraceBlock):
        rows = trace.z
    else:
        rows = np.array([s.z for s in trace], dtype=np.int64).reshape(-1, len(key))
    if len(rows) == 0:
        return 0.0
    hits = np.all(canonical_rows(rows) == np.array(key, dtype=np.int64), axis=1)
    return float(hits.mean())
