"""Collapsed MCMC over (z, K) for the SBM, with the SCF constraint filter.

Every proposal is first accepted or rejected with the ordinary
Metropolis-Hastings rule on the collapsed SBM mass. Under ``model="scf"``
a provisional acceptance is confirmed only if a single posterior draw of
the block matrix for the *proposed* state satisfies the community
constraint; otherwise the chain stays put.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Protocol, TextIO

import numpy as np

from . import _kernels as kern
from .model import EDGE_MODELS, BlockStats, Hyperparameters, State, graph_of
from .network import Network

__all__ = [
    "MOVE_KINDS",
    "ChainConfig",
    "MoveRecord",
    "TraceBlock",
    "Trace",
    "CsvTraceSink",
    "MemoryTraceSink",
    "ChainResult",
    "SinkError",
    "sbm_log_acceptance",
    "scf_filter",
    "gibbs_node_move",
    "m3_move",
    "absorb_eject_move",
    "empty_cluster_move",
    "initial_state",
    "run_chain",
    "read_trace",
]

log = logging.getLogger(__name__)

MOVE_KINDS = kern.MOVE_NAMES
DEFAULT_WEIGHTS = {"gibbs": 70.0, "m3": 10.0, "absorb_eject": 10.0, "empty_cluster": 10.0}
CHUNK = 1 << 16
INIT_KINDS = ("single", "random")


@dataclass(frozen=True)
class ChainConfig:
    iterations: int
    burnin: int | None = None
    thin: int = 1
    fixed_K: int | None = None
    move_weights: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    seed: int = 0
    model: str = "sbm"
    edge_model: str = "bernoulli"
    max_K: int | None = None
    init: str = "single"

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        burnin = self.burnin
        if burnin is None:
            burnin = self.iterations // 10
            object.__setattr__(self, "burnin", burnin)
        if burnin < 0 or (self.iterations > 0 and burnin >= self.iterations) or (
                self.iterations == 0 and burnin != 0):
            raise ValueError(f"burnin must be in [0, iterations), got {burnin}")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.model not in ("sbm", "scf"):
            raise ValueError(f"model must be 'sbm' or 'scf', got {self.model!r}")
        if self.init not in INIT_KINDS:
            raise ValueError(f"init must be one of {INIT_KINDS}, got {self.init!r}")
        if self.edge_model not in EDGE_MODELS:
            raise ValueError(f"edge_model must be one of {EDGE_MODELS}")
        if self.fixed_K is not None and self.fixed_K < 1:
            raise ValueError("fixed_K must be positive")
        if self.max_K is not None and self.max_K < 1:
            raise ValueError("max_K must be positive")
        if self.fixed_K is not None and self.max_K is not None and self.fixed_K > self.max_K:
            raise ValueError("fixed_K exceeds max_K")
        unknown = set(self.move_weights) - set(MOVE_KINDS)
        if unknown:
            raise ValueError(f"unknown move kinds: {sorted(unknown)}")
        weights = {k: float(self.move_weights.get(k, 0.0)) for k in MOVE_KINDS}
        if any(w < 0 or not math.isfinite(w) for w in weights.values()):
            raise ValueError("move weights must be finite and non-negative")
        if self.fixed_K is not None:
            weights["absorb_eject"] = 0.0
            weights["empty_cluster"] = 0.0
        if sum(weights.values()) <= 0:
            raise ValueError("at least one usable move weight must be positive")
        object.__setattr__(self, "move_weights", weights)

    def resolved_max_K(self, N: int) -> int:
        if self.fixed_K is not None:
            return self.fixed_K
        return self.max_K if self.max_K is not None else max(N, 1)

    def cumulative_weights(self) -> np.ndarray:
        return np.cumsum([self.move_weights[k] for k in MOVE_KINDS]).astype(np.float64)

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "burnin": self.burnin, "thin": self.thin,
                "fixed_K": self.fixed_K, "move_weights": dict(self.move_weights),
                "seed": self.seed, "model": self.model, "edge_model": self.edge_model,
                "max_K": self.max_K, "init": self.init}


@dataclass(frozen=True)
class MoveRecord:
    kind: str
    proposed_K: int
    sbm_log_accept: float
    provisional: bool
    constraint_pass: bool | None
    accepted: bool
    feasible: bool = True

    @classmethod
    def _from_kernel(cls, res) -> MoveRecord:
        kind, k_new, la, feasible, prov, cons, acc = res
        return cls(MOVE_KINDS[kind], int(k_new), float(la), bool(prov),
                   None if cons < 0 else bool(cons), bool(acc), bool(feasible))


def sbm_log_acceptance(current_log_mass: float, proposed_log_mass: float,
                       log_proposal_ratio: float) -> float:
    """Log Metropolis-Hastings acceptance probability, ``log q(t->s) - log q(s->t)`` given."""
    return min(0.0, log_proposal_ratio + proposed_log_mass - current_log_mass)


def scf_filter(provisional: bool, proposed_stats: BlockStats, hyper: Hyperparameters,
               edge_model: str, rng: np.random.Generator):
    """Confirm a provisional acceptance with one posterior draw of the block matrix.

    Returns ``(accepted, constraint_pass)``; ``constraint_pass`` is None when
    nothing was drawn because the proposal was already rejected.
    """
    if not provisional:
        return False, None
    ok = kern.constraint_draw(proposed_stats.n, proposed_stats.y, proposed_stats.K,
                              proposed_stats.directed, edge_model == "poisson",
                              hyper.as_array(), rng)
    return bool(ok), bool(ok)


class _Workspace:
    """Mutable kernel arrays for one chain, sized for up to ``cap`` clusters."""

    def __init__(self, net: Network, state: State, cap: int, stats: BlockStats | None = None):
        if state.N != net.N:
            raise ValueError(f"state has {state.N} nodes, network has {net.N}")
        cap = max(cap, state.K + 1)
        self.graph = graph_of(net)
        self.N = net.N
        self.directed = net.directed
        self.K = state.K
        self.z = state.z.copy()
        self.n = np.zeros(cap, dtype=np.int64)
        self.y = np.zeros((cap, cap), dtype=np.int64)
        if stats is None:
            kern.build_stats(self.z, self.K, self.N, self.graph.out_ptr, self.graph.out_idx,
                             self.graph.out_w, self.directed, self.n, self.y)
        else:
            if stats.K != state.K:
                raise ValueError("statistics and state disagree on K")
            self.n[:state.K] = stats.n
            self.y[:state.K, :state.K] = stats.y
        self.wout = np.zeros(cap, dtype=np.int64)
        self.win = np.zeros(cap, dtype=np.int64)
        self.scores = np.zeros(cap, dtype=np.float64)

    def state(self) -> State:
        return State(self.K, self.z.copy())

    def stats(self) -> BlockStats:
        K = self.K
        return BlockStats(self.n[:K].copy(), self.y[:K, :K].copy(), self.directed,
                          self.graph.logfact)


def _local_move(kernel, net, state, stats, hyper, config, rng):
    ws = _Workspace(net, state, state.K + 1, stats)
    res = kernel(ws.z, ws.n, ws.y, ws.K, ws.N, *ws.graph.args(), ws.directed,
                 config.edge_model == "poisson", config.model == "scf",
                 hyper.as_array(), rng, ws.wout, ws.win, ws.scores)
    return ws.state(), ws.stats(), MoveRecord._from_kernel(res)


def _jump_move(kernel, net, state, stats, hyper, config, rng):
    max_k = config.resolved_max_K(net.N)
    ws = _Workspace(net, state, max(max_k, state.K) + 1, stats)
    g = ws.graph
    res = kernel(ws.z, ws.n, ws.y, ws.K, ws.N, max_k, g.out_ptr, g.out_idx, g.out_w,
                 ws.directed, config.edge_model == "poisson", config.model == "scf",
                 hyper.as_array(), g.logfact, rng)
    record = MoveRecord._from_kernel(res)
    if record.accepted:
        ws.K = record.proposed_K
    return ws.state(), ws.stats(), record


def gibbs_node_move(net: Network, state: State, stats: BlockStats | None,
                    hyper: Hyperparameters, config: ChainConfig, rng: np.random.Generator):
    """Resample one uniformly chosen node's cluster from its full conditional.

    The conditional is used as a Metropolis-Hastings proposal, so its SBM
    acceptance is one up to rounding; under SCF the constraint filter still
    applies.
    """
    return _local_move(kern.gibbs_move, net, state, stats, hyper, config, rng)


def m3_move(net: Network, state: State, stats: BlockStats | None,
            hyper: Hyperparameters, config: ChainConfig, rng: np.random.Generator):
    """Jointly reassign the members of two random clusters.

    Members are detached and placed back one at a time in index order, each
    drawn from its two-way conditional given the nodes already placed.
    The reverse proposal probability comes from replaying the same scan
    onto the current assignment.
    """
    return _local_move(kern.m3_move, net, state, stats, hyper, config, rng)


def absorb_eject_move(net: Network, state: State, stats: BlockStats | None,
                      hyper: Hyperparameters, config: ChainConfig, rng: np.random.Generator):
    """Split one cluster in two (eject) or merge two clusters (absorb).

    Eject: a source cluster and a slot for the new cluster are chosen
    uniformly, a proportion ``u ~ Beta(1, 1)`` is drawn and each member leaves
    with probability ``u``; the proposal probability integrates ``u`` out.
    Absorb merges one cluster into another and moves the last cluster into
    the vacated slot.
    """
    return _jump_move(kern.absorb_eject_move, net, state, stats, hyper, config, rng)


def empty_cluster_move(net: Network, state: State, stats: BlockStats | None,
                       hyper: Hyperparameters, config: ChainConfig, rng: np.random.Generator):
    """Insert an empty cluster at a random slot, or delete a random empty cluster."""
    return _jump_move(kern.empty_cluster_move, net, state, stats, hyper, config, rng)


def initial_state(N: int, config: ChainConfig, rng: np.random.Generator | None = None,
                  hyper: Hyperparameters | None = None) -> State:
    """Starting state for a chain.

    ``init="single"`` puts every node in cluster 0, with ``fixed_K - 1``
    extra empty clusters if K is fixed. ``init="random"`` draws K from its
    prior truncated to ``[1, max_K]`` (or takes ``fixed_K``) and assigns
    nodes uniformly, using ``rng``.
    """
    if config.init == "single":
        return State(config.fixed_K or 1, np.zeros(N, dtype=np.int64))
    if rng is None:
        raise ValueError("random initialisation needs an rng")
    K = config.fixed_K
    if K is None:
        rate = (hyper or Hyperparameters()).k_rate
        ks = np.arange(1, config.resolved_max_K(N) + 1)
        logp = ks * math.log(rate) - np.array([math.lgamma(k + 1.0) for k in ks])
        p = np.exp(logp - logp.max())
        K = int(rng.choice(ks, p=p / p.sum()))
    return State(K, rng.integers(0, K, size=N))


# -- traces --------------------------------------------------------------------

@dataclass
class TraceBlock:
    """A batch of emitted samples; ``z`` has one row per sample."""

    iteration: np.ndarray
    K: np.ndarray
    occupied: np.ndarray
    log_mass: np.ndarray
    z: np.ndarray

    def __len__(self):
        return len(self.iteration)

    def states(self) -> Iterable[State]:
        for k, row in zip(self.K, self.z):
            yield State(int(k), row)


Trace = TraceBlock


class TraceSink(Protocol):
    def write(self, block: TraceBlock) -> None: ...


class SinkError(RuntimeError):
    """A trace sink failed; output written so far is marked incomplete."""


class MemoryTraceSink:
    """Collects every emitted sample in memory."""

    def __init__(self):
        self._blocks: list[TraceBlock] = []

    def write(self, block: TraceBlock):
        self._blocks.append(block)

    @property
    def trace(self) -> TraceBlock:
        if not self._blocks:
            return TraceBlock(np.zeros(0, np.int64), np.zeros(0, np.int64),
                              np.zeros(0, np.int64), np.zeros(0), np.zeros((0, 0), np.int64))
        return TraceBlock(*(np.concatenate([getattr(b, f) for b in self._blocks])
                            for f in ("iteration", "K", "occupied", "log_mass", "z")))


TRACE_HEADER = ["iteration", "K", "occupied", "log_mass", "z"]


class CsvTraceSink:
    """Writes samples as CSV rows; ``z`` is a quoted, space-separated, 1-based vector."""

    INCOMPLETE = "# INCOMPLETE: chain aborted\n"

    def __init__(self, fh: TextIO):
        self.fh = fh
        fh.write(",".join(TRACE_HEADER) + "\n")

    def write(self, block: TraceBlock):
        lines = []
        for it, k, occ, lp, row in zip(block.iteration.tolist(), block.K.tolist(),
                                       block.occupied.tolist(), block.log_mass.tolist(),
                                       (block.z + 1).tolist()):
            lines.append(f'{it},{k},{occ},{lp!r},"{" ".join(map(str, row))}"\n')
        self.fh.write("".join(lines))

    def abort(self):
        try:
            self.fh.write(self.INCOMPLETE)
            self.fh.flush()
        except OSError:
            pass


def read_trace(fh: TextIO) -> TraceBlock:
    """Parse a CSV trace written by :class:`CsvTraceSink`."""
    reader = csv.reader(fh)
    header = next(reader, None)
    if header != TRACE_HEADER:
        raise ValueError(f"not a trace file (header {header!r})")
    its, ks, occs, lps, zs = [], [], [], [], []
    for row in reader:
        if not row or row[0].startswith("#"):
            if row and row[0].startswith("# INCOMPLETE"):
                log.warning("trace is marked incomplete")
            continue
        its.append(int(row[0]))
        ks.append(int(row[1]))
        occs.append(int(row[2]))
        lps.append(float(row[3]))
        zs.append([int(c) - 1 for c in row[4].split()])
    N = len(zs[0]) if zs else 0
    return TraceBlock(np.array(its, dtype=np.int64), np.array(ks, dtype=np.int64),
                      np.array(occs, dtype=np.int64), np.array(lps, dtype=np.float64),
                      np.array(zs, dtype=np.int64).reshape(len(zs), N))


# -- chain ---------------------------------------------------------------------

@dataclass
class ChainResult:
    config: ChainConfig
    final_state: State
    emitted: int
    counts: np.ndarray

    def move_stats(self) -> dict:
        """Per-move counters and acceptance rates, keyed by move kind."""
        out = {}
        for k, name in enumerate(MOVE_KINDS):
            row = {c: int(v) for c, v in zip(kern.COUNT_NAMES, self.counts[k])}
            prop = row["proposed"]
            row["acceptance_rate"] = row["accepted"] / prop if prop else None
            checked = row["constraint_checked"]
            row["constraint_pass_rate"] = row["constraint_passed"] / checked if checked else None
            out[name] = row
        return out


def run_chain(net: Network, config: ChainConfig, hyper: Hyperparameters | None = None,
              sinks: Iterable[TraceSink] = (), state: State | None = None,
              rng: np.random.Generator | None = None) -> ChainResult:
    """Run one chain, streaming every ``thin``-th post-burn-in state to ``sinks``.

    Output is fully determined by ``config.seed`` (unless an explicit ``rng``
    is passed). The chain starts from :func:`initial_state` unless ``state``
    is given.
    """
    hyper = hyper or Hyperparameters()
    sinks = list(sinks)
    if net.weighted and config.edge_model == "bernoulli":
        raise ValueError("bernoulli edge model needs an unweighted network; binarize it first")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    N = net.N
    max_k = config.resolved_max_K(N)
    state = state if state is not None else initial_state(N, config, rng, hyper)
    if state.N != N:
        raise ValueError("initial state does not match the network")
    if config.fixed_K is not None and state.K != config.fixed_K:
        raise ValueError("initial state violates fixed_K")
    if state.K > max_k:
        raise ValueError("initial state exceeds max_K")
    counts = np.zeros((len(MOVE_KINDS), len(kern.COUNT_NAMES)), dtype=np.int64)
    if N == 0 or config.iterations == 0:
        return ChainResult(config, state, 0, counts)

    ws = _Workspace(net, state, max_k + 1)
    g = ws.graph
    kbox = np.array([ws.K], dtype=np.int64)
    cum = config.cumulative_weights()
    h = hyper.as_array()
    poisson = config.edge_model == "poisson"
    scf = config.model == "scf"

    emitted = 0
    done = 0
    while done < config.iterations:
        step = min(CHUNK, config.iterations - done)
        cap = step // config.thin + 1
        out_it = np.zeros(cap, dtype=np.int64)
        out_k = np.zeros(cap, dtype=np.int64)
        out_occ = np.zeros(cap, dtype=np.int64)
        out_lp = np.zeros(cap, dtype=np.float64)
        out_z = np.zeros((cap, N), dtype=np.int64)
        m = kern.run_chunk(step, done, config.burnin, config.thin, cum, ws.z, ws.n, ws.y,
                           kbox, N, max_k, *g.args(), net.directed, poisson, scf, h,
                           g.logfact, rng, counts, out_it, out_k, out_occ, out_lp, out_z)
        done += step
        if m:
            block = TraceBlock(out_it[:m], out_k[:m], out_occ[:m], out_lp[:m], out_z[:m])
            for sink in sinks:
                try:
                    sink.write(block)
                except OSError as exc:
                    for s in sinks:
                        if hasattr(s, "abort"):
                            s.abort()
                    raise SinkError(f"trace sink failed after {emitted} samples: {exc}") from exc
            emitted += m
    ws.K = int(kbox[0])
    return ChainResult(config, ws.state(), emitted, counts)
