"""Networks: edge-list parsing/writing and synthetic generators."""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

__all__ = [
    "Network",
    "ParseError",
    "parse_edge_list",
    "read_edge_list",
    "write_network",
    "generate_two_star_network",
    "generate_from_model",
    "parse_clustering",
    "write_clustering",
]

_SPLIT = re.compile(r"[,\s]+")


class ParseError(ValueError):
    """Malformed edge-list or clustering input."""

    def __init__(self, message: str, lineno: int | None = None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


@dataclass(frozen=True, eq=False)
class Network:
    """A simple graph on ``len(labels)`` nodes with positive integer weights.

    ``edges`` maps an index pair ``(i, j)`` to its weight. Undirected
    networks store each edge once with ``i < j``; self-loops never appear.
    """

    labels: tuple[str, ...]
    directed: bool
    weighted: bool
    edges: dict[tuple[int, int], int]
    self_loops_dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        n = len(self.labels)
        for (i, j), w in self.edges.items():
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) out of range for N={n}")
            if not self.directed and i > j:
                raise ValueError("undirected edges must be stored with i < j")
            if w < 1:
                raise ValueError(f"non-positive weight {w} on edge ({i}, {j})")
            if not self.weighted and w != 1:
                raise ValueError("unweighted network with weight != 1")

    @property
    def N(self) -> int:
        return len(self.labels)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def total_weight(self) -> int:
        return sum(self.edges.values())

    def weight(self, i: int, j: int) -> int:
        if not self.directed and i > j:
            i, j = j, i
        return self.edges.get((i, j), 0)

    def adjacency(self) -> np.ndarray:
        """Dense N x N integer matrix; symmetric when undirected."""
        a = np.zeros((self.N, self.N), dtype=np.int64)
        for (i, j), w in self.edges.items():
            a[i, j] = w
            if not self.directed:
                a[j, i] = w
        return a

    def degrees(self) -> np.ndarray:
        a = self.adjacency()
        return (a > 0).sum(axis=1) + ((a > 0).sum(axis=0) if self.directed else 0)

    def binarized(self) -> Network:
        return Network(self.labels, self.directed, False,
                       {e: 1 for e in self.edges}, self.self_loops_dropped)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (self.labels == other.labels and self.directed == other.directed
                and self.weighted == other.weighted and self.edges == other.edges)

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        w = "weighted" if self.weighted else "unweighted"
        return f"Network(N={self.N}, edges={self.num_edges}, {kind}, {w})"


def _lines(text: str | TextIO) -> Iterable[str]:
    if isinstance(text, str):
        text = io.StringIO(text)
    for line in text:
        yield line.rstrip("\r\n")


def parse_edge_list(text: str | TextIO, directed: bool = False,
                    weighted: bool = False, binarize: bool = False) -> Network:
    """Parse ``src dst [weight]`` lines into a :class:`Network`.

    Fields may be separated by whitespace or commas and ``#`` starts a
    comment line. A line holding a single label declares a node without
    adding an edge (this is how isolated nodes are kept). Node labels are
    assigned indices in order of first appearance. Duplicate edges collapse
    (unweighted) or sum (weighted). Self-loops are dropped and counted in ``Network.self_loops_dropped``.

    A weight column on an unweighted parse is an error unless ``binarize``
    is set, in which case every weight is forced to 1.
    """
    index: dict[str, int] = {}
    labels: list[str] = []
    edges: dict[tuple[int, int], int] = {}
    loops = 0
    keep_weights = weighted and not binarize

    def node(name: str) -> int:
        if name not in index:
            index[name] = len(labels)
            labels.append(name)
        return index[name]

    for lineno, line in enumerate(_lines(text), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = [f for f in _SPLIT.split(stripped) if f]
        if len(fields) == 1:
            node(fields[0])
            continue
        if len(fields) not in (2, 3):
            raise ParseError(f"expected 1 to 3 fields, got {len(fields)}", lineno)
        w = 1
        if len(fields) == 3:
            if not weighted and not binarize:
                raise ParseError("weight column present but network is unweighted "
                                 "(pass weighted or binarize)", lineno)
            try:
                w = int(fields[2])
            except ValueError:
                raise ParseError(f"non-integer weight {fields[2]!r}", lineno) from None
            if w < 1:
                raise ParseError(f"weight must be >= 1, got {w}", lineno)
        i, j = node(fields[0]), node(fields[1])
        if i == j:
            loops += 1
            continue
        if not directed and i > j:
            i, j = j, i
        if keep_weights:
            edges[(i, j)] = edges.get((i, j), 0) + w
        else:
            edges[(i, j)] = 1
    return Network(tuple(labels), directed, keep_weights, edges, loops)


def read_edge_list(path, **options) -> Network:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_edge_list(fh, **options)


def write_network(net: Network, sink: TextIO | None = None) -> str:
    """Serialize ``net`` as an edge list, one edge per line in index order.

    When the edges alone would not reproduce the node order (isolated nodes,
    or labels not in first-appearance order) every node is declared on its
    own line first, so the output always round-trips.
    """
    order = sorted(net.edges)
    seen: dict[int, None] = {}
    for i, j in order:
        seen.setdefault(i)
        seen.setdefault(j)
    out = []
    if list(seen) != list(range(net.N)):
        out.extend(f"{lab}\n" for lab in net.labels)
    for (i, j) in order:
        line = f"{net.labels[i]} {net.labels[j]}"
        if net.weighted:
            line += f" {net.edges[(i, j)]}"
        out.append(line + "\n")
    text = "".join(out)
    if sink is not None:
        sink.write(text)
    return text


def parse_clustering(text: str | TextIO, net: Network | None = None) -> np.ndarray:
    """Read ``label cluster`` lines into a 0-based assignment vector.

    Cluster names are mapped to indices in first-appearance order. When
    ``net`` is given the vector follows its node order.
    """
    pairs = []
    for lineno, line in enumerate(_lines(text), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        fields = [f for f in _SPLIT.split(s) if f]
        if len(fields) != 2:
            raise ParseError("expected 'label cluster'", lineno)
        pairs.append((fields[0], fields[1]))
    names: dict[str, int] = {}
    for _, c in pairs:
        names.setdefault(c, len(names))
    if net is None:
        return np.array([names[c] for _, c in pairs], dtype=np.int64)
    by_label = {lab: names[c] for lab, c in pairs}
    missing = [lab for lab in net.labels if lab not in by_label]
    if missing:
        raise ParseError(f"clustering missing nodes: {missing[:5]}")
    return np.array([by_label[lab] for lab in net.labels], dtype=np.int64)


def write_clustering(labels, z, sink: TextIO | None = None) -> str:
    text = "".join(f"{lab} {int(c) + 1}\n" for lab, c in zip(labels, z))
    if sink is not None:
        sink.write(text)
    return text


def generate_two_star_network() -> tuple[Network, np.ndarray]:
    """Two 10-node communities, each two hubs fully linked to eight leaves.

    Nodes 0-9 form the first community (0 and 1 are its hubs), nodes
    10-19 the second (10 and 11 are hubs). There are no other edges.
    """
    edges = {}
    for base in (0, 10):
        for hub in (base, base + 1):
            for leaf in range(base + 2, base + 10):
                edges[(hub, leaf)] = 1
    labels = tuple(str(i + 1) for i in range(20))
    truth = np.repeat(np.arange(2, dtype=np.int64), 10)
    return Network(labels, False, False, edges), truth


def generate_from_model(N: int, K: int, hyper=None, model: str = "sbm",
                        edge_model: str = "bernoulli", directed: bool = False,
                        rng: np.random.Generator | None = None,
                        max_attempts: int = 1_000_000):
    """Draw ``(network, z, pi, theta)`` from the SBM or SCF generative model.

    For ``model="scf"`` the block matrix is redrawn from its prior until the
    community constraint holds; ``RuntimeError`` after ``max_attempts``.
    """
    from .model import Hyperparameters, constraint_check

    if N < 1 or K < 1:
        raise ValueError("N and K must be positive")
    if model not in ("sbm", "scf"):
        raise ValueError(f"unknown model {model!r}")
    if edge_model not in ("bernoulli", "poisson"):
        raise ValueError(f"unknown edge model {edge_model!r}")
    hyper = hyper or Hyperparameters()
    rng = rng if rng is not None else np.random.default_rng()

    theta = rng.dirichlet(np.full(K, hyper.alpha))
    z = rng.choice(K, size=N, p=theta).astype(np.int64)

    def draw_pi():
        if edge_model == "bernoulli":
            pi = rng.beta(hyper.beta1, hyper.beta2, size=(K, K))
        else:
            pi = rng.gamma(hyper.gamma_shape, 1.0 / hyper.gamma_rate, size=(K, K))
        if not directed:
            pi = np.triu(pi) + np.triu(pi, 1).T
        return pi

    pi = draw_pi()
    if model == "scf":
        attempts = 1
        while not constraint_check(pi):
            if attempts >= max_attempts:
                raise RuntimeError(
                    f"no block matrix satisfied the community constraint in "
                    f"{max_attempts} draws; try different hyperparameters or smaller K")
            pi = draw_pi()
            attempts += 1

    edges = {}
    for i in range(N):
        for j in range(N) if directed else range(i + 1, N):
            if i == j:
                continue
            rate = pi[z[i], z[j]]
            w = int(rng.random() < rate) if edge_model == "bernoulli" else int(rng.poisson(rate))
            if w:
                edges[(i, j)] = w
    labels = tuple(str(i + 1) for i in range(N))
    net = Network(labels, directed, edge_model == "poisson", edges)
    return net, z, pi, theta
