"""Block sufficient statistics, collapsed posterior mass and the community constraint.

All masses are natural logs. Cluster labels are 0-based: a state with ``K``
clusters has ``z[i]`` in ``range(K)``; clusters may be empty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import _kernels as kern
from .network import Network

__all__ = [
    "EDGE_MODELS",
    "Hyperparameters",
    "State",
    "BlockStats",
    "compute_block_stats",
    "apply_move",
    "log_prior_K",
    "log_mass_z_given_K",
    "block_log_marginal",
    "log_mass_x_given_zK",
    "collapsed_log_mass",
    "constraint_check",
    "draw_pi_posterior",
    "estimate_constraint_prob",
]

EDGE_MODELS = ("bernoulli", "poisson")


@dataclass(frozen=True)
class Hyperparameters:
    """Prior settings.

    ``alpha`` is the symmetric Dirichlet concentration on cluster weights,
    ``beta1``/``beta2`` the Beta prior on Bernoulli block densities,
    ``gamma_shape``/``gamma_rate`` the Gamma prior on Poisson block rates and
    ``k_rate`` the rate of the Poisson prior on the number of clusters.
    """

    alpha: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0
    gamma_shape: float = 1.0
    gamma_rate: float = 1.0
    k_rate: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta1", "beta2", "gamma_shape", "gamma_rate", "k_rate"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be a positive finite number, got {v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta1, self.beta2, self.gamma_shape,
                         self.gamma_rate, self.k_rate], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class State:
    """A clustering: ``K`` clusters and the 0-based assignment vector ``z``."""

    K: int
    z: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=np.int64)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if z.ndim != 1:
            raise ValueError("z must be a vector")
        if z.size and (z.min() < 0 or z.max() >= self.K):
            raise ValueError(f"cluster labels must lie in [0, {self.K})")

    @property
    def N(self) -> int:
        return self.z.size

    def sizes(self) -> np.ndarray:
        return np.bincount(self.z, minlength=self.K)

    @property
    def occupied(self) -> int:
        return int(np.count_nonzero(self.sizes()))

    def __eq__(self, other):
        if not isinstance(other, State):
            return NotImplemented
        return self.K == other.K and np.array_equal(self.z, other.z)

    def __hash__(self):
        return hash((self.K, self.z.tobytes()))

    def __repr__(self):
        return f"State(K={self.K}, z={self.z.tolist()})"


@dataclass(eq=False)
class BlockStats:
    """Per-cluster sizes ``n`` and per-block edge totals ``y`` / pair counts ``p``.

    Undirected statistics are stored as symmetric matrices; only the
    ``k <= l`` triangle carries independent information and diagonal
    blocks count each unordered pair once. ``logfact_sum`` is the sum of
    ``log(x_ij!)`` over all node pairs (zero for binary networks).
    """

    n: np.ndarray
    y: np.ndarray
    directed: bool
    logfact_sum: float = 0.0
    p: np.ndarray = field(init=False)

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        nk = self.n
        p = np.outer(nk, nk)
        diag = nk * (nk - 1)
        p[np.diag_indices_from(p)] = diag if self.directed else diag // 2
        self.p = p

    @property
    def K(self) -> int:
        return self.n.size

    @property
    def N(self) -> int:
        return int(self.n.sum())

    def blocks(self):
        """Iterate ``(k, l)`` over the independent blocks."""
        K = self.K
        for k in range(K):
            for l in range(K) if self.directed else range(k, K):
                yield k, l

    def copy(self) -> BlockStats:
        return BlockStats(self.n.copy(), self.y.copy(), self.directed, self.logfact_sum)

    def __eq__(self, other):
        if not isinstance(other, BlockStats):
            return NotImplemented
        return (self.directed == other.directed and np.array_equal(self.n, other.n)
                and np.array_equal(self.y, other.y)
                and math.isclose(self.logfact_sum, other.logfact_sum, abs_tol=1e-9))

    def __repr__(self):
        return f"BlockStats(n={self.n.tolist()}, y={self.y.tolist()})"


class _Graph:
    """CSR view of a network consumed by the compiled kernels."""

    def __init__(self, net: Network):
        N = net.N
        self.N = N
        self.directed = net.directed
        src, dst, w = [], [], []
        for (i, j), wt in net.edges.items():
            src.append(i)
            dst.append(j)
            w.append(wt)
            if not net.directed:
                src.append(j)
                dst.append(i)
                w.append(wt)
        src = np.array(src, dtype=np.int64)
        dst = np.array(dst, dtype=np.int64)
        w = np.array(w, dtype=np.int64)
        self.out_ptr, self.out_idx, self.out_w = self._csr(N, src, dst, w)
        if net.directed:
            self.in_ptr, self.in_idx, self.in_w = self._csr(N, dst, src, w)
        else:
            self.in_ptr, self.in_idx, self.in_w = self.out_ptr, self.out_idx, self.out_w
        self.logfact = float(sum(gammaln(wt + 1.0) for wt in net.edges.values()))

    @staticmethod
    def _csr(N, rows, cols, w):
        order = np.lexsort((cols, rows))
        ptr = np.zeros(N + 1, dtype=np.int64)
        np.add.at(ptr, rows + 1, 1)
        return np.cumsum(ptr), cols[order].copy(), w[order].copy()

    def args(self):
        return (self.out_ptr, self.out_idx, self.out_w,
                self.in_ptr, self.in_idx, self.in_w)


def graph_of(net: Network) -> _Graph:
    g = net.__dict__.get("_graph")
    if g is None:
        g = _Graph(net)
        object.__setattr__(net, "_graph", g)
    return g


def _check_edge_model(edge_model: str) -> bool:
    if edge_model not in EDGE_MODELS:
        raise ValueError(f"edge_model must be one of {EDGE_MODELS}, got {edge_model!r}")
    return edge_model == "poisson"


def _check_state(net: Network, state: State):
    if state.N != net.N:
        raise ValueError(f"state has {state.N} nodes, network has {net.N}")


def compute_block_stats(net: Network, state: State) -> BlockStats:
    """Count cluster sizes and block edge totals from scratch."""
    _check_state(net, state)
    g = graph_of(net)
    K = state.K
    n = np.zeros(K, dtype=np.int64)
    y = np.zeros((K, K), dtype=np.int64)
    kern.build_stats(state.z, K, net.N, g.out_ptr, g.out_idx, g.out_w,
                     net.directed, n, y)
    return BlockStats(n, y, net.directed, g.logfact)


def apply_move(stats: BlockStats, net: Network, z, i: int, source: int,
               target: int) -> BlockStats:
    """Statistics after moving node ``i`` from ``source`` to ``target``.

    ``z`` is the assignment before the move. Only edges incident to ``i``
    are visited. The input statistics are not modified.
    """
    z = np.array(z, dtype=np.int64)
    if z[i] != source:
        raise ValueError(f"node {i} is in cluster {z[i]}, not {source}")
    if source == target:
        return stats
    K = stats.K
    if not 0 <= target < K:
        raise ValueError(f"target cluster {target} out of range for K={K}")
    g = graph_of(net)
    n, y = stats.n.copy(), stats.y.copy()
    wout = np.zeros(K, dtype=np.int64)
    win = np.zeros(K, dtype=np.int64)
    kern.remove_node(i, z, n, y, K, *g.args(), net.directed, wout, win)
    kern.add_node(i, target, z, n, y, K, *g.args(), net.directed, wout, win)
    return BlockStats(n, y, stats.directed, stats.logfact_sum)


def log_prior_K(K: int, k_rate: float = 1.0) -> float:
    """Log Poisson pmf of the cluster count."""
    if K < 1:
        raise ValueError("K must be at least 1")
    return K * math.log(k_rate) - k_rate - math.lgamma(K + 1)


def log_mass_z_given_K(n, K: int, alpha: float = 1.0) -> float:
    """Dirichlet-multinomial log mass of an assignment with cluster sizes ``n``."""
    n = np.asarray(n, dtype=np.float64)
    if n.size != K:
        raise ValueError(f"expected {K} cluster sizes, got {n.size}")
    N = n.sum()
    return float(gammaln(K * alpha) - gammaln(N + K * alpha)
                 + np.sum(gammaln(n + alpha) - gammaln(alpha)))


def block_log_marginal(y, p, hyper: Hyperparameters, edge_model: str = "bernoulli") -> float:
    """Log marginal likelihood of one block with total ``y`` over ``p`` pairs.

    Bernoulli: Beta-Binomial without the binomial coefficient. Poisson: the
    Gamma-Poisson marginal *without* the ``prod 1/x_ij!`` factor, which is
    accounted for once per network in ``logfact_sum``.
    """
    poisson = _check_edge_model(edge_model)
    if not poisson and y > p:
        raise ValueError(f"block has {y} edges but only {p} pairs")
    return float(kern.block_term(float(y), float(p), hyper.as_array(), poisson))


def log_mass_x_given_zK(stats: BlockStats, hyper: Hyperparameters,
                        edge_model: str = "bernoulli") -> float:
    poisson = _check_edge_model(edge_model)
    if not poisson and np.any(stats.y > stats.p):
        raise ValueError("edge count exceeds pair count in some block")
    h = hyper.as_array()
    out = kern.x_log_mass(stats.n, stats.y, stats.K, stats.directed, poisson, h)
    if poisson:
        out -= stats.logfact_sum
    return float(out)


def collapsed_log_mass(net: Network, state: State, hyper: Hyperparameters | None = None,
                       edge_model: str = "bernoulli",
                       stats: BlockStats | None = None) -> float:
    """Log joint mass of the network, clustering and cluster count."""
    hyper = hyper or Hyperparameters()
    if stats is None:
        stats = compute_block_stats(net, state)
    return (log_prior_K(state.K, hyper.k_rate)
            + log_mass_z_given_K(stats.n, state.K, hyper.alpha)
            + log_mass_x_given_zK(stats, hyper, edge_model))


def constraint_check(pi) -> int:
    """1 if every diagonal entry strictly exceeds every off-diagonal entry.

    A 1 x 1 matrix has no off-diagonal entries and always passes.
    """
    pi = np.asarray(pi, dtype=np.float64)
    if pi.ndim != 2 or pi.shape[0] != pi.shape[1] or pi.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {pi.shape}")
    K = pi.shape[0]
    if K == 1:
        return 1
    off = pi[~np.eye(K, dtype=bool)]
    return int(np.diag(pi).min() > off.max())


def draw_pi_posterior(stats: BlockStats, hyper: Hyperparameters, edge_model: str,
                      rng: np.random.Generator) -> np.ndarray:
    """One draw of the block density (or rate) matrix given the statistics."""
    poisson = _check_edge_model(edge_model)
    out = np.empty((stats.K, stats.K))
    kern.draw_pi(stats.n, stats.y, stats.K, stats.directed, poisson,
                 hyper.as_array(), rng, out)
    return out


def estimate_constraint_prob(stats: BlockStats, hyper: Hyperparameters, edge_model: str,
                             rng: np.random.Generator, M: int = 10_000):
    """Monte Carlo estimate of P(constraint holds | data, clustering).

    Returns ``(estimate, standard_error)`` from ``M`` posterior draws.
    """
    if M < 1:
        raise ValueError("M must be positive")
    poisson = _check_edge_model(edge_model)
    if stats.K == 1:
        return 1.0, 0.0
    hits = kern.estimate_constraint(stats.n, stats.y, stats.K, stats.directed,
                                    poisson, hyper.as_array(), rng, M)
    est = hits / M
    return est, math.sqrt(est * (1.0 - est) / M)
