"""Compiled inner loops shared by the model and sampler modules.

State layout used throughout:

* ``z``: int64[N], cluster of each node, ``-1`` while a node is detached.
* ``n``: int64[cap], cluster sizes; only the first ``K`` entries are live.
* ``y``: int64[cap, cap], edge counts (or weight sums) per block. Undirected
  networks keep ``y`` symmetric with the diagonal counted once.
* ``h``: float64[6] = alpha, beta1, beta2, gamma_shape, gamma_rate, k_rate.
* graph in CSR form: ``out_*`` lists successors, ``in_*`` predecessors. For
  undirected graphs both hold the full neighbour lists and ``in_*`` is unused.

Move results are packed as (kind, K', log_accept, feasible, provisional,
constraint, accepted) where ``constraint`` is -1 when no filter ran.
"""

import math

import numpy as np
from numba import njit

GIBBS, M3, ABSORB_EJECT, EMPTY_CLUSTER = 0, 1, 2, 3
MOVE_NAMES = ("gibbs", "m3", "absorb_eject", "empty_cluster")

# columns of the per-move counter matrix
C_PROPOSED, C_INFEASIBLE, C_PROVISIONAL, C_CHECKED, C_PASSED, C_ACCEPTED = range(6)
COUNT_NAMES = ("proposed", "infeasible", "provisional", "constraint_checked",
               "constraint_passed", "accepted")

# split proportion for absorb/eject is Beta(AE_A, AE_A)
AE_A = 1.0


@njit(cache=True)
def pairs(nk, nl, same, directed):
    if same:
        if directed:
            return nk * (nk - 1)
        return nk * (nk - 1) // 2
    return nk * nl


@njit(cache=True)
def lbeta(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


@njit(cache=True)
def block_term(y, p, h, poisson):
    if poisson:
        s = h[3]
        r = h[4]
        return (s * math.log(r) - math.lgamma(s) + math.lgamma(s + y)
                - (s + y) * math.log(r + p))
    return lbeta(y + h[1], p - y + h[2]) - lbeta(h[1], h[2])


@njit(cache=True)
def log_prior_k(K, rate):
    return K * math.log(rate) - rate - math.lgamma(K + 1.0)


@njit(cache=True)
def z_log_mass(n, K, N, alpha):
    out = math.lgamma(K * alpha) - math.lgamma(N + K * alpha)
    la = math.lgamma(alpha)
    for k in range(K):
        out += math.lgamma(n[k] + alpha) - la
    return out


@njit(cache=True)
def x_log_mass(n, y, K, directed, poisson, h):
    out = 0.0
    for k in range(K):
        for l in range(K) if directed else range(k, K):
            out += block_term(y[k, l], pairs(n[k], n[l], k == l, directed), h, poisson)
    return out


@njit(cache=True)
def total_log_mass(n, y, K, N, directed, poisson, h, logfact):
    out = log_prior_k(K, h[5]) + z_log_mass(n, K, N, h[0])
    out += x_log_mass(n, y, K, directed, poisson, h)
    if poisson:
        out -= logfact
    return out


@njit(cache=True)
def node_weights(i, z, K, out_ptr, out_idx, out_w, in_ptr, in_idx, in_w,
                 directed, wout, win):
    """Edge weight from node i to each cluster (and from each cluster to i)."""
    for c in range(K):
        wout[c] = 0
        win[c] = 0
    for e in range(out_ptr[i], out_ptr[i + 1]):
        c = z[out_idx[e]]
        if c >= 0:
            wout[c] += out_w[e]
    if directed:
        for e in range(in_ptr[i], in_ptr[i + 1]):
            c = z[in_idx[e]]
            if c >= 0:
                win[c] += in_w[e]


@njit(cache=True)
def _shift(k, K, y, wout, win, directed, sign):
    if directed:
        for c in range(K):
            y[k, c] += sign * wout[c]
            y[c, k] += sign * win[c]
    else:
        for c in range(K):
            y[k, c] += sign * wout[c]
            if c != k:
                y[c, k] += sign * wout[c]


@njit(cache=True)
def add_node(i, k, z, n, y, K, out_ptr, out_idx, out_w, in_ptr, in_idx, in_w,
             directed, wout, win):
    node_weights(i, z, K, out_ptr, out_idx, out_w, in_ptr, in_idx, in_w,
                 directed, wout, win)
    _shift(k, K, y, wout, win, directed, 1)
    n[k] += 1
    z[i] = k


@njit(cache=True)
def remove_node(i, z, n, y, K, out_ptr, out_idx, out_w, in_ptr, in_idx, in_w,
                directed, wout, win):
    a = z[i]
    node_weights(i, z, K, out_ptr, out_idx, out_w, in_ptr, in_idx, in_w,
                 directed, wout, win)
    _shift(a, K, y, wout, win, directed, -1)
    n[a] -= 1
    z[i] = -1


@njit(cache=True)
def build_stats(z, K, N, out_ptr, out_idx, out_w, directed, n, y):
    for k in range(K):
        n[k] = 0
        for l in range(K):
            y[k, l] = 0
    for i in range(N):
        n[z[i]] += 1
    for i in range(N):
        a = z[i]
        for e in range(out_ptr[i], out_ptr[i + 1]):
            j = out_idx[e]
            if directed:
                y[a, z[j]] += out_w[e]
            elif i < j:
                b = z[j]
                y[a, b] += out_w[e]
                if a != b:
                    y[b, a] += out_w[e]


@njit(cache=True)
def add_delta(k, n, y, K, wout, win, directed, poisson, h):
    """Change in log mass from attaching a detached node to cluster k."""
    nk = n[k]
    d = math.log(nk + h[0])
    p0 = pairs(nk, nk, True, directed)
    p1 = pairs(nk + 1, nk + 1, True, directed)
    extra = wout[k] + win[k] if directed else wout[k]
    d += block_term(y[k, k] + extra, p1, h, poisson) - block_term(y[k, k], p0, h, poisson)
    for c in range(K):
        if c == k:
            continue
        nc = n[c]
        d += (block_term(y[k, c] + wout[c], (nk + 1) * nc, h, poisson)
              - block_term(y[k, c], nk * nc, h, poisson))
        if directed:
            d += (block_term(y[c, k] + win[c], nc * (nk + 1), h, poisson)
                  - block_term(y[c, k], nc * nk, h, poisson))
    return d


@njit(cache=True)
def logsumexp(v, m):
    top = v[0]
    for k in range(1, m):
        if v[k] > top:
            top = v[k]
    s = 0.0
    for k in range(m):
        s += math.exp(v[k] - top)
    return top + math.log(s)


@njit(cache=True)
def sample_log(v, m, rng):
    lse = logsumexp(v, m)
    u = rng.random()
    acc = 0.0
    for k in range(m - 1):
        acc += math.exp(v[k] - lse)
        if u < acc:
            return k
    return m - 1


@njit(cache=True)
def draw_pi(n, y, K, directed, poisson, h, rng, out):
    for k in range(K):
        for l in range(K) if directed else range(k, K):
            p = pairs(n[k], n[l], k == l, directed)
            if poisson:
                v = rng.gamma(h[3] + y[k, l], 1.0 / (h[4] + p))
            else:
                v = rng.beta(h[1] + y[k, l], h[2] + p - y[k, l])
            out[k, l] = v
            if not directed:
                out[l, k] = v


@njit(cache=True)
def _draw_block(k, l, n, y, directed, poisson, h, rng):
    p = pairs(n[k], n[l], k == l, directed)
    if poisson:
        return rng.gamma(h[3] + y[k, l], 1.0 / (h[4] + p))
    return rng.beta(h[1] + y[k, l], h[2] + p - y[k, l])


@njit(cache=True)
def constraint_draw(n, y, K, directed, poisson, h, rng):
    """One posterior draw of the block matrix, tested against the constraint.

    Diagonal blocks are drawn first and the off-diagonal draws stop at the
    first violation; the pass/fail outcome has the same law as testing a
    complete draw.
    """
    if K <= 1:
        return True
    low = np.inf
    for m in range(K):
        v = _draw_block(m, m, n, y, directed, poisson, h, rng)
        if v < low:
            low = v
    for k in range(K):
        for l in range(K) if directed else range(k + 1, K):
            if k == l:
                continue
            if _draw_block(k, l, n, y, directed, poisson, h, rng) >= low:
                return False
    return True


@njit(cache=True)
def estimate_constraint(n, y, K, directed, poisson, h, rng, M):
    hits = 0
    for _ in range(M):
        if constraint_draw(n, y, K, directed, poisson, h, rng):
            hits += 1
    return hits


@njit(cache=True)
def _decide(log_accept, rng):
    if log_accept >= 0.0:
        return True
    return rng.random() < math.exp(log_accept)


# -- proposal path counting for the K-changing moves ------------------------
#
# Labelled states can be reached by more than one choice of move arguments
# (empty clusters make several relabellings coincide), so forward and reverse
# proposal probabilities sum over every argument choice yielding the target.

@njit(cache=True)
def log_q_eject(zs, Ks, zt, N):
    total = 0.0
    for a in range(Ks):
        na = 0
        for i in range(N):
            if zs[i] == a:
                na += 1
        for j in range(Ks + 1):
            ok = True
            m = 0
            for i in range(N):
                c = zt[i]
                if j < Ks:
                    if c == j:
                        c = Ks
                    elif c == Ks:
                        c = j
                if c == Ks:
                    if zs[i] != a:
                        ok = False
                        break
                    m += 1
                elif c != zs[i]:
                    ok = False
                    break
            if ok:
                total += math.exp(lbeta(m + AE_A, na - m + AE_A) - lbeta(AE_A, AE_A)) / (Ks * (Ks + 1.0))
    if total <= 0.0:
        return -np.inf
    return math.log(0.5 * total)


@njit(cache=True)
def log_q_absorb(zt, Kt, zs, N):
    hits = 0
    last = Kt - 1
    for j1 in range(Kt):
        for j2 in range(Kt):
            if j1 == j2:
                continue
            ok = True
            for i in range(N):
                c = zt[i]
                if c == j2:
                    c = j1
                if j2 != last and c == last:
                    c = j2
                if c != zs[i]:
                    ok = False
                    break
            if ok:
                hits += 1
    if hits == 0:
        return -np.inf
    return math.log(0.5 * hits / (Kt * (Kt - 1.0)))


@njit(cache=True)
def log_q_insert(zs, Ks, zt, N):
    hits = 0
    for j in range(Ks + 1):
        ok = True
        for i in range(N):
            c = zs[i]
            if j < Ks and c == j:
                c = Ks
            if c != zt[i]:
                ok = False
                break
        if ok:
            hits += 1
    if hits == 0:
        return -np.inf
    return math.log(0.5 * hits / (Ks + 1.0))


@njit(cache=True)
def log_q_delete(zt, Kt, nt, zs, N):
    hits = 0
    empty = 0
    last = Kt - 1
    for e in range(Kt):
        if nt[e] != 0:
            continue
        empty += 1
        ok = True
        for i in range(N):
            c = zt[i]
            if e != last and c == last:
                c = e
            if c != zs[i]:
                ok = False
                break
        if ok:
            hits += 1
    if hits == 0:
        return -np.inf
    return math.log(0.5 * hits / empty)


# -- moves -------------------------------------------------------------------

@njit(cache=True)
def gibbs_move(z, n, y, K, N, out_ptr, out_idx, out_w, in_ptr, in_idx, in_w,
               directed, poisson, scf, h, rng, wout, win, scores):
    i = rng.integers(0, N)
    a = z[i]
    remove_node(i, z, n, y, K, out_ptr, out_idx, out_w, in_ptr, in_idx, in_w,
                directed, wout, win)
    node_weights(i, z, K, out_ptr, out_idx, out_w, in_ptr, in_idx, in_w,
                 directed, wout, win)
    for k in range(K):
        scores[k] = add_delta(k, n, y, K, wout, win, directed, poisson, h)
    k = sample_log(scores, K, rng)
    # q(a)/q(k) cancels the mass ratio exactly, so the SBM acceptance is one
    log_accept = 0.0
    add_node(i, k, z, n, y, K, out_ptr, out_idx, out_w, in_ptr, in_idx, in_w,
             directed, wout, win)
    provisional = _decide(log_accept, rng)
    constraint = -1
    accepted = provisional
    if provisional and scf:
        accepted = constraint_draw(n, y, K, directed, poisson, h, rng)
        constraint = 1 if accepted else 0
    if not accepted:
        remove_node(i, z, n, y, K, out_ptr, out_idx, out_w, in_ptr, in_idx, in_w,
                    directed, wout, win)
        add_node(i, a, z, n, y, K, out_ptr, out_idx, out_w, in_ptr, in_idx, in_w,
                 directed, wout, win)
    return GIBBS, K, log_accept, True, provisional, constraint, accepted


@njit(cache=True)
def m3_move(z, n, y, K, N, out_ptr, out_idx, out_w, in_ptr, in_idx, in_w,
            directed, poisson, scf, h, rng, wout, win, scores):
    if K < 2:
        return M3, K, -np.inf, False, False, -1, False
    a = rng.integers(0, K)
    b = rng.integers(0, K - 1)
    if b >= a:
        b += 1
    z0 = z.copy()
    n0 = n.copy()
    y0 = y.copy()
    members = np.empty(n[a] + n[b], dtype=np.int64)
    m = 0
    for i in range(N):
        if z[i] == a or z[i] == b:
            members[m] = i
            m += 1
    for t in range(m):
        remove_node(members[t], z, n, y, K, out_ptr, out_idx, out_w, in_ptr,
                    in_idx, in_w, directed, wout, win)
    nb = n.copy()
    yb = y.copy()
    two = np.empty(2, dtype=np.int64)
    two[0] = a
    two[1] = b

    # reverse path: replay the scan onto the current assignment
    log_rev = 0.0
    mass_rev = 0.0
    for t in range(m):
        i = members[t]
        node_weights(i, z, K, out_ptr, out_idx, out_w, in_ptr, in_idx, in_w,
                     directed, wout, win)
        for s in range(2):
            scores[s] = add_delta(two[s], n, y, K, wout, win, directed, poisson, h)
        s = 0 if z0[i] == a else 1
        log_rev += scores[s] - logsumexp(scores, 2)
        mass_rev += scores[s]
        add_node(i, two[s], z, n, y, K, out_ptr, out_idx, out_w, in_ptr, in_idx,
                 in_w, directed, wout, win)

    n[:] = nb
    y[:, :] = yb
    for t in range(m):
        z[members[t]] = -1
    log_fwd = 0.0
    mass_fwd = 0.0
    for t in range(m):
        i = members[t]
        node_weights(i, z, K, out_ptr, out_idx, out_w, in_ptr, in_idx, in_w,
                     directed, wout, win)
        for s in range(2):
            scores[s] = add_delta(two[s], n, y, K, wout, win, directed, poisson, h)
        s = sample_log(scores, 2, rng)
        log_fwd += scores[s] - logsumexp(scores, 2)
        mass_fwd += scores[s]
        add_node(i, two[s], z, n, y, K, out_ptr, out_idx, out_w, in_ptr, in_idx,
                 in_w, directed, wout, win)

    log_accept = min(0.0, (log_rev - log_fwd) + (mass_fwd - mass_rev))
    provisional = _decide(log_accept, rng)
    constraint = -1
    accepted = provisional
    if provisional and scf:
        accepted = constraint_draw(n, y, K, directed, poisson, h, rng)
        constraint = 1 if accepted else 0
    if not accepted:
        z[:] = z0
        n[:] = n0
        y[:, :] = y0
    return M3, K, log_accept, True, provisional, constraint, accepted


@njit(cache=True)
def _finish_jump(kind, z, n, y, K, zt, Kt, N, log_q_fwd, log_q_rev,
                 out_ptr, out_idx, out_w, directed, poisson, scf, h, logfact, rng):
    """Evaluate a K-changing proposal zt and adopt it if accepted."""
    cap = n.shape[0]
    nt = np.zeros(cap, dtype=np.int64)
    yt = np.zeros((cap, cap), dtype=np.int64)
    build_stats(zt, Kt, N, out_ptr, out_idx, out_w, directed, nt, yt)
    cur = total_log_mass(n, y, K, N, directed, poisson, h, logfact)
    new = total_log_mass(nt, yt, Kt, N, directed, poisson, h, logfact)
    log_accept = min(0.0, log_q_rev - log_q_fwd + new - cur)
    provisional = _decide(log_accept, rng)
    constraint = -1
    accepted = provisional
    if provisional and scf:
        accepted = constraint_draw(nt, yt, Kt, directed, poisson, h, rng)
        constraint = 1 if accepted else 0
    if accepted:
        z[:] = zt
        n[:] = nt
        y[:, :] = yt
        return kind, Kt, log_accept, True, provisional, constraint, accepted
    return kind, Kt, log_accept, True, provisional, constraint, accepted


@njit(cache=True)
def absorb_eject_move(z, n, y, K, N, max_k, out_ptr, out_idx, out_w,
                      directed, poisson, scf, h, logfact, rng):
    zt = z.copy()
    if rng.random() < 0.5:
        if K >= max_k:
            return ABSORB_EJECT, K + 1, -np.inf, False, False, -1, False
        a = rng.integers(0, K)
        j = rng.integers(0, K + 1)
        u = rng.beta(AE_A, AE_A)
        for i in range(N):
            if z[i] == a and rng.random() < u:
                zt[i] = K
        if j < K:
            for i in range(N):
                if zt[i] == j:
                    zt[i] = K
                elif zt[i] == K:
                    zt[i] = j
        Kt = K + 1
        fwd = log_q_eject(z, K, zt, N)
        rev = log_q_absorb(zt, Kt, z, N)
    else:
        if K < 2:
            return ABSORB_EJECT, K - 1, -np.inf, False, False, -1, False
        j1 = rng.integers(0, K)
        j2 = rng.integers(0, K - 1)
        if j2 >= j1:
            j2 += 1
        for i in range(N):
            if zt[i] == j2:
                zt[i] = j1
            if j2 != K - 1 and zt[i] == K - 1:
                zt[i] = j2
        Kt = K - 1
        fwd = log_q_absorb(z, K, zt, N)
        rev = log_q_eject(zt, Kt, z, N)
    return _finish_jump(ABSORB_EJECT, z, n, y, K, zt, Kt, N, fwd, rev,
                        out_ptr, out_idx, out_w, directed, poisson, scf, h,
                        logfact, rng)


@njit(cache=True)
def empty_cluster_move(z, n, y, K, N, max_k, out_ptr, out_idx, out_w,
                       directed, poisson, scf, h, logfact, rng):
    zt = z.copy()
    if rng.random() < 0.5:
        if K >= max_k:
            return EMPTY_CLUSTER, K + 1, -np.inf, False, False, -1, False
        j = rng.integers(0, K + 1)
        if j < K:
            for i in range(N):
                if zt[i] == j:
                    zt[i] = K
        Kt = K + 1
        fwd = log_q_insert(z, K, zt, N)
        nt = n.copy()
        if j < K:
            nt[K] = nt[j]
        nt[j] = 0
        rev = log_q_delete(zt, Kt, nt, z, N)
    else:
        empty = 0
        for k in range(K):
            if n[k] == 0:
                empty += 1
        if empty == 0 or K < 2:
            return EMPTY_CLUSTER, K - 1, -np.inf, False, False, -1, False
        pick = rng.integers(0, empty)
        e = -1
        for k in range(K):
            if n[k] == 0:
                if pick == 0:
                    e = k
                    break
                pick -= 1
        if e != K - 1:
            for i in range(N):
                if zt[i] == K - 1:
                    zt[i] = e
        Kt = K - 1
        fwd = log_q_delete(z, K, n, zt, N)
        rev = log_q_insert(zt, Kt, z, N)
    return _finish_jump(EMPTY_CLUSTER, z, n, y, K, zt, Kt, N, fwd, rev,
                        out_ptr, out_idx, out_w, directed, poisson, scf, h,
                        logfact, rng)


@njit(cache=True)
def run_chunk(n_iter, it0, burnin, thin, cum_weights, z, n, y, kbox, N, max_k,
              out_ptr, out_idx, out_w, in_ptr, in_idx, in_w, directed, poisson,
              scf, h, logfact, rng, counts, out_it, out_k, out_occ, out_lp, out_z):
    """Advance the chain ``n_iter`` steps; returns the number of samples emitted."""
    K = kbox[0]
    cap = n.shape[0]
    wout = np.zeros(cap, dtype=np.int64)
    win = np.zeros(cap, dtype=np.int64)
    scores = np.zeros(cap, dtype=np.float64)
    total = cum_weights[3]
    emitted = 0
    for step in range(n_iter):
        it = it0 + step + 1
        u = rng.random() * total
        kind = 0
        while kind < 3 and u >= cum_weights[kind]:
            kind += 1
        if kind == GIBBS:
            res = gibbs_move(z, n, y, K, N, out_ptr, out_idx, out_w, in_ptr,
                             in_idx, in_w, directed, poisson, scf, h, rng, wout,
                             win, scores)
        elif kind == M3:
            res = m3_move(z, n, y, K, N, out_ptr, out_idx, out_w, in_ptr, in_idx,
                          in_w, directed, poisson, scf, h, rng, wout, win, scores)
        elif kind == ABSORB_EJECT:
            res = absorb_eject_move(z, n, y, K, N, max_k, out_ptr, out_idx, out_w,
                                    directed, poisson, scf, h, logfact, rng)
        else:
            res = empty_cluster_move(z, n, y, K, N, max_k, out_ptr, out_idx,
                                     out_w, directed, poisson, scf, h, logfact, rng)
        _, k_new, _, feasible, provisional, constraint, accepted = res
        counts[kind, C_PROPOSED] += 1
        if not feasible:
            counts[kind, C_INFEASIBLE] += 1
        if provisional:
            counts[kind, C_PROVISIONAL] += 1
        if constraint >= 0:
            counts[kind, C_CHECKED] += 1
            counts[kind, C_PASSED] += constraint
        if accepted:
            counts[kind, C_ACCEPTED] += 1
            K = k_new
        if it > burnin and (it - burnin) % thin == 0:
            out_it[emitted] = it
            out_k[emitted] = K
            occ = 0
            for k in range(K):
                if n[k] > 0:
                    occ += 1
            out_occ[emitted] = occ
            out_lp[emitted] = total_log_mass(n, y, K, N, directed, poisson, h, logfact)
            for i in range(N):
                out_z[emitted, i] = z[i]
            emitted += 1
    kbox[0] = K
    return emitted
