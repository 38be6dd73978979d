"""Event-loop kernels for the exact discrete-event simulator.

The hot loops are JIT-compiled with numba.  Randomness comes from an
explicit splitmix64 stream (named, seedable, 64-bit), so trajectories are
bit-reproducible across platforms and independent of numpy/numba RNG
internals.  Draw order per event: (1) inter-event time, (2) spiking unit,
(3) routing choices in ascending target order; targets with zero incoming
weight consume no draws.

Without relaxation the intensities are piecewise constant, so inter-event
times are exactly exponential in the total intensity and statistics are
accumulated as exact time integrals over inter-event segments, split at
batch boundaries for standard-error estimation.  Running totals (per-unit
sums, sums of squares, per-pair products) are maintained incrementally
and refreshed periodically to cancel float drift.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = [
    "splitmix_u01",
    "run_original",
    "run_replica_partition",
    "run_replica_all_pair",
]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_REFRESH_EVERY = 1 << 20


@njit(cache=True, inline="always")
def _u01(state):
    """Advance the splitmix64 state; return (state, uniform in (0, 1])."""
    state = state + _GOLDEN
    z = state
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return state, (np.float64(z >> np.uint64(11)) + 1.0) * (2.0**-53)


def splitmix_u01(state: int):
    """Pure-python twin of the jitted generator (used by the thinning
    engine and by tests replaying the documented draw order)."""
    mask = (1 << 64) - 1
    state = (state + 0x9E3779B97F4A7C15) & mask
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    z = z ^ (z >> 31)
    return state, ((z >> 11) + 1) * (2.0**-53)


@njit(cache=True, inline="always")
def _pick_other(state, m, M):
    """Uniform index over {0..M-1} minus {m}."""
    state, u = _u01(state)
    idx = int(u * (M - 1))
    if idx >= M - 1:
        idx = M - 2
    if idx >= m:
        idx += 1
    return state, idx


@njit(cache=True)
def run_original(
    lam0, resets, w, t_warm, t_meas, n_batches, cov_a, cov_b, seed, collect_event
):
    """Exact event loop for the original no-relaxation network.

    Returns (counts, batch_counts, s1, s2, s11, e1, e2, e11, status);
    status 1 flags a dead network (total intensity hit zero).  The e*
    arrays are pre-event intensity sums (only filled when collect_event),
    the event-embedded alternative to the exact time integrals s*.
    """
    K = lam0.shape[0]
    P = cov_a.shape[0]
    lam = lam0.copy()
    counts = np.zeros(K, np.int64)
    batch_counts = np.zeros((n_batches, K), np.int64)
    s1 = np.zeros((n_batches, K))
    s2 = np.zeros((n_batches, K))
    s11 = np.zeros((n_batches, P))
    e1 = np.zeros((n_batches, K))
    e2 = np.zeros((n_batches, K))
    e11 = np.zeros((n_batches, P))
    state = np.uint64(seed)
    t = 0.0
    t_end = t_warm + t_meas
    bw = t_meas / n_batches
    lam_tot = 0.0
    for i in range(K):
        lam_tot += lam[i]
    n_events = 0
    while True:
        if lam_tot <= 0.0:
            return counts, batch_counts, s1, s2, s11, e1, e2, e11, 1
        state, u = _u01(state)
        t_next = t - math.log(u) / lam_tot
        a0 = t if t > t_warm else t_warm
        a1 = t_next if t_next < t_end else t_end
        pos = a0
        while pos < a1:
            bidx = int((pos - t_warm) / bw)
            if bidx >= n_batches:
                bidx = n_batches - 1
            edge = t_warm + (bidx + 1) * bw
            if edge <= pos:
                bidx += 1
                edge = t_warm + (bidx + 1) * bw
            hi = a1 if a1 < edge else edge
            seg = hi - pos
            for i in range(K):
                v = lam[i]
                s1[bidx, i] += v * seg
                s2[bidx, i] += v * v * seg
            for p in range(P):
                s11[bidx, p] += lam[cov_a[p]] * lam[cov_b[p]] * seg
            pos = hi
        if t_next >= t_end:
            break
        t = t_next
        state, v = _u01(state)
        x = v * lam_tot
        spiker = K - 1
        acc = 0.0
        for i in range(K):
            acc += lam[i]
            if x <= acc:
                spiker = i
                break
        if t >= t_warm:
            counts[spiker] += 1
            bidx = int((t - t_warm) / bw)
            if bidx >= n_batches:
                bidx = n_batches - 1
            batch_counts[bidx, spiker] += 1
            if collect_event:
                for i in range(K):
                    v2 = lam[i]
                    e1[bidx, i] += v2
                    e2[bidx, i] += v2 * v2
                for p in range(P):
                    e11[bidx, p] += lam[cov_a[p]] * lam[cov_b[p]]
        lam_tot += resets[spiker] - lam[spiker]
        lam[spiker] = resets[spiker]
        for i in range(K):
            if i != spiker and w[i, spiker] > 0.0:
                lam[i] += w[i, spiker]
                lam_tot += w[i, spiker]
        n_events += 1
        if n_events % _REFRESH_EVERY == 0:
            lam_tot = 0.0
            for i in range(K):
                lam_tot += lam[i]
    return counts, batch_counts, s1, s2, s11, e1, e2, e11, 0


@njit(cache=True)
def run_replica_partition(
    lam0,
    resets,
    w,
    block_first,
    block_second,
    block_of,
    M,
    t_warm,
    t_meas,
    n_batches,
    cov_a,
    cov_b,
    seed,
):
    """Finite-replica loop for a partition into pairs and singletons.

    Blocks are (first, second) with second = -1 for singletons, sorted by
    smallest member.  A spike routes endogenously inside its own replica
    and exogenously to one uniformly chosen other replica per receiving
    block; a pair block receives both of its weights in that one replica.
    With no pair blocks this is exactly the single-neuron replica scheme.

    Statistics are replica sums: s1/s2 per neuron, s11 per listed pair
    (within-replica products).
    """
    K = lam0.shape[0]
    B = block_first.shape[0]
    P = cov_a.shape[0]
    lam = np.empty((K, M))
    for i in range(K):
        for m in range(M):
            lam[i, m] = lam0[i]
    rep_tot = np.zeros(M)
    for m in range(M):
        s = 0.0
        for i in range(K):
            s += lam[i, m]
        rep_tot[m] = s
    lam_tot = rep_tot.sum()
    row_sum = np.zeros(K)
    row_sq = np.zeros(K)
    for i in range(K):
        for m in range(M):
            row_sum[i] += lam[i, m]
            row_sq[i] += lam[i, m] * lam[i, m]
    pair_prod = np.zeros(P)
    for p in range(P):
        for m in range(M):
            pair_prod[p] += lam[cov_a[p], m] * lam[cov_b[p], m]
    # pair membership of each covariance pair, or -1 when not a block
    counts = np.zeros(K, np.int64)
    batch_counts = np.zeros((n_batches, K), np.int64)
    s1 = np.zeros((n_batches, K))
    s2 = np.zeros((n_batches, K))
    s11 = np.zeros((n_batches, P))
    state = np.uint64(seed)
    t = 0.0
    t_end = t_warm + t_meas
    bw = t_meas / n_batches
    n_events = 0
    while True:
        if lam_tot <= 0.0:
            return counts, batch_counts, s1, s2, s11, 1
        state, u = _u01(state)
        t_next = t - math.log(u) / lam_tot
        a0 = t if t > t_warm else t_warm
        a1 = t_next if t_next < t_end else t_end
        pos = a0
        while pos < a1:
            bidx = int((pos - t_warm) / bw)
            if bidx >= n_batches:
                bidx = n_batches - 1
            edge = t_warm + (bidx + 1) * bw
            if edge <= pos:
                bidx += 1
                edge = t_warm + (bidx + 1) * bw
            hi = a1 if a1 < edge else edge
            seg = hi - pos
            for i in range(K):
                s1[bidx, i] += row_sum[i] * seg
                s2[bidx, i] += row_sq[i] * seg
            for p in range(P):
                s11[bidx, p] += pair_prod[p] * seg
            pos = hi
        if t_next >= t_end:
            break
        t = t_next
        # pick replica, then neuron within it
        state, v = _u01(state)
        x = v * lam_tot
        m_sp = M - 1
        acc = 0.0
        for m in range(M):
            acc += rep_tot[m]
            if x <= acc:
                m_sp = m
                break
        state, v2 = _u01(state)
        x2 = v2 * rep_tot[m_sp]
        spiker = K - 1
        acc = 0.0
        for i in range(K):
            acc += lam[i, m_sp]
            if x2 <= acc:
                spiker = i
                break
        if t >= t_warm:
            counts[spiker] += 1
            bidx = int((t - t_warm) / bw)
            if bidx >= n_batches:
                bidx = n_batches - 1
            batch_counts[bidx, spiker] += 1

        # endogenous: reset the spiker, bump its partner in-replica
        old = lam[spiker, m_sp]
        new = resets[spiker]
        lam[spiker, m_sp] = new
        d = new - old
        rep_tot[m_sp] += d
        lam_tot += d
        row_sum[spiker] += d
        row_sq[spiker] += new * new - old * old
        for p in range(P):
            if cov_a[p] == spiker:
                pair_prod[p] += d * lam[cov_b[p], m_sp]
            elif cov_b[p] == spiker:
                pair_prod[p] += d * lam[cov_a[p], m_sp]
        own = block_of[spiker]
        second = block_second[own]
        if second >= 0:
            mate = block_first[own] if spiker == second else second
            jump = w[mate, spiker]
            if jump > 0.0:
                old = lam[mate, m_sp]
                lam[mate, m_sp] = old + jump
                rep_tot[m_sp] += jump
                lam_tot += jump
                row_sum[mate] += jump
                row_sq[mate] += jump * (2.0 * old + jump)
                for p in range(P):
                    if cov_a[p] == mate:
                        pair_prod[p] += jump * lam[cov_b[p], m_sp]
                    elif cov_b[p] == mate:
                        pair_prod[p] += jump * lam[cov_a[p], m_sp]
        # exogenous: one downstream replica per receiving block
        for b in range(B):
            if b == own:
                continue
            f = block_first[b]
            s = block_second[b]
            wf = w[f, spiker]
            ws = w[s, spiker] if s >= 0 else 0.0
            if wf + ws <= 0.0:
                continue
            state, m_t = _pick_other(state, m_sp, M)
            if wf > 0.0:
                old = lam[f, m_t]
                lam[f, m_t] = old + wf
                rep_tot[m_t] += wf
                lam_tot += wf
                row_sum[f] += wf
                row_sq[f] += wf * (2.0 * old + wf)
                for p in range(P):
                    if cov_a[p] == f:
                        pair_prod[p] += wf * lam[cov_b[p], m_t]
                    elif cov_b[p] == f:
                        pair_prod[p] += wf * lam[cov_a[p], m_t]
            if s >= 0 and ws > 0.0:
                old = lam[s, m_t]
                lam[s, m_t] = old + ws
                rep_tot[m_t] += ws
                lam_tot += ws
                row_sum[s] += ws
                row_sq[s] += ws * (2.0 * old + ws)
                for p in range(P):
                    if cov_a[p] == s:
                        pair_prod[p] += ws * lam[cov_b[p], m_t]
                    elif cov_b[p] == s:
                        pair_prod[p] += ws * lam[cov_a[p], m_t]
        n_events += 1
        if n_events % _REFRESH_EVERY == 0:
            lam_tot = 0.0
            for m in range(M):
                s_m = 0.0
                for i in range(K):
                    s_m += lam[i, m]
                rep_tot[m] = s_m
                lam_tot += s_m
            for i in range(K):
                rs = 0.0
                rq = 0.0
                for m in range(M):
                    rs += lam[i, m]
                    rq += lam[i, m] * lam[i, m]
                row_sum[i] = rs
                row_sq[i] = rq
            for p in range(P):
                pp = 0.0
                for m in range(M):
                    pp += lam[cov_a[p], m] * lam[cov_b[p], m]
                pair_prod[p] = pp
    return counts, batch_counts, s1, s2, s11, 0


@njit(cache=True)
def run_replica_all_pair(
    lam0_copy,
    resets_copy,
    w,
    copy_neuron,
    ctx_flat,
    ctx_off,
    ctx_len,
    M,
    t_warm,
    t_meas,
    n_batches,
    seed,
):
    """Finite-replica loop where every connected pair is a constituent.

    Copies are stored pairwise: copies 2p and 2p+1 are the two members of
    pair p, so a copy's in-replica partner is its index xor 1.  A spike
    from copy c (neuron i): resets c, bumps the partner copy in-replica,
    and for every target neuron l with w[l, i] > 0 other than i and the
    current partner neuron (ascending l) delivers into one uniformly
    chosen context of l and one uniformly chosen other replica.  The
    partner neuron is reached only endogenously: routing a second copy of
    the same spike to the partner's other contexts would double the
    within-pair interaction and break the connectivity-number reduction
    of symmetric networks.

    Returns per-copy counts/batch counts, per-copy s1/s2 integrals and
    per-pair within-replica products s11.
    """
    C = lam0_copy.shape[0]
    K = w.shape[0]
    n_pairs = C // 2
    lam = np.empty((C, M))
    for c in range(C):
        for m in range(M):
            lam[c, m] = lam0_copy[c]
    rep_tot = np.zeros(M)
    for m in range(M):
        s = 0.0
        for c in range(C):
            s += lam[c, m]
        rep_tot[m] = s
    lam_tot = rep_tot.sum()
    row_sum = np.zeros(C)
    row_sq = np.zeros(C)
    for c in range(C):
        for m in range(M):
            row_sum[c] += lam[c, m]
            row_sq[c] += lam[c, m] * lam[c, m]
    pair_prod = np.zeros(n_pairs)
    for p in range(n_pairs):
        for m in range(M):
            pair_prod[p] += lam[2 * p, m] * lam[2 * p + 1, m]
    counts = np.zeros(C, np.int64)
    batch_counts = np.zeros((n_batches, C), np.int64)
    s1 = np.zeros((n_batches, C))
    s2 = np.zeros((n_batches, C))
    s11 = np.zeros((n_batches, n_pairs))
    state = np.uint64(seed)
    t = 0.0
    t_end = t_warm + t_meas
    bw = t_meas / n_batches
    n_events = 0
    while True:
        if lam_tot <= 0.0:
            return counts, batch_counts, s1, s2, s11, 1
        state, u = _u01(state)
        t_next = t - math.log(u) / lam_tot
        a0 = t if t > t_warm else t_warm
        a1 = t_next if t_next < t_end else t_end
        pos = a0
        while pos < a1:
            bidx = int((pos - t_warm) / bw)
            if bidx >= n_batches:
                bidx = n_batches - 1
            edge = t_warm + (bidx + 1) * bw
            if edge <= pos:
                bidx += 1
                edge = t_warm + (bidx + 1) * bw
            hi = a1 if a1 < edge else edge
            seg = hi - pos
            for c in range(C):
                s1[bidx, c] += row_sum[c] * seg
                s2[bidx, c] += row_sq[c] * seg
            for p in range(n_pairs):
                s11[bidx, p] += pair_prod[p] * seg
            pos = hi
        if t_next >= t_end:
            break
        t = t_next
        state, v = _u01(state)
        x = v * lam_tot
        m_sp = M - 1
        acc = 0.0
        for m in range(M):
            acc += rep_tot[m]
            if x <= acc:
                m_sp = m
                break
        state, v2 = _u01(state)
        x2 = v2 * rep_tot[m_sp]
        c_sp = C - 1
        acc = 0.0
        for c in range(C):
            acc += lam[c, m_sp]
            if x2 <= acc:
                c_sp = c
                break
        if t >= t_warm:
            counts[c_sp] += 1
            bidx = int((t - t_warm) / bw)
            if bidx >= n_batches:
                bidx = n_batches - 1
            batch_counts[bidx, c_sp] += 1
        i = copy_neuron[c_sp]
        # reset the spiking copy
        old = lam[c_sp, m_sp]
        new = resets_copy[c_sp]
        lam[c_sp, m_sp] = new
        d = new - old
        rep_tot[m_sp] += d
        lam_tot += d
        row_sum[c_sp] += d
        row_sq[c_sp] += new * new - old * old
        pair_prod[c_sp // 2] += d * lam[c_sp ^ 1, m_sp]
        # endogenous partner bump
        mate = c_sp ^ 1
        jump = w[copy_neuron[mate], i]
        if jump > 0.0:
            old = lam[mate, m_sp]
            lam[mate, m_sp] = old + jump
            rep_tot[m_sp] += jump
            lam_tot += jump
            row_sum[mate] += jump
            row_sq[mate] += jump * (2.0 * old + jump)
            pair_prod[mate // 2] += jump * lam[mate ^ 1, m_sp]
        # exogenous: one context and one other replica per target neuron,
        # skipping the in-replica partner (already served endogenously)
        partner_neuron = copy_neuron[c_sp ^ 1]
        for l in range(K):
            if l == i or l == partner_neuron:
                continue
            jump = w[l, i]
            if jump <= 0.0 or ctx_len[l] == 0:
                continue
            state, u3 = _u01(state)
            pick = int(u3 * ctx_len[l])
            if pick >= ctx_len[l]:
                pick = ctx_len[l] - 1
            c_t = ctx_flat[ctx_off[l] + pick]
            state, m_t = _pick_other(state, m_sp, M)
            old = lam[c_t, m_t]
            lam[c_t, m_t] = old + jump
            rep_tot[m_t] += jump
            lam_tot += jump
            row_sum[c_t] += jump
            row_sq[c_t] += jump * (2.0 * old + jump)
            pair_prod[c_t // 2] += jump * lam[c_t ^ 1, m_t]
        n_events += 1
        if n_events % _REFRESH_EVERY == 0:
            lam_tot = 0.0
            for m in range(M):
                s_m = 0.0
                for c in range(C):
                    s_m += lam[c, m]
                rep_tot[m] = s_m
                lam_tot += s_m
            for c in range(C):
                rs = 0.0
                rq = 0.0
                for m in range(M):
                    rs += lam[c, m]
                    rq += lam[c, m] * lam[c, m]
                row_sum[c] = rs
                row_sq[c] = rq
            for p in range(n_pairs):
                pp = 0.0
                for m in range(M):
                    pp += lam[2 * p, m] * lam[2 * p + 1, m]
                pair_prod[p] = pp
    return counts, batch_counts, s1, s2, s11, 0
