"""Exact event-driven simulation of LGL networks and their finite-replica
versions; the ground-truth oracle for every analytical output.

Without relaxation the intensities are piecewise constant, so the next
event time is exactly exponential in the total intensity and the spiking
unit is a categorical draw; no thinning is involved.  With relaxation
(original networks only) the loop uses thinning with the per-neuron
envelope max(lambda(t0), b), which dominates the monotone relaxation
toward the base rate, and remains exact.

All statistics are exact time integrals of lambda and lambda_i lambda_j
over inter-event segments, accumulated per batch; standard errors come
from batch means.  Every estimate records its seed; identical inputs give
bit-identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _engine
from .errors import InvalidMode, ValidationError, ZeroTotalIntensity
from .model import NetworkSpec, NeuronParams, PartitionSpec, check_partition, validate

__all__ = [
    "SimConfig",
    "SimEstimate",
    "ReplicaMode",
    "simulate",
    "palm_next_spiker",
    "generate_tree",
    "generate_ring",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SimConfig:
    """Run parameters of one simulation.

    sample_mode "time-integral" accumulates exact integrals between
    events; "event" records intensities just before each event instead
    (spike-weighted averages, kept for diagnostics; biased for moments).
    """

    seed: int
    t_measure: float
    t_warmup: float = None
    n_batches: int = 20
    sample_mode: str = "time-integral"

    def __post_init__(self):
        if self.t_warmup is None:
            object.__setattr__(self, "t_warmup", self.t_measure / 10.0)
        if not (self.t_measure > 0) or self.t_warmup < 0:
            raise ValidationError("durations must be positive")
        if self.n_batches < 2:
            raise ValidationError("need at least two batches for standard errors")
        if self.sample_mode not in ("time-integral", "event"):
            raise ValidationError(f"unknown sample_mode {self.sample_mode!r}")


@dataclass(frozen=True)
class ReplicaMode:
    """Routing semantics: the original network or a finite-replica model."""

    kind: str
    M: int = 1
    partition: PartitionSpec = None

    @classmethod
    def original(cls) -> "ReplicaMode":
        return cls(kind="original")

    @classmethod
    def first_order(cls, M: int) -> "ReplicaMode":
        return cls(kind="first_order", M=M)

    @classmethod
    def pair_partition(cls, M: int, partition: PartitionSpec) -> "ReplicaMode":
        return cls(kind="pair_partition", M=M, partition=partition)

    @classmethod
    def all_pair(cls, M: int) -> "ReplicaMode":
        return cls(kind="all_pair", M=M)

    def __post_init__(self):
        if self.kind not in ("original", "first_order", "pair_partition", "all_pair"):
            raise InvalidMode(f"unknown mode kind {self.kind!r}")
        if self.kind != "original" and self.M < 2:
            raise InvalidMode("replica modes need at least M=2 replicas")
        if self.kind == "pair_partition" and self.partition is None:
            raise InvalidMode("pair_partition mode needs a partition")


@dataclass(frozen=True)
class SimEstimate:
    """Monte-Carlo estimates with standard errors and seed provenance.

    rates equals spike_counts / (n_copies * t_measure) exactly, with
    n_copies = 1 for the original network and M for replica modes.
    Batch arrays (n_batches long) are kept so downstream checks can form
    standard errors of derived quantities.
    """

    rates: np.ndarray
    rate_se: np.ndarray
    second_moments: np.ndarray
    second_moment_se: np.ndarray
    cov_pairs: tuple
    covariances: np.ndarray
    covariance_se: np.ndarray
    spike_counts: np.ndarray
    elapsed_model_time: float
    seed: int
    n_copies: int
    batch_rates: np.ndarray
    batch_second_moments: np.ndarray
    batch_covariances: np.ndarray
    ctx_rates: np.ndarray = None

    def covariance_map(self) -> dict:
        return {p: float(c) for p, c in zip(self.cov_pairs, self.covariances)}


def _initial_intensities(spec: NetworkSpec) -> np.ndarray:
    return np.array([p.b for p in spec.neurons], dtype=float)


def _se(batch_values: np.ndarray) -> np.ndarray:
    n = batch_values.shape[0]
    return np.std(batch_values, axis=0, ddof=1) / math.sqrt(n)


def _assemble(
    config,
    counts,
    batch_counts,
    s1,
    s2,
    s11,
    pairs,
    n_copies,
    ctx_rates=None,
):
    t = config.t_measure
    B = config.n_batches
    bw = t / B
    denom = n_copies * t
    rates = counts / denom
    batch_rates = batch_counts / (n_copies * bw)
    batch_m1 = s1 / (n_copies * bw)
    batch_m2 = s2 / (n_copies * bw)
    batch_m11 = s11 / (n_copies * bw)
    m1 = s1.sum(axis=0) / denom
    m2 = s2.sum(axis=0) / denom
    m11 = s11.sum(axis=0) / denom
    if len(pairs):
        ai = np.array([p[0] for p in pairs])
        bi = np.array([p[1] for p in pairs])
        cov = m11 - m1[ai] * m1[bi]
        batch_cov = batch_m11 - batch_m1[:, ai] * batch_m1[:, bi]
        cov_se = _se(batch_cov)
    else:
        cov = np.zeros(0)
        batch_cov = np.zeros((B, 0))
        cov_se = np.zeros(0)
    return SimEstimate(
        rates=rates,
        rate_se=_se(batch_rates),
        second_moments=m2,
        second_moment_se=_se(batch_m2),
        cov_pairs=tuple(pairs),
        covariances=cov,
        covariance_se=cov_se,
        spike_counts=counts,
        elapsed_model_time=t,
        seed=config.seed,
        n_copies=n_copies,
        batch_rates=batch_rates,
        batch_second_moments=batch_m2,
        batch_covariances=batch_cov,
        ctx_rates=ctx_rates,
    )


def _default_pairs(spec: NetworkSpec, mode: ReplicaMode):
    if mode.kind == "pair_partition":
        return list(mode.partition.pairs)
    return spec.connected_pairs()


def simulate(
    spec: NetworkSpec, mode: ReplicaMode, config: SimConfig, cov_pairs=None
) -> SimEstimate:
    """Exact stochastic simulation; returns rate/moment/covariance
    estimates for the requested pairs (connected pairs by default, the
    partition's pairs in pair_partition mode)."""
    validate(spec)
    if cov_pairs is None:
        cov_pairs = _default_pairs(spec, mode)
    cov_pairs = [tuple(p) for p in cov_pairs]
    for (a, b) in cov_pairs:
        if not (0 <= a < spec.K and 0 <= b < spec.K and a != b):
            raise ValidationError(f"bad covariance pair ({a}, {b})")
    seed = int(config.seed) & _MASK64
    event_mode = config.sample_mode == "event"
    if event_mode and mode.kind != "original":
        raise InvalidMode("event-embedded sampling is only wired for original mode")
    if mode.kind == "original":
        if spec.no_relaxation:
            out = _engine.run_original(
                _initial_intensities(spec),
                np.array([p.r for p in spec.neurons]),
                spec.weights,
                config.t_warmup,
                config.t_measure,
                config.n_batches,
                np.array([p[0] for p in cov_pairs], dtype=np.int64),
                np.array([p[1] for p in cov_pairs], dtype=np.int64),
                seed,
                event_mode,
            )
            counts, batch_counts, s1, s2, s11, e1, e2, e11, status = out
        else:
            if event_mode:
                raise InvalidMode(
                    "event-embedded sampling is only wired for no-relaxation runs"
                )
            counts, batch_counts, s1, s2, s11, status = _run_original_thinning(
                spec, config, cov_pairs, seed
            )
        if status != 0:
            raise ZeroTotalIntensity(
                "total intensity reached zero; the network is dead"
            )
        if event_mode:
            # normalize pre-event sums into per-batch averages scaled to
            # batch duration so the shared assembly divides them back out
            bw = config.t_measure / config.n_batches
            n_ev = np.maximum(batch_counts.sum(axis=1), 1)[:, None].astype(float)
            s1 = e1 / n_ev * bw
            s2 = e2 / n_ev * bw
            s11 = e11 / n_ev * bw
        return _assemble(config, counts, batch_counts, s1, s2, s11, cov_pairs, 1)
    if not spec.no_relaxation:
        raise InvalidMode("replica simulation supports no-relaxation networks only")
    if mode.kind in ("first_order", "pair_partition"):
        if mode.kind == "first_order":
            partition = PartitionSpec(pairs=(), singletons=tuple(range(spec.K)))
        else:
            partition = check_partition(spec, mode.partition)
        blocks = sorted(partition.constituents(), key=min)
        block_first = np.array([b[0] for b in blocks], dtype=np.int64)
        block_second = np.array(
            [b[1] if len(b) == 2 else -1 for b in blocks], dtype=np.int64
        )
        block_of = np.zeros(spec.K, dtype=np.int64)
        for bi, b in enumerate(blocks):
            for member in b:
                block_of[member] = bi
        counts, batch_counts, s1, s2, s11, status = _engine.run_replica_partition(
            _initial_intensities(spec),
            np.array([p.r for p in spec.neurons]),
            spec.weights,
            block_first,
            block_second,
            block_of,
            mode.M,
            config.t_warmup,
            config.t_measure,
            config.n_batches,
            np.array([p[0] for p in cov_pairs], dtype=np.int64),
            np.array([p[1] for p in cov_pairs], dtype=np.int64),
            seed,
        )
        if status != 0:
            raise ZeroTotalIntensity(
                "total intensity reached zero; the network is dead"
            )
        return _assemble(
            config, counts, batch_counts, s1, s2, s11, cov_pairs, mode.M
        )
    # all_pair: contextual copies, stored pairwise (2p, 2p+1)
    pairs = spec.connected_pairs()
    if not pairs:
        raise InvalidMode("all_pair mode needs at least one connected pair")
    copy_neuron = np.array([n for p in pairs for n in p], dtype=np.int64)
    C = len(copy_neuron)
    ctx_lists = [[] for _ in range(spec.K)]
    for c, n in enumerate(copy_neuron):
        ctx_lists[n].append(c)
    ctx_len = np.array([len(x) for x in ctx_lists], dtype=np.int64)
    ctx_off = np.zeros(spec.K, dtype=np.int64)
    np.cumsum(ctx_len[:-1], out=ctx_off[1:])
    ctx_flat = np.array(
        [c for x in ctx_lists for c in x] or [0], dtype=np.int64
    )
    lam0 = _initial_intensities(spec)[copy_neuron]
    resets_copy = np.array([spec.neurons[n].r for n in copy_neuron])
    counts, batch_counts, s1, s2, s11, status = _engine.run_replica_all_pair(
        lam0,
        resets_copy,
        spec.weights,
        copy_neuron,
        ctx_flat,
        ctx_off,
        ctx_len,
        mode.M,
        config.t_warmup,
        config.t_measure,
        config.n_batches,
        seed,
    )
    if status != 0:
        raise ZeroTotalIntensity("total intensity reached zero; the network is dead")
    # fold contextual copies onto neurons: aggregate rate = mean over contexts
    t = config.t_measure
    ctx_rates = np.full((spec.K, spec.K), np.nan)
    copy_rates = counts / (mode.M * t)
    for c, n in enumerate(copy_neuron):
        partner = copy_neuron[c ^ 1]
        ctx_rates[n, partner] = copy_rates[c]
    agg_counts = np.zeros(spec.K, dtype=np.int64)
    n_ctx = np.maximum(ctx_len, 1)
    for c, n in enumerate(copy_neuron):
        agg_counts[n] += counts[c]
    # per-neuron aggregates; copy-level arrays fold the same way
    aggA = np.zeros((config.n_batches, spec.K))
    agg2 = np.zeros((config.n_batches, spec.K))
    aggC = np.zeros((config.n_batches, spec.K), dtype=np.int64)
    for c, n in enumerate(copy_neuron):
        aggA[:, n] += s1[:, c]
        agg2[:, n] += s2[:, c]
        aggC[:, n] += batch_counts[:, c]
    aggA /= n_ctx[None, :]
    agg2 /= n_ctx[None, :]
    est = _assemble(
        config,
        (agg_counts / n_ctx),
        aggC / n_ctx[None, :],
        aggA,
        agg2,
        s11,
        pairs,
        mode.M,
        ctx_rates=ctx_rates,
    )
    return est


# ----------------------------------------------------------------------
# Thinning engine for relaxing networks (original mode)
# ----------------------------------------------------------------------


def _decay_diff(tau: float, x0: float, x1: float) -> float:
    """tau (e^(-x0/tau) - e^(-x1/tau)), with the tau -> inf limit x1 - x0."""
    if math.isinf(tau):
        return x1 - x0
    return tau * (math.exp(-x0 / tau) - math.exp(-x1 / tau))


def _run_original_thinning(spec: NetworkSpec, config: SimConfig, cov_pairs, seed):
    """Ogata thinning with envelope max(lambda(t0), b); exact integrals of
    the exponentially relaxing intensities between candidate times."""
    K = spec.K
    b = np.array([p.b for p in spec.neurons])
    r = np.array([p.r for p in spec.neurons])
    tau = np.array([p.tau for p in spec.neurons])
    w = spec.weights
    lam = b.copy()
    state = seed
    t = 0.0
    t_warm, t_meas, B = config.t_warmup, config.t_measure, config.n_batches
    t_end = t_warm + t_meas
    bw = t_meas / B
    P = len(cov_pairs)
    counts = np.zeros(K, dtype=np.int64)
    batch_counts = np.zeros((B, K), dtype=np.int64)
    s1 = np.zeros((B, K))
    s2 = np.zeros((B, K))
    s11 = np.zeros((B, P))
    theta = np.empty(P)
    for p, (i, j) in enumerate(cov_pairs):
        if math.isinf(tau[i]) and math.isinf(tau[j]):
            theta[p] = math.inf
        elif math.isinf(tau[i]):
            theta[p] = tau[j]
        elif math.isinf(tau[j]):
            theta[p] = tau[i]
        else:
            theta[p] = 1.0 / (1.0 / tau[i] + 1.0 / tau[j])

    def accumulate(t0, a, x0, x1):
        # integrals of lambda(t0 + x) = b + a e^(-x/tau) over [x0, x1],
        # split at batch boundaries (arguments relative to t0)
        lo = max(t0 + x0, t_warm)
        hi = min(t0 + x1, t_end)
        pos = lo
        while pos < hi:
            bidx = min(int((pos - t_warm) / bw), B - 1)
            edge = t_warm + (bidx + 1) * bw
            if edge <= pos:
                bidx += 1
                edge = t_warm + (bidx + 1) * bw
            q = min(hi, edge)
            y0, y1 = pos - t0, q - t0
            seg = y1 - y0
            for i in range(K):
                d1 = _decay_diff(tau[i], y0, y1)
                d2 = _decay_diff(tau[i] / 2.0, y0, y1) if not math.isinf(tau[i]) else seg
                s1[bidx, i] += b[i] * seg + a[i] * d1
                s2[bidx, i] += (
                    b[i] * b[i] * seg + 2.0 * b[i] * a[i] * d1 + a[i] * a[i] * d2
                )
            for p, (i, j) in enumerate(cov_pairs):
                s11[bidx, p] += (
                    b[i] * b[j] * seg
                    + b[i] * a[j] * _decay_diff(tau[j], y0, y1)
                    + b[j] * a[i] * _decay_diff(tau[i], y0, y1)
                    + a[i] * a[j] * _decay_diff(theta[p], y0, y1)
                )
            pos = q

    while True:
        env = np.maximum(lam, b)
        total_env = float(env.sum())
        if total_env <= 0.0:
            raise ZeroTotalIntensity(
                "total intensity reached zero; the network is dead"
            )
        state, u = _engine.splitmix_u01(state)
        dt = -math.log(u) / total_env
        a = lam - b
        accumulate(t, a, 0.0, min(dt, t_end - t))
        if t + dt >= t_end:
            break
        t = t + dt
        lam = b + a * np.exp(-dt / tau)
        lam_tot = float(lam.sum())
        state, u2 = _engine.splitmix_u01(state)
        if u2 * total_env > lam_tot:
            continue  # thinned-out candidate
        state, u3 = _engine.splitmix_u01(state)
        x = u3 * lam_tot
        spiker = K - 1
        acc = 0.0
        for i in range(K):
            acc += lam[i]
            if x <= acc:
                spiker = i
                break
        if t >= t_warm:
            counts[spiker] += 1
            bidx = min(int((t - t_warm) / bw), B - 1)
            batch_counts[bidx, spiker] += 1
        lam[spiker] = r[spiker]
        lam += np.where(np.arange(K) == spiker, 0.0, w[:, spiker])
    return counts, batch_counts, s1, s2, s11, 0


# ----------------------------------------------------------------------
# Palm next-spiker frequency
# ----------------------------------------------------------------------


def palm_next_spiker(spec: NetworkSpec, config: SimConfig, i: int = 0, j: int = 1):
    """Empirical probability that neuron i spikes before neuron j, sampled
    at the pair's spike epochs, with a batch-means standard error.

    The network must be a pair plus pure Poisson drivers: every neuron
    other than i, j must have no incoming weights and r = b (constant
    intensity, hence exactly Poisson).
    """
    validate(spec)
    for k in range(spec.K):
        if k in (i, j):
            continue
        if np.any(spec.weights[k, :] > 0) or spec.neurons[k].r != spec.neurons[k].b:
            raise ValidationError(
                f"neuron {k} is not a pure Poisson driver (needs no inputs, r = b)"
            )
    est = simulate(spec, ReplicaMode.original(), config, cov_pairs=[(i, j)])
    n_i = est.spike_counts[i]
    n_j = est.spike_counts[j]
    if n_i + n_j == 0:
        raise ZeroTotalIntensity("the pair never spiked; lengthen the run")
    pi_i = n_i / (n_i + n_j)
    bc = est.batch_rates  # proportional to batch counts
    with np.errstate(invalid="ignore"):
        frac = bc[:, i] / (bc[:, i] + bc[:, j])
    frac = frac[np.isfinite(frac)]
    se = float(np.std(frac, ddof=1) / math.sqrt(len(frac))) if len(frac) > 1 else math.inf
    return float(pi_i), 1.0 - float(pi_i), se


# ----------------------------------------------------------------------
# Benchmark topology generators
# ----------------------------------------------------------------------


def generate_tree(levels: int, weight_low: float = 0.0, weight_high: float = 10.0, seed: int = 0):
    """Feedforward binary tree of interacting child pairs.

    ``levels`` counts pair generations below the root: the network has
    2^(levels+1) - 1 neurons in 2^levels - 1 pairs plus the root
    singleton.  Each parent feeds both children and the two children
    excite each other; the four weights per family are drawn i.i.d.
    uniform from (weight_low, weight_high), in the order (parent->left,
    parent->right, left->right, right->left) for parents in ascending
    index.  All neurons have r = b = 1 and no relaxation.
    """
    if levels < 1:
        raise ValidationError("a tree needs at least one pair level")
    K = 2 ** (levels + 1) - 1
    n_internal = 2**levels - 1
    rng = np.random.default_rng(seed)
    weights = np.zeros((K, K))
    pairs = []
    for p in range(n_internal):
        c1, c2 = 2 * p + 1, 2 * p + 2
        weights[c1, p] = rng.uniform(weight_low, weight_high)
        weights[c2, p] = rng.uniform(weight_low, weight_high)
        weights[c1, c2] = rng.uniform(weight_low, weight_high)
        weights[c2, c1] = rng.uniform(weight_low, weight_high)
        pairs.append((c1, c2))
    neurons = tuple(NeuronParams(b=1.0, r=1.0) for _ in range(K))
    spec = validate(NetworkSpec(neurons=neurons, weights=weights))
    partition = PartitionSpec(pairs=tuple(pairs), singletons=(0,))
    return spec, partition


def generate_ring(K: int, mu: float, r: float = 1.0) -> NetworkSpec:
    """Circular chain where neighbors excite each other symmetrically."""
    if K < 3:
        raise ValidationError("a ring needs at least three neurons")
    weights = np.zeros((K, K))
    for i in range(K):
        weights[i, (i + 1) % K] = mu
        weights[i, (i - 1) % K] = mu
    b = r if r > 0 else 1.0
    neurons = tuple(NeuronParams(b=b, r=r) for _ in range(K))
    return validate(NetworkSpec(neurons=neurons, weights=weights))
