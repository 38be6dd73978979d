"""Domain types for linear Galves-Locherbach (LGL) spiking networks.

An LGL network of K neurons carries per-neuron parameters (tau, b, r) and
a K x K weight matrix mu.  The stochastic intensity lambda_i of neuron i
relaxes toward the base rate b_i with time constant tau_i, jumps by
mu[i][j] whenever neuron j spikes, and resets to r_i whenever neuron i
itself spikes.  tau_i = inf marks the no-relaxation regime, in which
intensities are piecewise constant between events; the analytical solvers
in this package only cover that regime, while the simulator covers both.

Indices are 0-based everywhere in code; user-facing files (JSON, CSV)
number neurons from 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyNetwork,
    IdenticalIndices,
    IndexOutOfRange,
    InvalidPartition,
    NegativeWeight,
    NonzeroDiagonal,
    ResetAboveBase,
    ValidationError,
)

__all__ = [
    "NO_RELAXATION",
    "NeuronParams",
    "NetworkSpec",
    "DriveTriple",
    "PairProblem",
    "PartitionSpec",
    "validate",
    "check_partition",
    "extract_pair",
    "network_to_json",
    "network_from_json",
    "partition_to_json",
    "partition_from_json",
]

NO_RELAXATION = math.inf


@dataclass(frozen=True)
class NeuronParams:
    """Per-neuron parameters: base rate b, reset value r, relaxation time tau.

    tau = inf (the default, aliased as NO_RELAXATION) tags a neuron whose
    intensity does not relax between events.
    """

    b: float
    r: float
    tau: float = NO_RELAXATION

    @property
    def no_relaxation(self) -> bool:
        return math.isinf(self.tau)


@dataclass(frozen=True)
class NetworkSpec:
    """A full LGL network: ordered neurons plus the synaptic weight matrix.

    weights[i][j] is the jump of lambda_i when neuron j spikes.
    """

    neurons: tuple
    weights: np.ndarray

    def __post_init__(self):
        neurons = tuple(self.neurons)
        weights = np.array(self.weights, dtype=float)
        weights.setflags(write=False)
        object.__setattr__(self, "neurons", neurons)
        object.__setattr__(self, "weights", weights)

    @property
    def K(self) -> int:
        return len(self.neurons)

    @property
    def no_relaxation(self) -> bool:
        return all(p.no_relaxation for p in self.neurons)

    def connected_pairs(self):
        """Ordered (i, j) with i < j and mu_ij + mu_ji > 0."""
        w = self.weights
        return [
            (i, j)
            for i in range(self.K)
            for j in range(i + 1, self.K)
            if w[i, j] + w[j, i] > 0
        ]


def validate(spec: NetworkSpec) -> NetworkSpec:
    """Check every structural invariant; raise on the first violation."""
    if spec.K < 1:
        raise EmptyNetwork("a network needs at least one neuron")
    for idx, p in enumerate(spec.neurons):
        if not (p.b > 0):
            raise ValidationError(f"neuron {idx}: base rate must be positive, got {p.b}")
        if not (0 <= p.r <= p.b):
            raise ResetAboveBase(
                f"neuron {idx}: reset must satisfy 0 <= r <= b, got r={p.r}, b={p.b}"
            )
        if not (p.tau > 0):
            raise ValidationError(
                f"neuron {idx}: relaxation time must be positive or inf, got {p.tau}"
            )
    if spec.weights.shape != (spec.K, spec.K):
        raise ValidationError(
            f"weight matrix shape {spec.weights.shape} does not match K={spec.K}"
        )
    if not np.all(np.isfinite(spec.weights)):
        raise ValidationError("weight matrix has non-finite entries")
    if np.any(spec.weights < 0):
        i, j = np.argwhere(spec.weights < 0)[0]
        raise NegativeWeight(f"weight mu[{i}][{j}] is negative")
    diag = np.diagonal(spec.weights)
    if np.any(diag != 0):
        i = int(np.nonzero(diag)[0][0])
        raise NonzeroDiagonal(f"self-weight mu[{i}][{i}] must be zero")
    return spec


@dataclass(frozen=True)
class DriveTriple:
    """One upstream Poisson stream: rate, weight into neuron i, weight into j.

    A single stream delivers both jumps simultaneously, which is what makes
    shared drive a source of positive correlation; a private stream simply
    has one of the two weights equal to zero.
    """

    rate: float
    weight_i: float
    weight_j: float

    def swapped(self) -> "DriveTriple":
        return DriveTriple(self.rate, self.weight_j, self.weight_i)


@dataclass(frozen=True)
class PairProblem:
    """A neuron pair under independent Poisson bombardment.

    mu_ij is the jump of lambda_i when j spikes (and mu_ji vice versa).
    """

    params_i: NeuronParams
    params_j: NeuronParams
    mu_ij: float
    mu_ji: float
    drive: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "drive", tuple(self.drive))
        if self.mu_ij < 0 or self.mu_ji < 0:
            raise NegativeWeight("pair weights must be nonnegative")
        for t in self.drive:
            if t.rate < 0 or t.weight_i < 0 or t.weight_j < 0:
                raise NegativeWeight("drive rates and weights must be nonnegative")

    @property
    def no_relaxation(self) -> bool:
        return self.params_i.no_relaxation and self.params_j.no_relaxation

    def swapped(self) -> "PairProblem":
        """The same pair viewed with the roles of i and j exchanged."""
        return PairProblem(
            params_i=self.params_j,
            params_j=self.params_i,
            mu_ij=self.mu_ji,
            mu_ji=self.mu_ij,
            drive=tuple(t.swapped() for t in self.drive),
        )


@dataclass(frozen=True)
class PartitionSpec:
    """A partition of {0..K-1} into neuron pairs and singletons."""

    pairs: tuple
    singletons: tuple

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(tuple(p) for p in self.pairs))
        object.__setattr__(self, "singletons", tuple(self.singletons))

    def constituents(self):
        """All blocks, pairs first then singletons, in declaration order."""
        return list(self.pairs) + [(k,) for k in self.singletons]


def check_partition(spec: NetworkSpec, partition: PartitionSpec) -> PartitionSpec:
    """Verify that the partition is disjoint and exhaustive for ``spec``."""
    seen = []
    for (i, j) in partition.pairs:
        if i == j:
            raise InvalidPartition(f"pair ({i}, {j}) repeats one index")
        seen.extend((i, j))
    seen.extend(partition.singletons)
    for idx in seen:
        if not (0 <= idx < spec.K):
            raise IndexOutOfRange(f"partition references neuron {idx}, K={spec.K}")
    if len(set(seen)) != len(seen):
        raise InvalidPartition("partition blocks overlap")
    if len(seen) != spec.K:
        raise InvalidPartition(
            f"partition covers {len(seen)} of {spec.K} neurons"
        )
    return partition


def extract_pair(spec: NetworkSpec, i: int, j: int, external_rates) -> PairProblem:
    """Single out the pair (i, j); every other neuron k becomes a Poisson
    stream with the given rate and its weights into i and j.

    ``external_rates`` has one entry per k != i, j in ascending k order.
    All-zero streams (no rate, no weights) are dropped.
    """
    validate(spec)
    K = spec.K
    if not (0 <= i < K) or not (0 <= j < K):
        raise IndexOutOfRange(f"pair indices ({i}, {j}) out of range for K={K}")
    if i == j:
        raise IdenticalIndices(f"pair indices must differ, got ({i}, {j})")
    others = [k for k in range(K) if k != i and k != j]
    rates = list(external_rates)
    if len(rates) != len(others):
        raise ValidationError(
            f"need {len(others)} external rates, got {len(rates)}"
        )
    drive = []
    for k, beta in zip(others, rates):
        if beta < 0:
            raise NegativeWeight(f"external rate for neuron {k} is negative")
        w_i = float(spec.weights[i, k])
        w_j = float(spec.weights[j, k])
        if w_i + w_j > 0 or beta > 0:
            drive.append(DriveTriple(float(beta), w_i, w_j))
    return PairProblem(
        params_i=spec.neurons[i],
        params_j=spec.neurons[j],
        mu_ij=float(spec.weights[i, j]),
        mu_ji=float(spec.weights[j, i]),
        drive=tuple(drive),
    )


# ----------------------------------------------------------------------
# JSON interchange (1-based neuron numbering in files)
# ----------------------------------------------------------------------


def _tau_out(tau: float):
    return None if math.isinf(tau) else tau


def network_to_json(spec: NetworkSpec) -> str:
    doc = {
        "neurons": [
            {"tau": _tau_out(p.tau), "b": p.b, "r": p.r} for p in spec.neurons
        ],
        "weights": spec.weights.tolist(),
    }
    return json.dumps(doc, sort_keys=True)


def network_from_json(text: str) -> NetworkSpec:
    doc = json.loads(text)
    try:
        neurons = tuple(
            NeuronParams(
                b=float(n["b"]),
                r=float(n["r"]),
                tau=NO_RELAXATION if n.get("tau") is None else float(n["tau"]),
            )
            for n in doc["neurons"]
        )
        weights = np.array(doc["weights"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed network document: {exc}") from exc
    return validate(NetworkSpec(neurons=neurons, weights=weights))


def partition_to_json(partition: PartitionSpec) -> str:
    doc = {
        "pairs": [[i + 1, j + 1] for (i, j) in partition.pairs],
        "singletons": [k + 1 for k in partition.singletons],
    }
    return json.dumps(doc, sort_keys=True)


def partition_from_json(text: str) -> PartitionSpec:
    doc = json.loads(text)
    try:
        pairs = tuple((int(i) - 1, int(j) - 1) for (i, j) in doc["pairs"])
        singletons = tuple(int(k) - 1 for k in doc["singletons"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed partition document: {exc}") from exc
    return PartitionSpec(pairs=pairs, singletons=singletons)
