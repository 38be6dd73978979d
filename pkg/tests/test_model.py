"""Domain types, validation, pair extraction, JSON interchange."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lglpair.errors import (
    EmptyNetwork,
    IdenticalIndices,
    IndexOutOfRange,
    InvalidPartition,
    NegativeWeight,
    NonzeroDiagonal,
    ResetAboveBase,
)
from lglpair.model import (
    NO_RELAXATION,
    DriveTriple,
    NetworkSpec,
    NeuronParams,
    PairProblem,
    PartitionSpec,
    check_partition,
    extract_pair,
    network_from_json,
    network_to_json,
    partition_from_json,
    partition_to_json,
    validate,
)


def single_neuron_spec(b=1.0, r=1.0, tau=NO_RELAXATION):
    return NetworkSpec(neurons=(NeuronParams(b=b, r=r, tau=tau),), weights=[[0.0]])


class TestValidate:
    def test_minimal_network_ok(self):
        spec = single_neuron_spec(b=1.0, r=1.0)
        assert validate(spec) is spec

    def test_reset_above_base(self):
        with pytest.raises(ResetAboveBase):
            validate(single_neuron_spec(b=1.0, r=2.0))

    def test_nonzero_diagonal(self):
        spec = NetworkSpec(
            neurons=(NeuronParams(b=1, r=1),), weights=[[0.5]]
        )
        with pytest.raises(NonzeroDiagonal):
            validate(spec)

    def test_negative_weight(self):
        spec = NetworkSpec(
            neurons=(NeuronParams(b=1, r=1), NeuronParams(b=1, r=1)),
            weights=[[0.0, -0.1], [0.3, 0.0]],
        )
        with pytest.raises(NegativeWeight):
            validate(spec)

    def test_empty_network(self):
        spec = NetworkSpec(neurons=(), weights=np.zeros((0, 0)))
        with pytest.raises(EmptyNetwork):
            validate(spec)

    def test_verdict_is_reproducible(self):
        spec = single_neuron_spec()
        validate(spec)
        validate(spec)
        bad = single_neuron_spec(b=1.0, r=2.0)
        for _ in range(2):
            with pytest.raises(ResetAboveBase):
                validate(bad)

    def test_weights_are_read_only(self):
        spec = single_neuron_spec()
        with pytest.raises(ValueError):
            spec.weights[0, 0] = 1.0

    def test_no_relaxation_flag(self):
        assert single_neuron_spec().no_relaxation
        assert not single_neuron_spec(tau=2.0).no_relaxation


class TestExtractPair:
    def chain_spec(self):
        # neuron 2 feeds both members of the pair (0, 1)
        weights = np.zeros((3, 3))
        weights[0, 2] = 0.8
        weights[1, 2] = 1.3
        neurons = tuple(NeuronParams(b=1, r=1) for _ in range(3))
        return NetworkSpec(neurons=neurons, weights=weights)

    def test_chain_transcription(self):
        problem = extract_pair(self.chain_spec(), 0, 1, [2.0])
        assert problem.drive == (DriveTriple(2.0, 0.8, 1.3),)
        assert problem.mu_ij == 0.0 and problem.mu_ji == 0.0

    def test_isolated_pair_empty_drive(self):
        spec = NetworkSpec(
            neurons=(NeuronParams(b=1, r=1), NeuronParams(b=1, r=1)),
            weights=[[0.0, 2.0], [3.0, 0.0]],
        )
        problem = extract_pair(spec, 0, 1, [])
        assert problem.drive == ()
        assert problem.mu_ij == 2.0 and problem.mu_ji == 3.0

    def test_private_private_shared_topology(self):
        # neurons 2, 3 private to each member, neuron 4 shared, unit weights
        weights = np.zeros((5, 5))
        weights[0, 2] = 1.0
        weights[1, 3] = 1.0
        weights[0, 4] = 1.0
        weights[1, 4] = 1.0
        spec = NetworkSpec(
            neurons=tuple(NeuronParams(b=1, r=1) for _ in range(5)),
            weights=weights,
        )
        problem = extract_pair(spec, 0, 1, [2.0, 3.0, 4.0])
        assert problem.drive == (
            DriveTriple(2.0, 1.0, 0.0),
            DriveTriple(3.0, 0.0, 1.0),
            DriveTriple(4.0, 1.0, 1.0),
        )

    def test_vacuous_streams_pruned(self):
        problem = extract_pair(self.chain_spec(), 0, 2, [0.0])
        # neuron 1 neither feeds 0 nor 2 and carries no rate: dropped
        assert problem.drive == ()

    def test_identical_indices(self):
        with pytest.raises(IdenticalIndices):
            extract_pair(self.chain_spec(), 1, 1, [1.0])

    def test_index_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            extract_pair(self.chain_spec(), 0, 3, [1.0])

    @given(
        rates=st.lists(st.floats(0.1, 5.0), min_size=1, max_size=4),
        seed=st.integers(0, 2**16),
    )
    @settings(max_examples=40, deadline=None)
    def test_reembedding_roundtrip(self, rates, seed):
        # extract -> embed the pair plus its streams into a fresh network
        # -> extract again is the identity
        rng = np.random.default_rng(seed)
        q = len(rates)
        K = q + 2
        weights = np.zeros((K, K))
        weights[0, 1] = rng.uniform(0.1, 3.0)
        weights[1, 0] = rng.uniform(0.1, 3.0)
        for idx in range(q):
            weights[0, 2 + idx] = rng.uniform(0.0, 2.0)
            weights[1, 2 + idx] = rng.uniform(0.1, 2.0)
        spec = NetworkSpec(
            neurons=tuple(NeuronParams(b=2, r=1) for _ in range(K)),
            weights=weights,
        )
        problem = extract_pair(spec, 0, 1, rates)

        rebuilt = np.zeros((K, K))
        rebuilt[0, 1] = problem.mu_ij
        rebuilt[1, 0] = problem.mu_ji
        for idx, triple in enumerate(problem.drive):
            rebuilt[0, 2 + idx] = triple.weight_i
            rebuilt[1, 2 + idx] = triple.weight_j
        spec2 = NetworkSpec(
            neurons=(problem.params_i, problem.params_j)
            + tuple(NeuronParams(b=2, r=1) for _ in range(q)),
            weights=rebuilt,
        )
        again = extract_pair(spec2, 0, 1, [t.rate for t in problem.drive])
        assert again == problem


class TestPairProblem:
    def test_swap_involution(self):
        problem = PairProblem(
            NeuronParams(b=1, r=0.5),
            NeuronParams(b=2, r=1.5),
            0.7,
            1.9,
            drive=(DriveTriple(1.0, 0.2, 0.9),),
        )
        flipped = problem.swapped()
        assert flipped.mu_ij == 1.9 and flipped.mu_ji == 0.7
        assert flipped.drive[0] == DriveTriple(1.0, 0.9, 0.2)
        assert flipped.swapped() == problem

    def test_negative_inputs_rejected(self):
        with pytest.raises(NegativeWeight):
            PairProblem(NeuronParams(b=1, r=1), NeuronParams(b=1, r=1), -0.1, 0.0)


class TestPartition:
    def test_valid_partition(self):
        spec = NetworkSpec(
            neurons=tuple(NeuronParams(b=1, r=1) for _ in range(4)),
            weights=np.zeros((4, 4)),
        )
        partition = PartitionSpec(pairs=((1, 2),), singletons=(0, 3))
        assert check_partition(spec, partition) is partition

    @pytest.mark.parametrize(
        "pairs,singletons",
        [
            (((0, 0),), (1, 2, 3)),      # repeated index inside a pair
            (((0, 1), (1, 2)), (3,)),    # overlap
            (((0, 1),), (2,)),           # not exhaustive
            (((0, 4),), (1, 2, 3)),      # out of range
        ],
    )
    def test_invalid_partitions(self, pairs, singletons):
        spec = NetworkSpec(
            neurons=tuple(NeuronParams(b=1, r=1) for _ in range(4)),
            weights=np.zeros((4, 4)),
        )
        with pytest.raises((InvalidPartition, IndexOutOfRange)):
            check_partition(spec, PartitionSpec(pairs=pairs, singletons=singletons))


class TestJson:
    def test_network_round_trip(self):
        weights = np.array([[0.0, 1.5], [0.25, 0.0]])
        spec = NetworkSpec(
            neurons=(NeuronParams(b=1.0, r=0.5, tau=2.0), NeuronParams(b=2.0, r=2.0)),
            weights=weights,
        )
        text = network_to_json(spec)
        again = network_from_json(text)
        assert again.neurons == spec.neurons
        assert np.array_equal(again.weights, spec.weights)

    def test_null_tau_means_no_relaxation(self):
        doc = {"neurons": [{"tau": None, "b": 1.0, "r": 1.0}], "weights": [[0.0]]}
        spec = network_from_json(json.dumps(doc))
        assert math.isinf(spec.neurons[0].tau)
        assert '"tau": null' in network_to_json(spec)

    def test_partition_round_trip_is_one_based(self):
        partition = PartitionSpec(pairs=((0, 1),), singletons=(2,))
        text = partition_to_json(partition)
        doc = json.loads(text)
        assert doc["pairs"] == [[1, 2]] and doc["singletons"] == [3]
        assert partition_from_json(text) == partition
