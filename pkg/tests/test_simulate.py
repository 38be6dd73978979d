"""Exact event-driven simulation: determinism, documented draw order,
agreement with analytics, replica routing, generators."""

import json
import math

import numpy as np
import pytest

from lglpair._engine import splitmix_u01
from lglpair.errors import InvalidMode, ValidationError, ZeroTotalIntensity
from lglpair.model import (
    NetworkSpec,
    NeuronParams,
    PartitionSpec,
    extract_pair,
    network_to_json,
)
from lglpair.pairsolve import pair_exact
from lglpair.rmf import solve_first_order, solve_pair_partition
from lglpair.simulate import (
    ReplicaMode,
    SimConfig,
    generate_ring,
    generate_tree,
    palm_next_spiker,
    simulate,
)


def pair_spec(mu12=5.0, mu21=5.0, r=1.0):
    return NetworkSpec(
        neurons=(NeuronParams(b=1, r=r), NeuronParams(b=1, r=r)),
        weights=[[0.0, mu12], [mu21, 0.0]],
    )


class TestDeterminism:
    def test_identical_runs_bitwise(self):
        spec = pair_spec()
        config = SimConfig(seed=99, t_measure=500.0)
        a = simulate(spec, ReplicaMode.original(), config)
        b = simulate(spec, ReplicaMode.original(), config)
        assert np.array_equal(a.spike_counts, b.spike_counts)
        assert np.array_equal(a.rates, b.rates)
        assert np.array_equal(a.covariances, b.covariances)
        assert np.array_equal(a.batch_second_moments, b.batch_second_moments)

    def test_seed_changes_trajectory(self):
        spec = pair_spec()
        a = simulate(spec, ReplicaMode.original(), SimConfig(seed=1, t_measure=500.0))
        b = simulate(spec, ReplicaMode.original(), SimConfig(seed=2, t_measure=500.0))
        assert not np.array_equal(a.spike_counts, b.spike_counts)

    def test_replica_determinism(self):
        spec, partition = generate_tree(1, seed=4)
        mode = ReplicaMode.pair_partition(4, partition)
        config = SimConfig(seed=5, t_measure=200.0)
        a = simulate(spec, mode, config)
        b = simulate(spec, mode, config)
        assert np.array_equal(a.spike_counts, b.spike_counts)
        assert np.array_equal(a.covariances, b.covariances)

    def test_thinning_determinism(self):
        spec = NetworkSpec(
            neurons=(NeuronParams(b=2.0, r=1.0, tau=1.0),), weights=[[0.0]]
        )
        config = SimConfig(seed=12, t_measure=300.0)
        a = simulate(spec, ReplicaMode.original(), config)
        b = simulate(spec, ReplicaMode.original(), config)
        assert np.array_equal(a.spike_counts, b.spike_counts)
        assert np.array_equal(a.second_moments, b.second_moments)


class TestExactAccumulation:
    def test_hand_replay_of_documented_draw_order(self):
        # replay the event loop by hand: draw order is (inter-event time,
        # spiking neuron); integrals are piecewise-constant products
        r1, r2, mu12, mu21 = 1.0, 0.5, 2.0, 0.0
        spec = NetworkSpec(
            neurons=(NeuronParams(b=1.0, r=r1), NeuronParams(b=0.5, r=r2)),
            weights=[[0.0, mu12], [mu21, 0.0]],
        )
        seed = 31
        t_measure = 3.0
        est = simulate(
            spec,
            ReplicaMode.original(),
            SimConfig(seed=seed, t_measure=t_measure, t_warmup=0.0, n_batches=2),
            cov_pairs=[(0, 1)],
        )

        lam = [1.0, 0.5]
        state = seed
        t = 0.0
        counts = [0, 0]
        s1 = [0.0, 0.0]
        s2 = [0.0, 0.0]
        s11 = 0.0
        while True:
            total = lam[0] + lam[1]
            state, u = splitmix_u01(state)
            dt = -math.log(u) / total
            seg = min(t + dt, t_measure) - t
            for k in (0, 1):
                s1[k] += lam[k] * seg
                s2[k] += lam[k] * lam[k] * seg
            s11 += lam[0] * lam[1] * seg
            if t + dt >= t_measure:
                break
            t += dt
            state, v = splitmix_u01(state)
            spiker = 0 if v * total <= lam[0] else 1
            counts[spiker] += 1
            other = 1 - spiker
            lam[other] += spec.weights[other, spiker]
            lam[spiker] = (r1, r2)[spiker]
        assert est.spike_counts.tolist() == counts
        assert est.rates[0] == counts[0] / t_measure
        assert est.second_moments[0] == pytest.approx(s2[0] / t_measure, rel=1e-14)
        assert est.second_moments[1] == pytest.approx(s2[1] / t_measure, rel=1e-14)
        expected_cov = s11 / t_measure - (s1[0] / t_measure) * (s1[1] / t_measure)
        assert est.covariances[0] == pytest.approx(expected_cov, abs=1e-13)

    def test_single_poisson_neuron(self):
        spec = NetworkSpec(neurons=(NeuronParams(b=1, r=1),), weights=[[0.0]])
        est = simulate(
            spec, ReplicaMode.original(), SimConfig(seed=7, t_measure=5e4)
        )
        assert abs(est.rates[0] - 1.0) < 3 * est.rate_se[0]
        # constant unit intensity: the exact time integrals are trivial
        assert est.second_moments[0] == pytest.approx(1.0, abs=1e-12)


class TestAgainstAnalytics:
    def test_isolated_pair_matches_exact(self):
        spec = pair_spec(5.0, 5.0)
        exact = pair_exact(extract_pair(spec, 0, 1, []))
        est = simulate(
            spec, ReplicaMode.original(), SimConfig(seed=21, t_measure=3e4)
        )
        for k, target in ((0, exact.beta_i), (1, exact.beta_j)):
            assert abs(est.rates[k] - target) < 3 * est.rate_se[k]
        assert abs(est.covariances[0] - exact.covariance) < 3 * est.covariance_se[0]

    def test_second_moment_identity_driven_pair(self):
        # E[lambda_i^2] = r_i b_i + mu_ij b_j + drive, at empirical rates
        weights = np.zeros((3, 3))
        weights[0, 1], weights[1, 0] = 1.5, 0.7
        weights[0, 2], weights[1, 2] = 1.0, 0.5
        spec = NetworkSpec(
            neurons=(
                NeuronParams(b=1, r=1),
                NeuronParams(b=1, r=1),
                NeuronParams(b=2, r=2),
            ),
            weights=weights,
        )
        est = simulate(
            spec, ReplicaMode.original(), SimConfig(seed=3, t_measure=3e4)
        )
        for k in (0, 1):
            predicted_batches = spec.neurons[k].r * est.batch_rates[:, k]
            for other in range(3):
                if other != k:
                    predicted_batches = (
                        predicted_batches
                        + spec.weights[k, other] * est.batch_rates[:, other]
                    )
            diff = est.batch_second_moments[:, k] - predicted_batches
            se = np.std(diff, ddof=1) / math.sqrt(len(diff))
            assert abs(diff.mean()) < 3 * se + 1e-12

    def test_ring_rate_conservation(self):
        ring = generate_ring(5, mu=1.0, r=1.0)
        est = simulate(
            ring, ReplicaMode.original(), SimConfig(seed=17, t_measure=2e4)
        )
        grand = est.rates.mean()
        for k in range(5):
            assert abs(est.rates[k] - grand) < 3 * est.rate_se[k]

    def test_zero_coupling_ring_rates_are_resets(self):
        ring = generate_ring(4, mu=0.0, r=1.0)
        est = simulate(
            ring, ReplicaMode.original(), SimConfig(seed=2, t_measure=2e4)
        )
        for k in range(4):
            assert abs(est.rates[k] - 1.0) < 3 * est.rate_se[k]

    def test_relaxing_neuron_second_moment_law(self):
        # E[lambda^2] = (b - beta)/tau + r beta for a single relaxing neuron
        spec = NetworkSpec(
            neurons=(NeuronParams(b=2.0, r=0.5, tau=1.0),), weights=[[0.0]]
        )
        est = simulate(
            spec, ReplicaMode.original(), SimConfig(seed=8, t_measure=2e4)
        )
        predicted = (2.0 - est.batch_rates[:, 0]) / 1.0 + 0.5 * est.batch_rates[:, 0]
        diff = est.batch_second_moments[:, 0] - predicted
        se = np.std(diff, ddof=1) / math.sqrt(len(diff))
        assert abs(diff.mean()) < 3 * se

    def test_event_sampling_mode_runs(self):
        spec = pair_spec(1.0, 1.0)
        est = simulate(
            spec,
            ReplicaMode.original(),
            SimConfig(seed=4, t_measure=2000.0, sample_mode="event"),
        )
        # spike-weighted moments oversample high-intensity episodes
        assert est.second_moments[0] > 0


class TestReplicaModes:
    def three_neuron(self):
        # driver feeding an interacting pair, with feedback into the
        # driver; the feedback makes the constituents' inputs non-Poisson
        # at finite M, so the replica bias is visible (a pure feedforward
        # chain of Poisson drivers is exactly the infinite-replica model
        # at every M and would show nothing but noise)
        weights = np.zeros((3, 3))
        weights[1, 0] = weights[2, 0] = 2.0
        weights[1, 2] = weights[2, 1] = 3.0
        weights[0, 1] = 2.0
        spec = NetworkSpec(
            neurons=tuple(NeuronParams(b=1, r=1) for _ in range(3)),
            weights=weights,
        )
        partition = PartitionSpec(pairs=((1, 2),), singletons=(0,))
        return spec, partition

    def test_first_order_gap_shrinks_with_replicas(self):
        spec, _ = self.three_neuron()
        reference = solve_first_order(spec, tolerance=1e-10).beta
        gaps = []
        for M in (4, 64):
            est = simulate(
                spec,
                ReplicaMode.first_order(M),
                SimConfig(seed=13, t_measure=8000.0),
            )
            gaps.append(float(np.max(np.abs(est.rates - reference))))
        assert gaps[1] < gaps[0]

    def test_pair_partition_approaches_solver(self):
        spec, partition = self.three_neuron()
        reference = solve_pair_partition(
            spec, partition, damping=0.5, tolerance=1e-10
        ).beta
        gaps = []
        for M in (4, 64):
            est = simulate(
                spec,
                ReplicaMode.pair_partition(M, partition),
                SimConfig(seed=29, t_measure=8000.0),
            )
            gaps.append(float(np.max(np.abs(est.rates - reference))))
        assert gaps[1] < gaps[0]

    def test_tree_replica_shared_pair_delivery(self):
        # levels=2 tree: spikes from level-1 pair members route to their
        # child pair with both weights landing in one sampled replica;
        # rates AND within-pair covariances must match the consistency
        # solver (the covariances are sensitive to exactly this sharing)
        spec, part = generate_tree(2, seed=6)
        ref = solve_pair_partition(
            spec, part, damping=1.0, tolerance=1e-9,
            pair_points_per_efold=8.0, pair_max_nodes=1200,
        )
        est = simulate(
            spec,
            ReplicaMode.pair_partition(48, part),
            SimConfig(seed=9, t_measure=6000.0),
        )
        assert np.all(np.abs(est.rates - ref.beta) < 4 * est.rate_se + 1e-3)
        ref_cov = ref.covariance_map()
        for p, pair in enumerate(est.cov_pairs):
            assert abs(est.covariances[p] - ref_cov[pair]) < (
                4 * est.covariance_se[p] + 1e-3
            )

    def test_all_pair_mode_contextual_rates(self):
        ring = generate_ring(3, mu=2.0, r=1.0)
        est = simulate(
            ring, ReplicaMode.all_pair(16), SimConfig(seed=41, t_measure=2500.0)
        )
        assert est.ctx_rates is not None
        defined = ~np.isnan(est.ctx_rates)
        assert defined.sum() == 6  # all ordered pairs of the triangle
        from lglpair.rmf import solve_all_pair

        sol = solve_all_pair(
            ring, pair_points_per_efold=6.0, pair_max_nodes=800
        )
        assert np.all(np.abs(est.rates - sol.beta) < 5 * est.rate_se + 0.02)

    def test_replica_needs_two_copies(self):
        spec, partition = self.three_neuron()
        with pytest.raises(InvalidMode):
            ReplicaMode.first_order(1)

    def test_replica_rejects_relaxation(self):
        spec = NetworkSpec(
            neurons=(NeuronParams(b=1, r=1, tau=1.0), NeuronParams(b=1, r=1)),
            weights=[[0.0, 1.0], [1.0, 0.0]],
        )
        with pytest.raises(InvalidMode):
            simulate(
                spec,
                ReplicaMode.first_order(4),
                SimConfig(seed=1, t_measure=10.0),
            )


class TestPalm:
    def test_symmetric_pair_is_even_money(self):
        spec = pair_spec(2.0, 2.0)
        pi_i, pi_j, se = palm_next_spiker(
            spec, SimConfig(seed=19, t_measure=2e4)
        )
        assert abs(pi_i - 0.5) < 3 * se
        assert pi_i + pi_j == pytest.approx(1.0)

    def test_asymmetric_pair_matches_exact_rates(self):
        spec = pair_spec(4.0, 1.0)
        exact = pair_exact(extract_pair(spec, 0, 1, []))
        target = exact.beta_i / (exact.beta_i + exact.beta_j)
        pi_i, _, se = palm_next_spiker(spec, SimConfig(seed=23, t_measure=3e4))
        assert abs(pi_i - target) < 3 * se

    def test_rejects_non_poisson_drivers(self):
        weights = np.zeros((3, 3))
        weights[0, 1] = 1.0
        weights[2, 0] = 1.0  # neuron 2 receives input: not a pure driver
        spec = NetworkSpec(
            neurons=tuple(NeuronParams(b=1, r=1) for _ in range(3)),
            weights=weights,
        )
        with pytest.raises(ValidationError):
            palm_next_spiker(spec, SimConfig(seed=1, t_measure=10.0))


class TestGenerators:
    def test_tree_shapes(self):
        spec, partition = generate_tree(7, seed=1)
        assert spec.K == 255
        assert len(partition.pairs) == 127
        assert partition.singletons == (0,)
        spec, partition = generate_tree(5, seed=1)
        assert spec.K == 63 and len(partition.pairs) == 31

    def test_smallest_tree(self):
        spec, partition = generate_tree(1, seed=0)
        assert spec.K == 3
        assert partition.pairs == ((1, 2),)
        assert partition.singletons == (0,)

    def test_tree_weights_within_bounds_and_feedforward(self):
        spec, partition = generate_tree(3, seed=9)
        w = spec.weights
        assert np.all(w >= 0) and np.all(w < 10.0)
        for (c1, c2) in partition.pairs:
            parent = (c1 - 1) // 2
            assert w[c1, parent] > 0 and w[c2, parent] > 0
            assert w[c1, c2] > 0 and w[c2, c1] > 0
        # nothing feeds the root, and no child feeds its parent
        assert np.all(w[0, :] == 0)

    def test_tree_seed_reproducibility(self):
        a, _ = generate_tree(4, seed=77)
        b, _ = generate_tree(4, seed=77)
        assert network_to_json(a) == network_to_json(b)
        c, _ = generate_tree(4, seed=78)
        assert network_to_json(a) != network_to_json(c)

    def test_ring_shape(self):
        ring = generate_ring(5, mu=1.5, r=1.0)
        w = ring.weights
        for i in range(5):
            assert w[i, (i + 1) % 5] == 1.5
            assert w[i, (i - 1) % 5] == 1.5
        assert np.count_nonzero(w) == 10

    def test_minimal_ring(self):
        ring = generate_ring(3, mu=1.0, r=1.0)
        assert ring.K == 3
        with pytest.raises(ValidationError):
            generate_ring(2, mu=1.0, r=1.0)


class TestFailureModes:
    def test_dead_network_detected(self):
        spec = NetworkSpec(neurons=(NeuronParams(b=1.0, r=0.0),), weights=[[0.0]])
        with pytest.raises(ZeroTotalIntensity):
            simulate(
                spec, ReplicaMode.original(), SimConfig(seed=1, t_measure=100.0)
            )

    def test_bad_mode_kind(self):
        with pytest.raises(InvalidMode):
            ReplicaMode(kind="bogus")
