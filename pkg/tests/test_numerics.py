"""Grid construction, quadrature, incomplete gamma, fixed-point driver."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from lglpair.errors import (
    DomainError,
    InvalidTolerance,
    NonFiniteIterate,
    NonFiniteSample,
)
from lglpair.numerics import (
    FixedPointReport,
    damped_fixed_point,
    gregory_weights,
    integrate,
    lower_incomplete_gamma,
    make_grid,
    prefix_weight_matrix,
)


class TestMakeGrid:
    def test_truncation_point_unit_decay(self):
        grid = make_grid(decay_rate=1.0, tolerance=1e-12, points_per_unit=32)
        assert math.isclose(grid.z_min, -math.log(1e12), rel_tol=1e-12)
        assert abs(grid.z_min + 27.63) < 0.01

    def test_truncation_scales_with_decay(self):
        grid = make_grid(decay_rate=2.0, tolerance=1e-12, points_per_unit=32)
        assert abs(grid.z_min + 13.82) < 0.01

    def test_node_count_at_density_32(self):
        grid = make_grid(decay_rate=1.0, tolerance=1e-12, points_per_unit=32)
        # ceil(27.63 * 32) intervals
        assert len(grid.nodes) >= 884

    def test_last_node_is_zero_and_increasing(self):
        grid = make_grid(decay_rate=0.7, tolerance=1e-10, points_per_unit=16)
        assert grid.nodes[-1] == 0.0
        assert np.all(np.diff(grid.nodes) > 0)

    def test_spacing_bound(self):
        grid = make_grid(decay_rate=1.0, tolerance=1e-12, points_per_unit=32)
        assert grid.spacing <= 1.0 / 32 + 1e-15

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(decay_rate=0.0, tolerance=1e-12, points_per_unit=32),
            dict(decay_rate=1.0, tolerance=0.0, points_per_unit=32),
            dict(decay_rate=1.0, tolerance=1.5, points_per_unit=32),
            dict(decay_rate=1.0, tolerance=1e-12, points_per_unit=1),
        ],
    )
    def test_rejects_bad_config(self, kwargs):
        with pytest.raises(InvalidTolerance):
            make_grid(**kwargs)


class TestIntegrate:
    def test_exponential_at_density_64(self):
        grid = make_grid(decay_rate=1.0, tolerance=1e-12, points_per_unit=64)
        value = integrate(np.exp(grid.nodes), grid)
        assert abs(value - (1.0 - math.exp(grid.z_min))) < 1e-6

    def test_zero_function(self):
        grid = make_grid(decay_rate=1.0, tolerance=1e-12, points_per_unit=16)
        assert integrate(np.zeros_like(grid.nodes), grid) == 0.0

    def test_faster_exponential(self):
        grid = make_grid(decay_rate=1.0, tolerance=1e-12, points_per_unit=64)
        value = integrate(np.exp(2.0 * grid.nodes), grid)
        assert abs(value - 0.5) < 1e-6

    def test_non_finite_sample_rejected(self):
        grid = make_grid(decay_rate=1.0, tolerance=1e-8, points_per_unit=8)
        values = np.exp(grid.nodes)
        values[3] = math.nan
        with pytest.raises(NonFiniteSample):
            integrate(values, grid)

    @given(
        a=st.floats(-5, 5),
        b=st.floats(-5, 5),
        c1=st.floats(0.5, 3),
        c2=st.floats(0.5, 3),
    )
    @settings(max_examples=50, deadline=None)
    def test_linearity(self, a, b, c1, c2):
        grid = make_grid(decay_rate=1.0, tolerance=1e-10, points_per_unit=8)
        f = np.exp(c1 * grid.nodes)
        g = np.exp(c2 * grid.nodes)
        combined = integrate(a * f + b * g, grid)
        split = a * integrate(f, grid) + b * integrate(g, grid)
        assert abs(combined - split) <= 1e-12 * (1 + abs(combined))

    def test_refinement_improves(self):
        # doubling density changes the result by less than 4x the current
        # error (second-order-or-better convergence under refinement)
        coarse = make_grid(decay_rate=1.0, tolerance=1e-12, points_per_unit=4)
        fine = make_grid(decay_rate=1.0, tolerance=1e-12, points_per_unit=8)
        exact = 1.0 - math.exp(coarse.z_min)
        i_coarse = integrate(np.exp(coarse.nodes), coarse)
        i_fine = integrate(np.exp(fine.nodes), fine)
        assert abs(i_fine - i_coarse) < 4.0 * abs(i_coarse - exact)
        assert abs(i_fine - exact) < abs(i_coarse - exact)

    def test_gregory_weights_integrate_low_polynomials_exactly(self):
        n = 24
        w = gregory_weights(n, 1.0 / n)
        x = np.linspace(0, 1, n + 1)
        for deg in range(6):
            assert abs(w @ x**deg - 1.0 / (deg + 1)) < 1e-13

    def test_prefix_matrix_rows_match_standalone_weights(self):
        grid = make_grid(decay_rate=1.0, tolerance=1e-6, points_per_unit=4)
        W = prefix_weight_matrix(grid)
        n = grid.n_intervals
        for m in (1, 3, n):
            row = gregory_weights(m, grid.spacing)
            assert np.allclose(W[m, : m + 1], row, atol=1e-15)
        assert np.all(W[0] == 0.0)


class TestLowerIncompleteGamma:
    @pytest.mark.parametrize("x", [1e-6, 0.1, 1.0, 5.0, 40.0])
    def test_shape_one_closed_form(self, x):
        # cancellation-free form of 1 - e^(-x)
        assert math.isclose(
            lower_incomplete_gamma(1.0, x), -math.expm1(-x), rel_tol=1e-12
        )

    def test_zero_argument(self):
        assert lower_incomplete_gamma(3.7, 0.0) == 0.0

    def test_half_shape_against_quadrature(self):
        oracle, err = quad(
            lambda t: t**-0.5 * math.exp(-t), 0.0, 0.25, epsabs=1e-14, epsrel=1e-13
        )
        value = lower_incomplete_gamma(0.5, 0.25)
        assert abs(value - oracle) < 1e-10

    @pytest.mark.parametrize("s", [0.3, 1.0, 2.5, 7.0])
    def test_strictly_increasing_in_x(self, s):
        # stay where successive increments are representable in float64
        # (far past saturation the increments fall below machine epsilon)
        xs = np.linspace(0.01, 2 * s + 8, 60)
        vals = [lower_incomplete_gamma(s, x) for x in xs]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("s", [0.5, 1.0, 3.0, 10.0, 40.0])
    def test_approaches_complete_gamma(self, s):
        value = lower_incomplete_gamma(s, 50.0 * s)
        assert math.isclose(value, math.gamma(s), rel_tol=1e-8)

    @pytest.mark.parametrize("s,x", [(0.0, 1.0), (-1.0, 1.0), (1.0, -0.5)])
    def test_domain_errors(self, s, x):
        with pytest.raises(DomainError):
            lower_incomplete_gamma(s, x)


class TestDampedFixedPoint:
    def test_affine_contraction(self):
        x, report = damped_fixed_point(0.0, lambda x: x / 2 + 1, damping=1.0,
                                       tolerance=1e-12, max_iter=200)
        assert math.isclose(x, 2.0, abs_tol=1e-11)
        assert report.converged

    def test_identity_map_converges_immediately(self):
        x, report = damped_fixed_point(3.5, lambda x: x, damping=1.0,
                                       tolerance=1e-12)
        assert x == 3.5
        assert report.iterations == 1
        assert report.final_residual == 0.0

    def test_cosine_fixed_point(self):
        dottie = brentq(lambda x: math.cos(x) - x, 0.0, 1.0, xtol=1e-14)
        x, report = damped_fixed_point(0.0, math.cos, damping=1.0,
                                       tolerance=1e-12, max_iter=500)
        assert report.converged
        assert math.isclose(x, dottie, abs_tol=1e-10)
        assert math.isclose(x, 0.7390851332, abs_tol=1e-9)

    def test_contraction_residual_ratio(self):
        q = 0.6
        iterates = []

        def step(x):
            iterates.append(float(x))
            return q * x

        damped_fixed_point(1.0, step, damping=1.0, tolerance=1e-12, max_iter=100)
        residuals = [abs(b - a) for a, b in zip(iterates, iterates[1:])]
        ratios = [b / a for a, b in zip(residuals, residuals[1:]) if a > 1e-14]
        assert all(ratio <= q + 0.05 for ratio in ratios)

    def test_divergence_detected(self):
        with np.errstate(over="ignore"), pytest.raises(NonFiniteIterate):
            damped_fixed_point(1.0, lambda x: x * 1e160, damping=1.0,
                               tolerance=1e-12, max_iter=10)

    def test_vector_state(self):
        target = np.array([1.0, 2.0])
        x, report = damped_fixed_point(
            np.zeros(2), lambda v: 0.5 * (v + target), damping=1.0,
            tolerance=1e-12, max_iter=200
        )
        assert np.allclose(x, target, atol=1e-10)
        assert isinstance(report, FixedPointReport)

    def test_damping_recorded(self):
        _, report = damped_fixed_point(0.0, lambda x: x / 2 + 1, damping=0.25,
                                       tolerance=1e-10, max_iter=500)
        assert report.damping == 0.25
