"""Shared numerical machinery: semi-infinite grids, quadrature, the lower
incomplete gamma function, and a damped fixed-point driver.

All integrals in this package live on (-inf, 0] with integrands that decay
like pure exponentials, so the domain is truncated at

    z_min = -ln(1/tolerance) / decay_rate

and discretized uniformly.  Quadrature weights are composite-trapezoid
weights with Gregory endpoint corrections: the plain trapezoid rule is
only second order, which the tight exponential kernels solved here cannot
afford, while the corrections raise the order to ~7 at the cost of
adjusting a handful of weights near each endpoint.  Crucially the rule
keeps the one-weight-per-node structure, so it composes cleanly with the
prefix (Volterra-type) integrals of the pair solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    DomainError,
    InvalidTolerance,
    NonFiniteIterate,
    NonFiniteSample,
)

__all__ = [
    "Grid",
    "FixedPointReport",
    "make_grid",
    "uniform_grid",
    "gregory_weights",
    "prefix_weight_matrix",
    "integrate",
    "lower_incomplete_gamma",
    "log_lower_incomplete_gamma",
    "damped_fixed_point",
]

# Gregory correction coefficients (Laplace coefficients c_2, c_3, ...).
# Including the first q of them yields a rule of order q + 2.
GREGORY_COEFFS = (1.0 / 12, 1.0 / 24, 19.0 / 720, 3.0 / 160, 863.0 / 60480)


@dataclass(frozen=True)
class Grid:
    """Uniform abscissae z_0 < z_1 < ... < z_N = 0 with quadrature weights."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def n_intervals(self) -> int:
        return len(self.nodes) - 1

    @property
    def spacing(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def z_min(self) -> float:
        return float(self.nodes[0])


def gregory_weights(n_intervals: int, spacing: float, order: int = 5) -> np.ndarray:
    """Endpoint-corrected trapezoid weights over ``n_intervals`` uniform steps.

    ``order`` counts Gregory correction terms; it is lowered automatically
    on short grids (corrections need 2*order+1 intervals to not overlap),
    falling back to the plain trapezoid rule for n_intervals <= 2.
    """
    n = int(n_intervals)
    h = float(spacing)
    if n < 1:
        raise ValueError("need at least one interval")
    w = np.full(n + 1, h)
    w[0] = w[-1] = h / 2
    q = min(order, len(GREGORY_COEFFS), max(0, (n - 1) // 2))
    for j in range(1, q + 1):
        a = GREGORY_COEFFS[j - 1]
        for i in range(j + 1):
            binom = math.comb(j, i)
            # backward difference of order j at the right endpoint
            w[n - i] -= h * a * ((-1) ** i) * binom
            # forward difference of order j at the left endpoint
            w[i] += h * a * ((-1) ** (j + 1)) * ((-1) ** (j - i)) * binom
    return w


def uniform_grid(z_min: float, n_intervals: int, order: int = 5) -> Grid:
    """Grid over [z_min, 0] with ``n_intervals`` uniform steps."""
    if not (z_min < 0):
        raise ValueError("z_min must be negative")
    nodes = np.linspace(z_min, 0.0, int(n_intervals) + 1)
    nodes[-1] = 0.0
    weights = gregory_weights(n_intervals, -z_min / n_intervals, order=order)
    return Grid(nodes=nodes, weights=weights)


def make_grid(decay_rate: float, tolerance: float, points_per_unit: float) -> Grid:
    """Grid truncated where exp(decay_rate * z) falls below ``tolerance``.

    Node spacing is at most 1/points_per_unit.
    """
    if not (decay_rate > 0):
        raise InvalidTolerance(f"decay_rate must be positive, got {decay_rate}")
    if not (0 < tolerance < 1):
        raise InvalidTolerance(f"tolerance must lie in (0, 1), got {tolerance}")
    if points_per_unit < 2:
        raise InvalidTolerance(
            f"points_per_unit must be >= 2, got {points_per_unit}"
        )
    z_min = math.log(tolerance) / decay_rate
    n = max(2, math.ceil(-z_min * points_per_unit))
    return uniform_grid(z_min, n)


def prefix_weight_matrix(grid: Grid, order: int = 5) -> np.ndarray:
    """Lower-triangular matrix W with W[m, :m+1] the quadrature weights
    for the prefix integral from z_0 to z_m.  Row 0 is identically zero.
    """
    n = grid.n_intervals
    h = grid.spacing
    W = np.tril(np.full((n + 1, n + 1), h))
    W[:, 0] = h / 2
    np.fill_diagonal(W, h / 2)
    W[0, 0] = 0.0
    rows = np.arange(n + 1)
    for j in range(1, min(order, len(GREGORY_COEFFS)) + 1):
        a = GREGORY_COEFFS[j - 1]
        # rows long enough that corrections of order j do not overlap
        m = rows[rows >= 2 * j + 1]
        if len(m) == 0:
            continue
        for i in range(j + 1):
            binom = math.comb(j, i)
            W[m, m - i] -= h * a * ((-1) ** i) * binom
            W[m, i] += h * a * ((-1) ** (j + 1)) * ((-1) ** (j - i)) * binom
    return W


def integrate(values: np.ndarray, grid: Grid) -> float:
    """Quadrature estimate of the integral of a function sampled on ``grid``."""
    values = np.asarray(values, dtype=float)
    if values.shape != grid.nodes.shape:
        raise ValueError("sampled values do not match the grid")
    if not np.all(np.isfinite(values)):
        raise NonFiniteSample("sampled function has non-finite values")
    return float(grid.weights @ values)


# ----------------------------------------------------------------------
# Lower incomplete gamma function
# ----------------------------------------------------------------------

_GAMMA_EPS = 1e-16
_GAMMA_MAX_ITER = 500


def _log_gamma_series(s: float, x: float) -> float:
    """ln gamma_lower(s, x) via the ascending series, for x < s + 1."""
    # gamma(s,x) = x^s e^{-x} sum_{n>=0} x^n / (s (s+1) ... (s+n))
    term = 1.0
    total = 0.0
    ap = s
    for _ in range(_GAMMA_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(1.0 + total) * _GAMMA_EPS:
            return s * math.log(x) - x - math.log(s) + math.log1p(total)
    raise DomainError(f"series for gamma({s}, {x}) did not converge")


def _log_upper_cf(s: float, x: float) -> float:
    """ln Gamma_upper(s, x) via Lentz's continued fraction, for x >= s + 1."""
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_MAX_ITER):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            return s * math.log(x) - x + math.log(h)
    raise DomainError(f"continued fraction for Gamma({s}, {x}) did not converge")


def log_lower_incomplete_gamma(s: float, x: float) -> float:
    """ln of the lower incomplete gamma function, stable for extreme s, x."""
    if s <= 0:
        raise DomainError(f"shape must be positive, got s={s}")
    if x < 0:
        raise DomainError(f"argument must be nonnegative, got x={x}")
    if x == 0:
        return -math.inf
    if x < s + 1.0:
        return _log_gamma_series(s, x)
    # gamma = Gamma(s) - Gamma_upper(s, x); Q = Gamma_upper / Gamma(s) < 1 here
    log_q = _log_upper_cf(s, x) - math.lgamma(s)
    return math.lgamma(s) + math.log1p(-math.exp(log_q))


def lower_incomplete_gamma(s: float, x: float) -> float:
    """gamma(s, x) = integral of t^(s-1) e^(-t) over t in [0, x]."""
    value = log_lower_incomplete_gamma(s, x)
    return 0.0 if value == -math.inf else math.exp(value)


# ----------------------------------------------------------------------
# Damped fixed-point driver
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class FixedPointReport:
    iterations: int
    final_residual: float
    converged: bool
    damping: float


def damped_fixed_point(
    initial,
    step: Callable,
    damping: float = 1.0,
    tolerance: float = 1e-10,
    max_iter: int = 1000,
):
    """Iterate x <- (1 - damping) x + damping step(x) to a fixed point.

    Returns the final state and a :class:`FixedPointReport`.  The residual
    is the sup-norm of the change between successive (damped) iterates.
    """
    if not (0 < damping <= 1):
        raise ValueError(f"damping must lie in (0, 1], got {damping}")
    if not (tolerance > 0):
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    x = np.asarray(initial, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x).copy()
    residual = math.inf
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        fx = np.atleast_1d(np.asarray(step(x[0] if scalar else x), dtype=float))
        if not np.all(np.isfinite(fx)):
            raise NonFiniteIterate(
                f"fixed-point map produced non-finite values at iteration {iterations}"
            )
        x_new = (1.0 - damping) * x + damping * fx
        residual = float(np.max(np.abs(x_new - x)))
        x = x_new
        if residual <= tolerance:
            converged = True
            break
    report = FixedPointReport(
        iterations=iterations,
        final_residual=residual,
        converged=converged,
        damping=damping,
    )
    return (float(x[0]) if scalar else x), report
