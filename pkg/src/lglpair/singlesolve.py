"""Stationary rate of a single neuron under Poisson bombardment.

For a no-relaxation neuron with reset r receiving independent Poisson
streams (rate beta_l, weight mu_l), the bounded solution of the
stationary transform ODE pins the output rate through one quadrature:

    beta = 1 / int_{-inf}^0 exp( r s + sum_l beta_l [ s + (1 - e^(mu_l s)) / mu_l ] ) ds .

Streams with mu_l = 0 cancel exactly (the bracket vanishes) and streams
with beta_l = 0 contribute nothing, so both are skipped.  With no
effective drive the integral is 1/r and beta = r.

This is the first-order rate map used by the network-level consistency
solvers: it feeds on the rates of the other neurons and returns this
neuron's stationary rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteIntegral, RelaxationUnsupported, ValidationError
from .model import NeuronParams
from .numerics import uniform_grid

__all__ = ["SingleProblem", "single_rate"]


@dataclass(frozen=True)
class SingleProblem:
    """One neuron plus its upstream Poisson streams (rate, weight)."""

    params: NeuronParams
    drive: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "drive", tuple(tuple(d) for d in self.drive))
        for rate, weight in self.drive:
            if rate < 0 or weight < 0:
                raise ValidationError("drive rates and weights must be nonnegative")


def single_rate(
    problem: SingleProblem,
    points_per_efold: float = 24.0,
    max_nodes: int = 20000,
    tail_tolerance: float = 1e-14,
) -> float:
    """Evaluate the bounded-solution rate integral by grid quadrature."""
    if not problem.params.no_relaxation:
        raise RelaxationUnsupported("single-neuron rate map requires no relaxation")
    r = problem.params.r
    drive = [(b, m) for (b, m) in problem.drive if b > 0 and m > 0]
    if r <= 0 and not drive:
        raise ValidationError("a neuron with zero reset and no drive never spikes")
    total_rate = sum(b for b, _ in drive)
    inflation = sum(b / m for b, m in drive)
    decay = r + total_rate
    if decay <= 0:
        raise ValidationError("rate integral does not decay; no stationary rate")
    z_min = -(math.log(1.0 / tail_tolerance) + inflation) / decay
    stiff = max(decay, 1.0)
    n = int(min(max_nodes, max(400, math.ceil(-z_min * points_per_efold * stiff))))
    grid = uniform_grid(z_min, n)
    s = grid.nodes
    expo = r * s.copy()
    for b, m in drive:
        expo += b * (s + (1.0 - np.exp(m * s)) / m)
    integral = float(grid.weights @ np.exp(expo))
    if not math.isfinite(integral) or integral <= 0:
        raise NonFiniteIntegral(f"rate integral evaluated to {integral}")
    return 1.0 / integral
