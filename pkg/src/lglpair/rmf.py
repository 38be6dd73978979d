"""Network-level self-consistency solvers.

A large network is approximated by tractable limits in which each
constituent (a single neuron, or a pair of neurons) receives independent
Poisson input at self-consistently determined rates.  Three variants are
solved here:

* first order  -- every constituent is a single neuron; the rate vector
  solves beta_k = F_k(beta_[k]) with F_k the single-neuron rate map.
  Constituents are independent, so all covariances vanish.
* pair partition -- the neurons are partitioned into pairs and
  singletons; pair blocks solve the two-neuron integral system, and a
  spike from an upstream neuron delivers both of its weights into the
  same sampled pair, so shared drive is correlated.
* all pair -- every connected (i, j) appears as a constituent, giving
  contextual rates beta_i^j; a neuron's outward rate is the mean of its
  contextual rates over its connected partners, and each pair member
  receives its external streams independently (one target pair is drawn
  per target neuron, so no shared-jump correlation survives).

The outer loop is a damped Gauss-Seidel sweep over blocks (freshest
neighbor rates), with a Jacobi mode available; block order is by smallest
member index, which makes feedforward topologies converge in a handful of
sweeps.  Existence of a solution is physically guaranteed; uniqueness is
not assumed, so every solution records its initial rates and damping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotConverged, RelaxationUnsupported, ValidationError
from .model import (
    DriveTriple,
    NetworkSpec,
    PairProblem,
    PartitionSpec,
    check_partition,
    extract_pair,
    validate,
)
from .numerics import FixedPointReport
from .pairsolve import PairSolution, pair_exact, solve_pair
from .singlesolve import SingleProblem, single_rate

__all__ = [
    "RateVector",
    "AllPairRates",
    "PairStats",
    "RmfSolution",
    "solve_first_order",
    "solve_pair_partition",
    "solve_all_pair",
    "symmetric_chain_rate",
]


@dataclass(frozen=True)
class RateVector:
    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)


@dataclass(frozen=True)
class AllPairRates:
    """Contextual rates beta_ctx[i][j] (rate of i when paired with j; NaN
    where the pair is unconnected) and their per-neuron aggregates."""

    beta_ctx: np.ndarray
    aggregate: np.ndarray

    def __post_init__(self):
        ctx = np.asarray(self.beta_ctx, dtype=float)
        agg = np.asarray(self.aggregate, dtype=float)
        ctx.setflags(write=False)
        agg.setflags(write=False)
        object.__setattr__(self, "beta_ctx", ctx)
        object.__setattr__(self, "aggregate", agg)


@dataclass(frozen=True)
class PairStats:
    i: int
    j: int
    beta_i: float
    beta_j: float
    cross_moment: float
    covariance: float
    correlation: float


@dataclass(frozen=True)
class RmfSolution:
    mode: str
    rates: object
    pair_stats: tuple
    report: FixedPointReport
    damping: float
    initial_rates: np.ndarray

    @property
    def beta(self) -> np.ndarray:
        """Per-neuron rates (aggregates in all-pair mode)."""
        if isinstance(self.rates, AllPairRates):
            return self.rates.aggregate
        return self.rates.beta

    def covariance_map(self) -> dict:
        return {(s.i, s.j): s.covariance for s in self.pair_stats}


def _aitken_extrapolate(history: list, floor: float = 0.0):
    """Geometric extrapolation of a linearly converging sweep sequence.

    With three consecutive iterates whose increments shrink by a steady
    factor q in a steady direction, jump ahead by d q / (1 - q).  Returns
    the extrapolated vector or None when the pattern is not clean.
    """
    if len(history) < 3:
        return None
    x0, x1, x2 = history[-3], history[-2], history[-1]
    d1 = x1 - x0
    d2 = x2 - x1
    n1 = float(np.linalg.norm(d1))
    n2 = float(np.linalg.norm(d2))
    if n1 == 0.0 or n2 == 0.0:
        return None
    q = n2 / n1
    cosine = float(d1 @ d2) / (n1 * n2)
    if not (0.01 < q < 0.95 and cosine > 0.95):
        return None
    return np.maximum(x2 + d2 * (q / (1.0 - q)), floor)


class _PairWorkspace:
    """Per-pair grid and warm start reused across outer sweeps; the grid
    is rebuilt when the drive rates drift away from its sizing rates."""

    def __init__(self):
        self.grid = None
        self.grid_rates = None
        self.warm = None

    def solve(self, problem: PairProblem, **kwargs) -> PairSolution:
        from .pairsolve import default_grid

        rates = np.array([t.rate for t in problem.drive], dtype=float)
        rebuild = self.grid is None
        if not rebuild and len(rates) == len(self.grid_rates):
            scale = np.maximum(np.maximum(rates, self.grid_rates), 1e-9)
            rebuild = bool(np.any(np.abs(rates - self.grid_rates) / scale > 0.25))
        elif not rebuild:
            rebuild = True
        if rebuild:
            self.grid = default_grid(
                problem,
                points_per_efold=kwargs.get("points_per_efold", 16.0),
                max_nodes=kwargs.get("max_nodes", 3000),
            )
            self.grid_rates = rates
            self.warm = None
        kwargs = {k: v for k, v in kwargs.items() if k not in ("points_per_efold", "max_nodes")}
        sol = solve_pair(problem, grid=self.grid, initial=self.warm, **kwargs)
        self.warm = (sol.h_i, sol.h_j)
        return sol


def _require_no_relaxation(spec: NetworkSpec):
    if not spec.no_relaxation:
        raise RelaxationUnsupported(
            "consistency solvers require a no-relaxation network"
        )


def _initial_rates(spec: NetworkSpec) -> np.ndarray:
    # the undriven stationary rates: every neuron at its reset value
    return np.array([p.r for p in spec.neurons], dtype=float)


def _single_drive(spec: NetworkSpec, k: int, beta: np.ndarray) -> SingleProblem:
    w = spec.weights
    drive = tuple(
        (float(beta[l]), float(w[k, l]))
        for l in range(spec.K)
        if l != k and w[k, l] > 0
    )
    return SingleProblem(params=spec.neurons[k], drive=drive)


def solve_first_order(
    spec: NetworkSpec,
    tolerance: float = 1e-10,
    damping: float = 0.5,
    max_iter: int = 500,
    update: str = "gauss_seidel",
) -> RmfSolution:
    """Self-consistent rates with single-neuron constituents."""
    validate(spec)
    _require_no_relaxation(spec)
    beta = _initial_rates(spec)
    initial = beta.copy()
    residual = math.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        prev = beta.copy()
        source = prev if update == "jacobi" else beta
        for k in range(spec.K):
            target = single_rate(_single_drive(spec, k, source))
            beta[k] = (1.0 - damping) * beta[k] + damping * target
        residual = float(np.max(np.abs(beta - prev)))
        if residual <= tolerance:
            converged = True
            break
    report = FixedPointReport(iterations, residual, converged, damping)
    solution = RmfSolution(
        mode="first_order",
        rates=RateVector(beta),
        pair_stats=(),
        report=report,
        damping=damping,
        initial_rates=initial,
    )
    if not converged:
        raise NotConverged(
            f"first-order consistency loop: residual {residual} after "
            f"{iterations} sweeps",
            partial=solution,
        )
    return solution


def _partition_pair_problem(
    spec: NetworkSpec, i: int, j: int, beta: np.ndarray
) -> PairProblem:
    # zero out rates of neurons that feed neither member: their streams
    # never reach this pair and would only bloat the kernels
    w = spec.weights
    rates = [
        float(beta[k]) if (w[i, k] + w[j, k]) > 0 else 0.0
        for k in range(spec.K)
        if k != i and k != j
    ]
    return extract_pair(spec, i, j, rates)


def solve_pair_partition(
    spec: NetworkSpec,
    partition: PartitionSpec,
    tolerance: float = 1e-8,
    damping: float = 0.5,
    max_iter: int = 200,
    update: str = "gauss_seidel",
    pair_tolerance: float = 1e-10,
    pair_points_per_efold: float = 10.0,
    pair_max_nodes: int = 2000,
) -> RmfSolution:
    """Self-consistent rates for a partition into pairs and singletons.

    Pair blocks are solved by the integral-system solver with warm-started
    boundary functions; singleton blocks use the single-neuron rate map.
    On convergence each pair is re-solved once at the final rates to
    report covariances and correlations.
    """
    validate(spec)
    _require_no_relaxation(spec)
    check_partition(spec, partition)
    blocks = sorted(partition.constituents(), key=min)
    beta = _initial_rates(spec)
    initial = beta.copy()
    spaces = {}
    pair_kwargs = dict(
        tolerance=pair_tolerance,
        points_per_efold=pair_points_per_efold,
        max_nodes=pair_max_nodes,
    )

    def _pair_solution(i, j, rates) -> PairSolution:
        problem = _partition_pair_problem(spec, i, j, rates)
        space = spaces.setdefault((i, j), _PairWorkspace())
        return space.solve(problem, **pair_kwargs)

    residual = math.inf
    converged = False
    iterations = 0
    history = []
    for iterations in range(1, max_iter + 1):
        prev = beta.copy()
        source = prev if update == "jacobi" else beta
        for block in blocks:
            if len(block) == 1:
                k = block[0]
                target = single_rate(_single_drive(spec, k, source))
                beta[k] = (1.0 - damping) * beta[k] + damping * target
            else:
                i, j = block
                sol = _pair_solution(i, j, source)
                beta[i] = (1.0 - damping) * beta[i] + damping * sol.beta_i
                beta[j] = (1.0 - damping) * beta[j] + damping * sol.beta_j
        residual = float(np.max(np.abs(beta - prev)))
        if residual <= tolerance:
            converged = True
            break
        history.append(beta.copy())
        if len(history) > 3:
            history.pop(0)
        jumped = _aitken_extrapolate(history)
        if jumped is not None:
            beta = jumped
            history.clear()
    stats = []
    for block in blocks:
        if len(block) == 2:
            i, j = block
            sol = _pair_solution(i, j, beta)
            stats.append(
                PairStats(
                    i=i,
                    j=j,
                    beta_i=sol.beta_i,
                    beta_j=sol.beta_j,
                    cross_moment=sol.cross_moment,
                    covariance=sol.covariance,
                    correlation=sol.correlation,
                )
            )
    report = FixedPointReport(iterations, residual, converged, damping)
    solution = RmfSolution(
        mode="pair_partition",
        rates=RateVector(beta),
        pair_stats=tuple(stats),
        report=report,
        damping=damping,
        initial_rates=initial,
    )
    if not converged:
        raise NotConverged(
            f"pair-partition consistency loop: residual {residual} after "
            f"{iterations} sweeps",
            partial=solution,
        )
    return solution


def _all_pair_problem(
    spec: NetworkSpec, i: int, j: int, aggregate: np.ndarray
) -> PairProblem:
    # each member receives its external streams independently: one stream
    # per (source, member) with the weight into the other member zero
    w = spec.weights
    drive = []
    for k in range(spec.K):
        if k == i or k == j:
            continue
        if w[i, k] > 0:
            drive.append(DriveTriple(float(aggregate[k]), float(w[i, k]), 0.0))
        if w[j, k] > 0:
            drive.append(DriveTriple(float(aggregate[k]), 0.0, float(w[j, k])))
    return PairProblem(
        params_i=spec.neurons[i],
        params_j=spec.neurons[j],
        mu_ij=float(spec.weights[i, j]),
        mu_ji=float(spec.weights[j, i]),
        drive=tuple(drive),
    )


def solve_all_pair(
    spec: NetworkSpec,
    tolerance: float = 1e-10,
    damping: float = 0.5,
    max_iter: int = 500,
    update: str = "gauss_seidel",
    pair_tolerance: float = 1e-11,
    pair_points_per_efold: float = 10.0,
    pair_max_nodes: int = 2000,
) -> RmfSolution:
    """Contextual rates over every connected pair, with aggregates.

    Convergence is measured on the aggregate rates.  Neurons with no
    connections at all keep their isolated rate r.
    """
    validate(spec)
    _require_no_relaxation(spec)
    pairs = spec.connected_pairs()
    K = spec.K
    partners = [[] for _ in range(K)]
    for (i, j) in pairs:
        partners[i].append(j)
        partners[j].append(i)
    beta_ctx = np.full((K, K), np.nan)
    for (i, j) in pairs:
        beta_ctx[i, j] = spec.neurons[i].r
        beta_ctx[j, i] = spec.neurons[j].r

    def _aggregate():
        agg = np.array(
            [
                np.mean(beta_ctx[k, partners[k]]) if partners[k] else spec.neurons[k].r
                for k in range(K)
            ]
        )
        return agg

    aggregate = _aggregate()
    initial = aggregate.copy()
    spaces = {}
    pair_kwargs = dict(
        tolerance=pair_tolerance,
        points_per_efold=pair_points_per_efold,
        max_nodes=pair_max_nodes,
    )

    def _pair_solution(i, j, agg) -> PairSolution:
        problem = _all_pair_problem(spec, i, j, agg)
        space = spaces.setdefault((i, j), _PairWorkspace())
        return space.solve(problem, **pair_kwargs)

    residual = math.inf
    converged = False
    iterations = 0
    history = []
    for iterations in range(1, max_iter + 1):
        prev = aggregate.copy()
        source = prev.copy() if update == "jacobi" else aggregate
        for (i, j) in pairs:
            sol = _pair_solution(i, j, source)
            beta_ctx[i, j] = (1.0 - damping) * beta_ctx[i, j] + damping * sol.beta_i
            beta_ctx[j, i] = (1.0 - damping) * beta_ctx[j, i] + damping * sol.beta_j
            if update != "jacobi":
                aggregate = _aggregate()
        aggregate = _aggregate()
        residual = float(np.max(np.abs(aggregate - prev)))
        if residual <= tolerance:
            converged = True
            break
        history.append(aggregate.copy())
        if len(history) > 3:
            history.pop(0)
        jumped = _aitken_extrapolate(history)
        if jumped is not None:
            # push every contextual rate by the same per-neuron jump the
            # aggregate took, then rebuild the aggregate
            for (i, j) in pairs:
                beta_ctx[i, j] += jumped[i] - aggregate[i]
                beta_ctx[j, i] += jumped[j] - aggregate[j]
            beta_ctx[beta_ctx < 0] = 0.0
            aggregate = _aggregate()
            history.clear()
    stats = []
    for (i, j) in pairs:
        sol = _pair_solution(i, j, aggregate)
        stats.append(
            PairStats(
                i=i,
                j=j,
                beta_i=sol.beta_i,
                beta_j=sol.beta_j,
                cross_moment=sol.cross_moment,
                covariance=sol.covariance,
                correlation=sol.correlation,
            )
        )
    report = FixedPointReport(iterations, residual, converged, damping)
    solution = RmfSolution(
        mode="all_pair",
        rates=AllPairRates(beta_ctx=beta_ctx, aggregate=aggregate),
        pair_stats=tuple(stats),
        report=report,
        damping=damping,
        initial_rates=initial,
    )
    if not converged:
        raise NotConverged(
            f"all-pair consistency loop: residual {residual} after "
            f"{iterations} sweeps",
            partial=solution,
        )
    return solution


def symmetric_chain_rate(
    r: float,
    b: float,
    mu: float,
    kappa: int,
    tolerance: float = 1e-10,
    damping: float = 0.5,
    max_iter: int = 500,
    pair_tolerance: float = 1e-11,
    pair_points_per_efold: float = 10.0,
    pair_max_nodes: int = 2000,
):
    """Scalar consistency problem of the homogeneous symmetric pair.

    Each member of a symmetric pair (reset r, coupling mu both ways)
    receives ``kappa`` independent external Poisson streams, each with
    weight mu and the unknown rate beta itself.  Returns (beta, rho).
    kappa = 0 is the isolated symmetric pair, solved in closed form.
    """
    if kappa < 0 or int(kappa) != kappa:
        raise ValidationError(f"connectivity count must be a nonnegative integer, got {kappa}")
    from .model import NeuronParams

    params = NeuronParams(b=b, r=r)
    if mu == 0.0:
        return float(r), 0.0
    if kappa == 0:
        sol = pair_exact(PairProblem(params, params, mu, mu))
        return sol.beta_i, sol.correlation

    pair_kwargs = dict(
        tolerance=pair_tolerance,
        points_per_efold=pair_points_per_efold,
        max_nodes=pair_max_nodes,
    )
    space = _PairWorkspace()

    def _solve(beta_ext: float) -> PairSolution:
        drive = tuple(
            [DriveTriple(beta_ext, mu, 0.0)] * int(kappa)
            + [DriveTriple(beta_ext, 0.0, mu)] * int(kappa)
        )
        problem = PairProblem(params, params, mu, mu, drive=drive)
        return space.solve(problem, **pair_kwargs)

    def _excess(beta_ext: float):
        sol = _solve(beta_ext)
        return 0.5 * (sol.beta_i + sol.beta_j) - beta_ext, sol

    # secant iteration on the excess map F(beta) - beta; the damped sweep
    # is the fallback when a secant step misbehaves
    beta_prev = float(r)
    f_prev, sol = _excess(beta_prev)
    beta = beta_prev + damping * f_prev
    for _ in range(max_iter):
        f, sol = _excess(beta)
        if abs(f) <= tolerance:
            return beta, sol.correlation
        denom = f - f_prev
        if denom != 0.0:
            step = -f * (beta - beta_prev) / denom
        else:
            step = damping * f
        candidate = beta + step
        if not (candidate > 0) or abs(step) > 10.0 * (abs(f) + abs(f_prev)):
            candidate = beta + damping * f
        beta_prev, f_prev = beta, f
        beta = candidate
    raise NotConverged(
        f"symmetric consistency loop did not reach {tolerance}", partial=(beta, sol)
    )
