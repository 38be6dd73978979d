"""Solver for the coupled boundary-function integral system of a neuron
pair under Poisson bombardment, plus the exact closed form for the
isolated pair.

The stationary pair law is characterized by two boundary functions
h_i, h_j on (-inf, 0] satisfying a coupled homogeneous system of
second-kind integral equations

    h_i(z) = h_j(0) e^(r_i z) - int_{-inf}^z Q_ij(z,u) h_i(u) du
                               - int_{-inf}^0 R_ij(z,u) h_j(u) du
    h_j(z) = h_i(0) e^(r_j z) - int_{-inf}^z Q_ji(z,u) h_j(u) du
                               - int_{-inf}^0 R_ji(z,u) h_i(u) du

together with the normalization

    int K_ij(0,u) h_i(u) du + int K_ji(0,u) h_j(u) du = 1 ,

where the kernels are the no-relaxation closed forms of
:mod:`lglpair.pairkernel`.  The stationary rates are the boundary values
beta_i = h_j(0), beta_j = h_i(0); second moments follow from the rate
identity E[lambda_i^2] = r_i beta_i + sum_s mu_is beta_s, and the cross
moment E[lambda_i lambda_j] = h_i'(0) from the z-derivative of the first
equation at 0:

    h'_i(0) = beta_i r_i + beta_j r_j
              - int dQ_ij(0,u) h_i(u) du - int dR_ij(0,u) h_j(u) du .

The solver runs the normalized fixed-point sweep: apply the linear map,
divide by the normalization integral, repeat; this is a power iteration
whose dominant eigenvalue is 1 up to discretization error, reported as
``normalization_residual``.

Without external drive the system decouples into rank-one kernels, which
the solver exploits (no kernel matrices are materialized), and the fixed
point is known in closed form via the lower incomplete gamma function;
see :func:`pair_exact`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DriveNotEmpty,
    NegativeVariance,
    NonFiniteValue,
    NonPositiveNormalization,
    RelaxationUnsupported,
    ValidationError,
)
from .model import PairProblem
from .numerics import (
    FixedPointReport,
    Grid,
    log_lower_incomplete_gamma,
    prefix_weight_matrix,
    uniform_grid,
)
from .pairkernel import (
    KernelContext,
    kernel_dQ0,
    kernel_dR0,
    kernel_K0,
    kernel_Q,
    kernel_R,
)

__all__ = [
    "BoundaryFunction",
    "PairSolution",
    "default_grid",
    "fredholm_step",
    "normalization_integral",
    "solve_pair",
    "pair_exact",
    "pair_moments",
]


@dataclass(frozen=True)
class BoundaryFunction:
    """A boundary function sampled on a grid over (-inf, 0].

    At a converged solution the values are positive and nondecreasing in z
    (they are intensity-weighted moment transforms); transient iterates
    may violate this, so nothing is enforced here.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.nodes.shape:
            raise ValidationError("boundary values do not match the grid")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def at_zero(self) -> float:
        return float(self.values[-1])

    def on_grid(self, grid: Grid) -> "BoundaryFunction":
        """Resample onto another grid by linear interpolation (flat tails)."""
        if grid is self.grid or (
            len(grid.nodes) == len(self.grid.nodes)
            and np.array_equal(grid.nodes, self.grid.nodes)
        ):
            return BoundaryFunction(grid, self.values)
        vals = np.interp(grid.nodes, self.grid.nodes, self.values)
        return BoundaryFunction(grid, vals)


@dataclass(frozen=True)
class PairSolution:
    """Converged stationary description of a driven pair."""

    beta_i: float
    beta_j: float
    second_moment_i: float
    second_moment_j: float
    cross_moment: float
    correlation: float
    h_i: BoundaryFunction
    h_j: BoundaryFunction
    report: FixedPointReport
    normalization_residual: float
    cross_moment_swapped: float

    @property
    def covariance(self) -> float:
        return self.cross_moment - self.beta_i * self.beta_j

    @property
    def variance_i(self) -> float:
        return self.second_moment_i - self.beta_i**2

    @property
    def variance_j(self) -> float:
        return self.second_moment_j - self.beta_j**2


def default_grid(
    problem: PairProblem,
    points_per_efold: float = 16.0,
    max_nodes: int = 3000,
    min_nodes: int = 200,
    tail_tolerance: float = 1e-12,
) -> Grid:
    """Grid sized to the pair's kernel scales.

    The truncation point is where the slowest kernel-weighted integrand
    (decay r_i + r_j, inflated by sum beta_k / S_k from the drive terms)
    falls below ``tail_tolerance``; the density resolves the stiffest
    exponential rate with ``points_per_efold`` nodes per e-folding.
    """
    r_i, r_j = problem.params_i.r, problem.params_j.r
    decay = r_i + r_j
    if decay <= 0:
        raise ValidationError("pair grid needs r_i + r_j > 0")
    rates = [t.rate for t in problem.drive]
    inflation = sum(
        t.rate / (t.weight_i + t.weight_j)
        for t in problem.drive
        if t.rate > 0 and t.weight_i + t.weight_j > 0
    )
    # a weakly coupled pair is ill-conditioned (the two normalization
    # modes nearly merge), amplifying truncation error by 1/coupling;
    # compensate with a deeper tail
    coupling = problem.mu_ij + problem.mu_ji
    coupling += sum(
        t.rate for t in problem.drive if t.weight_i > 0 and t.weight_j > 0
    )
    gap = min(1.0, max(coupling, 1e-3))
    z_min = -(
        math.log(1.0 / tail_tolerance) + inflation + math.log(1.0 / gap)
    ) / decay
    stiff = r_i + r_j + max(problem.mu_ij, problem.mu_ji) + sum(rates)
    n = int(min(max_nodes, max(min_nodes, math.ceil(-z_min * points_per_efold * stiff))))
    return uniform_grid(z_min, n)


class _DenseOperator:
    """Kernel matrices with quadrature weights folded in, built once per
    (drive rates, grid); each sweep is then four mat-vecs."""

    def __init__(self, ctx: KernelContext, grid: Grid):
        self.grid = grid
        z = grid.nodes
        w = grid.weights
        swap = ctx.swapped()
        Z = z[:, None]
        U = z[None, :]
        # clamp u to <= z for the prefix kernels: entries above the
        # diagonal meet zero weights, clamping just keeps them finite
        Uc = np.minimum(U, Z)
        W = prefix_weight_matrix(grid)
        self.A_ii = kernel_Q(ctx, Z, Uc) * W
        self.A_jj = kernel_Q(swap, Z, Uc) * W
        self.A_ij = kernel_R(ctx, Z, U) * w[None, :]
        self.A_ji = kernel_R(swap, Z, U) * w[None, :]
        self.wK = w * kernel_K0(ctx, z)
        self.wM = w * kernel_K0(swap, z)
        self.k_i = np.exp(ctx.r_i * z)
        self.k_j = np.exp(ctx.r_j * z)
        self.wdQ_i = w * kernel_dQ0(ctx, z)
        self.wdR_i = w * kernel_dR0(ctx, z)
        self.wdQ_j = w * kernel_dQ0(swap, z)
        self.wdR_j = w * kernel_dR0(swap, z)
        self.r_i, self.r_j = ctx.r_i, ctx.r_j

    def apply(self, hi, hj):
        beta_i, beta_j = hj[-1], hi[-1]
        li = beta_i * self.k_i - self.A_ii @ hi - self.A_ij @ hj
        lj = beta_j * self.k_j - self.A_jj @ hj - self.A_ji @ hi
        return li, lj

    def norm(self, hi, hj) -> float:
        return float(self.wK @ hi + self.wM @ hj)

    def cross_moments(self, hi, hj):
        beta_i, beta_j = hj[-1], hi[-1]
        base = beta_i * self.r_i + beta_j * self.r_j
        c_ij = base - self.wdQ_i @ hi - self.wdR_i @ hj
        c_ji = base - self.wdQ_j @ hj - self.wdR_j @ hi
        return float(c_ij), float(c_ji)


class _SeparableOperator:
    """No-drive specialization: all kernels are rank one, so only the
    shared prefix-weight matrix is materialized."""

    def __init__(self, ctx: KernelContext, grid: Grid):
        self.grid = grid
        z = grid.nodes
        w = grid.weights
        r_i, r_j = ctx.r_i, ctx.r_j
        mu_ij, mu_ji = ctx.mu_ij, ctx.mu_ji
        self.W = prefix_weight_matrix(grid)
        self.k_i = np.exp(r_i * z)
        self.k_j = np.exp(r_j * z)
        # Q_ij(z,u) = -r_j e^(-r_j z) e^((r_j+mu_ij) u); R_ij = r_i k_i(z) e^((r_i+mu_ji) u)
        self.qrow_i = np.exp((r_j + mu_ij) * z)
        self.qrow_j = np.exp((r_i + mu_ji) * z)
        self.qcol_i = r_j * np.exp(-r_j * z)
        self.qcol_j = r_i * np.exp(-r_i * z)
        self.wK = w * self.qrow_i
        self.wM = w * self.qrow_j
        self.wdQ_i = w * r_j * r_j * self.qrow_i
        self.wdR_i = w * r_i * r_i * self.qrow_j
        self.r_i, self.r_j = r_i, r_j

    def apply(self, hi, hj):
        beta_i, beta_j = hj[-1], hi[-1]
        li = (
            beta_i * self.k_i
            + self.qcol_i * (self.W @ (self.qrow_i * hi))
            - self.r_i * self.k_i * float(self.wM @ hj)
        )
        lj = (
            beta_j * self.k_j
            + self.qcol_j * (self.W @ (self.qrow_j * hj))
            - self.r_j * self.k_j * float(self.wK @ hi)
        )
        return li, lj

    def norm(self, hi, hj) -> float:
        return float(self.wK @ hi + self.wM @ hj)

    def cross_moments(self, hi, hj):
        beta_i, beta_j = hj[-1], hi[-1]
        base = beta_i * self.r_i + beta_j * self.r_j
        c = base - self.wdQ_i @ hi - self.wdR_i @ hj
        return float(c), float(c)


def _make_operator(ctx: KernelContext, grid: Grid):
    if ctx.n_drives == 0 or float(np.sum(ctx.rates)) == 0.0:
        return _SeparableOperator(ctx, grid)
    return _DenseOperator(ctx, grid)


def normalization_integral(
    ctx: KernelContext, h_i: BoundaryFunction, h_j: BoundaryFunction
) -> float:
    """The normalization functional evaluated on a candidate (h_i, h_j)."""
    grid = h_i.grid
    w = grid.weights
    return float(
        w @ (kernel_K0(ctx, grid.nodes) * h_i.values)
        + w @ (kernel_K0(ctx.swapped(), grid.nodes) * h_j.values)
    )


def fredholm_step(ctx: KernelContext, h_i: BoundaryFunction, h_j: BoundaryFunction):
    """One application of the coupled integral map, then renormalization.

    The rates feeding the map are read off the current iterate
    (beta_i = h_j(0), beta_j = h_i(0)).
    """
    if not np.array_equal(h_i.grid.nodes, h_j.grid.nodes):
        raise ValidationError("both boundary functions must share one grid")
    op = _make_operator(ctx, h_i.grid)
    li, lj = op.apply(h_i.values, h_j.values)
    if not (np.all(np.isfinite(li)) and np.all(np.isfinite(lj))):
        raise NonFiniteValue("integral map produced non-finite values")
    norm = op.norm(li, lj)
    if not (norm > 0) or not math.isfinite(norm):
        raise NonPositiveNormalization(f"normalization integral is {norm}")
    return (
        BoundaryFunction(h_i.grid, li / norm),
        BoundaryFunction(h_j.grid, lj / norm),
    )


def pair_moments(problem: PairProblem, beta_i: float, beta_j: float, cross_moment: float):
    """Second moments, cross moment and Pearson correlation from the rates.

    E[lambda_i^2] = r_i beta_i + mu_ij beta_j + sum_k w_ik beta_k (the
    relaxation term vanishes in the no-relaxation regime).  A variance can
    only evaluate negative through numerical failure, which is surfaced as
    :class:`NegativeVariance`; an exactly-zero variance (isolated neuron
    with constant intensity) yields correlation 0 by convention.
    """
    drive_i = sum(t.rate * t.weight_i for t in problem.drive)
    drive_j = sum(t.rate * t.weight_j for t in problem.drive)
    m2_i = problem.params_i.r * beta_i + problem.mu_ij * beta_j + drive_i
    m2_j = problem.params_j.r * beta_j + problem.mu_ji * beta_i + drive_j
    var_i = m2_i - beta_i**2
    var_j = m2_j - beta_j**2
    cov = cross_moment - beta_i * beta_j
    eps_i = 1e-9 * max(1.0, beta_i**2)
    eps_j = 1e-9 * max(1.0, beta_j**2)
    if var_i < -eps_i or var_j < -eps_j:
        raise NegativeVariance(
            f"stationary variance evaluated negative (var_i={var_i}, var_j={var_j})"
        )
    if var_i <= 0.0 or var_j <= 0.0:
        # a constant intensity (isolated, undriven neuron); rounding can
        # leave the exact zero a hair negative
        rho = 0.0
    else:
        rho = cov / math.sqrt(var_i * var_j)
    return m2_i, m2_j, cross_moment, rho


def _initial_guess(problem: PairProblem, grid: Grid):
    # undriven, non-interacting stationary forms: h_i0 = r_j e^(b_i z)
    hi = problem.params_j.r * np.exp(problem.params_i.b * grid.nodes)
    hj = problem.params_i.r * np.exp(problem.params_j.b * grid.nodes)
    return hi, hj


def solve_pair(
    problem: PairProblem,
    grid: Grid = None,
    tolerance: float = 1e-10,
    max_iter: int = 10000,
    damping: float = 1.0,
    points_per_efold: float = 16.0,
    max_nodes: int = 3000,
    tail_tolerance: float = 1e-12,
    initial=None,
) -> PairSolution:
    """Iterate the normalized integral map to its fixed point and extract
    rates and second-order statistics.

    The residual is the sup-norm change of (h_i, h_j) plus the rate change
    between sweeps.  On iteration exhaustion the best iterate is returned
    with ``report.converged`` False rather than raising.  ``initial`` may
    carry a warm start as a pair of :class:`BoundaryFunction`.
    """
    ctx = KernelContext.from_problem(problem)
    if grid is None:
        grid = default_grid(
            problem,
            points_per_efold=points_per_efold,
            max_nodes=max_nodes,
            tail_tolerance=tail_tolerance,
        )
    op = _make_operator(ctx, grid)
    if initial is not None:
        hi = initial[0].on_grid(grid).values.copy()
        hj = initial[1].on_grid(grid).values.copy()
    else:
        hi, hj = _initial_guess(problem, grid)
    beta_i, beta_j = hi[-1], hj[-1]  # placeholders before the first sweep
    residual = math.inf
    prev_residual = math.inf
    best = (math.inf, hi, hj)
    iterations = 0
    converged = False
    history = []
    for iterations in range(1, max_iter + 1):
        li, lj = op.apply(hi, hj)
        if not (np.all(np.isfinite(li)) and np.all(np.isfinite(lj))):
            raise NonFiniteValue(
                f"integral map produced non-finite values at iteration {iterations}"
            )
        norm = op.norm(li, lj)
        if not (norm > 0) or not math.isfinite(norm):
            raise NonPositiveNormalization(f"normalization integral is {norm}")
        li /= norm
        lj /= norm
        if damping != 1.0:
            li = (1.0 - damping) * hi + damping * li
            lj = (1.0 - damping) * hj + damping * lj
        res_h = max(np.max(np.abs(li - hi)), np.max(np.abs(lj - hj)))
        res_b = max(abs(lj[-1] - beta_i), abs(li[-1] - beta_j))
        residual = float(res_h + res_b)
        hi, hj = li, lj
        beta_i, beta_j = hj[-1], hi[-1]
        if residual < best[0]:
            best = (residual, hi, hj)
        # geometric-tail error estimate: with contraction ratio q, the
        # distance to the fixed point is about residual * q / (1 - q)
        ratio = residual / prev_residual if prev_residual > 0 else 1.0
        prev_residual = residual
        if residual <= tolerance and (
            ratio >= 1.0 or residual * ratio / (1.0 - ratio) <= tolerance
        ):
            converged = True
            break
        # near-degenerate problems contract at 1 - O(coupling); jump the
        # geometric tail when a steady slow contraction is observed
        if ratio > 0.9:
            history.append(np.concatenate((hi, hj)))
            if len(history) > 3:
                history.pop(0)
            if len(history) == 3:
                d1 = history[1] - history[0]
                d2 = history[2] - history[1]
                n1 = float(np.linalg.norm(d1))
                n2 = float(np.linalg.norm(d2))
                if n1 > 0 and n2 > 0:
                    q = n2 / n1
                    cosine = float(d1 @ d2) / (n1 * n2)
                    if 0.5 < q < 0.99999 and cosine > 0.99:
                        jumped = history[2] + d2 * (q / (1.0 - q))
                        hi = jumped[: len(hi)].copy()
                        hj = jumped[len(hi):].copy()
                        beta_i, beta_j = hj[-1], hi[-1]
                        history.clear()
                        prev_residual = math.inf
        else:
            history.clear()
    if not converged:
        _, hi, hj = best
        residual = best[0]
    # pin the normalization exactly; the pre-rescale defect is the honest
    # discretization diagnostic
    norm_final = op.norm(hi, hj)
    if not (norm_final > 0) or not math.isfinite(norm_final):
        raise NonPositiveNormalization(f"normalization integral is {norm_final}")
    hi = hi / norm_final
    hj = hj / norm_final
    beta_i, beta_j = float(hj[-1]), float(hi[-1])
    cross_ij, cross_ji = op.cross_moments(hi, hj)
    m2_i, m2_j, cross, rho = pair_moments(problem, beta_i, beta_j, cross_ij)
    report = FixedPointReport(
        iterations=iterations,
        final_residual=residual,
        converged=converged,
        damping=damping,
    )
    return PairSolution(
        beta_i=beta_i,
        beta_j=beta_j,
        second_moment_i=m2_i,
        second_moment_j=m2_j,
        cross_moment=cross,
        correlation=rho,
        h_i=BoundaryFunction(grid, hi),
        h_j=BoundaryFunction(grid, hj),
        report=report,
        normalization_residual=abs(norm_final - 1.0),
        cross_moment_swapped=cross_ji,
    )


# ----------------------------------------------------------------------
# Exact isolated pair
# ----------------------------------------------------------------------


def _tail_integral(r_own: float, r_other: float, mu: float) -> float:
    """A = int_{-inf}^0 exp(r_own u + int_u^0 r_other (e^(mu v) - 1) dv) du.

    Evaluates through the lower incomplete gamma function; mu -> 0 gives
    the exact limit 1/r_own.  Always lies in (0, 1/r_own].
    """
    if mu == 0.0:
        return 1.0 / r_own
    s = (r_own + r_other) / mu
    x = r_other / mu
    log_a = (
        x
        - math.log(mu)
        + s * math.log(mu / r_other)
        + log_lower_incomplete_gamma(s, x)
    )
    return math.exp(log_a)


def _exact_h_values(
    r_own: float, r_other: float, mu: float, scale: float, z: np.ndarray
) -> np.ndarray:
    """scale * int_{-inf}^z exp(r_own u + int_u^z r_other (e^(mu v)-1) dv) du."""
    if mu == 0.0:
        # the partner contributes nothing: h = scale e^(r_own z) / r_own
        return scale * np.exp(r_own * z) / r_own
    s = (r_own + r_other) / mu
    out = np.empty_like(z)
    for idx, zz in enumerate(z):
        x = r_other * math.exp(mu * zz) / mu
        log_v = (
            x
            - r_other * zz
            - math.log(mu)
            + s * math.log(mu / r_other)
            + log_lower_incomplete_gamma(s, x)
        )
        out[idx] = math.exp(log_v)
    return scale * out


def pair_exact(
    problem: PairProblem,
    grid: Grid = None,
    points_per_efold: float = 16.0,
    max_nodes: int = 3000,
    tail_tolerance: float = 1e-12,
) -> PairSolution:
    """Closed-form stationary solution of an isolated no-relaxation pair.

    With A_i, A_j the tail integrals above and D = A_i r_i + A_j r_j - 1,

        beta_i = A_j r_i r_j / D ,   beta_j = A_i r_i r_j / D ,
        E[lambda_i lambda_j] = r_i r_j / D ,

    and the boundary function h_i(z) is D^-1 r_i r_j times the tail
    integral with moving endpoint z.  The resulting Pearson correlation is
    nonpositive: mutual excitation with resets anticorrelates the pair.
    """
    if not problem.no_relaxation:
        raise RelaxationUnsupported("exact path requires no relaxation")
    effective = [
        t for t in problem.drive if t.rate > 0 and (t.weight_i + t.weight_j) > 0
    ]
    if effective:
        raise DriveNotEmpty(
            "closed-form pair solution requires an isolated pair (empty drive)"
        )
    r_i, r_j = problem.params_i.r, problem.params_j.r
    if r_i <= 0 or r_j <= 0:
        raise ValidationError("closed-form pair solution requires positive resets")
    A_i = _tail_integral(r_i, r_j, problem.mu_ij)
    A_j = _tail_integral(r_j, r_i, problem.mu_ji)
    denom = A_i * r_i + A_j * r_j - 1.0
    if not (denom > 0):
        raise NonPositiveNormalization(
            f"rate denominator A_i r_i + A_j r_j - 1 = {denom} is not positive"
        )
    beta_i = A_j * r_i * r_j / denom
    beta_j = A_i * r_i * r_j / denom
    cross = r_i * r_j / denom
    if grid is None:
        grid = default_grid(
            problem,
            points_per_efold=points_per_efold,
            max_nodes=max_nodes,
            tail_tolerance=tail_tolerance,
        )
    hi = _exact_h_values(r_i, r_j, problem.mu_ij, cross, grid.nodes)
    hj = _exact_h_values(r_j, r_i, problem.mu_ji, cross, grid.nodes)
    h_i = BoundaryFunction(grid, hi)
    h_j = BoundaryFunction(grid, hj)
    ctx = KernelContext.from_problem(problem)
    norm_residual = abs(normalization_integral(ctx, h_i, h_j) - 1.0)
    m2_i, m2_j, cross, rho = pair_moments(problem, beta_i, beta_j, cross)
    report = FixedPointReport(
        iterations=0, final_residual=0.0, converged=True, damping=1.0
    )
    return PairSolution(
        beta_i=beta_i,
        beta_j=beta_j,
        second_moment_i=m2_i,
        second_moment_j=m2_j,
        cross_moment=cross,
        correlation=rho,
        h_i=h_i,
        h_j=h_j,
        report=report,
        normalization_residual=norm_residual,
        cross_moment_swapped=cross,
    )
