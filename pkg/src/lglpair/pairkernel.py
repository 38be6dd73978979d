"""Closed-form kernels of the pair boundary-function integral system, in
the no-relaxation regime.

Without relaxation the intensities are pure jump processes and every
kernel of the coupled integral system reduces to elementary exponentials.
With per-stream weights (w_i, w_j) into the two neurons, S = w_i + w_j,
and stream rates beta, the auxiliary functions are

    c(z, u) = e^(z w_i) (1 - e^((u - z) S)) / S     (limit e^(z w_i) (z - u))
    d(z, u) = e^(z w_i) (1 - e^(u S)) / S           (limit e^(z w_i) (-u))

and the kernels for orientation (i, j) read

    K(z, u)  = exp(r_j (u - z) + mu_ij u + sum_k beta_k (u - z + c_k(z, u)))
    Q(z, u)  = -(r_j + sum_k beta_k w_jk c_k(z, u)) K(z, u)
    R(z, u)  = (r_i + sum_k beta_k (1 - e^(z w_ik) + w_ik d_k(z, u)))
               * exp(r_i (u + z) + mu_ji u + sum_k beta_k (u + d_k(z, u)))

K(0, u) is the normalization kernel paired with h_i; its mirror partner
paired with h_j is K of the swapped orientation.  Analytic z-derivatives
are hand-derived from the products above and are gated by the central
finite-difference tests rather than trusted blindly.

All evaluators broadcast over numpy arrays of z and u.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RelaxationUnsupported
from .model import PairProblem

__all__ = [
    "SMALL_DENOMINATOR",
    "KernelContext",
    "aux_c",
    "aux_d",
    "kernel_K0",
    "kernel_M0",
    "kernel_Q",
    "kernel_R",
    "kernel_dQ",
    "kernel_dR",
    "kernel_dQ0",
    "kernel_dR0",
]

# below this, (1 - e^(x S))/S switches to its first-order limit -x;
# the neglected correction is O(S x^2), invisible at this threshold
SMALL_DENOMINATOR = 1e-10


@dataclass(frozen=True)
class KernelContext:
    """Precomputed per-drive constants for one orientation of a pair.

    Only no-relaxation problems are admitted: the relaxation-case kernels
    involve exponential integrals and are out of scope for the solver.
    """

    problem: PairProblem
    r_i: float
    r_j: float
    mu_ij: float
    mu_ji: float
    rates: np.ndarray
    w_i: np.ndarray
    w_j: np.ndarray

    @classmethod
    def from_problem(cls, problem: PairProblem) -> "KernelContext":
        if not problem.no_relaxation:
            raise RelaxationUnsupported(
                "kernel closed forms require both neurons tagged no-relaxation"
            )
        rates = np.array([t.rate for t in problem.drive], dtype=float)
        w_i = np.array([t.weight_i for t in problem.drive], dtype=float)
        w_j = np.array([t.weight_j for t in problem.drive], dtype=float)
        for a in (rates, w_i, w_j):
            a.setflags(write=False)
        return cls(
            problem=problem,
            r_i=problem.params_i.r,
            r_j=problem.params_j.r,
            mu_ij=problem.mu_ij,
            mu_ji=problem.mu_ji,
            rates=rates,
            w_i=w_i,
            w_j=w_j,
        )

    @property
    def n_drives(self) -> int:
        return len(self.rates)

    def swapped(self) -> "KernelContext":
        return KernelContext.from_problem(self.problem.swapped())


def _expm1_ratio(x, S: float):
    """(1 - e^(x S)) / S, with the S -> 0 limit -x."""
    if S < SMALL_DENOMINATOR:
        return -np.asarray(x, dtype=float)
    return -np.expm1(np.asarray(x, dtype=float) * S) / S


def aux_c(ctx: KernelContext, k: int, z, u):
    """Auxiliary c for drive stream k at (z, u); total on its domain."""
    wi, wj = ctx.w_i[k], ctx.w_j[k]
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.exp(z * wi) * _expm1_ratio(u - z, wi + wj)


def aux_d(ctx: KernelContext, k: int, z, u):
    """Auxiliary d for drive stream k at (z, u)."""
    wi, wj = ctx.w_i[k], ctx.w_j[k]
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.exp(z * wi) * _expm1_ratio(u, wi + wj)


def kernel_K0(ctx: KernelContext, u):
    """Normalization kernel K(0, u) paired with h_i."""
    u = np.asarray(u, dtype=float)
    expo = (ctx.mu_ij + ctx.r_j) * u
    for k in range(ctx.n_drives):
        expo = expo + ctx.rates[k] * (u + aux_c(ctx, k, 0.0, u))
    return np.exp(expo)


def kernel_M0(ctx: KernelContext, u):
    """Normalization kernel paired with h_j: the swapped-orientation K(0, u)."""
    return kernel_K0(ctx.swapped(), u)


def kernel_Q(ctx: KernelContext, z, u):
    """Prefix kernel acting on the pair's own boundary function."""
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    expo = ctx.r_j * (u - z) + ctx.mu_ij * u
    coef = np.full(np.broadcast_shapes(z.shape, u.shape), ctx.r_j)
    for k in range(ctx.n_drives):
        c = aux_c(ctx, k, z, u)
        expo = expo + ctx.rates[k] * (u - z + c)
        coef = coef + ctx.rates[k] * ctx.w_j[k] * c
    return -coef * np.exp(expo)


def kernel_R(ctx: KernelContext, z, u):
    """Full-range kernel coupling to the partner's boundary function."""
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    expo = ctx.r_i * (u + z) + ctx.mu_ji * u
    coef = np.full(np.broadcast_shapes(z.shape, u.shape), ctx.r_i)
    for k in range(ctx.n_drives):
        d = aux_d(ctx, k, z, u)
        expo = expo + ctx.rates[k] * (u + d)
        coef = coef + ctx.rates[k] * (1.0 - np.exp(z * ctx.w_i[k]) + ctx.w_i[k] * d)
    return coef * np.exp(expo)


def kernel_dQ(ctx: KernelContext, z, u):
    """Analytic d/dz of kernel_Q.

    With q = r_j + sum beta w_j c and dc/dz = w_i c + e^(w_i u + w_j (u - z)),
    dQ/dz = -K [ sum beta w_j dc + q (-r_j + sum beta (dc - 1)) ].
    """
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    expo = ctx.r_j * (u - z) + ctx.mu_ij * u
    shape = np.broadcast_shapes(z.shape, u.shape)
    q = np.full(shape, ctx.r_j)
    sum_wdc = np.zeros(shape)
    sum_dc1 = np.zeros(shape)
    for k in range(ctx.n_drives):
        wi, wj, beta = ctx.w_i[k], ctx.w_j[k], ctx.rates[k]
        c = aux_c(ctx, k, z, u)
        dc = wi * c + np.exp(wi * u + wj * (u - z))
        expo = expo + beta * (u - z + c)
        q = q + beta * wj * c
        sum_wdc = sum_wdc + beta * wj * dc
        sum_dc1 = sum_dc1 + beta * (dc - 1.0)
    return -np.exp(expo) * (sum_wdc + q * (-ctx.r_j + sum_dc1))


def kernel_dR(ctx: KernelContext, z, u):
    """Analytic d/dz of kernel_R.

    With p = r_i + sum beta (1 - e^(w_i z) + w_i d) and dd/dz = w_i d,
    dR/dz = M [ sum beta w_i (w_i d - e^(w_i z)) + p (r_i + sum beta w_i d) ].
    """
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    expo = ctx.r_i * (u + z) + ctx.mu_ji * u
    shape = np.broadcast_shapes(z.shape, u.shape)
    p = np.full(shape, ctx.r_i)
    sum_wd = np.zeros(shape)
    sum_dp = np.zeros(shape)
    for k in range(ctx.n_drives):
        wi, beta = ctx.w_i[k], ctx.rates[k]
        d = aux_d(ctx, k, z, u)
        ez = np.exp(wi * z)
        expo = expo + beta * (u + d)
        p = p + beta * (1.0 - ez + wi * d)
        sum_wd = sum_wd + beta * wi * d
        sum_dp = sum_dp + beta * wi * (wi * d - ez)
    return np.exp(expo) * (sum_dp + p * (ctx.r_i + sum_wd))


def kernel_dQ0(ctx: KernelContext, u):
    """d/dz of kernel_Q evaluated on the z = 0 line."""
    return kernel_dQ(ctx, 0.0, u)


def kernel_dR0(ctx: KernelContext, u):
    """d/dz of kernel_R evaluated on the z = 0 line."""
    return kernel_dR(ctx, 0.0, u)
