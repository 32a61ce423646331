"""Brute-force validator: piecewise-constant controls and SVD water-filling.

The control is held constant on ``N`` steps of length ``T/N``; the map from
the stacked samples to ``y(T)`` is then an ordinary matrix and its capacity
follows from the singular values after noise whitening. Only the noise
covariance is taken from :mod:`control_capacity.gramians`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ContractError
from .gramians import gramians_at, regularized_noise
from .system import as_system

__all__ = ["DiscreteChannel", "OracleResult", "discretize", "oracle_capacity", "parallel_water_fill"]


@dataclass(frozen=True, eq=False)
class DiscreteChannel:
    """``y(T) = H u + n`` with ``u`` the stacked ``N`` control samples.

    ``H[:, k*p:(k+1)*p]`` is the response to the sample held on step ``k``.
    """

    N: int
    dt: float
    H: np.ndarray
    noise: np.ndarray
    ridge: float = 0.0


@dataclass(frozen=True)
class OracleResult:
    nats: float
    bits: float
    half_factor_applied: bool
    N: int


def discretize(system, T, N) -> DiscreteChannel:
    """Zero-order-hold channel of ``system`` over ``[0, T]`` with ``N`` steps."""
    sys_ = as_system(system)
    N = int(N)
    T = float(T)
    if N < 1:
        raise ContractError("N must be at least 1")
    if not (T > 0 and math.isfinite(T)):
        raise ContractError("T must be positive and finite")
    n, p = sys_.n, sys_.p
    dt = T / N
    M = np.zeros((n + p, n + p))
    M[:n, :n] = sys_.A
    M[:n, n:] = sys_.B
    E = sla.expm(M * dt)
    Phi, Gam = E[:n, :n], E[:n, n:]
    blocks = [None] * N
    X = Gam
    for k in range(N - 1, -1, -1):
        blocks[k] = sys_.C @ X
        X = Phi @ X
    H = np.hstack(blocks)
    noise, ridge = regularized_noise(gramians_at(sys_, T), warn=False)
    return DiscreteChannel(N, dt, H, noise, ridge)


def parallel_water_fill(gains, P):
    """Allocate ``P`` over parallel channels ``ln(1 + s_i g_i)``.

    Sorts gains in decreasing order and takes the largest active set whose
    water level ``mu = (P + sum 1/g) / k`` stays above every ``1/g_i`` in it.
    """
    g = np.asarray(gains, dtype=float)
    s = np.zeros_like(g)
    if P <= 0 or g.size == 0:
        return s
    order = np.argsort(-g, kind="stable")
    gs = g[order]
    pos = gs > 0
    gs = gs[pos]
    inv = 1.0 / gs
    mu = 0.0
    k_used = 0
    for k in range(1, gs.size + 1):
        level = (P + inv[:k].sum()) / k
        if level > inv[k - 1]:
            mu, k_used = level, k
        else:
            break
    alloc = np.zeros(gs.size)
    alloc[:k_used] = mu - inv[:k_used]
    full = np.zeros(g.size)
    full[np.flatnonzero(pos)] = alloc
    s[order] = full
    return s


def oracle_capacity(channel: DiscreteChannel, P, half_factor: bool = True) -> OracleResult:
    """Capacity of the discrete channel under ``sum_k |u_k|^2 dt <= P``.

    With ``v = sqrt(dt) u`` the budget becomes ``|v|^2 <= P`` and the map
    ``H / sqrt(dt)``; after whitening by the noise Cholesky factor the
    capacity is water-filling over the squared singular values.
    """
    P = float(P)
    if P < 0:
        raise ContractError("P must be non-negative")
    scale = 0.5 if half_factor else 1.0
    if P == 0:
        return OracleResult(0.0, 0.0, half_factor, channel.N)
    L = np.linalg.cholesky(channel.noise)
    Hw = sla.solve_triangular(L, channel.H, lower=True) / math.sqrt(channel.dt)
    sv = np.linalg.svd(Hw, compute_uv=False)
    g = sv**2
    s = parallel_water_fill(g, P)
    nats = scale * float(np.sum(np.log1p(s * g)))
    return OracleResult(nats, nats / math.log(2.0), half_factor, channel.N)
