"""Capacity of the control-to-output channel by iterative water-filling.

The objective is ``ln|N + sum_k sigma_k d_k d_k'| - ln|N|`` where ``N`` is the
output noise covariance and ``d_k = C z_k`` the output image of mode ``k``.
Each sweep recomputes every mode gain against the covariance conditioned on
that mode, then re-solves the waterline so the variances sum to ``P``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ContractError, NegligibleModeError
from .gramians import (
    GramianBundle,
    ModeSet,
    decompose,
    extract_modes,
    gramians_at,
    gramians_at_infinity,
    input_groups,
    modes_from_blocks,
    regularized_noise,
)
from .linalg import finite_gramian, mat_exp, symmetrize
from .system import as_system, validate

__all__ = [
    "SolverOptions",
    "Allocation",
    "CapacityResult",
    "ControlRealization",
    "ZeroCapacitySignal",
    "mutual_information",
    "mode_gain",
    "waterline_solve",
    "iterative_water_filling",
    "water_fill_directions",
    "capacity",
    "zero_capacity_guard",
    "chain_rule_audit",
    "kkt_residual",
    "synthesize_controls",
]

LN2 = math.log(2.0)


class ZeroCapacitySignal(CapacityError):
    """Every mode gain vanishes, so no allocation carries information."""


@dataclass(frozen=True)
class SolverOptions:
    """Knobs of :func:`capacity`.

    half_factor
        Report ``1/2 ln det`` (standard Gaussian mutual information). Set to
        ``False`` for the convention that drops the constant factor.
    inputs
        ``'joint'`` lets the input components be correlated; ``'independent'``
        forces independent components, one mode group per input column.
    decomposition
        ``'whitened'`` picks the rank-one split of each group Gramian that is
        optimal against the current noise; ``'eigen'`` uses the Gramian
        eigenvectors as they are.
    """

    half_factor: bool = True
    inputs: str = "joint"
    decomposition: str = "whitened"
    tol: float = 1e-10
    max_sweeps: int = 10_000
    max_block_rounds: int = 500
    gain_floor: float = 1e-14
    init: tuple | None = None


NO_HALF_FACTOR = SolverOptions(half_factor=False)


@dataclass(frozen=True, eq=False)
class Allocation:
    """Variances ``sigma`` over the modes and the certificate of optimality."""

    sigma: np.ndarray
    waterline: float
    budget: float
    iterations: int
    converged: bool
    kkt_residual: float
    gains: np.ndarray
    objective_history: tuple = ()
    channel: np.ndarray | None = None
    index: np.ndarray | None = None

    @property
    def sigma_map(self) -> dict:
        if self.channel is None:
            return {(k, 0): float(s) for k, s in enumerate(self.sigma)}
        return {(int(i), int(m)): float(s) for i, m, s in zip(self.index, self.channel, self.sigma)}

    @property
    def support(self) -> tuple:
        return tuple(np.flatnonzero(self.sigma > 0).tolist())


@dataclass(frozen=True, eq=False)
class CapacityResult:
    value_nats: float
    value_bits: float
    half_factor_applied: bool
    T: float
    P: float
    contributions: np.ndarray
    allocation: Allocation
    modes: ModeSet | None = None
    bundle: GramianBundle | None = None
    ridge: float = 0.0
    sensor: str = "model"
    zero_forced: bool = False

    @property
    def convention(self) -> str:
        return "half" if self.half_factor_applied else "logdet"

    def to_dict(self) -> dict:
        a = self.allocation
        return {
            "capacity_bits": self.value_bits,
            "capacity_nats": self.value_nats,
            "half_factor_applied": self.half_factor_applied,
            "T": self.T if math.isfinite(self.T) else "inf",
            "P": self.P,
            "kkt_residual": a.kkt_residual,
            "iterations": a.iterations,
            "converged": a.converged,
            "waterline": a.waterline,
            "sensor": self.sensor,
            "ridge": self.ridge,
        }


# --------------------------------------------------------------------------
# primitives


def _logdet_pd(M):
    L = np.linalg.cholesky(M)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def _objective(N, D, sigma):
    return _logdet_pd(symmetrize(N + (D * sigma) @ D.T)) - _logdet_pd(N)


def mode_gain(z, conditional_cov, C=None) -> float:
    """Gain ``(Cz)' S^{-1} (Cz)`` of a mode against a conditional covariance."""
    z = np.asarray(z, dtype=float).ravel()
    S = np.atleast_2d(np.asarray(conditional_cov, dtype=float))
    d = z if C is None else np.asarray(C, dtype=float) @ z
    try:
        L = np.linalg.cholesky(symmetrize(S))
    except np.linalg.LinAlgError as exc:
        raise ContractError("conditional covariance is not positive definite") from exc
    y = np.linalg.solve(L, d)
    return float(y @ y)


def waterline_solve(gains, P):
    """Classic water-filling over independent gains.

    Finds ``lam`` with ``sum max(0, 1/lam - 1/a) = P`` by bisection on the
    water level ``1/lam``, then fixes the level exactly from the active set.

    Returns
    -------
    lam : float
    sigma : ndarray
    """
    a = np.asarray(gains, dtype=float)
    P = float(P)
    if not P > 0:
        raise ContractError("P must be positive")
    pos = a > 0
    if not np.any(pos):
        raise ZeroCapacitySignal("all gains are zero")
    inv = np.full(a.shape, np.inf)
    inv[pos] = 1.0 / a[pos]
    lo = float(np.min(inv))
    hi = lo + P
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if np.sum(np.maximum(0.0, mid - inv)) > P:
            hi = mid
        else:
            lo = mid
    active = inv < hi
    level = (P + float(np.sum(inv[active]))) / int(np.sum(active))
    # polish: the bisection bracket fixes the active set, drop any that fell under water
    while True:
        still = active & (inv < level)
        if still.sum() == active.sum():
            break
        active = still
        level = (P + float(np.sum(inv[active]))) / int(np.sum(active))
    sigma = np.where(active, level - inv, 0.0)
    return 1.0 / level, sigma


def _gains(N, D, sigma):
    """Gain of every mode against the covariance with that mode removed."""
    Y = symmetrize(N + (D * sigma) @ D.T)
    L = np.linalg.cholesky(Y)
    X = np.linalg.solve(L, D)
    b = np.sum(X * X, axis=0)
    # Sherman-Morrison: (Y - s d d')^{-1} quadratic form
    return b / (1.0 - sigma * b), b


def kkt_residual(gains, sigma, lam, P) -> float:
    """Largest violation of the water-filling optimality conditions."""
    a = np.asarray(gains)
    s = np.asarray(sigma)
    act = s > 0
    r = 0.0
    if np.any(act):
        r = float(np.max(np.abs(a[act] / (1.0 + s[act] * a[act]) - lam)))
    if np.any(~act):
        r = max(r, float(np.max(np.maximum(0.0, a[~act] - lam))))
    return r


def water_fill_directions(N, D, P, init=None, tol=1e-10, max_sweeps=10_000, gain_floor=1e-14):
    """Iterative water-filling on output directions ``D`` (one per column).

    A sweep computes the gains at the current variances and the
    water-filling target for those gains. The target is accepted when it
    does not lower the objective; otherwise the step is shortened to the
    maximizer along the segment, so the objective never decreases.

    Returns
    -------
    Allocation
    """
    N = symmetrize(np.atleast_2d(np.asarray(N, dtype=float)))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    K = D.shape[1]
    P = float(P)
    if K == 0:
        raise ContractError("no modes to allocate")
    if init is None:
        sigma = np.full(K, P / K)
    else:
        sigma = np.asarray(init, dtype=float).copy()
        if sigma.shape != (K,) or np.any(sigma < 0) or not sigma.sum() > 0:
            raise ContractError("init must be a non-negative vector with positive sum")
        sigma *= P / sigma.sum()
    f = _objective(N, D, sigma)
    history = [f]
    converged = False
    lam = math.nan
    a = np.zeros(K)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        a, _ = _gains(N, D, sigma)
        usable = a > gain_floor
        if not np.any(usable):
            raise ZeroCapacitySignal("every mode gain is below the floor")
        target = np.zeros(K)
        lam, target[usable] = waterline_solve(a[usable], P)
        step = target - sigma
        f_new = _objective(N, D, target)
        if f_new >= f:
            new = target
        else:
            new, f_new = _line_search(N, D, sigma, step)
        delta = float(np.max(np.abs(new - sigma)))
        sigma, f = new, max(f_new, f)
        history.append(f)
        if delta < tol:
            converged = True
            break
    a, _ = _gains(N, D, sigma)
    usable = a > gain_floor
    lam_final, _ = waterline_solve(a[usable], P)
    # the waterline of the final point: mean marginal gain over the support
    act = sigma > 0
    if np.any(act):
        lam = float(np.mean(a[act] / (1.0 + sigma[act] * a[act])))
    else:
        lam = lam_final
    res = kkt_residual(a, sigma, lam, P)
    return Allocation(
        sigma=sigma,
        waterline=lam,
        budget=P,
        iterations=sweeps,
        converged=converged,
        kkt_residual=res,
        gains=a,
        objective_history=tuple(history),
    )


def _line_search(N, D, sigma, step):
    """Maximize the concave objective on ``sigma + t step``, ``t`` in [0, 1]."""
    lo, hi = 0.0, 1.0
    for _ in range(80):
        t = 0.5 * (lo + hi)
        s = sigma + t * step
        _, b = _gains(N, D, s)
        if float(step @ b) > 0:
            lo = t
        else:
            hi = t
    t = lo
    new = np.maximum(sigma + t * step, 0.0)
    return new, _objective(N, D, new)


# --------------------------------------------------------------------------
# operations on bundles and mode sets


def _noise_and_directions(bundle: GramianBundle, modes: ModeSet):
    N, ridge = regularized_noise(bundle)
    return N, bundle.C @ modes.Z, ridge


def _scale(half):
    return 0.5 if half else 1.0


def mutual_information(bundle: GramianBundle, modes: ModeSet, allocation, half_factor: bool = True) -> float:
    """``ln det(N + sum sigma_k C z_k z_k' C') - ln det N`` in nats, times 1/2
    unless ``half_factor`` is False."""
    sigma = _sigma_of(allocation)
    N, D, _ = _noise_and_directions(bundle, modes)
    if sigma.shape != (D.shape[1],):
        raise ContractError("allocation does not match the mode set")
    if not np.any(sigma > 0):
        return 0.0
    return max(0.0, _scale(half_factor) * _objective(N, D, sigma))


def _sigma_of(allocation):
    if isinstance(allocation, Allocation):
        return allocation.sigma
    return np.asarray(allocation, dtype=float)


def iterative_water_filling(bundle: GramianBundle, modes: ModeSet, P, options: SolverOptions = SolverOptions()) -> Allocation:
    """Water-filling over a fixed mode set."""
    if not float(P) > 0:
        raise ContractError("P must be positive")
    if len(modes) == 0:
        raise ContractError("mode set is empty")
    N, D, _ = _noise_and_directions(bundle, modes)
    alloc = water_fill_directions(
        N, D, P, init=options.init, tol=options.tol,
        max_sweeps=options.max_sweeps, gain_floor=options.gain_floor,
    )
    return _label(alloc, modes)


def _label(alloc: Allocation, modes: ModeSet) -> Allocation:
    return Allocation(
        sigma=alloc.sigma, waterline=alloc.waterline, budget=alloc.budget,
        iterations=alloc.iterations, converged=alloc.converged,
        kkt_residual=alloc.kkt_residual, gains=alloc.gains,
        objective_history=alloc.objective_history,
        channel=modes.channel, index=modes.index,
    )


def _block_solve(bundle: GramianBundle, P, options: SolverOptions):
    """Alternate between re-splitting each group Gramian against the noise
    seen by that group and water-filling over all modes."""
    groups = input_groups(bundle.p, options.inputs)
    N, ridge = regularized_noise(bundle)
    C = bundle.C
    Wg = [bundle.group_gramian(g) for g in groups]
    blocks = [decompose(W, "whitened", C, N)[0] for W in Wg]
    modes = modes_from_blocks(blocks, groups, "whitened", bundle)
    K = len(modes)
    sigma = np.full(K, float(P) / K) if options.init is None else np.asarray(options.init, float)
    total_sweeps = 0
    history = []
    f_prev = -math.inf
    alloc = None
    for _ in range(options.max_block_rounds):
        if len(groups) > 1:
            D = C @ modes.Z
            for g in range(len(groups)):
                idx = modes.channel_slice(g)
                others = np.setdiff1d(np.arange(K), idx)
                Ng = symmetrize(N + (D[:, others] * sigma[others]) @ D[:, others].T)
                Zg, gains = decompose(Wg[g], "whitened", C, Ng)
                blocks[g] = Zg
                budget = float(np.sum(sigma[idx]))
                new = np.zeros(idx.size)
                usable = gains > options.gain_floor
                if budget > 0 and np.any(usable):
                    _, new[usable] = waterline_solve(gains[usable], budget)
                sigma[idx] = new
                modes = modes_from_blocks(blocks, groups, "whitened", bundle)
                D = C @ modes.Z
        alloc = water_fill_directions(
            N, C @ modes.Z, P, init=sigma, tol=options.tol,
            max_sweeps=options.max_sweeps, gain_floor=options.gain_floor,
        )
        total_sweeps += alloc.iterations
        history.extend(alloc.objective_history)
        sigma = alloc.sigma.copy()
        f = alloc.objective_history[-1]
        if len(groups) == 1 or abs(f - f_prev) <= 1e-13 * max(1.0, abs(f)):
            break
        f_prev = f
    alloc = Allocation(
        sigma=alloc.sigma, waterline=alloc.waterline, budget=alloc.budget,
        iterations=total_sweeps, converged=alloc.converged,
        kkt_residual=alloc.kkt_residual, gains=alloc.gains,
        objective_history=tuple(history), channel=modes.channel, index=modes.index,
    )
    return modes, alloc, ridge


def zero_capacity_guard(modes: ModeSet, allocation, C=None) -> bool:
    """True when positive variance sits on a null mode while ``C`` has full
    column rank; the capacity is then reported as zero."""
    sigma = _sigma_of(allocation)
    if C is not None:
        C = np.atleast_2d(np.asarray(C, dtype=float))
        if np.linalg.matrix_rank(C) < C.shape[1]:
            return False
    if not np.any(sigma > 0):
        return False
    null = np.linalg.norm(modes.Z, axis=0) == 0
    return bool(np.any((sigma > 0) & null))


def chain_rule_audit(bundle: GramianBundle, modes: ModeSet, allocation) -> float:
    """Max over modes of ``|I[u;y] - I[u_k;y] - I[u_rest;y|u_k]|`` (nats)."""
    sigma = _sigma_of(allocation)
    N, D, _ = _noise_and_directions(bundle, modes)
    Y = symmetrize(N + (D * sigma) @ D.T)
    ld_y = _logdet_pd(Y)
    ld_n = _logdet_pd(N)
    total = ld_y - ld_n
    worst = 0.0
    for k in range(D.shape[1]):
        Yk = symmetrize(Y - sigma[k] * np.outer(D[:, k], D[:, k]))
        ld_k = _logdet_pd(Yk)
        single = ld_y - ld_k
        rest = ld_k - ld_n
        worst = max(worst, abs(total - single - rest))
    return worst


def _contributions(N, D, sigma, scale):
    """Sequential chain-rule split of the objective over the modes."""
    out = np.zeros(D.shape[1])
    prev = _logdet_pd(N)
    acc = N.copy()
    for k in range(D.shape[1]):
        if sigma[k] > 0:
            acc = symmetrize(acc + sigma[k] * np.outer(D[:, k], D[:, k]))
            cur = _logdet_pd(acc)
            out[k] = scale * (cur - prev)
            prev = cur
    return out


def _zero_result(T, P, options, bundle=None, modes=None, sensor="model"):
    K = len(modes) if modes is not None else 0
    alloc = Allocation(
        sigma=np.zeros(K), waterline=math.nan, budget=float(P), iterations=0,
        converged=True, kkt_residual=0.0, gains=np.zeros(K),
        channel=None if modes is None else modes.channel,
        index=None if modes is None else modes.index,
    )
    return CapacityResult(0.0, 0.0, options.half_factor, float(T), float(P), np.zeros(K), alloc, modes, bundle, sensor=sensor)


def capacity_from_bundle(bundle: GramianBundle, P, options: SolverOptions = SolverOptions()) -> CapacityResult:
    P = float(P)
    T = bundle.T
    sensor = "perfect" if bundle.perfect_sensor else "model"
    if not P >= 0:
        raise ContractError("P must be non-negative")
    if P == 0 or T == 0:
        return _zero_result(T, P, options, sensor=sensor)
    try:
        if options.decomposition == "whitened":
            modes, alloc, ridge = _block_solve(bundle, P, options)
        else:
            modes = extract_modes(bundle, options.inputs, options.decomposition)
            alloc = iterative_water_filling(bundle, modes, P, options)
            ridge = regularized_noise(bundle, warn=False)[1]
    except ZeroCapacitySignal:
        return _zero_result(T, P, options, bundle, sensor=sensor)
    N = regularized_noise(bundle, warn=False)[0]
    D = bundle.C @ modes.Z
    forced = zero_capacity_guard(modes, alloc, bundle.C)
    scale = _scale(options.half_factor)
    if forced:
        nats = 0.0
        contrib = np.zeros(len(modes))
    else:
        nats = max(0.0, scale * _objective(N, D, alloc.sigma))
        contrib = _contributions(N, D, alloc.sigma, scale)
    return CapacityResult(
        value_nats=nats, value_bits=nats / LN2, half_factor_applied=options.half_factor,
        T=T, P=P, contributions=contrib, allocation=alloc, modes=modes,
        bundle=bundle, ridge=ridge, sensor=sensor, zero_forced=forced,
    )


def capacity(system, T, P, options: SolverOptions = SolverOptions()) -> CapacityResult:
    """Capacity from the control process on ``[0, T]`` to the output ``y(T)``.

    ``T = math.inf`` uses the Lyapunov Gramians under the perfect-sensor
    convention (output equals state, no sensor noise). ``P = 0`` or ``T = 0``
    gives exactly zero.
    """
    vs = validate(as_system(system))
    T = float(T)
    if math.isnan(T) or T < 0:
        raise ContractError("T must be non-negative")
    if not float(P) >= 0:
        raise ContractError("P must be non-negative")
    if float(P) == 0 or T == 0:
        return _zero_result(T, P, options, sensor="perfect" if math.isinf(T) else "model")
    if math.isinf(T):
        bundle = gramians_at_infinity(vs.system, perfect_sensor=True)
    else:
        bundle = gramians_at(vs.system, T)
    return capacity_from_bundle(bundle, P, options)


# --------------------------------------------------------------------------
# synthesis of expansion functions


@dataclass(frozen=True, eq=False)
class ControlRealization:
    """Sampled expansion functions of an optimal control process.

    ``g[k]`` has shape ``(len(t), len(group))``; column ``j`` is the component
    driving input ``groups[channel[k]][j]``.
    """

    t: np.ndarray
    g: np.ndarray
    sigma: np.ndarray
    channel: np.ndarray
    index: np.ndarray
    groups: tuple
    p: int
    orthonormality_error: float = field(default=math.nan)
    z_error: float = field(default=math.nan)

    def full(self, k) -> np.ndarray:
        """Mode ``k`` as a ``(len(t), p)`` array over all input columns."""
        out = np.zeros((self.t.size, self.p))
        out[:, list(self.groups[self.channel[k]])] = self.g[k]
        return out

    def autocorrelation(self, i, j) -> np.ndarray:
        """``R_u(t_i, t_j)`` as a ``(p, p)`` matrix."""
        R = np.zeros((self.p, self.p))
        for k in range(len(self.sigma)):
            gk = self.full(k)
            R += self.sigma[k] * np.outer(gk[i], gk[j])
        return R

    def power_density(self) -> np.ndarray:
        """``trace R_u(t, t)`` on the grid; integrates to the budget."""
        return sum(self.sigma[k] * np.sum(self.g[k] ** 2, axis=1) for k in range(len(self.sigma)))


def _quad(values, t):
    from scipy.integrate import simpson

    return simpson(values, x=t, axis=0)


def synthesize_controls(system, T, modes: ModeSet, allocation, grid) -> ControlRealization:
    """Sample ``g_k(t) = B_g' e^{A'(T-t)} W_g^+ z_k`` for every mode.

    These satisfy ``int g_i' g_j dt = delta_ij`` within a group and
    ``int e^{A(T-t)} B_g g_k(t) dt = z_k``. Modes flagged negligible are
    dropped; asking for one that carries variance raises
    :class:`NegligibleModeError`.
    """
    sys_ = as_system(system)
    T = float(T)
    if not (math.isfinite(T) and T > 0):
        raise ContractError("synthesis needs a finite positive horizon")
    t = np.asarray(grid, dtype=float)
    if t.ndim != 1 or t.size < 3 or abs(t[0]) > 1e-12 or abs(t[-1] - T) > 1e-9 * max(1.0, T):
        raise ContractError("grid must be 1-D, span [0, T] and have at least 3 points")
    sigma = _sigma_of(allocation)
    bad = modes.negligible & (sigma > 0)
    if np.any(bad):
        raise NegligibleModeError(f"modes {np.flatnonzero(bad).tolist()} carry variance but have negligible weight")
    keep = np.flatnonzero(~modes.negligible)
    A = sys_.A
    E = np.stack([mat_exp(A, T - s) for s in t])  # (len(t), n, n)
    g_list = []
    ortho_err = 0.0
    z_err = 0.0
    for grp_idx, grp in enumerate(modes.groups):
        Bg = sys_.B[:, list(grp)]
        Wg = finite_gramian(A, Bg, T)
        Wp = np.linalg.pinv(Wg, rcond=1e-12, hermitian=True)
        ks = [k for k in keep if modes.channel[k] == grp_idx]
        if not ks:
            continue
        Zg = modes.Z[:, ks]
        # w(t) = e^{A(T-t)} B_g, shape (len(t), n, |g|)
        w = E @ Bg
        coeff = Wp @ Zg
        G = np.einsum("tnj,nk->ktj", w, coeff)
        gram = np.einsum("atj,btj->abt", G, G)
        gram = _quad(np.moveaxis(gram, 2, 0), t)
        ortho_err = max(ortho_err, float(np.max(np.abs(gram - np.eye(len(ks))))))
        zrec = _quad(np.einsum("tnj,ktj->tnk", w, G), t)
        z_err = max(z_err, float(np.max(np.abs(zrec - Zg))))
        g_list.extend(zip(ks, G))
    g_list.sort(key=lambda kg: kg[0])
    ks = np.array([k for k, _ in g_list], dtype=int)
    return ControlRealization(
        t=t,
        g=np.array([g for _, g in g_list]),
        sigma=sigma[ks],
        channel=modes.channel[ks],
        index=modes.index[ks],
        groups=modes.groups,
        p=sys_.p,
        orthonormality_error=ortho_err,
        z_error=z_err,
    )
