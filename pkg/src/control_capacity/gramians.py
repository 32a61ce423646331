"""Covariance objects of the control channel and their rank-one modes.

A :class:`GramianBundle` holds, for one horizon, the controllability Gramian
of every input column together with the process, sensor and total output
noise covariances. A :class:`ModeSet` splits Gramians into rank-one
``z``-vectors with ``sum_i z_i z_i' = W``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateNoiseError, StabilityClassError
from .linalg import finite_gramian, lyapunov_solve, sym_eig, symmetrize
from .system import ANTI_STABLE, STABLE, as_system, stability_class

__all__ = [
    "GramianBundle",
    "ModeSet",
    "gramians_at",
    "tilde_gramians_at",
    "gramians_at_infinity",
    "extract_modes",
    "decompose",
    "regularized_noise",
    "input_groups",
    "NEGLIGIBLE_RTOL",
    "RIDGE_SCALE",
]

NEGLIGIBLE_RTOL = 1e-12
RIDGE_SCALE = 1e-12


class RidgeWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class GramianBundle:
    """Gramians and noise covariances at horizon ``T`` (``math.inf`` allowed).

    ``W[m]`` is the Gramian of input column ``m``. ``Sigma_n`` always equals
    ``C Sigma_eta C' + Sigma_nu``; any regularization is applied separately
    by :func:`regularized_noise`.
    """

    T: float
    W: tuple
    Sigma_eta: np.ndarray
    Sigma_nu: np.ndarray
    Sigma_n: np.ndarray
    C: np.ndarray
    tilde: bool = False
    perfect_sensor: bool = False

    @property
    def n(self) -> int:
        return self.Sigma_eta.shape[0]

    @property
    def p(self) -> int:
        return len(self.W)

    @property
    def q(self) -> int:
        return self.Sigma_n.shape[0]

    def group_gramian(self, group) -> np.ndarray:
        return symmetrize(sum(self.W[m] for m in group))


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Rank-one modes of the input Gramians.

    Column ``k`` of ``Z`` is the mode ``z_k`` of group ``channel[k]``;
    ``omega[k] = |z_k|^2`` and ``V[:, k] = z_k / |z_k|``. For the eigen
    decomposition these are the Gramian eigenpairs. ``groups[g]`` lists the
    input columns that form group ``g`` (one column per group when inputs
    are independent).
    """

    channel: np.ndarray
    index: np.ndarray
    omega: np.ndarray
    V: np.ndarray
    Z: np.ndarray
    negligible: np.ndarray
    groups: tuple
    decomposition: str

    def __len__(self) -> int:
        return self.Z.shape[1]

    def channel_slice(self, g) -> np.ndarray:
        return np.flatnonzero(self.channel == g)


def _check_T(T):
    T = float(T)
    if math.isnan(T) or T < 0:
        raise ContractError("horizon T must be non-negative")
    return T


def gramians_at(system, T) -> GramianBundle:
    """Finite-horizon bundle with the full sensor model.

    ``Sigma_nu = T sigma_nu F F'`` (sensor noise integrated as a Wiener
    process over the horizon).
    """
    sys_ = as_system(system)
    T = _check_T(T)
    if math.isinf(T):
        raise ContractError("use gramians_at_infinity for an infinite horizon")
    A = sys_.A
    W = tuple(finite_gramian(A, sys_.B[:, [m]], T) for m in range(sys_.p))
    S_eta = sys_.sigma_eta * finite_gramian(A, sys_.G, T)
    S_nu = T * sys_.sigma_nu * (sys_.F @ sys_.F.T)
    S_n = symmetrize(sys_.C @ S_eta @ sys_.C.T + S_nu)
    return GramianBundle(T, W, S_eta, S_nu, S_n, sys_.C.copy())


def tilde_gramians_at(system, T) -> GramianBundle:
    """Bundle of the reversed-time Gramians ``int_0^T e^{-At} Q e^{-A't} dt``
    under the perfect-sensor convention (``y = x``, no sensor noise)."""
    sys_ = as_system(system)
    T = _check_T(T)
    A = -sys_.A
    W = tuple(finite_gramian(A, sys_.B[:, [m]], T) for m in range(sys_.p))
    S_eta = sys_.sigma_eta * finite_gramian(A, sys_.G, T)
    n = sys_.n
    return GramianBundle(T, W, S_eta, np.zeros((n, n)), S_eta.copy(), np.eye(n), tilde=True, perfect_sensor=True)


def perfect_sensor_bundle(bundle: GramianBundle) -> GramianBundle:
    """Same Gramians observed through ``y = x`` without sensor noise."""
    n = bundle.n
    return GramianBundle(
        bundle.T, bundle.W, bundle.Sigma_eta, np.zeros((n, n)), bundle.Sigma_eta.copy(),
        np.eye(n), tilde=bundle.tilde, perfect_sensor=True,
    )


def gramians_at_infinity(system, perfect_sensor: bool = True) -> GramianBundle:
    """Infinite-horizon bundle from continuous Lyapunov equations.

    Stable ``A``: ``A X + X A' = -Q``. Anti-stable ``A``: the reversed-time
    Gramians solving ``A X + X A' = +Q``, which give the same mutual
    information. With ``perfect_sensor`` the output is the state and there is
    no sensor noise; otherwise ``sigma_nu`` must be zero because the
    integrated sensor noise diverges.

    Raises
    ------
    StabilityClassError
        For mixed or marginal spectra.
    """
    sys_ = as_system(system)
    cls = stability_class(sys_.A)
    if cls == STABLE:
        sign, tilde = "-", False
    elif cls == ANTI_STABLE:
        sign, tilde = "+", True
    else:
        raise StabilityClassError(
            "infinite-horizon analysis needs all eigenvalues of A on one side of the imaginary axis"
        )
    if not perfect_sensor and sys_.sigma_nu > 0:
        raise ContractError("sensor noise integrated over an infinite horizon diverges; use perfect_sensor")
    A = sys_.A
    W = tuple(lyapunov_solve(A, np.outer(sys_.B[:, m], sys_.B[:, m]), sign) for m in range(sys_.p))
    S_eta = sys_.sigma_eta * lyapunov_solve(A, sys_.G @ sys_.G.T, sign)
    if perfect_sensor:
        C = np.eye(sys_.n)
    else:
        C = sys_.C.copy()
    q = C.shape[0]
    S_nu = np.zeros((q, q))
    S_n = symmetrize(C @ S_eta @ C.T)
    return GramianBundle(math.inf, W, S_eta, S_nu, S_n, C, tilde=tilde, perfect_sensor=perfect_sensor)


def regularized_noise(bundle: GramianBundle, warn: bool = True):
    """Return ``(Sigma, ridge)``: the output noise covariance used by the
    solver and the ridge added to its diagonal.

    A ridge ``1e-12 * trace(Sigma_n)`` is added only when ``Sigma_n`` is
    numerically singular; a :class:`RidgeWarning` is emitted in that case.
    """
    S = bundle.Sigma_n
    w = np.linalg.eigvalsh(S)
    top = float(np.max(np.abs(w))) if w.size else 0.0
    if top == 0.0:
        raise DegenerateNoiseError("output noise covariance is zero: the capacity is unbounded")
    if w[0] > NEGLIGIBLE_RTOL * top:
        return S, 0.0
    ridge = RIDGE_SCALE * float(np.trace(S))
    if warn:
        warnings.warn(
            f"singular output noise covariance regularized with ridge {ridge:.3g}",
            RidgeWarning,
            stacklevel=2,
        )
    return S + ridge * np.eye(S.shape[0]), ridge


def input_groups(p: int, inputs: str = "independent") -> tuple:
    if inputs == "independent":
        return tuple((m,) for m in range(p))
    if inputs == "joint":
        return (tuple(range(p)),)
    raise ContractError(f"inputs must be 'independent' or 'joint', got {inputs!r}")


def _psd_sqrt(W):
    w, V = sym_eig(W)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def decompose(W, decomposition: str = "eigen", C=None, N=None):
    """Split a Gramian into rank-one modes ``W = sum_i z_i z_i'``.

    ``'eigen'`` takes ``z_i = sqrt(omega_i) v_i`` from the eigenpairs of
    ``W``. ``'whitened'`` takes ``z_i = W^{1/2} q_i`` with ``q_i`` the
    eigenvectors of ``W^{1/2} C' N^{-1} C W^{1/2}``, which makes the output
    images ``C z_i`` orthogonal in the metric ``N^{-1}``.

    Returns
    -------
    Z : (n, n) ndarray
        Modes as columns.
    gains : (n,) ndarray
        Eigenvalues of the decomposed matrix (``omega`` for ``'eigen'``).
    """
    W = symmetrize(np.asarray(W, dtype=float))
    if decomposition == "eigen":
        w, V = sym_eig(W)
        return V * np.sqrt(np.clip(w, 0.0, None)), w
    if decomposition == "whitened":
        if C is None or N is None:
            raise ContractError("whitened decomposition needs C and N")
        R = _psd_sqrt(W)
        L = np.linalg.cholesky(N)
        K = np.linalg.solve(L, C @ R)
        g, Qv = sym_eig(symmetrize(K.T @ K))
        return R @ Qv, g
    raise ContractError(f"unknown decomposition {decomposition!r}")


def _modes_from_columns(blocks, groups, decomposition, ref_scale):
    channel, index, cols = [], [], []
    for g, Z in enumerate(blocks):
        for i in range(Z.shape[1]):
            channel.append(g)
            index.append(i)
            cols.append(Z[:, i])
    Z = np.column_stack(cols)
    omega = np.sum(Z * Z, axis=0)
    norms = np.sqrt(omega)
    V = np.where(norms > 0, Z / np.where(norms > 0, norms, 1.0), 0.0)
    channel = np.asarray(channel)
    negligible = np.array([omega[k] <= NEGLIGIBLE_RTOL * ref_scale[channel[k]] for k in range(len(omega))])
    return ModeSet(channel, np.asarray(index), omega, V, Z, negligible, tuple(groups), decomposition)


def extract_modes(bundle: GramianBundle, inputs: str = "independent", decomposition: str = "eigen") -> ModeSet:
    """Rank-one modes of every input group.

    The default returns, per input column, the eigen modes
    ``z_i = sqrt(omega_i) v_i`` of its Gramian. Modes with weight below
    ``1e-12`` of the largest in their group are kept but flagged negligible.
    """
    groups = input_groups(bundle.p, inputs)
    blocks, scales = [], []
    N = None
    if decomposition == "whitened":
        N, _ = regularized_noise(bundle)
    for grp in groups:
        Wg = bundle.group_gramian(grp)
        Z, _ = decompose(Wg, decomposition, bundle.C, N)
        blocks.append(Z)
        scales.append(max(float(np.max(np.linalg.eigvalsh(Wg))), 0.0))
    return _modes_from_columns(blocks, groups, decomposition, scales)


def modes_from_blocks(blocks, groups, decomposition, bundle: GramianBundle) -> ModeSet:
    scales = [max(float(np.max(np.linalg.eigvalsh(bundle.group_gramian(g)))), 0.0) for g in groups]
    return _modes_from_columns(blocks, groups, decomposition, scales)
