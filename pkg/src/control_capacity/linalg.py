"""Dense linear-algebra kernels.

Matrix exponential, continuous Lyapunov solves, finite-horizon Gramian
integration and a deterministic symmetric eigendecomposition. All functions
are pure and operate on small dense ``numpy`` arrays.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla

from .errors import ConditioningError, ContractError, MagnitudeError, StabilityClassError

__all__ = [
    "mat_exp",
    "lyapunov_solve",
    "lyapunov_solve_schur",
    "lyapunov_solve_kron",
    "lyapunov_residual",
    "finite_gramian",
    "sym_eig",
    "check_symmetric",
    "symmetrize",
    "is_psd",
]

# relative tolerance used for the symmetric-matrix contract
SYM_RTOL = 1e-12
# relative PSD tolerance on the smallest eigenvalue
PSD_RTOL = 1e-10


def _square(A, name="A"):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ContractError(f"{name} has non-finite entries")
    return A


def symmetrize(X):
    return 0.5 * (X + X.T)


def check_symmetric(X, name="matrix", rtol=SYM_RTOL):
    """Raise :class:`ContractError` unless ``X`` is symmetric to ``rtol``."""
    X = _square(X, name)
    scale = max(1.0, float(np.max(np.abs(X))))
    if np.max(np.abs(X - X.T)) > rtol * scale:
        raise ContractError(f"{name} is not symmetric")
    return X


def mat_exp(A, t=1.0):
    """Return ``exp(A t)``.

    Raises
    ------
    MagnitudeError
        If the result overflows.
    """
    A = _square(A)
    t = float(t)
    if not math.isfinite(t):
        raise ContractError("t must be finite")
    with np.errstate(over="ignore", invalid="ignore"):
        E = sla.expm(A * t)
    if not np.all(np.isfinite(E)):
        norm = float(np.linalg.norm(A, 1)) * abs(t)
        raise MagnitudeError(f"exp(At) overflowed (||A t||_1 = {norm:.3g})")
    return E


def _spectrum_check(A, sign):
    re = np.linalg.eigvals(A).real
    if sign == "-" and not np.all(re < 0):
        raise StabilityClassError(
            "AX + XA' = -Q needs every eigenvalue of A in the open left half-plane"
        )
    if sign == "+" and not np.all(re > 0):
        raise StabilityClassError(
            "AX + XA' = +Q needs every eigenvalue of A in the open right half-plane"
        )


def _rhs(Q, sign):
    if sign not in ("+", "-"):
        raise ContractError("sign must be '+' or '-'")
    return Q if sign == "+" else -Q


def lyapunov_solve_schur(A, R):
    """Solve ``A X + X A' = R`` by complex Schur reduction (Bartels-Stewart).

    ``A = U T U^H`` with ``T`` upper triangular turns the equation into
    ``T Y + Y T^H = U^H R U``, solved one column at a time from the right.
    """
    A = _square(A)
    R = _square(R, "R")
    n = A.shape[0]
    T, U = sla.schur(A.astype(complex), output="complex")
    F = U.conj().T @ R @ U
    diag = np.diag(T)
    sep = np.min(np.abs(diag[:, None] + diag[None, :].conj()))
    if sep <= 1e-14 * max(1.0, np.max(np.abs(diag))):
        raise ConditioningError(f"Lyapunov operator is near singular (separation {sep:.3g})")
    Y = np.zeros((n, n), dtype=complex)
    eye = np.eye(n)
    for j in range(n - 1, -1, -1):
        rhs = F[:, j] - Y[:, j + 1:] @ T[j, j + 1:].conj()
        Y[:, j] = sla.solve_triangular(T + T[j, j].conj() * eye, rhs)
    X = (U @ Y @ U.conj().T).real
    return symmetrize(X)


def lyapunov_solve_kron(A, R):
    """Solve ``A X + X A' = R`` through the n^2 x n^2 Kronecker system."""
    A = _square(A)
    R = _square(R, "R")
    n = A.shape[0]
    eye = np.eye(n)
    K = np.kron(eye, A) + np.kron(A, eye)
    cond = np.linalg.cond(K)
    if not np.isfinite(cond) or cond > 1e14:
        raise ConditioningError(f"Kronecker Lyapunov system is ill conditioned (cond {cond:.3g})")
    x = np.linalg.solve(K, R.reshape(-1, order="F"))
    return symmetrize(x.reshape(n, n, order="F"))


def lyapunov_solve(A, Q, sign="-"):
    """Solve the continuous Lyapunov equation ``A X + X A' = -Q`` or ``+Q``.

    Parameters
    ----------
    A : (n, n) array_like
        Dynamics matrix. ``sign='-'`` requires a Hurwitz ``A``; ``sign='+'``
        requires every eigenvalue in the open right half-plane.
    Q : (n, n) array_like
        Symmetric positive semidefinite right-hand side.
    sign : {'-', '+'}

    Returns
    -------
    X : (n, n) ndarray
        Symmetric PSD solution.
    """
    A = _square(A)
    Q = check_symmetric(Q, "Q")
    if A.shape != Q.shape:
        raise ContractError(f"A {A.shape} and Q {Q.shape} differ in shape")
    R = _rhs(Q, sign)
    _spectrum_check(A, sign)
    if A.shape[0] < 4:
        return lyapunov_solve_kron(A, R)
    return lyapunov_solve_schur(A, R)


def lyapunov_residual(A, X, Q, sign="-"):
    """Relative Frobenius residual ``||AX + XA' -/+ Q|| / ||Q||``."""
    R = _rhs(np.asarray(Q, dtype=float), sign)
    num = np.linalg.norm(A @ X + X @ A.T - R)
    den = np.linalg.norm(R)
    return num / den if den > 0 else num


def _van_loan(A, Q, h):
    n = A.shape[0]
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = A
    M[:n, n:] = Q
    M[n:, n:] = -A.T
    E = mat_exp(M, h)
    F11 = E[:n, :n]
    F12 = E[:n, n:]
    return F11, symmetrize(F12 @ F11.T)


def finite_gramian(A, S, T):
    """Return ``int_0^T exp(A(T-t)) S S' exp(A'(T-t)) dt``.

    The integral over a short step ``h`` comes from the exponential of the
    block matrix ``[[A, SS'], [0, -A']] h``; the horizon is then reached by
    repeated doubling ``W(2h) = W(h) + e^{Ah} W(h) e^{A'h}`` so the block
    exponential never sees a large argument.
    """
    A = _square(A)
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if S.shape[0] != A.shape[0]:
        raise ContractError(f"S has {S.shape[0]} rows, A has order {A.shape[0]}")
    T = float(T)
    if not T >= 0:
        raise ContractError("T must be non-negative")
    n = A.shape[0]
    if T == 0.0:
        return np.zeros((n, n))
    Q = S @ S.T
    norm = float(np.linalg.norm(A, 1)) * T
    k = 0 if norm <= 1.0 else min(60, int(math.ceil(math.log2(norm))))
    E, W = _van_loan(A, Q, T / 2.0**k)
    for _ in range(k):
        W = symmetrize(W + E @ W @ E.T)
        E = E @ E
    if not np.all(np.isfinite(W)):
        raise MagnitudeError("Gramian overflowed")
    return W


def sym_eig(W):
    """Eigendecomposition of a symmetric matrix with deterministic output.

    Eigenvalues are returned in descending order. Each eigenvector is flipped
    so that its first component of non-negligible magnitude is positive.

    Returns
    -------
    w : (n,) ndarray
    V : (n, n) ndarray
        Orthonormal eigenvectors as columns.
    """
    W = check_symmetric(W, "W")
    w, V = np.linalg.eigh(symmetrize(W))
    order = np.argsort(w, kind="stable")[::-1]
    w = w[order]
    V = V[:, order]
    for j in range(V.shape[1]):
        col = V[:, j]
        idx = np.flatnonzero(np.abs(col) > 1e-10)
        if idx.size and col[idx[0]] < 0:
            V[:, j] = -col
    return w, V


def is_psd(X, rtol=PSD_RTOL):
    w = np.linalg.eigvalsh(symmetrize(X))
    if w.size == 0:
        return True
    return bool(w[0] >= -rtol * float(np.max(np.abs(w))))
