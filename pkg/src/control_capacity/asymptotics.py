"""Limiting regimes: infinite horizon, vanishing horizon, vanishing time constant."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DegenerateNoiseError, StabilityClassError
from .gramians import GramianBundle, gramians_at_infinity
from .linalg import lyapunov_residual, lyapunov_solve, symmetrize
from .solver import LN2, SolverOptions, capacity, capacity_from_bundle
from .system import STABLE, as_system, scale_damping, stability_class, time_constant

__all__ = [
    "AsymptoteReport",
    "capacity_at_infinity",
    "small_T_slope",
    "small_T_limit",
    "tau_sweep",
    "tau_limit",
    "ratio_capacity",
]

SMALL_T_GRID = (1e-3, 5e-4, 2.5e-4)


@dataclass(frozen=True, eq=False)
class AsymptoteReport:
    """Outcome of one limiting analysis.

    ``value`` is in bits (``unit='bits'``) or bits per second
    (``unit='bits/s'``). ``reliable`` is False whenever a diagnostic exceeds
    its tolerance; ``notes`` then says which.
    """

    regime: str
    value: float
    unit: str
    half_factor_applied: bool
    reliable: bool
    diagnostics: dict = field(default_factory=dict)
    notes: tuple = ()

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, (np.floating, float)):
                v = float(v)
                return v if math.isfinite(v) else str(v)
            if isinstance(v, np.ndarray):
                return [clean(x) for x in v.tolist()]
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            return v

        return {
            "regime": self.regime,
            "value": clean(self.value),
            "unit": self.unit,
            "half_factor_applied": self.half_factor_applied,
            "reliable": self.reliable,
            "diagnostics": clean(self.diagnostics),
            "notes": list(self.notes),
        }


def capacity_at_infinity(system, P, options: SolverOptions = SolverOptions()) -> AsymptoteReport:
    """``C(P, T -> inf)`` with the state observed directly and no sensor noise.

    Stable systems use the Lyapunov Gramians; anti-stable systems use the
    reversed-time Gramians solving ``AX + XA' = +Q``.
    """
    sys_ = as_system(system)
    bundle = gramians_at_infinity(sys_, perfect_sensor=True)
    sign = "+" if bundle.tilde else "-"
    res = [lyapunov_residual(sys_.A, W, np.outer(sys_.B[:, m], sys_.B[:, m]), sign) for m, W in enumerate(bundle.W)]
    if sys_.sigma_eta > 0:
        res.append(lyapunov_residual(sys_.A, bundle.Sigma_eta / sys_.sigma_eta, sys_.G @ sys_.G.T, sign))
    result = capacity_from_bundle(bundle, P, options)
    worst = max(res) if res else 0.0
    notes = ["perfect sensor: y = x, no sensor noise"]
    if bundle.tilde:
        notes.append("anti-stable: reversed-time Gramians")
    reliable = worst < 1e-9 and (result.allocation.converged or result.value_nats == 0.0)
    if worst >= 1e-9:
        notes.append(f"Lyapunov residual {worst:.2e} above 1e-9")
    return AsymptoteReport(
        regime="infinite_horizon",
        value=result.value_bits,
        unit="bits",
        half_factor_applied=result.half_factor_applied,
        reliable=reliable,
        diagnostics={
            "capacity_nats": result.value_nats,
            "lyapunov_residual": worst,
            "kkt_residual": result.allocation.kkt_residual,
            "iterations": result.allocation.iterations,
            "tilde": bundle.tilde,
            "ridge": result.ridge,
        },
        notes=tuple(notes),
    )


def _ratio_gains(M):
    w = np.linalg.eigvals(M)
    return np.clip(np.real(w), 0.0, None)


def ratio_capacity(M, P, half_factor=True) -> float:
    """Capacity in nats of ``ln|I + Q M|`` maximised over ``trace Q <= P``
    for a matrix ``M`` similar to a PSD one (a noise-to-signal Gramian ratio)."""
    from .solver import waterline_solve

    g = _ratio_gains(np.atleast_2d(np.asarray(M, dtype=float)))
    if P <= 0 or not np.any(g > 1e-14):
        return 0.0
    use = g > 1e-14
    _, s = waterline_solve(g[use], P)
    return (0.5 if half_factor else 1.0) * float(np.sum(np.log1p(s * g[use])))


def small_T_limit(system, P, options: SolverOptions = SolverOptions()) -> float:
    """``lim_{T -> 0+} C(P, T)`` in nats under the total-energy budget.

    Both the control Gramian and the noise covariance grow like ``T``, so
    their ratio tends to that of ``B B'`` against
    ``sigma_eta C G G' C' + sigma_nu F F'``.
    """
    sys_ = as_system(system)
    N0 = symmetrize(sys_.sigma_eta * sys_.C @ sys_.G @ sys_.G.T @ sys_.C.T + sys_.sigma_nu * sys_.F @ sys_.F.T)
    if np.linalg.eigvalsh(N0)[0] <= 1e-12 * max(1e-300, float(np.max(np.abs(np.linalg.eigvalsh(N0))))):
        raise DegenerateNoiseError("sigma_eta C G G' C' + sigma_nu F F' is singular")
    CB = sys_.C @ sys_.B
    M = np.linalg.solve(N0, CB @ CB.T)
    return ratio_capacity(M, P, options.half_factor)


def _richardson(T, r):
    """Two-level Richardson table for ``r(T) = c + k1 T + k2 T^2 + ...`` on a
    grid halving ``T``."""
    r = np.asarray(r, dtype=float)
    first = 2.0 * r[1:] - r[:-1]
    second = (4.0 * first[1:] - first[:-1]) / 3.0
    return float(second[-1]), float(abs(second[-1] - first[-1]))


def small_T_slope(system, P, options: SolverOptions = SolverOptions(), budget: str = "energy") -> AsymptoteReport:
    """Slope ``c`` of ``C(P, T) ~ c T`` as ``T -> 0``.

    ``C(T)/T`` is evaluated at ``T = 1e-3, 5e-4, 2.5e-4`` and extrapolated to
    ``T = 0`` by Richardson. ``budget='energy'`` spends ``P`` over the
    horizon; ``budget='rate'`` spends ``P T``. The report is marked
    unreliable unless ``C`` vanishes linearly on the grid.
    """
    sys_ = as_system(system)
    if budget not in ("energy", "rate"):
        raise ContractError("budget must be 'energy' or 'rate'")
    P = float(P)
    N0 = sys_.sigma_eta * sys_.C @ sys_.G @ sys_.G.T @ sys_.C.T + sys_.sigma_nu * sys_.F @ sys_.F.T
    w0 = np.linalg.eigvalsh(symmetrize(N0))
    if w0[0] <= 1e-12 * max(1e-300, float(np.max(np.abs(w0)))):
        raise DegenerateNoiseError(
            "noise covariance vanishes faster than T: needs sigma_nu > 0 or C G G' C' nonsingular"
        )
    scale = 0.5 if options.half_factor else 1.0
    if P == 0:
        return AsymptoteReport("small_T", 0.0, "bits/s", options.half_factor, True,
                               {"budget": budget, "T": list(SMALL_T_GRID), "capacity_bits": [0.0] * 3},
                               ("P = 0",))
    Ts = list(SMALL_T_GRID)
    caps = []
    for T in Ts:
        energy = P * T if budget == "rate" else P
        caps.append(capacity(sys_, T, energy, options).value_nats)
    caps = np.array(caps)
    ratios = caps / np.array(Ts)
    c, err = _richardson(Ts, ratios)
    linear = [caps[i] / caps[i + 1] for i in range(len(Ts) - 1)]
    self_consistency = abs(ratios[0] - c) / c if c > 0 else math.inf
    notes = [f"budget={budget}"]
    vanishing = bool(caps[-1] < caps[0] and all(1.9 < x < 2.1 for x in linear))
    reliable = bool(c > 0 and vanishing and self_consistency < 0.01 and err < 0.01 * c)
    limit0 = small_T_limit(sys_, P, options) if budget == "energy" else 0.0
    if not vanishing:
        notes.append(
            "C(T) does not vanish linearly on the grid; with a fixed energy budget it tends to "
            f"{limit0 / LN2:.6g} bits as T -> 0"
        )
    # with energy P T the top mode takes everything: C ~ scale * P T g_max
    CB = sys_.C @ sys_.B
    g_max = float(np.max(_ratio_gains(np.linalg.solve(symmetrize(N0), CB @ CB.T))))
    rate_slope = scale * P * g_max
    return AsymptoteReport(
        regime="small_T",
        value=c / LN2,
        unit="bits/s",
        half_factor_applied=options.half_factor,
        reliable=reliable,
        diagnostics={
            "budget": budget,
            "T": Ts,
            "capacity_bits": (caps / LN2).tolist(),
            "ratio_C_over_T_bits": (ratios / LN2).tolist(),
            "doubling_ratios": linear,
            "extrapolation_error_bits": err / LN2,
            "self_consistency": self_consistency,
            "limit_T0_bits": limit0 / LN2,
            "rate_budget_slope_bits": rate_slope / LN2,
        },
        notes=tuple(notes),
    )


def tau_limit(system, P, T=None, options: SolverOptions = SolverOptions()) -> dict:
    """Capacity as the time constant goes to zero with ``T`` fixed.

    With ``A`` scaled by ``k``, both Gramians become ``X/k`` and
    ``sigma_eta Y/k`` (``A X + X A' = -B B'``, ``A Y + Y A' = -G G'``), so the
    limit is the capacity of the Lyapunov pair. Sensor noise does not shrink
    with ``k``; when ``sigma_nu > 0`` the limit is zero.

    Returns a dict with the derived limit and the value of the closed form
    ``sigma_eta (GG')^{-1} sum b b'`` (perfect sensor), both in nats.
    """
    sys_ = as_system(system)
    if stability_class(sys_.A) != STABLE:
        raise StabilityClassError("tau sweep needs a stable base system")
    A = sys_.A
    n = sys_.n
    X = [lyapunov_solve(A, np.outer(sys_.B[:, m], sys_.B[:, m]), "-") for m in range(sys_.p)]
    Y = lyapunov_solve(A, sys_.G @ sys_.G.T, "-")
    GG = sys_.G @ sys_.G.T
    BB = sys_.B @ sys_.B.T
    closed_ratio = sys_.sigma_eta * np.linalg.solve(GG, BB)
    inverted_ratio = np.linalg.solve(GG, BB) / sys_.sigma_eta if sys_.sigma_eta > 0 else None
    out = {
        "closed_form_nats": ratio_capacity(closed_ratio, P, options.half_factor),
        "closed_form_inverted_sigma_nats": (
            ratio_capacity(inverted_ratio, P, options.half_factor) if inverted_ratio is not None else math.inf
        ),
    }
    if sys_.sigma_nu > 0:
        out["derived_nats"] = 0.0
        out["note"] = "sensor noise does not shrink with tau; the limit is zero"
        return out
    C = sys_.C
    S_eta = sys_.sigma_eta * Y
    q = C.shape[0]
    bundle = GramianBundle(
        T=math.nan if T is None else float(T), W=tuple(X), Sigma_eta=S_eta,
        Sigma_nu=np.zeros((q, q)), Sigma_n=symmetrize(C @ S_eta @ C.T), C=C.copy(),
    )
    out["derived_nats"] = capacity_from_bundle(bundle, P, options).value_nats
    if n and np.allclose(C, np.eye(n)):
        out["derived_ratio_nats"] = ratio_capacity(np.linalg.solve(S_eta, sum(X)), P, options.half_factor)
    return out


def tau_sweep(base_system, tau_list, P, T, options: SolverOptions = SolverOptions()) -> AsymptoteReport:
    """Capacities ``C_tau(P, T)`` for a descending list of time constants
    (whole-``A`` scaling) together with the ``tau -> 0`` limit."""
    sys_ = as_system(base_system)
    taus = [float(t) for t in tau_list]
    if not taus or any(t <= 0 for t in taus):
        raise ContractError("tau values must be positive")
    if any(b > a for a, b in zip(taus, taus[1:])):
        raise ContractError("tau values must be in descending order")
    if stability_class(sys_.A) != STABLE:
        raise StabilityClassError("tau sweep needs a stable base system")
    time_constant(sys_)
    caps = [capacity(scale_damping(sys_, tau), T, P, options).value_nats for tau in taus]
    lim = tau_limit(sys_, P, T, options)
    derived = lim["derived_nats"]
    last = caps[-1]
    rel = abs(last - derived) / derived if derived > 0 else abs(last - derived)
    notes = []
    closed = lim["closed_form_nats"]
    if abs(closed - derived) > 1e-9 * max(1.0, abs(derived)):
        notes.append(
            "closed-form ratio sigma_eta (GG')^-1 sum b b' disagrees with the derived limit "
            f"({closed / LN2:.6g} vs {derived / LN2:.6g} bits)"
        )
    if "note" in lim:
        notes.append(lim["note"])
    return AsymptoteReport(
        regime="tau_limit",
        value=derived / LN2,
        unit="bits",
        half_factor_applied=options.half_factor,
        reliable=bool(rel < 0.01),
        diagnostics={
            "tau": taus,
            "capacity_bits": [c / LN2 for c in caps],
            "limit_derived_bits": derived / LN2,
            "limit_closed_form_bits": closed / LN2,
            "limit_closed_form_inverted_sigma_bits": lim["closed_form_inverted_sigma_nats"] / LN2,
            "relative_gap_smallest_tau": rel,
            "T": float(T),
            "P": float(P),
        },
        notes=tuple(notes),
    )
