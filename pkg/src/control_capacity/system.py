"""Continuous-time linear plant and sensor.

The plant is ``dx = (A x + B u) dt + G deta`` observed through
``y = C x + F nu``, with white process noise of intensity ``sigma_eta`` and
white sensor noise of intensity ``sigma_nu``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ContractError, StabilityClassError

__all__ = [
    "as_system",
    "LtiSystem",
    "PoleZeroSpec",
    "ValidatedSystem",
    "validate",
    "from_pole_zero",
    "transfer_row",
    "frequency_response",
    "time_constant",
    "scale_damping",
    "stability_class",
    "similarity_transform",
    "system_from_dict",
    "load_system",
]

STABLE = "stable"
ANTI_STABLE = "anti-stable"
MIXED = "mixed"


def _matrix(x, name):
    M = np.atleast_2d(np.asarray(x, dtype=float))
    if M.ndim != 2:
        raise ContractError(f"{name} must be a matrix")
    if not np.all(np.isfinite(M)):
        raise ContractError(f"{name} has non-finite entries")
    return M


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """Plant ``(A, B, G)`` and sensor ``(C, F)`` with noise intensities.

    ``C``, ``G`` and ``F`` default to identity maps and both intensities to 1.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray | None = None
    G: np.ndarray | None = None
    F: np.ndarray | None = None
    sigma_eta: float = 1.0
    sigma_nu: float = 1.0

    def __post_init__(self):
        A = _matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ContractError(f"A must be square, got {A.shape}")
        B = _matrix(self.B, "B")
        C = np.eye(n) if self.C is None else _matrix(self.C, "C")
        G = np.eye(n) if self.G is None else _matrix(self.G, "G")
        q = C.shape[0]
        F = np.eye(q) if self.F is None else _matrix(self.F, "F")
        if B.shape[0] != n:
            raise ContractError(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise ContractError(f"C has {C.shape[1]} columns, expected {n}")
        if G.shape[0] != n:
            raise ContractError(f"G has {G.shape[0]} rows, expected {n}")
        if F.shape[0] != q:
            raise ContractError(f"F has {F.shape[0]} rows, expected {q}")
        for name in ("sigma_eta", "sigma_nu"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0:
                raise ContractError(f"{name} must be finite and non-negative")
            object.__setattr__(self, name, v)
        for name, M in zip("ABCGF", (A, B, C, G, F)):
            M = M.copy()
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[0]

    def replace(self, **changes) -> "LtiSystem":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "G": self.G.tolist(),
            "F": self.F.tolist(),
            "sigma_eta": self.sigma_eta,
            "sigma_nu": self.sigma_nu,
        }


@dataclass(frozen=True, eq=False)
class ValidatedSystem:
    """An :class:`LtiSystem` annotated with its structural properties."""

    system: LtiSystem
    stability: str
    controllable: tuple[bool, ...]
    tau: float | None

    @property
    def fully_controllable(self) -> bool:
        return all(self.controllable)


@dataclass(frozen=True)
class PoleZeroSpec:
    poles: tuple[complex, ...]
    zeros: tuple[complex, ...] = ()
    gain: float = 1.0
    allow_imaginary_axis: bool = False

    def __post_init__(self):
        object.__setattr__(self, "poles", tuple(complex(p) for p in self.poles))
        object.__setattr__(self, "zeros", tuple(complex(z) for z in self.zeros))


def as_system(system) -> LtiSystem:
    return system.system if isinstance(system, ValidatedSystem) else system


def stability_class(A, rtol=1e-12) -> str:
    re = np.linalg.eigvals(np.asarray(A, dtype=float)).real
    tol = rtol * max(1.0, float(np.max(np.abs(re))))
    if np.all(re < -tol):
        return STABLE
    if np.all(re > tol):
        return ANTI_STABLE
    return MIXED


def _kalman_rank(A, b):
    n = A.shape[0]
    cols = [b]
    for _ in range(n - 1):
        cols.append(A @ cols[-1])
    K = np.column_stack(cols)
    norms = np.linalg.norm(K, axis=0)
    norms[norms == 0] = 1.0
    return int(np.linalg.matrix_rank(K / norms))


def validate(system) -> ValidatedSystem:
    """Annotate ``system`` with stability class, per-input controllability
    and time constant. Idempotent on an already validated system."""
    if isinstance(system, ValidatedSystem):
        return system
    if not isinstance(system, LtiSystem):
        raise ContractError(f"expected LtiSystem, got {type(system).__name__}")
    A = system.A
    ctrb = tuple(_kalman_rank(A, system.B[:, m]) == system.n for m in range(system.p))
    try:
        tau = time_constant(system)
    except StabilityClassError:
        tau = None
    return ValidatedSystem(system, stability_class(A), ctrb, tau)


def time_constant(system) -> float:
    """``1 / min_k |Re(eig_k(A))|``: the decay time of the slowest mode."""
    A = as_system(system).A
    re = np.abs(np.linalg.eigvals(A).real)
    if np.min(re) <= 1e-12 * max(1.0, float(np.max(re))):
        raise StabilityClassError("time constant undefined: A has an eigenvalue on the imaginary axis")
    return float(1.0 / np.min(re))


def scale_damping(system, tau_target: float) -> LtiSystem:
    """Scale the whole of ``A`` so the time constant becomes ``tau_target``.

    Poles move radially from the origin; ``B, C, G, F`` are unchanged.
    """
    system = as_system(system)
    tau_target = float(tau_target)
    if not tau_target > 0:
        raise ContractError("tau_target must be positive")
    tau = time_constant(system)
    return system.replace(A=system.A * (tau / tau_target))


def similarity_transform(system, S) -> LtiSystem:
    """State change ``x -> S x``."""
    system = as_system(system)
    S = np.asarray(S, dtype=float)
    Si = np.linalg.inv(S)
    return system.replace(A=S @ system.A @ Si, B=S @ system.B, C=system.C @ Si, G=S @ system.G)


def _conjugate_closed(values, tol=1e-9):
    vals = list(values)
    remaining = [v.conjugate() for v in vals]
    for v in vals:
        d = [abs(v - r) for r in remaining]
        k = int(np.argmin(d))
        if d[k] > tol * max(1.0, abs(v)):
            return False
        remaining.pop(k)
    return True


def _check_spec(spec: PoleZeroSpec):
    if not spec.poles:
        raise ContractError("at least one pole is required")
    if not _conjugate_closed(spec.poles):
        raise ContractError("poles are not closed under complex conjugation")
    if not _conjugate_closed(spec.zeros):
        raise ContractError("zeros are not closed under complex conjugation")
    if len(spec.zeros) >= len(spec.poles):
        raise ContractError(
            "need fewer zeros than poles (no direct feedthrough term in y = Cx)"
        )
    if not spec.allow_imaginary_axis and any(abs(p.real) <= 1e-12 for p in spec.poles):
        raise ContractError("pole on the imaginary axis")


def transfer_row(spec: PoleZeroSpec) -> np.ndarray:
    """Output row ``c`` with ``c (sI - A)^{-1} B`` equal to the rational
    function of ``spec`` for the companion realization."""
    _check_spec(spec)
    n = len(spec.poles)
    num = spec.gain * np.real(np.poly(spec.zeros)) if spec.zeros else np.array([spec.gain])
    c = np.zeros(n)
    c[: num.size] = num[::-1]
    return c[None, :]


def from_pole_zero(spec: PoleZeroSpec, sensor: str = "state", **overrides) -> LtiSystem:
    """Controllable-canonical single-input realization of a pole-zero map.

    Parameters
    ----------
    spec : PoleZeroSpec
    sensor : {'state', 'transfer'}
        ``'state'`` observes the full companion state (``C = I``);
        ``'transfer'`` uses the numerator row so that ``y`` is the output of
        the rational transfer function.
    **overrides
        Replacement values for ``C, G, F, sigma_eta, sigma_nu``.
    """
    _check_spec(spec)
    n = len(spec.poles)
    den = np.real(np.poly(spec.poles))
    A = np.zeros((n, n))
    A[np.arange(n - 1), np.arange(1, n)] = 1.0
    A[-1, :] = -den[::-1][:-1]
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    if sensor == "state":
        C = np.eye(n)
    elif sensor == "transfer":
        C = transfer_row(spec)
    else:
        raise ContractError(f"unknown sensor {sensor!r}")
    kwargs = {"C": C}
    kwargs.update(overrides)
    return LtiSystem(A=A, B=B, **kwargs)


def frequency_response(system, s: complex) -> np.ndarray:
    """``C (sI - A)^{-1} B`` evaluated at complex ``s``."""
    system = as_system(system)
    M = s * np.eye(system.n) - system.A
    return system.C @ np.linalg.solve(M, system.B.astype(complex))


def _complex_list(items, name):
    out = []
    for it in items:
        if isinstance(it, (int, float)):
            out.append(complex(it, 0.0))
        elif len(it) == 2:
            out.append(complex(float(it[0]), float(it[1])))
        else:
            raise ContractError(f"{name} entries must be [re, im] pairs")
    return out


def system_from_dict(cfg: dict) -> LtiSystem:
    """Build a system from the JSON config schema.

    Either explicit matrices ``{"A", "B", "C", "G", "F", "sigma_eta",
    "sigma_nu"}`` or a pole-zero map ``{"poles", "zeros", "gain"}`` (plus
    optional matrix/intensity overrides).
    """
    noise = {k: cfg[k] for k in ("sigma_eta", "sigma_nu") if k in cfg}
    mats = {k: cfg[k] for k in ("C", "G", "F") if k in cfg and cfg[k] is not None}
    if "poles" in cfg:
        spec = PoleZeroSpec(
            poles=_complex_list(cfg["poles"], "poles"),
            zeros=_complex_list(cfg.get("zeros", []), "zeros"),
            gain=float(cfg.get("gain", 1.0)),
        )
        sensor = cfg.get("sensor", "state")
        if "tau" in cfg:
            base = from_pole_zero(spec, sensor=sensor, **mats, **noise)
            return scale_damping(base, float(cfg["tau"]))
        return from_pole_zero(spec, sensor=sensor, **mats, **noise)
    if "A" not in cfg or "B" not in cfg:
        raise ContractError("config needs either 'A' and 'B' or 'poles'")
    system = LtiSystem(A=cfg["A"], B=cfg["B"], **mats, **noise)
    if "tau" in cfg:
        system = scale_damping(system, float(cfg["tau"]))
    return system


def load_system(path) -> LtiSystem:
    with open(Path(path)) as fh:
        return system_from_dict(json.load(fh))
