"""Velocity fields: ABC variants, parallel shear flows, analytic test fields,
and the Duffing-driven forcing signal used by the chaotically forced ABC flow."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

TWO_PI = 2.0 * np.pi

__all__ = [
    "AbcParams",
    "ForcingSignal",
    "ShearProfiles",
    "VelocityField",
    "OutOfRangeError",
    "abc_field",
    "steady_abc",
    "periodic_abc",
    "chaotic_abc",
    "parallel_shear_field",
    "linear_field",
    "zero_field",
    "eval_velocity",
    "divergence",
    "generate_duffing_forcing",
]


class OutOfRangeError(ValueError):
    """Raised when a field is evaluated outside its declared time span."""


@dataclass(frozen=True)
class ForcingSignal:
    """Tabulated scalar signal F(t) with C2 cubic-spline interpolation."""

    t_samples: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t_samples, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 4:
            raise ValueError("forcing signal needs matching 1-D t/value arrays of length >= 4")
        if np.any(np.diff(t) <= 0):
            raise ValueError("t_samples must be strictly increasing")
        object.__setattr__(self, "t_samples", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_spline", CubicSpline(t, v, bc_type="not-a-knot"))

    @property
    def t_span(self) -> tuple[float, float]:
        return float(self.t_samples[0]), float(self.t_samples[-1])

    def covers(self, t0: float, t1: float) -> bool:
        lo, hi = self.t_span
        return lo <= min(t0, t1) and max(t0, t1) <= hi

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        lo, hi = self.t_span
        if np.any(t_arr < lo) or np.any(t_arr > hi):
            raise OutOfRangeError(f"t outside forcing coverage [{lo}, {hi}]")
        out = self._spline(t_arr)
        # exact reproduction at the nodes
        idx = np.searchsorted(self.t_samples, t_arr)
        idx = np.clip(idx, 0, self.t_samples.size - 1)
        hit = self.t_samples[idx] == t_arr
        out = np.where(hit, self.values[idx], out)
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, t):
        return self._spline(np.asarray(t, dtype=float), 1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "F"])
            for t, v in zip(self.t_samples, self.values):
                w.writerow([repr(float(t)), repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "ForcingSignal":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1])


@dataclass(frozen=True)
class AbcParams:
    A: float = float(np.sqrt(3.0))
    B: float = float(np.sqrt(2.0))
    C: float = 1.0
    forcing_kind: str = "none"  # none | sinusoidal | tabulated
    amplitude: float = 0.1  # sinusoidal forcing amplitude
    signal: Optional[ForcingSignal] = None
    printed_y_equation: bool = False  # use B sin x + A(A+F) cos z

    def __post_init__(self):
        if self.forcing_kind not in ("none", "sinusoidal", "tabulated"):
            raise ValueError(f"unknown forcing kind {self.forcing_kind!r}")
        if self.forcing_kind == "tabulated" and self.signal is None:
            raise ValueError("tabulated forcing needs a ForcingSignal")

    def forcing(self, t):
        """Additive perturbation of A at time(s) t."""
        if self.forcing_kind == "none":
            return np.zeros_like(np.asarray(t, dtype=float))
        if self.forcing_kind == "sinusoidal":
            return self.amplitude * np.sin(np.asarray(t, dtype=float))
        return np.asarray(self.signal(t), dtype=float)

    @property
    def y_factor(self) -> float:
        return self.A if self.printed_y_equation else 1.0


@dataclass(frozen=True)
class ShearProfiles:
    """Profiles of the parallel shear flow x' = u(z,t), y' = v(z,t), z' = w(t).

    ``u_z`` and ``v_z`` are the z-derivatives; when omitted they are taken by
    central differences.
    """

    u: Callable
    v: Callable
    w: Callable
    u_z: Optional[Callable] = None
    v_z: Optional[Callable] = None

    def du_dz(self, z, t, h=1e-6):
        if self.u_z is not None:
            return self.u_z(z, t)
        return (self.u(z + h, t) - self.u(z - h, t)) / (2 * h)

    def dv_dz(self, z, t, h=1e-6):
        if self.v_z is not None:
            return self.v_z(z, t)
        return (self.v(z + h, t) - self.v(z - h, t)) / (2 * h)


@dataclass(frozen=True)
class VelocityField:
    """Time-dependent velocity field on R^3.

    ``func(X, t)`` takes positions of shape (..., 3) and a scalar time and
    returns velocities of the same shape. ``abc`` is set for the ABC family so
    the integrator can use its compiled kernel.
    """

    func: Callable[[np.ndarray, float], np.ndarray]
    label: str
    domain: tuple = ((0.0, TWO_PI),) * 3
    spatial_period: Optional[tuple] = None
    time_span: Optional[tuple[float, float]] = None
    abc: Optional[AbcParams] = None
    profiles: Optional[ShearProfiles] = field(default=None, compare=False)

    def check_time(self, *times: float) -> None:
        if self.time_span is None:
            return
        lo, hi = self.time_span
        for t in times:
            if t < lo or t > hi:
                raise OutOfRangeError(
                    f"{self.label}: t={t} outside time span [{lo}, {hi}]"
                )

    def __call__(self, X, t: float) -> np.ndarray:
        return self.func(np.asarray(X, dtype=float), float(t))


def _abc_func(p: AbcParams):
    A, B, C, g = p.A, p.B, p.C, p.y_factor

    def func(X, t):
        x, y, z = X[..., 0], X[..., 1], X[..., 2]
        a = A + float(p.forcing(t))
        return np.stack(
            [
                a * np.sin(z) + C * np.cos(y),
                B * np.sin(x) + g * a * np.cos(z),
                C * np.sin(y) + B * np.cos(x),
            ],
            axis=-1,
        )

    return func


def abc_field(params: AbcParams = AbcParams(), label: Optional[str] = None) -> VelocityField:
    span = params.signal.t_span if params.forcing_kind == "tabulated" else None
    if label is None:
        label = {"none": "steady-abc", "sinusoidal": "periodic-abc", "tabulated": "chaotic-abc"}[
            params.forcing_kind
        ]
    return VelocityField(
        func=_abc_func(params),
        label=label,
        spatial_period=(TWO_PI, TWO_PI, TWO_PI),
        time_span=span,
        abc=params,
    )


def steady_abc(A=np.sqrt(3.0), B=np.sqrt(2.0), C=1.0) -> VelocityField:
    return abc_field(AbcParams(float(A), float(B), float(C)))


def periodic_abc(A=np.sqrt(3.0), B=np.sqrt(2.0), C=1.0, amplitude=0.1) -> VelocityField:
    return abc_field(AbcParams(float(A), float(B), float(C), "sinusoidal", amplitude))


def chaotic_abc(
    signal: ForcingSignal,
    A=np.sqrt(3.0),
    B=np.sqrt(2.0),
    C=1.0,
    printed_y_equation: bool = False,
) -> VelocityField:
    """ABC flow with A replaced by A + F(t) for a tabulated chaotic F.

    ``printed_y_equation`` switches the y-component to B sin x + A(A+F) cos z.
    """
    return abc_field(
        AbcParams(float(A), float(B), float(C), "tabulated", signal=signal,
                  printed_y_equation=printed_y_equation)
    )


def parallel_shear_field(profiles: ShearProfiles, label: str = "parallel-shear") -> VelocityField:
    def func(X, t):
        z = X[..., 2]
        u = np.broadcast_to(profiles.u(z, t), z.shape)
        v = np.broadcast_to(profiles.v(z, t), z.shape)
        w = np.broadcast_to(profiles.w(t), z.shape)
        return np.stack([u, v, w], axis=-1).astype(float)

    return VelocityField(func=func, label=label, profiles=profiles)


def linear_field(M, label: str = "linear") -> VelocityField:
    """v(x) = M x."""
    M = np.asarray(M, dtype=float)

    def func(X, t):
        return X @ M.T

    return VelocityField(func=func, label=label)


def zero_field() -> VelocityField:
    return VelocityField(func=lambda X, t: np.zeros_like(X), label="zero")


def eval_velocity(field: VelocityField, x: Sequence[float], t: float) -> np.ndarray:
    field.check_time(t)
    return field(np.asarray(x, dtype=float), t)


def divergence(field: VelocityField, x, t: float, h: float = 1e-4) -> float:
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    field.check_time(t)
    total = 0.0
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        total += (field(x + e, t)[i] - field(x - e, t)[i]) / (2 * h)
    return float(total)


DUFFING_INITIAL_STATE = (1.0, 0.0)
DUFFING_TRANSIENT = 50.0
FORCING_TARGET_AMPLITUDE = 0.1


def generate_duffing_forcing(
    delta: float = 0.15,
    gamma: float = 0.3,
    omega: float = 1.0,
    kappa: Optional[float] = None,
    t_span: tuple[float, float] = (0.0, 200.0),
    dt: float = 0.01,
    initial_state: tuple[float, float] = DUFFING_INITIAL_STATE,
    transient: float = DUFFING_TRANSIENT,
) -> ForcingSignal:
    """Sample F(t) = kappa * q(t) from the forced, damped Duffing oscillator

        q'' = q - q^3 - delta q' + gamma cos(omega t).

    Integration starts at ``t_span[0] - transient`` from ``initial_state``; the
    transient is discarded. With ``kappa=None`` the output is scaled so that
    max |F| equals 0.1.
    """
    t_start, t_end = map(float, t_span)
    if not t_end > t_start:
        raise ValueError("t_span must be nonempty")
    if dt <= 0:
        raise ValueError("dt must be positive")

    def rhs(t, s):
        q, p = s
        return [p, q - q**3 - delta * p + gamma * np.cos(omega * t)]

    n = int(round((t_end - t_start) / dt))
    t_out = t_start + dt * np.arange(n + 1)
    t_out[-1] = min(t_out[-1], t_end) if n > 0 else t_end
    sol = solve_ivp(
        rhs,
        (t_start - transient, t_out[-1]),
        list(initial_state),
        method="DOP853",
        t_eval=t_out,
        rtol=1e-10,
        atol=1e-12,
    )
    q = sol.y[0]
    if kappa is None:
        peak = np.max(np.abs(q))
        kappa = FORCING_TARGET_AMPLITUDE / peak if peak > 0 else 0.0
    return ForcingSignal(t_out, kappa * q)
