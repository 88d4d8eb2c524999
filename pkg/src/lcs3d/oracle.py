"""Independent ground truth: the analytic Cauchy-Green tensor of parallel shear
flows, brute-force extremum searches over the unit sphere, and the
angle-formula residual."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.optimize import minimize

from .flows import ShearProfiles
from .strain import DegenerateFrameError, EigenFrame, normal_repulsion, tangential_shear


@dataclass
class AnalyticCG:
    a: float
    b: float

    @property
    def C(self) -> np.ndarray:
        a, b = self.a, self.b
        return np.array([[1.0, 0.0, a], [0.0, 1.0, b], [a, b, a * a + b * b + 1.0]])

    @property
    def gradF(self) -> np.ndarray:
        return np.array([[1.0, 0.0, self.a], [0.0, 1.0, self.b], [0.0, 0.0, 1.0]])


def parallel_shear_cg(profiles: ShearProfiles, z0: float, t0: float, T: float,
                      dt: float = 0.01) -> AnalyticCG:
    """a = int u_z(z(tau), tau) dtau, b = int v_z(z(tau), tau) dtau by composite Simpson,
    with z(tau) = z0 + int w."""
    n = max(2, int(np.ceil(abs(T) / dt)))
    n += n % 2
    tau = np.linspace(t0, t0 + T, n + 1)
    w = np.broadcast_to(np.asarray(profiles.w(tau), dtype=float), tau.shape)
    z = z0 + np.concatenate([[0.0], cumulative_simpson(w, x=tau)])
    uz = np.broadcast_to(np.asarray(profiles.du_dz(z, tau), dtype=float), tau.shape)
    vz = np.broadcast_to(np.asarray(profiles.dv_dz(z, tau), dtype=float), tau.shape)
    return AnalyticCG(float(simpson(uz, x=tau)), float(simpson(vz, x=tau)))


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = i * np.pi * (3.0 - np.sqrt(5.0))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _angles(v):
    return np.array([np.arccos(np.clip(v[2], -1, 1)), np.arctan2(v[1], v[0])])


def _unit(ang):
    p, t = ang
    return np.array([np.sin(p) * np.cos(t), np.sin(p) * np.sin(t), np.cos(p)])


def _check_spectrum(C, tol=1e-9):
    lam = np.linalg.eigvalsh(C)
    if lam[0] <= 0 or np.min(np.diff(lam)) <= tol * lam[-1]:
        raise DegenerateFrameError("brute-force search needs a positive definite tensor "
                                   "with distinct eigenvalues")


def _brute_max(C, score, N):
    dirs = fibonacci_sphere(N)
    vals = score(np.asarray(C)[None], dirs)
    best = dirs[np.argmax(vals)]
    res = minimize(lambda a: -float(score(C, _unit(a))), _angles(best), method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 2000})
    n = _unit(res.x)
    return n, float(score(C, n))


def brute_max_shear(C, N: int = 20000):
    """Maximiser of tangential shear over a Fibonacci-sphere sample plus a local polish."""
    C = np.asarray(C, dtype=float)
    lam = np.linalg.eigvalsh(C)
    if np.allclose(lam, lam[0], rtol=1e-12):
        return np.array([0.0, 0.0, 1.0]), 0.0
    _check_spectrum(C)
    return _brute_max(C, tangential_shear, N)


def brute_max_repulsion(C, N: int = 20000):
    C = np.asarray(C, dtype=float)
    lam = np.linalg.eigvalsh(C)
    if np.allclose(lam, lam[0], rtol=1e-12):
        return np.array([0.0, 0.0, 1.0]), float(np.sqrt(lam[0]))
    _check_spectrum(C)
    return _brute_max(C, normal_repulsion, N)


def angle_formula_lhs(C, phi: float, theta: float) -> float:
    sp, cp, st, ct = np.sin(phi), np.cos(phi), np.sin(theta), np.cos(theta)
    return float(
        C[0, 0] * sp**2 * ct**2 + C[1, 1] * sp**2 * st**2 + C[2, 2] * cp**2
        + 2.0 * (C[0, 1] * sp**2 * st * ct + C[0, 2] * sp * cp * ct + C[1, 2] * sp * cp * st)
    )


def angle_lemma_residual(C, frame: EigenFrame, v) -> float:
    """Angle-formula left-hand side at v = (sin p cos t, sin p sin t, cos p) minus sqrt(l1 l3)."""
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    phi, theta = _angles(v)
    return angle_formula_lhs(np.asarray(C, dtype=float), phi, theta) - float(
        np.sqrt(frame.lam[0] * frame.lam[2])
    )


def random_spd(rng: np.random.Generator, log_spread: float = 2.0) -> np.ndarray:
    """Random SPD matrix with a well separated log-uniform spectrum."""
    while True:
        lam = np.sort(np.exp(rng.uniform(-log_spread, log_spread, 3)))
        if np.min(np.diff(np.log(lam))) > 0.1:
            break
    Q, R = np.linalg.qr(rng.normal(size=(3, 3)))
    Q = Q * np.sign(np.diag(R))
    return (Q * lam) @ Q.T
