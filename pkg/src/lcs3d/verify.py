"""Self-checks against independent ground truth, shared by the CLI ``verify``
command and the test-suite."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .barriers import advect_surface, build_surface, mesh_area, predicted_area, vertex_spectra
from .flows import ShearProfiles, parallel_shear_field
from .integrator import IntegratorConfig, cauchy_green, flow_map_and_gradient
from .oracle import brute_max_repulsion, brute_max_shear, parallel_shear_cg, random_spd
from .strain import (eigen_frame, lattice_frobenius, lattice_helicity, normal_repulsion,
                     shear_normals, tangential_shear)


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: dict = field(default_factory=dict)

    @classmethod
    def below(cls, name, value, threshold, **detail) -> "Check":
        return cls(name, float(value), float(threshold), bool(value <= threshold), detail)

    def to_dict(self) -> dict:
        return asdict(self)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: {self.value:.3e} (threshold {self.threshold:.3e})"


# --------------------------------------------------------------------------
# parallel shear flows


def random_shear_profiles(rng: np.random.Generator) -> ShearProfiles:
    """Smooth random u(z,t), v(z,t) (two Fourier modes each) and w(t)."""
    au, av = rng.normal(0, 0.6, 2), rng.normal(0, 0.6, 2)
    ku, kv = rng.uniform(0.5, 2.0, 2), rng.uniform(0.5, 2.0, 2)
    cu, cv = rng.uniform(0, 2 * np.pi, 2), rng.uniform(0, 2 * np.pi, 2)
    om = rng.uniform(0.2, 1.5)
    w0, w1 = rng.normal(0, 0.3), rng.normal(0, 0.3)

    def u(z, t):
        return sum(au[k] * np.sin(ku[k] * z + cu[k] + om * t) for k in range(2))

    def uz(z, t):
        return sum(au[k] * ku[k] * np.cos(ku[k] * z + cu[k] + om * t) for k in range(2))

    def v(z, t):
        return sum(av[k] * np.cos(kv[k] * z + cv[k] - om * t) for k in range(2))

    def vz(z, t):
        return sum(-av[k] * kv[k] * np.sin(kv[k] * z + cv[k] - om * t) for k in range(2))

    def w(t):
        return w0 + w1 * np.cos(om * t)

    return ShearProfiles(u, v, w, uz, vz)


def check_parallel_shear(n_sets: int = 10, n_points: int = 4, T: float = 2.0, seed: int = 0,
                         cfg: IntegratorConfig = IntegratorConfig()) -> list[Check]:
    """Numerical vs analytic Cauchy-Green tensors on random parallel shear flows.

    Entrywise relative error is |dC_ij| / max(|C_ij|, 1) (the analytic zeros
    are compared in absolute terms).
    """
    rng = np.random.default_rng(seed)
    rel, lam2 = 0.0, 0.0
    for _ in range(n_sets):
        prof = random_shear_profiles(rng)
        fld = parallel_shear_field(prof)
        X0 = rng.uniform(-2, 2, (n_points, 3))
        t0 = float(rng.uniform(0, 1))
        _, grad = flow_map_and_gradient(fld, X0, t0, t0 + T, cfg)
        Cn = cauchy_green(grad)
        for p, C in zip(X0, Cn):
            Ca = parallel_shear_cg(prof, p[2], t0, T, cfg.dt).C
            rel = max(rel, float(np.max(np.abs(C - Ca) / np.maximum(np.abs(Ca), 1.0))))
            lam2 = max(lam2, abs(float(np.linalg.eigvalsh(C)[1]) - 1.0))
    return [Check.below("parallel-shear CG entrywise relative error", rel, 1e-5),
            Check.below("parallel-shear |lambda2 - 1|", lam2, 1e-6)]


# --------------------------------------------------------------------------
# extremum and identity checks


def _angle_deg(u, v) -> float:
    c = abs(float(np.dot(u, v))) / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(np.degrees(np.arccos(min(1.0, c))))


def check_extrema(n: int = 100, N: int = 20000, seed: int = 1) -> list[Check]:
    rng = np.random.default_rng(seed)
    d_rho = d_sig = a_rho = a_sig = 0.0
    for _ in range(n):
        C = random_spd(rng)
        fr = eigen_frame(C)
        sn = shear_normals(fr)
        l1, l3 = fr.lam[0], fr.lam[2]
        v, rho = brute_max_repulsion(C, N)
        d_rho = max(d_rho, abs(rho - np.sqrt(l3)))
        a_rho = max(a_rho, _angle_deg(v, fr.xi[2]))
        v, sig = brute_max_shear(C, N)
        d_sig = max(d_sig, abs(sig - abs(np.sqrt(l3) - np.sqrt(l1))))
        a_sig = max(a_sig, min(_angle_deg(v, sn.n_plus), _angle_deg(v, sn.n_minus)))
    return [Check.below("max rho vs sqrt(lambda3)", d_rho, 1e-3),
            Check.below("argmax rho vs xi3 [deg]", a_rho, 1.0),
            Check.below("max sigma vs |sqrt(lambda3) - sqrt(lambda1)|", d_sig, 1e-3),
            Check.below("argmax sigma vs n+- [deg]", a_sig, 1.0)]


def check_identity(n: int = 10000, seed: int = 2) -> Check:
    """sigma^2 + rho^2 = <n0, C n0>, relative to <n0, C n0>."""
    rng = np.random.default_rng(seed)
    C = np.stack([random_spd(rng) for _ in range(n)])
    n0 = rng.normal(size=(n, 3))
    n0 /= np.linalg.norm(n0, axis=1, keepdims=True)
    q = np.einsum("ni,nij,nj->n", n0, C, n0)
    lhs = tangential_shear(C, n0) ** 2 + normal_repulsion(C, n0) ** 2
    return Check.below("sigma^2 + rho^2 - <n0, C n0>", np.max(np.abs(lhs - q) / q), 1e-10)


# --------------------------------------------------------------------------
# helicity and Frobenius


def check_linear_helicity(n: int = 50, lo: float = -1.0, hi: float = 1.0) -> Check:
    """H of v = (y, z, x) against -(x + y + z) on an n^3 lattice."""
    g = np.linspace(lo, hi, n)
    Z, Y, X = np.meshgrid(g, g, g, indexing="ij")
    V = np.stack([Y, Z, X], axis=-1)
    h = float(g[1] - g[0])
    H = lattice_helicity(V, (h, h, h), align=False)
    err = float(np.nanmax(np.abs(H + X + Y + Z)))
    return Check.below("linear-field helicity error", err, 10 * h * h, h=h)


def rotation_frame(n: int, lo: float = 0.0, hi: float = 1.0):
    """Smooth right-handed orthonormal frame fields (X, Y, Z) on an n^3 lattice."""
    g = np.linspace(lo, hi, n)
    Zc, Yc, Xc = np.meshgrid(g, g, g, indexing="ij")
    a = np.sin(2 * Xc) * np.cos(Yc) + 0.5 * Zc
    b = 0.7 * np.sin(Yc + Zc)
    c = 0.3 * np.cos(Xc)
    ca, sa, cb, sb, cc, sc = np.cos(a), np.sin(a), np.cos(b), np.sin(b), np.cos(c), np.sin(c)
    R = np.empty(Xc.shape + (3, 3))
    R[..., 0, 0], R[..., 0, 1], R[..., 0, 2] = ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc
    R[..., 1, 0], R[..., 1, 1], R[..., 1, 2] = sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc
    R[..., 2, 0], R[..., 2, 1], R[..., 2, 2] = -sb, cb * sc, cb * cc
    h = float(g[1] - g[0])
    return R[..., :, 0], R[..., :, 1], R[..., :, 2], (h, h, h), (Xc, Yc, Zc)


def _coarse(a):
    return a[::2, ::2, ::2]


def check_frobenius(n: int = 41, factor: float = 5.0) -> list[Check]:
    """Frobenius bracket vs helicity of Z, and phi^2 scaling of helicity.

    The finite-difference error of each lattice quantity is estimated by
    Richardson extrapolation against the 2h lattice, |f_h - f_2h| / 3, at
    interior points of the coarse lattice. Reported values are the largest
    ratio of discrepancy to estimate (pass when <= ``factor``).
    """
    if n % 2 == 0:
        raise ValueError("lattice size must be odd")
    X, Y, Z, sp, (Xc, Yc, Zc) = rotation_frame(n)
    sp2 = tuple(2 * s for s in sp)
    inner = (slice(1, -1),) * 3
    F = lattice_frobenius(X, Y, Z, sp)
    H = lattice_helicity(Z, sp)
    F2 = lattice_frobenius(_coarse(X), _coarse(Y), _coarse(Z), sp2)
    H2 = lattice_helicity(_coarse(Z), sp2)
    eF = np.abs(_coarse(F) - F2)[inner] / 3
    eH = np.abs(_coarse(H) - H2)[inner] / 3
    d = np.abs(_coarse(F) - _coarse(H))[inner]
    r1 = float(np.max(d / np.maximum(eF + eH, 1e-300)))

    phi = 1.5 + 0.5 * np.sin(3 * Xc) * np.cos(2 * Yc) + 0.2 * Zc
    Hp = lattice_helicity(phi[..., None] * Z, sp)
    Hp2 = lattice_helicity(_coarse(phi[..., None] * Z), sp2)
    e = (np.abs(_coarse(Hp) - Hp2) + _coarse(phi) ** 2 * np.abs(_coarse(H) - H2))[inner] / 3
    d = np.abs(_coarse(Hp) - _coarse(phi) ** 2 * _coarse(H))[inner]
    r2 = float(np.max(d / np.maximum(e, 1e-300)))
    flip = float(np.nanmax(np.abs(lattice_helicity(-Z, sp) - H)))
    return [Check.below("Frobenius vs helicity / FD error estimate", r1, factor),
            Check.below("phi^2 helicity scaling / FD error estimate", r2, factor),
            Check.below("helicity sign-flip invariance", flip, 1e-12)]


def oracle_suite(quick: bool = False) -> list[Check]:
    checks = []
    checks += check_parallel_shear(n_sets=3 if quick else 10)
    checks += check_extrema(n=20 if quick else 100)
    checks.append(check_identity(n=1000 if quick else 10000))
    checks.append(check_linear_helicity())
    checks += check_frobenius()
    return checks


# --------------------------------------------------------------------------
# area conservation


def shear_patch(n: int, patch, z: float) -> list[np.ndarray]:
    """Flat square patch of the plane z = const as n stacked x-segments."""
    xa, xb, ya, yb = patch
    xs = np.linspace(xa, xb, n)
    return [np.column_stack([xs, np.full(n, y), np.full(n, z)]) for y in np.linspace(ya, yb, n)]


def area_experiment(profiles: Optional[ShearProfiles] = None, patch=(0.0, 1.0, 0.0, 1.0),
                    z: float = 0.5, n: int = 20, t0: float = 0.0, T: float = 2.0,
                    cfg: IntegratorConfig = IntegratorConfig(), seed: int = 3) -> list[Check]:
    """Advect a flat parallel-shear patch and compare areas with the initial one."""
    if profiles is None:
        profiles = random_shear_profiles(np.random.default_rng(seed))
    fld = parallel_shear_field(profiles)
    surf = build_surface(shear_patch(n, patch, z), M=n, closed=False, kind="shear", t0=t0, T=T)
    a0 = mesh_area(surf)
    a1 = mesh_area(advect_surface(fld, surf, t0, t0 + T, cfg))
    lam, _ = vertex_spectra(fld, surf.vertices, t0, T, cfg)
    ap = predicted_area(surf, lam, "shear")
    return [Check.below("advected patch area relative change", abs(a1 - a0) / a0, 1e-2,
                        initial=a0, advected=a1),
            Check.below("predicted patch area relative change", abs(ap - a0) / a0, 1e-2,
                        initial=a0, predicted=ap)]


def timed(fn, *args, **kw):
    t = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t
