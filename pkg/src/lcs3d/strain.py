"""Cauchy-Green eigen-frames, normal repulsion / tangential shear, shear
normals, and helicity / Frobenius fields on reference planes."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .integrator import IntegratorConfig, cauchy_green, flow_map_and_gradient

GAP_TOL = 1e-6
RESOLUTION_TOL = 1e-4


class DegenerateFrameError(ValueError):
    """Eigenvalues not pairwise distinct, or tensor not positive definite."""


@dataclass
class EigenFrame:
    lam: np.ndarray  # ascending (3,)
    xi: np.ndarray  # rows are unit eigenvectors
    in_U: bool

    @property
    def xi1(self):
        return self.xi[0]

    @property
    def xi2(self):
        return self.xi[1]

    @property
    def xi3(self):
        return self.xi[2]


@dataclass
class ShearNormals:
    n_plus: np.ndarray
    n_minus: np.ndarray


def canonical_sign(v: np.ndarray) -> np.ndarray:
    """Flip vectors (..., 3) so that their largest-magnitude component is positive."""
    idx = np.argmax(np.abs(v), axis=-1)
    lead = np.take_along_axis(v, idx[..., None], axis=-1)
    return np.where(lead < 0, -v, v)


def eigen_frames(C, gap_tol: float = GAP_TOL):
    """Batched eigen-decomposition of symmetric (..., 3, 3) tensors.

    Returns (lam, xi, in_U, ok) where ``xi[..., i, :]`` is the i-th eigenvector
    and ``ok`` flags finite, positive-definite samples.
    """
    C = np.asarray(C, dtype=float)
    finite = np.all(np.isfinite(C), axis=(-1, -2))
    Cs = np.where(finite[..., None, None], C, np.eye(3))
    lam, vec = np.linalg.eigh(Cs)
    xi = canonical_sign(np.swapaxes(vec, -1, -2))
    ok = finite & (lam[..., 0] > 0)
    l3 = lam[..., 2]
    in_U = ok & (lam[..., 1] - lam[..., 0] > gap_tol * l3) & (lam[..., 2] - lam[..., 1] > gap_tol * l3)
    return lam, xi, in_U, ok


def eigen_frame(C, gap_tol: float = GAP_TOL) -> EigenFrame:
    C = np.asarray(C, dtype=float)
    if not np.all(np.isfinite(C)):
        raise ValueError("non-finite entries in Cauchy-Green tensor")
    lam, xi, in_U, ok = eigen_frames(C, gap_tol)
    if not ok:
        raise DegenerateFrameError("tensor is not positive definite (flow map not invertible)")
    return EigenFrame(lam, xi, bool(in_U))


def shear_weights(lam):
    """alpha, beta with n+- = alpha xi1 +- beta xi3."""
    with np.errstate(invalid="ignore", divide="ignore"):  # masked samples become NaN
        r1 = np.sqrt(lam[..., 0])
        r3 = np.sqrt(lam[..., 2])
        return np.sqrt(r1 / (r1 + r3)), np.sqrt(r3 / (r1 + r3))


def shear_vectors(lam, xi):
    a, b = shear_weights(lam)
    return a[..., None] * xi[..., 0, :] + b[..., None] * xi[..., 2, :], \
        a[..., None] * xi[..., 0, :] - b[..., None] * xi[..., 2, :]


def shear_normals(frame: EigenFrame) -> ShearNormals:
    if not frame.in_U:
        raise DegenerateFrameError("shear normals undefined outside U (repeated eigenvalues)")
    n_plus, n_minus = shear_vectors(frame.lam, frame.xi)
    return ShearNormals(n_plus, n_minus)


def _quad(C, n):
    return np.einsum("...i,...ij,...j->...", n, C, n)


def normal_repulsion(C, n0):
    """rho = 1 / sqrt(<n0, C^-1 n0>)."""
    C = np.asarray(C, dtype=float)
    if np.any(np.abs(np.linalg.det(C)) < 1e-300):
        raise np.linalg.LinAlgError("singular Cauchy-Green tensor")
    Cinv = np.linalg.inv(C)
    return 1.0 / np.sqrt(_quad(Cinv, np.asarray(n0, dtype=float)))


def tangential_shear(C, n0):
    """sigma = sqrt(<n0, C n0> - rho^2); a rounding-level negative radicand is clamped."""
    C = np.asarray(C, dtype=float)
    n0 = np.asarray(n0, dtype=float)
    rho = normal_repulsion(C, n0)
    rad = _quad(C, n0) - rho**2
    scale = np.abs(_quad(C, n0))
    rad = np.where((rad < 0) & (rad > -1e-10 * np.maximum(scale, 1.0)), 0.0, rad)
    return np.sqrt(rad)


# --------------------------------------------------------------------------
# lattice derivatives

FAMILIES = ("xi1", "xi2", "xi3", "n+", "n-", "n+xxi2", "n-xxi2")


def frame_vector(lam, xi, which: str):
    """Vector field of the named family built from (lam, xi) stacks."""
    if which in ("xi1", "xi2", "xi3"):
        return xi[..., int(which[-1]) - 1, :]
    n_plus, n_minus = shear_vectors(lam, xi)
    if which == "n+":
        return n_plus
    if which == "n-":
        return n_minus
    if which == "n+xxi2":
        return np.cross(n_plus, xi[..., 1, :])
    if which == "n-xxi2":
        return np.cross(n_minus, xi[..., 1, :])
    raise ValueError(f"unknown vector family {which!r}")


def _shift(a, axis, step):
    """b[i] = a[i + step] along ``axis`` (wrapped; caller masks the seam)."""
    return np.roll(a, -step, axis=axis)


def _inbounds(shape, axis, step):
    idx = np.arange(shape[axis]) + step
    ok = (idx >= 0) & (idx < shape[axis])
    s = [1] * len(shape)
    s[axis] = shape[axis]
    return np.broadcast_to(ok.reshape(s), shape)


def _sign_align(v, ref):
    d = np.einsum("...i,...i->...", v, ref)
    return np.where(d[..., None] < 0, -v, v)


def _jacobian(center, neighbour, shape, spacing, valid):
    """J[..., a, k] = d V_a / d x_k over a (nz, ny, nx) lattice.

    ``neighbour(axis, step)`` returns the neighbour's vector already aligned to
    the centre. Central differences where both neighbours are valid,
    one-sided otherwise; points with neither are flagged invalid.
    """
    Vc = center
    J = np.zeros(shape + (3, 3))
    ok = valid.copy()
    # derivative index k=0 (x) -> array axis 2, k=1 (y) -> 1, k=2 (z) -> 0
    for k, axis in ((0, 2), (1, 1), (2, 0)):
        h = spacing[axis]
        f_ok = _inbounds(shape, axis, +1) & _shift(valid, axis, +1)
        b_ok = _inbounds(shape, axis, -1) & _shift(valid, axis, -1)
        Vf = neighbour(axis, +1)
        Vb = neighbour(axis, -1)
        both = (f_ok & b_ok)[..., None]
        d = np.where(
            both,
            (Vf - Vb) / (2 * h),
            np.where(f_ok[..., None], (Vf - Vc) / h, (Vc - Vb) / h),
        )
        J[..., :, k] = d
        ok &= f_ok | b_ok
    return J, ok


def curl_from_jacobian(J):
    return np.stack(
        [J[..., 2, 1] - J[..., 1, 2], J[..., 0, 2] - J[..., 2, 0], J[..., 1, 0] - J[..., 0, 1]],
        axis=-1,
    )


def lattice_jacobian(V, spacing, valid=None, align=True):
    """Jacobian of a sampled vector field V of shape (nz, ny, nx, 3).

    ``spacing`` is (hz, hy, hx). With ``align`` each neighbour is sign-flipped
    to agree with the centre vector (orientation-free direction fields).
    """
    V = np.asarray(V, dtype=float)
    shape = V.shape[:-1]
    valid = np.ones(shape, bool) if valid is None else np.asarray(valid, bool)

    def neighbour(axis, step):
        nb = _shift(V, axis, step)
        return _sign_align(nb, V) if align else nb

    return _jacobian(V, neighbour, shape, spacing, valid)


def lattice_helicity(V, spacing, valid=None, align=True):
    J, ok = lattice_jacobian(V, spacing, valid, align)
    H = np.einsum("...i,...i->...", curl_from_jacobian(J), V)
    return np.where(ok, H, np.nan)


def lattice_frobenius(X, Y, Z, spacing, valid=None, align=True):
    """<(grad X) Y - (grad Y) X, Z> for sampled fields."""
    JX, okx = lattice_jacobian(X, spacing, valid, align)
    JY, oky = lattice_jacobian(Y, spacing, valid, align)
    br = np.einsum("...ak,...k->...a", JX, Y) - np.einsum("...ak,...k->...a", JY, X)
    F = np.einsum("...a,...a->...", br, Z)
    return np.where(okx & oky, F, np.nan)


def frame_jacobian(lam, xi, which, spacing, valid):
    """Jacobian of a frame-derived family with per-neighbour eigenvector matching.

    Each neighbour's eigenvectors are aligned to the centre's before the family
    vector is formed, so n+ at the neighbour is the continuation of n+ at the
    centre even where canonical signs disagree.
    """
    shape = lam.shape[:-1]
    Vc = frame_vector(lam, xi, which)

    def neighbour(axis, step):
        lam_nb = _shift(lam, axis, step)
        xi_nb = _sign_align(_shift(xi, axis, step), xi)
        return _sign_align(frame_vector(lam_nb, xi_nb, which), Vc)

    J, ok = _jacobian(Vc, neighbour, shape, spacing, valid)
    return Vc, J, ok


# --------------------------------------------------------------------------
# deformation grid

HELICITY_FAMILIES = ("xi3", "xi1", "n+", "n-")


@dataclass
class DeformationGrid:
    """Flow-map data on the plane z = s1 plus auxiliary layers z = s1 -+ h_z.

    Layered arrays have leading shape (3, ny, nx); layer 1 is the plane itself.
    """

    s1: float
    t0: float
    T: float
    x: np.ndarray
    y: np.ndarray
    h_z: float
    F: np.ndarray
    gradF: np.ndarray
    C: np.ndarray
    lam: np.ndarray
    xi: np.ndarray
    valid: np.ndarray  # finite, positive definite and resolved
    in_U: np.ndarray
    gap_tol: float = GAP_TOL
    error: Optional[np.ndarray] = None  # estimated relative spectral error
    resolution_tol: float = RESOLUTION_TOL
    helicity: dict = field(default_factory=dict)
    normal: tuple = (0.0, 0.0, 1.0)

    @property
    def nx(self) -> int:
        return self.x.size

    @property
    def ny(self) -> int:
        return self.y.size

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def dy(self) -> float:
        return float(self.y[1] - self.y[0])

    @property
    def spacing(self):
        return (self.h_z, self.dy, self.dx)

    @property
    def mask(self) -> np.ndarray:
        """Usable points of the main layer."""
        return self.in_U[1]

    @property
    def n_plus(self):
        return shear_vectors(self.lam, self.xi)[0]

    @property
    def n_minus(self):
        return shear_vectors(self.lam, self.xi)[1]

    def positions(self, layer: int = 1) -> np.ndarray:
        X, Y = np.meshgrid(self.x, self.y)
        z = self.s1 + (layer - 1) * self.h_z
        return np.stack([X, Y, np.full_like(X, z)], axis=-1)

    def contains(self, p) -> bool:
        return (self.x[0] <= p[0] <= self.x[-1]) and (self.y[0] <= p[1] <= self.y[-1])


def sample_plane(
    field,
    s1: float,
    nx: int,
    ny: int,
    t0: float,
    T: float,
    cfg: IntegratorConfig = IntegratorConfig(),
    extent=None,
    h_z: Optional[float] = None,
    gap_tol: float = GAP_TOL,
    workers: int = 1,
    helicity: bool = True,
    resolution_tol: float = RESOLUTION_TOL,
) -> DeformationGrid:
    """Flow map, gradient, Cauchy-Green tensor and eigen-frames on z = s1.

    ``extent`` = (xmin, xmax, ymin, ymax) defaults to the field's domain box.
    Samples whose estimated spectral error exceeds ``resolution_tol`` (the
    finite-difference gradient no longer resolves the smallest stretch) are
    masked along with non-positive-definite and repeated-eigenvalue samples.
    """
    if nx < 8 or ny < 8:
        raise ValueError("grid needs at least 8 x 8 points")
    if extent is None:
        (xa, xb), (ya, yb) = field.domain[0], field.domain[1]
    else:
        xa, xb, ya, yb = extent
    x = np.linspace(xa, xb, nx)
    y = np.linspace(ya, yb, ny)
    if h_z is None:
        h_z = float(min(x[1] - x[0], y[1] - y[0]))
    X, Y = np.meshgrid(x, y)
    pts = np.stack(
        [np.stack([X, Y, np.full_like(X, s1 + dz)], axis=-1) for dz in (-h_z, 0.0, h_z)]
    )
    Fv, grad, err = flow_map_and_gradient(field, pts.reshape(-1, 3), t0, t0 + T, cfg, workers,
                                          return_error=True)
    shape = (3, ny, nx)
    grad = grad.reshape(shape + (3, 3))
    err = err.reshape(shape)
    with np.errstate(invalid="ignore", over="ignore"):
        C = np.where(np.isfinite(grad).all(axis=(-1, -2))[..., None, None],
                     cauchy_green(np.where(np.isfinite(grad), grad, 0.0)), np.nan)
    lam, xi, in_U, ok = eigen_frames(C, gap_tol)
    ok &= err <= resolution_tol
    grid = DeformationGrid(
        s1=float(s1), t0=float(t0), T=float(T), x=x, y=y, h_z=float(h_z),
        F=Fv.reshape(shape + (3,)), gradF=grad, C=C, lam=lam, xi=xi,
        valid=ok, in_U=in_U & ok, gap_tol=gap_tol, error=err, resolution_tol=resolution_tol,
    )
    if helicity:
        for which in HELICITY_FAMILIES:
            grid.helicity[which] = helicity_grid(grid, which)
    return grid


def helicity_grid(grid: DeformationGrid, which: str) -> np.ndarray:
    """<curl v, v> on the main layer for v in {xi1, xi3, n+, n-}; NaN where masked."""
    if which not in HELICITY_FAMILIES:
        raise ValueError(f"helicity family must be one of {HELICITY_FAMILIES}")
    Vc, J, ok = frame_jacobian(grid.lam, grid.xi, which, grid.spacing, grid.in_U)
    H = np.einsum("...i,...i->...", curl_from_jacobian(J), Vc)
    H = np.where(ok, H, np.nan)
    return H[1]


TRIPLES = {
    "xi1,xi2,xi3": ("xi1", "xi2", "xi3"),
    "xi2,xi3,xi1": ("xi2", "xi3", "xi1"),
    "xi2,n+xxi2,n+": ("xi2", "n+xxi2", "n+"),
    "xi2,n-xxi2,n-": ("xi2", "n-xxi2", "n-"),
}


def frobenius_grid(grid: DeformationGrid, triple: str) -> np.ndarray:
    """<(grad X) Y - (grad Y) X, Z> on the main layer for a frame triple."""
    if triple not in TRIPLES:
        raise ValueError(f"triple must be one of {tuple(TRIPLES)}")
    a, b, c = TRIPLES[triple]
    X, JX, okx = frame_jacobian(grid.lam, grid.xi, a, grid.spacing, grid.in_U)
    Y, JY, oky = frame_jacobian(grid.lam, grid.xi, b, grid.spacing, grid.in_U)
    Z = frame_vector(grid.lam, grid.xi, c)
    br = np.einsum("...ak,...k->...a", JX, Y) - np.einsum("...ak,...k->...a", JY, X)
    F = np.einsum("...a,...a->...", br, Z)
    return np.where(okx & oky, F, np.nan)[1]


# --------------------------------------------------------------------------
# binary persistence

MAGIC = b"LCS3DGRD"
VERSION = 1
_HEADER = struct.Struct("<8sHHII5d4x")  # 64 bytes
GRID_FIELDS = (
    ("meta", "x_min y_min h_z gap_tol n_x n_y n_z resolution_tol"),
    ("x", "nx"),
    ("y", "ny"),
    ("F", "3 x ny x nx x 3"),
    ("gradF", "3 x ny x nx x 3 x 3"),
    ("C", "3 x ny x nx x 3 x 3"),
    ("lam", "3 x ny x nx x 3"),
    ("xi", "3 x ny x nx x 3 x 3 (row i = eigenvector i)"),
    ("valid", "3 x ny x nx (1.0 = finite, positive definite)"),
    ("in_U", "3 x ny x nx (1.0 = usable: valid and distinct eigenvalues)"),
    ("error", "3 x ny x nx (estimated relative spectral error)"),
    ("H_xi3", "ny x nx (NaN = masked)"),
    ("H_xi1", "ny x nx (NaN = masked)"),
    ("H_n+", "ny x nx (NaN = masked)"),
    ("H_n-", "ny x nx (NaN = masked)"),
)


def save_grid(grid: DeformationGrid, path) -> None:
    path = Path(path)
    header = _HEADER.pack(MAGIC, VERSION, 0, grid.nx, grid.ny, grid.s1, grid.t0, grid.T,
                          grid.dx, grid.dy)
    nan = np.full((grid.ny, grid.nx), np.nan)
    meta = np.array([grid.x[0], grid.y[0], grid.h_z, grid.gap_tol, *grid.normal,
                     grid.resolution_tol])
    err = grid.error if grid.error is not None else np.zeros(grid.valid.shape)
    blocks = [meta, grid.x, grid.y, grid.F, grid.gradF, grid.C, grid.lam, grid.xi,
              grid.valid.astype(float), grid.in_U.astype(float), err]
    blocks += [grid.helicity.get(k, nan) for k in HELICITY_FAMILIES]
    with open(path, "wb") as fh:
        fh.write(header)
        for b in blocks:
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    with open(path.with_suffix(path.suffix + ".txt"), "w") as fh:
        fh.write(f"# {MAGIC.decode()} v{VERSION}: 64-byte header "
                 "(magic, u16 version, u16 flags, u32 nx, u32 ny, f64 s1, t0, T, dx, dy, pad)\n")
        fh.write("# then little-endian float64 blocks, row-major, in this order:\n")
        for name, desc in GRID_FIELDS:
            fh.write(f"{name}\t{desc}\n")
        fh.write("# mask convention: a point is usable iff in_U == 1 on all layers it touches;"
                 " helicity is NaN where it could not be formed\n")


def load_grid(path) -> DeformationGrid:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, _flags, nx, ny, s1, t0, T, dx, dy = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a deformation grid file")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    pos = 0

    def take(shape):
        nonlocal pos
        n = int(np.prod(shape))
        out = data[pos:pos + n].reshape(shape).copy()
        pos += n
        return out

    meta = take((8,))
    x = take((nx,))
    y = take((ny,))
    L = (3, ny, nx)
    F = take(L + (3,))
    gradF = take(L + (3, 3))
    C = take(L + (3, 3))
    lam = take(L + (3,))
    xi = take(L + (3, 3))
    valid = take(L) > 0.5
    in_U = take(L) > 0.5
    err = take(L)
    hel = {k: take((ny, nx)) for k in HELICITY_FAMILIES}
    return DeformationGrid(
        s1=s1, t0=t0, T=T, x=x, y=y, h_z=float(meta[2]), F=F, gradF=gradF, C=C,
        lam=lam, xi=xi, valid=valid, in_U=in_U, gap_tol=float(meta[3]), helicity=hel,
        normal=tuple(meta[4:7]), error=err, resolution_tol=float(meta[7]),
    )
