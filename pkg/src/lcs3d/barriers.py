"""Barrier surfaces from reduced lines on plane families: chain matching,
stitching, toroidal embedding, areas, and advection experiments."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .integrator import IntegratorConfig, advect, flow_map_and_gradient, trajectories
from .lines import LineConfig, ReducedLine, extract_lines, hausdorff_distance
from .strain import sample_plane

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PlaneFamily:
    s1: tuple
    axis: str = "z"

    def __post_init__(self):
        s = tuple(float(v) for v in self.s1)
        if len(s) == 0:
            raise ValueError("plane family is empty")
        if np.any(np.diff(s) <= 0):
            raise ValueError("plane offsets must be strictly increasing")
        if self.axis != "z":
            raise ValueError("only z = s1 plane families are supported")
        object.__setattr__(self, "s1", s)

    @classmethod
    def uniform(cls, lo: float, hi: float, n: int) -> "PlaneFamily":
        return cls(tuple(np.linspace(lo, hi, n)))

    @classmethod
    def periodic(cls, n: int, period: float = TWO_PI) -> "PlaneFamily":
        """s1 = k period / n for k = 0..n-1."""
        return cls(tuple(period * np.arange(n) / n))


@dataclass
class BarrierSurface:
    kind: str
    curves: list  # (M, 3) arrays, one per plane
    vertices: np.ndarray  # (n, 3)
    faces: np.ndarray  # (f, 3) int
    t0: float = 0.0
    T: float = 0.0
    closed: bool = True
    embedding: str = "physical"
    scalars: dict = field(default_factory=dict)  # per-vertex properties

    def with_vertices(self, V: np.ndarray, **kw) -> "BarrierSurface":
        M = self.curves[0].shape[0] if self.curves else 0
        curves = [V[i * M:(i + 1) * M] for i in range(len(self.curves))]
        args = dict(kind=self.kind, curves=curves, vertices=V, faces=self.faces.copy(),
                    t0=self.t0, T=self.T, closed=self.closed, embedding=self.embedding,
                    scalars=dict(self.scalars))
        args.update(kw)
        return BarrierSurface(**args)


@dataclass
class Chain:
    curves: list  # ReducedLine per plane
    s1: list
    termination: str = ""  # why the chain stopped before the last plane, if it did


# --------------------------------------------------------------------------
# plane sweeps


@dataclass
class PlaneResult:
    s1: float
    lines: list = field(default_factory=list)
    error: Optional[str] = None


def sweep_planes(field_, family: PlaneFamily, kind: str, grid_dims, line_eps0: float,
                 t0: float, T: float, extent=None, seed_dims=(20, 20), cfg=IntegratorConfig(),
                 line_kw: Optional[dict] = None, workers: int = 1,
                 closed_only: bool = False) -> list[PlaneResult]:
    """Grid + reduced lines on every plane; a failing plane is recorded and skipped."""
    out = []
    for s1 in family.s1:
        try:
            grid = sample_plane(field_, s1, grid_dims[0], grid_dims[1], t0, T, cfg,
                                extent=extent, workers=workers)
            lcfg = LineConfig.for_grid(grid, line_eps0, **(line_kw or {}))
            lines = []
            for k in (("shear+", "shear-") if kind == "shear" else (kind,)):
                lines += extract_lines(grid, k, lcfg, seed_dims, closed_only)
            out.append(PlaneResult(s1, lines))
        except Exception as exc:  # noqa: BLE001 - recorded per plane
            out.append(PlaneResult(s1, [], f"{type(exc).__name__}: {exc}"))
    return out


# --------------------------------------------------------------------------
# chain matching


def mean_radius(V: np.ndarray) -> float:
    return float(np.linalg.norm(V - V.mean(axis=0), axis=1).mean())


def _match_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Centroid offset plus mean-radius difference (separates nested loops)."""
    return float(np.linalg.norm(a.mean(axis=0) - b.mean(axis=0))
                 + abs(mean_radius(a) - mean_radius(b)))


def match_closed_curves(planes: Sequence[tuple], jump: float = 0.2) -> list[Chain]:
    """Greedy chains of closed lines through consecutive planes.

    ``planes`` is a sequence of (s1, lines) in increasing s1. Every closed line
    on the lowest plane starts a chain; each step appends the nearest closed
    line of the next plane (ties broken by Hausdorff distance, then centroid)
    unless it is farther than ``jump`` times the current curve's mean radius.
    """
    planes = sorted(((float(s), [l for l in ls if l.closed]) for s, ls in planes),
                    key=lambda p: p[0])
    if not planes or not planes[0][1]:
        return []
    starts = sorted(planes[0][1], key=lambda l: tuple(np.round(l.centroid, 12)))
    chains = []
    for start in starts:
        chain = Chain([start], [planes[0][0]])
        for s, cands in planes[1:]:
            cur = chain.curves[-1].vertices
            if not cands:
                chain.termination = f"no closed line on plane {s}"
                break
            scored = sorted(
                cands,
                key=lambda l: (round(_match_distance(cur, l.vertices), 12),
                               hausdorff_distance(cur, l.vertices),
                               tuple(l.centroid)),
            )
            best = scored[0]
            if _match_distance(cur, best.vertices) > jump * mean_radius(cur):
                chain.termination = f"jump exceeded on plane {s}"
                break
            chain.curves.append(best)
            chain.s1.append(s)
        chains.append(chain)
    return chains


def match_open_curves(planes: Sequence[tuple], jump: float = 0.2) -> list[Chain]:
    """Greedy chains of open lines: each step takes the Hausdorff-nearest open
    line of the next plane unless it is farther than ``jump`` times the current
    line's length."""
    planes = sorted(((float(s), [l for l in ls if not l.closed and len(l) >= 2])
                     for s, ls in planes), key=lambda p: p[0])
    if not planes or not planes[0][1]:
        return []
    starts = sorted(planes[0][1], key=lambda l: tuple(np.round(l.vertices[0], 12)))
    chains = []
    for start in starts:
        chain = Chain([start], [planes[0][0]])
        for s, cands in planes[1:]:
            cur = chain.curves[-1]
            if not cands:
                chain.termination = f"no open line on plane {s}"
                break
            d, best = min(((hausdorff_distance(cur, l), l) for l in cands),
                          key=lambda p: (round(p[0], 12), tuple(p[1].centroid)))
            if d > jump * cur.length:
                chain.termination = f"jump exceeded on plane {s}"
                break
            chain.curves.append(best)
            chain.s1.append(s)
        chains.append(chain)
    return chains


def point_in_polygon(p, V: np.ndarray) -> bool:
    """Even-odd rule for a point against a closed polygon (n, 2)."""
    x, y = float(p[0]), float(p[1])
    a, b = V[:, :2], np.roll(V[:, :2], -1, axis=0)
    cross = (a[:, 1] > y) != (b[:, 1] > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = a[:, 0] + (y - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1])
    return bool(np.count_nonzero(cross & (x < xi)) % 2)


def nesting_order(curves: Sequence[np.ndarray]) -> list[list[int]]:
    """Groups of mutually nested closed curves, each listed innermost first."""
    idx = sorted(range(len(curves)), key=lambda i: mean_radius(curves[i]))
    groups: list[list[int]] = []
    for i in idx:
        c = curves[i][:, :2].mean(axis=0)
        for g in groups:
            if point_in_polygon(curves[g[0]][:, :2].mean(axis=0), curves[i]) and \
                    point_in_polygon(c, curves[i]):
                g.append(i)
                break
        else:
            groups.append([i])
    return groups


# --------------------------------------------------------------------------
# surface construction


def resample(V: np.ndarray, M: int, closed: bool) -> np.ndarray:
    """M arclength-uniform points; for closed curves the end is not repeated."""
    V = np.asarray(V, dtype=float)
    if closed and np.linalg.norm(V[0] - V[-1]) > 0:
        V = np.vstack([V, V[:1]])
    seg = np.linalg.norm(np.diff(V, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] <= 1e-12:
        raise ValueError("degenerate curve: zero arclength")
    t = np.linspace(0.0, s[-1], M, endpoint=not closed)
    return np.column_stack([np.interp(t, s, V[:, k]) for k in range(V.shape[1])])


def _align_seam(prev: np.ndarray, cur: np.ndarray, closed: bool) -> np.ndarray:
    if not closed:
        fwd = np.sum((cur - prev) ** 2)
        rev = np.sum((cur[::-1] - prev) ** 2)
        return cur if fwd <= rev else cur[::-1]
    best, best_cost = cur, np.inf
    for cand in (cur, cur[::-1]):
        costs = [np.sum((np.roll(cand, -k, axis=0) - prev) ** 2) for k in range(len(cand))]
        k = int(np.argmin(costs))
        if costs[k] < best_cost - 1e-15:
            best, best_cost = np.roll(cand, -k, axis=0), costs[k]
    return best


def stitch(curves: Sequence[np.ndarray], closed: bool) -> tuple[np.ndarray, np.ndarray]:
    """Triangulate bands between consecutive equal-length curves."""
    M = len(curves[0])
    V = np.vstack(curves)
    faces = []
    ncol = M if closed else M - 1
    for b in range(len(curves) - 1):
        o0, o1 = b * M, (b + 1) * M
        for i in range(ncol):
            j = (i + 1) % M
            faces.append((o0 + i, o0 + j, o1 + i))
            faces.append((o0 + j, o1 + j, o1 + i))
    return V, np.array(faces, dtype=np.int64).reshape(-1, 3)


def build_surface(chain, M: int = 200, closed: Optional[bool] = None, kind: str = "shear",
                  t0: float = 0.0, T: float = 0.0) -> BarrierSurface:
    """Resample, align seams and stitch a chain of plane curves into a mesh.

    ``chain`` is a Chain or a sequence of (n, 3) point arrays.
    """
    if isinstance(chain, Chain):
        pts = [l.points3d for l in chain.curves]
        if closed is None:
            closed = all(l.closed for l in chain.curves)
        hel = [l.helicity for l in chain.curves]
    else:
        pts = [np.asarray(c, dtype=float) for c in chain]
        hel = None
        if closed is None:
            closed = all(np.linalg.norm(c[0] - c[-1]) < 1e-12 for c in pts)
    if len(pts) < 2:
        raise ValueError("a surface needs at least two curves")
    curves = []
    for c in pts:
        r = resample(c, M, closed)
        curves.append(r if not curves else _align_seam(curves[-1], r, closed))
    V, F = stitch(curves, closed)
    scalars = {}
    if hel is not None:
        vals = []
        for c, h, r in zip(pts, hel, curves):
            tree = cKDTree(c)
            vals.append(np.asarray(h)[tree.query(r)[1]])
        scalars["helicity"] = np.concatenate(vals)
    return BarrierSurface(kind, curves, V, F, t0, T, closed, "physical", scalars)


def edge_counts(faces: np.ndarray) -> dict:
    e = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
    uniq, cnt = np.unique(e, axis=0, return_counts=True)
    return {tuple(u): int(c) for u, c in zip(uniq, cnt)}


def is_manifold_strip(surface: BarrierSurface) -> bool:
    """Every edge in at most two faces; interior edges (not on first/last curve
    or open-curve ends) in exactly two."""
    cnt = edge_counts(surface.faces)
    M = surface.curves[0].shape[0]
    n = len(surface.curves)
    last = (n - 1) * M

    def boundary(a, b):
        if (a < M and b < M) or (a >= last and b >= last):
            return True
        if not surface.closed:
            ia, ib = a % M, b % M
            return (ia == ib == 0) or (ia == ib == M - 1)
        return False

    return all(c == 1 if boundary(a, b) else c == 2 for (a, b), c in cnt.items()) and all(
        c <= 2 for c in cnt.values())


def mesh_area(surface_or_vertices, faces=None) -> float:
    if isinstance(surface_or_vertices, BarrierSurface):
        V, F = surface_or_vertices.vertices, surface_or_vertices.faces
    else:
        V, F = np.asarray(surface_or_vertices, dtype=float), np.asarray(faces)
    return float(triangle_areas(V, F).sum())


def triangle_areas(V, F) -> np.ndarray:
    a, b, c = V[F[:, 0]], V[F[:, 1]], V[F[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def vertex_spectra(field_, V: np.ndarray, t0: float, T: float, cfg=IntegratorConfig(),
                   workers: int = 1):
    """Cauchy-Green eigenvalues (n, 3) and det grad F (n,) at mesh vertices."""
    _, grad = flow_map_and_gradient(field_, V, t0, t0 + T, cfg, workers)
    C = np.swapaxes(grad, -1, -2) @ grad
    return np.linalg.eigvalsh(0.5 * (C + np.swapaxes(C, -1, -2))), np.linalg.det(grad)


def predicted_area(surface: BarrierSurface, lam: np.ndarray, kind: str = "shear",
                   detF: Optional[np.ndarray] = None) -> float:
    """Advected area from initial area elements and vertex spectra.

    shear: lambda2^(1/4) weights (volume-preserving case); repelling / attracting:
    |det grad F| / sqrt(lambda3) (resp. sqrt(lambda1)). Triangle weights are the
    mean of their vertex weights.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (len(surface.vertices), 3) or not np.all(np.isfinite(lam)):
        raise ValueError("need finite eigenvalues (n, 3) at every vertex")
    if kind == "shear":
        w = lam[:, 1] ** 0.25
    elif kind in ("repelling", "attracting"):
        d = np.ones(len(lam)) if detF is None else np.abs(np.asarray(detF, dtype=float))
        w = d / np.sqrt(lam[:, 2] if kind == "repelling" else lam[:, 0])
    else:
        raise ValueError("kind must be shear, repelling or attracting")
    F = surface.faces
    return float((triangle_areas(surface.vertices, F) * w[F].mean(axis=1)).sum())


# --------------------------------------------------------------------------
# toroidal embedding


@dataclass
class CenterCurve:
    """Vortex core (x0(z), y0(z)) sampled at increasing z."""

    z: np.ndarray
    x0: np.ndarray
    y0: np.ndarray
    periodic: bool = False  # z samples cover one period of a 2 pi periodic core

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        if np.any(np.diff(self.z) <= 0):
            raise ValueError("center curve z samples must be strictly increasing")

    def covers(self, z) -> bool:
        if self.periodic:
            return True
        z = np.asarray(z)
        return bool(np.all((z >= self.z[0] - 1e-12) & (z <= self.z[-1] + 1e-12)))

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if not self.covers(z):
            raise ValueError("center curve does not cover the requested z range")
        if self.periodic:
            return (np.interp(z, self.z, self.x0, period=TWO_PI),
                    np.interp(z, self.z, self.y0, period=TWO_PI))
        return np.interp(z, self.z, self.x0), np.interp(z, self.z, self.y0)


def center_curve_from_point(field_, p0, t0: float = 0.0, dt_sample: float = 0.01,
                            cfg=IntegratorConfig(), max_time: float = 50.0) -> CenterCurve:
    """Core curve from the trajectory of a vortical center point over one z period.

    x, y are unwrapped relative to the start; the result is periodic in z.
    """
    p0 = np.asarray(p0, dtype=float)
    times = t0 + dt_sample * np.arange(int(max_time / dt_sample) + 1)
    # coarse pass to find the time needed for |z - z0| to reach 2 pi
    X = trajectories(field_, p0[None], times, cfg)[:, 0]
    dz = X[:, 2] - p0[2]
    hit = np.nonzero(np.abs(dz) >= TWO_PI)[0]
    if hit.size == 0:
        raise ValueError("center trajectory does not traverse a full z period")
    X = X[: hit[0] + 1]
    z = np.mod(X[:, 2], TWO_PI)
    order = np.argsort(z)
    z, x0, y0 = z[order], X[order, 0], X[order, 1]
    keep = np.concatenate([[True], np.diff(z) > 1e-12])
    return CenterCurve(z[keep], x0[keep], y0[keep], periodic=True)


def torus_embed_points(P: np.ndarray, center: CenterCurve, R1: float = 3.0, R2: float = 1.0):
    P = np.asarray(P, dtype=float)
    x, y, z = P[..., 0], P[..., 1], P[..., 2]
    x0, y0 = center(z)
    r = x - x0 + R1
    return np.stack([r * np.cos(z), r * np.sin(z), R2 * (y - y0)], axis=-1)


def torus_unembed_points(Q: np.ndarray, center: CenterCurve, z_ref, R1: float = 3.0,
                         R2: float = 1.0):
    """Inverse of torus_embed_points; z is taken on the branch nearest ``z_ref``.

    Valid where x - x0(z) + R1 > 0.
    """
    Q = np.asarray(Q, dtype=float)
    ang = np.arctan2(Q[..., 1], Q[..., 0])
    z_ref = np.broadcast_to(np.asarray(z_ref, dtype=float), ang.shape)
    z = ang + TWO_PI * np.round((z_ref - ang) / TWO_PI)
    r = np.hypot(Q[..., 0], Q[..., 1])
    x0, y0 = center(z)
    return np.stack([r - R1 + x0, Q[..., 2] / R2 + y0, z], axis=-1)


def torus_embed(surface: BarrierSurface, center: CenterCurve, R1: float = 3.0,
                R2: float = 1.0) -> BarrierSurface:
    if not center.covers(surface.vertices[:, 2]):
        raise ValueError("center curve does not cover the surface's z range")
    V = torus_embed_points(surface.vertices, center, R1, R2)
    return surface.with_vertices(V, embedding=f"toroidal(R1={R1}, R2={R2})")


# --------------------------------------------------------------------------
# advection


def advect_surface(field_, surface: BarrierSurface, t0: float, t1: float,
                   cfg=IntegratorConfig(), workers: int = 1) -> BarrierSurface:
    V = advect(field_, surface.vertices, t0, t1, cfg, workers)
    return surface.with_vertices(V, t0=t1)


def _wrap(d, period=TWO_PI):
    return (d + 0.5 * period) % period - 0.5 * period


def slice_returns(field_, curve: np.ndarray, s1: float, t0: float, t1: float,
                  dt_sample: float = 0.01, cfg=IntegratorConfig(), workers: int = 1):
    """Crossings of z = s1 (mod 2 pi) by trajectories from ``curve`` (n, 3), in (x, y)."""
    times = t0 + np.arange(0.0, t1 - t0 + 1e-12, dt_sample)
    X = trajectories(field_, curve, times, cfg, workers)
    z = X[..., 2] - s1
    k = np.floor(z / TWO_PI)
    cross = k[1:] != k[:-1]
    pts = []
    for ti, pi in zip(*np.nonzero(cross)):
        za, zb = z[ti, pi], z[ti + 1, pi]
        level = TWO_PI * max(k[ti, pi], k[ti + 1, pi])
        f = (level - za) / (zb - za)
        pts.append((1 - f) * X[ti, pi, :2] + f * X[ti + 1, pi, :2])
    return np.array(pts).reshape(-1, 2)


def return_distance(returns: np.ndarray, curve_xy: np.ndarray, periodic: bool = True) -> float:
    """Largest distance from a slice return to the closed curve (periodic wrap in x, y)."""
    if len(returns) == 0:
        return 0.0
    C = np.asarray(curve_xy, dtype=float)
    if periodic:
        ref = C.mean(axis=0)
        returns = ref + _wrap(returns - ref)
    dense = resample(C, max(10 * len(C), 2000), closed=True)
    return float(cKDTree(dense).query(returns)[0].max())


# --------------------------------------------------------------------------
# tracer experiment


@dataclass
class TracerExperiment:
    seeds: dict  # class -> (n, 3) initial positions
    times: np.ndarray
    trajectories: dict  # class -> (len(times), n, 3)
    deviation: dict  # class -> (n,) max core distance over time
    tube_bound: float

    def confined(self, cls: str) -> np.ndarray:
        return self.deviation[cls] <= self.tube_bound

    def summary(self) -> dict:
        return {
            "tube_bound": self.tube_bound,
            "classes": {
                c: {
                    "n": int(len(d)),
                    "max_deviation": float(np.max(d)) if len(d) else 0.0,
                    "max_ratio": float(np.max(d) / self.tube_bound) if len(d) else 0.0,
                    "confined": int(np.sum(d <= self.tube_bound)),
                }
                for c, d in self.deviation.items()
            },
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("class,seed,t,x,y,z\n")
            for c, X in self.trajectories.items():
                for ti, t in enumerate(self.times):
                    for si in range(X.shape[1]):
                        x, y, z = X[ti, si]
                        fh.write(f"{c},{si},{t!r},{x!r},{y!r},{z!r}\n")


def outward_normals(V: np.ndarray) -> np.ndarray:
    """In-plane unit normals of a closed polygon pointing away from its interior."""
    V = np.asarray(V, dtype=float)[:, :2]
    t = np.roll(V, -1, axis=0) - np.roll(V, 1, axis=0)
    n = np.column_stack([t[:, 1], -t[:, 0]])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    x, y = V[:, 0], V[:, 1]
    signed_area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    return n if signed_area > 0 else -n


def core_distance(X: np.ndarray, center: Optional[CenterCurve], fallback) -> np.ndarray:
    """Distance in (x, y) from the core at each point's own z (periodic wrap)."""
    if center is None:
        return np.linalg.norm(_wrap(X[..., :2] - fallback), axis=-1)
    x0, y0 = center(np.mod(X[..., 2], TWO_PI))
    return np.hypot(_wrap(X[..., 0] - x0), _wrap(X[..., 1] - y0))


def tracer_experiment(field_, barrier: ReducedLine, offsets: Sequence[float], t0: float,
                      t1: float, n_seeds: int = 4, center: Optional[CenterCurve] = None,
                      dt_sample: float = 0.1, tube_factor: float = 1.5,
                      cfg=IntegratorConfig(), workers: int = 1) -> TracerExperiment:
    """Seeds inside, on and outside a closed barrier curve, advected over [t0, t1].

    Inside/outside seeds sit at distance ``offsets`` along the curve's inward /
    outward normal at ``n_seeds`` evenly spaced curve points. Deviation is the
    largest in-plane distance from the vortex core reached by each tracer; the
    tube bound is ``tube_factor`` times the barrier's largest distance from its
    centroid at t0.
    """
    V = barrier.vertices[:-1] if barrier.closed else barrier.vertices
    c = V.mean(axis=0)
    idx = np.linspace(0, len(V), n_seeds, endpoint=False).astype(int)
    nrm = outward_normals(V)
    s1 = barrier.s1

    def lift(P):
        return np.column_stack([P, np.full(len(P), s1)])

    seeds = {
        "inside": lift(np.vstack([V[idx] - d * nrm[idx] for d in offsets])),
        "on": lift(V[idx]),
        "outside": lift(np.vstack([V[idx] + d * nrm[idx] for d in offsets])),
    }
    times = t0 + np.arange(0.0, t1 - t0 + 1e-12, dt_sample)
    if times[-1] < t1:
        times = np.append(times, t1)
    core_ref = c if center is None else None
    if center is not None:
        # measure distances relative to the core at t0 so a skewed core does not
        # inflate the bound
        r0 = core_distance(lift(V), center, None)
    else:
        r0 = np.linalg.norm(V - c, axis=1)
    bound = tube_factor * float(r0.max())
    trajs, dev = {}, {}
    for cls, S in seeds.items():
        X = trajectories(field_, S, times, cfg, workers)
        trajs[cls] = X
        dev[cls] = core_distance(X, center, core_ref).max(axis=0)
    return TracerExperiment(seeds, times, trajs, dev, bound)


# --------------------------------------------------------------------------
# perturbed strainline experiment


@dataclass
class DriftReport:
    offsets: tuple  # (-delta, 0, +delta)
    surfaces: list  # (times, n, 3) trajectories per curve
    mean_drift: tuple  # mean z displacement at t1 per curve

    def summary(self) -> dict:
        return {"offsets": list(self.offsets), "mean_z_drift": list(self.mean_drift),
                "barrier_smallest": bool(abs(self.mean_drift[1]) < min(
                    abs(self.mean_drift[0]), abs(self.mean_drift[2])))}


def perturbed_strainline_experiment(field_, line: ReducedLine, delta: float, t0: float,
                                    t1: float, direction: str = "normal", n_times: int = 31,
                                    cfg=IntegratorConfig(), workers: int = 1) -> DriftReport:
    """Advect a reduced strainline and its +-delta offsets as material curves.

    ``direction`` is "normal" (in-plane unit normal of the line) or "x".
    Mean z-drift is the mean z displacement of the curve's points at t1.
    """
    V = line.vertices
    if direction == "x":
        nrm = np.tile([1.0, 0.0], (len(V), 1))
    elif direction == "normal":
        t = np.gradient(V, axis=0)
        nrm = np.column_stack([-t[:, 1], t[:, 0]])
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    else:
        raise ValueError("direction must be 'normal' or 'x'")
    times = np.linspace(t0, t1, n_times)
    surfaces, drift = [], []
    for d in (-delta, 0.0, delta):
        P = np.column_stack([V + d * nrm, np.full(len(V), line.s1)])
        X = trajectories(field_, P, times, cfg, workers)
        surfaces.append(X)
        drift.append(float(np.mean(X[-1, :, 2] - P[:, 2])))
    return DriftReport((-delta, 0.0, delta), surfaces, tuple(drift))


def swept_surface(trajs: np.ndarray) -> BarrierSurface:
    """Mesh the surface swept by a material curve: rows are time levels."""
    curves = [trajs[i] for i in range(trajs.shape[0])]
    V, F = stitch(curves, closed=False)
    return BarrierSurface("swept", curves, V, F, closed=False)


# --------------------------------------------------------------------------
# mesh export


def write_ply(surface: BarrierSurface, path) -> None:
    V, F = surface.vertices, surface.faces
    props = [(k, np.asarray(v, dtype=float)) for k, v in sorted(surface.scalars.items())
             if np.asarray(v).shape == (len(V),)]
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"comment kind {surface.kind} embedding {surface.embedding}\n")
        fh.write(f"element vertex {len(V)}\n")
        fh.write("property double x\nproperty double y\nproperty double z\n")
        for k, _ in props:
            fh.write(f"property double {k}\n")
        fh.write(f"element face {len(F)}\nproperty list uchar int vertex_indices\nend_header\n")
        for i, v in enumerate(V):
            vals = [*v] + [p[i] for _, p in props]
            fh.write(" ".join(repr(float(x)) for x in vals) + "\n")
        for f in F:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


def read_ply(path):
    """Vertices, faces and named vertex properties from an ASCII PLY written by write_ply."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    end = lines.index("end_header")
    nv = nf = 0
    names = []
    for ln in lines[:end]:
        p = ln.split()
        if p[:2] == ["element", "vertex"]:
            nv = int(p[2])
        elif p[:2] == ["element", "face"]:
            nf = int(p[2])
        elif p[0] == "property" and p[1] != "list":
            names.append(p[2])
    data = np.array([[float(x) for x in ln.split()] for ln in lines[end + 1:end + 1 + nv]])
    faces = np.array([[int(x) for x in ln.split()[1:]] for ln in lines[end + 1 + nv:end + 1 + nv + nf]])
    data = data.reshape(nv, len(names))
    props = {n: data[:, i] for i, n in enumerate(names)}
    V = np.column_stack([props.pop("x"), props.pop("y"), props.pop("z")])
    return V, faces.reshape(-1, 3), props


def write_vtk(surface: BarrierSurface, path) -> None:
    V, F = surface.vertices, surface.faces
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{surface.kind} barrier surface ({surface.embedding})\nASCII\n")
        fh.write("DATASET POLYDATA\n")
        fh.write(f"POINTS {len(V)} double\n")
        for v in V:
            fh.write(f"{v[0]!r} {v[1]!r} {v[2]!r}\n")
        fh.write(f"POLYGONS {len(F)} {4 * len(F)}\n")
        for f in F:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")
        scal = [(k, np.asarray(v, dtype=float)) for k, v in sorted(surface.scalars.items())
                if np.asarray(v).shape == (len(V),)]
        if scal:
            fh.write(f"POINT_DATA {len(V)}\n")
            for k, v in scal:
                fh.write(f"SCALARS {k} double 1\nLOOKUP_TABLE default\n")
                fh.write("\n".join(repr(float(x)) for x in v) + "\n")
