"""Reduced strain-, stretch- and shearlines on a reference plane.

Lines are trajectories of n_P x v where v is xi3, xi1 or one of n+-, built from
bilinearly interpolated eigenvectors. Eigenvectors carry no orientation, so at
every evaluation the four corner frames are sign-aligned to the frame carried
along the line, and the tangent candidate best aligned with the previous step
is taken. All seeds of a batch advance together, one vectorised step at a time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .strain import DeformationGrid, DegenerateFrameError, shear_weights

KINDS = ("strain", "stretch", "shear+", "shear-")
HELICITY_KEY = {"strain": "xi3", "stretch": "xi1", "shear+": "n+", "shear-": "n-"}
MIN_TANGENT = 1e-3  # |n_P x v| below this is treated as a degenerate point


@dataclass(frozen=True)
class LineConfig:
    step: float
    eps0: float
    max_arclength: float
    window: Optional[float] = None  # defaults to 20 steps; inf = mean from the seed
    closure_tol: Optional[float] = None  # defaults to 2 steps
    d0: Optional[float] = None  # defaults to 10 steps
    min_winding: float = 0.9 * 2 * np.pi
    hausdorff_max: bool = False

    def __post_init__(self):
        if self.window is None:
            object.__setattr__(self, "window", 20 * self.step)
        if self.closure_tol is None:
            object.__setattr__(self, "closure_tol", 2 * self.step)
        if self.d0 is None:
            object.__setattr__(self, "d0", 10 * self.step)
        for name in ("step", "eps0", "max_arclength", "window", "closure_tol", "d0",
                     "min_winding"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def for_grid(cls, grid: DeformationGrid, eps0: float, domain_width: Optional[float] = None,
                 **kw) -> "LineConfig":
        """Defaults: step = 1e-3 of the domain width (the grid's wider side when
        not given), max_arclength = twice the grid perimeter."""
        if domain_width is None:
            domain_width = max(grid.x[-1] - grid.x[0], grid.y[-1] - grid.y[0])
        kw.setdefault("step", 1e-3 * domain_width)
        kw.setdefault("max_arclength", 4 * (grid.x[-1] - grid.x[0] + grid.y[-1] - grid.y[0]))
        return cls(eps0=eps0, **kw)


@dataclass
class ReducedLine:
    kind: str
    s1: float
    vertices: np.ndarray  # (n, 2) in-plane coordinates
    helicity: np.ndarray  # (n,)
    closed: bool = False
    termination_reason: str = ""
    termination_backward: str = ""
    seed: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def length(self) -> float:
        if len(self.vertices) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.vertices, axis=0), axis=1).sum())

    @property
    def points3d(self) -> np.ndarray:
        return np.column_stack([self.vertices, np.full(len(self.vertices), self.s1)])

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def turning(self) -> float:
        return total_turning(self.vertices)


# --------------------------------------------------------------------------
# interpolation


def _cells(grid: DeformationGrid, P: np.ndarray):
    """Cell index, bilinear weights (m, 4) and inside flag for points P (m, 2)."""
    fx = (P[:, 0] - grid.x[0]) / grid.dx
    fy = (P[:, 1] - grid.y[0]) / grid.dy
    inside = (fx >= 0) & (fx <= grid.nx - 1) & (fy >= 0) & (fy <= grid.ny - 1)
    i = np.clip(np.floor(fx).astype(int), 0, grid.nx - 2)
    j = np.clip(np.floor(fy).astype(int), 0, grid.ny - 2)
    u = np.clip(fx - i, 0.0, 1.0)
    v = np.clip(fy - j, 0.0, 1.0)
    w = np.stack([(1 - u) * (1 - v), u * (1 - v), (1 - u) * v, u * v], axis=1)
    jj = np.stack([j, j, j + 1, j + 1], axis=1)
    ii = np.stack([i, i + 1, i, i + 1], axis=1)
    return jj, ii, w, inside


def _align(v, ref):
    """Flip corner vectors v (m, 4, 3) to agree with ref (m, 3); returns v and signs."""
    s = np.where(np.einsum("mkc,mc->mk", v, ref) < 0, -1.0, 1.0)
    return v * s[..., None], s


def _unit(v):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(n > 0, n, 1.0)


@dataclass
class _Frame:
    ok: np.ndarray
    xi1: np.ndarray
    xi3: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    relsign: np.ndarray  # (m, 4): product of xi1/xi3 flips at each corner
    hel: dict  # corner helicities (m, 4) per family
    w: np.ndarray


def _frame_at(grid: DeformationGrid, P, r1, r3) -> _Frame:
    """Interpolated frame at P with corners aligned to reference vectors r1, r3."""
    jj, ii, w, inside = _cells(grid, P)
    usable = grid.in_U[1][jj, ii].all(axis=1) & inside
    xi = grid.xi[1][jj, ii]  # (m, 4, 3, 3)
    lam = grid.lam[1][jj, ii]
    c1, s1 = _align(xi[:, :, 0], r1)
    c3, s3 = _align(xi[:, :, 2], r3)
    xi1 = _unit(np.einsum("mk,mkc->mc", w, c1))
    xi3 = _unit(np.einsum("mk,mkc->mc", w, c3))
    with np.errstate(invalid="ignore"):
        a, b = shear_weights(np.where(usable[:, None, None], lam, 1.0))
    hel = {k: grid.helicity[k][jj, ii] for k in grid.helicity}
    for h in hel.values():
        usable &= np.isfinite(h).all(axis=1)
    return _Frame(usable, xi1, xi3, np.einsum("mk,mk->m", w, a), np.einsum("mk,mk->m", w, b),
                  s1 * s3, hel, w)


def _tangents(kind, fr: _Frame, family):
    """In-plane tangent candidates (m, c, 2) and their family labels (m, c)."""
    if kind in ("strain", "stretch"):
        v = fr.xi3 if kind == "strain" else fr.xi1
        t = np.stack([-v[:, 1], v[:, 0]], axis=1)
        return np.stack([t, -t], axis=1), np.stack([family, family], axis=1)
    out, fam = [], []
    for s in (1.0, -1.0):
        n = fr.alpha[:, None] * fr.xi1 + s * fr.beta[:, None] * fr.xi3
        t = np.stack([-n[:, 1], n[:, 0]], axis=1)
        out += [t, -t]
        fam += [np.full(len(n), s), np.full(len(n), s)]
    return np.stack(out, axis=1), np.stack(fam, axis=1)


def _choose(kind, fr: _Frame, family, prev_dir):
    """Unit tangent best aligned with prev_dir; ties keep the current family."""
    cand, fam = _tangents(kind, fr, family)
    norm = np.linalg.norm(cand, axis=2)
    unit = cand / np.where(norm > 0, norm, 1.0)[..., None]
    score = np.einsum("mcd,md->mc", unit, prev_dir)
    score = score + 1e-12 * (fam == family[:, None])
    k = np.argmax(score, axis=1)
    r = np.arange(len(k))
    ok = fr.ok & (norm[r, k] > MIN_TANGENT)
    return unit[r, k], fam[r, k], ok


def _helicity_at(kind, fr: _Frame, family):
    """Bilinear helicity of the tracked family; n+/n- swap at corners with odd flips."""
    if kind in ("strain", "stretch"):
        return np.einsum("mk,mk->m", fr.w, fr.hel[HELICITY_KEY[kind]])
    node_fam = family[:, None] * fr.relsign
    H = np.where(node_fam > 0, fr.hel["n+"], fr.hel["n-"])
    return np.einsum("mk,mk->m", fr.w, H)


def _initial_refs(grid, P):
    """Canonical frame at the nearest grid node, used as the first alignment target."""
    i = np.clip(np.rint((P[:, 0] - grid.x[0]) / grid.dx).astype(int), 0, grid.nx - 1)
    j = np.clip(np.rint((P[:, 1] - grid.y[0]) / grid.dy).astype(int), 0, grid.ny - 1)
    xi = grid.xi[1][j, i]
    return xi[:, 0].copy(), xi[:, 2].copy()


def reduced_vector(kind: str, point, grid: DeformationGrid) -> np.ndarray:
    """In-plane tangent (3-vector, z = 0) of the reduced field at ``point``.

    Corner frames are aligned to the nearest node's canonical frame; the sign of
    the result is therefore that of the canonical frame. Raises
    DegenerateFrameError on masked cells or where v is parallel to the normal.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    P = np.asarray(point, dtype=float)[None, :2]
    r1, r3 = _initial_refs(grid, P)
    fr = _frame_at(grid, P, r1, r3)
    if not fr.ok[0]:
        raise DegenerateFrameError("masked or degenerate neighbourhood")
    fam = np.array([1.0 if kind != "shear-" else -1.0])
    cand, _ = _tangents(kind, fr, fam)
    t = cand[0, 0 if kind != "shear-" else 2]
    if np.linalg.norm(t) <= MIN_TANGENT:
        raise DegenerateFrameError("reduced vector vanishes (v parallel to the plane normal)")
    return np.array([t[0], t[1], 0.0])


# --------------------------------------------------------------------------
# seeding


def seed_lattice(grid: DeformationGrid, nx: int, ny: int) -> np.ndarray:
    """Regular (nx x ny) seed lattice over the grid extent, shape (nx * ny, 2)."""
    if nx > grid.nx or ny > grid.ny:
        raise ValueError("seed lattice must not be finer than the grid")
    xs = np.linspace(grid.x[0], grid.x[-1], nx + 2)[1:-1]
    ys = np.linspace(grid.y[0], grid.y[-1], ny + 2)[1:-1]
    X, Y = np.meshgrid(xs, ys)
    return np.column_stack([X.ravel(), Y.ravel()])


def seed_filter(grid: DeformationGrid, seeds, eps0: float, kind: str) -> np.ndarray:
    """Seeds whose interpolated |H| of the kind's field is strictly below eps0."""
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    if seeds.size == 0:
        return seeds.reshape(0, 2)
    P = seeds[:, :2]
    r1, r3 = _initial_refs(grid, P)
    fr = _frame_at(grid, P, r1, r3)
    fam = np.full(len(P), -1.0 if kind == "shear-" else 1.0)
    H = _helicity_at(kind, fr, fam)
    with np.errstate(invalid="ignore"):
        keep = fr.ok & np.isfinite(H) & (np.abs(H) < eps0)
    return P[keep]


# --------------------------------------------------------------------------
# integration


def total_turning(V: np.ndarray) -> float:
    d = np.diff(V, axis=0)
    if len(d) < 2:
        return 0.0
    ang = np.arctan2(d[:, 1], d[:, 0])
    return float(np.sum(np.angle(np.exp(1j * np.diff(ang)))))


CLOSURE_EVERY = 8  # steps between closure checks (each checks the newest vertices)


def _integrate_batch(grid, kind, cfg: LineConfig, seeds, sign: float):
    """Fixed-step RK4 from every seed in direction ``sign``.

    Returns, per seed, (vertices, helicity, termination reason, closure index).
    """
    m = len(seeds)
    P = np.asarray(seeds, dtype=float)[:, :2].copy()
    r1, r3 = _initial_refs(grid, P)
    fam = np.full(m, -1.0 if kind == "shear-" else 1.0)
    fr = _frame_at(grid, P, r1, r3)
    cand, _ = _tangents(kind, fr, fam)
    t0 = cand[:, 0 if kind != "shear-" else 2]
    norm = np.linalg.norm(t0, axis=1)
    ok = fr.ok & (norm > MIN_TANGENT)
    direction = sign * t0 / np.where(norm > 0, norm, 1.0)[:, None]
    prev_dir = direction.copy()
    r1, r3 = fr.xi1.copy(), fr.xi3.copy()
    H0 = _helicity_at(kind, fr, fam)

    h = cfg.step
    nmax = int(np.ceil(cfg.max_arclength / h))
    nwin = int(min(round(cfg.window / h), nmax + 1)) if np.isfinite(cfg.window) else nmax + 1
    nwin = max(1, nwin)
    cap = min(nmax + 1, 1024)
    V = np.zeros((m, cap, 2))
    Hs = np.zeros((m, cap))
    Tc = np.zeros((m, cap))
    S = np.zeros((m, cap))  # prefix sums of |H|
    V[:, 0] = P
    Hs[:, 0] = H0
    S[:, 0] = np.abs(np.nan_to_num(H0))
    n = np.ones(m, int)
    active = ok.copy()
    reason = np.where(ok, "", "degenerate").astype(object)
    closed_at = np.full(m, -1)
    last_check = np.zeros(m, int)

    for step in range(nmax):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        if n.max() >= cap:
            cap = min(2 * cap, nmax + 1)
            V = np.concatenate([V, np.zeros((m, cap - V.shape[1], 2))], axis=1)
            Hs = np.concatenate([Hs, np.zeros((m, cap - Hs.shape[1]))], axis=1)
            Tc = np.concatenate([Tc, np.zeros((m, cap - Tc.shape[1]))], axis=1)
            S = np.concatenate([S, np.zeros((m, cap - S.shape[1]))], axis=1)
        p, d = P[idx], direction[idx]
        R1, R3, fm = r1[idx], r3[idx], fam[idx]
        good = np.ones(idx.size, bool)
        ks = []
        for c, base in ((0.0, None), (0.5, 0), (0.5, 1), (1.0, 2)):
            q = p if base is None else p + c * h * ks[base]
            fq = _frame_at(grid, q, R1, R3)
            u, f_new, okq = _choose(kind, fq, fm, d)
            good &= okq
            ks.append(u)
            if base is None:
                fr0, fam0 = fq, f_new
        delta = h * (ks[0] + 2 * ks[1] + 2 * ks[2] + ks[3]) / 6.0
        seg = _unit(delta)
        q = p + delta
        fq = _frame_at(grid, q, fr0.xi1, fr0.xi3)
        u, f_new, okq = _choose(kind, fq, fam0, seg)
        Hq = _helicity_at(kind, fq, f_new)
        inside = _cells(grid, q)[3]

        ok_step = inside & good & okq
        term = np.full(idx.size, "", dtype=object)
        term[~inside] = "left-domain"
        term[inside & ~(good & okq)] = "degenerate"

        # trailing-window mean of |H| including the candidate vertex
        ni = n[idx]
        lo = np.maximum(ni - (nwin - 1), 0)
        csum = S[idx, ni - 1] - np.where(lo > 0, S[idx, np.maximum(lo - 1, 0)], 0.0)
        avg = (csum + np.abs(np.where(ok_step, Hq, 0.0))) / (ni - lo + 1)
        over = ok_step & ~(avg <= cfg.eps0)
        term[over] = "helicity-exceeded"
        accept = ok_step & ~over

        a = idx[accept]
        na = n[a]
        V[a, na] = q[accept]
        Hs[a, na] = Hq[accept]
        S[a, na] = S[a, na - 1] + np.abs(Hq[accept])
        turn = np.angle(np.exp(1j * (np.arctan2(seg[:, 1], seg[:, 0])
                                     - np.arctan2(prev_dir[idx, 1], prev_dir[idx, 0]))))
        Tc[a, na] = Tc[a, na - 1] + np.where(na > 1, turn[accept], 0.0)
        n[a] += 1
        P[a] = q[accept]
        r1[a], r3[a] = fq.xi1[accept], fq.xi3[accept]
        fam[a] = f_new[accept]
        direction[a] = u[accept]
        prev_dir[a] = seg[accept]

        stop = idx[~accept]
        reason[stop] = term[~accept]
        active[stop] = False

        due = a[(n[a] - last_check[a] >= CLOSURE_EVERY + 3)
                & (np.abs(Tc[a, n[a] - 1]) >= cfg.min_winding)]
        for k in due:
            ci, last_check[k] = _closure_scan(V[k, :n[k]], Tc[k, :n[k]], last_check[k], cfg)
            if ci is not None:
                closed_at[k], n[k] = ci
                reason[k] = "closed"
                active[k] = False
    reason[active] = "max-length"
    out = []
    for k in range(m):
        if not ok[k]:
            out.append((np.zeros((0, 2)), np.zeros(0), "degenerate", -1))
        else:
            out.append((V[k, :n[k]].copy(), Hs[k, :n[k]].copy(), str(reason[k]),
                        int(closed_at[k])))
    return out


def _closure_scan(V, T, start, cfg: LineConfig):
    """Look for a return after turning by at least min_winding.

    Returns ((i, j), resume): the loop is V[i:j] closed back onto V[i], where
    V[j] is the vertex nearest V[i] among the first returning vertices. resume
    is where the next scan should start.
    """
    look = 3
    j = max(start, 10)
    while j + look < len(V):
        far = np.nonzero(np.abs(T[j] - T[:j]) >= cfg.min_winding)[0]
        if far.size:
            d = np.linalg.norm(V[far] - V[j], axis=1)
            if d.min() < cfg.closure_tol:
                i = int(far[np.argmin(d)])
                js = np.arange(j, j + look + 1)
                j = int(js[np.argmin(np.linalg.norm(V[js] - V[i], axis=1))])
                return (i, j), j
        j += 1
    return None, j


def integrate_lines(grid: DeformationGrid, seeds, kind: str, cfg: LineConfig) -> list[ReducedLine]:
    """Integrate reduced lines from each seed in both directions and join them.

    A line that closes on itself going forward is trimmed to one period and not
    continued backward.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    if seeds.size == 0:
        return []
    fwd = _integrate_batch(grid, kind, cfg, seeds, +1.0)
    open_idx = [k for k, f in enumerate(fwd) if f[2] != "closed" and len(f[0])]
    bwd = {}
    if open_idx:
        bwd = dict(zip(open_idx, _integrate_batch(grid, kind, cfg, seeds[open_idx], -1.0)))
    lines = []
    for k, (V, H, why, ci) in enumerate(fwd):
        seed = seeds[k, :2].copy()
        if len(V) == 0:
            lines.append(ReducedLine(kind, grid.s1, np.zeros((0, 2)), np.zeros(0), False,
                                     "degenerate", "degenerate", seed))
            continue
        if why == "closed":
            Vc = np.vstack([V[ci:], V[ci][None]])
            Hc = np.concatenate([H[ci:], H[ci:ci + 1]])  # end snapped to the start
            lines.append(ReducedLine(kind, grid.s1, Vc, Hc, True, "closed", "closed", seed))
            continue
        Vb, Hb, why_b, _ = bwd[k]
        Vj = np.vstack([Vb[:0:-1], V]) if len(Vb) > 1 else V
        Hj = np.concatenate([Hb[:0:-1], H]) if len(Vb) > 1 else H
        line = ReducedLine(kind, grid.s1, Vj, Hj, False, why, why_b, seed)
        closed, Vc, Hc = detect_closed(line, cfg)
        if closed:
            line = ReducedLine(kind, grid.s1, Vc, Hc, True, "closed", "closed", seed)
        lines.append(line)
    return lines


def integrate_line(grid: DeformationGrid, seed, kind: str, cfg: LineConfig) -> ReducedLine:
    return integrate_lines(grid, np.asarray(seed, dtype=float)[None, :2], kind, cfg)[0]


# --------------------------------------------------------------------------
# closure, distance, dedup


def detect_closed(line: ReducedLine, cfg: LineConfig):
    """(closed, vertices, helicity): one trimmed period with the end snapped to the start.

    A later vertex must return within closure_tol of an earlier one after a
    cumulative turning of at least min_winding.
    """
    V = line.vertices
    H = line.helicity
    if len(V) < 10:
        return False, V, H
    d = np.diff(V, axis=0)
    ang = np.arctan2(d[:, 1], d[:, 0])
    cum = np.concatenate([[0.0, 0.0], np.cumsum(np.angle(np.exp(1j * np.diff(ang))))])
    tree = cKDTree(V)
    for j in range(10, len(V)):
        near = [i for i in tree.query_ball_point(V[j], cfg.closure_tol)
                if i < j and abs(cum[j] - cum[i]) >= cfg.min_winding]
        if near:
            i = min(near, key=lambda i: (np.linalg.norm(V[i] - V[j]), i))
            js = np.arange(j, min(j + 4, len(V)))
            j = int(js[np.argmin(np.linalg.norm(V[js] - V[i], axis=1))])
            return True, np.vstack([V[i:j], V[i][None]]), np.concatenate([H[i:j], H[i:i + 1]])
    return False, V, H


def _directed(a: np.ndarray, b: np.ndarray) -> float:
    return float(cKDTree(b).query(a)[0].max())


def hausdorff_distance(a, b, use_max: bool = False) -> float:
    """Sum of the two directed max-min vertex distances (max of them with ``use_max``)."""
    A = a.vertices if isinstance(a, ReducedLine) else np.asarray(a, dtype=float)
    B = b.vertices if isinstance(b, ReducedLine) else np.asarray(b, dtype=float)
    if len(A) == 0 or len(B) == 0:
        raise ValueError("Hausdorff distance needs nonempty lines")
    dab, dba = _directed(A, B), _directed(B, A)
    return max(dab, dba) if use_max else dab + dba


def dedup_lines(lines: Sequence[ReducedLine], d0: float, use_max: bool = False) -> list:
    """Greedy pass by descending length (ties: lexicographic first vertex)."""
    order = sorted(
        (l for l in lines if len(l) > 0),
        key=lambda l: (-l.length, tuple(l.vertices[0])),
    )
    kept: list[ReducedLine] = []
    for line in order:
        if all(hausdorff_distance(line, k, use_max) > d0 for k in kept):
            kept.append(line)
    return kept


def extract_lines(grid: DeformationGrid, kind: str, cfg: LineConfig, seed_dims=(20, 20),
                  closed_only: bool = False) -> list[ReducedLine]:
    """Seed, filter, integrate and deduplicate reduced lines of one kind."""
    seeds = seed_filter(grid, seed_lattice(grid, *seed_dims), cfg.eps0, kind)
    lines = [l for l in integrate_lines(grid, seeds, kind, cfg) if len(l) >= 2]
    if closed_only:
        lines = [l for l in lines if l.closed]
    return dedup_lines(lines, cfg.d0, cfg.hausdorff_max)


# --------------------------------------------------------------------------
# export

CSV_COLUMNS = ("s1", "kind", "line_id", "vertex_index", "x", "y", "z", "helicity", "closed")


def write_lines_csv(lines: Sequence[ReducedLine], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for lid, line in enumerate(lines):
            for k, ((x, y), h) in enumerate(zip(line.vertices, line.helicity)):
                w.writerow([repr(line.s1), line.kind, lid, k, repr(float(x)), repr(float(y)),
                            repr(line.s1), repr(float(h)), int(line.closed)])


def read_lines_csv(path) -> list[ReducedLine]:
    rows: dict = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.setdefault(int(r["line_id"]), []).append(r)
    out = []
    for lid in sorted(rows):
        rs = sorted(rows[lid], key=lambda r: int(r["vertex_index"]))
        V = np.array([[float(r["x"]), float(r["y"])] for r in rs])
        H = np.array([float(r["helicity"]) for r in rs])
        closed = rs[0]["closed"] == "1"
        out.append(ReducedLine(rs[0]["kind"], float(rs[0]["s1"]), V, H, closed,
                               "closed" if closed else ""))
    return out
