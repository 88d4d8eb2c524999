import numpy as np
import pytest
from hypothesis import given, strategies as st

from lcs3d.flows import ShearProfiles, parallel_shear_field, steady_abc, zero_field
from lcs3d.integrator import IntegratorConfig
from lcs3d.oracle import random_spd
from lcs3d.strain import (FAMILIES, DegenerateFrameError, eigen_frame, eigen_frames,
                          frame_vector, frobenius_grid, helicity_grid, lattice_frobenius,
                          lattice_helicity, load_grid, normal_repulsion, sample_plane,
                          save_grid, shear_normals, tangential_shear)

S5 = np.sqrt(5.0)
PARALLEL_C = np.array([[1.0, 0, 1], [0, 1, 0], [1, 0, 2]])


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


spd_seed = st.integers(0, 2**32 - 1)


def test_identity_frame_is_outside_U():
    fr = eigen_frame(np.eye(3))
    assert np.allclose(fr.lam, 1)
    assert not fr.in_U
    with pytest.raises(DegenerateFrameError):
        shear_normals(fr)


def test_parallel_shear_spectrum():
    fr = eigen_frame(PARALLEL_C)
    assert np.allclose(fr.lam, [(3 - S5) / 2, 1.0, (3 + S5) / 2], atol=1e-12)
    assert np.allclose(fr.xi[1], [0, 1, 0], atol=1e-12)
    assert fr.in_U


@pytest.mark.parametrize("C", [np.full((3, 3), np.nan), np.diag([1.0, 0.0, 2.0]),
                               np.diag([-1.0, 1.0, 2.0])])
def test_eigen_frame_errors(C):
    with pytest.raises((ValueError, DegenerateFrameError)):
        eigen_frame(C)


@given(spd_seed)
def test_eigen_frame_invariants(seed):
    C = random_spd(np.random.default_rng(seed), log_spread=3.0)
    fr = eigen_frame(C)
    assert np.all(np.diff(fr.lam) >= 0)
    assert np.abs(fr.xi @ fr.xi.T - np.eye(3)).max() <= 1e-10
    for i in range(3):
        assert np.linalg.norm(C @ fr.xi[i] - fr.lam[i] * fr.xi[i]) <= 1e-8 * fr.lam[2]
        lead = fr.xi[i][np.argmax(np.abs(fr.xi[i]))]
        assert lead > 0


def test_shear_normals_hand_values():
    C = np.diag([0.25, 1.0, 4.0])
    sn = shear_normals(eigen_frame(C))
    assert np.allclose(sn.n_plus, [np.sqrt(0.2), 0, np.sqrt(0.8)])
    assert np.allclose(sn.n_minus, [np.sqrt(0.2), 0, -np.sqrt(0.8)])


@given(spd_seed)
def test_shear_normals_invariants(seed):
    C = random_spd(np.random.default_rng(seed))
    fr = eigen_frame(C)
    sn = shear_normals(fr)
    for n in (sn.n_plus, sn.n_minus):
        assert np.linalg.norm(n) == pytest.approx(1.0, abs=1e-12)
        assert abs(n @ fr.xi[1]) < 1e-12
    r1, r3 = np.sqrt(fr.lam[0]), np.sqrt(fr.lam[2])
    assert (sn.n_plus @ fr.xi[0]) ** 2 == pytest.approx(r1 / (r1 + r3))
    s_p, s_m = tangential_shear(C, sn.n_plus), tangential_shear(C, sn.n_minus)
    assert s_p == pytest.approx(r3 - r1, rel=1e-9)
    assert s_m == pytest.approx(r3 - r1, rel=1e-9)


def test_repulsion_and_shear_on_identity():
    for n in np.random.default_rng(0).normal(size=(10, 3)):
        n = unit(n)
        assert normal_repulsion(np.eye(3), n) == pytest.approx(1.0)
        assert tangential_shear(np.eye(3), n) == pytest.approx(0.0, abs=1e-7)


@given(spd_seed)
def test_eigenvector_values(seed):
    C = random_spd(np.random.default_rng(seed))
    fr = eigen_frame(C)
    assert normal_repulsion(C, fr.xi[2]) == pytest.approx(np.sqrt(fr.lam[2]), rel=1e-10)
    for i in range(3):
        assert tangential_shear(C, fr.xi[i]) == pytest.approx(0.0, abs=1e-5 * np.sqrt(fr.lam[2]))


@given(spd_seed)
def test_repulsion_from_normal_transport(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(3, 3))
    if abs(np.linalg.det(M)) < 1e-2:
        return
    n0 = unit(rng.normal(size=3))
    nt = unit(np.linalg.inv(M).T @ n0)  # advected unit normal
    direct = nt @ (M @ n0)
    assert normal_repulsion(M.T @ M, n0) == pytest.approx(abs(direct), rel=1e-8)


@given(spd_seed)
def test_repulsion_maximised_at_xi3(seed):
    rng = np.random.default_rng(seed)
    C = random_spd(rng)
    n = rng.normal(size=(1000, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    assert np.all(normal_repulsion(C, n) <= np.sqrt(np.linalg.eigvalsh(C)[2]) * (1 + 1e-12))


def test_singular_tensor_raises():
    with pytest.raises(np.linalg.LinAlgError):
        normal_repulsion(np.zeros((3, 3)), [1.0, 0, 0])


def test_batched_frames_match_single():
    rng = np.random.default_rng(5)
    Cs = np.stack([random_spd(rng) for _ in range(6)]).reshape(2, 3, 3, 3)
    lam, xi, in_U, ok = eigen_frames(Cs)
    for idx in np.ndindex(2, 3):
        fr = eigen_frame(Cs[idx])
        assert np.allclose(lam[idx], fr.lam)
        assert np.allclose(xi[idx], fr.xi)


@pytest.mark.parametrize("which", FAMILIES)
def test_frame_vector_unit(which):
    rng = np.random.default_rng(6)
    Cs = np.stack([random_spd(rng) for _ in range(5)])
    lam, xi, _, _ = eigen_frames(Cs)
    v = frame_vector(lam, xi, which)
    assert np.allclose(np.linalg.norm(v, axis=-1), 1.0)


def test_frame_vector_unknown():
    lam, xi, _, _ = eigen_frames(np.eye(3)[None])
    with pytest.raises(ValueError):
        frame_vector(lam, xi, "xi4")


# --------------------------------------------------------------------------
# lattice helicity / Frobenius


def lattice(n=21, lo=-1.0, hi=1.0):
    g = np.linspace(lo, hi, n)
    Z, Y, X = np.meshgrid(g, g, g, indexing="ij")
    h = g[1] - g[0]
    return X, Y, Z, (h, h, h)


def test_helicity_linear_field():
    X, Y, Z, sp = lattice(50)
    H = lattice_helicity(np.stack([Y, Z, X], -1), sp, align=False)
    assert np.nanmax(np.abs(H + X + Y + Z)) <= 10 * sp[0] ** 2


def test_helicity_constant_field_zero():
    X, Y, Z, sp = lattice()
    V = np.broadcast_to(unit([1.0, 2.0, 3.0]), X.shape + (3,))
    assert np.nanmax(np.abs(lattice_helicity(V, sp))) < 1e-14


def test_helicity_sign_alignment_removes_flips():
    """Randomly flipped orientation of a direction field does not change H."""
    X, Y, Z, sp = lattice(31, 0.5, 1.5)
    V = np.stack([Y, Z, X], -1)
    V = V / np.linalg.norm(V, axis=-1, keepdims=True)
    flips = np.where(np.random.default_rng(0).random(X.shape) < 0.5, -1.0, 1.0)
    H0 = lattice_helicity(V, sp)
    H1 = lattice_helicity(V * flips[..., None], sp)
    assert np.allclose(H0, H1, atol=1e-12)


def test_helicity_scaling():
    X, Y, Z, sp = lattice(41, 0.5, 1.5)
    V = np.stack([Y, Z, X], -1)
    V = V / np.linalg.norm(V, axis=-1, keepdims=True)
    phi = 1 + 0.3 * np.sin(2 * X) * np.cos(Y)
    H = lattice_helicity(V, sp)
    Hp = lattice_helicity(phi[..., None] * V, sp)
    inner = (slice(1, -1),) * 3
    assert np.abs(Hp - phi**2 * H)[inner].max() < 10 * sp[0] ** 2


def test_frobenius_constant_frame_zero():
    X, Y, Z, sp = lattice()
    e = np.eye(3)
    F = lattice_frobenius(*(np.broadcast_to(e[i], X.shape + (3,)) for i in range(3)), sp)
    assert np.nanmax(np.abs(F)) == 0.0


def test_frobenius_product_scaling():
    X, Y, Z, sp = lattice(41, 0.5, 1.5)
    a = 0.7 * X + 0.2 * Y * Z
    Xv = np.stack([np.cos(a), np.sin(a), 0 * a], -1)
    Yv = np.stack([-np.sin(a), np.cos(a), 0 * a], -1)
    Zv = np.broadcast_to([0.0, 0.0, 1.0], Xv.shape)
    p1, p2, p3 = 1 + 0.2 * X, 2 - 0.3 * Y, 1 + 0.1 * Z * X
    F = lattice_frobenius(Xv, Yv, Zv, sp)
    Fs = lattice_frobenius(p1[..., None] * Xv, p2[..., None] * Yv, p3[..., None] * Zv, sp)
    inner = (slice(1, -1),) * 3
    assert np.abs(Fs - p1 * p2 * p3 * F)[inner].max() < 1e-10 + 10 * sp[0] ** 2


# --------------------------------------------------------------------------
# plane sampling and persistence


def test_zero_field_grid_fully_masked():
    g = sample_plane(zero_field(), 0.0, 10, 10, 0.0, 1.0)
    assert np.allclose(g.C, np.eye(3))
    assert not g.mask.any()
    assert all(np.isnan(h).all() for h in g.helicity.values())


def test_grid_rejects_small_dims():
    with pytest.raises(ValueError):
        sample_plane(steady_abc(), 0.0, 4, 20, 0.0, 1.0)


def test_parallel_shear_grid_lambda2():
    prof = ShearProfiles(lambda z, t: np.sin(z) + 0.3 * t, lambda z, t: np.cos(2 * z),
                         lambda t: 0.2)
    g = sample_plane(parallel_shear_field(prof), 0.4, 12, 12, 0.0, 2.0,
                     extent=(0.0, 1.0, 0.0, 1.0))
    m = g.valid[1]
    assert m.any()
    assert np.abs(g.lam[1][m][:, 1] - 1).max() <= 1e-6


@pytest.fixture(scope="module")
def abc_grid():
    return sample_plane(steady_abc(), 0.0, 100, 100, 0.0, 40.0)


@pytest.mark.slow
def test_steady_abc_grid_resolved_points_in_U(abc_grid):
    _, _, in_U, _ = eigen_frames(abc_grid.C[1])
    resolved = abc_grid.error[1] <= abc_grid.resolution_tol
    # a few strongly stretched points fall under the relative gap tolerance
    assert in_U[resolved].mean() > 0.99
    m = abc_grid.mask
    assert np.abs(np.prod(abc_grid.lam[1][m], axis=-1) - 1).max() <= 1e-3


@pytest.mark.slow
@pytest.mark.xfail(reason="finite-difference gradients do not resolve the smallest "
                          "stretch over roughly 30% of the plane at T=40", strict=False)
def test_steady_abc_grid_masked_below_five_percent(abc_grid):
    masked = 1 - abc_grid.mask.mean()
    print(f"masked fraction at T=40: {masked:.3f}")
    assert masked < 0.05


@pytest.mark.slow
def test_helicity_grids_finite_where_unmasked(abc_grid):
    for which in ("xi3", "xi1", "n+", "n-"):
        H = helicity_grid(abc_grid, which)
        assert np.isfinite(H[abc_grid.mask][1:-1]).mean() > 0.9
    with pytest.raises(ValueError):
        helicity_grid(abc_grid, "xi2")


def test_frobenius_grid_matches_helicity():
    g = sample_plane(steady_abc(), 1.0, 30, 30, 0.0, 1.0, extent=(1.0, 2.0, 1.0, 2.0))
    F = frobenius_grid(g, "xi1,xi2,xi3")
    H = g.helicity["xi3"]
    m = np.isfinite(F) & np.isfinite(H)
    inner = np.zeros_like(m)
    inner[2:-2, 2:-2] = True
    m &= inner
    assert m.sum() > 100
    # both are O(h^2) approximations of the same quantity
    assert np.abs(np.abs(F[m]) - np.abs(H[m])).max() < 0.05 * np.abs(H[m]).max() + 1e-6
    with pytest.raises(ValueError):
        frobenius_grid(g, "xi1,xi1,xi1")


def test_grid_round_trip(tmp_path):
    g = sample_plane(steady_abc(), 0.5, 12, 10, 0.0, 2.0, cfg=IntegratorConfig(dt=0.05))
    save_grid(g, tmp_path / "g.grd")
    raw = (tmp_path / "g.grd").read_bytes()
    assert raw[:8] == b"LCS3DGRD"
    assert (tmp_path / "g.grd.txt").exists()
    b = load_grid(tmp_path / "g.grd")
    for name in ("x", "y", "F", "gradF", "C", "lam", "xi", "valid", "in_U", "error"):
        assert np.array_equal(getattr(b, name), getattr(g, name)), name
    for k, v in g.helicity.items():
        assert np.array_equal(b.helicity[k], v, equal_nan=True)
    assert (b.s1, b.t0, b.T, b.h_z, b.gap_tol) == (g.s1, g.t0, g.T, g.h_z, g.gap_tol)


def test_load_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.grd"
    p.write_bytes(b"NOTAGRID" + bytes(100))
    with pytest.raises(ValueError):
        load_grid(p)
