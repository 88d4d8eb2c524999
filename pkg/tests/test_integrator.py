import numpy as np
import pytest
from hypothesis import given, strategies as st

from lcs3d.flows import (ForcingSignal, ShearProfiles, chaotic_abc, generate_duffing_forcing,
                         linear_field, parallel_shear_field, periodic_abc, steady_abc, zero_field)
from lcs3d.strain import RESOLUTION_TOL
from lcs3d.integrator import (BLOCK, IntegratorConfig, advect, advect_point, cauchy_green,
                              flow_gradient, flow_map_and_gradient, flow_map_sample,
                              spectral_error_estimate, step_schedule, trajectories)

SHEAR = parallel_shear_field(ShearProfiles(lambda z, t: z, lambda z, t: 0 * z, lambda t: 0.0))


def numpy_abc(field):
    """Same field without the compiled path (forces the generic RK4)."""
    from dataclasses import replace
    return replace(field, abc=None)


@pytest.mark.parametrize("t0,t1,dt,n", [(0, 1, 0.1, 10), (0, 1.05, 0.1, 11), (2, 0, 0.3, 7),
                                        (0, 0, 0.1, 0)])
def test_step_schedule_lands_on_end(t0, t1, dt, n):
    hs = step_schedule(t0, t1, dt)
    assert len(hs) == n
    assert t0 + hs.sum() == pytest.approx(t1, abs=1e-14)
    if n:
        assert np.all(np.abs(hs) <= dt + 1e-15)


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0)
    with pytest.raises(ValueError):
        IntegratorConfig(grad_h=-1)


def test_zero_field_is_identity():
    x0 = np.array([0.3, -1.0, 2.0])
    assert np.array_equal(advect_point(zero_field(), x0, 0.0, 5.0), x0)
    assert np.allclose(flow_gradient(zero_field(), x0, 0.0, 5.0), np.eye(3))


@pytest.mark.parametrize("T", [0.5, 1.0, 3.7])
def test_parallel_shear_trajectory_and_gradient(T):
    assert np.allclose(advect_point(SHEAR, [0, 0, 1.0], 0.0, T), [T, 0, 1.0], atol=1e-12)
    G = flow_gradient(SHEAR, [0.2, 0.1, -0.4], 0.0, T)
    assert np.allclose(G, [[1, 0, T], [0, 1, 0], [0, 0, 1]], atol=1e-8)


def test_linear_flow_matches_matrix_exponential():
    from scipy.linalg import expm
    M = np.array([[0.1, 0.5, 0.0], [-0.3, 0.0, 0.2], [0.0, 0.1, -0.1]])
    x0 = np.array([1.0, 2.0, -1.0])
    T = 2.0
    assert np.allclose(advect_point(linear_field(M), x0, 0.0, T), expm(M * T) @ x0, atol=1e-9)
    assert np.allclose(flow_gradient(linear_field(M), x0, 0.0, T), expm(M * T), atol=1e-8)


@pytest.mark.parametrize("field", [steady_abc(), periodic_abc()], ids=["steady", "periodic"])
def test_forward_backward_returns(field):
    x0 = np.array([0.5, 1.5, 2.5])
    x1 = advect_point(field, x0, 0.0, 1.0)
    assert np.linalg.norm(advect_point(field, x1, 1.0, 0.0) - x0) < 1e-6


def test_compiled_kernel_agrees_with_generic_rk4():
    rng = np.random.default_rng(1)
    X = rng.uniform(0, 2 * np.pi, (20, 3))
    for f in (steady_abc(), periodic_abc()):
        a = advect(f, X, 0.3, 2.1)
        b = advect(numpy_abc(f), X, 0.3, 2.1)
        assert np.allclose(a, b, atol=1e-12)


def test_short_time_gradient_is_linearisation():
    f = steady_abc()
    x0 = np.array([0.7, 1.9, 4.0])
    T = 1e-3
    h = 1e-6
    J = np.column_stack([(f(x0 + h * e, 0) - f(x0 - h * e, 0)) / (2 * h) for e in np.eye(3)])
    G = flow_gradient(f, x0, 0.0, T, IntegratorConfig(dt=1e-4, grad_h=1e-5))
    assert np.abs(G - (np.eye(3) + T * J)).max() < 10 * T * T


@pytest.mark.parametrize("T", [1.0, 10.0])
def test_volume_preservation_sample(T):
    """|det grad F - 1| <= 1e-3 wherever the difference quotient resolves the
    smallest stretch (the same mask the plane sampler applies)."""
    sig = generate_duffing_forcing(t_span=(0.0, 10.0))
    g = np.linspace(0, 2 * np.pi, 20, endpoint=False)
    X = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    for f in (steady_abc(), periodic_abc(), chaotic_abc(sig)):
        _, G, err = flow_map_and_gradient(f, X, 0.0, T, return_error=True)
        ok = err <= RESOLUTION_TOL
        assert ok.mean() > 0.9
        assert np.abs(np.linalg.det(G[ok]) - 1).max() <= 1e-3


def test_gradient_richardson_consistency():
    f = steady_abc()
    x0 = np.array([1.0, 2.0, 3.0])
    g1 = flow_gradient(f, x0, 0.0, 2.0, IntegratorConfig(grad_h=1e-3))
    g2 = flow_gradient(f, x0, 0.0, 2.0, IntegratorConfig(grad_h=5e-4))
    g4 = flow_gradient(f, x0, 0.0, 2.0, IntegratorConfig(grad_h=2.5e-4))
    # differences shrink by ~4 as the spacing halves
    assert np.abs(g2 - g4).max() < 0.4 * np.abs(g1 - g2).max()


def test_backward_gradient_inverts_forward():
    f = steady_abc()
    x0 = np.array([0.4, 5.0, 1.0])
    x1 = advect_point(f, x0, 0.0, 1.0)
    Gf = flow_gradient(f, x0, 0.0, 1.0)
    Gb = flow_gradient(f, x1, 1.0, 0.0)
    assert np.abs(Gb @ Gf - np.eye(3)).max() < 1e-4


def test_cauchy_green_examples():
    assert np.array_equal(cauchy_green(np.eye(3)), np.eye(3))
    T = 1.7
    C = cauchy_green([[1, 0, T], [0, 1, 0], [0, 0, 1]])
    assert np.allclose(C, [[1, 0, T], [0, 1, 0], [T, 0, T * T + 1]])
    with pytest.raises(ValueError):
        cauchy_green(np.full((3, 3), np.nan))


@given(st.lists(st.floats(-3, 3), min_size=9, max_size=9))
def test_cauchy_green_symmetric_and_det(vals):
    M = np.array(vals).reshape(3, 3)
    C = cauchy_green(M)
    assert np.array_equal(C, C.T)
    assert np.linalg.det(C) == pytest.approx(np.linalg.det(M) ** 2, abs=1e-9 * (1 + np.abs(M).max() ** 6))


def test_flow_map_sample_record():
    s = flow_map_sample(steady_abc(), [1.0, 1.0, 1.0], 0.0, 1.0)
    assert np.allclose(s.C, s.gradF.T @ s.gradF, rtol=1e-12)
    assert np.linalg.det(s.gradF) == pytest.approx(1.0, abs=1e-6)


def test_worker_count_does_not_change_results():
    X = np.random.default_rng(2).uniform(0, 6, (3 * BLOCK + 17, 3))
    a = advect(periodic_abc(), X, 0.0, 1.0, workers=1)
    b = advect(periodic_abc(), X, 0.0, 1.0, workers=3)
    assert np.array_equal(a, b)


def test_trajectories_shape_and_ends():
    X0 = np.array([[0.1, 0.2, 0.3], [1.0, 1.0, 1.0]])
    tr = trajectories(steady_abc(), X0, [0.0, 0.5, 1.0])
    assert tr.shape == (3, 2, 3)
    assert np.array_equal(tr[0], X0)
    assert np.allclose(tr[-1], advect(steady_abc(), X0, 0.0, 1.0), atol=1e-13)


def test_out_of_range_forcing_raises():
    from lcs3d.flows import OutOfRangeError
    sig = ForcingSignal(np.linspace(0, 2, 30), np.zeros(30))
    with pytest.raises(OutOfRangeError):
        advect(chaotic_abc(sig), np.zeros(3), 0.0, 3.0)


def test_error_estimate_small_when_resolved_large_when_not():
    f = steady_abc()
    X = np.array([[1.0, 2.0, 3.0]])
    Y0, G, err = flow_map_and_gradient(f, X, 0.0, 1.0, return_error=True)
    assert err[0] < 1e-6
    # a gradient that collapses one direction has an unbounded relative error
    bad = np.diag([1.0, 1.0, 0.0])[None]
    Y = np.zeros((1, 7, 3))
    assert np.isinf(spectral_error_estimate(Y, bad, 1e-6)[0])


@pytest.mark.parametrize("shape", [(3,), (1, 3), (2, 3)])
def test_advect_leaves_input_untouched(shape):
    X0 = np.arange(np.prod(shape), dtype=float).reshape(shape) * 0.1
    keep = X0.copy()
    advect(steady_abc(), X0, 0.0, 0.5)
    assert np.array_equal(X0, keep)
