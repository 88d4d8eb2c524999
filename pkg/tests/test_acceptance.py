"""Acceptance criteria 1-11. Each test prints one PASS/FAIL line (also echoed in
the terminal summary) and asserts the criterion at its stated tolerance.

Run alone with ``pytest tests/test_acceptance.py -v``; the three flow-grid
computations take a few minutes on one core.
"""

import time

import numpy as np
import pytest

from lcs3d.barriers import (center_curve_from_point, mean_radius, nesting_order,
                            perturbed_strainline_experiment, return_distance, slice_returns,
                            tracer_experiment, vertex_spectra)
from lcs3d.flows import chaotic_abc, generate_duffing_forcing, periodic_abc, steady_abc
from lcs3d.integrator import IntegratorConfig
from lcs3d.lines import LineConfig, extract_lines, write_lines_csv
from lcs3d.strain import sample_plane, save_grid
from lcs3d.verify import (Check, area_experiment, check_extrema, check_frobenius,
                          check_identity, check_linear_helicity, check_parallel_shear)

pytestmark = pytest.mark.slow

TWO_PI = 2 * np.pi
VORTEX_WINDOW = (2.8, 4.6, 3.8, 5.6)  # vortical region of the z = 0 plane
SHEAR_KINDS = ("shear+", "shear-")


def report(acceptance, k, checks, seconds=None, note=""):
    checks = checks if isinstance(checks, list) else [checks]
    ok = all(c.passed for c in checks)
    parts = "; ".join(f"{c.name} = {c.value:.3g} (thr {c.threshold:.3g})" for c in checks)
    extra = f" [{seconds:.1f} s]" if seconds is not None else ""
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'} - {parts}{extra}{note}"
    print(line)
    acceptance.append(line)
    return ok


def info(acceptance, k, text):
    line = f"criterion {k}: info - {text}"
    print(line)
    acceptance.append(line)


def closed_shearlines(grid, window=None):
    cfg = LineConfig.for_grid(grid, 1e-2, domain_width=TWO_PI, window=window)
    found = []
    for kind in SHEAR_KINDS:
        found += extract_lines(grid, kind, cfg, (20, 20), closed_only=True)
    return found


def _trailing_mean_max(h, nwin):
    c = np.concatenate([[0.0], np.cumsum(h)])
    k = np.arange(1, len(h) + 1)
    lo = np.maximum(k - nwin, 0)
    return float(((c[k] - c[lo]) / (k - lo)).max())


def running_average_max(line, nwin):
    """Largest trailing-window mean |H| along both branches, each read outward
    from the seed vertex."""
    h = np.abs(line.helicity)
    s = int(np.argmin(np.linalg.norm(line.vertices - line.seed, axis=1)))
    return max(_trailing_mean_max(h[s:], nwin), _trailing_mean_max(h[s::-1], nwin))


# --------------------------------------------------------------------------
# shared grids


@pytest.fixture(scope="module")
def steady_elliptic():
    t = time.perf_counter()
    g = sample_plane(steady_abc(), 0.0, 200, 200, 0.0, 40.0, extent=VORTEX_WINDOW)
    return g, time.perf_counter() - t


@pytest.fixture(scope="module")
def steady_hyperbolic():
    t = time.perf_counter()
    g = sample_plane(steady_abc(), 0.0, 200, 200, 0.0, 3.0)
    return g, time.perf_counter() - t


@pytest.fixture(scope="module")
def periodic_elliptic():
    t = time.perf_counter()
    g = sample_plane(periodic_abc(), 0.0, 200, 200, 0.0, 10 * np.pi, extent=VORTEX_WINDOW)
    return g, time.perf_counter() - t


@pytest.fixture(scope="module")
def chaotic_small():
    sig = generate_duffing_forcing(t_span=(0.0, 6.0))
    return sample_plane(chaotic_abc(sig), 0.0, 60, 60, 0.0, 5.0), 0.0


@pytest.fixture(scope="module")
def steady_closed(steady_elliptic):
    g, _ = steady_elliptic
    return {"default": closed_shearlines(g), "cumulative": closed_shearlines(g, np.inf)}


# --------------------------------------------------------------------------
# oracle criteria


def test_criterion_1_parallel_shear_oracle(acceptance):
    t = time.perf_counter()
    checks = check_parallel_shear(n_sets=10)
    dt = time.perf_counter() - t
    checks.append(Check.below("runtime [s]", dt, 60.0))
    assert report(acceptance, 1, checks, dt)


def test_criterion_2_extremum_validation(acceptance):
    t = time.perf_counter()
    checks = check_extrema(n=100)
    dt = time.perf_counter() - t
    checks.append(Check.below("runtime [s]", dt, 120.0))
    assert report(acceptance, 2, checks, dt)


def test_criterion_3_identity(acceptance):
    assert report(acceptance, 3, check_identity(n=10000))


def test_criterion_4_linear_helicity(acceptance):
    assert report(acceptance, 4, check_linear_helicity(n=50))


def test_criterion_5_frobenius(acceptance):
    assert report(acceptance, 5, check_frobenius())


# --------------------------------------------------------------------------
# flow experiments


def _tube_checks(lines, T=40.0):
    out = []
    for ln in lines:
        R = slice_returns(steady_abc(), ln.points3d[:-1:4], ln.s1, 0.0, T, dt_sample=0.01)
        out.append(return_distance(R, ln.vertices))
    return out


def test_criterion_6_steady_elliptic(acceptance, steady_elliptic, steady_closed):
    """At least two nested closed shearlines, each returning within 0.1 of itself."""
    g, t_grid = steady_elliptic
    lines = steady_closed["default"]
    groups = nesting_order([l.vertices for l in lines]) if lines else []
    depth = max((len(gr) for gr in groups), default=0)
    dists = _tube_checks(lines)
    checks = [Check("nested closed shearlines (>= 2)", float(depth), 2.0, depth >= 2),
              Check.below("max slice-return distance", max(dists, default=np.inf), 0.1)]
    ok = report(acceptance, 6, checks, t_grid,
                f" (default helicity window, {len(lines)} closed lines)")

    alt = steady_closed["cumulative"]
    if alt:
        gr = nesting_order([l.vertices for l in alt])
        d_alt = _tube_checks(alt)
        info(acceptance, 6, f"cumulative helicity window: {len(alt)} closed lines, "
             f"deepest nesting {max(len(x) for x in gr)}, slice-return distances "
             f"{', '.join(f'{d:.3g}' for d in sorted(d_alt))}")
    assert ok


def test_criterion_7_steady_hyperbolic(acceptance, steady_hyperbolic):
    g, t_grid = steady_hyperbolic
    eps0 = 1e-4
    cfg = LineConfig.for_grid(g, eps0, domain_width=TWO_PI)
    lines = [l for l in extract_lines(g, "strain", cfg, (50, 50)) if not l.closed]
    nwin = max(1, int(round(cfg.window / cfg.step)))
    worst = max(running_average_max(l, nwin) for l in lines) if lines else np.inf
    longest = max(lines, key=lambda l: (l.length, tuple(l.vertices[0])))
    rep = perturbed_strainline_experiment(steady_abc(), longest, 0.01, 0.0, 3.0)
    d = np.abs(rep.mean_drift)
    checks = [Check("strainlines found", float(len(lines)), 1.0, len(lines) >= 1),
              Check.below("max running-average |H|", worst, eps0),
              Check("barrier |mean z-drift| (must be < both offsets)", float(d[1]),
                    float(min(d[0], d[2])), bool(d[1] < min(d[0], d[2])))]
    assert report(acceptance, 7, checks, t_grid,
                  f" (drifts -0.01/0/+0.01: {', '.join(f'{x:.4g}' for x in rep.mean_drift)})")


def test_criterion_8_incompressibility(acceptance, steady_elliptic, steady_hyperbolic,
                                       periodic_elliptic, chaotic_small):
    worst, masked = 0.0, []
    for g, _ in (steady_elliptic, steady_hyperbolic, periodic_elliptic, chaotic_small):
        m = g.mask
        worst = max(worst, float(np.abs(np.prod(g.lam[1][m], axis=-1) - 1).max()))
        masked.append(1 - m.mean())
    assert report(acceptance, 8, Check.below("max |l1 l2 l3 - 1| on unmasked points", worst,
                                             1e-3),
                  note=f" (masked fractions {', '.join(f'{x:.3f}' for x in masked)})")


def test_criterion_9_area(acceptance, steady_closed):
    checks = area_experiment()
    lines = steady_closed["default"] or steady_closed["cumulative"]
    if lines:
        ln = max(lines, key=lambda l: (l.length, tuple(l.centroid)))
        lam, _ = vertex_spectra(steady_abc(), ln.points3d[:-1], 0.0, 40.0)
        q = float(np.mean(lam[:, 1] ** 0.25))
        checks.append(Check("closed-shearline mean lambda2^(1/4) in [0.9, 1.1]", q, 1.1,
                            0.9 <= q <= 1.1))
    else:
        checks.append(Check("closed-shearline mean lambda2^(1/4) in [0.9, 1.1]", np.nan, 1.1,
                            False))
    src = "default" if steady_closed["default"] else "cumulative"
    assert report(acceptance, 9, checks, note=f" (shearline from the {src} window)")


def test_criterion_10_tracers(acceptance, periodic_elliptic):
    g, t_grid = periodic_elliptic
    lines, src = closed_shearlines(g), "default"
    if not lines:
        lines, src = closed_shearlines(g, np.inf), "cumulative"
    assert lines, "no closed shearline on the periodic plane"
    outer = max(lines, key=lambda l: (mean_radius(l.vertices), tuple(l.centroid)))
    c = outer.centroid
    center = center_curve_from_point(periodic_abc(), [c[0], c[1], 0.0])
    ex = tracer_experiment(periodic_abc(), outer, [0.05, 0.1], 0.0, 10 * np.pi, 4, center)
    b = ex.tube_bound
    dev = ex.deviation
    checks = [Check.below("inside max deviation / bound", dev["inside"].max() / b, 1.0),
              Check.below("on-barrier max deviation / bound", dev["on"].max() / b, 1.0),
              Check("outside min deviation / bound (must exceed)",
                    float(dev["outside"].min() / b), 1.0, bool(dev["outside"].min() > b))]
    assert report(acceptance, 10, checks, t_grid,
                  f" ({src} window; outside escaped {int(np.sum(dev['outside'] > b))}/"
                  f"{dev['outside'].size})")


def test_criterion_11_determinism(acceptance, tmp_path):
    fld = periodic_abc()
    cfg = IntegratorConfig()
    same = True
    for kind in ("strain", "shear+"):
        out = []
        for w in (1, 3):
            g = sample_plane(fld, 0.3, 40, 40, 0.0, 3.0, cfg, workers=w)
            save_grid(g, tmp_path / f"g{w}.grd")
            lc = LineConfig.for_grid(g, 1e-2 if kind != "strain" else 1e-4,
                                     domain_width=TWO_PI)
            write_lines_csv(extract_lines(g, kind, lc, (10, 10)), tmp_path / f"l{w}.csv")
            out.append(((tmp_path / f"g{w}.grd").read_bytes(),
                        (tmp_path / f"l{w}.csv").read_bytes()))
        same &= out[0] == out[1]
    assert report(acceptance, 11, Check("grid and line files identical (workers 1 vs 3)",
                                        float(same), 1.0, bool(same)))
