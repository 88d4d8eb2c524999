"""Command-line front end: grid, lines, surfaces, verify, forcing-gen."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np

from . import barriers as bar
from . import verify as ver
from .config import (PRESETS, ConfigError, build_field, integrator_config, line_config,
                     load_config, parse_value, plane_values)
from .flows import generate_duffing_forcing
from .lines import extract_lines, read_lines_csv, seed_filter, seed_lattice, write_lines_csv
from .strain import load_grid, sample_plane, save_grid

log = logging.getLogger("lcs3d")

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE, EXIT_PARTIAL = 0, 1, 2, 3
KIND_CHOICES = ("strain", "stretch", "shear")


class PrerequisiteError(RuntimeError):
    """An input artifact of an earlier pipeline stage is missing."""


# --------------------------------------------------------------------------
# helpers


def _manifest_path(out: Path) -> Path:
    return out / "manifest.json"


def _read_manifest(out: Path) -> dict:
    p = _manifest_path(out)
    if p.exists():
        with open(p) as fh:
            return json.load(fh)
    return {}


def _write_manifest(out: Path, cfg: dict, **sections) -> None:
    man = _read_manifest(out)
    man["config"] = cfg
    man.setdefault("planes_status", [])
    man.update(sections)
    out.mkdir(parents=True, exist_ok=True)
    with open(_manifest_path(out), "w") as fh:
        json.dump(man, fh, indent=2, sort_keys=True)


def _resolve(config: Optional[str], preset: Optional[str], workers: Optional[int],
             out: Optional[str], sets: tuple) -> tuple[dict, Path]:
    overrides = {}
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = parse_value(v)
    if workers is not None:
        overrides["workers"] = workers
    if out is not None:
        overrides["out"] = out
    if config is None and preset is None:
        # later stages pick up the configuration recorded by earlier ones
        guess = Path(out if out is not None else "out") / "manifest.json"
        if guess.exists():
            config = str(guess)
    cfg = load_config(config, preset, overrides)
    return cfg, Path(cfg["out"])


def _plane_file(out: Path, k: int) -> Path:
    return out / "grids" / f"plane_{k:03d}.grd"


def _lines_file(out: Path, kind: str, k: int) -> Path:
    return out / "lines" / kind / f"plane_{k:03d}.csv"


def _require(paths: list[tuple[Path, str]]) -> None:
    for p, what in paths:
        if not p.exists():
            raise PrerequisiteError(f"missing {what}: {p}")


def _finish(fn):
    """Run a command body, mapping failures to exit codes."""
    try:
        code = fn()
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except PrerequisiteError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_COMPUTE)
    except Exception as exc:  # noqa: BLE001 - reported as a compute failure
        click.echo(f"compute error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_COMPUTE)
    sys.exit(code)


def common(f):
    f = click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
                     help="Override a config key (dotted path, JSON value).")(f)
    f = click.option("--out", type=click.Path(file_okay=False), default=None,
                     help="Output directory.")(f)
    f = click.option("--workers", type=int, default=None, help="Worker threads.")(f)
    f = click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None)(f)
    f = click.option("--config", type=click.Path(dir_okay=False), default=None,
                     help="JSON config file (a run manifest also works).")(f)
    return f


# --------------------------------------------------------------------------
# commands


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose: bool):
    """Lagrangian barriers in 3D flows from Cauchy-Green strain fields."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")


@main.command()
@common
def grid(config, preset, workers, out, sets):
    """Flow map, Cauchy-Green tensor and helicity fields on every plane."""
    def run():
        cfg, od = _resolve(config, preset, workers, out, sets)
        od.mkdir(parents=True, exist_ok=True)
        (od / "grids").mkdir(exist_ok=True)
        generated = od / "forcing.csv"
        fld = build_field(cfg, forcing_out=generated)
        if cfg["field"]["forcing"] == "tabulated" and cfg["field"]["forcing_file"] is None:
            cfg["field"]["forcing_file"] = str(generated.resolve())
        icfg = integrator_config(cfg)
        g, t = cfg["grid"], cfg["time"]
        status = []
        for k, s1 in enumerate(plane_values(cfg)):
            rec = {"index": k, "s1": s1, "file": str(_plane_file(od, k))}
            try:
                gr = sample_plane(fld, s1, int(g["nx"]), int(g["ny"]), float(t["t0"]),
                                  float(t["T"]), icfg, extent=g["extent"],
                                  gap_tol=float(g["gap_tol"]), workers=int(cfg["workers"]),
                                  resolution_tol=float(g["resolution_tol"]))
                save_grid(gr, _plane_file(od, k))
                m = gr.mask
                det = np.abs(np.prod(gr.lam[1][m], axis=-1) - 1.0)
                rec.update(status="ok", masked_fraction=float(1.0 - m.mean()),
                           max_det_error=float(det.max()) if det.size else None)
                log.info("plane %d (s1=%g): %.1f%% masked", k, s1, 100 * (1 - m.mean()))
            except Exception as exc:  # noqa: BLE001 - recorded per plane
                rec.update(status="failed", error=f"{type(exc).__name__}: {exc}")
                click.echo(f"plane {k} (s1={s1}) failed: {rec['error']}", err=True)
            status.append(rec)
        _write_manifest(od, cfg, planes_status=status)
        n_bad = sum(r["status"] != "ok" for r in status)
        click.echo(f"{len(status) - n_bad}/{len(status)} grid files written to {od / 'grids'}")
        if n_bad == len(status):
            return EXIT_COMPUTE
        return EXIT_PARTIAL if n_bad else EXIT_OK

    _finish(run)


def _line_kinds(kind: str) -> tuple:
    return ("shear+", "shear-") if kind == "shear" else (kind,)


@main.command()
@common
@click.option("--kind", type=click.Choice(KIND_CHOICES), required=True)
def lines(config, preset, workers, out, sets, kind):
    """Reduced strain-, stretch- or shearlines on every plane."""
    def run():
        cfg, od = _resolve(config, preset, workers, out, sets)
        planes = plane_values(cfg)
        _require([(_plane_file(od, k), f"grid for plane {k} (s1={s1})")
                  for k, s1 in enumerate(planes)])
        (od / "lines" / kind).mkdir(parents=True, exist_ok=True)
        summary, failed = [], 0
        for k, s1 in enumerate(planes):
            rec = {"index": k, "s1": s1}
            try:
                gr = load_grid(_plane_file(od, k))
                found, kept = [], 0
                for kk in _line_kinds(kind):
                    lcfg = line_config(cfg, gr, kk)
                    seeds = seed_lattice(gr, int(cfg["seeds"]["nx"]), int(cfg["seeds"]["ny"]))
                    kept += len(seed_filter(gr, seeds, lcfg.eps0, kk))
                    found += extract_lines(gr, kk, lcfg, (int(cfg["seeds"]["nx"]),
                                                          int(cfg["seeds"]["ny"])))
                if kept == 0:
                    click.echo(f"warning: plane {k} (s1={s1}): no seeds pass the helicity "
                               "filter; zero lines", err=True)
                write_lines_csv(found, _lines_file(od, kind, k))
                hel = np.concatenate([np.abs(l.helicity) for l in found]) if found else np.zeros(0)
                rec.update(status="ok", seeds_kept=kept, n_lines=len(found),
                           n_closed=sum(l.closed for l in found),
                           n_open=sum(not l.closed for l in found),
                           helicity_mean_abs=float(hel.mean()) if hel.size else None,
                           helicity_max_abs=float(hel.max()) if hel.size else None,
                           max_length=max((l.length for l in found), default=0.0))
            except Exception as exc:  # noqa: BLE001 - recorded per plane
                failed += 1
                rec.update(status="failed", error=f"{type(exc).__name__}: {exc}")
                click.echo(f"plane {k} failed: {rec['error']}", err=True)
            summary.append(rec)
        totals = {"n_lines": sum(r.get("n_lines", 0) for r in summary),
                  "n_closed": sum(r.get("n_closed", 0) for r in summary),
                  "n_open": sum(r.get("n_open", 0) for r in summary)}
        report = {"kind": kind, "planes": summary, "totals": totals}
        with open(od / "lines" / kind / "summary.json", "w") as fh:
            json.dump(report, fh, indent=2)
        man = _read_manifest(od).get("lines", {})
        man[kind] = totals
        _write_manifest(od, cfg, lines=man)
        click.echo(f"{kind}: {totals['n_lines']} lines ({totals['n_closed']} closed)")
        if failed == len(planes):
            return EXIT_COMPUTE
        return EXIT_PARTIAL if failed else EXIT_OK

    _finish(run)


def _center_curve(cfg: dict, fld=None) -> Optional[bar.CenterCurve]:
    sf = cfg["surfaces"]
    if sf["center_file"] is not None:
        d = np.loadtxt(sf["center_file"], delimiter=",", skiprows=1, ndmin=2)
        return bar.CenterCurve(d[:, 0], d[:, 1], d[:, 2], periodic=bool(sf["center_periodic"]))
    if sf["center"] is not None:
        fld = fld if fld is not None else build_field(cfg)
        return bar.center_curve_from_point(fld, sf["center"], float(cfg["time"]["t0"]),
                                           cfg=integrator_config(cfg))
    return None


def _write_center(path: Path, c: bar.CenterCurve) -> None:
    with open(path, "w") as fh:
        fh.write("z,x0,y0\n")
        for z, x, y in zip(c.z, c.x0, c.y0):
            fh.write(f"{z!r},{x!r},{y!r}\n")


@main.command()
@common
@click.option("--kind", type=click.Choice(KIND_CHOICES), required=True)
def surfaces(config, preset, workers, out, sets, kind):
    """Match lines across planes and stitch barrier surfaces (PLY + VTK)."""
    def run():
        cfg, od = _resolve(config, preset, workers, out, sets)
        planes = plane_values(cfg)
        _require([(_lines_file(od, kind, k), f"{kind} lines for plane {k} (s1={s1})")
                  for k, s1 in enumerate(planes)])
        per_plane = [(s1, read_lines_csv(_lines_file(od, kind, k)))
                     for k, s1 in enumerate(planes)]
        sf = cfg["surfaces"]
        closed = kind == "shear"
        match = bar.match_closed_curves if closed else bar.match_open_curves
        chains = [c for c in match(per_plane, float(sf["jump"])) if len(c.curves) >= 2]
        sd = od / "surfaces" / kind
        sd.mkdir(parents=True, exist_ok=True)
        for old in list(sd.glob("surface_*")):
            old.unlink()
        center = _center_curve(cfg) if (sf["center_file"] or sf["center"]) else None
        if center is not None:
            _write_center(sd / "center_curve.csv", center)
        t0, T = float(cfg["time"]["t0"]), float(cfg["time"]["T"])
        fld = build_field(cfg) if sf["lambda2"] else None
        records = []
        for i, ch in enumerate(chains):
            s = bar.build_surface(ch, int(sf["M"]), closed, kind, t0, T)
            if fld is not None:
                lam, _ = bar.vertex_spectra(fld, s.vertices, t0, T, integrator_config(cfg),
                                            int(cfg["workers"]))
                s.scalars["lambda2"] = lam[:, 1]
            bar.write_ply(s, sd / f"surface_{i:03d}.ply")
            bar.write_vtk(s, sd / f"surface_{i:03d}.vtk")
            rec = {"index": i, "planes": len(ch.curves), "s1": [ch.s1[0], ch.s1[-1]],
                   "area": bar.mesh_area(s), "manifold": bar.is_manifold_strip(s),
                   "termination": ch.termination,
                   "mean_radius": bar.mean_radius(ch.curves[0].vertices)}
            if center is not None and center.covers(s.vertices[:, 2]):
                e = bar.torus_embed(s, center, float(sf["R1"]), float(sf["R2"]))
                bar.write_ply(e, sd / f"surface_{i:03d}_torus.ply")
                bar.write_vtk(e, sd / f"surface_{i:03d}_torus.vtk")
                rec["torus"] = True
            records.append(rec)
        nesting = bar.nesting_order([c.curves[0].vertices for c in chains]) if closed else []
        report = {"kind": kind, "count": len(records), "surfaces": records,
                  "nesting": nesting}
        with open(sd / "summary.json", "w") as fh:
            json.dump(report, fh, indent=2)
        man = _read_manifest(od).get("surfaces", {})
        man[kind] = {"count": len(records), "nesting": nesting}
        _write_manifest(od, cfg, surfaces=man)
        if not records:
            click.echo(f"warning: no matchable {kind} chains; no surfaces written", err=True)
        else:
            click.echo(f"{len(records)} {kind} surfaces; nesting (inner first): {nesting}")
        return EXIT_OK

    _finish(run)


def _pick_outermost(lines: list):
    closed = [l for l in lines if l.closed]
    if not closed:
        raise PrerequisiteError("no closed shearline on the reference plane")
    return max(closed, key=lambda l: (bar.mean_radius(l.vertices), tuple(l.centroid)))


def _verify_tracers(cfg, od, plane):
    path = _lines_file(od, "shear", plane)
    _require([(path, f"shear lines for plane {plane}")])
    barrier = _pick_outermost(read_lines_csv(path))
    fld = build_field(cfg)
    ex = cfg["experiments"]["tracers"]
    t0 = float(cfg["time"]["t0"])
    res = bar.tracer_experiment(fld, barrier, ex["offsets"], t0, t0 + float(ex["T"]),
                                int(ex["n_seeds"]), _center_curve(cfg, fld),
                                float(ex["dt_sample"]), float(ex["tube_factor"]),
                                integrator_config(cfg), int(cfg["workers"]))
    res.to_csv(od / "reports" / "tracers.csv")
    b = res.tube_bound
    checks = [
        ver.Check.below("inside seeds max deviation / tube bound",
                        res.deviation["inside"].max() / b, 1.0),
        ver.Check.below("on-barrier seeds max deviation / tube bound",
                        res.deviation["on"].max() / b, 1.0),
        ver.Check("outside seeds min deviation / tube bound (must exceed)",
                  float(res.deviation["outside"].min() / b), 1.0,
                  bool(res.deviation["outside"].min() > b),
                  {"escaped": int(np.sum(res.deviation["outside"] > b)),
                   "n": int(res.deviation["outside"].size)}),
    ]
    return checks, {"summary": res.summary(), "barrier_mean_radius":
                    bar.mean_radius(barrier.vertices)}


def _verify_strainline(cfg, od, plane):
    path = _lines_file(od, "strain", plane)
    _require([(path, f"strain lines for plane {plane}")])
    cands = [l for l in read_lines_csv(path) if not l.closed]
    if not cands:
        raise PrerequisiteError("no open strainline on the reference plane")
    line = max(cands, key=lambda l: (l.length, tuple(l.vertices[0])))
    ex = cfg["experiments"]["perturbed_strainline"]
    t0 = float(cfg["time"]["t0"])
    rep = bar.perturbed_strainline_experiment(build_field(cfg), line, float(ex["delta"]), t0,
                                              t0 + float(ex["T"]), ex["direction"],
                                              cfg=integrator_config(cfg),
                                              workers=int(cfg["workers"]))
    for name, X in zip(("minus", "barrier", "plus"), rep.surfaces):
        bar.write_ply(bar.swept_surface(X), od / "reports" / f"strainline_{name}.ply")
    d = np.abs(rep.mean_drift)
    chk = ver.Check("barrier |mean z-drift| below both offsets", float(d[1]),
                    float(min(d[0], d[2])), bool(d[1] < min(d[0], d[2])))
    return [chk], {"summary": rep.summary(), "line_length": line.length}


@main.command()
@common
@click.option("--experiment", type=click.Choice(
    ("tracers", "perturbed-strainline", "area", "oracles")), required=True)
@click.option("--plane", type=int, default=0, help="Reference plane index.")
def verify(config, preset, workers, out, sets, experiment, plane):
    """Verification experiments; writes a JSON pass/fail report."""
    def run():
        cfg, od = _resolve(config, preset, workers, out, sets)
        (od / "reports").mkdir(parents=True, exist_ok=True)
        extra = {}
        if experiment == "oracles":
            checks = ver.oracle_suite()
        elif experiment == "area":
            a = cfg["experiments"]["area"]
            checks = ver.area_experiment(patch=a["patch"], z=float(a["z"]), n=int(a["n"]),
                                         T=float(a["T"]), cfg=integrator_config(cfg))
        elif experiment == "tracers":
            checks, extra = _verify_tracers(cfg, od, plane)
        else:
            checks, extra = _verify_strainline(cfg, od, plane)
        passed = all(c.passed for c in checks)
        report = {"experiment": experiment, "passed": passed,
                  "checks": [c.to_dict() for c in checks], **extra}
        path = od / "reports" / f"{experiment}.json"
        with open(path, "w") as fh:
            json.dump(report, fh, indent=2)
        for c in checks:
            click.echo(c.line())
        man = _read_manifest(od).get("verify", {})
        man[experiment] = passed
        _write_manifest(od, cfg, verify=man)
        return EXIT_OK if passed else EXIT_PARTIAL

    _finish(run)


@main.command("forcing-gen")
@click.option("--out", "path", type=click.Path(dir_okay=False), required=True,
              help="CSV file to write (columns t, F).")
@click.option("--t-start", type=float, default=0.0)
@click.option("--t-end", type=float, default=200.0)
@click.option("--dt", type=float, default=0.01)
@click.option("--delta", type=float, default=0.15)
@click.option("--gamma", type=float, default=0.3)
@click.option("--omega", type=float, default=1.0)
@click.option("--kappa", type=float, default=None,
              help="Scale factor; default normalises max |F| to 0.1.")
def forcing_gen(path, t_start, t_end, dt, delta, gamma, omega, kappa):
    """Tabulate a chaotic Duffing forcing signal."""
    def run():
        if not t_end > t_start or not dt > 0:
            raise ConfigError("need t_end > t_start and dt > 0")
        sig = generate_duffing_forcing(delta, gamma, omega, kappa, (t_start, t_end), dt)
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        sig.to_csv(path)
        click.echo(f"{len(sig.t_samples)} samples written to {path}")
        return EXIT_OK

    _finish(run)


if __name__ == "__main__":
    main()
