"""Command line interface: band diagrams, Dirac reports, accuracy table, Green's probes.

Usage::

    diracbands bands --eps 0.05 --bc dirichlet --out bands.csv
    diracbands dirac --eps 0.05 --band-pair 1,2
    diracbands table1
    diracbands greens-probe --kappa K --omega 0.5 --x 0.13 --y 0.07 --check

Frequencies and Bloch vectors are read and written in units of ``2 pi / a``
unless ``--raw`` is given.  Exit codes: 0 success, 1 tolerance failure,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dirac, qpgreens, spectral
from .bie import BoundaryCondition, FourierTruncation
from .lattice import LatticeSpec, brillouin_path, build_lattice, named_point, rotate
from .qpgreens import EwaldParams, OnSourcePoint
from .spectral import SweepConfig

log = logging.getLogger("diracbands")

EXIT_OK, EXIT_TOLERANCE, EXIT_USAGE = 0, 1, 2

#: Reference values of the accuracy table at a = 1, eps = 1/40, 1/20, 1/10, 1/5.
TABLE1_NUMERIC = (0.66896, 0.67559, 0.70172, 0.81715)
TABLE1_ASYMPTOTIC = (0.66893, 0.67573, 0.70294, 0.81177)
TABLE1_ERROR = (3e-5, 1.4e-4, 1.2e-3, 5.4e-3)


class ConfigError(ValueError):
    """Invalid configuration or command line input."""


def _fmt(x: float | None) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.12g}"


# ---------------------------------------------------------------------------
# Configuration


@dataclass
class RunConfig:
    a: float = 1.0
    epsilon: float = 0.05
    bc: BoundaryCondition = BoundaryCondition.DIRICHLET
    N: int = 12
    quad_points: int = 256
    ewald: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    omega_max: float = 1.0
    path: list = field(default_factory=lambda: ["M", "G", "K", "M"])
    samples: int = 10
    n_bands: int = 6
    band_pair: tuple[int, int] = (1, 2)
    eps_list: tuple[float, ...] = dirac.TABLE1_EPS
    radii: tuple[float, ...] = dirac.DEFAULT_RADII
    directions: int = 6
    cone: bool = True
    format: str = "csv"
    out: str | None = None
    raw: bool = False
    jobs: int = 1

    def lattice(self) -> LatticeSpec:
        try:
            return build_lattice(self.a, self.epsilon)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def trunc(self) -> FourierTruncation:
        try:
            return FourierTruncation(self.N, self.quad_points)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def sweep_config(self, lo: float = 0.0, hi: float | None = None) -> SweepConfig:
        hi = self.omega_max if hi is None else hi
        try:
            return SweepConfig(omega_window=(lo, hi), **self.sweep)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid [sweep] settings: {exc}") from exc

    def ewald_params(self) -> EwaldParams:
        try:
            return EwaldParams(**self.ewald)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid [ewald] settings: {exc}") from exc

    def kappa_path(self, spec: LatticeSpec) -> list[np.ndarray]:
        pts = []
        for p in self.path:
            if isinstance(p, str):
                try:
                    pts.append(named_point(spec, p))
                except KeyError as exc:
                    raise ConfigError(str(exc)) from exc
            else:
                pts.append(np.asarray(p, dtype=float) * spec.unit)
        return pts


_SWEEP_KEYS = {"coarse_steps": int, "singular_exclusion": float, "root_tol": float,
               "sv_threshold": float, "cluster_zone": float, "method": str}
_EWALD_KEYS = {"eta": float, "spectral_radius": int, "spatial_radius": int,
               "series_order": int, "target_tol": float}


def _parse_path(text: str) -> list:
    out = []
    for tok in text.replace("->", ",").split(","):
        tok = tok.strip()
        if not tok:
            continue
        if ":" in tok:
            kx, ky = tok.split(":")
            out.append((float(kx), float(ky)))
        else:
            out.append(tok)
    return out


def _parse_pair(text: str) -> tuple[int, int]:
    parts = [p for p in text.replace("/", ",").split(",") if p.strip()]
    if len(parts) != 2:
        raise ConfigError(f"band pair must look like '1,2', got {text!r}")
    try:
        pair = (int(parts[0]), int(parts[1]))
    except ValueError:
        raise ConfigError(f"band pair must be two integers, got {text!r}") from None
    if pair not in dirac.BAND_GROUPS:
        raise ConfigError(f"unsupported band pair {pair}; choose one of {sorted(dirac.BAND_GROUPS)}")
    return pair


def load_config(path: str | None) -> RunConfig:
    """Read an INI-style file with sections lattice, problem, truncation, ewald, sweep, path, output."""
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    try:
        if parser.has_section("lattice"):
            sec = parser["lattice"]
            cfg.a = sec.getfloat("a", cfg.a)
            cfg.epsilon = sec.getfloat("epsilon", cfg.epsilon)
        if parser.has_section("problem"):
            sec = parser["problem"]
            if "bc" in sec:
                cfg.bc = BoundaryCondition.parse(sec["bc"])
            cfg.n_bands = sec.getint("n_bands", cfg.n_bands)
            cfg.omega_max = sec.getfloat("omega_max", cfg.omega_max)
            if "band_pair" in sec:
                cfg.band_pair = _parse_pair(sec["band_pair"])
            if "eps_list" in sec:
                cfg.eps_list = tuple(float(e) for e in sec["eps_list"].split(","))
            if "radii" in sec:
                cfg.radii = tuple(float(e) for e in sec["radii"].split(","))
            cfg.directions = sec.getint("directions", cfg.directions)
            cfg.cone = sec.getboolean("cone", cfg.cone)
        if parser.has_section("truncation"):
            sec = parser["truncation"]
            cfg.N = sec.getint("N", cfg.N)
            cfg.quad_points = sec.getint("quad_points", cfg.quad_points)
        for name, keys, target in (("ewald", _EWALD_KEYS, cfg.ewald), ("sweep", _SWEEP_KEYS, cfg.sweep)):
            if parser.has_section(name):
                for key, value in parser[name].items():
                    if key not in keys:
                        raise ConfigError(f"unknown key {key!r} in [{name}]")
                    target[key] = keys[key](value)
        if parser.has_section("path"):
            sec = parser["path"]
            if "points" in sec:
                cfg.path = _parse_path(sec["points"])
            cfg.samples = sec.getint("samples", cfg.samples)
        if parser.has_section("output"):
            sec = parser["output"]
            cfg.format = sec.get("format", cfg.format)
            cfg.out = sec.get("path", cfg.out)
            cfg.raw = sec.getboolean("raw", cfg.raw)
    except ValueError as exc:
        raise ConfigError(f"invalid value in {path}: {exc}") from exc
    return cfg


# ---------------------------------------------------------------------------
# Execution helpers


def _mapper(jobs: int):
    if jobs <= 1:
        return map, None
    pool = ProcessPoolExecutor(max_workers=jobs)
    return pool.map, pool


def _write(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _table_text(header: list[str], rows: list[list], fmt: str = "csv") -> str:
    """Render numeric rows as CSV (12 significant digits) or as a JSON object of columns."""
    if fmt == "json":
        cols = {h: [None if v is None else float(f"{v:.12g}") for v in col] for h, col in zip(header, zip(*rows))}
        return json.dumps(cols, indent=1) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows([[_fmt(v) for v in row] for row in rows])
    return buf.getvalue()


@dataclass(frozen=True)
class _BandTask:
    spec_a: float
    spec_eps: float
    bc: str
    kappa: tuple[float, float]
    sweep: SweepConfig
    trunc: FourierTruncation


def _band_worker(task: _BandTask) -> list[float] | None:
    spec = build_lattice(task.spec_a, task.spec_eps)
    try:
        roots = spectral.characteristic_sweep(task.bc, spec, np.array(task.kappa), task.sweep, task.trunc,
                                              with_nullspace=False)
    except Exception as exc:  # recorded as empty cells; the run continues
        log.warning("kappa=%s failed: %s", task.kappa, exc)
        return None
    return [r.omega for r in roots for _ in range(r.multiplicity)]


# ---------------------------------------------------------------------------
# Commands


def cmd_bands(cfg: RunConfig) -> int:
    """Band frequencies along a Brillouin path, written as CSV (``s,kx,ky,band1..bandN``)."""
    spec = cfg.lattice()
    trunc = cfg.trunc()
    sweep = cfg.sweep_config()
    path = brillouin_path(cfg.kappa_path(spec), cfg.samples)
    tasks = [_BandTask(spec.a, spec.epsilon, cfg.bc.value, (float(k[0]), float(k[1])), sweep, trunc)
             for _, k in path]
    mapper, pool = _mapper(cfg.jobs)
    try:
        results = list(mapper(_band_worker, tasks))
    finally:
        if pool is not None:
            pool.shutdown()
    scale = 1.0 if cfg.raw else 1.0 / spec.unit
    header = ["s", "kx", "ky"] + [f"band{i + 1}" for i in range(cfg.n_bands)]
    rows = []
    for (s, k), freqs in zip(path, results):
        values = [s * scale, k[0] * scale, k[1] * scale]
        freqs = sorted(freqs or [])[: cfg.n_bands]
        values += [w * scale for w in freqs] + [None] * (cfg.n_bands - len(freqs))
        rows.append(values)
    _write(_table_text(header, rows, cfg.format), cfg.out)
    return EXIT_OK


def cmd_dirac(cfg: RunConfig) -> int:
    """Locate the Dirac point for ``cfg.band_pair`` and fit its cone; JSON output."""
    spec = cfg.lattice()
    trunc = cfg.trunc()
    loc = dirac.locate_dirac(cfg.bc, spec, cfg.band_pair, trunc)
    u = spec.unit
    group = dirac.band_group(cfg.band_pair)
    if cfg.cone:
        mapper, pool = _mapper(cfg.jobs)
        try:
            report = dirac.cone_fit(cfg.bc, spec, cfg.band_pair, trunc, cfg.radii, cfg.directions,
                                    location=loc, parallel_map=mapper)
        finally:
            if pool is not None:
                pool.shutdown()
        out = report.to_dict()
    else:
        asym = dirac.asymptotic_eigenvalues(spec, cfg.bc, group)[0][1] if (
            cfg.bc is BoundaryCondition.DIRICHLET or group == 1) else float("nan")
        out = dict(bc=cfg.bc.value, band_pair=list(cfg.band_pair), omega_star_numeric=loc.omega / u,
                   omega_star_asymptotic=asym / u, multiplicity=loc.multiplicity,
                   slope_theory=dirac.theory_slopes(spec, group, loc.omega), epsilon=spec.epsilon)
    out["schur_roots"] = {str(j): w / u for j, w in loc.schur_roots.items()}
    if cfg.raw:
        for key in ("omega_star_numeric", "omega_star_asymptotic"):
            out[key] = out[key] * u
        out["schur_roots"] = {j: w * u for j, w in out["schur_roots"].items()}
    _write(json.dumps(out, indent=2, default=float) + "\n", cfg.out)
    return EXIT_OK


def cmd_table1(cfg: RunConfig) -> int:
    """Numeric versus asymptotic first Dirac frequency; exit 1 when a reference tolerance fails."""
    spec = cfg.lattice()
    mapper, pool = _mapper(cfg.jobs)
    try:
        rows = dirac.table1_compare(spec, cfg.eps_list, cfg.trunc(), parallel_map=mapper)
    finally:
        if pool is not None:
            pool.shutdown()
    header = ["epsilon", "numeric", "asymptotic", "error"]
    scale = spec.unit if cfg.raw else 1.0
    text = _table_text(header, [[r.epsilon, r.numeric * scale, r.asymptotic * scale, r.error * scale]
                                for r in rows], cfg.format)
    _write(text, cfg.out)
    failures = []
    if spec.a == 1.0:
        ref = dict(zip(dirac.TABLE1_EPS, zip(TABLE1_NUMERIC, TABLE1_ASYMPTOTIC, TABLE1_ERROR)))
        for r in rows:
            match = [k for k in ref if abs(k - r.epsilon) < 1e-12]
            if not match:
                continue
            num, asym, err = ref[match[0]]
            if abs(r.numeric - num) > 5e-4:
                failures.append(f"eps={r.epsilon:g}: numeric {r.numeric:.6f} vs {num} (diff {r.numeric - num:+.2e})")
            if abs(r.asymptotic - asym) > 5e-5:
                failures.append(f"eps={r.epsilon:g}: asymptotic {r.asymptotic:.6f} vs {asym}")
            if not err / 2 <= r.error <= 2 * err:
                failures.append(f"eps={r.epsilon:g}: error {r.error:.2e} vs {err:.1e}")
    for f in failures:
        print(f, file=sys.stderr)
    return EXIT_TOLERANCE if failures else EXIT_OK


def cmd_greens_probe(spec: LatticeSpec, kappa, omega: float, x, *, check: bool = False, eta_scan: bool = False,
                     params: EwaldParams | None = None, stream=None) -> int:
    """Print ``G``, its gradient, the error estimate and the timing at one point."""
    stream = stream or sys.stdout
    params = params or EwaldParams()
    kappa = np.asarray(kappa, dtype=float)
    x = np.asarray(x, dtype=float)
    t0 = time.perf_counter()
    g = qpgreens.ewald_green(spec, kappa, omega, x, params)
    dt = time.perf_counter() - t0
    print(f"value      {g.value.real:.15e} {g.value.imag:+.15e}j", file=stream)
    print(f"grad_x1    {g.grad_x[0].real:.15e} {g.grad_x[0].imag:+.15e}j", file=stream)
    print(f"grad_x2    {g.grad_x[1].real:.15e} {g.grad_x[1].imag:+.15e}j", file=stream)
    print(f"est_error  {g.est_error:.3e}", file=stream)
    print(f"time_s     {dt:.6f}", file=stream)
    status = EXIT_OK
    if check:
        tol = 1e-9
        shifted = qpgreens.ewald_green(spec, kappa, omega, x + spec.e1, params).value
        checks = {"quasi_periodicity": abs(shifted - np.exp(1j * kappa @ spec.e1) * g.value)}
        checks["conjugate_symmetry"] = abs(g.value - np.conj(qpgreens.ewald_green(spec, kappa, omega, -x, params).value))
        from .bie import is_dirac_point
        if is_dirac_point(spec, kappa):
            checks["rotation"] = abs(g.value - qpgreens.ewald_green(spec, kappa, omega, rotate(x), params).value)
        for name, v in checks.items():
            ok = v < tol
            print(f"check {name:<20s} {v:.3e} {'PASS' if ok else 'FAIL'}", file=stream)
            if not ok:
                status = EXIT_TOLERANCE
    if eta_scan:
        eta0 = params.resolve_eta(spec, omega)
        for f in (1.0, 1.5, 2.0):
            p = EwaldParams(eta=eta0 * f, target_tol=params.target_tol)
            v = qpgreens.ewald_green(spec, kappa, omega, x, p).value
            print(f"eta {eta0 * f:.6f}  value {v.real:.15e} {v.imag:+.15e}j  diff {abs(v - g.value):.3e}",
                  file=stream)
    return status


# ---------------------------------------------------------------------------
# Argument parsing


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--bc", choices=["dirichlet", "neumann"])
    common.add_argument("--eps", type=float, help="obstacle radius")
    common.add_argument("--n", type=int, help="Fourier truncation N (modes -N..N)")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--jobs", type=int, help="worker processes (default: available cores)")
    common.add_argument("--raw", action="store_true", help="unnormalized frequencies")

    p = argparse.ArgumentParser(prog="diracbands", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    b = sub.add_parser("bands", parents=[common], help="band diagram along a Brillouin path")
    b.add_argument("--path", help="e.g. M,G,K,M or kx:ky pairs in units of 2pi/a")
    b.add_argument("--samples", type=int, help="samples per path segment")
    b.add_argument("--omega-max", type=float, help="top of the frequency window (normalized)")
    b.add_argument("--bands", type=int, dest="n_bands", help="number of band columns")
    d = sub.add_parser("dirac", parents=[common], help="Dirac point report (JSON)")
    d.add_argument("--band-pair", help="1,2 or 4,5 or 10,11")
    d.add_argument("--directions", type=int)
    d.add_argument("--radii", help="comma separated radii in units of 2pi/a")
    d.add_argument("--no-cone", action="store_true", help="skip the cone fit")
    t = sub.add_parser("table1", parents=[common], help="numeric vs asymptotic Dirac frequency")
    t.add_argument("--eps-list", help="comma separated radii")
    g = sub.add_parser("greens-probe", parents=[common], help="evaluate the Green's function at a point")
    g.add_argument("--kappa", help="named point (K, M, G) instead of --kx/--ky")
    g.add_argument("--kx", type=float, default=None)
    g.add_argument("--ky", type=float, default=None)
    g.add_argument("--omega", type=float, required=True)
    g.add_argument("--x", type=float, required=True, help="in units of a")
    g.add_argument("--y", type=float, required=True, help="in units of a")
    g.add_argument("--eta", type=float)
    g.add_argument("--check", action="store_true", help="run the symmetry checks")
    g.add_argument("--eta-scan", action="store_true", help="compare several Ewald parameters")
    return p


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    if args.bc:
        cfg.bc = BoundaryCondition.parse(args.bc)
    if args.eps is not None:
        cfg.epsilon = args.eps
    if args.n is not None:
        cfg.N = args.n
        while cfg.quad_points < 4 * cfg.N + 4:
            cfg.quad_points *= 2
    if args.out:
        cfg.out = args.out
    if args.format:
        cfg.format = args.format
    cfg.raw = cfg.raw or args.raw
    cfg.jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    if cfg.jobs < 1:
        raise ConfigError("--jobs must be positive")
    cmd = args.command
    if cmd == "bands":
        if args.path:
            cfg.path = _parse_path(args.path)
        if args.samples is not None:
            cfg.samples = args.samples
        if args.omega_max is not None:
            cfg.omega_max = args.omega_max
        if args.n_bands is not None:
            cfg.n_bands = args.n_bands
        if cfg.samples < 2 or len(cfg.path) < 2:
            raise ConfigError("a path needs at least two points and two samples per segment")
    elif cmd == "dirac":
        if args.band_pair:
            cfg.band_pair = _parse_pair(args.band_pair)
        if args.directions is not None:
            cfg.directions = args.directions
        if args.radii:
            cfg.radii = tuple(float(r) for r in args.radii.split(","))
        if args.no_cone:
            cfg.cone = False
    elif cmd == "table1":
        if args.eps_list:
            cfg.eps_list = tuple(float(e) for e in args.eps_list.split(","))
    return cfg


def _setup_logging():
    level = os.environ.get("DIRACBANDS_LOG", "warn").strip().lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        cfg = _apply_flags(load_config(args.config), args)
        if args.command == "bands":
            return cmd_bands(cfg)
        if args.command == "dirac":
            return cmd_dirac(cfg)
        if args.command == "table1":
            return cmd_table1(cfg)
        spec = cfg.lattice()
        if args.kappa:
            kappa = named_point(spec, args.kappa)
        elif args.kx is not None and args.ky is not None:
            kappa = np.array([args.kx, args.ky]) * (1.0 if cfg.raw else spec.unit)
        else:
            raise ConfigError("greens-probe needs --kappa or both --kx and --ky")
        omega = args.omega * (1.0 if cfg.raw else spec.unit)
        params = cfg.ewald_params()
        if args.eta is not None:
            params = EwaldParams(eta=args.eta, target_tol=params.target_tol)
        return cmd_greens_probe(spec, kappa, omega, np.array([args.x, args.y]) * spec.a,
                                check=args.check, eta_scan=args.eta_scan, params=params)
    except (ConfigError, OnSourcePoint, qpgreens.SingularFrequency, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (spectral.NoSignChange, dirac.MissingRoots, qpgreens.NotConverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
