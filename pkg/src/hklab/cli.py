"""Command line front end: ``hklab {solve,verify,lemmas,sweep,structure} --config FILE``.

The config file is INI style (``[section]`` headers, ``key = value`` lines).
Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 a checked
property failed.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cones, estimates, quatlin
from . import fields as fl
from .errors import FormatError, GridError, HKError, SolverError
from .solver import SolveReport, SolverConfig, manufactured_h, solve

log = logging.getLogger("hklab")

COMMANDS = ("solve", "verify", "lemmas", "sweep", "structure")
EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_PROPERTY = 0, 2, 3, 4
GAP_TOL = 1e-9


class ConfigError(HKError, ValueError):
    pass


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------


@dataclass
class RunConfig:
    command: str
    family: str = "qma"
    n: int = 1
    dims: tuple[int, ...] = ()
    seed: int = 0
    output_dir: Path = Path("hklab-out")
    chi: str = "identity"
    h: dict = field(default_factory=lambda: {"kind": "constant"})
    solver: dict = field(default_factory=dict)
    sections: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})

    @property
    def config_hash(self) -> str:
        canon = {k: v for k, v in self.sections.items()}
        run = dict(canon.get("run", {}))
        run.pop("output_dir", None)
        run.pop("command", None)
        canon["run"] = run
        blob = json.dumps(canon, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base_dir / q


SOLVER_KEYS = {
    "tol_residual": float,
    "max_newton": int,
    "continuity_steps": int,
    "linear_max_iter": int,
    "linear_tol": float,
    "shrink": float,
    "min_step": float,
    "margin_keep": float,
}


def _int(value: str, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {value!r}") from None


def _float(value: str, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {value!r}") from None


def floats(value: str, key: str) -> list[float]:
    return [_float(v, key) for v in value.replace(",", " ").split()]


def load_config(path, command: str) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    sections = {s: dict(cp[s]) for s in cp.sections()}
    run = sections.get("run", {})
    if "command" in run and run["command"] != command:
        raise ConfigError(f"config is for command {run['command']!r}, not {command!r}")
    cfg = RunConfig(command=command, sections=sections, base_dir=path.parent)
    cfg.family = run.get("family", "qma")
    cfg.n = _int(run.get("n", "1"), "n")
    if cfg.n < 1:
        raise ConfigError("n must be at least 1")
    cfg.seed = _int(run.get("seed", "0"), "seed")
    cfg.output_dir = cfg.path(run.get("output_dir", "hklab-out"))
    dims = [_int(d, "dims") for d in run.get("dims", "16").replace(",", " ").split()]
    if len(dims) == 1:
        dims = dims * (4 * cfg.n)
    if len(dims) != 4 * cfg.n:
        raise ConfigError(f"dims needs 1 or {4 * cfg.n} entries, got {len(dims)}")
    if any(d < 1 or d & (d - 1) for d in dims):
        raise ConfigError("dims must be powers of two")
    cfg.dims = tuple(dims)
    try:
        cones.make_family(cfg.family, cfg.n)
    except (ValueError, HKError) as exc:
        raise ConfigError(str(exc)) from None

    chi = sections.get("chi", {})
    kind = chi.get("kind", "identity")
    if kind == "identity":
        cfg.chi = "identity"
    elif kind == "file":
        p = cfg.path(chi.get("path", ""))
        if not p.is_file():
            raise ConfigError(f"chi file {p} does not exist")
        cfg.chi = str(p)
    else:
        raise ConfigError(f"unknown chi kind {kind!r}")

    h = dict(sections.get("h", {"kind": "constant"}))
    kind = h.setdefault("kind", "constant")
    if kind == "constant":
        if "value" in h:
            _float(h["value"], "h.value")
    elif kind == "file":
        p = cfg.path(h.get("path", ""))
        if not p.is_file():
            raise ConfigError(f"h file {p} does not exist")
        h["path"] = str(p)
    elif kind == "manufactured":
        _float(h.get("amplitude", "0.05"), "h.amplitude")
        if h.get("shape", "cos") not in ("cos", "random"):
            raise ConfigError("h.shape must be cos or random")
    else:
        raise ConfigError(f"unknown h kind {kind!r}")
    cfg.h = h

    solver = {}
    for k, v in sections.get("solver", {}).items():
        if k not in SOLVER_KEYS:
            raise ConfigError(f"unknown solver key {k!r}")
        solver[k] = (_int if SOLVER_KEYS[k] is int else _float)(v, k)
    cfg.solver = solver
    return cfg


# --------------------------------------------------------------------------
# Artifacts
# --------------------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


class Output:
    """Writer for one run; holds the output directory lock."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.dir = cfg.output_dir
        self.lock = self.dir / ".hklab.lock"
        self.files: dict[str, str] = {}

    def __enter__(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(f"output directory {self.dir} is locked by another run ({self.lock})") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        self.t0 = time.time()
        return self

    def __exit__(self, *exc):
        try:
            meta = {
                "command": self.cfg.command,
                "config_hash": self.cfg.config_hash,
                "wall_time_s": time.time() - self.t0,
                "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            }
            (self.dir / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        finally:
            self.lock.unlink(missing_ok=True)
        return False

    def _record(self, name: str) -> Path:
        return self.dir / name

    def json(self, name: str, payload: dict) -> Path:
        p = self._record(name)
        body = {"config_hash": self.cfg.config_hash, **_clean(payload)}
        p.write_text(json.dumps(body, indent=2, sort_keys=True, allow_nan=False) + "\n")
        self.files[name] = hashlib.sha256(p.read_bytes()).hexdigest()
        return p

    def hktg(self, name: str, fieldobj) -> Path:
        p = self._record(name)
        fl.write_hktg(p, fieldobj)
        self.files[name] = hashlib.sha256(p.read_bytes()).hexdigest()
        return p

    def csv(self, name: str, table: estimates.SweepTable) -> Path:
        p = self._record(name)
        table.write_csv(p, self.cfg.config_hash)
        self.files[name] = hashlib.sha256(p.read_bytes()).hexdigest()
        return p

    def manifest(self) -> None:
        p = self._record("manifest.json")
        body = {"config_hash": self.cfg.config_hash, "files": dict(sorted(self.files.items()))}
        p.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# Problem assembly
# --------------------------------------------------------------------------


def build_problem(cfg: RunConfig):
    grid = fl.TorusGrid(cfg.n, cfg.dims)
    f = cones.make_family(cfg.family, cfg.n)
    if cfg.chi == "identity":
        chi = fl.identity_chi(grid)
    else:
        chi = fl.read_hktg(cfg.chi)
        if not isinstance(chi, fl.HermField) or chi.grid != grid:
            raise ConfigError(f"chi file {cfg.chi} does not hold a matrix field on grid {grid.dims}")
    fl.check_chi(chi)

    h = cfg.h
    star = None
    if h["kind"] == "constant":
        if "value" in h:
            value = float(h["value"])
        else:
            lam = fl.eigenvalue_field(chi).lam
            value = float(f.value(lam).reshape(-1)[0])
        hf = fl.ScalarField(grid, np.full(grid.shape, value))
    elif h["kind"] == "file":
        hf = fl.read_hktg(h["path"])
        if not isinstance(hf, fl.ScalarField) or hf.grid != grid:
            raise ConfigError(f"h file {h['path']} does not hold a scalar field on grid {grid.dims}")
    else:
        star = manufactured_shape(grid, h, cfg.seed) * float(h.get("amplitude", "0.05"))
        hf = manufactured_h(f, chi, star)
    return grid, f, chi, hf, star


def manufactured_shape(grid: fl.TorusGrid, h: dict, seed: int) -> fl.ScalarField:
    if h.get("shape", "cos") == "cos":
        return fl.cosine_field(grid, 1.0, axis=_int(h.get("axis", "0"), "h.axis"))
    rng = np.random.default_rng(seed)
    return fl.band_limited_random(grid, rng, _int(h.get("kmax", "2"), "h.kmax"))


def solver_config(cfg: RunConfig, f, chi, h) -> SolverConfig:
    return SolverConfig(f, chi, h, seed=cfg.seed, **cfg.solver)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_solve(cfg: RunConfig, out: Output) -> int:
    grid, f, chi, h, star = build_problem(cfg)
    try:
        rep = solve(solver_config(cfg, f, chi, h))
    except SolverError as exc:
        partial = getattr(exc, "report", None)
        body = partial.to_dict(include_timing=False) if partial else {}
        body.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        out.json("solve_report.json", body)
        out.manifest()
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    body = rep.to_dict(include_timing=False)
    body["family"] = f.label
    body["dims"] = list(grid.dims)
    if star is not None:
        body["recovery_error"] = float(np.abs(rep.phi.values - (star.values - star.values.mean())).max())
    out.json("solve_report.json", body)
    out.hktg("phi.hktg", rep.phi)
    out.manifest()
    return EXIT_OK


def _load_solution(cfg: RunConfig, grid, f, chi, h) -> SolveReport:
    vcfg = cfg.section("verify")
    if "phi" not in vcfg:
        return solve(solver_config(cfg, f, chi, h))
    p = cfg.path(vcfg["phi"])
    if not p.is_file():
        raise ConfigError(f"solve artifact {p} does not exist")
    phi = fl.read_hktg(p)
    if not isinstance(phi, fl.ScalarField) or phi.grid != grid:
        raise ConfigError(f"{p} does not hold a scalar field on grid {grid.dims}")
    b = 0.0
    rp = p.with_name("solve_report.json")
    if rp.is_file():
        b = float(json.loads(rp.read_text()).get("b", 0.0))
    return SolveReport(phi=phi, b=b)


def cmd_verify(cfg: RunConfig, out: Output) -> int:
    grid, f, chi, h, _ = build_problem(cfg)
    vcfg = cfg.section("verify")
    try:
        rep = _load_solution(cfg, grid, f, chi, h)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    est = estimates.estimate_report(rep.phi, chi, f=f)
    bad = est.invariant_violations()

    lam_chi = fl.eigenvalue_field(chi).lam
    if np.ptp(lam_chi.reshape(-1, cfg.n), axis=0).max() > 1e-12:
        lam_sub = lam_chi
    else:
        lam_sub = lam_chi.reshape(-1, cfg.n)[0]
    cert = cones.subsolution_check(f, lam_sub, h.values + rep.b, seed=cfg.seed)
    payload = {"estimate": est.to_dict(), "violations": bad}
    if isinstance(cert, cones.SubsolutionCertificate):
        R = float(vcfg["r"]) if "r" in vcfg else None
        table = estimates.dichotomy_scan(f, rep, cert, chi, R=R)
        payload["subsolution"] = {"accepted": True, **cert.__dict__}
        payload["dichotomy"] = table.to_dict()
        if table.min_kappa is not None and not table.min_kappa > 0:
            bad.append("dichotomy")
    else:
        payload["subsolution"] = {"accepted": False, **cert.__dict__}

    eps = _float(vcfg.get("epsilon", "0.1"), "verify.epsilon")
    pts = _int(vcfg.get("ball_points", "21" if cfg.n == 1 else "5"), "verify.ball_points")
    radius = _float(vcfg.get("ball_radius", "0.25"), "verify.ball_radius")
    bg = estimates.BallGrid(cfg.n, pts)
    try:
        abp = estimates.abp_diagnostics(estimates.ball_restriction(rep.phi, radius, pts), eps, bg)
        payload["abp"] = abp.to_dict()
        if abp.contact_count:
            if min(abp.min_gap_blocki, abp.min_gap_sroka) < -GAP_TOL:
                bad.append("abp_gaps")
            if not abp.max_level_excess < 0:
                bad.append("abp_level")
    except HKError as exc:
        payload["abp"] = {"error": f"{type(exc).__name__}: {exc}"}
    out.json("estimate_report.json", payload)
    out.manifest()
    if bad:
        print(f"property violations: {', '.join(bad)}", file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_OK


def _random_psd_real(rng, n, count):
    A = rng.standard_normal((count, 4 * n, 4 * n))
    return A @ np.swapaxes(A, -1, -2)


def _random_psd_complex(rng, n, count):
    A = rng.standard_normal((count, 2 * n, 2 * n)) + 1j * rng.standard_normal((count, 2 * n, 2 * n))
    return A @ np.conj(np.swapaxes(A, -1, -2))


def run_lemmas(samples: int, n_values, seed: int) -> dict:
    """Sampled checks of the pointwise inequalities; returns the minimum gaps found."""
    rng = np.random.default_rng(seed)
    result: dict = {"samples": samples, "n_values": list(n_values)}
    for n in n_values:
        H = quatlin.random_hyperhermitian(n, rng, size=(samples,))
        _, gap = quatlin.paired_spectrum(H)
        scale = np.abs(np.linalg.eigvalsh(H)).max(axis=-1)
        result[f"pairing_gap_rel_n{n}"] = float((gap / np.maximum(scale, 1e-300)).max())
        result[f"min_blocki_gap_n{n}"] = float(np.min(quatlin.blocki_gap(_random_psd_real(rng, n, samples))))
        result[f"min_sroka_gap_n{n}"] = float(np.min(quatlin.sroka_gap(_random_psd_complex(rng, n, samples))))
        fams = [cones.QMA(n), cones.HessianK(n, 1)] + ([cones.HessianK(n, 2), cones.NMinus1(n)] if n >= 2 else [])
        for f in fams:
            lam = cones.sample_interior(f, min(samples, 1000), rng)
            result[f"min_concavity_gap_{f.label}_n{n}"] = float(np.min(cones.concavity_trace_gap(f, lam)))
    return result


def lemma_violations(result: dict) -> list[str]:
    bad = []
    for k, v in result.items():
        if k.startswith("min_") and v < -GAP_TOL:
            bad.append(k)
        if k.startswith("pairing_gap_rel") and v > 1e-9:
            bad.append(k)
    return bad


def cmd_lemmas(cfg: RunConfig, out: Output) -> int:
    lc = cfg.section("lemmas")
    samples = _int(lc.get("samples", "10000"), "lemmas.samples")
    n_values = [_int(v, "lemmas.n_values") for v in lc.get("n_values", "1, 2").replace(",", " ").split()]
    result = run_lemmas(samples, n_values, cfg.seed)
    bad = lemma_violations(result)
    result["violations"] = bad
    out.json("lemmas.json", result)
    out.manifest()
    if bad:
        print(f"property violations: {', '.join(bad)}", file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out: Output) -> int:
    grid = fl.TorusGrid(cfg.n, cfg.dims)
    f = cones.make_family(cfg.family, cfg.n)
    sc = cfg.section("sweep")
    amps = floats(sc.get("amplitudes", "0.01, 0.02, 0.05, 0.1, 0.2"), "sweep.amplitudes")
    refinements = _int(sc.get("refinements", "1"), "sweep.refinements")
    shape = manufactured_shape(grid, {"shape": sc.get("shape", "cos"), "axis": sc.get("axis", "0"), "kmax": sc.get("kmax", "2")}, cfg.seed)
    table = estimates.laplacian_ratio_sweep(amps, shape, family=f, refinements=refinements, **cfg.solver)
    out.csv("sweep.csv", table)
    flags = table.flags
    bad = [c for c, v in flags.items() if v]
    for r in table.rows:
        if r.report is not None and "alpha_range" in r.report.invariant_violations():
            bad.append(f"alpha_range@{r.amplitude}/{r.resolution}")
    out.json("sweep.json", {"rows": [r.to_dict() for r in table.rows], "blowup": flags, "violations": bad})
    out.manifest()
    if any(r.status != "ok" for r in table.rows):
        print("solver failure in at least one sweep row", file=sys.stderr)
        return EXIT_SOLVER
    if bad:
        print(f"property violations: {', '.join(bad)}", file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_OK


def cmd_structure(cfg: RunConfig, out: Output) -> int:
    f = cones.make_family(cfg.family, cfg.n)
    sc = cfg.section("structure")
    samples = _int(sc.get("samples", "200"), "structure.samples")
    lo, hi = (floats(sc["h_range"], "structure.h_range") + [0.0, 0.0])[:2] if "h_range" in sc else (0.0, 0.0)
    rep = cones.check_structure(f, samples, (lo, hi), seed=cfg.seed)
    out.json("structure.json", rep.to_dict())
    out.manifest()
    if not rep.all_pass:
        print(f"structural conditions fail for {f.label}", file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_OK


HANDLERS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "lemmas": cmd_lemmas,
    "sweep": cmd_sweep,
    "structure": cmd_structure,
}


def run(command: str, config_path) -> int:
    try:
        cfg = load_config(config_path, command)
        with Output(cfg) as out:
            return HANDLERS[command](cfg, out)
    except (ConfigError, GridError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except HKError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hklab", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="INI-style run configuration")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return run(args.command, args.config)


if __name__ == "__main__":
    sys.exit(main())
