"""Command-line entry point: ``tocloak --config run.json``.

One JSON document describes one run.  Exit status: 0 success, 2 invalid
configuration, 3 solver failure, 4 failed check.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import re
import sys
import time
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .coeffs import CoefficientField, Disk, constant_field
from .errors import CloakError, IncompatibleSourceError
from .fem.mesh import Mesh, generate_disk_mesh
from .fem.solve import dtn_matrix
from .radial import dtn_spectrum
from .verify.decoupled import decoupled_cloak_solve
from .verify.energy import cutoff_decay_experiment
from .verify.scenario import Scenario, angular_mode_source, gaussian_source
from .verify.sweep import FEM_EPS, SPECTRAL_EPS, general_cloak_experiment, near_cloak_sweep, sweep_mesh
from .xform import (
    RadialProfile,
    affine_map,
    blowup_map,
    closed_form_radial_cloak,
    ellipse_map,
    identity_map,
    near_cloak_medium,
    pushforward_coefficients,
    radial_field,
    radial_profile_of,
    scaling_map,
)

log = logging.getLogger("tocloak")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4
COMMANDS = ("pushforward", "dtn", "cloak-sweep", "verify-thm2", "energy-decay", "general-cloak", "mesh")
SWEEP_HEADER = ["epsilon", "mode", "lambda_bg_re", "lambda_bg_im", "lambda_cloak_re", "lambda_cloak_im", "abs_err"]
ENERGY_HEADER = ["epsilon", "energy_sq", "energy_sq_times_log"]
ENERGY_EPS = (1e-2, 1e-4, 1e-6)

_COEFF = re.compile(r"^(identity|constant:.+|diag:.+|radial-table:.+)$")
_SOURCE = re.compile(r"^(none|gaussian:[^,]+,[^,]+,[^,]+,[^,]+|angular-mode:[^,]+,[^,]+)$")
_BOUNDARY = re.compile(r"^(none|angular-mode:[^,]+,[^,]+)$")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------- schema


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MediumConfig(_Strict):
    A: str = "identity"
    B: str = "identity"
    source: str = "none"

    @field_validator("A", "B")
    @classmethod
    def _coeff(cls, v):
        if not _COEFF.match(v):
            raise ValueError("expected identity, constant:<v>, diag:<v1,...,vm> or radial-table:<path>")
        return v

    @field_validator("source")
    @classmethod
    def _source(cls, v):
        if not _SOURCE.match(v):
            raise ValueError("expected none, gaussian:<x,y,sigma,amplitude> or angular-mode:<n,amplitude>")
        return v


class MapConfig(_Strict):
    type: Literal["identity", "affine", "scaling", "ellipse"]
    matrix: Optional[List[List[float]]] = None
    shift: List[float] = [0.0, 0.0]
    factor: float = 1.0
    a: float = 2.0
    b: float = 1.0

    @model_validator(mode="after")
    def _check(self):
        if self.type == "affine":
            M = np.asarray(self.matrix if self.matrix is not None else [], dtype=float)
            if M.shape != (2, 2) or np.linalg.det(M) <= 0:
                raise ValueError("affine map needs a 2x2 'matrix' with positive determinant")
        if self.type == "scaling" and self.factor <= 0:
            raise ValueError("scaling factor must be positive")
        if self.type == "ellipse" and (self.a <= 0 or self.b <= 0):
            raise ValueError("ellipse semi-axes must be positive")
        return self


class CloakConfig(_Strict):
    epsilon: Optional[Union[float, List[float]]] = None
    map: Literal["blowup"] = "blowup"
    G: Optional[MapConfig] = None

    @field_validator("epsilon")
    @classmethod
    def _eps(cls, v):
        vals = v if isinstance(v, list) else ([] if v is None else [v])
        if isinstance(v, list) and not v:
            raise ValueError("epsilon list must not be empty")
        for e in vals:
            if not 0.0 <= e < 1.0:
                raise ValueError(f"epsilon must lie in [0, 1), got {e}")
        return v


class SolverConfig(_Strict):
    type: Literal["spectral", "fem", "decoupled"] = "spectral"
    n_max: int = Field(16, ge=0)
    h: float = Field(0.05, gt=0)
    h_interface: Optional[float] = Field(None, gt=0)


class MeshConfig(_Strict):
    radii: List[float] = [1.0, 2.0]
    h_interface: Optional[float] = Field(None, gt=0)


class RunConfig(_Strict):
    command: Literal[COMMANDS]
    omega: float = Field(1.0, ge=0)
    m: int = Field(1, ge=1)
    background: MediumConfig = MediumConfig()
    cloak: CloakConfig = CloakConfig()
    interior: MediumConfig = MediumConfig()
    solver: SolverConfig = SolverConfig()
    boundary: str = "none"
    mesh: MeshConfig = MeshConfig()
    output: Optional[str] = None
    seed: int = 0
    base_dir: str = Field(".", exclude=True)

    @field_validator("boundary")
    @classmethod
    def _boundary(cls, v):
        if not _BOUNDARY.match(v):
            raise ValueError("expected none or angular-mode:<n,amplitude>")
        return v


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        key = ".".join(str(p) for p in e["loc"]) or "<root>"
        msg = "unknown key" if e["type"] == "extra_forbidden" else e["msg"]
        lines.append(f"{key}: {msg}")
    return "; ".join(lines)


def parse_config(path) -> RunConfig:
    """Read and validate a JSON run document; errors name the offending key."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"malformed JSON in {p}: {err}") from err
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    if "base_dir" in doc:
        raise ConfigError("base_dir: unknown key")
    try:
        cfg = RunConfig(**doc, base_dir=str(p.parent))
    except ValidationError as err:
        raise ConfigError(_format_validation(err)) from err
    return cfg


# ---------------------------------------------------------------------- builders


def _numbers(text, key):
    try:
        return [complex(s.strip().replace(" ", "")) for s in text.split(",")]
    except ValueError as err:
        raise ConfigError(f"{key}: cannot parse numbers from {text!r}") from err


def _real(z, key):
    if abs(z.imag) > 0:
        raise ConfigError(f"{key}: expected a real number, got {z}")
    return z.real


def _table(path, cfg: RunConfig, key):
    p = Path(path)
    if not p.is_absolute():
        p = Path(cfg.base_dir) / p
    try:
        data = np.loadtxt(p, delimiter=None if p.suffix != ".csv" else ",", ndmin=2, comments="#")
    except (OSError, ValueError) as err:
        raise ConfigError(f"{key}: cannot read radial table {p}: {err}") from err
    if data.shape[1] != 4 or np.any(np.diff(data[:, 0]) <= 0):
        raise ConfigError(f"{key}: radial table needs increasing rows 'r a_r a_t b'")
    if cfg.m != 1:
        raise ConfigError(f"{key}: radial tables support m = 1 only")
    return data


def _coefficient(spec: str, cfg: RunConfig, key: str):
    """An m x m matrix for constant specifiers, the (K, 4) table array for radial tables."""
    m = cfg.m
    if spec == "identity":
        return np.eye(m, dtype=complex)
    kind, _, arg = spec.partition(":")
    if kind == "constant":
        vals = _numbers(arg, key)
        if len(vals) != 1:
            raise ConfigError(f"{key}: constant takes a single value")
        return vals[0] * np.eye(m, dtype=complex)
    if kind == "diag":
        vals = _numbers(arg, key)
        if len(vals) != m:
            raise ConfigError(f"{key}: diag needs {m} entries, got {len(vals)}")
        return np.diag(vals).astype(complex)
    return _table(arg, cfg, key)


def build_medium(med: MediumConfig, cfg: RunConfig, prefix: str, domain=None) -> CoefficientField:
    A = _coefficient(med.A, cfg, f"{prefix}.A")
    B = _coefficient(med.B, cfg, f"{prefix}.B")
    tabulated = med.A.startswith("radial-table") or med.B.startswith("radial-table")
    if not tabulated:
        blocks = np.zeros((2, 2, cfg.m, cfg.m), dtype=complex)
        blocks[0, 0] = blocks[1, 1] = A
        return constant_field(blocks, B, domain=domain, name=f"{med.A}|{med.B}")

    def column(value, spec, col):
        if spec.startswith("radial-table"):
            r = value[:, 0]
            y = value[:, col]
            return lambda rr, side="right": np.interp(np.atleast_1d(rr), r, y).astype(complex)[:, None, None]
        return lambda rr, side="right": np.broadcast_to(value, (len(np.atleast_1d(rr)), cfg.m, cfg.m))

    profile = RadialProfile(column(A, med.A, 1), column(A, med.A, 2), column(B, med.B, 3), (), m=cfg.m)
    return radial_field(profile, domain=domain, name=f"{med.A}|{med.B}")


def build_source(spec: str, cfg: RunConfig, key: str, interior: bool):
    if spec == "none":
        return None
    kind, _, arg = spec.partition(":")
    vals = [_real(v, key) for v in _numbers(arg, key)]
    if kind == "gaussian":
        x, y, sigma, amp = vals
        if sigma <= 0:
            raise ConfigError(f"{key}: sigma must be positive")
        f = gaussian_source(x, y, sigma, amp, cfg.m)
        if not interior and abs(f(np.zeros((1, 2)))[0, 0]) > 1e-8 * max(abs(amp), 1e-300):
            raise ConfigError(f"{key}: background source must vanish near the blow-up point")
        return f
    n, amp = vals
    if n != int(n):
        raise ConfigError(f"{key}: mode number must be an integer")
    if interior:
        return angular_mode_source(int(n), amp, r0=0.5, width=0.4, m=cfg.m)
    return angular_mode_source(int(n), amp, r0=1.0, width=0.5, m=cfg.m)


def build_map(mc: Optional[MapConfig]):
    if mc is None:
        return None
    if mc.type == "identity":
        return identity_map()
    if mc.type == "affine":
        return affine_map(mc.matrix, mc.shift)
    if mc.type == "scaling":
        return scaling_map(mc.factor)
    return ellipse_map(mc.a, mc.b)


def _eps_list(cfg: RunConfig, default):
    e = cfg.cloak.epsilon
    if e is None:
        return list(default)
    return list(e) if isinstance(e, list) else [e]


def _eps_scalar(cfg: RunConfig, default):
    e = cfg.cloak.epsilon
    if isinstance(e, list):
        if len(e) != 1:
            raise ConfigError(f"cloak.epsilon: command {cfg.command} takes a single value")
        return e[0]
    return default if e is None else e


def build_scenario(cfg: RunConfig, epsilon: float = 0.1, solver: Optional[str] = None) -> Scenario:
    bg = build_medium(cfg.background, cfg, "background", Disk(2.0))
    interior = build_medium(cfg.interior, cfg, "interior", Disk(1.0))
    try:
        return Scenario(
            omega=cfg.omega,
            background=bg,
            background_source=build_source(cfg.background.source, cfg, "background.source", False),
            epsilon=epsilon,
            G=build_map(cfg.cloak.G),
            interior=interior,
            interior_source=build_source(cfg.interior.source, cfg, "interior.source", True),
            solver=solver or cfg.solver.type,
            n_max=cfg.solver.n_max,
            h=cfg.solver.h,
            h_interface=cfg.solver.h_interface,
        )
    except ValueError as err:
        raise ConfigError(f"scenario: {err}") from err


def boundary_data(cfg: RunConfig, G=None):
    if cfg.boundary == "none":
        return None
    _, _, arg = cfg.boundary.partition(":")
    n, amp = [_real(v, "boundary") for v in _numbers(arg, "boundary")]
    m = cfg.m

    def h(points):
        x = points if G is None else G.inverse(points)
        v = amp * np.exp(1j * int(n) * np.arctan2(x[:, 1], x[:, 0]))
        return np.repeat(v[:, None], m, axis=1)

    return h


# ---------------------------------------------------------------------- output


def _f(x) -> str:
    """Shortest round-trip decimal representation."""
    return repr(float(x))


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else (str(c) if isinstance(c, (int, np.integer)) else _f(c)) for c in row])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [float(np.real(x)), float(np.imag(x))]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def summary_path(output: Path) -> Path:
    return output.with_name(output.stem + ".summary.json")


def emit_report(results: dict, path) -> None:
    """Write the run summary; contents depend only on the inputs (no timings)."""
    Path(path).write_text(json.dumps(_jsonable(results), sort_keys=True, indent=2) + "\n")


def _entry(M, p=0, q=0):
    M = np.asarray(M)
    return complex(M) if M.ndim == 0 else complex(M[p, q])


# ---------------------------------------------------------------------- commands


def _cmd_pushforward(cfg, out: Path, workers, seed):
    eps = _eps_scalar(cfg, 0.0)
    sc = build_scenario(cfg, epsilon=max(eps, 1e-3), solver="spectral" if cfg.cloak.G is None else "fem")
    rad = np.linspace(1.05, 1.95, 10)
    ang = 2 * np.pi * np.arange(16) / 16
    R, T = np.meshgrid(rad, ang, indexing="ij")
    pts = np.stack([R.ravel() * np.cos(T.ravel()), R.ravel() * np.sin(T.ravel())], axis=1)
    if eps == 0:
        F = blowup_map()
        field = pushforward_coefficients(F, sc.background)
    else:
        inner = np.stack([0.5 * np.cos(ang), 0.5 * np.sin(ang)], axis=1)
        pts = np.vstack([inner, pts])
        field = near_cloak_medium(sc.background, eps, sc.interior)
    if sc.G is not None:
        field = pushforward_coefficients(sc.G, field)
        pts = sc.G.forward(pts)
    A, B = field.evaluate(pts)
    rows = []
    m = cfg.m
    for i, (x, y) in enumerate(pts):
        for a in range(2):
            for b in range(2):
                for p in range(m):
                    for q in range(m):
                        z = A[i, a, b, p, q]
                        rows.append([x, y, "A", a, b, p, q, z.real, z.imag])
        for p in range(m):
            for q in range(m):
                z = B[i, p, q]
                rows.append([x, y, "B", -1, -1, p, q, z.real, z.imag])
    _write_csv(out, ["x", "y", "kind", "alpha", "beta", "p", "q", "re", "im"], rows)
    res = {"epsilon": eps, "points": len(pts)}
    if eps == 0 and sc.G is None and sc.background.is_radial:
        Ac, Bc = closed_form_radial_cloak(sc.background).evaluate(pts)
        res["closed_form_deviation"] = float(max(np.abs(A - Ac).max(), np.abs(B - Bc).max()))
    return EXIT_OK, res


def _cmd_dtn(cfg, out: Path, workers, seed):
    eps = _eps_scalar(cfg, None)
    sc = build_scenario(cfg, epsilon=eps if eps else 0.1)
    m = cfg.m
    if eps is None or eps == 0:
        field, f = sc.background, sc.background_source
    else:
        from .verify.sweep import cloaked_source
        field = near_cloak_medium(sc.background, eps, sc.interior, sc.G)
        f = cloaked_source(sc, eps)
    if sc.G is not None and (eps is None or eps == 0):
        field = pushforward_coefficients(sc.G, field)
    rows = []
    if sc.solver == "spectral" and sc.G is None and field.is_radial:
        d = dtn_spectrum(radial_profile_of(field), sc.omega, sc.n_max, workers=workers, source=f)
        for n in sorted(d.modes):
            for p in range(m):
                for q in range(m):
                    z = _entry(d[n], p, q)
                    rows.append([n, p, q, z.real, z.imag])
        route = "spectral"
    else:
        d = dtn_matrix(sweep_mesh(sc), field, sc.omega, f)
        x = d.points if sc.G is None else sc.G.inverse(d.points)
        P = d.projected(sc.n_max, np.arctan2(x[:, 1], x[:, 0]))
        for i, n in enumerate(range(-sc.n_max, sc.n_max + 1)):
            for p in range(m):
                for q in range(m):
                    z = complex(P[i * m + p, i * m + q])
                    rows.append([n, p, q, z.real, z.imag])
        route = "fem"
    _write_csv(out, ["mode", "p", "q", "lambda_re", "lambda_im"], rows)
    return EXIT_OK, {"epsilon": eps, "route": route, "modes": 2 * sc.n_max + 1}


def _sweep_rows(reports, scenario):
    best, every = [], []
    for r in reports:
        if scenario.solver == "spectral":
            lam_bg = {n: _entry(r.dtn_background[n]) for n in r.mode_errors}
            lam_cl = {n: _entry(r.dtn_cloaked[n]) for n in r.mode_errors}
        else:
            G = scenario.G
            x = r.dtn_background.points if G is None else G.inverse(r.dtn_background.points)
            ang = np.arctan2(x[:, 1], x[:, 0])
            Pb = r.dtn_background.projected(scenario.n_max, ang)
            Pc = r.dtn_cloaked.projected(scenario.n_max, ang)
            m = scenario.m
            idx = {n: i * m for i, n in enumerate(range(-scenario.n_max, scenario.n_max + 1))}
            lam_bg = {n: complex(Pb[idx[n], idx[n]]) for n in r.mode_errors}
            lam_cl = {n: complex(Pc[idx[n], idx[n]]) for n in r.mode_errors}
        rows = [[r.epsilon, n, lam_bg[n].real, lam_bg[n].imag, lam_cl[n].real, lam_cl[n].imag, r.mode_errors[n]]
                for n in sorted(r.mode_errors)]
        every.extend(rows)
        # the worst mode; ties resolve to the smallest |n|, then negative n
        n_star = max(sorted(r.mode_errors, key=lambda n: (abs(n), n)), key=lambda n: r.mode_errors[n])
        best.append(next(row for row in rows if row[1] == n_star))
    return best, every


def _cmd_cloak_sweep(cfg, out: Path, workers, seed):
    sc = build_scenario(cfg, epsilon=0.1)
    eps = _eps_list(cfg, SPECTRAL_EPS if sc.solver == "spectral" else FEM_EPS)
    if any(e == 0 for e in eps):
        raise ConfigError("cloak.epsilon: the sweep needs positive values")
    if sc.solver == "decoupled":
        raise ConfigError("solver.type: cloak-sweep needs spectral or fem")
    reports = near_cloak_sweep(sc, eps, workers=workers, seed=seed)
    best, every = _sweep_rows(reports, sc)
    _write_csv(out, SWEEP_HEADER, best)
    _write_csv(out.with_name(out.stem + "_modes.csv"), SWEEP_HEADER, every)
    errs = [r.error for r in reports]
    return EXIT_OK, {
        "route": sc.solver,
        "epsilon": eps,
        "error": errs,
        "relative_error": [r.relative_error for r in reports],
        "error_times_log": [e * abs(np.log(x)) for e, x in zip(errs, eps)],
        "strictly_decreasing": bool(all(b < a for a, b in zip(errs, errs[1:]))),
        "invariance_residual": [r.timings.get("invariance_residual") for r in reports],
    }


def _cmd_general_cloak(cfg, out: Path, workers, seed):
    if cfg.cloak.G is None:
        raise ConfigError("cloak.G: general-cloak needs a map G")
    sc = build_scenario(cfg, epsilon=0.1, solver="fem")
    eps = _eps_list(cfg, FEM_EPS)
    if any(e == 0 for e in eps):
        raise ConfigError("cloak.epsilon: the sweep needs positive values")
    reports = general_cloak_experiment(sc.G, sc, eps, workers=workers)
    _write_csv(out, ["epsilon", "operator_err", "relative_err"], [[r.epsilon, r.error, r.relative_error] for r in reports])
    errs = [r.error for r in reports]
    return EXIT_OK, {"map": sc.G.name, "epsilon": eps, "error": errs,
                     "relative_error": [r.relative_error for r in reports],
                     "strictly_decreasing": bool(all(b < a for a, b in zip(errs, errs[1:])))}


def _cmd_verify_thm2(cfg, out: Path, workers, seed):
    eps = _eps_scalar(cfg, 0.0)
    if eps != 0:
        raise ConfigError("cloak.epsilon: verify-thm2 treats the ideal cloak; epsilon must be 0")
    sc = build_scenario(cfg, epsilon=0.0, solver="decoupled")
    try:
        sol, rep = decoupled_cloak_solve(sc, boundary_data(cfg, sc.G))
    except IncompatibleSourceError as err:
        r = err.report
        res = {"error": str(err), "condition": "interior source must be orthogonal to every adjoint null vector",
               "null_dim": r.null_dim, "compatibility": r.compatibility,
               "pencil_values": [complex(v) for v in r.pencil_values], "threshold": r.threshold}
        return EXIT_SOLVER, res
    d = rep.hidden_bc
    rows = [["trace_constant_deviation", d["trace_constant_deviation"]],
            ["net_flux_norm", d["net_flux_norm"]],
            ["interior_l2_norm", d["interior_l2_norm"]],
            ["angular_derivative_norm", d["angular_derivative_norm"]]]
    for p, z in enumerate(np.atleast_1d(d["jump_value"])):
        rows += [[f"jump_re_{p}", z.real], [f"jump_im_{p}", z.imag]]
    for p, z in enumerate(np.atleast_1d(sol.c0)):
        rows += [[f"c0_re_{p}", z.real], [f"c0_im_{p}", z.imag]]
    _write_csv(out, ["quantity", "value"], rows)
    checks = {
        "trace_constant": d["trace_constant_deviation"] <= 1e-10,
        "net_flux": d["net_flux_norm"] <= 1e-8 * d["interior_l2_norm"] + 1e-14,
    }
    res = {"hidden_bc": d, "checks": checks, "c0": sol.c0,
           "fredholm": None if sol.fredholm is None else {"null_dim": sol.fredholm.null_dim,
                                                         "compatibility": sol.fredholm.compatibility}}
    return (EXIT_OK if all(checks.values()) else EXIT_CHECK), res


def _cmd_energy_decay(cfg, out: Path, workers, seed):
    sc = build_scenario(cfg, epsilon=0.1)
    eps = _eps_list(cfg, ENERGY_EPS)
    if any(e == 0 for e in eps):
        raise ConfigError("cloak.epsilon: the experiment needs positive values")
    try:
        rows = cutoff_decay_experiment(eps, closed_form_radial_cloak(sc.background))
    except ValueError as err:
        raise ConfigError(f"cloak.epsilon: {err}") from err
    _write_csv(out, ENERGY_HEADER, [[r.epsilon, r.energy_sq, r.energy_sq_times_log] for r in rows])
    e2 = [r.energy_sq for r in rows]
    checks = {"strictly_decreasing": bool(all(b < a for a, b in zip(e2, e2[1:])))}
    return (EXIT_OK if all(checks.values()) else EXIT_CHECK), {
        "epsilon": eps, "energy_sq": e2, "b_term": [r.b_term for r in rows], "checks": checks}


def _cmd_mesh(cfg, out: Path, workers, seed):
    try:
        mesh = generate_disk_mesh(cfg.mesh.radii, cfg.solver.h, cfg.mesh.h_interface)
    except ValueError as err:
        raise ConfigError(f"mesh.radii: {err}") from err
    G = build_map(cfg.cloak.G)
    if G is not None:
        mesh = mesh.mapped(G)
    mesh.write(out)
    back = Mesh.read(out)
    same = bool(np.array_equal(back.nodes, mesh.nodes) and np.array_equal(back.triangles, mesh.triangles)
                and np.array_equal(back.boundary_edges, mesh.boundary_edges)
                and list(back.boundary_tags) == list(mesh.boundary_tags))
    return (EXIT_OK if same else EXIT_CHECK), {
        "nodes": mesh.n_nodes, "triangles": mesh.n_triangles, "boundary_edges": len(mesh.boundary_edges),
        "min_quality": float(mesh.quality().min()), "round_trip": same}


_DISPATCH = {
    "pushforward": _cmd_pushforward,
    "dtn": _cmd_dtn,
    "cloak-sweep": _cmd_cloak_sweep,
    "general-cloak": _cmd_general_cloak,
    "verify-thm2": _cmd_verify_thm2,
    "energy-decay": _cmd_energy_decay,
    "mesh": _cmd_mesh,
}


def run(cfg: RunConfig, output: Optional[str] = None, serial: bool = False, seed: Optional[int] = None) -> int:
    """Execute one configured run and write its CSV and summary; returns the exit status."""
    out = output or cfg.output
    if not out:
        raise ConfigError("output: no output path given (config 'output' or --output)")
    out = Path(out)
    if not out.is_absolute():
        out = Path.cwd() / out
    out.parent.mkdir(parents=True, exist_ok=True)
    seed = cfg.seed if seed is None else seed
    workers = 1 if serial else max(1, min(4, os.cpu_count() or 1))
    t0 = time.perf_counter()
    summary = {"command": cfg.command, "seed": seed, "output": out.name,
               "config": cfg.model_dump(exclude={"base_dir", "output"}),
               "mode": "serial" if serial else "parallel"}
    if not serial:
        summary["reproducibility"] = "parallel run: numeric outputs reproduce the serial path within 1e-12"
    try:
        status, res = _DISPATCH[cfg.command](cfg, out, workers, seed)
    except ConfigError:
        raise
    except CloakError as err:
        status, res = EXIT_SOLVER, {"error": f"{type(err).__name__}: {err}"}
    except AssertionError as err:
        status, res = EXIT_CHECK, {"error": f"check failed: {err}"}
    summary["status"] = status
    summary["results"] = res
    emit_report(summary, summary_path(out))
    log.info("%s finished with status %d in %.2f s", cfg.command, status, time.perf_counter() - t0)
    if status != EXIT_OK:
        log.error("%s", res.get("error", "check failed; see summary"))
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="tocloak", description="Transformation-optics cloaking experiments.")
    ap.add_argument("--config", required=True, help="JSON run document")
    ap.add_argument("--output", help="output CSV path (overrides the config)")
    ap.add_argument("--serial", action="store_true", help="single-threaded, bit-reproducible path")
    ap.add_argument("--seed", type=int, help="seed for randomised checks (overrides the config)")
    ap.add_argument("--log-level", choices=["error", "info", "debug"], default="error")
    args = ap.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config)
        return run(cfg, args.output, args.serial, args.seed)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
