"""Near-cloak DtN sweeps over the regularisation parameter, radial and mapped."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from ..coeffs import CoefficientField
from ..errors import CloakError
from ..fem.mesh import generate_disk_mesh
from ..fem.solve import dtn_matrix
from ..radial import dtn_spectrum
from ..xform import (
    DiffeoMap,
    composed_map,
    near_cloak_medium,
    pushforward_coefficients,
    pushforward_source,
    radial_profile_of,
    regularized_blowup,
)
from .energy import PlaneWaveField, form_invariance_check, random_smooth_medium
from .quadrature import disk_rule_factory
from .scenario import CloakReport, Scenario, combine_sources

SPECTRAL_EPS = (1e-1, 1e-2, 1e-3, 1e-4)
FEM_EPS = (1e-1, 3e-2, 1e-2)
INVARIANCE_TOL = 1e-6
INTERFACE_REFINEMENT = 10


def _check_eps(eps_list):
    eps = [float(e) for e in eps_list]
    if not eps or any(e <= 0 or e >= 1 for e in eps):
        raise ValueError("eps_list entries must lie in (0, 1)")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    return eps


def invariance_preflight(eps: float, G: Optional[DiffeoMap] = None, seed: int = 0) -> float:
    """Form-invariance residual for the sweep's map on a random medium and field pair.

    Raises :class:`CloakError` when the relative residual exceeds 1e-6.
    """
    rng = np.random.default_rng(seed)
    fld = random_smooth_medium(rng)
    u, v = PlaneWaveField.random(rng), PlaneWaveField.random(rng)
    F = regularized_blowup(eps)
    ref = disk_rule_factory([0.0, eps, 2.0])
    if G is None:
        img = disk_rule_factory([0.0, 1.0, 2.0], base_order=7, base_theta=80)
    else:
        F = composed_map(G, F)
        img = disk_rule_factory([0.0, 1.0, 2.0], base_order=7, base_theta=80, G=G)
    res = form_invariance_check(u, v, fld, F, ref, img)
    rel = res.difference / max(abs(res.reference), 1e-300)
    if rel > INVARIANCE_TOL:
        raise CloakError(f"form invariance fails for {F.name}: relative residual {rel:.3e}")
    return rel


def cloaked_source(scenario: Scenario, eps: float):
    """Physical source of the near cloak: pushed-forward background source in the shell,
    interior source in the cloaked region (both transported by G when present)."""
    F = regularized_blowup(eps)
    G = scenario.G
    outer = None if scenario.background_source is None else pushforward_source(
        F if G is None else composed_map(G, F), scenario.background_source)
    inner = scenario.interior_source
    if inner is not None and G is not None:
        inner = pushforward_source(G, inner)

    def locate_outer(y):
        x = y if G is None else G.inverse(y)
        return np.hypot(x[:, 0], x[:, 1]) > 1.0

    return combine_sources(inner, outer, locate_outer, scenario.m)


def background_problem(scenario: Scenario):
    """Background medium and source in physical coordinates."""
    if scenario.G is None:
        return scenario.background, scenario.background_source
    bg = pushforward_coefficients(scenario.G, scenario.background)
    f = None if scenario.background_source is None else pushforward_source(scenario.G, scenario.background_source)
    return bg, f


# ---------------------------------------------------------------------- spectral route


def _spectral_errors(dtn_bg, dtn_cl):
    ns = sorted(dtn_bg.modes)
    errs = {}
    for n in ns:
        d = np.abs(np.asarray(dtn_bg[n]) - np.asarray(dtn_cl[n]))
        g = np.abs(np.asarray(dtn_bg.source_flux.get(n, 0)) - np.asarray(dtn_cl.source_flux.get(n, 0)))
        # sup over unit mode data of |d h + g|
        errs[n] = float(np.linalg.norm(np.atleast_2d(d), 2) + np.linalg.norm(np.atleast_1d(g)))
    return errs


def _spectral_dtn(field: CoefficientField, scenario: Scenario, source, workers=1):
    profile = radial_profile_of(field)
    return dtn_spectrum(profile, scenario.omega, scenario.n_max, workers=workers, source=source)


def _spectral_one(scenario: Scenario, eps: float, dtn_bg) -> CloakReport:
    t0 = time.perf_counter()
    medium = near_cloak_medium(scenario.background, eps, scenario.interior)
    dtn_cl = _spectral_dtn(medium, scenario, cloaked_source(scenario, eps))
    errs = _spectral_errors(dtn_bg, dtn_cl)
    err = max(errs.values())
    scale = max(float(np.linalg.norm(np.atleast_2d(dtn_bg[n]), 2)) for n in dtn_bg.modes)
    return CloakReport(eps, dtn_bg, dtn_cl, err, err / scale, mode_errors=errs,
                       timings={"solve": time.perf_counter() - t0})


# ---------------------------------------------------------------------- FEM route


def sweep_mesh(scenario: Scenario):
    """Cloak mesh of B_2 with the interface ring, transported by G when present."""
    # the shell coefficients vary on the scale eps/2 next to the interface
    h_int = scenario.h_interface if scenario.h_interface is not None else scenario.h / INTERFACE_REFINEMENT
    mesh = generate_disk_mesh([1.0, 2.0], scenario.h, h_int)
    return mesh if scenario.G is None else mesh.mapped(scenario.G)


def _parameter_angles(scenario: Scenario, dtn):
    """Boundary angles measured in pre-G coordinates, so Fourier traces are comparable."""
    x = dtn.points if scenario.G is None else scenario.G.inverse(dtn.points)
    return np.arctan2(x[:, 1], x[:, 0])


def _fem_errors(scenario: Scenario, dtn_bg, dtn_cl):
    ang = _parameter_angles(scenario, dtn_bg)
    Pb = dtn_bg.projected(scenario.n_max, ang)
    Pc = dtn_cl.projected(scenario.n_max, ang)
    ob = dtn_bg.projected_offset(scenario.n_max, ang)
    oc = dtn_cl.projected_offset(scenario.n_max, ang)
    err = float(np.linalg.norm(Pb - Pc, 2) + np.linalg.norm(ob - oc))
    scale = float(np.linalg.norm(Pb, 2))
    per_mode = {}
    m = scenario.m
    for i, n in enumerate(range(-scenario.n_max, scenario.n_max + 1)):
        blk = slice(i * m, (i + 1) * m)
        per_mode[n] = float(np.linalg.norm(Pb[blk, blk] - Pc[blk, blk], 2))
    return err, err / scale, per_mode


def _fem_one(scenario: Scenario, eps: float, mesh, dtn_bg) -> CloakReport:
    t0 = time.perf_counter()
    medium = near_cloak_medium(scenario.background, eps, scenario.interior, scenario.G)
    dtn_cl = dtn_matrix(mesh, medium, scenario.omega, cloaked_source(scenario, eps))
    err, rel, per_mode = _fem_errors(scenario, dtn_bg, dtn_cl)
    return CloakReport(eps, dtn_bg, dtn_cl, err, rel, mode_errors=per_mode,
                       timings={"solve": time.perf_counter() - t0})


# ---------------------------------------------------------------------- sweeps


def near_cloak_sweep(scenario: Scenario, eps_list: Optional[Sequence[float]] = None, workers: int = 1,
                     preflight: bool = True, seed: int = 0) -> list:
    """Cloaked-versus-background DtN errors along a decreasing ``eps_list``.

    The spectral route applies when the scenario is radial and the solver is
    ``spectral``; errors are then per mode.  Otherwise the FEM route is used
    and errors are in the operator norm on the Fourier traces |n| <= n_max.
    Reports come back in ``eps_list`` order whatever ``workers`` is.
    """
    if scenario.solver == "decoupled":
        raise ValueError("near_cloak_sweep needs the spectral or fem solver")
    spectral = scenario.solver == "spectral"
    if spectral and (scenario.G is not None or not (scenario.background.is_radial and scenario.interior.is_radial)):
        raise ValueError("the spectral route needs a radial scenario; use solver='fem'")
    eps = _check_eps(eps_list if eps_list is not None else (SPECTRAL_EPS if spectral else FEM_EPS))
    checks = {}
    if preflight:
        for e in eps:
            checks[e] = invariance_preflight(e, scenario.G, seed)
    bg, f_bg = background_problem(scenario)
    if spectral:
        # raises ResonanceError when w is a background resonance
        dtn_bg = _spectral_dtn(bg, scenario, f_bg, workers)

        def job(e):
            return _spectral_one(scenario, e, dtn_bg)
    else:
        mesh = sweep_mesh(scenario)
        dtn_bg = dtn_matrix(mesh, bg, scenario.omega, f_bg)

        def job(e):
            return _fem_one(scenario, e, mesh, dtn_bg)

    if workers > 1 and len(eps) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            reports = list(ex.map(job, eps))
    else:
        reports = [job(e) for e in eps]
    for r in reports:
        if r.epsilon in checks:
            r.timings["invariance_residual"] = checks[r.epsilon]
    return reports


def interior_difference(scenario: Scenario, other: Scenario, eps_list: Sequence[float], workers: int = 1) -> list:
    """Per-eps error between two cloaked DtN maps differing only in interior content."""
    a = near_cloak_sweep(scenario, eps_list, workers, preflight=False)
    b = near_cloak_sweep(other, eps_list, workers, preflight=False)
    out = []
    for ra, rb in zip(a, b):
        if scenario.solver == "spectral":
            errs = _spectral_errors(ra.dtn_cloaked, rb.dtn_cloaked)
            out.append(max(errs.values()))
        else:
            out.append(_fem_errors(scenario, ra.dtn_cloaked, rb.dtn_cloaked)[0])
    return out


def general_cloak_experiment(G: Optional[DiffeoMap], scenario: Scenario, eps_list: Optional[Sequence[float]] = None,
                             workers: int = 1, preflight: bool = True) -> list:
    """Cloak the G-image of the unit disk inside G(B_2) with ``K_eps = G o F_eps o G^-1``.

    The background on ``G(B_2)`` is ``G_* background``, so the cloaked medium
    is ``(G o F_eps)_* background = K_eps* (G_* background)``; the FEM route is
    always used (G = None reproduces the radial configuration).
    """
    return near_cloak_sweep(scenario.with_(G=G, solver="fem"), eps_list, workers, preflight)
