import numpy as np
import pytest
from scipy.integrate import trapezoid
from hypothesis import given
from hypothesis import strategies as st

from tocloak.coeffs import Annulus, Disk, identity_field, isotropic_field
from tocloak.errors import CloakError
from tocloak.verify import (
    CutoffField,
    InterfaceFlattened,
    PlaneWaveField,
    PulledForward,
    Scenario,
    cutoff_constant,
    cutoff_decay_experiment,
    decoupled_cloak_solve,
    energy_functional,
    energy_refinement,
    general_cloak_experiment,
    interface_measure_check,
    near_cloak_sweep,
)
from tocloak.verify.energy import angular_derivative, cutoff, cutoff_derivative, random_smooth_medium, sesquilinear
from tocloak.verify.sweep import invariance_preflight
from tocloak.xform import blowup_map, closed_form_radial_cloak, ellipse_map

# 2 pi int_1^2 rho'(1/u)^2 u^-4 du, frozen from a 400k-point trapezoid rule on
# centred differences of the smooth step (independent of the analytic derivative)
C_RHO = 20.011746328201877


def _constant(c=1.0 + 0.5j):
    return PlaneWaveField(np.zeros((1, 2)), [0.0], constant=c)


def test_constant_field_energy():
    res = energy_functional(_constant(), isotropic_field(3.0, 2.0), Disk(2.0))
    assert res.energy_sq == pytest.approx(1.25 * 2.0 * 4 * np.pi, rel=1e-10)


def test_plane_wave_energy():
    k = np.array([[1.2, -0.7]])
    phi = PlaneWaveField(k, [0.8 - 0.3j])
    res = energy_functional(phi, isotropic_field(3.0, 2.0), Annulus(0.5, 2.0))
    expect = (3.0 * np.sum(k**2) + 2.0) * abs(0.8 - 0.3j) ** 2 * np.pi * (4 - 0.25)
    assert res.energy_sq == pytest.approx(expect, rel=1e-9)


def test_cutoff_derivative_and_constant():
    t = np.linspace(0.45, 1.05, 61)
    h = 1e-6
    assert np.allclose(cutoff_derivative(t), (cutoff(t + h) - cutoff(t - h)) / (2 * h), atol=1e-6)
    assert cutoff(np.array([0.5]))[0] == 1.0 and cutoff(np.array([1.0]))[0] == 0.0
    u = np.linspace(1.0, 2.0, 400_001)
    s = 1 / u
    d = (cutoff(s + 1e-6) - cutoff(s - 1e-6)) / 2e-6
    assert 2 * np.pi * trapezoid(d**2 / u**4, u) == pytest.approx(C_RHO, rel=1e-6)
    assert cutoff_constant() == pytest.approx(C_RHO, rel=1e-10)


def test_cutoff_field_limits():
    phi = CutoffField(1e-3)
    p = np.array([[0.5, 0.0], [1.0 + 1e-7, 0.0], [1.9, 0.0]])
    v = phi.value(p)[:, 0]
    assert v[0] == 1.0 and v[1] == 1.0 and v[2] == 0.0


def test_cutoff_experiment_validates_eps():
    cloak = closed_form_radial_cloak(identity_field())
    with pytest.raises(ValueError):
        cutoff_decay_experiment([1e-4, 1e-2], cloak)
    with pytest.raises(ValueError):
        cutoff_decay_experiment([1.5], cloak)


def test_flattened_field_has_no_angular_derivative():
    rng = np.random.default_rng(3)
    phi = InterfaceFlattened(PlaneWaveField.random(rng))
    assert angular_derivative(phi) <= 1e-12
    assert angular_derivative(PlaneWaveField.random(rng)) > 1e-2


def test_dichotomy_verdicts():
    rng = np.random.default_rng(4)
    cloak = closed_form_radial_cloak(identity_field())
    psi = PlaneWaveField.random(rng)
    assert energy_refinement(psi, cloak).verdict == "divergent"
    assert energy_refinement(InterfaceFlattened(psi), cloak).verdict == "stable"


def test_shell_integrals_vanish_for_constants():
    cloak = closed_form_radial_cloak(identity_field())
    vals = interface_measure_check(PulledForward(_constant(), blowup_map()), cloak, [1e-1, 1e-2])
    assert vals == [0.0, 0.0]


@given(st.integers(0, 10_000), st.sampled_from([1, 2]))
def test_sesquilinear_density_is_hermitian(seed, m):
    rng = np.random.default_rng(seed)
    fld = random_smooth_medium(rng, m)
    u, v = PlaneWaveField.random(rng, m=m), PlaneWaveField.random(rng, m=m)
    p = rng.uniform(-1, 1, size=(5, 2))
    assert np.allclose(sesquilinear(u, v, fld, p, 1.3), np.conj(sesquilinear(v, u, fld, p, 1.3)), rtol=1e-12)


# ---------------------------------------------------------------------- sweeps


def test_sweep_rejects_bad_eps_lists():
    with pytest.raises(ValueError):
        near_cloak_sweep(Scenario(), [1e-2, 1e-1])
    with pytest.raises(ValueError):
        near_cloak_sweep(Scenario(), [1.0])
    with pytest.raises(ValueError):
        near_cloak_sweep(Scenario(G=ellipse_map(2.0, 1.0)), [1e-1])


def test_preflight_passes_for_library_maps():
    assert invariance_preflight(1e-2) <= 1e-6
    assert invariance_preflight(1e-2, ellipse_map(2.0, 1.0)) <= 1e-6


def test_preflight_failure_raises(monkeypatch):
    import tocloak.verify.sweep as sweep

    monkeypatch.setattr(sweep, "INVARIANCE_TOL", 0.0)
    monkeypatch.setattr(sweep, "form_invariance_check",
                        lambda *a, **k: type("R", (), {"difference": 1.0, "reference": 1.0})())
    with pytest.raises(CloakError):
        sweep.invariance_preflight(1e-2)


def test_sweep_report_order_independent_of_workers():
    sc = Scenario(n_max=4)
    a = near_cloak_sweep(sc, [1e-1, 1e-2, 1e-3], preflight=False)
    b = near_cloak_sweep(sc, [1e-1, 1e-2, 1e-3], workers=3, preflight=False)
    assert [r.epsilon for r in b] == [1e-1, 1e-2, 1e-3]
    assert all(abs(x.error - y.error) <= 1e-12 * x.error for x, y in zip(a, b))


def test_general_cloak_without_G_is_the_radial_fem_sweep():
    sc = Scenario(solver="fem", h=0.1, n_max=4)
    a = general_cloak_experiment(None, sc, [1e-1], preflight=False)
    b = near_cloak_sweep(sc, [1e-1], preflight=False)
    assert a[0].error == pytest.approx(b[0].error, rel=1e-12)


def test_spectral_and_fem_sweeps_agree():
    eps = [1e-1]
    spec = near_cloak_sweep(Scenario(n_max=4), eps, preflight=False)[0]
    fem = near_cloak_sweep(Scenario(solver="fem", h=0.05, n_max=4), eps, preflight=False)[0]
    # both are dominated by the worst mode; the rest differ by discretisation error
    assert fem.error == pytest.approx(spec.error, rel=0.05)
    for n in range(-4, 5):
        assert fem.mode_errors[n] == pytest.approx(spec.mode_errors[n], abs=0.02 * spec.error)


# ---------------------------------------------------------------------- decoupled solve


def _ideal(**kw):
    return Scenario(epsilon=0.0, solver="decoupled", h=0.1, **kw)


def test_decoupled_zero_data_gives_zero_solution():
    sol, rep = decoupled_cloak_solve(_ideal(), compute_dtn=False)
    assert np.all(sol.exterior.values == 0)
    assert np.all(sol.interior.values == 0)
    assert np.all(rep.jump_value == 0)


def test_decoupled_first_mode_data_has_no_jump():
    h = lambda p: np.exp(1j * np.arctan2(p[:, 1], p[:, 0]))[:, None]
    sol, rep = decoupled_cloak_solve(_ideal(), h, compute_dtn=False)
    # the reference solution is odd in theta, so it vanishes at the blow-up point
    assert abs(rep.jump_value[0]) <= 1e-12
    assert rep.hidden_bc["trace_constant_deviation"] <= 1e-10


def test_decoupled_solution_is_piecewise():
    h = lambda p: np.ones((len(p), 1))
    sol, _ = decoupled_cloak_solve(_ideal(interior_source=lambda p: np.ones((len(p), 1))), h, compute_dtn=False)
    pts = np.array([[0.2, 0.1], [1.5, -0.3]])
    vals = sol(pts)
    assert vals[0] == pytest.approx(sol.interior(pts[:1])[0])
    assert vals[1] == pytest.approx(sol.exterior(pts[1:])[0])


def test_decoupled_requires_ideal_cloak():
    with pytest.raises(ValueError):
        decoupled_cloak_solve(Scenario(epsilon=0.1, solver="decoupled"))
