import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tocloak.coeffs import (
    BlockCoefficient,
    Disk,
    block_to_matrix,
    constant_field,
    ellipticity_scan,
    eval_quadratic_form,
    hermitian_block_check,
    identity_field,
    isotropic_field,
    matrix_to_block,
)
from tocloak.errors import DomainMismatchError, SingularPointError
from tocloak.verify.energy import random_smooth_medium
from tocloak.xform import (
    affine_map,
    blowup_map,
    closed_form_radial_cloak,
    composed_map,
    conjugated_map,
    ellipse_map,
    identity_map,
    near_cloak_medium,
    near_cloak_profile,
    pushforward_coefficients,
    pushforward_source,
    radial_profile_of,
    regularized_blowup,
    scaling_map,
)

radii = st.floats(0.05, 1.95)
angles = st.floats(0, 2 * np.pi)
epsilons = st.floats(1e-4, 0.5)


def _pt(r, t):
    return np.array([[r * np.cos(t), r * np.sin(t)]])


def _fd_jacobian(F, x, h=1e-6):
    cols = []
    for k in range(2):
        e = np.zeros((1, 2))
        e[0, k] = h
        cols.append((F.forward(x + e) - F.forward(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------- coeffs


def test_block_matrix_round_trip():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(2, 2, 3, 3)) + 1j * rng.normal(size=(2, 2, 3, 3))
    M = block_to_matrix(A)
    assert M.shape == (6, 6)
    assert np.array_equal(M[:3, 3:], A[0, 1])
    assert np.array_equal(matrix_to_block(M), A)


def test_quadratic_form_matches_matrix_form():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(2, 2, 2, 2)) + 1j * rng.normal(size=(2, 2, 2, 2))
    c = BlockCoefficient(A, np.eye(2))
    xi = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    v = xi.reshape(-1)
    assert eval_quadratic_form(c, xi) == pytest.approx(np.vdot(block_to_matrix(A) @ v, v))


def test_block_shape_errors():
    with pytest.raises(ValueError):
        BlockCoefficient(np.zeros((2, 2, 2, 2)), np.eye(3))
    with pytest.raises(ValueError):
        BlockCoefficient(np.zeros((2, 2, 1, 1)), np.ones(2))


def test_ellipticity_scan_flags_indefinite_medium():
    good = ellipticity_scan(isotropic_field(2.0, 3.0), [[0.1, 0.2], [0.5, -0.3]])
    assert not good.violated
    assert good.c1_est == pytest.approx(2.0)
    assert good.c2_est == pytest.approx(3.0)
    bad = constant_field(np.diag([1.0, -1.0]).reshape(2, 2, 1, 1), np.eye(1))
    assert ellipticity_scan(bad, [[0.1, 0.1]]).violated


def test_conjugation_checks_domains():
    G = affine_map(np.eye(2), domain=Disk(1.0))
    with pytest.raises(DomainMismatchError):
        conjugated_map(G, regularized_blowup(0.1))


@given(st.floats(0.1, 0.99), angles)
def test_conjugation_identity_and_boundary(r, t):
    inner = regularized_blowup(0.05)
    x = _pt(2 * r, t)
    assert np.allclose(conjugated_map(identity_map(), inner).forward(x), inner.forward(x), atol=1e-12)
    K = conjugated_map(ellipse_map(2.0, 1.0), inner)
    edge = np.array([[4 * np.cos(t), 2 * np.sin(t)]])
    assert np.allclose(K.forward(edge), edge, atol=1e-12)
    K = conjugated_map(scaling_map(2.0), inner)
    assert np.linalg.norm(K.forward(2 * x)) <= 4 + 1e-12


# ---------------------------------------------------------------------- maps


@given(radii, angles, epsilons)
def test_regularized_blowup_round_trip(r, t, eps):
    F = regularized_blowup(eps)
    x = _pt(r, t)
    assert np.allclose(F.inverse(F.forward(x)), x, atol=1e-12)


@given(st.floats(0.05, 1.9), angles, epsilons)
def test_regularized_blowup_jacobian_matches_differences(r, t, eps):
    F = regularized_blowup(eps)
    x = _pt(r, t)
    if abs(r - eps) < 1e-4:
        return  # kink of the piecewise map
    assert np.allclose(F.jacobian(x), _fd_jacobian(F, x), rtol=1e-6, atol=1e-6)


@given(st.floats(0.1, 2.0), angles, st.floats(1e-4, 0.1))
def test_regularized_blowup_close_to_ideal(r, t, eps):
    x = _pt(min(r, 2.0), t)
    d = np.linalg.norm(regularized_blowup(eps).forward(x) - blowup_map().forward(x))
    assert d <= eps + 1e-14


def test_blowup_fixes_outer_circle_and_rejects_origin():
    F = blowup_map()
    x = _pt(2.0, 0.7)
    assert np.allclose(F.forward(x), x)
    assert np.allclose(np.linalg.norm(F.forward(_pt(1e-3, 1.0))), 1.0005)
    with pytest.raises(SingularPointError):
        F.forward(np.zeros((1, 2)))


@given(st.floats(0.1, 0.9), angles)
def test_ellipse_and_composition_round_trip(r, t):
    G = ellipse_map(2.0, 1.0)
    K = composed_map(G, regularized_blowup(1e-2))
    x = _pt(r, t)
    assert np.allclose(G.inverse(G.forward(x)), x, atol=1e-12)
    assert np.allclose(K.inverse(K.forward(x)), x, atol=1e-12)
    assert np.allclose(K.jacobian(x), _fd_jacobian(K, x), rtol=1e-6, atol=1e-6)


# ---------------------------------------------------------------------- push-forward


def test_affine_pushforward_of_identity():
    M = np.array([[2.0, 0.5], [0.0, 1.0]])
    F = affine_map(M, (0.1, -0.2))
    A, B = pushforward_coefficients(F, identity_field()).evaluate([[0.3, 0.1]])
    J = np.linalg.det(M)
    assert np.allclose(A[0, :, :, 0, 0], M @ M.T / J)
    assert np.allclose(B[0], 1 / J)


@given(st.integers(0, 10_000), st.sampled_from([1, 2]), st.floats(0.2, 1.8), angles)
def test_pushforward_preserves_hermitian_symmetry(seed, m, r, t):
    fld = random_smooth_medium(np.random.default_rng(seed), m)
    A, B = pushforward_coefficients(regularized_blowup(0.05), fld).evaluate(_pt(r, t))
    assert hermitian_block_check(BlockCoefficient(A[0], B[0]), tol=1e-10)
    assert np.allclose(B[0], B[0].conj().T)


def test_closed_form_cloak_degenerates_at_interface():
    cloak = closed_form_radial_cloak(identity_field())
    A, B = cloak.evaluate(np.array([[1 + 1e-6, 0.0]]))
    # radial entry -> 0, tangential entry -> infinity
    assert abs(A[0, 0, 0, 0, 0]) < 1e-5
    assert abs(A[0, 1, 1, 0, 0]) > 1e5
    with pytest.raises(SingularPointError):
        cloak.evaluate(np.array([[1.0, 0.0]]))


def test_pushforward_source_conserves_total_load():
    from scipy.integrate import dblquad

    F = ellipse_map(2.0, 1.0)
    f = lambda p: np.exp(-np.sum(p**2, axis=1) / 0.1)[:, None]
    g = pushforward_source(F, f)
    ref = dblquad(lambda y, x: f(np.array([[x, y]]))[0, 0], -1, 1, -1, 1)[0]
    img = dblquad(lambda y, x: g(np.array([[x, y]]))[0, 0].real, -2, 2, -1, 1)[0]
    assert img == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("eps", [0.1, 1e-2, 1e-3])
def test_near_cloak_profile_matches_sampled_field(eps):
    prof = near_cloak_profile(eps, filling_a=5.0, filling_b=2.0)
    sampled = radial_profile_of(near_cloak_medium(identity_field(), eps, isotropic_field(5.0, 2.0)))
    r = np.array([0.3, 0.9, 1.0 + 1e-3, 1.2, 1.7, 1.99])
    for a, b in zip(prof.evaluate(r), sampled.evaluate(r)):
        assert np.allclose(a, b, rtol=1e-10)
