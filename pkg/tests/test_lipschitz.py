"""Tests for operator norms and the Dirac-family seminorms."""
import numpy as np
import pytest

from ncgdist import fock_algebra as fa
from ncgdist import lipschitz as lp

THETA = 2.0
N = 14


def rand_element(rng, n=N, theta=THETA, margin=3, hermitian=True):
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    if margin:
        m[n - margin:, :] = 0
        m[:, n - margin:] = 0
    if hermitian:
        m = 0.5 * (m + m.conj().T)
    return fa.TruncatedElement(m, theta)


# ---------------------------------------------------------------------------
# operator norm
# ---------------------------------------------------------------------------

def test_operator_norm_basics():
    assert lp.operator_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0)
    e01 = np.zeros((4, 4))
    e01[0, 1] = 1.0
    assert lp.operator_norm(e01) == pytest.approx(1.0)


def test_operator_norm_band_matrix():
    # one off-diagonal: singular values are the absolute entries
    rng = np.random.default_rng(0)
    band = np.diag(rng.normal(size=7) + 1j * rng.normal(size=7), 1)
    want = np.linalg.svd(band, compute_uv=False)[0]
    assert lp.operator_norm(band) == pytest.approx(want, rel=1e-12)
    assert lp.operator_norm(band) == pytest.approx(np.abs(band).max(), rel=1e-12)


def test_operator_norm_nonfinite_rejected():
    bad = np.eye(3)
    bad[1, 1] = np.inf
    with pytest.raises(ValueError):
        lp.operator_norm(bad)


def test_left_multiplication_norm_is_sigma_max():
    # brute force on the vectorized 6x6 space: the N^2 x N^2 matrix of
    # b |-> m b has exactly the spectral norm of m
    rng = np.random.default_rng(3)
    m = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    big = np.kron(m, np.eye(6))
    want = np.linalg.svd(big, compute_uv=False)[0]
    assert lp.operator_norm(m) == pytest.approx(want, rel=1e-12)


# ---------------------------------------------------------------------------
# seminorms
# ---------------------------------------------------------------------------

def test_seminorm_methods_agree():
    rng = np.random.default_rng(5)
    a = rand_element(rng)
    for kind, params in [("D0", {}), ("D1", {"omega": 0.25}),
                         ("D1", {"omega": 1.0}), ("D2", {"omega": 0.5}),
                         ("D_Omega", {"omega": 0.5}),
                         ("D_xi", {"xi": -0.5}), ("D_xi", {"xi": 2.0}),
                         ("D_xi", {"xi": 3.0}), ("D_xi_twisted", {"xi": 0.5}),
                         ("D_xi_twisted", {"xi": 3.0})]:
        rep = lp.lipschitz_seminorm(kind, params, a, "direct")
        assert rep.residual_vs_other_method < 1e-8, (kind, params)
        assert rep.value > 0


def test_seminorm_ratios():
    rng = np.random.default_rng(6)
    a = rand_element(rng)
    base = lp.lipschitz_seminorm("D0", {}, a, "direct").value
    cases = [("D1", {"omega": 1.0}, np.sqrt(2.0)),
             ("D_xi", {"xi": 3.0}, 2.0),
             ("D_xi_twisted", {"xi": 3.0}, 4.0)]
    for kind, params, ratio in cases:
        got = lp.lipschitz_seminorm(kind, params, a, "direct").value
        assert got / base == pytest.approx(ratio, rel=1e-10), kind


def test_seminorm_vanishes_at_unit_xi():
    rng = np.random.default_rng(7)
    a = rand_element(rng)
    rep = lp.lipschitz_seminorm("D_xi", {"xi": 1.0}, a, "direct")
    assert rep.value < 1e-12 * lp.d0_seminorm(a)
    assert rep.residual_vs_other_method < 1e-12


def test_seminorm_properties():
    rng = np.random.default_rng(8)
    a = rand_element(rng)
    b = rand_element(rng)
    la = lp.d0_seminorm(a)
    lb = lp.d0_seminorm(b)
    # homogeneity, triangle inequality, involution invariance
    assert lp.d0_seminorm(a.with_coeffs(-2.5 * a.coeffs)) == pytest.approx(2.5 * la, rel=1e-10)
    assert lp.d0_seminorm(a + b) <= la + lb + 1e-10 * (la + lb)
    assert lp.d0_seminorm(fa.involution(a)) == pytest.approx(la, rel=1e-10)


def test_ground_state_seminorm_positive():
    a = fa.TruncatedElement.basis(0, 0, 8, THETA)
    assert lp.d0_seminorm(a) > 0.1


def test_unknown_kind_rejected():
    rng = np.random.default_rng(9)
    a = rand_element(rng)
    with pytest.raises(ValueError):
        lp.seminorm_ratio("D9", {})
    with pytest.raises(ValueError):
        lp.lipschitz_seminorm("D0", {}, a, "power-iteration")


def test_report_json():
    rng = np.random.default_rng(10)
    a = rand_element(rng)
    rep = lp.lipschitz_seminorm("D1", {"omega": 0.5}, a, "closed-form")
    blob = rep.json_dict()
    assert blob["schema"] == 1
    assert blob["kind"] == "D1"
    assert blob["method"] == "closed-form"
    assert blob["params"] == {"omega": 0.5}
    assert blob["value"] == rep.value


# ---------------------------------------------------------------------------
# squared-commutator diagonalization
# ---------------------------------------------------------------------------

def test_unitary_diag_residual():
    rng = np.random.default_rng(11)
    a = rand_element(rng, hermitian=False)
    for omega in (0.25, 0.5, 1.0):
        assert lp.unitary_diag_check(omega, a) < 1e-9


def test_diag_unitary_small_omega_limit():
    u = lp._diag_unitary(1e-8)
    assert np.abs(u - np.eye(4)).max() < 1e-7
    u = lp._diag_unitary(0.5)
    assert np.abs(u @ u.conj().T - np.eye(4)).max() < 1e-12


def test_zero_element_diag_check():
    a = fa.TruncatedElement(np.zeros((N, N)), THETA)
    assert lp.unitary_diag_check(0.5, a) == 0.0
