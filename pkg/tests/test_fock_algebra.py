"""Tests for the truncated matrix algebra and calibrated ladder actions."""
import json

import numpy as np
import pytest

from ncgdist import fock_algebra as fa

THETA = 2.0
N = 12
IDENT_TOL = 1e-10
EXACT_TOL = 1e-13


def rand_element(rng, n=N, theta=THETA, margin=0, hermitian=False):
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    if margin:
        m[n - margin:, :] = 0
        m[:, n - margin:] = 0
    if hermitian:
        m = 0.5 * (m + m.conj().T)
    return fa.TruncatedElement(m, theta)


# ---------------------------------------------------------------------------
# element construction and validation
# ---------------------------------------------------------------------------

def test_element_validation():
    with pytest.raises(ValueError):
        fa.TruncatedElement(np.zeros((3, 4)), THETA)
    with pytest.raises(ValueError):
        fa.TruncatedElement(np.zeros((1, 1)), THETA)
    with pytest.raises(ValueError):
        fa.TruncatedElement(np.zeros((4, 4)), -1.0)
    bad = np.zeros((4, 4))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        fa.TruncatedElement(bad, THETA)


def test_basis_and_identity():
    e = fa.TruncatedElement.basis(1, 3, 6, THETA)
    assert e.coeffs[1, 3] == 1.0
    assert np.count_nonzero(e.coeffs) == 1
    ident = fa.TruncatedElement.identity(6, THETA)
    assert np.array_equal(ident.coeffs, np.eye(6))
    with pytest.raises(ValueError):
        fa.TruncatedElement.basis(6, 0, 6, THETA)


def test_interior_predicate():
    rng = np.random.default_rng(0)
    a = rand_element(rng, margin=2)
    assert a.is_interior(2)
    assert a.is_interior(1)
    b = rand_element(rng)
    assert not b.is_interior(1)
    assert np.array_equal(b.project_interior(2).coeffs[:N - 2, :N - 2],
                          b.coeffs[:N - 2, :N - 2])
    assert b.project_interior(2).is_interior(2)


def test_hermitian_predicate():
    rng = np.random.default_rng(1)
    assert rand_element(rng, hermitian=True).is_hermitian(1e-12)
    assert not rand_element(rng).is_hermitian(1e-12)


# ---------------------------------------------------------------------------
# star product, involution, trace
# ---------------------------------------------------------------------------

def test_star_is_matrix_product_on_basis():
    # e_{01} * e_{12} = e_{02}, e_{12} * e_{01} = 0, e_{10} * e_{01} = e_{11}
    e01 = fa.TruncatedElement.basis(0, 1, 6, THETA)
    e12 = fa.TruncatedElement.basis(1, 2, 6, THETA)
    e10 = fa.TruncatedElement.basis(1, 0, 6, THETA)
    assert np.array_equal(fa.star(e01, e12).coeffs,
                          fa.TruncatedElement.basis(0, 2, 6, THETA).coeffs)
    assert np.abs(fa.star(e12, e01).coeffs).max() == 0.0
    assert np.array_equal(fa.star(e10, e01).coeffs,
                          fa.TruncatedElement.basis(1, 1, 6, THETA).coeffs)


def test_star_mismatch_raises():
    a = fa.TruncatedElement(np.eye(4), THETA)
    b = fa.TruncatedElement(np.eye(5), THETA)
    c = fa.TruncatedElement(np.eye(4), THETA + 1)
    with pytest.raises(ValueError):
        fa.star(a, b)
    with pytest.raises(ValueError):
        fa.star(a, c)


def test_involution_antihomomorphism():
    rng = np.random.default_rng(2)
    a, b = rand_element(rng), rand_element(rng)
    lhs = fa.involution(fa.star(a, b))
    rhs = fa.star(fa.involution(b), fa.involution(a))
    assert np.abs(lhs.coeffs - rhs.coeffs).max() < EXACT_TOL


def test_trace_integral():
    e00 = fa.TruncatedElement.basis(0, 0, 6, THETA)
    e01 = fa.TruncatedElement.basis(0, 1, 6, THETA)
    assert abs(fa.trace_integral(e00) - 2 * np.pi * THETA) < EXACT_TOL
    assert abs(fa.trace_integral(e01)) < EXACT_TOL
    # trace property of the product
    rng = np.random.default_rng(3)
    a, b = rand_element(rng), rand_element(rng)
    assert abs(fa.trace_integral(fa.star(a, b)) -
               fa.trace_integral(fa.star(b, a))) < 1e-10


def test_l2_norm_orthonormality():
    e12 = fa.TruncatedElement.basis(1, 2, 6, THETA)
    assert abs(fa.l2_inner(e12, e12) - 2 * np.pi * THETA) < EXACT_TOL
    e30 = fa.TruncatedElement.basis(3, 0, 6, THETA)
    assert abs(fa.l2_inner(e12, e30)) < EXACT_TOL
    assert abs(fa.l2_norm(e12) - np.sqrt(2 * np.pi * THETA)) < EXACT_TOL


# ---------------------------------------------------------------------------
# weighted norms
# ---------------------------------------------------------------------------

def test_norm_st_explicit_small_case():
    # single coefficient: ||e_mn||_{s,t}^2 = theta^{s+t} (m+1/2)^s (n+1/2)^t
    e = fa.TruncatedElement.basis(2, 1, 6, THETA)
    spec = fa.NormSpec(s=2.0, t=1.0)
    want = np.sqrt(THETA ** 3 * 2.5 ** 2 * 1.5)
    assert abs(fa.norm_st(e, spec) - want) < 1e-12


def test_norm_st_monotone_in_weights():
    rng = np.random.default_rng(4)
    a = rand_element(rng)
    n0 = fa.norm_st(a, fa.NormSpec(0.0, 0.0))
    n1 = fa.norm_st(a, fa.NormSpec(1.0, 0.0))
    n2 = fa.norm_st(a, fa.NormSpec(2.0, 1.0))
    # weights (theta(m+1/2))^s >= 1 for theta = 2, so norms grow with s, t
    assert n0 <= n1 <= n2
    assert abs(n0 - np.linalg.norm(a.coeffs)) < 1e-12


def test_rho_weight_seminorm():
    a = fa.TruncatedElement.basis(3, 0, 8, THETA)
    want = THETA ** 2 * 3.5 * 0.5
    assert abs(fa.rho_k(a, 2) - want) < 1e-12


# ---------------------------------------------------------------------------
# calibrated ladder actions (laws frozen from the quadrature calibration)
# ---------------------------------------------------------------------------

# each op: (dm, dn) -> (phase, const, slope_m, slope_n) with
# c(m, n) = phase * sqrt((const + slope_m*m + slope_n*n) / theta)
FROZEN_LAWS = {
    "d": {(0, -1): (1, 0, 0, 1), (1, 0): (-1, 1, 1, 0)},
    "dbar": {(-1, 0): (1, 0, 1, 0), (0, 1): (-1, 1, 0, 1)},
    "x1_left": {(-1, 0): (1j, 0, 2, 0), (1, 0): (-1j, 2, 2, 0)},
    "x1_right": {(0, -1): (-1j, 0, 0, 2), (0, 1): (1j, 2, 0, 2)},
    "x2_left": {(-1, 0): (1, 0, 2, 0), (1, 0): (1, 2, 2, 0)},
    "x2_right": {(0, -1): (1, 0, 0, 2), (0, 1): (1, 2, 0, 2)},
}


def test_shipped_table_matches_frozen_laws():
    table = fa.get_ladder_table()
    assert table.fit_residual_max < 1e-5
    assert table.snap_distance_max < 1e-5
    for op, laws in FROZEN_LAWS.items():
        terms = table.ops[op]
        assert len(terms) == len(laws)
        for t in terms:
            phase, const, sm, sn = laws[(t.dm, t.dn)]
            assert t.phase == phase
            assert (t.const, t.slope_m, t.slope_n) == (const, sm, sn)


def test_ladder_coefficient_values():
    table = fa.get_ladder_table()
    term = [t for t in table.ops["d"] if (t.dm, t.dn) == (1, 0)][0]
    c = term.coefficients(4, THETA)
    want = -np.sqrt((1.0 + np.arange(4.0)) / THETA)[:, None] * np.ones((1, 4))
    assert np.allclose(c, want, atol=1e-15)


def test_derivative_on_ground_state():
    # d e_00 = -sqrt(1/theta) e_10 and dbar e_00 = -sqrt(1/theta) e_01
    e00 = fa.TruncatedElement.basis(0, 0, 6, THETA)
    d = fa.derivative(e00, "d")
    want = np.zeros((6, 6))
    want[1, 0] = -np.sqrt(1.0 / THETA)
    assert np.abs(d.coeffs - want).max() < EXACT_TOL
    db = fa.derivative(e00, "dbar")
    assert abs(db.coeffs[0, 1] + np.sqrt(1.0 / THETA)) < EXACT_TOL


def test_leibniz_rule():
    rng = np.random.default_rng(5)
    a = rand_element(rng, margin=2)
    b = rand_element(rng, margin=2)
    for which in ("d", "dbar", "d1", "d2"):
        lhs = fa.derivative(fa.star(a, b), which)
        rhs = fa.star(fa.derivative(a, which), b) + fa.star(a, fa.derivative(b, which))
        scale = max(np.abs(lhs.coeffs).max(), 1.0)
        assert np.abs(lhs.coeffs - rhs.coeffs).max() / scale < IDENT_TOL


def test_inner_derivation_identity():
    # d_mu a = -(i/2) (xt_mu * a - a * xt_mu) on interior elements
    rng = np.random.default_rng(6)
    a = rand_element(rng, margin=2)
    for mu in (1, 2):
        comm = fa.xtilde_apply(a, mu, "star-left").coeffs \
            - fa.xtilde_apply(a, mu, "star-right").coeffs
        lhs = fa.derivative(a, f"d{mu}").coeffs
        scale = max(np.abs(lhs).max(), 1.0)
        assert np.abs(lhs + 0.5j * comm).max() / scale < IDENT_TOL


def test_gauge_connection_identity():
    # d_mu a + (i/2) xt_mu * a = (i/2) a * xt_mu on interior elements
    rng = np.random.default_rng(7)
    a = rand_element(rng, margin=2)
    for mu in (1, 2):
        lhs = fa.derivative(a, f"d{mu}").coeffs \
            + 0.5j * fa.xtilde_apply(a, mu, "star-left").coeffs
        rhs = 0.5j * fa.xtilde_apply(a, mu, "star-right").coeffs
        scale = max(np.abs(rhs).max(), 1.0)
        assert np.abs(lhs - rhs).max() / scale < IDENT_TOL


def test_derivative_conjugation():
    # conj(d a) = dbar conj(a) by the coefficient symmetry of the tables
    rng = np.random.default_rng(8)
    a = rand_element(rng, margin=1)
    lhs = fa.involution(fa.derivative(a, "d"))
    rhs = fa.derivative(fa.involution(a), "dbar")
    assert np.abs(lhs.coeffs - rhs.coeffs).max() < IDENT_TOL


def test_xtilde_pointwise_is_mean_of_sides():
    rng = np.random.default_rng(9)
    a = rand_element(rng)
    for mu in (1, 2):
        mean = 0.5 * (fa.xtilde_apply(a, mu, "star-left").coeffs
                      + fa.xtilde_apply(a, mu, "star-right").coeffs)
        assert np.abs(fa.xtilde_apply(a, mu, "pointwise").coeffs - mean).max() < EXACT_TOL


def test_theta_scaling_of_ladder_action():
    # the same table evaluated at 4 theta scales all coefficients by 1/2
    e = fa.TruncatedElement.basis(2, 3, 8, THETA)
    e4 = fa.TruncatedElement.basis(2, 3, 8, 4 * THETA)
    d1 = fa.derivative(e, "d").coeffs
    d4 = fa.derivative(e4, "d").coeffs
    assert np.abs(2.0 * d4 - d1).max() < EXACT_TOL


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_element_json_roundtrip(tmp_path):
    rng = np.random.default_rng(10)
    a = rand_element(rng)
    path = tmp_path / "elem.json"
    fa.save_element(a, path)
    b = fa.load_element(path)
    assert b.theta == a.theta
    assert b.trunc == a.trunc
    assert np.abs(a.coeffs - b.coeffs).max() == 0.0


def test_element_json_rejects_bad_schema(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"theta": 1.0, "trunc": 2, "re": [[0, 0]]}))
    with pytest.raises((ValueError, KeyError)):
        fa.load_element(path)


def test_ladder_table_roundtrip(tmp_path):
    table = fa.get_ladder_table()
    doc = table.to_json_dict()
    back = fa.LadderTable.from_json_dict(doc)
    assert back.theta_ref == table.theta_ref
    for op in fa.LADDER_OPS:
        assert len(back.ops[op]) == len(table.ops[op])
        for t1, t2 in zip(back.ops[op], table.ops[op]):
            assert (t1.dm, t1.dn, t1.phase, t1.const, t1.slope_m, t1.slope_n) == \
                   (t2.dm, t2.dn, t2.phase, t2.const, t2.slope_m, t2.slope_n)


def test_install_ladder_table_roundtrip():
    orig = fa.get_ladder_table()
    try:
        fa.install_ladder_table(orig)
        assert fa.get_ladder_table() is orig
    finally:
        fa.install_ladder_table(orig)
