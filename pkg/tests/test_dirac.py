"""Tests for the spinor Dirac-family operators, squares, and spectra."""
import numpy as np
import pytest

from ncgdist import dirac as dr
from ncgdist import fock_algebra as fa

THETA = 2.0
N = 12
EXACT_TOL = 1e-12

KIND_CASES = [
    ("D0", {}),
    ("D1", {"omega": 0.5}),
    ("D1", {"omega": 1.0}),
    ("D2", {"omega": 0.3}),
    ("D_Omega", {"omega": 0.7}),
    ("D_xi", {"xi": 2.0}),
    ("D_xi", {"xi": -0.5}),
    ("D_xi_twisted", {"xi": 3.0}),
]


def rand_element(rng, n=N, theta=THETA, margin=3, hermitian=False):
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    if margin:
        m[n - margin:, :] = 0
        m[:, n - margin:] = 0
    if hermitian:
        m = 0.5 * (m + m.conj().T)
    return fa.TruncatedElement(m, theta)


# ---------------------------------------------------------------------------
# construction and validation
# ---------------------------------------------------------------------------

def test_build_spin_dimensions():
    assert dr.build("D0", {}, N, THETA).s == 2
    assert dr.build("D_xi", {"xi": 0.5}, N, THETA).s == 2
    assert dr.build("D1", {"omega": 0.5}, N, THETA).s == 4
    assert dr.build("D2", {"omega": 0.5}, N, THETA).s == 4
    assert dr.build("D_xi_twisted", {"xi": 0.5}, N, THETA).s == 4


def test_omega_domain():
    for bad in (0.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            dr.build("D1", {"omega": bad}, N, THETA)
    dr.build("D1", {"omega": 1.0}, N, THETA)


def test_operator_is_hermitian():
    for kind, params in KIND_CASES:
        mat = dr.build(kind, params, 8, THETA).materialize().toarray()
        assert np.abs(mat - mat.conj().T).max() < EXACT_TOL, kind


def test_custom_gamma_validation():
    g = [np.kron(dr.SIGMA[mu], np.eye(2)) for mu in (0, 1)]
    g += [np.kron(dr.SIGMA3, dr.SIGMA[mu]) for mu in (0, 1)]
    op = dr.build("D_Omega", {"omega": 0.5, "gammas": g}, 8, THETA)
    assert op.s == 4
    bad = [m.copy() for m in g]
    bad[2] = bad[0]  # breaks the anticommutation of the doubled pair
    with pytest.raises(ValueError):
        dr.build("D_Omega", {"omega": 0.5, "gammas": bad}, 8, THETA)


# ---------------------------------------------------------------------------
# commutators: direct composition vs derivative closed form
# ---------------------------------------------------------------------------

def test_commutator_direct_equals_closed_form():
    rng = np.random.default_rng(7)
    for kind, params in KIND_CASES:
        d_op = dr.build(kind, params, N, THETA)
        a = rand_element(rng)
        direct = dr.commutator(d_op, a, "direct")
        closed = dr.commutator(d_op, a, "closed-form")
        psi = rng.normal(size=(d_op.s, N, N)) + 1j * rng.normal(size=(d_op.s, N, N))
        dv, cv = direct.apply(psi), closed.apply(psi)
        scale = max(np.abs(dv).max(), 1.0)
        assert np.abs(dv - cv).max() / scale < EXACT_TOL, (kind, params)


def test_commutator_is_pure_left():
    rng = np.random.default_rng(3)
    d_op = dr.build("D1", {"omega": 0.5}, N, THETA)
    a = rand_element(rng)
    mat = dr.commutator(d_op, a, "direct").pure_left_matrix()
    assert mat is not None
    # cross-check the flattened action against blockwise apply
    psi = rng.normal(size=(4, N, N)) + 1j * rng.normal(size=(4, N, N))
    via_blocks = dr.commutator(d_op, a, "direct").apply(psi)
    via_mat = (mat @ psi.reshape(4 * N, N)).reshape(4, N, N)
    assert np.abs(via_blocks - via_mat).max() < EXACT_TOL


def test_dirac_itself_is_not_pure_left():
    d_op = dr.build("D_xi", {"xi": 2.0}, N, THETA)
    assert d_op.simplified().pure_left_matrix() is None


def test_degenerate_commutator_vanishes():
    rng = np.random.default_rng(11)
    d_op = dr.build("D_xi", {"xi": 1.0}, N, THETA)
    assert d_op.degenerate
    assert d_op.meta["tag"] == "degenerate metric"
    a = rand_element(rng, margin=4)
    comm = dr.commutator(d_op, a, "direct")
    psi = dr._random_interior_spinor(d_op.s, N, 4, rng)
    scale = max(np.abs(a.coeffs).max(), 1.0)
    assert np.abs(comm.apply(psi)).max() / scale < 1e-13
    # the twisted operator at xi = 1 is also flagged, but its top
    # chirality block still acts with factor 1 + xi = 2
    tw = dr.build("D_xi_twisted", {"xi": 1.0}, N, THETA)
    assert tw.degenerate
    comm_tw = dr.commutator(tw, a, "direct")
    psi4 = dr._random_interior_spinor(4, N, 4, rng)
    assert np.abs(comm_tw.apply(psi4)).max() > 1.0


def test_twisted_is_block_diagonal_pair():
    n = 8
    tw = dr.build("D_xi_twisted", {"xi": 0.5}, n, THETA).materialize().toarray()
    neg = dr.build("D_xi", {"xi": -0.5}, n, THETA).materialize().toarray()
    pos = dr.build("D_xi", {"xi": 0.5}, n, THETA).materialize().toarray()
    half = 2 * n * n
    assert np.abs(tw[:half, :half] - neg).max() == 0.0
    assert np.abs(tw[half:, half:] - pos).max() == 0.0
    assert np.abs(tw[:half, half:]).max() == 0.0
    assert np.abs(tw[half:, :half]).max() == 0.0


# ---------------------------------------------------------------------------
# square identities
# ---------------------------------------------------------------------------

def test_square_identities():
    for kind, params in KIND_CASES:
        rep = dr.square_identity_check(kind, params, N, THETA, margin=2)
        assert rep["square_residual"] < EXACT_TOL, (kind, params)


def test_momentum_split():
    rep = dr.square_identity_check("D_xi", {"xi": 2.0}, N, THETA, margin=2)
    assert rep["momentum_split_residual"] < EXACT_TOL


# ---------------------------------------------------------------------------
# Clifford metrics
# ---------------------------------------------------------------------------

def test_metric_determinant_values():
    cases = [
        ("D0", {}, 1.0),
        ("D1", {"omega": 1.0}, 2.0 ** -0.5),
        ("D1", {"omega": 0.5}, 1.25 ** -0.5),
        ("D_Omega", {"omega": 0.3}, 1.09 ** -0.5),
        ("D_xi", {"xi": 2.0}, 1.0),
        ("D_xi", {"xi": 0.5}, 2.0),
        ("D_xi", {"xi": -0.5}, 2.0 / 3.0),
        ("D_xi_twisted", {"xi": 3.0}, 0.25),
    ]
    for kind, params, want in cases:
        cs = dr.clifford_metric(kind, params)
        assert abs(cs.det_g_quarter - want) < 1e-12, (kind, params)


def test_metric_singular_at_unit_xi():
    for kind in ("D_xi", "D_xi_twisted"):
        with pytest.raises(dr.SingularMetricError):
            dr.clifford_metric(kind, {"xi": 1.0})


def test_metric_inverse_from_anticommutators():
    for kind, params in KIND_CASES:
        cs = dr.clifford_metric(kind, params)
        g = cs.gammas
        for mu in range(2):
            for nu in range(2):
                anti = g[mu] @ g[nu] + g[nu] @ g[mu]
                want = 2.0 * cs.metric_inverse[mu, nu] * np.eye(g[mu].shape[0])
                assert np.abs(anti - want).max() < 1e-10, (kind, mu, nu)


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

def test_harmonic_spectrum_multiplicities():
    res = dr.spectrum("harmonic", {"omega": 0.5}, 24, THETA)
    mults = [c[2] for c in res.clusters[:6]]
    assert mults == [1, 2, 3, 4, 5, 6]
    # equal spacing at the low end
    means = [c[1] for c in res.clusters[:6]]
    gaps = np.diff(means)
    assert np.abs(gaps - gaps[0]).max() < 1e-6 * gaps[0]
    # the measured prefactor is reported, not asserted
    assert "prefactor_ratio" in res.meta


def test_landau_lowest_cluster_grows():
    mults = []
    for n in (16, 32):
        res = dr.spectrum("landau", {"xi": 2.0}, n, THETA)
        mults.append(res.clusters[0][2])
    assert mults[1] > mults[0]


def test_landau_spacing_prefactor():
    res = dr.spectrum("landau", {"xi": 2.0}, 32, THETA)
    assert abs(res.meta["prefactor_ratio"] - 1.0) < 0.05


def test_spectrum_determinism():
    a = dr.spectrum("landau", {"xi": 0.5}, 16, THETA)
    b = dr.spectrum("landau", {"xi": 0.5}, 16, THETA)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)


def test_cluster_rule_scale_free():
    evals = np.concatenate([np.full(3, 1.0), np.full(5, 2.0)]) + 1e-12 * np.arange(8)
    for scale in (1.0, 1e-6, 1e6):
        clusters = dr.cluster_eigenvalues(scale * evals)
        assert [c[2] for c in clusters] == [3, 5]


# ---------------------------------------------------------------------------
# connections and gauge action
# ---------------------------------------------------------------------------

def test_gauge_invariant_connection_identity():
    rng = np.random.default_rng(5)
    a = rand_element(rng, margin=4)
    for mu in (1, 2):
        lhs = dr.gauge_invariant_connection(a, mu)
        xt = fa.xtilde_apply(a, mu, "star-right")
        rhs = 0.5j * xt.coeffs
        # identity d_mu a + (i/2) xt * a = (i/2) a * xt holds on the interior
        inner = np.s_[: N - 4, : N - 4]
        assert np.abs(lhs.coeffs[inner] - rhs[inner]).max() < 1e-10


def test_gauge_transform_requires_unitary():
    rng = np.random.default_rng(9)
    a = rand_element(rng, margin=4)
    g = fa.TruncatedElement.identity(N, THETA)
    out = dr.connection_ops(a, 1, gauge=g)
    # transform by the identity leaves the potential unchanged
    assert np.abs(out.coeffs - a.coeffs).max() < 1e-12
    with pytest.raises(ValueError):
        dr.connection_ops(a, 1, gauge=2.0 * g)
    with pytest.raises(ValueError):
        dr.connection_ops(a, 1)
    with pytest.raises(ValueError):
        dr.connection_ops(a, 1, lam=0.5, gauge=g)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def test_export_reconstructs_matrix():
    n = 6
    op = dr.build("D_xi", {"xi": 2.0}, n, theta=1.5)
    blob = op.export_json_dict()
    assert blob["schema"] == 1
    dense = np.zeros((op.s * n * n, op.s * n * n), dtype=complex)
    for e in blob["blocks"]:
        band = np.array([complex(re, im) for re, im in e["values"]])
        mat = np.zeros((n, n), dtype=complex)
        idx = np.arange(len(band))
        off = e["band_offset"]
        if off >= 0:
            mat[idx, idx + off] = band
        else:
            mat[idx - off, idx] = band
        if e["side"] == "left":
            full = np.kron(mat, np.eye(n))
        else:
            full = np.kron(np.eye(n), mat.T)
        i, j = e["block_row"], e["block_col"]
        dense[i * n * n:(i + 1) * n * n, j * n * n:(j + 1) * n * n] += full
    assert np.abs(dense - op.materialize().toarray()).max() < EXACT_TOL
