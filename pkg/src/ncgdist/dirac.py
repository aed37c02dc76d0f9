"""Dirac-type block operators on the truncated coefficient space.

A spinor operator is an s x s array of coefficient-space operators, each a
signed sum of terms psi -> L @ psi @ R built from the calibrated ladder
bands.  Commutators with represented algebra elements are available both
by direct composition and through the closed derivative form, so the two
routes stay independently checkable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .fock_algebra import TruncatedElement, derivative, ladder_coefop

# Pauli set in the convention the commutator algebra uses (the second one
# is the transpose of the textbook matrix)
SIGMA1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA2 = np.array([[0.0, 1.0j], [-1.0j, 0.0]], dtype=complex)
SIGMA3 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA = (SIGMA1, SIGMA2)

DIRAC_KINDS = ("D0", "D_Omega", "D1", "D2", "D_xi", "D_xi_twisted")


class SingularMetricError(ValueError):
    """The requested effective metric is singular (degenerate triple)."""


# ---------------------------------------------------------------------------
# coefficient-space operator terms
# ---------------------------------------------------------------------------
# a term is (sign, L, R): psi -> sign * L @ psi @ R, None meaning identity

Term = tuple[complex, np.ndarray | None, np.ndarray | None]


def coefop_apply(terms: list[Term], psi: np.ndarray) -> np.ndarray:
    out = np.zeros(psi.shape, dtype=complex)
    for sign, left, right in terms:
        tmp = psi
        if left is not None:
            tmp = left @ tmp
        if right is not None:
            tmp = tmp @ right
        out += sign * tmp
    return out


def coefop_scaled(terms: list[Term], c: complex) -> list[Term]:
    return [(sign * c, left, right) for sign, left, right in terms]


def coefop_compose(outer: list[Term], inner: list[Term]) -> list[Term]:
    """All pairwise products (outer o inner); identity factors pass through
    by object so that exactly repeated terms can cancel later."""
    out: list[Term] = []
    for s2, l2, r2 in outer:
        for s1, l1, r1 in inner:
            if l2 is None:
                left = l1
            elif l1 is None:
                left = l2
            else:
                left = l2 @ l1
            if r1 is None:
                right = r2
            elif r2 is None:
                right = r1
            else:
                right = r1 @ r2
            out.append((s2 * s1, left, right))
    return out


def coefop_simplify(terms: list[Term], n: int) -> list[Term]:
    """Cancel identical term pairs and merge one-sided terms.

    Terms sharing the same (L, R) objects are summed over their signs
    (this is what cancels the untouched side of a commutator exactly);
    all surviving pure-left terms merge into one left matrix, all
    pure-right terms into one right matrix.
    """
    acc: dict[tuple[int, int], list] = {}
    for sign, left, right in terms:
        key = (id(left), id(right))
        if key in acc:
            acc[key][0] += sign
        else:
            acc[key] = [sign, left, right]

    left_sum = None
    right_sum = None
    mixed: list[Term] = []
    scalar = 0.0
    for sign, left, right in acc.values():
        if sign == 0:
            continue
        if left is None and right is None:
            scalar += sign
        elif right is None:
            left_sum = (0 if left_sum is None else left_sum) + sign * left
        elif left is None:
            right_sum = (0 if right_sum is None else right_sum) + sign * right
        else:
            mixed.append((sign, left, right))
    out: list[Term] = []
    if scalar != 0.0:
        out.append((scalar, None, None))
    if left_sum is not None:
        out.append((1.0, left_sum, None))
    if right_sum is not None:
        out.append((1.0, None, right_sum))
    out.extend(mixed)
    return out


def coefop_materialize(terms: list[Term], n: int) -> sps.csr_matrix:
    """Matrix on row-major vectorized coefficients: vec(L psi R) = (L (x) R^T) vec."""
    eye = sps.identity(n, dtype=complex, format="csr")
    total = sps.csr_matrix((n * n, n * n), dtype=complex)
    for sign, left, right in terms:
        lm = eye if left is None else sps.csr_matrix(left)
        rm = eye if right is None else sps.csr_matrix(right.T)
        total = total + sign * sps.kron(lm, rm, format="csr")
    return total


# ---------------------------------------------------------------------------
# spinor operators
# ---------------------------------------------------------------------------

@dataclass
class SpinorOperator:
    kind: str
    s: int
    n: int
    theta: float
    params: dict
    blocks: list[list[list[Term]]]
    degenerate: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.s * self.n * self.n

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """Apply to a spinor of coefficient matrices, shape (s, n, n)."""
        if psi.shape != (self.s, self.n, self.n):
            raise ValueError(f"spinor shape {psi.shape} incompatible")
        out = np.zeros_like(psi, dtype=complex)
        for i in range(self.s):
            for j in range(self.s):
                if self.blocks[i][j]:
                    out[i] += coefop_apply(self.blocks[i][j], psi[j])
        return out

    def simplified(self) -> "SpinorOperator":
        blocks = [
            [coefop_simplify(self.blocks[i][j], self.n) for j in range(self.s)]
            for i in range(self.s)
        ]
        return SpinorOperator(self.kind, self.s, self.n, self.theta, self.params,
                              blocks, self.degenerate, dict(self.meta))

    def pure_left_matrix(self) -> np.ndarray | None:
        """If every block is a plain left multiplication, return the dense
        (s*n) x (s*n) matrix acting columnwise; None otherwise."""
        sn = self.s * self.n
        big = np.zeros((sn, sn), dtype=complex)
        for i in range(self.s):
            for j in range(self.s):
                for sign, left, right in coefop_simplify(self.blocks[i][j], self.n):
                    if right is not None:
                        return None
                    blk = big[i * self.n:(i + 1) * self.n, j * self.n:(j + 1) * self.n]
                    if left is None:
                        blk += sign * np.eye(self.n)
                    else:
                        blk += sign * left
        return big

    def materialize(self) -> sps.csr_matrix:
        rows = []
        for i in range(self.s):
            row = []
            for j in range(self.s):
                terms = self.blocks[i][j]
                row.append(coefop_materialize(terms, self.n) if terms else None)
            rows.append(row)
        return sps.bmat(rows, format="csr", dtype=complex)

    def export_json_dict(self) -> dict:
        """Block-sparse band export.

        Each simplified one-sided term is stored per nonzero band; the side
        field distinguishes row-index (left) from column-index (right)
        actions, which the band offset alone cannot encode.
        """
        entries = []
        for i in range(self.s):
            for j in range(self.s):
                for sign, left, right in coefop_simplify(self.blocks[i][j], self.n):
                    if left is not None and right is not None:
                        raise ValueError("mixed two-sided term is not band-exportable")
                    if left is None and right is None:
                        mat, side = np.eye(self.n, dtype=complex) * sign, "left"
                    elif left is not None:
                        mat, side = sign * left, "left"
                    else:
                        mat, side = sign * right, "right"
                    for off in range(-self.n + 1, self.n):
                        diag = np.diagonal(mat, offset=off)
                        if np.any(diag != 0):
                            entries.append({
                                "block_row": i,
                                "block_col": j,
                                "side": side,
                                "band_offset": off,
                                "values": [[v.real, v.imag] for v in diag],
                            })
        return {
            "schema": 1,
            "kind": self.kind,
            "s": self.s,
            "trunc": self.n,
            "theta": self.theta,
            "params": {k: v for k, v in self.params.items() if isinstance(v, (int, float))},
            "degenerate": self.degenerate,
            "blocks": entries,
        }


# ---------------------------------------------------------------------------
# primitive coefficient operators
# ---------------------------------------------------------------------------

def _as_terms(pairs) -> list[Term]:
    return [(1.0, left, right) for left, right in pairs]


def derivative_terms(which: str, n: int, theta: float) -> list[Term]:
    """Ladder realization of d1/d2/d/dbar as signed (L, R) terms."""
    if which in ("d", "dbar"):
        return _as_terms(ladder_coefop(which, n, theta))
    d = _as_terms(ladder_coefop("d", n, theta))
    db = _as_terms(ladder_coefop("dbar", n, theta))
    if which == "d1":
        return coefop_scaled(d, 1.0 / math.sqrt(2.0)) + coefop_scaled(db, 1.0 / math.sqrt(2.0))
    if which == "d2":
        return coefop_scaled(d, 1j / math.sqrt(2.0)) + coefop_scaled(db, -1j / math.sqrt(2.0))
    raise ValueError(f"unknown derivative {which!r}")


def xtilde_terms(mu: int, mode: str, n: int, theta: float) -> list[Term]:
    if mode == "pointwise":
        left = _as_terms(ladder_coefop(f"x{mu}_left", n, theta))
        right = _as_terms(ladder_coefop(f"x{mu}_right", n, theta))
        return coefop_scaled(left, 0.5) + coefop_scaled(right, 0.5)
    if mode in ("star-left", "star-right"):
        key = f"x{mu}_{mode.split('-')[1]}"
        return _as_terms(ladder_coefop(key, n, theta))
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _kron2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(a, b)


def _check_clifford_pairs(gammas: list[np.ndarray]) -> None:
    """Flat anticommutation {g_i, g_j} = 2 delta_ij for a candidate set."""
    k = len(gammas)
    s = gammas[0].shape[0]
    for i in range(k):
        if not np.allclose(gammas[i], gammas[i].conj().T, atol=1e-12):
            raise ValueError(f"gamma {i} is not hermitian")
        for j in range(k):
            anti = gammas[i] @ gammas[j] + gammas[j] @ gammas[i]
            target = 2.0 * (1.0 if i == j else 0.0) * np.eye(s)
            if not np.allclose(anti, target, atol=1e-12):
                raise ValueError(f"gammas {i},{j} do not anticommute correctly")


def _spin_structure(kind: str, params: dict) -> tuple[int, list[np.ndarray], list[np.ndarray]]:
    """(s, derivative matrices M_mu, coordinate matrices X_mu) so that
    D = sum_mu M_mu (x) (-i d_mu) + X_mu (x) m(xt_mu)."""
    omega = float(params.get("omega", 0.0))
    xi = float(params.get("xi", 0.0))
    eye2 = np.eye(2, dtype=complex)
    if kind == "D0":
        return 2, [SIGMA1, SIGMA2], [None, None]
    if kind == "D1":
        return (4,
                [_kron2(eye2, SIGMA1), _kron2(eye2, SIGMA2)],
                [-omega * _kron2(SIGMA1, SIGMA3), -omega * _kron2(SIGMA2, SIGMA3)])
    if kind == "D2":
        return (4,
                [_kron2(SIGMA3, SIGMA1), _kron2(SIGMA3, SIGMA2)],
                [-omega * _kron2(SIGMA1, eye2), -omega * _kron2(SIGMA2, eye2)])
    if kind == "D_Omega":
        gammas = params.get("gammas")
        if gammas is None:
            g = [_kron2(eye2, SIGMA1), _kron2(eye2, SIGMA2),
                 _kron2(SIGMA1, SIGMA3), _kron2(SIGMA2, SIGMA3)]
        else:
            g = [np.asarray(m, dtype=complex) for m in gammas]
            _check_clifford_pairs(g)
        s = g[0].shape[0]
        return s, [g[0], g[1]], [-omega * g[2], -omega * g[3]]
    if kind == "D_xi":
        return 2, [SIGMA1, SIGMA2], [xi * SIGMA1, xi * SIGMA2]
    if kind == "D_xi_twisted":
        return (4,
                [_kron2(eye2, SIGMA1), _kron2(eye2, SIGMA2)],
                [-xi * _kron2(SIGMA3, SIGMA1), -xi * _kron2(SIGMA3, SIGMA2)])
    raise ValueError(f"unknown operator kind {kind!r}")


def build(kind: str, params: dict, n: int, theta: float) -> SpinorOperator:
    """Assemble a Dirac-type operator from the calibrated ladder actions.

    For the Landau family xi = 1 builds fine but the operator is tagged
    degenerate (its commutators with the algebra vanish identically).
    """
    params = dict(params)
    if kind in ("D1", "D2", "D_Omega"):
        omega = float(params.get("omega", 0.0))
        if not 0.0 < omega <= 1.0:
            raise ValueError(f"omega must lie in (0, 1], got {omega}")
    s, deriv_mats, coord_mats = _spin_structure(kind, params)
    blocks: list[list[list[Term]]] = [[[] for _ in range(s)] for _ in range(s)]
    for mu in (1, 2):
        dterms = derivative_terms(f"d{mu}", n, theta)
        mterms = xtilde_terms(mu, "pointwise", n, theta)
        dm = deriv_mats[mu - 1]
        xm = coord_mats[mu - 1]
        for i in range(s):
            for j in range(s):
                if dm is not None and dm[i, j] != 0:
                    blocks[i][j] += coefop_scaled(dterms, -1j * dm[i, j])
                if xm is not None and xm[i, j] != 0:
                    blocks[i][j] += coefop_scaled(mterms, xm[i, j])
    degenerate = kind in ("D_xi", "D_xi_twisted") and float(params.get("xi")) == 1.0
    meta = {"tag": "degenerate metric"} if degenerate else {}
    return SpinorOperator(kind, s, n, theta, params, blocks, degenerate, meta)


def pi_rep(a: TruncatedElement, s: int) -> SpinorOperator:
    """Diagonal spinor representation of an algebra element."""
    amat = a.coeffs
    blocks: list[list[list[Term]]] = [
        [([(1.0, amat, None)] if i == j else []) for j in range(s)] for i in range(s)
    ]
    return SpinorOperator("pi(a)", s, a.trunc, a.theta, {}, blocks)


# ---------------------------------------------------------------------------
# commutators and Clifford metrics
# ---------------------------------------------------------------------------

def commutator(d_op: SpinorOperator, a: TruncatedElement, mode: str = "direct") -> SpinorOperator:
    """[D, pi(a)] by blockwise composition (direct) or the derivative
    closed form with the kind's Gamma matrices (closed-form)."""
    if a.trunc != d_op.n:
        raise ValueError("truncation mismatch")
    s = d_op.s
    if mode == "direct":
        amat = a.coeffs
        aterm: list[Term] = [(1.0, amat, None)]
        blocks = []
        for i in range(s):
            row = []
            for j in range(s):
                terms = coefop_compose(d_op.blocks[i][j], aterm)
                terms += coefop_scaled(coefop_compose(aterm, d_op.blocks[i][j]), -1.0)
                row.append(coefop_simplify(terms, d_op.n))
            blocks.append(row)
    elif mode == "closed-form":
        gammas = commutator_gammas(d_op.kind, d_op.params)
        da = [derivative(a, "d1").coeffs, derivative(a, "d2").coeffs]
        blocks = [[[] for _ in range(s)] for _ in range(s)]
        for mu in (1, 2):
            g = gammas[mu - 1]
            for i in range(s):
                for j in range(s):
                    if g[i, j] != 0:
                        blocks[i][j].append((-1j * g[i, j], da[mu - 1], None))
    else:
        raise ValueError(f"unknown commutator mode {mode!r}")
    return SpinorOperator(f"[{d_op.kind},pi(a)]", s, d_op.n, d_op.theta,
                          dict(d_op.params), blocks, d_op.degenerate,
                          {"mode": mode})


def commutator_gammas(kind: str, params: dict) -> list[np.ndarray]:
    """The matrices Gamma^mu with [D, pi(a)] = -i L(d_mu a) (x) Gamma^mu.

    For the twisted Landau kind the set is block diagonal with the two
    chirality factors (1 -+ xi)."""
    omega = float(params.get("omega", 0.0))
    xi = float(params.get("xi", 0.0))
    eye2 = np.eye(2, dtype=complex)
    if kind == "D0":
        return [SIGMA1, SIGMA2]
    if kind in ("D1", "D_Omega"):
        if kind == "D_Omega" and params.get("gammas") is not None:
            g = [np.asarray(m, dtype=complex) for m in params["gammas"]]
            return [g[0] + omega * g[2], g[1] + omega * g[3]]
        return [_kron2(eye2, SIGMA[mu]) + omega * _kron2(SIGMA[mu], SIGMA3)
                for mu in (0, 1)]
    if kind == "D2":
        return [_kron2(SIGMA3, SIGMA[mu]) + omega * _kron2(SIGMA[mu], eye2)
                for mu in (0, 1)]
    if kind == "D_xi":
        return [(1.0 - xi) * SIGMA1, (1.0 - xi) * SIGMA2]
    if kind == "D_xi_twisted":
        # top chirality block is the -xi Landau operator, so it carries 1 + xi
        chir = np.diag([1.0 + xi, 1.0 - xi]).astype(complex)
        return [_kron2(chir, SIGMA1), _kron2(chir, SIGMA2)]
    raise ValueError(f"unknown operator kind {kind!r}")


@dataclass(frozen=True)
class CliffordSet:
    gammas: list[np.ndarray]
    metric_inverse: np.ndarray

    @property
    def det_g(self) -> float:
        return 1.0 / float(np.linalg.det(self.metric_inverse).real)

    @property
    def det_g_quarter(self) -> float:
        return self.det_g ** 0.25


def clifford_metric(kind: str, params: dict) -> CliffordSet:
    """Effective metric from the commutator Gamma matrices.

    {Gamma^mu, Gamma^nu} = 2 (G^-1)^{mu nu} is required to close on the
    identity; for the twisted kind the dominant chirality block is used so
    that the scalar relation holds (the full 4x4 set is block-homothetic).
    """
    xi = float(params.get("xi", 0.0))
    if kind in ("D_xi", "D_xi_twisted") and xi == 1.0:
        # D_xi: all commutators vanish.  Twisted: one chirality block of
        # the Gamma set vanishes, so the 4x4 structure has a kernel.
        raise SingularMetricError("xi = 1: effective metric is singular")
    if kind == "D_xi_twisted":
        factor = 1.0 + abs(xi)
        gammas = [factor * SIGMA1, factor * SIGMA2]
    else:
        gammas = commutator_gammas(kind, params)
    s = gammas[0].shape[0]
    ginv = np.zeros((2, 2))
    for mu in range(2):
        for nu in range(2):
            anti = gammas[mu] @ gammas[nu] + gammas[nu] @ gammas[mu]
            val = np.trace(anti).real / (2.0 * s)
            if not np.allclose(anti, 2.0 * val * np.eye(s), atol=1e-10):
                raise ValueError("anticommutators do not close on the identity")
            ginv[mu, nu] = val
    if abs(np.linalg.det(ginv)) < 1e-14:
        raise SingularMetricError("effective metric is singular")
    return CliffordSet(gammas=gammas, metric_inverse=ginv)


# ---------------------------------------------------------------------------
# hamiltonians and square identities
# ---------------------------------------------------------------------------

def hamiltonian_terms(which: str, params: dict, n: int, theta: float) -> list[Term]:
    """Scalar Hamiltonians on the coefficient space (single spinor block)."""
    omega = float(params.get("omega", 0.0))
    xi = float(params.get("xi", 0.0))
    d1 = derivative_terms("d1", n, theta)
    d2 = derivative_terms("d2", n, theta)
    m1 = xtilde_terms(1, "pointwise", n, theta)
    m2 = xtilde_terms(2, "pointwise", n, theta)
    lap = coefop_scaled(coefop_compose(d1, d1), -1.0) + coefop_scaled(coefop_compose(d2, d2), -1.0)
    if which == "harmonic":
        pot = coefop_scaled(coefop_compose(m1, m1), omega ** 2)
        pot += coefop_scaled(coefop_compose(m2, m2), omega ** 2)
        return coefop_simplify(lap + pot, n)
    if which == "landau":
        pot = coefop_scaled(coefop_compose(m1, m1), xi ** 2)
        pot += coefop_scaled(coefop_compose(m2, m2), xi ** 2)
        cross = coefop_scaled(coefop_compose(m1, d1), -2j * xi)
        cross += coefop_scaled(coefop_compose(m2, d2), -2j * xi)
        return coefop_simplify(lap + pot + cross, n)
    raise ValueError(f"unknown hamiltonian {which!r}")


def hamiltonian(which: str, params: dict, n: int, theta: float) -> SpinorOperator:
    terms = hamiltonian_terms(which, params, n, theta)
    return SpinorOperator(f"H_{which}", 1, n, theta, dict(params), [[terms]])


def _random_interior_spinor(s: int, n: int, margin: int, rng) -> np.ndarray:
    psi = rng.normal(size=(s, n, n)) + 1j * rng.normal(size=(s, n, n))
    psi[:, n - margin:, :] = 0
    psi[:, :, n - margin:] = 0
    return psi


def square_identity_check(kind: str, params: dict, n: int, theta: float,
                          margin: int = 2, seed: int = 0, n_vectors: int = 5) -> dict:
    """Residuals of the closed-form expressions for D^2 on interior spinors."""
    d_op = build(kind, params, n, theta)
    s = d_op.s
    rng = np.random.default_rng(seed)
    report: dict = {"kind": kind, "n": n, "margin": margin}

    def op_resid(lhs_apply, rhs_apply):
        worst = 0.0
        for _ in range(n_vectors):
            psi = _random_interior_spinor(s, n, margin, rng)
            lv = lhs_apply(psi)
            rv = rhs_apply(psi)
            scale = max(np.abs(lv).max(), np.abs(rv).max(), 1e-300)
            worst = max(worst, float(np.abs(lv - rv).max() / scale))
        return worst

    def d2_apply(psi):
        return d_op.apply(d_op.apply(psi))

    if kind in ("D1", "D2", "D_Omega"):
        omega = float(params["omega"])
        h_terms = hamiltonian_terms("harmonic", params, n, theta)
        spin = _d_omega_spin_term(kind, params, omega, theta)

        def rhs(psi):
            out = np.empty_like(psi)
            for i in range(s):
                out[i] = coefop_apply(h_terms, psi[i])
            out += np.einsum("ij,jmn->imn", spin, psi)
            return out

        report["square_residual"] = op_resid(d2_apply, rhs)
        report["spin_term"] = "-(2 omega/theta) sigma_mu (x) sigma_mu" if kind == "D1" else None
    elif kind in ("D_xi", "D_xi_twisted"):
        xi = float(params["xi"])
        h_terms = hamiltonian_terms("landau", params, n, theta)
        shift = 4.0 * xi / theta
        if kind == "D_xi":
            comps = [(h_terms, -shift), (h_terms, shift)]
        else:
            # the operator is diag(D_{-xi}, D_{xi}); the cross term of the
            # top block's Landau Hamiltonian is odd in xi
            h_neg = hamiltonian_terms("landau", {"xi": -xi}, n, theta)
            comps = [(h_neg, shift), (h_neg, -shift), (h_terms, -shift), (h_terms, shift)]

        def rhs(psi):
            out = np.empty_like(psi)
            for i in range(s):
                ht, sh = comps[i]
                out[i] = coefop_apply(ht, psi[i]) + sh * psi[i]
            return out

        report["square_residual"] = op_resid(d2_apply, rhs)

        # momentum-square split H_L = P_mu P_mu with P_mu = -i d_mu + xi m(xt_mu)
        p1 = coefop_scaled(derivative_terms("d1", n, theta), -1j)
        p1 += coefop_scaled(xtilde_terms(1, "pointwise", n, theta), xi)
        p2 = coefop_scaled(derivative_terms("d2", n, theta), -1j)
        p2 += coefop_scaled(xtilde_terms(2, "pointwise", n, theta), xi)
        psq = coefop_compose(p1, p1) + coefop_compose(p2, p2)

        def hl_apply(psi):
            return np.stack([coefop_apply(h_terms, psi[k]) for k in range(len(psi))])

        def psq_apply(psi):
            return np.stack([coefop_apply(psq, psi[k]) for k in range(len(psi))])

        rng2 = np.random.default_rng(seed + 1)
        worst = 0.0
        for _ in range(n_vectors):
            phi = _random_interior_spinor(1, n, margin, rng2)
            lv, rv = hl_apply(phi), psq_apply(phi)
            scale = max(np.abs(lv).max(), 1e-300)
            worst = max(worst, float(np.abs(lv - rv).max() / scale))
        report["momentum_split_residual"] = worst
    elif kind == "D0":
        h_terms = coefop_simplify(
            coefop_scaled(coefop_compose(derivative_terms("d1", n, theta),
                                         derivative_terms("d1", n, theta)), -1.0)
            + coefop_scaled(coefop_compose(derivative_terms("d2", n, theta),
                                           derivative_terms("d2", n, theta)), -1.0), n)

        def rhs(psi):
            return np.stack([coefop_apply(h_terms, psi[i]) for i in range(s)])

        report["square_residual"] = op_resid(d2_apply, rhs)
    else:
        raise ValueError(f"unknown operator kind {kind!r}")
    return report


def _d_omega_spin_term(kind: str, params: dict, omega: float, theta: float) -> np.ndarray:
    """Constant spinor matrix in D^2 for the harmonic family."""
    if kind == "D_Omega" and params.get("gammas") is not None:
        g = [np.asarray(m, dtype=complex) for m in params["gammas"]]
    elif kind == "D2":
        g = [_kron2(SIGMA3, SIGMA1), _kron2(SIGMA3, SIGMA2),
             _kron2(SIGMA1, np.eye(2, dtype=complex)), _kron2(SIGMA2, np.eye(2, dtype=complex))]
    else:
        g = [_kron2(np.eye(2, dtype=complex), SIGMA1), _kron2(np.eye(2, dtype=complex), SIGMA2),
             _kron2(SIGMA1, SIGMA3), _kron2(SIGMA2, SIGMA3)]
    # i 2 omega gamma^mu gamma^{nu+2} inv(Theta)_{nu mu}
    # with inv(Theta) = (1/theta) [[0, -1], [1, 0]]
    return (2j * omega / theta) * (g[0] @ g[3] - g[1] @ g[2])


# ---------------------------------------------------------------------------
# connections and gauge transformations
# ---------------------------------------------------------------------------

def connection_apply(a: TruncatedElement, mu: int, lam: float) -> TruncatedElement:
    """Connection nabla^lambda_mu(a) = d_mu a + i lambda xt_mu * a."""
    from .fock_algebra import xtilde_apply
    da = derivative(a, f"d{mu}")
    xa = xtilde_apply(a, mu, "star-left")
    return a.with_coeffs(da.coeffs + 1j * lam * xa.coeffs)


def gauge_invariant_connection(a: TruncatedElement, mu: int) -> TruncatedElement:
    """The lambda = 1/2 connection, equal to (i/2) a * xt_mu identically."""
    return connection_apply(a, mu, 0.5)


def gauge_transform(a_mu: TruncatedElement, g: TruncatedElement, mu: int,
                    unitary_tol: float = 1e-10) -> TruncatedElement:
    """A_mu -> g^dag * A_mu * g + g^dag * d_mu g for unitary g."""
    from .fock_algebra import involution, star
    gd = involution(g)
    test = star(gd, g).coeffs - np.eye(g.trunc)
    if float(np.abs(test).max()) > unitary_tol:
        raise ValueError(
            f"gauge factor is not unitary at truncation: |g*g - 1| = "
            f"{float(np.abs(test).max()):.2e}"
        )
    return star(star(gd, a_mu), g) + star(gd, derivative(g, f"d{mu}"))


def connection_ops(a: TruncatedElement, mu: int, lam: float | None = None,
                   gauge: TruncatedElement | None = None) -> TruncatedElement:
    """Dispatch: connection application (lam given) or gauge transform."""
    if (lam is None) == (gauge is None):
        raise ValueError("give exactly one of lam or gauge")
    if lam is not None:
        return connection_apply(a, mu, lam)
    return gauge_transform(a, gauge, mu)


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    clusters: list[tuple[int, float, int]]  # (index, mean, multiplicity)
    meta: dict

    def csv_rows(self) -> list[tuple[int, float, int]]:
        return self.clusters


def _deterministic_v0(dim: int) -> np.ndarray:
    rng = np.random.default_rng(0)
    v0 = np.ones(dim) + 1e-3 * rng.standard_normal(dim)
    return v0 / np.linalg.norm(v0)


def cluster_eigenvalues(evals: np.ndarray, cluster_tol: float | None = None) -> list[tuple[int, float, int]]:
    """Group sorted eigenvalues into clusters split at large gaps.

    The default threshold sits at the sharpest drop in the sorted gap
    sizes, which separates within-cluster spread from physical level gaps
    regardless of the absolute scale; without a clear drop, half of the
    largest gap is used.
    """
    evals = np.sort(np.real(evals))
    if len(evals) == 0:
        return []
    diffs = np.diff(evals)
    if cluster_tol is None:
        floor = 1e-15 * max(1.0, float(np.abs(evals).max()))
        pos = np.sort(diffs[diffs > floor])[::-1]
        if len(pos) == 0:
            cluster_tol = np.inf
        elif len(pos) == 1:
            cluster_tol = 0.5 * float(pos[0])
        else:
            ratios = pos[:-1] / pos[1:]
            i = int(np.argmax(ratios))
            if ratios[i] >= 20.0:
                cluster_tol = float(np.sqrt(pos[i] * pos[i + 1]))
            else:
                cluster_tol = 0.5 * float(pos[0])
    clusters = []
    start = 0
    for i, d in enumerate(diffs):
        if d > cluster_tol:
            seg = evals[start:i + 1]
            clusters.append((len(clusters), float(seg.mean()), len(seg)))
            start = i + 1
    seg = evals[start:]
    clusters.append((len(clusters), float(seg.mean()), len(seg)))
    return clusters


def spectrum(which: str, params: dict, n: int, theta: float,
             n_levels: int | None = None, cluster_tol: float | None = None) -> SpectrumResult:
    """Eigenvalue clusters of a Hamiltonian or Dirac-family operator.

    which: "harmonic" / "landau" (scalar Hamiltonians) or a Dirac kind.
    Dense eigensolve up to dimension 1100, shift-invert Lanczos above.
    """
    if which in ("harmonic", "landau"):
        op = hamiltonian(which, params, n, theta)
        stated_spacing = {
            "harmonic": float(params.get("omega", 0.0)) / theta,
            "landau": 8.0 * abs(float(params.get("xi", 0.0))) / theta,
        }[which]
    elif which == "zero":
        op = SpinorOperator("zero", 1, n, theta, {}, [[[]]])
        stated_spacing = 0.0
    else:
        op = build(which, params, n, theta)
        stated_spacing = 0.0
    mat = op.materialize()
    dim = mat.shape[0]
    if n_levels is None:
        n_levels = dim if dim <= 1100 else int(1.25 * n) + 8
    n_levels = min(n_levels, dim)
    if dim <= 1100 or n_levels >= dim - 2:
        evals = np.linalg.eigvalsh(mat.toarray())[:n_levels]
    else:
        herm = (mat + mat.conj().T) * 0.5
        if abs(herm.imag).max() < 1e-13 * max(1.0, abs(herm.real).max()):
            herm = herm.real  # real Lanczos is much cheaper when available
        evals = spla.eigsh(
            herm, k=n_levels, sigma=-1.0, which="LM",
            v0=_deterministic_v0(dim), return_eigenvectors=False,
        )
        evals = np.sort(evals.real)
    clusters = cluster_eigenvalues(evals, cluster_tol)
    meta: dict = {"which": which, "n": n, "theta": theta, "dim": dim,
                  "params": {k: v for k, v in params.items() if isinstance(v, (int, float))}}
    if len(clusters) >= 3:
        # spacing from the low end of the spectrum, keeping clusters at
        # least half as populated as the lowest one; sparse stragglers in
        # between are truncation artifacts
        cut = max(1, clusters[0][2] // 2)
        means = [c[1] for c in clusters if c[2] >= cut][:8]
        spacings = np.diff(means)
        if len(spacings):
            measured = float(np.median(spacings))
            meta["measured_spacing"] = measured
            if stated_spacing > 0:
                meta["stated_spacing"] = stated_spacing
                meta["prefactor_ratio"] = measured / stated_spacing
    return SpectrumResult(np.asarray(evals), clusters, meta)
