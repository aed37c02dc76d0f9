"""Truncated matrix-base algebra of the noncommutative plane.

Algebra elements are N x N coefficient matrices in the oscillator
transition basis, where the deformed product of functions becomes plain
matrix multiplication of coefficients.  Derivatives and coordinate
multiplications act as ladder (band) operators whose coefficients are
not hard-coded: they are calibrated against a grid-quadrature oracle
(see sampled_plane) and shipped as a data table.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

DEFAULT_TABLE_RESOURCE = "ladder_tables.json"


class CalibrationError(RuntimeError):
    """Ladder tables are missing, malformed, or failed their fit checks."""


# ---------------------------------------------------------------------------
# elements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncatedElement:
    """Algebra element at truncation ``trunc`` with deformation ``theta``."""

    coeffs: np.ndarray
    theta: float
    trunc: int = 0

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.ndim != 2 or coeffs.shape[0] != coeffs.shape[1]:
            raise ValueError(f"coeffs must be square, got shape {coeffs.shape}")
        n = coeffs.shape[0]
        trunc = self.trunc or n
        if trunc != n:
            raise ValueError(f"trunc = {trunc} does not match coeffs shape {n}")
        if n < 2:
            raise ValueError("truncation must be at least 2")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coeffs must be finite")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "trunc", n)

    # -- constructors -------------------------------------------------------

    @classmethod
    def zeros(cls, n: int, theta: float) -> "TruncatedElement":
        return cls(np.zeros((n, n), dtype=complex), theta)

    @classmethod
    def basis(cls, m: int, n: int, size: int, theta: float) -> "TruncatedElement":
        """Matrix unit e_mn at truncation ``size``."""
        if not (0 <= m < size and 0 <= n < size):
            raise ValueError(f"basis index ({m}, {n}) outside truncation {size}")
        c = np.zeros((size, size), dtype=complex)
        c[m, n] = 1.0
        return cls(c, theta)

    @classmethod
    def identity(cls, n: int, theta: float) -> "TruncatedElement":
        return cls(np.eye(n, dtype=complex), theta)

    def with_coeffs(self, coeffs: np.ndarray) -> "TruncatedElement":
        return TruncatedElement(coeffs, self.theta)

    # -- structure ----------------------------------------------------------

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.allclose(self.coeffs, self.coeffs.conj().T, atol=tol))

    def is_interior(self, margin: int) -> bool:
        """True when all support is at least ``margin`` away from the edge."""
        if margin <= 0:
            return True
        c = self.coeffs
        return bool(
            np.all(c[self.trunc - margin:, :] == 0)
            and np.all(c[:, self.trunc - margin:] == 0)
        )

    def project_interior(self, margin: int) -> "TruncatedElement":
        c = self.coeffs.copy()
        if margin > 0:
            c[self.trunc - margin:, :] = 0
            c[:, self.trunc - margin:] = 0
        return self.with_coeffs(c)

    # -- arithmetic sugar ---------------------------------------------------

    def __add__(self, other: "TruncatedElement") -> "TruncatedElement":
        _check_compatible(self, other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "TruncatedElement") -> "TruncatedElement":
        _check_compatible(self, other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar: complex) -> "TruncatedElement":
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "TruncatedElement":
        return self.with_coeffs(-self.coeffs)

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "theta": self.theta,
            "trunc": self.trunc,
            "re": self.coeffs.real.tolist(),
            "im": self.coeffs.imag.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TruncatedElement":
        re = np.asarray(d["re"], dtype=float)
        im = np.asarray(d["im"], dtype=float)
        elem = cls(re + 1j * im, float(d["theta"]))
        if elem.trunc != int(d["trunc"]):
            raise ValueError("trunc field does not match coefficient array")
        return elem


def save_element(a: TruncatedElement, path: str | Path) -> None:
    Path(path).write_text(json.dumps(a.to_json_dict()))


def load_element(path: str | Path) -> TruncatedElement:
    return TruncatedElement.from_json_dict(json.loads(Path(path).read_text()))


def _check_compatible(a: TruncatedElement, b: TruncatedElement) -> None:
    if a.trunc != b.trunc:
        raise ValueError(f"truncation mismatch: {a.trunc} vs {b.trunc}")
    if not math.isclose(a.theta, b.theta, rel_tol=1e-12):
        raise ValueError(f"theta mismatch: {a.theta} vs {b.theta}")


# ---------------------------------------------------------------------------
# algebra operations
# ---------------------------------------------------------------------------

def star(a: TruncatedElement, b: TruncatedElement) -> TruncatedElement:
    """Deformed product: matrix multiplication of coefficient matrices.

    Exact for interior-supported inputs; truncation-lossy otherwise.
    """
    _check_compatible(a, b)
    return a.with_coeffs(a.coeffs @ b.coeffs)


def involution(a: TruncatedElement) -> TruncatedElement:
    """Adjoint: conjugate transpose of the coefficient matrix."""
    return a.with_coeffs(a.coeffs.conj().T)


def trace_integral(a: TruncatedElement) -> complex:
    """Plane integral of the represented function: 2*pi*theta * trace."""
    return 2.0 * math.pi * a.theta * complex(np.trace(a.coeffs))


def l2_inner(a: TruncatedElement, b: TruncatedElement) -> complex:
    """Function-space L2 inner product, 2*pi*theta * <coeffs_a, coeffs_b>."""
    _check_compatible(a, b)
    return 2.0 * math.pi * a.theta * complex(np.vdot(a.coeffs, b.coeffs))


def l2_norm(a: TruncatedElement) -> float:
    """Function-space L2 norm, sqrt(2*pi*theta) * coefficient l2 norm."""
    return math.sqrt(2.0 * math.pi * a.theta) * float(np.linalg.norm(a.coeffs))


@dataclass(frozen=True)
class NormSpec:
    """Weight exponents for the double-sequence norms."""

    s: float
    t: float
    k: int = 0


def norm_st(a: TruncatedElement, spec: NormSpec) -> float:
    """Weighted coefficient norm

        ||a||_{s,t}^2 = sum_{mn} theta^(s+t) (m+1/2)^s (n+1/2)^t |a_mn|^2.

    With s = t = 0 this is the plain coefficient l2 norm.
    """
    n = a.trunc
    idx = np.arange(n, dtype=float) + 0.5
    wm = idx ** spec.s
    wn = idx ** spec.t
    weighted = (a.theta ** (spec.s + spec.t)) * np.abs(a.coeffs) ** 2
    return float(math.sqrt(np.einsum("m,n,mn->", wm, wn, weighted).real))


def rho_k(a: TruncatedElement, k: int) -> float:
    """Diagonal-weight seminorm ||a||_{k,k} (theta^(2k) weight)."""
    return norm_st(a, NormSpec(float(k), float(k), k))


# ---------------------------------------------------------------------------
# calibrated ladder tables
# ---------------------------------------------------------------------------

LADDER_OPS = ("d", "dbar", "x1_left", "x1_right", "x2_left", "x2_right")


@dataclass(frozen=True)
class LadderTerm:
    """One band of a ladder action.

    The action adds ``phase * sqrt((const + slope_m*m + slope_n*n)/theta)
    * a[m, n]`` into the output at index ``(m+dm, n+dn)``.  The linear law
    under the square root is a fit against the oracle at theta = 1; the
    1/sqrt(theta) scaling is validated separately by recalibration.
    """

    dm: int
    dn: int
    phase: complex
    const: float
    slope_m: float
    slope_n: float

    def coefficients(self, n_max: int, theta: float) -> np.ndarray:
        """Coefficient grid c(m, n) for 0 <= m, n < n_max."""
        m = np.arange(n_max, dtype=float)[:, None]
        n = np.arange(n_max, dtype=float)[None, :]
        law = self.const + self.slope_m * m + self.slope_n * n
        return self.phase * np.sqrt(np.clip(law, 0.0, None) / theta)


@dataclass
class LadderTable:
    """Calibrated ladder actions for the derivative and coordinate operators."""

    ops: dict[str, list[LadderTerm]]
    theta_ref: float = 1.0
    fit_residual_max: float = 0.0
    snap_distance_max: float = 0.0
    window: int = 0
    meta: dict = field(default_factory=dict)

    def terms(self, op: str) -> list[LadderTerm]:
        try:
            return self.ops[op]
        except KeyError:
            raise CalibrationError(f"no calibrated table for operator {op!r}")

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "theta_ref": self.theta_ref,
            "fit_residual_max": self.fit_residual_max,
            "snap_distance_max": self.snap_distance_max,
            "window": self.window,
            "meta": self.meta,
            "ops": {
                name: [
                    {
                        "dm": t.dm,
                        "dn": t.dn,
                        "phase_re": t.phase.real,
                        "phase_im": t.phase.imag,
                        "const": t.const,
                        "slope_m": t.slope_m,
                        "slope_n": t.slope_n,
                    }
                    for t in terms
                ]
                for name, terms in self.ops.items()
            },
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "LadderTable":
        ops = {}
        for name, terms in d["ops"].items():
            ops[name] = [
                LadderTerm(
                    dm=int(t["dm"]),
                    dn=int(t["dn"]),
                    phase=complex(t["phase_re"], t["phase_im"]),
                    const=float(t["const"]),
                    slope_m=float(t["slope_m"]),
                    slope_n=float(t["slope_n"]),
                )
                for t in terms
            ]
        return cls(
            ops=ops,
            theta_ref=float(d.get("theta_ref", 1.0)),
            fit_residual_max=float(d.get("fit_residual_max", 0.0)),
            snap_distance_max=float(d.get("snap_distance_max", 0.0)),
            window=int(d.get("window", 0)),
            meta=d.get("meta", {}),
        )


_ACTIVE_TABLE: LadderTable | None = None


def install_ladder_table(table: LadderTable | None) -> None:
    """Override the active ladder table (None restores the shipped one)."""
    global _ACTIVE_TABLE
    _ACTIVE_TABLE = table


def get_ladder_table() -> LadderTable:
    global _ACTIVE_TABLE
    if _ACTIVE_TABLE is None:
        _ACTIVE_TABLE = _load_shipped_table()
    return _ACTIVE_TABLE


def _load_shipped_table() -> LadderTable:
    try:
        payload = (
            resources.files("ncgdist")
            .joinpath("data")
            .joinpath(DEFAULT_TABLE_RESOURCE)
            .read_text()
        )
    except (FileNotFoundError, ModuleNotFoundError) as exc:
        raise CalibrationError(
            "no ladder calibration table available; run the calibration "
            "(sampled_plane.ladder_calibration) and install its result"
        ) from exc
    return LadderTable.from_json_dict(json.loads(payload))


def apply_ladder_term(coeffs: np.ndarray, term: LadderTerm, theta: float) -> np.ndarray:
    """Apply one band term to a coefficient matrix (boundary rows drop out)."""
    n = coeffs.shape[0]
    c = term.coefficients(n, theta)
    out = np.zeros_like(coeffs)
    r0, r1 = max(0, -term.dm), n - max(0, term.dm)
    c0, c1 = max(0, -term.dn), n - max(0, term.dn)
    if r0 >= r1 or c0 >= c1:
        return out
    src = (c * coeffs)[r0:r1, c0:c1]
    out[r0 + term.dm:r1 + term.dm, c0 + term.dn:c1 + term.dn] = src
    return out


def apply_ladder(a: TruncatedElement, op: str, table: LadderTable | None = None) -> TruncatedElement:
    table = table or get_ladder_table()
    out = np.zeros_like(a.coeffs)
    for term in table.terms(op):
        out += apply_ladder_term(a.coeffs, term, a.theta)
    return a.with_coeffs(out)


def derivative(a: TruncatedElement, which: str, table: LadderTable | None = None) -> TruncatedElement:
    """Calibrated derivative: ``which`` is one of d, dbar, d1, d2.

    d and dbar are the holomorphic/antiholomorphic combinations
    (d1 -+ i*d2)/sqrt(2); exact on interior-supported elements (margin 1).
    """
    if which in ("d", "dbar"):
        return apply_ladder(a, which, table)
    if which == "d1":
        s = apply_ladder(a, "d", table).coeffs + apply_ladder(a, "dbar", table).coeffs
        return a.with_coeffs(s / math.sqrt(2.0))
    if which == "d2":
        s = apply_ladder(a, "d", table).coeffs - apply_ladder(a, "dbar", table).coeffs
        return a.with_coeffs(1j * s / math.sqrt(2.0))
    raise ValueError(f"unknown derivative {which!r}")


def xtilde_apply(a: TruncatedElement, mu: int, mode: str, table: LadderTable | None = None) -> TruncatedElement:
    """Action of the rescaled coordinate x~_mu (mu in {1, 2}).

    Modes: "star-left", "star-right", or "pointwise" (defined as half the
    star-anticommutator).  Exact on interior-supported elements (margin 1).
    """
    if mu not in (1, 2):
        raise ValueError(f"mu must be 1 or 2, got {mu}")
    if mode == "star-left":
        return apply_ladder(a, f"x{mu}_left", table)
    if mode == "star-right":
        return apply_ladder(a, f"x{mu}_right", table)
    if mode == "pointwise":
        left = apply_ladder(a, f"x{mu}_left", table).coeffs
        right = apply_ladder(a, f"x{mu}_right", table).coeffs
        return a.with_coeffs(0.5 * (left + right))
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# band-matrix realizations (consumed by the operator builders)
# ---------------------------------------------------------------------------

def _term_side(term: LadderTerm, tol: float = 1e-6) -> str:
    """Classify a band term as a left or right multiplication.

    A term shifting the row index with an m-only coefficient law is a left
    matrix multiplication; a column shift with an n-only law is a right one.
    """
    if term.dm != 0 and term.dn == 0 and abs(term.slope_n) < tol:
        return "left"
    if term.dn != 0 and term.dm == 0 and abs(term.slope_m) < tol:
        return "right"
    # zero-offset terms would be diagonal multipliers; none are calibrated
    raise CalibrationError(
        f"ladder term (dm={term.dm}, dn={term.dn}) does not factor as a "
        "one-sided multiplication"
    )


def ladder_coefop(op: str, n: int, theta: float, table: LadderTable | None = None) -> list[tuple[np.ndarray | None, np.ndarray | None]]:
    """Ladder action as a list of (L, R) terms meaning psi -> L @ psi @ R.

    ``None`` stands for the identity factor.  Each calibrated band becomes
    a single-diagonal band matrix on the left or the right.
    """
    table = table or get_ladder_table()
    out: list[tuple[np.ndarray | None, np.ndarray | None]] = []
    for term in table.terms(op):
        side = _term_side(term)
        c = term.coefficients(n, theta)
        mat = np.zeros((n, n), dtype=complex)
        if side == "left":
            # out[m+dm, n] += c(m) * psi[m, n]  =>  L[m+dm, m] = c(m)
            rows = np.arange(max(0, -term.dm), n - max(0, term.dm))
            mat[rows + term.dm, rows] = c[rows, 0]
            out.append((mat, None))
        else:
            # out[m, n+dn] += c(n) * psi[m, n]  =>  R[n, n+dn] = c(n)
            cols = np.arange(max(0, -term.dn), n - max(0, term.dn))
            mat[cols, cols + term.dn] = c[0, cols]
            out.append((None, mat))
    return out
