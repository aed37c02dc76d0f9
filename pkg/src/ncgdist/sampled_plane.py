"""Grid-sampled oracle for the deformed product.

Functions are sampled on a uniform square box and the deformed product is
evaluated by direct 4-D quadrature of its integral form.  This module is
deliberately independent of the matrix-base ladder tables: it is used to
calibrate them and to cross-validate the matrix algebra.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .fock_algebra import (
    CalibrationError,
    LadderTable,
    LadderTerm,
    TruncatedElement,
)

# decay ratio above which a sampled factor counts as non-decaying at the tail
_TAIL_RATIO = 1e-9


# ---------------------------------------------------------------------------
# grids and sampled functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Uniform square grid on [-L_box, L_box]^2 with n_pts points per axis."""

    L_box: float
    n_pts: int

    def __post_init__(self):
        if not self.L_box > 0:
            raise ValueError("L_box must be positive")
        if self.n_pts < 16:
            raise ValueError("n_pts must be at least 16")

    @property
    def h(self) -> float:
        return 2.0 * self.L_box / (self.n_pts - 1)

    @property
    def points(self) -> np.ndarray:
        return -self.L_box + self.h * np.arange(self.n_pts)

    def meshes(self) -> tuple[np.ndarray, np.ndarray]:
        """(X1, X2) with axis 0 = first coordinate, axis 1 = second."""
        p = self.points
        return p[:, None] + 0 * p[None, :], 0 * p[:, None] + p[None, :]


def default_grid(theta: float, n_pts: int = 128) -> Grid:
    """Box of half-width 8*sqrt(theta): Gaussian tails below 1e-27."""
    return Grid(8.0 * math.sqrt(theta), n_pts)


@dataclass
class SampledFunction:
    grid: Grid
    values: np.ndarray
    theta: float
    accuracy_warning: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.n_pts, self.grid.n_pts):
            raise ValueError(
                f"values shape {v.shape} does not match grid {self.grid.n_pts}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        self.values = v

    def integrate(self) -> complex:
        """Plane integral by the trapezoid rule (edge corrections are below
        machine precision for tail-decayed samples)."""
        return self.grid.h ** 2 * complex(self.values.sum())

    def conj(self) -> "SampledFunction":
        return SampledFunction(self.grid, self.values.conj(), self.theta)

    def decays_at(self, radius: float) -> bool:
        p = np.abs(self.grid.points)
        mask = (p[:, None] >= radius) | (p[None, :] >= radius)
        peak = float(np.abs(self.values).max())
        if peak == 0.0:
            return True
        return float(np.abs(self.values[mask]).max()) <= _TAIL_RATIO * peak


@dataclass(frozen=True)
class QuadratureSpec:
    rule: str = "trapezoid"
    n_nodes: int = 64
    tail_cut: float | None = None

    def __post_init__(self):
        if self.rule not in ("trapezoid", "gauss-hermite"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.n_nodes < 8:
            raise ValueError("n_nodes must be at least 8")

    def tail_radius(self, grid: Grid) -> float:
        return self.tail_cut if self.tail_cut is not None else 0.9 * grid.L_box


def sample(func, grid: Grid, theta: float) -> SampledFunction:
    """Sample a callable f(X1, X2) -> values on the grid."""
    x1, x2 = grid.meshes()
    return SampledFunction(grid, np.asarray(func(x1, x2), dtype=complex), theta)


def gaussian_ground(theta: float, grid: Grid) -> SampledFunction:
    """The normalized ground Gaussian 2*exp(-|x|^2/theta)."""
    return sample(lambda x1, x2: 2.0 * np.exp(-(x1 ** 2 + x2 ** 2) / theta), grid, theta)


def coordinate_function(which: str, theta: float, grid: Grid) -> SampledFunction:
    """Sampled coordinate combinations: x1, x2, xt1, xt2, a, abar."""
    x1, x2 = grid.meshes()
    table = {
        "x1": x1,
        "x2": x2,
        "xt1": -2.0 * x2 / theta,
        "xt2": 2.0 * x1 / theta,
        "a": (x1 + 1j * x2) / math.sqrt(2.0),
        "abar": (x1 - 1j * x2) / math.sqrt(2.0),
    }
    try:
        vals = table[which]
    except KeyError:
        raise ValueError(f"unknown coordinate function {which!r}")
    return SampledFunction(grid, vals.astype(complex), theta)


# ---------------------------------------------------------------------------
# grid derivatives
# ---------------------------------------------------------------------------

_FD8 = ((1, 4.0 / 5.0), (2, -1.0 / 5.0), (3, 4.0 / 105.0), (4, -1.0 / 280.0))


def _axis_derivative(values: np.ndarray, h: float, axis: int, method: str) -> np.ndarray:
    if method == "fft":
        n = values.shape[axis]
        k = 2.0 * math.pi * np.fft.fftfreq(n, d=h)
        shape = [1, 1]
        shape[axis] = n
        fhat = np.fft.fft(values, axis=axis)
        return np.fft.ifft(1j * k.reshape(shape) * fhat, axis=axis)
    if method == "fd8":
        out = np.zeros_like(values)
        for k, c in _FD8:
            out += c * (np.roll(values, -k, axis=axis) - np.roll(values, k, axis=axis))
        return out / h
    raise ValueError(f"unknown derivative method {method!r}")


def grid_derivative(f: SampledFunction, which: str, method: str = "fft") -> SampledFunction:
    """Grid derivative: which in {d1, d2, d, dbar}.

    The fft method treats the box as periodic; tails at the boundary are
    below machine precision for Gaussian-decayed samples, so the periodic
    error is negligible.  fd8 is an order-8 centered stencil kept as an
    independent check.
    """
    h = f.grid.h
    if which == "d1":
        vals = _axis_derivative(f.values, h, 0, method)
    elif which == "d2":
        vals = _axis_derivative(f.values, h, 1, method)
    elif which in ("d", "dbar"):
        sign = -1.0 if which == "d" else 1.0
        d1 = _axis_derivative(f.values, h, 0, method)
        d2 = _axis_derivative(f.values, h, 1, method)
        vals = (d1 + sign * 1j * d2) / math.sqrt(2.0)
    else:
        raise ValueError(f"unknown derivative {which!r}")
    return SampledFunction(f.grid, vals, f.theta)


# ---------------------------------------------------------------------------
# the 4-D quadrature star product
# ---------------------------------------------------------------------------

def moyal_star_quadrature(
    f: SampledFunction,
    g: SampledFunction,
    q: QuadratureSpec | None = None,
) -> SampledFunction:
    """Deformed product (f*g) by direct quadrature of its 4-D integral form.

    The v-integral is carried out first (it is a Fourier transform of g on
    the difference lattice), then the u-integral; both use the uniform box
    grid.  Cost is O(n_pts^4).  With the gauss-hermite rule the product is
    evaluated by Hermite nodes and spline interpolation instead (slower,
    used for cross-checks).
    """
    q = q or QuadratureSpec()
    if f.grid != g.grid:
        raise ValueError("mismatched grids")
    if not math.isclose(f.theta, g.theta, rel_tol=1e-12):
        raise ValueError("mismatched theta")
    radius = q.tail_radius(f.grid)
    # one decaying factor keeps the integrand decaying: warn only when both
    # factors are still large at the tail radius
    warn = not f.decays_at(radius) and not g.decays_at(radius)
    if q.rule == "gauss-hermite":
        out = _star_gauss_hermite(f, g, q)
    else:
        out = _star_lattice(f, g)
    out.accuracy_warning = warn
    return out


def _star_batch_lattice(fs: list[np.ndarray], g: np.ndarray, grid: Grid, theta: float) -> list[np.ndarray]:
    """Lattice star products f_k * g for several left factors at once."""
    n = grid.n_pts
    pts = grid.points
    h = grid.h
    n1 = n - 1
    kvals = h * (np.arange(2 * n - 1) - n1)
    two_over = 2.0 / theta

    # difference-lattice Fourier transform of g:
    #   G[a, b] = h^2 sum_{p,q} g[p,q] exp(-i*two_over*k_b*v_p) exp(i*two_over*k_a*v_q)
    e_left = np.exp(-1j * two_over * np.outer(kvals, pts))      # (2n-1, n) in (b, p)
    e_right = np.exp(1j * two_over * np.outer(pts, kvals))      # (n, 2n-1) in (q, a)
    big_g = (h ** 2) * (e_left @ g @ e_right).T                 # (a, b)

    p1 = np.exp(-1j * two_over * np.outer(pts, pts))            # (a, d): u1 * x2
    p2 = p1.conj()                                              # (b, c): u2 * x1

    pref = (h ** 2) / (math.pi * theta) ** 2
    nf = len(fs)
    results = [np.empty((n, n), dtype=complex) for _ in range(nf)]
    f_stack = np.stack(fs)                                      # (nf, a, b)
    stride = big_g.strides[1]
    s_stack = np.empty((nf, n, n), dtype=complex)
    for c in range(n):
        f1 = f_stack * p2[:, c][None, None, :]                  # (nf, a, b) * p2[b, c]
        for a in range(n):
            row = big_g[a - c + n1]
            # toep[d, b] = row[n1 + b - d]
            toep = as_strided(row[n1:], shape=(n, n), strides=(-stride, stride))
            s_stack[:, a, :] = (toep @ f1[:, a, :].T).T
        block = np.einsum("ad,kad->kd", p1, s_stack)
        for k in range(nf):
            results[k][c, :] = pref * block[k]
    return results


def _star_lattice(f: SampledFunction, g: SampledFunction) -> SampledFunction:
    vals = _star_batch_lattice([f.values], g.values, f.grid, f.theta)[0]
    return SampledFunction(f.grid, vals, f.theta)


def _star_gauss_hermite(f: SampledFunction, g: SampledFunction, q: QuadratureSpec) -> SampledFunction:
    """Hermite-node quadrature with both node sets in the absolute frame.

    With u = sqrt(theta) s and v = sqrt(theta) t the wedge phase splits as
    exp(2i s^t)·(x-dependent separable factors), so the node-node phase
    matrix is fixed and each output point costs two small matrix products.
    Node placement matches the Gaussian envelope of the function class;
    accuracy is limited by the spline interpolation of the samples.
    """
    from scipy.interpolate import RectBivariateSpline

    theta = f.theta
    grid = f.grid
    nodes, weights = np.polynomial.hermite.hermgauss(q.n_nodes)
    # nodes beyond the envelope support contribute ~e^-25 yet raise the
    # phase frequency the rule must resolve; drop them
    keep = np.abs(nodes) <= 5.0
    nodes, weights = nodes[keep], weights[keep]
    scale = math.sqrt(theta)
    pos = scale * nodes
    w = weights * np.exp(nodes ** 2)                      # compensated 1-D weights

    pts = grid.points

    def node_samples(vals):
        re = RectBivariateSpline(pts, pts, vals.real, kx=5, ky=5)
        im = RectBivariateSpline(pts, pts, vals.imag, kx=5, ky=5)
        return re(pos, pos) + 1j * im(pos, pos)

    ww = np.outer(w, w)
    wf = ww * node_samples(f.values)
    wg = ww * node_samples(g.values)
    p_phase = np.exp(2j * np.outer(nodes, nodes))         # exp(2i s1 t2)
    q_phase = p_phase.conj()                              # exp(-2i s2 t1)

    two_over = 2.0 / theta
    n_pts = grid.n_pts
    out = np.empty((n_pts, n_pts), dtype=complex)
    ph = np.exp(-1j * two_over * np.outer(pos, pts))       # (node, grid point)
    phc = ph.conj()
    for i in range(n_pts):                                 # x1 = pts[i]
        # u-factor: wf[a,b] exp(-i two_over (pos_a x2 - pos_b x1))
        left = wf * phc[:, i][None, :]
        a_batch = left[None, :, :] * ph.T[:, :, None]      # (x2, a, b)
        # v-factor: wg[c,d] exp(-i two_over (x1 pos_d - x2 pos_c))
        right = wg * ph[:, i][None, :]
        b_batch = right[None, :, :] * phc.T[:, :, None]    # (x2, c, d)
        mid = a_batch @ q_phase @ b_batch                  # (x2, a, d)
        out[i, :] = (mid * p_phase[None, :, :]).sum(axis=(1, 2)) / math.pi ** 2
    return SampledFunction(grid, out, theta)


# ---------------------------------------------------------------------------
# basis synthesis and projection
# ---------------------------------------------------------------------------

_BASIS_CACHE: dict[tuple, np.ndarray] = {}


def clear_basis_cache() -> None:
    _BASIS_CACHE.clear()
    _STACK_CACHE.clear()


def synthesize_fmn(m: int, n: int, theta: float, grid: Grid) -> SampledFunction:
    """Sample the oscillator transition function f_mn by ladder construction.

    Built from the ground Gaussian by repeated application of the exact
    linear-factor product reduction (a linear function star-multiplies as
    pointwise product plus (theta/2) times a derivative), normalized so the
    coefficient-space projection is the matrix unit e_mn.
    """
    if m < 0 or n < 0:
        raise ValueError("m, n must be nonnegative")
    vals = _basis_values(m, n, theta, grid)
    out = SampledFunction(grid, vals.copy(), theta)
    edge = np.abs(np.concatenate([
        vals[0, :], vals[-1, :], vals[:, 0], vals[:, -1]
    ]))
    peak = float(np.abs(vals).max())
    if peak > 0 and float(edge.max()) > 1e-8 * peak:
        raise ValueError(
            f"grid too small for f_{m}{n}: boundary magnitude "
            f"{float(edge.max()):.3e} vs peak {peak:.3e}"
        )
    return out


def _basis_values(m: int, n: int, theta: float, grid: Grid) -> np.ndarray:
    key = (grid.L_box, grid.n_pts, theta, m, n)
    if key in _BASIS_CACHE:
        return _BASIS_CACHE[key]
    if m == 0 and n == 0:
        x1, x2 = grid.meshes()
        vals = 2.0 * np.exp(-(x1 ** 2 + x2 ** 2) / theta)
    elif m > 0:
        prev = _basis_values(m - 1, n, theta, grid)
        f_prev = SampledFunction(grid, prev, theta)
        # abar * g = abar . g - (theta/2) d g   (then normalize the step)
        abar = coordinate_function("abar", theta, grid).values
        dg = grid_derivative(f_prev, "d").values
        vals = (abar * prev - 0.5 * theta * dg) / math.sqrt(theta * m)
    else:
        prev = _basis_values(m, n - 1, theta, grid)
        f_prev = SampledFunction(grid, prev, theta)
        # g * a = a . g - (theta/2) dbar g
        a_fn = coordinate_function("a", theta, grid).values
        dbg = grid_derivative(f_prev, "dbar").values
        vals = (a_fn * prev - 0.5 * theta * dbg) / math.sqrt(theta * n)
    # fix the norm so that projection returns a unit coefficient
    norm_sq = (grid.h ** 2) * float(np.sum(np.abs(vals) ** 2)) / (2.0 * math.pi * theta)
    if norm_sq > 0:
        vals = vals / math.sqrt(norm_sq)
    _BASIS_CACHE[key] = vals
    return vals


_STACK_CACHE: dict[tuple, np.ndarray] = {}


def _basis_stack(k: int, theta: float, grid: Grid) -> np.ndarray:
    """Stacked basis samples, shape (k, k, n_pts, n_pts)."""
    key = (k, theta, grid.L_box, grid.n_pts)
    if key in _STACK_CACHE:
        return _STACK_CACHE[key]
    stack = np.empty((k, k, grid.n_pts, grid.n_pts), dtype=complex)
    for m in range(k):
        for n in range(k):
            stack[m, n] = _basis_values(m, n, theta, grid)
    # keep at most a couple of stacks resident
    if len(_STACK_CACHE) > 2:
        _STACK_CACHE.clear()
    _STACK_CACHE[key] = stack
    return stack


def project_coefficients(f: SampledFunction, n_trunc: int) -> TruncatedElement:
    """Matrix-base coefficients a_mn = (1/2 pi theta) <f_mn, f> for m, n < N."""
    stack = _basis_stack(n_trunc, f.theta, f.grid)
    h2 = f.grid.h ** 2
    coeffs = h2 * np.einsum("mnxy,xy->mn", stack.conj(), f.values) / (2.0 * math.pi * f.theta)
    return TruncatedElement(coeffs, f.theta)


def synthesize_element(a: TruncatedElement, grid: Grid) -> SampledFunction:
    """Sample the function represented by a coefficient matrix."""
    stack = _basis_stack(a.trunc, a.theta, grid)
    vals = np.einsum("mn,mnxy->xy", a.coeffs, stack)
    return SampledFunction(grid, vals, a.theta)


# ---------------------------------------------------------------------------
# ladder calibration
# ---------------------------------------------------------------------------

_EXPECTED_OFFSETS = {
    "d": ((0, -1), (1, 0)),
    "dbar": ((-1, 0), (0, 1)),
    "x1_left": ((-1, 0), (1, 0)),
    "x2_left": ((-1, 0), (1, 0)),
    "x1_right": ((0, -1), (0, 1)),
    "x2_right": ((0, -1), (0, 1)),
}

_PHASE_CHOICES = (1.0 + 0j, -1.0 + 0j, 1j, -1j)


def ladder_calibration(
    theta: float,
    k_window: int,
    grid: Grid | None = None,
    q: QuadratureSpec | None = None,
    k_star: int | None = None,
    snap: bool = True,
) -> tuple[LadderTable, dict]:
    """Calibrate the ladder coefficient tables against the grid oracle.

    For each operator the action on sampled basis functions f_mn over the
    window m, n < k_window is computed on the grid (fft derivatives for the
    holomorphic derivative pair; honest 4-D quadrature products with the
    linear coordinate factors for the star multiplications), projected to
    coefficients, and the square of each band coefficient is fitted as a
    linear law in (m, n).  Fitted laws are snapped to the nearest integer
    structure; fit residual or snap distance above 1e-5 raises
    CalibrationError.  Returns (table, report).
    """
    if k_window > 12:
        raise ValueError("calibration window capped at 12")
    if k_window < 3:
        raise ValueError("calibration window must be at least 3")
    grid = grid or default_grid(theta)
    q = q or QuadratureSpec()
    k_star = k_star or min(k_window, 5)

    window = k_window + 1  # projection window includes shift targets
    report: dict = {"theta": theta, "k_window": k_window, "k_star": k_star,
                    "grid": {"L_box": grid.L_box, "n_pts": grid.n_pts}, "ops": {}}

    samples = _collect_samples(theta, k_window, k_star, grid, q, window)
    ops: dict[str, list[LadderTerm]] = {}
    worst_fit = 0.0
    worst_snap = 0.0
    for op, (coeff_maps, k_used) in samples.items():
        terms, op_report = _fit_op(op, coeff_maps, k_used, snap, theta)
        ops[op] = terms
        report["ops"][op] = op_report
        worst_fit = max(worst_fit, op_report["fit_residual"])
        worst_snap = max(worst_snap, op_report["snap_distance"])

    table = LadderTable(
        ops=ops,
        theta_ref=theta,
        fit_residual_max=worst_fit,
        snap_distance_max=worst_snap,
        window=k_window,
        meta={"grid": {"L_box": grid.L_box, "n_pts": grid.n_pts}},
    )
    if theta != 1.0:
        table = _rescale_table_to_unit_theta(table, theta)
    return table, report


def _collect_samples(theta, k_window, k_star, grid, q, window):
    """Per-op dict: (coefficient samples per source index, window used)."""
    out: dict[str, tuple[np.ndarray, int]] = {}

    # derivative pair from fft grid derivatives
    for op in ("d", "dbar"):
        maps = np.empty((k_window, k_window, window, window), dtype=complex)
        for m in range(k_window):
            for n in range(k_window):
                f = SampledFunction(grid, _basis_values(m, n, theta, grid), theta)
                df = grid_derivative(f, op)
                maps[m, n] = project_coefficients(df, window).coeffs
        out[op] = (maps, k_window)

    # star multiplications from the honest 4-D quadrature; the right action
    # is computed through the involution identity (f*g)^dag = g^dag * f^dag
    xt = {mu: coordinate_function(f"xt{mu}", theta, grid) for mu in (1, 2)}
    left_maps = {mu: np.empty((k_star, k_star, window, window), dtype=complex) for mu in (1, 2)}
    right_maps = {mu: np.empty((k_star, k_star, window, window), dtype=complex) for mu in (1, 2)}
    for m in range(k_star):
        for n in range(k_star):
            fmn = _basis_values(m, n, theta, grid)
            prods = _star_batch_lattice(
                [xt[1].values, xt[2].values], fmn, grid, theta
            )
            prods_conj = _star_batch_lattice(
                [xt[1].values, xt[2].values], fmn.conj(), grid, theta
            )
            for mu in (1, 2):
                left = SampledFunction(grid, prods[mu - 1], theta)
                left_maps[mu][m, n] = project_coefficients(left, window).coeffs
                right = SampledFunction(grid, prods_conj[mu - 1].conj(), theta)
                right_maps[mu][m, n] = project_coefficients(right, window).coeffs
    for mu in (1, 2):
        out[f"x{mu}_left"] = (left_maps[mu], k_star)
        out[f"x{mu}_right"] = (right_maps[mu], k_star)
    return out


def _fit_op(op: str, maps: np.ndarray, k_used: int, snap: bool, theta: float):
    """Fit sparse band laws from projected samples of one operator."""
    window = maps.shape[-1]
    scale = float(np.abs(maps).max())
    if scale == 0.0:
        raise CalibrationError(f"operator {op} produced no signal")

    offsets = _EXPECTED_OFFSETS[op]
    # sparsity: collect magnitude off the expected offsets
    spurious = 0.0
    for m in range(k_used):
        for n in range(k_used):
            allowed = {(m + dm, n + dn) for dm, dn in offsets}
            for p in range(window):
                for r in range(window):
                    if (p, r) not in allowed:
                        spurious = max(spurious, abs(maps[m, n, p, r]))
    terms = []
    op_report = {"offsets": [], "fit_residual": 0.0, "snap_distance": 0.0,
                 "spurious_fraction": spurious / scale}
    if spurious / scale > 1e-5:
        raise CalibrationError(
            f"calibration failure: {op} has off-band signal {spurious/scale:.2e}"
        )

    for dm, dn in offsets:
        rows = []
        vals = []
        for m in range(k_used):
            for n in range(k_used):
                p, r = m + dm, n + dn
                if 0 <= p < window and 0 <= r < window:
                    c = maps[m, n, p, r]
                    rows.append((1.0, float(m), float(n)))
                    vals.append(c)
        vals = np.asarray(vals)
        mags2 = np.abs(vals) ** 2
        design = np.asarray(rows)
        law, *_ = np.linalg.lstsq(design, mags2, rcond=None)
        pred = design @ law
        # residual measured on the coefficients themselves, relative to the
        # overall coefficient scale
        resid = float(
            np.abs(np.sqrt(np.clip(pred, 0.0, None)) - np.abs(vals)).max() / scale
        )
        # phase: constant over the window wherever the magnitude is resolved
        mask = np.abs(vals) > 1e-6 * scale
        phases = vals[mask] / np.abs(vals[mask])
        phase_mean = phases.mean()
        phase_mean /= abs(phase_mean)
        phase_spread = float(np.abs(phases - phase_mean).max()) if mask.any() else 0.0

        snap_phase = min(_PHASE_CHOICES, key=lambda p0: abs(p0 - phase_mean))
        # integer structure lives in the theta = 1 frame (laws carry 1/theta)
        law_unit = law * theta
        law_snapped_unit = np.round(law_unit)
        snap_dist = float(
            max(np.abs(law_unit - law_snapped_unit).max() / max(1.0, np.abs(law_unit).max()),
                abs(snap_phase - phase_mean), phase_spread)
        )
        use_law = law_snapped_unit / theta if snap else law
        use_phase = snap_phase if snap else phase_mean
        terms.append(LadderTerm(
            dm=dm, dn=dn, phase=complex(use_phase),
            const=float(use_law[0]), slope_m=float(use_law[1]), slope_n=float(use_law[2]),
        ))
        fit_resid = max(resid, phase_spread)
        op_report["offsets"].append({
            "dm": dm, "dn": dn,
            "law_raw_unit_theta": [float(v) for v in law_unit],
            "law_unit_theta": [float(v) for v in use_law * theta],
            "phase": [float(use_phase.real), float(use_phase.imag)],
            "fit_residual": fit_resid,
            "snap_distance": snap_dist,
        })
        op_report["fit_residual"] = max(op_report["fit_residual"], fit_resid)
        op_report["snap_distance"] = max(op_report["snap_distance"], snap_dist)
    if op_report["fit_residual"] > 1e-5 or op_report["snap_distance"] > 1e-5:
        raise CalibrationError(
            f"calibration failure: {op} fit residual "
            f"{op_report['fit_residual']:.2e}, snap {op_report['snap_distance']:.2e}"
        )
    return terms, op_report


def _rescale_table_to_unit_theta(table: LadderTable, theta: float) -> LadderTable:
    """Convert a table calibrated at ``theta`` to the theta = 1 reference.

    Coefficients carry an overall 1/sqrt(theta); the stored laws are the
    squared coefficients at theta = 1, so multiply the laws by theta.
    """
    ops = {
        name: [
            LadderTerm(t.dm, t.dn, t.phase, t.const * theta,
                       t.slope_m * theta, t.slope_n * theta)
            for t in terms
        ]
        for name, terms in table.ops.items()
    }
    return LadderTable(
        ops=ops, theta_ref=1.0,
        fit_residual_max=table.fit_residual_max,
        snap_distance_max=table.snap_distance_max,
        window=table.window, meta=table.meta,
    )


def save_table(table: LadderTable, path: str | Path) -> None:
    Path(path).write_text(json.dumps(table.to_json_dict(), indent=1, sort_keys=True))


# ---------------------------------------------------------------------------
# CSV dumps
# ---------------------------------------------------------------------------

def dump_csv(f: SampledFunction, path: str | Path) -> None:
    """Grid dump as rows x1, x2, re, im (row-major over the grid)."""
    pts = f.grid.points
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "re", "im"])
        for i in range(f.grid.n_pts):
            for j in range(f.grid.n_pts):
                v = f.values[i, j]
                writer.writerow([repr(pts[i]), repr(pts[j]), repr(v.real), repr(v.imag)])
