"""Volterra representation of fractional Brownian motion for H <= 1/2.

The kernel

    K_H(t, s) = (t - s)**(H - 1/2) / Gamma(H + 1/2) * 2F1(H - 1/2, 1/2 - H; H + 1/2; 1 - t/s)

generates a Gaussian process whose covariance is ``V_H * R_H(t, s)`` with

    V_H = Gamma(2 - 2H) cos(pi H) / (pi H (1 - 2H)).

By default every kernel function here divides by ``sqrt(V_H)`` so that the
synthesized process is standard fBm, ``E[B_t B_s] = R_H(t, s)``.  The
Riemann-Liouville operators in :mod:`fbmharnack.fraccalc` are the inverse
pair of the *unnormalized* kernel; :func:`volterra_scale` converts between
the two conventions.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy import integrate
from scipy.special import roots_jacobi, roots_legendre

from . import rng as _rng
from .errors import ContractError, DomainError, NumericalError
from .specialfn import gauss_2f1, log_gamma

__all__ = [
    "TimeGrid",
    "WienerIncrements",
    "FbmPath",
    "check_hurst",
    "variance_factor",
    "volterra_scale",
    "covariance",
    "kernel",
    "kernel_dt",
    "kernel_inner",
    "volterra_operator",
    "cell_mean_matrix",
    "detail_count",
    "synthesize",
    "increment_covariance",
    "cholesky_sample",
    "cholesky_paths",
    "kstar_apply",
    "kstar_inner",
]

DEFAULT_BAND = 4
_HALF_TOL = 1e-12


def check_hurst(H, allow_half=True):
    """Validate a Hurst parameter; returns it as a float."""
    H = float(H)
    upper_ok = H <= 0.5 if allow_half else H < 0.5
    if not (0.0 < H and upper_ok):
        bound = "(0, 1/2]" if allow_half else "(0, 1/2)"
        raise DomainError(f"Hurst parameter must lie in {bound}, got {H}")
    return H


def _is_half(H):
    return abs(H - 0.5) < _HALF_TOL


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i T / n`` on ``[0, T]``."""

    T: float
    n: int

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError(f"time horizon must be positive, got {self.T}")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"step count must be a positive integer, got {self.n}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "n", int(self.n))

    @property
    def dt(self):
        return self.T / self.n

    @property
    def nodes(self):
        return np.arange(self.n + 1) * self.T / self.n

    @property
    def midpoints(self):
        return (np.arange(self.n) + 0.5) * self.T / self.n


@dataclass(frozen=True)
class WienerIncrements:
    """Cell increments of the driving Wiener process.

    ``dW`` has shape ``(n,)`` for one path or ``(m, n)`` for a batch, with
    variance ``T / n`` per entry.  ``detail`` optionally holds standard
    normals that resolve, inside each cell, the part of the Wiener integral
    against the kernel that is orthogonal to the cell increment.
    """

    seed: int
    path_index: object
    dW: np.ndarray
    detail: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not np.all(np.isfinite(self.dW)):
            raise NumericalError("non-finite Wiener increment")

    @property
    def n(self):
        return self.dW.shape[-1]

    @classmethod
    def generate(cls, grid, seed, path_index, band=DEFAULT_BAND, detail=True):
        """Draw increments for one path index or an array of them."""
        paths = np.atleast_1d(np.asarray(path_index, dtype=np.int64))
        dW = _rng.normals(seed, paths, _rng.WIENER, grid.n) * math.sqrt(grid.dt)
        extra = None
        if detail:
            extra = _rng.normals(seed, paths, _rng.DETAIL, detail_count(grid.n, band))
        if np.ndim(path_index) == 0:
            dW = dW[0]
            extra = None if extra is None else extra[0]
        return cls(int(seed), path_index, dW, extra)


@dataclass(frozen=True)
class FbmPath:
    """fBm values at the grid nodes; ``values[..., 0] == 0``."""

    H: float
    grid: TimeGrid
    values: np.ndarray


def variance_factor(H):
    """``V_H``: variance at t = 1 of the process built from the raw kernel."""
    H = check_hurst(H)
    if _is_half(H):
        return 1.0
    return math.exp(log_gamma(2.0 - 2.0 * H)) * math.cos(math.pi * H) / (math.pi * H * (1.0 - 2.0 * H))


def volterra_scale(H):
    """``sqrt(V_H)``; raw kernel = volterra_scale(H) * standard-fBm kernel."""
    return math.sqrt(variance_factor(H))


def covariance(H, t, s):
    """fBm covariance ``(t^2H + s^2H - |t - s|^2H) / 2``."""
    H = check_hurst(H)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < 0):
        raise DomainError("covariance needs nonnegative times")
    out = 0.5 * (t ** (2 * H) + s ** (2 * H) - np.abs(t - s) ** (2 * H))
    return float(out) if out.ndim == 0 else out


def _prefactor(H, normalized):
    c = math.exp(-log_gamma(H + 0.5))
    if normalized:
        c /= volterra_scale(H)
    return c


def _kernel_values(H, t, s, normalized=True):
    """Kernel on arrays with 0 < s < t assumed."""
    t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    c = _prefactor(H, normalized)
    if _is_half(H):
        return np.full(t.shape, c)
    f = gauss_2f1(H - 0.5, 0.5 - H, H + 0.5, np.atleast_1d(1.0 - t / s)).reshape(t.shape)
    return c * (t - s) ** (H - 0.5) * f


def _check_pairs(t, s):
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)) or np.any(~(s < t)):
        raise DomainError("kernel is defined for 0 < s < t")
    return t, s


def kernel(H, t, s, normalized=True):
    """Volterra kernel ``K_H(t, s)`` for ``0 < s < t``.

    With ``normalized=False`` the raw hypergeometric form is returned.
    """
    H = check_hurst(H)
    t, s = _check_pairs(t, s)
    out = _kernel_values(H, t, s, normalized)
    return float(out) if out.ndim == 0 else out


def kernel_dt(H, t, s, normalized=True):
    """Partial derivative of the kernel in its first argument.

    Closed form ``(H - 1/2)/Gamma(H + 1/2) (s/t)^(1/2 - H) (t - s)^(H - 3/2)``
    (divided by ``sqrt(V_H)`` when normalized).
    """
    H = check_hurst(H)
    t, s = _check_pairs(t, s)
    out = (H - 0.5) * _prefactor(H, normalized) * (s / t) ** (0.5 - H) * (t - s) ** (H - 1.5)
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def kernel_inner(H, t, s, normalized=True):
    """``int_0^{t ^ s} K(t, r) K(s, r) dr`` by adaptive algebraic-weight quadrature.

    The ``r^(2H-1)`` singularity at 0 and the ``(m - r)^(H-1/2)`` one at the
    upper limit are taken into the quadrature weight.
    """
    H = check_hurst(H)
    t, s = float(t), float(s)
    if t <= 0 or s <= 0:
        raise DomainError("kernel_inner needs positive times")
    m = min(t, s)
    if _is_half(H):
        return m * _prefactor(H, normalized) ** 2
    e0 = 2 * H - 1
    e1 = 2 * H - 1 if t == s else H - 0.5

    def reduced(r):
        # QAWS samples the endpoints; the reduced integrand is continuous there
        r = min(max(r, m * 1e-15), m * (1.0 - 1e-15))
        k = _kernel_values(H, np.array([t, s]), np.array([r, r]), normalized)
        return k[0] * k[1] * r ** (-e0) * (m - r) ** (-e1)

    val, _ = integrate.quad(reduced, 0.0, m, weight="alg", wvar=(e0, e1), epsabs=0.0, epsrel=1e-10, limit=200)
    return val


# --- cell quadrature -------------------------------------------------------


@lru_cache(maxsize=None)
def _jacobi_rule(m, e_left, e_right):
    # weight (1 - x)^e_right (1 + x)^e_left on [-1, 1]
    if e_left == 0 and e_right == 0:
        x, w = roots_legendre(m)
    else:
        x, w = roots_jacobi(m, e_right, e_left)
    return x, w


def _rule(a, b, e_left=0.0, e_right=0.0, m=16):
    """Nodes and effective weights on [a, b].

    ``sum(w * f(x))`` integrates ``f`` whose endpoint behaviour is
    ``(x - a)^e_left`` and ``(b - x)^e_right`` times a smooth factor.
    ``a`` and ``b`` may be arrays (one rule per interval, last axis = nodes).
    """
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    xi, wi = _jacobi_rule(m, float(e_left), float(e_right))
    h = 0.5 * (b - a)
    x = a + h * (1.0 + xi)
    w = wi * h ** (1.0 + e_left + e_right)
    if e_left:
        w = w * (h * (1.0 + xi)) ** (-e_left)
    if e_right:
        w = w * (h * (1.0 - xi)) ** (-e_right)
    return x, w


def _graded_left(b, e_left, e_right=0.0, m=12, levels=10):
    """Rule on [0, b] singular at 0, geometric grading toward the singularity.

    ``e_right`` applies to the top dyadic piece [b/2, b] only.
    """
    xs, ws = [], []
    hi = b
    for k in range(levels):
        lo = hi / 2.0
        x, w = _rule(lo, hi, 0.0, e_right if k == 0 else 0.0, m)
        xs.append(x)
        ws.append(w)
        hi = lo
    x, w = _rule(0.0, hi, e_left, 0.0, m)
    xs.append(x)
    ws.append(w)
    return np.concatenate(xs, axis=-1), np.concatenate(ws, axis=-1)


def _raw(H, t, s, normalized):
    return _kernel_values(H, t, s, normalized)


def detail_count(n, band=DEFAULT_BAND):
    """Number of detail normals per path for an n-step grid."""
    return n + sum(min(band, n - j) for j in range(1, n))


@lru_cache(maxsize=32)
def cell_mean_matrix(H, grid, normalized=True, m=16):
    """Lower-triangular ``(n, n)`` matrix of cell-averaged kernel values.

    Entry ``[i - 1, j]`` is ``(1/dt) int_{t_j}^{t_{j+1}} K(t_i, s) ds`` for
    ``j < i``; singular cells use Gauss-Jacobi rules.
    """
    H = check_hurst(H)
    n, dt, t = grid.n, grid.dt, grid.nodes
    out = np.zeros((n, n))
    if _is_half(H):
        out[np.tril_indices(n)] = _prefactor(H, normalized)
        return out
    norm = normalized
    e = H - 0.5
    # cells 1 .. i-2: regular
    ii, jj = np.tril_indices(n, k=-1)  # row ii holds node ii + 1; cells jj <= ii - 1
    rows, cells = ii + 1, jj
    keep = cells >= 1
    rows, cells = rows[keep], cells[keep]
    if rows.size:
        x, w = _rule(t[cells], t[cells + 1], 0.0, 0.0, m)
        vals = _raw(H, t[rows][:, None], x, norm)
        out[rows - 1, cells] = (vals * w).sum(axis=-1) / dt
    # diagonal-adjacent cells j = i-1 >= 1: singular at the right end
    j = np.arange(1, n)
    x, w = _rule(t[j], t[j + 1], 0.0, e, m)
    vals = _raw(H, t[j + 1][:, None], x, norm)
    out[j, j] = (vals * w).sum(axis=-1) / dt
    # cell 0: singular at 0 for every row, and at dt for row 1
    x, w = _graded_left(dt, e, 0.0, m=m)
    rows = np.arange(2, n + 1)
    if rows.size:
        vals = _raw(H, t[rows][:, None], x[None, :], norm)
        out[rows - 1, 0] = (vals * w).sum(axis=-1) / dt
    x, w = _graded_left(dt, e, e, m=m)
    out[0, 0] = (_raw(H, np.full_like(x, t[1]), x, norm) * w).sum() / dt
    return out


class VolterraOperator:
    """Discretized Volterra map from Wiener data to fBm values at the nodes.

    ``cell_mean[i - 1, j] = (1/dt) int_{cell j} K(t_i, s) ds`` for j < i.
    ``detail[i - 1, :]`` maps the detail normals to the exact within-cell
    residual of ``int_{cell j} K(t_i, s) dW_s`` given ``dW_j``, kept for
    cell 0 (every row) and for the ``band`` rows just above each other cell.
    """

    def __init__(self, H, grid, band=DEFAULT_BAND, normalized=True, m=16):
        self.H = H
        self.grid = grid
        self.band = band
        self.normalized = normalized
        n = grid.n
        self.cell_mean = cell_mean_matrix(H, grid, normalized, m)
        if _is_half(H):
            self.detail = np.zeros((n, detail_count(n, band)))
        else:
            self.detail = self._build_detail(m)

    def _gram_cell0(self, m):
        """Gram matrix of (1, K(t_1,.), ..., K(t_n,.)) over cell 0."""
        H, g, norm = self.H, self.grid, self.normalized
        n, dt, t = g.n, g.dt, g.nodes
        e = H - 0.5
        G = np.empty((n + 1, n + 1))
        G[0, 0] = dt
        G[0, 1:] = G[1:, 0] = self.cell_mean[:, 0] * dt
        # kernel products: left exponent 2H - 1; right exponent by row-1 count
        for k_sing, e_right in ((0, 0.0), (1, e), (2, 2 * e)):
            x, w = _graded_left(dt, 2 * e, e_right, m=m)
            F = _raw(H, t[1:, None], x[None, :], norm)  # (n, nodes)
            P = (F * w) @ F.T
            if k_sing == 0:
                G[2:, 2:] = P[1:, 1:]
            elif k_sing == 1:
                G[1, 2:] = G[2:, 1] = P[0, 1:]
            else:
                G[1, 1] = P[0, 0]
        return G

    def _gram_band(self, m):
        """Gram blocks for cells 1..n-1 over functions (1, K(t_{j+1},.), ...)."""
        H, g, norm, band = self.H, self.grid, self.normalized, self.band
        n, dt, t = g.n, g.dt, g.nodes
        e = H - 0.5
        j = np.arange(1, n)
        offs = np.arange(1, band + 1)
        rows = j[:, None] + offs[None, :]  # (n-1, band)
        valid = rows <= n
        rows_c = np.minimum(rows, n)
        out = {}
        for e_right in (0.0, e, 2 * e):
            x, w = _rule(t[j], t[j + 1], 0.0, e_right, m)  # (n-1, m)
            F = _raw(H, t[rows_c][:, :, None], x[:, None, :], norm)  # (n-1, band, m)
            F = np.where(valid[:, :, None], F, 0.0)
            ones = np.ones((j.size, 1, m))
            F1 = np.concatenate([ones, F], axis=1)
            out[e_right] = np.einsum("jam,jbm,jm->jab", F1, F1, w)
        # exponent class of entry (a, b): count of index 1 (row j+1) among a, b
        cls = (np.arange(band + 1) == 1).astype(int)
        count = cls[:, None] + cls[None, :]
        G = np.where(count == 0, out[0.0], np.where(count == 1, out[e], out[2 * e]))
        return G, valid

    @staticmethod
    def _residual_factor(G, dt):
        g = G[1:, 0]
        S = G[1:, 1:] - np.outer(g, g) / dt
        S = 0.5 * (S + S.T)
        lam, vec = np.linalg.eigh(S)
        return vec * np.sqrt(np.clip(lam, 0.0, None))

    def _build_detail(self, m):
        g = self.grid
        n, dt = g.n, g.dt
        D = np.zeros((n, detail_count(n, self.band)))
        D[:, :n] = self._residual_factor(self._gram_cell0(m), dt)
        if n > 1:
            G, valid = self._gram_band(m)
            col = n
            for idx in range(n - 1):
                jcell = idx + 1
                k = int(valid[idx].sum())
                L = self._residual_factor(G[idx][: k + 1, : k + 1], dt)
                D[jcell : jcell + k, col : col + k] = L
                col += k
        return D

    def apply(self, W):
        """fBm node values (leading axes preserved) from WienerIncrements."""
        dW = np.asarray(W.dW, dtype=float)
        vals = dW @ self.cell_mean.T
        if W.detail is not None and not _is_half(self.H):
            detail = np.asarray(W.detail, dtype=float)
            if detail.shape[-1] != self.detail.shape[1]:
                raise ContractError(
                    f"detail has {detail.shape[-1]} normals, operator expects {self.detail.shape[1]}"
                )
            vals = vals + detail @ self.detail.T
        out = np.zeros(dW.shape[:-1] + (dW.shape[-1] + 1,))
        out[..., 1:] = vals
        return out


@lru_cache(maxsize=32)
def volterra_operator(H, grid, band=DEFAULT_BAND, normalized=True):
    """Cached :class:`VolterraOperator` for ``(H, grid, band)``."""
    return VolterraOperator(check_hurst(H), grid, band, normalized)


def synthesize(H, grid, W, band=DEFAULT_BAND):
    """fBm path at the grid nodes from Wiener increments.

    ``values[i] = sum_{j<i} Kbar_ij dW_j`` plus, when ``W.detail`` is
    present, the exact within-cell residual.  Linear in ``(dW, detail)``.
    """
    H = check_hurst(H)
    if W.dW.shape[-1] != grid.n:
        raise ContractError(f"grid has {grid.n} steps but W has {W.dW.shape[-1]} increments")
    values = volterra_operator(H, grid, band).apply(W)
    return FbmPath(H, grid, values)


def increment_covariance(H, grid):
    """Covariance matrix of the n fBm increments on the grid."""
    H = check_hurst(H)
    k = np.arange(grid.n)
    lag = np.abs(k[:, None] - k[None, :]).astype(float)
    h2 = 2 * H
    C = 0.5 * (np.abs(lag + 1) ** h2 + np.abs(lag - 1) ** h2 - 2 * lag**h2)
    return C * grid.dt**h2


def _cholesky_factor(C):
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-12 * float(np.max(np.diag(C)))
    try:
        return np.linalg.cholesky(C + jitter * np.eye(C.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("Cholesky factorization of the increment covariance failed") from exc


def cholesky_sample(H, grid, rng, n_paths=None):
    """Exact-in-distribution fBm sample at the nodes.

    ``rng`` is a ``numpy.random.Generator`` (``n_paths`` paths, or a single
    path when ``n_paths`` is None) or a :class:`fbmharnack.rng.PathStream`.
    """
    H = check_hurst(H)
    L = _cholesky_factor(increment_covariance(H, grid))
    if isinstance(rng, _rng.PathStream):
        z = np.atleast_2d(rng.standard_normal(grid.n))
        single = rng.scalar
    else:
        single = n_paths is None
        z = rng.standard_normal((1 if single else n_paths, grid.n))
    inc = z @ L.T
    values = np.zeros(inc.shape[:-1] + (grid.n + 1,))
    values[..., 1:] = np.cumsum(inc, axis=-1)
    return FbmPath(H, grid, values[0] if single else values)


def cholesky_paths(H, grid, seed, path_index):
    """Batched exact sampler keyed like :class:`WienerIncrements`.

    Path ``k`` uses the counter-based stream ``(seed, k, CHOLESKY)``.
    """
    H = check_hurst(H)
    L = _cholesky_factor(increment_covariance(H, grid))
    z = _rng.normals(seed, np.atleast_1d(path_index), _rng.CHOLESKY, grid.n)
    values = np.zeros((z.shape[0], grid.n + 1))
    values[:, 1:] = np.cumsum(z @ L.T, axis=-1)
    return FbmPath(H, grid, values)


# --- adjoint operator K_H^* ------------------------------------------------


def _jump_coefficients(phi):
    phi = np.asarray(phi, dtype=float)
    nxt = np.append(phi[1:], 0.0)
    return phi - nxt  # c_k for node k = 1..n stored at index k-1


def kstar_apply(H, grid, phi, points=None, normalized=True):
    """``(K_H^* phi)(s)`` for a step function with cell values ``phi``.

    The r-integral telescopes exactly over each cell, giving
    ``sum_{k: t_k > s} (phi_{k-1} - phi_k) K(t_k, s)`` with ``phi_n = 0``.
    Evaluated at the cell midpoints unless ``points`` are given.
    """
    H = check_hurst(H)
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (grid.n,):
        raise ContractError(f"phi must have {grid.n} cell values")
    s = grid.midpoints if points is None else np.asarray(points, dtype=float)
    if np.any(s <= 0) or np.any(s >= grid.T):
        raise DomainError("kstar_apply is evaluated on (0, T)")
    c = _jump_coefficients(phi)
    t = grid.nodes[1:]
    out = np.zeros(s.shape)
    for k in np.flatnonzero(c):
        mask = t[k] > s
        if mask.any():
            out[mask] += c[k] * _kernel_values(H, t[k], s[mask], normalized)
    return out


def kstar_inner(H, grid, phi, psi, normalized=True, m=16):
    """``<K^* phi, K^* psi>`` in L^2[0, T] by cell-wise singular quadrature."""
    H = check_hurst(H)
    cphi = _jump_coefficients(phi)
    cpsi = _jump_coefficients(psi)
    n, t, dt = grid.n, grid.nodes, grid.dt
    e = H - 0.5
    total = 0.0

    def parts(x, j):
        # values of the singular (row j+1) and regular parts at nodes x
        ks = np.arange(j + 1, n)  # node index k+1 > j+1
        sing_phi = cphi[j] * _kernel_values(H, t[j + 1], x, normalized)
        sing_psi = cpsi[j] * _kernel_values(H, t[j + 1], x, normalized)
        if ks.size:
            K = _kernel_values(H, t[ks + 1][:, None], x[None, :], normalized)
            reg_phi = cphi[ks] @ K
            reg_psi = cpsi[ks] @ K
        else:
            reg_phi = reg_psi = np.zeros_like(x)
        return sing_phi, reg_phi, sing_psi, reg_psi

    for j in range(n):
        if j == 0:
            rules = {k: _graded_left(dt, 2 * e, k * e, m=12) for k in (0, 1, 2)}
        else:
            rules = {k: _rule(t[j], t[j + 1], 0.0, k * e, m) for k in (0, 1, 2)}
        x, w = rules[2]
        sp, _, sq, _ = parts(x, j)
        total += np.sum(w * sp * sq)
        x, w = rules[1]
        sp, rp, sq, rq = parts(x, j)
        total += np.sum(w * (sp * rq + rp * sq))
        x, w = rules[0]
        _, rp, _, rq = parts(x, j)
        total += np.sum(w * rp * rq)
    return float(total)
