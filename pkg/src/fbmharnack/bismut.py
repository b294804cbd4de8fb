"""Bismut-type derivative weight ``N_T`` and its finite-difference oracle.

``N_T = (y / T) int_0^T sqrt(V_H) (K_H^{-1} int_0^. phi_r dr)(s) dW_s`` with
``phi_r = 1 + d_2 b(r, X_r) (T - r)``; at ``H = 1/2`` this reduces to the
classical weight ``(y / T) int_0^T phi_s dW_s``.
"""

from dataclasses import dataclass

import numpy as np

from . import montecarlo as mc
from .errors import ContractError, NumericalError
from .fbm import WienerIncrements, check_hurst, synthesize, volterra_scale
from .fraccalc import CELLS, SampledPath, kh_inverse_ac
from .sde import euler_solve

__all__ = [
    "DerivativeEstimate",
    "phi_cells",
    "nt_weight",
    "nt_weight_bm",
    "nt_quadratic_variation",
    "nt_samples",
    "derivative_samples",
    "estimate_derivative",
    "fd_derivative",
    "shifted_solve",
    "shift_correction",
]

MIN_EPSILON = 1e-8


@dataclass(frozen=True)
class DerivativeEstimate:
    value: float
    se: float
    y: float
    x: float


def _is_half(H):
    return abs(H - 0.5) < 1e-12


def phi_cells(X, drift):
    """``1 + d_2 b(t_j, X_j) (T - t_j)`` at the left node of each cell."""
    grid = X.grid
    t = grid.nodes[:-1]
    return SampledPath(grid, 1.0 + drift.d2(t, X.X[..., :-1]) * (grid.T - t), CELLS)


def _integrand(X, drift, y, H):
    # node values whose left-point Ito sum against dW gives N_T
    grid = X.grid
    g = kh_inverse_ac(phi_cells(X, drift), H).values
    return volterra_scale(H) * (np.asarray(y, dtype=float)[..., None] / grid.T) * g[..., :-1]


def nt_weight(X, W, drift, y, H):
    """Derivative weight ``N_T`` for ``H < 1/2`` (left-point Ito sum)."""
    H = check_hurst(H, allow_half=False)
    out = np.sum(_integrand(X, drift, y, H) * W.dW, axis=-1)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite derivative weight")
    return float(out) if np.ndim(out) == 0 else out


def nt_weight_bm(X, W, drift, y):
    """Brownian weight ``(y/T) sum_i (1 + (T - s_i) d_2 b(s_i, X_i)) dW_i``."""
    phi = phi_cells(X, drift).values
    out = np.asarray(y, dtype=float) / X.grid.T * np.sum(phi * W.dW, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def nt_quadratic_variation(X, drift, y, H):
    """Pathwise ``<N>_T = sum_i g_i^2 dt`` of the weight's integrand."""
    if _is_half(check_hurst(H)):
        g = np.asarray(y, dtype=float)[..., None] / X.grid.T * phi_cells(X, drift).values
    else:
        g = _integrand(X, drift, y, H)
    return np.sum(g * g, axis=-1) * X.grid.dt


def _check_epsilon(epsilon):
    if not epsilon >= MIN_EPSILON:
        raise ContractError(f"epsilon must be at least {MIN_EPSILON:g}, got {epsilon}")


def derivative_samples(f, x, y, query, epsilon=None):
    """Per-path quantities on common Wiener paths.

    Keys: ``N`` (weight), ``qv`` (its quadratic variation), ``fN`` (when
    ``f`` is given) and ``fd`` (paired central difference, when ``epsilon``
    is given).
    """
    if epsilon is not None:
        _check_epsilon(epsilon)
    grid = query.grid
    half = _is_half(check_hurst(query.H))

    def fn(idx):
        W = WienerIncrements.generate(grid, query.seed, idx)
        B = synthesize(query.H, grid, W)
        X = euler_solve(x, query.drift, B)
        N = nt_weight_bm(X, W, query.drift, y) if half else nt_weight(X, W, query.drift, y, query.H)
        out = {"N": np.atleast_1d(N), "qv": nt_quadratic_variation(X, query.drift, y, query.H)}
        if f is not None:
            out["fN"] = f(X.X[:, -1]) * out["N"]
            if epsilon is not None:
                up = f(euler_solve(x + epsilon * y, query.drift, B).X[:, -1])
                down = f(euler_solve(x - epsilon * y, query.drift, B).X[:, -1])
                out["fd"] = (up - down) / (2.0 * epsilon)
        return out

    return mc.run_blocks(fn, query.n_paths, query.workers)


def nt_samples(x, y, query):
    """Per-path ``N_T`` and ``<N>_T`` from x in direction y."""
    return derivative_samples(None, x, y, query)


def estimate_derivative(f, x, y, query):
    """``D_y P_T f(x) = E[f(X_T^x) N_T]``."""
    value, se = mc.mean_se(derivative_samples(f, x, y, query)["fN"])
    return DerivativeEstimate(value, se, float(y), float(x))


def fd_derivative(f, x, y, epsilon, query):
    """Central difference ``(P_T f(x + eps y) - P_T f(x - eps y)) / (2 eps)``.

    Both starts use the same Wiener paths; the SE comes from the paired
    per-path differences.
    """
    _check_epsilon(epsilon)
    grid = query.grid
    lo, hi = x - epsilon * y, x + epsilon * y

    def fn(idx):
        W = WienerIncrements.generate(grid, query.seed, idx)
        B = synthesize(query.H, grid, W)
        up = f(euler_solve(hi, query.drift, B).X[:, -1])
        down = f(euler_solve(lo, query.drift, B).X[:, -1])
        return {"d": (up - down) / (2.0 * epsilon)}

    out = mc.run_blocks(fn, query.n_paths, query.workers)
    value, se = mc.mean_se(out["d"])
    return DerivativeEstimate(value, se, float(y), float(x))


def shifted_solve(X, drift, B, y, epsilon):
    """Euler scheme for the shifted equation with the drift frozen at X.

    ``dX^e = (b(t, X_t) - eps y / T) dt + dB``, ``X^e_0 = X_0 + eps y``, so
    that ``X^e_t - X_t = (T - t) eps y / T``.
    """
    grid = X.grid
    t, dt = grid.nodes, grid.dt
    dB = np.diff(B.values, axis=-1)
    out = np.empty(X.X.shape)
    out[..., 0] = X.X[..., 0] + epsilon * y
    for i in range(grid.n):
        out[..., i + 1] = out[..., i] + (drift(t[i], X.X[..., i]) - epsilon * y / grid.T) * dt + dB[..., i]
    return out


def shift_correction(X, Xe, drift, y, epsilon):
    """``eta_t = b(t, X_t) - b(t, X^e_t) - eps y / T`` on the cells.

    Rewrites the shifted equation as ``dX^e = b(t, X^e) dt + dB + eta dt``.
    """
    grid = X.grid
    t = grid.nodes[:-1]
    vals = drift(t, X.X[..., :-1]) - drift(t, Xe[..., :-1]) - epsilon * y / grid.T
    return SampledPath(grid, vals, CELLS)
