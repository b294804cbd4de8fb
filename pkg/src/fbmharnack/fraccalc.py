"""Riemann-Liouville integrals and the operators K_H, K_H^{-1} on a grid.

All operators use product integration: the singular power weight is
integrated exactly over each cell against a piecewise-constant (cell data)
or piecewise-linear (node data) interpolant of the smooth factor.

``kh_apply`` and ``kh_inverse_ac`` form the inverse pair for the *raw*
hypergeometric kernel (no ``sqrt(V_H)`` normalization); see
:func:`fbmharnack.fbm.volterra_scale`.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy.special import betainc, betaincc

from .errors import ContractError, DomainError
from .fbm import TimeGrid, cell_mean_matrix, check_hurst
from .specialfn import log_gamma

__all__ = [
    "SampledPath",
    "rl_integral",
    "kh_inverse_ac",
    "kh_apply",
    "cell_derivative",
    "inverse_constant",
]

NODES = "nodes"
CELLS = "cells"


@dataclass(frozen=True)
class SampledPath:
    """Samples of a function on a grid.

    ``at="nodes"`` means ``n + 1`` values at ``t_0..t_n``; ``at="cells"``
    means ``n`` values, one per cell ``[t_j, t_{j+1})``.  Leading axes are
    batch axes.
    """

    grid: TimeGrid
    values: np.ndarray
    at: str = NODES

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if self.at not in (NODES, CELLS):
            raise ContractError(f"at must be 'nodes' or 'cells', got {self.at!r}")
        want = self.grid.n + 1 if self.at == NODES else self.grid.n
        if vals.ndim == 0 or vals.shape[-1] != want:
            raise ContractError(f"expected {want} {self.at} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ContractError("sampled path has non-finite entries")
        object.__setattr__(self, "values", vals)

    def cell_values(self):
        """Cell values; node data are averaged over each cell."""
        if self.at == CELLS:
            return self.values
        return 0.5 * (self.values[..., :-1] + self.values[..., 1:])


def _check_alpha(alpha):
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


@lru_cache(maxsize=64)
def _rl_weights(alpha, grid, at):
    n = grid.n
    t = grid.nodes
    s = t[1:, None]  # target nodes 1..n
    lo = np.clip(s - t[None, :-1], 0.0, None)  # s - t_j
    hi = np.clip(s - t[None, 1:], 0.0, None)  # s - t_{j+1}
    m0 = (lo**alpha - hi**alpha) / alpha
    W = np.zeros((n + 1, n + 1 if at == NODES else n))
    scale = math.exp(-log_gamma(alpha))
    if at == CELLS:
        W[1:, :] = m0 * scale
        return W
    m1 = (lo ** (alpha + 1) - hi ** (alpha + 1)) / (alpha + 1)
    # linear interpolant on cell j: f_j + (f_{j+1} - f_j)(r - t_j)/dt
    slope = (lo * m0 - m1) / grid.dt
    W[1:, :-1] += (m0 - slope) * scale
    W[1:, 1:] += slope * scale
    return W


def rl_integral(alpha, f):
    """Left Riemann-Liouville integral ``I^alpha_{0+} f`` at the grid nodes.

    Cell data are treated as piecewise constant, node data as piecewise
    linear; either way the weight ``(s - r)^(alpha - 1)`` is integrated
    exactly.  Returns node samples.
    """
    alpha = _check_alpha(alpha)
    W = _rl_weights(alpha, f.grid, f.at)
    return SampledPath(f.grid, f.values @ W.T, NODES)


def inverse_constant(H):
    """``B(3/2 - H, 1/2 - H) / Gamma(1/2 - H) = Gamma(3/2 - H) / Gamma(2 - 2H)``."""
    H = check_hurst(H, allow_half=False)
    return math.exp(log_gamma(1.5 - H) - log_gamma(2.0 - 2.0 * H))


def _incomplete_diff(a, b, x_lo, x_hi):
    # I_{x_hi} - I_{x_lo}, using the complement where it is better conditioned
    upper = x_lo > 0.5
    return np.where(
        upper,
        betaincc(a, b, x_lo) - betaincc(a, b, x_hi),
        betainc(a, b, x_hi) - betainc(a, b, x_lo),
    )


@lru_cache(maxsize=64)
def _inverse_weights(H, grid):
    n = grid.n
    t = grid.nodes
    a, b = 1.5 - H, 0.5 - H
    s = t[1:, None]
    x_lo = np.minimum(t[None, :-1] / s, 1.0)
    x_hi = np.minimum(t[None, 1:] / s, 1.0)
    P = np.zeros((n + 1, n))
    P[1:, :] = _incomplete_diff(a, b, x_lo, x_hi) * (inverse_constant(H) * s ** (0.5 - H))
    return P


def kh_inverse_ac(u, H):
    """``(K_H^{-1} int_0^. u_r dr)(s)`` at the grid nodes, for ``H < 1/2``.

    Evaluates ``Gamma(1/2 - H)^{-1} s^{H - 1/2} int_0^s r^{1/2 - H}
    (s - r)^{-H - 1/2} u_r dr`` with ``u`` constant on each cell and the
    double-power weight integrated exactly (regularized incomplete Beta).
    The value at ``s = 0`` is 0.
    """
    H = check_hurst(H, allow_half=False)
    P = _inverse_weights(H, u.grid)
    return SampledPath(u.grid, u.cell_values() @ P.T, NODES)


def kh_apply(f, H, normalized=False):
    """``(K_H f)(t_i) = int_0^{t_i} K_H(t_i, s) f(s) ds`` with cell-averaged kernel.

    Uses the raw kernel unless ``normalized`` is set.
    """
    H = check_hurst(H)
    grid = f.grid
    K = cell_mean_matrix(H, grid, normalized)
    out = np.zeros(f.values.shape[:-1] + (grid.n + 1,))
    out[..., 1:] = (f.cell_values() @ K.T) * grid.dt
    return SampledPath(grid, out, NODES)


def cell_derivative(h):
    """Forward differences of node data, as cell values."""
    if h.at != NODES:
        raise ContractError("cell_derivative needs node samples")
    return SampledPath(h.grid, np.diff(h.values, axis=-1) / h.grid.dt, CELLS)
