"""Change-of-measure weight for the coupling drift.

With ``B = int K dW`` (standard-fBm kernel) the shifted path ``B + int u``
is ``int K dW~`` for ``dW~ = dW + g ds`` where ``g = sqrt(V_H) *
K_H^{-1}(int u)`` and ``K_H^{-1}`` is the raw-kernel inverse of
:func:`fbmharnack.fraccalc.kh_inverse_ac`.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ContractError, DomainError, NumericalError
from .fbm import check_hurst, volterra_scale
from .fraccalc import NODES, SampledPath, kh_inverse_ac

__all__ = [
    "GirsanovWeight",
    "girsanov_integrand",
    "weight",
    "novikov_check",
    "moment_bound",
]


@dataclass(frozen=True)
class GirsanovWeight:
    """``M_T = -sum g dW``, ``qv = sum g^2 dt`` and ``R_T = exp(M_T - qv/2)``."""

    M_T: np.ndarray
    qv: np.ndarray
    R_T: np.ndarray


def girsanov_integrand(u, H):
    """``g(s_i) = sqrt(V_H) (K_H^{-1} int_0^. u_r dr)(s_i)`` at the nodes.

    At ``H = 1/2`` the kernel is the identity and ``g`` is ``u`` itself
    (cell value ``j`` placed at node ``j``).
    """
    if abs(check_hurst(H) - 0.5) < 1e-12:
        vals = np.zeros(u.values.shape[:-1] + (u.grid.n + 1,))
        vals[..., :-1] = u.cell_values()
        return SampledPath(u.grid, vals, NODES)
    g = kh_inverse_ac(u, H)
    return SampledPath(g.grid, volterra_scale(H) * g.values, NODES)


def weight(g, W):
    """Left-point Ito sum against the Wiener increments.

    ``g`` holds node values; node ``j`` multiplies ``dW_j`` for ``j < n``.
    """
    if g.at != NODES:
        raise ContractError("girsanov integrand must be sampled at the nodes")
    dW = np.asarray(W.dW, dtype=float)
    if dW.shape[-1] != g.grid.n:
        raise ContractError(f"grid has {g.grid.n} steps but W has {dW.shape[-1]} increments")
    left = g.values[..., :-1]
    with np.errstate(over="ignore", invalid="ignore"):
        M = -np.sum(left * dW, axis=-1)
        qv = np.sum(left * left, axis=-1) * g.grid.dt
        R = np.exp(M - 0.5 * qv)
    if not all(np.all(np.isfinite(v)) for v in (M, qv, R)):
        raise NumericalError("non-finite Girsanov weight")
    return GirsanovWeight(M, qv, R)


def novikov_check(g, C, dist):
    """Pathwise ``qv / 2 <= C dist^2``.

    Returns ``(ok, margin)`` with ``margin = C dist^2 - qv / 2``; both are
    arrays when ``g`` holds a batch.
    """
    if C < 0:
        raise DomainError(f"constant must be nonnegative, got {C}")
    left = g.values[..., :-1]
    qv = np.sum(left * left, axis=-1) * g.grid.dt
    margin = C * np.asarray(dist, dtype=float) ** 2 - 0.5 * qv
    ok = margin >= 0
    if np.ndim(margin) == 0:
        return bool(ok), float(margin)
    return ok, margin


def moment_bound(alpha, C, dist):
    """Upper bound ``exp(alpha (alpha - 1) C dist^2)`` for ``E R_T^alpha``."""
    if not alpha >= 1:
        raise DomainError(f"moment order must be >= 1, got {alpha}")
    return math.exp(alpha * (alpha - 1.0) * C * dist**2)
