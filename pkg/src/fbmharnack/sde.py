"""Euler scheme for ``dX = b(t, X) dt + dB^H`` and the coupled pair (X, Y).

Everything is vectorized over a leading path axis: ``B.values`` may be a
single path ``(n + 1,)`` or a batch ``(m, n + 1)``.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ContractError, DomainError, NumericalError
from .fbm import FbmPath, TimeGrid
from .fraccalc import CELLS, NODES, SampledPath

__all__ = [
    "DriftSpec",
    "SolutionPath",
    "CoupledPaths",
    "euler_solve",
    "eta",
    "eta_schedule",
    "coupled_solve",
    "contraction_defect",
    "VARIANTS",
]

FAMILIES = ("linear", "sine", "tanh")
VARIANTS = ("thm31", "rem31")


@dataclass(frozen=True)
class DriftSpec:
    """Drift ``b(t, x) = a * phi(x) + c`` with ``phi`` in {x, sin x, tanh x}.

    Both the Lipschitz constant ``K`` and the derivative bound ``Kbar``
    equal ``|a|``.
    """

    family: str = "linear"
    a: float = -1.0
    c: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown drift family {self.family!r}; expected one of {FAMILIES}")
        for name in ("a", "c"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise DomainError(f"drift parameter {name} must be finite")
            object.__setattr__(self, name, v)

    @property
    def K(self):
        return abs(self.a)

    @property
    def Kbar(self):
        return abs(self.a)

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.family == "linear":
            return self.a * x + self.c
        if self.family == "sine":
            return self.a * np.sin(x) + self.c
        return self.a * np.tanh(x) + self.c

    def d2(self, t, x):
        """Analytic derivative in the state variable."""
        x = np.asarray(x, dtype=float)
        if self.family == "linear":
            return np.full(x.shape, self.a)
        if self.family == "sine":
            return self.a * np.cos(x)
        return self.a / np.cosh(x) ** 2


@dataclass(frozen=True)
class SolutionPath:
    """Euler solution at the grid nodes; ``X[..., 0] == x``."""

    grid: TimeGrid
    X: np.ndarray
    x: object


@dataclass(frozen=True)
class CoupledPaths:
    """X from x, Y from y with the coupling drift.

    ``tau_index`` is the first node where the paths are identified
    (``n + 1`` if they never were).  ``u`` holds the drift applied on each
    cell and ``gap_at_detection`` the unidentified gap ``|X - Y|`` at
    ``tau_index`` (0 when never coupled or when x = y).
    """

    X: SolutionPath
    Y: SolutionPath
    tau_index: np.ndarray
    u: SampledPath
    eta: SampledPath
    gap_at_detection: np.ndarray

    @property
    def coupled(self):
        return self.tau_index <= self.X.grid.n


def _check_finite(arr, step):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite state at step {step}", step=step)


def euler_solve(x0, drift, B):
    """``X[i+1] = X[i] + b(t_i, X[i]) dt + (B[i+1] - B[i])``."""
    grid = B.grid
    dB = np.diff(B.values, axis=-1)
    t, dt = grid.nodes, grid.dt
    X = np.empty(B.values.shape)
    X[..., 0] = x0
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(grid.n):
            X[..., i + 1] = X[..., i] + drift(t[i], X[..., i]) * dt + dB[..., i]
            _check_finite(X[..., i + 1], i + 1)
    return SolutionPath(grid, X, x0)


def _check_eta_args(variant, K, T):
    if variant not in VARIANTS:
        raise DomainError(f"unknown coupling variant {variant!r}; expected one of {VARIANTS}")
    if not K > 0:
        raise DomainError(f"coupling needs a Lipschitz constant K > 0, got {K}")
    if not T > 0:
        raise DomainError(f"time horizon must be positive, got {T}")


def eta(variant, K, T, dist, t):
    """Coupling speed ``eta(t)``.

    ``thm31``: ``2K e^{-Kt} dist / (1 - e^{-2KT})``;
    ``rem31``: ``K dist / (1 - e^{-KT})``.  Both satisfy
    ``int_0^T e^{-Kt} eta(t) dt = dist``.
    """
    _check_eta_args(variant, K, T)
    dist = np.asarray(dist, dtype=float)
    if np.any(dist < 0):
        raise DomainError("dist must be nonnegative")
    t = np.asarray(t, dtype=float)
    d = dist[..., None]
    tt = np.atleast_1d(t)
    if variant == "thm31":
        out = 2.0 * K * np.exp(-K * tt) * d / -np.expm1(-2.0 * K * T)
    else:
        out = np.broadcast_to(K * d / -np.expm1(-K * T), dist.shape + tt.shape).copy()
    if t.ndim == 0:
        out = out[..., 0]
    return float(out) if np.ndim(out) == 0 else out


def eta_schedule(variant, K, T, dist, n):
    """``eta`` sampled at the nodes of ``TimeGrid(T, n)``."""
    grid = TimeGrid(T, n)
    return SampledPath(grid, eta(variant, K, T, dist, grid.nodes), NODES)


def default_tol(x, y):
    return 1e-9 * (1.0 + np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))


def coupled_solve(x, y, drift, B, variant="thm31", coupling_tol=None):
    """Solve the coupled system driven by the same fBm path(s).

    While uncoupled, Y gets the extra drift ``u_i = eta(t_i) sign(X_i - Y_i)``.
    Coupling is detected at the first node where the gap changes sign,
    vanishes, or drops to ``coupling_tol``; on that last step the drift is
    replaced by the value that closes the gap exactly (its size never
    exceeds ``eta`` on a sign flip), and from then on ``Y = X``, ``u = 0``.
    """
    grid = B.grid
    n, dt, t = grid.n, grid.dt, grid.nodes
    K = drift.K
    batch = B.values.shape[:-1]
    x = np.broadcast_to(np.asarray(x, dtype=float), batch).copy()
    y = np.broadcast_to(np.asarray(y, dtype=float), batch).copy()
    dist = np.abs(x - y)
    eta_nodes = eta(variant, K, grid.T, dist, t)
    tol = default_tol(x, y) if coupling_tol is None else np.broadcast_to(float(coupling_tol), batch)
    if np.any(np.asarray(tol) < 0):
        raise ContractError("coupling_tol must be nonnegative")

    dB = np.diff(B.values, axis=-1)
    X = np.empty(B.values.shape)
    Y = np.empty(B.values.shape)
    u = np.zeros(batch + (n,))
    X[..., 0] = x
    Y[..., 0] = y
    active = dist > 0
    tau = np.where(active, n + 1, 0)
    gap_hit = np.zeros(batch)
    for i in range(n):
        bx = drift(t[i], X[..., i])
        X[..., i + 1] = X[..., i] + bx * dt + dB[..., i]
        _check_finite(X[..., i + 1], i + 1)
        if not np.any(active):
            Y[..., i + 1] = X[..., i + 1]
            continue
        gap = X[..., i] - Y[..., i]
        by = drift(t[i], Y[..., i])
        ui = np.where(active, eta_nodes[..., i] * np.sign(gap), 0.0)
        y_next = Y[..., i] + by * dt + dB[..., i] + ui * dt
        _check_finite(y_next, i + 1)
        new_gap = X[..., i + 1] - y_next
        hit = active & ((new_gap * gap <= 0) | (np.abs(new_gap) <= tol))
        # exact closing drift on the detection step
        closing = gap / dt + (bx - by)
        ui = np.where(hit, closing, ui)
        u[..., i] = ui
        gap_hit = np.where(hit, np.abs(new_gap), gap_hit)
        tau = np.where(hit, i + 1, tau)
        active = active & ~hit
        Y[..., i + 1] = np.where(active, y_next, X[..., i + 1])

    eta_path = SampledPath(grid, eta_nodes, NODES)
    return CoupledPaths(
        SolutionPath(grid, X, x),
        SolutionPath(grid, Y, y),
        tau,
        SampledPath(grid, u, CELLS),
        eta_path,
        gap_hit,
    )


def contraction_defect(cp, K):
    """Largest defect in the discrete contraction estimate, per path.

    Returns ``max_i [e^{-K t_i}|X_i - Y_i| - (|x - y| - sum_{j<i} e^{-K t_j} eta_j dt)]``
    over nodes before coupling; the continuous estimate says this is <= 0.
    """
    grid = cp.X.grid
    t, dt = grid.nodes, grid.dt
    gap = np.abs(cp.X.X - cp.Y.X)
    dist = gap[..., 0]
    spent = np.zeros(gap.shape)
    spent[..., 1:] = np.cumsum(np.exp(-K * t[:-1]) * cp.eta.values[..., :-1] * dt, axis=-1)
    lhs = np.exp(-K * t) * gap
    rhs = dist[..., None] - spent
    idx = np.arange(grid.n + 1)
    before = idx <= np.minimum(cp.tau_index, grid.n)[..., None]
    return np.max(np.where(before, lhs - rhs, -np.inf), axis=-1)
