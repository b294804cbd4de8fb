"""Monte Carlo checks of the Harnack-type inequalities.

Every check simulates, with common random numbers, the solution from x,
the solution from y and the coupled pair (x, y) with its Girsanov weight.
All per-path quantities come from the same Wiener paths, so repeated calls
with the same query are bit-identical.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import montecarlo as mc
from .errors import ConsistencyError, ContractError, DomainError
from .fbm import TimeGrid, WienerIncrements, check_hurst, synthesize
from .girsanov import girsanov_integrand, weight
from .sde import DriftSpec, coupled_solve, euler_solve
from .specialfn import beta, rgamma

__all__ = [
    "TestFunction",
    "HarnackQuery",
    "HarnackReport",
    "PairSample",
    "constant_C",
    "constant_Ctilde",
    "constant_C4",
    "constant_for",
    "verdict",
    "sample_pair",
    "estimate_semigroup",
    "estimate_shifted",
    "check_harnack",
    "check_log_harnack",
    "strong_feller_gap",
]

HOLDS = "holds"
WITHIN_NOISE = "holds_within_noise"
VIOLATED = "violated"
N_SIGMA = 4.0
CONSTANT_VARIANTS = ("thm31", "rem31", "cor41")


# --- test functions --------------------------------------------------------

_FAMILIES = {
    # name: (function, sup norm, infimum)
    "one_plus_half_sin": (lambda z: 1.0 + 0.5 * np.sin(z), 1.5, 0.5),
    "sigmoid01": (lambda z: 0.5 * (1.0 + np.tanh(0.5 * z)), 1.0, 0.0),
    "shifted_sigmoid": (lambda z: 1.5 + 0.5 * np.tanh(0.5 * z), 2.0, 1.0),
    "sin": (np.sin, 1.0, -1.0),
    "one": (lambda z: np.ones_like(z), 1.0, 1.0),
}


@dataclass(frozen=True)
class TestFunction:
    """Bounded test function from a fixed family.

    ``clip`` is the identity truncated to ``[-window, window]``.
    """

    __test__ = False  # not a pytest class

    family: str = "one_plus_half_sin"
    window: float = 10.0

    def __post_init__(self):
        if self.family != "clip" and self.family not in _FAMILIES:
            raise DomainError(f"unknown test function {self.family!r}")
        if not self.window > 0:
            raise DomainError("clip window must be positive")

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.family == "clip":
            return np.clip(z, -self.window, self.window)
        return _FAMILIES[self.family][0](z)

    @property
    def sup_norm(self):
        if self.family == "clip":
            return self.window
        return _FAMILIES[self.family][1]

    @property
    def infimum(self):
        if self.family == "clip":
            return -self.window
        return _FAMILIES[self.family][2]


# --- constants -------------------------------------------------------------


def _beta_over_gamma(H):
    H = check_hurst(H, allow_half=False)
    return beta(1.5 - H, 0.5 - H) * rgamma(0.5 - H)


def _check_tk(T, K, name="K"):
    if not T > 0:
        raise DomainError(f"T must be positive, got {T}")
    if not K > 0:
        raise DomainError(f"{name} must be positive, got {K}")


def constant_C(T, K, H):
    """``(B/Gamma)^2 T^(2-2H) K^2 / ((1 - e^{-2KT})^2 (1 - H))``."""
    bg = _beta_over_gamma(H)
    _check_tk(T, K)
    return bg**2 * T ** (2 - 2 * H) * K**2 / (math.expm1(-2 * K * T) ** 2 * (1 - H))


def constant_Ctilde(T, K, H):
    """``(B/Gamma)^2 T^(2-2H) / (4 K^-2 (1 - e^{-KT})^2 (1 - H))``."""
    bg = _beta_over_gamma(H)
    _check_tk(T, K)
    return bg**2 * T ** (2 - 2 * H) * K**2 / (4 * math.expm1(-K * T) ** 2 * (1 - H))


def constant_C4(T, Kbar, H):
    """``(B/Gamma)^2 (1 + Kbar T)^2 / (T^(2H) 2 (1 - H))``."""
    bg = _beta_over_gamma(H)
    _check_tk(T, Kbar, "Kbar")
    return bg**2 * (1 + Kbar * T) ** 2 / (T ** (2 * H) * 2 * (1 - H))


def constant_for(variant, T, drift, H):
    """Constant of the given variant for this drift."""
    if variant == "thm31":
        return constant_C(T, drift.K, H)
    if variant == "rem31":
        return constant_Ctilde(T, drift.K, H)
    if variant == "cor41":
        return constant_C4(T, drift.Kbar, H)
    raise DomainError(f"unknown constant variant {variant!r}; expected one of {CONSTANT_VARIANTS}")


# --- queries and reports ---------------------------------------------------


@dataclass(frozen=True)
class HarnackQuery:
    x: float = 0.0
    y: float = 1.0
    p: float = 2.0
    T: float = 1.0
    drift: DriftSpec = field(default_factory=DriftSpec)
    H: float = 0.3
    n_paths: int = 10_000
    n_steps: int = 128
    seed: int = 0
    workers: int = 1
    coupling_tol: float = None

    def __post_init__(self):
        check_hurst(self.H)
        if not self.p > 1:
            raise DomainError(f"p must exceed 1, got {self.p}")
        if self.n_paths < 1000:
            raise ContractError(f"n_paths must be at least 1000, got {self.n_paths}")
        TimeGrid(self.T, self.n_steps)

    @property
    def grid(self):
        return TimeGrid(self.T, self.n_steps)

    @property
    def dist(self):
        return abs(self.x - self.y)


@dataclass(frozen=True)
class HarnackReport:
    lhs: float
    rhs: float
    lhs_se: float
    rhs_se: float
    constant_used: float
    verdict: str
    details: dict = field(default_factory=dict)

    @property
    def margin(self):
        return self.rhs - self.lhs


def verdict(lhs, rhs, lhs_se, rhs_se, n_sigma=N_SIGMA):
    """``holds`` if lhs <= rhs, ``violated`` if lhs - rhs > n_sigma * combined SE."""
    gap = lhs - rhs
    if gap <= 0:
        return HOLDS
    if gap <= n_sigma * math.hypot(lhs_se, rhs_se):
        return WITHIN_NOISE
    return VIOLATED


# --- simulation ------------------------------------------------------------


@dataclass(frozen=True)
class PairSample:
    """Terminal values on common Wiener paths.

    ``xT``: solution from x; ``yT``: solution from y; ``R``: Girsanov
    weight of the coupling (None when not simulated).
    """

    query: HarnackQuery
    variant: str
    xT: np.ndarray
    yT: np.ndarray
    R: np.ndarray = None
    qv: np.ndarray = None
    tau: np.ndarray = None


def _block_fn(query, variant):
    grid = query.grid

    def fn(idx):
        W = WienerIncrements.generate(grid, query.seed, idx)
        B = synthesize(query.H, grid, W)
        out = {"yT": euler_solve(query.y, query.drift, B).X[:, -1]}
        if variant is None or query.x == query.y:
            out["xT"] = euler_solve(query.x, query.drift, B).X[:, -1]
            out["R"] = np.ones(idx.size)
            out["qv"] = np.zeros(idx.size)
            out["tau"] = np.zeros(idx.size, dtype=np.int64)
            return out
        cp = coupled_solve(query.x, query.y, query.drift, B, variant, query.coupling_tol)
        w = weight(girsanov_integrand(cp.u, query.H), W)
        out.update(xT=cp.X.X[:, -1], R=w.R_T, qv=w.qv, tau=cp.tau_index)
        return out

    return fn


def sample_pair(query, variant="thm31"):
    """Simulate from x, from y, and the coupled pair under ``variant`` drift.

    ``variant=None`` skips the coupling (``R`` is then 1).
    """
    if variant == "cor41":
        variant = "thm31"
    out = mc.run_blocks(_block_fn(query, variant), query.n_paths, query.workers)
    return PairSample(query, variant, out["xT"], out["yT"], out["R"], out["qv"], out["tau"])


def _start_query(query, x):
    return HarnackQuery(
        x=x, y=x, p=query.p, T=query.T, drift=query.drift, H=query.H, n_paths=query.n_paths,
        n_steps=query.n_steps, seed=query.seed, workers=query.workers, coupling_tol=query.coupling_tol,
    )


def estimate_semigroup(f, x, query):
    """``P_T f(x)``: mean of ``f(X_T^x)`` and its standard error."""
    s = sample_pair(_start_query(query, x), None)
    return mc.mean_se(f(s.xT))


def estimate_shifted(f, x, y, query, variant="thm31", sample=None):
    """``E[R_T f(X_T^x)]``, an estimate of ``P_T f(y)`` through the coupling."""
    if sample is None:
        q = HarnackQuery(**{**query.__dict__, "x": x, "y": y})
        sample = sample_pair(q, variant)
    return mc.mean_se(sample.R * f(sample.xT))


def _consistency(f, sample):
    direct = mc.mean_se(f(sample.yT))
    weighted = mc.mean_se(sample.R * f(sample.xT))
    gap = abs(direct[0] - weighted[0])
    se = math.hypot(direct[1], weighted[1])
    info = {
        "direct_y": direct[0],
        "direct_y_se": direct[1],
        "weighted_y": weighted[0],
        "weighted_y_se": weighted[1],
        "consistency_gap": gap,
        "consistency_se": se,
    }
    if gap > N_SIGMA * se:
        raise ConsistencyError(
            f"direct ({direct[0]:.6g}) and weighted ({weighted[0]:.6g}) estimates of P_T f(y) "
            f"differ by {gap:.3g} > {N_SIGMA:g} x {se:.3g}"
        )
    return direct, weighted, info


def check_harnack(f, query, constant_variant="thm31", sample=None, constant_scale=1.0):
    """``(P_T f(y))^p <= P_T f^p(x) exp(p/(p-1) C |x - y|^2)``.

    Both estimators of ``P_T f(y)`` are computed; if they disagree beyond
    4 combined SE a :class:`ConsistencyError` is raised before any verdict.
    """
    sample = sample if sample is not None else sample_pair(query, constant_variant)
    p = query.p
    fx = f(sample.xT)
    if np.any(fx < 0) or np.any(f(sample.yT) < 0):
        raise ContractError("Harnack checks need a nonnegative test function")
    C = constant_scale * constant_for(constant_variant, query.T, query.drift, query.H)
    direct, weighted, info = _consistency(f, sample)
    m, se = direct
    lhs = m**p
    lhs_se = p * m ** (p - 1) * se
    mp, mp_se = mc.mean_se(fx**p)
    factor = math.exp(p / (p - 1) * C * query.dist**2)
    rhs, rhs_se = mp * factor, mp_se * factor
    info.update(
        lhs_weighted=weighted[0] ** p,
        lhs_weighted_se=p * abs(weighted[0]) ** (p - 1) * weighted[1],
        exp_factor=factor,
    )
    return HarnackReport(lhs, rhs, lhs_se, rhs_se, C, verdict(lhs, rhs, lhs_se, rhs_se), info)


def check_log_harnack(f, query, constant_variant="thm31", sample=None):
    """``P_T log f(x) <= log P_T f(y) + C |x - y|^2`` for ``f >= 1``."""
    sample = sample if sample is not None else sample_pair(query, None)
    fx, fy = f(sample.xT), f(sample.yT)
    if np.any(fx < 1) or np.any(fy < 1):
        raise ContractError("log-Harnack checks need a test function f >= 1")
    C = constant_for(constant_variant, query.T, query.drift, query.H)
    lhs, lhs_se = mc.mean_se(np.log(fx))
    my, se_y = mc.mean_se(fy)
    rhs = math.log(my) + C * query.dist**2
    rhs_se = se_y / my
    info = {"P_T_f_y": my, "P_T_f_y_se": se_y}
    return HarnackReport(lhs, rhs, lhs_se, rhs_se, C, verdict(lhs, rhs, lhs_se, rhs_se), info)


def strong_feller_gap(f, query, constant_variant="thm31", sample=None):
    """``|P_T f(x) - P_T f(y)| <= |f|_inf sqrt(2C) |x - y| exp(C |x - y|^2)``.

    The difference is estimated on common paths (paired SE).  The details
    also report ``E|1 - R_T|`` against ``sqrt(2C) |x - y| exp(C |x - y|^2)``.
    """
    sample = sample if sample is not None else sample_pair(query, constant_variant)
    C = constant_for(constant_variant, query.T, query.drift, query.H)
    d = query.dist
    diff, diff_se = mc.mean_se(f(sample.xT) - f(sample.yT))
    lhs = abs(diff)
    bound = math.sqrt(2 * C) * d * math.exp(C * d**2)
    rhs = f.sup_norm * bound
    r_gap, r_gap_se = mc.mean_se(np.abs(1.0 - sample.R))
    info = {
        "E_abs_1_minus_R": r_gap,
        "E_abs_1_minus_R_se": r_gap_se,
        "R_bound": bound,
        "R_verdict": verdict(r_gap, bound, r_gap_se, 0.0),
    }
    return HarnackReport(lhs, rhs, diff_se, 0.0, C, verdict(lhs, rhs, diff_se, 0.0), info)
