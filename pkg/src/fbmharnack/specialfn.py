"""Special functions behind the Volterra kernel and the closed-form constants.

Log-Gamma uses a Lanczos approximation (g = 7, nine coefficients) with the
reflection formula below 1/2.  The Gauss hypergeometric function is only
needed for nonpositive arguments; it is evaluated after a Pfaff
transformation that maps ``z <= 0`` onto ``w in [0, 1)``.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import AccuracyError, DomainError

__all__ = [
    "AccuracyBudget",
    "log_gamma",
    "gamma",
    "rgamma",
    "beta",
    "gauss_2f1",
]

_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG_PI = math.log(math.pi)


@dataclass(frozen=True)
class AccuracyBudget:
    """Stopping rule for power series.

    A series stops once two consecutive terms fall below
    ``rel_tol * |partial sum|``; it fails after ``max_terms`` terms.
    """

    rel_tol: float = 2.0**-53
    max_terms: int = 4000

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.max_terms < 1:
            raise DomainError(f"max_terms must be >= 1, got {self.max_terms}")


DEFAULT_BUDGET = AccuracyBudget()


def _lanczos_log_gamma(x):
    # valid for x >= 1/2
    xm = x - 1.0
    acc = np.full_like(xm, _LANCZOS_COEF[0])
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc = acc + c / (xm + i)
    t = xm + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (xm + 0.5) * np.log(t) - t + np.log(acc)


def _log_abs_gamma(x):
    """log|Gamma(x)| for real x away from the poles (array in, array out)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 0.5
    big = ~small
    out[big] = _lanczos_log_gamma(x[big])
    xs = x[small]
    if xs.size:
        s = np.abs(np.sin(np.pi * xs))
        out[small] = _LOG_PI - np.log(s) - _lanczos_log_gamma(1.0 - xs)
    # Gamma(1) = Gamma(2) = 1 exactly
    out[(x == 1.0) | (x == 2.0)] = 0.0
    return out


def _gamma_sign(x):
    x = np.asarray(x, dtype=float)
    sign = np.ones_like(x)
    neg = x < 0
    # Gamma alternates sign between consecutive negative integers
    sign[neg] = np.where(np.floor(x[neg]) % 2 == 0, 1.0, -1.0)
    return sign


def _is_pole(x):
    x = np.asarray(x, dtype=float)
    return (x <= 0) & (x == np.round(x))


def log_gamma(x):
    """Natural logarithm of the Gamma function for positive arguments.

    Accepts scalars or arrays; returns the same shape (a float for scalars).
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"log_gamma requires x > 0, got {x!r}")
    out = _log_abs_gamma(np.atleast_1d(arr)).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def gamma(x):
    """Real Gamma function; raises DomainError at the poles 0, -1, -2, ..."""
    arr = np.asarray(x, dtype=float)
    if np.any(_is_pole(arr)):
        raise DomainError(f"Gamma has a pole at {x!r}")
    a1 = np.atleast_1d(arr)
    out = (_gamma_sign(a1) * np.exp(_log_abs_gamma(a1))).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def rgamma(x):
    """Reciprocal Gamma function, equal to zero at the poles."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(arr)
    ok = ~_is_pole(arr)
    out[ok] = _gamma_sign(arr[ok]) * np.exp(-_log_abs_gamma(arr[ok]))
    out = out.reshape(np.shape(x))
    return float(out) if out.ndim == 0 else out


def beta(a, b):
    """Euler Beta function B(a, b) for positive arguments."""
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if np.any(~(a_arr > 0)) or np.any(~(b_arr > 0)):
        raise DomainError(f"beta requires positive arguments, got ({a!r}, {b!r})")
    a1, b1 = np.broadcast_arrays(np.atleast_1d(a_arr), np.atleast_1d(b_arr))
    out = np.exp(_log_abs_gamma(a1) + _log_abs_gamma(b1) - _log_abs_gamma(a1 + b1))
    out = out.reshape(np.broadcast_shapes(a_arr.shape, b_arr.shape))
    return float(out) if out.ndim == 0 else out


def _series(a, b, c, w, budget):
    """Plain hypergeometric power series, vectorised over w in [0, 1)."""
    total = np.ones_like(w)
    term = np.ones_like(w)
    active = np.ones(w.shape, dtype=bool)
    quiet = np.zeros(w.shape, dtype=int)
    for k in range(budget.max_terms):
        if not active.any():
            return total
        term = np.where(active, term * ((a + k) * (b + k) / ((c + k) * (k + 1.0))) * w, 0.0)
        total = total + term
        small = np.abs(term) <= budget.rel_tol * np.abs(total)
        quiet = np.where(small, quiet + 1, 0)
        active &= ~((quiet >= 2) | (term == 0.0))
    if active.any():
        raise AccuracyError(
            f"2F1({a}, {b}; {c}; w) series did not converge in {budget.max_terms} terms",
            partial_sum=total,
            terms=budget.max_terms,
        )
    return total


NEAR_INTEGER = 1e-3
_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0]) * 2.0 * NEAR_INTEGER


def _near_integer(x, tol=NEAR_INTEGER):
    return abs(x - round(x)) < tol


def _connection(a, b, c, w, budget):
    # around w = 1; needs c - a - b away from the integers
    d = c - a - b
    v = 1.0 - w
    g_c = gamma(c)
    coef1 = g_c * gamma(d) * rgamma(c - a) * rgamma(c - b)
    coef2 = g_c * gamma(-d) * rgamma(a) * rgamma(b)
    part = coef1 * _series(a, b, 1.0 - d, v, budget) if coef1 != 0.0 else np.zeros_like(w)
    if coef2 != 0.0:
        part = part + coef2 * v**d * _series(c - a, c - b, 1.0 + d, v, budget)
    return part


def _f_unit_interval(a, b, c, w, budget):
    """2F1(a, b; c; w) for w in [0, 1).

    Arguments above 1/2 go through the connection formula around w = 1.
    When ``c - a - b`` is within ``NEAR_INTEGER`` of an integer that formula
    cancels badly, so the value is interpolated in ``c`` from four nearby
    points where it is well conditioned (analytic in ``c``, error O(h^4)).
    """
    far = w > 0.5
    if not far.any():
        return _series(a, b, c, w, budget)
    out = np.empty_like(w)
    near = ~far
    if near.any():
        out[near] = _series(a, b, c, w[near], budget)
    d = c - a - b
    if not _near_integer(d):
        out[far] = _connection(a, b, c, w[far], budget)
        return out
    base = round(d) - d
    nodes = base + _OFFSETS
    vals = [_connection(a, b, c + h, w[far], budget) for h in nodes]
    acc = np.zeros_like(w[far])
    for i, h in enumerate(nodes):
        others = np.delete(nodes, i)
        acc += vals[i] * np.prod(-others / (h - others))
    out[far] = acc
    return out


def gauss_2f1(a, b, c, z, budget=None):
    """Gauss hypergeometric function 2F1(a, b; c; z) for real z <= 0.

    Uses the Pfaff transformation
    ``2F1(a, b; c; z) = (1 - z)**(-a) * 2F1(a, c - b; c; z / (z - 1))``
    whose argument lies in [0, 1).  ``z`` may be an array.

    Raises
    ------
    DomainError
        If ``c <= 0`` or any ``z > 0``.
    AccuracyError
        If the series needs more than ``budget.max_terms`` terms; the
        exception carries the partial sum.
    """
    budget = budget or DEFAULT_BUDGET
    if not c > 0:
        raise DomainError(f"gauss_2f1 requires c > 0, got {c}")
    z_arr = np.asarray(z, dtype=float)
    if np.any(~(z_arr <= 0)):
        raise DomainError("gauss_2f1 is implemented for z <= 0 only")
    z1 = np.atleast_1d(z_arr)
    if a == 0 or b == 0:
        out = np.ones_like(z1)
    else:
        w = z1 / (z1 - 1.0)
        out = (1.0 - z1) ** (-a) * _f_unit_interval(float(a), float(c - b), float(c), w, budget)
    out = out.reshape(z_arr.shape)
    return float(out) if out.ndim == 0 else out
