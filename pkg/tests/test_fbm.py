import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbmharnack import fbm, rng
from fbmharnack.errors import ContractError, DomainError
from fbmharnack.fbm import TimeGrid, WienerIncrements

# frozen from mpmath (40 digits)
V_03 = 1.3833763219458760531
K_03_NORM = 0.87301411433866805477  # alternative integral representation, same value
K_03_RAW = 1.0268131789987202502
KDT_03_NORM = -0.29211317363196918628  # numerical derivative of the kernel
KDT_03_RAW = -0.34357480768986698494


def test_timegrid():
    g = TimeGrid(2.0, 4)
    assert g.dt == 0.5
    assert np.array_equal(g.nodes, [0, 0.5, 1, 1.5, 2])
    assert np.allclose(g.midpoints, [0.25, 0.75, 1.25, 1.75])
    with pytest.raises(DomainError):
        TimeGrid(0.0, 4)
    with pytest.raises(DomainError):
        TimeGrid(1.0, 0)


def test_hurst_validation():
    assert fbm.check_hurst(0.5) == 0.5
    for bad in (0.0, 0.6, -0.1):
        with pytest.raises(DomainError):
            fbm.check_hurst(bad)
    with pytest.raises(DomainError):
        fbm.check_hurst(0.5, allow_half=False)


def test_covariance_examples():
    assert fbm.covariance(0.2, 1.0, 1.0) == pytest.approx(1.0)
    assert fbm.covariance(0.5, 0.3, 0.7) == pytest.approx(0.3)
    assert fbm.covariance(0.3, 2.0, 1.0) == pytest.approx(2**0.6 / 2, rel=1e-14)
    with pytest.raises(DomainError):
        fbm.covariance(0.3, -1.0, 1.0)


def test_variance_factor_frozen():
    assert fbm.variance_factor(0.3) == pytest.approx(V_03, rel=1e-12)
    assert fbm.variance_factor(0.5) == 1.0


def test_kernel_values():
    assert fbm.kernel(0.5, 1.0, 0.3) == pytest.approx(1.0)
    assert fbm.kernel(0.3, 1.0, 0.5) == pytest.approx(K_03_NORM, rel=1e-12)
    assert fbm.kernel(0.3, 1.0, 0.5, normalized=False) == pytest.approx(K_03_RAW, rel=1e-12)
    for s in (0.0, 1.0, 1.5):
        with pytest.raises(DomainError):
            fbm.kernel(0.3, 1.0, s)


def test_kernel_dt_frozen_and_fd():
    assert fbm.kernel_dt(0.3, 1.0, 0.5) == pytest.approx(KDT_03_NORM, rel=1e-12)
    assert fbm.kernel_dt(0.3, 1.0, 0.5, normalized=False) == pytest.approx(KDT_03_RAW, rel=1e-12)
    assert fbm.kernel_dt(0.5, 1.0, 0.5) == 0.0
    # Richardson-extrapolated central difference
    def cd(h):
        return (fbm.kernel(0.3, 1 + h, 0.5) - fbm.kernel(0.3, 1 - h, 0.5)) / (2 * h)

    h = 1e-3
    rich = (4 * cd(h / 2) - cd(h)) / 3
    assert rich == pytest.approx(fbm.kernel_dt(0.3, 1.0, 0.5), rel=1e-8)
    with pytest.raises(DomainError):
        fbm.kernel_dt(0.3, 0.5, 0.5)


@given(st.floats(0.02, 0.48), st.floats(0.01, 0.99))
def test_kernel_dt_negative(H, frac):
    assert fbm.kernel_dt(H, 1.0, frac) < 0


@given(st.floats(0.02, 0.5), st.floats(0.01, 0.99))
def test_kernel_positive(H, frac):
    assert fbm.kernel(H, 1.0, frac) > 0


@pytest.mark.parametrize("H,t,s", [(0.1, 1.0, 0.4), (0.3, 0.7, 0.7), (0.3, 0.2, 0.9)])
def test_kernel_reproducing(H, t, s):
    assert fbm.kernel_inner(H, t, s) == pytest.approx(fbm.covariance(H, t, s), rel=1e-6)


def test_kernel_raw_reproduces_scaled_covariance():
    assert fbm.kernel_inner(0.3, 1.0, 1.0, normalized=False) == pytest.approx(V_03, rel=1e-6)


def test_wiener_increments_deterministic():
    g = TimeGrid(1.0, 16)
    a = WienerIncrements.generate(g, 42, 3)
    b = WienerIncrements.generate(g, 42, 3)
    assert np.array_equal(a.dW, b.dW) and np.array_equal(a.detail, b.detail)
    batch = WienerIncrements.generate(g, 42, [2, 3])
    assert np.array_equal(batch.dW[1], a.dW)
    assert a.dW.shape == (16,)
    assert not np.array_equal(WienerIncrements.generate(g, 43, 3).dW, a.dW)


def test_synthesize_trivial_cases():
    g = TimeGrid(1.0, 16)
    zero = WienerIncrements(0, 0, np.zeros(16), np.zeros(fbm.detail_count(16)))
    assert np.array_equal(fbm.synthesize(0.3, g, zero).values, np.zeros(17))
    W = WienerIncrements.generate(g, 1, 0)
    half = fbm.synthesize(0.5, g, W).values
    assert half[0] == 0.0
    assert np.allclose(half[1:], np.cumsum(W.dW), rtol=0, atol=1e-15)


def test_synthesize_linear():
    g = TimeGrid(1.0, 16)
    W1 = WienerIncrements.generate(g, 1, 0)
    W2 = WienerIncrements.generate(g, 1, 1)
    a = 2.5
    W3 = WienerIncrements(0, 0, a * W1.dW + W2.dW, a * W1.detail + W2.detail)
    lhs = fbm.synthesize(0.3, g, W3).values
    rhs = a * fbm.synthesize(0.3, g, W1).values + fbm.synthesize(0.3, g, W2).values
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-13)


def test_synthesize_length_mismatch():
    W = WienerIncrements.generate(TimeGrid(1.0, 8), 1, 0)
    with pytest.raises(ContractError):
        fbm.synthesize(0.3, TimeGrid(1.0, 16), W)


def test_synthesize_deterministic():
    g = TimeGrid(1.0, 32)
    W = WienerIncrements.generate(g, 9, 4)
    assert np.array_equal(fbm.synthesize(0.2, g, W).values, fbm.synthesize(0.2, g, W).values)


@pytest.mark.parametrize("H", [0.1, 0.25, 0.4])
def test_operator_covariance_close_to_fbm(H):
    # the law of the synthesized vector is Gaussian with covariance A A^T
    g = TimeGrid(1.0, 32)
    op = fbm.volterra_operator(H, g)
    A = np.hstack([op.cell_mean * math.sqrt(g.dt), op.detail])
    t = g.nodes[1:]
    err = np.abs(A @ A.T - fbm.covariance(H, t[:, None], t[None, :])).max()
    assert err < 0.005


def test_cell_mean_only_loses_variance():
    # without the within-cell residual the variance is visibly too small
    g = TimeGrid(1.0, 32)
    K = fbm.cell_mean_matrix(0.1, g)
    var_T = (K[-1] ** 2).sum() * g.dt
    assert var_T < 0.9


def test_cholesky_trivial():
    g = TimeGrid(2.0, 1)
    assert fbm.increment_covariance(0.3, g)[0, 0] == pytest.approx(2.0**0.6)
    C = fbm.increment_covariance(0.5, TimeGrid(1.0, 8))
    assert np.allclose(C, np.eye(8) / 8)
    one = fbm.cholesky_sample(0.3, TimeGrid(1.0, 8), rng.PathStream(1, 0))
    assert one.values.shape == (9,) and one.values[0] == 0.0
    many = fbm.cholesky_sample(0.3, TimeGrid(1.0, 8), np.random.default_rng(0), n_paths=5)
    assert many.values.shape == (5, 9)


def test_cholesky_paths_match_path_stream():
    g = TimeGrid(1.0, 8)
    batch = fbm.cholesky_paths(0.3, g, 4, [0, 1, 2]).values
    single = fbm.cholesky_sample(0.3, g, rng.PathStream(4, 1)).values
    assert np.allclose(batch[1], single, rtol=0, atol=1e-15)


def test_cholesky_jitter_then_failure(monkeypatch):
    bad = -np.eye(3)
    with pytest.raises(fbm.NumericalError):
        fbm._cholesky_factor(bad)
    # rank-deficient PSD matrix is rescued by the jitter retry
    v = np.array([[1.0], [1.0], [1.0]])
    L = fbm._cholesky_factor(v @ v.T)
    assert np.allclose(L @ L.T, v @ v.T, atol=1e-5)


def test_two_samplers_agree_statistically():
    g = TimeGrid(1.0, 8)
    m = 20000
    W = WienerIncrements.generate(g, 3, np.arange(m))
    a = fbm.synthesize(0.25, g, W).values[:, 1:]
    b = fbm.cholesky_paths(0.25, g, 3, np.arange(m)).values[:, 1:]
    ca = a.T @ a / m
    cb = b.T @ b / m
    se = np.sqrt((a**2).T @ (a**2) / m / m + (b**2).T @ (b**2) / m / m)
    assert np.all(np.abs(ca - cb) <= 5 * se + 0.01)


def test_kstar_apply_trivial():
    g = TimeGrid(1.0, 16)
    assert np.array_equal(fbm.kstar_apply(0.3, g, np.zeros(16)), np.zeros(16))
    phi = (np.arange(16) < 5).astype(float)
    assert np.allclose(fbm.kstar_apply(0.5, g, phi), phi)
    with pytest.raises(ContractError):
        fbm.kstar_apply(0.3, g, np.zeros(5))


def test_kstar_apply_matches_definition():
    # K* phi(s) = K(T, s) phi(s) + int_s^T (phi(r) - phi(s)) dK/dr(r, s) dr for an indicator
    g = TimeGrid(1.0, 16)
    phi = (np.arange(16) < 8).astype(float)
    s = np.array([0.2, 0.7])
    got = fbm.kstar_apply(0.3, g, phi, points=s)
    # s=0.2: phi(s)=1, integral over r>0.5 of (0-1) dK/dr = -(K(1,s) - K(0.5,s))
    want0 = fbm.kernel(0.3, 1.0, 0.2) - (fbm.kernel(0.3, 1.0, 0.2) - fbm.kernel(0.3, 0.5, 0.2))
    assert got[0] == pytest.approx(want0, rel=1e-12)
    assert got[1] == 0.0


def test_isometry_small_grid():
    g = TimeGrid(1.0, 64)
    phi = (np.arange(64) < 32).astype(float)
    psi = np.ones(64)
    val = fbm.kstar_inner(0.3, g, phi, psi)
    assert val == pytest.approx(fbm.covariance(0.3, 0.5, 1.0), rel=1e-6)
