import math

import numpy as np
import pytest

from hemopipe.core import InsufficientDataError, Led
from hemopipe.drift import (
    DegenerateRegressorError,
    NirChannel,
    correct_channel,
    fit_drift,
    fit_drift_proportional,
    interpolate_y,
    remove_drift,
)
from hemopipe.simulator import DriftConfig, SimConfig, emit_columns

ZERO_TARGETS = {0: (0.0, 0.0), 1: (0.0, 0.0), 2: (0.0, 0.0)}


def ols_oracle(x, y):
    """Normal-equation OLS with exact summation over reversed data."""
    x, y = list(reversed(x)), list(reversed(y))
    n = len(x)
    sx, sy = math.fsum(x), math.fsum(y)
    sxx = math.fsum(v * v for v in x)
    sxy = math.fsum(a * b for a, b in zip(x, y))
    slope = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    return slope, (sy - slope * sx) / n


def test_interpolate_midpoint():
    assert interpolate_y([0, 1], [10, 20], [0.5]).tolist() == [15.0]


def test_interpolate_knots():
    assert interpolate_y([0, 1], [10, 20], [0, 1]).tolist() == [10.0, 20.0]


def test_interpolate_two_pieces():
    # piece 1: y = 2t on [0, 2]; piece 2: y = 8 - 2t on [2, 4]
    oracle = [2 * 1.0, 8 - 2 * 3.0]
    assert interpolate_y([0, 2, 4], [0, 4, 0], [1, 3]).tolist() == oracle


def test_interpolate_clamps_outside():
    assert interpolate_y([0, 1], [10, 20], [-5, 7]).tolist() == [10.0, 20.0]


def test_interpolate_needs_two_samples():
    with pytest.raises(InsufficientDataError):
        interpolate_y([0], [1], [0])
    with pytest.raises(ValueError):
        interpolate_y([0, 0], [1, 2], [0])


def test_fit_exact_line():
    y = np.linspace(100, 200, 50)
    fit = fit_drift(2 * y + 1, y)
    assert fit.slope == pytest.approx(2.0, rel=1e-12)
    assert fit.intercept == pytest.approx(1.0, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0)


def test_fit_constant_ir():
    y = np.linspace(0, 5, 20)
    fit = fit_drift(np.full(20, 7.5), y)
    assert fit.slope == pytest.approx(0.0, abs=1e-12)
    assert fit.intercept == pytest.approx(7.5)
    assert fit.r_squared == 0.0


def test_fit_noisy_matches_oracle_within_standard_errors():
    rng = np.random.default_rng(2)
    n, sigma = 500, 2.0
    y = rng.uniform(0, 50, n)
    ir = 3 * y - 5 + rng.normal(0, sigma, n)
    fit = fit_drift(ir, y)
    slope, intercept = ols_oracle(y.tolist(), ir.tolist())
    assert fit.slope == pytest.approx(slope, rel=1e-10)
    assert fit.intercept == pytest.approx(intercept, rel=1e-9)
    resid = ir - (slope * y + intercept)
    s2 = np.dot(resid, resid) / (n - 2)
    sxx = np.sum((y - y.mean()) ** 2)
    se_slope = math.sqrt(s2 / sxx)
    se_int = math.sqrt(s2 * (1 / n + y.mean() ** 2 / sxx))
    assert abs(fit.slope - 3) <= 3 * se_slope
    assert abs(fit.intercept + 5) <= 3 * se_int
    assert 0.0 <= fit.r_squared <= 1.0


def test_fit_errors():
    with pytest.raises(DegenerateRegressorError):
        fit_drift([1.0, 2.0, 3.0], [4.0, 4.0, 4.0])
    with pytest.raises(InsufficientDataError):
        fit_drift([1.0, 2.0], [1.0, 2.0])


def test_remove_drift_linear_is_zero():
    y = np.linspace(10, 20, 30)
    np.testing.assert_allclose(remove_drift(0.5 * y + 3, y), 0.0, atol=1e-12)


def test_remove_drift_recovers_centered_signal():
    rng = np.random.default_rng(4)
    n = 400
    y = 1000 * np.exp(-np.linspace(0, 1, n))
    sig = np.sin(np.linspace(0, 40, n)) + rng.normal(0, 0.1, n)
    # make the synthetic signal exactly orthogonal to y so the decomposition is identifiable
    yc = y - y.mean()
    sig = sig - yc * np.dot(sig, yc) / np.dot(yc, yc)
    resid = remove_drift(0.8 * y + 12 + sig, y)
    np.testing.assert_allclose(resid, sig - sig.mean(), atol=1e-9)


def test_remove_drift_constant_y_errors():
    with pytest.raises(DegenerateRegressorError):
        remove_drift([1.0, 2.0, 3.0, 4.0], [2.0] * 4)


def test_residual_properties():
    rng = np.random.default_rng(9)
    y = rng.normal(100, 10, 300)
    ir = 0.3 * y + rng.normal(0, 1, 300) + 50
    r = remove_drift(ir, y)
    assert abs(r.mean()) <= 1e-9
    assert abs(np.dot(r, y - y.mean())) <= 1e-9 * np.linalg.norm(r) * np.linalg.norm(y - y.mean()) + 1e-9
    np.testing.assert_allclose(remove_drift(r, y), r, atol=1e-9)


def test_correct_channel_anchors_first_sample():
    y = np.linspace(1000, 900, 100)
    ir = 2 * y
    corrected, fit = correct_channel(ir, y, NirChannel.IR2)
    assert fit.channel is NirChannel.IR2
    np.testing.assert_allclose(corrected, 2000.0, rtol=1e-12)


def test_proportional_model():
    y = np.linspace(1000, 900, 100)
    fit = fit_drift_proportional(3 * y, y)
    assert fit.slope == pytest.approx(3.0) and fit.intercept == 0.0
    corrected, _ = correct_channel(3 * y, y, model="proportional")
    np.testing.assert_allclose(corrected, 3000.0, rtol=1e-12)
    with pytest.raises(ValueError):
        correct_channel(3 * y, y, model="cubic")


def _zero_signal_residual(seed, sigma):
    cfg = SimConfig(state_targets=ZERO_TARGETS, drift=DriftConfig("linear", 0.05), noise_sigma=sigma, seed=seed)
    cols = emit_columns(cfg)
    white, nir = cols.select(Led.WHITE), cols.select(Led.NIR)
    return remove_drift(nir.ir1, interpolate_y(white.t, white.y, nir.t))


def test_simulated_drift_residual_rms_within_three_sigma():
    sigma = 100.0
    ok = [np.sqrt(np.mean(_zero_signal_residual(s, sigma) ** 2)) <= 3 * sigma for s in range(100)]
    assert np.mean(ok) >= 0.95


@pytest.mark.xfail(strict=True, reason="max of 6720 Gaussian residuals exceeds 3 sigma almost surely")
def test_simulated_drift_residual_max_within_three_sigma():
    sigma = 100.0
    ok = [np.max(np.abs(_zero_signal_residual(s, sigma))) <= 3 * sigma for s in range(100)]
    assert np.mean(ok) >= 0.95


def test_simulated_common_drift_zero_signal_removed_exactly():
    cfg = SimConfig(state_targets=ZERO_TARGETS, drift=DriftConfig("linear", 0.05))
    cols = emit_columns(cfg)
    white, nir = cols.select(Led.WHITE), cols.select(Led.NIR)
    # past the last White read Y is clamped, so compare only where Y is observed
    inside = nir.t <= white.t[-1]
    assert np.count_nonzero(~inside) == 7
    t, ir1, ir2 = nir.t[inside], nir.ir1[inside], nir.ir2[inside]
    y = interpolate_y(white.t, white.y, t)
    np.testing.assert_allclose(ir1 / ir1[0], y / y[0], rtol=1e-12)
    for ir in (ir1, ir2):
        assert np.max(np.abs(remove_drift(ir, y))) <= 1e-9
