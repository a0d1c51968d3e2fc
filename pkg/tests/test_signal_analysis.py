import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispcancel.correlation_signal import CorrelationTrace
from dispcancel.errors import FilterSpecError, FitError, NoDipError, ValidationError
from dispcancel.interferometer_sim import FWHM_PER_SIGMA, Interferogram
from dispcancel.signal_analysis import (
    DipFit,
    FilterSpec,
    broadening_ratio,
    carrier_frequency,
    center_shift_slope,
    default_filter_spec,
    dip_jacobian,
    dip_model,
    dip_visibility,
    fit_gaussian_dip,
    fold_frequency,
    fringe_visibility,
    half_max_fwhm,
    lowpass,
    lowpass_values,
    raised_cosine,
)
from dispcancel.spectral_core import TWO_PI_C

UM = 1e-6
W0 = TWO_PI_C / 792e-9


# --- filter ------------------------------------------------------------------------


def test_constant_trace_unchanged():
    x = np.arange(300) * 0.1 * UM
    y = np.full(300, 2.5)
    np.testing.assert_allclose(lowpass_values(x, y, FilterSpec(1e6)), 2.5, rtol=1e-14)


def test_carrier_attenuated_by_60_db():
    # a step where the carrier is resolved (below Nyquist) so its true frequency is sampled
    step = 0.05 * UM
    x = np.arange(2000) * step
    f = carrier_frequency(W0, 2)
    assert f < 0.5 / step
    spec = default_filter_spec(step, W0, 2, expected_fwhm=1.8 * UM)
    y = np.cos(2 * math.pi * f * x)
    out = lowpass_values(x, y, spec)
    interior = slice(500, 1500)
    assert 20 * math.log10(np.max(np.abs(out[interior])) / 1.0) < -60


def test_default_cutoff_sits_between_envelope_and_folded_carrier():
    step = 0.1 * UM
    carrier = carrier_frequency(W0, 2)
    assert carrier > 0.5 / step  # aliased at the 0.1 um step
    folded = fold_frequency(carrier, step)
    assert folded == pytest.approx(1 / step - carrier)
    spec = default_filter_spec(step, W0, 2, expected_fwhm=1.8 * UM)
    assert 1 / (1.8 * UM) < spec.cutoff * (1 - spec.taper)
    assert spec.cutoff * (1 + spec.taper) < folded
    assert spec.cutoff == pytest.approx(math.sqrt(folded / (1.8 * UM)))


def test_idempotent_on_band_limited_input():
    n, step = 1024, 0.1 * UM
    x = np.arange(n) * step
    spec = FilterSpec(1.0e6, 0.1)
    freqs = np.fft.rfftfreq(n, d=step)
    keep = [k for k in range(1, 40) if freqs[k] < spec.cutoff * (1 - spec.taper)]
    rng = np.random.default_rng(2)
    y = 3.0 + sum(rng.normal() * np.cos(2 * math.pi * freqs[k] * x + rng.uniform(0, 6)) for k in keep)
    once = lowpass_values(x, y, spec)
    twice = lowpass_values(x, once, spec)
    np.testing.assert_allclose(once, y, atol=1e-12)
    np.testing.assert_allclose(twice, once, atol=1e-12)


def test_raised_cosine_shape():
    spec = FilterSpec(1.0, 0.2)
    h = raised_cosine(np.array([0.0, 0.8, 1.0, 1.2, 5.0]), spec)
    np.testing.assert_allclose(h, [1.0, 1.0, 0.5, 0.0, 0.0], atol=1e-15)


def test_filter_spec_errors():
    x = np.arange(100) * 0.1 * UM
    y = np.ones(100)
    with pytest.raises(FilterSpecError):
        lowpass_values(x, y, FilterSpec(6e6))  # above Nyquist of 5e6
    with pytest.raises(FilterSpecError):
        lowpass_values(x, y, FilterSpec(10.0))  # below resolution
    with pytest.raises(FilterSpecError):
        FilterSpec(1e6, 0.7)
    with pytest.raises(FilterSpecError):
        FilterSpec(-1.0)
    with pytest.raises(FilterSpecError):
        lowpass_values(np.array([0, 1, 3, 4.0]) * UM, np.ones(4), FilterSpec(1e5))


def test_lowpass_attaches_spec():
    x = np.arange(64) * 0.1 * UM
    tr = CorrelationTrace(x, np.ones(64), W0, 10)
    out = lowpass(tr, FilterSpec(1e6))
    assert out.filter_spec == FilterSpec(1e6) and out.filtered is not None
    np.testing.assert_array_equal(out.s_values, tr.s_values)


# --- dip fit ------------------------------------------------------------------------------


def synthetic(a=1.0, b=0.5, xc=0.0, sigma=1 * UM, step=0.1 * UM, half=10 * UM):
    x = np.arange(-half, half + step / 2, step)
    return x, dip_model(x, (a, b, xc, sigma))


def test_exact_dip_recovered():
    x, y = synthetic()
    fit = fit_gaussian_dip(x, y)
    assert fit.converged
    assert fit.baseline == pytest.approx(1.0, rel=1e-9)
    assert fit.depth == pytest.approx(0.5, rel=1e-9)
    assert abs(fit.center) < 1e-9 * UM
    assert fit.sigma == pytest.approx(1 * UM, rel=1e-9)
    assert fit.fwhm / fit.sigma == FWHM_PER_SIGMA


def test_noisy_dip_centre_rms():
    x, y = synthetic()
    errs = []
    for seed in range(200):
        noise = np.random.default_rng(seed).normal(0, 0.01, y.size)
        errs.append(fit_gaussian_dip(x, y + noise).center)
    assert math.sqrt(np.mean(np.square(errs))) < UM / 20


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        p = np.array([rng.uniform(0.5, 2), rng.uniform(0.1, 1), rng.uniform(-1, 1), rng.uniform(0.3, 2)])
        x = rng.uniform(-3, 3, 5)
        J = dip_jacobian(x, p)
        for k in range(4):
            h = 1e-6 * max(1.0, abs(p[k]))
            dp = np.zeros(4)
            dp[k] = h
            fd = (dip_model(x, p + dp) - dip_model(x, p - dp)) / (2 * h)
            scale = np.maximum(np.abs(J[:, k]), 1e-3 * np.max(np.abs(J)))
            worst = max(worst, np.max(np.abs(fd - J[:, k]) / scale))
    assert worst < 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(-20, 20), st.floats(0.2, 0.8), st.floats(-2, 2))
def test_scale_equivariance(power, depth, centre):
    x, y = synthetic(b=depth, xc=centre * UM)
    y = y + 0.003 * np.sin(x / UM * 3.1)  # imperfect data, not a fixed point
    base = fit_gaussian_dip(x, y)
    s = 2.0**power  # exact scaling in floating point
    scaled = fit_gaussian_dip(x, s * y)
    assert scaled.baseline == s * base.baseline
    assert scaled.depth == s * base.depth
    assert scaled.center == base.center and scaled.sigma == base.sigma


def test_scale_equivariance_general_factor():
    x, y = synthetic(b=0.4, xc=0.3 * UM)
    y = y + 0.003 * np.cos(x / UM * 2.3)
    base = fit_gaussian_dip(x, y)
    scaled = fit_gaussian_dip(x, 7.3 * y)
    assert scaled.baseline == pytest.approx(7.3 * base.baseline, rel=1e-9)
    assert scaled.center == pytest.approx(base.center, rel=1e-9, abs=1e-15)
    assert scaled.sigma == pytest.approx(base.sigma, rel=1e-9)


def test_fit_fwhm_matches_half_max_crossing():
    step = 0.1 * UM
    x, y = synthetic(b=0.9, sigma=0.8 * UM, step=step)
    fit = fit_gaussian_dip(x, y)
    assert abs(fit.fwhm - half_max_fwhm(x, y)) < step


def test_flat_trace_has_no_dip():
    with pytest.raises(NoDipError):
        fit_gaussian_dip(np.arange(20.0), np.ones(20))


def test_too_few_samples():
    with pytest.raises(ValidationError):
        fit_gaussian_dip(np.arange(5.0), np.array([1, 0.5, 0.2, 0.5, 1.0]))


def test_unconverged_fit_reported_not_raised():
    x, y = synthetic(xc=2 * UM)
    y = y + 0.01 * np.random.default_rng(0).normal(size=y.size)
    fit = fit_gaussian_dip(x, y, max_iter=1)
    assert not fit.converged and fit.iterations == 1 and fit.message
    with pytest.raises(FitError):
        dip_visibility(fit)


# --- visibilities and ratios ---------------------------------------------------------------


def test_fringe_visibility_cases():
    x = np.linspace(0, 10 * UM, 2001)
    mono = Interferogram(x, 0.5 * (1 + np.cos(2 * math.pi * x / (0.4 * UM))), "total_intensity")
    assert fringe_visibility(mono, (0, 10 * UM)) == pytest.approx(1.0, abs=1e-6)
    flat = Interferogram(x, np.full(x.size, 3.0), "total_intensity")
    assert fringe_visibility(flat, (0, 10 * UM)) == 0.0
    with pytest.raises(ValidationError):
        fringe_visibility(flat, (20 * UM, 30 * UM))


def test_dip_visibility_cases():
    assert dip_visibility(DipFit(1.0, 0.5, 0.0, 1.0, 0.0, True, 3)) == 0.5
    assert dip_visibility(DipFit(1.0, 0.0, 0.0, 1.0, 0.0, True, 3)) == 0.0


def test_broadening_ratio_identical_is_zero():
    f = DipFit(1.0, 0.5, 0.0, 1.0, 0.0, True, 3)
    assert broadening_ratio(f, f) == 0.0
    wide = DipFit(1.0, 0.5, 0.0, 1.14, 0.0, True, 3)
    assert broadening_ratio(wide, f) == pytest.approx(14.0)


# --- slope regression -----------------------------------------------------------------------


def test_slope_two_points():
    t = 2 * 4.69e-3
    fit = center_shift_slope([(0.0, 0.0), (t, 0.2631 * t)])
    assert fit.slope == pytest.approx(0.2631, rel=1e-12)
    assert fit.stderr_slope == 0.0 and fit.r_squared == 1.0


def test_slope_outlier_stderr_matches_closed_form():
    x = 2e-3 * np.array([0, 4.69, 5.94, 6.17, 10.63, 16.8])
    y = 0.2631 * x
    y[3] += 1 * UM
    fit = center_shift_slope(np.column_stack([x, y]))
    n = x.size
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    b = np.sum((x - xm) * (y - ym)) / sxx
    a = ym - b * xm
    resid = y - a - b * x
    se = math.sqrt(np.sum(resid**2) / (n - 2) / sxx)
    assert fit.slope == pytest.approx(b, rel=1e-12)
    assert fit.stderr_slope == pytest.approx(se, rel=1e-9)
    assert fit.stderr_slope > 0
    assert 0 <= fit.r_squared <= 1


def test_slope_needs_two_distinct_points():
    with pytest.raises(ValidationError):
        center_shift_slope([(1.0, 2.0)])
    with pytest.raises(ValidationError):
        center_shift_slope([(1.0, 2.0), (1.0, 3.0)])
