"""Filtering and fitting of interference traces.

* :func:`lowpass` -- raised-cosine Fourier low-pass on a uniformly sampled trace.
* :func:`fit_gaussian_dip` -- ``A - B exp(-(x - xc)^2 / (2 sigma^2))`` by
  Levenberg-Marquardt with analytic Jacobian.
* visibilities, broadening ratios and the centre-shift slope regression.

Visibility conventions: fringe visibility is (max - min) / (max + min); dip
visibility is depth over baseline, B / A, which reads 0.5 for the ideal
classical correlation dip.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.signal import hilbert
from scipy.stats import linregress

from .correlation_signal import CorrelationTrace
from .errors import FilterSpecError, FitError, NoDipError, ValidationError
from .interferometer_sim import FWHM_PER_SIGMA, Interferogram

DEFAULT_TAPER = 0.1
FIT_WINDOW_FWHM = 4.0


@dataclass(frozen=True)
class FilterSpec:
    cutoff: float  # cycles per metre of stage travel
    taper: float = DEFAULT_TAPER

    def __post_init__(self):
        if not self.cutoff > 0:
            raise FilterSpecError(f"cutoff must be > 0, got {self.cutoff}")
        if not 0 <= self.taper <= 0.5:
            raise FilterSpecError(f"taper must lie in [0, 0.5], got {self.taper}")


@dataclass(frozen=True)
class DipFit:
    baseline: float
    depth: float
    center: float
    sigma: float
    residual_rms: float
    converged: bool
    iterations: int
    message: str = ""

    @property
    def fwhm(self) -> float:
        return FWHM_PER_SIGMA * self.sigma

    @property
    def visibility(self) -> float:
        return self.depth / self.baseline

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fwhm"] = self.fwhm
        d["visibility"] = self.visibility
        return d


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr_slope: float
    r_squared: float
    n_points: int

    def to_dict(self) -> dict:
        return asdict(self)


# --- low-pass filter ----------------------------------------------------------


def _uniform_step(x) -> float:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise FilterSpecError("need at least two samples")
    d = np.diff(x)
    step = float(np.mean(d))
    if not step > 0 or np.max(np.abs(d - step)) > 1e-6 * step:
        raise FilterSpecError("positions must be uniformly spaced and increasing")
    return step


def raised_cosine(freq, spec: FilterSpec) -> np.ndarray:
    """Transfer function: 1 up to fc(1 - taper), cosine roll-off to 0 at fc(1 + taper)."""
    f = np.abs(np.asarray(freq, dtype=float))
    fc, beta = spec.cutoff, spec.taper
    if beta == 0:
        return (f <= fc).astype(float)
    lo, hi = fc * (1 - beta), fc * (1 + beta)
    h = np.where(f <= lo, 1.0, 0.0)
    band = (f > lo) & (f < hi)
    h[band] = 0.5 * (1.0 + np.cos(np.pi * (f[band] - lo) / (hi - lo)))
    return h


def lowpass_values(x, y, spec: FilterSpec) -> np.ndarray:
    step = _uniform_step(x)
    y = np.asarray(y, dtype=float)
    nyquist = 0.5 / step
    n = y.size
    npad = 1 << max(1, (n - 1).bit_length())
    if not spec.cutoff < nyquist:
        raise FilterSpecError(f"cutoff {spec.cutoff:.4g} /m is not below Nyquist {nyquist:.4g} /m")
    if not spec.cutoff > 1.0 / (npad * step):
        raise FilterSpecError("cutoff is below the frequency resolution of the trace")
    mean = y.mean()
    padded = np.full(npad, mean)
    padded[:n] = y
    spectrum = np.fft.rfft(padded - mean)
    spectrum *= raised_cosine(np.fft.rfftfreq(npad, d=step), spec)
    return np.fft.irfft(spectrum, n=npad)[:n] + mean


def lowpass(trace: CorrelationTrace, spec: FilterSpec) -> CorrelationTrace:
    """Attach a low-passed copy of the raw S values (the raw values are kept)."""
    filt = lowpass_values(trace.positions, trace.s_values, spec)
    return replace(trace, filtered=filt, filter_spec=spec, chain=trace.chain + ("lowpass",))


def carrier_frequency(omega0: float, pass_count: int) -> float:
    """Spatial frequency of the fast S term in stage coordinates (cycles/m)."""
    from scipy.constants import c

    return pass_count * omega0 / (math.pi * c)


def fold_frequency(f: float, step: float) -> float:
    """Apparent frequency of a tone after sampling at ``step``."""
    fs = 1.0 / step
    f = math.fmod(f, fs)
    return min(f, fs - f)


def default_filter_spec(step: float, omega0: float, pass_count: int,
                        expected_fwhm: float, taper: float = DEFAULT_TAPER) -> FilterSpec:
    """Geometric mean of the envelope band (1/FWHM) and the (folded) carrier frequency."""
    envelope = 1.0 / expected_fwhm
    carrier = fold_frequency(carrier_frequency(omega0, pass_count), step)
    if carrier <= envelope:
        raise FilterSpecError(
            "sampled carrier frequency does not sit above the envelope band; "
            "choose a different scan step"
        )
    return FilterSpec(math.sqrt(envelope * carrier), taper)


# --- Gaussian dip fit ---------------------------------------------------------


def dip_model(x, params):
    a, b, xc, sigma = params
    return a - b * np.exp(-((x - xc) ** 2) / (2.0 * sigma**2))


def dip_jacobian(x, params) -> np.ndarray:
    """d model / d(A, B, xc, sigma), shape (len(x), 4)."""
    _, b, xc, sigma = params
    u = x - xc
    e = np.exp(-(u**2) / (2.0 * sigma**2))
    return np.column_stack(
        [np.ones_like(x), -e, -b * e * u / sigma**2, -b * e * u**2 / sigma**3]
    )


def _half_depth_width(x, y, i_min, level):
    """Width between the level crossings on either side of i_min (linear interp)."""
    i = i_min
    while i > 0 and y[i - 1] < level:
        i -= 1
    j = i_min
    while j < len(y) - 1 and y[j + 1] < level:
        j += 1
    if i == 0 or j == len(y) - 1:
        return None
    left = x[i - 1] + (level - y[i - 1]) * (x[i] - x[i - 1]) / (y[i] - y[i - 1])
    right = x[j] + (level - y[j]) * (x[j + 1] - x[j]) / (y[j + 1] - y[j])
    return right - left


def initial_guess(x, y):
    """(A, B, xc, sigma) from quartile baseline, argmin and half-depth width."""
    n = len(y)
    q = max(1, n // 4)
    a = float(np.median(np.concatenate([y[:q], y[-q:]])))
    i_min = int(np.argmin(y))
    b = a - float(y[i_min])
    scale = max(abs(a), float(np.max(np.abs(y))))
    if not b > 1e-12 * scale:
        raise NoDipError("trace is flat: no dip below the baseline")
    width = _half_depth_width(x, y, i_min, a - b / 2)
    if width is None or width <= 0:
        width = (x[-1] - x[0]) / 4
    return np.array([a, b, float(x[i_min]), width / FWHM_PER_SIGMA])


def _gradient_small(J, r, g, gtol, gabs):
    """Scaled gradient test: max_j |J_j . r| / (|J_j| |r|) <= gtol, or |g| tiny outright."""
    if np.max(np.abs(g)) <= gabs:
        return True
    norms = np.linalg.norm(J, axis=0) * np.linalg.norm(r)
    norms[norms == 0] = 1.0
    return bool(np.max(np.abs(g) / norms) <= gtol)


def _levenberg_marquardt(x, y, p0, max_iter=200, gtol=1e-8, gabs=1e-12, xtol=1e-10):
    """Marquardt-damped Gauss-Newton on the dip model.

    Converged means the scaled gradient of the cost is below ``gtol`` (or the raw
    gradient below ``gabs``) and the proposed step is below ``xtol`` relative to
    the parameters.
    """
    p = p0.astype(float).copy()
    r = dip_model(x, p) - y
    cost = float(r @ r)
    lam = 1e-3
    converged, message, it = False, "max iterations reached", 0
    for it in range(1, max_iter + 1):
        J = dip_jacobian(x, p)
        g = J.T @ r
        JTJ = J.T @ J
        scale = np.diag(JTJ).copy()
        scale[scale == 0] = 1.0
        accepted = False
        for _ in range(40):
            try:
                dp = np.linalg.solve(JTJ + lam * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = p + dp
            if trial[3] == 0:
                trial[3] = p[3]
            rt = dip_model(x, trial) - y
            ct = float(rt @ rt)
            if ct <= cost:
                accepted = True
                break
            lam *= 10
        small_grad = _gradient_small(J, r, g, gtol, gabs)
        small_step = np.linalg.norm(dp) <= xtol * (np.linalg.norm(p) + xtol)
        if not accepted:
            # no damping yields a decrease: we sit on the minimum to round-off
            converged = bool(small_grad)
            message = "converged (no further decrease)" if converged else "stalled"
            break
        p, r, cost = trial, rt, ct
        lam = max(lam / 10, 1e-12)
        if small_grad and small_step:
            converged, message = True, "converged"
            break
    p[3] = abs(p[3])
    return p, cost, converged, it, message


def fit_gaussian_dip(positions, values, window: float | None = FIT_WINDOW_FWHM,
                     max_iter: int = 200) -> DipFit:
    """Least-squares Gaussian dip fit.

    ``window`` restricts the fit to +-window initial-FWHM about the argmin
    (None fits everything). Positions and values are rescaled internally so the
    problem is well conditioned whatever the units.
    """
    x = np.asarray(positions, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("positions and values must be 1-D and of equal length")
    if x.size < 8:
        raise ValidationError("need at least 8 samples to fit a dip")
    p0 = initial_guess(x, y)
    if window is not None:
        half = window * FWHM_PER_SIGMA * p0[3]
        keep = np.abs(x - p0[2]) <= half
        if keep.sum() >= 8:
            x, y = x[keep], y[keep]
    x0 = 0.5 * (x[0] + x[-1])
    xs = 0.5 * (x[-1] - x[0]) or 1.0
    ys = float(np.max(np.abs(y))) or 1.0
    xn = (x - x0) / xs
    yn = y / ys
    q0 = np.array([p0[0] / ys, p0[1] / ys, (p0[2] - x0) / xs, p0[3] / xs])
    q, cost, converged, iters, msg = _levenberg_marquardt(xn, yn, q0, max_iter=max_iter)
    a, b = q[0] * ys, q[1] * ys
    xc, sigma = q[2] * xs + x0, q[3] * xs
    rms = math.sqrt(cost / len(yn)) * ys
    return DipFit(float(a), float(b), float(xc), float(sigma), float(rms), bool(converged), iters, msg)


def fit_trace(trace: CorrelationTrace, **kwargs) -> DipFit:
    return fit_gaussian_dip(trace.positions, trace.best, **kwargs)


def half_max_fwhm(positions, values, baseline: float | None = None) -> float:
    """Direct FWHM of a dip from linear-interpolated half-depth crossings."""
    x = np.asarray(positions, dtype=float)
    y = np.asarray(values, dtype=float)
    a = initial_guess(x, y)[0] if baseline is None else baseline
    i = int(np.argmin(y))
    w = _half_depth_width(x, y, i, 0.5 * (a + y[i]))
    if w is None:
        raise NoDipError("dip does not return to half depth on both sides")
    return float(w)


# --- envelopes and visibilities ------------------------------------------------


@dataclass(frozen=True)
class EnvelopeFit:
    center: float
    fwhm: float
    peak: float
    baseline: float
    residual_rms: float
    converged: bool

    def to_dict(self) -> dict:
        return asdict(self)


def fringe_envelope(gram: Interferogram):
    """(|analytic signal| of the AC part, baseline) for an interferogram."""
    v = gram.values
    q = max(1, v.size // 8)
    baseline = float(np.median(np.concatenate([v[:q], v[-q:]])))
    return np.abs(hilbert(v - baseline)), baseline


def fit_envelope(gram: Interferogram) -> EnvelopeFit:
    """Gaussian fit to the fringe envelope; the FWHM is the interferogram width."""
    env, baseline = fringe_envelope(gram)
    fit = fit_gaussian_dip(gram.positions, -env, window=None)
    return EnvelopeFit(
        center=fit.center,
        fwhm=fit.fwhm,
        peak=fit.depth - fit.baseline,
        baseline=baseline,
        residual_rms=fit.residual_rms,
        converged=fit.converged,
    )


def fringe_visibility(gram: Interferogram, window) -> float:
    """(max - min) / (max + min) over positions inside ``window = (start, stop)``."""
    lo, hi = window
    sel = (gram.positions >= lo) & (gram.positions <= hi)
    if not sel.any():
        raise ValidationError("visibility window contains no samples")
    v = gram.values[sel]
    vmax, vmin = float(v.max()), float(v.min())
    if vmax + vmin == 0:
        return 0.0
    return (vmax - vmin) / (vmax + vmin)


def peak_window(gram: Interferogram, fringe_period: float, periods: float = 1.0):
    """Window of +-periods fringes around the envelope maximum."""
    env, _ = fringe_envelope(gram)
    xc = float(gram.positions[int(np.argmax(env))])
    half = periods * fringe_period
    return (xc - half, xc + half)


def dip_visibility(fit: DipFit) -> float:
    if not fit.converged:
        raise FitError(f"dip fit did not converge ({fit.message})")
    return fit.visibility


def broadening_ratio(fit_with, fit_without) -> float:
    """Percentage FWHM increase of ``fit_with`` over ``fit_without``."""
    for f in (fit_with, fit_without):
        if not f.converged:
            raise FitError("broadening ratio needs converged fits")
    return 100.0 * (fit_with.fwhm / fit_without.fwhm - 1.0)


def center_shift_slope(points) -> SlopeFit:
    """OLS slope of centre shift against glass path (both in metres)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValidationError("need at least two (thickness, shift) points")
    x, y = pts[:, 0], pts[:, 1]
    if np.ptp(x) == 0:
        raise ValidationError("all thicknesses are equal; slope undefined")
    res = linregress(x, y)
    stderr = float(res.stderr) if pts.shape[0] > 2 else 0.0
    r2 = float(res.rvalue**2) if np.ptp(y) > 0 else 1.0
    return SlopeFit(float(res.slope), float(res.intercept), stderr, min(max(r2, 0.0), 1.0), int(pts.shape[0]))
