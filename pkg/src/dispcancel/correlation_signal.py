"""The frequency-anti-correlated correlation signal S and its closed form.

Processing order for measured or simulated frames:

1. multiply I and every I_a frame by the mirror image of I about omega0
   (:func:`symmetrize_frames`),
2. recover port b by energy conservation (:func:`extract_conjugate`),
3. sum I_a(omega0 + d) I_b(omega0 - d) over exact index pairs (:func:`correlation`).

For a source symmetric about omega0, the sum reduces to

    S = 1/4 sum_d W(d) [1 - 1/2 cos(theta(+) - theta(-)) - 1/2 cos(theta(+) + theta(-))] dw

with ``W(d) = I(omega0 + d) I(omega0 - d)``: the difference term carries only the
odd part of the material phase, the sum term only the even part (the fast
carrier). :func:`closed_form_s` evaluates exactly this.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import factorial

import numpy as np
from scipy.constants import c

from .dispersion_models import MediumStack, taylor_extract
from .errors import AlignmentError, ConsistencyError, DegenerateGridError, ValidationError
from .interferometer_sim import (
    FWHM_PER_SIGMA,
    FrameSet,
    ScanConfig,
    _check_geometry,
)
from .spectral_core import (
    Spectrum,
    center_index,
    mirror_indices,
    mirror_weights,
    symmetrize,
)

CLAMP_LIMIT = 0.05  # of peak input intensity
TAYLOR_PHASE_TOL = 1e-3  # rad, max truncation error before closed_form_s warns


@dataclass(frozen=True)
class CorrelationTrace:
    positions: np.ndarray
    s_values: np.ndarray
    omega0: float
    pair_count: int
    filtered: np.ndarray | None = None
    filter_spec: object = None
    chain: tuple = field(default=())

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        s = np.asarray(self.s_values, dtype=float)
        if pos.shape != s.shape or pos.ndim != 1:
            raise ValidationError("positions and s_values must be 1-D and equal length")
        if np.any(s < 0):
            raise ValidationError("S must be nonnegative")
        if self.pair_count < 1:
            raise ValidationError("pair_count must be >= 1")
        if self.filtered is not None:
            f = np.asarray(self.filtered, dtype=float)
            if f.shape != s.shape:
                raise ValidationError("filtered trace must share positions with the raw trace")
            object.__setattr__(self, "filtered", f)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "s_values", s)
        object.__setattr__(self, "chain", tuple(self.chain))

    @property
    def best(self) -> np.ndarray:
        """Filtered values when available, raw otherwise."""
        return self.s_values if self.filtered is None else self.filtered

    def concat(self, other: "CorrelationTrace") -> "CorrelationTrace":
        if other.omega0 != self.omega0 or other.pair_count != self.pair_count:
            raise ValidationError("cannot join traces with different pairing")
        return replace(
            self,
            positions=np.concatenate([self.positions, other.positions]),
            s_values=np.concatenate([self.s_values, other.s_values]),
            filtered=None,
            filter_spec=None,
        )


def input_spectrum_from_arms(ref_arm: Spectrum, sample_arm: Spectrum) -> Spectrum:
    """I = 2 (I_ref + I_sample), each arm measured with the other blocked."""
    if ref_arm.grid != sample_arm.grid:
        raise ValidationError("reference and sample arm spectra are on different grids")
    return replace(ref_arm, intensity=2.0 * (ref_arm.intensity + sample_arm.intensity))


def symmetrize_frames(frames: FrameSet, spectrum: Spectrum) -> tuple[FrameSet, Spectrum]:
    """Weight I and every I_a frame by I(2 omega0 - omega).

    Returns the reweighted frames (without port b; extract it afterwards) and
    the symmetrized input spectrum. omega0 is snapped to the grid.
    """
    if spectrum.grid != frames.grid:
        raise ValidationError("spectrum and frames are on different grids")
    s = spectrum if spectrum.is_aligned else spectrum.snapped()
    m = mirror_weights(s)
    sym = symmetrize(s)
    out = replace(
        frames,
        frames_a=frames.frames_a * m,
        frames_b=None,
        omega0=s.omega0,
        input_spectrum=sym,
        notes=frames.notes + ("symmetrized",),
    )
    return out, sym


def extract_conjugate(frames: FrameSet, input_spectrum: Spectrum | None = None) -> FrameSet:
    """Port b from energy conservation, I_b = I - I_a, clamped at zero.

    Raises ConsistencyError when I_a exceeds I by more than 5 % of the peak of I
    anywhere; smaller excursions are clamped and counted in ``clamp_count``.
    """
    spec = input_spectrum if input_spectrum is not None else frames.input_spectrum
    if spec is None:
        raise ValidationError("no input spectrum available for energy conservation")
    if spec.grid != frames.grid:
        raise ValidationError("input spectrum is on a different grid from the frames")
    total = spec.intensity
    fb = total - frames.frames_a
    peak = total.max()
    worst = -fb.min() if fb.size else 0.0
    if worst > CLAMP_LIMIT * peak:
        p, i = np.unravel_index(np.argmin(fb), fb.shape)
        raise ConsistencyError(
            f"I_a exceeds I by {worst:.4g} (> {CLAMP_LIMIT:.0%} of peak {peak:.4g}) "
            f"at position index {p}, pixel {i}; calibration mismatch"
        )
    neg = fb < 0
    clamps = int(neg.sum())
    if clamps:
        fb = np.where(neg, 0.0, fb)
    return replace(frames, frames_b=fb, clamp_count=clamps, input_spectrum=spec)


def _pair_table(grid, omega0):
    j = mirror_indices(grid, omega0)
    idx = np.nonzero(j >= 0)[0]
    return idx, j[idx]


def correlation(frames: FrameSet, omega0: float | None = None, min_pairs: int = 2) -> CorrelationTrace:
    """S(x) = sum_i I_a[x, i] I_b[x, mirror(i)] d_omega over all pixels with a partner."""
    if frames.frames_b is None:
        raise ValidationError("frames carry no port-b data; run extract_conjugate first")
    omega0 = frames.omega0 if omega0 is None else omega0
    center_index(frames.grid, omega0)  # alignment check
    idx, partner = _pair_table(frames.grid, omega0)
    if idx.size < min_pairs:
        raise DegenerateGridError(f"only {idx.size} anti-correlated pair(s) on this grid")
    prod = frames.frames_a[:, idx] * frames.frames_b[:, partner]
    s = prod.sum(axis=1) * frames.grid.step
    return CorrelationTrace(frames.positions, s, omega0, int(idx.size), chain=("correlation",))


def correlation_bruteforce(frames: FrameSet, omega0: float | None = None,
                           min_pairs: int = 2) -> CorrelationTrace:
    """Reference implementation: explicit loop over every (i, j) index pair."""
    if frames.frames_b is None:
        raise ValidationError("frames carry no port-b data")
    grid = frames.grid
    omega0 = frames.omega0 if omega0 is None else omega0
    n = grid.n_points
    dw = (grid.omega_max - grid.omega_min) / (n - 1)
    k = (omega0 - grid.omega_min) / dw
    k0 = int(round(k))
    if abs(k - k0) > 1e-9 or not 0 <= k0 < n:
        raise AlignmentError("omega0 not on the grid")
    fa = frames.frames_a.tolist()
    fb = frames.frames_b.tolist()
    pairs = 0
    for i in range(n):
        for j in range(n):
            if i + j == 2 * k0:
                pairs += 1
    if pairs < min_pairs:
        raise DegenerateGridError(f"only {pairs} pair(s)")
    out = []
    for p in range(len(fa)):
        acc = 0.0
        for i in range(n):
            for j in range(n):
                if i + j == 2 * k0:
                    acc += fa[p][i] * fb[p][j]
        out.append(acc * dw)
    return CorrelationTrace(frames.positions, np.array(out), omega0, pairs, chain=("bruteforce",))


def effective_pair_density(source: Spectrum) -> Spectrum:
    """W(omega0 + d) = I'(omega0 + d) I'(omega0 - d) with I' the symmetrized source.

    This is the spectral weight of the dispersion-cancelled term of S; handed to
    :func:`quantum_coincidence` it plays the role of |A|^2.
    """
    return symmetrize(symmetrize(source))


def expected_dip_fwhm(source: Spectrum, pass_count: int) -> float:
    """Stage FWHM of the S dip for a Gaussian pair density of the same rms width."""
    w = effective_pair_density(source)
    d = w.grid.omegas - w.omega0
    total = w.intensity.sum()
    if not total > 0:
        raise ValidationError("source has no paired spectral content")
    sigma_w = np.sqrt(np.dot(w.intensity, d**2) / total)
    return float(FWHM_PER_SIGMA * c / (2.0 * sigma_w) / pass_count)


def closed_form_s(source: Spectrum, stack: MediumStack, scan: ScanConfig,
                  order: int = 4) -> CorrelationTrace:
    """Evaluate S from the Taylor-expanded material phase, without frames.

    Uses the same symmetrization as the frame pipeline, so for media that are
    exactly polynomial of degree <= ``order`` it matches
    ``correlation(extract_conjugate(symmetrize_frames(simulate_frames(...))))``
    up to round-off. Truncation error above 1e-3 rad is noted in ``chain``.
    """
    _check_geometry(stack, scan.pass_count)
    sym = symmetrize(source)
    grid = sym.grid
    w0 = sym.omega0
    idx, partner = _pair_table(grid, w0)
    weights = sym.intensity[idx] * sym.intensity[partner]
    d = grid.omegas[idx] - w0

    notes = ["closed_form"]
    odd = np.zeros_like(d)
    even = np.zeros_like(d)
    e0 = 0.0
    for m in stack.media:
        poly = taylor_extract(m, w0, order, grid=grid)
        err = stack.pass_count * m.thickness * (poly.residual_max or 0.0)
        if err > TAYLOR_PHASE_TOL:
            notes.append(f"accuracy warning: {m.name} Taylor truncation phase error {err:.3g} rad")
        scale = stack.pass_count * m.thickness
        for n, kn in enumerate(poly.k_taylor):
            if n == 0:
                e0 += scale * kn
            elif n % 2:
                odd += scale * kn * d**n / factorial(n)
            else:
                even += scale * kn * d**n / factorial(n)
    vac = stack.vacuum_path
    delay = scan.pass_count * scan.positions + scan.static_offset + vac
    # theta(+) - theta(-) and theta(+) + theta(-)
    diff = np.multiply.outer(delay, 2.0 * d / c) - 2.0 * odd
    carrier = 2.0 * w0 * delay / c - 2.0 * e0
    total = carrier[:, None] - 2.0 * even
    integrand = 1.0 - 0.5 * np.cos(diff) - 0.5 * np.cos(total)
    s = 0.25 * (integrand * weights).sum(axis=1) * grid.step
    return CorrelationTrace(scan.positions, s, w0, int(idx.size), chain=tuple(notes))
