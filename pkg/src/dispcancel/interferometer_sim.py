"""Spectrometer frames of a two-arm interferometer and the two-photon reference.

Geometry convention used everywhere: ``positions`` are stage coordinates and
the optical delay is ``pass_count * position``. The media in the sample arm
replace an equal length of vacuum, so the interference phase at a pixel is

    theta(w, x) = (pass_count * x + L_static + L_vac) * w / c - phi(w),

with ``L_vac = stack.vacuum_path``. Output port ``a`` then carries
``I(w) cos^2(theta / 2)`` and port ``b`` the remainder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import c

from .dispersion_models import MediumStack, phase, stack_phase_derivatives
from .errors import SymmetryError, ValidationError
from .spectral_core import FrequencyGrid, Spectrum, mirror_indices

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class ScanConfig:
    delta_start: float
    delta_stop: float
    step: float
    pass_count: int = 2
    static_offset: float = 0.0

    def __post_init__(self):
        if not self.step > 0:
            raise ValidationError(f"scan step must be > 0, got {self.step}")
        if not self.delta_stop > self.delta_start:
            raise ValidationError("scan stop must exceed start")
        if self.pass_count not in (1, 2):
            raise ValidationError(f"pass_count must be 1 or 2, got {self.pass_count}")

    @property
    def n_positions(self) -> int:
        # small slack so that e.g. (1e-5 - 0) / 1e-7 = 99.999... still counts 101 points
        return int(math.floor((self.delta_stop - self.delta_start) / self.step + 1e-9)) + 1

    @property
    def positions(self) -> np.ndarray:
        return self.delta_start + np.arange(self.n_positions) * self.step


@dataclass(frozen=True)
class FrameSet:
    grid: FrequencyGrid
    positions: np.ndarray
    frames_a: np.ndarray
    omega0: float
    provenance: str = "simulated"
    input_spectrum: Spectrum | None = None
    pass_count: int = 2
    frames_b: np.ndarray | None = None
    clamp_count: int = 0
    notes: tuple = field(default=())

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        fa = np.array(self.frames_a, dtype=float)
        if pos.ndim != 1 or pos.size < 1:
            raise ValidationError("positions must be a non-empty 1-D array")
        if fa.shape != (pos.size, self.grid.n_points):
            raise ValidationError(
                f"frames_a shape {fa.shape} != ({pos.size}, {self.grid.n_points})"
            )
        if self.provenance not in ("simulated", "ingested"):
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        if np.any(fa < 0) or not np.all(np.isfinite(fa)):
            raise ValidationError("frame intensities must be finite and nonnegative")
        if self.input_spectrum is not None and self.input_spectrum.grid != self.grid:
            raise ValidationError("input spectrum is on a different grid")
        for arr in (pos, fa):
            arr.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "frames_a", fa)
        if self.frames_b is not None:
            fb = np.array(self.frames_b, dtype=float)
            if fb.shape != fa.shape:
                raise ValidationError("frames_b shape differs from frames_a")
            fb.setflags(write=False)
            object.__setattr__(self, "frames_b", fb)
        object.__setattr__(self, "notes", tuple(self.notes))

    @property
    def n_positions(self) -> int:
        return self.positions.size

    def subset(self, rows) -> "FrameSet":
        return replace(
            self,
            positions=self.positions[rows],
            frames_a=self.frames_a[rows],
            frames_b=None if self.frames_b is None else self.frames_b[rows],
        )


@dataclass(frozen=True)
class Interferogram:
    positions: np.ndarray
    values: np.ndarray
    kind: str

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if pos.shape != vals.shape or pos.ndim != 1:
            raise ValidationError("positions and values must be 1-D and equal length")
        if self.kind not in ("total_intensity", "quantum_coincidence"):
            raise ValidationError(f"unknown interferogram kind {self.kind!r}")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class NoiseSpec:
    additive_sigma: float = 0.0
    multiplicative_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.additive_sigma < 0 or self.multiplicative_sigma < 0:
            raise ValidationError("noise sigmas must be >= 0")

    @property
    def is_null(self) -> bool:
        return self.additive_sigma == 0 and self.multiplicative_sigma == 0


def _check_geometry(stack: MediumStack, pass_count: int):
    if stack.media and stack.pass_count != pass_count:
        raise ValidationError(
            f"stack pass_count {stack.pass_count} != scan pass_count {pass_count}"
        )


def excess_phase(grid: FrequencyGrid, stack: MediumStack) -> np.ndarray:
    """L_vac * w / c - phi(w): phase the media add relative to the vacuum they replace."""
    w = grid.omegas
    if not stack.media:
        return np.zeros_like(w)
    return stack.vacuum_path * w / c - phase(stack, w)


def frames_at(source: Spectrum, stack: MediumStack, positions, pass_count: int,
              static_offset: float = 0.0) -> np.ndarray:
    """I_a for the given stage positions; each entry depends only on its own (x, w)."""
    _check_geometry(stack, pass_count)
    w = source.grid.omegas
    delay = pass_count * np.asarray(positions, dtype=float) + static_offset
    theta = np.multiply.outer(delay, w / c) + excess_phase(source.grid, stack)
    return source.intensity * np.cos(0.5 * theta) ** 2


def simulate_frames(source: Spectrum, stack: MediumStack, scan: ScanConfig,
                    positions=None) -> FrameSet:
    """Port-a spectrometer frames for every stage position of ``scan``.

    ``positions`` may restrict the computation to a subset of the scan's
    positions (used for chunked processing); results are bit-identical to the
    corresponding rows of a full run.
    """
    pos = scan.positions if positions is None else np.asarray(positions, dtype=float)
    fa = frames_at(source, stack, pos, scan.pass_count, scan.static_offset)
    return FrameSet(
        grid=source.grid,
        positions=pos,
        frames_a=fa,
        omega0=source.omega0,
        provenance="simulated",
        input_spectrum=source,
        pass_count=scan.pass_count,
    )


def port_b(frames: FrameSet) -> np.ndarray:
    """I - I_a, the second output port by energy conservation."""
    if frames.input_spectrum is None:
        raise ValidationError("frame set carries no input spectrum")
    return frames.input_spectrum.intensity - frames.frames_a


def total_intensity(frames: FrameSet) -> Interferogram:
    """Square-law detector signal: sum over pixels at each stage position."""
    return Interferogram(frames.positions, frames.frames_a.sum(axis=1), "total_intensity")


def _require_symmetric(source: Spectrum, rtol: float = 1e-9) -> Spectrum:
    s = source if source.is_aligned else source.snapped()
    j = mirror_indices(s.grid, s.omega0)
    has = j >= 0
    vals = s.intensity
    scale = vals.max() if vals.size else 0.0
    if scale > 0 and np.max(np.abs(vals[has] - vals[j[has]])) > rtol * scale:
        raise SymmetryError(
            "source spectrum is not symmetric about omega0; pass it through symmetrize() first"
        )
    return s


def quantum_coincidence(source: Spectrum, stack: MediumStack, scan: ScanConfig) -> Interferogram:
    """Two-photon coincidence rate against stage position.

    ``source`` is the joint spectral density |A(omega0 + d)|^2 and must be
    mirror-symmetric about omega0. The odd part of the material phase enters
    exactly (as phi(omega0 + d) - phi(omega0 - d)); even orders drop out.
    """
    _check_geometry(stack, scan.pass_count)
    s = _require_symmetric(source)
    grid = s.grid
    j = mirror_indices(grid, s.omega0)
    idx = np.nonzero(j >= 0)[0]
    w = grid.omegas
    d = w[idx] - s.omega0
    ex = excess_phase(grid, stack)
    # excess phase difference: 2 d L_vac / c - (phi(+) - phi(-))
    odd = ex[idx] - ex[j[idx]]
    weights = s.intensity[idx]
    delay = scan.pass_count * scan.positions + scan.static_offset
    arg = np.multiply.outer(delay, 2.0 * d / c) + odd
    values = ((1.0 - np.cos(arg)) * weights).sum(axis=1) * grid.step
    return Interferogram(scan.positions, values, "quantum_coincidence")


def add_noise(frames: FrameSet, spec: NoiseSpec, row_offset: int = 0) -> FrameSet:
    """Seeded noise on port-a frames: max(0, I_a (1 + e_mult) + e_add).

    Each row draws from its own generator keyed on (seed, row_offset + row), so
    a scan processed in chunks gets the same realization as one processed whole.
    """
    if spec.is_null:
        return frames
    fa = frames.frames_a
    noisy = np.empty_like(fa)
    for r in range(fa.shape[0]):
        rng = np.random.default_rng([spec.seed, row_offset + r])
        row = fa[r]
        if spec.multiplicative_sigma:
            row = row * (1.0 + rng.normal(0.0, spec.multiplicative_sigma, row.size))
        if spec.additive_sigma:
            row = row + rng.normal(0.0, spec.additive_sigma, row.size)
        noisy[r] = np.maximum(0.0, row)
    return replace(
        frames,
        frames_a=noisy,
        frames_b=None,
        notes=frames.notes
        + (f"noise add={spec.additive_sigma:g} mult={spec.multiplicative_sigma:g} seed={spec.seed}",),
    )


# --- scale estimates used to choose scan windows and filter cutoffs ----------


def rms_bandwidth(source: Spectrum) -> float:
    """Intensity-weighted rms spread of omega about omega0 (rad/s)."""
    total = source.intensity.sum()
    if not total > 0:
        raise ValidationError("empty spectrum")
    d = source.grid.omegas - source.omega0
    return float(np.sqrt(np.dot(source.intensity, d**2) / total))


def dip_center(stack: MediumStack, omega0: float, pass_count: int, static_offset: float = 0.0) -> float:
    """Stage position where group delay is balanced (dip / envelope centre)."""
    if not stack.media:
        return -static_offset / pass_count
    dphi = stack_phase_derivatives(stack, omega0, 1)[1]
    return (c * dphi - stack.vacuum_path - static_offset) / pass_count


def envelope_fwhm_estimate(source: Spectrum, stack: MediumStack, pass_count: int) -> float:
    """Stage-coordinate FWHM of the total-intensity envelope for a Gaussian of the
    same rms bandwidth, broadened by the stack's group-delay dispersion."""
    sigma = rms_bandwidth(source)
    gdd = stack_phase_derivatives(stack, source.omega0, 2)[2] if stack.media else 0.0
    tau = FWHM_PER_SIGMA * math.sqrt(1.0 / sigma**2 + (gdd * sigma) ** 2)
    return c * tau / pass_count
