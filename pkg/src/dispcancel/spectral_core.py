"""Uniform frequency grids, spectra and anti-correlated pair indexing.

Everything downstream works on a :class:`FrequencyGrid` whose points are exactly
``omega_min + i * step``. Pairing of frequencies ``omega0 + d`` and ``omega0 - d``
is done in index space (``i + j == 2 * i0``), so ``omega0`` has to sit on a grid
point; :func:`snap_omega0` does that and the snap distance travels with the
spectrum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import c
from scipy.interpolate import PchipInterpolator

from .errors import AlignmentError, CentroidError, RangeError, ValidationError

TWO_PI_C = 2.0 * np.pi * c

# fraction of a grid step within which omega0 counts as "on the grid"
ALIGN_TOL = 1e-9


def omega_from_wavelength(lam):
    return TWO_PI_C / np.asarray(lam, dtype=float)


def wavelength_from_omega(omega):
    return TWO_PI_C / np.asarray(omega, dtype=float)


@dataclass(frozen=True)
class FrequencyGrid:
    n_points: int
    omega_min: float
    omega_max: float

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValidationError(f"n_points must be an integer >= 2, got {self.n_points}")
        if not (np.isfinite(self.omega_min) and np.isfinite(self.omega_max)):
            raise ValidationError("grid bounds must be finite")
        if not (self.omega_max > self.omega_min > 0):
            raise ValidationError(
                f"need omega_max > omega_min > 0, got [{self.omega_min}, {self.omega_max}]"
            )
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def step(self) -> float:
        return (self.omega_max - self.omega_min) / (self.n_points - 1)

    @property
    def omegas(self) -> np.ndarray:
        return self.omega_min + np.arange(self.n_points) * self.step

    @property
    def wavelengths(self) -> np.ndarray:
        return wavelength_from_omega(self.omegas)

    def omega_at(self, i: int) -> float:
        return self.omega_min + i * self.step

    def nearest_index(self, omega: float) -> int:
        i = int(round((omega - self.omega_min) / self.step))
        return min(max(i, 0), self.n_points - 1)

    def contains(self, omega: float) -> bool:
        return self.omega_min <= omega <= self.omega_max


@dataclass(frozen=True)
class Spectrum:
    """Nonnegative intensity sampled on a frequency grid.

    ``omega0`` is the symmetry centre used for pairing. ``snap_distance`` records
    how far it was moved to land on a grid point (0 when never snapped).
    """

    grid: FrequencyGrid
    intensity: np.ndarray
    omega0: float
    snap_distance: float = 0.0
    notes: tuple = field(default=())

    def __post_init__(self):
        values = np.array(self.intensity, dtype=float)
        if values.shape != (self.grid.n_points,):
            raise ValidationError(
                f"intensity has shape {values.shape}, grid needs ({self.grid.n_points},)"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError("intensity contains non-finite values")
        if np.any(values < 0):
            raise ValidationError("intensity must be nonnegative")
        if not self.grid.contains(self.omega0):
            raise RangeError(
                f"omega0={self.omega0:.6e} outside grid [{self.grid.omega_min:.6e}, "
                f"{self.grid.omega_max:.6e}]"
            )
        values.setflags(write=False)
        object.__setattr__(self, "intensity", values)
        object.__setattr__(self, "notes", tuple(self.notes))

    @property
    def is_aligned(self) -> bool:
        return is_aligned(self.grid, self.omega0)

    def snapped(self) -> "Spectrum":
        omega0, dist = snap_omega0(self.grid, self.omega0)
        return replace(self, omega0=omega0, snap_distance=self.snap_distance + dist)

    def with_intensity(self, values) -> "Spectrum":
        return replace(self, intensity=np.asarray(values, dtype=float))

    def total(self) -> float:
        return float(self.intensity.sum())


@dataclass(frozen=True)
class WavelengthSeries:
    """One spectrometer frame: values against pixel wavelengths (m)."""

    wavelengths: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        lam = np.array(self.wavelengths, dtype=float)
        vals = np.array(self.values, dtype=float)
        if lam.ndim != 1 or vals.shape != lam.shape:
            raise ValidationError("wavelengths and values must be 1-D arrays of equal length")
        if lam.size < 4:
            raise ValidationError("need at least 4 samples for interpolation")
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(vals))):
            raise ValidationError("non-finite wavelength or value")
        if np.any(lam <= 0):
            raise ValidationError("wavelengths must be positive")
        if np.any(vals < 0):
            raise ValidationError("values must be nonnegative")
        d = np.diff(lam)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValidationError("wavelengths must be strictly monotone")
        lam.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "wavelengths", lam)
        object.__setattr__(self, "values", vals)


def grid_from_wavelength_range(lambda_min: float, lambda_max: float, n_points: int) -> FrequencyGrid:
    if not (lambda_min > 0 and lambda_max > 0):
        raise ValidationError("wavelength bounds must be positive")
    if not lambda_min < lambda_max:
        raise ValidationError(f"need lambda_min < lambda_max, got {lambda_min} >= {lambda_max}")
    return FrequencyGrid(n_points, TWO_PI_C / lambda_max, TWO_PI_C / lambda_min)


def resample_to_grid(series: WavelengthSeries, grid: FrequencyGrid, jacobian: bool = False) -> Spectrum:
    """Interpolate a wavelength-sampled frame onto ``grid`` (PCHIP in omega).

    With ``jacobian=True`` values are treated as a density per unit wavelength and
    converted to per unit angular frequency (factor ``lambda**2 / (2 pi c)``).
    The returned spectrum's ``omega0`` is provisional (grid midpoint); callers set
    it from their omega0 policy.
    """
    omega = omega_from_wavelength(series.wavelengths)
    values = series.values
    if jacobian:
        values = values * series.wavelengths**2 / TWO_PI_C
    order = np.argsort(omega)
    omega = omega[order]
    values = values[order]
    # allow round-off from wavelength <-> frequency conversions at the edges
    slack = 1e-12 * grid.omega_max
    if grid.omega_min < omega[0] - slack or grid.omega_max > omega[-1] + slack:
        raise RangeError(
            f"grid [{grid.omega_min:.9e}, {grid.omega_max:.9e}] rad/s is not inside the "
            f"series range [{omega[0]:.9e}, {omega[-1]:.9e}] rad/s; no extrapolation"
        )
    targets = np.clip(grid.omegas, omega[0], omega[-1])
    out = PchipInterpolator(omega, values, extrapolate=False)(targets)
    out = np.maximum(out, 0.0)
    return Spectrum(grid, out, omega0=0.5 * (grid.omega_min + grid.omega_max))


def gaussian_spectrum(
    grid: FrequencyGrid, lambda_center: float, fwhm_lambda: float, peak: float = 1.0
) -> Spectrum:
    """Gaussian in omega, centred at 2 pi c / lambda_center.

    The wavelength FWHM is converted to first order:
    ``fwhm_omega = 2 pi c * fwhm_lambda / lambda_center**2``.
    Tails falling off the grid are truncated and reported in ``notes`` (and as a
    ``UserWarning``) rather than rejected.
    """
    if lambda_center <= 0 or fwhm_lambda <= 0 or peak < 0:
        raise ValidationError("lambda_center and fwhm_lambda must be positive, peak nonnegative")
    center = TWO_PI_C / lambda_center
    if not grid.contains(center):
        raise RangeError(f"centre wavelength {lambda_center:.6e} m is outside the grid")
    fwhm_omega = TWO_PI_C * fwhm_lambda / lambda_center**2
    sigma = fwhm_omega / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    values = peak * np.exp(-0.5 * ((grid.omegas - center) / sigma) ** 2)
    notes = []
    if center - fwhm_omega / 2 < grid.omega_min or center + fwhm_omega / 2 > grid.omega_max:
        msg = "gaussian FWHM band exceeds the grid; tails truncated"
        notes.append(msg)
        warnings.warn(msg, stacklevel=2)
    return Spectrum(grid, values, omega0=center, notes=tuple(notes))


def is_aligned(grid: FrequencyGrid, omega0: float) -> bool:
    pos = (omega0 - grid.omega_min) / grid.step
    return abs(pos - round(pos)) <= ALIGN_TOL and 0 <= round(pos) < grid.n_points


def snap_omega0(grid: FrequencyGrid, omega0: float) -> tuple[float, float]:
    """Return (grid point nearest to omega0, absolute snap distance)."""
    if not grid.contains(omega0):
        raise RangeError(f"omega0={omega0:.6e} outside grid")
    i = grid.nearest_index(omega0)
    snapped = grid.omega_at(i)
    return snapped, abs(snapped - omega0)


def center_index(grid: FrequencyGrid, omega0: float) -> int:
    if not is_aligned(grid, omega0):
        raise AlignmentError(
            f"omega0={omega0:.9e} is not on a grid point (step {grid.step:.6e}); snap it first"
        )
    return int(round((omega0 - grid.omega_min) / grid.step))


def mirror_index(grid: FrequencyGrid, omega0: float, i: int) -> int | None:
    """Index j with omega_i + omega_j == 2 omega0, or None when j is off-grid."""
    if not 0 <= i < grid.n_points:
        raise IndexError(f"index {i} outside grid of {grid.n_points} points")
    j = 2 * center_index(grid, omega0) - i
    if 0 <= j < grid.n_points:
        return j
    return None


def mirror_indices(grid: FrequencyGrid, omega0: float) -> np.ndarray:
    """Vectorised :func:`mirror_index`; -1 marks pixels without a partner."""
    j = 2 * center_index(grid, omega0) - np.arange(grid.n_points)
    return np.where((j >= 0) & (j < grid.n_points), j, -1)


def mirror_weights(spectrum: Spectrum) -> np.ndarray:
    """The mirrored intensity I(2 omega0 - omega), zero where no partner exists."""
    j = mirror_indices(spectrum.grid, spectrum.omega0)
    return np.where(j >= 0, spectrum.intensity[j], 0.0)


def symmetrize(spectrum: Spectrum) -> Spectrum:
    """Multiply a spectrum by its mirror image about omega0 (snapped first)."""
    s = spectrum if spectrum.is_aligned else spectrum.snapped()
    # I[i]*I[j] == I[j]*I[i] in IEEE arithmetic, so the result is exactly symmetric
    out = s.intensity * mirror_weights(s)
    return replace(s, intensity=out)


def centroid_frequency(spectrum: Spectrum) -> float:
    total = spectrum.intensity.sum()
    if not total > 0:
        raise CentroidError("spectrum has zero total intensity; centroid undefined")
    return float(np.dot(spectrum.grid.omegas, spectrum.intensity) / total)
