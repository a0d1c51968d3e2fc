"""Material dispersion: Sellmeier index, wavevector phase and its Taylor series.

Units are SI except the Sellmeier ``C`` terms, which follow catalogue
convention (um^2, wavelength in um).

Writing the Sellmeier form in angular frequency,

    n^2(w) = 1 + sum_i B_i / (1 - u_i w^2),   u_i = C_i * 1e-12 / (2 pi c)^2,

makes analytic derivatives straightforward. First and second derivatives of
k(w) = n(w) w / c are closed form; higher orders (for :func:`taylor_extract`)
come from truncated power-series arithmetic, which is exact up to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy.constants import c

from .errors import DomainError, ValidationError
from .spectral_core import TWO_PI_C, FrequencyGrid

MAX_TAYLOR_ORDER = 4

DEFAULT_BAND = (0.4e-6, 1.1e-6)

# relative distance to a Sellmeier resonance treated as sitting on it
POLE_TOL = 1e-9


@dataclass(frozen=True)
class SellmeierMedium:
    b_coeffs: tuple
    c_coeffs: tuple  # um^2
    thickness: float = 0.0
    name: str = "sellmeier"
    band: tuple = DEFAULT_BAND  # wavelength limits in m

    def __post_init__(self):
        b = tuple(float(x) for x in self.b_coeffs)
        cc = tuple(float(x) for x in self.c_coeffs)
        if len(b) != len(cc) or not b:
            raise ValidationError("Sellmeier B and C lists must be non-empty and of equal length")
        if not self.thickness >= 0:
            raise ValidationError(f"thickness must be >= 0, got {self.thickness}")
        lo, hi = self.band
        if not 0 < lo < hi:
            raise ValidationError(f"bad wavelength band {self.band}")
        object.__setattr__(self, "b_coeffs", b)
        object.__setattr__(self, "c_coeffs", cc)
        object.__setattr__(self, "band", (float(lo), float(hi)))

    @property
    def omega_band(self) -> tuple:
        return (TWO_PI_C / self.band[1], TWO_PI_C / self.band[0])

    def with_thickness(self, thickness: float) -> "SellmeierMedium":
        return SellmeierMedium(self.b_coeffs, self.c_coeffs, thickness, self.name, self.band)


@dataclass(frozen=True)
class PolynomialPhaseMedium:
    """k(w) = sum_n k_taylor[n] (w - omega_ref)^n / n!   (k_taylor[n] in s^n/m)."""

    omega_ref: float
    k_taylor: tuple
    thickness: float = 0.0
    name: str = "polynomial"
    omega_band: tuple | None = None
    residual_max: float | None = None

    def __post_init__(self):
        k = tuple(float(x) for x in self.k_taylor)
        if not k or not all(np.isfinite(k)):
            raise ValidationError("k_taylor must be a non-empty list of finite numbers")
        if not self.omega_ref > 0:
            raise ValidationError("omega_ref must be positive")
        if not self.thickness >= 0:
            raise ValidationError(f"thickness must be >= 0, got {self.thickness}")
        if self.omega_band is not None:
            lo, hi = self.omega_band
            if not 0 < lo < hi:
                raise ValidationError(f"bad omega band {self.omega_band}")
            object.__setattr__(self, "omega_band", (float(lo), float(hi)))
        object.__setattr__(self, "k_taylor", k)

    def with_thickness(self, thickness: float) -> "PolynomialPhaseMedium":
        return PolynomialPhaseMedium(
            self.omega_ref, self.k_taylor, thickness, self.name, self.omega_band, self.residual_max
        )


@dataclass(frozen=True)
class MediumStack:
    media: tuple = field(default=())
    pass_count: int = 1

    def __post_init__(self):
        if self.pass_count not in (1, 2):
            raise ValidationError(f"pass_count must be 1 or 2, got {self.pass_count}")
        object.__setattr__(self, "media", tuple(self.media))

    @property
    def vacuum_path(self) -> float:
        """Optical path the media displace (pass_count * total thickness)."""
        return self.pass_count * sum(m.thickness for m in self.media)


# Schott catalogue values; not taken from any measurement in this project.
BK7 = SellmeierMedium(
    b_coeffs=(1.03961212, 0.231792344, 1.01046945),
    c_coeffs=(0.00600069867, 0.0200179144, 103.560653),
    name="BK7",
)

VACUUM = SellmeierMedium(
    b_coeffs=(0.0, 0.0, 0.0), c_coeffs=(0.0, 0.0, 0.0), name="vacuum", band=(1e-9, 1e-3)
)

BUILTIN_MEDIA = {"bk7": BK7, "vacuum": VACUUM}


def builtin_medium(name: str, thickness: float = 0.0) -> SellmeierMedium:
    try:
        base = BUILTIN_MEDIA[name.lower()]
    except KeyError:
        raise ValidationError(
            f"unknown medium '{name}'; built-ins are {sorted(m.name for m in BUILTIN_MEDIA.values())}"
        ) from None
    return base.with_thickness(thickness)


# --- band / pole checks ---------------------------------------------------


def _check_omega(medium, omega):
    omega = np.asarray(omega, dtype=float)
    band = medium.omega_band
    if band is not None:
        lo, hi = band
        # a relative hair of slack for grid endpoints converted from wavelengths
        if np.any(omega < lo * (1 - 1e-12)) or np.any(omega > hi * (1 + 1e-12)):
            raise DomainError(
                f"{medium.name}: frequency outside supported band "
                f"[{lo:.6e}, {hi:.6e}] rad/s"
            )
    if isinstance(medium, SellmeierMedium):
        u = _sellmeier_u(medium)
        for ui, bi in zip(u, medium.b_coeffs):
            if bi != 0 and np.any(np.abs(1.0 - ui * omega**2) <= POLE_TOL):
                raise DomainError(f"{medium.name}: wavelength sits on a Sellmeier pole")
    return omega


def _sellmeier_u(medium: SellmeierMedium) -> np.ndarray:
    return np.asarray(medium.c_coeffs) * 1e-12 / TWO_PI_C**2


# --- refractive index and wavevector --------------------------------------


def refractive_index(medium: SellmeierMedium, lam):
    """n(lambda) = sqrt(1 + sum B_i lambda^2 / (lambda^2 - C_i)), lambda in um."""
    lam = np.asarray(lam, dtype=float)
    lo, hi = medium.band
    if np.any(lam < lo * (1 - 1e-12)) or np.any(lam > hi * (1 + 1e-12)):
        raise DomainError(f"{medium.name}: wavelength outside band {medium.band} m")
    l2 = (lam * 1e6) ** 2
    n2 = np.ones_like(l2)
    for b, cc in zip(medium.b_coeffs, medium.c_coeffs):
        if b == 0:
            continue
        if np.any(np.abs(l2 - cc) <= POLE_TOL * abs(cc)):
            raise DomainError(f"{medium.name}: wavelength sits on a Sellmeier pole")
        n2 = n2 + b * l2 / (l2 - cc)
    if np.any(n2 <= 0):
        raise DomainError(f"{medium.name}: n^2 <= 0, outside the model's validity")
    n = np.sqrt(n2)
    return float(n) if n.ndim == 0 else n


def _sellmeier_n2_derivs(medium, omega):
    """n^2 and its first two omega-derivatives."""
    f = np.ones_like(omega)
    f1 = np.zeros_like(omega)
    f2 = np.zeros_like(omega)
    for b, u in zip(medium.b_coeffs, _sellmeier_u(medium)):
        if b == 0:
            continue
        q = 1.0 - u * omega**2
        f = f + b / q
        f1 = f1 + 2 * b * u * omega / q**2
        f2 = f2 + 2 * b * u / q**2 + 8 * b * u**2 * omega**2 / q**3
    return f, f1, f2


def wavevector(medium, omega):
    """k(omega) in rad/m."""
    omega = _check_omega(medium, omega)
    if isinstance(medium, SellmeierMedium):
        n = np.sqrt(_sellmeier_n2_derivs(medium, omega)[0])
        k = n * omega / c
    else:
        k = _poly_eval(medium.k_taylor, omega - medium.omega_ref)
    return float(k) if np.ndim(k) == 0 else k


def _poly_eval(derivs, d):
    """Horner evaluation of sum_n derivs[n] d^n / n!."""
    out = np.zeros_like(np.asarray(d, dtype=float))
    for n in range(len(derivs) - 1, -1, -1):
        out = out * d + derivs[n] / factorial(n)
    return out


def phase(stack: MediumStack, omega):
    """Total material phase pass_count * sum_m k_m(omega) L_m (rad)."""
    omega = np.asarray(omega, dtype=float)
    total = np.zeros_like(omega)
    for m in stack.media:
        total = total + wavevector(m, omega) * m.thickness
    total = stack.pass_count * total
    return float(total) if total.ndim == 0 else total


# --- derivatives ------------------------------------------------------------


def _k_derivs_closed(medium, omega):
    """(k, dk/dw, d2k/dw2) at omega."""
    omega = _check_omega(medium, omega)
    if isinstance(medium, SellmeierMedium):
        f, f1, f2 = _sellmeier_n2_derivs(medium, omega)
        n = np.sqrt(f)
        n1 = f1 / (2 * n)
        n2 = (f2 - 2 * n1**2) / (2 * n)
        return n * omega / c, (n + omega * n1) / c, (2 * n1 + omega * n2) / c
    d = omega - medium.omega_ref
    k = medium.k_taylor
    padded = list(k) + [0.0, 0.0]
    return (
        _poly_eval(k, d),
        _poly_eval(padded[1:], d),
        _poly_eval(padded[2:], d),
    )


def group_index(medium, omega):
    """n_g = c dk/domega."""
    g = c * _k_derivs_closed(medium, omega)[1]
    return float(g) if np.ndim(g) == 0 else g


def gvd(medium, omega):
    """d^2k/domega^2 in s^2/m."""
    g = _k_derivs_closed(medium, omega)[2]
    return float(g) if np.ndim(g) == 0 else g


# Truncated power series in (omega - omega0); coefficients are Taylor
# coefficients (derivative / n!), leading axis is the order.


def _ps_mul(a, b):
    n = len(a)
    out = [0.0] * n
    for i in range(n):
        out[i] = sum(a[k] * b[i - k] for k in range(i + 1))
    return out


def _ps_recip(a):
    r = [1.0 / a[0]]
    for n in range(1, len(a)):
        r.append(-sum(a[k] * r[n - k] for k in range(1, n + 1)) / a[0])
    return r


def _ps_sqrt(a):
    s = [np.sqrt(a[0])]
    for n in range(1, len(a)):
        acc = a[n] - sum(s[k] * s[n - k] for k in range(1, n))
        s.append(acc / (2 * s[0]))
    return s


def k_derivatives(medium, omega0: float, order: int) -> np.ndarray:
    """[k, k', ..., k^(order)] at omega0, analytic."""
    if order < 0:
        raise ValidationError("order must be >= 0")
    _check_omega(medium, omega0)
    m = order + 1
    if isinstance(medium, SellmeierMedium):
        w = [float(omega0), 1.0] + [0.0] * (m - 2) if m > 1 else [float(omega0)]
        w2 = _ps_mul(w, w)
        n2 = [1.0] + [0.0] * (m - 1)
        for b, u in zip(medium.b_coeffs, _sellmeier_u(medium)):
            if b == 0:
                continue
            q = [1.0 - u * w2[0]] + [-u * x for x in w2[1:]]
            r = _ps_recip(q)
            n2 = [x + b * y for x, y in zip(n2, r)]
        n = _ps_sqrt(n2)
        k = [x / c for x in _ps_mul(n, w)]
        return np.array([k[i] * factorial(i) for i in range(m)])
    # polynomial: re-expand about omega0
    d0 = omega0 - medium.omega_ref
    coeffs = list(medium.k_taylor)
    out = []
    for i in range(m):
        # i-th derivative of the polynomial evaluated at d0
        tail = coeffs[i:]
        out.append(float(_poly_eval(tail, d0)) if tail else 0.0)
    return np.array(out)


def taylor_extract(medium, omega0: float, order: int, grid: FrequencyGrid | None = None):
    """Truncated Taylor model of k(omega) about omega0.

    When a grid is given, ``residual_max`` holds max |k_exact - k_taylor| (rad/m)
    over the grid points inside the medium's band.
    """
    if not 0 <= order <= MAX_TAYLOR_ORDER:
        raise ValidationError(f"order must be in [0, {MAX_TAYLOR_ORDER}], got {order}")
    derivs = k_derivatives(medium, omega0, order)
    band = medium.omega_band
    poly = PolynomialPhaseMedium(
        omega_ref=float(omega0),
        k_taylor=tuple(derivs),
        thickness=medium.thickness,
        name=f"{medium.name}[taylor{order}]",
        omega_band=band,
    )
    if grid is not None:
        w = grid.omegas
        if band is not None:
            w = w[(w >= band[0]) & (w <= band[1])]
        residual = np.max(np.abs(wavevector(medium, w) - wavevector(poly, w))) if w.size else 0.0
        poly = PolynomialPhaseMedium(
            poly.omega_ref, poly.k_taylor, poly.thickness, poly.name, band, float(residual)
        )
    return poly


def taylor_residual(medium, poly: PolynomialPhaseMedium, omega):
    return np.abs(wavevector(medium, omega) - wavevector(poly, omega))


def stack_phase_derivatives(stack: MediumStack, omega0: float, order: int) -> np.ndarray:
    """[phi, phi', ..., phi^(order)] of the whole stack at omega0."""
    out = np.zeros(order + 1)
    for m in stack.media:
        out += m.thickness * k_derivatives(m, omega0, order)
    return stack.pass_count * out


def expected_center_slope(medium, lam: float) -> float:
    """(n_g(lambda) - 1) / 2.

    Slope of the interference-centre stage displacement against the glass path
    traversed (twice the thickness) in a reflection geometry, where moving the
    stage by x changes the optical delay by 2x. Air is treated as vacuum.
    """
    omega = TWO_PI_C / lam
    return (group_index(medium, omega) - 1.0) / 2.0
