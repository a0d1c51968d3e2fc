import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.constants import c

from dispcancel.dispersion_models import BK7, MediumStack, PolynomialPhaseMedium, stack_phase_derivatives
from dispcancel.errors import SymmetryError, ValidationError
from dispcancel.interferometer_sim import (
    FrameSet,
    NoiseSpec,
    ScanConfig,
    add_noise,
    dip_center,
    port_b,
    quantum_coincidence,
    simulate_frames,
    total_intensity,
)
from dispcancel.pipeline import figure_config, run_scenario
from dispcancel.signal_analysis import fit_envelope, fit_gaussian_dip
from dispcancel.spectral_core import FrequencyGrid, Spectrum, symmetrize

UM = 1e-6
EMPTY2 = MediumStack((), 2)


def mono_source(ref_grid, index=2000):
    v = np.zeros(ref_grid.n_points)
    v[index] = 1.0
    return Spectrum(ref_grid, v, ref_grid.omega_at(index))


def test_scan_position_count():
    scan = ScanConfig(0.0, 10 * UM, 0.1 * UM)
    assert scan.n_positions == 101
    assert ScanConfig(0.0, 1.05 * UM, 0.1 * UM).n_positions == 11
    with pytest.raises(ValidationError):
        ScanConfig(1.0, 0.0, 0.1)
    with pytest.raises(ValidationError):
        ScanConfig(0.0, 1.0, 0.0)


def test_zero_delay_all_light_in_port_a(ref_source):
    scan = ScanConfig(-0.1 * UM, 0.1 * UM, 0.1 * UM, 2)
    fr = simulate_frames(ref_source, EMPTY2, scan)
    mid = 1
    assert fr.positions[mid] == 0.0
    np.testing.assert_array_equal(fr.frames_a[mid], ref_source.intensity)
    assert not port_b(fr)[mid].any()


@pytest.mark.parametrize("passes", [1, 2])
def test_monochromatic_fringe_period(ref_grid, passes):
    src = mono_source(ref_grid)
    w = src.omega0
    period = 2 * math.pi * c / (w * passes)
    step = 0.005 * UM
    scan = ScanConfig(0.0, 6 * period, step, passes)
    gram = total_intensity(simulate_frames(src, MediumStack((), passes), scan))
    v = gram.values
    peaks = [k for k in range(1, v.size - 1) if v[k] >= v[k - 1] and v[k] > v[k + 1]]
    measured = np.mean(np.diff(gram.positions[peaks]))
    assert abs(measured - period) <= step
    # balanced, lossless: fringes reach 0 and 1
    assert v.max() == pytest.approx(1.0, abs=1e-3) and v.min() == pytest.approx(0.0, abs=1e-3)


def test_far_delay_baseline_is_half_total(ref_source):
    scan = ScanConfig(40 * UM, 60 * UM, 0.1 * UM, 2)
    gram = total_intensity(simulate_frames(ref_source, EMPTY2, scan))
    assert gram.values.mean() == pytest.approx(ref_source.total() / 2, rel=0.01)


def test_energy_conservation_exact(ref_source):
    stack = MediumStack((BK7.with_thickness(6.17e-3),), 2)
    x0 = dip_center(stack, ref_source.omega0, 2)
    scan = ScanConfig(x0 - 5 * UM, x0 + 5 * UM, 0.1 * UM, 2)
    fr = simulate_frames(ref_source, stack, scan)
    ib = port_b(fr)
    err = np.abs(fr.frames_a + ib - ref_source.intensity).max() / ref_source.intensity.max()
    assert err <= 1e-12
    assert np.all(fr.frames_a <= ref_source.intensity * (1 + 1e-15))


def test_no_glass_envelope_width_near_two_microns(ref_source):
    scan = ScanConfig(-10 * UM, 10 * UM, 0.1 * UM, 2)
    env = fit_envelope(total_intensity(simulate_frames(ref_source, EMPTY2, scan)))
    assert env.converged
    assert env.fwhm == pytest.approx(2.04 * UM, rel=0.35)


def test_subset_rows_bit_identical(ref_source):
    stack = MediumStack((BK7.with_thickness(4.69e-3),), 2)
    x0 = dip_center(stack, ref_source.omega0, 2)
    scan = ScanConfig(x0 - 3 * UM, x0 + 3 * UM, 0.1 * UM, 2)
    full = simulate_frames(ref_source, stack, scan)
    order = np.random.default_rng(5).permutation(scan.n_positions)
    for chunk in np.array_split(order, 7):
        part = simulate_frames(ref_source, stack, scan, positions=scan.positions[chunk])
        np.testing.assert_array_equal(part.frames_a, full.frames_a[chunk])


def test_pass_count_mismatch_rejected(ref_source):
    stack = MediumStack((BK7.with_thickness(1e-3),), 1)
    with pytest.raises(ValidationError):
        simulate_frames(ref_source, stack, ScanConfig(0, 1 * UM, 0.1 * UM, 2))


def test_frameset_rejects_negative():
    g = FrequencyGrid(4, 1e15, 2e15)
    with pytest.raises(ValidationError):
        FrameSet(g, [0.0], [[1.0, -1.0, 0.0, 0.0]], 1.5e15)


# --- quantum reference ----------------------------------------------------------------------


def test_quantum_no_medium_dip_reaches_zero(ref_source):
    sym = symmetrize(ref_source)
    scan = ScanConfig(-3 * UM, 3 * UM, 0.1 * UM, 2)
    q = quantum_coincidence(sym, EMPTY2, scan)
    i0 = int(np.argmin(np.abs(q.positions)))
    assert q.values[i0] == pytest.approx(0.0, abs=1e-12 * q.values.max())
    assert q.values.min() >= -1e-12 * q.values.max()
    # with a static offset the zero moves to -L / pass_count
    shifted = quantum_coincidence(sym, EMPTY2, ScanConfig(-3 * UM, 3 * UM, 0.1 * UM, 2, static_offset=0.4 * UM))
    assert shifted.positions[np.argmin(shifted.values)] == pytest.approx(-0.2 * UM, abs=1e-12)


def test_quantum_requires_symmetric_source(ref_grid):
    v = np.linspace(0, 1, ref_grid.n_points)
    s = Spectrum(ref_grid, v, ref_grid.omega_at(2000))
    with pytest.raises(SymmetryError):
        quantum_coincidence(s, EMPTY2, ScanConfig(0, 1 * UM, 0.1 * UM, 2))


def test_quantum_dip_moves_by_group_delay(ref_source):
    sym = symmetrize(ref_source)
    stack = MediumStack((BK7.with_thickness(5.94e-3),), 2)
    x0 = dip_center(stack, sym.omega0, 2)
    scan = ScanConfig(x0 - 4 * UM, x0 + 4 * UM, 0.05 * UM, 2)
    q = quantum_coincidence(sym, stack, scan)
    fit = fit_gaussian_dip(q.positions, q.values)
    # third-order dispersion skews the dip slightly; the group delay sets the shift
    assert fit.center == pytest.approx(x0, rel=1e-3)
    assert abs(fit.center - x0) < 0.5 * UM
    ng_path = c * stack_phase_derivatives(stack, sym.omega0, 1)[1]
    assert x0 == pytest.approx((ng_path - stack.vacuum_path) / 2, rel=1e-12)


def test_quantum_pure_k2_identical_up_to_shift(ref_source):
    sym = symmetrize(ref_source)
    k2 = PolynomialPhaseMedium(sym.omega0, (0.0, 0.0, 4.5e-26), thickness=16.8e-3)
    stack = MediumStack((k2,), 2)
    shift = dip_center(stack, sym.omega0, 2)
    base_scan = ScanConfig(-4 * UM, 4 * UM, 0.1 * UM, 2)
    moved_scan = ScanConfig(-4 * UM + shift, 4 * UM + shift, 0.1 * UM, 2)
    a = quantum_coincidence(sym, EMPTY2, base_scan).values
    b = quantum_coincidence(sym, stack, moved_scan).values
    assert np.max(np.abs(a - b)) / np.max(np.abs(a)) < 1e-10


# --- noise ------------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_frames(ref_source):
    return simulate_frames(ref_source, EMPTY2, ScanConfig(-2 * UM, 2 * UM, 0.1 * UM, 2))


def test_null_noise_is_identity(small_frames):
    assert add_noise(small_frames, NoiseSpec()) is small_frames


def test_noise_seeded_and_chunk_invariant(small_frames):
    spec = NoiseSpec(0.01, 0.02, seed=11)
    a = add_noise(small_frames, spec)
    b = add_noise(small_frames, spec)
    np.testing.assert_array_equal(a.frames_a, b.frames_a)
    n = small_frames.n_positions
    parts = [
        add_noise(small_frames.subset(slice(s, min(n, s + 9))), spec, row_offset=s).frames_a
        for s in range(0, n, 9)
    ]
    np.testing.assert_array_equal(np.vstack(parts), a.frames_a)
    assert np.all(a.frames_a >= 0)
    other = add_noise(small_frames, NoiseSpec(0.01, 0.02, seed=12))
    assert not np.array_equal(other.frames_a, a.frames_a)


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 0.1), st.floats(0, 0.1), st.integers(0, 2**31))
def test_noise_sigmas_and_nonnegativity(add, mult, seed):
    g = FrequencyGrid(64, 1e15, 2e15)
    fr = FrameSet(g, [0.0, 1.0], np.full((2, 64), 0.5), 1.5e15)
    out = add_noise(fr, NoiseSpec(add, mult, seed))
    assert np.all(out.frames_a >= 0)
    if add == 0 and mult == 0:
        np.testing.assert_array_equal(out.frames_a, fr.frames_a)


@pytest.mark.slow
def test_noise_moves_dip_centre_less_than_a_step():
    step = 0.1 * UM
    clean = run_scenario(figure_config("clean", ())).s_fit.center
    within = 0
    for seed in range(100):
        cfg = figure_config("noisy", (), **{"noise.additive_sigma": 0.01, "noise.seed": seed})
        fit = run_scenario(cfg).s_fit
        within += abs(fit.center - clean) < step
    assert within >= 95
