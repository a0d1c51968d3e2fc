"""Scenario runner: simulate or ingest -> symmetrize -> extract -> correlate ->
filter -> fit, with CSV/JSON outputs and figure reproduction tables.

Positions are processed in chunks (``run.chunk_positions``); every per-position
quantity is computed independently, so chunking never changes the numbers.
"""

from __future__ import annotations

import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .config import ScenarioConfig, build_config, validate
from .correlation_signal import (
    CorrelationTrace,
    correlation,
    expected_dip_fwhm,
    extract_conjugate,
    input_spectrum_from_arms,
    symmetrize_frames,
)
from .dispersion_models import (
    MediumStack,
    PolynomialPhaseMedium,
    SellmeierMedium,
    builtin_medium,
)
from .errors import DispCancelError, PipelineError, ValidationError
from .interferometer_sim import (
    FrameSet,
    Interferogram,
    NoiseSpec,
    ScanConfig,
    add_noise,
    dip_center,
    envelope_fwhm_estimate,
    simulate_frames,
    total_intensity,
)
from .signal_analysis import (
    FilterSpec,
    broadening_ratio,
    center_shift_slope,
    default_filter_spec,
    fit_envelope,
    fit_gaussian_dip,
    fringe_visibility,
    lowpass,
    lowpass_values,
    peak_window,
)
from .spectral_core import (
    TWO_PI_C,
    Spectrum,
    centroid_frequency,
    gaussian_spectrum,
    grid_from_wavelength_range,
    resample_to_grid,
    snap_omega0,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = "dispcancel.run_report/1"

# thicknesses of the individual windows (mm) and the fixed combination set
WINDOWS_MM = (4.690, 5.940, 6.170)
COMBINATIONS_MM = ((4.690, 5.940), (4.690, 6.170), (5.940, 6.170), (4.690, 5.940, 6.170))


def q(value, unit):
    return {"value": value, "unit": unit}


@contextmanager
def stage(name, parameter=None):
    try:
        yield
    except PipelineError:
        raise
    except (DispCancelError, ValueError, FloatingPointError) as exc:
        raise PipelineError(name, str(exc), parameter) from exc


# --- building blocks from config ----------------------------------------------------


def build_stack(cfg: ScenarioConfig) -> MediumStack:
    custom = cfg.custom_media()
    media = []
    for name, t_mm in zip(cfg["medium.names"], cfg["medium.thickness_mm"]):
        t = t_mm * 1e-3
        if name in custom:
            props = custom[name]
            if "b" in props:
                band = props.get("band_nm")
                media.append(
                    SellmeierMedium(
                        props["b"],
                        props["c_um2"],
                        t,
                        name,
                        band=(band[0] * 1e-9, band[1] * 1e-9) if band else (0.4e-6, 1.1e-6),
                    )
                )
            else:
                media.append(
                    PolynomialPhaseMedium(props["omega_ref_rad_s"], props["k_taylor_si"], t, name)
                )
        else:
            media.append(builtin_medium(name, t))
    return MediumStack(tuple(media), cfg["medium.pass_count"])


def build_grid(cfg: ScenarioConfig):
    return grid_from_wavelength_range(
        cfg["grid.lambda_min_nm"] * 1e-9, cfg["grid.lambda_max_nm"] * 1e-9, cfg["grid.n_points"]
    )


def load_measured_spectrum(cfg: ScenarioConfig, grid) -> Spectrum:
    jac = cfg["grid.jacobian"]
    if cfg["source.kind"] == "file":
        return resample_to_grid(io.read_spectrum_csv(cfg.path("source.spectrum_csv")), grid, jac)
    ref = resample_to_grid(io.read_spectrum_csv(cfg.path("source.ref_arm_csv")), grid, jac)
    sam = resample_to_grid(io.read_spectrum_csv(cfg.path("source.sample_arm_csv")), grid, jac)
    return input_spectrum_from_arms(ref, sam)


def resolve_omega0(cfg: ScenarioConfig, spectrum: Spectrum) -> Spectrum:
    if cfg["omega0.policy"] == "wavelength":
        w0 = TWO_PI_C / (cfg["omega0.wavelength_nm"] * 1e-9)
    else:
        w0 = centroid_frequency(spectrum)
    snapped, dist = snap_omega0(spectrum.grid, w0)
    return Spectrum(spectrum.grid, spectrum.intensity, snapped, dist, spectrum.notes)


def auto_scan_range(source: Spectrum, stack: MediumStack, cfg: ScenarioConfig):
    """Scan window in um: +-span_fwhm expected envelope widths around the group-delay centre,
    snapped to whole steps so the resolved numbers round-trip through the config echo."""
    pc = cfg["medium.pass_count"]
    step_um = cfg["scan.step_um"]
    static = cfg["scan.static_offset_um"] * 1e-6
    center_um = dip_center(stack, source.omega0, pc, static) * 1e6
    width = max(envelope_fwhm_estimate(source, stack, pc), expected_dip_fwhm(source, pc)) * 1e6
    half_steps = math.ceil(cfg["scan.span_fwhm"] * width / step_um)
    c_steps = round(center_um / step_um)
    return (c_steps - half_steps) * step_um, (c_steps + half_steps) * step_um


@dataclass
class ScenarioResult:
    report: dict
    gram: Interferogram
    trace: CorrelationTrace
    s_fit: object
    envelope: object
    out_dir: Path | None = None


def _chunks(n, size):
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


def _correlate_chunks(frame_chunks, spectrum: Spectrum, noise: NoiseSpec, frames_fh=None):
    """Run the per-position part of the pipeline over an iterator of FrameSets."""
    totals, positions, s_parts = [], [], []
    clamps = 0
    pair_count = None
    row = 0
    w0 = spectrum.omega0
    for fr in frame_chunks:
        with stage("noise"):
            fr = add_noise(fr, noise, row_offset=row)
        row += fr.n_positions
        if frames_fh is not None:
            io.write_frame_rows(frames_fh, fr.positions, fr.frames_a)
        with stage("total_intensity"):
            totals.append(total_intensity(fr).values)
        positions.append(fr.positions)
        with stage("symmetrize"):
            sf, sym = symmetrize_frames(fr, spectrum)
        with stage("extract"):
            ex = extract_conjugate(sf, sym)
        clamps += ex.clamp_count
        with stage("correlate"):
            tr = correlation(ex, w0)
        pair_count = tr.pair_count
        s_parts.append(tr.s_values)
    pos = np.concatenate(positions)
    gram = Interferogram(pos, np.concatenate(totals), "total_intensity")
    trace = CorrelationTrace(pos, np.concatenate(s_parts), w0, pair_count, chain=("symmetrize", "extract", "correlation"))
    return gram, trace, clamps


def _analyze(cfg, gram, trace, source, stack, pass_count, step, clamps, n_pixels):
    report = {}
    exp_fwhm = expected_dip_fwhm(source, pass_count)
    with stage("filter", "filter.cutoff_per_um"):
        if cfg["filter.cutoff_per_um"] is not None:
            spec = FilterSpec(cfg["filter.cutoff_per_um"] * 1e6, cfg["filter.taper"])
        else:
            spec = default_filter_spec(step, source.omega0, pass_count, exp_fwhm, cfg["filter.taper"])
        trace = lowpass(trace, spec)
    with stage("fit"):
        s_fit = fit_gaussian_dip(trace.positions, trace.filtered, window=cfg["fit.window_fwhm"])
    sensitivity = {}
    for factor in (0.5, 2.0):
        try:
            alt = FilterSpec(spec.cutoff * factor, spec.taper)
            filt = lowpass_values(trace.positions, trace.s_values, alt)
            alt_fit = fit_gaussian_dip(trace.positions, filt, window=cfg["fit.window_fwhm"])
            sensitivity[f"x{factor:g}"] = {"fwhm": q(alt_fit.fwhm, "m"), "visibility": q(alt_fit.visibility, "1")}
        except DispCancelError as exc:
            sensitivity[f"x{factor:g}"] = {"error": str(exc)}
    try:
        raw_fit = fit_gaussian_dip(trace.positions, trace.s_values, window=cfg["fit.window_fwhm"])
        raw = fit_report(raw_fit)
    except DispCancelError as exc:
        raw = {"error": str(exc)}
    with stage("fit", "total_intensity"):
        env = fit_envelope(gram)
        period = TWO_PI_C / (source.omega0 * pass_count)
        vis = fringe_visibility(gram, peak_window(gram, period))
    report["total_intensity"] = {
        "fwhm": q(env.fwhm, "m"),
        "center": q(env.center, "m"),
        "fringe_visibility": q(vis, "1"),
        "envelope_residual_rms": q(env.residual_rms, "power"),
        "converged": env.converged,
    }
    report["s_filtered_fit"] = fit_report(s_fit)
    report["s_raw_fit"] = raw
    report["filter"] = {
        "cutoff": q(spec.cutoff, "1/m"),
        "taper": q(spec.taper, "1"),
        "cutoff_sensitivity": sensitivity,
    }
    report["expected_s_fwhm"] = q(exp_fwhm, "m")
    report["pair_count"] = q(trace.pair_count, "count")
    report["n_positions"] = q(int(trace.positions.size), "count")
    report["clamp_count"] = q(clamps, "count")
    report["clamp_fraction"] = q(clamps / (trace.positions.size * n_pixels), "1")
    return report, trace, s_fit, env


def fit_report(fit) -> dict:
    return {
        "baseline": q(fit.baseline, "power^2"),
        "depth": q(fit.depth, "power^2"),
        "center": q(fit.center, "m"),
        "sigma": q(fit.sigma, "m"),
        "fwhm": q(fit.fwhm, "m"),
        "visibility": q(fit.visibility, "1"),
        "residual_rms": q(fit.residual_rms, "power^2"),
        "converged": fit.converged,
        "iterations": q(fit.iterations, "count"),
    }


def _write_outputs(out_dir: Path, cfg, result: ScenarioResult):
    out_dir.mkdir(parents=True, exist_ok=True)
    io.write_interferogram_csv(out_dir / "total_intensity.csv", result.gram)
    io.write_trace_csv(out_dir / "s_trace.csv", result.trace)
    io.dump_json(out_dir / "s_trace.json", io.trace_metadata(result.trace))
    (out_dir / "config.toml").write_text(cfg.to_text(), encoding="utf-8")
    io.dump_json(out_dir / "report.json", result.report)


def _failure(out_dir, cfg, exc: PipelineError):
    report = {
        "schema": SCHEMA_VERSION,
        "status": "failed",
        "failed_stage": exc.stage,
        "parameter": exc.parameter,
        "error": str(exc),
        "config": cfg.echo(),
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        io.dump_json(out_dir / "report.json", report)
        (out_dir / "FAILED").write_text(f"{exc}\n", encoding="utf-8")
    return report


def run_scenario(cfg: ScenarioConfig, out_dir=None, mode: str | None = None) -> ScenarioResult:
    """Run one scenario end to end.

    ``mode`` is "simulate" (model source) or "analyze" (ingested frames); by
    default it follows ``input.frames_csv``. Outputs go to ``out_dir`` when given.
    On failure a report with ``status = "failed"`` and a FAILED marker are
    written before the PipelineError propagates.
    """
    mode = mode or ("analyze" if cfg.get("input.frames_csv") else "simulate")
    out_dir = Path(out_dir) if out_dir is not None else None
    try:
        with stage("config"):
            validate(cfg, mode)
        if mode == "analyze":
            return _run_analyze(cfg, out_dir)
        return _run_simulate(cfg, out_dir)
    except PipelineError as exc:
        _failure(out_dir, cfg, exc)
        raise


def _resolved_scan(cfg, source, stack):
    if cfg["scan.start_um"] is None:
        start_um, stop_um = auto_scan_range(source, stack, cfg)
        cfg = cfg.with_overrides({"scan.start_um": start_um, "scan.stop_um": stop_um})
    scan = ScanConfig(
        cfg["scan.start_um"] * 1e-6,
        cfg["scan.stop_um"] * 1e-6,
        cfg["scan.step_um"] * 1e-6,
        cfg["medium.pass_count"],
        cfg["scan.static_offset_um"] * 1e-6,
    )
    return cfg, scan


def _run_simulate(cfg: ScenarioConfig, out_dir):
    with stage("source", "grid"):
        grid = build_grid(cfg)
        if cfg["source.kind"] == "gaussian":
            source = gaussian_spectrum(
                grid, cfg["source.center_nm"] * 1e-9, cfg["source.fwhm_nm"] * 1e-9, cfg["source.peak"]
            )
        else:
            source = load_measured_spectrum(cfg, grid)
        source = resolve_omega0(cfg, source)
    with stage("medium", "medium.names"):
        stack = build_stack(cfg)
    with stage("scan", "scan"):
        cfg, scan = _resolved_scan(cfg, source, stack)
    noise = NoiseSpec(cfg["noise.additive_sigma"], cfg["noise.multiplicative_sigma"], cfg["noise.seed"])
    positions = scan.positions
    chunk = cfg["run.chunk_positions"]

    def frame_chunks():
        for sl in _chunks(positions.size, chunk):
            with stage("simulate", "medium"):
                yield simulate_frames(source, stack, scan, positions=positions[sl])

    frames_fh = None
    if out_dir is not None and cfg["output.write_frames"]:
        out_dir.mkdir(parents=True, exist_ok=True)
        frames_fh = (out_dir / "frames.csv").open("w", encoding="utf-8", newline="")
        io.write_frames_header(frames_fh, grid)
        io.write_spectrum_csv(out_dir / "input_spectrum.csv", source)
    try:
        gram, trace, clamps = _correlate_chunks(frame_chunks(), source, noise, frames_fh)
    finally:
        if frames_fh is not None:
            frames_fh.close()
    body, trace, s_fit, env = _analyze(
        cfg, gram, trace, source, stack, scan.pass_count, scan.step, clamps, grid.n_points
    )
    report = _report_header(cfg, "simulate", source)
    report.update(body)
    report["expected_center"] = q(dip_center(stack, source.omega0, scan.pass_count, scan.static_offset), "m")
    result = ScenarioResult(report, gram, trace, s_fit, env, out_dir)
    if out_dir is not None:
        with stage("write", "output.dir"):
            _write_outputs(out_dir, cfg, result)
    return result


def _run_analyze(cfg: ScenarioConfig, out_dir):
    with stage("ingest", "input.frames_csv"):
        grid = build_grid(cfg) if cfg["input.grid"] == "config" else None
        frames = io.ingest_frames(cfg.path("input.frames_csv"), grid, cfg["grid.jacobian"])
        grid = frames.grid
    with stage("source", "source"):
        spectrum = resolve_omega0(cfg, load_measured_spectrum(cfg, grid))
    with stage("medium", "medium.names"):
        stack = build_stack(cfg)
    pc = cfg["medium.pass_count"]
    step = float(np.mean(np.diff(frames.positions))) if frames.n_positions > 1 else cfg["scan.step_um"] * 1e-6
    noise = NoiseSpec(cfg["noise.additive_sigma"], cfg["noise.multiplicative_sigma"], cfg["noise.seed"])
    chunk = cfg["run.chunk_positions"]

    def frame_chunks():
        for sl in _chunks(frames.n_positions, chunk):
            yield frames.subset(sl)

    gram, trace, clamps = _correlate_chunks(frame_chunks(), spectrum, noise)
    body, trace, s_fit, env = _analyze(cfg, gram, trace, spectrum, stack, pc, step, clamps, grid.n_points)
    report = _report_header(cfg, "analyze", spectrum)
    report.update(body)
    result = ScenarioResult(report, gram, trace, s_fit, env, out_dir)
    if out_dir is not None:
        with stage("write", "output.dir"):
            _write_outputs(out_dir, cfg, result)
    return result


def _report_header(cfg, mode, source):
    return {
        "schema": SCHEMA_VERSION,
        "status": "ok",
        "mode": mode,
        "scenario": cfg["scenario.name"],
        "config": cfg.echo(),
        "omega0": q(source.omega0, "rad/s"),
        "omega0_snap_distance": q(source.snap_distance, "rad/s"),
        "source_notes": list(source.notes),
    }


# --- figure reproduction ---------------------------------------------------------------


def figure_config(name: str, thicknesses_mm=(), **overrides) -> ScenarioConfig:
    raw = {
        "scenario.name": name,
        "source.kind": "gaussian",
        "source.center_nm": 792.0,
        "source.fwhm_nm": 154.0,
        "grid.lambda_min_nm": 607.0,
        "grid.lambda_max_nm": 1012.0,
        "grid.n_points": 4096,
        "medium.names": ["BK7"] * len(thicknesses_mm),
        "medium.thickness_mm": [float(t) for t in thicknesses_mm],
        "medium.pass_count": 2,
        "scan.step_um": 0.1,
        "omega0.policy": "wavelength",
        "omega0.wavelength_nm": 792.0,
    }
    raw.update(overrides)
    return build_config(raw)


def _scenario_slug(thicknesses):
    if not thicknesses:
        return "no_glass"
    return "bk7_" + "+".join(f"{t:.3f}" for t in thicknesses) + "mm"


def thickness_set():
    return [()] + [(t,) for t in WINDOWS_MM] + list(COMBINATIONS_MM)


FIGURES = ("fig2", "fig3a", "fig3b")


def reproduce_figure(name: str, out_dir, overrides: dict | None = None) -> dict:
    """Run the built-in scenarios for a figure; write traces, tables and a summary."""
    if name not in FIGURES:
        raise ValidationError(f"unknown figure {name!r}; choose from {FIGURES}")
    out_dir = Path(out_dir)
    overrides = overrides or {}
    if name == "fig2":
        sets = [(), (16.8,)]
    else:
        sets = thickness_set()
    results = {}
    for ts in sets:
        slug = _scenario_slug(ts)
        cfg = figure_config(slug, ts, **overrides)
        log.info("running %s", slug)
        results[ts] = run_scenario(cfg, out_dir / slug, mode="simulate")

    summary = {"schema": SCHEMA_VERSION, "figure": name, "scenarios": {}}
    for ts, r in results.items():
        summary["scenarios"][_scenario_slug(ts)] = {
            "double_thickness": q(round(2 * sum(ts), 6) * 1e-3, "m"),
            "total_intensity_fwhm": r.report["total_intensity"]["fwhm"],
            "fringe_visibility": r.report["total_intensity"]["fringe_visibility"],
            "s_fwhm": r.report["s_filtered_fit"]["fwhm"],
            "s_center": r.report["s_filtered_fit"]["center"],
            "s_visibility": r.report["s_filtered_fit"]["visibility"],
        }

    base = results[()]
    if name == "fig2":
        glass = results[(16.8,)]
        summary["total_intensity_broadening"] = q(
            broadening_ratio(glass.envelope, base.envelope), "percent"
        )
        summary["s_broadening"] = q(broadening_ratio(glass.s_fit, base.s_fit), "percent")
        summary["total_intensity_fwhm_ratio"] = q(glass.envelope.fwhm / base.envelope.fwhm, "1")
        summary["s_fwhm_ratio"] = q(glass.s_fit.fwhm / base.s_fit.fwhm, "1")
    else:
        rows_a, rows_b, points = [], [], []
        for ts, r in sorted(results.items(), key=lambda kv: sum(kv[0])):
            dt_mm = round(2 * sum(ts), 6)
            shift = r.s_fit.center - base.s_fit.center
            rows_a.append((dt_mm, r.envelope.fwhm * 1e6, r.s_fit.fwhm * 1e6))
            rows_b.append((dt_mm, shift * 1e6, (r.envelope.center - base.envelope.center) * 1e6))
            points.append((dt_mm * 1e-3, shift))
        io.write_table_csv(
            out_dir / "fig3a_widths.csv",
            ("double_thickness_mm", "total_intensity_fwhm_um", "s_fwhm_um"),
            rows_a,
        )
        io.write_table_csv(
            out_dir / "fig3b_center_shift.csv",
            ("double_thickness_mm", "s_center_shift_um", "total_intensity_center_shift_um"),
            rows_b,
        )
        slope = center_shift_slope(points)
        s_widths = [r[2] for r in rows_a]
        summary["s_width_max_over_min"] = q(max(s_widths) / min(s_widths), "1")
        summary["center_shift_slope"] = {
            "slope": q(slope.slope, "1"),
            "intercept": q(slope.intercept, "m"),
            "stderr_slope": q(slope.stderr_slope, "1"),
            "r_squared": q(slope.r_squared, "1"),
            "n_points": q(slope.n_points, "count"),
        }
    io.dump_json(out_dir / f"{name}_summary.json", summary)
    return summary
