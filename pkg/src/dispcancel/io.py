"""File formats: spectrometer frame CSV, spectrum CSV, trace CSV and JSON.

Frame CSV layout::

    stage_um,<pixel wavelength nm>,<pixel wavelength nm>,...
    <stage position um>,<intensity>,<intensity>,...

one row per stage position, UTF-8, '.' decimal separator, no thousands
separators. Stage positions are written as the shortest decimal that reads
back to the identical float (in metres), so positions survive a round trip
bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from decimal import Decimal, localcontext
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .interferometer_sim import FrameSet, Interferogram
from .spectral_core import (
    TWO_PI_C,
    FrequencyGrid,
    Spectrum,
    WavelengthSeries,
    resample_to_grid,
)

STAGE_HEADER = "stage_um"
SPECTRUM_HEADER = ("wavelength_nm", "intensity")


# --- exact micrometre <-> metre text conversion -------------------------------


def um_text_to_m(text: str) -> float:
    with localcontext() as ctx:
        ctx.prec = 80
        return float(Decimal(text.strip()) / Decimal(1_000_000))


def m_to_um_text(x: float) -> str:
    """Shortest micrometre string that :func:`um_text_to_m` maps back to ``x``."""
    if x == 0:
        return "0"
    with localcontext() as ctx:
        ctx.prec = 80
        exact = Decimal(x) * Decimal(1_000_000)
        for digits in range(1, 40):
            s = format(exact, f".{digits}g")
            if um_text_to_m(s) == x:
                return _trim(s)
    return format(exact, "f")


def _trim(s: str) -> str:
    if "e" in s or "E" in s:
        return s
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return s


def fmt(x: float) -> str:
    """Round-trippable float text."""
    return repr(float(x))


# --- frames ------------------------------------------------------------------------


def write_frames_header(fh, grid: FrequencyGrid):
    lam_nm = TWO_PI_C / grid.omegas * 1e9
    fh.write(",".join([STAGE_HEADER] + [fmt(v) for v in lam_nm]) + "\n")


def write_frame_rows(fh, positions, frames):
    for x, row in zip(positions, frames):
        fh.write(m_to_um_text(float(x)) + "," + ",".join(fmt(v) for v in row) + "\n")


def write_frames_csv(path, frames: FrameSet):
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        write_frames_header(fh, frames.grid)
        write_frame_rows(fh, frames.positions, frames.frames_a)


def _parse_float(text, line, path, what):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"cannot parse {what} {text!r}", line=line, path=path) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite {what} {text!r}", line=line, path=path)
    return v


def _read_frame_file(path: Path):
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1, path=path) from None
        header = [h.strip() for h in header]
        if not header or header[0] != STAGE_HEADER:
            raise ParseError(
                f"first header cell must be '{STAGE_HEADER}' (stage position in um), "
                f"got {header[0] if header else ''!r}",
                line=1,
                path=path,
            )
        lam_nm = []
        for cell in header[1:]:
            if cell.lower().endswith("nm"):
                cell = cell[:-2].strip()
            lam_nm.append(_parse_float(cell, 1, path, "wavelength header (nm)"))
        if len(lam_nm) < 4:
            raise ParseError("need at least 4 pixel wavelength columns", line=1, path=path)
        positions, rows, lines = [], [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"row has {len(row)} fields, header has {len(header)}", line=line, path=path
                )
            try:
                x = um_text_to_m(row[0])
            except Exception:
                raise ParseError(f"cannot parse stage position {row[0]!r}", line=line, path=path) from None
            vals = [_parse_float(c, line, path, "intensity") for c in row[1:]]
            positions.append(x)
            rows.append(vals)
            lines.append(line)
    return np.array(lam_nm) * 1e-9, positions, rows, lines


def infer_grid(wavelengths) -> FrequencyGrid:
    """Frequency grid spanning the pixel wavelengths with the same pixel count."""
    w = np.sort(TWO_PI_C / np.asarray(wavelengths, dtype=float))
    return FrequencyGrid(w.size, float(w[0]), float(w[-1]))


def ingest_frames(source, grid: FrequencyGrid | None = None, jacobian: bool = False) -> FrameSet:
    """Read one CSV file, or every ``*.csv`` in a directory (name order).

    Rows are resampled onto ``grid`` (default: inferred from the header).
    Stage positions must be strictly increasing across all rows and files.
    """
    src = Path(source)
    if src.is_dir():
        files = sorted(src.glob("*.csv"))
        if not files:
            raise ParseError("no .csv files in directory", path=src)
    elif src.exists():
        files = [src]
    else:
        raise ParseError("file not found", path=src)

    lam_ref = None
    positions, rows = [], []
    prev = None
    for f in files:
        lam, pos, rws, lines = _read_frame_file(f)
        if lam_ref is None:
            lam_ref = lam
        elif lam.shape != lam_ref.shape or np.any(lam != lam_ref):
            raise ParseError("pixel wavelengths differ from the first file", line=1, path=f)
        for x, r, ln in zip(pos, rws, lines):
            if prev is not None and not x > prev:
                raise ParseError(
                    f"stage positions not strictly increasing ({x * 1e6:g} um after {prev * 1e6:g} um)",
                    line=ln,
                    path=f,
                )
            prev = x
            positions.append(x)
            rows.append(r)
    if not rows:
        raise ParseError("no frame rows", path=files[0])
    g = grid if grid is not None else infer_grid(lam_ref)
    frames = np.empty((len(rows), g.n_points))
    for p, r in enumerate(rows):
        try:
            series = WavelengthSeries(lam_ref, np.asarray(r))
        except ValidationError as exc:
            raise ParseError(str(exc), path=files[0]) from None
        frames[p] = resample_to_grid(series, g, jacobian=jacobian).intensity
    return FrameSet(
        grid=g,
        positions=np.array(positions),
        frames_a=frames,
        omega0=0.5 * (g.omega_min + g.omega_max),
        provenance="ingested",
        pass_count=2,
    )


# --- spectra ------------------------------------------------------------------------


def write_spectrum_csv(path, spectrum: Spectrum):
    lam_nm = TWO_PI_C / spectrum.grid.omegas * 1e9
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(SPECTRUM_HEADER) + "\n")
        for lam, v in zip(lam_nm, spectrum.intensity):
            fh.write(f"{fmt(lam)},{fmt(v)}\n")


def read_spectrum_csv(path) -> WavelengthSeries:
    path = Path(path)
    if not path.exists():
        raise ParseError("file not found", path=path)
    lam, vals = [], []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if tuple(header) != SPECTRUM_HEADER:
            raise ParseError(f"header must be {','.join(SPECTRUM_HEADER)}", line=1, path=path)
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise ParseError("expected 2 fields", line=reader.line_num, path=path)
            lam.append(_parse_float(row[0], reader.line_num, path, "wavelength") * 1e-9)
            vals.append(_parse_float(row[1], reader.line_num, path, "intensity"))
    try:
        return WavelengthSeries(np.array(lam), np.array(vals))
    except ValidationError as exc:
        raise ParseError(str(exc), path=path) from None


# --- traces and reports -------------------------------------------------------------


def write_trace_csv(path, trace):
    filt = trace.filtered
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write("position_um,s_raw,s_filtered\n")
        for k, (x, s) in enumerate(zip(trace.positions, trace.s_values)):
            f = "" if filt is None else fmt(filt[k])
            fh.write(f"{m_to_um_text(float(x))},{fmt(s)},{f}\n")


def trace_metadata(trace) -> dict:
    spec = trace.filter_spec
    return {
        "omega0": {"value": trace.omega0, "unit": "rad/s"},
        "pair_count": {"value": trace.pair_count, "unit": "count"},
        "n_positions": {"value": int(trace.positions.size), "unit": "count"},
        "filter": None
        if spec is None
        else {"cutoff": {"value": spec.cutoff, "unit": "1/m"}, "taper": {"value": spec.taper, "unit": "1"}},
        "chain": list(trace.chain),
    }


def write_interferogram_csv(path, gram: Interferogram):
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write(f"position_um,{gram.kind}\n")
        for x, v in zip(gram.positions, gram.values):
            fh.write(f"{m_to_um_text(float(x))},{fmt(v)}\n")


def dump_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def write_table_csv(path, header, rows):
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(fmt(v) if isinstance(v, float) else str(v) for v in r) + "\n")
