"""Scenario configuration.

A scenario file is flat ``key = value`` text with dotted sections and the unit
in the key name, for example::

    scenario.name = "bk7-16.8mm"
    source.center_nm = 792
    medium.names = ["BK7"]
    medium.thickness_mm = [16.8]
    scan.step_um = 0.1

Values use TOML syntax (strings quoted, lists in brackets), so the file is
also valid TOML. Custom media go under ``medium.custom.<NAME>.*``: Sellmeier
media take ``b``, ``c_um2`` and optionally ``band_nm``; polynomial-phase media
take ``omega_ref_rad_s`` and ``k_taylor_si`` (k, dk/dw, d2k/dw2, ... in SI).
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

# key -> (type tag, default). None default = optional / auto.
SCHEMA: dict[str, tuple[str, object]] = {
    "scenario.name": ("str", "scenario"),
    "source.kind": ("str", "gaussian"),
    "source.center_nm": ("float", 792.0),
    "source.fwhm_nm": ("float", 154.0),
    "source.peak": ("float", 1.0),
    "source.spectrum_csv": ("path", None),
    "source.ref_arm_csv": ("path", None),
    "source.sample_arm_csv": ("path", None),
    "grid.lambda_min_nm": ("float", 607.0),
    "grid.lambda_max_nm": ("float", 1012.0),
    "grid.n_points": ("int", 4096),
    "grid.jacobian": ("bool", False),
    "input.frames_csv": ("path", None),
    "input.grid": ("str", "frames"),
    "medium.names": ("strlist", []),
    "medium.thickness_mm": ("floatlist", []),
    "medium.pass_count": ("int", 2),
    "scan.start_um": ("float", None),
    "scan.stop_um": ("float", None),
    "scan.step_um": ("float", 0.1),
    "scan.static_offset_um": ("float", 0.0),
    "scan.span_fwhm": ("float", 5.0),
    "omega0.policy": ("str", "centroid"),
    "omega0.wavelength_nm": ("float", None),
    "filter.cutoff_per_um": ("float", None),
    "filter.taper": ("float", 0.1),
    "noise.additive_sigma": ("float", 0.0),
    "noise.multiplicative_sigma": ("float", 0.0),
    "noise.seed": ("int", 0),
    "fit.window_fwhm": ("float", 4.0),
    "run.chunk_positions": ("int", 512),
    "output.dir": ("path", "out"),
    "output.write_frames": ("bool", False),
}

CUSTOM_KEYS = {
    "b": "floatlist",
    "c_um2": "floatlist",
    "band_nm": "floatlist",
    "omega_ref_rad_s": "float",
    "k_taylor_si": "floatlist",
}

CHOICES = {
    "source.kind": ("gaussian", "file", "arms"),
    "omega0.policy": ("centroid", "wavelength"),
    "input.grid": ("frames", "config"),
}


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key, tag, value):
    def bad(expected):
        return ConfigError(f"expected {expected}, got {value!r}", key=key)

    if tag == "str" or tag == "path":
        if not isinstance(value, str):
            raise bad("a string")
        return value
    if tag == "bool":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise bad("true/false")
    if tag == "int":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise bad("an integer")
        return int(value)
    if tag == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad("a number")
        return float(value)
    if tag == "strlist":
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise bad("a list of strings")
        return list(value)
    if tag == "floatlist":
        if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise bad("a list of numbers")
        return [float(v) for v in value]
    raise AssertionError(tag)


def parse_value(text: str):
    """Parse a single TOML value (used for ``--set key=value`` overrides)."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text  # bare word -> string


@dataclass
class ScenarioConfig:
    values: dict
    base_dir: Path = field(default_factory=Path.cwd)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def path(self, key) -> Path | None:
        v = self.values.get(key)
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else self.base_dir / p

    def custom_media(self) -> dict:
        out = {}
        for key, v in self.values.items():
            if key.startswith("medium.custom."):
                name, prop = key[len("medium.custom."):].rsplit(".", 1)
                out.setdefault(name, {})[prop] = v
        return out

    def echo(self) -> dict:
        return dict(sorted(self.values.items()))

    def to_text(self) -> str:
        lines = []
        for k, v in sorted(self.values.items()):
            if v is None:
                continue
            lines.append(f"{k} = {json.dumps(v)}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, overrides: dict) -> "ScenarioConfig":
        merged = dict(self.values)
        merged.update(overrides)
        return build_config(merged, self.base_dir, apply_defaults=False)


def build_config(raw: dict, base_dir=None, apply_defaults: bool = True) -> ScenarioConfig:
    flat = _flatten(raw)
    values = {k: d for k, (_, d) in SCHEMA.items()} if apply_defaults else {}
    for key, v in flat.items():
        if key in SCHEMA:
            values[key] = None if v is None else _coerce(key, SCHEMA[key][0], v)
        elif key.startswith("medium.custom."):
            rest = key[len("medium.custom."):]
            if "." not in rest:
                raise ConfigError("custom media need a property, e.g. medium.custom.NAME.b", key=key)
            prop = rest.rsplit(".", 1)[1]
            if prop not in CUSTOM_KEYS:
                raise ConfigError(f"unknown custom-medium property (known: {sorted(CUSTOM_KEYS)})", key=key)
            values[key] = _coerce(key, CUSTOM_KEYS[prop], v)
        else:
            raise ConfigError("unknown configuration key", key=key)
    for key, choices in CHOICES.items():
        if values.get(key) is not None and values[key] not in choices:
            raise ConfigError(f"must be one of {choices}", key=key)
    return ScenarioConfig(values, Path(base_dir) if base_dir else Path.cwd())


def load_config(path, overrides: dict | None = None) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = build_config(raw, path.parent)
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg


def validate(cfg: ScenarioConfig, mode: str = "simulate") -> None:
    """Semantic checks beyond types: referenced media and files exist, units sane."""
    v = cfg.values
    names, thick = v["medium.names"], v["medium.thickness_mm"]
    if len(names) != len(thick):
        raise ConfigError(
            f"{len(names)} names but {len(thick)} thicknesses", key="medium.thickness_mm"
        )
    if any(t < 0 for t in thick):
        raise ConfigError("thicknesses must be >= 0", key="medium.thickness_mm")
    from .dispersion_models import BUILTIN_MEDIA

    custom = cfg.custom_media()
    for i, name in enumerate(names):
        if name.lower() not in BUILTIN_MEDIA and name not in custom:
            raise ConfigError(
                f"unknown medium {name!r}; use a built-in {sorted(BUILTIN_MEDIA)} or define "
                f"medium.custom.{name}.*",
                key=f"medium.names[{i}]",
            )
    for name, props in custom.items():
        sell = "b" in props or "c_um2" in props
        poly = "k_taylor_si" in props or "omega_ref_rad_s" in props
        if sell == poly:
            raise ConfigError(
                "define either b + c_um2 (Sellmeier) or omega_ref_rad_s + k_taylor_si",
                key=f"medium.custom.{name}",
            )
        need = ("b", "c_um2") if sell else ("omega_ref_rad_s", "k_taylor_si")
        for n in need:
            if n not in props:
                raise ConfigError("missing", key=f"medium.custom.{name}.{n}")
    if v["medium.pass_count"] not in (1, 2):
        raise ConfigError("must be 1 or 2", key="medium.pass_count")
    if not v["scan.step_um"] > 0:
        raise ConfigError("must be > 0", key="scan.step_um")
    if (v["scan.start_um"] is None) != (v["scan.stop_um"] is None):
        raise ConfigError("give both scan.start_um and scan.stop_um, or neither", key="scan.stop_um")
    if v["omega0.policy"] == "wavelength" and v["omega0.wavelength_nm"] is None:
        raise ConfigError("required when omega0.policy = 'wavelength'", key="omega0.wavelength_nm")
    if v["grid.n_points"] < 4:
        raise ConfigError("must be >= 4", key="grid.n_points")
    if v["run.chunk_positions"] < 1:
        raise ConfigError("must be >= 1", key="run.chunk_positions")

    kind = v["source.kind"]
    required_files = []
    if kind == "file":
        required_files.append("source.spectrum_csv")
    elif kind == "arms":
        required_files += ["source.ref_arm_csv", "source.sample_arm_csv"]
    if mode == "analyze":
        required_files.append("input.frames_csv")
        if kind == "gaussian":
            raise ConfigError("analyze needs a measured spectrum (source.kind = file or arms)", key="source.kind")
    for key in required_files:
        p = cfg.path(key)
        if p is None:
            raise ConfigError("required", key=key)
        if not p.exists():
            raise ConfigError(f"file not found: {p}", key=key)
