"""
Experiment configuration.

Configs are YAML (JSON is accepted too, being a YAML subset). Every key is
optional; missing keys take the defaults below. Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import re

import yaml

ALGORITHMS = ("cpm", "dpmd", "both")
BACKENDS = ("freefield", "image_source", "file")
TARGETS = ("oracle", "planewave")
RULES = ("uniform", "metropolis")
NAMED_SYSTEMS = ("system1", "system2")
GEOMETRY_KEYS = ("n_speakers", "speaker_spacing", "grid", "mic_spacing", "standoff",
                 "zone_separation", "room_dims", "height", "validation_offset",
                 "sound_speed")

DEFAULT_SWEEP = tuple(float(f) for f in range(100, 4001, 100))
DEFAULT_FREQUENCY = 1000.0


class ConfigError(ValueError):
    pass


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``1e4`` and ``1.0e-3`` as floats."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:\d+\.?\d*|\.\d+)[eE][-+]?\d+$"),
    list("-+0123456789."))


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "both"
    system: tuple = ("system1", "system2")
    geometry: object = "reference"
    atf_backend: str = "freefield"
    atf_file: str | None = None
    t60: float = 0.2
    max_order: int = 6
    target_mode: str = "oracle"
    planewave_direction: tuple = (0.0, 1.0, 0.0)
    planewave_amplitude: float = 1.0
    frequencies: tuple | None = None
    fs: float = 8000.0
    window_len: int = 3200
    iterations: int = 5000
    monte_carlo_runs: int = 100
    step_size: object = 2.5
    perturbation_variance: float = 0.0707
    snr_db: float = 20.0
    combination_rule: str = "uniform"
    seed: int = 0
    output_dir: str = "results"
    allow_divergence: bool = False
    steady_state_fraction: float = 0.1

    def __post_init__(self):
        _validate(self)

    @property
    def run_frequencies(self) -> tuple:
        """Frequencies for ``run``/``compare``: the list given, else 1 kHz."""
        return self.frequencies or (DEFAULT_FREQUENCY,)

    @property
    def sweep_frequencies(self) -> tuple:
        """Frequencies for ``sweep``: the list given, else 100 to 4000 Hz in 100 Hz steps."""
        return self.frequencies or DEFAULT_SWEEP

    @property
    def steady_state_window(self) -> int:
        return max(1, math.ceil(self.steady_state_fraction * self.iterations))

    @property
    def systems(self) -> list:
        """System entries; named systems are strings, custom ones mappings."""
        return list(self.system) if self.algorithm != "cpm" else []

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["snr_db"] = _dump_float(self.snr_db)
        return _plain(d)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form, ignoring the output location."""
        d = self.to_dict()
        d.pop("output_dir")
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _dump_float(x):
    return "inf" if math.isinf(x) else x


def _fail(name, msg):
    raise ConfigError(f"{name}: {msg}")


def _number(name, value, minimum=None, strict=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(name, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        _fail(name, f"expected an integer, got {value!r}")
    if minimum is not None and (value <= minimum if strict else value < minimum):
        _fail(name, f"must be {'>' if strict else '>='} {minimum}, got {value!r}")


def _choice(name, value, options):
    if value not in options:
        _fail(name, f"must be one of {', '.join(options)}, got {value!r}")


def _validate_system(entry, where):
    if isinstance(entry, str):
        _choice(where, entry, NAMED_SYSTEMS)
        return
    if not isinstance(entry, dict):
        _fail(where, "expected a system name or a mapping")
    unknown = set(entry) - {"name", "ring", "nodes"}
    if unknown:
        _fail(where, f"unknown key {sorted(unknown)[0]!r}")
    if ("ring" in entry) == ("nodes" in entry):
        _fail(where, "give exactly one of 'ring' or 'nodes'")
    if "ring" in entry:
        ring = entry["ring"]
        if not isinstance(ring, dict) or set(ring) != {"mic_counts", "speaker_counts"}:
            _fail(where + ".ring", "needs exactly 'mic_counts' and 'speaker_counts'")
    else:
        for i, node in enumerate(entry["nodes"]):
            if not isinstance(node, dict) or "mics" not in node:
                _fail(f"{where}.nodes[{i}]", "needs at least a 'mics' list")
            unknown = set(node) - {"mics", "speakers", "neighbors"}
            if unknown:
                _fail(f"{where}.nodes[{i}]", f"unknown key {sorted(unknown)[0]!r}")


def _validate(c: ExperimentConfig):
    _choice("algorithm", c.algorithm, ALGORITHMS)
    _choice("atf_backend", c.atf_backend, BACKENDS)
    _choice("target_mode", c.target_mode, TARGETS)
    _choice("combination_rule", c.combination_rule, RULES)
    if c.atf_backend == "file" and not c.atf_file:
        _fail("atf_file", "required when atf_backend is 'file'")
    if c.algorithm != "cpm" and not c.system:
        _fail("system", "at least one system is needed for dpmd")
    for i, entry in enumerate(c.system):
        _validate_system(entry, f"system[{i}]")
    if c.geometry != "reference":
        if not isinstance(c.geometry, dict):
            _fail("geometry", "expected 'reference' or a mapping")
        unknown = set(c.geometry) - set(GEOMETRY_KEYS)
        if unknown:
            _fail("geometry", f"unknown key {sorted(unknown)[0]!r}")
    _number("iterations", c.iterations, 1, integer=True)
    _number("monte_carlo_runs", c.monte_carlo_runs, 1, integer=True)
    _number("window_len", c.window_len, 1, integer=True)
    _number("max_order", c.max_order, 0, integer=True)
    _number("seed", c.seed, 0, integer=True)
    _number("fs", c.fs, 0, strict=True)
    _number("t60", c.t60, 0, strict=True)
    _number("perturbation_variance", c.perturbation_variance, 0)
    _number("planewave_amplitude", c.planewave_amplitude, 0, strict=True)
    _number("snr_db", c.snr_db)
    _number("steady_state_fraction", c.steady_state_fraction, 0, strict=True)
    if c.steady_state_fraction > 1:
        _fail("steady_state_fraction", "must be <= 1")
    if c.step_size != "auto":
        _number("step_size", c.step_size, 0, strict=True)
    if c.frequencies is not None:
        if not c.frequencies:
            _fail("frequencies", "must not be empty")
        for f in c.frequencies:
            _number("frequencies", f, 0, strict=True)
    if not isinstance(c.allow_divergence, bool):
        _fail("allow_divergence", "expected true or false")


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def config_from_dict(raw: dict | None) -> ExperimentConfig:
    raw = dict(raw or {})
    unknown = set(raw) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r}")
    if "snr_db" in raw and isinstance(raw["snr_db"], str):
        if raw["snr_db"].strip().lower() not in ("inf", "+inf", "infinity"):
            raise ConfigError(f"snr_db: expected a number or 'inf', got {raw['snr_db']!r}")
        raw["snr_db"] = math.inf
    if "system" in raw and not isinstance(raw["system"], list):
        raw["system"] = [raw["system"]]
    for key in ("system", "frequencies", "planewave_direction"):
        if key in raw and isinstance(raw[key], list):
            raw[key] = tuple(float(v) if key == "frequencies" and isinstance(v, int) else v
                             for v in raw[key])
    if raw.get("step_size") not in (None, "auto") and isinstance(raw.get("step_size"), str):
        raise ConfigError(f"step_size: expected a number or 'auto', got {raw['step_size']!r}")
    try:
        return ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    """Parse and validate a config file; an empty file gives all defaults."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(raw)
