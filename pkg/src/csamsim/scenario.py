"""Scenario configuration, deterministic seeded randomness, and the sim clock.

A scenario file is flat UTF-8 text, one ``key = value`` per line, ``#``
comments allowed. Every key is optional; omitted keys take the defaults
below, so an empty file is a valid scenario.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace

import numpy as np

__all__ = [
    "ScenarioError",
    "ScenarioConfig",
    "load_scenario",
    "parse_scenario_text",
    "coerce_override",
    "Rng",
    "derive_substream",
    "SimClock",
    "RANGE_PRESETS",
    "SELECTION_MODES",
]


class ScenarioError(ValueError):
    """Raised for unparseable, unknown, or out-of-range scenario input."""


# Transmit powers that give round nominal ranges under the bundled channel
# model; chosen with `range_preset = 250m | 500m | 1000m`. An explicit
# tx_power_dbm key always wins over the preset.
RANGE_PRESETS = {"250m": 10.0, "500m": 21.0, "1000m": 31.0}

# Distance-dependent inclusion laws for message content selection.
#   shifted_exponential: p = exp(-(r - r0) / r_scale) beyond r0  (default)
#   exponential_density: p = clamp(lam * exp(-lam * r), 0, 1) with
#                        lam = (1/r0) * ln(1/|1 - r0|)
SELECTION_MODES = ("shifted_exponential", "exponential_density")


@dataclass
class ScenarioConfig:
    """Complete description of one simulation run."""

    road_length_m: float = 4000.0
    lanes_per_direction: int = 3
    lane_speeds_mps: tuple[float, ...] = (17.0, 18.0, 19.0)
    lane_width_m: float = 4.0
    vehicle_density_per_km: float = 25.0   # total across all lanes
    tx_power_dbm: float = 21.0
    tx_frequency_hz: float = 5.0           # message generation rate f
    data_rate_bps: float = 6e6
    overhead_fraction: float = 0.1         # non-payload share of airtime budget
    q_min: int = 25                        # minimum messages a max-size frame must allow per cycle
    cbr_target: float = 0.68
    controller_gain: float = 2000.0        # bytes per unit CBR error
    r0_m: float = 100.0                    # always-include radius for selection
    selection_mode: str = "shifted_exponential"
    r_scale_m: float = 100.0
    redundancy_period_s: float = 1.0       # overheard-suppression window T
    n_min: int = 1                         # resolution that makes an overheard unknown redundant
    history_len: int = 5                   # entries per history block (M)
    l_k_bytes: int = 60
    l_h_bytes: int = 40
    l_u_bytes: int = 32
    l_self_bytes: int = 260
    sensing_radius_m: float = 150.0
    sensing_period_s: float = 0.1
    sim_duration_s: float = 100.0
    cbr_window_s: float = 1.0
    seed: int = 1
    control_enabled: bool = True
    fragmentation_threshold_bytes: int = 1500
    fixed_message_bytes: int | None = None  # control-off fixed load size (nominal)

    def validate(self) -> "ScenarioConfig":
        """Check invariants; raise ScenarioError naming the offending key."""
        positive = [
            "road_length_m", "lane_width_m", "vehicle_density_per_km",
            "tx_frequency_hz", "data_rate_bps", "controller_gain", "r0_m",
            "r_scale_m", "redundancy_period_s", "sensing_radius_m",
            "sensing_period_s", "sim_duration_s", "cbr_window_s",
        ]
        for key in positive:
            if not getattr(self, key) > 0:
                raise ScenarioError(f"{key} must be strictly positive")
        for key in ("l_k_bytes", "l_h_bytes", "l_u_bytes", "l_self_bytes",
                    "fragmentation_threshold_bytes"):
            if int(getattr(self, key)) < 1:
                raise ScenarioError(f"{key} must be a positive byte count")
        if self.lanes_per_direction < 1:
            raise ScenarioError("lanes_per_direction must be at least 1")
        if len(self.lane_speeds_mps) != self.lanes_per_direction:
            raise ScenarioError(
                "lane_speeds_mps needs exactly lanes_per_direction entries "
                f"(got {len(self.lane_speeds_mps)}, expected {self.lanes_per_direction})")
        if any(v <= 0 for v in self.lane_speeds_mps):
            raise ScenarioError("lane_speeds_mps entries must be strictly positive")
        if not 0.0 <= self.overhead_fraction < 1.0:
            raise ScenarioError("overhead_fraction must lie in [0, 1)")
        if not 0.0 < self.cbr_target < 1.0:
            raise ScenarioError("cbr_target must lie in (0, 1)")
        if self.q_min < 1:
            raise ScenarioError("q_min must be at least 1")
        if self.n_min < 1:
            raise ScenarioError("n_min must be at least 1")
        if self.history_len < 0:
            raise ScenarioError("history_len must be non-negative")
        if self.selection_mode not in SELECTION_MODES:
            raise ScenarioError(
                f"selection_mode must be one of {SELECTION_MODES}")
        if self.fixed_message_bytes is not None and self.fixed_message_bytes < 1:
            raise ScenarioError("fixed_message_bytes must be positive when set")
        return self

    def with_overrides(self, **kwargs) -> "ScenarioConfig":
        return replace(self, **kwargs).validate()

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


_FIELDS = {f.name: f for f in fields(ScenarioConfig)}


def _parse_value(key: str, raw: str, where: str):
    kind = _FIELDS[key].type
    try:
        if key == "lane_speeds_mps":
            return tuple(float(p) for p in raw.split(","))
        if key == "fixed_message_bytes":
            return None if raw.lower() in ("none", "off") else int(float(raw))
        if key == "selection_mode":
            return raw
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(float(raw))
        return float(raw)
    except ValueError:
        raise ScenarioError(
            f"{where}: cannot parse value {raw!r} for key {key!r}") from None


def parse_scenario_text(text: str) -> ScenarioConfig:
    """Parse scenario key/value text into a validated ScenarioConfig."""
    values: dict = {}
    preset = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ScenarioError(f"line {lineno}: expected 'key = value', got {body!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key == "range_preset":
            if raw not in RANGE_PRESETS:
                raise ScenarioError(
                    f"line {lineno}: range_preset must be one of "
                    f"{sorted(RANGE_PRESETS)}, got {raw!r}")
            preset = raw
            continue
        if key not in _FIELDS:
            raise ScenarioError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ScenarioError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw, f"line {lineno}")
    if preset is not None and "tx_power_dbm" not in values:
        values["tx_power_dbm"] = RANGE_PRESETS[preset]
    return ScenarioConfig(**values).validate()


def coerce_override(key: str, raw: str) -> tuple[str, object]:
    """Parse one key=value override with scenario-file semantics.

    Returns the (possibly translated) config field name and its value;
    range_preset turns into the corresponding tx_power_dbm.
    """
    key = key.strip()
    raw = raw.strip()
    if key == "range_preset":
        if raw not in RANGE_PRESETS:
            raise ScenarioError(
                f"range_preset must be one of {sorted(RANGE_PRESETS)}, got {raw!r}")
        return "tx_power_dbm", RANGE_PRESETS[raw]
    if key not in _FIELDS:
        raise ScenarioError(f"unknown key {key!r}")
    return key, _parse_value(key, raw, f"override {key}")


def load_scenario(path) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    return parse_scenario_text(text)


@dataclass
class Rng:
    """Seeded random stream addressable by a hierarchical label path.

    The generator state is a pure function of (seed, path): the same pair
    always reproduces the same stream, independent of creation order.
    """

    seed: int
    path: str = ""
    gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        digest = hashlib.sha256(f"{self.seed}|{self.path}".encode()).digest()
        words = np.frombuffer(digest, dtype=np.uint64)
        self.gen = np.random.default_rng(np.random.SeedSequence(list(words)))


def derive_substream(rng: Rng, label: str) -> Rng:
    """Child stream for one subsystem (e.g. "mobility", "backoff", "fading")."""
    if not label:
        raise ValueError("substream label must be non-empty")
    return Rng(rng.seed, f"{rng.path}/{label}")


class SimClock:
    """Monotone simulation clock in seconds."""

    def __init__(self, start: float = 0.0):
        self.now = float(start)

    def advance_to(self, t: float):
        if t < self.now:
            raise ValueError(f"clock cannot run backwards ({t} < {self.now})")
        self.now = float(t)
