"""Cooperative-awareness beaconing simulator and protocol library.

The package splits into a protocol layer (scenario, codec, worldmap,
control, phymac) whose pieces are importable and testable on their own, and
a simulation layer (engine, metrics, cli) that wires them into seeded,
reproducible runs.
"""

__version__ = "0.1.0"

from .scenario import (RANGE_PRESETS, SELECTION_MODES, Rng, ScenarioConfig,
                       ScenarioError, SimClock, coerce_override,
                       derive_substream, load_scenario, parse_scenario_text)
from .mobility import (Direction, RoadLayout, Vehicle, advance, distance,
                       position_at, spawn_vehicles, wrap_delta)
from .codec import (FORMAT_VERSION, HEADER_BYTES, CsamMessage, DecodeError,
                    HistoryBlock, KnownRecord, KnownType, UnknownCube,
                    UnknownRecord, WireFormat, baseline_message_size, decode,
                    encode, expected_size, quantize_message)
from .worldmap import (CAR_EXTENT_M, SOURCE_LOCAL, InfoAge, LocalMap,
                       MapEntry, ObjectKind, World, WorldObject, box_cubes,
                       fuse_received, information_age, sense)
from .control import (PACKER_N_MAX, ControllerState, PackPlan, Selection,
                      SelectionPolicy, build_csam, compute_l_max,
                      controller_from_config, pack_counts, redundancy_filter,
                      select_objects, selection_probabilities,
                      selection_probability, update_message_size)
from .phymac import (CbrMeter, MacParams, Outcome, PhyParams, Transmission,
                     airtime_s, calibrate_power_for_range, carrier_sensed,
                     csma_send, fragment_payloads, nakagami_fading_linear,
                     nakagami_m, reception_probability, receive_outcome,
                     receive_outcome_from_powers, rx_power_dbm,
                     smoothed_two_ray_gain_db, two_ray_gain_db, wavelength_m)
from .metrics import BIN_COUNT, BIN_WIDTH_M, MAX_BIN_DISTANCE_M, MetricsStore
from .engine import METRIC_PERIOD_S, RunResult, Simulation, run

__all__ = [
    "__version__",
    # scenario
    "ScenarioConfig", "ScenarioError", "load_scenario", "parse_scenario_text",
    "coerce_override", "Rng", "derive_substream", "SimClock",
    "RANGE_PRESETS", "SELECTION_MODES",
    # mobility
    "Direction", "Vehicle", "RoadLayout", "spawn_vehicles", "advance",
    "position_at", "distance", "wrap_delta",
    # codec
    "FORMAT_VERSION", "HEADER_BYTES", "WireFormat", "KnownType", "KnownRecord",
    "HistoryBlock", "UnknownCube", "UnknownRecord", "CsamMessage",
    "DecodeError", "encode", "decode", "expected_size", "quantize_message",
    "baseline_message_size",
    # worldmap
    "ObjectKind", "WorldObject", "World", "MapEntry", "LocalMap", "InfoAge",
    "SOURCE_LOCAL", "CAR_EXTENT_M", "box_cubes", "sense", "fuse_received",
    "information_age",
    # control
    "compute_l_max", "ControllerState", "controller_from_config",
    "update_message_size", "PackPlan", "pack_counts", "PACKER_N_MAX",
    "SelectionPolicy", "selection_probability", "selection_probabilities",
    "Selection", "select_objects", "redundancy_filter", "build_csam",
    # phymac
    "PhyParams", "MacParams", "wavelength_m", "two_ray_gain_db",
    "smoothed_two_ray_gain_db", "nakagami_m", "nakagami_fading_linear",
    "rx_power_dbm", "carrier_sensed", "airtime_s", "fragment_payloads",
    "Transmission", "csma_send", "Outcome", "receive_outcome_from_powers",
    "receive_outcome", "reception_probability", "calibrate_power_for_range",
    "CbrMeter",
    # metrics and engine
    "MetricsStore", "BIN_WIDTH_M", "BIN_COUNT", "MAX_BIN_DISTANCE_M",
    "Simulation", "RunResult", "run", "METRIC_PERIOD_S",
]
