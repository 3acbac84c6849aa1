"""Wrap-around multi-lane highway mobility with constant per-lane speeds."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from .scenario import Rng, ScenarioConfig, derive_substream

__all__ = [
    "Direction", "Vehicle", "RoadLayout",
    "spawn_vehicles", "advance", "position_at", "distance", "wrap_delta",
]


class Direction(IntEnum):
    FORWARD = 1
    BACKWARD = -1


@dataclass
class RoadLayout:
    """Straight road that wraps at road_length_m; lanes mirrored per direction."""

    road_length_m: float
    lane_width_m: float = 4.0
    lanes_per_direction: int = 3

    def lane_offset_m(self, direction: Direction, lane: int) -> float:
        # forward lanes sit at positive lateral offsets, backward at negative
        if not 0 <= lane < self.lanes_per_direction:
            raise ValueError(f"lane {lane} out of range")
        return int(direction) * (lane + 0.5) * self.lane_width_m

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "RoadLayout":
        return cls(cfg.road_length_m, cfg.lane_width_m, cfg.lanes_per_direction)


@dataclass
class Vehicle:
    id: int
    direction: Direction
    lane: int
    position_m: float       # longitudinal, in [0, road_length)
    speed_mps: float
    lateral_m: float        # fixed lane-centre offset

    def heading_rad(self) -> float:
        return 0.0 if self.direction is Direction.FORWARD else math.pi


def spawn_vehicles(cfg: ScenarioConfig, rng: Rng) -> list[Vehicle]:
    """Place round(density * road_km) vehicles uniformly at random.

    The total count is split evenly over the 2 * lanes_per_direction lanes;
    any remainder goes to the earliest lanes in deterministic order
    (forward 0..k-1, then backward 0..k-1). Positions are i.i.d. uniform.
    """
    layout = RoadLayout.from_config(cfg)
    total = int(round(cfg.vehicle_density_per_km * cfg.road_length_m / 1000.0))
    lanes = [(d, i) for d in (Direction.FORWARD, Direction.BACKWARD)
             for i in range(cfg.lanes_per_direction)]
    base, rem = divmod(total, len(lanes))
    stream = derive_substream(rng, "mobility")
    vehicles: list[Vehicle] = []
    vid = 0
    for k, (direction, lane) in enumerate(lanes):
        n_lane = base + (1 if k < rem else 0)
        positions = stream.gen.uniform(0.0, cfg.road_length_m, size=n_lane)
        for pos in positions:
            vehicles.append(Vehicle(
                id=vid,
                direction=direction,
                lane=lane,
                position_m=float(pos),
                speed_mps=cfg.lane_speeds_mps[lane],
                lateral_m=layout.lane_offset_m(direction, lane),
            ))
            vid += 1
    return vehicles


def position_at(vehicle: Vehicle, dt: float, road_length_m: float) -> float:
    """Closed-form position dt seconds ahead, wrapped into [0, road_length)."""
    travelled = vehicle.position_m + int(vehicle.direction) * vehicle.speed_mps * dt
    return travelled % road_length_m


def advance(vehicles: list[Vehicle], dt: float, road_length_m: float) -> list[Vehicle]:
    """Move every vehicle dt seconds along its direction; nothing else changes."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return [replace(v, position_m=position_at(v, dt, road_length_m)) for v in vehicles]


def wrap_delta(x1, x2, road_length_m: float):
    """Shortest longitudinal separation on the ring; works element-wise."""
    d = np.abs(np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float))
    return np.minimum(d, road_length_m - d)


def distance(a: Vehicle, b: Vehicle, road_length_m: float) -> float:
    """Wrap-aware Euclidean distance including lateral lane offsets."""
    dx = float(wrap_delta(a.position_m, b.position_m, road_length_m))
    dy = a.lateral_m - b.lateral_m
    return math.hypot(dx, dy)
