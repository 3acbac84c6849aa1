"""Ground-truth world objects and per-vehicle local maps.

A LocalMap holds everything one vehicle believes about its surroundings:
one entry per object (snapshot, short history, freshness) plus an
"overheard" ledger recording when other senders were last heard describing
each object. The ledger drives redundancy suppression; entry freshness
drives fusion and the information-age metric.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

from .codec import CsamMessage, KnownRecord, KnownType, UnknownCube
from .mobility import Vehicle, wrap_delta

__all__ = [
    "ObjectKind", "WorldObject", "World", "MapEntry", "LocalMap", "InfoAge",
    "SOURCE_LOCAL", "sense", "fuse_received", "information_age",
    "CAR_EXTENT_M", "box_cubes",
]

SOURCE_LOCAL = -1          # entry.source value for locally sensed data
CAR_EXTENT_M = (4.8, 1.8)  # nominal footprint used for vehicle objects


def box_cubes(center_x: float, center_y: float, extent_x: float,
              extent_y: float, n: int) -> tuple[UnknownCube, ...]:
    """Split a footprint into n cubes along its major axis.

    Higher n means more, smaller cubes; the decomposition is deterministic
    so any two nodes describe the same object identically.
    """
    if n < 1:
        raise ValueError("resolution must be >= 1")
    major = max(extent_x, extent_y, 1.0)
    edge = major / n
    along_x = extent_x >= extent_y
    start = -major / 2.0 + edge / 2.0
    cubes = []
    for i in range(n):
        off = start + i * edge
        cx = center_x + (off if along_x else 0.0)
        cy = center_y + (0.0 if along_x else off)
        cubes.append(UnknownCube(cx, cy, edge / 2.0, edge))
    return tuple(cubes)


class ObjectKind(IntEnum):
    KNOWN = 0
    UNKNOWN = 1


@dataclass
class WorldObject:
    """Ground-truth object. Vehicles are Known objects of type car."""

    object_id: int
    kind: ObjectKind
    center_x: float
    center_y: float
    extent_x: float = CAR_EXTENT_M[0]
    extent_y: float = CAR_EXTENT_M[1]
    speed: float = 0.0
    heading: float = 0.0
    yaw: float = 0.0
    obj_type: KnownType = KnownType.CAR
    native_resolution: int = 8   # cubes a direct sensor observation resolves

    @classmethod
    def from_vehicle(cls, v: Vehicle) -> "WorldObject":
        return cls(object_id=v.id, kind=ObjectKind.KNOWN,
                   center_x=v.position_m, center_y=v.lateral_m,
                   speed=v.speed_mps, heading=v.heading_rad(),
                   yaw=v.heading_rad())

    def cubes_at_resolution(self, n: int) -> tuple[UnknownCube, ...]:
        return box_cubes(self.center_x, self.center_y,
                         self.extent_x, self.extent_y, n)


class World:
    """Container for the ground-truth objects of a scenario."""

    def __init__(self, objects=(), road_length_m: float = math.inf):
        self.road_length_m = road_length_m
        self.objects: dict[int, WorldObject] = {}
        for obj in objects:
            self.add(obj)

    def add(self, obj: WorldObject):
        if obj.object_id in self.objects:
            raise ValueError(f"duplicate object id {obj.object_id}")
        self.objects[obj.object_id] = obj

    @classmethod
    def from_vehicles(cls, vehicles, road_length_m: float) -> "World":
        return cls((WorldObject.from_vehicle(v) for v in vehicles), road_length_m)

    def distance(self, a: WorldObject, b: WorldObject) -> float:
        dx = float(wrap_delta(a.center_x, b.center_x, self.road_length_m))
        return math.hypot(dx, a.center_y - b.center_y)


@dataclass
class MapEntry:
    """One tracked object inside a LocalMap."""

    object_id: int
    kind: ObjectKind
    obj_type: KnownType
    center_x: float
    center_y: float
    extent_x: float
    extent_y: float
    speed: float
    heading: float
    yaw: float
    last_update_s: float
    source: int                  # SOURCE_LOCAL or the sender id
    resolution: int = 0          # best cube count seen (Unknown only)
    history: deque = field(default_factory=deque)  # newest last

    def history_samples(self, length: int) -> tuple:
        """Most recent `length` samples, oldest first, padded by repeating
        the oldest available sample. Requires at least one sample."""
        if not self.history:
            raise ValueError(f"entry {self.object_id} has no history samples")
        samples = list(self.history)[-length:]
        while len(samples) < length:
            samples.insert(0, samples[0])
        return tuple(samples)


class LocalMap:
    """One vehicle's view of the world plus its overheard ledger."""

    def __init__(self, owner_id: int, history_len: int = 5):
        self.owner_id = owner_id
        self.history_len = history_len
        self.entries: dict[int, MapEntry] = {}
        # object_id -> (last time any other sender described it, resolution
        # carried by that record; 0 for known-object records)
        self.overheard: dict[int, tuple[float, int]] = {}

    def __contains__(self, object_id: int) -> bool:
        return object_id in self.entries

    def _push_history(self, entry: MapEntry, sample):
        entry.history.append(sample)
        while len(entry.history) > self.history_len and self.history_len > 0:
            entry.history.popleft()


class InfoAge(NamedTuple):
    age_s: float
    never_seen: bool


def sense(local_map: LocalMap, vehicle: Vehicle, world: World, now: float,
          radius_m: float):
    """Refresh entries for every object within radius, except the owner.

    Sensing is exact: snapshots copy ground truth, and each tick pushes one
    history sample. Unknown objects are resolved at their native resolution.
    """
    me = world.objects.get(vehicle.id)
    own_x = vehicle.position_m if me is None else me.center_x
    own_y = vehicle.lateral_m if me is None else me.center_y
    for obj in world.objects.values():
        if obj.object_id == local_map.owner_id:
            continue
        dx = float(wrap_delta(own_x, obj.center_x, world.road_length_m))
        if math.hypot(dx, own_y - obj.center_y) > radius_m:
            continue
        entry = local_map.entries.get(obj.object_id)
        if entry is None:
            entry = MapEntry(
                object_id=obj.object_id, kind=obj.kind, obj_type=obj.obj_type,
                center_x=obj.center_x, center_y=obj.center_y,
                extent_x=obj.extent_x, extent_y=obj.extent_y,
                speed=obj.speed, heading=obj.heading, yaw=obj.yaw,
                last_update_s=now, source=SOURCE_LOCAL)
            local_map.entries[obj.object_id] = entry
        else:
            entry.center_x, entry.center_y = obj.center_x, obj.center_y
            entry.extent_x, entry.extent_y = obj.extent_x, obj.extent_y
            entry.speed, entry.heading, entry.yaw = obj.speed, obj.heading, obj.yaw
            entry.last_update_s = now
            entry.source = SOURCE_LOCAL
        if obj.kind is ObjectKind.UNKNOWN:
            entry.resolution = max(entry.resolution, obj.native_resolution)
        local_map._push_history(
            entry, (obj.center_x, obj.center_y, obj.speed, obj.heading, obj.yaw))


def _accept(entry: MapEntry | None, generation_s: float, sender_id: int) -> bool:
    # newer timestamps win; exact ties go to the lower sender id, with local
    # sensing (SOURCE_LOCAL == -1) beating any sender
    if entry is None:
        return True
    if generation_s != entry.last_update_s:
        return generation_s > entry.last_update_s
    return sender_id < entry.source


def _fuse_known(local_map: LocalMap, rec: KnownRecord, generation_s: float,
                sender_id: int, history_entries=None):
    entry = local_map.entries.get(rec.object_id)
    if not _accept(entry, generation_s, sender_id):
        return
    if entry is None:
        entry = MapEntry(
            object_id=rec.object_id, kind=ObjectKind.KNOWN, obj_type=rec.obj_type,
            center_x=rec.center_x, center_y=rec.center_y,
            extent_x=rec.extent_x, extent_y=rec.extent_y,
            speed=rec.speed, heading=rec.heading, yaw=rec.yaw,
            last_update_s=generation_s, source=sender_id)
        local_map.entries[rec.object_id] = entry
    else:
        entry.kind = ObjectKind.KNOWN
        entry.obj_type = rec.obj_type
        entry.center_x, entry.center_y = rec.center_x, rec.center_y
        entry.extent_x, entry.extent_y = rec.extent_x, rec.extent_y
        entry.speed, entry.heading, entry.yaw = rec.speed, rec.heading, rec.yaw
        entry.last_update_s = generation_s
        entry.source = sender_id
    if history_entries:
        entry.history = deque(history_entries)
        while len(entry.history) > local_map.history_len > 0:
            entry.history.popleft()
    else:
        local_map._push_history(
            entry, (rec.center_x, rec.center_y, rec.speed, rec.heading, rec.yaw))


def fuse_received(local_map: LocalMap, msg: CsamMessage, now: float):
    """Merge a decoded message; idempotent and order-insensitive.

    Freshness gating uses the message generation timestamp. The overheard
    ledger is updated for every carried record regardless of freshness;
    records describing the owner itself are ignored entirely.
    """
    if msg.sender_id == local_map.owner_id:
        return

    def note_overheard(object_id: int, resolution: int):
        if object_id == local_map.owner_id:
            return
        prev = local_map.overheard.get(object_id)
        if prev is None or now >= prev[0]:
            local_map.overheard[object_id] = (now, resolution)

    # the self block is the sender's own record
    self_rec = KnownRecord(msg.sender_id, msg.self_record.obj_type,
                           msg.self_record.extent_x, msg.self_record.extent_y,
                           msg.self_record.center_x, msg.self_record.center_y,
                           msg.self_record.speed, msg.self_record.heading,
                           msg.self_record.yaw)
    _fuse_known(local_map, self_rec, msg.generation_time_s, msg.sender_id)
    note_overheard(msg.sender_id, 0)

    for i, rec in enumerate(msg.known):
        if rec.object_id == local_map.owner_id:
            continue
        hist = msg.history[i].entries if i < len(msg.history) else None
        _fuse_known(local_map, rec, msg.generation_time_s, msg.sender_id, hist)
        note_overheard(rec.object_id, 0)

    for rec in msg.unknown:
        if rec.object_id == local_map.owner_id:
            continue
        note_overheard(rec.object_id, msg.resolution)
        entry = local_map.entries.get(rec.object_id)
        if not _accept(entry, msg.generation_time_s, msg.sender_id):
            if entry is not None:
                entry.resolution = max(entry.resolution, msg.resolution)
            continue
        xs = [c.x for c in rec.cubes]
        ys = [c.y for c in rec.cubes]
        edge = rec.cubes[0].edge_m if rec.cubes else 0.0
        cx, cy = sum(xs) / len(xs), sum(ys) / len(ys)
        span_x = (max(xs) - min(xs)) + edge
        span_y = (max(ys) - min(ys)) + edge
        if entry is None:
            entry = MapEntry(
                object_id=rec.object_id, kind=ObjectKind.UNKNOWN,
                obj_type=KnownType.CAR, center_x=cx, center_y=cy,
                extent_x=span_x, extent_y=span_y, speed=0.0, heading=0.0,
                yaw=0.0, last_update_s=msg.generation_time_s, source=msg.sender_id,
                resolution=msg.resolution)
            local_map.entries[rec.object_id] = entry
        else:
            entry.kind = ObjectKind.UNKNOWN
            entry.center_x, entry.center_y = cx, cy
            entry.extent_x, entry.extent_y = span_x, span_y
            entry.last_update_s = msg.generation_time_s
            entry.source = msg.sender_id
            entry.resolution = max(entry.resolution, msg.resolution)
        local_map._push_history(entry, (cx, cy, 0.0, 0.0, 0.0))


def information_age(local_map: LocalMap, object_id: int, now: float,
                    sim_start_s: float = 0.0) -> InfoAge:
    """Seconds since the entry was last updated.

    Objects never entered into the map report their age since simulation
    start, flagged so callers can keep them out of averages.
    """
    entry = local_map.entries.get(object_id)
    if entry is None:
        return InfoAge(now - sim_start_s, True)
    return InfoAge(now - entry.last_update_s, False)
