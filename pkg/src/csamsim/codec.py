"""Binary wire format for cooperative situational-awareness messages (CSAMs).

Layout, all little-endian, IEEE-754 binary64 for full-precision reals:

    header (24 B):  u32 sender_id
                    u32 sequence      (bits 31..24 format version, 23..0 counter)
                    f64 generation_time_s
                    u16 K_R, u16 K_Rh, u16 U_R, u16 N
    self block  (l_self B):  known-record core, zero-padded
    K_R  known records (l_k B each):   core + padding
    K_Rh history blocks (l_h B each):  history_len entries of l_h//history_len B
    U_R  unknown records (N * l_u B each):  N cubes of
                    (u32 object_id, f32 edge_m, f64 x, f64 y, f64 z)

A known-record core is 60 bytes: a u32 tag holding the object type in the
top byte and a 24-bit object id below it, then seven f64 fields
(extent_x, extent_y, center_x, center_y, speed, heading, yaw).

History entries of 8..39 bytes use the quantized layout
(u16 x @0.25 m, i16 y @0.25 m, u16 speed @0.01 m/s, u8 heading, u8 yaw
@ 2*pi/256) padded to the entry size; entries of >= 40 bytes store the five
values as raw doubles plus padding.

The total encoded size is exactly
    24 + l_self + K_R*l_k + K_Rh*l_h + N*U_R*l_u.
Trailing bytes after that are ignored by the decoder (frames may be padded);
truncated or internally inconsistent input raises DecodeError.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .scenario import ScenarioConfig

__all__ = [
    "FORMAT_VERSION", "HEADER_BYTES", "KNOWN_CORE_BYTES",
    "KnownType", "WireFormat", "KnownRecord", "HistoryBlock", "UnknownRecord",
    "UnknownCube", "CsamMessage", "DecodeError",
    "encode", "decode", "expected_size", "quantize_message",
    "baseline_message_size",
]

FORMAT_VERSION = 1
HEADER_BYTES = 24
KNOWN_CORE_BYTES = 60
MAX_OBJECT_ID = (1 << 24) - 1

_HEADER = struct.Struct("<IIdHHHH")
_KNOWN_CORE = struct.Struct("<I7d")
_CUBE = struct.Struct("<If3d")
_HIST_QUANT = struct.Struct("<HhHBB")
_HIST_FULL = struct.Struct("<5d")

# quantization steps for the compact history entry
_QPOS = 0.25          # metres
_QSPEED = 0.01        # metres / second
_QANG = 2.0 * math.pi / 256.0


class KnownType(IntEnum):
    CAR = 0
    TRUCK = 1
    MOTORCYCLE = 2
    BICYCLE = 3
    PEDESTRIAN = 4


class DecodeError(ValueError):
    """Structured decode failure: message plus byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


@dataclass(frozen=True)
class WireFormat:
    """Record sizes shared by every node in a deployment."""

    l_k: int = 60
    l_h: int = 40
    l_u: int = 32
    l_self: int = 260
    history_len: int = 5

    def __post_init__(self):
        if self.l_k < KNOWN_CORE_BYTES:
            raise ValueError(f"l_k must be >= {KNOWN_CORE_BYTES}")
        if self.l_self < KNOWN_CORE_BYTES:
            raise ValueError(f"l_self must be >= {KNOWN_CORE_BYTES}")
        if self.l_u < _CUBE.size:
            raise ValueError(f"l_u must be >= {_CUBE.size}")
        if self.history_len < 0:
            raise ValueError("history_len must be non-negative")
        if self.history_len > 0:
            if self.l_h % self.history_len != 0:
                raise ValueError("l_h must be a multiple of history_len")
            if self.history_entry_bytes < _HIST_QUANT.size:
                raise ValueError(
                    f"history entries need >= {_HIST_QUANT.size} bytes each")

    @property
    def history_entry_bytes(self) -> int:
        return self.l_h // self.history_len if self.history_len else 0

    @property
    def history_full_precision(self) -> bool:
        return self.history_entry_bytes >= _HIST_FULL.size

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "WireFormat":
        return cls(cfg.l_k_bytes, cfg.l_h_bytes, cfg.l_u_bytes,
                   cfg.l_self_bytes, cfg.history_len)


@dataclass(frozen=True)
class KnownRecord:
    """Snapshot of one tracked, classified object."""

    object_id: int
    obj_type: KnownType
    extent_x: float
    extent_y: float
    center_x: float
    center_y: float
    speed: float
    heading: float
    yaw: float


@dataclass(frozen=True)
class HistoryBlock:
    """Past kinematic samples (x, y, speed, heading, yaw) for one known object."""

    entries: tuple[tuple[float, float, float, float, float], ...]


@dataclass(frozen=True)
class UnknownCube:
    x: float
    y: float
    z: float
    edge_m: float


@dataclass(frozen=True)
class UnknownRecord:
    """Unclassified object described as cubes at the message resolution."""

    object_id: int
    cubes: tuple[UnknownCube, ...]


@dataclass(frozen=True)
class CsamMessage:
    sender_id: int
    sequence: int
    generation_time_s: float
    self_record: KnownRecord
    known: tuple[KnownRecord, ...] = ()
    history: tuple[HistoryBlock, ...] = ()   # attached to known[0..len-1]
    unknown: tuple[UnknownRecord, ...] = ()
    resolution: int = 0                      # cubes per unknown record (N)


def expected_size(k_r: int, k_rh: int, u_r: int, n: int, fmt: WireFormat) -> int:
    """Closed-form frame size for the given record counts."""
    return (HEADER_BYTES + fmt.l_self + k_r * fmt.l_k + k_rh * fmt.l_h
            + n * u_r * fmt.l_u)


def baseline_message_size(mapped_cars: int) -> int:
    """Nominal size of the uncontrolled full-map message: 260 + 60 per car."""
    if mapped_cars < 0:
        raise ValueError("mapped_cars must be non-negative")
    return 260 + 60 * mapped_cars


# ---------------------------------------------------------------------------
# quantization helpers


def _quant_history_entry(entry):
    x, y, v, h, yaw = entry
    qx = int(np.clip(round(x / _QPOS), 0, 0xFFFF))
    qy = int(np.clip(round(y / _QPOS), -0x8000, 0x7FFF))
    qv = int(np.clip(round(v / _QSPEED), 0, 0xFFFF))
    qh = int(round((h % (2.0 * math.pi)) / _QANG)) % 256
    qyaw = int(round((yaw % (2.0 * math.pi)) / _QANG)) % 256
    return qx, qy, qv, qh, qyaw


def _dequant_history_entry(q):
    qx, qy, qv, qh, qyaw = q
    return (qx * _QPOS, qy * _QPOS, qv * _QSPEED, qh * _QANG, qyaw * _QANG)


def quantize_message(msg: CsamMessage, fmt: WireFormat) -> CsamMessage:
    """Snap every lossy field to its wire grid; fixed point of encode+decode."""
    history = msg.history
    if not fmt.history_full_precision:
        history = tuple(
            HistoryBlock(tuple(_dequant_history_entry(_quant_history_entry(e))
                               for e in blk.entries))
            for blk in msg.history)
    unknown = tuple(
        UnknownRecord(rec.object_id,
                      tuple(UnknownCube(c.x, c.y, c.z, float(np.float32(c.edge_m)))
                            for c in rec.cubes))
        for rec in msg.unknown)
    return CsamMessage(msg.sender_id, msg.sequence, msg.generation_time_s,
                       msg.self_record, msg.known, history, unknown,
                       msg.resolution)


# ---------------------------------------------------------------------------
# encoding


def _check_object_id(object_id: int):
    if not 0 <= object_id <= MAX_OBJECT_ID:
        raise ValueError(f"object id {object_id} outside 24-bit range")


def _pack_known_core(buf: bytearray, offset: int, rec: KnownRecord):
    _check_object_id(rec.object_id)
    tag = (int(rec.obj_type) << 24) | rec.object_id
    _KNOWN_CORE.pack_into(buf, offset, tag, rec.extent_x, rec.extent_y,
                          rec.center_x, rec.center_y, rec.speed, rec.heading,
                          rec.yaw)


def _pack_history(buf: bytearray, offset: int, blk: HistoryBlock, fmt: WireFormat):
    if len(blk.entries) != fmt.history_len:
        raise ValueError(
            f"history block needs exactly {fmt.history_len} entries, "
            f"got {len(blk.entries)}")
    step = fmt.history_entry_bytes
    for i, entry in enumerate(blk.entries):
        at = offset + i * step
        if fmt.history_full_precision:
            _HIST_FULL.pack_into(buf, at, *entry)
        else:
            _HIST_QUANT.pack_into(buf, at, *_quant_history_entry(entry))


def encode(msg: CsamMessage, fmt: WireFormat) -> bytes:
    """Serialize; the result length matches expected_size exactly."""
    k_r, k_rh, u_r = len(msg.known), len(msg.history), len(msg.unknown)
    n = msg.resolution
    for count, name in ((k_r, "known"), (k_rh, "history"), (u_r, "unknown"), (n, "resolution")):
        if not 0 <= count <= 0xFFFF:
            raise ValueError(f"{name} count {count} outside u16 range")
    if k_rh > k_r:
        raise ValueError("more history blocks than known records")
    if u_r > 0 and n < 1:
        raise ValueError("unknown records present but resolution is zero")
    if not 0 <= msg.sequence <= 0xFFFFFF:
        raise ValueError("sequence outside 24-bit range")
    _check_object_id(msg.sender_id)

    total = expected_size(k_r, k_rh, u_r, n, fmt)
    buf = bytearray(total)
    _HEADER.pack_into(buf, 0, msg.sender_id,
                      (FORMAT_VERSION << 24) | msg.sequence,
                      msg.generation_time_s, k_r, k_rh, u_r, n)
    _pack_known_core(buf, HEADER_BYTES, msg.self_record)
    at = HEADER_BYTES + fmt.l_self
    for rec in msg.known:
        _pack_known_core(buf, at, rec)
        at += fmt.l_k
    for blk in msg.history:
        _pack_history(buf, at, blk, fmt)
        at += fmt.l_h
    for rec in msg.unknown:
        if len(rec.cubes) != n:
            raise ValueError(
                f"unknown record {rec.object_id} has {len(rec.cubes)} cubes, "
                f"resolution says {n}")
        _check_object_id(rec.object_id)
        for cube in rec.cubes:
            _CUBE.pack_into(buf, at, rec.object_id, cube.edge_m,
                            cube.x, cube.y, cube.z)
            at += fmt.l_u
    return bytes(buf)


# ---------------------------------------------------------------------------
# decoding


def _need(buf: bytes, offset: int, count: int, what: str):
    if offset + count > len(buf):
        raise DecodeError(f"truncated input while reading {what}", offset)


def _unpack_known_core(buf: bytes, offset: int) -> KnownRecord:
    _need(buf, offset, _KNOWN_CORE.size, "known record")
    tag, ex, ey, cx, cy, v, h, yaw = _KNOWN_CORE.unpack_from(buf, offset)
    type_code = tag >> 24
    try:
        obj_type = KnownType(type_code)
    except ValueError:
        raise DecodeError(f"unknown object type code {type_code}", offset) from None
    return KnownRecord(tag & MAX_OBJECT_ID, obj_type, ex, ey, cx, cy, v, h, yaw)


def decode(buf: bytes, fmt: WireFormat) -> CsamMessage:
    """Parse a frame. Never reads past len(buf); ignores trailing padding."""
    _need(buf, 0, HEADER_BYTES, "header")
    sender, seq_word, gen_time, k_r, k_rh, u_r, n = _HEADER.unpack_from(buf, 0)
    version = seq_word >> 24
    if version != FORMAT_VERSION:
        raise DecodeError(f"unsupported format version {version}", 4)
    if k_rh > k_r:
        raise DecodeError(
            f"history count {k_rh} exceeds known count {k_r}", 18)
    if u_r > 0 and n < 1:
        raise DecodeError("unknown records present but resolution is zero", 22)

    total = expected_size(k_r, k_rh, u_r, n, fmt)
    _need(buf, 0, total, "declared record sections")

    self_record = _unpack_known_core(buf, HEADER_BYTES)
    at = HEADER_BYTES + fmt.l_self
    known = []
    for _ in range(k_r):
        known.append(_unpack_known_core(buf, at))
        at += fmt.l_k
    history = []
    step = fmt.history_entry_bytes
    for _ in range(k_rh):
        if fmt.history_len == 0:
            raise DecodeError("history block present but history_len is zero", at)
        entries = []
        for i in range(fmt.history_len):
            pos = at + i * step
            if fmt.history_full_precision:
                entries.append(_HIST_FULL.unpack_from(buf, pos))
            else:
                entries.append(_dequant_history_entry(
                    _HIST_QUANT.unpack_from(buf, pos)))
        history.append(HistoryBlock(tuple(entries)))
        at += fmt.l_h
    unknown = []
    for _ in range(u_r):
        rec_id = None
        cubes = []
        for _ in range(n):
            cid, edge, x, y, z = _CUBE.unpack_from(buf, at)
            if rec_id is None:
                rec_id = cid & MAX_OBJECT_ID
            elif (cid & MAX_OBJECT_ID) != rec_id:
                raise DecodeError(
                    f"inconsistent object ids inside unknown record "
                    f"({cid & MAX_OBJECT_ID} != {rec_id})", at)
            cubes.append(UnknownCube(x, y, z, edge))
            at += fmt.l_u
        unknown.append(UnknownRecord(rec_id, tuple(cubes)))

    return CsamMessage(sender_id=sender, sequence=seq_word & 0xFFFFFF,
                       generation_time_s=gen_time, self_record=self_record,
                       known=tuple(known), history=tuple(history),
                       unknown=tuple(unknown), resolution=n)
