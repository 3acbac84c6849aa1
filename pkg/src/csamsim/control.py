"""Adaptive message-size control and map-content packing.

Three cooperating mechanisms decide what one message carries:

* a proportional controller steers the message-size budget l_opt toward the
  channel-busy-ratio target,
* a packer turns the byte budget into record counts (known records, history
  blocks, unknown-object cubes at the best affordable resolution),
* a distance-dependent probabilistic selector picks which candidate objects
  fill those record slots, after redundancy suppression of anything other
  senders described recently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .codec import (HEADER_BYTES, CsamMessage, HistoryBlock, KnownRecord,
                    KnownType, UnknownRecord, WireFormat, expected_size)
from .mobility import Vehicle, wrap_delta
from .scenario import ScenarioConfig, Rng
from .worldmap import (LocalMap, MapEntry, ObjectKind, CAR_EXTENT_M,
                       box_cubes)

__all__ = [
    "compute_l_max", "ControllerState", "controller_from_config",
    "update_message_size", "PackPlan", "pack_counts",
    "SelectionPolicy", "selection_probability", "selection_probabilities",
    "Selection", "select_objects", "redundancy_filter", "build_csam",
    "PACKER_N_MAX",
]

# cap on the resolution scan; the budget loop cannot terminate on its own
# once no unknown cubes are being packed
PACKER_N_MAX = 64


def compute_l_max(data_rate_bps: float, tx_frequency_hz: float,
                  overhead_fraction: float, q_min: int) -> int:
    """Largest affordable message in whole bytes.

    The channel offers data_rate * (1 - overhead_fraction) useful bits per
    second; dividing by the message rate and by the q_min messages that must
    fit per cycle gives the per-message bit budget, floored to bytes.
    """
    if data_rate_bps <= 0 or tx_frequency_hz <= 0 or q_min < 1:
        raise ValueError("rates must be positive and q_min >= 1")
    if not 0 <= overhead_fraction < 1:
        raise ValueError("overhead_fraction must lie in [0, 1)")
    bits = data_rate_bps * (1.0 - overhead_fraction) / (tx_frequency_hz * q_min)
    return int(math.floor(bits / 8.0))


@dataclass(frozen=True)
class ControllerState:
    """Proportional size controller: l_opt += gain * (target - cbr)."""

    l_opt: int
    l_min: int
    l_max: int
    gain: float
    cbr_target: float

    def __post_init__(self):
        if not self.l_min <= self.l_opt <= self.l_max:
            raise ValueError(
                f"l_opt {self.l_opt} outside [{self.l_min}, {self.l_max}]")


def controller_from_config(cfg: ScenarioConfig, fmt: WireFormat) -> ControllerState:
    """Initial controller state; l_opt starts at the floor and ramps up."""
    l_min = HEADER_BYTES + fmt.l_self + min(fmt.l_k, fmt.l_u)
    l_max = compute_l_max(cfg.data_rate_bps, cfg.tx_frequency_hz,
                          cfg.overhead_fraction, cfg.q_min)
    if l_max < l_min:
        raise ValueError(
            f"size budget l_max={l_max} cannot fit the minimum message "
            f"(header + self block + one record = {l_min} bytes)")
    return ControllerState(l_opt=l_min, l_min=l_min, l_max=l_max,
                           gain=cfg.controller_gain, cbr_target=cfg.cbr_target)


def update_message_size(state: ControllerState, cbr: float) -> ControllerState:
    """One controller step against the latest busy-ratio observation."""
    raw = state.l_opt + state.gain * (state.cbr_target - cbr)
    clamped = min(state.l_max, max(state.l_min, int(round(raw))))
    return replace(state, l_opt=clamped)


@dataclass(frozen=True)
class PackPlan:
    """Record counts for one message: k_r known (k_rh with history blocks)
    and u_r unknown objects at resolution n_opt cubes each."""

    k_r: int
    k_rh: int
    u_r: int
    n_opt: int

    def content_bytes(self, fmt: WireFormat) -> int:
        return (self.k_r * fmt.l_k + self.k_rh * fmt.l_h
                + self.n_opt * self.u_r * fmt.l_u)

    @property
    def empty(self) -> bool:
        return self.k_r == 0 and self.u_r == 0


def pack_counts(budget: int, known_count: int, unknown_count: int,
                l_k: int, l_h: int, l_u: int, n_max: int = PACKER_N_MAX) -> PackPlan:
    """Greedy budget split, scanning unknown-object resolution upward.

    Each pass at resolution n spends the budget on unknown cubes first, then
    known records, then history blocks, all by floor division; the scan
    advances while the previous pass's counts still fit at the next
    resolution. The scan stops once no unknown record is packed (higher
    resolution cannot change anything) or at n_max. A budget too small for
    any record yields the all-zero plan (self block only).
    """
    if min(l_k, l_h, l_u) <= 0:
        raise ValueError("record sizes must be positive")
    if known_count < 0 or unknown_count < 0:
        raise ValueError("candidate counts must be non-negative")
    budget = int(budget)
    k_r = k_rh = u_r = 0
    n_opt = 0
    n = 1
    while n <= n_max and budget >= k_r * l_k + k_rh * l_h + n * u_r * l_u:
        rem = budget
        u_r = min(unknown_count, rem // (n * l_u))
        rem -= n * u_r * l_u
        k_r = min(known_count, rem // l_k)
        rem -= k_r * l_k
        k_rh = min(k_r, rem // l_h)
        n_opt = n
        n += 1
        if u_r == 0:
            break
    if k_r == 0 and u_r == 0:
        return PackPlan(0, 0, 0, 0)
    return PackPlan(k_r, k_rh, u_r, n_opt)


@dataclass(frozen=True)
class SelectionPolicy:
    """Distance-dependent inclusion law; everything within r0 is certain."""

    r0_m: float = 100.0
    mode: str = "shifted_exponential"
    r_scale_m: float = 100.0

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "SelectionPolicy":
        return cls(cfg.r0_m, cfg.selection_mode, cfg.r_scale_m)


def selection_probability(r: float, policy: SelectionPolicy) -> float:
    """Inclusion probability for a candidate at distance r."""
    return float(selection_probabilities(np.asarray([r], float), policy)[0])


def selection_probabilities(r, policy: SelectionPolicy) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if policy.mode == "shifted_exponential":
        p = np.exp(-(np.maximum(r, policy.r0_m) - policy.r0_m) / policy.r_scale_m)
    elif policy.mode == "exponential_density":
        # verbatim density form; lam is negative for r0 > 2 so everything
        # beyond r0 clamps to zero, and lam is undefined at r0 == 1 exactly
        gap = abs(1.0 - policy.r0_m)
        lam = (1.0 / policy.r0_m) * math.log(1.0 / gap) if gap > 0 else math.inf
        p = np.clip(lam * np.exp(-lam * r), 0.0, 1.0) if math.isfinite(lam) \
            else np.zeros_like(r)
    else:
        raise ValueError(f"unknown selection mode {policy.mode!r}")
    return np.where(r <= policy.r0_m, 1.0, p)


@dataclass(frozen=True)
class Selection:
    """Chosen content, nearest first; the first history_count known ids get
    history blocks."""

    known_ids: tuple[int, ...]
    history_count: int
    unknown_ids: tuple[int, ...]


def _draw(ids, dists, probs, slots: int, rng: Rng, max_passes) -> list[int]:
    # scan candidates nearest first; each pass gives every remaining
    # candidate one Bernoulli trial at its own probability, and selections
    # count in distance order until the slots fill. Zero-probability
    # candidates can never be chosen and leave the pool immediately.
    order = np.lexsort((ids, dists))
    ids, dists, probs = ids[order], dists[order], probs[order]
    live = probs > 0.0
    ids, dists, probs = ids[live], dists[live], probs[live]
    chosen: list[tuple[float, int]] = []
    passes = 0
    while slots > len(chosen) and len(ids) and (max_passes is None or passes < max_passes):
        hits = rng.gen.random(len(ids)) < probs
        take = np.flatnonzero(hits)[: slots - len(chosen)]
        chosen.extend(zip(dists[take].tolist(), ids[take].tolist()))
        keep = np.ones(len(ids), dtype=bool)
        keep[take] = False
        ids, dists, probs = ids[keep], dists[keep], probs[keep]
        passes += 1
    chosen.sort()
    return [oid for _, oid in chosen]


def select_objects(known_ids, known_dists, unknown_ids, unknown_dists,
                   plan: PackPlan, policy: SelectionPolicy, rng: Rng,
                   max_passes: int | None = None) -> Selection:
    """Fill the plan's record slots from distance-sorted candidates.

    Candidates are retried in refill passes until the slots are filled or
    nobody selectable remains; max_passes bounds the retries (1 makes the
    empirical inclusion rate equal selection_probability exactly).
    """
    known_ids = np.asarray(known_ids, dtype=np.int64)
    known_dists = np.asarray(known_dists, dtype=float)
    unknown_ids = np.asarray(unknown_ids, dtype=np.int64)
    unknown_dists = np.asarray(unknown_dists, dtype=float)
    picked_known: list[int] = []
    picked_unknown: list[int] = []
    if plan.k_r > 0 and len(known_ids):
        probs = selection_probabilities(known_dists, policy)
        picked_known = _draw(known_ids, known_dists, probs, plan.k_r, rng, max_passes)
    if plan.u_r > 0 and len(unknown_ids):
        probs = selection_probabilities(unknown_dists, policy)
        picked_unknown = _draw(unknown_ids, unknown_dists, probs, plan.u_r, rng, max_passes)
    return Selection(tuple(picked_known),
                     min(plan.k_rh, len(picked_known)),
                     tuple(picked_unknown))


def redundancy_filter(local_map: LocalMap, now: float,
                      redundancy_period_s: float, n_min: int
                      ) -> tuple[list[MapEntry], list[MapEntry]]:
    """Candidates that still need broadcasting.

    Known objects overheard from any other sender within the suppression
    period are dropped; unknown objects are dropped only if the overheard
    description reached resolution n_min or better.
    """
    horizon = now - redundancy_period_s
    known: list[MapEntry] = []
    unknown: list[MapEntry] = []
    for entry in local_map.entries.values():
        if entry.object_id == local_map.owner_id:
            continue
        heard = local_map.overheard.get(entry.object_id)
        recent = heard is not None and heard[0] > horizon
        if entry.kind is ObjectKind.KNOWN:
            if recent:
                continue
            known.append(entry)
        else:
            if recent and heard[1] >= n_min:
                continue
            unknown.append(entry)
    return known, unknown


def _record_from_entry(entry: MapEntry) -> KnownRecord:
    return KnownRecord(entry.object_id, entry.obj_type, entry.extent_x,
                       entry.extent_y, entry.center_x, entry.center_y,
                       entry.speed, entry.heading, entry.yaw)


def build_csam(local_map: LocalMap, vehicle: Vehicle, controller: ControllerState,
               policy: SelectionPolicy, fmt: WireFormat, now: float,
               road_length_m: float, rng: Rng, sequence: int = 0,
               redundancy_period_s: float = 1.0, n_min: int = 1) -> CsamMessage:
    """Compose one message: filter, pack, select, and materialize records.

    The encoded result never exceeds the controller's l_opt budget.
    """
    known_entries, unknown_entries = redundancy_filter(
        local_map, now, redundancy_period_s, n_min)

    def dist(entry: MapEntry) -> float:
        dx = float(wrap_delta(vehicle.position_m, entry.center_x, road_length_m))
        return math.hypot(dx, vehicle.lateral_m - entry.center_y)

    known_by_id = {e.object_id: e for e in known_entries}
    unknown_by_id = {e.object_id: e for e in unknown_entries}
    budget = controller.l_opt - HEADER_BYTES - fmt.l_self
    plan = pack_counts(budget, len(known_entries), len(unknown_entries),
                       fmt.l_k, fmt.l_h, fmt.l_u)
    sel = select_objects(
        [e.object_id for e in known_entries], [dist(e) for e in known_entries],
        [e.object_id for e in unknown_entries], [dist(e) for e in unknown_entries],
        plan, policy, rng)

    known_records = tuple(_record_from_entry(known_by_id[oid])
                          for oid in sel.known_ids)
    history = tuple(
        HistoryBlock(known_by_id[oid].history_samples(fmt.history_len))
        for oid in sel.known_ids[: sel.history_count])
    resolution = plan.n_opt if sel.unknown_ids else 0
    unknown_records = tuple(
        UnknownRecord(oid, box_cubes(unknown_by_id[oid].center_x,
                                     unknown_by_id[oid].center_y,
                                     unknown_by_id[oid].extent_x,
                                     unknown_by_id[oid].extent_y,
                                     resolution))
        for oid in sel.unknown_ids)

    self_record = KnownRecord(
        vehicle.id, KnownType.CAR, CAR_EXTENT_M[0], CAR_EXTENT_M[1],
        vehicle.position_m, vehicle.lateral_m, vehicle.speed_mps,
        vehicle.heading_rad(), vehicle.heading_rad())
    msg = CsamMessage(
        sender_id=vehicle.id, sequence=sequence & 0xFFFFFF,
        generation_time_s=now, self_record=self_record, known=known_records,
        history=history, unknown=unknown_records, resolution=resolution)
    size = expected_size(len(known_records), len(history), len(unknown_records),
                         resolution, fmt)
    if size > controller.l_opt:
        raise AssertionError(
            f"composed message {size} B exceeds budget {controller.l_opt} B")
    return msg
