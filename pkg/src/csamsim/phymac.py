"""Radio channel and channel-access primitives.

The propagation model is a two-ray ground interference curve (direct plus
ground-reflected path over a dielectric road surface) with optional
Nakagami small-scale fading whose shape parameter depends on distance.
Channel access is CSMA/CA: fixed arbitration wait plus a uniform random
backoff counted in idle slots, frozen while the channel is busy.

Everything here is stateless apart from CbrMeter, so the functions can be
driven either by the event engine or directly from tests and notebooks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .mobility import wrap_delta
from .scenario import Rng, ScenarioConfig

__all__ = [
    "PhyParams", "MacParams", "wavelength_m",
    "two_ray_gain_db", "smoothed_two_ray_gain_db",
    "nakagami_m", "nakagami_fading_linear", "rx_power_dbm", "carrier_sensed",
    "airtime_s", "fragment_payloads", "Transmission", "csma_send",
    "Outcome", "receive_outcome_from_powers", "receive_outcome",
    "reception_probability", "calibrate_power_for_range", "CbrMeter",
]

_LIGHT_SPEED = 299_792_458.0


@dataclass(frozen=True)
class PhyParams:
    """Propagation and receiver constants."""

    carrier_freq_hz: float = 5.9e9
    antenna_height_m: float = 1.5
    epsilon_r: float = 1.025          # road surface relative permittivity
    path_loss_exponent: float = 2.0
    noise_floor_dbm: float = -99.0
    receiver_sensitivity_dbm: float = -92.0
    carrier_sense_dbm: float = -94.0
    sinr_threshold_db: float = 7.0
    # fading shape per distance band: strong LOS close in, then diffuse
    nakagami_m_near: float = 1.5
    nakagami_m_mid: float = 0.75
    nakagami_m_far: float = 0.75
    nakagami_d1_m: float = 80.0
    nakagami_d2_m: float = 200.0


@dataclass(frozen=True)
class MacParams:
    """Channel-access timing and framing constants."""

    slot_s: float = 13e-6
    sifs_s: float = 32e-6
    aifsn: int = 2
    cw_slots: int = 15                # backoff drawn uniformly from [0, cw_slots]
    preamble_s: float = 40e-6
    per_fragment_overhead_bytes: int = 36
    fragmentation_threshold_bytes: int = 1500

    @property
    def aifs_s(self) -> float:
        return self.sifs_s + self.aifsn * self.slot_s

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "MacParams":
        return cls(fragmentation_threshold_bytes=cfg.fragmentation_threshold_bytes)


def wavelength_m(phy: PhyParams) -> float:
    return _LIGHT_SPEED / phy.carrier_freq_hz


def _reflection_terms(d: np.ndarray, phy: PhyParams):
    ht = hr = phy.antenna_height_m
    d_los = np.hypot(d, ht - hr)
    d_ref = np.hypot(d, ht + hr)
    sin_t = (ht + hr) / d_ref
    cos_t = d / d_ref
    rough = np.sqrt(phy.epsilon_r - cos_t ** 2)
    gamma = (sin_t - rough) / (sin_t + rough)
    phi = 2.0 * np.pi * (d_ref - d_los) / wavelength_m(phy)
    return gamma, phi


def _as_input(value, template):
    arr = np.asarray(value)
    return float(arr) if np.isscalar(template) or np.ndim(template) == 0 else arr


def two_ray_gain_db(distance_m, phy: PhyParams = PhyParams()):
    """Oscillatory channel gain in dB (direct plus ground-reflected ray).

    The two paths interfere, so the curve swings around free space close in
    and falls off much faster than free space far out.
    """
    d = np.maximum(np.asarray(distance_m, dtype=float), 1e-3)
    gamma, phi = _reflection_terms(d, phy)
    interference = np.abs(1.0 + gamma * np.exp(1j * phi))
    interference = np.maximum(interference, 1e-12)
    base = wavelength_m(phy) / (4.0 * np.pi * d)
    gain_db = phy.path_loss_exponent * 10.0 * (np.log10(base) + np.log10(interference))
    return _as_input(gain_db, distance_m)


def smoothed_two_ray_gain_db(distance_m, phy: PhyParams = PhyParams()):
    """Phase-averaged two-ray gain in dB.

    Replaces the interference term by its average power over a uniform
    phase, removing the oscillation; useful as a calibration curve. Falls
    off at path_loss_exponent * 3 dB per distance doubling asymptotically.
    """
    d = np.maximum(np.asarray(distance_m, dtype=float), 1e-3)
    gamma, _ = _reflection_terms(d, phy)
    mean_sq = 1.0 + gamma ** 2
    base = wavelength_m(phy) / (4.0 * np.pi * d)
    gain_db = phy.path_loss_exponent * 10.0 * (np.log10(base)
                                               + 0.5 * np.log10(mean_sq))
    return _as_input(gain_db, distance_m)


def nakagami_m(distance_m, phy: PhyParams = PhyParams()):
    d = np.asarray(distance_m, dtype=float)
    m = np.where(d < phy.nakagami_d1_m, phy.nakagami_m_near,
                 np.where(d < phy.nakagami_d2_m, phy.nakagami_m_mid,
                          phy.nakagami_m_far))
    return _as_input(m, distance_m)


def nakagami_fading_linear(distance_m, phy: PhyParams, rng: Rng):
    """Unit-mean power fading draws, one per distance."""
    m = np.asarray(nakagami_m(distance_m, phy), dtype=float)
    draws = rng.gen.gamma(shape=m, scale=1.0 / m)
    return _as_input(draws, distance_m)


def rx_power_dbm(tx_power_dbm: float, distance_m, phy: PhyParams = PhyParams(),
                 rng: Optional[Rng] = None, smoothed: bool = False):
    """Received power; deterministic mean unless an rng adds fading."""
    gain = smoothed_two_ray_gain_db if smoothed else two_ray_gain_db
    power = tx_power_dbm + np.asarray(gain(distance_m, phy), dtype=float)
    if rng is not None:
        fade = np.asarray(nakagami_fading_linear(distance_m, phy, rng), dtype=float)
        power = power + 10.0 * np.log10(np.maximum(fade, 1e-300))
    return _as_input(power, distance_m)


def carrier_sensed(mean_power_dbm, phy: PhyParams = PhyParams()):
    """Busy detection works on the unfaded mean power."""
    return _as_input(np.asarray(mean_power_dbm, float) >= phy.carrier_sense_dbm,
                     mean_power_dbm)


# ---------------------------------------------------------------------------
# framing and channel access


def airtime_s(payload_bytes: int, mac: MacParams, data_rate_bps: float) -> float:
    """Time on air for one frame: preamble plus payload and frame overhead."""
    if payload_bytes < 0:
        raise ValueError("payload_bytes must be non-negative")
    bits = 8.0 * (payload_bytes + mac.per_fragment_overhead_bytes)
    return mac.preamble_s + bits / data_rate_bps


def fragment_payloads(total_bytes: int, mac: MacParams) -> list[int]:
    """Split a message into fragment payloads at the fragmentation threshold."""
    if total_bytes <= 0:
        raise ValueError("total_bytes must be positive")
    thr = mac.fragmentation_threshold_bytes
    count = -(-total_bytes // thr)
    sizes = [thr] * (count - 1)
    sizes.append(total_bytes - thr * (count - 1))
    return sizes


@dataclass(frozen=True)
class Transmission:
    """One frame on the air."""

    sender_id: int
    start_s: float
    end_s: float
    payload_bytes: int
    frag_index: int = 0
    frag_count: int = 1
    tx_power_dbm: Optional[float] = None
    position: Optional[tuple[float, float]] = None

    @property
    def airtime_s(self) -> float:
        return self.end_s - self.start_s


def _merge_intervals(intervals) -> list[tuple[float, float]]:
    ivs = sorted((float(s), float(e)) for s, e in intervals if e > s)
    merged: list[tuple[float, float]] = []
    for s, e in ivs:
        if merged and s <= merged[-1][1]:
            last_s, last_e = merged[-1]
            merged[-1] = (last_s, max(last_e, e))
        else:
            merged.append((s, e))
    return merged


def _contend(t: float, slots: int, busy: list[tuple[float, float]],
             mac: MacParams) -> float:
    """Earliest fire time for a backoff of `slots`, starting to listen at t.

    The countdown needs a contiguous idle stretch of AIFS plus the remaining
    slots; busy periods freeze the counter, consuming only the whole slots
    that fit after the AIFS, and every resume waits out a fresh AIFS.
    """
    aifs = mac.aifs_s
    i = 0
    while True:
        while i < len(busy) and busy[i][1] <= t:
            i += 1
        if i < len(busy) and busy[i][0] <= t:
            t = busy[i][1]
            i += 1
            continue
        next_busy = busy[i][0] if i < len(busy) else math.inf
        fire = t + aifs + slots * mac.slot_s
        if fire <= next_busy:
            return fire
        idle_after_aifs = next_busy - (t + aifs)
        if idle_after_aifs > 0:
            consumed = min(slots, int(idle_after_aifs / mac.slot_s + 1e-9))
            slots -= consumed
        t = busy[i][1]
        i += 1


def csma_send(payload_bytes: int, now: float, busy_intervals, mac: MacParams,
              data_rate_bps: float, rng: Rng, sender_id: int = 0,
              tx_power_dbm: Optional[float] = None,
              position: Optional[tuple[float, float]] = None
              ) -> list[Transmission]:
    """Plan the fragment transmissions of one message against a busy timeline.

    The timeline is what this sender can hear; it is static here, so the
    planner suits single-node analyses and tests (the event engine runs the
    same contention rules incrementally against live traffic). Each fragment
    draws its own backoff.
    """
    busy = _merge_intervals(busy_intervals)
    frames = fragment_payloads(payload_bytes, mac)
    out: list[Transmission] = []
    t = now
    for index, frag in enumerate(frames):
        slots = int(rng.gen.integers(0, mac.cw_slots + 1))
        start = _contend(t, slots, busy, mac)
        duration = airtime_s(frag, mac, data_rate_bps)
        out.append(Transmission(sender_id, start, start + duration, frag,
                                index, len(frames), tx_power_dbm, position))
        t = start + duration
    return out


# ---------------------------------------------------------------------------
# reception


class Outcome(NamedTuple):
    received: bool
    reason: Optional[str]    # "receiver_transmitting" | "below_sensitivity" | "collision"


def receive_outcome_from_powers(signal_dbm: float, interferer_dbms,
                                phy: PhyParams = PhyParams(),
                                receiver_transmitting: bool = False) -> Outcome:
    """Decide one frame's fate from already-faded powers at the receiver."""
    if receiver_transmitting:
        return Outcome(False, "receiver_transmitting")
    if signal_dbm < phy.receiver_sensitivity_dbm:
        return Outcome(False, "below_sensitivity")
    noise_mw = 10.0 ** (phy.noise_floor_dbm / 10.0)
    interference_mw = float(sum(10.0 ** (p / 10.0) for p in interferer_dbms))
    sinr_lin = 10.0 ** (phy.sinr_threshold_db / 10.0)
    if 10.0 ** (signal_dbm / 10.0) < sinr_lin * (noise_mw + interference_mw):
        return Outcome(False, "collision")
    return Outcome(True, None)


def receive_outcome(tx: Transmission, receiver_xy: tuple[float, float],
                    concurrent, phy: PhyParams, rng: Rng,
                    road_length_m: Optional[float] = None,
                    receiver_transmitting: bool = False) -> Outcome:
    """Replay one reception: fade the wanted frame and every overlapping one.

    Transmissions must carry position and tx_power_dbm.
    """
    def dist(position):
        dx = position[0] - receiver_xy[0]
        if road_length_m is not None:
            dx = float(wrap_delta(position[0], receiver_xy[0], road_length_m))
        return math.hypot(dx, position[1] - receiver_xy[1])

    def faded(t: Transmission) -> float:
        if t.position is None or t.tx_power_dbm is None:
            raise ValueError("transmission lacks position or power")
        return float(rx_power_dbm(t.tx_power_dbm, dist(t.position), phy, rng))

    signal = faded(tx)
    interferers = [faded(other) for other in concurrent
                   if not (other.end_s <= tx.start_s or other.start_s >= tx.end_s)]
    return receive_outcome_from_powers(signal, interferers, phy,
                                       receiver_transmitting)


def reception_probability(tx_power_dbm: float, distance_m: float,
                          phy: PhyParams, rng: Rng, draws: int = 20000,
                          smoothed: bool = True) -> float:
    """Monte-Carlo single-link success rate over fading, no interference."""
    if draws < 1:
        raise ValueError("draws must be positive")
    gain = (smoothed_two_ray_gain_db if smoothed else two_ray_gain_db)(distance_m, phy)
    fades = nakagami_fading_linear(np.full(draws, float(distance_m)), phy, rng)
    power = tx_power_dbm + gain + 10.0 * np.log10(np.maximum(fades, 1e-300))
    return float(np.mean(power >= phy.receiver_sensitivity_dbm))


def calibrate_power_for_range(target_range_m: float, phy: PhyParams, rng: Rng,
                              target_success: float = 0.9, draws: int = 20000,
                              lo_dbm: float = -20.0, hi_dbm: float = 40.0,
                              tol_db: float = 0.01) -> float:
    """Smallest transmit power whose single-link success at the target range
    meets target_success, found by bisection over a shared fading sample.

    Uses the smoothed gain curve so the answer is monotone in range. Raises
    ValueError when the bracket cannot reach the target.
    """
    if not 0.0 < target_success < 1.0:
        raise ValueError("target_success must lie in (0, 1)")
    gain = smoothed_two_ray_gain_db(target_range_m, phy)
    fades = nakagami_fading_linear(np.full(draws, float(target_range_m)), phy, rng)
    fade_db = 10.0 * np.log10(np.maximum(fades, 1e-300))

    def success(power: float) -> float:
        return float(np.mean(power + gain + fade_db
                             >= phy.receiver_sensitivity_dbm))

    if success(hi_dbm) < target_success:
        raise ValueError(
            f"range {target_range_m} m unreachable at {target_success:.0%} "
            f"within [{lo_dbm}, {hi_dbm}] dBm")
    if success(lo_dbm) >= target_success:
        return lo_dbm
    lo, hi = lo_dbm, hi_dbm
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        if success(mid) >= target_success:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# channel-busy measurement


class CbrMeter:
    """Fraction of the trailing window during which the channel was busy.

    Overlapping busy reports are counted once (the union is measured).
    Before a full window has elapsed the fraction is taken over the time
    observed so far.
    """

    def __init__(self, window_s: float = 1.0):
        if window_s <= 0:
            raise ValueError("window_s must be positive")
        self.window_s = window_s
        self._raw: list[tuple[float, float]] = []

    def add_busy(self, start_s: float, end_s: float):
        if end_s > start_s:
            self._raw.append((float(start_s), float(end_s)))

    def read(self, now: float) -> float:
        horizon = min(now, self.window_s)
        if horizon <= 0:
            return 0.0
        lo = now - self.window_s
        self._raw = [(s, e) for s, e in self._raw if e > lo]
        busy = 0.0
        for s, e in _merge_intervals(self._raw):
            busy += max(0.0, min(e, now) - max(s, lo))
        return min(1.0, busy / horizon)
