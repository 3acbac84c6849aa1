"""Deterministic discrete-event simulation of the whole beaconing system.

One Simulation owns the fleet, the shared radio channel, every per-vehicle
map and controller, and a MetricsStore. State lives in columnar numpy
arrays keyed by vehicle index: map freshness is a matrix last_update[r, o]
(when receiver r last got information about object o, -inf for never),
src[r, o] is who supplied it, and over_time[r, o] is the redundancy ledger
(when r last heard any other sender describe o).

Channel access follows a race: every contender's backoff completion time is
a pure function of its resume time and remaining slots, so the engine keeps
a single "next completion" event, invalidated by a generation counter
whenever contention state changes. Ties fire together, which is exactly a
collision. Reception is resolved per fragment at its end against the worst
instantaneous interference seen during the fragment; a message is delivered
to a receiver only when all its fragments are.

Messages travel as id lists plus byte lengths; the frame bytes themselves
never need materializing here because the codec's size accounting is exact
(the codec round-trip is covered separately by its own tests).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .codec import HEADER_BYTES, WireFormat, baseline_message_size, expected_size
from .control import (PackPlan, SelectionPolicy, controller_from_config,
                      pack_counts, select_objects)
from .metrics import MAX_BIN_DISTANCE_M, MetricsStore
from .mobility import spawn_vehicles
from .phymac import (MacParams, PhyParams, airtime_s, fragment_payloads,
                     nakagami_m, two_ray_gain_db)
from .scenario import Rng, ScenarioConfig, derive_substream

__all__ = ["Simulation", "RunResult", "run", "METRIC_PERIOD_S"]

# event ranks break timestamp ties deterministically
_SENSE, _TXEPOCH, _FRAGSTART, _FRAGEND, _CBRSAMPLE, _METRIC, _END = range(7)

METRIC_PERIOD_S = 0.1       # staleness sampling cadence
_CBR_BIN_S = 0.025          # busy-time accounting granularity
_NEVER = -math.inf


@dataclass
class SimMessage:
    sender: int
    seq: int
    gen_t: float
    length: int                  # frame bytes handed to the MAC
    frag_sizes: list[int]
    content_ids: np.ndarray      # known-object ids carried (sender id implied)
    hist_count: int
    ok: np.ndarray | None = None     # per-receiver all-fragments-so-far flag
    dists: np.ndarray | None = None  # sender-receiver distances at first fragment


@dataclass
class ActiveTx:
    msg: SimMessage
    frag_idx: int
    sender: int
    start: float
    end: float
    dists: np.ndarray
    sig_dbm: np.ndarray          # faded power of this frame at every node
    sig_mw: np.ndarray
    audible: np.ndarray          # nodes whose carrier sense hears this frame
    cur_interf: np.ndarray       # mW of currently overlapping frames
    max_interf: np.ndarray       # worst instantaneous interference so far
    rx_block: np.ndarray         # receivers transmitting during any overlap


@dataclass
class RunResult:
    cfg: ScenarioConfig
    metrics: MetricsStore
    final_l_opt: np.ndarray
    controller_trace: list[tuple] = field(default_factory=list)
    vehicle_trace: list[tuple] = field(default_factory=list)


# per-node MAC states
_IDLE, _CONTEND, _TX = 0, 1, 2


class Simulation:
    """One seeded run. Construct, then call run() once."""

    def __init__(self, cfg: ScenarioConfig, trace_controller: bool = False,
                 trace_vehicles: bool = False):
        cfg.validate()
        self.cfg = cfg
        self.fmt = WireFormat.from_config(cfg)
        self.policy = SelectionPolicy.from_config(cfg)
        self.phy = PhyParams()
        self.mac = MacParams.from_config(cfg)
        self.trace_controller = trace_controller
        self.trace_vehicles = trace_vehicles

        root = Rng(cfg.seed)
        self._rng_phase = derive_substream(root, "phase")
        self._rng_backoff = derive_substream(root, "backoff")
        self._rng_fading = derive_substream(root, "fading")
        self._rng_selection = derive_substream(root, "selection")

        vehicles = spawn_vehicles(cfg, root)
        self.n = len(vehicles)
        self.ids = np.arange(self.n)
        self.pos0 = np.array([v.position_m for v in vehicles], dtype=float)
        self.vel = np.array([int(v.direction) * v.speed_mps for v in vehicles])
        self.lat = np.array([v.lateral_m for v in vehicles], dtype=float)
        self.lane = np.array([v.lane for v in vehicles], dtype=np.int64)

        n = self.n
        self.last_update = np.full((n, n), _NEVER)
        self.src = np.full((n, n), -2, dtype=np.int64)
        self.over_time = np.full((n, n), _NEVER)

        ctrl = controller_from_config(cfg, self.fmt)
        self.l_min, self.l_max = ctrl.l_min, ctrl.l_max
        self.l_opt = np.full(n, ctrl.l_opt, dtype=np.int64)

        self.state = np.zeros(n, dtype=np.int64)
        self.slots = np.zeros(n, dtype=np.int64)
        self.resume_t = np.zeros(n, dtype=float)
        self.busy_cnt = np.zeros(n, dtype=np.int64)
        self.pending: list[SimMessage | None] = [None] * n
        self.pending_next: list[SimMessage | None] = [None] * n
        self.frag_idx = np.zeros(n, dtype=np.int64)

        n_bins = int(math.ceil((cfg.sim_duration_s + 1.0) / _CBR_BIN_S)) + 4
        self.busy_bins = np.zeros((n, n_bins), dtype=float)
        self.busy_credit_until = np.zeros(n, dtype=float)

        self.metrics = MetricsStore(max_age_s=cfg.sim_duration_s + 10.0)
        self.active: list[ActiveTx] = []
        self.heap: list[tuple] = []
        self._seq = 0
        self._race_gen = 0
        self._msg_seq = 0
        self._noise_mw = 10.0 ** (self.phy.noise_floor_dbm / 10.0)
        self._sinr_lin = 10.0 ** (self.phy.sinr_threshold_db / 10.0)
        self._phase = np.zeros(self.n)
        self.controller_trace: list[tuple] = []
        self.vehicle_trace: list[tuple] = []

    # -- geometry -----------------------------------------------------------

    def positions_at(self, t: float) -> np.ndarray:
        return (self.pos0 + self.vel * t) % self.cfg.road_length_m

    def dist_matrix(self, t: float) -> np.ndarray:
        x = self.positions_at(t)
        dx = np.abs(x[:, None] - x[None, :])
        dx = np.minimum(dx, self.cfg.road_length_m - dx)
        dy = self.lat[:, None] - self.lat[None, :]
        return np.hypot(dx, dy)

    def dist_row(self, t: float, i: int) -> np.ndarray:
        x = self.positions_at(t)
        dx = np.abs(x - x[i])
        dx = np.minimum(dx, self.cfg.road_length_m - dx)
        return np.hypot(dx, self.lat - self.lat[i])

    # -- event plumbing -----------------------------------------------------

    def _push(self, t: float, rank: int, data=None):
        self._seq += 1
        heapq.heappush(self.heap, (t, rank, self._seq, data))

    def _recompute_race(self):
        self._race_gen += 1
        ready = (self.state == _CONTEND) & (self.busy_cnt == 0)
        if not ready.any():
            return
        completion = (self.resume_t[ready] + self.mac.aifs_s
                      + self.slots[ready] * self.mac.slot_s)
        self._push(float(completion.min()), _FRAGSTART, self._race_gen)

    # -- channel busy accounting ---------------------------------------------

    def _credit_busy(self, idx: np.ndarray, start: np.ndarray, end: float):
        # union semantics: each node is credited only past what it already
        # counted, which is correct because frames arrive in start order
        s = np.maximum(start, self.busy_credit_until[idx])
        live = s < end
        idx, s = idx[live], s[live]
        if len(idx) == 0:
            return
        self.busy_credit_until[idx] = end
        n_bins = self.busy_bins.shape[1]
        b = (s / _CBR_BIN_S).astype(np.int64)
        while True:
            lo = b * _CBR_BIN_S
            hi = lo + _CBR_BIN_S
            part = np.minimum(end, hi) - np.maximum(s, lo)
            hit = part > 0
            if not hit.any():
                break
            np.add.at(self.busy_bins,
                      (idx[hit], np.minimum(b[hit], n_bins - 1)), part[hit])
            b = b + 1

    def _read_cbr(self, i: int, t: float) -> float:
        w = self.cfg.cbr_window_s
        lo = max(0.0, t - w)
        horizon = t - lo
        if horizon <= 0:
            return 0.0
        k_lo = int(lo / _CBR_BIN_S)
        k_hi = min(int(t / _CBR_BIN_S), self.busy_bins.shape[1] - 1)
        row = self.busy_bins[i]
        if k_lo == k_hi:
            busy = row[k_lo] * (t - lo) / _CBR_BIN_S
        else:
            busy = float(row[k_lo + 1:k_hi].sum())
            busy += row[k_lo] * (((k_lo + 1) * _CBR_BIN_S) - lo) / _CBR_BIN_S
            busy += row[k_hi] * (t - k_hi * _CBR_BIN_S) / _CBR_BIN_S
        return min(1.0, busy / horizon)

    # -- message construction -------------------------------------------------

    def _build_message(self, i: int, t: float) -> tuple[SimMessage, PackPlan]:
        cfg, fmt = self.cfg, self.fmt
        seen = self.last_update[i] > _NEVER
        seen[i] = False
        dists = self.dist_row(t, i)

        if cfg.control_enabled:
            fresh = self.over_time[i] > t - cfg.redundancy_period_s
            cand = np.flatnonzero(seen & ~fresh)
            budget = int(self.l_opt[i]) - HEADER_BYTES - fmt.l_self
            plan = pack_counts(budget, len(cand), 0, fmt.l_k, fmt.l_h, fmt.l_u)
            sel = select_objects(cand, dists[cand], (), (), plan, self.policy,
                                 self._rng_selection)
            content = np.asarray(sel.known_ids, dtype=np.int64)
            hist = sel.history_count
            length = expected_size(len(content), hist, 0, 0, fmt)
        elif cfg.fixed_message_bytes is not None:
            # fixed-size load: nearest neighbours up to what the frame holds,
            # frame padded (or truncated) to exactly the configured length
            cand = np.flatnonzero(seen)
            room = max(0, (cfg.fixed_message_bytes - 260) // 60)
            order = np.lexsort((cand, dists[cand]))
            content = cand[order][:room]
            hist = 0
            length = cfg.fixed_message_bytes
            plan = PackPlan(len(content), 0, 0, 0)
        else:
            # legacy full-map frame: every mapped car, no suppression
            content = np.flatnonzero(seen)
            hist = 0
            length = baseline_message_size(len(content))
            plan = PackPlan(len(content), 0, 0, 0)

        self._msg_seq += 1
        msg = SimMessage(sender=i, seq=self._msg_seq, gen_t=t, length=length,
                         frag_sizes=fragment_payloads(length, self.mac),
                         content_ids=content, hist_count=hist)
        self.metrics.record_message_sent(length)
        return msg, plan

    # -- handlers -------------------------------------------------------------

    def _on_sense(self, t: float):
        d = self.dist_matrix(t)
        mask = d <= self.cfg.sensing_radius_m
        np.fill_diagonal(mask, False)
        self.last_update[mask] = t
        self.src[mask] = -1
        if self.trace_vehicles:
            x = self.positions_at(t)
            for i in range(self.n):
                self.vehicle_trace.append((t, i, float(x[i]), int(self.lane[i])))
        nxt = t + self.cfg.sensing_period_s
        if nxt <= self.cfg.sim_duration_s:
            self._push(nxt, _SENSE)

    def _on_tx_epoch(self, t: float, data):
        i, k = data
        cbr = self._read_cbr(i, t)
        if self.cfg.control_enabled:
            raw = self.l_opt[i] + self.cfg.controller_gain * (self.cfg.cbr_target - cbr)
            self.l_opt[i] = min(self.l_max, max(self.l_min, int(round(raw))))
        msg, plan = self._build_message(i, t)
        if self.trace_controller:
            self.controller_trace.append(
                (t, i, cbr, int(self.l_opt[i]), plan.k_r, plan.k_rh,
                 plan.u_r, plan.n_opt))

        if self.state[i] == _TX:
            self.pending_next[i] = msg       # replaces once the frame ends
        else:
            if self.state[i] == _IDLE:
                self.slots[i] = int(self._rng_backoff.gen.integers(
                    0, self.mac.cw_slots + 1))
                self.resume_t[i] = t
                self.state[i] = _CONTEND
            # already contending: swap the payload, keep the countdown
            self.pending[i] = msg
            self.frag_idx[i] = 0

        period = 1.0 / self.cfg.tx_frequency_hz
        nxt = self._phase[i] + (k + 1) * period
        if nxt <= self.cfg.sim_duration_s:
            self._push(nxt, _TXEPOCH, (i, k + 1))
        self._recompute_race()

    def _start_fragment(self, i: int, t: float):
        msg = self.pending[i]
        size = msg.frag_sizes[self.frag_idx[i]]
        duration = airtime_s(size, self.mac, self.cfg.data_rate_bps)
        dists = self.dist_row(t, i)
        mean_dbm = self.cfg.tx_power_dbm + two_ray_gain_db(dists, self.phy)
        m = np.asarray(nakagami_m(dists, self.phy))
        fade = self._rng_fading.gen.gamma(shape=m, scale=1.0 / m)
        sig_dbm = mean_dbm + 10.0 * np.log10(np.maximum(fade, 1e-300))
        sig_mw = 10.0 ** (sig_dbm / 10.0)
        audible = mean_dbm >= self.phy.carrier_sense_dbm
        audible[i] = True

        cur = np.zeros(self.n)
        rx_block = np.zeros(self.n, dtype=bool)
        rx_block[i] = True
        for a in self.active:
            cur += a.sig_mw
            rx_block[a.sender] = True
            a.cur_interf += sig_mw
            np.maximum(a.max_interf, a.cur_interf, out=a.max_interf)
            a.rx_block[i] = True
        tx = ActiveTx(msg=msg, frag_idx=int(self.frag_idx[i]), sender=i,
                      start=t, end=t + duration, dists=dists, sig_dbm=sig_dbm,
                      sig_mw=sig_mw, audible=audible, cur_interf=cur,
                      max_interf=cur.copy(), rx_block=rx_block)
        self.active.append(tx)
        if msg.ok is None:
            msg.ok = np.ones(self.n, dtype=bool)
            msg.ok[i] = False
            msg.dists = dists
        self.state[i] = _TX

        # freeze contenders that newly hear a busy channel
        newly = audible & (self.busy_cnt == 0) & (self.state == _CONTEND)
        if newly.any():
            consumed = np.floor(
                (t - self.resume_t[newly] - self.mac.aifs_s) / self.mac.slot_s
                + 1e-9).astype(np.int64)
            self.slots[newly] -= np.clip(consumed, 0, self.slots[newly])
        self.busy_cnt[audible] += 1
        idx = np.flatnonzero(audible)
        self._credit_busy(idx, np.full(len(idx), t), tx.end)
        self._push(tx.end, _FRAGEND, tx)

    def _on_race(self, t: float, gen: int):
        if gen != self._race_gen:
            return
        ready = (self.state == _CONTEND) & (self.busy_cnt == 0)
        completion = np.where(
            ready,
            self.resume_t + self.mac.aifs_s + self.slots * self.mac.slot_s,
            math.inf)
        winners = np.flatnonzero(completion == t)
        for w in winners:
            self._start_fragment(int(w), t)
        self._recompute_race()

    def _fuse(self, msg: SimMessage, t: float):
        receivers = np.flatnonzero(msg.ok)
        if len(receivers) == 0:
            return
        objs = np.concatenate(([msg.sender], msg.content_ids))
        block = np.ix_(receivers, objs)
        own = receivers[:, None] == objs[None, :]
        lu = self.last_update[block]
        sr = self.src[block]
        newer = ((msg.gen_t > lu) | ((msg.gen_t == lu) & (msg.sender < sr))) & ~own
        lu[newer] = msg.gen_t
        sr[newer] = msg.sender
        self.last_update[block] = lu
        self.src[block] = sr
        ot = self.over_time[block]
        self.over_time[block] = np.where(own, ot, np.maximum(ot, t))

    def _on_frag_end(self, t: float, tx: ActiveTx):
        self.active.remove(tx)
        for a in self.active:
            a.cur_interf -= tx.sig_mw
        i = tx.sender

        ok = (~tx.rx_block) & (tx.sig_dbm >= self.phy.receiver_sensitivity_dbm)
        ok &= tx.sig_mw >= self._sinr_lin * (self._noise_mw + tx.max_interf)
        ok[i] = False
        elig = (tx.dists < MAX_BIN_DISTANCE_M) & (self.ids != i)
        self.metrics.record_packets(t, tx.dists[elig], ~ok[elig])
        msg = tx.msg
        msg.ok &= ok

        self.busy_cnt[tx.audible] -= 1
        resumed = tx.audible & (self.busy_cnt == 0) & (self.state == _CONTEND)
        self.resume_t[resumed] = t

        last = tx.frag_idx == len(msg.frag_sizes) - 1
        if last:
            # the message made it out in full; replacement only affects what
            # the node sends next
            self.metrics.add_deliveries(int(np.count_nonzero(msg.ok)))
            elig_m = (msg.dists < MAX_BIN_DISTANCE_M) & (self.ids != i)
            self.metrics.record_messages(t, msg.dists[elig_m], ~msg.ok[elig_m])
            self._fuse(msg, t)
        nxt = self.pending_next[i]
        if last and nxt is None:
            self.pending[i] = None
            self.state[i] = _IDLE
        else:
            if nxt is not None:
                self.pending[i] = nxt
                self.pending_next[i] = None
                self.frag_idx[i] = 0
            else:
                self.frag_idx[i] += 1
            self.slots[i] = int(self._rng_backoff.gen.integers(
                0, self.mac.cw_slots + 1))
            self.resume_t[i] = t
            self.state[i] = _CONTEND
        self._recompute_race()

    def _on_cbr_sample(self, t: float):
        for i in range(self.n):
            self.metrics.record_cbr(t, i, self._read_cbr(i, t))
        nxt = t + 1.0
        if nxt <= self.cfg.sim_duration_s:
            self._push(nxt, _CBRSAMPLE)

    def _on_metric_sample(self, t: float):
        d = self.dist_matrix(t)
        elig = (d > self.cfg.sensing_radius_m) & (d < MAX_BIN_DISTANCE_M)
        np.fill_diagonal(elig, False)
        never = np.isneginf(self.last_update)
        ages = np.where(never, t, t - self.last_update)
        self.metrics.sample_ia(t, d[elig], ages[elig], never[elig])
        nxt = t + METRIC_PERIOD_S
        if nxt <= self.cfg.sim_duration_s:
            self._push(nxt, _METRIC)

    # -- main loop -------------------------------------------------------------

    def run(self) -> RunResult:
        cfg = self.cfg
        self._push(cfg.sim_duration_s, _END)
        if self.n > 0:
            period = 1.0 / cfg.tx_frequency_hz
            self._phase = self._rng_phase.gen.uniform(0.0, period, size=self.n)
            self._push(0.0, _SENSE)
            self._push(0.0, _METRIC)
            if cfg.sim_duration_s >= 1.0:
                self._push(1.0, _CBRSAMPLE)
            for i in range(self.n):
                self._push(float(self._phase[i]), _TXEPOCH, (i, 0))

        while self.heap:
            t, rank, _, data = heapq.heappop(self.heap)
            if rank == _END:
                break
            if rank == _SENSE:
                self._on_sense(t)
            elif rank == _TXEPOCH:
                self._on_tx_epoch(t, data)
            elif rank == _FRAGSTART:
                self._on_race(t, data)
            elif rank == _FRAGEND:
                self._on_frag_end(t, data)
            elif rank == _CBRSAMPLE:
                self._on_cbr_sample(t)
            elif rank == _METRIC:
                self._on_metric_sample(t)

        self.metrics.finalize(cfg.sim_duration_s, self.n)
        return RunResult(cfg=cfg, metrics=self.metrics,
                         final_l_opt=self.l_opt.copy(),
                         controller_trace=self.controller_trace,
                         vehicle_trace=self.vehicle_trace)


def run(cfg: ScenarioConfig, trace_controller: bool = False,
        trace_vehicles: bool = False) -> RunResult:
    """Convenience wrapper: build a Simulation and execute it."""
    return Simulation(cfg, trace_controller=trace_controller,
                      trace_vehicles=trace_vehicles).run()
