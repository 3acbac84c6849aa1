"""Run metrics: busy-ratio series, loss-by-distance, staleness, throughput.

Distance-binned accumulators are kept twice, one set over the whole run and
one excluding the warm-up, because early samples are dominated by cold maps.
The packet-error CSV reports the trimmed set by default.

All writers emit the fixed column orders:

    cbr_timeseries.csv   t,vehicle,cbr
    per_by_distance.csv  bin_lo,bin_hi,expected,lost_pkt,lost_msg,per_pkt,per_msg
    ia_by_distance.csv   bin_lo,bin_hi,mean_ia_s,p95_ia_s,never_seen_count
    summary.csv          mean_cbr,offered_load_bytes_per_s,idr,mean_message_size_bytes

Ratios with an empty denominator are written as empty cells, not zeros.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

__all__ = ["MetricsStore", "BIN_WIDTH_M", "BIN_COUNT", "MAX_BIN_DISTANCE_M"]

BIN_WIDTH_M = 50.0
BIN_COUNT = 20
MAX_BIN_DISTANCE_M = BIN_WIDTH_M * BIN_COUNT


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".10g")


class _BinnedLoss:
    """Expected/lost counters per distance bin, packet and message level."""

    def __init__(self):
        self.exp_pkt = np.zeros(BIN_COUNT, dtype=np.int64)
        self.lost_pkt = np.zeros(BIN_COUNT, dtype=np.int64)
        self.exp_msg = np.zeros(BIN_COUNT, dtype=np.int64)
        self.lost_msg = np.zeros(BIN_COUNT, dtype=np.int64)

    def add_packets(self, bins: np.ndarray, lost: np.ndarray):
        self.exp_pkt += np.bincount(bins, minlength=BIN_COUNT)
        self.lost_pkt += np.bincount(bins[lost], minlength=BIN_COUNT)

    def add_messages(self, bins: np.ndarray, lost: np.ndarray):
        self.exp_msg += np.bincount(bins, minlength=BIN_COUNT)
        self.lost_msg += np.bincount(bins[lost], minlength=BIN_COUNT)


class _BinnedAge:
    """Staleness accumulators per distance bin, with an age histogram for
    percentiles; pairs never heard of are counted apart from the ages."""

    def __init__(self, age_resolution_s: float, max_age_s: float):
        self.resolution = age_resolution_s
        self.slots = max(1, int(math.ceil(max_age_s / age_resolution_s)) + 1)
        self.sum_age = np.zeros(BIN_COUNT, dtype=float)
        self.count = np.zeros(BIN_COUNT, dtype=np.int64)
        self.never = np.zeros(BIN_COUNT, dtype=np.int64)
        self.hist = np.zeros((BIN_COUNT, self.slots), dtype=np.int64)

    def add(self, bins: np.ndarray, ages: np.ndarray, never: np.ndarray):
        seen = ~never
        b, a = bins[seen], ages[seen]
        self.sum_age += np.bincount(b, weights=a, minlength=BIN_COUNT)
        self.count += np.bincount(b, minlength=BIN_COUNT)
        self.never += np.bincount(bins[never], minlength=BIN_COUNT)
        slots = np.minimum((a / self.resolution).astype(np.int64), self.slots - 1)
        np.add.at(self.hist, (b, slots), 1)

    def mean(self, b: int):
        return self.sum_age[b] / self.count[b] if self.count[b] else None

    def p95(self, b: int):
        total = int(self.count[b])
        if total == 0:
            return None
        cum = np.cumsum(self.hist[b])
        slot = int(np.searchsorted(cum, math.ceil(0.95 * total)))
        return (slot + 1) * self.resolution


class MetricsStore:
    """Aggregates everything one run reports.

    Vectorized record_* calls take distances in metres; samples beyond the
    last bin edge are discarded. Timestamps decide whether a sample also
    lands in the trimmed (post warm-up) accumulators.
    """

    def __init__(self, warmup_s: float = 10.0, age_resolution_s: float = 0.1,
                 max_age_s: float = 600.0):
        self.warmup_s = warmup_s
        self.full_loss = _BinnedLoss()
        self.trim_loss = _BinnedLoss()
        self.full_age = _BinnedAge(age_resolution_s, max_age_s)
        self.trim_age = _BinnedAge(age_resolution_s, max_age_s)
        self.cbr_rows: list[tuple[float, int, float]] = []
        self.generated_bytes = 0
        self.messages_sent = 0
        self.deliveries = 0            # receivers that completed a message
        self.duration_s = 0.0
        self.vehicle_count = 0

    # -- recording ---------------------------------------------------------

    @staticmethod
    def _bin_of(distances) -> tuple[np.ndarray, np.ndarray]:
        d = np.asarray(distances, dtype=float)
        keep = (d >= 0.0) & (d < MAX_BIN_DISTANCE_M)
        return (d[keep] / BIN_WIDTH_M).astype(np.int64), keep

    def record_packets(self, t: float, distances, lost):
        bins, keep = self._bin_of(distances)
        lost = np.asarray(lost, dtype=bool)[keep]
        self.full_loss.add_packets(bins, lost)
        if t >= self.warmup_s:
            self.trim_loss.add_packets(bins, lost)

    def record_messages(self, t: float, distances, lost):
        bins, keep = self._bin_of(distances)
        lost = np.asarray(lost, dtype=bool)[keep]
        self.full_loss.add_messages(bins, lost)
        if t >= self.warmup_s:
            self.trim_loss.add_messages(bins, lost)

    def sample_ia(self, t: float, distances, ages, never_seen):
        bins, keep = self._bin_of(distances)
        ages = np.asarray(ages, dtype=float)[keep]
        never = np.asarray(never_seen, dtype=bool)[keep]
        self.full_age.add(bins, ages, never)
        if t >= self.warmup_s:
            self.trim_age.add(bins, ages, never)

    def record_cbr(self, t: float, vehicle: int, value: float):
        self.cbr_rows.append((t, vehicle, value))

    def record_message_sent(self, size_bytes: int, receivers_complete: int = 0):
        self.messages_sent += 1
        self.generated_bytes += int(size_bytes)
        self.deliveries += int(receivers_complete)

    def add_deliveries(self, receivers_complete: int):
        self.deliveries += int(receivers_complete)

    def finalize(self, duration_s: float, vehicle_count: int):
        self.duration_s = duration_s
        self.vehicle_count = vehicle_count

    # -- derived quantities --------------------------------------------------

    def offered_load(self) -> float:
        """Generated bytes per second per vehicle; equals rate x mean size."""
        if self.duration_s <= 0 or self.vehicle_count == 0:
            return 0.0
        return self.generated_bytes / self.duration_s / self.vehicle_count

    def mean_message_size(self):
        if self.messages_sent == 0:
            return None
        return self.generated_bytes / self.messages_sent

    def idr(self):
        """Mean completed copies per transmitted message."""
        if self.messages_sent == 0:
            return None
        return self.deliveries / self.messages_sent

    def mean_cbr(self):
        if not self.cbr_rows:
            return None
        return sum(r[2] for r in self.cbr_rows) / len(self.cbr_rows)

    # -- rows and writers ------------------------------------------------------

    def per_rows(self, trimmed: bool = True) -> list[tuple]:
        acc = self.trim_loss if trimmed else self.full_loss
        rows = []
        for b in range(BIN_COUNT):
            ep, lp = int(acc.exp_pkt[b]), int(acc.lost_pkt[b])
            em, lm = int(acc.exp_msg[b]), int(acc.lost_msg[b])
            rows.append((b * BIN_WIDTH_M, (b + 1) * BIN_WIDTH_M, ep, lp, lm,
                         lp / ep if ep else None,
                         lm / em if em else None))
        return rows

    def ia_rows(self, trimmed: bool = True) -> list[tuple]:
        acc = self.trim_age if trimmed else self.full_age
        rows = []
        for b in range(BIN_COUNT):
            rows.append((b * BIN_WIDTH_M, (b + 1) * BIN_WIDTH_M,
                         acc.mean(b), acc.p95(b), int(acc.never[b])))
        return rows

    def summary_row(self) -> tuple:
        return (self.mean_cbr(), self.offered_load(), self.idr(),
                self.mean_message_size())

    def write_csvs(self, out_dir, full_averages: bool = False) -> list[str]:
        """Write the standard report files; returns the file names written."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []

        def emit(name: str, header: list[str], rows):
            with open(out / name, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                for row in rows:
                    w.writerow([_fmt(v) for v in row])
            written.append(name)

        emit("cbr_timeseries.csv", ["t", "vehicle", "cbr"], self.cbr_rows)
        per_header = ["bin_lo", "bin_hi", "expected", "lost_pkt", "lost_msg",
                      "per_pkt", "per_msg"]
        ia_header = ["bin_lo", "bin_hi", "mean_ia_s", "p95_ia_s",
                     "never_seen_count"]
        emit("per_by_distance.csv", per_header, self.per_rows(trimmed=True))
        emit("ia_by_distance.csv", ia_header, self.ia_rows(trimmed=True))
        emit("summary.csv", ["mean_cbr", "offered_load_bytes_per_s", "idr",
                             "mean_message_size_bytes"], [self.summary_row()])
        if full_averages:
            emit("per_by_distance_full.csv", per_header,
                 self.per_rows(trimmed=False))
            emit("ia_by_distance_full.csv", ia_header,
                 self.ia_rows(trimmed=False))
        return written
