"""Coincidence matching, per-setting count tables, and the accidental-rate
estimate.

Detections are coincident when they share a pulse number AND lie within the
coincidence window of each other (both gates; the window default is 4 ns).
Within a pulse, pairing is greedy earliest-first, each detection used at most
once, so multi-pair pulses yield multiple records deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from .model import OUTCOME_LABELS
from .sync import Detections

DEFAULT_WINDOW = 4e-9


class SessionMixError(ValueError):
    """Data from different sessions must not be accumulated together."""


class CoincidenceRecord(NamedTuple):
    pulse_number: int
    oa: int
    ob: int
    intra_pulse_time: float  # station A's detection time within the pulse
    delta_t: float  # B minus A, seconds


@dataclass
class Coincidences:
    """Matched pairs as parallel arrays sorted by (pulse_number, A's time)."""

    pulse_number: np.ndarray  # int64
    oa: np.ndarray  # int8
    ob: np.ndarray  # int8
    intra_time: np.ndarray  # float64, A's intra-pulse time
    delta_t: np.ndarray  # float64, B minus A

    def __len__(self) -> int:
        return int(self.pulse_number.size)

    def __iter__(self) -> Iterator[CoincidenceRecord]:
        for i in range(len(self)):
            yield CoincidenceRecord(
                int(self.pulse_number[i]),
                int(self.oa[i]),
                int(self.ob[i]),
                float(self.intra_time[i]),
                float(self.delta_t[i]),
            )

    def outcome_index(self) -> np.ndarray:
        """Index into OUTCOME_ORDER: ++ -> 0, +- -> 1, -+ -> 2, -- -> 3."""
        return ((1 - self.oa) + (1 - self.ob) // 2).astype(np.int64)

    @staticmethod
    def empty() -> "Coincidences":
        return Coincidences(
            np.empty(0, np.int64),
            np.empty(0, np.int8),
            np.empty(0, np.int8),
            np.empty(0, np.float64),
            np.empty(0, np.float64),
        )


def _greedy_pairs(ta: np.ndarray, tb: np.ndarray, window: float) -> list[tuple[int, int]]:
    """Earliest-first pairing of two sorted time lists within one pulse."""
    out = []
    i = j = 0
    while i < ta.size and j < tb.size:
        dt = tb[j] - ta[i]
        if abs(dt) <= window:
            out.append((i, j))
            i += 1
            j += 1
        elif dt > 0:
            i += 1  # this A detection can never match a later B
        else:
            j += 1
    return out


def match_coincidences(
    events_a: Detections, events_b: Detections, window: float = DEFAULT_WINDOW
) -> Coincidences:
    """Pair detections across stations into coincidence records.

    Both inputs must be sorted by (pulse_number, intra_pulse_time) and carry a
    SHARED pulse numbering (station B renumbered via the alignment offset
    before matching). Clock-rate mismatch inside one pulse is far below the
    window and is ignored.
    """
    pa, pb = events_a.pulse_number, events_b.pulse_number
    ta, tb = events_a.intra_time, events_b.intra_time

    common = np.intersect1d(pa, pb)
    if common.size == 0:
        return Coincidences.empty()

    # Group extents of each common pulse in both (sorted) event lists.
    a_lo = np.searchsorted(pa, common, side="left")
    a_hi = np.searchsorted(pa, common, side="right")
    b_lo = np.searchsorted(pb, common, side="left")
    b_hi = np.searchsorted(pb, common, side="right")
    na = a_hi - a_lo
    nb = b_hi - b_lo

    # Fast path: pulses with exactly one detection on each side.
    single = (na == 1) & (nb == 1)
    ia_single = a_lo[single]
    ib_single = b_lo[single]
    ok = np.abs(tb[ib_single] - ta[ia_single]) <= window
    multi_a: list[int] = []
    multi_b: list[int] = []

    # General greedy path for multi-detection pulses.
    for g in np.flatnonzero(~single):
        sa = slice(a_lo[g], a_hi[g])
        sb = slice(b_lo[g], b_hi[g])
        for i, j in _greedy_pairs(ta[sa], tb[sb], window):
            multi_a.append(a_lo[g] + i)
            multi_b.append(b_lo[g] + j)

    idx_a = np.concatenate([ia_single[ok], np.asarray(multi_a, dtype=np.int64)])
    idx_b = np.concatenate([ib_single[ok], np.asarray(multi_b, dtype=np.int64)])
    if idx_a.size == 0:
        return Coincidences.empty()
    order = np.lexsort((ta[idx_a], pa[idx_a]))
    idx_a = idx_a[order]
    idx_b = idx_b[order]

    return Coincidences(
        pulse_number=pa[idx_a],
        oa=events_a.detector[idx_a],
        ob=events_b.detector[idx_b],
        intra_time=ta[idx_a],
        delta_t=tb[idx_b] - ta[idx_a],
    )


def accidental_estimate(
    rate_a: float, rate_b: float, window: float, duration: float
) -> float:
    """Expected chance coincidences: rate_a * rate_b * window * duration."""
    if min(rate_a, rate_b, window, duration) < 0:
        raise ValueError("all inputs must be non-negative")
    return rate_a * rate_b * window * duration


@dataclass
class CoincidenceTable:
    """Per-setting 4-outcome counts, optionally resolved by time slot."""

    setting_label: str
    counts: np.ndarray  # (4,) int64 in OUTCOME_ORDER
    per_slot: np.ndarray | None = None  # (n_slots, 4) int64

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def as_dict(self) -> dict[str, int]:
        return {lab: int(c) for lab, c in zip(OUTCOME_LABELS, self.counts)}


def _slot_of(
    intra_time: np.ndarray, slot_width: float, n_slots: int
) -> tuple[np.ndarray, np.ndarray]:
    slots = np.floor(intra_time / slot_width).astype(np.int64)
    return slots, (slots >= 0) & (slots < n_slots)


def build_tables(
    records_by_run: Mapping[int, Coincidences],
    run_to_setting: Mapping[int, str],
    session_of_run: Mapping[int, str] | None = None,
    slot_width: float | None = None,
    n_slots: int | None = None,
    setting_labels: Sequence[str] | None = None,
) -> dict[str, CoincidenceTable]:
    """Accumulate per-setting outcome tables across the runs of one session.

    Every run must carry a setting label; if session ids are supplied, mixing
    more than one raises SessionMixError (sessions are never summed). With
    slot_width and n_slots, tables also resolve counts by station-A time slot;
    records falling outside the slot grid are counted in the totals only.
    """
    if session_of_run is not None:
        sessions = {session_of_run[r] for r in records_by_run}
        if len(sessions) > 1:
            raise SessionMixError(
                f"runs span sessions {sorted(sessions)}; refusing to accumulate"
            )
    missing = [r for r in records_by_run if r not in run_to_setting]
    if missing:
        raise KeyError(f"runs without a setting label: {missing}")

    if setting_labels is None:
        setting_labels = sorted({run_to_setting[r] for r in records_by_run})
    tables = {
        lab: CoincidenceTable(
            setting_label=lab,
            counts=np.zeros(4, dtype=np.int64),
            per_slot=(
                np.zeros((n_slots, 4), dtype=np.int64)
                if slot_width is not None and n_slots is not None
                else None
            ),
        )
        for lab in setting_labels
    }

    for run, rec in records_by_run.items():
        table = tables[run_to_setting[run]]
        oi = rec.outcome_index()
        table.counts += np.bincount(oi, minlength=4)
        if table.per_slot is not None and len(rec):
            slots, ok = _slot_of(rec.intra_time, slot_width, n_slots)
            flat = slots[ok] * 4 + oi[ok]
            table.per_slot += np.bincount(
                flat, minlength=n_slots * 4
            ).reshape(n_slots, 4)
    return tables


def delta_t_histogram(
    records: Coincidences | np.ndarray,
    bin_width: float = 0.5e-9,
    half_range: float = 6e-9,
) -> tuple[np.ndarray, np.ndarray]:
    """Diagnostic histogram of B-minus-A arrival differences.

    Its spread should match sqrt(2) x the single-detector jitter. Accepts a
    Coincidences batch or a bare array of differences.
    """
    deltas = records.delta_t if isinstance(records, Coincidences) else np.asarray(records)
    edges = np.arange(-half_range, half_range + bin_width / 2, bin_width)
    hist, _ = np.histogram(deltas, bins=edges)
    return edges, hist
