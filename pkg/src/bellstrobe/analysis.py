"""Stroboscopic reconstruction: per-slot counting statistics, correlators,
S(t), eta(t), their product, significance gating, plateau summaries and the
transient detector.

Slots are anchored at the pulse start (slot 0 begins at intra-pulse time 0)
and cover one full base pumping period, including the off phase. Slots with
no counts stay undefined and are excluded from averages, never zero-filled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .coinc import CoincidenceTable
from .model import OUTCOME_LABELS
from .sync import Detections

DETECTOR_KEYS = ("A+", "A-", "B+", "B-")


class AnalysisError(Exception):
    pass


class SignificanceError(AnalysisError):
    """Too few statistically significant slots to run a test."""


@dataclass(frozen=True)
class SlotGrid:
    """Uniform intra-pulse time grid over one base pumping period."""

    slot_width: float
    n_slots: int

    def __post_init__(self) -> None:
        if self.slot_width <= 0 or self.n_slots < 1:
            raise ValueError("slot_width must be positive and n_slots >= 1")

    @classmethod
    def for_period(cls, slot_width: float, period: float) -> "SlotGrid":
        """Grid covering `period`; slot_width must divide it within 1 ps."""
        n = round(period / slot_width)
        if n < 1 or abs(n * slot_width - period) > 1e-12:
            raise ValueError(
                f"slot width {slot_width} does not divide the period {period} "
                "within 1 ps"
            )
        return cls(slot_width=slot_width, n_slots=n)

    @property
    def period(self) -> float:
        return self.slot_width * self.n_slots

    def starts(self) -> np.ndarray:
        return np.arange(self.n_slots) * self.slot_width

    def centers(self) -> np.ndarray:
        return (np.arange(self.n_slots) + 0.5) * self.slot_width


def bin_singles(events: Detections, grid: SlotGrid) -> dict[str, np.ndarray]:
    """Per-detector singles counts on the slot grid.

    Tags beyond the base period (dark counts in FM-lengthened pulses) fall off
    the grid and are not counted; they are a <~2% slice of the off phase.
    """
    out = {}
    slots = np.floor(events.intra_time / grid.slot_width).astype(np.int64)
    ok = (slots >= 0) & (slots < grid.n_slots)
    for sign, suffix in ((1, "+"), (-1, "-")):
        sel = ok & (events.detector == sign)
        out[f"{events.station}{suffix}"] = np.bincount(
            slots[sel], minlength=grid.n_slots
        )
    return out


def correlator(counts: np.ndarray) -> tuple[float, float]:
    """E and its binomial error from 4 outcome counts (++, +-, -+, --).

    E = (N++ + N-- - N+- - N-+)/N, sigma = sqrt((1 - E^2)/N). A zero total
    leaves the correlator undefined (returned as NaN), not an error.
    """
    c = np.asarray(counts, dtype=np.float64)
    n = c.sum()
    if n <= 0:
        return math.nan, math.nan
    e = (c[0] + c[3] - c[1] - c[2]) / n
    return float(e), float(math.sqrt(max(0.0, 1.0 - e * e) / n))


def correlator_series(per_slot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized correlator over a (n_slots, 4) count array; NaN = undefined."""
    c = np.asarray(per_slot, dtype=np.float64)
    n = c.sum(axis=1)
    e = np.full(c.shape[0], np.nan)
    sig = np.full(c.shape[0], np.nan)
    ok = n > 0
    e[ok] = (c[ok, 0] + c[ok, 3] - c[ok, 1] - c[ok, 2]) / n[ok]
    sig[ok] = np.sqrt(np.clip(1.0 - e[ok] ** 2, 0.0, None) / n[ok])
    return e, sig


def chsh_from_correlators(
    e: np.ndarray, sigma: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """|S| and its error from 4 correlators in quad order (ab, ab', a'b, a'b').

    S = E(a,b) - E(a,b') + E(a',b) + E(a',b'); any undefined E leaves the slot
    undefined. Works on shape (4,) or (4, n_slots).
    """
    e = np.asarray(e, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    s = np.abs(e[0] - e[1] + e[2] + e[3])
    sig = np.sqrt((sigma**2).sum(axis=0))
    return s, sig


def chsh_series(per_slot_by_setting: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-slot |S(t)| with errors from a (4, n_slots, 4) count array."""
    tables = np.asarray(per_slot_by_setting)
    if tables.shape[0] != 4:
        raise ValueError("need exactly 4 settings in quad order")
    e = np.empty((4, tables.shape[1]))
    sig = np.empty_like(e)
    for i in range(4):
        e[i], sig[i] = correlator_series(tables[i])
    return chsh_from_correlators(e, sig)


def efficiency_series(
    coincidences_with_detector: np.ndarray, singles_of_detector: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """eta(t) = coincidences/singles for one detector, with binomial errors.

    Slots with zero singles are undefined (NaN).
    """
    c = np.asarray(coincidences_with_detector, dtype=np.float64)
    s = np.asarray(singles_of_detector, dtype=np.float64)
    eta = np.full(s.shape, np.nan)
    sig = np.full(s.shape, np.nan)
    ok = s > 0
    eta[ok] = c[ok] / s[ok]
    sig[ok] = np.sqrt(np.clip(eta[ok] * (1.0 - eta[ok]), 0.0, None) / s[ok])
    return eta, sig


def product_series(
    s: np.ndarray, sigma_s: np.ndarray, eta: np.ndarray, sigma_eta: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise S(t)*eta(t) with propagated errors; NaN propagates."""
    p = np.asarray(s) * np.asarray(eta)
    sig = np.sqrt((np.asarray(eta) * np.asarray(sigma_s)) ** 2
                  + (np.asarray(s) * np.asarray(sigma_eta)) ** 2)
    return p, sig


def significance_mask(
    per_slot_by_setting: np.ndarray, min_coincidences: int = 1000
) -> np.ndarray:
    """Slots where every setting's total coincidences reach the threshold.

    Individual outcome types may fall below the threshold as long as the
    4-outcome total per setting does not.
    """
    totals = np.asarray(per_slot_by_setting).sum(axis=2)  # (n_settings, n_slots)
    return totals.min(axis=0) >= min_coincidences


def in_pulse_slots(singles_total: np.ndarray) -> np.ndarray:
    """In-pulse slot mask: singles above 10x the out-of-pulse median.

    The overall median seeds the split (valid for duty cycles below 50%), then
    the threshold is refined against the median of the slots left outside.
    """
    s = np.asarray(singles_total, dtype=np.float64)
    rough = s > 10.0 * np.median(s)
    if rough.all() or not rough.any():
        return s > 10.0 * np.median(s)
    out_median = np.median(s[~rough])
    return s > 10.0 * out_median


@dataclass
class SlotSeries:
    """All per-slot reconstructions for one session."""

    grid: SlotGrid
    setting_labels: tuple[str, str, str, str]
    singles: dict[str, np.ndarray]  # per detector, (n_slots,)
    coincidences: np.ndarray  # (4 settings, n_slots, 4 outcomes)
    e: np.ndarray = field(init=False)  # (4, n_slots)
    sigma_e: np.ndarray = field(init=False)
    s: np.ndarray = field(init=False)  # (n_slots,)
    sigma_s: np.ndarray = field(init=False)
    eta: dict[str, np.ndarray] = field(init=False)
    sigma_eta: dict[str, np.ndarray] = field(init=False)
    product: dict[str, np.ndarray] = field(init=False)  # S(t)*eta_det(t)
    sigma_product: dict[str, np.ndarray] = field(init=False)

    def __post_init__(self) -> None:
        self.coincidences = np.asarray(self.coincidences, dtype=np.int64)
        if self.coincidences.shape != (4, self.grid.n_slots, 4):
            raise ValueError(
                f"coincidence array must be (4, {self.grid.n_slots}, 4), got "
                f"{self.coincidences.shape}"
            )
        self.e = np.empty((4, self.grid.n_slots))
        self.sigma_e = np.empty_like(self.e)
        for i in range(4):
            self.e[i], self.sigma_e[i] = correlator_series(self.coincidences[i])
        self.s, self.sigma_s = chsh_from_correlators(self.e, self.sigma_e)
        self.eta, self.sigma_eta = {}, {}
        self.product, self.sigma_product = {}, {}
        for det in self.singles:
            coinc_det = self._coincidences_with(det)
            self.eta[det], self.sigma_eta[det] = efficiency_series(
                coinc_det, self.singles[det]
            )
            self.product[det], self.sigma_product[det] = product_series(
                self.s, self.sigma_s, self.eta[det], self.sigma_eta[det]
            )

    def _coincidences_with(self, detector: str) -> np.ndarray:
        """Per-slot coincidences involving one detector, summed over settings."""
        station, sign = detector[0], detector[1]
        if station == "A":
            cols = [0, 1] if sign == "+" else [2, 3]  # oa = +
        else:
            cols = [0, 2] if sign == "+" else [1, 3]  # ob = +
        return self.coincidences[:, :, cols].sum(axis=(0, 2))

    @property
    def singles_total(self) -> np.ndarray:
        return sum(self.singles.values())

    def setting_totals(self) -> np.ndarray:
        """Unresolved (4, 4) per-setting outcome totals over the slot grid."""
        return self.coincidences.sum(axis=1)

    def tables(self) -> dict[str, CoincidenceTable]:
        return {
            lab: CoincidenceTable(lab, self.coincidences[i].sum(axis=0),
                                  per_slot=self.coincidences[i])
            for i, lab in enumerate(self.setting_labels)
        }


@dataclass
class PlateauSummary:
    """Time-averaged in-pulse values vs the all-data (unresolved) estimates."""

    in_pulse_range: tuple[int, int]  # [start, stop) slot indices
    n_in_pulse: int
    time_avg_s: float
    time_dispersion_s: float
    all_data_s: float
    all_data_s_sigma: float
    s_consistent: bool  # |time avg - all data| < 2 sigma
    time_avg_eta: dict[str, float]
    time_dispersion_eta: dict[str, float]
    all_data_eta: dict[str, float]
    all_data_eta_sigma: dict[str, float]


def plateau_summary(series: SlotSeries) -> PlateauSummary:
    """Compare stroboscopic in-pulse averages with the all-data values.

    Time averages and dispersions (sample standard deviation over slots) run
    over the defined in-pulse slots; all-data values come from totals over the
    whole grid, so the all-data eta sees the out-of-pulse dark singles too.
    """
    mask = in_pulse_slots(series.singles_total)
    if not mask.any():
        raise AnalysisError("empty in-pulse slot range")
    idx = np.flatnonzero(mask)

    s_defined = series.s[mask]
    s_defined = s_defined[~np.isnan(s_defined)]
    if s_defined.size == 0:
        raise AnalysisError("no defined S slots inside the pulse")
    time_avg_s = float(s_defined.mean())
    time_disp_s = float(s_defined.std(ddof=1)) if s_defined.size > 1 else 0.0

    totals = series.setting_totals()
    e_all = np.empty(4)
    sig_all = np.empty(4)
    for i in range(4):
        e_all[i], sig_all[i] = correlator(totals[i])
    s_all, s_all_sigma = chsh_from_correlators(e_all, sig_all)

    sigma_cmp = math.hypot(
        float(s_all_sigma),
        time_disp_s / math.sqrt(s_defined.size) if s_defined.size else 0.0,
    )
    consistent = abs(time_avg_s - float(s_all)) < 2.0 * sigma_cmp

    tavg_eta, tdisp_eta, all_eta, all_eta_sig = {}, {}, {}, {}
    for det, eta in series.eta.items():
        vals = eta[mask]
        vals = vals[~np.isnan(vals)]
        tavg_eta[det] = float(vals.mean()) if vals.size else math.nan
        tdisp_eta[det] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        singles_sum = float(series.singles[det].sum())
        coinc_sum = float(series._coincidences_with(det).sum())
        if singles_sum > 0:
            eta_all = coinc_sum / singles_sum
            all_eta[det] = eta_all
            all_eta_sig[det] = math.sqrt(
                max(0.0, eta_all * (1.0 - eta_all)) / singles_sum
            )
        else:
            all_eta[det] = math.nan
            all_eta_sig[det] = math.nan

    return PlateauSummary(
        in_pulse_range=(int(idx[0]), int(idx[-1]) + 1),
        n_in_pulse=int(mask.sum()),
        time_avg_s=time_avg_s,
        time_dispersion_s=time_disp_s,
        all_data_s=float(s_all),
        all_data_s_sigma=float(s_all_sigma),
        s_consistent=bool(consistent),
        time_avg_eta=tavg_eta,
        time_dispersion_eta=tdisp_eta,
        all_data_eta=all_eta,
        all_data_eta_sigma=all_eta_sig,
    )


def chi_square_vs_constant(
    values: np.ndarray, sigmas: np.ndarray, mask: np.ndarray | None = None
) -> tuple[float, int]:
    """Reduced chi-square of values against their inverse-variance mean."""
    v = np.asarray(values, dtype=np.float64)
    s = np.asarray(sigmas, dtype=np.float64)
    ok = np.isfinite(v) & np.isfinite(s) & (s > 0)
    if mask is not None:
        ok &= np.asarray(mask, dtype=bool)
    v, s = v[ok], s[ok]
    if v.size < 2:
        raise AnalysisError("need at least 2 defined slots for the flatness test")
    w = 1.0 / s**2
    mean = np.sum(w * v) / np.sum(w)
    chi2 = float(np.sum(((v - mean) / s) ** 2))
    dof = v.size - 1
    return chi2 / dof, dof


@dataclass(frozen=True)
class TransientVerdict:
    kind: str  # "none" or "deviation"
    slot_range: tuple[int, int] | None = None  # [start, stop)
    direction: int = 0  # -1 below plateau, +1 above
    max_sigma: float = 0.0
    plateau_reference: float = math.nan

    @property
    def is_deviation(self) -> bool:
        return self.kind == "deviation"


def detect_transient(
    values: np.ndarray,
    sigmas: np.ndarray,
    significant: np.ndarray,
    tau: float,
    slot_width: float,
    k_sigma: float = 3.0,
    plateau_reference: float | None = None,
    search_window: float | None = None,
) -> TransientVerdict:
    """Flag a short-time deviation in a per-slot series.

    A transient requires at least ceil(tau/slot_width) CONSECUTIVE significant
    slots, all deviating from the plateau reference in the same direction by
    more than k_sigma, inside the search window after the pulse start (default
    2*tau: the region a light-crossing-time deviation must live in). The
    plateau reference defaults to the inverse-variance mean of significant
    slots starting at or after 2*tau.
    """
    v = np.asarray(values, dtype=np.float64)
    s = np.asarray(sigmas, dtype=np.float64)
    sig = np.asarray(significant, dtype=bool) & np.isfinite(v) & np.isfinite(s) & (s > 0)

    min_run = math.ceil(tau / slot_width)
    window = 2.0 * tau if search_window is None else search_window
    # Only slots fully contained in the window; a flagged range must lie
    # inside [pulse start, pulse start + window].
    n_search = min(v.size, int(math.floor(window / slot_width + 1e-9)))

    starts = np.arange(v.size) * slot_width
    if plateau_reference is None:
        ref_slots = sig & (starts >= 2.0 * tau)
        if not ref_slots.any():
            raise SignificanceError("no significant slots beyond 2*tau for the plateau")
        w = 1.0 / s[ref_slots] ** 2
        plateau_reference = float(np.sum(w * v[ref_slots]) / np.sum(w))

    tested = sig[:n_search]
    if int(tested.sum()) < min_run:
        raise SignificanceError(
            f"only {int(tested.sum())} significant slots in the first "
            f"{window * 1e9:.0f} ns; need {min_run} to test persistence"
        )

    dev = np.zeros(n_search)
    dev[tested] = (v[:n_search][tested] - plateau_reference) / s[:n_search][tested]

    best: tuple[int, int, int, float] | None = None  # start, stop, direction, max|dev|
    run_start = None
    run_sign = 0
    for i in range(n_search + 1):
        sign = 0
        if i < n_search and tested[i] and abs(dev[i]) > k_sigma:
            sign = 1 if dev[i] > 0 else -1
        if sign != 0 and sign == run_sign:
            continue
        if run_sign != 0 and run_start is not None:
            length = i - run_start
            if length >= min_run:
                peak = float(np.max(np.abs(dev[run_start:i])))
                if best is None or length > best[1] - best[0]:
                    best = (run_start, i, run_sign, peak)
        run_start = i if sign != 0 else None
        run_sign = sign

    if best is None:
        return TransientVerdict(kind="none", plateau_reference=plateau_reference)
    return TransientVerdict(
        kind="deviation",
        slot_range=(best[0], best[1]),
        direction=best[2],
        max_sigma=best[3],
        plateau_reference=plateau_reference,
    )


@dataclass(frozen=True)
class ScanFit:
    amplitude: float
    visibility: float
    phase: float  # radians, modulo pi


def angle_scan_curves(
    angles: Sequence[float] | np.ndarray, counts: np.ndarray
) -> dict[str, ScanFit]:
    """Fit coincidence-vs-angle fringes for the 4 outcome types.

    `counts` has shape (n_angles, 4) in outcome order; the model per type is
    A*(1 +- V*cos 2(theta - theta0)), with + for ++/-- and - for +-/-+. The
    fit is linear in (A, A*V*cos, A*V*sin) via least squares. A non-positive
    fitted amplitude raises AnalysisError (degenerate data).
    """
    th = np.asarray(angles, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    if counts.shape != (th.size, 4):
        raise ValueError(f"counts must be (n_angles, 4), got {counts.shape}")
    if th.size < 3:
        raise AnalysisError("need at least 3 scan angles to fit a fringe")
    design = np.column_stack([np.ones_like(th), np.cos(2 * th), np.sin(2 * th)])
    signs = (1.0, -1.0, -1.0, 1.0)  # ++, +-, -+, --
    out = {}
    for o, (label, sgn) in enumerate(zip(OUTCOME_LABELS, signs)):
        c, *_ = np.linalg.lstsq(design, counts[:, o], rcond=None)
        if not np.isfinite(c).all() or c[0] <= 0:
            raise AnalysisError(f"degenerate fringe fit for outcome {label}")
        visibility = float(np.hypot(c[1], c[2]) / c[0])
        phase = 0.5 * math.atan2(sgn * c[2], sgn * c[1]) % math.pi
        out[label] = ScanFit(amplitude=float(c[0]), visibility=visibility, phase=phase)
    return out
