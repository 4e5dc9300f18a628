import math

import numpy as np
import pytest

from bellstrobe.analysis import (
    AnalysisError,
    SignificanceError,
    SlotGrid,
    SlotSeries,
    angle_scan_curves,
    bin_singles,
    chi_square_vs_constant,
    chsh_series,
    correlator,
    correlator_series,
    detect_transient,
    efficiency_series,
    in_pulse_slots,
    plateau_summary,
    product_series,
    significance_mask,
)
from bellstrobe.model import TSIRELSON, OUTCOME_LABELS
from bellstrobe.sync import Detections


class TestSlotGrid:
    def test_default_grid(self):
        grid = SlotGrid.for_period(4e-9, 2e-6)
        assert grid.n_slots == 500
        assert grid.period == pytest.approx(2e-6)

    def test_non_dividing_width_rejected(self):
        with pytest.raises(ValueError):
            SlotGrid.for_period(3e-9, 2e-6)


def make_detections(station, intra_times, detectors=None, pulses=None):
    n = len(intra_times)
    order = np.argsort(intra_times, kind="stable")
    return Detections(
        station=station,
        detector=np.asarray(detectors if detectors is not None else [1] * n, np.int8)[order],
        pulse_number=np.asarray(pulses if pulses is not None else [0] * n, np.int64)[order],
        intra_time=np.asarray(intra_times, np.float64)[order],
        wall_time=np.asarray(intra_times, np.float64)[order],
    )


class TestBinning:
    def test_slot_indexing(self):
        grid = SlotGrid.for_period(4e-9, 2e-6)
        det = make_detections("A", [0.0, 123e-9])
        singles = bin_singles(det, grid)
        assert singles["A+"][0] == 1
        assert singles["A+"][30] == 1  # floor(123/4)
        assert singles["A+"].sum() == 2

    def test_uniform_pulse_occupies_first_125_slots(self, rng):
        grid = SlotGrid.for_period(4e-9, 2e-6)
        det = make_detections("A", rng.uniform(0, 500e-9, 50_000))
        singles = bin_singles(det, grid)["A+"]
        assert np.all(singles[:125] > 0)
        assert np.all(singles[125:] == 0)

    def test_beyond_grid_dropped(self):
        grid = SlotGrid.for_period(4e-9, 2e-6)
        det = make_detections("A", [2.5e-6])
        assert bin_singles(det, grid)["A+"].sum() == 0


class TestCorrelator:
    def test_perfect_correlation(self):
        e, sig = correlator([50, 0, 0, 50])
        assert e == 1.0 and sig == 0.0

    def test_null_correlation(self):
        e, sig = correlator([25, 25, 25, 25])
        assert e == 0.0
        assert sig == pytest.approx(0.1)  # sqrt(1/100)

    def test_chsh_like_counts(self):
        e, sig = correlator([427, 73, 73, 427])
        assert e == pytest.approx(0.708)
        assert sig == pytest.approx(math.sqrt((1 - 0.708**2) / 1000), abs=1e-9)

    def test_empty_is_undefined_not_fatal(self):
        e, sig = correlator([0, 0, 0, 0])
        assert math.isnan(e) and math.isnan(sig)

    def test_bounds_property(self, rng):
        counts = rng.integers(0, 1000, (200, 4))
        e, _ = correlator_series(counts)
        ok = ~np.isnan(e)
        assert np.all(e[ok] >= -1) and np.all(e[ok] <= 1)


def ideal_slot_counts(visibility, n_per_slot, n_slots=25):
    """Noise-free per-slot counts for the 4 quad settings (rounded)."""
    from bellstrobe.model import SettingsQuad, QmStateModel, qm_joint_probs

    tables = np.zeros((4, n_slots, 4), dtype=np.int64)
    model = QmStateModel(visibility)
    for i, setting in enumerate(SettingsQuad().settings()):
        probs = qm_joint_probs(setting, model)
        tables[i, :, :] = np.round(probs * n_per_slot).astype(np.int64)
    return tables


class TestChshSeries:
    def test_ideal_counts_reach_tsirelson(self):
        s, sig = chsh_series(ideal_slot_counts(1.0, 4000))
        assert np.allclose(s, TSIRELSON, atol=1e-3)

    def test_reduced_visibility(self):
        s, _ = chsh_series(ideal_slot_counts(0.980198, 200_000))
        assert np.allclose(s, 2.7724, atol=1e-3)

    def test_undefined_slot_propagates(self):
        tables = ideal_slot_counts(1.0, 1000)
        tables[2, 7, :] = 0  # one setting empty in slot 7
        s, sig = chsh_series(tables)
        assert math.isnan(s[7]) and math.isnan(sig[7])
        assert not math.isnan(s[6])

    def test_s_bounded_by_four(self, rng):
        tables = rng.integers(0, 50, (4, 80, 4))
        s, _ = chsh_series(tables)
        ok = ~np.isnan(s)
        assert np.all(s[ok] >= 0) and np.all(s[ok] <= 4)


class TestEfficiency:
    def test_rate_of_coincidences_over_singles(self):
        eta, sig = efficiency_series(np.array([104]), np.array([1000]))
        assert eta[0] == pytest.approx(0.104)
        assert sig[0] == pytest.approx(math.sqrt(0.104 * 0.896 / 1000))

    def test_zero_coincidences(self):
        eta, _ = efficiency_series(np.array([0]), np.array([500]))
        assert eta[0] == 0.0

    def test_zero_singles_undefined(self):
        eta, sig = efficiency_series(np.array([0]), np.array([0]))
        assert math.isnan(eta[0]) and math.isnan(sig[0])


class TestProduct:
    def test_values(self):
        p, _ = product_series(
            np.array([2.77]), np.array([0.01]), np.array([0.1]), np.array([0.001])
        )
        assert p[0] == pytest.approx(0.277)

    def test_ideal_product_exceeds_classical_bound(self):
        p, _ = product_series(
            np.array([TSIRELSON]), np.array([0.0]), np.array([1.0]), np.array([0.0])
        )
        assert p[0] > 2.0

    def test_undefined_propagates(self):
        p, sig = product_series(
            np.array([np.nan]), np.array([np.nan]), np.array([0.1]), np.array([0.01])
        )
        assert math.isnan(p[0]) and math.isnan(sig[0])


class TestSignificance:
    def test_threshold(self):
        tables = np.zeros((4, 3, 4), dtype=np.int64)
        tables[:, 0, :] = 300  # total 1200 per setting
        tables[:, 1, :] = 300
        tables[0, 1, :] = [999, 0, 0, 0]  # one setting dips to 999
        mask = significance_mask(tables, min_coincidences=1000)
        assert mask.tolist() == [True, False, False]

    def test_total_counts_not_per_type(self):
        # individual outcome types below 1000 are fine if the total passes
        tables = np.zeros((4, 1, 4), dtype=np.int64)
        tables[:, 0, :] = [700, 150, 150, 700]  # per-type < 1000, total 1700
        assert significance_mask(tables, 1000).tolist() == [True]


class TestDetectTransient:
    SLOT = 4e-9
    TAU = 80e-9  # min_run = 20 slots, search window = first 40 slots

    def _series(self, n=200, value=2.77, sigma=0.04):
        values = np.full(n, value)
        sigmas = np.full(n, sigma)
        significant = np.ones(n, dtype=bool)
        return values, sigmas, significant

    def test_flat_series_is_none(self):
        v, s, sig = self._series()
        verdict = detect_transient(v, s, sig, self.TAU, self.SLOT)
        assert verdict.kind == "none"

    def test_floor_transient_detected(self):
        v, s, sig = self._series()
        v[:25] = 2.0  # 25 consecutive early slots far below the plateau
        verdict = detect_transient(v, s, sig, self.TAU, self.SLOT)
        assert verdict.is_deviation
        assert verdict.direction == -1
        lo, hi = verdict.slot_range
        assert lo == 0 and hi >= 25
        assert hi <= 40  # inside the first 2*tau
        assert verdict.max_sigma > 3

    def test_short_dip_rejected_by_persistence(self):
        v, s, sig = self._series()
        v[5:8] = 2.77 - 5 * 0.04  # 3-slot 5 sigma dip only
        verdict = detect_transient(v, s, sig, self.TAU, self.SLOT)
        assert verdict.kind == "none"

    def test_direction_must_be_consistent(self):
        v, s, sig = self._series()
        # alternate up/down excursions never build a same-direction run
        v[:30:2] = 2.77 + 10 * 0.04
        v[1:30:2] = 2.77 - 10 * 0.04
        verdict = detect_transient(v, s, sig, self.TAU, self.SLOT)
        assert verdict.kind == "none"

    def test_upward_deviation_also_flagged(self):
        v, s, sig = self._series()
        v[:22] = 2.77 + 8 * 0.04
        verdict = detect_transient(v, s, sig, self.TAU, self.SLOT)
        assert verdict.is_deviation and verdict.direction == 1

    def test_insignificant_slots_break_runs(self):
        v, s, sig = self._series()
        v[:30] = 2.0
        sig[10] = False  # splits the run into 10 + 19 slots, both < 20
        verdict = detect_transient(v, s, sig, self.TAU, self.SLOT)
        assert verdict.kind == "none"

    def test_too_few_significant_slots(self):
        v, s, sig = self._series()
        sig[:40] = False
        with pytest.raises(SignificanceError):
            detect_transient(v, s, sig, self.TAU, self.SLOT)

    def test_explicit_plateau_reference(self):
        v, s, sig = self._series()
        v[:25] = 2.0
        verdict = detect_transient(
            v, s, sig, self.TAU, self.SLOT, plateau_reference=2.77
        )
        assert verdict.is_deviation
        assert verdict.plateau_reference == 2.77


def build_series(e_plus=0.7, n_per_slot=1000, n_slots=100, in_pulse=25,
                 singles_in=1000, singles_out=2):
    """Synthetic SlotSeries: exact counts, in-pulse slots [0, in_pulse)."""
    # counts realizing E = +-e_plus exactly (quad signs: +, -, +, +)
    n_same = int(round(n_per_slot * (1 + e_plus) / 2))
    n_diff = n_per_slot - n_same
    per_setting = {
        0: [n_same // 2, n_diff // 2, n_diff - n_diff // 2, n_same - n_same // 2],
        1: [n_diff // 2, n_same // 2, n_same - n_same // 2, n_diff - n_diff // 2],
        2: [n_same // 2, n_diff // 2, n_diff - n_diff // 2, n_same - n_same // 2],
        3: [n_same // 2, n_diff // 2, n_diff - n_diff // 2, n_same - n_same // 2],
    }
    tables = np.zeros((4, n_slots, 4), dtype=np.int64)
    for i in range(4):
        tables[i, :in_pulse, :] = per_setting[i]
    singles = {}
    for det in ("A+", "A-", "B+", "B-"):
        arr = np.full(n_slots, singles_out, dtype=np.int64)
        arr[:in_pulse] = singles_in
        singles[det] = arr
    grid = SlotGrid(slot_width=20e-9, n_slots=n_slots)
    return SlotSeries(
        grid=grid,
        setting_labels=("ab", "ab'", "a'b", "a'b'"),
        singles=singles,
        coincidences=tables,
    )


class TestPlateauSummary:
    def test_constant_series(self):
        series = build_series()
        summary = plateau_summary(series)
        assert summary.in_pulse_range == (0, 25)
        assert summary.time_dispersion_s == pytest.approx(0.0, abs=1e-12)
        assert summary.time_avg_s == pytest.approx(summary.all_data_s, abs=1e-12)
        assert summary.s_consistent

    def test_in_pulse_rule(self):
        series = build_series(singles_in=5000, singles_out=12)
        mask = in_pulse_slots(series.singles_total)
        assert mask[:25].all() and not mask[25:].any()

    def test_empty_in_pulse_range_errors(self):
        series = build_series(singles_in=0, singles_out=0, n_per_slot=0)
        with pytest.raises(AnalysisError):
            plateau_summary(series)

    def test_sum_rule_via_tables(self):
        series = build_series()
        for i, (lab, table) in enumerate(series.tables().items()):
            assert np.array_equal(table.per_slot.sum(axis=0), table.counts)
            assert table.counts.sum() == series.coincidences[i].sum()


class TestChiSquare:
    def test_flatness_under_null_simulation(self, demo_session):
        # no-transient reconstruction: in-pulse S(t) is constant within errors
        chi2, dof = demo_session.flatness
        assert dof == 24
        assert 0.7 <= chi2 <= 1.3

    def test_flat_series_with_matching_noise(self, rng):
        sigma = 0.05
        values = rng.normal(2.77, sigma, 2000)
        chi2, dof = chi_square_vs_constant(values, np.full(2000, sigma))
        assert dof == 1999
        assert 0.9 < chi2 < 1.1

    def test_structured_series_fails(self, rng):
        values = np.concatenate([np.full(50, 2.0), np.full(50, 2.8)])
        chi2, _ = chi_square_vs_constant(values, np.full(100, 0.05))
        assert chi2 > 10


class TestAngleScan:
    A0 = 5000.0
    THETA0 = 0.22

    def _counts(self, visibility, rng=None, theta0=None):
        th0 = self.THETA0 if theta0 is None else theta0
        betas = np.linspace(0, math.pi, 34, endpoint=False)
        signs = (1, -1, -1, 1)
        counts = np.empty((34, 4))
        for o, sgn in enumerate(signs):
            counts[:, o] = self.A0 * (1 + sgn * visibility * np.cos(2 * (betas - th0)))
        if rng is not None:
            counts = rng.poisson(counts)
        return betas, counts

    def test_ideal_visibility_recovered_exactly(self):
        betas, counts = self._counts(1.0)
        fits = angle_scan_curves(betas, counts)
        for lab in OUTCOME_LABELS:
            assert fits[lab].visibility == pytest.approx(1.0, abs=1e-9)
            assert fits[lab].phase == pytest.approx(self.THETA0, abs=1e-9)

    def test_noisy_scan_within_a_percent(self, rng):
        betas, counts = self._counts(1.0, rng=rng)
        fits = angle_scan_curves(betas, counts)
        for lab in OUTCOME_LABELS:
            assert fits[lab].visibility == pytest.approx(1.0, abs=0.01)

    def test_phase_shift_flags_birefringence(self):
        betas, counts = self._counts(0.95, theta0=0.4)
        fits = angle_scan_curves(betas, counts)
        assert fits["++"].phase == pytest.approx(0.4, abs=1e-6)

    def test_flat_input_has_zero_visibility(self, rng):
        betas = np.linspace(0, math.pi, 34, endpoint=False)
        counts = rng.poisson(1000.0, (34, 4)).astype(float)
        fits = angle_scan_curves(betas, counts)
        for lab in OUTCOME_LABELS:
            assert fits[lab].visibility < 0.05

    def test_degenerate_data_errors(self):
        betas = np.linspace(0, math.pi, 34, endpoint=False)
        with pytest.raises(AnalysisError):
            angle_scan_curves(betas, np.zeros((34, 4)))
