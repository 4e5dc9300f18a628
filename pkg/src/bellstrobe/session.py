"""Session orchestration: simulate runs to tag files, run the full analysis
pipeline (read -> sync -> coincide -> bin -> statistics -> verdicts), and emit
plot-ready report bundles.

A session is one config + master seed; its runs cycle the settings. Data from
different sessions are never accumulated together.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import analysis as ana
from . import coinc as co
from . import sync as sy
from .config import ExperimentConfig, SCHEMA_VERSION
from .model import OUTCOME_LABELS, AngleSetting, TSIRELSON
from .sim import PulsePlan, TagStream, emit_events
from .tagfmt import TagFileHeader, TagFormatError, read_tag_arrays, write_tags

log = logging.getLogger("bellstrobe")


@dataclass
class RunData:
    """One simulated or loaded run: both stations' local-clock tag streams."""

    index: int
    setting_label: str
    tags_a: TagStream
    tags_b: TagStream
    session_time: float = 0.0


@dataclass
class SyncReport:
    run_index: int
    pulse_offset: int
    time_offset: float
    rate_ratio: float
    residual_rms: float
    dropped_a: int
    dropped_b: int

    def to_dict(self) -> dict:
        return {
            "run": self.run_index,
            "pulse_offset": self.pulse_offset,
            "time_offset_s": self.time_offset,
            "rate_ratio": self.rate_ratio,
            "residual_rms_s": self.residual_rms,
            "dropped_a": self.dropped_a,
            "dropped_b": self.dropped_b,
        }


@dataclass
class SessionSummary:
    session_id: str
    mode: str
    series: ana.SlotSeries | None
    plateau: ana.PlateauSummary | None
    flatness: tuple[float, int] | None
    transient: ana.TransientVerdict | None
    eq1: dict | None
    significance: dict | None
    scan_fits: dict[str, ana.ScanFit] | None
    scan_curves: dict | None
    sync_reports: list[SyncReport]
    runs_total: int
    runs_used: int
    runs_glitched: int
    runs_skipped: list[int]
    expectations: dict
    tables: dict[str, dict[str, int]] | None = None
    delta_t_hist: tuple[np.ndarray, np.ndarray] | None = None
    transient_error: str | None = None
    degraded: bool = False

    def to_dict(self) -> dict:
        out: dict = {
            "schema_version": SCHEMA_VERSION,
            "session_id": self.session_id,
            "mode": self.mode,
            "runs": {
                "total": self.runs_total,
                "used": self.runs_used,
                "glitched": self.runs_glitched,
                "skipped": self.runs_skipped,
            },
            "degraded": self.degraded,
            "expectations": self.expectations,
            "sync": [r.to_dict() for r in self.sync_reports],
        }
        if self.plateau is not None:
            p = self.plateau
            out["plateau"] = {
                "in_pulse_range": list(p.in_pulse_range),
                "n_in_pulse": p.n_in_pulse,
                "time_avg_s": p.time_avg_s,
                "time_dispersion_s": p.time_dispersion_s,
                "all_data_s": p.all_data_s,
                "all_data_s_sigma": p.all_data_s_sigma,
                "s_consistent": p.s_consistent,
                "time_avg_eta": p.time_avg_eta,
                "time_dispersion_eta": p.time_dispersion_eta,
                "all_data_eta": p.all_data_eta,
                "all_data_eta_sigma": p.all_data_eta_sigma,
            }
        if self.flatness is not None:
            out["flatness"] = {
                "chi2_reduced": self.flatness[0],
                "dof": self.flatness[1],
            }
        if self.transient is not None:
            t = self.transient
            out["transient"] = {
                "verdict": t.kind,
                "slot_range": list(t.slot_range) if t.slot_range else None,
                "direction": t.direction,
                "max_sigma": t.max_sigma,
                "plateau_reference": t.plateau_reference,
            }
        elif self.transient_error is not None:
            out["transient"] = {
                "verdict": "not_testable",
                "reason": self.transient_error,
            }
        if self.eq1 is not None:
            out["eq1"] = self.eq1
        if self.significance is not None:
            out["significance"] = self.significance
        if self.scan_fits is not None:
            out["scan_fits"] = {
                lab: {
                    "amplitude": f.amplitude,
                    "visibility": f.visibility,
                    "phase": f.phase,
                }
                for lab, f in self.scan_fits.items()
            }
        if self.tables is not None:
            out["tables"] = self.tables
        return out


# --- Simulation -------------------------------------------------------------


def _run_plan(config: ExperimentConfig) -> PulsePlan:
    return PulsePlan(
        n_pulses=config.pulses_per_run(),
        base_period=config.pulses.base_period,
        pulse_duration=config.pulses.pulse_duration,
        rise_time=config.pulses.rise_time,
        fall_time=config.pulses.fall_time,
        fm_pattern=config.pulses.fm_pattern(),
    )


def simulate_run(config: ExperimentConfig, run_index: int) -> RunData:
    """Simulate one run; deterministic in (config, master_seed, run_index)."""
    labels = config.run_settings()
    if not 0 <= run_index < len(labels):
        raise ValueError(f"run_index {run_index} outside the session plan")
    label = labels[run_index]
    alpha, beta = config.setting_angles()[label]
    seeds = np.random.SeedSequence(config.master_seed).spawn(
        config.session.runs_per_experiment + 1
    )
    session_time = run_index * (config.session.run_duration + config.session.dead_time)
    tags_a, tags_b = emit_events(
        _run_plan(config),
        config.source,
        (config.station_a, config.station_b),
        AngleSetting(alpha, beta),
        config.state_model,
        seeds[run_index],
        session_time=session_time,
    )
    return RunData(run_index, label, tags_a, tags_b, session_time)


def iter_simulated_runs(config: ExperimentConfig) -> Iterable[RunData]:
    for i in range(config.session.runs_per_experiment):
        yield simulate_run(config, i)


def simulate_session(config: ExperimentConfig, outdir: str | Path) -> Path:
    """Simulate a session into tag files plus a run manifest; returns the
    manifest path. Glitched runs (see session.glitch_probability) are written
    but marked for exclusion."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    session_id = config.session_id()
    n_runs = config.session.runs_per_experiment
    glitch_rng = np.random.default_rng(
        np.random.SeedSequence(config.master_seed).spawn(n_runs + 1)[n_runs]
    )

    runs_meta = []
    angles = config.setting_angles()
    for run in iter_simulated_runs(config):
        status = "ok"
        if config.session.glitch_probability > 0 and (
            glitch_rng.random() < config.session.glitch_probability
        ):
            status = "glitched"
        file_a = outdir / f"run{run.index:03d}_A.tags"
        file_b = outdir / f"run{run.index:03d}_B.tags"
        for path, stream, station_id in (
            (file_a, run.tags_a, 0),
            (file_b, run.tags_b, 1),
        ):
            if len(stream) and stream.times_ps.min() < 0:
                raise ValueError(
                    "negative local timestamps; choose non-negative clock offsets"
                )
            write_tags(
                TagFileHeader(station_id=station_id, record_count=len(stream)),
                (stream.channels, stream.times_ps.astype(np.uint64)),
                path,
            )
        alpha, beta = angles[run.setting_label]
        runs_meta.append(
            {
                "index": run.index,
                "setting": run.setting_label,
                "alpha": alpha,
                "beta": beta,
                "file_a": file_a.name,
                "file_b": file_b.name,
                "session_time": run.session_time,
                "duration": config.session.run_duration,
                "status": status,
            }
        )

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "session_id": session_id,
        "mode": config.session.mode,
        "config": config.to_dict(),
        "runs": runs_meta,
    }
    manifest_path = outdir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


# --- Analysis ---------------------------------------------------------------


@dataclass
class RunProducts:
    """Per-run pipeline output with shared (station A) pulse numbering."""

    index: int
    setting_label: str
    detections_a: sy.Detections
    detections_b: sy.Detections
    records: co.Coincidences
    report: SyncReport


def process_run(run: RunData, config: ExperimentConfig) -> RunProducts:
    """Sync, assign and match one run's tag streams."""
    trig_a = run.tags_a.channel_times(3)
    trig_b = run.tags_b.channel_times(3)
    series_a = sy.extract_period_series(trig_a)
    series_b = sy.extract_period_series(trig_b)
    offset = sy.align_pulse_numbering(series_a, series_b)
    fit = sy.fit_clock_relation(trig_a, trig_b, offset)

    det_a = sy.assign_to_pulses(
        run.tags_a, trig_a, config.station_a.trigger_delay, station="A"
    )
    det_b = sy.assign_to_pulses(
        run.tags_b, trig_b, config.station_b.trigger_delay, station="B"
    ).with_pulse_offset(offset)

    records = co.match_coincidences(det_a, det_b, window=config.analysis.window)
    report = SyncReport(
        run_index=run.index,
        pulse_offset=fit.pulse_offset,
        time_offset=fit.time_offset,
        rate_ratio=fit.rate_ratio,
        residual_rms=fit.residual_rms,
        dropped_a=det_a.dropped_before_first + det_a.dropped_after_last,
        dropped_b=det_b.dropped_before_first + det_b.dropped_after_last,
    )
    return RunProducts(run.index, run.setting_label, det_a, det_b, records, report)


def _expectations(config: ExperimentConfig) -> dict:
    return {
        "s_ideal": TSIRELSON * config.visibility,
        "visibility": config.visibility,
        # eta measured at a detector estimates the OTHER station's efficiency
        "eta0": {
            "A+": config.station_b.detector_efficiency,
            "A-": config.station_b.detector_efficiency,
            "B+": config.station_a.detector_efficiency,
            "B-": config.station_a.detector_efficiency,
        },
    }


def analyze_products(
    products: Sequence[RunProducts],
    config: ExperimentConfig,
    runs_total: int | None = None,
    runs_glitched: int = 0,
    skipped: Sequence[int] = (),
) -> SessionSummary:
    """Accumulate processed runs of one session into the full summary."""
    if not products:
        raise ana.AnalysisError("no usable runs to analyze")
    mode = config.session.mode
    session_id = config.session_id()
    sync_reports = [p.report for p in products]
    expectations = _expectations(config)

    if mode == "scan_34":
        labels = config.setting_labels()
        tables = co.build_tables(
            {p.index: p.records for p in products},
            {p.index: p.setting_label for p in products},
            setting_labels=labels,
        )
        angles = config.setting_angles()
        betas = np.array([angles[lab][1] for lab in labels])
        counts = np.stack([tables[lab].counts for lab in labels])
        fits = ana.angle_scan_curves(betas, counts)
        return SessionSummary(
            session_id=session_id,
            mode=mode,
            series=None,
            plateau=None,
            flatness=None,
            transient=None,
            eq1=None,
            significance=None,
            scan_fits=fits,
            scan_curves={
                "beta": betas.tolist(),
                "counts": counts.tolist(),
                "labels": labels,
            },
            sync_reports=sync_reports,
            runs_total=runs_total if runs_total is not None else len(products),
            runs_used=len(products),
            runs_glitched=runs_glitched,
            runs_skipped=list(skipped),
            expectations=expectations,
        )

    grid = ana.SlotGrid.for_period(
        config.analysis.slot_width, config.pulses.base_period
    )
    labels = config.setting_labels()
    label_index = {lab: i for i, lab in enumerate(labels)}
    singles = {det: np.zeros(grid.n_slots, dtype=np.int64) for det in ana.DETECTOR_KEYS}
    coinc_slots = np.zeros((4, grid.n_slots, 4), dtype=np.int64)

    for p in products:
        for det_events in (p.detections_a, p.detections_b):
            for key, arr in ana.bin_singles(det_events, grid).items():
                singles[key] += arr
        si = label_index[p.setting_label]
        if len(p.records):
            slots = np.floor(p.records.intra_time / grid.slot_width).astype(np.int64)
            ok = (slots >= 0) & (slots < grid.n_slots)
            flat = slots[ok] * 4 + p.records.outcome_index()[ok]
            coinc_slots[si] += np.bincount(
                flat, minlength=grid.n_slots * 4
            ).reshape(grid.n_slots, 4)

    series = ana.SlotSeries(
        grid=grid,
        setting_labels=tuple(labels),
        singles=singles,
        coincidences=coinc_slots,
    )
    plateau = ana.plateau_summary(series)
    significant = ana.significance_mask(
        series.coincidences, config.analysis.min_coincidences
    )
    in_pulse = ana.in_pulse_slots(series.singles_total)
    flatness = None
    try:
        flatness = ana.chi_square_vs_constant(series.s, series.sigma_s, in_pulse)
    except ana.AnalysisError:
        pass

    tau = config.geometry.tau
    verdict = None
    transient_error = None
    try:
        verdict = ana.detect_transient(
            series.s,
            series.sigma_s,
            significant,
            tau=tau,
            slot_width=grid.slot_width,
            k_sigma=config.analysis.k_sigma,
        )
    except ana.SignificanceError as exc:
        log.warning("transient test not run: %s", exc)
        transient_error = str(exc)

    eq1 = _eq1_block(series, plateau, expectations)
    significance = {
        "min_coincidences": config.analysis.min_coincidences,
        "n_significant_slots": int(significant.sum()),
        "n_in_pulse_slots": int(in_pulse.sum()),
    }
    all_deltas = np.concatenate(
        [p.records.delta_t for p in products] or [np.empty(0)]
    )
    hist = co.delta_t_histogram(
        all_deltas,
        bin_width=config.analysis.window / 8,
        half_range=1.5 * config.analysis.window,
    )
    return SessionSummary(
        session_id=session_id,
        mode=mode,
        series=series,
        plateau=plateau,
        flatness=flatness,
        transient=verdict,
        eq1=eq1,
        significance=significance,
        scan_fits=None,
        scan_curves=None,
        sync_reports=sync_reports,
        runs_total=runs_total if runs_total is not None else len(products),
        runs_used=len(products),
        runs_glitched=runs_glitched,
        runs_skipped=list(skipped),
        expectations=expectations,
        tables={lab: t.as_dict() for lab, t in series.tables().items()},
        delta_t_hist=hist,
        transient_error=transient_error,
    )


def _eq1_block(
    series: ana.SlotSeries, plateau: ana.PlateauSummary, expectations: dict
) -> dict:
    """Product-bound bookkeeping for the headline detector A+.

    The measured product must stay below 2 everywhere (limited efficiency);
    under fair sampling, dividing by the configured eta0 should recover the
    ideal 2*sqrt(2)*V on the plateau.
    """
    prod = series.product["A+"]
    sig = series.sigma_product["A+"]
    defined = ~np.isnan(prod)
    mask = ana.in_pulse_slots(series.singles_total)
    eta0 = expectations["eta0"]["A+"]

    plateau_sel = mask & defined
    rescaled_mean = float(np.mean(prod[plateau_sel]) / eta0) if plateau_sel.any() else math.nan
    rescaled_sigma = (
        float(np.sqrt(np.mean(sig[plateau_sel] ** 2) / plateau_sel.sum()) / eta0)
        if plateau_sel.any()
        else math.nan
    )
    expected = expectations["s_ideal"]
    return {
        "detector": "A+",
        "max_defined_product": float(np.nanmax(prod)) if defined.any() else math.nan,
        "bound_respected": bool(np.all(prod[defined] < 2.0)) if defined.any() else None,
        "rescaled_plateau_mean": rescaled_mean,
        "rescaled_plateau_sigma": rescaled_sigma,
        "rescaled_expectation": expected,
        "fair_sampling_consistent": (
            bool(abs(rescaled_mean - expected) < 3.0 * rescaled_sigma)
            if not math.isnan(rescaled_mean)
            else None
        ),
    }


def analyze_streams(
    runs: Iterable[RunData], config: ExperimentConfig
) -> SessionSummary:
    """In-memory pipeline: process and accumulate already-loaded runs."""
    products = [process_run(r, config) for r in runs]
    return analyze_products(products, config)


def run_session_in_memory(config: ExperimentConfig) -> SessionSummary:
    """Simulate and analyze a whole session without touching disk."""
    return analyze_streams(iter_simulated_runs(config), config)


def analyze_session(
    manifest_paths: Sequence[str | Path] | str | Path,
) -> tuple[SessionSummary, ExperimentConfig]:
    """File-based analysis of one session's manifest(s).

    Multiple manifests are accepted only if they carry the same session id
    (data from different sessions are never summed). Unreadable ok-marked
    runs are skipped with a warning and mark the summary degraded; zero
    usable runs is an error.
    """
    if isinstance(manifest_paths, (str, Path)):
        manifest_paths = [manifest_paths]
    manifests = []
    for p in manifest_paths:
        data = json.loads(Path(p).read_text())
        data["_dir"] = Path(p).parent
        manifests.append(data)
    session_ids = {m["session_id"] for m in manifests}
    if len(session_ids) > 1:
        raise co.SessionMixError(
            f"manifests belong to different sessions: {sorted(session_ids)}"
        )
    config = ExperimentConfig.from_dict(manifests[0]["config"])

    products: list[RunProducts] = []
    skipped: list[int] = []
    glitched = 0
    total = 0
    for m in manifests:
        for meta in m["runs"]:
            total += 1
            if meta["status"] != "ok":
                glitched += 1
                continue
            try:
                _, ch_a, t_a = read_tag_arrays(m["_dir"] / meta["file_a"])
                _, ch_b, t_b = read_tag_arrays(m["_dir"] / meta["file_b"])
                run = RunData(
                    index=meta["index"],
                    setting_label=meta["setting"],
                    tags_a=TagStream(ch_a, t_a),
                    tags_b=TagStream(ch_b, t_b),
                    session_time=meta.get("session_time", 0.0),
                )
                products.append(process_run(run, config))
            except (TagFormatError, sy.SyncError, OSError) as exc:
                log.warning("skipping run %s: %s", meta["index"], exc)
                skipped.append(meta["index"])
    if not products:
        raise ana.AnalysisError("no usable runs in the manifest(s)")
    summary = analyze_products(
        products, config, runs_total=total, runs_glitched=glitched, skipped=skipped
    )
    summary.degraded = bool(skipped)
    return summary, config


# --- Emission of results ----------------------------------------------------

SLOTS_CSV_VERSION = 1


def write_slots_csv(series: ana.SlotSeries, path: str | Path) -> None:
    """One row per slot with every reconstructed series (schema v1, see
    docs/output-schemas.md)."""
    grid = series.grid
    header = ["slot", "t_start_ns", "t_center_ns"]
    header += [f"singles_{d}" for d in ana.DETECTOR_KEYS]
    for lab in series.setting_labels:
        header += [f"coinc_total_{lab}"]
    for lab in series.setting_labels:
        header += [f"E_{lab}", f"sigma_E_{lab}"]
    header += ["S", "sigma_S"]
    for d in ana.DETECTOR_KEYS:
        header += [f"eta_{d}", f"sigma_eta_{d}"]
    header += ["product_A+", "sigma_product_A+"]

    starts = grid.starts() * 1e9
    centers = grid.centers() * 1e9
    totals = series.coincidences.sum(axis=2)

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"# bellstrobe slots csv v{SLOTS_CSV_VERSION}"])
        writer.writerow(header)
        for i in range(grid.n_slots):
            row: list = [i, f"{starts[i]:.3f}", f"{centers[i]:.3f}"]
            row += [int(series.singles[d][i]) for d in ana.DETECTOR_KEYS]
            row += [int(totals[s, i]) for s in range(4)]
            for s in range(4):
                row += [_fmt(series.e[s, i]), _fmt(series.sigma_e[s, i])]
            row += [_fmt(series.s[i]), _fmt(series.sigma_s[i])]
            for d in ana.DETECTOR_KEYS:
                row += [_fmt(series.eta[d][i]), _fmt(series.sigma_eta[d][i])]
            row += [_fmt(series.product["A+"][i]), _fmt(series.sigma_product["A+"][i])]
            writer.writerow(row)


def _fmt(x: float) -> str:
    return "" if (x is None or (isinstance(x, float) and math.isnan(x))) else f"{x:.6g}"


def write_delta_t_csv(summary: SessionSummary, path: str | Path) -> None:
    """Diagnostic histogram of coincidence B-minus-A time differences."""
    if summary.delta_t_hist is None:
        raise ValueError("summary carries no delta_t histogram")
    edges, hist = summary.delta_t_hist
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_low_ns", "bin_high_ns", "counts"])
        for lo, hi, n in zip(edges[:-1], edges[1:], hist):
            writer.writerow([f"{lo * 1e9:.4f}", f"{hi * 1e9:.4f}", int(n)])


def _json_safe(obj):
    """NaN/inf become null so the summary stays strict JSON."""
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_summary_json(
    summary: SessionSummary, path: str | Path, stamp: str | None = None
) -> None:
    data = _json_safe(summary.to_dict())
    if stamp is not None:
        data["generated_at"] = stamp
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_report_bundle(
    summary: SessionSummary, outdir: str | Path, zoom_ns: float = 100.0
) -> list[Path]:
    """Plot-ready CSV subsets: full-period and first-100 ns series for S, eta
    and the product; the 16-type coincidence grid; plus a comparison table of
    plateau values against configured expectations."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    series = summary.series
    if series is None:
        if summary.scan_curves is not None:
            p = outdir / "scan_curves.csv"
            with open(p, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["beta_rad", "n_pp", "n_pm", "n_mp", "n_mm"])
                for beta, row in zip(
                    summary.scan_curves["beta"], summary.scan_curves["counts"]
                ):
                    writer.writerow([f"{beta:.6g}"] + [int(v) for v in row])
            written.append(p)
        return written

    grid = series.grid
    centers = grid.centers() * 1e9

    def emit(name: str, columns: dict[str, np.ndarray], mask=None) -> None:
        p = outdir / name
        with open(p, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_center_ns"] + list(columns))
            for i in range(grid.n_slots):
                if mask is not None and not mask[i]:
                    continue
                writer.writerow(
                    [f"{centers[i]:.3f}"] + [_fmt(col[i]) for col in columns.values()]
                )
        written.append(p)

    zoom = grid.starts() * 1e9 < zoom_ns
    for tag, mask in (("full", None), ("zoom", zoom)):
        emit(f"s_chsh_{tag}.csv", {"S": series.s, "sigma": series.sigma_s}, mask)
        emit(
            f"eta_Aplus_{tag}.csv",
            {"eta": series.eta["A+"], "sigma": series.sigma_eta["A+"]},
            mask,
        )
        emit(
            f"product_Aplus_{tag}.csv",
            {"product": series.product["A+"], "sigma": series.sigma_product["A+"]},
            mask,
        )

    p = outdir / "coincidences_16types.csv"
    with open(p, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["setting", "outcome", "slot", "t_center_ns", "counts"])
        for s, lab in enumerate(series.setting_labels):
            for o, out_lab in enumerate(OUTCOME_LABELS):
                for i in range(grid.n_slots):
                    writer.writerow(
                        [lab, out_lab, i, f"{centers[i]:.3f}",
                         int(series.coincidences[s, i, o])]
                    )
    written.append(p)

    if summary.plateau is not None:
        p = outdir / "plateau_vs_expected.txt"
        pl = summary.plateau
        exp = summary.expectations
        lines = [
            "quantity            measured          expected",
            f"time-avg S          {pl.time_avg_s:.4f} +- {pl.time_dispersion_s:.4f}"
            f"  {exp['s_ideal']:.4f}",
            f"all-data S          {pl.all_data_s:.4f} +- {pl.all_data_s_sigma:.4f}"
            f"  {exp['s_ideal']:.4f}",
        ]
        for det in ana.DETECTOR_KEYS:
            lines.append(
                f"time-avg eta {det}     {pl.time_avg_eta[det]:.4f} +- "
                f"{pl.time_dispersion_eta[det]:.4f}  {exp['eta0'][det]:.4f}"
            )
            lines.append(
                f"all-data eta {det}     {pl.all_data_eta[det]:.4f} +- "
                f"{pl.all_data_eta_sigma[det]:.4f}  (< in-pulse with darks on)"
            )
        p.write_text("\n".join(lines) + "\n")
        written.append(p)
    return written
