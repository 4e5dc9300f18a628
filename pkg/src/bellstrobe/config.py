"""Experiment configuration: one JSON-serializable structure covering the
source, both stations, the pulse plan, the session layout and the analysis
parameters. Defaults are the headline experimental values (L = 24 m, 500 ns
pulses at 500 kHz, 4 ns slots and window, 30 s runs, 32 runs per experiment).

Desk-scale presets for fast simulated sessions live at the bottom.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import Geometry, QmStateModel, SettingsQuad, TransientModel
from .sim import ClockModel, FmPattern, SourceConfig, StationConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PulseParams:
    """Pulse-train knobs; the per-run PulsePlan derives its n_pulses from the
    session's run_duration."""

    base_period: float = 2e-6
    pulse_duration: float = 500e-9
    rise_time: float = 20e-9
    fall_time: float = 20e-9
    fm_pulses_per_bit: int = 100
    fm_lengthen_fraction: float = 0.02

    def fm_pattern(self) -> FmPattern:
        return FmPattern(
            pulses_per_bit=self.fm_pulses_per_bit,
            lengthen_fraction=self.fm_lengthen_fraction,
        )


@dataclass(frozen=True)
class SessionPlan:
    """Run/experiment/session structure.

    chsh_4 cycles the 4 quad settings; scan_34 sweeps scan_points analyzer
    angles at station B with station A fixed. runs_per_experiment must be a
    multiple of the number of distinct settings in the cycle.
    """

    run_duration: float = 30.0
    runs_per_experiment: int = 32
    mode: str = "chsh_4"
    dead_time: float = 80.0
    glitch_probability: float = 0.0
    scan_points: int = 34

    def __post_init__(self) -> None:
        if self.mode not in ("chsh_4", "scan_34"):
            raise ConfigError(f"unknown session mode {self.mode!r}")
        if self.run_duration <= 0:
            raise ConfigError("run_duration must be positive")
        n = 4 if self.mode == "chsh_4" else self.scan_points
        if self.runs_per_experiment < n or self.runs_per_experiment % n:
            raise ConfigError(
                f"runs_per_experiment must be a multiple of {n} for {self.mode}"
            )
        if not 0.0 <= self.glitch_probability < 1.0:
            raise ConfigError("glitch_probability must be in [0, 1)")

    @property
    def n_settings(self) -> int:
        return 4 if self.mode == "chsh_4" else self.scan_points

    @property
    def repeats(self) -> int:
        return self.runs_per_experiment // self.n_settings


@dataclass(frozen=True)
class AnalysisParams:
    slot_width: float = 4e-9
    window: float = 4e-9
    k_sigma: float = 3.0
    min_coincidences: int = 1000

    def __post_init__(self) -> None:
        if self.slot_width <= 0 or self.window <= 0:
            raise ConfigError("slot_width and window must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: Geometry = field(default_factory=lambda: Geometry(24.0))
    visibility: float = 0.980198  # 1:100 polarizer contrast
    pulses: PulseParams = field(default_factory=PulseParams)
    source: SourceConfig = field(default_factory=SourceConfig)
    station_a: StationConfig = field(default_factory=StationConfig)
    station_b: StationConfig = field(default_factory=StationConfig)
    session: SessionPlan = field(default_factory=SessionPlan)
    analysis: AnalysisParams = field(default_factory=AnalysisParams)
    quad: SettingsQuad = field(default_factory=SettingsQuad)
    master_seed: int = 1

    def __post_init__(self) -> None:
        if self.pulses.pulse_duration < 5.0 * self.geometry.tau:
            raise ConfigError(
                f"pulse duration {self.pulses.pulse_duration} below 5*tau = "
                f"{5.0 * self.geometry.tau} for L = "
                f"{self.geometry.distance_straight_line} m"
            )
        if not 0.0 <= self.visibility <= 1.0:
            raise ConfigError("visibility must be in [0, 1]")

    @property
    def state_model(self) -> QmStateModel:
        return QmStateModel(visibility=self.visibility)

    def pulses_per_run(self) -> int:
        return max(1, round(self.session.run_duration / self.pulses.base_period))

    def setting_labels(self) -> list[str]:
        if self.session.mode == "chsh_4":
            return list(self.quad.labels)
        return [f"scan{i:02d}" for i in range(self.session.scan_points)]

    def setting_angles(self) -> dict[str, tuple[float, float]]:
        """label -> (alpha, beta) for every setting in the session."""
        if self.session.mode == "chsh_4":
            return {
                lab: (s.alpha, s.beta)
                for lab, s in zip(self.quad.labels, self.quad.settings())
            }
        betas = np.linspace(0.0, math.pi, self.session.scan_points, endpoint=False)
        return {
            f"scan{i:02d}": (self.quad.a, float(b)) for i, b in enumerate(betas)
        }

    def run_settings(self) -> list[str]:
        """Setting label per run, cycling through the settings."""
        labels = self.setting_labels()
        return [
            labels[i % len(labels)] for i in range(self.session.runs_per_experiment)
        ]

    def session_id(self) -> str:
        """Stable identifier binding data files to one config + seed."""
        digest = hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()
        return digest[:12]

    def to_dict(self) -> dict:
        def unpack(obj):
            if dataclasses.is_dataclass(obj):
                return {
                    f.name: unpack(getattr(obj, f.name))
                    for f in dataclasses.fields(obj)
                }
            if isinstance(obj, tuple):
                return list(obj)
            return obj

        data = unpack(self)
        data["schema_version"] = SCHEMA_VERSION
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        version = data.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema_version {version}")
        try:
            geometry = data.pop("geometry", {})
            source = dict(data.pop("source", {}))
            transient = source.pop("transient", {})
            if "bits" in data.get("pulses", {}):
                raise ConfigError("fm bits are derived, not configurable")

            def station(block: dict) -> StationConfig:
                block = dict(block)
                clock = block.pop("clock", {})
                return StationConfig(clock=ClockModel(**clock), **block)

            return cls(
                geometry=Geometry(**geometry) if geometry else Geometry(24.0),
                visibility=data.pop("visibility", 0.980198),
                pulses=PulseParams(**data.pop("pulses", {})),
                source=SourceConfig(
                    transient=TransientModel(
                        **{
                            k: (tuple(v) if isinstance(v, list) else v)
                            for k, v in transient.items()
                        }
                    ),
                    **source,
                ),
                station_a=station(data.pop("station_a", {})),
                station_b=station(data.pop("station_b", {})),
                session=SessionPlan(**data.pop("session", {})),
                analysis=AnalysisParams(**data.pop("analysis", {})),
                quad=SettingsQuad(**data.pop("quad", {})),
                master_seed=int(data.pop("master_seed", 1)),
            )
        except TypeError as exc:
            raise ConfigError(f"bad config field: {exc}") from exc

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, source: str | Path) -> "ExperimentConfig":
        p = Path(source)
        text = p.read_text() if p.exists() else str(source)
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def replace(self, **kwargs) -> "ExperimentConfig":
        return dataclasses.replace(self, **kwargs)


def apply_overrides(config: ExperimentConfig, overrides: dict[str, object]) -> ExperimentConfig:
    """Apply dotted-path overrides, e.g. {"session.run_duration": 1.0}."""
    data = config.to_dict()
    for path, value in overrides.items():
        node = data
        *parents, leaf = path.split(".")
        for key in parents:
            if key not in node or not isinstance(node[key], dict):
                raise ConfigError(f"unknown config path {path!r}")
            node = node[key]
        if leaf not in node:
            raise ConfigError(f"unknown config field {path!r}")
        node[leaf] = value
    return ExperimentConfig.from_dict(data)


# --- Desk-scale presets -----------------------------------------------------
#
# The hardware-scale defaults above need hours of simulated wall time. These
# presets shrink run duration and boost yield/efficiency so full sessions run
# in seconds while keeping >= 1000 coincidences per setting in every in-pulse
# slot at the stated slot width.


def desk_default(seed: int = 1) -> ExperimentConfig:
    """L = 24 m session at nominal 0.1 efficiency and 200/s dark rate.

    8 runs of 0.8 s, 4 ns slots: enough statistics for plateau-level checks
    (not for per-slot significance at 4 ns). Detector jitter is kept small
    against the 4 ns window so the window does not truncate true pairs.
    """
    station = StationConfig(detector_jitter_sigma=0.5e-9)
    return ExperimentConfig(
        source=SourceConfig(pair_yield=0.35, visibility_drift=0.006),
        station_a=station,
        station_b=station,
        session=SessionPlan(run_duration=0.8, runs_per_experiment=8, dead_time=10.0),
        master_seed=seed,
    )


def desk_boosted(seed: int = 1, transient: TransientModel | None = None) -> ExperimentConfig:
    """L = 24 m session with boosted yield/efficiency and 20 ns slots.

    4 runs of 0.7 s at pair_yield 0.2 and efficiency 0.9 put >= 1000 total
    coincidences per setting in every in-pulse 20 ns slot, including the
    half-weight rise/fall slots. The modest yield keeps multi-pair pulses
    (and hence greedy mispairing dilution of S) negligible.
    """
    station = StationConfig(detector_efficiency=0.9, detector_jitter_sigma=0.5e-9)
    return ExperimentConfig(
        source=SourceConfig(
            pair_yield=0.2,
            visibility_drift=0.006,
            transient=transient if transient is not None else TransientModel(),
        ),
        station_a=station,
        station_b=station,
        session=SessionPlan(run_duration=0.7, runs_per_experiment=4, dead_time=5.0),
        analysis=AnalysisParams(slot_width=20e-9),
        master_seed=seed,
    )


def desk_transient(mode: str, seed: int = 1) -> ExperimentConfig:
    """desk_boosted with an injected transient: theta = tau, floor 2."""
    tau = Geometry(24.0).tau
    transient = TransientModel(
        mode=mode,
        tau=tau,
        theta=tau,
        osc_period=3.0 * tau if mode == "oscillatory" else None,
    )
    return desk_boosted(seed=seed, transient=transient)
