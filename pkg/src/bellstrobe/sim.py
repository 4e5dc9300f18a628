"""Two-station time-tag stream simulator.

Generates frequency-modulated pulse trains, entangled-pair detections with
configurable visibility/transient physics, detector imperfections, dark
counts, and independently drifting station clocks. All randomness flows from
a single seed through numpy SeedSequence spawning, split per purpose (source,
station A, station B) so the two stations could be generated in parallel
without changing the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    AngleSetting,
    Geometry,
    QmStateModel,
    TransientModel,
    carried_deficit,
    transient_factors,
)

CHANNEL_PLUS = 1
CHANNEL_MINUS = 2
CHANNEL_TRIGGER = 3

PS_PER_SECOND = 1e12


def prbs_bits(order: int = 7, taps: tuple[int, int] = (7, 6), seed: int = 0b1) -> tuple[int, ...]:
    """Maximal-length LFSR bit sequence of length 2**order - 1.

    Default is the 127-bit sequence from x^7 + x^6 + 1 (taps 7 and 6).
    """
    if seed <= 0 or seed >= (1 << order):
        raise ValueError("seed must be a nonzero state of the register")
    mask = (1 << order) - 1
    state = seed
    bits = []
    for _ in range((1 << order) - 1):
        fb = 0
        for t in taps:
            fb ^= state >> (t - 1)
        fb &= 1
        state = ((state << 1) | fb) & mask
        bits.append(fb)
    return tuple(bits)


@dataclass(frozen=True)
class FmPattern:
    """Pulse-period modulation schedule.

    Each pattern bit spans `pulses_per_bit` consecutive pulses; a 1 bit
    lengthens the period following those pulses by `lengthen_fraction`.
    The default 127-bit PRBS gives an unambiguous alignment fingerprint at
    any relative offset within one pattern length (12700 pulses).
    """

    bits: tuple[int, ...] = field(default_factory=prbs_bits)
    pulses_per_bit: int = 100
    lengthen_fraction: float = 0.02

    def __post_init__(self) -> None:
        if not self.bits or any(b not in (0, 1) for b in self.bits):
            raise ValueError("bits must be a nonempty 0/1 sequence")
        if self.pulses_per_bit < 1:
            raise ValueError("pulses_per_bit must be >= 1")
        if not 0.0 < self.lengthen_fraction < 1.0:
            raise ValueError("lengthen_fraction must be in (0, 1)")

    @property
    def synchronizable(self) -> bool:
        return len(set(self.bits)) > 1

    @property
    def span_pulses(self) -> int:
        return len(self.bits) * self.pulses_per_bit

    def labels(self, n_pulses: int) -> np.ndarray:
        """Per-pulse pattern bit, repeating the sequence cyclically."""
        idx = (np.arange(n_pulses) // self.pulses_per_bit) % len(self.bits)
        return np.asarray(self.bits, dtype=np.uint8)[idx]

    @staticmethod
    def constant() -> "FmPattern":
        """Degenerate unmodulated pattern (not synchronizable)."""
        return FmPattern(bits=(0,))


@dataclass(frozen=True)
class PulsePlan:
    """Pump pulse train: 500 ns pulses at 500 kHz by default, FM-modulated."""

    n_pulses: int
    base_period: float = 2e-6
    pulse_duration: float = 500e-9
    rise_time: float = 20e-9
    fall_time: float = 20e-9
    fm_pattern: FmPattern = field(default_factory=FmPattern)

    def __post_init__(self) -> None:
        if self.n_pulses < 1:
            raise ValueError("n_pulses must be >= 1")
        if self.pulse_duration >= self.base_period:
            raise ValueError("pulse_duration must be shorter than the period")
        if self.rise_time + self.fall_time > self.pulse_duration:
            raise ValueError("rise + fall exceed the pulse duration")

    @property
    def duty_cycle(self) -> float:
        return self.pulse_duration / self.base_period

    def validate_geometry(self, geometry: Geometry) -> None:
        """Pulse duration must span at least 5 light-travel times."""
        if self.pulse_duration < 5.0 * geometry.tau:
            raise ValueError(
                f"pulse duration {self.pulse_duration} shorter than 5*tau = "
                f"{5.0 * geometry.tau}"
            )

    def period_seconds(self) -> np.ndarray:
        """Interval following each pulse, shaped (n_pulses,)."""
        labels = self.fm_pattern.labels(self.n_pulses)
        return self.base_period * (1.0 + self.fm_pattern.lengthen_fraction * labels)

    def start_times(self) -> np.ndarray:
        periods = self.period_seconds()
        starts = np.empty(self.n_pulses)
        starts[0] = 0.0
        np.cumsum(periods[:-1], out=starts[1:])
        return starts

    @property
    def true_duration(self) -> float:
        return float(np.sum(self.period_seconds()))


@dataclass(frozen=True)
class ClockModel:
    """Affine local clock with white per-tag jitter.

    local_time(t) = offset + (1 + drift_rate) * t + N(0, jitter_sigma)
    """

    offset: float = 0.0
    drift_rate: float = 0.0
    jitter_sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")


@dataclass(frozen=True)
class StationConfig:
    detector_efficiency: float = 0.1
    dark_rate: float = 200.0
    detector_jitter_sigma: float = 2e-9
    trigger_delay: float = 57e-9
    clock: ClockModel = field(default_factory=ClockModel)

    def __post_init__(self) -> None:
        if not 0.0 <= self.detector_efficiency <= 1.0:
            raise ValueError("detector_efficiency must be in [0, 1]")
        if self.dark_rate < 0 or self.detector_jitter_sigma < 0:
            raise ValueError("dark_rate and detector_jitter_sigma must be >= 0")


@dataclass(frozen=True)
class SourceConfig:
    """Pair source. The default pair_yield makes ~2% of pulses produce a
    detected photon at the default 0.1 station efficiencies."""

    pair_yield: float = 0.106
    visibility_drift: float = 0.006
    transient: TransientModel = field(default_factory=TransientModel)

    def __post_init__(self) -> None:
        if self.pair_yield < 0:
            raise ValueError("pair_yield must be >= 0")
        if self.visibility_drift < 0:
            raise ValueError("visibility_drift must be >= 0")


@dataclass(frozen=True)
class TriggerTrain:
    """True-time pulse starts with per-pulse FM labels."""

    starts: np.ndarray
    labels: np.ndarray
    synchronizable: bool


@dataclass
class TagStream:
    """One station's tag list: parallel channel/timestamp arrays, sorted by
    (timestamp, channel), timestamps on the 1 ps grid."""

    channels: np.ndarray
    times_ps: np.ndarray

    def __post_init__(self) -> None:
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        self.times_ps = np.asarray(self.times_ps, dtype=np.int64)
        if self.channels.shape != self.times_ps.shape:
            raise ValueError("channels and times_ps must have equal length")

    def __len__(self) -> int:
        return int(self.channels.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TagStream):
            return NotImplemented
        return np.array_equal(self.channels, other.channels) and np.array_equal(
            self.times_ps, other.times_ps
        )

    def channel_times(self, channel: int) -> np.ndarray:
        return self.times_ps[self.channels == channel]

    @classmethod
    def from_unsorted(cls, channels: np.ndarray, times_ps: np.ndarray) -> "TagStream":
        """Sort by (timestamp, channel) and drop duplicate (t, channel) tags.

        Channels fit in 2 bits, so (t, channel) packs into one int64 sort key;
        a single-key sort is about twice as fast as a two-key lexsort here.
        """
        channels = np.asarray(channels, dtype=np.uint8)
        times_ps = np.asarray(times_ps, dtype=np.int64)
        key = np.sort(times_ps * 4 + channels)
        if key.size > 1:
            keep = np.empty(key.size, dtype=bool)
            keep[0] = True
            np.not_equal(key[1:], key[:-1], out=keep[1:])
            key = key[keep]
        return cls((key & 3).astype(np.uint8), key >> 2)


def generate_trigger_train(plan: PulsePlan) -> TriggerTrain:
    """Pulse start times in true (global) time, with FM pattern labels.

    A constant-period pattern is allowed but flagged non-synchronizable.
    """
    return TriggerTrain(
        starts=plan.start_times(),
        labels=plan.fm_pattern.labels(plan.n_pulses),
        synchronizable=plan.fm_pattern.synchronizable,
    )


def _sample_pulse_envelope(rng: np.random.Generator, n: int, plan: PulsePlan) -> np.ndarray:
    """Emission times under the trapezoidal pulse envelope, in [0, duration)."""
    r, f = plan.rise_time, plan.fall_time
    dur = plan.pulse_duration
    flat = dur - r - f
    area = flat + 0.5 * (r + f)  # height-1 trapezoid
    a = rng.random(n) * area
    t = np.empty(n)
    in_rise = a < 0.5 * r
    in_fall = a > area - 0.5 * f
    mid = ~(in_rise | in_fall)
    if r > 0:
        t[in_rise] = np.sqrt(2.0 * r * a[in_rise])
    t[mid] = r + (a[mid] - 0.5 * r)
    if f > 0:
        t[in_fall] = dur - np.sqrt(2.0 * f * (area - a[in_fall]))
    return t


def _sample_outcomes(
    rng: np.random.Generator, visibility_eff: np.ndarray, setting: AngleSetting
) -> tuple[np.ndarray, np.ndarray]:
    """Outcome pairs (+1/-1 arrays) from the joint distribution.

    P(equal outcomes) = (1 + V*cos 2(alpha-beta))/2; the A outcome is a fair
    coin, which keeps both marginals at exactly 1/2.
    """
    c = math.cos(2.0 * setting.difference)
    equal = rng.random(visibility_eff.size) < 0.5 * (1.0 + visibility_eff * c)
    oa = rng.integers(0, 2, visibility_eff.size).astype(np.int8) * 2 - 1
    ob = np.where(equal, oa, -oa).astype(np.int8)
    return oa, ob


def apply_clock(tags: TagStream, clock: ClockModel, seed) -> TagStream:
    """Transform tag times into a station's local clock.

    t_local = offset + (1 + drift_rate)*t + N(0, jitter_sigma), rounded to the
    1 ps grid; the stream is re-sorted afterwards.
    """
    rng = np.random.default_rng(seed)
    t = tags.times_ps.astype(np.float64) / PS_PER_SECOND
    local = clock.offset + (1.0 + clock.drift_rate) * t
    if clock.jitter_sigma > 0:
        local = local + rng.normal(0.0, clock.jitter_sigma, t.size)
    ps = np.rint(local * PS_PER_SECOND).astype(np.int64)
    return TagStream.from_unsorted(tags.channels, ps)


def _station_true_tags(
    rng: np.random.Generator,
    station: StationConfig,
    pulse_start: np.ndarray,
    t_emit: np.ndarray,
    outcome: np.ndarray,
    eta_factor: np.ndarray,
    trigger_starts: np.ndarray,
    duration: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Detection thinning, jitter, darks and triggers for one station.

    Returns unsorted (channels, times in true seconds); the clock transform
    sorts once at the end.
    """
    keep = rng.random(outcome.size) < station.detector_efficiency * eta_factor
    jitter = (
        rng.normal(0.0, station.detector_jitter_sigma, outcome.size)
        if station.detector_jitter_sigma > 0
        else np.zeros(outcome.size)
    )
    n_dark = rng.poisson(station.dark_rate * duration, size=2)
    dark_plus = rng.random(n_dark[0]) * duration
    dark_minus = rng.random(n_dark[1]) * duration

    t_det = (pulse_start + t_emit + station.trigger_delay + jitter)[keep]
    ch_det = np.where(outcome[keep] > 0, CHANNEL_PLUS, CHANNEL_MINUS).astype(np.uint8)

    times = np.concatenate([t_det, dark_plus, dark_minus, trigger_starts])
    channels = np.concatenate(
        [
            ch_det,
            np.full(dark_plus.size, CHANNEL_PLUS, dtype=np.uint8),
            np.full(dark_minus.size, CHANNEL_MINUS, dtype=np.uint8),
            np.full(trigger_starts.size, CHANNEL_TRIGGER, dtype=np.uint8),
        ]
    )
    return channels, times


def _to_local_clock(
    channels: np.ndarray, times_s: np.ndarray, clock: ClockModel, seed
) -> TagStream:
    """Seconds-domain clock transform, then one rounding to the ps grid."""
    rng = np.random.default_rng(seed)
    local = clock.offset + (1.0 + clock.drift_rate) * times_s
    if clock.jitter_sigma > 0:
        local = local + rng.normal(0.0, clock.jitter_sigma, times_s.size)
    ps = np.rint(local * PS_PER_SECOND).astype(np.int64)
    return TagStream.from_unsorted(channels, ps)


def emit_events(
    plan: PulsePlan,
    source: SourceConfig,
    stations: tuple[StationConfig, StationConfig],
    setting: AngleSetting,
    model: QmStateModel,
    seed,
    session_time: float = 0.0,
) -> tuple[TagStream, TagStream]:
    """Simulate one run and return the two stations' local-clock tag streams.

    Per pulse, Poisson(pair_yield) pairs are emitted at envelope-distributed
    times; outcomes follow the joint quantum distribution with visibility
    V(t_wall) * s_factor(t_emit), and each photon is detected independently
    with probability detector_efficiency * eta_factor(t_emit). Photon tags sit
    trigger_delay after their pulse's trigger tag; dark counts are Poisson and
    uniform over the run; each station's clock transform is applied last.

    `session_time` is the run's start within the session (seconds of wall
    time), used for the slow visibility drift. Deterministic for a fixed seed.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    key_source, key_a, key_b = ss.spawn(3)
    key_det_a, key_clk_a = key_a.spawn(2)
    key_det_b, key_clk_b = key_b.spawn(2)
    rng_src = np.random.default_rng(key_source)

    train = generate_trigger_train(plan)
    starts = train.starts
    periods = plan.period_seconds()
    duration = plan.true_duration

    n_pairs = rng_src.poisson(source.pair_yield, plan.n_pulses)
    pulse_idx = np.repeat(np.arange(plan.n_pulses), n_pairs)
    k = pulse_idx.size
    t_emit = _sample_pulse_envelope(rng_src, k, plan)

    transient = source.transient
    eta0 = max(stations[0].detector_efficiency, stations[1].detector_efficiency)
    if transient.mode != "none" and transient.inter_pulse_memory > 0.0:
        gaps = periods[np.maximum(pulse_idx - 1, 0)] - plan.pulse_duration
        carry = np.where(
            pulse_idx > 0, carried_deficit(transient, plan.pulse_duration, gaps), 0.0
        )
    else:
        carry = 0.0
    s_factor, eta_factor = transient_factors(
        t_emit, transient, eta0, model.visibility, carried=carry
    )

    wall_hours = (session_time + starts[pulse_idx]) / 3600.0
    v_eff = np.clip(
        model.visibility * (1.0 - source.visibility_drift * wall_hours) * s_factor,
        0.0,
        1.0,
    )
    oa, ob = _sample_outcomes(rng_src, v_eff, setting)

    pulse_start = starts[pulse_idx]
    ch_a, t_a = _station_true_tags(
        np.random.default_rng(key_det_a),
        stations[0],
        pulse_start,
        t_emit,
        oa,
        eta_factor,
        starts,
        duration,
    )
    ch_b, t_b = _station_true_tags(
        np.random.default_rng(key_det_b),
        stations[1],
        pulse_start,
        t_emit,
        ob,
        eta_factor,
        starts,
        duration,
    )
    tags_a = _to_local_clock(ch_a, t_a, stations[0].clock, key_clk_a)
    tags_b = _to_local_clock(ch_b, t_b, stations[1].clock, key_clk_b)
    return tags_a, tags_b
