"""Physics of the pulsed Bell test: joint probabilities, CHSH values,
the classical-vs-quantum coincidence gap, and the parametric transient
(short-time suppression) families used to inject hypothetical deviations.

Angle convention: analyzer angles are in radians and polarizer analysis is
pi-periodic. Outcomes are dichotomic (+1 / -1) at each station.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s
TSIRELSON = 2.0 * math.sqrt(2.0)

# Canonical outcome order used for all 4-vectors of counts/probabilities.
OUTCOME_ORDER = ((+1, +1), (+1, -1), (-1, +1), (-1, -1))
OUTCOME_LABELS = ("++", "+-", "-+", "--")


def normalize_angle(theta: float) -> float:
    """Map an analyzer angle into [0, pi)."""
    return float(theta) % math.pi


@dataclass(frozen=True)
class AngleSetting:
    """One joint analyzer setting: alpha at station A, beta at station B."""

    alpha: float
    beta: float

    def normalized(self) -> "AngleSetting":
        return AngleSetting(normalize_angle(self.alpha), normalize_angle(self.beta))

    @property
    def difference(self) -> float:
        return self.alpha - self.beta


@dataclass(frozen=True)
class SettingsQuad:
    """The four analyzer angles of a CHSH measurement (a, a' at A; b, b' at B)."""

    a: float = 0.0
    a_prime: float = math.pi / 4
    b: float = math.pi / 8
    b_prime: float = 3 * math.pi / 8

    def __post_init__(self) -> None:
        if normalize_angle(self.a) == normalize_angle(self.a_prime):
            raise ValueError("a and a' must be distinct modulo pi")
        if normalize_angle(self.b) == normalize_angle(self.b_prime):
            raise ValueError("b and b' must be distinct modulo pi")

    def settings(self) -> tuple[AngleSetting, AngleSetting, AngleSetting, AngleSetting]:
        """The four joint settings in the fixed order (a,b), (a,b'), (a',b), (a',b')."""
        return (
            AngleSetting(self.a, self.b),
            AngleSetting(self.a, self.b_prime),
            AngleSetting(self.a_prime, self.b),
            AngleSetting(self.a_prime, self.b_prime),
        )

    @property
    def labels(self) -> tuple[str, str, str, str]:
        return ("ab", "ab'", "a'b", "a'b'")


@dataclass(frozen=True)
class OutcomePair:
    """Dichotomic outcome pair: oa at station A, ob at station B, each +1 or -1."""

    oa: int
    ob: int

    def __post_init__(self) -> None:
        if self.oa not in (1, -1) or self.ob not in (1, -1):
            raise ValueError(f"outcomes must be +1 or -1, got ({self.oa}, {self.ob})")

    @property
    def index(self) -> int:
        """Position in OUTCOME_ORDER."""
        return OUTCOME_ORDER.index((self.oa, self.ob))


@dataclass(frozen=True)
class QmStateModel:
    """phi+ state with symmetric visibility loss.

    The singles marginal is 1/2 per output regardless of setting; only the
    correlation term carries the visibility.
    """

    visibility: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError(f"visibility must be in [0, 1], got {self.visibility}")

    @property
    def singles_marginal(self) -> float:
        return 0.5


@dataclass(frozen=True)
class Geometry:
    """Straight-line station separation L and the light travel time tau = L/c."""

    distance_straight_line: float
    tau: float = field(default=0.0)

    def __post_init__(self) -> None:
        if self.distance_straight_line <= 0:
            raise ValueError("distance must be positive")
        derived = self.distance_straight_line / SPEED_OF_LIGHT
        if self.tau == 0.0:
            object.__setattr__(self, "tau", derived)
        elif abs(self.tau - derived) > 1e-12:
            raise ValueError(
                f"tau {self.tau} inconsistent with L/c = {derived} (tolerance 1 ps)"
            )


def qm_joint_prob(pair: OutcomePair, setting: AngleSetting, model: QmStateModel) -> float:
    """Joint outcome probability for the phi+ state with reduced visibility.

    P(oa, ob) = 1/4 * [1 + oa*ob*V*cos 2(alpha - beta)].
    """
    v = model.visibility
    return 0.25 * (1.0 + pair.oa * pair.ob * v * math.cos(2.0 * setting.difference))


def qm_joint_probs(setting: AngleSetting, model: QmStateModel) -> np.ndarray:
    """All four joint probabilities, in OUTCOME_ORDER."""
    return np.array(
        [qm_joint_prob(OutcomePair(oa, ob), setting, model) for oa, ob in OUTCOME_ORDER]
    )


def qm_coincidence_prob(delta: float | np.ndarray, visibility: float = 1.0) -> float | np.ndarray:
    """(+,+) coincidence probability vs angle difference: 1/4*(1 + V*cos 2*delta)."""
    return 0.25 * (1.0 + visibility * np.cos(2.0 * np.asarray(delta, dtype=float)))


def classical_coincidence_prob(delta: float | np.ndarray) -> float | np.ndarray:
    """Saw-tooth local-hidden-variable (+,+) coincidence curve.

    P_cl(delta) = 1/2 * (1 - 2*|delta|/pi) on [-pi/2, pi/2], pi-periodic;
    equivalently 1/4*(1 + E_cl) with the linear correlator E_cl = 1 - 4|delta|/pi.
    Matches the quantum curve at delta = 0, pi/4 and pi/2.
    """
    d = np.asarray(delta, dtype=float)
    folded = np.abs((d + np.pi / 2) % np.pi - np.pi / 2)
    return 0.5 * (1.0 - 2.0 * folded / np.pi)


@dataclass(frozen=True)
class GapResult:
    gap: float
    settings: tuple[float, ...]


def qm_classical_gap() -> GapResult:
    """Quantum-classical coincidence-probability difference at the CHSH settings.

    Evaluated at the angle differences pi/8 and 3*pi/8, where the difference is
    |cos(pi/4) - 1/2| / 4 ~= 0.052 (equal at both, by symmetry).
    """
    deltas = (math.pi / 8, 3 * math.pi / 8)
    gaps = [
        abs(float(qm_coincidence_prob(d)) - float(classical_coincidence_prob(d)))
        for d in deltas
    ]
    return GapResult(gap=gaps[0], settings=deltas)


def scan_qm_classical_gap(step: float = 1e-4) -> GapResult:
    """Brute-force |QM - classical| scan of the angle difference over [0, pi/2)."""
    if step <= 0:
        raise ValueError("step must be positive")
    d = np.arange(0.0, math.pi / 2, step)
    gap = np.abs(qm_coincidence_prob(d) - classical_coincidence_prob(d))
    i = int(np.argmax(gap))
    return GapResult(gap=float(gap[i]), settings=(float(d[i]),))


def min_counts_for_gap(gap: float, k_sigma: float) -> int:
    """Coincidence count N at which gap*N = k_sigma*sqrt(N), rounded up.

    This is the statistics floor for resolving a probability difference `gap`
    at k_sigma significance: N = ceil((k_sigma/gap)^2).
    """
    if gap <= 0:
        raise ValueError(f"gap must be positive, got {gap}")
    if k_sigma <= 0:
        raise ValueError(f"k_sigma must be positive, got {k_sigma}")
    return math.ceil((k_sigma / gap) ** 2)


def visibility_from_contrast(contrast: float) -> float:
    """Fringe visibility from polarizer contrast ratio: V = (C-1)/(C+1)."""
    if contrast <= 1:
        raise ValueError(f"contrast must exceed 1, got {contrast}")
    return (contrast - 1.0) / (contrast + 1.0)


def chsh_ideal(visibility: float) -> float:
    """CHSH value at the optimal settings quad: S = 2*sqrt(2)*V."""
    if not 0.0 <= visibility <= 1.0:
        raise ValueError(f"visibility must be in [0, 1], got {visibility}")
    return TSIRELSON * visibility


@dataclass(frozen=True)
class TransientModel:
    """Parametric family of hypothetical short-time deviations.

    mode "none" reproduces plain quantum statistics. The other modes suppress
    the efficiency-normalized product S(t) * eta(t)/eta0 to at most
    `floor_product` for t <= tau, then relax back to the quantum values with
    timescale `theta`: a plain exponential approach ("monotone") or an
    exponentially damped cosine with period `osc_period` ("oscillatory").

    `eta_share` splits the suppression between the correlation channel
    (s_factor, default: all of it) and the efficiency channel (eta_factor).
    `inter_pulse_memory` > 0 carries a fraction of the previous pulse's
    residual suppression into the next pulse (a hook for relaxing the
    independent-pulses assumption); see transient_factors.
    """

    mode: str = "none"
    tau: float = 80e-9
    theta: float = 80e-9
    osc_period: float | None = None
    floor_product: float = 2.0
    eta_share: float = 0.0
    inter_pulse_memory: float = 0.0

    def __post_init__(self) -> None:
        if self.mode not in ("none", "monotone", "oscillatory"):
            raise ValueError(f"unknown transient mode {self.mode!r}")
        if self.mode != "none":
            if self.tau <= 0 or self.theta <= 0:
                raise ValueError("tau and theta must be positive")
            if self.floor_product <= 0:
                raise ValueError("floor_product must be positive")
        if self.mode == "oscillatory":
            if self.osc_period is None or self.osc_period <= self.tau:
                raise ValueError("oscillatory mode requires osc_period > tau")
        if not 0.0 <= self.eta_share <= 1.0:
            raise ValueError("eta_share must be in [0, 1]")
        if not 0.0 <= self.inter_pulse_memory <= 1.0:
            raise ValueError("inter_pulse_memory must be in [0, 1]")


def _relaxation(t: np.ndarray, model: TransientModel, suppression: float) -> np.ndarray:
    """Total factor F(t) on the normalized product: F0 until tau, then relax to 1."""
    f = np.full_like(t, suppression)
    late = t > model.tau
    if np.any(late):
        dt = t[late] - model.tau
        envelope = (1.0 - suppression) * np.exp(-dt / model.theta)
        if model.mode == "monotone":
            f[late] = 1.0 - envelope
        else:
            f[late] = 1.0 - envelope * np.cos(2.0 * np.pi * dt / model.osc_period)
    return f


def carried_deficit(
    model: TransientModel, pulse_duration: float, gap: float | np.ndarray
) -> float | np.ndarray:
    """Suppression deficit carried across pulses when inter_pulse_memory > 0.

    One-pulse-memory approximation: the deviation still present at the end of
    a pulse of the given duration decays exponentially over the inter-pulse
    gap, and a fraction inter_pulse_memory of it re-enters the next pulse.
    """
    if model.mode == "none" or model.inter_pulse_memory == 0.0:
        return np.zeros_like(np.asarray(gap, dtype=float)) if np.ndim(gap) else 0.0
    # Suppression depth is independent of V here; callers pass the deficit on
    # the normalized product, which transient_factors rescales via its own F0.
    end = _relaxation(np.atleast_1d(pulse_duration), model, 0.0)[0]
    out = model.inter_pulse_memory * (1.0 - end) * np.exp(
        -np.asarray(gap, dtype=float) / model.theta
    )
    return out if np.ndim(gap) else float(out)


def transient_factors(
    t: float | np.ndarray,
    model: TransientModel,
    eta0: float,
    visibility: float,
    carried: float | np.ndarray = 0.0,
) -> tuple[float | np.ndarray, float | np.ndarray]:
    """Multiplicative deviation factors at time t after the pulse start.

    Returns (s_factor, eta_factor): s_factor scales the correlation visibility,
    eta_factor the detection efficiency. With mode "none" both are 1. Otherwise
    the efficiency-normalized product 2*sqrt(2)*V*s_factor*eta_factor is held at
    min(floor_product, QM value) for t <= tau and relaxes to the QM value for
    t >> tau. eta_factor is capped so eta0*eta_factor never exceeds 1 (the
    oscillatory mode can overshoot the quantum baseline).

    Accepts a scalar or an array of times; returns matching shapes.
    """
    scalar = np.isscalar(t) or np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(tt < 0):
        raise ValueError("t must be >= 0")
    if model.mode == "none":
        ones = np.ones_like(tt)
        return (1.0, 1.0) if scalar else (ones, ones)

    qm_product = TSIRELSON * visibility
    suppression = min(1.0, model.floor_product / qm_product) if qm_product > 0 else 1.0
    f = _relaxation(tt, model, suppression)

    carried_arr = np.asarray(carried, dtype=float)
    if np.any(carried_arr > 0.0):
        # Carried-over deviation from the previous pulse (see carried_deficit);
        # rescaled to this pulse's depth. Deepening only, so the floor holds.
        extra = 1.0 - carried_arr * (1.0 - suppression) * np.exp(-tt / model.theta)
        f = np.minimum(f, extra)

    eta_factor = f**model.eta_share
    s_factor = f ** (1.0 - model.eta_share)
    if eta0 > 0:
        np.minimum(eta_factor, 1.0 / eta0, out=eta_factor)
    if scalar:
        return float(s_factor[0]), float(eta_factor[0])
    return s_factor, eta_factor
