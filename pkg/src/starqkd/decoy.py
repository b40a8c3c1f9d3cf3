"""Two-intensity decoy-state analysis.

Naming follows the field run: ``decoy_mu`` is the weaker intensity and
``signal_mu`` the stronger one (0.2 and 0.6 photons per pulse). With only
two non-vacuum intensities the vacuum yield Y0 is not measured, so it is
bounded from above by the decoy error rate (every vacuum click is wrong
with probability 1/2) when bounding Y1, and from below by zero when bounding
e1. Both substitutions keep the bounds on the safe side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DegenerateBoundsError, InvalidArgumentError
from .optics import calibrate_excess_error

E0 = 0.5
Y0_LOWER = 0.0


@dataclass(frozen=True)
class IntensityPair:
    signal_mu: float
    decoy_mu: float

    def __post_init__(self):
        if not 0 < self.decoy_mu < self.signal_mu:
            raise InvalidArgumentError(
                f"need 0 < decoy ({self.decoy_mu}) < signal ({self.signal_mu}) intensity"
            )


@dataclass(frozen=True)
class DecoyObservables:
    gain_signal: float
    gain_decoy: float
    qber_signal: float
    qber_decoy: float

    def __post_init__(self):
        for name in ("gain_signal", "gain_decoy"):
            if not 0 < getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must lie in (0, 1)")
        for name in ("qber_signal", "qber_decoy"):
            if not 0 <= getattr(self, name) <= 0.5:
                raise InvalidArgumentError(f"{name} must lie in [0, 0.5]")

    @property
    def passive(self) -> bool:
        """False when the decoy gain is not below the signal gain (finite-size noise)."""
        return self.gain_decoy < self.gain_signal


@dataclass(frozen=True)
class DecoyBounds:
    y1_lower: float
    e1_upper: float
    q1_lower: float
    y0_upper: float
    clamped: tuple[str, ...] = ()


@dataclass(frozen=True)
class KeyRateReport:
    rate_per_pulse: float
    rate_bps: float
    repetition_rate_hz: float
    inputs: dict = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    @property
    def secure(self) -> bool:
        return self.rate_per_pulse > 0


@dataclass(frozen=True)
class ChannelModel:
    """Channel seen by the decoy analysis: t, eta, dark probability and error terms."""

    transmittance: float
    efficiency: float
    p_dark: float
    e_vis: float
    excess_error: float = 0.0

    @property
    def t_eta(self) -> float:
        return self.transmittance * self.efficiency

    @property
    def e_detector(self) -> float:
        return self.e_vis + self.excess_error


def poisson_pn(mu: float, n: int) -> float:
    """P(n photons) = exp(-mu) mu^n / n!."""
    if mu < 0 or n < 0:
        raise InvalidArgumentError("poisson_pn needs mu >= 0 and n >= 0")
    if mu == 0:
        return 1.0 if n == 0 else 0.0
    return math.exp(n * math.log(mu) - mu - math.lgamma(n + 1))


def expected_observables(channel: ChannelModel, mu: float) -> tuple[float, float]:
    """Asymptotic gain and QBER at intensity ``mu``."""
    if mu < 0:
        raise InvalidArgumentError("intensity must be >= 0")
    signal = -math.expm1(-mu * channel.t_eta)
    g = 1.0 - (1.0 - channel.p_dark) * (1.0 - signal)
    if g == 0:
        return 0.0, 0.5
    q = (0.5 * channel.p_dark + channel.e_detector * signal) / g
    return g, q


def observables_for(channel: ChannelModel, intensities: IntensityPair) -> DecoyObservables:
    gs, es = expected_observables(channel, intensities.signal_mu)
    gd, ed = expected_observables(channel, intensities.decoy_mu)
    return DecoyObservables(gs, gd, es, ed)


def bound_y1_e1(obs: DecoyObservables, intensities: IntensityPair) -> DecoyBounds:
    """Lower bound on the single-photon yield and upper bound on its error rate.

    With nu the signal and mu the decoy intensity,

        Y1 >= nu / (mu nu - mu^2) * [Q_mu e^mu - Q_nu e^nu mu^2/nu^2
                                     - (nu^2 - mu^2)/nu^2 * Y0_upper]
        e1 <= (E_mu Q_mu e^mu - e0 Y0_lower) / (Y1_lower mu)

    with Y0_upper = min over intensities of E Q e^intensity / e0 and
    Y0_lower = 0.
    """
    nu, mu = intensities.signal_mu, intensities.decoy_mu
    qd_e = obs.gain_decoy * math.exp(mu)
    qs_e = obs.gain_signal * math.exp(nu)
    y0_upper = min(obs.qber_decoy * qd_e, obs.qber_signal * qs_e) / E0
    y1 = nu / (mu * nu - mu * mu) * (
        qd_e - qs_e * mu * mu / (nu * nu) - (nu * nu - mu * mu) / (nu * nu) * y0_upper
    )
    clamped = []
    if y1 <= 0:
        raise DegenerateBoundsError(
            f"single-photon yield bound is {y1:.3e} <= 0; no secure key can be claimed"
        )
    if y1 > 1:
        y1 = 1.0
        clamped.append("y1_lower clamped to 1")
    e1 = (obs.qber_decoy * qd_e - E0 * Y0_LOWER) / (y1 * mu)
    if e1 > 0.5:
        e1 = 0.5
        clamped.append("e1_upper clamped to 0.5")
    return DecoyBounds(
        y1_lower=y1,
        e1_upper=e1,
        q1_lower=y1 * nu * math.exp(-nu),
        y0_upper=y0_upper,
        clamped=tuple(clamped),
    )


def h2(x: float) -> float:
    if not 0 <= x <= 1:
        raise InvalidArgumentError(f"binary entropy needs x in [0, 1], got {x}")
    if x in (0.0, 1.0):
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def secure_key_rate(
    bounds: DecoyBounds,
    obs: DecoyObservables,
    sifting_factor: float = 0.5,
    f_ec: float = 1.22,
    repetition_rate_hz: float = 1e6,
) -> KeyRateReport:
    """R = q [ -Q_signal f_ec h2(E_signal) + Q1 (1 - h2(e1)) ] per pulse."""
    if not 0 < sifting_factor <= 1:
        raise InvalidArgumentError("sifting factor must lie in (0, 1]")
    if f_ec < 1:
        raise InvalidArgumentError("error-correction inefficiency must be >= 1")
    ec = obs.gain_signal * f_ec * h2(obs.qber_signal)
    pa = bounds.q1_lower * (1.0 - h2(bounds.e1_upper))
    rate = sifting_factor * (pa - ec)
    notes = list(bounds.clamped)
    notes.append(f"vacuum yield bounded by decoy errors: Y0 <= {bounds.y0_upper:.3e}")
    if not obs.passive:
        notes.append("warning: decoy gain not below signal gain")
    return KeyRateReport(
        rate_per_pulse=rate,
        rate_bps=rate * repetition_rate_hz,
        repetition_rate_hz=repetition_rate_hz,
        inputs={
            "gain_signal": obs.gain_signal,
            "gain_decoy": obs.gain_decoy,
            "qber_signal": obs.qber_signal,
            "qber_decoy": obs.qber_decoy,
            "y1_lower": bounds.y1_lower,
            "e1_upper": bounds.e1_upper,
            "q1_lower": bounds.q1_lower,
            "sifting_factor": sifting_factor,
            "f_ec": f_ec,
        },
        notes=tuple(notes),
    )


def no_key_report(reason: str, repetition_rate_hz: float = 1e6) -> KeyRateReport:
    return KeyRateReport(0.0, 0.0, repetition_rate_hz, {}, ("no secure key: " + reason,))


def calibrate_channel(
    channel: ChannelModel, measured_qber: float, mu: float, label: str = ""
) -> ChannelModel:
    """Set the excess error so the model QBER at ``mu`` equals ``measured_qber``."""

    def model(e: float) -> float:
        return expected_observables(
            ChannelModel(channel.transmittance, channel.efficiency, channel.p_dark, channel.e_vis, e),
            mu,
        )[1]

    e = calibrate_excess_error(measured_qber, model, label=label)
    return ChannelModel(channel.transmittance, channel.efficiency, channel.p_dark, channel.e_vis, e)


def analyse(
    channel: ChannelModel,
    intensities: IntensityPair,
    sifting_factor: float = 0.5,
    f_ec: float = 1.22,
    repetition_rate_hz: float = 1e6,
) -> KeyRateReport:
    """Observables from the channel model, then bounds and rate.

    Degenerate bounds give a zero-rate report instead of an exception.
    """
    obs = observables_for(channel, intensities)
    try:
        bounds = bound_y1_e1(obs, intensities)
    except DegenerateBoundsError as exc:
        return no_key_report(str(exc), repetition_rate_hz)
    return secure_key_rate(bounds, obs, sifting_factor, f_ec, repetition_rate_hz)
