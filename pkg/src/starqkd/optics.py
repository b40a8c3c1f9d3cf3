"""Physical-layer arithmetic for one wavelength session.

Loss is carried in dB and converted to transmittance at the edges. Dark
count figures are probabilities per detection gate. The QBER decomposition
here is the standard one (half of dark and crosstalk clicks are errors,
visibility contributes (1 - V)/2 of signal clicks); the pulse-level
single-detector receiver has its own closed form in :mod:`starqkd.protocol`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from scipy.optimize import brentq

from .errors import (
    CalibrationInfeasibleError,
    ConfigurationError,
    InvalidArgumentError,
    RoutingError,
)
from .topology import ChannelIndex, RouterSpec, build_router_spec, color_complete_graph

DEFAULT_ATTENUATION_DB_PER_KM = 0.2
DEFAULT_EFFICIENCY = 0.10


@dataclass(frozen=True)
class FiberLink:
    length_km: float
    attenuation_db_per_km: float = DEFAULT_ATTENUATION_DB_PER_KM
    measured_loss_db: float | None = None

    def __post_init__(self):
        if self.length_km < 0:
            raise InvalidArgumentError(f"fiber length must be >= 0 km, got {self.length_km}")
        if self.attenuation_db_per_km <= 0:
            raise InvalidArgumentError("attenuation must be positive")
        if self.measured_loss_db is not None and self.measured_loss_db < 0:
            raise InvalidArgumentError("measured loss must be >= 0 dB")

    @property
    def loss_db(self) -> float:
        if self.measured_loss_db is not None:
            return self.measured_loss_db
        return self.length_km * self.attenuation_db_per_km


@dataclass(frozen=True)
class DetectorModel:
    """Gated single-photon detector.

    The efficiency default of 0.10 is an assumption typical of gated InGaAs
    APDs; the field data only fix the dark-count probability.
    """

    dark_count_prob_per_gate: float
    efficiency: float = DEFAULT_EFFICIENCY
    gate_rate_hz: float = 1e6

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise InvalidArgumentError(f"efficiency must lie in (0, 1], got {self.efficiency}")
        if not 0 <= self.dark_count_prob_per_gate < 0.01:
            raise ConfigurationError(
                f"dark count probability {self.dark_count_prob_per_gate} per gate is not << 1"
            )
        if self.gate_rate_hz <= 0:
            raise InvalidArgumentError("gate rate must be positive")


@dataclass(frozen=True)
class SourceModel:
    mean_photon_number: float = 0.1
    repetition_rate_hz: float = 1e6

    def __post_init__(self):
        if not 0 < self.mean_photon_number <= 1:
            raise InvalidArgumentError(
                f"signal mean photon number must lie in (0, 1], got {self.mean_photon_number}"
            )
        if self.repetition_rate_hz <= 0:
            raise InvalidArgumentError("repetition rate must be positive")


@dataclass(frozen=True)
class LinkBudget:
    fiber_loss_db: float
    router_insertion_db: float
    excess_loss_db: float
    total_db: float
    transmittance: float


@dataclass(frozen=True)
class QberEstimate:
    total: float
    dark: float
    visibility: float
    crosstalk: float
    excess: float

    @property
    def components(self) -> dict[str, float]:
        return {
            "dark": self.dark,
            "visibility": self.visibility,
            "crosstalk": self.crosstalk,
            "excess": self.excess,
        }


def transmittance(loss_db: float) -> float:
    if loss_db < 0 or math.isnan(loss_db):
        raise InvalidArgumentError(f"loss must be >= 0 dB, got {loss_db}")
    return 10.0 ** (-loss_db / 10.0)


def link_budget(
    legs: Sequence[FiberLink],
    spec: RouterSpec,
    channel: ChannelIndex,
    excess_db: float = 0.0,
    measured_loss_db: float | None = None,
) -> LinkBudget:
    """End-to-end loss of one session through the router.

    ``measured_loss_db`` is a field measurement of the whole path. It fixes
    the total; the excess term becomes whatever the fiber and router
    insertion do not explain.
    """
    if excess_db < 0:
        raise InvalidArgumentError("excess loss must be >= 0 dB")
    ports = spec.ports
    hits = [i for i, p in enumerate(ports) if channel in p]
    if len(hits) < 2:
        raise RoutingError(f"channel {channel} is not present at both ports of the link")
    fiber = sum(leg.loss_db for leg in legs)
    insertion = spec.insertion_loss_db[channel.color]

    if measured_loss_db is None:
        excess = excess_db
        total = fiber + insertion + excess
    else:
        if excess_db:
            raise ConfigurationError("excess loss cannot be combined with a measured path loss")
        if measured_loss_db < insertion:
            raise ConfigurationError(
                f"measured loss {measured_loss_db} dB is below the router insertion {insertion} dB"
            )
        total = float(measured_loss_db)
        excess = total - fiber - insertion
        if excess < 0:
            fiber, excess = total - insertion, 0.0
    return LinkBudget(
        fiber_loss_db=fiber,
        router_insertion_db=insertion,
        excess_loss_db=excess,
        total_db=total,
        transmittance=transmittance(total),
    )


def gain(mu: float, t: float, eta: float, p_dark: float) -> float:
    """Click probability per pulse: 1 - (1 - p_dark) exp(-mu t eta)."""
    if mu < 0 or not 0 <= t <= 1 or not 0 <= eta <= 1 or not 0 <= p_dark < 1:
        raise InvalidArgumentError("gain inputs out of range")
    return -math.expm1(-mu * t * eta) * (1 - p_dark) + p_dark


def visibility_error(visibility: float) -> float:
    if not 0 < visibility <= 1:
        raise InvalidArgumentError(f"visibility must lie in (0, 1], got {visibility}")
    return (1.0 - visibility) / 2.0


@dataclass(frozen=True)
class SessionLink:
    """A directed session as seen by the crosstalk model."""

    src: int
    dst: int
    mu: float = 0.1

    @property
    def key(self) -> tuple[int, int]:
        return (self.src, self.dst)


def crosstalk_ratio(
    spec: RouterSpec,
    victim: SessionLink,
    aggressors: Sequence[SessionLink],
    budgets: Mapping[tuple[int, int], LinkBudget],
) -> float:
    """Leaked aggressor flux at the victim's detector over the victim's signal flux.

    Stray light follows the aggressor's own budget with the router insertion
    swapped for the leak suppression from the aggressor's input port to the
    victim's output port.
    """
    if not aggressors:
        return 0.0
    vb = _budget(budgets, victim)
    v_color = spec.plan.color(victim.src, victim.dst)
    signal = victim.mu * vb.transmittance
    leaked = 0.0
    for a in aggressors:
        a_color = spec.plan.color(a.src, a.dst)
        if a.key == victim.key:
            raise ConfigurationError(f"session {a.key} listed as its own aggressor")
        if a.dst == victim.dst:
            raise ConfigurationError(
                f"sessions {a.key} and {victim.key} share a destination; "
                "receiver-side demultiplexing is outside the router model"
            )
        if a.src == victim.dst:
            continue  # would have to exit through its own input port
        if a.src == victim.src and a_color == v_color:
            raise ConfigurationError(f"sessions {a.key} and {victim.key} share channel {v_color}")
        ab = _budget(budgets, a)
        suppression = spec.leak_suppression_db(a.src, a_color, victim.dst)
        leak_db = ab.total_db - ab.router_insertion_db + suppression
        leaked += a.mu * 10.0 ** (-leak_db / 10.0)
    return leaked / signal


def _budget(budgets, s: SessionLink) -> LinkBudget:
    try:
        return budgets[s.key]
    except KeyError:
        raise ConfigurationError(f"no link budget for session {s.key}") from None


@dataclass(frozen=True)
class WorstCaseCrosstalk:
    ratio: float
    victim_color: int
    n_users: int
    assumption: str


def worst_case_crosstalk(
    n_users: int,
    adjacent_isolation_db: float = 30.0,
    nonadjacent_isolation_db: float = 45.0,
    diameter_km: float = 50.0,
    attenuation_db_per_km: float = DEFAULT_ATTENUATION_DB_PER_KM,
) -> WorstCaseCrosstalk:
    """Largest crosstalk ratio over all victims of a fully loaded source node.

    Node 0 transmits to every other node at once with equal launch power.
    Each victim path carries the full network diameter of fiber while the
    leaked light sees none, the most lopsided geometry the diameter allows.
    Router isolation comes from the per-WDM adjacent/non-adjacent defaults.
    """
    plan = color_complete_graph(n_users)
    grid = [1500.0 + 0.8 * i for i in range(plan.n_colors)]
    spec = build_router_spec(plan, grid, adjacent_isolation_db, nonadjacent_isolation_db, 1.0)
    disadvantage_db = diameter_km * attenuation_db_per_km

    sessions = [SessionLink(0, d) for d in range(1, n_users)]
    best = (0.0, -1)
    for victim in sessions:
        budgets = {}
        for s in sessions:
            fiber = disadvantage_db if s is victim else 0.0
            ins = spec.insertion_loss_db[spec.plan.color(s.src, s.dst)]
            total = fiber + ins
            budgets[s.key] = LinkBudget(fiber, ins, 0.0, total, transmittance(total))
        others = [s for s in sessions if s is not victim]
        r = crosstalk_ratio(spec, victim, others, budgets)
        if r > best[0]:
            best = (r, spec.plan.color(victim.src, victim.dst))
    text = (
        f"{n_users} users, all sessions from one node active, equal launch power; "
        f"victim path {disadvantage_db:g} dB more fiber loss than leaked light "
        f"({diameter_km:g} km diameter at {attenuation_db_per_km:g} dB/km); "
        f"per-WDM isolation {adjacent_isolation_db:g}/{nonadjacent_isolation_db:g} dB, "
        "two WDMs on every leak path"
    )
    return WorstCaseCrosstalk(best[0], best[1], n_users, text)


def qber_model(
    budget: LinkBudget,
    visibility: float,
    detector: DetectorModel,
    source: SourceModel,
    xtalk: float = 0.0,
    excess_error: float = 0.0,
) -> QberEstimate:
    """Analytic QBER: [D/2 + e_vis S + xtalk S/2 + excess S] / (S + D)."""
    if xtalk < 0 or excess_error < 0:
        raise InvalidArgumentError("crosstalk and excess error must be >= 0")
    e_vis = visibility_error(visibility)
    s = -math.expm1(-source.mean_photon_number * budget.transmittance * detector.efficiency)
    d = detector.dark_count_prob_per_gate
    norm = s + d
    if norm == 0:
        return QberEstimate(0.5, 0.5, 0.0, 0.0, 0.0)
    dark = 0.5 * d / norm
    vis = e_vis * s / norm
    xt = 0.5 * xtalk * s / norm
    ex = excess_error * s / norm
    return QberEstimate(dark + vis + xt + ex, dark, vis, xt, ex)


def calibrate_excess_error(
    measured_qber: float,
    model: Callable[[float], float],
    *,
    upper: float = 0.5,
    tol: float = 1e-12,
    label: str = "",
) -> float:
    """Excess error that makes ``model(excess)`` hit ``measured_qber``.

    ``model`` maps an excess-error fraction to a QBER and must be
    non-decreasing. Use :func:`qber_model_fn` for the standard decomposition.
    """
    floor = model(0.0)
    if measured_qber < floor:
        if floor - measured_qber <= 1e-15:
            return 0.0
        raise CalibrationInfeasibleError(measured_qber, floor, label)
    if measured_qber == floor:
        return 0.0
    top = model(upper)
    if measured_qber > top:
        raise InvalidArgumentError(
            f"{label + ': ' if label else ''}measured QBER {measured_qber} exceeds the "
            f"model ceiling {top} at excess error {upper}"
        )
    return brentq(lambda e: model(e) - measured_qber, 0.0, upper, xtol=tol, rtol=1e-15)


def qber_model_fn(
    budget: LinkBudget,
    visibility: float,
    detector: DetectorModel,
    source: SourceModel,
    xtalk: float = 0.0,
) -> Callable[[float], float]:
    return lambda e: qber_model(budget, visibility, detector, source, xtalk, e).total
