"""Multi-session Monte-Carlo runs over a planned star network.

Single mode runs each session alone. Concentration mode runs a set of
sessions at once, and every session picks up a static crosstalk click
probability from the light the others leak through the router.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .decoy import ChannelModel, IntensityPair, KeyRateReport, analyse, calibrate_channel
from .errors import ComparisonError, ConfigurationError, StarQKDError
from .optics import (
    DetectorModel,
    FiberLink,
    LinkBudget,
    QberEstimate,
    SessionLink,
    SourceModel,
    crosstalk_ratio,
    link_budget,
    transmittance,
    visibility_error,
)
from .protocol import (
    DEFAULT_DISCLOSE_FRACTION,
    PulsePhysics,
    SessionConfig,
    SessionState,
    calibrate_session_excess,
    run_session,
    session_expectation,
)
from .topology import NodeId, RouterSpec, validate_plan

MODES = ("single", "concentration")
DEFAULT_RATE_BASIS_HZ = 1e6
ANOMALY_SIGMA = 5.0


@dataclass(frozen=True)
class LinkPhysics:
    """Per-session physics. ``excess_error=None`` means calibrate from ``measured_qber``."""

    visibility: float
    detector: DetectorModel
    source: SourceModel = SourceModel()
    measured_loss_db: float | None = None
    excess_loss_db: float = 0.0
    excess_error: float | None = 0.0
    measured_qber: float | None = None


@dataclass(frozen=True)
class RunSettings:
    mode: str = "single"
    pulse_count: int = 10_000_000
    seed: int = 42
    sessions: tuple[str, ...] = ()
    concurrent_sessions: tuple[str, ...] = ()
    disclose_fraction: float = DEFAULT_DISCLOSE_FRACTION
    rate_basis_hz: float = DEFAULT_RATE_BASIS_HZ


@dataclass(frozen=True)
class DecoySettings:
    link: str
    signal_mu: float = 0.6
    decoy_mu: float = 0.2
    f_ec: float = 1.22
    sifting_factor: float = 0.5
    repetition_rate_hz: float = 1e6


@dataclass(frozen=True)
class Scenario:
    name: str
    nodes: tuple[NodeId, ...]
    fibers: Mapping[str, FiberLink]
    router: RouterSpec
    links: Mapping[str, LinkPhysics]
    run: RunSettings
    decoy: DecoySettings | None = None
    aliases: Mapping[str, str] = field(default_factory=dict)

    def node(self, label: str) -> NodeId:
        for n in self.nodes:
            if n.label == label:
                return n
        raise ConfigurationError(f"unknown node {label!r}")

    def endpoints(self, session_id: str) -> tuple[NodeId, NodeId]:
        parts = session_id.split("-")
        if len(parts) != 2:
            raise ConfigurationError(f"session id {session_id!r} is not of the form SRC-DST")
        return self.node(parts[0]), self.node(parts[1])

    def active_sessions(self, mode: str | None = None) -> tuple[str, ...]:
        mode = mode or self.run.mode
        if mode == "concentration" and self.run.concurrent_sessions:
            return self.run.concurrent_sessions
        return self.run.sessions

    def with_run(self, **changes) -> "Scenario":
        return replace(self, run=replace(self.run, **changes))


def validate_scenario(s: Scenario) -> list[str]:
    problems = []
    labels = [n.label for n in s.nodes]
    if sorted(n.index for n in s.nodes) != list(range(len(s.nodes))):
        problems.append("network.nodes: indices must be contiguous from 0")
    if len(set(labels)) != len(labels):
        problems.append("network.nodes: labels must be unique")
    if s.router.n_users != len(s.nodes):
        problems.append(
            f"router: plan covers {s.router.n_users} users but the network has {len(s.nodes)}"
        )
    else:
        report = validate_plan(s.router.plan)
        problems += [f"router.channel_nm: {v}" for v in report.violations]
    for lab in labels:
        if lab not in s.fibers:
            problems.append(f"network.fiber_length_km.{lab}: missing")
    if s.run.mode not in MODES:
        problems.append(f"run.mode: must be one of {MODES}, got {s.run.mode!r}")
    if s.run.pulse_count <= 0:
        problems.append("run.pulse_count: must be > 0")
    if not 0 < s.run.disclose_fraction <= 1:
        problems.append("run.disclose_fraction: must lie in (0, 1]")
    if s.run.rate_basis_hz <= 0:
        problems.append("run.rate_basis_hz: must be > 0")
    for sid in tuple(s.run.sessions) + tuple(s.run.concurrent_sessions):
        try:
            a, b = s.endpoints(sid)
        except ConfigurationError as exc:
            problems.append(f"run.sessions: {sid}: {exc}")
            continue
        if a == b:
            problems.append(f"run.sessions: {sid} connects a node to itself")
            continue
        if sid not in s.links:
            problems.append(f"physics.links.{sid}: missing")
            continue
        lp = s.links[sid]
        if lp.excess_error is None and lp.measured_qber is None:
            problems.append(f"physics.links.{sid}: excess_error = calibrate needs measured_qber")
    if len(set(s.run.sessions)) != len(s.run.sessions):
        problems.append("run.sessions: duplicate session ids")
    extra = set(s.run.concurrent_sessions) - set(s.run.sessions)
    if extra:
        problems.append(f"run.concurrent_sessions: not in run.sessions: {sorted(extra)}")
    if s.decoy is not None and s.decoy.link not in s.links:
        problems.append(f"decoy.link: no physics for {s.decoy.link!r}")
    return problems


def check_scenario(s: Scenario) -> None:
    problems = validate_scenario(s)
    if problems:
        raise ConfigurationError(f"scenario {s.name!r} is invalid", problems)


def derive_seed(master_seed: int, session_id: str) -> np.random.SeedSequence:
    """Keyed hash of (master seed, session id) as 128 bits of seed entropy."""
    key = int(master_seed).to_bytes(8, "little", signed=False)
    digest = hashlib.blake2b(session_id.encode("utf-8"), key=key, digest_size=16).digest()
    return np.random.SeedSequence(int.from_bytes(digest, "little"))


def derive_stream(master_seed: int, session_id: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, session_id)))


def session_budget(s: Scenario, session_id: str) -> LinkBudget:
    a, b = s.endpoints(session_id)
    lp = s.links[session_id]
    ch = s.router.channel_between(a.index, b.index)
    legs = (s.fibers[a.label], s.fibers[b.label])
    return link_budget(legs, s.router, ch, lp.excess_loss_db, lp.measured_loss_db)


def pulse_physics(lp: LinkPhysics, budget: LinkBudget, xtalk_click: float = 0.0,
                  excess_error: float | None = None) -> PulsePhysics:
    e = lp.excess_error if excess_error is None else excess_error
    return PulsePhysics(
        mu=lp.source.mean_photon_number,
        transmittance=budget.transmittance,
        efficiency=lp.detector.efficiency,
        visibility=lp.visibility,
        p_dark=lp.detector.dark_count_prob_per_gate,
        xtalk_click_prob=xtalk_click,
        excess_error=0.0 if e is None else e,
    )


def calibrate_scenario(
    s: Scenario, measured: Mapping[str, float] | None = None, force: bool = False
) -> Scenario:
    """Fit each link's excess error to its measured QBER under the pulse model.

    ``measured`` overrides the scenario's ``measured_qber`` values. Links
    with an explicit excess error are left alone unless ``force`` is set or
    a measurement is supplied for them. Infeasible links are reported
    together in one :class:`ConfigurationError`.
    """
    measured = dict(measured or {})
    links = dict(s.links)
    problems = []
    for sid, lp in s.links.items():
        target = measured.get(sid, lp.measured_qber)
        if target is None or not (force or sid in measured or lp.excess_error is None):
            continue
        try:
            budget = session_budget(s, sid)
            eps = calibrate_session_excess(target, pulse_physics(lp, budget, 0.0, 0.0), sid)
        except StarQKDError as exc:
            problems.append(f"physics.links.{sid}: {exc}")
            continue
        links[sid] = replace(lp, excess_error=eps, measured_qber=target)
    unknown = set(measured) - set(s.links)
    problems += [f"measured QBER given for unknown link {sid}" for sid in sorted(unknown)]
    if problems:
        raise ConfigurationError("calibration failed", problems)
    return replace(s, links=links)


def crosstalk_ratios(s: Scenario, active: tuple[str, ...]) -> dict[str, float]:
    views = {}
    budgets = {}
    for sid in active:
        a, b = s.endpoints(sid)
        v = SessionLink(a.index, b.index, s.links[sid].source.mean_photon_number)
        views[sid] = v
        budgets[v.key] = session_budget(s, sid)
    return {
        sid: crosstalk_ratio(s.router, v, [w for k, w in views.items() if k != sid], budgets)
        for sid, v in views.items()
    }


@dataclass(frozen=True)
class SessionReport:
    session_id: str
    src: str
    dst: str
    channel_color: int
    wavelength_nm: float
    status: str
    pulses: int
    clicks: int
    sifted: int
    disclosed: int
    disclosed_errors: int
    sifted_errors: int
    qber_measured: float | None
    qber_estimate: float | None
    qber_analytic: QberEstimate
    expected_click_prob: float
    expected_sifted_prob: float
    sifted_key_rate_bps: float
    transmittance: float
    crosstalk_ratio: float
    crosstalk_click_prob: float
    excess_error: float

    @property
    def click_rate(self) -> float:
        return self.clicks / self.pulses


@dataclass(frozen=True)
class ModeDelta:
    session_id: str
    qber_single: float | None
    qber_concentration: float | None
    delta_qber: float | None
    se_qber: float | None
    rate_single_bps: float
    rate_concentration_bps: float
    delta_rate_bps: float
    se_rate_bps: float
    anomaly: bool


@dataclass(frozen=True)
class NetworkReport:
    scenario: dict
    mode: str
    rate_basis: str
    rate_basis_hz: float
    sessions: tuple[SessionReport, ...]
    crosstalk: dict
    mode_deltas: tuple[ModeDelta, ...] = ()

    def session(self, session_id: str) -> SessionReport:
        for r in self.sessions:
            if r.session_id == session_id:
                return r
        raise KeyError(session_id)


def rate_basis_label(hz: float) -> str:
    return (
        f"sifted bits per pulse x {hz:g} Hz repetition rate "
        "(assumed; the field runs' pulse rate and detector duty cycle are unknown)"
    )


def scenario_echo(s: Scenario, mode: str) -> dict:
    return {
        "name": s.name,
        "mode": mode,
        "pulse_count": s.run.pulse_count,
        "seed": s.run.seed,
        "sessions": list(s.active_sessions(mode)),
        "disclose_fraction": s.run.disclose_fraction,
        "grid_nm": list(s.router.grid_nm),
        "isolation_scope": s.router.isolation_scope,
    }


def _session_report(state: SessionState, s: Scenario, phys: PulsePhysics, ratio: float,
                    budget: LinkBudget) -> SessionReport:
    exp = session_expectation(phys)
    a, b = s.endpoints(state.session_id)
    ch = s.router.channel_between(a.index, b.index)
    qs = state.qber_sample
    sifted = state.sifted
    return SessionReport(
        session_id=state.session_id,
        src=a.label,
        dst=b.label,
        channel_color=ch.color,
        wavelength_nm=ch.wavelength_nm,
        status=state.status.value,
        pulses=state.pulses,
        clicks=state.clicks,
        sifted=sifted,
        disclosed=qs.disclosed_count if qs else 0,
        disclosed_errors=qs.error_count if qs else 0,
        sifted_errors=state.sifted_errors,
        qber_measured=state.qber_measured if sifted else None,
        qber_estimate=qs.estimate if qs else None,
        qber_analytic=exp.qber,
        expected_click_prob=exp.click_prob,
        expected_sifted_prob=exp.sifted_prob,
        sifted_key_rate_bps=sifted / state.pulses * s.run.rate_basis_hz,
        transmittance=budget.transmittance,
        crosstalk_ratio=ratio,
        crosstalk_click_prob=phys.xtalk_click_prob,
        excess_error=phys.excess_error,
    )


def run_scenario(
    s: Scenario,
    mode: str | None = None,
    workers: int | None = 1,
    process: Callable | None = None,
    logs: dict | None = None,
) -> NetworkReport:
    """Simulate every active session and assemble the network report.

    Sessions draw from independent streams keyed by (master seed, session
    id), so the result does not depend on ``workers``; reports are merged
    in ascending session id. Pass a dict as ``logs`` to receive each
    session's :class:`~starqkd.protocol.ClickLog`.
    """
    mode = mode or s.run.mode
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}", [f"run.mode: one of {MODES}"])
    check_scenario(s)
    if any(s.links[sid].excess_error is None for sid in s.active_sessions(mode)):
        s = calibrate_scenario(s)
    active = tuple(sorted(s.active_sessions(mode)))

    ratios = crosstalk_ratios(s, active) if mode == "concentration" else {k: 0.0 for k in active}
    jobs = []
    for sid in active:
        lp = s.links[sid]
        budget = session_budget(s, sid)
        signal_detected = lp.source.mean_photon_number * budget.transmittance * lp.detector.efficiency
        xt_click = -math.expm1(-ratios[sid] * signal_detected)
        phys = pulse_physics(lp, budget, xt_click)
        a, b = s.endpoints(sid)
        cfg = SessionConfig(
            physics=phys,
            pulse_count=s.run.pulse_count,
            seed=derive_seed(s.run.seed, sid),
            session_id=sid,
            src=a.index,
            dst=b.index,
            channel=s.router.channel_between(a.index, b.index),
            disclose_fraction=s.run.disclose_fraction,
        )
        jobs.append((cfg, phys, budget))

    def work(job):
        cfg, phys, budget = job
        state = run_session(cfg, process)
        if logs is not None:
            logs[cfg.session_id] = state.log
        return _session_report(state, s, phys, ratios[cfg.session_id], budget)

    if workers is None or workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(work, jobs))
    else:
        reports = [work(j) for j in jobs]
    reports.sort(key=lambda r: r.session_id)
    return NetworkReport(
        scenario=scenario_echo(s, mode),
        mode=mode,
        rate_basis=rate_basis_label(s.run.rate_basis_hz),
        rate_basis_hz=s.run.rate_basis_hz,
        sessions=tuple(reports),
        crosstalk=dict(sorted(ratios.items())),
    )


def _binomial_se(p: float | None, n: int) -> float | None:
    if p is None or n == 0:
        return None
    return math.sqrt(p * (1 - p) / n)


def compare_modes(single: NetworkReport, concentration: NetworkReport) -> tuple[ModeDelta, ...]:
    """Per-link QBER and rate differences with binomial standard errors.

    A delta beyond five combined standard errors is flagged as an anomaly.
    """
    strip = lambda echo: {k: v for k, v in echo.items() if k not in ("mode", "sessions")}
    if strip(single.scenario) != strip(concentration.scenario):
        raise ComparisonError("reports come from different scenarios")
    if single.rate_basis_hz != concentration.rate_basis_hz:
        raise ComparisonError("reports use different rate bases")
    c_by_id = {r.session_id: r for r in concentration.sessions}
    out = []
    for r1 in single.sessions:
        r2 = c_by_id.get(r1.session_id)
        if r2 is None:
            continue
        q1, q2 = r1.qber_measured, r2.qber_measured
        se1, se2 = _binomial_se(q1, r1.sifted), _binomial_se(q2, r2.sifted)
        if q1 is None or q2 is None:
            dq = se = None
        else:
            dq = q2 - q1
            se = math.sqrt(se1 ** 2 + se2 ** 2)
        hz = single.rate_basis_hz
        rse = math.sqrt(r1.sifted + r2.sifted) / r1.pulses * hz
        dr = r2.sifted_key_rate_bps - r1.sifted_key_rate_bps
        anomaly = bool(
            (dq is not None and se and abs(dq) > ANOMALY_SIGMA * se)
            or (rse and abs(dr) > ANOMALY_SIGMA * rse)
        )
        out.append(
            ModeDelta(r1.session_id, q1, q2, dq, se, r1.sifted_key_rate_bps,
                      r2.sifted_key_rate_bps, dr, rse, anomaly)
        )
    return tuple(out)


def run_mode_comparison(
    s: Scenario, workers: int | None = 1, process: Callable | None = None
) -> tuple[NetworkReport, NetworkReport]:
    """Run both modes with the same master seed; the concentration report carries the deltas."""
    if any(lp.excess_error is None for lp in s.links.values()):
        s = calibrate_scenario(s)
    single = run_scenario(s, "single", workers, process)
    conc = run_scenario(s, "concentration", workers, process)
    return single, replace(conc, mode_deltas=compare_modes(single, conc))


def decoy_channel(s: Scenario, link: str, loss_db: float | None = None) -> ChannelModel:
    """Channel model of ``link`` for the decoy analysis.

    The excess error is fitted so the channel reproduces the link's measured
    QBER at the scenario's own mean photon number; without a measurement the
    link's fixed excess error is used. ``loss_db`` then replaces the path loss, keeping the fitted error.
    """
    lp = s.links[link]
    budget = session_budget(s, link)
    ch = ChannelModel(budget.transmittance, lp.detector.efficiency,
                      lp.detector.dark_count_prob_per_gate, visibility_error(lp.visibility),
                      lp.excess_error or 0.0)
    if lp.measured_qber is not None:
        ch = calibrate_channel(ch, lp.measured_qber, lp.source.mean_photon_number, link)
    if loss_db is not None:
        ch = replace(ch, transmittance=transmittance(loss_db))
    return ch


def run_decoy(
    s: Scenario,
    link: str | None = None,
    signal_mu: float | None = None,
    decoy_mu: float | None = None,
    f_ec: float | None = None,
    sifting_factor: float | None = None,
    repetition_rate_hz: float | None = None,
    loss_db: float | None = None,
) -> tuple[str, KeyRateReport]:
    """Decoy analysis of one link; unset arguments come from the scenario's decoy settings."""
    d = s.decoy or DecoySettings(link=link or "")
    link = link or d.link
    if link not in s.links:
        raise ConfigurationError(f"no physics for link {link!r}", [f"physics.links.{link}: missing"])
    pair = IntensityPair(signal_mu if signal_mu is not None else d.signal_mu,
                         decoy_mu if decoy_mu is not None else d.decoy_mu)
    ch = decoy_channel(s, link, loss_db)
    rep = analyse(
        ch,
        pair,
        sifting_factor if sifting_factor is not None else d.sifting_factor,
        f_ec if f_ec is not None else d.f_ec,
        repetition_rate_hz if repetition_rate_hz is not None else d.repetition_rate_hz,
    )
    return link, rep
