"""Report serialization: JSON lines for machines, a fixed-width table for people.

Record layout (field names are frozen):

* ``{"record": "session", ...}`` one per session, every
  :class:`~starqkd.simulator.SessionReport` field, ``qber_analytic`` as an
  object with ``total``, ``dark``, ``visibility``, ``crosstalk``, ``excess``.
* ``{"record": "network", ...}`` last line: ``scenario``, ``mode``,
  ``rate_basis``, ``rate_basis_hz``, ``crosstalk``, ``mode_deltas``,
  ``session_count``.
* ``{"record": "decoy", ...}`` a key-rate report from the decoy analysis.

Undefined numbers (NaN) are written as ``null``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from typing import Iterable, TextIO

from .decoy import KeyRateReport
from .errors import ConfigurationError
from .optics import QberEstimate
from .protocol import ClickLog
from .simulator import ModeDelta, NetworkReport, SessionReport

SCHEMA_VERSION = 1


def _clean(x):
    if isinstance(x, float) and math.isnan(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def session_record(r: SessionReport) -> dict:
    rec = {"record": "session"}
    for f in dataclasses.fields(r):
        v = getattr(r, f.name)
        rec[f.name] = dataclasses.asdict(v) if isinstance(v, QberEstimate) else v
    return _clean(rec)


def network_record(rep: NetworkReport) -> dict:
    return _clean({
        "record": "network",
        "schema": SCHEMA_VERSION,
        "scenario": rep.scenario,
        "mode": rep.mode,
        "rate_basis": rep.rate_basis,
        "rate_basis_hz": rep.rate_basis_hz,
        "crosstalk": rep.crosstalk,
        "mode_deltas": [dataclasses.asdict(d) for d in rep.mode_deltas],
        "session_count": len(rep.sessions),
    })


def decoy_record(rep: KeyRateReport, link: str) -> dict:
    return _clean({
        "record": "decoy",
        "link": link,
        "rate_per_pulse": rep.rate_per_pulse,
        "rate_bps": rep.rate_bps,
        "repetition_rate_hz": rep.repetition_rate_hz,
        "secure": rep.secure,
        "inputs": rep.inputs,
        "notes": list(rep.notes),
    })


def to_records(rep: NetworkReport) -> list[dict]:
    return [session_record(r) for r in rep.sessions] + [network_record(rep)]


def dumps_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, allow_nan=False) + "\n" for r in records)


def write_jsonl(rep: NetworkReport, fh: TextIO) -> None:
    fh.write(dumps_jsonl(to_records(rep)))


def session_from_record(rec: dict) -> SessionReport:
    kw = {k: v for k, v in rec.items() if k != "record"}
    kw["qber_analytic"] = QberEstimate(**kw["qber_analytic"])
    return SessionReport(**kw)


def from_records(records: Iterable[dict]) -> NetworkReport:
    """Rebuild a :class:`NetworkReport` from its records."""
    sessions, net = [], None
    for rec in records:
        kind = rec.get("record")
        if kind == "session":
            sessions.append(session_from_record(rec))
        elif kind == "network":
            net = rec
        else:
            raise ConfigurationError(f"unexpected report record {kind!r}")
    if net is None:
        raise ConfigurationError("report has no network record")
    if net["session_count"] != len(sessions):
        raise ConfigurationError(
            f"network record lists {net['session_count']} sessions, found {len(sessions)}"
        )
    return NetworkReport(
        scenario=net["scenario"],
        mode=net["mode"],
        rate_basis=net["rate_basis"],
        rate_basis_hz=net["rate_basis_hz"],
        sessions=tuple(sessions),
        crosstalk=net["crosstalk"],
        mode_deltas=tuple(ModeDelta(**d) for d in net["mode_deltas"]),
    )


def loads_jsonl(text: str) -> NetworkReport:
    return from_records(json.loads(line) for line in text.splitlines() if line.strip())


def _pct(x: float | None) -> str:
    return "-" if x is None else f"{100 * x:.2f}%"


def format_table(rep: NetworkReport) -> str:
    head = (f"{'link':<6}{'nm':>7}{'status':>11}{'clicks':>9}{'sifted':>8}"
            f"{'QBER':>8}{'est.':>8}{'model':>8}{'rate bps':>10}{'xtalk':>10}")
    lines = [f"scenario {rep.scenario.get('name', '?')}, mode {rep.mode}, "
             f"{rep.scenario.get('pulse_count')} pulses, seed {rep.scenario.get('seed')}",
             head, "-" * len(head)]
    for r in rep.sessions:
        lines.append(
            f"{r.session_id:<6}{r.wavelength_nm:>7g}{r.status:>11}{r.clicks:>9}{r.sifted:>8}"
            f"{_pct(r.qber_measured):>8}{_pct(r.qber_estimate):>8}"
            f"{_pct(r.qber_analytic.total):>8}{r.sifted_key_rate_bps:>10.1f}"
            f"{r.crosstalk_ratio:>10.2e}"
        )
    if not rep.sessions:
        lines.append("(no sessions)")
    lines.append(f"rate basis: {rep.rate_basis}")
    if rep.mode_deltas:
        lines.append("")
        lines.append(f"{'link':<6}{'QBER single':>13}{'QBER conc.':>12}{'delta':>9}"
                     f"{'+/-':>8}{'rate delta':>12}{'':>3}")
        for d in rep.mode_deltas:
            delta = "-" if d.delta_qber is None else f"{100 * d.delta_qber:+.2f}pp"
            se = "-" if d.se_qber is None else f"{100 * d.se_qber:.2f}pp"
            flag = "  ANOMALY" if d.anomaly else ""
            lines.append(
                f"{d.session_id:<6}{_pct(d.qber_single):>13}{_pct(d.qber_concentration):>12}"
                f"{delta:>9}{se:>8}{d.delta_rate_bps:>+12.1f}{flag}"
            )
    return "\n".join(lines)


def format_decoy(rep: KeyRateReport, link: str) -> str:
    lines = [f"decoy analysis on {link}"]
    for k, v in rep.inputs.items():
        lines.append(f"  {k:<16}{v:.6g}")
    verdict = "secure key" if rep.secure else "NO secure key"
    lines.append(f"  rate            {rep.rate_per_pulse:.4e} per pulse, "
                 f"{rep.rate_bps:.4g} bps at {rep.repetition_rate_hz:g} Hz ({verdict})")
    lines += [f"  note: {n}" for n in rep.notes]
    return "\n".join(lines)


def write_transcript(session_id: str, log: ClickLog, fh: TextIO) -> None:
    """One line per clicked time bin: session, index, sender phase, receiver phase, tag.

    Phases are quarter turns (0..3); tags are 1 signal, 2 flipped signal,
    3 crosstalk, 4 dark count.
    """
    for i, s, r, t in zip(log.index.tolist(), log.sender_phase.tolist(),
                          log.receiver_phase.tolist(), log.tag.tolist()):
        fh.write(f"{session_id} {i} {s} {r} {t}\n")
