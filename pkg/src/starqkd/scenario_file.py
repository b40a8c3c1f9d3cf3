"""Scenario files: TOML documents with unit-suffixed keys.

Sections and keys (anything else is rejected)::

    name = "..."
    [network]      nodes, attenuation_db_per_km, aliases.<node>, fiber_length_km.<node>,
                   fiber_loss_db.<node> (optional measured per-leg loss)
    [router]       grid_nm, channel_nm.<SRC-DST> (optional; generated when absent),
                   isolation_matrix_db (measured, grid order) or
                   adjacent_isolation_db + nonadjacent_isolation_db + insertion_loss_db
    [physics]      defaults: detector_efficiency, mean_photon_number,
                   repetition_rate_hz, gate_rate_hz
    [physics.links.<SRC-DST>]
                   visibility, dark_count_per_gate, measured_loss_db, excess_loss_db,
                   excess_error (number or "calibrate"), measured_qber, and any
                   [physics] default as an override
    [run]          mode, pulse_count, seed, sessions, concurrent_sessions,
                   disclose_fraction, rate_basis_hz
    [decoy]        link, signal_mu, decoy_mu, f_ec, sifting_factor, repetition_rate_hz
"""

from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w

from .errors import ConfigurationError, StarQKDError
from .optics import DetectorModel, FiberLink, SourceModel
from .simulator import (
    DecoySettings,
    LinkPhysics,
    RunSettings,
    Scenario,
    validate_scenario,
)
from .topology import (
    NodeId,
    build_router_spec,
    color_complete_graph,
    pair_key,
    plan_from_wavelengths,
)

BUNDLED = ("beijing",)

_TOP = {"name", "network", "router", "physics", "run", "decoy"}
_NETWORK = {"nodes", "attenuation_db_per_km", "aliases", "fiber_length_km", "fiber_loss_db"}
_ROUTER = {
    "grid_nm", "channel_nm", "isolation_matrix_db",
    "adjacent_isolation_db", "nonadjacent_isolation_db", "insertion_loss_db",
}
_PHYS_DEFAULTS = {"detector_efficiency", "mean_photon_number", "repetition_rate_hz", "gate_rate_hz"}
_LINK = _PHYS_DEFAULTS | {
    "visibility", "dark_count_per_gate", "measured_loss_db", "excess_loss_db",
    "excess_error", "measured_qber",
}
_RUN = {"mode", "pulse_count", "seed", "sessions", "concurrent_sessions",
        "disclose_fraction", "rate_basis_hz"}
_DECOY = {"link", "signal_mu", "decoy_mu", "f_ec", "sifting_factor", "repetition_rate_hz"}


class _Reader:
    """Collects every problem with its dotted field path before failing."""

    def __init__(self):
        self.problems: list[str] = []

    def unknown(self, table: dict, allowed: set, path: str) -> None:
        for k in table:
            if k not in allowed:
                self.problems.append(f"{path + '.' if path else ''}{k}: unknown key")

    def get(self, table: dict, key: str, path: str, kind, default: Any = ..., check=None):
        where = f"{path}.{key}" if path else key
        if key not in table:
            if default is ...:
                self.problems.append(f"{where}: missing")
                return None
            return default
        v = table[key]
        if kind is float and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if kind is int and isinstance(v, float) and v.is_integer():
            v = int(v)
        if not isinstance(v, kind) or isinstance(v, bool) and kind is not bool:
            self.problems.append(f"{where}: expected {getattr(kind, '__name__', kind)}, got {v!r}")
            return None
        if check is not None:
            msg = check(v)
            if msg:
                self.problems.append(f"{where}: {msg}")
                return None
        return v

    def table(self, parent: dict, key: str, path: str, required: bool = True) -> dict:
        where = f"{path}.{key}" if path else key
        if key not in parent:
            if required:
                self.problems.append(f"{where}: missing section")
            return {}
        v = parent[key]
        if not isinstance(v, dict):
            self.problems.append(f"{where}: expected a table")
            return {}
        return v


def _positive(v):
    return None if v > 0 else "must be > 0"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _fraction(v):
    return None if 0 <= v <= 1 else "must lie in [0, 1]"


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{source}: cannot parse scenario", [str(exc)]) from None
    r = _Reader()
    r.unknown(doc, _TOP, "")
    name = r.get(doc, "name", "", str, default=Path(source).stem)

    net = r.table(doc, "network", "")
    r.unknown(net, _NETWORK, "network")
    labels = r.get(net, "nodes", "network", list) or []
    if not all(isinstance(x, str) and x and "-" not in x for x in labels):
        r.problems.append("network.nodes: labels must be non-empty strings without '-'")
        labels = []
    nodes = tuple(NodeId(i, lab) for i, lab in enumerate(labels))
    index = {lab: i for i, lab in enumerate(labels)}
    att = r.get(net, "attenuation_db_per_km", "network", float, 0.2, _positive)
    aliases = r.table(net, "aliases", "network", required=False)
    lengths = r.table(net, "fiber_length_km", "network")
    leg_losses = r.table(net, "fiber_loss_db", "network", required=False)
    r.unknown(lengths, set(labels), "network.fiber_length_km")
    r.unknown(leg_losses, set(labels), "network.fiber_loss_db")
    r.unknown(aliases, set(labels), "network.aliases")
    fibers = {}
    for lab in labels:
        length = r.get(lengths, lab, "network.fiber_length_km", float, check=_nonneg)
        leg = r.get(leg_losses, lab, "network.fiber_loss_db", float, None, _nonneg)
        if length is not None and att is not None:
            fibers[lab] = FiberLink(length, att, leg)

    router = None
    rt = r.table(doc, "router", "")
    r.unknown(rt, _ROUTER, "router")
    grid = r.get(rt, "grid_nm", "router", list)
    if grid is not None and not all(isinstance(x, (int, float)) for x in grid):
        r.problems.append("router.grid_nm: expected numbers")
        grid = None
    pairs_nm = r.table(rt, "channel_nm", "router", required=False)
    plan = None
    if grid is not None and labels:
        try:
            if pairs_nm:
                explicit = {}
                for sid, w in pairs_nm.items():
                    a, _, b = sid.partition("-")
                    if a not in index or b not in index:
                        r.problems.append(f"router.channel_nm.{sid}: unknown node pair")
                        continue
                    explicit[pair_key(index[a], index[b])] = w
                plan = plan_from_wavelengths(len(labels), grid, explicit)
            else:
                plan = color_complete_graph(len(labels))
        except StarQKDError as exc:
            r.problems.append(f"router.channel_nm: {exc}")
    matrix = r.get(rt, "isolation_matrix_db", "router", list, None)
    adj = r.get(rt, "adjacent_isolation_db", "router", float, 30.0, _positive)
    nonadj = r.get(rt, "nonadjacent_isolation_db", "router", float, 45.0, _positive)
    ins = rt.get("insertion_loss_db", 2.0)
    if matrix is not None and "insertion_loss_db" in rt:
        r.problems.append("router.insertion_loss_db: not allowed with isolation_matrix_db")
    if plan is not None and adj is not None and nonadj is not None:
        try:
            router = build_router_spec(plan, grid, adj, nonadj, ins, matrix)
        except (StarQKDError, TypeError) as exc:
            r.problems.append(f"router: {exc}")

    phys = r.table(doc, "physics", "")
    r.unknown(phys, _PHYS_DEFAULTS | {"links"}, "physics")
    defaults = {
        "detector_efficiency": r.get(phys, "detector_efficiency", "physics", float, 0.10, _fraction),
        "mean_photon_number": r.get(phys, "mean_photon_number", "physics", float, 0.1, _positive),
        "repetition_rate_hz": r.get(phys, "repetition_rate_hz", "physics", float, 1e6, _positive),
        "gate_rate_hz": r.get(phys, "gate_rate_hz", "physics", float, 1e6, _positive),
    }
    links = {}
    for sid, lt in r.table(phys, "links", "physics").items():
        path = f"physics.links.{sid}"
        if not isinstance(lt, dict):
            r.problems.append(f"{path}: expected a table")
            continue
        r.unknown(lt, _LINK, path)
        vals = {k: r.get(lt, k, path, float, defaults[k], _positive) for k in _PHYS_DEFAULTS}
        vis = r.get(lt, "visibility", path, float, check=_fraction)
        dark = r.get(lt, "dark_count_per_gate", path, float, check=_fraction)
        mloss = r.get(lt, "measured_loss_db", path, float, None, _nonneg)
        xloss = r.get(lt, "excess_loss_db", path, float, 0.0, _nonneg)
        mq = r.get(lt, "measured_qber", path, float, None, _fraction)
        ee = lt.get("excess_error", 0.0)
        if ee == "calibrate":
            ee = None
        elif isinstance(ee, (int, float)) and not isinstance(ee, bool) and 0 <= ee <= 0.5:
            ee = float(ee)
        else:
            r.problems.append(f"{path}.excess_error: expected a number in [0, 0.5] or \"calibrate\"")
            ee = 0.0
        if None in (vis, dark) or None in vals.values():
            continue
        try:
            links[sid] = LinkPhysics(
                visibility=vis,
                detector=DetectorModel(dark, vals["detector_efficiency"], vals["gate_rate_hz"]),
                source=SourceModel(vals["mean_photon_number"], vals["repetition_rate_hz"]),
                measured_loss_db=mloss,
                excess_loss_db=xloss,
                excess_error=ee,
                measured_qber=mq,
            )
        except StarQKDError as exc:
            r.problems.append(f"{path}: {exc}")

    run = r.table(doc, "run", "")
    r.unknown(run, _RUN, "run")
    sessions = r.get(run, "sessions", "run", list, [])
    concurrent = r.get(run, "concurrent_sessions", "run", list, [])
    settings = RunSettings(
        mode=r.get(run, "mode", "run", str, "single"),
        pulse_count=r.get(run, "pulse_count", "run", int, 10_000_000, _positive),
        seed=r.get(run, "seed", "run", int, 42, lambda v: None if 0 <= v < 2**64 else "must fit in 64 bits"),
        sessions=tuple(sessions or ()),
        concurrent_sessions=tuple(concurrent or ()),
        disclose_fraction=r.get(run, "disclose_fraction", "run", float, 0.1, _positive),
        rate_basis_hz=r.get(run, "rate_basis_hz", "run", float, 1e6, _positive),
    )

    decoy = None
    if "decoy" in doc:
        dt = r.table(doc, "decoy", "")
        r.unknown(dt, _DECOY, "decoy")
        decoy = DecoySettings(
            link=r.get(dt, "link", "decoy", str),
            signal_mu=r.get(dt, "signal_mu", "decoy", float, 0.6, _positive),
            decoy_mu=r.get(dt, "decoy_mu", "decoy", float, 0.2, _positive),
            f_ec=r.get(dt, "f_ec", "decoy", float, 1.22, _positive),
            sifting_factor=r.get(dt, "sifting_factor", "decoy", float, 0.5, _fraction),
            repetition_rate_hz=r.get(dt, "repetition_rate_hz", "decoy", float, 1e6, _positive),
        )

    if r.problems or router is None:
        raise ConfigurationError(f"{source}: invalid scenario", r.problems or ["router: missing"])
    scenario = Scenario(
        name=name,
        nodes=nodes,
        fibers=fibers,
        router=router,
        links=links,
        run=settings,
        decoy=decoy,
        aliases={k: str(v) for k, v in aliases.items()},
    )
    problems = validate_scenario(scenario)
    if problems:
        raise ConfigurationError(f"{source}: invalid scenario", problems)
    return scenario


def dump_scenario(s: Scenario) -> str:
    """Serialize with every per-link value explicit, so parsing it back is exact."""
    labels = [n.label for n in s.nodes]
    atts = {f.attenuation_db_per_km for f in s.fibers.values()}
    if len(atts) > 1:
        raise ConfigurationError("scenario files support one attenuation for all fibers")
    network: dict[str, Any] = {
        "nodes": labels,
        "attenuation_db_per_km": atts.pop() if atts else 0.2,
    }
    if s.aliases:
        network["aliases"] = dict(s.aliases)
    network["fiber_length_km"] = {lab: s.fibers[lab].length_km for lab in labels}
    legs = {lab: s.fibers[lab].measured_loss_db for lab in labels
            if s.fibers[lab].measured_loss_db is not None}
    if legs:
        network["fiber_loss_db"] = legs

    rs = s.router
    router: dict[str, Any] = {"grid_nm": list(rs.grid_nm)}
    router["channel_nm"] = {
        f"{labels[a]}-{labels[b]}": rs.grid_nm[c] for (a, b), c in sorted(rs.plan.assignment.items())
    }
    if rs.isolation_scope == "router":
        router["isolation_matrix_db"] = [list(row) for row in rs.isolation_db]
    else:
        k = len(rs.grid_nm)
        router["insertion_loss_db"] = list(rs.insertion_loss_db)
        if k > 1:
            router["adjacent_isolation_db"] = rs.isolation_db[0][1]
        if k > 2:
            router["nonadjacent_isolation_db"] = rs.isolation_db[0][2]

    links = {}
    for sid, lp in s.links.items():
        t: dict[str, Any] = {
            "visibility": lp.visibility,
            "dark_count_per_gate": lp.detector.dark_count_prob_per_gate,
            "detector_efficiency": lp.detector.efficiency,
            "gate_rate_hz": lp.detector.gate_rate_hz,
            "mean_photon_number": lp.source.mean_photon_number,
            "repetition_rate_hz": lp.source.repetition_rate_hz,
            "excess_loss_db": lp.excess_loss_db,
            "excess_error": "calibrate" if lp.excess_error is None else lp.excess_error,
        }
        if lp.measured_loss_db is not None:
            t["measured_loss_db"] = lp.measured_loss_db
        if lp.measured_qber is not None:
            t["measured_qber"] = lp.measured_qber
        links[sid] = t

    run = s.run
    doc: dict[str, Any] = {
        "name": s.name,
        "network": network,
        "router": router,
        "physics": {"links": links},
        "run": {
            "mode": run.mode,
            "pulse_count": run.pulse_count,
            "seed": run.seed,
            "sessions": list(run.sessions),
            "concurrent_sessions": list(run.concurrent_sessions),
            "disclose_fraction": run.disclose_fraction,
            "rate_basis_hz": run.rate_basis_hz,
        },
    }
    if s.decoy is not None:
        d = s.decoy
        doc["decoy"] = {
            "link": d.link,
            "signal_mu": d.signal_mu,
            "decoy_mu": d.decoy_mu,
            "f_ec": d.f_ec,
            "sifting_factor": d.sifting_factor,
            "repetition_rate_hz": d.repetition_rate_hz,
        }
    return tomli_w.dumps(doc)


def bundled_text(name: str) -> str:
    if name not in BUNDLED:
        raise ConfigurationError(f"no bundled scenario named {name!r}", [f"choose from {BUNDLED}"])
    return resources.files("starqkd").joinpath("data", f"{name}.scn").read_text(encoding="utf-8")


def load_scenario(path: str | Path) -> Scenario:
    """Read a scenario file; a bare bundled name (``beijing`` or ``beijing.scn``) also works."""
    p = Path(path)
    if p.is_file():
        return parse_scenario(p.read_text(encoding="utf-8"), str(p))
    stem = p.name[:-4] if p.name.endswith(".scn") else p.name
    if stem in BUNDLED and p.parent == Path("."):
        return parse_scenario(bundled_text(stem), f"{stem}.scn")
    raise ConfigurationError(f"scenario file not found: {path}")


def beijing() -> Scenario:
    return parse_scenario(bundled_text("beijing"), "beijing.scn")
