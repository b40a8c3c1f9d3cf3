"""Command-line front end.

Exit status: 0 when the command ran (aborted sessions and no-key outcomes
included), 1 for usage or configuration errors, 2 for internal errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import kernel
from .errors import StarQKDError
from .protocol import session_expectation
from .report import (
    decoy_record,
    dumps_jsonl,
    format_decoy,
    format_table,
    to_records,
    write_transcript,
)
from .scenario_file import BUNDLED, bundled_text, dump_scenario, load_scenario
from .simulator import (
    MODES,
    calibrate_scenario,
    pulse_physics,
    run_decoy,
    run_mode_comparison,
    run_scenario,
    session_budget,
)
from .topology import build_router_spec, color_complete_graph, describe_plan, route

log = logging.getLogger("starqkd")

EXIT_OK, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _count(text: str) -> int:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v.is_integer() or v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive whole number, got {text!r}")
    return int(v)


def _grid(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad wavelength list: {text!r}") from None


def _measured(text: str) -> dict[str, float]:
    out = {}
    for item in text.split(","):
        sid, sep, val = item.partition("=")
        try:
            if not sep:
                raise ValueError
            out[sid.strip()] = float(val)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected LINK=QBER pairs, got {item!r}") from None
    return out


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")
        log.info("wrote %s", path)


def cmd_plan(args) -> int:
    plan = color_complete_graph(args.users)
    grid = args.grid or [1530.0 + 0.8 * i for i in range(plan.n_colors)]
    spec = build_router_spec(plan, grid)
    print(f"{args.users} users, {plan.n_colors} wavelength channel(s)")
    for line in describe_plan(plan, grid=spec.grid_nm):
        print(f"  {line}")
    print("router ports:")
    for node in range(args.users):
        chans = ", ".join(f"{c.wavelength_nm:g}" for c in sorted(spec.port(node), key=lambda c: c.color))
        print(f"  {node}: {chans}")
    hops = {route(spec, a, b).wdm_hops for a in range(args.users) for b in range(args.users) if a != b}
    print(f"WDM traversals per path: {sorted(hops)}")
    return EXIT_OK


def _scenario(args):
    s = load_scenario(args.scenario)
    changes = {}
    if getattr(args, "pulses", None) is not None:
        changes["pulse_count"] = args.pulses
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "mode", None) is not None:
        changes["mode"] = args.mode
    return s.with_run(**changes) if changes else s


def cmd_simulate(args) -> int:
    s = _scenario(args)
    logs = {} if args.transcript else None
    rep = run_scenario(s, workers=args.workers, logs=logs)
    print(format_table(rep))
    if args.out:
        _write(args.out, dumps_jsonl(to_records(rep)))
    if logs is not None:
        with open(args.transcript, "w", encoding="utf-8") as fh:
            for sid in sorted(logs):
                write_transcript(sid, logs[sid], fh)
    return EXIT_OK


def cmd_compare(args) -> int:
    s = _scenario(args)
    single, conc = run_mode_comparison(s, workers=args.workers)
    print(format_table(single))
    print()
    print(format_table(conc))
    if args.out:
        _write(args.out, dumps_jsonl(to_records(single) + to_records(conc)))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    s = load_scenario(args.scenario)
    cal = calibrate_scenario(s, args.measured, force=True)
    print(f"{'link':<6}{'measured':>10}{'floor':>9}{'excess':>10}")
    for sid in sorted(cal.links):
        lp = cal.links[sid]
        if lp.measured_qber is None:
            continue
        floor = session_expectation(pulse_physics(lp, session_budget(cal, sid), 0.0, 0.0)).qber.total
        print(f"{sid:<6}{lp.measured_qber:>10.4f}{floor:>9.4f}{lp.excess_error:>10.6f}")
    if args.out:
        _write(args.out, dump_scenario(cal))
    return EXIT_OK


def cmd_decoy(args) -> int:
    s = load_scenario(args.scenario)
    link, rep = run_decoy(s, args.link, args.signal, args.decoy, args.f_ec, args.q,
                          args.rep_rate, args.loss_db)
    print(format_decoy(rep, link))
    if args.out:
        _write(args.out, dumps_jsonl([decoy_record(rep, link)]))
    return EXIT_OK


def cmd_scenario(args) -> int:
    sys.stdout.write(bundled_text(args.name))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="starqkd", description="Wavelength-routed star QKD network simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("plan", help="print a wavelength plan and router ports")
    sp.add_argument("--users", type=int, required=True)
    sp.add_argument("--grid", type=_grid, help="comma-separated wavelengths in nm")
    sp.set_defaults(func=cmd_plan)

    def run_opts(sp, mode=True):
        sp.add_argument("scenario", help="scenario file, or a bundled name such as beijing")
        if mode:
            sp.add_argument("--mode", choices=MODES)
        sp.add_argument("--pulses", type=_count, help="pulses per session (1e7 accepted)")
        sp.add_argument("--seed", type=int, help="64-bit master seed")
        sp.add_argument("--workers", type=int, default=1, help="sessions run in parallel")
        sp.add_argument("--out", help="write JSON-lines records here")

    sp = sub.add_parser("simulate", help="run a scenario")
    run_opts(sp)
    sp.add_argument("--transcript", help="write clicked time bins here")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("compare", help="run single and concentration modes and compare")
    run_opts(sp, mode=False)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("calibrate", help="fit per-link excess error to measured QBER")
    sp.add_argument("scenario")
    sp.add_argument("--measured", type=_measured, default={}, help="e.g. A-B=0.077,A-C=0.041")
    sp.add_argument("--out", help="write the calibrated scenario here")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("decoy", help="two-intensity decoy key rate for one link")
    sp.add_argument("scenario")
    sp.add_argument("--link")
    sp.add_argument("--signal", type=float, help="signal mean photon number")
    sp.add_argument("--decoy", type=float, help="decoy mean photon number")
    sp.add_argument("--rep-rate", type=float, help="repetition rate in Hz")
    sp.add_argument("--f-ec", type=float, help="error-correction inefficiency")
    sp.add_argument("--q", type=float, help="sifting factor")
    sp.add_argument("--loss-db", type=float, help="override the path loss")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_decoy)

    sp = sub.add_parser("scenario", help="print a bundled scenario file")
    sp.add_argument("name", choices=BUNDLED)
    sp.set_defaults(func=cmd_scenario)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    log.info("kernel backend: %s", kernel.BACKEND)
    try:
        return args.func(args)
    except (StarQKDError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:  # noqa: BLE001
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
