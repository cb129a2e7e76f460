"""Command line front end.

Three subcommands cover the whole pipeline: `validate` checks a use-case
file, `run` emulates it and writes the capture artifacts, and `features`
turns an existing pcap into the labeled flow table. Exit codes: 0 success,
1 invalid input or failed run, 2 usage errors.
"""

from __future__ import annotations

import argparse
import ipaddress
import logging
import sys
from pathlib import Path

from . import capture, report
from .engine import MODE_DRYRUN, MODE_LIVE, EngineError, RunConfig, run_use_case
from .usecase import UseCaseError, parse_use_case, validate

log = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iotfleet",
        description="Emulate an IoT device fleet and produce labeled traffic datasets.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="check a use-case file, list violations")
    p_val.add_argument("usecase", type=Path, help="use-case XML file")

    p_run = sub.add_parser("run", help="run a use case and write capture artifacts")
    p_run.add_argument("usecase", type=Path, help="use-case XML file")
    p_run.add_argument("--mode", choices=(MODE_DRYRUN, MODE_LIVE), default=MODE_DRYRUN,
                       help="dryrun simulates, live opens real sockets (default dryrun)")
    p_run.add_argument("--duration", type=float, default=1800.0, metavar="S",
                       help="virtual run length in seconds (default 1800)")
    p_run.add_argument("--attack-delay", type=float, default=600.0, metavar="S",
                       help="attackers stay quiet this long (default 600)")
    p_run.add_argument("--time-scale", type=float, default=1.0, metavar="X",
                       help="wall seconds per virtual second (default 1.0)")
    p_run.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
    p_run.add_argument("--pcap", type=Path, metavar="FILE", help="write packets here")
    p_run.add_argument("--flows", type=Path, metavar="FILE",
                       help="write the labeled flow CSV here")
    p_run.add_argument("--idle-timeout", type=float, default=capture.DEFAULT_IDLE_TIMEOUT_S,
                       metavar="S", help="flow split threshold (default 120)")
    p_run.add_argument("--figures", type=Path, metavar="DIR",
                       help="render summary figures into this directory")

    p_feat = sub.add_parser("features", help="extract labeled flows from a pcap")
    p_feat.add_argument("pcap", type=Path, help="capture produced by run --pcap")
    p_feat.add_argument("--flows", type=Path, required=True, metavar="FILE",
                        help="write the labeled flow CSV here")
    p_feat.add_argument("--idle-timeout", type=float, default=capture.DEFAULT_IDLE_TIMEOUT_S,
                        metavar="S", help="flow split threshold (default 120)")
    p_feat.add_argument("--attack-cidr", default="192.168.2.0/24", metavar="CIDR",
                        help="flows touching this network are labeled attack")
    p_feat.add_argument("--figures", type=Path, metavar="DIR",
                        help="render summary figures into this directory")
    return parser


def _load_use_case(path: Path):
    try:
        text = path.read_text()
    except OSError as e:
        print(f"error: cannot read {path}: {e}", file=sys.stderr)
        raise SystemExit(2) from None
    return parse_use_case(text)


def _cmd_validate(args) -> int:
    try:
        uc = _load_use_case(args.usecase)
    except UseCaseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    problems = validate(uc)
    if problems:
        for p in problems:
            print(str(p))
        print(f"{len(problems)} violation(s) in '{uc.name}'")
        return 1
    print(f"ok: use case '{uc.name}' with {len(uc.devices)} device spec(s)")
    return 0


def _cmd_run(args) -> int:
    try:
        uc = _load_use_case(args.usecase)
        cfg = RunConfig(
            mode=args.mode,
            duration_s=args.duration,
            attack_delay_s=args.attack_delay,
            time_scale=args.time_scale,
            seed=args.seed,
        )
        result = run_use_case(uc, cfg)
    except (UseCaseError, EngineError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    rep = result.report
    print(f"use-case: {rep.use_case}")
    print(f"mode: {rep.mode}")
    print(f"devices: {rep.device_count} ({rep.attacker_count} attackers)")
    print(f"records: {rep.total_records}")
    print(f"violations: {len(rep.violations)}")
    print(f"faults: {len(rep.faults)}")
    print(f"leaked-bytes: {rep.leak_bytes}")
    print(f"trace-digest: {rep.schedule_trace_digest}")
    print(f"wall-seconds: {rep.wall_seconds:.2f}")
    for err in rep.errors:
        print(f"device-error: {err}")
    if args.pcap:
        n = capture.write_pcap(args.pcap, result.records)
        print(f"pcap: {args.pcap} ({n} packets)")
    flows = None
    if args.flows or args.figures:
        flows = capture.assemble_flows(result.records, args.idle_timeout)
    if args.flows:
        n = capture.write_dataset_csv(args.flows, flows, uc.attack_cidr)
        print(f"flows: {args.flows} ({n} rows)")
    if args.figures:
        for path in report.render_figures(result.records, flows, uc.attack_cidr, args.figures):
            print(f"figure: {path}")
    return 0


def _cmd_features(args) -> int:
    try:
        attack_cidr = ipaddress.IPv4Network(args.attack_cidr)
    except ValueError as e:
        print(f"error: bad --attack-cidr: {e}", file=sys.stderr)
        return 2
    try:
        records = capture.read_pcap(args.pcap)
    except (OSError, capture.CaptureError) as e:
        print(f"error: cannot read {args.pcap}: {e}", file=sys.stderr)
        return 1
    flows = capture.assemble_flows(records, args.idle_timeout)
    n = capture.write_dataset_csv(args.flows, flows, attack_cidr)
    print(f"records: {len(records)}")
    print(f"flows: {args.flows} ({n} rows)")
    if args.figures:
        for path in report.render_figures(records, flows, attack_cidr, args.figures):
            print(f"figure: {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler = {"validate": _cmd_validate, "run": _cmd_run, "features": _cmd_features}
    return handler[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
