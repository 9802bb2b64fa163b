"""``toucan`` command line: bench, run, analyze, wrap, vectors.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 simulation fault.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from . import bench as benchmod
from .candump import LogParseError, format_line, parse_log
from .can_frame import CanFrame
from .core import SecOcProfile, payload_from_bytes, secure_receive, secure_send
from .keystore import KeyRecord, KeyStoreError, load_keystore
from .sim import ScenarioError, SimulationFault, load_scenario, metrics_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FAULT = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _hex_int(text):
    try:
        return int(text, 16)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid hex value {text!r}") from None


def _profile(args) -> SecOcProfile:
    return SecOcProfile.named(args.profile, mac_tx_len=args.tag_bits)


def _add_profile_flags(p):
    p.add_argument("--profile", choices=("chaskey", "cmac"), default="chaskey",
                   help="MAC algorithm slot (default: chaskey)")
    p.add_argument("--tag-bits", type=int, default=24, choices=(8, 12, 16, 24, 32),
                   help="truncated MAC length in bits (default: 24)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="toucan", description="Secured CAN frames: tools, simulator, benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("bench", help="time Chaskey and AES-CTR on one 64-bit Data field")
    p.add_argument("--iterations", type=_positive_int, default=100_000)
    p.add_argument("--rounds", type=int, choices=(8, 12), default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.add_argument("--output", type=Path, help="also write the CSV report here")
    p.add_argument("--no-pin", action="store_true", help="do not pin to one CPU")

    p = sub.add_parser("run", help="run a bus scenario")
    p.add_argument("scenario", type=Path)
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", type=Path, help="directory for events.jsonl and metrics.csv")
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("analyze", help="verify frames of a candump log")
    p.add_argument("log", type=Path)
    p.add_argument("--keys", type=Path, required=True)
    p.add_argument("--format", choices=("text", "json"), default="text")
    _add_profile_flags(p)

    p = sub.add_parser("wrap", help="secure one payload and print a candump line")
    p.add_argument("payload", help="payload bytes as hex (at most 5 bytes by default)")
    p.add_argument("--id", type=_hex_int, required=True, dest="identifier", help="CAN identifier (hex)")
    p.add_argument("--keys", type=Path, required=True)
    p.add_argument("--timestamp", type=float, default=0.0)
    p.add_argument("--channel", default="can0")
    _add_profile_flags(p)

    p = sub.add_parser("vectors", help="generate or verify golden vectors")
    vsub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    v = vsub.add_parser("make")
    v.add_argument("--count", type=_positive_int, default=16)
    v.add_argument("--seed", type=int, default=0)
    v = vsub.add_parser("verify")
    v.add_argument("file", type=Path)
    return parser


def cmd_bench(args, out):
    if not args.no_pin:
        benchmod.pin_to_one_cpu()
    reports = benchmod.run_bench(args.iterations, args.rounds, args.seed)
    if args.format == "csv":
        out.write(benchmod.format_csv(reports))
    elif args.format == "json":
        out.write(json.dumps({"results": [r.as_dict() for r in reports],
                              "board_reference": {"label": benchmod.BOARD_LABEL,
                                                  "mean_us": dict(benchmod.BOARD_REFERENCE)}},
                             indent=2) + "\n")
    else:
        out.write(benchmod.format_table(reports) + "\n")
    if args.output:
        args.output.write_text(benchmod.format_csv(reports))
    return EXIT_OK


def cmd_run(args, out):
    scenario = load_scenario(args.scenario)
    sim = scenario.build(args.seed)
    try:
        metrics = sim.run()
    finally:
        if args.out:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / "events.jsonl").write_text(sim.event_log())
    if args.out:
        (args.out / "metrics.csv").write_text(metrics_csv(metrics))
    if args.format == "json":
        out.write(json.dumps(metrics, indent=2) + "\n")
    else:
        out.write(metrics_csv(metrics))
    return EXIT_OK


def analyze_records(records, keys, profile):
    """Yield ``(record, verdict)`` for every frame of a parsed log."""
    for rec in records:
        yield rec, secure_receive(rec.frame, keys, profile)


def cmd_analyze(args, out):
    keys = load_keystore(args.keys)
    profile = _profile(args)
    with open(args.log) as fh:
        records = parse_log(fh)
    width = (profile.payload_len + 3) // 4
    counts = {"frames": 0, "accepted": 0, "rejected": 0}
    reasons = {}
    rows = []
    for rec, verdict in analyze_records(records, keys, profile):
        counts["frames"] += 1
        if verdict.accepted:
            counts["accepted"] += 1
            result = f"accept({verdict.payload:0{width}x})"
        else:
            counts["rejected"] += 1
            reasons[verdict.reason] = reasons.get(verdict.reason, 0) + 1
            result = f"reject({verdict.reason})"
        rows.append((rec, verdict, result))
    if args.format == "json":
        out.write(json.dumps({
            "frames": [{"line": rec.lineno, "id": f"{rec.frame.identifier:03X}",
                        "accepted": v.accepted,
                        "payload": None if v.payload is None else f"{v.payload:0{width}x}",
                        "reason": v.reason} for rec, v, _ in rows],
            "summary": {**counts, "reasons": reasons},
        }, indent=2) + "\n")
    else:
        for rec, _, result in rows:
            out.write(f"{rec.lineno} {rec.frame} {result}\n")
        summary = " ".join(f"{k}={v}" for k, v in counts.items())
        summary += "".join(f" {k}={v}" for k, v in sorted(reasons.items()))
        out.write(f"# {summary}\n")
    return EXIT_OK


def cmd_wrap(args, out):
    keys = load_keystore(args.keys)
    profile = _profile(args)
    try:
        data = bytes.fromhex(args.payload)
    except ValueError:
        raise ValueError(f"payload is not hex: {args.payload!r}") from None
    payload = payload_from_bytes(data, profile)
    if keys.lookup(args.identifier) is None:
        raise ValueError(f"no key for identifier {args.identifier:#05x}")
    frame = secure_send(payload, args.identifier, keys, profile)
    out.write(format_line(frame, args.timestamp, args.channel) + "\n")
    return EXIT_OK


def parse_vector_line(line: str):
    """``keyhex,idhex,payloadhex,wirehex`` -> (record, identifier, payload, wire)."""
    keyhex, idhex, payloadhex, wirehex = (part.strip() for part in line.split(","))
    key = bytes.fromhex(keyhex)
    if len(key) != 32:
        raise ValueError("keyhex must hold the 16-byte MAC key followed by the 16-byte encryption key")
    identifier = int(idhex, 16)
    record = KeyRecord(identifier, identifier, key[:16], key[16:])
    return record, identifier, int(payloadhex, 16), bytes.fromhex(wirehex)


def make_vector_line(record: KeyRecord, identifier: int, payload: int) -> str:
    frame = secure_send(payload, identifier, record)
    return f"{(record.mac_key + record.enc_key).hex()},{identifier:03x},{payload:010x},{frame.data.hex()}"


def cmd_vectors(args, out):
    if args.action == "make":
        rng = random.Random(args.seed)
        for _ in range(args.count):
            ident = rng.randrange(0x800)
            rec = KeyRecord(ident, ident, rng.randbytes(16), rng.randbytes(16))
            out.write(make_vector_line(rec, ident, rng.getrandbits(40)) + "\n")
        return EXIT_OK
    failures = total = 0
    for lineno, line in enumerate(args.file.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        total += 1
        try:
            record, ident, payload, wire = parse_vector_line(line)
        except ValueError as exc:
            raise ValueError(f"{args.file}:{lineno}: {exc}") from exc
        got = secure_send(payload, ident, record).data
        back = secure_receive(CanFrame(ident, wire), record)
        if got != wire or not back.accepted or back.payload != payload:
            failures += 1
            out.write(f"FAIL line {lineno}: expected {wire.hex()}, got {got.hex()}, receive {back}\n")
    out.write(f"{total - failures}/{total} vectors ok\n")
    return EXIT_OK if failures == 0 else EXIT_DATA


COMMANDS = {"bench": cmd_bench, "run": cmd_run, "analyze": cmd_analyze, "wrap": cmd_wrap, "vectors": cmd_vectors}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args, out)
    except SimulationFault as exc:
        print(f"toucan: simulation fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except (ScenarioError, KeyStoreError, LogParseError, ValueError, OSError) as exc:
        print(f"toucan: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
