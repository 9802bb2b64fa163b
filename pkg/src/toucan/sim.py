"""Deterministic discrete-event CAN bus with TOUCAN nodes and an on-bus attacker.

Time advances in integer ticks and at most one frame is transmitted per tick.
Each tick:

1. scheduled payloads become pending frames on their node (``tx_request``);
2. attacker replays/injections due this tick join the contention;
3. the lowest pending identifier wins (``arbitration_win``), losers retry;
4. the attacker sees the winning frame and may rewrite it in flight;
5. the frame is encoded to wire bits and delivered to every other node
   (``delivery``), which decodes it and runs TOUCAN verification.

Two pending frames with the same identifier raise :class:`SimulationFault`.
"""

from __future__ import annotations

import json
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path

from .can_frame import CanFrame, FrameError, decode_frame, encode_frame
from .core import TOUCAN_PROFILE, SecOcProfile, payload_from_bytes, secure_receive, secure_send
from .keystore import KeyStore, parse_keystore

ATTACK_KINDS = ("eavesdrop", "modify", "replay", "inject")


class ScenarioError(ValueError):
    """The scenario description is invalid."""


class SimulationFault(RuntimeError):
    """The bus reached a state CAN forbids, e.g. an identifier collision."""


@dataclass
class EcuNode:
    name: str
    tx_ids: tuple[int, ...] = ()
    keys: KeyStore | None = None
    rx_ids: frozenset[int] | None = None
    rx_buffer: tuple[int, int, int | bytes] | None = None
    sent: int = 0
    accepted: int = 0
    rejected: int = 0
    reasons: Counter = field(default_factory=Counter)
    queue: deque = field(default_factory=deque, repr=False)

    @property
    def toucan(self) -> bool:
        return self.keys is not None

    def read(self):
        """Take the latest accepted ``(tick, identifier, payload)`` out of the buffer."""
        item, self.rx_buffer = self.rx_buffer, None
        return item


@dataclass(frozen=True)
class AttackerAction:
    """One line of an attacker script.

    ``modify`` flips ``bits`` of every frame matching ``match_id`` (and
    ``tick``, if given); at the ``data`` layer bit 0 is the first transmitted
    Data bit and the CRC is recomputed, at the ``wire`` layer bits index the
    encoded bit string. ``replay`` re-sends recorded frame ``index`` at
    ``tick``, optionally under identifier ``as_id``. ``inject`` sends
    ``frame`` at ``tick``.
    """

    kind: str
    tick: int | None = None
    match_id: int | None = None
    bits: tuple[int, ...] = ()
    layer: str = "data"
    index: int | None = None
    as_id: int | None = None
    frame: CanFrame | None = None
    limit: int | None = None

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ScenarioError(f"unknown attacker action {self.kind!r}")
        if self.kind in ("replay", "inject") and self.tick is None:
            raise ScenarioError(f"{self.kind} needs a trigger tick")
        if self.kind == "replay" and (self.index is None or self.index < 0):
            raise ScenarioError("replay needs a non-negative recorded index")
        if self.kind == "inject" and self.frame is None:
            raise ScenarioError("inject needs a frame")
        if self.kind == "modify":
            if not self.bits:
                raise ScenarioError("modify needs at least one bit position")
            if self.layer not in ("data", "wire"):
                raise ScenarioError(f"unknown modify layer {self.layer!r}")
            if any(b < 0 for b in self.bits) or (self.layer == "data" and any(b >= 64 for b in self.bits)):
                raise ScenarioError(f"modify bit positions out of range: {self.bits}")

    def matches(self, tick: int, frame: CanFrame) -> bool:
        return (self.match_id is None or frame.identifier == self.match_id) and (
            self.tick is None or self.tick == tick
        )


@dataclass(frozen=True)
class BusEvent:
    tick: int
    kind: str
    source: str
    identifier: int | None = None
    data: str | None = None
    detail: tuple = ()

    def to_dict(self) -> dict:
        d = {"tick": self.tick, "kind": self.kind, "source": self.source}
        if self.identifier is not None:
            d["id"] = f"{self.identifier:03X}"
        if self.data is not None:
            d["data"] = self.data
        d.update(self.detail)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _event(tick, kind, source, frame=None, **detail):
    ident = data = None
    if frame is not None:
        ident, data = frame.identifier, ("R" if frame.rtr else frame.data.hex().upper())
    return BusEvent(tick, kind, source, ident, data, tuple(sorted(detail.items())))


class _Attacker:
    def __init__(self, script):
        self.script = tuple(script)
        self.recorded: list[CanFrame] = []
        self.queue: deque = deque()
        self.applied: Counter = Counter()


def _flip_data_bits(frame, bits):
    value = int.from_bytes(frame.data, "big")
    width = 8 * len(frame.data)
    for b in bits:
        if b < width:
            value ^= 1 << (width - 1 - b)
    return frame.with_data(value.to_bytes(len(frame.data), "big"))


class BusSimulator:
    def __init__(self, nodes, profile: SecOcProfile = TOUCAN_PROFILE, duration: int | None = None):
        self.nodes = {n.name: n for n in nodes}
        if len(self.nodes) != len(nodes):
            raise ScenarioError("node names must be unique")
        self.profile = profile
        self.duration = duration
        self.tick = 0
        self.events: list[BusEvent] = []
        self.attacker: _Attacker | None = None
        self._schedule: dict[int, list] = {}
        self._last_scheduled = -1
        self.metrics = Counter()

    def submit(self, tick: int, node: str, identifier: int, payload: int | bytes):
        """Schedule ``payload`` for transmission by ``node`` at ``tick``."""
        if node not in self.nodes:
            raise ScenarioError(f"unknown node {node!r}")
        if identifier not in self.nodes[node].tx_ids:
            raise ScenarioError(f"node {node!r} does not transmit identifier {identifier:#x}")
        if tick < self.tick:
            raise ScenarioError(f"tick {tick} is in the past")
        toucan = self.nodes[node].toucan
        if toucan and self.nodes[node].keys.lookup(identifier) is None:
            raise ScenarioError(f"no key for identifier {identifier:#05x} sent by {node!r}")
        limit = self.profile.payload_len if toucan else 64
        try:
            if isinstance(payload, (bytes, bytearray)):
                payload = payload_from_bytes(bytes(payload), self.profile) if toucan else bytes(payload)
                if not toucan and len(payload) > 8:
                    raise ValueError(f"{len(payload)} bytes exceed the 8-byte Data field")
            elif not 0 <= payload < 1 << limit:
                raise ValueError(f"payload does not fit in {limit} bits")
        except ValueError as exc:
            raise ScenarioError(f"node {node!r} at tick {tick}: {exc}") from exc
        self._schedule.setdefault(tick, []).append((node, identifier, payload))
        self._last_scheduled = max(self._last_scheduled, tick)

    @property
    def done(self) -> bool:
        if self.duration is not None:
            return self.tick >= self.duration
        pending = any(n.queue for n in self.nodes.values())
        attacker_pending = self.attacker is not None and (
            self.attacker.queue
            or any(a.tick is not None and a.tick >= self.tick and a.kind in ("replay", "inject")
                   for a in self.attacker.script)
        )
        return self.tick > self._last_scheduled and not pending and not attacker_pending

    def step(self) -> list[BusEvent]:
        """Advance one tick and return the events it produced."""
        if self.done:
            raise SimulationFault("simulation already finished")
        tick = self.tick
        events = []

        for name, identifier, payload in self._schedule.pop(tick, ()):
            node = self.nodes[name]
            if node.toucan:
                frame = secure_send(payload, identifier, node.keys, self.profile)
            else:
                frame = CanFrame(identifier, payload if isinstance(payload, bytes) else payload.to_bytes(8, "big"))
            node.queue.append(frame)
            self.metrics["payloads_submitted"] += 1
            events.append(_event(tick, "tx_request", name, frame))

        att = self.attacker
        if att is not None:
            for action in att.script:
                if action.tick != tick or action.kind not in ("replay", "inject"):
                    continue
                if action.kind == "inject":
                    frame = action.frame
                else:
                    if action.index >= len(att.recorded):
                        raise SimulationFault(f"replay of frame {action.index} before it was recorded")
                    frame = att.recorded[action.index]
                    if action.as_id is not None:
                        frame = CanFrame(action.as_id, frame.data, frame.rtr, dlc=frame.dlc)
                kind = "splice" if action.kind == "replay" and action.as_id is not None else action.kind
                att.queue.append((kind, frame))
                events.append(_event(tick, "attacker_op", "attacker", frame, op=kind))

        contenders = [(n.queue[0].identifier, n.name) for n in self.nodes.values() if n.queue]
        if att is not None and att.queue:
            contenders.append((att.queue[0][1].identifier, "attacker"))
        if contenders:
            ids = [c[0] for c in contenders]
            dup = {i for i in ids if ids.count(i) > 1}
            if dup:
                who = sorted(c[1] for c in contenders if c[0] in dup)
                raise SimulationFault(
                    f"tick {tick}: identifier {min(dup):#05x} contended by {', '.join(who)}")
            winner_id, winner = min(contenders)
            if winner == "attacker":
                origin, frame = att.queue.popleft()
            else:
                origin, frame = "honest", self.nodes[winner].queue.popleft()
                self.nodes[winner].sent += 1
                self.metrics["frames_honest"] += 1
            self.metrics["frames_on_bus"] += 1
            events.extend(self._transmit(tick, winner, origin, frame, len(contenders)))

        self.tick += 1
        self.events.extend(events)
        return events

    def _transmit(self, tick, sender, origin, frame, n_contenders):
        events = []
        att = self.attacker
        wire_flips = []
        if att is not None:
            att.recorded.append(frame)
            for i, action in enumerate(att.script):
                if action.kind != "modify" or not action.matches(tick, frame):
                    continue
                if action.limit is not None and att.applied[i] >= action.limit:
                    continue
                att.applied[i] += 1
                if action.layer == "data":
                    frame = _flip_data_bits(frame, action.bits)
                else:
                    wire_flips.extend(action.bits)
                events.append(_event(tick, "attacker_op", "attacker", frame, op="modify",
                                     layer=action.layer, bits=list(action.bits)))
                if origin == "honest":
                    origin = "modified"

        bits = list(encode_frame(frame))
        for b in wire_flips:
            if b < len(bits):
                bits[b] ^= 1

        deliveries = []
        acked = False
        any_accept = False
        for node in self.nodes.values():
            if node.name == sender:
                continue
            try:
                received = decode_frame(bits)
            except FrameError as exc:
                node.reasons["link_error"] += 1
                self.metrics["link_errors"] += 1
                deliveries.append(_event(tick, "delivery", node.name, frame, verdict="link_error",
                                         error=type(exc).__name__))
                continue
            acked = True
            if node.rx_ids is not None and received.identifier not in node.rx_ids:
                continue
            if node.toucan:
                verdict = secure_receive(received, node.keys, self.profile)
                ok, payload, reason = verdict.accepted, verdict.payload, verdict.reason
            else:
                ok, payload, reason = True, received.data, None
            if ok:
                node.accepted += 1
                node.rx_buffer = (tick, received.identifier, payload)
                any_accept = True
                shown = payload.hex() if isinstance(payload, bytes) else f"{payload:0{(self.profile.payload_len + 3) // 4}x}"
                deliveries.append(_event(tick, "delivery", node.name, received, verdict="accept", payload=shown))
            else:
                node.rejected += 1
                node.reasons[reason] += 1
                deliveries.append(_event(tick, "delivery", node.name, received, verdict="reject", reason=reason))

        if origin != "honest":
            self.metrics[f"{origin}_frames"] += 1
            if any_accept:
                self.metrics[f"{origin}_accepted"] += 1
        events.insert(0, _event(tick, "arbitration_win", sender, frame,
                                contenders=n_contenders, ack=acked))
        return events + deliveries

    def run(self) -> dict:
        while not self.done:
            self.step()
        return self.summary()

    def summary(self) -> dict:
        out = {
            "ticks": self.tick,
            "payloads_submitted": self.metrics["payloads_submitted"],
            "frames_on_bus": self.metrics["frames_on_bus"],
            "frames_honest": self.metrics["frames_honest"],
            "link_errors": self.metrics["link_errors"],
        }
        for origin in ("modified", "replay", "splice", "inject"):
            out[f"{origin}_frames"] = self.metrics[f"{origin}_frames"]
            out[f"{origin}_accepted"] = self.metrics[f"{origin}_accepted"]
        out["accepted"] = sum(n.accepted for n in self.nodes.values())
        out["rejected"] = sum(n.rejected for n in self.nodes.values())
        for node in self.nodes.values():
            out[f"node.{node.name}.sent"] = node.sent
            out[f"node.{node.name}.accepted"] = node.accepted
            out[f"node.{node.name}.rejected"] = node.rejected
            for reason in sorted(node.reasons):
                out[f"node.{node.name}.{reason}"] = node.reasons[reason]
        if self.attacker is not None:
            out["attacker.recorded"] = len(self.attacker.recorded)
        return out

    def event_log(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)


def attach_attacker(sim: BusSimulator, script) -> BusSimulator:
    """Put an interposing attacker on the bus; it sees every frame before delivery."""
    actions = []
    for a in script:
        if not isinstance(a, AttackerAction):
            raise ScenarioError(f"malformed attacker action {a!r}")
        actions.append(a)
    sim.attacker = _Attacker(actions)
    return sim


def step(sim: BusSimulator) -> list[BusEvent]:
    return sim.step()


# --- scenario files -------------------------------------------------------


def _int(value, what):
    if isinstance(value, bool):
        raise ScenarioError(f"{what}: expected an integer, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        try:
            return int(value, 0)
        except ValueError:
            pass
    raise ScenarioError(f"{what}: expected an integer, got {value!r}")


@dataclass
class Scenario:
    """Nodes, schedule and attacker script for one simulation run.

    Scenario files are JSON::

        {
          "seed": 7,
          "duration": 20,                       # optional; default: run until idle
          "profile": {"name": "chaskey", "mac_tx_len": 24, "bind_id": false},
          "keys": ["100-1FF <mac hex> <enc hex>"],   # or "keys_file": "path"
          "nodes": [{"name": "brake", "tx_ids": ["0x100"], "toucan": true,
                     "rx_ids": ["0x200"]}],     # rx_ids optional: default all
          "schedule": [{"tick": 0, "node": "brake", "id": "0x100",
                        "payload": "0102030405"},   # hex, or "random"
                       {"node": "brake", "id": "0x100", "start": 1,
                        "every": 2, "count": 10, "payload": "random"}],
          "attacker": [{"kind": "eavesdrop"},
                       {"kind": "modify", "match_id": "0x100", "bits": [3]},
                       {"kind": "replay", "index": 0, "tick": 5, "as_id": "0x101"},
                       {"kind": "inject", "tick": 2, "id": "0x300", "data": "00"}]
        }

    Random payloads are drawn from ``random.Random(seed)`` in file order.
    """

    nodes: list[dict]
    schedule: list[dict] = field(default_factory=list)
    attacker: list[dict] | None = None
    keys: KeyStore = field(default_factory=KeyStore)
    profile: SecOcProfile = TOUCAN_PROFILE
    duration: int | None = None
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> Scenario:
        if not isinstance(d, dict):
            raise ScenarioError("scenario must be a JSON object")
        unknown = set(d) - {"seed", "duration", "profile", "keys", "keys_file", "nodes", "schedule", "attacker", "description"}
        if unknown:
            raise ScenarioError(f"unknown scenario fields: {sorted(unknown)}")
        if "keys_file" in d:
            path = Path(d["keys_file"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            try:
                keys = parse_keystore(path.read_text())
            except OSError as exc:
                raise ScenarioError(f"cannot read keys file: {exc}") from exc
        else:
            keys = parse_keystore("\n".join(d.get("keys", [])))
        prof = dict(d.get("profile", {}))
        try:
            profile = SecOcProfile.named(prof.pop("name", "chaskey"), **prof)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"profile: {exc}") from exc
        nodes = d.get("nodes")
        if not isinstance(nodes, list) or not nodes:
            raise ScenarioError("scenario needs a non-empty 'nodes' list")
        duration = d.get("duration")
        return cls(
            nodes=nodes,
            schedule=list(d.get("schedule", [])),
            attacker=d.get("attacker"),
            keys=keys,
            profile=profile,
            duration=None if duration is None else _int(duration, "duration"),
            seed=_int(d.get("seed", 0), "seed"),
        )

    def build(self, seed: int | None = None) -> BusSimulator:
        rng = random.Random(self.seed if seed is None else seed)
        nodes = []
        owners = {}
        for i, cfg in enumerate(self.nodes):
            try:
                name = cfg["name"]
            except (KeyError, TypeError):
                raise ScenarioError(f"node {i} needs a name") from None
            tx_ids = tuple(_int(x, f"node {name} tx_ids") for x in cfg.get("tx_ids", []))
            for ident in tx_ids:
                if ident in owners:
                    raise ScenarioError(f"identifier {ident:#x} transmitted by both {owners[ident]} and {name}")
                owners[ident] = name
            rx = cfg.get("rx_ids")
            nodes.append(EcuNode(
                name=name,
                tx_ids=tx_ids,
                keys=self.keys if cfg.get("toucan", True) else None,
                rx_ids=None if rx is None else frozenset(_int(x, f"node {name} rx_ids") for x in rx),
            ))
        sim = BusSimulator(nodes, self.profile, self.duration)

        for i, entry in enumerate(self.schedule):
            where = f"schedule[{i}]"
            try:
                node, ident = entry["node"], _int(entry["id"], f"{where}.id")
            except (KeyError, TypeError):
                raise ScenarioError(f"{where} needs 'node' and 'id'") from None
            if "tick" in entry:
                ticks = [_int(entry["tick"], f"{where}.tick")]
            else:
                start = _int(entry.get("start", 0), f"{where}.start")
                every = _int(entry.get("every", 1), f"{where}.every")
                count = _int(entry.get("count", 1), f"{where}.count")
                if every < 1 or count < 0:
                    raise ScenarioError(f"{where}: 'every' must be >= 1 and 'count' >= 0")
                ticks = [start + k * every for k in range(count)]
            for t in ticks:
                sim.submit(t, node, ident, self._payload(entry.get("payload", "random"), rng, where))

        if self.attacker is not None:
            attach_attacker(sim, [self._action(a, i) for i, a in enumerate(self.attacker)])
        return sim

    def _payload(self, value, rng, where):
        if value == "random":
            return rng.getrandbits(self.profile.payload_len)
        try:
            return bytes.fromhex(value)
        except (TypeError, ValueError):
            raise ScenarioError(f"{where}.payload: expected hex or 'random', got {value!r}") from None

    def _action(self, a, i):
        where = f"attacker[{i}]"
        if not isinstance(a, dict) or "kind" not in a:
            raise ScenarioError(f"{where} needs a 'kind'")
        opt = lambda k: None if a.get(k) is None else _int(a[k], f"{where}.{k}")  # noqa: E731
        frame = None
        if a["kind"] == "inject":
            try:
                frame = CanFrame(_int(a.get("id"), f"{where}.id"), bytes.fromhex(a.get("data", "")))
            except (ValueError, TypeError) as exc:
                raise ScenarioError(f"{where}: {exc}") from exc
        try:
            return AttackerAction(
                kind=a["kind"],
                tick=opt("tick"),
                match_id=opt("match_id"),
                bits=tuple(_int(b, f"{where}.bits") for b in a.get("bits", [])),
                layer=a.get("layer", "data"),
                index=opt("index"),
                as_id=opt("as_id"),
                frame=frame,
                limit=opt("limit"),
            )
        except ScenarioError as exc:
            raise ScenarioError(f"{where}: {exc}") from exc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    return Scenario.from_dict(d, path.parent)


def run_scenario(scenario: Scenario, seed: int | None = None) -> tuple[dict, list[BusEvent]]:
    sim = scenario.build(seed)
    metrics = sim.run()
    return metrics, sim.events


def metrics_csv(metrics: dict) -> str:
    return "metric,value\n" + "".join(f"{k},{v}\n" for k, v in metrics.items())
