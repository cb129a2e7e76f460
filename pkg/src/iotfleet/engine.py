"""Traffic engine: runs a use case against in-process victim stubs.

Two modes share one schedule. DRYRUN dispatches a virtual-clock event queue
in a single thread, so the same seed always yields byte-identical records no
matter how the wall clock behaves. LIVE gives every device a thread and a
real socket bound to its virtual source address, with the stubs listening on
real ports when the endpoint is a loopback address.

The wall clock never drives scheduling; it only paces dispatch. One virtual
second costs time_scale wall seconds, and the engine sleeps only when it is
ahead, so a slow host degrades pacing, never the schedule.
"""

from __future__ import annotations

import hashlib
import heapq
import ipaddress
import itertools
import logging
import socket
import struct
import threading
import time
from dataclasses import dataclass

from . import coap, mqtt
from .attacks import (
    CRAFT_REPEAT_S,
    DEFAULT_COAP_RATE,
    DEFAULT_FLOOD_RATE,
    LEAK_BYTES_PER_MESSAGE,
    AttackKind,
    AttackTrace,
    mqtt_packet_crafting,
    mqtt_publish_flood,
    coap_invalid_option,
    coap_null_uripath,
)
from .capture import PacketRecord
from .profiles import (
    FireRequest,
    SeededRng,
    TimeKind,
    format_value,
    next_fire_ms,
    next_value,
    stream_id_for,
)
from .usecase import DeviceInstance, Protocol, Role, UseCase, expand_devices, validate

log = logging.getLogger(__name__)

MODE_DRYRUN = "dryrun"
MODE_LIVE = "live"

EPHEMERAL_BASE = 49152
RESPONSE_DELAY_US = 500
CONNECT_STAGGER_US = 1000
SUBSCRIBE_DELAY_US = 1000

# Socket read timeout in live mode; short enough to notice the stop flag.
_LIVE_RECV_TIMEOUT_S = 0.25
DEFAULT_KEEPALIVE_S = 60


class EngineError(RuntimeError):
    """Run could not start or finish."""


@dataclass(frozen=True)
class ProtocolViolation:
    """Broker-side rule break, the observable core of the MQTT attacks."""

    kind: str
    client: str
    detail: str = ""


@dataclass(frozen=True)
class FaultEvent:
    """Server-side crash stand-in; the stub records it and keeps running."""

    kind: str
    message_id: int
    detail: str = ""


# --- MQTT broker stub --------------------------------------------------------

_TCP_OPEN = "tcp-open"
_CONNECTED = "connected"


def topic_matches(filter_: str, topic: str) -> bool:
    """MQTT filter semantics: '+' one level, '#' the remainder."""
    flevels = filter_.split("/")
    tlevels = topic.split("/")
    for i, f in enumerate(flevels):
        if f == "#":
            return True
        if i >= len(tlevels):
            return False
        if f != "+" and f != tlevels[i]:
            return False
    return len(flevels) == len(tlevels)


class BrokerStub:
    """Session-tracking MQTT endpoint.

    Invariant: subscriptions only exist for CONNECTED sessions. PUBLISH or
    SUBSCRIBE on a connection that never sent CONNECT is the exact state
    confusion the crafted-packet attack exploits, so it is recorded as a
    ProtocolViolation and the frame is dropped.
    """

    def __init__(self) -> None:
        self.sessions: dict[str, str] = {}
        self.subscriptions: dict[str, set[str]] = {}
        self.violations: list[ProtocolViolation] = []
        self._buffers: dict[str, bytearray] = {}

    def open(self, client: str) -> None:
        self.sessions.setdefault(client, _TCP_OPEN)
        self._buffers.setdefault(client, bytearray())

    def close(self, client: str) -> None:
        self.sessions.pop(client, None)
        self.subscriptions.pop(client, None)
        self._buffers.pop(client, None)

    def handle(self, client: str, data: bytes) -> tuple[list[bytes], list[tuple[str, bytes]]]:
        """Feed raw bytes from one connection.

        Returns (responses to this client, deliveries as (subscriber, frame)).
        Partial frames wait in the connection buffer for the next call.
        """
        self.open(client)
        buf = self._buffers[client]
        buf.extend(data)
        responses: list[bytes] = []
        deliveries: list[tuple[str, bytes]] = []
        while buf:
            try:
                frame, used = mqtt.decode_frame(bytes(buf))
            except mqtt.MqttNeedMoreData:
                break
            raw = bytes(buf[:used])
            del buf[:used]
            responses.extend(self._dispatch(client, frame, raw, deliveries))
            if client not in self._buffers:
                break
            buf = self._buffers[client]
        return responses, deliveries

    def _dispatch(self, client: str, frame: mqtt.MqttFrame, raw: bytes,
                  deliveries: list[tuple[str, bytes]]) -> list[bytes]:
        kind = frame.kind
        if kind is mqtt.FrameKind.CONNECT:
            self.sessions[client] = _CONNECTED
            return [mqtt.encode_frame(mqtt.MqttFrame.connack(0))]
        if kind is mqtt.FrameKind.PUBLISH:
            if self.sessions.get(client) != _CONNECTED:
                self.violations.append(ProtocolViolation(
                    "publish-before-connect", client, f"topic {frame.topic!r}"))
                return []
            for sub, filters in self.subscriptions.items():
                if any(topic_matches(f, frame.topic) for f in filters):
                    deliveries.append((sub, raw))
            return []
        if kind is mqtt.FrameKind.SUBSCRIBE:
            if self.sessions.get(client) != _CONNECTED:
                self.violations.append(ProtocolViolation(
                    "subscribe-before-connect", client, f"filter {frame.topic!r}"))
                return []
            self.subscriptions.setdefault(client, set()).add(frame.topic)
            return [mqtt.encode_frame(mqtt.MqttFrame.suback(frame.packet_id or 0))]
        if kind is mqtt.FrameKind.PINGREQ:
            return [mqtt.encode_frame(mqtt.MqttFrame(kind=mqtt.FrameKind.PINGRESP))]
        if kind is mqtt.FrameKind.DISCONNECT:
            self.close(client)
            return []
        return []


# --- CoAP server stub --------------------------------------------------------

class CoapServerStub:
    """Resource store with the two modeled defects.

    An unrecognized critical option should produce a clean 4.02; the modeled
    server also forgets to free the request copy, wasting 24 bytes each time
    (the leak counter tracks it). A present-but-empty Uri-Path skips the
    length check and dereferences nothing: recorded as a FaultEvent with no
    response at all.
    """

    def __init__(self) -> None:
        self.store: dict[str, bytes] = {}
        self.faults: list[FaultEvent] = []
        self.leak_bytes = 0

    def handle(self, message: coap.CoapMessage) -> coap.CoapMessage | None:
        if message.malformed:
            self.leak_bytes += LEAK_BYTES_PER_MESSAGE
            return self._reply(message, coap.CODE_BAD_OPTION)
        if any(o.number == coap.URI_PATH and o.value == b"" for o in message.options):
            self.faults.append(FaultEvent(
                "segfault-simulated", message.message_id, "zero-length Uri-Path"))
            return None
        path = message.uri_path()
        code = message.code
        if code == coap.Method.GET.value:
            body = self.store.get(path)
            if body is None:
                return self._reply(message, coap.CODE_NOT_FOUND)
            return self._reply(message, coap.CODE_CONTENT, body)
        if code == coap.Method.PUT.value:
            self.store[path] = message.payload
            return self._reply(message, coap.CODE_CHANGED)
        if code == coap.Method.POST.value:
            self.store[path] = message.payload
            return self._reply(message, coap.CODE_CREATED)
        if code == coap.Method.DELETE.value:
            self.store.pop(path, None)
            return self._reply(message, coap.CODE_DELETED)
        return self._reply(message, coap.response_code(4, 5))

    @staticmethod
    def _reply(req: coap.CoapMessage, code: int, payload: bytes = b"") -> coap.CoapMessage:
        rtype = coap.MsgType.ACK if req.msg_type is coap.MsgType.CON else coap.MsgType.NON
        return coap.CoapMessage(
            msg_type=rtype, code=code, message_id=req.message_id,
            token=req.token, payload=payload)


# --- Run configuration and report -------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    mode: str = MODE_DRYRUN
    duration_s: float = 1800.0
    attack_delay_s: float = 600.0
    time_scale: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in (MODE_DRYRUN, MODE_LIVE):
            raise EngineError(f"mode must be dryrun or live, got {self.mode!r}")
        if self.duration_s <= 0:
            raise EngineError(f"duration must be positive, got {self.duration_s}")
        if not 0 <= self.attack_delay_s <= self.duration_s:
            raise EngineError("attack delay must lie within the run duration")
        if self.time_scale < 0:
            raise EngineError(f"time scale must be >= 0, got {self.time_scale}")
        if self.mode == MODE_LIVE and self.time_scale == 0:
            raise EngineError("live mode needs a positive time scale")


@dataclass(frozen=True)
class RunReport:
    use_case: str
    mode: str
    seed: int
    duration_s: float
    attack_delay_s: float
    time_scale: float
    device_count: int
    attacker_count: int
    total_records: int
    violations: tuple[ProtocolViolation, ...]
    faults: tuple[FaultEvent, ...]
    leak_bytes: int
    errors: tuple[str, ...]
    schedule_trace_digest: str
    wall_seconds: float


@dataclass
class RunResult:
    records: list[PacketRecord]
    report: RunReport


@dataclass(frozen=True)
class ScheduledEvent:
    """External trigger for event-driven time profiles."""

    time_s: float
    fire: FireRequest


def run_use_case(uc: UseCase, cfg: RunConfig,
                 events: tuple[ScheduledEvent, ...] = ()) -> RunResult:
    problems = validate(uc)
    if problems:
        listing = "; ".join(str(p) for p in problems)
        raise EngineError(f"use case invalid: {listing}")
    instances = expand_devices(uc)
    if cfg.mode == MODE_LIVE:
        return _LiveRun(uc, cfg, instances, tuple(events)).run()
    return _DryRun(uc, cfg, instances, tuple(events)).run()


def _device_rng(seed: int, inst: DeviceInstance) -> SeededRng:
    return SeededRng(seed, stream_id_for(inst.spec_name, inst.index))


def _trace_digest(records) -> str:
    digest = hashlib.blake2b(digest_size=8)
    for rec in records:
        digest.update(struct.pack("<q", rec.ts_us))
        digest.update(
            f"{rec.src_ip}:{rec.src_port}>{rec.dst_ip}:{rec.dst_port}/{rec.l4}".encode())
        digest.update(rec.payload)
    return digest.hexdigest()


def _flood_trace(inst: DeviceInstance, cfg: RunConfig, rng: SeededRng) -> AttackTrace:
    attack = inst.spec.attack
    rate = attack.rate_per_s or DEFAULT_FLOOD_RATE
    window_s = cfg.duration_s - cfg.attack_delay_s
    if attack.burst_count is not None:
        window_s = min(window_s, attack.burst_count / rate)
    return mqtt_publish_flood(inst.spec.topic_or_path, inst.spec.data_profile,
                              rate, window_s, client_id=inst.name, rng=rng)


def _coap_attack_frames(inst: DeviceInstance, cfg: RunConfig):
    """(offset_us, wire bytes) per shot, offsets relative to attack start;
    message ids advance with the shot index."""
    attack = inst.spec.attack
    rate = attack.rate_per_s or DEFAULT_COAP_RATE
    spacing = round(1_000_000 / rate)
    count = int(rate * (cfg.duration_s - cfg.attack_delay_s) + 1e-9)
    if attack.burst_count is not None:
        count = min(count, attack.burst_count)
    build = (coap_null_uripath if attack.kind is AttackKind.COAP_NULL_URIPATH
             else coap_invalid_option)
    for k in range(count):
        yield k * spacing, build(message_id=(k + 1) & 0xFFFF).frames[0].data


class _Conn:
    """One virtual TCP connection to the broker."""

    __slots__ = ("inst", "port", "opened")

    def __init__(self, inst: DeviceInstance, port: int):
        self.inst = inst
        self.port = port
        self.opened = False

    @property
    def addr(self) -> str:
        return f"{self.inst.source_ip}:{self.port}"


# --- DRYRUN ------------------------------------------------------------------

class _DryRun:
    """Single-threaded virtual-clock dispatch.

    Request records are emitted while dispatching; stub responses come back
    through the heap as delayed emit events, so the record stream stays
    globally time-ordered without a sort.
    """

    def __init__(self, uc, cfg, instances, events):
        self.uc = uc
        self.cfg = cfg
        self.instances = instances
        self.external = events
        self.broker = BrokerStub()
        self.coap_server = CoapServerStub()
        self.records: list[PacketRecord] = []
        self.heap: list = []
        self.seq = itertools.count()
        self.duration_us = round(cfg.duration_s * 1_000_000)
        self.attack_at_us = round(cfg.attack_delay_s * 1_000_000)
        self.rngs = {i.name: _device_rng(cfg.seed, i) for i in instances}
        self.next_ports = {i.name: EPHEMERAL_BASE for i in instances}
        self.mids = {i.name: itertools.count(1) for i in instances}
        self.dev_conn: dict[str, _Conn] = {}
        self.dev_port: dict[str, int] = {}
        self.sub_endpoint: dict[str, tuple[str, int]] = {}

    def push(self, t_us: int, ordinal: int, kind: str, data) -> None:
        if 0 <= t_us < self.duration_us:
            heapq.heappush(self.heap, (t_us, ordinal, next(self.seq), kind, data))

    def alloc_port(self, inst) -> int:
        port = self.next_ports[inst.name]
        self.next_ports[inst.name] = EPHEMERAL_BASE + (port - EPHEMERAL_BASE + 1) % 16384
        return port

    def emit(self, t_us: int, src_ip: str, src_port: int, dst_ip: str,
             dst_port: int, l4: str, payload: bytes) -> None:
        self.records.append(
            PacketRecord(t_us, src_ip, src_port, dst_ip, dst_port, l4, payload))

    def run(self) -> RunResult:
        start = time.perf_counter()
        self._schedule_all()
        scale = self.cfg.time_scale
        while self.heap:
            t_us, ordinal, _, kind, data = heapq.heappop(self.heap)
            if scale > 0:
                ahead = t_us / 1_000_000 * scale - (time.perf_counter() - start)
                if ahead > 0.0005:
                    time.sleep(ahead)
            self._dispatch(t_us, ordinal, kind, data)
        wall = time.perf_counter() - start
        report = RunReport(
            use_case=self.uc.name,
            mode=MODE_DRYRUN,
            seed=self.cfg.seed,
            duration_s=self.cfg.duration_s,
            attack_delay_s=self.cfg.attack_delay_s,
            time_scale=scale,
            device_count=len(self.instances),
            attacker_count=sum(1 for i in self.instances if i.role is Role.ATTACKER),
            total_records=len(self.records),
            violations=tuple(self.broker.violations),
            faults=tuple(self.coap_server.faults),
            leak_bytes=self.coap_server.leak_bytes,
            errors=(),
            schedule_trace_digest=_trace_digest(self.records),
            wall_seconds=wall,
        )
        return RunResult(self.records, report)

    def endpoint_ip(self, inst) -> str:
        host = inst.endpoint.host
        try:
            ipaddress.IPv4Address(host)
        except ValueError:
            raise EngineError(
                f"{inst.name}: dryrun endpoint host {host!r} must be an IPv4 literal"
            ) from None
        return host

    # schedule construction

    def _schedule_all(self) -> None:
        for ordinal, inst in enumerate(self.instances):
            if inst.role is Role.ATTACKER:
                self._schedule_attacker(ordinal, inst)
            else:
                self._schedule_normal(ordinal, inst)
        for ev in self.external:
            t_us = round(ev.time_s * 1_000_000)
            for ordinal, inst in enumerate(self.instances):
                tp = inst.spec.time_profile
                if (inst.role in (Role.PUBLISHER, Role.COAP_CLIENT)
                        and tp is not None and tp.kind is TimeKind.EVENT
                        and tp.event_name == ev.fire.event_name):
                    self.push(t_us, ordinal, "fire", (inst, ev.fire.payload))

    def _schedule_normal(self, ordinal: int, inst) -> None:
        t0 = ordinal * CONNECT_STAGGER_US
        if inst.protocol is Protocol.MQTT:
            conn = _Conn(inst, self.alloc_port(inst))
            self.dev_conn[inst.name] = conn
            self.push(t0, ordinal, "mqtt-open", conn)
            if inst.role is Role.SUBSCRIBER:
                self.push(t0 + SUBSCRIBE_DELAY_US, ordinal, "subscribe", conn)
                return
        else:
            self.dev_port[inst.name] = self.alloc_port(inst)
        tp = inst.spec.time_profile
        if tp is None or tp.kind is TimeKind.EVENT:
            return
        rng = self.rngs[inst.name]
        t_ms = next_fire_ms(tp, 0, rng)
        while t_ms * 1000 < self.duration_us:
            self.push(t_ms * 1000, ordinal, "fire", (inst, None))
            t_ms = next_fire_ms(tp, t_ms, rng)

    def _schedule_attacker(self, ordinal: int, inst) -> None:
        attack = inst.spec.attack
        if attack.kind is AttackKind.MQTT_PACKET_CRAFTING:
            rate = attack.rate_per_s
            interval_us = round((1 / rate if rate else CRAFT_REPEAT_S) * 1_000_000)
            t = self.attack_at_us
            shots = 0
            while t < self.duration_us:
                if attack.burst_count is not None and shots >= attack.burst_count:
                    break
                self.push(t, ordinal, "craft", inst)
                shots += 1
                t += interval_us
            return
        if attack.kind is AttackKind.MQTT_PUBLISH_FLOOD:
            trace = _flood_trace(inst, self.cfg, self.rngs[inst.name])
            conn = _Conn(inst, self.alloc_port(inst))
            for frame in trace.frames:
                self.push(self.attack_at_us + frame.offset_us, ordinal,
                          "flood-frame", (conn, frame.data))
        else:
            port = self.alloc_port(inst)
            for offset_us, raw in _coap_attack_frames(inst, self.cfg):
                self.push(self.attack_at_us + offset_us, ordinal,
                          "coap-raw", (inst, port, raw))

    # dispatch

    def _dispatch(self, t_us: int, ordinal: int, kind: str, data) -> None:
        if kind == "fire":
            inst, payload = data
            if inst.protocol is Protocol.MQTT:
                self._fire_mqtt(t_us, ordinal, inst, payload)
            else:
                self._fire_coap(t_us, ordinal, inst, payload)
        elif kind == "emit":
            self.emit(t_us, *data)
        elif kind == "mqtt-open":
            conn = data
            self.broker.open(conn.addr)
            conn.opened = True
            frame = mqtt.encode_frame(mqtt.MqttFrame.connect(
                conn.inst.name,
                keep_alive_s=DEFAULT_KEEPALIVE_S,
                username=conn.inst.endpoint.username,
                password=conn.inst.endpoint.password,
            ))
            self._to_broker(t_us, ordinal, conn, frame)
        elif kind == "subscribe":
            conn = data
            self.sub_endpoint[conn.addr] = (str(conn.inst.source_ip), conn.port)
            frame = mqtt.encode_frame(mqtt.MqttFrame.subscribe(
                conn.inst.spec.topic_or_path, packet_id=1))
            self._to_broker(t_us, ordinal, conn, frame)
        elif kind == "flood-frame":
            conn, raw = data
            self._to_broker(t_us, ordinal, conn, raw)
        elif kind == "craft":
            inst = data
            conn = _Conn(inst, self.alloc_port(inst))
            raw = mqtt_packet_crafting(inst.spec.topic_or_path).frames[0].data
            self._to_broker(t_us, ordinal, conn, raw)
            self.broker.close(conn.addr)
        elif kind == "coap-raw":
            inst, port, raw = data
            self._coap_exchange(t_us, ordinal, inst, port, raw)

    def _fire_mqtt(self, t_us, ordinal, inst, payload) -> None:
        conn = self.dev_conn[inst.name]
        if not conn.opened:
            # Fire scheduled ahead of the device's own CONNECT; dropping it
            # keeps normal devices incapable of protocol violations.
            return
        if payload is None:
            rng = self.rngs[inst.name]
            dp = inst.spec.data_profile
            payload = format_value(dp, next_value(dp, rng))
        frame = mqtt.encode_frame(mqtt.MqttFrame.publish(
            inst.spec.topic_or_path, payload.encode()))
        self._to_broker(t_us, ordinal, conn, frame)

    def _fire_coap(self, t_us, ordinal, inst, payload) -> None:
        port = self.dev_port[inst.name]
        method = coap.Method[inst.spec.coap_method.value]
        body = b""
        if method in (coap.Method.PUT, coap.Method.POST):
            if payload is None:
                rng = self.rngs[inst.name]
                dp = inst.spec.data_profile
                payload = format_value(dp, next_value(dp, rng))
            body = payload.encode()
        msg = coap.make_request(
            method, inst.spec.topic_or_path,
            message_id=next(self.mids[inst.name]) & 0xFFFF,
            payload=body,
            confirmable=inst.spec.confirmable,
        )
        self._coap_exchange(t_us, ordinal, inst, port, coap.encode_message(msg))

    def _to_broker(self, t_us, ordinal, conn, raw: bytes) -> None:
        inst = conn.inst
        dst_ip = self.endpoint_ip(inst)
        dst_port = inst.endpoint.port
        self.emit(t_us, str(inst.source_ip), conn.port, dst_ip, dst_port, "tcp", raw)
        responses, deliveries = self.broker.handle(conn.addr, raw)
        t_resp = t_us + RESPONSE_DELAY_US
        for resp in responses:
            self.push(t_resp, ordinal, "emit",
                      (dst_ip, dst_port, str(inst.source_ip), conn.port, "tcp", resp))
        for sub_addr, frame in deliveries:
            target = self.sub_endpoint.get(sub_addr)
            if target is not None:
                self.push(t_resp, ordinal, "emit",
                          (dst_ip, dst_port, target[0], target[1], "tcp", frame))

    def _coap_exchange(self, t_us, ordinal, inst, port, raw: bytes) -> None:
        dst_ip = self.endpoint_ip(inst)
        dst_port = inst.endpoint.port
        self.emit(t_us, str(inst.source_ip), port, dst_ip, dst_port, "udp", raw)
        resp = self.coap_server.handle(coap.decode_message(raw))
        if resp is not None:
            self.push(t_us + RESPONSE_DELAY_US, ordinal, "emit",
                      (dst_ip, dst_port, str(inst.source_ip), port, "udp",
                       coap.encode_message(resp)))


# --- LIVE --------------------------------------------------------------------

class _Recorder:
    """Thread-safe record sink for the live mode; timestamps are the wall
    clock mapped back to virtual time."""

    def __init__(self, time_scale: float):
        self.scale = time_scale
        self.lock = threading.Lock()
        self.records: list[PacketRecord] = []
        self.t0 = time.perf_counter()

    def now_us(self) -> int:
        return round((time.perf_counter() - self.t0) / self.scale * 1_000_000)

    def wall_for(self, t_us: int) -> float:
        return self.t0 + t_us / 1_000_000 * self.scale

    def emit(self, src_ip, src_port, dst_ip, dst_port, l4, payload) -> None:
        rec = PacketRecord(self.now_us(), src_ip, src_port, dst_ip, dst_port, l4, payload)
        with self.lock:
            self.records.append(rec)


def _is_loopback(host: str) -> bool:
    try:
        return ipaddress.IPv4Address(socket.gethostbyname(host)).is_loopback
    except OSError:
        return False


class _BrokerServer(threading.Thread):
    """Real TCP listener in front of the shared BrokerStub."""

    def __init__(self, host: str, port: int, stub: BrokerStub):
        super().__init__(daemon=True, name=f"broker-{host}:{port}")
        self.stub = stub
        self.lock = threading.Lock()
        self.conns: dict[str, socket.socket] = {}
        self.sock = socket.create_server((host, port))
        self.sock.settimeout(0.2)
        self.stopping = threading.Event()

    def run(self) -> None:
        while not self.stopping.is_set():
            try:
                conn, peer = self.sock.accept()
            except TimeoutError:
                continue
            except OSError:
                break
            threading.Thread(target=self._serve, args=(conn, peer), daemon=True).start()
        self.sock.close()

    def _serve(self, conn: socket.socket, peer) -> None:
        addr = f"{peer[0]}:{peer[1]}"
        with self.lock:
            self.stub.open(addr)
            self.conns[addr] = conn
        try:
            while not self.stopping.is_set():
                try:
                    data = conn.recv(65536)
                except OSError:
                    break
                if not data:
                    break
                with self.lock:
                    responses, deliveries = self.stub.handle(addr, data)
                    targets = [(self.conns.get(sub), frame) for sub, frame in deliveries]
                for resp in responses:
                    conn.sendall(resp)
                for sock_, frame in targets:
                    if sock_ is not None:
                        try:
                            sock_.sendall(frame)
                        except OSError:
                            pass
        finally:
            with self.lock:
                self.stub.close(addr)
                self.conns.pop(addr, None)
            conn.close()

    def stop(self) -> None:
        self.stopping.set()
        try:
            self.sock.close()
        except OSError:
            pass


class _CoapServer(threading.Thread):
    """Real UDP listener in front of the shared CoapServerStub."""

    def __init__(self, host: str, port: int, stub: CoapServerStub):
        super().__init__(daemon=True, name=f"coap-{host}:{port}")
        self.stub = stub
        self.lock = threading.Lock()
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind((host, port))
        self.sock.settimeout(0.2)
        self.stopping = threading.Event()

    def run(self) -> None:
        while not self.stopping.is_set():
            try:
                data, peer = self.sock.recvfrom(65536)
            except TimeoutError:
                continue
            except OSError:
                break
            try:
                msg = coap.decode_message(data)
            except coap.CoapDecodeError:
                continue
            with self.lock:
                resp = self.stub.handle(msg)
            if resp is not None:
                try:
                    self.sock.sendto(coap.encode_message(resp), peer)
                except OSError:
                    pass
        self.sock.close()

    def stop(self) -> None:
        self.stopping.set()
        try:
            self.sock.close()
        except OSError:
            pass


class _TcpReader(threading.Thread):
    """Records every broker-to-client frame arriving on one connection."""

    def __init__(self, sock: socket.socket, rec: _Recorder,
                 local: tuple[str, int], peer: tuple[str, int]):
        super().__init__(daemon=True)
        self.sock = sock
        self.rec = rec
        self.local = local
        self.peer = peer

    def run(self) -> None:
        buf = bytearray()
        while True:
            try:
                data = self.sock.recv(65536)
            except OSError:
                return
            if not data:
                return
            buf.extend(data)
            while buf:
                try:
                    _, used = mqtt.decode_frame(bytes(buf))
                except mqtt.MqttNeedMoreData:
                    break
                except mqtt.MqttDecodeError:
                    buf.clear()
                    break
                self.rec.emit(self.peer[0], self.peer[1],
                              self.local[0], self.local[1], "tcp", bytes(buf[:used]))
                del buf[:used]


class _LiveRun:
    """Thread-per-device execution over real sockets.

    Each device binds its virtual source address, so the host needs those
    addresses routable; any 127.x.y.z works out of the box. A device that
    cannot bind is reported and skipped, the run continues without it.
    """

    def __init__(self, uc, cfg, instances, events):
        self.uc = uc
        self.cfg = cfg
        self.instances = instances
        self.external = events
        self.broker = BrokerStub()
        self.coap_server = CoapServerStub()
        self.rec = _Recorder(cfg.time_scale)
        self.stop_event = threading.Event()
        self.errors: list[str] = []
        self.err_lock = threading.Lock()
        self.duration_us = round(cfg.duration_s * 1_000_000)
        self.attack_at_us = round(cfg.attack_delay_s * 1_000_000)

    def fail(self, inst, exc: Exception) -> None:
        with self.err_lock:
            self.errors.append(f"{inst.name}: {exc}")

    def wait_until(self, t_us: int) -> bool:
        """Sleep to the wall target for virtual t_us; True when stopping."""
        delay = self.rec.wall_for(t_us) - time.perf_counter()
        if delay <= 0:
            return self.stop_event.is_set()
        return self.stop_event.wait(delay)

    def run(self) -> RunResult:
        start = time.perf_counter()
        servers = self._start_servers()
        self.rec.t0 = time.perf_counter()
        threads = []
        for ordinal, inst in enumerate(self.instances):
            worker = {
                Role.PUBLISHER: self._run_publisher,
                Role.SUBSCRIBER: self._run_subscriber,
                Role.COAP_CLIENT: self._run_coap_client,
                Role.ATTACKER: self._run_attacker,
            }[inst.role]
            t = threading.Thread(target=worker, args=(ordinal, inst),
                                 daemon=True, name=inst.name)
            t.start()
            threads.append(t)
        deadline = self.rec.wall_for(self.duration_us)
        while time.perf_counter() < deadline:
            time.sleep(min(0.05, max(deadline - time.perf_counter(), 0.001)))
        self.stop_event.set()
        for t in threads:
            t.join(timeout=2.0)
        for server in servers:
            server.stop()
        with self.rec.lock:
            records = sorted(self.rec.records, key=lambda r: r.ts_us)
        records = [r for r in records if r.ts_us < self.duration_us]
        wall = time.perf_counter() - start
        report = RunReport(
            use_case=self.uc.name,
            mode=MODE_LIVE,
            seed=self.cfg.seed,
            duration_s=self.cfg.duration_s,
            attack_delay_s=self.cfg.attack_delay_s,
            time_scale=self.cfg.time_scale,
            device_count=len(self.instances),
            attacker_count=sum(1 for i in self.instances if i.role is Role.ATTACKER),
            total_records=len(records),
            violations=tuple(self.broker.violations),
            faults=tuple(self.coap_server.faults),
            leak_bytes=self.coap_server.leak_bytes,
            errors=tuple(self.errors),
            schedule_trace_digest=_trace_digest(records),
            wall_seconds=wall,
        )
        return RunResult(records, report)

    def _start_servers(self) -> list:
        servers = []
        seen: set[tuple[str, int, str]] = set()
        for inst in self.instances:
            ep = inst.endpoint
            key = (ep.host, ep.port, inst.protocol.value)
            if key in seen or not _is_loopback(ep.host):
                continue
            seen.add(key)
            try:
                if inst.protocol is Protocol.MQTT:
                    servers.append(_BrokerServer(ep.host, ep.port, self.broker))
                else:
                    servers.append(_CoapServer(ep.host, ep.port, self.coap_server))
                servers[-1].start()
            except OSError as e:
                raise EngineError(f"cannot start stub on {ep.host}:{ep.port}: {e}") from e
        return servers

    # socket helpers

    def _tcp_connect(self, inst) -> tuple[socket.socket, tuple, tuple]:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.bind((str(inst.source_ip), 0))
        sock.settimeout(5.0)
        sock.connect((inst.endpoint.host, inst.endpoint.port))
        return sock, sock.getsockname(), sock.getpeername()

    def _udp_socket(self, inst) -> tuple[socket.socket, tuple, tuple]:
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        sock.bind((str(inst.source_ip), 0))
        sock.connect((inst.endpoint.host, inst.endpoint.port))
        return sock, sock.getsockname(), sock.getpeername()

    def _send(self, sock, local, peer, l4: str, frame: bytes) -> None:
        self.rec.emit(local[0], local[1], peer[0], peer[1], l4, frame)
        sock.sendall(frame)

    # device workers

    def _fire_times_us(self, ordinal, inst):
        tp = inst.spec.time_profile
        if tp is None or tp.kind is TimeKind.EVENT:
            times = [round(ev.time_s * 1_000_000) for ev in self.external
                     if tp is not None and ev.fire.event_name == tp.event_name]
            yield from sorted(t for t in times if t < self.duration_us)
            return
        rng = _device_rng(self.cfg.seed, inst)
        t_ms = next_fire_ms(tp, 0, rng)
        while t_ms * 1000 < self.duration_us:
            yield t_ms * 1000
            t_ms = next_fire_ms(tp, t_ms, rng)

    def _run_publisher(self, ordinal, inst) -> None:
        rng = _device_rng(self.cfg.seed, inst)
        try:
            if self.wait_until(ordinal * CONNECT_STAGGER_US):
                return
            sock, local, peer = self._tcp_connect(inst)
        except OSError as e:
            self.fail(inst, e)
            return
        try:
            _TcpReader(sock, self.rec, local, peer).start()
            ep = inst.endpoint
            self._send(sock, local, peer, "tcp", mqtt.encode_frame(mqtt.MqttFrame.connect(
                inst.name, keep_alive_s=DEFAULT_KEEPALIVE_S,
                username=ep.username, password=ep.password)))
            dp = inst.spec.data_profile
            for t_us in self._fire_times_us(ordinal, inst):
                if self.wait_until(t_us):
                    return
                payload = format_value(dp, next_value(dp, rng)).encode()
                self._send(sock, local, peer, "tcp", mqtt.encode_frame(
                    mqtt.MqttFrame.publish(inst.spec.topic_or_path, payload)))
            self.stop_event.wait()
        except OSError as e:
            self.fail(inst, e)
        finally:
            sock.close()

    def _run_subscriber(self, ordinal, inst) -> None:
        try:
            if self.wait_until(ordinal * CONNECT_STAGGER_US):
                return
            sock, local, peer = self._tcp_connect(inst)
        except OSError as e:
            self.fail(inst, e)
            return
        try:
            _TcpReader(sock, self.rec, local, peer).start()
            ep = inst.endpoint
            self._send(sock, local, peer, "tcp", mqtt.encode_frame(mqtt.MqttFrame.connect(
                inst.name, keep_alive_s=DEFAULT_KEEPALIVE_S,
                username=ep.username, password=ep.password)))
            time.sleep(0.01)
            self._send(sock, local, peer, "tcp", mqtt.encode_frame(
                mqtt.MqttFrame.subscribe(inst.spec.topic_or_path, packet_id=1)))
            self.stop_event.wait()
        except OSError as e:
            self.fail(inst, e)
        finally:
            sock.close()

    def _run_coap_client(self, ordinal, inst) -> None:
        rng = _device_rng(self.cfg.seed, inst)
        try:
            sock, local, peer = self._udp_socket(inst)
        except OSError as e:
            self.fail(inst, e)
            return
        try:
            sock.settimeout(_LIVE_RECV_TIMEOUT_S)
            dp = inst.spec.data_profile
            method = coap.Method[inst.spec.coap_method.value]
            for mid, t_us in enumerate(self._fire_times_us(ordinal, inst), start=1):
                if self.wait_until(t_us):
                    return
                body = b""
                if method in (coap.Method.PUT, coap.Method.POST):
                    body = format_value(dp, next_value(dp, rng)).encode()
                msg = coap.make_request(method, inst.spec.topic_or_path,
                                        message_id=mid & 0xFFFF, payload=body,
                                        confirmable=inst.spec.confirmable)
                self._send(sock, local, peer, "udp", coap.encode_message(msg))
                self._drain_udp(sock, local, peer)
        except OSError as e:
            self.fail(inst, e)
        finally:
            sock.close()

    def _drain_udp(self, sock, local, peer) -> None:
        try:
            data = sock.recv(65536)
        except (TimeoutError, OSError):
            return
        if data:
            self.rec.emit(peer[0], peer[1], local[0], local[1], "udp", data)

    def _run_attacker(self, ordinal, inst) -> None:
        kind = inst.spec.attack.kind
        if kind is AttackKind.MQTT_PACKET_CRAFTING:
            self._run_crafter(inst)
        elif kind is AttackKind.MQTT_PUBLISH_FLOOD:
            self._run_flooder(inst)
        else:
            self._run_coap_attacker(inst)

    def _run_crafter(self, inst) -> None:
        attack = inst.spec.attack
        interval_us = round(
            (1 / attack.rate_per_s if attack.rate_per_s else CRAFT_REPEAT_S) * 1_000_000)
        raw = mqtt_packet_crafting(inst.spec.topic_or_path).frames[0].data
        t = self.attack_at_us
        shots = 0
        while t < self.duration_us:
            if attack.burst_count is not None and shots >= attack.burst_count:
                return
            if self.wait_until(t):
                return
            try:
                sock, local, peer = self._tcp_connect(inst)
                self._send(sock, local, peer, "tcp", raw)
                time.sleep(0.01)
                sock.close()
            except OSError as e:
                self.fail(inst, e)
                return
            shots += 1
            t += interval_us

    def _run_flooder(self, inst) -> None:
        rng = _device_rng(self.cfg.seed, inst)
        trace = _flood_trace(inst, self.cfg, rng)
        if self.wait_until(self.attack_at_us):
            return
        try:
            sock, local, peer = self._tcp_connect(inst)
        except OSError as e:
            self.fail(inst, e)
            return
        try:
            _TcpReader(sock, self.rec, local, peer).start()
            for frame in trace.frames:
                if self.wait_until(self.attack_at_us + frame.offset_us):
                    return
                self._send(sock, local, peer, "tcp", frame.data)
        except OSError as e:
            self.fail(inst, e)
        finally:
            sock.close()

    def _run_coap_attacker(self, inst) -> None:
        if self.wait_until(self.attack_at_us):
            return
        try:
            sock, local, peer = self._udp_socket(inst)
        except OSError as e:
            self.fail(inst, e)
            return
        try:
            sock.settimeout(_LIVE_RECV_TIMEOUT_S)
            for offset_us, raw in _coap_attack_frames(inst, self.cfg):
                if self.wait_until(self.attack_at_us + offset_us):
                    return
                self._send(sock, local, peer, "udp", raw)
                self._drain_udp(sock, local, peer)
        except OSError as e:
            self.fail(inst, e)
        finally:
            sock.close()
