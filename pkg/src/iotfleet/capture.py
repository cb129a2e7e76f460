"""Capture pipeline: packet records, pcap files, flows, and the labeled
feature table.

Records are what the engine emits (one per application frame, timestamped in
integer microseconds). This module turns them into the two artifacts a
detection experiment consumes: a pcap with synthesized Ethernet/IPv4/TCP-UDP
framing, and a delimited dataset of per-flow features labeled by source
network. Flow statistics are running aggregates, so memory stays flat no
matter how long the run.
"""

from __future__ import annotations

import csv
import ipaddress
import math
import struct
from dataclasses import dataclass, field

ETH_HEADER = 14
IP_HEADER = 20
TCP_HEADER = 20
UDP_HEADER = 8

TCP_OVERHEAD = ETH_HEADER + IP_HEADER + TCP_HEADER
UDP_OVERHEAD = ETH_HEADER + IP_HEADER + UDP_HEADER

PCAP_MAGIC = 0xA1B2C3D4
PCAP_SNAPLEN = 65535
LINKTYPE_ETHERNET = 1

PROTO_NUMBER = {"tcp": 6, "udp": 17}

ID_COLUMNS = ("src_ip", "src_port", "dst_ip", "dst_port", "l4")
FEATURE_COLUMNS = (
    "duration_s",
    "fwd_packets",
    "bwd_packets",
    "total_packets",
    "fwd_bytes",
    "bwd_bytes",
    "total_bytes",
    "bytes_per_s",
    "packets_per_s",
    "pkt_len_min",
    "pkt_len_max",
    "pkt_len_mean",
    "pkt_len_std",
    "iat_min",
    "iat_max",
    "iat_mean",
    "iat_std",
    "fwd_iat_mean",
    "bwd_iat_mean",
    "dst_port",
    "l4_proto",
)
LABEL_COLUMN = "label"

DEFAULT_IDLE_TIMEOUT_S = 120.0


class CaptureError(ValueError):
    """Capture input malformed or out of order."""


@dataclass(frozen=True, slots=True)
class PacketRecord:
    """One application frame on the virtual wire.

    length is the full synthesized frame size, payload plus the fixed
    Ethernet+IPv4+TCP/UDP overhead, so byte features match the pcap.
    """

    ts_us: int
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    l4: str
    payload: bytes

    def __post_init__(self) -> None:
        if self.l4 not in PROTO_NUMBER:
            raise CaptureError(f"l4 must be tcp or udp, got {self.l4!r}")
        if self.ts_us < 0:
            raise CaptureError(f"timestamp must be >= 0, got {self.ts_us}")

    @property
    def ts(self) -> float:
        return self.ts_us / 1_000_000

    @property
    def length(self) -> int:
        overhead = TCP_OVERHEAD if self.l4 == "tcp" else UDP_OVERHEAD
        return len(self.payload) + overhead


class RunningStats:
    """Population statistics without storing samples.

    Welford's recurrence; the naive sum-of-squares form loses the variance
    to cancellation once the mean dwarfs the spread, which microsecond
    inter-arrival times do routinely.
    """

    __slots__ = ("n", "_mean", "_m2", "mn", "mx")

    def __init__(self) -> None:
        self.n = 0
        self._mean = 0.0
        self._m2 = 0.0
        self.mn = 0.0
        self.mx = 0.0

    def add(self, x: float) -> None:
        if self.n == 0:
            self.mn = self.mx = x
        else:
            self.mn = min(self.mn, x)
            self.mx = max(self.mx, x)
        self.n += 1
        delta = x - self._mean
        self._mean += delta / self.n
        self._m2 += delta * (x - self._mean)

    @property
    def mean(self) -> float:
        return self._mean

    @property
    def std(self) -> float:
        if self.n == 0:
            return 0.0
        return math.sqrt(max(self._m2 / self.n, 0.0))


def _endpoint_key(ip: str, port: int) -> tuple[tuple[int, ...], int]:
    return tuple(int(b) for b in ip.split(".")), port


def canonical_key(rec: PacketRecord) -> tuple:
    """Direction-free flow identity: the lower endpoint listed first."""
    a = (rec.src_ip, rec.src_port)
    b = (rec.dst_ip, rec.dst_port)
    if _endpoint_key(*a) <= _endpoint_key(*b):
        return (*a, *b, rec.l4)
    return (*b, *a, rec.l4)


class Flow:
    """Aggregates one direction-oriented flow; fwd is the first-seen side."""

    __slots__ = (
        "src_ip", "src_port", "dst_ip", "dst_port", "l4",
        "first_ts_us", "last_ts_us",
        "fwd_packets", "bwd_packets", "fwd_bytes", "bwd_bytes",
        "pkt_len", "iat_us", "fwd_iat_us", "bwd_iat_us",
        "_last_fwd_ts_us", "_last_bwd_ts_us",
    )

    def __init__(self, first: PacketRecord):
        self.src_ip = first.src_ip
        self.src_port = first.src_port
        self.dst_ip = first.dst_ip
        self.dst_port = first.dst_port
        self.l4 = first.l4
        self.first_ts_us = first.ts_us
        self.last_ts_us = first.ts_us
        self.fwd_packets = 0
        self.bwd_packets = 0
        self.fwd_bytes = 0
        self.bwd_bytes = 0
        self.pkt_len = RunningStats()
        self.iat_us = RunningStats()
        self.fwd_iat_us = RunningStats()
        self.bwd_iat_us = RunningStats()
        self._last_fwd_ts_us: int | None = None
        self._last_bwd_ts_us: int | None = None
        self.add(first)

    def is_forward(self, rec: PacketRecord) -> bool:
        return (rec.src_ip, rec.src_port) == (self.src_ip, self.src_port)

    def add(self, rec: PacketRecord) -> None:
        if rec.ts_us < self.last_ts_us:
            raise CaptureError("flow packets must arrive in time order")
        if self.pkt_len.n:
            self.iat_us.add(rec.ts_us - self.last_ts_us)
        self.last_ts_us = rec.ts_us
        self.pkt_len.add(rec.length)
        if self.is_forward(rec):
            if self._last_fwd_ts_us is not None:
                self.fwd_iat_us.add(rec.ts_us - self._last_fwd_ts_us)
            self._last_fwd_ts_us = rec.ts_us
            self.fwd_packets += 1
            self.fwd_bytes += rec.length
        else:
            if self._last_bwd_ts_us is not None:
                self.bwd_iat_us.add(rec.ts_us - self._last_bwd_ts_us)
            self._last_bwd_ts_us = rec.ts_us
            self.bwd_packets += 1
            self.bwd_bytes += rec.length

    @property
    def total_packets(self) -> int:
        return self.fwd_packets + self.bwd_packets

    @property
    def total_bytes(self) -> int:
        return self.fwd_bytes + self.bwd_bytes

    @property
    def duration_us(self) -> int:
        return self.last_ts_us - self.first_ts_us


class FlowAssembler:
    """Splits a time-ordered record stream into flows at idle-timeout gaps."""

    def __init__(self, idle_timeout_s: float = DEFAULT_IDLE_TIMEOUT_S):
        if idle_timeout_s <= 0:
            raise CaptureError(f"idle timeout must be positive, got {idle_timeout_s}")
        self.idle_timeout_us = round(idle_timeout_s * 1_000_000)
        self._open: dict[tuple, Flow] = {}
        self._done: list[Flow] = []
        self._last_ts_us = 0

    def add(self, rec: PacketRecord) -> None:
        if rec.ts_us < self._last_ts_us:
            raise CaptureError("records must be fed in time order")
        self._last_ts_us = rec.ts_us
        key = canonical_key(rec)
        flow = self._open.get(key)
        if flow is not None and rec.ts_us - flow.last_ts_us > self.idle_timeout_us:
            self._done.append(flow)
            flow = None
        if flow is None:
            self._open[key] = Flow(rec)
        else:
            flow.add(rec)

    def finish(self) -> list[Flow]:
        flows = self._done + list(self._open.values())
        self._open.clear()
        self._done = []
        flows.sort(key=lambda f: (f.first_ts_us, f.src_ip, f.src_port, f.dst_ip, f.dst_port))
        return flows


def assemble_flows(records, idle_timeout_s: float = DEFAULT_IDLE_TIMEOUT_S) -> list[Flow]:
    asm = FlowAssembler(idle_timeout_s)
    for rec in sorted(records, key=lambda r: r.ts_us):
        asm.add(rec)
    return asm.finish()


def extract_features(flow: Flow) -> dict[str, float]:
    """The 21 per-flow features; rates floor duration at one microsecond so
    single-packet flows stay finite."""
    dur_us = flow.duration_us
    rate_dur_s = max(dur_us, 1) / 1_000_000
    return {
        "duration_s": dur_us / 1_000_000,
        "fwd_packets": flow.fwd_packets,
        "bwd_packets": flow.bwd_packets,
        "total_packets": flow.total_packets,
        "fwd_bytes": flow.fwd_bytes,
        "bwd_bytes": flow.bwd_bytes,
        "total_bytes": flow.total_bytes,
        "bytes_per_s": flow.total_bytes / rate_dur_s,
        "packets_per_s": flow.total_packets / rate_dur_s,
        "pkt_len_min": flow.pkt_len.mn,
        "pkt_len_max": flow.pkt_len.mx,
        "pkt_len_mean": flow.pkt_len.mean,
        "pkt_len_std": flow.pkt_len.std,
        "iat_min": flow.iat_us.mn / 1_000_000,
        "iat_max": flow.iat_us.mx / 1_000_000,
        "iat_mean": flow.iat_us.mean / 1_000_000,
        "iat_std": flow.iat_us.std / 1_000_000,
        "fwd_iat_mean": flow.fwd_iat_us.mean / 1_000_000,
        "bwd_iat_mean": flow.bwd_iat_us.mean / 1_000_000,
        "dst_port": flow.dst_port,
        "l4_proto": PROTO_NUMBER[flow.l4],
    }


def label_flow(flow: Flow, attack_cidr: ipaddress.IPv4Network) -> str:
    """attack iff either endpoint sits in the attacker network."""
    src = ipaddress.IPv4Address(flow.src_ip)
    dst = ipaddress.IPv4Address(flow.dst_ip)
    return "attack" if src in attack_cidr or dst in attack_cidr else "normal"


def write_dataset_csv(path, flows, attack_cidr: ipaddress.IPv4Network) -> int:
    """One row per flow: identity, features, label. Returns the row count."""
    count = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ID_COLUMNS + FEATURE_COLUMNS + (LABEL_COLUMN,))
        for flow in flows:
            feats = extract_features(flow)
            row = [flow.src_ip, flow.src_port, flow.dst_ip, flow.dst_port, flow.l4]
            for name in FEATURE_COLUMNS:
                v = feats[name]
                row.append(int(v) if float(v).is_integer() else f"{v:.6g}")
            row.append(label_flow(flow, attack_cidr))
            writer.writerow(row)
            count += 1
    return count


# --- pcap ------------------------------------------------------------------

def _checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def _mac_for(ip: str) -> bytes:
    # Locally administered unicast MAC carrying the IPv4 bytes.
    return bytes([0x02, 0x00]) + ipaddress.IPv4Address(ip).packed


def _ipv4_header(rec: PacketRecord, l4_len: int) -> bytes:
    total_len = IP_HEADER + l4_len
    head = struct.pack(
        "!BBHHHBBH4s4s",
        0x45, 0, total_len, 0, 0, 64, PROTO_NUMBER[rec.l4], 0,
        ipaddress.IPv4Address(rec.src_ip).packed,
        ipaddress.IPv4Address(rec.dst_ip).packed,
    )
    return head[:10] + struct.pack("!H", _checksum(head)) + head[12:]


def _pseudo_header(rec: PacketRecord, l4_len: int) -> bytes:
    return (ipaddress.IPv4Address(rec.src_ip).packed
            + ipaddress.IPv4Address(rec.dst_ip).packed
            + struct.pack("!BBH", 0, PROTO_NUMBER[rec.l4], l4_len))


def synthesize_frame(rec: PacketRecord) -> bytes:
    """Ethernet/IPv4/TCP-or-UDP bytes for one record, checksums valid."""
    if rec.l4 == "tcp":
        # PSH+ACK data segment; sequence numbers are not modeled.
        l4_len = TCP_HEADER + len(rec.payload)
        head = struct.pack("!HHIIBBHHH", rec.src_port, rec.dst_port, 0, 0,
                           (TCP_HEADER // 4) << 4, 0x18, 65535, 0, 0)
        csum = _checksum(_pseudo_header(rec, l4_len) + head + rec.payload)
        l4 = head[:16] + struct.pack("!H", csum) + head[18:] + rec.payload
    else:
        l4_len = UDP_HEADER + len(rec.payload)
        head = struct.pack("!HHHH", rec.src_port, rec.dst_port, l4_len, 0)
        csum = _checksum(_pseudo_header(rec, l4_len) + head + rec.payload)
        if csum == 0:
            csum = 0xFFFF
        l4 = head[:6] + struct.pack("!H", csum) + rec.payload
    eth = _mac_for(rec.dst_ip) + _mac_for(rec.src_ip) + struct.pack("!H", 0x0800)
    return eth + _ipv4_header(rec, l4_len) + l4


def write_pcap(path, records) -> int:
    """Classic little-endian pcap, microsecond timestamps, Ethernet link."""
    count = 0
    with open(path, "wb") as fh:
        fh.write(struct.pack("<IHHiIII", PCAP_MAGIC, 2, 4, 0, 0,
                             PCAP_SNAPLEN, LINKTYPE_ETHERNET))
        for rec in records:
            frame = synthesize_frame(rec)
            sec, usec = divmod(rec.ts_us, 1_000_000)
            fh.write(struct.pack("<IIII", sec, usec, len(frame), len(frame)))
            fh.write(frame)
            count += 1
    return count


def read_pcap(path) -> list[PacketRecord]:
    """Inverse of write_pcap for files this module produced."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 24:
        raise CaptureError("pcap too short for its global header")
    magic, _, _, _, _, _, linktype = struct.unpack("<IHHiIII", data[:24])
    if magic != PCAP_MAGIC:
        raise CaptureError(f"unsupported pcap magic 0x{magic:08X}")
    if linktype != LINKTYPE_ETHERNET:
        raise CaptureError(f"unsupported link type {linktype}")
    records = []
    pos = 24
    while pos < len(data):
        if pos + 16 > len(data):
            raise CaptureError("truncated packet header")
        sec, usec, incl, orig = struct.unpack("<IIII", data[pos:pos + 16])
        pos += 16
        if incl != orig or pos + incl > len(data):
            raise CaptureError("truncated packet body")
        frame = data[pos:pos + incl]
        pos += incl
        records.append(_parse_frame(sec * 1_000_000 + usec, frame))
    return records


def _parse_frame(ts_us: int, frame: bytes) -> PacketRecord:
    if len(frame) < ETH_HEADER + IP_HEADER or frame[12:14] != b"\x08\x00":
        raise CaptureError("not an IPv4-over-Ethernet frame")
    ip = frame[ETH_HEADER:]
    if ip[0] != 0x45:
        raise CaptureError("unsupported IPv4 header (options present?)")
    total_len = struct.unpack("!H", ip[2:4])[0]
    proto = ip[9]
    src = str(ipaddress.IPv4Address(ip[12:16]))
    dst = str(ipaddress.IPv4Address(ip[16:20]))
    l4 = ip[IP_HEADER:total_len]
    if proto == 6:
        sport, dport = struct.unpack("!HH", l4[:4])
        payload = l4[(l4[12] >> 4) * 4:]
        name = "tcp"
    elif proto == 17:
        sport, dport = struct.unpack("!HH", l4[:4])
        payload = l4[UDP_HEADER:]
        name = "udp"
    else:
        raise CaptureError(f"unsupported IP protocol {proto}")
    return PacketRecord(ts_us, src, sport, dst, dport, name, payload)
