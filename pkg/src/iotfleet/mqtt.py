"""Byte-exact MQTT 3.1.1 frame codec.

Covers the frame subset a fleet needs: CONNECT, CONNACK, PUBLISH (QoS 0),
SUBSCRIBE, SUBACK, PINGREQ, PINGRESP, DISCONNECT. The codec is deliberately
sequence-agnostic: it will happily encode a PUBLISH with no preceding
CONNECT, which packet-crafting attacks rely on. QoS 1/2, retained messages,
wills and MQTT 5 properties are out of scope.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

MAX_REMAINING_LENGTH = 268_435_455
PROTOCOL_NAME = b"MQTT"
PROTOCOL_LEVEL = 4

_FLAG_CLEAN_SESSION = 0x02
_FLAG_PASSWORD = 0x40
_FLAG_USERNAME = 0x80


class MqttError(ValueError):
    """Frame violates an invariant or cannot be encoded."""


class MqttDecodeError(MqttError):
    """Input bytes are malformed (structurally wrong, not merely short)."""


class MqttNeedMoreData(MqttError):
    """Input ends before one whole frame; feed more bytes and retry."""


class FrameKind(Enum):
    CONNECT = 1
    CONNACK = 2
    PUBLISH = 3
    SUBSCRIBE = 8
    SUBACK = 9
    PINGREQ = 12
    PINGRESP = 13
    DISCONNECT = 14


@dataclass(frozen=True)
class MqttFrame:
    """One control packet; only the fields of its kind are meaningful."""

    kind: FrameKind
    client_id: str = ""
    keep_alive_s: int = 0
    username: str | None = None
    password: str | None = None
    topic: str = ""
    payload: bytes = b""
    packet_id: int = 0
    return_code: int = 0

    @classmethod
    def connect(cls, client_id: str, keep_alive_s: int = 60,
                username: str | None = None, password: str | None = None) -> "MqttFrame":
        return cls(FrameKind.CONNECT, client_id=client_id, keep_alive_s=keep_alive_s,
                   username=username, password=password)

    @classmethod
    def connack(cls, return_code: int = 0) -> "MqttFrame":
        return cls(FrameKind.CONNACK, return_code=return_code)

    @classmethod
    def publish(cls, topic: str, payload: bytes) -> "MqttFrame":
        return cls(FrameKind.PUBLISH, topic=topic, payload=payload)

    @classmethod
    def subscribe(cls, topic: str, packet_id: int) -> "MqttFrame":
        return cls(FrameKind.SUBSCRIBE, topic=topic, packet_id=packet_id)

    @classmethod
    def suback(cls, packet_id: int, return_code: int = 0) -> "MqttFrame":
        return cls(FrameKind.SUBACK, packet_id=packet_id, return_code=return_code)


def encode_remaining_length(n: int) -> bytes:
    """Variable-length base-128 encoding, 1-4 bytes, continuation high bit."""
    if not 0 <= n <= MAX_REMAINING_LENGTH:
        raise MqttError(f"remaining length {n} out of range 0..{MAX_REMAINING_LENGTH}")
    out = bytearray()
    while True:
        n, digit = divmod(n, 128)
        out.append(digit | 0x80 if n else digit)
        if not n:
            return bytes(out)


def decode_remaining_length(b: bytes, offset: int = 0) -> tuple[int, int]:
    """Returns (value, bytes consumed) starting at offset."""
    value = 0
    for i in range(4):
        if offset + i >= len(b):
            raise MqttNeedMoreData("need more bytes: remaining-length field incomplete")
        byte = b[offset + i]
        value |= (byte & 0x7F) << (7 * i)
        if not byte & 0x80:
            return value, i + 1
    raise MqttDecodeError("malformed remaining-length: more than 4 continuation bytes")


def _utf8_field(text: str, what: str) -> bytes:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise MqttError(f"{what} exceeds 65535 bytes")
    return struct.pack("!H", len(raw)) + raw


def _check_topic(topic: str) -> None:
    if not topic:
        raise MqttError("topic must be non-empty")
    if "\x00" in topic:
        raise MqttError("topic must not contain NUL")
    if len(topic.encode("utf-8")) > 0xFFFF:
        raise MqttError("topic exceeds 65535 bytes")


def encode_frame(f: MqttFrame) -> bytes:
    """Fixed header, remaining length, variable header and payload."""
    kind = f.kind
    if kind is FrameKind.CONNECT:
        flags = _FLAG_CLEAN_SESSION
        body = bytearray()
        body += _utf8_field(PROTOCOL_NAME.decode(), "protocol name")
        body.append(PROTOCOL_LEVEL)
        if f.username is not None:
            flags |= _FLAG_USERNAME
        if f.password is not None:
            flags |= _FLAG_PASSWORD
        body.append(flags)
        body += struct.pack("!H", f.keep_alive_s)
        body += _utf8_field(f.client_id, "client_id")
        if f.username is not None:
            body += _utf8_field(f.username, "username")
        if f.password is not None:
            body += _utf8_field(f.password, "password")
        first = kind.value << 4
    elif kind is FrameKind.CONNACK:
        body = bytearray((0, f.return_code))
        first = kind.value << 4
    elif kind is FrameKind.PUBLISH:
        _check_topic(f.topic)
        body = bytearray(_utf8_field(f.topic, "topic"))
        body += f.payload
        first = kind.value << 4  # QoS 0, no dup/retain
    elif kind is FrameKind.SUBSCRIBE:
        _check_topic(f.topic)
        body = bytearray(struct.pack("!H", f.packet_id))
        body += _utf8_field(f.topic, "topic")
        body.append(0)  # requested QoS 0
        first = kind.value << 4 | 0x02
    elif kind is FrameKind.SUBACK:
        body = bytearray(struct.pack("!H", f.packet_id))
        body.append(f.return_code)
        first = kind.value << 4
    elif kind in (FrameKind.PINGREQ, FrameKind.PINGRESP, FrameKind.DISCONNECT):
        body = bytearray()
        first = kind.value << 4
    else:  # pragma: no cover - enum is closed
        raise MqttError(f"cannot encode frame kind {kind}")
    if len(body) > MAX_REMAINING_LENGTH:
        raise MqttError("frame exceeds maximum remaining length")
    return bytes([first]) + encode_remaining_length(len(body)) + bytes(body)


def decode_frame(b: bytes) -> tuple[MqttFrame, int]:
    """Parse one frame from the head of b; trailing data is tolerated.

    Raises MqttNeedMoreData when b ends before the declared frame does, and
    MqttDecodeError for structurally malformed input. Never reads past the
    declared remaining length.
    """
    if not b:
        raise MqttNeedMoreData("need more bytes: empty input")
    first = b[0]
    type_nibble = first >> 4
    flags = first & 0x0F
    try:
        kind = FrameKind(type_nibble)
    except ValueError:
        raise MqttDecodeError(f"unknown packet type {type_nibble}") from None
    remaining, rl_len = decode_remaining_length(b, 1)
    end = 1 + rl_len + remaining
    if len(b) < end:
        raise MqttNeedMoreData(f"need more bytes: frame declares {remaining}, have {len(b) - 1 - rl_len}")
    body = b[1 + rl_len:end]
    pos = 0

    def read_u16(what: str) -> int:
        nonlocal pos
        if pos + 2 > len(body):
            raise MqttDecodeError(f"truncated {what}")
        (v,) = struct.unpack_from("!H", body, pos)
        pos += 2
        return v

    def read_str(what: str) -> str:
        nonlocal pos
        n = read_u16(f"{what} length")
        if pos + n > len(body):
            raise MqttDecodeError(f"truncated {what}")
        raw = body[pos:pos + n]
        pos += n
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise MqttDecodeError(f"invalid UTF-8 in {what}") from e

    if kind is FrameKind.CONNECT:
        name = read_str("protocol name")
        if pos >= len(body):
            raise MqttDecodeError("truncated protocol level")
        level = body[pos]
        pos += 1
        if name != "MQTT" or level != PROTOCOL_LEVEL:
            raise MqttDecodeError(f"unsupported protocol {name!r} level {level}")
        if pos >= len(body):
            raise MqttDecodeError("truncated connect flags")
        cflags = body[pos]
        pos += 1
        keep_alive = read_u16("keep alive")
        client_id = read_str("client_id")
        if cflags & 0x04:
            raise MqttDecodeError("will flag unsupported")
        username = read_str("username") if cflags & _FLAG_USERNAME else None
        password = read_str("password") if cflags & _FLAG_PASSWORD else None
        frame = MqttFrame(kind, client_id=client_id, keep_alive_s=keep_alive,
                          username=username, password=password)
    elif kind is FrameKind.CONNACK:
        if len(body) < 2:
            raise MqttDecodeError("truncated CONNACK")
        frame = MqttFrame(kind, return_code=body[1])
    elif kind is FrameKind.PUBLISH:
        if flags & 0x06:
            raise MqttDecodeError("QoS > 0 unsupported")
        topic = read_str("topic")
        frame = MqttFrame(kind, topic=topic, payload=bytes(body[pos:]))
    elif kind is FrameKind.SUBSCRIBE:
        packet_id = read_u16("packet id")
        topic = read_str("topic filter")
        if pos >= len(body):
            raise MqttDecodeError("truncated requested QoS")
        frame = MqttFrame(kind, topic=topic, packet_id=packet_id)
    elif kind is FrameKind.SUBACK:
        packet_id = read_u16("packet id")
        if pos >= len(body):
            raise MqttDecodeError("truncated SUBACK return code")
        frame = MqttFrame(kind, packet_id=packet_id, return_code=body[pos])
    else:
        frame = MqttFrame(kind)
    return frame, end
