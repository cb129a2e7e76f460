"""Byte-exact CoAP message codec (RFC 7252 subset).

Covers the four request methods, Uri-Path options and piggybacked responses.
Two affordances exist for attack construction: messages may carry arbitrary
options built directly (bypassing make_request's hygiene), and `raw_options`
emits pre-encoded option bytes verbatim so deliberately malformed encodings
are expressible. Decoding never fails on broken options; it returns the
message flagged with a MalformedOption diagnostic, because victim stubs must
observe malformed traffic. Observe, blockwise and DTLS are out of scope.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum

URI_PATH = 11

# Option numbers from the RFC 7252 / core registries this codec recognizes.
_KNOWN_OPTIONS = frozenset({1, 3, 4, 5, 7, 8, 11, 12, 14, 15, 17, 20, 23, 27, 28, 35, 39, 60})
_EXPERIMENTAL_FLOOR = 65000

MALFORMED_OPTION = "MalformedOption"


class CoapError(ValueError):
    """Message violates an invariant or cannot be encoded."""


class CoapDecodeError(CoapError):
    """Header-level breakage: wrong version or truncated fixed header."""


class MsgType(Enum):
    CON = 0
    NON = 1
    ACK = 2
    RST = 3


class Method(Enum):
    GET = 1
    POST = 2
    PUT = 3
    DELETE = 4


def response_code(klass: int, detail: int) -> int:
    """Pack a class.detail response code into its single-byte form."""
    return (klass << 5) | detail


CODE_EMPTY = 0
CODE_CREATED = response_code(2, 1)
CODE_DELETED = response_code(2, 2)
CODE_CHANGED = response_code(2, 4)
CODE_CONTENT = response_code(2, 5)
CODE_BAD_OPTION = response_code(4, 2)
CODE_NOT_FOUND = response_code(4, 4)


def code_name(code: int) -> str:
    """Dotted form of a code byte, e.g. 69 -> '2.05'."""
    return f"{code >> 5}.{code & 0x1F:02d}"


@dataclass(frozen=True)
class CoapOption:
    number: int
    value: bytes

    def __post_init__(self) -> None:
        if not 0 <= self.number <= 0xFFFF:
            raise CoapError(f"option number {self.number} out of range")

    @property
    def critical(self) -> bool:
        return bool(self.number & 1)


@dataclass(frozen=True)
class CoapMessage:
    msg_type: MsgType
    code: int
    message_id: int
    token: bytes = b""
    options: tuple[CoapOption, ...] = ()
    payload: bytes = b""
    # Escape hatch: emitted verbatim in place of the canonical option encoding.
    raw_options: bytes | None = None
    # Decode-side flags; excluded from equality so round-trip laws stay clean.
    diagnostics: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if len(self.token) > 8:
            raise CoapError(f"token length {len(self.token)} exceeds 8 bytes")
        if not 0 <= self.message_id <= 0xFFFF:
            raise CoapError(f"message id {self.message_id} out of range")
        if not 0 <= self.code <= 0xFF:
            raise CoapError(f"code {self.code} out of range")

    @property
    def malformed(self) -> bool:
        return any(d.startswith(MALFORMED_OPTION) for d in self.diagnostics)

    def uri_path(self) -> str:
        return "/".join(o.value.decode("utf-8", "replace") for o in self.options
                        if o.number == URI_PATH)


def make_request(method: Method, uri_path: str, payload: bytes = b"",
                 message_id: int = 0, confirmable: bool = True,
                 token: bytes = b"") -> CoapMessage:
    """Well-formed request: one Uri-Path option per non-empty path segment."""
    segments = uri_path.split("/") if uri_path else []
    if any(not s for s in segments):
        raise CoapError(f"empty Uri-Path segment in {uri_path!r}")
    if method is Method.GET and payload:
        raise CoapError("GET requests carry no payload")
    options = tuple(CoapOption(URI_PATH, s.encode("utf-8")) for s in segments)
    return CoapMessage(
        msg_type=MsgType.CON if confirmable else MsgType.NON,
        code=method.value,
        message_id=message_id,
        token=token,
        options=options,
        payload=payload,
    )


def _encode_nibble(value: int, what: str) -> tuple[int, bytes]:
    """(nibble, extension bytes) for an option delta or length."""
    if value < 0:
        raise CoapError(f"option {what} not representable: {value} < 0 (options out of order?)")
    if value <= 12:
        return value, b""
    if value <= 268:
        return 13, bytes([value - 13])
    if value <= 65804:
        return 14, struct.pack("!H", value - 269)
    raise CoapError(f"option {what} {value} not representable")


def encode_message(m: CoapMessage) -> bytes:
    """4-byte header, token, delta-encoded options, 0xFF marker + payload."""
    out = bytearray()
    out.append((1 << 6) | (m.msg_type.value << 4) | len(m.token))
    out.append(m.code)
    out += struct.pack("!H", m.message_id)
    out += m.token
    if m.raw_options is not None:
        out += m.raw_options
    else:
        prev = 0
        for opt in m.options:
            delta_nib, delta_ext = _encode_nibble(opt.number - prev, "delta")
            len_nib, len_ext = _encode_nibble(len(opt.value), "length")
            out.append((delta_nib << 4) | len_nib)
            out += delta_ext
            out += len_ext
            out += opt.value
            prev = opt.number
    if m.payload:
        out.append(0xFF)
        out += m.payload
    return bytes(out)


def _decode_nibble(nibble: int, b: bytes, pos: int) -> tuple[int, int]:
    """Resolve a delta/length nibble and its extension; returns (value, pos)."""
    if nibble <= 12:
        return nibble, pos
    if nibble == 13:
        if pos >= len(b):
            raise IndexError
        return b[pos] + 13, pos + 1
    if nibble == 14:
        if pos + 2 > len(b):
            raise IndexError
        return struct.unpack_from("!H", b, pos)[0] + 269, pos + 2
    raise AssertionError("nibble 15 handled by caller")


def decode_message(b: bytes) -> CoapMessage:
    """Structural inverse of encode_message on valid inputs.

    Malformed options do not raise: parsing stops and the message comes back
    flagged with a MalformedOption diagnostic. Unrecognized *critical* options
    are flagged the same way (they are what the invalid-option attack sends).
    """
    if len(b) < 4:
        raise CoapDecodeError(f"truncated header: {len(b)} bytes")
    version = b[0] >> 6
    if version != 1:
        raise CoapDecodeError(f"unsupported version {version}")
    msg_type = MsgType((b[0] >> 4) & 0x3)
    token_len = b[0] & 0x0F
    if token_len > 8:
        raise CoapDecodeError(f"token length {token_len} exceeds 8")
    code = b[1]
    (message_id,) = struct.unpack_from("!H", b, 2)
    if 4 + token_len > len(b):
        raise CoapDecodeError("truncated token")
    token = bytes(b[4:4 + token_len])

    options: list[CoapOption] = []
    diagnostics: list[str] = []
    payload = b""
    pos = 4 + token_len
    number = 0
    while pos < len(b):
        head = b[pos]
        if head == 0xFF:
            payload = bytes(b[pos + 1:])
            if not payload:
                diagnostics.append(f"{MALFORMED_OPTION}: payload marker with empty payload")
            break
        pos += 1
        delta_nib, len_nib = head >> 4, head & 0x0F
        if delta_nib == 15 or len_nib == 15:
            diagnostics.append(f"{MALFORMED_OPTION}: reserved nibble 15 in option header")
            break
        try:
            delta, pos = _decode_nibble(delta_nib, b, pos)
            length, pos = _decode_nibble(len_nib, b, pos)
        except IndexError:
            diagnostics.append(f"{MALFORMED_OPTION}: truncated option header extension")
            break
        if pos + length > len(b):
            diagnostics.append(f"{MALFORMED_OPTION}: option value runs past message end")
            break
        number += delta
        options.append(CoapOption(number, bytes(b[pos:pos + length])))
        pos += length

    for opt in options:
        if opt.number in _KNOWN_OPTIONS:
            continue
        # Unknown electives are silently ignored; unknown criticals must be
        # rejected, and the 65000+ experimental range no deployment claims
        # gets the same treatment.
        if opt.critical or opt.number >= _EXPERIMENTAL_FLOOR:
            diagnostics.append(f"{MALFORMED_OPTION}: unrecognized critical option {opt.number}")

    return CoapMessage(
        msg_type=msg_type,
        code=code,
        message_id=message_id,
        token=token,
        options=tuple(options),
        payload=payload,
        diagnostics=tuple(diagnostics),
    )
