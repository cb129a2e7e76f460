"""Use-case data model: a declarative device fleet, its XML form, validation,
and expansion into concrete device instances with assigned virtual IPs.

A use case is the shareable unit: parse and serialize are exact inverses on
valid values, unknown XML elements and attributes are hard errors (a silently
misread attack run is worse than a rejected file), and every parse error
names the offending element and line.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from enum import Enum
from xml.parsers import expat
from xml.sax.saxutils import escape, quoteattr

from .attacks import AttackKind, AttackSpec
from .profiles import (
    DataKind,
    DataProfile,
    ProfileError,
    SensorStats,
    TimeKind,
    TimeProfile,
    derive_data_range,
)

DEFAULT_NORMAL_CIDR = ipaddress.IPv4Network("192.168.1.0/24")
DEFAULT_ATTACK_CIDR = ipaddress.IPv4Network("192.168.2.0/24")


class UseCaseError(ValueError):
    """Invalid use-case content."""


class UseCaseParseError(UseCaseError):
    """XML rejected; message carries the offending element and line."""

    def __init__(self, message: str, element: str | None = None, line: int | None = None):
        self.element = element
        self.line = line
        where = ""
        if element is not None:
            where += f"<{element}>"
        if line is not None:
            where += f" line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class Protocol(Enum):
    MQTT = "mqtt"
    COAP = "coap"


class Role(Enum):
    PUBLISHER = "publisher"
    SUBSCRIBER = "subscriber"
    COAP_CLIENT = "coap-client"
    ATTACKER = "attacker"


class CoapMethodName(Enum):
    GET = "GET"
    POST = "POST"
    PUT = "PUT"
    DELETE = "DELETE"


@dataclass(frozen=True)
class Endpoint:
    """Broker or server a device talks to; credentials are MQTT-only."""

    host: str
    port: int
    username: str | None = None
    password: str | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.port <= 65535:
            raise UseCaseError(f"port {self.port} out of range 1-65535")


@dataclass(frozen=True)
class DeviceSpec:
    name: str
    count: int
    protocol: Protocol
    role: Role
    ip_start: ipaddress.IPv4Address
    endpoint: Endpoint
    topic_or_path: str = ""
    time_profile: TimeProfile | None = None
    data_profile: DataProfile | None = None
    attack: AttackSpec | None = None
    coap_method: CoapMethodName | None = None
    confirmable: bool = True


@dataclass(frozen=True)
class UseCase:
    name: str
    devices: tuple[DeviceSpec, ...] = ()
    normal_cidr: ipaddress.IPv4Network = DEFAULT_NORMAL_CIDR
    attack_cidr: ipaddress.IPv4Network = DEFAULT_ATTACK_CIDR


@dataclass(frozen=True)
class DeviceInstance:
    """One emulated device: a spec row expanded at a concrete source IP."""

    spec_name: str
    index: int
    source_ip: ipaddress.IPv4Address
    spec: DeviceSpec

    @property
    def name(self) -> str:
        return f"{self.spec_name}#{self.index}"

    @property
    def role(self) -> Role:
        return self.spec.role

    @property
    def protocol(self) -> Protocol:
        return self.spec.protocol

    @property
    def endpoint(self) -> Endpoint:
        return self.spec.endpoint


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    device: str | None = None

    def __str__(self) -> str:
        prefix = f"[{self.device}] " if self.device else ""
        return f"{prefix}{self.code}: {self.message}"


# --- XML parsing -----------------------------------------------------------

class _Node:
    __slots__ = ("tag", "attrs", "text", "children", "line")

    def __init__(self, tag: str, attrs: dict[str, str], line: int):
        self.tag = tag
        self.attrs = dict(attrs)
        self.text = ""
        self.children: list[_Node] = []
        self.line = line

    def take(self, attr: str, default: str | None = None) -> str | None:
        return self.attrs.pop(attr, default)

    def require(self, attr: str) -> str:
        value = self.attrs.pop(attr, None)
        if value is None:
            raise UseCaseParseError(f"missing required attribute '{attr}'", self.tag, self.line)
        return value

    def reject_leftovers(self) -> None:
        if self.attrs:
            names = ", ".join(sorted(self.attrs))
            raise UseCaseParseError(f"unknown attribute(s): {names}", self.tag, self.line)


def _build_tree(xml_text: str) -> _Node:
    parser = expat.ParserCreate()
    root: list[_Node] = []
    stack: list[_Node] = []

    def start(tag, attrs):
        node = _Node(tag, attrs, parser.CurrentLineNumber)
        if stack:
            stack[-1].children.append(node)
        else:
            root.append(node)
        stack.append(node)

    def end(tag):
        stack.pop()

    def chars(data):
        if stack:
            stack[-1].text += data

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chars
    try:
        parser.Parse(xml_text, True)
    except expat.ExpatError as e:
        raise UseCaseParseError(
            f"malformed XML: {expat.errors.messages[e.code]}", line=e.lineno
        ) from None
    if not root:
        raise UseCaseParseError("malformed XML: empty document")
    return root[0]


def _parse_enum(enum_cls, value: str, what: str, node: _Node):
    try:
        return enum_cls(value)
    except ValueError:
        known = ", ".join(m.value for m in enum_cls)
        raise UseCaseParseError(f"unknown {what} '{value}' (one of: {known})",
                                node.tag, node.line) from None


def _parse_int(value: str, what: str, node: _Node) -> int:
    try:
        return int(value)
    except ValueError:
        raise UseCaseParseError(f"invalid {what} '{value}'", node.tag, node.line) from None


def _parse_float(value: str, what: str, node: _Node) -> float:
    try:
        return float(value)
    except ValueError:
        raise UseCaseParseError(f"invalid {what} '{value}'", node.tag, node.line) from None


def _parse_ip(value: str, node: _Node) -> ipaddress.IPv4Address:
    try:
        return ipaddress.IPv4Address(value)
    except ValueError:
        raise UseCaseParseError(f"invalid IPv4 address '{value}'", node.tag, node.line) from None


def _parse_cidr(value: str, node: _Node) -> ipaddress.IPv4Network:
    try:
        return ipaddress.IPv4Network(value)
    except ValueError:
        raise UseCaseParseError(f"invalid IPv4 CIDR '{value}'", node.tag, node.line) from None


def _parse_time_profile(node: _Node) -> TimeProfile:
    kind = node.require("kind")
    try:
        if kind == "periodic":
            tp = TimeProfile.periodic(_parse_float(node.require("period-s"), "period-s", node))
        elif kind == "random":
            tp = TimeProfile.random_interval(
                _parse_float(node.require("min-s"), "min-s", node),
                _parse_float(node.require("max-s"), "max-s", node),
            )
        elif kind == "event":
            tp = TimeProfile.event(node.require("name"))
        else:
            raise UseCaseParseError(f"unknown time-profile kind '{kind}'", node.tag, node.line)
    except ProfileError as e:
        raise UseCaseParseError(str(e), node.tag, node.line) from None
    node.reject_leftovers()
    return tp


def _parse_data_profile(node: _Node) -> DataProfile:
    kind = node.require("kind")
    try:
        if kind == "numeric":
            dp = DataProfile.numeric(
                _parse_float(node.require("min"), "min", node),
                _parse_float(node.require("max"), "max", node),
                _parse_int(node.take("precision", "2"), "precision", node),
            )
        elif kind == "binary":
            dp = DataProfile.binary()
        elif kind == "string":
            choices = []
            for child in node.children:
                if child.tag != "value":
                    raise UseCaseParseError(f"unknown element '{child.tag}'", child.tag, child.line)
                child.reject_leftovers()
                choices.append(child.text)
            if not choices:
                raise UseCaseParseError("string profile needs at least one <value>",
                                        node.tag, node.line)
            dp = DataProfile.string(tuple(choices))
        elif kind == "derived":
            # Observed sensor stats; the numeric range is min/max of the pair.
            stats = SensorStats(
                _parse_float(node.require("average"), "average", node),
                _parse_float(node.require("mode"), "mode", node),
            )
            lo, hi = derive_data_range(stats)
            dp = DataProfile.numeric(lo, hi, _parse_int(node.take("precision", "2"), "precision", node))
        else:
            raise UseCaseParseError(f"unknown data-profile kind '{kind}'", node.tag, node.line)
    except ProfileError as e:
        raise UseCaseParseError(str(e), node.tag, node.line) from None
    node.reject_leftovers()
    if kind != "string" and node.children:
        child = node.children[0]
        raise UseCaseParseError(f"unknown element '{child.tag}'", child.tag, child.line)
    return dp


def _parse_endpoint(node: _Node) -> Endpoint:
    host = node.require("host")
    port = _parse_int(node.require("port"), "port", node)
    username = node.take("username") or None
    password = node.take("password") or None
    node.reject_leftovers()
    if node.children:
        child = node.children[0]
        raise UseCaseParseError(f"unknown element '{child.tag}'", child.tag, child.line)
    try:
        return Endpoint(host, port, username, password)
    except UseCaseError as e:
        raise UseCaseParseError(str(e), node.tag, node.line) from None


def _parse_device(node: _Node) -> DeviceSpec:
    name = node.require("name")
    count = _parse_int(node.require("count"), "count", node)
    protocol = _parse_enum(Protocol, node.require("protocol"), "protocol", node)
    role = _parse_enum(Role, node.require("role"), "role", node)
    ip_start = _parse_ip(node.require("ip-start"), node)

    method = None
    method_attr = node.take("method")
    if method_attr is not None:
        method = _parse_enum(CoapMethodName, method_attr, "method", node)

    attack = None
    attack_attr = node.take("attack")
    rate_attr = node.take("rate-per-s")
    burst_attr = node.take("burst-count")
    confirmable = node.take("confirmable", "true") == "true"
    node.reject_leftovers()

    endpoint = None
    topic_or_path = ""
    time_profile = None
    data_profile = None
    for child in node.children:
        if child.tag == "endpoint":
            endpoint = _parse_endpoint(child)
        elif child.tag == "topic":
            child.reject_leftovers()
            topic_or_path = child.text.strip()
        elif child.tag == "uri-path":
            child.reject_leftovers()
            topic_or_path = child.text.strip()
        elif child.tag == "time-profile":
            time_profile = _parse_time_profile(child)
        elif child.tag == "data-profile":
            data_profile = _parse_data_profile(child)
        else:
            raise UseCaseParseError(f"unknown element '{child.tag}'", child.tag, child.line)
    if endpoint is None:
        raise UseCaseParseError("device needs an <endpoint>", node.tag, node.line)

    if attack_attr is not None:
        kind = None
        for k in AttackKind:
            if k.value == attack_attr:
                kind = k
        if kind is None:
            known = ", ".join(k.value for k in AttackKind)
            raise UseCaseParseError(f"unknown attack '{attack_attr}' (one of: {known})",
                                    node.tag, node.line)
        attack = AttackSpec(
            kind=kind,
            rate_per_s=_parse_float(rate_attr, "rate-per-s", node) if rate_attr else None,
            topic=topic_or_path,
            burst_count=_parse_int(burst_attr, "burst-count", node) if burst_attr else None,
        )
    elif rate_attr is not None or burst_attr is not None:
        raise UseCaseParseError("rate-per-s/burst-count only apply to attack devices",
                                node.tag, node.line)

    return DeviceSpec(
        name=name,
        count=count,
        protocol=protocol,
        role=role,
        ip_start=ip_start,
        endpoint=endpoint,
        topic_or_path=topic_or_path,
        time_profile=time_profile,
        data_profile=data_profile,
        attack=attack,
        coap_method=method,
        confirmable=confirmable,
    )


def parse_use_case(xml_text: str) -> UseCase:
    """Parse the canonical XML form; unknown elements are rejected."""
    root = _build_tree(xml_text)
    if root.tag != "usecase":
        raise UseCaseParseError(f"expected <usecase> root, got '{root.tag}'", root.tag, root.line)
    name = root.require("name")
    normal = _parse_cidr(root.take("normal-cidr", str(DEFAULT_NORMAL_CIDR)), root)
    attack = _parse_cidr(root.take("attack-cidr", str(DEFAULT_ATTACK_CIDR)), root)
    root.reject_leftovers()
    devices = []
    for child in root.children:
        if child.tag != "device":
            raise UseCaseParseError(f"unknown element '{child.tag}'", child.tag, child.line)
        devices.append(_parse_device(child))
    return UseCase(name=name, devices=tuple(devices), normal_cidr=normal, attack_cidr=attack)


# --- XML serialization -----------------------------------------------------

def _fmt_number(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _fmt_seconds_ms(ms: int) -> str:
    return _fmt_number(ms / 1000)


def _time_profile_xml(tp: TimeProfile) -> str:
    if tp.kind is TimeKind.PERIODIC:
        return f'<time-profile kind="periodic" period-s="{_fmt_seconds_ms(tp.period_ms)}"/>'
    if tp.kind is TimeKind.RANDOM:
        return (f'<time-profile kind="random" min-s="{_fmt_seconds_ms(tp.min_ms)}"'
                f' max-s="{_fmt_seconds_ms(tp.max_ms)}"/>')
    return f'<time-profile kind="event" name={quoteattr(tp.event_name)}/>'


def _data_profile_xml(dp: DataProfile, indent: str) -> list[str]:
    if dp.kind is DataKind.NUMERIC:
        return [f'{indent}<data-profile kind="numeric" min="{_fmt_number(dp.lo)}"'
                f' max="{_fmt_number(dp.hi)}" precision="{dp.precision}"/>']
    if dp.kind is DataKind.BINARY:
        return [f'{indent}<data-profile kind="binary"/>']
    lines = [f'{indent}<data-profile kind="string">']
    lines += [f"{indent}  <value>{escape(c)}</value>" for c in dp.choices]
    lines.append(f"{indent}</data-profile>")
    return lines


def serialize_use_case(uc: UseCase) -> str:
    """Canonical XML; parse_use_case(serialize_use_case(uc)) == uc."""
    lines = [
        f'<usecase name={quoteattr(uc.name)} normal-cidr="{uc.normal_cidr}"'
        f' attack-cidr="{uc.attack_cidr}">'
    ]
    for d in uc.devices:
        attrs = [
            f"name={quoteattr(d.name)}",
            f'count="{d.count}"',
            f'protocol="{d.protocol.value}"',
            f'role="{d.role.value}"',
        ]
        if d.coap_method is not None:
            attrs.append(f'method="{d.coap_method.value}"')
        if d.attack is not None:
            attrs.append(f'attack="{d.attack.kind.value}"')
            if d.attack.rate_per_s is not None:
                attrs.append(f'rate-per-s="{_fmt_number(d.attack.rate_per_s)}"')
            if d.attack.burst_count is not None:
                attrs.append(f'burst-count="{d.attack.burst_count}"')
        attrs.append(f'ip-start="{d.ip_start}"')
        if not d.confirmable:
            attrs.append('confirmable="false"')
        lines.append(f"  <device {' '.join(attrs)}>")
        ep = d.endpoint
        ep_attrs = [f"host={quoteattr(ep.host)}", f'port="{ep.port}"']
        if ep.username is not None:
            ep_attrs.append(f"username={quoteattr(ep.username)}")
        if ep.password is not None:
            ep_attrs.append(f"password={quoteattr(ep.password)}")
        lines.append(f"    <endpoint {' '.join(ep_attrs)}/>")
        if d.topic_or_path:
            tag = "topic" if d.protocol is Protocol.MQTT else "uri-path"
            lines.append(f"    <{tag}>{escape(d.topic_or_path)}</{tag}>")
        if d.time_profile is not None:
            lines.append(f"    {_time_profile_xml(d.time_profile)}")
        if d.data_profile is not None:
            lines += _data_profile_xml(d.data_profile, "    ")
        lines.append("  </device>")
    lines.append("</usecase>")
    return "\n".join(lines) + "\n"


# --- Validation and expansion ----------------------------------------------

def _host_span(net: ipaddress.IPv4Network) -> tuple[int, int]:
    """Usable host addresses as an int range, network/broadcast excluded."""
    return int(net.network_address) + 1, int(net.broadcast_address) - 1


def validate(uc: UseCase) -> list[Violation]:
    """All type invariants plus IP-demand fit; violations are data."""
    out: list[Violation] = []
    if not uc.name:
        out.append(Violation("empty-name", "use case name must be non-empty"))
    seen: set[str] = set()
    for d in uc.devices:
        if d.name in seen:
            out.append(Violation("duplicate-device-name", f"device name '{d.name}' reused", d.name))
        seen.add(d.name)
    if uc.normal_cidr.overlaps(uc.attack_cidr):
        out.append(Violation(
            "cidr-overlap", f"normal {uc.normal_cidr} and attack {uc.attack_cidr} overlap"))

    claimed: list[tuple[int, int, str]] = []
    for d in uc.devices:
        if d.count < 1:
            out.append(Violation("bad-count", f"count must be >= 1, got {d.count}", d.name))
            continue
        if d.role is Role.ATTACKER and d.attack is None:
            out.append(Violation("missing-attack", "attacker device needs an attack kind", d.name))
        if d.role is not Role.ATTACKER and d.attack is not None:
            out.append(Violation("unexpected-attack",
                                 f"role {d.role.value} must not carry an attack", d.name))
        if d.role in (Role.PUBLISHER, Role.COAP_CLIENT):
            if d.time_profile is None or d.data_profile is None:
                out.append(Violation("missing-profile",
                                     f"{d.role.value} needs both time and data profiles", d.name))
            if not d.topic_or_path:
                what = "topic" if d.protocol is Protocol.MQTT else "uri-path"
                out.append(Violation("missing-topic", f"{d.role.value} needs a {what}", d.name))
        if d.role is Role.SUBSCRIBER and not d.topic_or_path:
            out.append(Violation("missing-topic", "subscriber needs a topic", d.name))
        if d.attack is not None and d.attack.kind in (
                AttackKind.MQTT_PACKET_CRAFTING, AttackKind.MQTT_PUBLISH_FLOOD) and not d.topic_or_path:
            out.append(Violation("missing-topic", f"{d.attack.kind.value} needs a topic", d.name))

        needs_method = d.protocol is Protocol.COAP and d.role is not Role.ATTACKER
        if needs_method and d.coap_method is None:
            out.append(Violation("missing-method", "coap device needs a method", d.name))
        if not needs_method and d.coap_method is not None:
            out.append(Violation("unexpected-method",
                                 "method only applies to non-attacker coap devices", d.name))

        net = uc.attack_cidr if d.role is Role.ATTACKER else uc.normal_cidr
        first, last = _host_span(net)
        start = int(d.ip_start)
        end = start + d.count - 1
        if not first <= start <= last:
            out.append(Violation(
                "role/CIDR mismatch",
                f"ip-start {d.ip_start} outside {'attack' if d.role is Role.ATTACKER else 'normal'}"
                f" range {net}", d.name))
        elif end > last:
            out.append(Violation(
                "IP range exhausted",
                f"{d.count} devices from {d.ip_start} run past last usable host"
                f" {ipaddress.IPv4Address(last)} of {net}", d.name))
        claimed.append((start, end, d.name))

    claimed.sort()
    for (s1, e1, n1), (s2, e2, n2) in zip(claimed, claimed[1:]):
        if s2 <= e1:
            out.append(Violation("ip-overlap", f"IP ranges of '{n1}' and '{n2}' overlap", n2))
    return out


def expand_devices(uc: UseCase) -> list[DeviceInstance]:
    """One instance per unit of count, source IPs consecutive from ip_start."""
    instances = []
    for d in uc.devices:
        for i in range(d.count):
            instances.append(DeviceInstance(
                spec_name=d.name,
                index=i,
                source_ip=d.ip_start + i,
                spec=d,
            ))
    return instances
