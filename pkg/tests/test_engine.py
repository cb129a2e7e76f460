"""Victim stubs and the discrete-event run loop, dryrun and live."""

import ipaddress
import socket

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iotfleet.capture import assemble_flows, label_flow
from iotfleet.coap import (
    CODE_CHANGED,
    CODE_CONTENT,
    CODE_CREATED,
    CODE_DELETED,
    CODE_NOT_FOUND,
    Method,
    MsgType,
    make_request,
)
from iotfleet.engine import (
    BrokerStub,
    CoapServerStub,
    EngineError,
    RunConfig,
    ScheduledEvent,
    run_use_case,
    topic_matches,
)
from iotfleet.mqtt import FrameKind, MqttFrame, decode_frame, encode_frame
from iotfleet.profiles import FireRequest
from iotfleet.usecase import parse_use_case


def frames_of(data):
    out = []
    while data:
        frame, used = decode_frame(data)
        out.append(frame)
        data = data[used:]
    return out


class TestTopicMatching:
    @pytest.mark.parametrize(
        "pattern, topic, match",
        [
            ("home/temp", "home/temp", True),
            ("home/temp", "home/temperature", False),
            ("home/+", "home/temp", True),
            ("home/+", "home/a/b", False),
            ("home/#", "home/a/b", True),
            ("#", "anything/at/all", True),
            ("home/+/state", "home/door/state", True),
        ],
    )
    def test_cases(self, pattern, topic, match):
        assert topic_matches(pattern, topic) is match


class TestBrokerStub:
    def test_connect_then_publish(self):
        stub = BrokerStub()
        responses, _ = stub.handle("c", encode_frame(MqttFrame.connect("c")))
        assert frames_of(responses[0])[0].kind is FrameKind.CONNACK
        responses, deliveries = stub.handle("c", encode_frame(MqttFrame.publish("t", b"1")))
        assert responses == [] and deliveries == []
        assert stub.violations == []

    def test_fanout_to_matching_subscriber(self):
        stub = BrokerStub()
        stub.handle("pub", encode_frame(MqttFrame.connect("pub")))
        stub.handle("sub", encode_frame(MqttFrame.connect("sub")))
        responses, _ = stub.handle("sub", encode_frame(MqttFrame.subscribe("home/#", packet_id=3)))
        assert frames_of(responses[0])[0].kind is FrameKind.SUBACK
        raw = encode_frame(MqttFrame.publish("home/temp", b"20"))
        _, deliveries = stub.handle("pub", raw)
        assert deliveries == [("sub", raw)]

    def test_no_delivery_on_filter_miss(self):
        stub = BrokerStub()
        stub.handle("sub", encode_frame(MqttFrame.connect("sub")))
        stub.handle("sub", encode_frame(MqttFrame.subscribe("garage/#", packet_id=1)))
        _, deliveries = stub.handle("sub", encode_frame(MqttFrame.publish("home/t", b"")))
        assert deliveries == []

    def test_publish_before_connect_dropped_and_recorded(self):
        stub = BrokerStub()
        responses, deliveries = stub.handle("x", encode_frame(MqttFrame.publish("t", b"")))
        assert responses == [] and deliveries == []
        assert [v.kind for v in stub.violations] == ["publish-before-connect"]

    def test_subscribe_before_connect_recorded(self):
        stub = BrokerStub()
        responses, _ = stub.handle("x", encode_frame(MqttFrame.subscribe("t", packet_id=1)))
        assert responses == []
        assert [v.kind for v in stub.violations] == ["subscribe-before-connect"]

    def test_ping(self):
        stub = BrokerStub()
        responses, _ = stub.handle("c", encode_frame(MqttFrame(FrameKind.PINGREQ)))
        assert frames_of(responses[0])[0].kind is FrameKind.PINGRESP

    def test_disconnect_forgets_session(self):
        stub = BrokerStub()
        stub.handle("c", encode_frame(MqttFrame.connect("c")))
        stub.handle("c", encode_frame(MqttFrame(FrameKind.DISCONNECT)))
        stub.handle("c", encode_frame(MqttFrame.publish("t", b"")))
        assert len(stub.violations) == 1

    def test_byte_at_a_time_stream(self):
        stub = BrokerStub()
        stream = (encode_frame(MqttFrame.connect("c"))
                  + encode_frame(MqttFrame.subscribe("a/#", packet_id=2))
                  + encode_frame(MqttFrame.publish("a/b", b"v")))
        collected = []
        for i in range(len(stream)):
            responses, deliveries = stub.handle("c", stream[i:i + 1])
            collected += responses
            collected += [d for _, d in deliveries]
        kinds = [f.kind for chunk in collected for f in frames_of(chunk)]
        assert kinds == [FrameKind.CONNACK, FrameKind.SUBACK, FrameKind.PUBLISH]
        assert stub.violations == []

    @given(st.lists(
        st.tuples(st.sampled_from(["alice", "bob"]),
                  st.sampled_from(["connect", "publish", "subscribe", "disconnect"])),
        max_size=30,
    ))
    @settings(max_examples=100, deadline=None)
    def test_subscriptions_only_for_connected_sessions(self, script):
        stub = BrokerStub()
        build = {
            "connect": lambda: MqttFrame.connect("x"),
            "publish": lambda: MqttFrame.publish("t", b""),
            "subscribe": lambda: MqttFrame.subscribe("t", packet_id=1),
            "disconnect": lambda: MqttFrame(FrameKind.DISCONNECT),
        }
        for client, op in script:
            stub.handle(client, encode_frame(build[op]()))
            connected = {c for c, s in stub.sessions.items() if s == "connected"}
            assert set(stub.subscriptions) <= connected


class TestCoapServerStub:
    def test_get_missing_resource(self):
        stub = CoapServerStub()
        reply = stub.handle(make_request(Method.GET, "a/b", message_id=5))
        assert reply.code == CODE_NOT_FOUND
        assert reply.msg_type is MsgType.ACK
        assert reply.message_id == 5

    def test_put_then_get(self):
        stub = CoapServerStub()
        assert stub.handle(make_request(Method.PUT, "a", payload=b"41")).code == CODE_CHANGED
        reply = stub.handle(make_request(Method.GET, "a"))
        assert (reply.code, reply.payload) == (CODE_CONTENT, b"41")

    def test_post_and_delete(self):
        stub = CoapServerStub()
        assert stub.handle(make_request(Method.POST, "a", payload=b"1")).code == CODE_CREATED
        assert stub.handle(make_request(Method.DELETE, "a")).code == CODE_DELETED
        assert stub.handle(make_request(Method.GET, "a")).code == CODE_NOT_FOUND

    def test_non_confirmable_gets_non_reply(self):
        stub = CoapServerStub()
        reply = stub.handle(make_request(Method.GET, "a", confirmable=False))
        assert reply.msg_type is MsgType.NON

    def test_token_echoed(self):
        stub = CoapServerStub()
        reply = stub.handle(make_request(Method.GET, "a", token=b"\x01\x02"))
        assert reply.token == b"\x01\x02"


SMALL_CASE = """\
<usecase name="mini">
  <device name="temp" count="2" protocol="mqtt" role="publisher" ip-start="192.168.1.2">
    <endpoint host="192.168.1.1" port="1883"/>
    <topic>lab/temp</topic>
    <time-profile kind="periodic" period-s="2"/>
    <data-profile kind="numeric" min="20" max="25" precision="1"/>
  </device>
  <device name="watcher" count="1" protocol="mqtt" role="subscriber" ip-start="192.168.1.10">
    <endpoint host="192.168.1.1" port="1883"/>
    <topic>lab/#</topic>
  </device>
  <device name="meter" count="1" protocol="coap" role="coap-client" method="PUT"
          ip-start="192.168.1.20">
    <endpoint host="192.168.1.1" port="5683"/>
    <uri-path>lab/meter</uri-path>
    <time-profile kind="periodic" period-s="3"/>
    <data-profile kind="numeric" min="0" max="9" precision="0"/>
  </device>
  <device name="crafter" count="1" protocol="mqtt" role="attacker"
          attack="mqtt-packet-crafting" ip-start="192.168.2.2">
    <endpoint host="192.168.1.1" port="1883"/>
    <topic>lab/temp</topic>
  </device>
</usecase>
"""


def dryrun(xml=SMALL_CASE, duration=10, delay=4, seed=0, events=()):
    cfg = RunConfig(duration_s=duration, attack_delay_s=delay, time_scale=0, seed=seed)
    return run_use_case(parse_use_case(xml), cfg, events=tuple(events))


class TestDryRun:
    def test_invalid_use_case_refused(self):
        bad = SMALL_CASE.replace('ip-start="192.168.2.2"', 'ip-start="192.168.1.99"')
        with pytest.raises(EngineError) as info:
            dryrun(bad)
        assert "role/CIDR" in str(info.value)

    def test_records_time_ordered_within_duration(self):
        result = dryrun()
        times = [r.ts_us for r in result.records]
        assert times == sorted(times)
        assert all(0 <= t < 10_000_000 for t in times)

    def test_periodic_publishes_on_schedule(self):
        result = dryrun()
        fires = [
            r.ts_us for r in result.records
            if r.src_ip == "192.168.1.2" and r.payload and r.payload[0] >> 4 == 3
        ]
        assert fires == [2_000_000, 4_000_000, 6_000_000, 8_000_000]

    def test_same_seed_reproduces_byte_identical_records(self):
        a, b = dryrun(seed=11), dryrun(seed=11)
        assert a.records == b.records
        assert a.report.schedule_trace_digest == b.report.schedule_trace_digest

    def test_different_seed_changes_trace(self):
        a, b = dryrun(seed=1), dryrun(seed=2)
        assert a.report.schedule_trace_digest != b.report.schedule_trace_digest

    def test_time_scale_only_paces_never_reorders(self):
        slow = run_use_case(
            parse_use_case(SMALL_CASE),
            RunConfig(duration_s=2, attack_delay_s=1, time_scale=0.05, seed=3),
        )
        instant = run_use_case(
            parse_use_case(SMALL_CASE),
            RunConfig(duration_s=2, attack_delay_s=1, time_scale=0, seed=3),
        )
        assert slow.records == instant.records

    def test_no_attack_traffic_before_delay(self):
        result = dryrun()
        attack_net = ipaddress.IPv4Network("192.168.2.0/24")
        for r in result.records:
            if (ipaddress.IPv4Address(r.src_ip) in attack_net
                    or ipaddress.IPv4Address(r.dst_ip) in attack_net):
                assert r.ts_us >= 4_000_000

    def test_craft_violations_recorded(self):
        # One crafter, delay 4, repeat every 30s: a single shot in 10s.
        result = dryrun()
        kinds = [v.kind for v in result.report.violations]
        assert kinds == ["publish-before-connect"]

    def test_subscriber_receives_matching_publishes(self):
        result = dryrun()
        delivered = [
            r for r in result.records
            if r.dst_ip == "192.168.1.10" and r.payload and r.payload[0] >> 4 == 3
        ]
        # Two sensors firing at 2,4,6,8 fan out to the one subscriber.
        assert len(delivered) == 8

    def test_coap_roundtrip_recorded_as_udp(self):
        result = dryrun()
        requests = [r for r in result.records if r.src_ip == "192.168.1.20"]
        replies = [r for r in result.records if r.dst_ip == "192.168.1.20"]
        assert requests and replies
        assert all(r.l4 == "udp" for r in requests + replies)
        assert all(r.dst_port == 5683 for r in requests)

    def test_report_counts(self):
        result = dryrun()
        report = result.report
        assert report.use_case == "mini"
        assert report.device_count == 5
        assert report.attacker_count == 1
        assert report.total_records == len(result.records)
        assert report.mode == "dryrun"
        assert report.wall_seconds >= 0
        assert len(report.schedule_trace_digest) == 16

    def test_flows_label_cleanly(self):
        result = dryrun()
        flows = assemble_flows(result.records)
        labels = {label_flow(f, ipaddress.IPv4Network("192.168.2.0/24")) for f in flows}
        assert labels == {"normal", "attack"}


EVENT_CASE = """\
<usecase name="evented">
  <device name="door" count="1" protocol="mqtt" role="publisher" ip-start="192.168.1.2">
    <endpoint host="192.168.1.1" port="1883"/>
    <topic>lab/door</topic>
    <time-profile kind="event" name="door-open"/>
    <data-profile kind="string"><value>open</value></data-profile>
  </device>
</usecase>
"""


class TestScheduledEvents:
    def test_event_profile_fires_only_on_trigger(self):
        silent = dryrun(EVENT_CASE, duration=5, delay=0)
        publishes = [r for r in silent.records if r.payload and r.payload[0] >> 4 == 3]
        assert publishes == []

        triggered = dryrun(
            EVENT_CASE, duration=5, delay=0,
            events=[ScheduledEvent(3.0, FireRequest("door-open", "open"))],
        )
        publishes = [r for r in triggered.records if r.payload and r.payload[0] >> 4 == 3]
        assert len(publishes) == 1
        assert publishes[0].ts_us == 3_000_000
        assert b"open" in publishes[0].payload

    def test_unmatched_event_name_is_ignored(self):
        result = dryrun(
            EVENT_CASE, duration=5, delay=0,
            events=[ScheduledEvent(1.0, FireRequest("window-open", "x"))],
        )
        publishes = [r for r in result.records if r.payload and r.payload[0] >> 4 == 3]
        assert publishes == []


class TestRunConfig:
    def test_mode_checked(self):
        with pytest.raises(EngineError):
            RunConfig(mode="replay")

    def test_delay_must_fit_duration(self):
        with pytest.raises(EngineError):
            RunConfig(duration_s=10, attack_delay_s=11)

    def test_live_needs_real_clock(self):
        with pytest.raises(EngineError):
            RunConfig(mode="live", time_scale=0)


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


LIVE_CASE = """\
<usecase name="livewire" normal-cidr="127.77.1.0/24" attack-cidr="127.77.2.0/24">
  <device name="pub" count="1" protocol="mqtt" role="publisher" ip-start="127.77.1.2">
    <endpoint host="127.0.0.1" port="{mqtt_port}"/>
    <topic>live/t</topic>
    <time-profile kind="periodic" period-s="0.2"/>
    <data-profile kind="numeric" min="1" max="2" precision="1"/>
  </device>
  <device name="crafter" count="1" protocol="mqtt" role="attacker"
          attack="mqtt-packet-crafting" ip-start="127.77.2.2">
    <endpoint host="127.0.0.1" port="{mqtt_port}"/>
    <topic>live/t</topic>
  </device>
  <device name="optioner" count="1" protocol="coap" role="attacker"
          attack="coap-invalid-option" rate-per-s="10" ip-start="127.77.2.3">
    <endpoint host="127.0.0.1" port="{coap_port}"/>
  </device>
</usecase>
"""


@pytest.mark.slow
class TestLiveMode:
    def test_loopback_run_end_to_end(self):
        xml = LIVE_CASE.format(mqtt_port=free_port(), coap_port=free_port())
        cfg = RunConfig(mode="live", duration_s=1.5, attack_delay_s=0.5,
                        time_scale=1.0, seed=4)
        result = run_use_case(parse_use_case(xml), cfg)

        assert result.report.errors == ()
        assert result.records
        times = [r.ts_us for r in result.records]
        assert times == sorted(times)
        assert all(0 <= t < 1_500_000 for t in times)

        publishes = [r for r in result.records
                     if r.src_ip == "127.77.1.2" and r.payload[0] >> 4 == 3]
        assert len(publishes) >= 3

        assert any(v.kind == "publish-before-connect"
                   for v in result.report.violations)
        assert result.report.leak_bytes >= 24

        attack_net = ipaddress.IPv4Network("127.77.2.0/24")
        flows = assemble_flows(result.records)
        assert {label_flow(f, attack_net) for f in flows} == {"normal", "attack"}

    def test_unbindable_device_reported_not_fatal(self):
        xml = LIVE_CASE.format(mqtt_port=free_port(), coap_port=free_port()).replace(
            'normal-cidr="127.77.1.0/24"', 'normal-cidr="203.0.113.0/24"'
        ).replace("127.77.1.2", "203.0.113.2")
        cfg = RunConfig(mode="live", duration_s=1.0, attack_delay_s=0.2,
                        time_scale=1.0, seed=4)
        result = run_use_case(parse_use_case(xml), cfg)
        assert any("pub#0" in e for e in result.report.errors)
        assert any(v.kind == "publish-before-connect"
                   for v in result.report.violations)
