"""IoT device-fleet traffic emulator.

Declarative use cases describe MQTT and CoAP device fleets, normal and
malicious; the engine runs them against protocol-aware victim stubs (or real
sockets) and the capture pipeline turns the traffic into pcaps and labeled
per-flow feature tables ready for intrusion-detection experiments.
"""

from .attacks import (
    AttackKind,
    AttackSpec,
    AttackTrace,
    TraceFrame,
    coap_invalid_option,
    coap_null_uripath,
    estimate_leak,
    mqtt_packet_crafting,
    mqtt_publish_flood,
)
from .capture import (
    FEATURE_COLUMNS,
    Flow,
    FlowAssembler,
    PacketRecord,
    assemble_flows,
    extract_features,
    label_flow,
    read_pcap,
    write_dataset_csv,
    write_pcap,
)
from .engine import (
    BrokerStub,
    CoapServerStub,
    EngineError,
    FaultEvent,
    ProtocolViolation,
    RunConfig,
    RunReport,
    RunResult,
    ScheduledEvent,
    run_use_case,
)
from .profiles import (
    DataProfile,
    FireRequest,
    ProfileError,
    SeededRng,
    SensorStats,
    TimeProfile,
    derive_data_range,
)
from .usecase import (
    DeviceInstance,
    DeviceSpec,
    Endpoint,
    Protocol,
    Role,
    UseCase,
    UseCaseError,
    UseCaseParseError,
    Violation,
    expand_devices,
    parse_use_case,
    serialize_use_case,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "AttackKind",
    "AttackSpec",
    "AttackTrace",
    "BrokerStub",
    "CoapServerStub",
    "DataProfile",
    "DeviceInstance",
    "DeviceSpec",
    "Endpoint",
    "EngineError",
    "FEATURE_COLUMNS",
    "FaultEvent",
    "FireRequest",
    "Flow",
    "FlowAssembler",
    "PacketRecord",
    "ProfileError",
    "Protocol",
    "ProtocolViolation",
    "Role",
    "RunConfig",
    "RunReport",
    "RunResult",
    "ScheduledEvent",
    "SeededRng",
    "SensorStats",
    "TimeProfile",
    "TraceFrame",
    "UseCase",
    "UseCaseError",
    "UseCaseParseError",
    "Violation",
    "assemble_flows",
    "coap_invalid_option",
    "coap_null_uripath",
    "derive_data_range",
    "estimate_leak",
    "expand_devices",
    "extract_features",
    "label_flow",
    "mqtt_packet_crafting",
    "mqtt_publish_flood",
    "parse_use_case",
    "read_pcap",
    "run_use_case",
    "serialize_use_case",
    "validate",
    "write_dataset_csv",
    "write_pcap",
]
