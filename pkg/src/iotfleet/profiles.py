"""Device behaviour profiles: when a device fires and what value it emits.

Time profiles schedule emissions (periodic, random-interval, or event-driven);
data profiles draw the emitted values (numeric range, binary, or string
choices). All times are held as integer milliseconds internally so periodic
schedules never accumulate floating-point drift; the XML layer converts from
decimal seconds.
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass
from enum import Enum


class ProfileError(ValueError):
    """Invalid profile configuration or misuse of a profile operation."""


class TimeKind(Enum):
    PERIODIC = "periodic"
    RANDOM = "random"
    EVENT = "event"


class DataKind(Enum):
    NUMERIC = "numeric"
    BINARY = "binary"
    STRING = "string"


@dataclass(frozen=True)
class TimeProfile:
    """Emission schedule. Only the fields of the active kind are meaningful."""

    kind: TimeKind
    period_ms: int = 0
    min_ms: int = 0
    max_ms: int = 0
    event_name: str = ""

    def __post_init__(self) -> None:
        if self.kind is TimeKind.PERIODIC and self.period_ms <= 0:
            raise ProfileError(f"periodic profile needs period > 0, got {self.period_ms} ms")
        if self.kind is TimeKind.RANDOM and not 0 < self.min_ms <= self.max_ms:
            raise ProfileError(
                f"random profile needs 0 < min <= max, got [{self.min_ms}, {self.max_ms}] ms"
            )
        if self.kind is TimeKind.EVENT and not self.event_name:
            raise ProfileError("event profile needs a non-empty event name")

    @classmethod
    def periodic(cls, period_s: float) -> "TimeProfile":
        return cls(TimeKind.PERIODIC, period_ms=_to_ms(period_s))

    @classmethod
    def random_interval(cls, min_s: float, max_s: float) -> "TimeProfile":
        return cls(TimeKind.RANDOM, min_ms=_to_ms(min_s), max_ms=_to_ms(max_s))

    @classmethod
    def event(cls, name: str) -> "TimeProfile":
        return cls(TimeKind.EVENT, event_name=name)


@dataclass(frozen=True)
class DataProfile:
    """Value distribution a device emits."""

    kind: DataKind
    lo: float = 0.0
    hi: float = 0.0
    precision: int = 0
    choices: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind is DataKind.NUMERIC:
            if not self.lo <= self.hi:
                raise ProfileError(f"numeric profile needs lo <= hi, got [{self.lo}, {self.hi}]")
            if self.precision < 0:
                raise ProfileError(f"precision must be >= 0, got {self.precision}")
        if self.kind is DataKind.STRING and not self.choices:
            raise ProfileError("string profile needs at least one choice")

    @classmethod
    def numeric(cls, lo: float, hi: float, precision: int = 2) -> "DataProfile":
        return cls(DataKind.NUMERIC, lo=lo, hi=hi, precision=precision)

    @classmethod
    def binary(cls) -> "DataProfile":
        return cls(DataKind.BINARY)

    @classmethod
    def string(cls, choices: tuple[str, ...]) -> "DataProfile":
        return cls(DataKind.STRING, choices=tuple(choices))


@dataclass(frozen=True)
class SensorStats:
    """Observed real-sensor statistics from which a numeric range is derived."""

    average: float
    mode: float

    def __post_init__(self) -> None:
        for name in ("average", "mode"):
            v = getattr(self, name)
            if v != v or v in (float("inf"), float("-inf")):
                raise ProfileError(f"{name} must be finite, got {v}")


@dataclass(frozen=True)
class FireRequest:
    """An externally triggered emission, addressed to an event name."""

    event_name: str
    payload: object

    def __post_init__(self) -> None:
        if not self.event_name:
            raise ProfileError("event name must be non-empty")


class SeededRng:
    """Deterministic random stream: identical (seed, stream_id) gives an
    identical sequence, and streams with different ids never interfere."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = seed
        self.stream_id = stream_id
        digest = hashlib.blake2b(
            struct.pack("<qq", seed & 0x7FFFFFFFFFFFFFFF, stream_id & 0x7FFFFFFFFFFFFFFF),
            digest_size=16,
        ).digest()
        self._rng = random.Random(int.from_bytes(digest, "little"))

    def uniform(self, lo: float, hi: float) -> float:
        return self._rng.uniform(lo, hi)

    def randint(self, lo: int, hi: int) -> int:
        return self._rng.randint(lo, hi)

    def choice(self, seq):
        return seq[self._rng.randrange(len(seq))]


def stream_id_for(spec_name: str, index: int) -> int:
    """Stable per-device stream id; adding a device never perturbs others."""
    digest = hashlib.blake2b(f"{spec_name}#{index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_data_range(stats: SensorStats) -> tuple[float, float]:
    """Numeric range from real-sensor stats: (min, max) of average and mode."""
    return min(stats.average, stats.mode), max(stats.average, stats.mode)


def next_value(dp: DataProfile, rng: SeededRng):
    """Draw one value: numeric in [lo, hi] rounded to `precision` decimals
    (clamped so rounding never escapes the range), binary 0/1, or a choice."""
    if dp.kind is DataKind.NUMERIC:
        v = round(rng.uniform(dp.lo, dp.hi), dp.precision)
        return min(max(v, dp.lo), dp.hi)
    if dp.kind is DataKind.BINARY:
        return rng.randint(0, 1)
    return rng.choice(dp.choices)


def format_value(dp: DataProfile, value) -> str:
    """Render a drawn value as the payload text a device would publish."""
    if dp.kind is DataKind.NUMERIC:
        return f"{value:.{dp.precision}f}"
    return str(value)


def next_fire_ms(tp: TimeProfile, now_ms: int, rng: SeededRng) -> int:
    """Absolute time of the next emission, integer milliseconds."""
    if tp.kind is TimeKind.PERIODIC:
        return now_ms + tp.period_ms
    if tp.kind is TimeKind.RANDOM:
        return now_ms + rng.randint(tp.min_ms, tp.max_ms)
    raise ProfileError("event-driven profiles fire via trigger_event, not the clock")


def next_fire_time(tp: TimeProfile, now: float, rng: SeededRng) -> float:
    """Seconds-facing wrapper over next_fire_ms."""
    return next_fire_ms(tp, _to_ms(now), rng) / 1000.0


def trigger_event(event_name: str, payload: object) -> FireRequest:
    """Build the request the engine delivers to devices whose time profile is
    EVENT with a matching name. Delivery to zero devices is not an error."""
    return FireRequest(event_name, payload)


def _to_ms(seconds: float) -> int:
    ms = round(float(seconds) * 1000)
    return int(ms)
