"""Wire format for the vehicle/cloud link.

A frame is a 4-byte little-endian unsigned payload length, one message
kind byte, then a UTF-8 JSON object.  JSON keeps the payload readable
and evolvable; the binary framing is what has to stay bit-exact.  The
decoder must survive arbitrary bytes: every malformed input raises
FrameError, never anything else.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

KIND_HELLO = 0x00
KIND_MEASUREMENT = 0x01
KIND_ESTIMATE = 0x02

MAX_PAYLOAD = 1 << 20  # 1 MiB
HEADER = struct.Struct("<IB")

__all__ = [
    "FrameError",
    "HelloPacket",
    "MeasurementPacket",
    "EstimatePacket",
    "encode_frame",
    "decode_frame",
    "KIND_HELLO",
    "KIND_MEASUREMENT",
    "KIND_ESTIMATE",
    "MAX_PAYLOAD",
    "HEADER",
]


class FrameError(ValueError):
    """Raised for any frame the decoder cannot accept."""


def _finite(name, value):
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def _finite_tuple(name, values, size):
    out = tuple(_finite(f"{name}[{i}]", v) for i, v in enumerate(values))
    if len(out) != size:
        raise ValueError(f"{name} must have {size} entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class HelloPacket:
    """Session opener naming the speaking side."""

    role: str

    def __post_init__(self):
        if self.role not in ("vehicle", "cloud"):
            raise ValueError(f"unknown role {self.role!r}")


@dataclass(frozen=True)
class MeasurementPacket:
    """One sensor sample plus the reported arc-length position."""

    seq: int
    t: float
    y: tuple
    u: tuple
    gps_s: float

    def __post_init__(self):
        if int(self.seq) < 0:
            raise ValueError("seq must be non-negative")
        object.__setattr__(self, "seq", int(self.seq))
        object.__setattr__(self, "t", _finite("t", self.t))
        object.__setattr__(self, "y", _finite_tuple("y", self.y, 7))
        object.__setattr__(self, "u", _finite_tuple("u", self.u, 4))
        object.__setattr__(self, "gps_s", _finite("gps_s", self.gps_s))


@dataclass(frozen=True)
class EstimatePacket:
    """State estimate answering the measurement with the same seq."""

    seq: int
    t: float
    xhat: tuple
    status: str

    def __post_init__(self):
        if int(self.seq) < 0:
            raise ValueError("seq must be non-negative")
        object.__setattr__(self, "seq", int(self.seq))
        object.__setattr__(self, "t", _finite("t", self.t))
        object.__setattr__(self, "xhat", _finite_tuple("xhat", self.xhat, 14))
        if not isinstance(self.status, str):
            raise ValueError("status must be a string")


def _payload(packet) -> dict:
    if isinstance(packet, HelloPacket):
        return {"role": packet.role}
    if isinstance(packet, MeasurementPacket):
        return {"seq": packet.seq, "t": packet.t, "y": list(packet.y),
                "u": list(packet.u), "gps_s": packet.gps_s}
    if isinstance(packet, EstimatePacket):
        return {"seq": packet.seq, "t": packet.t, "xhat": list(packet.xhat),
                "status": packet.status}
    raise TypeError(f"not a wire packet: {type(packet).__name__}")


def _kind_of(packet) -> int:
    if isinstance(packet, HelloPacket):
        return KIND_HELLO
    if isinstance(packet, MeasurementPacket):
        return KIND_MEASUREMENT
    if isinstance(packet, EstimatePacket):
        return KIND_ESTIMATE
    raise TypeError(f"not a wire packet: {type(packet).__name__}")


def encode_frame(packet) -> bytes:
    """Serialize one packet into a full frame."""
    body = json.dumps(_payload(packet), separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_PAYLOAD:
        raise FrameError(f"payload of {len(body)} bytes exceeds {MAX_PAYLOAD}")
    return HEADER.pack(len(body), _kind_of(packet)) + body


def _require(obj, key, kind):
    if key not in obj:
        raise FrameError(f"{kind} payload missing field {key!r}")
    return obj[key]


def decode_frame(data: bytes):
    """Parse one complete frame back into its packet.

    Unknown JSON fields are ignored so payloads can grow; anything else
    that deviates from the format raises FrameError.
    """
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise FrameError("frame must be bytes")
    data = bytes(data)
    if len(data) < HEADER.size:
        raise FrameError(f"truncated frame: {len(data)} bytes, header needs {HEADER.size}")
    length, kind = HEADER.unpack_from(data)
    if length > MAX_PAYLOAD:
        raise FrameError(f"payload length {length} exceeds {MAX_PAYLOAD}")
    if len(data) != HEADER.size + length:
        raise FrameError(
            f"frame length mismatch: header says {length} payload bytes, "
            f"got {len(data) - HEADER.size}")
    try:
        text = data[HEADER.size:].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FrameError(f"payload is not UTF-8: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FrameError(f"malformed JSON at position {exc.pos}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise FrameError("payload must be a JSON object")
    try:
        if kind == KIND_HELLO:
            return HelloPacket(role=_require(obj, "role", "hello"))
        if kind == KIND_MEASUREMENT:
            return MeasurementPacket(
                seq=_require(obj, "seq", "measurement"),
                t=_require(obj, "t", "measurement"),
                y=_require(obj, "y", "measurement"),
                u=_require(obj, "u", "measurement"),
                gps_s=_require(obj, "gps_s", "measurement"))
        if kind == KIND_ESTIMATE:
            return EstimatePacket(
                seq=_require(obj, "seq", "estimate"),
                t=_require(obj, "t", "estimate"),
                xhat=_require(obj, "xhat", "estimate"),
                status=_require(obj, "status", "estimate"))
    except FrameError:
        raise
    except (TypeError, ValueError) as exc:
        raise FrameError(f"invalid packet fields: {exc}") from None
    raise FrameError(f"unknown message kind 0x{kind:02x}")
