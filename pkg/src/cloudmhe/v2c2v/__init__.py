"""Vehicle-to-cloud-to-vehicle loop: wire format, channel model, nodes."""

from .wire import (
    FrameError,
    HelloPacket,
    MeasurementPacket,
    EstimatePacket,
    encode_frame,
    decode_frame,
    KIND_HELLO,
    KIND_MEASUREMENT,
    KIND_ESTIMATE,
    MAX_PAYLOAD,
)
from .channel import ChannelConfig, SimulatedChannel
from .nodes import SessionResult, run_session, write_session_csv
from .tcp import serve_cloud, run_vehicle, ConnectionFailed, SessionLost

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
    "ChannelConfig",
    "SimulatedChannel",
    "SessionResult",
    "run_session",
    "write_session_csv",
    "serve_cloud",
    "run_vehicle",
    "ConnectionFailed",
    "SessionLost",
]
