"""Distributed vehicle/cloud session over a loopback TCP socket.

Each node is a sequential loop around one socket.  With an ideal channel
the vehicle runs in lockstep (send a measurement, wait for its
estimate), which makes the estimate stream identical to an in-process
run.  With impairments configured, frames are dropped at the sender by
the seeded channel draws and delayed by a background sender thread, and
the vehicle paces itself in wall-clock time instead of waiting.
"""

from __future__ import annotations

import math
import queue
import socket
import threading
import time

import numpy as np

from ..discretize import DiscreteModel
from ..road import RoadDatabase
from ..simulate import SimConfig, run_plant
from ..suspension import FullCarModel
from .channel import ChannelConfig, SimulatedChannel
from .nodes import CloudNode, SessionResult, SessionRow, gps_error_stream
from .wire import (EstimatePacket, FrameError, HEADER, HelloPacket,
                   MAX_PAYLOAD, MeasurementPacket, decode_frame, encode_frame)

__all__ = ["ConnectionFailed", "SessionLost", "serve_cloud", "run_vehicle"]

_ACCEPT_TIMEOUT = 30.0
_REPLY_TIMEOUT = 5.0
_CONNECT_RETRY_PAUSE = 0.05


class ConnectionFailed(Exception):
    """The peer could not be reached or the handshake failed."""


class SessionLost(Exception):
    """The link died mid-session; partial results are attached."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


def _recv_exact(sock, count):
    buf = b""
    while len(buf) < count:
        chunk = sock.recv(count - len(buf))
        if not chunk:
            if buf:
                raise SessionLost("connection closed mid-frame")
            return None
        buf += chunk
    return buf


def _recv_frame(sock):
    """Read one frame off the socket; None on clean shutdown.

    A bad payload raises FrameError with the stream still aligned on a
    frame boundary; an oversized length field means framing is lost and
    the session cannot continue.
    """
    header = _recv_exact(sock, HEADER.size)
    if header is None:
        return None
    length, _ = HEADER.unpack(header)
    if length > MAX_PAYLOAD:
        raise SessionLost(f"framing lost: payload length {length} exceeds {MAX_PAYLOAD}")
    body = _recv_exact(sock, length)
    if body is None:
        raise SessionLost("connection closed mid-frame")
    return decode_frame(header + body)


class _ImpairedSender:
    """Sender-side channel shim: seeded drops, delays on a timer thread."""

    def __init__(self, sock, config: ChannelConfig, direction: int):
        self._sock = sock
        self._channel = SimulatedChannel(config, direction=direction)
        self._lock = threading.Lock()
        self._queue = queue.PriorityQueue()
        self._seq = 0
        self._stop = threading.Event()
        self._thread = None
        if config.base_delay > 0 or config.jitter > 0:
            self._thread = threading.Thread(target=self._pump, daemon=True)
            self._thread.start()

    def send(self, packet):
        delay, dropped = self._channel.sample_delay()
        self._channel.sent_count += 1
        if dropped:
            self._channel.dropped_count += 1
            return
        frame = encode_frame(packet)
        if self._thread is None:
            with self._lock:
                self._sock.sendall(frame)
        else:
            self._seq += 1
            self._queue.put((time.monotonic() + delay, self._seq, frame))

    def _pump(self):
        while not self._stop.is_set():
            try:
                due, seq, frame = self._queue.get(timeout=0.05)
            except queue.Empty:
                continue
            wait = due - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            try:
                with self._lock:
                    self._sock.sendall(frame)
            except OSError:
                return

    def close(self, drain_timeout=2.0):
        if self._thread is not None:
            deadline = time.monotonic() + drain_timeout
            while not self._queue.empty() and time.monotonic() < deadline:
                time.sleep(0.01)
            self._stop.set()
            self._thread.join(timeout=1.0)

    @property
    def stats(self):
        return self._channel.sent_count, self._channel.dropped_count


def serve_cloud(listen, road_db: RoadDatabase, estimator,
                channel_config: ChannelConfig | None = None,
                accept_timeout=_ACCEPT_TIMEOUT):
    """Run the cloud node: accept one vehicle, answer until it hangs up.

    Returns (cloud rows, estimator records, counters-dict).  A dead link
    mid-session raises SessionLost with the partial result attached.
    """
    channel_config = channel_config or ChannelConfig()
    host, port = listen
    cloud = None
    sender = None

    def _result():
        sent, dropped = sender.stats if sender is not None else (0, 0)
        counters = {"out_of_order": cloud.out_of_order,
                    "decode_errors": cloud.decode_errors,
                    "sent_down": sent, "dropped_down": dropped}
        return cloud.rows, list(estimator.records_), counters

    try:
        with socket.create_server((host, port)) as server:
            server.settimeout(accept_timeout)
            try:
                conn, _ = server.accept()
            except socket.timeout as exc:
                raise ConnectionFailed("no vehicle connected before timeout") from exc
            with conn:
                conn.settimeout(accept_timeout)
                hello = _recv_frame(conn)
                if not isinstance(hello, HelloPacket) or hello.role != "vehicle":
                    raise ConnectionFailed("handshake failed: expected vehicle hello")
                conn.sendall(encode_frame(HelloPacket(role="cloud")))

                cloud = CloudNode(road_db, estimator)
                sender = _ImpairedSender(conn, channel_config, direction=1)
                try:
                    while True:
                        try:
                            packet = _recv_frame(conn)
                        except FrameError:
                            cloud.decode_errors += 1
                            continue
                        if packet is None:
                            break
                        if not isinstance(packet, MeasurementPacket):
                            continue
                        reply = cloud.handle_measurement(packet, now=math.nan)
                        if reply is not None:
                            sender.send(reply)
                finally:
                    sender.close()
    except SessionLost as exc:
        exc.result = _result() if cloud is not None else None
        raise
    except (OSError, socket.timeout) as exc:
        if cloud is not None:
            raise SessionLost(f"cloud socket error: {exc}",
                              _result()) from exc
        raise ConnectionFailed(f"cloud socket error: {exc}") from exc
    return _result()


def run_vehicle(connect, model: FullCarModel, discrete: DiscreteModel,
                road_db: RoadDatabase, sim_config: SimConfig,
                channel_config: ChannelConfig | None = None,
                gps_err_std: float = 0.0,
                reply_timeout=_REPLY_TIMEOUT) -> SessionResult:
    """Run the vehicle node against a listening cloud.

    Ideal channel: lockstep request/reply per step.  Impaired channel:
    wall-clock pacing at the sampling period with non-blocking drains.
    """
    channel_config = channel_config or ChannelConfig()
    trajectory = run_plant(model, discrete, road_db, sim_config)
    gps_rng = gps_error_stream(sim_config.seed)
    ts = sim_config.ts
    steps = len(trajectory)

    host, port = connect
    sock = None
    deadline = time.monotonic() + max(reply_timeout, 1.0)
    while sock is None:
        try:
            sock = socket.create_connection((host, port), timeout=reply_timeout)
        except ConnectionRefusedError as exc:
            # the cloud may simply not be listening yet
            if time.monotonic() >= deadline:
                raise ConnectionFailed(
                    f"cannot reach cloud at {host}:{port}: {exc}") from exc
            time.sleep(_CONNECT_RETRY_PAUSE)
        except OSError as exc:
            raise ConnectionFailed(
                f"cannot reach cloud at {host}:{port}: {exc}") from exc

    vehicle_rows = [SessionRow(seq=p, t_sent=trajectory.times[p]) for p in range(steps)]
    estimates = {}
    duplicate_estimates = 0
    arrivals = []
    inbox = queue.Queue()
    reader_failed = []

    def _reader():
        try:
            while True:
                packet = _recv_frame(sock)
                if packet is None:
                    return
                inbox.put(packet)
        except (SessionLost, FrameError, OSError) as exc:
            reader_failed.append(exc)

    def _accept(packet, now_t):
        nonlocal duplicate_estimates
        if not isinstance(packet, EstimatePacket):
            return
        if packet.seq in estimates:
            duplicate_estimates += 1
            return
        estimates[packet.seq] = packet
        row = vehicle_rows[packet.seq]
        row.t_recv = now_t
        row.staleness = (now_t - row.t_sent) / ts
        arrivals.append((now_t, packet.seq))

    lockstep = channel_config.base_delay == 0 and channel_config.jitter == 0
    result = SessionResult(trajectory=trajectory, vehicle_rows=vehicle_rows,
                           cloud_rows=[], estimates=estimates,
                           held_seq=np.full(steps, -1, dtype=int), records=[])
    reader = None
    try:
        sock.sendall(encode_frame(HelloPacket(role="vehicle")))
        hello = _recv_frame(sock)
        if not isinstance(hello, HelloPacket) or hello.role != "cloud":
            raise ConnectionFailed("handshake failed: expected cloud hello")
        sock.settimeout(None)
        sender = _ImpairedSender(sock, channel_config, direction=0)
        reader = threading.Thread(target=_reader, daemon=True)
        reader.start()

        wall_start = time.monotonic()
        for p in range(steps):
            now_t = trajectory.times[p]
            if not lockstep:
                lag = wall_start + now_t - time.monotonic()
                if lag > 0:
                    time.sleep(lag)
            while True:  # drain whatever already arrived
                try:
                    _accept(inbox.get_nowait(), now_t)
                except queue.Empty:
                    break
            gps_s = float(trajectory.positions[p] + gps_rng.normal(0.0, gps_err_std))
            packet = MeasurementPacket(
                seq=p, t=float(now_t),
                y=tuple(float(v) for v in trajectory.measurements[p]),
                u=tuple(float(v) for v in trajectory.inputs[p]),
                gps_s=gps_s)
            sender.send(packet)
            if lockstep and channel_config.drop_prob == 0:
                try:
                    _accept(inbox.get(timeout=reply_timeout), now_t)
                except queue.Empty:
                    raise SessionLost(f"no estimate for seq {p} within "
                                      f"{reply_timeout}s", result)
            if reader_failed:
                raise SessionLost(f"receive failed: {reader_failed[0]}", result)

        # collect stragglers, then announce we are done sending
        grace = 0.2 + 2 * (channel_config.base_delay_s + channel_config.jitter_s)
        deadline = time.monotonic() + grace
        final_t = trajectory.times[-1]
        while len(estimates) < steps and time.monotonic() < deadline:
            try:
                _accept(inbox.get(timeout=0.05), final_t)
            except queue.Empty:
                if reader_failed:
                    break
        sender.close()
        result.sent_up, result.dropped_up = sender.stats
        result.duplicate_estimates = duplicate_estimates
        try:
            sock.shutdown(socket.SHUT_WR)  # our FIN lets the cloud finish
        except OSError:
            pass
        reader.join(timeout=reply_timeout)
        while True:  # anything that arrived while joining
            try:
                _accept(inbox.get_nowait(), final_t)
            except queue.Empty:
                break
    except OSError as exc:
        raise SessionLost(f"vehicle socket error: {exc}", result) from exc
    finally:
        # a reader blocked in recv holds the socket open; force it out
        try:
            sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        sock.close()
        if reader is not None:
            reader.join(timeout=2.0)

    idx = 0
    current = -1
    for p in range(steps):
        while idx < len(arrivals) and arrivals[idx][0] <= trajectory.times[p]:
            current = arrivals[idx][1]
            idx += 1
        result.held_seq[p] = current
    return result
