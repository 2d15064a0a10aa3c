"""In-process vehicle/cloud session over the simulated channel.

The loop is a deterministic discrete-event run in simulation time: the
vehicle emits one measurement frame per plant step, the cloud answers
each accepted measurement with an estimate frame, and both directions
pass through the delaying/dropping channel.  Frames cross the real wire
format even though everything runs in one thread, so the session
exercises exactly what the socket transport exercises.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ..discretize import DiscreteModel
from ..road import RoadDatabase
from ..simulate import SimConfig, Trajectory, run_plant
from ..suspension import FullCarModel
from .channel import ChannelConfig, SimulatedChannel
from .wire import (EstimatePacket, FrameError, MeasurementPacket,
                   decode_frame, encode_frame)

GPS_STREAM = 997  # sub-seed of the localization-error draw stream

__all__ = ["SessionRow", "SessionResult", "CloudNode", "gps_error_stream",
           "run_session", "write_session_csv"]


@dataclass
class SessionRow:
    """One log line: when a seq was sent and when its answer arrived."""

    seq: int
    t_sent: float
    t_recv: float = math.nan
    staleness: float = math.nan  # [steps]


@dataclass
class SessionResult:
    trajectory: Trajectory
    vehicle_rows: list
    cloud_rows: list
    estimates: dict                  # seq -> EstimatePacket (vehicle side)
    held_seq: np.ndarray             # per step: seq of the last estimate on hand
    records: list                    # cloud-side estimator records
    out_of_order: int = 0
    decode_errors: int = 0
    duplicate_estimates: int = 0
    sent_up: int = 0
    dropped_up: int = 0
    sent_down: int = 0
    dropped_down: int = 0


def gps_error_stream(seed):
    """Localization-error generator; a dedicated stream off the run seed."""
    return np.random.default_rng([int(seed), GPS_STREAM])


class CloudNode:
    """Remote-agent logic: road lookup plus one estimator step per packet.

    Packets are accepted in strictly increasing seq order; older or
    duplicate seqs and undecodable frames are counted and skipped.
    """

    def __init__(self, road_db: RoadDatabase, estimator):
        self.road_db = road_db
        self.estimator = estimator
        estimator.reset()
        self.last_seq = -1
        self.out_of_order = 0
        self.decode_errors = 0
        self.rows = []

    def handle_frame(self, frame: bytes, now: float):
        """Process one raw frame; returns the reply packet or None."""
        try:
            packet = decode_frame(frame)
        except FrameError:
            self.decode_errors += 1
            return None
        if not isinstance(packet, MeasurementPacket):
            return None
        return self.handle_measurement(packet, now)

    def handle_measurement(self, packet: MeasurementPacket, now: float):
        if packet.seq <= self.last_seq:
            self.out_of_order += 1
            return None
        self.last_seq = packet.seq
        road = self.road_db.lookup(packet.gps_s)
        record = self.estimator.step(np.asarray(packet.y), u=np.asarray(packet.u),
                                     road=road)
        ts = self.estimator.discrete.ts
        self.rows.append(SessionRow(seq=packet.seq, t_sent=packet.t, t_recv=now,
                                    staleness=(now - packet.t) / ts))
        return EstimatePacket(seq=packet.seq, t=packet.t,
                              xhat=tuple(float(v) for v in record.xhat),
                              status=record.qp_status)


def run_session(model: FullCarModel, discrete: DiscreteModel,
                road_db: RoadDatabase, sim_config: SimConfig, estimator,
                channel_config: ChannelConfig | None = None,
                gps_err_std: float = 0.0) -> SessionResult:
    """Run the full networked loop in simulation time.

    Deterministic for fixed seeds: the plant seed fixes truth and
    measurement noise, the channel seed fixes drops and jitter, and the
    localization errors come from their own stream off the plant seed.
    """
    channel_config = channel_config or ChannelConfig()
    trajectory = run_plant(model, discrete, road_db, sim_config)
    up = SimulatedChannel(channel_config, direction=0)
    down = SimulatedChannel(channel_config, direction=1)
    gps_rng = gps_error_stream(sim_config.seed)
    cloud = CloudNode(road_db, estimator)
    ts = sim_config.ts

    steps = len(trajectory)
    vehicle_rows = [SessionRow(seq=p, t_sent=trajectory.times[p]) for p in range(steps)]
    estimates = {}
    duplicate_estimates = 0
    arrivals = []  # (t_recv, seq) in arrival order

    order = itertools.count()
    events = []
    for p in range(steps):
        heapq.heappush(events, (trajectory.times[p], next(order), "step", p))

    while events:
        now, _, kind, payload = heapq.heappop(events)
        if kind == "step":
            p = payload
            gps_s = float(trajectory.positions[p] + gps_rng.normal(0.0, gps_err_std))
            packet = MeasurementPacket(
                seq=p, t=float(trajectory.times[p]),
                y=tuple(float(v) for v in trajectory.measurements[p]),
                u=tuple(float(v) for v in trajectory.inputs[p]),
                gps_s=gps_s)
            delay, dropped = up.sample_delay()
            up.sent_count += 1
            if dropped:
                up.dropped_count += 1
            else:
                heapq.heappush(events, (now + delay, next(order), "to_cloud",
                                        encode_frame(packet)))
        elif kind == "to_cloud":
            reply = cloud.handle_frame(payload, now)
            if reply is not None:
                delay, dropped = down.sample_delay()
                down.sent_count += 1
                if dropped:
                    down.dropped_count += 1
                else:
                    heapq.heappush(events, (now + delay, next(order), "to_vehicle",
                                            encode_frame(reply)))
        else:  # to_vehicle
            try:
                packet = decode_frame(payload)
            except FrameError:
                continue
            if not isinstance(packet, EstimatePacket):
                continue
            if packet.seq in estimates:
                duplicate_estimates += 1
                continue
            estimates[packet.seq] = packet
            row = vehicle_rows[packet.seq]
            row.t_recv = now
            row.staleness = (now - row.t_sent) / ts
            arrivals.append((now, packet.seq))

    # last-received-estimate hold: which seq the vehicle would act on per step
    held_seq = np.full(steps, -1, dtype=int)
    idx = 0
    current = -1
    for p in range(steps):
        while idx < len(arrivals) and arrivals[idx][0] <= trajectory.times[p]:
            current = arrivals[idx][1]
            idx += 1
        held_seq[p] = current

    return SessionResult(
        trajectory=trajectory,
        vehicle_rows=vehicle_rows,
        cloud_rows=cloud.rows,
        estimates=estimates,
        held_seq=held_seq,
        records=list(estimator.records_),
        out_of_order=cloud.out_of_order,
        decode_errors=cloud.decode_errors,
        duplicate_estimates=duplicate_estimates,
        sent_up=up.sent_count,
        dropped_up=up.dropped_count,
        sent_down=down.sent_count,
        dropped_down=down.dropped_count,
    )


def write_session_csv(path, rows):
    """Session log artifact: seq, t_sent, t_recv, staleness."""
    with open(path, "w", newline="") as fh:
        fh.write("seq,t_sent,t_recv,staleness\n")
        for row in rows:
            fh.write(f"{row.seq},{repr(float(row.t_sent))},"
                     f"{repr(float(row.t_recv))},{repr(float(row.staleness))}\n")
