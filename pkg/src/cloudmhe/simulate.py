"""Ground-truth plant rollout with seeded noise for scenario runs.

The plant steps the discretized dynamics with the exact road profile at
the vehicle's true position, i.i.d. Gaussian road-channel disturbances
and measurement noise.  Draws come from a single seeded 64-bit PCG
generator in a fixed order (all disturbance rows, then all measurement
noise rows), so a (config, seed) pair pins the trajectory bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_vector, check_finite
from .discretize import DiscreteModel
from .road import RoadDatabase
from .suspension import FullCarModel, N_STATES, N_WHEELS, N_OUTPUTS

__all__ = ["SimConfig", "Trajectory", "run_plant", "write_trajectory_csv"]


@dataclass
class SimConfig:
    """Scenario knobs: length, sampling, noise levels, initial state, inputs.

    ``input_steps`` is a piecewise-constant damper force schedule: a
    sequence of (time, 4-vector) pairs, each active from its time onward;
    empty means zero input throughout.
    """

    duration: float = 6.0
    ts: float = 0.01
    seed: int = 0
    w_std: tuple = (0.005,) * N_WHEELS
    v_std: tuple = (0.01,) * N_OUTPUTS
    initial_state: tuple = (0.0,) * N_STATES
    input_steps: tuple = ()

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if not self.ts > 0:
            raise ValueError(f"ts must be positive, got {self.ts}")
        w = as_vector("w_std", self.w_std)
        v = as_vector("v_std", self.v_std)
        if w.size == 1:
            w = np.full(N_WHEELS, w[0])
        if v.size == 1:
            v = np.full(N_OUTPUTS, v[0])
        if w.size != N_WHEELS or v.size != N_OUTPUTS:
            raise ValueError("w_std needs 4 entries, v_std needs 7")
        if np.any(w < 0) or np.any(v < 0):
            raise ValueError("noise standard deviations must be non-negative")
        self.w_std = tuple(w)
        self.v_std = tuple(v)
        self.initial_state = tuple(as_vector("initial_state", self.initial_state, N_STATES))
        steps = []
        for entry in self.input_steps:
            t_on, u = entry
            steps.append((float(t_on), tuple(as_vector("input step", u, N_WHEELS))))
        self.input_steps = tuple(sorted(steps, key=lambda s: s[0]))

    @property
    def n_steps(self):
        return int(round(self.duration / self.ts))

    def input_at(self, t):
        u = np.zeros(N_WHEELS)
        for t_on, value in self.input_steps:
            if t >= t_on:
                u = np.asarray(value)
        return u


@dataclass
class Trajectory:
    """Aligned per-step series of one plant run (all length n_steps + 1)."""

    times: np.ndarray
    states: np.ndarray         # (P+1, 14) true states
    inputs: np.ndarray         # (P+1, 4) applied damper forces
    roads: np.ndarray          # (P+1, 4) road displacement at the true position
    disturbances: np.ndarray   # (P+1, 4) unknown road-channel disturbances
    measurements: np.ndarray   # (P+1, 7) noisy outputs
    positions: np.ndarray = field(repr=False, default=None)  # (P+1,) true arc-length

    def __len__(self):
        return self.times.size


def run_plant(model: FullCarModel, discrete: DiscreteModel,
              road_db: RoadDatabase, config: SimConfig) -> Trajectory:
    """Roll the plant forward and record truth, inputs and measurements."""
    steps = config.n_steps
    count = steps + 1
    ts = config.ts
    if abs(discrete.ts - ts) > 1e-12:
        raise ValueError(f"discrete model ts {discrete.ts} != sim ts {ts}")

    rng = np.random.default_rng(config.seed)
    w = rng.normal(0.0, config.w_std, size=(count, N_WHEELS))
    v = rng.normal(0.0, config.v_std, size=(count, N_OUTPUTS))

    times = np.arange(count) * ts
    positions = road_db.speed * times
    states = np.empty((count, N_STATES))
    inputs = np.empty((count, N_WHEELS))
    roads = np.empty((count, N_WHEELS))
    measurements = np.empty((count, N_OUTPUTS))

    states[0] = check_finite("initial_state", np.asarray(config.initial_state))
    for p in range(count):
        inputs[p] = config.input_at(times[p])
        roads[p] = road_db.lookup(positions[p])
        measurements[p] = model.c @ states[p] + v[p]
        if p < steps:
            states[p + 1] = (discrete.ad @ states[p] + discrete.bd @ inputs[p]
                             + discrete.brd @ (roads[p] + w[p]))
            if not np.all(np.isfinite(states[p + 1])):
                raise FloatingPointError(f"plant state diverged at step {p + 1}")

    return Trajectory(times=times, states=states, inputs=inputs, roads=roads,
                      disturbances=w, measurements=measurements, positions=positions)


def write_trajectory_csv(path, trajectory: Trajectory):
    """Truth artifact: t, x1..x14, u1..u4, r1..r4, y1..y7.

    Floats are written as their shortest round-trip decimal so identical
    runs export byte-identical files.
    """
    header = (["t"]
              + [f"x{i + 1}" for i in range(N_STATES)]
              + [f"u{i + 1}" for i in range(N_WHEELS)]
              + [f"r{i + 1}" for i in range(N_WHEELS)]
              + [f"y{i + 1}" for i in range(N_OUTPUTS)])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for p in range(len(trajectory)):
            row = np.concatenate([[trajectory.times[p]], trajectory.states[p],
                                  trajectory.inputs[p], trajectory.roads[p],
                                  trajectory.measurements[p]])
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
