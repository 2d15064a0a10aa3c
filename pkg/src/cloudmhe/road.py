"""Road excitation profiles and the cloud-side road database.

Profiles are piecewise sinusoid segments over closed intervals, zero
everywhere else.  The database stores one profile per wheel track and
answers lookups keyed by the vehicle's reported arc-length position,
mapping position to profile coordinate through a constant cruise speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["RoadSegment", "RoadProfile", "RoadDatabase"]


@dataclass(frozen=True)
class RoadSegment:
    """One sinusoid branch: amplitude * sin(omega * coord) on [start, end]."""

    start: float
    end: float
    amplitude: float
    omega: float          # angular frequency [rad per coordinate unit]
    basis: str = "time"   # coordinate meaning: "time" [s] or "arclength" [m]

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"segment start {self.start} must precede end {self.end}")
        if not math.isfinite(self.amplitude):
            raise ValueError("segment amplitude must be finite")
        if self.basis not in ("time", "arclength"):
            raise ValueError(f"unknown segment basis {self.basis!r}")

    def contains(self, coord):
        return self.start <= coord <= self.end

    def value(self, coord):
        return self.amplitude * math.sin(self.omega * coord)


@dataclass(frozen=True)
class RoadProfile:
    """Ordered, non-overlapping segments; evaluates to 0 between them."""

    segments: tuple[RoadSegment, ...] = ()

    def __post_init__(self):
        segments = tuple(sorted(self.segments, key=lambda s: s.start))
        object.__setattr__(self, "segments", segments)
        for prev, cur in zip(segments, segments[1:]):
            if cur.start <= prev.end:
                raise ValueError(
                    f"road segments overlap: [{prev.start}, {prev.end}] and "
                    f"[{cur.start}, {cur.end}]"
                )
        bases = {s.basis for s in segments}
        if len(bases) > 1:
            raise ValueError("all segments of a profile must share one basis")

    @property
    def basis(self):
        return self.segments[0].basis if self.segments else "time"

    def value(self, coord) -> float:
        """Displacement at the given profile coordinate (closed boundaries)."""
        if not math.isfinite(coord):
            raise ValueError("profile coordinate must be finite")
        for seg in self.segments:
            if seg.contains(coord):
                return seg.value(coord)
        return 0.0


@dataclass(frozen=True)
class RoadDatabase:
    """Stored road knowledge, queried by reported arc-length position.

    With ``stagger`` disabled all four wheels see the front-axle value,
    which is the default scenario setting.  With it enabled the rear pair
    is evaluated ``wheelbase`` metres behind the reported position.
    """

    left: RoadProfile = field(default_factory=RoadProfile)
    right: RoadProfile = field(default_factory=RoadProfile)
    speed: float = 15.0      # cruise speed [m/s] mapping time <-> arc-length
    wheelbase: float = 3.0   # front-to-rear stagger distance [m]
    stagger: bool = False

    def __post_init__(self):
        if not self.speed > 0:
            raise ValueError(f"database speed must be positive, got {self.speed}")

    def _coord(self, profile, s):
        return s / self.speed if profile.basis == "time" else s

    def lookup(self, s) -> np.ndarray:
        """Road displacement per wheel (FL, FR, RL, RR) at reported position s."""
        s_rear = s - self.wheelbase if self.stagger else s
        fl = self.left.value(self._coord(self.left, s))
        fr = self.right.value(self._coord(self.right, s))
        rl = self.left.value(self._coord(self.left, s_rear))
        rr = self.right.value(self._coord(self.right, s_rear))
        return np.array([fl, fr, rl, rr])
