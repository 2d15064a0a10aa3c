"""Lossy, delaying channel model for the simulated network.

Frames are held for base_delay plus uniform jitter and may be dropped;
nothing else is altered.  Delivery order follows delivery time, so
jitter can reorder frames and receivers must cope.  All randomness comes
from a per-direction seeded generator, making any fixed-seed run exactly
repeatable.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

__all__ = ["ChannelConfig", "SimulatedChannel"]


@dataclass(frozen=True)
class ChannelConfig:
    """Impairment settings.  Delays are in milliseconds."""

    base_delay: float = 0.0
    jitter: float = 0.0
    drop_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.base_delay < 0 or self.jitter < 0:
            raise ValueError("delays must be non-negative")
        if not 0.0 <= self.drop_prob < 1.0:
            raise ValueError(f"drop_prob must lie in [0, 1), got {self.drop_prob}")

    @property
    def ideal(self):
        return self.base_delay == 0 and self.jitter == 0 and self.drop_prob == 0

    @property
    def base_delay_s(self):
        return self.base_delay / 1000.0

    @property
    def jitter_s(self):
        return self.jitter / 1000.0


class SimulatedChannel:
    """One direction of the link, operating in simulation time [s].

    ``send`` stamps a frame with its delivery time (or drops it);
    ``deliver_due`` hands back everything whose time has come, ordered by
    (delivery time, send order).
    """

    def __init__(self, config: ChannelConfig, direction: int = 0):
        self.config = config
        self._rng = np.random.default_rng([int(config.seed), int(direction)])
        self._pending = []
        self._sent = 0
        self.sent_count = 0
        self.dropped_count = 0

    def sample_delay(self) -> float:
        """Next frame's delay [s]; always consumes the same two draws."""
        drop_draw = self._rng.random()
        jitter_draw = self._rng.random()
        delay = self.config.base_delay_s + jitter_draw * self.config.jitter_s
        return delay, drop_draw < self.config.drop_prob

    def send(self, frame: bytes, now: float):
        delay, dropped = self.sample_delay()
        self.sent_count += 1
        if dropped:
            self.dropped_count += 1
            return None
        deliver_at = now + delay
        heapq.heappush(self._pending, (deliver_at, self._sent, bytes(frame)))
        self._sent += 1
        return deliver_at

    def deliver_due(self, now: float):
        """Pop every (delivery_time, frame) scheduled at or before ``now``."""
        out = []
        while self._pending and self._pending[0][0] <= now:
            deliver_at, _, frame = heapq.heappop(self._pending)
            out.append((deliver_at, frame))
        return out

    @property
    def pending(self):
        return len(self._pending)

    def next_delivery(self):
        return self._pending[0][0] if self._pending else None
