"""Deterministic discrete-event simulation of a connected BLE master/slave pair.

The clock is integer microseconds with zero drift. One connection event fires
every interval; the slave reply sits 150 us after the master packet inside the
same event. A single-channel sniffer radio observes master anchor packets on
whatever channel it is tuned to, subject to a per-channel Bernoulli loss model.
Channel-map updates are applied atomically at event boundaries, and the event
immediately before the boundary carries the announcement record (the control
packet a follow-mode benchmark may observe; the cracking sniffer never reads it).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .afh import (
    ChannelMap,
    ConnectionParams,
    HopState,
    is_data_channel,
    select_next_channel,
    validate_params,
)

T_IFS_US = 150
MASTER_ROLE = "master"
SLAVE_ROLE = "slave"


@dataclass(frozen=True)
class PacketObservation:
    """One detection of a target-AA packet on the tuned channel."""

    time_us: int
    channel: int
    access_address: int
    role: str = MASTER_ROLE


@dataclass
class ConnectionEventRecord:
    index: int
    anchor_us: int
    channel: int
    unmapped: int
    master_lost: bool
    slave_lost: bool
    announced_map: ChannelMap | None = None

    @property
    def slave_time_us(self) -> int:
        return self.anchor_us + T_IFS_US


@dataclass(frozen=True)
class LossModel:
    """Independent per-packet Bernoulli loss, with one probability per channel."""

    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.probs) != 37:
            raise ValueError("loss model needs one probability per data channel")
        for p in self.probs:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"loss probability {p} outside [0, 1]")

    @classmethod
    def none(cls) -> "LossModel":
        return cls(tuple([0.0] * 37))

    @classmethod
    def uniform(cls, p: float) -> "LossModel":
        return cls(tuple([p] * 37))

    @classmethod
    def per_channel(cls, overrides: dict[int, float], default: float = 0.0) -> "LossModel":
        probs = [default] * 37
        for ch, p in overrides.items():
            probs[ch] = p
        return cls(tuple(probs))


class RemoveRestoreRule:
    """Seeded map-update rule: restore the previous removals, then knock out
    a fresh batch of 1..k_max used channels, keeping popcount above a floor."""

    def __init__(self, k_min: int = 1, k_max: int = 5, min_popcount: int = 10):
        if not 1 <= k_min <= k_max:
            raise ValueError("need 1 <= k_min <= k_max")
        self.k_min = k_min
        self.k_max = k_max
        self.min_popcount = min_popcount

    def bind(self, base_map: ChannelMap, rng: random.Random) -> "_RemoveRestoreState":
        return _RemoveRestoreState(self, base_map, rng)


class _RemoveRestoreState:
    def __init__(self, rule: RemoveRestoreRule, base_map: ChannelMap, rng: random.Random):
        self._rule = rule
        self._base = base_map
        self._rng = rng

    def next_map(self) -> ChannelMap:
        base_used = list(self._base.used_list)
        floor = max(2, min(self._rule.min_popcount, len(base_used) - 1))
        k_cap = min(self._rule.k_max, len(base_used) - floor)
        if k_cap < self._rule.k_min:
            return self._base
        k = self._rng.randint(self._rule.k_min, k_cap)
        removed = self._rng.sample(base_used, k)
        return ChannelMap.from_channels(ch for ch in base_used if ch not in removed)


class ExplicitMaps:
    """Fixed sequence of maps; once exhausted, updates become no-ops."""

    def __init__(self, maps):
        self.maps = list(maps)
        for m in self.maps:
            if not isinstance(m, ChannelMap):
                raise ValueError("explicit schedule entries must be ChannelMap instances")

    def bind(self, base_map: ChannelMap, rng: random.Random) -> "_ExplicitState":
        return _ExplicitState(self.maps, base_map)


class _ExplicitState:
    def __init__(self, maps, base_map: ChannelMap):
        self._maps = list(maps)
        self._pos = 0
        self._last = base_map

    def next_map(self) -> ChannelMap:
        if self._pos < len(self._maps):
            self._last = self._maps[self._pos]
            self._pos += 1
        return self._last


@dataclass
class MapUpdateSchedule:
    period_us: int
    rule: object = field(default_factory=RemoveRestoreRule)

    def __post_init__(self):
        if self.period_us <= 0:
            raise ValueError("update period must be positive")


class SnifferRadio:
    """Single-channel radio front end bound to one simulation.

    Observations are collected while events materialize and handed out by
    observe(); tuning takes effect retune_latency_us after the call.
    """

    def __init__(self, sim: "Simulation", retune_latency_us: int = 0):
        self._sim = sim
        self.retune_latency_us = retune_latency_us
        self.tuned_channel: int | None = None
        self.effective_from_us = 0
        self.log: list[PacketObservation] = []
        self._pending: list[PacketObservation] = []

    @property
    def now_us(self) -> int:
        return self._sim.now_us

    def tune(self, channel: int) -> None:
        if not is_data_channel(channel):
            raise ValueError(f"channel {channel} is not a data channel")
        self.tuned_channel = channel
        self.effective_from_us = self._sim.now_us + self.retune_latency_us

    def observe(self, window_us: int) -> list[PacketObservation]:
        """Advance the simulation by window_us and return what the radio heard."""
        if self.tuned_channel is None:
            raise RuntimeError("radio is not tuned to any channel")
        if window_us < 0:
            raise ValueError("observation window must be non-negative")
        self._sim.advance(self._sim.now_us + window_us)
        out = self._pending
        self._pending = []
        self.log.extend(out)
        return out

    def _detect(self, record: ConnectionEventRecord, access_address: int) -> None:
        if (
            self.tuned_channel == record.channel
            and not record.master_lost
            and record.anchor_us >= self.effective_from_us
        ):
            self._pending.append(
                PacketObservation(record.anchor_us, record.channel, access_address)
            )


class Simulation:
    """One victim connection plus the sniffer radio watching it.

    Fully deterministic given (params, schedule, loss, seed); the victim-side
    random streams never depend on what the radio does.
    """

    def __init__(
        self,
        params: ConnectionParams,
        schedule: MapUpdateSchedule | None = None,
        loss: LossModel | None = None,
        seed=0,
        retune_latency_us: int = 0,
    ):
        violations = validate_params(params)
        if violations:
            raise ValueError("; ".join(violations))
        if not 0 <= retune_latency_us <= params.interval_us // 2:
            raise ValueError("retune latency must be within [0, interval/2]")
        if schedule is not None and schedule.period_us < params.interval_us:
            raise ValueError("update period must be at least one connection interval")
        self.params = params
        self.loss = loss or LossModel.none()
        self.seed = seed
        self.now_us = 0
        self.records: list[ConnectionEventRecord] = []
        self.current_map = params.channel_map
        self.radio = SnifferRadio(self, retune_latency_us)
        self._state = HopState(params.last_unmapped)
        self._loss_rng = random.Random(f"{seed}/loss")
        self._schedule = schedule
        self._map_state = (
            schedule.rule.bind(params.channel_map, random.Random(f"{seed}/map"))
            if schedule
            else None
        )
        self._next_update_us = schedule.period_us if schedule else None
        self._staged_map: ChannelMap | None = None
        self._next_anchor_us = 0
        self._next_index = 0
        # the connection starts positioned at anchor 0
        self._materialize()

    @property
    def event_count(self) -> int:
        return self._next_index

    def advance(self, until_us: int) -> list[ConnectionEventRecord]:
        """Materialize every event with anchor <= until_us; returns the new records."""
        if until_us < self.now_us:
            raise ValueError("cannot advance the clock backwards")
        start = len(self.records)
        while self._next_anchor_us <= until_us:
            self._materialize()
        self.now_us = max(self.now_us, until_us)
        return self.records[start:]

    def _materialize(self) -> None:
        anchor = self._next_anchor_us
        index = self._next_index
        if self._staged_map is not None:
            self.current_map = self._staged_map
            self._staged_map = None
        channel, self._state = select_next_channel(
            self._state, self.params.hop_increment, self.current_map
        )
        master_lost = self._loss_rng.random() < self.loss.probs[channel]
        slave_lost = self._loss_rng.random() < self.loss.probs[channel]
        record = ConnectionEventRecord(
            index, anchor, channel, self._state.last_unmapped, master_lost, slave_lost
        )
        if (
            self._next_update_us is not None
            and anchor + self.params.interval_us >= self._next_update_us
        ):
            new_map = self._map_state.next_map()
            self._staged_map = new_map
            record.announced_map = new_map
            self._next_update_us += self._schedule.period_us
        self.records.append(record)
        self.radio._detect(record, self.params.access_address)
        self._next_anchor_us = anchor + self.params.interval_us
        self._next_index = index + 1
        self.now_us = max(self.now_us, anchor)


def new_connection(
    params: ConnectionParams,
    schedule: MapUpdateSchedule | None = None,
    loss: LossModel | None = None,
    seed=0,
    retune_latency_us: int = 0,
) -> Simulation:
    """Build a simulation positioned at anchor 0. Raises ValueError on bad params."""
    return Simulation(params, schedule, loss, seed, retune_latency_us)


def event_log_lines(records) -> list[str]:
    """Export format: `anchor_us,channel,master_lost,slave_lost` per event."""
    return [
        f"{r.anchor_us},{r.channel},{int(r.master_lost)},{int(r.slave_lost)}" for r in records
    ]


def observation_log_lines(observations) -> list[str]:
    """Export format: `time_us,channel,aa_hex,role` per observation."""
    return [
        f"{o.time_us},{o.channel},{o.access_address:08x},{o.role}" for o in observations
    ]
