"""BLE data-channel hop arithmetic.

Implements the channel selection algorithm used by a connected BLE pair:
the unmapped hop step, remapping of unused channels onto the used list,
parameter validation, and golden hop-sequence generation. Everything here
is a pure function over value types, so it doubles as the victim's hop
engine and as the sniffer's predictive oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

DATA_CHANNEL_COUNT = 37
MIN_USED_CHANNELS = 2
HOP_INCREMENT_MIN = 5
HOP_INCREMENT_MAX = 16
INTERVAL_STEP_US = 1_250
INTERVAL_MIN_US = 7_500
INTERVAL_MAX_US = 4_000_000


def is_data_channel(channel: int) -> bool:
    """True for the 37 data channels; advertising channels 37-39 are not."""
    return 0 <= channel < DATA_CHANNEL_COUNT


@dataclass(frozen=True)
class ChannelMap:
    """Used/unused classification of the 37 data channels.

    `used[i]` tells whether data channel i is used. At least two channels
    must be used for the remapping rule to be meaningful.
    """

    used: tuple[bool, ...]

    def __post_init__(self):
        if len(self.used) != DATA_CHANNEL_COUNT:
            raise ValueError(
                f"channel map must cover {DATA_CHANNEL_COUNT} data channels, got {len(self.used)}"
            )
        used_list = tuple(i for i, flag in enumerate(self.used) if flag)
        if len(used_list) < MIN_USED_CHANNELS:
            raise ValueError("channel map must mark at least two channels used")
        object.__setattr__(self, "_used_list", used_list)

    @classmethod
    def full(cls) -> "ChannelMap":
        return cls(tuple([True] * DATA_CHANNEL_COUNT))

    @classmethod
    def from_channels(cls, channels) -> "ChannelMap":
        used = [False] * DATA_CHANNEL_COUNT
        for ch in channels:
            if not is_data_channel(ch):
                raise ValueError(f"channel {ch} is not a data channel")
            used[ch] = True
        return cls(tuple(used))

    @classmethod
    def from_hex(cls, text: str) -> "ChannelMap":
        """Parse a hex bitmask where bit i marks data channel i as used."""
        mask = int(text, 16)
        if mask >> DATA_CHANNEL_COUNT:
            raise ValueError(f"channel map mask {text} has bits beyond channel 36")
        return cls(tuple(bool(mask >> i & 1) for i in range(DATA_CHANNEL_COUNT)))

    def to_hex(self) -> str:
        mask = 0
        for i, flag in enumerate(self.used):
            if flag:
                mask |= 1 << i
        return f"0x{mask:010x}"

    @property
    def used_list(self) -> tuple[int, ...]:
        """Ascending indices of used channels."""
        return self._used_list

    @property
    def popcount(self) -> int:
        return len(self._used_list)

    def is_used(self, channel: int) -> bool:
        return self.used[channel]


@dataclass(frozen=True)
class ConnectionParams:
    """Ground-truth hopping state of a victim connection."""

    access_address: int
    interval_us: int
    hop_increment: int
    channel_map: ChannelMap
    last_unmapped: int


@dataclass(frozen=True)
class HopState:
    """Last unmapped channel plus an event counter kept for diagnostics only."""

    last_unmapped: int
    event_counter: int = 0

    def __post_init__(self):
        if not is_data_channel(self.last_unmapped):
            raise ValueError(f"unmapped channel {self.last_unmapped} out of range")
        if self.event_counter < 0:
            raise ValueError("event counter must be non-negative")


def validate_params(params: ConnectionParams) -> list[str]:
    """Return every violated invariant; an empty list means the params are legal."""
    violations = []
    if not 0 <= params.access_address < 2**32:
        violations.append("access_address must be a 32-bit value")
    if not INTERVAL_MIN_US <= params.interval_us <= INTERVAL_MAX_US:
        violations.append(
            f"interval_us {params.interval_us} outside [{INTERVAL_MIN_US}, {INTERVAL_MAX_US}]"
        )
    if params.interval_us % INTERVAL_STEP_US != 0:
        violations.append(f"interval_us {params.interval_us} not a multiple of {INTERVAL_STEP_US}")
    if not HOP_INCREMENT_MIN <= params.hop_increment <= HOP_INCREMENT_MAX:
        violations.append(
            f"hop_increment {params.hop_increment} outside [{HOP_INCREMENT_MIN}, {HOP_INCREMENT_MAX}]"
        )
    if not is_data_channel(params.last_unmapped):
        violations.append(f"last_unmapped {params.last_unmapped} outside [0, 36]")
    # channel_map invariants are enforced at construction; re-check popcount anyway
    if params.channel_map.popcount < MIN_USED_CHANNELS:
        violations.append("channel map must mark at least two channels used")
    return violations


def unmapped_next(state: HopState, hop_increment: int) -> int:
    """One unmapped hop step: (last_unmapped + hop_increment) mod 37."""
    if not HOP_INCREMENT_MIN <= hop_increment <= HOP_INCREMENT_MAX:
        raise ValueError(f"hop_increment {hop_increment} outside legal range")
    return (state.last_unmapped + hop_increment) % DATA_CHANNEL_COUNT


def remap(unmapped: int, channel_map: ChannelMap) -> int:
    """Map an unmapped channel onto a used one.

    A used channel passes through; an unused one is replaced with
    used_list[unmapped mod popcount].
    """
    if not is_data_channel(unmapped):
        raise ValueError(f"unmapped channel {unmapped} out of range")
    if channel_map.is_used(unmapped):
        return unmapped
    return channel_map.used_list[unmapped % channel_map.popcount]


def select_next_channel(
    state: HopState, hop_increment: int, channel_map: ChannelMap
) -> tuple[int, HopState]:
    """Advance one connection event: returns (physical channel, new state).

    The new state stores the unmapped (pre-remap) value, which is what the
    next hop step feeds on.
    """
    unmapped = unmapped_next(state, hop_increment)
    channel = remap(unmapped, channel_map)
    return channel, HopState(unmapped, state.event_counter + 1)


def hop_sequence(params: ConnectionParams, count: int) -> list[tuple[int, int]]:
    """First `count` (event_index, channel) pairs starting from params.last_unmapped."""
    if count < 1:
        raise ValueError("count must be at least 1")
    violations = validate_params(params)
    if violations:
        raise ValueError("; ".join(violations))
    state = HopState(params.last_unmapped)
    out = []
    for index in range(count):
        channel, state = select_next_channel(state, params.hop_increment, params.channel_map)
        out.append((index, channel))
    return out


def hop_sequence_lines(params: ConnectionParams, count: int) -> list[str]:
    """Golden-fixture rendering: one `event_index,channel` line per event."""
    return [f"{index},{channel}" for index, channel in hop_sequence(params, count)]


def mod_inverse(value: int) -> int:
    """Multiplicative inverse of value modulo 37 (37 is prime)."""
    reduced = value % DATA_CHANNEL_COUNT
    if reduced == 0:
        raise ValueError("value divisible by 37 has no inverse modulo 37")
    return pow(reduced, -1, DATA_CHANNEL_COUNT)
