"""Experiment scenario configuration.

Scenarios are flat key=value text files (or equivalent mappings over the
service API). The HOPCRACK_SEED environment variable, when set, overrides
the configured seed at load time so sweeps can be re-rolled without editing
files.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

from .afh import (
    HOP_INCREMENT_MAX,
    HOP_INCREMENT_MIN,
    INTERVAL_MAX_US,
    INTERVAL_MIN_US,
    INTERVAL_STEP_US,
    ChannelMap,
)

SEED_ENV_VAR = "HOPCRACK_SEED"


class ScenarioError(ValueError):
    """A scenario key is unknown, malformed, or out of range."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass
class Scenario:
    name: str = "scenario"
    c_int_us: int = 100_000
    h_inc: int = 7
    map: str = "full"
    update_period_s: float = 0.0
    p_loss: float = 0.0
    send_period_ms: float = 100.0
    packet_count: int = 100
    seed: int = 1
    trials: int = 25
    n_repeats: int = 3
    window: int = 10
    threshold: int = 5
    lead_margin_us: int | None = None
    # documented extras beyond the core key set
    dwell_timeout_ms: float = 10_000.0
    hop_budget: int = 50 * 37
    retune_latency_us: int = 0
    initial_channel: int = 0
    confirm_miss_limit: int = 4
    benchmark_update_miss_prob: float = 0.0
    benchmark_desync_hazard: float = 0.0

    channel_map: ChannelMap = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        self.channel_map = parse_map_spec(self.map)
        _validate(self)

    @property
    def update_period_us(self) -> int:
        return int(round(self.update_period_s * 1_000_000))

    @property
    def send_period_us(self) -> int:
        return int(round(self.send_period_ms * 1_000))

    @property
    def dwell_timeout_us(self) -> int:
        return int(round(self.dwell_timeout_ms * 1_000))

    def with_update_period(self, period_s: float, suffix: bool = True) -> "Scenario":
        name = f"{self.name}-p{period_s:g}s" if suffix else self.name
        return replace(self, name=name, update_period_s=period_s)


def parse_map_spec(spec: str) -> ChannelMap:
    """Accepts `full`, a hex bitmask like 0x000fffff, or a comma list of
    channels and inclusive ranges such as `0-19` or `0,2,4-9,36`."""
    text = str(spec).strip().lower()
    if text == "full":
        return ChannelMap.full()
    if text.startswith("0x"):
        return ChannelMap.from_hex(text)
    channels = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, _, hi = part.partition("-")
            channels.extend(range(int(lo), int(hi) + 1))
        else:
            channels.append(int(part))
    if not channels:
        raise ValueError(f"cannot parse channel map spec {spec!r}")
    return ChannelMap.from_channels(channels)


_INT_KEYS = {
    "c_int_us", "h_inc", "packet_count", "seed", "trials", "n_repeats", "window",
    "threshold", "lead_margin_us", "hop_budget", "retune_latency_us",
    "initial_channel", "confirm_miss_limit",
}
_FLOAT_KEYS = {
    "update_period_s", "p_loss", "send_period_ms", "dwell_timeout_ms",
    "benchmark_update_miss_prob", "benchmark_desync_hazard",
}
_STR_KEYS = {"name", "map"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS


def scenario_from_mapping(mapping: dict, name: str | None = None) -> Scenario:
    """Build a Scenario from a key/value mapping, applying the env seed override."""
    kwargs = {}
    for key, raw in mapping.items():
        if key not in _ALL_KEYS:
            raise ScenarioError(key, "unknown scenario key")
        if raw is None:
            continue
        try:
            if key in _INT_KEYS:
                kwargs[key] = int(str(raw).strip())
            elif key in _FLOAT_KEYS:
                kwargs[key] = float(str(raw).strip())
            else:
                kwargs[key] = str(raw).strip()
        except ValueError:
            raise ScenarioError(key, f"cannot parse value {raw!r}") from None
    if name is not None:
        kwargs.setdefault("name", name)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            kwargs["seed"] = int(env_seed)
        except ValueError:
            raise ScenarioError("seed", f"{SEED_ENV_VAR} must be an integer") from None
    try:
        return Scenario(**kwargs)
    except ScenarioError:
        raise
    except ValueError as exc:
        # only the map spec can raise a bare ValueError out of __post_init__
        raise ScenarioError("map", str(exc)) from None


def parse_scenario_text(text: str, name: str | None = None) -> Scenario:
    """Parse flat `key=value` lines; `#` starts a comment."""
    mapping = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}", f"expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        mapping[key.strip()] = value.strip()
    return scenario_from_mapping(mapping, name=name)


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    stem = os.path.splitext(os.path.basename(path))[0]
    return parse_scenario_text(text, name=stem)


def _validate(s: Scenario) -> None:
    if not INTERVAL_MIN_US <= s.c_int_us <= INTERVAL_MAX_US:
        raise ScenarioError("c_int_us", f"{s.c_int_us} outside [{INTERVAL_MIN_US}, {INTERVAL_MAX_US}]")
    if s.c_int_us % INTERVAL_STEP_US != 0:
        raise ScenarioError("c_int_us", f"{s.c_int_us} not a multiple of {INTERVAL_STEP_US}")
    if not HOP_INCREMENT_MIN <= s.h_inc <= HOP_INCREMENT_MAX:
        raise ScenarioError("h_inc", f"{s.h_inc} outside [{HOP_INCREMENT_MIN}, {HOP_INCREMENT_MAX}]")
    if not 0.0 <= s.p_loss <= 1.0:
        raise ScenarioError("p_loss", f"{s.p_loss} outside [0, 1]")
    if s.update_period_s < 0:
        raise ScenarioError("update_period_s", "must be non-negative")
    if s.update_period_s > 0 and s.update_period_us < s.c_int_us:
        raise ScenarioError("update_period_s", "must be at least one connection interval")
    if s.packet_count < 1:
        raise ScenarioError("packet_count", "must be at least 1")
    if s.send_period_ms <= 0:
        raise ScenarioError("send_period_ms", "must be positive")
    if s.trials < 1:
        raise ScenarioError("trials", "must be at least 1")
    if s.n_repeats < 2:
        raise ScenarioError("n_repeats", "must be at least 2")
    if not 0 < s.threshold <= s.window:
        raise ScenarioError("threshold", f"need 0 < threshold <= window, got {s.threshold}/{s.window}")
    if s.lead_margin_us is not None and not 0 < s.lead_margin_us <= s.c_int_us // 2:
        raise ScenarioError("lead_margin_us", "must be within (0, c_int_us/2]")
    if not 0 <= s.retune_latency_us <= s.c_int_us // 2:
        raise ScenarioError("retune_latency_us", "must be within [0, c_int_us/2]")
    if s.retune_latency_us > (s.lead_margin_us or s.c_int_us // 2):
        raise ScenarioError("retune_latency_us", "must not exceed the lead margin")
    if s.hop_budget < 37:
        raise ScenarioError("hop_budget", "must be at least 37 hops")
    if not 0 <= s.initial_channel <= 36:
        raise ScenarioError("initial_channel", "must be a data channel")
    if s.confirm_miss_limit < 0:
        raise ScenarioError("confirm_miss_limit", "must be non-negative")
    if not 0.0 <= s.benchmark_update_miss_prob <= 1.0:
        raise ScenarioError("benchmark_update_miss_prob", "must be within [0, 1]")
    if not 0.0 <= s.benchmark_desync_hazard <= 1.0:
        raise ScenarioError("benchmark_desync_hazard", "must be within [0, 1]")
    if s.dwell_timeout_ms <= 0:
        raise ScenarioError("dwell_timeout_ms", "must be positive")


def scenario_keys() -> list[str]:
    return [f.name for f in fields(Scenario) if f.init]
