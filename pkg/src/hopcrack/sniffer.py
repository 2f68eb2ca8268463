"""Single-radio cracking pipeline for a live hopping connection.

The attack runs in stages. First it parks on one channel and derives the
connection interval from the repetition of inter-arrival deltas (the hop
pattern repeats every 37 events for a fixed map, so the pattern's time span
is 37 intervals). Then it observes two more channels for one pattern span
each and solves the hop congruence between appearance pairs, keeping the
majority winner. Next it predicts 37 consecutive hops from a truly mapped
anchor and marks each predicted channel used or unused by listening there,
followed by a confirming pass that re-listens through the remapping of the
candidate map. Finally it follows the connection in lockstep, counting
missed events in a sliding window; crossing the threshold triggers a fresh
map scan (interval and increment never change mid-connection).
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field

from .afh import (
    DATA_CHANNEL_COUNT,
    HOP_INCREMENT_MAX,
    HOP_INCREMENT_MIN,
    INTERVAL_MAX_US,
    INTERVAL_MIN_US,
    INTERVAL_STEP_US,
    ChannelMap,
    mod_inverse,
    remap,
)

PATTERN_SPAN_EVENTS = DATA_CHANNEL_COUNT  # hop pattern repeats every 37 events

STAGE_INTERVAL = "interval"
STAGE_INCREMENT = "increment"
STAGE_MAP = "map"
STAGE_FOLLOWING = "following"


class SnifferError(Exception):
    pass


class NoPeriodFound(SnifferError):
    """The delta log ended (or broke) before the pattern repeated enough times."""


class RangeError(SnifferError):
    """A detected period implies an interval outside the legal range."""


class NotOnGrid(SnifferError):
    """A time difference does not sit near a whole number of intervals."""


class Ambiguous(SnifferError):
    """No hop-increment candidate won a strict majority."""


class DesyncSuspected(SnifferError):
    """A map scan came back nearly empty; the prediction likely diverged."""


class BudgetExceeded(SnifferError):
    """A stage failed to converge within the configured hop budget."""


@dataclass
class DeltaSeries:
    """Inter-arrival times between adjacent observations on one fixed channel."""

    channel: int
    deltas: list[int]

    def __post_init__(self):
        for d in self.deltas:
            if d <= 0:
                raise ValueError("deltas must be positive")


@dataclass(frozen=True)
class AppearanceSet:
    """Time offsets (mod the pattern span T) of one channel's appearances."""

    channel: int
    offsets: tuple[int, ...]

    def __post_init__(self):
        if not self.offsets:
            raise ValueError("appearance set must not be empty")
        for o in self.offsets:
            if o < 0:
                raise ValueError("offsets must be non-negative")


@dataclass
class SnifferEstimate:
    """The sniffer's evolving belief about the connection."""

    stage: str = STAGE_INTERVAL
    interval_us: int | None = None
    span_us: int | None = None
    hop_increment: int | None = None
    channel_map: ChannelMap | None = None
    true_channels: tuple = ()
    hops_consumed: int = 0

    def dump_line(self) -> str:
        c_int = self.interval_us if self.interval_us is not None else "-"
        h_inc = self.hop_increment if self.hop_increment is not None else "-"
        map_hex = self.channel_map.to_hex() if self.channel_map is not None else "-"
        return f"{self.stage},{c_int},{h_inc},{map_hex},{self.hops_consumed}"


class MissWindow:
    """Ring of hit/miss outcomes over the most recent expected events."""

    def __init__(self, window_size: int = 10, threshold: int = 5):
        if not 0 < threshold <= window_size:
            raise ValueError("need 0 < threshold <= window_size")
        self.window_size = window_size
        self.threshold = threshold
        self._ring: deque[bool] = deque(maxlen=window_size)

    def record(self, hit: bool) -> None:
        self._ring.append(hit)

    @property
    def miss_count(self) -> int:
        return sum(1 for hit in self._ring if not hit)

    @property
    def triggered(self) -> bool:
        return self.miss_count >= self.threshold

    def reset(self) -> None:
        self._ring.clear()


def detect_period(series: DeltaSeries, n_repeats: int = 3) -> int:
    """Smallest span T whose delta pattern repeats n_repeats times in a row.

    The repeated run may sit anywhere in the series, so a lost packet or a
    map update early in the log cannot poison later, clean stretches. T must
    also be 37 * (a multiple of 1250 us), otherwise it cannot be a whole
    pattern span. Raises NoPeriodFound when the log holds no qualifying run;
    the caller retries on fresher data.
    """
    if n_repeats < 2:
        raise ValueError("n_repeats must be at least 2")
    deltas = series.deltas
    for width in range(1, len(deltas) // n_repeats + 1):
        span = sum(deltas[:width])
        for start in range(0, len(deltas) - n_repeats * width + 1):
            if start > 0:
                span += deltas[start + width - 1] - deltas[start - 1]
            if span % (PATTERN_SPAN_EVENTS * INTERVAL_STEP_US) != 0:
                continue
            run = range(start + width, start + n_repeats * width)
            if all(deltas[i] == deltas[i - width] for i in run):
                return span
    raise NoPeriodFound(
        f"no {n_repeats}-fold repetition in {len(deltas)} deltas on channel {series.channel}"
    )


def derive_connection_interval(span_us: int) -> int:
    """Interval = span / 37; RangeError flags a false period."""
    interval, rem = divmod(span_us, PATTERN_SPAN_EVENTS)
    if rem != 0 or interval % INTERVAL_STEP_US != 0:
        raise RangeError(f"span {span_us} is not 37 whole interval steps")
    if not INTERVAL_MIN_US <= interval <= INTERVAL_MAX_US:
        raise RangeError(f"interval {interval} outside [{INTERVAL_MIN_US}, {INTERVAL_MAX_US}]")
    return interval


def hops_between(t1_us: int, t2_us: int, interval_us: int, tolerance_us: int | None = None) -> int:
    """Whole hops separating two observation times; NotOnGrid if off the grid."""
    if t2_us <= t1_us:
        raise ValueError("t2 must be after t1")
    tol = interval_us // 4 if tolerance_us is None else tolerance_us
    hops = round((t2_us - t1_us) / interval_us)
    residual = abs((t2_us - t1_us) - hops * interval_us)
    if residual > tol:
        raise NotOnGrid(f"residual {residual} us exceeds tolerance {tol} us")
    return hops


def candidate_increments(
    a: AppearanceSet, b: AppearanceSet, interval_us: int, tolerance_us: int | None = None
) -> set[tuple[int, tuple[int, int]]]:
    """Hop-increment candidates from every appearance pair of two channels.

    For appearances h hops apart the channel difference satisfies
    (b - a) == h * increment (mod 37), so each pair proposes
    (b - a) * h^-1 mod 37; only values in the legal 5..16 band survive.
    Pairs with h == 0 (mod 37) propose nothing.
    """
    if a.channel == b.channel:
        raise ValueError("appearance sets must come from distinct channels")
    span = PATTERN_SPAN_EVENTS * interval_us
    out: set[tuple[int, tuple[int, int]]] = set()
    for oa in a.offsets:
        for ob in b.offsets:
            gap = (ob - oa) % span
            if gap == 0:
                continue
            try:
                hops = hops_between(oa, oa + gap, interval_us, tolerance_us)
            except NotOnGrid:
                continue
            if hops % PATTERN_SPAN_EVENTS == 0:
                continue
            candidate = ((b.channel - a.channel) * mod_inverse(hops)) % DATA_CHANNEL_COUNT
            if HOP_INCREMENT_MIN <= candidate <= HOP_INCREMENT_MAX:
                out.add((candidate, (oa, ob)))
    return out


def derive_hop_increment(
    p: AppearanceSet,
    q: AppearanceSet,
    r: AppearanceSet,
    interval_us: int,
    tolerance_us: int | None = None,
):
    """Intersect pairwise candidates over three observed channels.

    A candidate survives when the same increment links some appearance of the
    first channel to an appearance of the second, and that same appearance of
    the second to one of the third. With several survivors the value seen in
    a strict majority of agreeing triples wins; anything else is Ambiguous.
    Returns (increment, winning ((channel, offset), ...) triples); the triples
    are the appearances believed truly mapped.
    """
    pq = candidate_increments(p, q, interval_us, tolerance_us)
    qr = candidate_increments(q, r, interval_us, tolerance_us)
    matches = []
    for h1, (off_p, off_q) in pq:
        for h2, (off_q2, off_r) in qr:
            if h1 == h2 and off_q2 == off_q:
                matches.append((h1, off_p, off_q, off_r))
    if not matches:
        raise Ambiguous("no agreeing hop-increment candidates across the three channels")
    counts = Counter(h for h, *_ in matches)
    winner, count = counts.most_common(1)[0]
    if 2 * count <= len(matches):
        raise Ambiguous("no candidate reached a strict majority")
    triples = tuple(
        ((p.channel, off_p), (q.channel, off_q), (r.channel, off_r))
        for h, off_p, off_q, off_r in matches
        if h == winner
    )
    return winner, triples


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass
class MapScanResult:
    channel_map: ChannelMap
    end_unmapped: int
    end_anchor_us: int
    hits: int


@dataclass
class ConfirmResult:
    misses: int
    end_unmapped: int
    end_anchor_us: int


def _scan_windows(anchor_unmapped, anchor_time_us, hop_increment, interval_us, radio, lead_us):
    """Yield (unmapped, event_time) for the next 37 reachable predicted events.

    anchor_time_us is any time on the connection's anchor grid at which the
    unmapped channel equalled anchor_unmapped; it may lie in the past, even
    by whole pattern spans, because the unmapped sequence never depends on
    the channel map.
    """
    first = max(1, _ceil_div(radio.now_us + lead_us - anchor_time_us, interval_us))
    for j in range(first, first + PATTERN_SPAN_EVENTS):
        unmapped = (anchor_unmapped + j * hop_increment) % DATA_CHANNEL_COUNT
        yield unmapped, anchor_time_us + j * interval_us


def derive_channel_map(
    anchor_unmapped: int,
    anchor_time_us: int,
    hop_increment: int,
    interval_us: int,
    radio,
    lead_margin_us: int | None = None,
    tolerance_us: int | None = None,
) -> MapScanResult:
    """Discovery pass: 37 predicted hops, tuned to the raw unmapped channel.

    Arriving lead_margin_us early leaves room to retune before the victim
    shows up. A channel is marked used exactly when the target is heard
    there. Fewer than two hits means the prediction diverged mid-scan.
    """
    lead = interval_us // 2 if lead_margin_us is None else lead_margin_us
    tol = interval_us // 4 if tolerance_us is None else tolerance_us
    bits = [False] * DATA_CHANNEL_COUNT
    hits = 0
    unmapped = anchor_unmapped
    event_time = anchor_time_us
    for unmapped, event_time in _scan_windows(
        anchor_unmapped, anchor_time_us, hop_increment, interval_us, radio, lead
    ):
        radio.tune(unmapped)
        obs = radio.observe(event_time + interval_us - lead - radio.now_us)
        if any(o.channel == unmapped and abs(o.time_us - event_time) <= tol for o in obs):
            bits[unmapped] = True
            hits += 1
    if hits < 2:
        raise DesyncSuspected(f"map scan heard only {hits} channel(s)")
    return MapScanResult(ChannelMap(tuple(bits)), unmapped, event_time, hits)


def confirm_channel_map(
    candidate: ChannelMap,
    anchor_unmapped: int,
    anchor_time_us: int,
    hop_increment: int,
    interval_us: int,
    radio,
    lead_margin_us: int | None = None,
    tolerance_us: int | None = None,
) -> ConfirmResult:
    """Confirming pass: re-listen through one full span, remapping with the
    candidate map, and count events that failed to appear where predicted."""
    lead = interval_us // 2 if lead_margin_us is None else lead_margin_us
    tol = interval_us // 4 if tolerance_us is None else tolerance_us
    misses = 0
    unmapped = anchor_unmapped
    event_time = anchor_time_us
    for unmapped, event_time in _scan_windows(
        anchor_unmapped, anchor_time_us, hop_increment, interval_us, radio, lead
    ):
        channel = remap(unmapped, candidate)
        radio.tune(channel)
        obs = radio.observe(event_time + interval_us - lead - radio.now_us)
        if not any(o.channel == channel and abs(o.time_us - event_time) <= tol for o in obs):
            misses += 1
    return ConfirmResult(misses, unmapped, event_time)


@dataclass
class CrackerConfig:
    n_repeats: int = 3
    initial_channel: int = 0
    dwell_timeout_us: int = 10_000_000
    observe_chunk_us: int = 250_000
    max_delta_window: int = 200
    miss_window: int = 10
    miss_threshold: int = 5
    confirm_miss_limit: int = 4
    lead_margin_us: int | None = None
    grid_tolerance_us: int | None = None
    hop_budget: int = 50 * PATTERN_SPAN_EVENTS


@dataclass
class FollowReport:
    expected_events: int = 0
    hits: int = 0
    resync_times_us: list[int] = field(default_factory=list)

    @property
    def resync_count(self) -> int:
        return len(self.resync_times_us)


class Cracker:
    """Drives the staged attack against a radio (tune/observe interface).

    Stage methods raise BudgetExceeded past the deadline and SnifferError
    subclasses on unrecoverable input; the estimate dump line list records
    every stage transition and resync.
    """

    def __init__(self, radio, config: CrackerConfig | None = None):
        self.radio = radio
        self.cfg = config or CrackerConfig()
        self.estimate = SnifferEstimate()
        self.transitions: list[str] = []
        self.start_us = radio.now_us
        self._p_set: AppearanceSet | None = None
        self._anchors: list[tuple[tuple[int, int], int]] = []
        self._phase: tuple[int, int] | None = None  # (unmapped, event time) last predicted

    # -- helpers -------------------------------------------------------

    def _lead(self) -> int:
        if self.cfg.lead_margin_us is not None:
            return self.cfg.lead_margin_us
        return self.estimate.interval_us // 2

    def _tol(self) -> int:
        if self.cfg.grid_tolerance_us is not None:
            return self.cfg.grid_tolerance_us
        return self.estimate.interval_us // 4

    def _mark_transition(self, stage: str) -> None:
        self.estimate.stage = stage
        if self.estimate.interval_us:
            self.estimate.hops_consumed = (self.radio.now_us - self.start_us) // self.estimate.interval_us
        self.transitions.append(self.estimate.dump_line())

    def _check_deadline(self, deadline_us: int | None) -> None:
        if deadline_us is not None and self.radio.now_us >= deadline_us:
            raise BudgetExceeded(f"hop budget exhausted at {self.radio.now_us} us")

    # -- stage 1: connection interval ----------------------------------

    def run_interval_stage(self, deadline_us: int | None = None) -> int:
        cfg = self.cfg
        channel = cfg.initial_channel
        self.radio.tune(channel)
        times: list[int] = []
        last_heard = self.radio.now_us
        while True:
            self._check_deadline(deadline_us)
            obs = self.radio.observe(cfg.observe_chunk_us)
            if not obs:
                if self.radio.now_us - last_heard >= cfg.dwell_timeout_us:
                    channel = (channel + 1) % DATA_CHANNEL_COUNT
                    self.radio.tune(channel)
                    times = []
                    last_heard = self.radio.now_us
                continue
            times.extend(o.time_us for o in obs)
            last_heard = times[-1]
            times = times[-(cfg.max_delta_window + 1):]
            deltas = [b - a for a, b in zip(times, times[1:])]
            if len(deltas) < cfg.n_repeats:
                continue
            try:
                span = detect_period(DeltaSeries(channel, deltas), cfg.n_repeats)
                interval = derive_connection_interval(span)
            except NoPeriodFound:
                continue
            except RangeError:
                # false period, usually a log straddling a map update; shed the prefix
                times = times[len(times) // 2:]
                continue
            self.estimate.interval_us = interval
            self.estimate.span_us = span
            tail = [t for t in times if t > times[-1] - span]
            self._p_set = AppearanceSet(channel, tuple(sorted({t % span for t in tail})))
            self._mark_transition(STAGE_INCREMENT)
            return interval

    # -- stage 2: hop increment ----------------------------------------

    def run_increment_stage(self, deadline_us: int | None = None) -> int:
        span = self.estimate.span_us
        interval = self.estimate.interval_us
        sets = [self._p_set]
        channel = self._p_set.channel
        while True:
            self._check_deadline(deadline_us)
            channel = (channel + 1) % DATA_CHANNEL_COUNT
            if channel in (sets[-1].channel, sets[-2].channel if len(sets) > 1 else None):
                continue
            self.radio.tune(channel)
            obs = self.radio.observe(span)
            offsets = tuple(sorted({o.time_us % span for o in obs}))
            if not offsets:
                continue
            sets.append(AppearanceSet(channel, offsets))
            if len(sets) < 3:
                continue
            try:
                increment, triples = derive_hop_increment(
                    sets[-3], sets[-2], sets[-1], interval, self._tol()
                )
            except Ambiguous:
                continue
            self.estimate.hop_increment = increment
            self.estimate.true_channels = triples
            self._anchors = self._rank_anchor_hypotheses(sets[-3:], increment)
            self._mark_transition(STAGE_MAP)
            return increment

    def _rank_anchor_hypotheses(self, sets, increment) -> list[tuple[tuple[int, int], int]]:
        """Rank observed appearances by how many others they make truly mapped.

        Each appearance (channel, offset) hypothesizes the unmapped value at
        its own phase. Hypotheses implying the same alignment are equivalent,
        so keep one representative each, preferring the freshest. Remapped
        appearances can conspire (an interval-shaped map remaps whole runs by
        a constant shift), so tied hypotheses are arbitrated later by scan
        hit counts. Returns [(anchor, votes), ...], best first.
        """
        interval = self.estimate.interval_us
        appearances = [(s.channel, off) for s in sets for off in s.offsets]
        tally: dict[int, list] = {}
        for channel, offset in appearances:
            phase = (channel - (offset // interval) * increment) % DATA_CHANNEL_COUNT
            entry = tally.setdefault(phase, [0, (channel, offset)])
            entry[0] += 1
            if offset > entry[1][1]:
                entry[1] = (channel, offset)
        ranked = sorted(tally.values(), key=lambda e: (-e[0], -e[1][1]))
        return [(entry[1], entry[0]) for entry in ranked]

    # -- stage 3: channel map ------------------------------------------

    def _scan_one(self, anchor) -> MapScanResult | None:
        try:
            return derive_channel_map(
                anchor[0],
                anchor[1],
                self.estimate.hop_increment,
                self.estimate.interval_us,
                self.radio,
                self._lead(),
                self._tol(),
            )
        except DesyncSuspected:
            return None

    def _confirm_and_accept(self, scan: MapScanResult) -> bool:
        confirm = confirm_channel_map(
            scan.channel_map,
            scan.end_unmapped,
            scan.end_anchor_us,
            self.estimate.hop_increment,
            self.estimate.interval_us,
            self.radio,
            self._lead(),
            self._tol(),
        )
        if confirm.misses > self.cfg.confirm_miss_limit:
            return False
        self.estimate.channel_map = scan.channel_map
        self._phase = (confirm.end_unmapped, confirm.end_anchor_us)
        return True

    def _scan_until_accepted(self, ranked, deadline_us) -> None:
        """Scan from vote-ranked anchors until a map survives the confirm pass.

        Hypotheses tied at the top vote count are arbitrated by scanning each
        and keeping the scan that heard the most channels: a true anchor
        hears every used channel, while a shift-conspiracy hears at most the
        unused ones. On rejection the ranking is rotated so every hypothesis
        eventually gets scanned even if the vote order is misleading.
        """
        order = list(ranked)
        while True:
            self._check_deadline(deadline_us)
            top_votes = order[0][1]
            contenders = [anchor for anchor, votes in order if votes == top_votes][:3]
            best = None
            for anchor in contenders:
                self._check_deadline(deadline_us)
                scan = self._scan_one(anchor)
                if scan is not None and (best is None or scan.hits > best.hits):
                    best = scan
            if best is not None and self._confirm_and_accept(best):
                return
            order = order[1:] + order[:1]

    def run_map_stage(self, deadline_us: int | None = None) -> ChannelMap:
        self._scan_until_accepted(self._anchors, deadline_us)
        self._mark_transition(STAGE_FOLLOWING)
        return self.estimate.channel_map

    def crack(self, deadline_us: int | None = None) -> SnifferEstimate:
        self.run_interval_stage(deadline_us)
        self.run_increment_stage(deadline_us)
        self.run_map_stage(deadline_us)
        return self.estimate

    # -- stage 4: follow mode ------------------------------------------

    def follow(self, until_us: int, miss: MissWindow | None = None) -> FollowReport:
        """Hop in lockstep until the deadline, re-deriving the map on desync.

        The unmapped sequence is map-independent, so the phase tracked here
        stays valid across victim map updates; only the remapping goes stale,
        which is exactly what the miss window detects.
        """
        if self.estimate.stage != STAGE_FOLLOWING:
            raise SnifferError("follow requires a completed estimate")
        est = self.estimate
        interval = est.interval_us
        lead = self._lead()
        tol = self._tol()
        window = miss or MissWindow(self.cfg.miss_window, self.cfg.miss_threshold)
        report = FollowReport()
        unmapped, event_time = self._phase
        while event_time + interval <= until_us:
            unmapped = (unmapped + est.hop_increment) % DATA_CHANNEL_COUNT
            event_time += interval
            channel = remap(unmapped, est.channel_map)
            self.radio.tune(channel)
            obs = self.radio.observe(event_time + interval - lead - self.radio.now_us)
            hit = any(o.channel == channel and abs(o.time_us - event_time) <= tol for o in obs)
            report.expected_events += 1
            report.hits += hit
            window.record(hit)
            if window.triggered:
                report.resync_times_us.append(event_time)
                self._mark_transition(STAGE_MAP)
                self._phase = (unmapped, event_time)
                # allow the rescan to overrun the follow deadline a little, but
                # never spin forever under total loss
                scan_deadline = until_us + 6 * PATTERN_SPAN_EVENTS * interval
                try:
                    # the tracked phase is an exact anchor
                    self._scan_until_accepted([(self._phase, 1)], scan_deadline)
                except BudgetExceeded:
                    self._mark_transition(STAGE_FOLLOWING)
                    break
                self._mark_transition(STAGE_FOLLOWING)
                window.reset()
                unmapped, event_time = self._phase
        self._phase = (unmapped, event_time)
        return report
