"""Seeded trial execution and metric computation.

A trial builds a fresh victim simulation, lets the cracking pipeline derive
interval, increment, and map (scoring each against ground truth at the
instant the derivation completes), then streams a data schedule through
follow mode and counts how many data packets the sniffer captured.

The benchmark comparator models an idealized follow-mode sniffer: it knows
the initial parameters outright and keeps hopping in lockstep, but it learns
map updates only from the announcement packet riding the event before each
update takes effect. Missing that packet leaves it on a stale map until the
next update it manages to hear.
"""

from __future__ import annotations

import random
import statistics
from dataclasses import dataclass, field

from .afh import (
    DATA_CHANNEL_COUNT,
    ChannelMap,
    ConnectionParams,
    remap,
)
from .scenario import Scenario
from .sim import (
    LossModel,
    MapUpdateSchedule,
    RemoveRestoreRule,
    Simulation,
    new_connection,
)
from .sniffer import (
    Cracker,
    CrackerConfig,
    MissWindow,
    SnifferError,
)

ADVERTISING_ACCESS_ADDRESS = 0x8E89BED6


@dataclass
class TrialResult:
    scenario: str
    trial: int
    cint_ok: bool = False
    hinc_ok: bool = False
    cmap_ok: bool = False
    hops_cint: int = -1
    hops_hinc: int = -1
    hops_cmap: int = -1
    packets_expected: int = 0
    packets_captured: int = 0
    resync_count: int = 0
    failed_stage: str | None = None
    data_start_us: int = 0
    estimate_log: list[str] = field(default_factory=list)

    @property
    def capture_rate(self) -> float:
        if self.packets_expected == 0:
            return 0.0
        return self.packets_captured / self.packets_expected


@dataclass
class Report:
    scenario: str
    trials: int
    accuracy_pct: dict[str, float]
    hops_stats: dict[str, tuple[float, float, float]]  # param -> (q1, median, q3)
    capture_mean_pct: float
    capture_stdev_pct: float
    resync_mean: float
    failed_trials: int


def _trial_seed(scenario: Scenario, trial_index: int) -> str:
    return f"{scenario.seed}/{trial_index}"


def _victim_params(scenario: Scenario, trial_index: int) -> ConnectionParams:
    rng = random.Random(f"{_trial_seed(scenario, trial_index)}/victim")
    access_address = rng.randrange(2**32)
    if access_address == ADVERTISING_ACCESS_ADDRESS:
        access_address ^= 1
    return ConnectionParams(
        access_address=access_address,
        interval_us=scenario.c_int_us,
        hop_increment=scenario.h_inc,
        channel_map=scenario.channel_map,
        last_unmapped=rng.randrange(DATA_CHANNEL_COUNT),
    )


def build_simulation(scenario: Scenario, trial_index: int) -> Simulation:
    params = _victim_params(scenario, trial_index)
    schedule = None
    if scenario.update_period_s > 0:
        schedule = MapUpdateSchedule(scenario.update_period_us, RemoveRestoreRule())
    loss = LossModel.uniform(scenario.p_loss)
    return new_connection(
        params,
        schedule,
        loss,
        seed=_trial_seed(scenario, trial_index),
        retune_latency_us=scenario.retune_latency_us,
    )


def _cracker_config(scenario: Scenario) -> CrackerConfig:
    return CrackerConfig(
        n_repeats=scenario.n_repeats,
        initial_channel=scenario.initial_channel,
        dwell_timeout_us=scenario.dwell_timeout_us,
        miss_window=scenario.window,
        miss_threshold=scenario.threshold,
        confirm_miss_limit=scenario.confirm_miss_limit,
        lead_margin_us=scenario.lead_margin_us,
        hop_budget=scenario.hop_budget,
    )


def _packet_anchors(scenario: Scenario, data_start_us: int) -> list[int]:
    """Anchor time of the event carrying each scheduled data packet."""
    c_int = scenario.c_int_us
    anchors = []
    for i in range(scenario.packet_count):
        send_time = data_start_us + i * scenario.send_period_us
        anchors.append(-(-send_time // c_int) * c_int)
    return anchors


def run_trial(scenario: Scenario, trial_index: int) -> TrialResult:
    """Full pipeline against a fresh simulation; deterministic per (seed, trial)."""
    sim = build_simulation(scenario, trial_index)
    cracker = Cracker(sim.radio, _cracker_config(scenario))
    result = TrialResult(scenario.name, trial_index)
    deadline = scenario.hop_budget * scenario.c_int_us
    truth = sim.params

    def hops_now() -> int:
        return sim.now_us // truth.interval_us

    try:
        cracker.run_interval_stage(deadline)
        result.cint_ok = cracker.estimate.interval_us == truth.interval_us
        result.hops_cint = hops_now()
        cracker.run_increment_stage(deadline)
        result.hinc_ok = cracker.estimate.hop_increment == truth.hop_increment
        result.hops_hinc = hops_now()
        cracker.run_map_stage(deadline)
        result.cmap_ok = cracker.estimate.channel_map == sim.current_map
        result.hops_cmap = hops_now()
    except SnifferError:
        result.failed_stage = cracker.estimate.stage
        result.packets_expected = scenario.packet_count
        result.data_start_us = sim.now_us
        result.estimate_log = list(cracker.transitions)
        return result

    result.data_start_us = sim.now_us
    carrying = _packet_anchors(scenario, result.data_start_us)
    end_us = carrying[-1] + 2 * scenario.c_int_us
    follow_report = cracker.follow(end_us)
    result.resync_count = follow_report.resync_count
    captured_times = {obs.time_us for obs in sim.radio.log}
    result.packets_expected = scenario.packet_count
    result.packets_captured = sum(1 for anchor in carrying if anchor in captured_times)
    result.estimate_log = list(cracker.transitions)
    return result


def _corrupt_map(rng: random.Random) -> ChannelMap:
    count = rng.randint(10, 20)
    return ChannelMap.from_channels(rng.sample(range(DATA_CHANNEL_COUNT), count))


def run_benchmark(scenario: Scenario, trial_index: int, data_start_us: int = 0) -> TrialResult:
    """Follow-mode comparator over the identical event log and loss draws.

    Knows interval, increment, phase, and the initial map a priori; never
    runs the cracking pipeline. A seeded per-event hazard can corrupt its
    map knowledge (it then limps along until it hears an update packet),
    and benchmark_update_miss_prob forces additional announcement losses.
    """
    sim = build_simulation(scenario, trial_index)
    truth = sim.params
    c_int = truth.interval_us
    lead = scenario.lead_margin_us or c_int // 2
    tol = c_int // 4
    rng = random.Random(f"{_trial_seed(scenario, trial_index)}/benchmark")
    result = TrialResult(scenario.name, trial_index)
    result.cint_ok = result.hinc_ok = True
    result.hops_cint = result.hops_hinc = result.hops_cmap = 0
    result.data_start_us = data_start_us

    carrying = _packet_anchors(scenario, data_start_us)
    end_us = carrying[-1] + 2 * c_int
    map_est = truth.channel_map
    desynced = False
    # event 0 is already materialized; start predicting from event 1
    unmapped = (truth.last_unmapped + truth.hop_increment) % DATA_CHANNEL_COUNT
    event_time = 0
    index = 0
    while event_time + c_int <= end_us:
        unmapped = (unmapped + truth.hop_increment) % DATA_CHANNEL_COUNT
        event_time += c_int
        index += 1
        channel = remap(unmapped, map_est)
        sim.radio.tune(channel)
        obs = sim.radio.observe(event_time + c_int - lead - sim.radio.now_us)
        hit = any(o.channel == channel and abs(o.time_us - event_time) <= tol for o in obs)
        if hit:
            record = sim.records[index]
            if record.announced_map is not None:
                if rng.random() >= scenario.benchmark_update_miss_prob:
                    map_est = record.announced_map
                    desynced = False
        if scenario.benchmark_desync_hazard and rng.random() < scenario.benchmark_desync_hazard:
            map_est = _corrupt_map(rng)
            if not desynced:
                desynced = True
                result.resync_count += 1

    result.cmap_ok = map_est == sim.current_map
    captured_times = {o.time_us for o in sim.radio.log}
    result.packets_expected = scenario.packet_count
    result.packets_captured = sum(1 for anchor in carrying if anchor in captured_times)
    return result


def run_scenario(scenario: Scenario) -> list[TrialResult]:
    return [run_trial(scenario, i) for i in range(scenario.trials)]


def run_comparison(scenario: Scenario) -> tuple[list[TrialResult], list[TrialResult]]:
    """Cracker and benchmark on the same seeds, same data schedule per trial."""
    cracked, benched = [], []
    for i in range(scenario.trials):
        trial = run_trial(scenario, i)
        bench = run_benchmark(scenario, i, data_start_us=trial.data_start_us)
        cracked.append(trial)
        benched.append(bench)
    return cracked, benched


def _pct(numerator: int, denominator: int) -> float:
    return 100.0 * numerator / denominator if denominator else 0.0


def _hops_quartiles(values: list[int]) -> tuple[float, float, float]:
    ok = sorted(v for v in values if v >= 0)
    if not ok:
        return (-1.0, -1.0, -1.0)
    if len(ok) == 1:
        v = float(ok[0])
        return (v, v, v)
    q1, med, q3 = statistics.quantiles(ok, n=4)
    return (q1, med, q3)


def aggregate(results: list[TrialResult]) -> Report:
    if not results:
        raise ValueError("aggregate needs at least one trial result")
    n = len(results)
    accuracy = {
        "c_int": _pct(sum(r.cint_ok for r in results), n),
        "h_inc": _pct(sum(r.hinc_ok for r in results), n),
        "c_map": _pct(sum(r.cmap_ok for r in results), n),
    }
    hops = {
        "c_int": _hops_quartiles([r.hops_cint for r in results]),
        "h_inc": _hops_quartiles([r.hops_hinc for r in results]),
        "c_map": _hops_quartiles([r.hops_cmap for r in results]),
    }
    rates = [100.0 * r.capture_rate for r in results]
    return Report(
        scenario=results[0].scenario,
        trials=n,
        accuracy_pct=accuracy,
        hops_stats=hops,
        capture_mean_pct=statistics.fmean(rates),
        capture_stdev_pct=statistics.stdev(rates) if n > 1 else 0.0,
        resync_mean=statistics.fmean(r.resync_count for r in results),
        failed_trials=sum(1 for r in results if r.failed_stage),
    )
