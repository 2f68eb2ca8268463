"""Pydantic request/response models for the service API."""

from __future__ import annotations

from pydantic import BaseModel

from ..harness import Report, TrialResult
from ..scenario import Scenario, scenario_from_mapping


class ScenarioModel(BaseModel):
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
    dwell_timeout_ms: float = 10_000.0
    hop_budget: int = 50 * 37
    retune_latency_us: int = 0
    initial_channel: int = 0
    confirm_miss_limit: int = 4
    benchmark_update_miss_prob: float = 0.0
    benchmark_desync_hazard: float = 0.0

    def to_scenario(self) -> Scenario:
        return scenario_from_mapping(self.model_dump())


class OracleRequest(BaseModel):
    h_inc: int
    map: str = "full"
    luc: int = 0
    count: int = 37


class HopRow(BaseModel):
    event: int
    channel: int


class OracleResponse(BaseModel):
    rows: list[HopRow]
    lines: list[str]


class AccuracyRow(BaseModel):
    scenario: str
    param: str
    accuracy_pct: float


class TrialRow(BaseModel):
    scenario: str
    trial: int
    hops_cint: int
    hops_hinc: int
    hops_cmap: int
    capture_pct: float
    resync_count: int
    failed_stage: str | None = None


class ReportModel(BaseModel):
    scenario: str
    trials: int
    accuracy: list[AccuracyRow]
    trial_rows: list[TrialRow]
    capture_mean_pct: float
    capture_stdev_pct: float
    summary: str

    @classmethod
    def build(cls, report: Report, results: list[TrialResult], summary: str) -> "ReportModel":
        accuracy = [
            AccuracyRow(scenario=report.scenario, param=param, accuracy_pct=report.accuracy_pct[param])
            for param in ("c_int", "h_inc", "c_map")
        ]
        rows = [
            TrialRow(
                scenario=r.scenario,
                trial=r.trial,
                hops_cint=r.hops_cint,
                hops_hinc=r.hops_hinc,
                hops_cmap=r.hops_cmap,
                capture_pct=round(100.0 * r.capture_rate, 1),
                resync_count=r.resync_count,
                failed_stage=r.failed_stage,
            )
            for r in results
        ]
        return cls(
            scenario=report.scenario,
            trials=report.trials,
            accuracy=accuracy,
            trial_rows=rows,
            capture_mean_pct=round(report.capture_mean_pct, 2),
            capture_stdev_pct=round(report.capture_stdev_pct, 2),
            summary=summary,
        )


class RunRequest(BaseModel):
    scenario: ScenarioModel


class RunResponse(BaseModel):
    report: ReportModel


class SweepRequest(BaseModel):
    scenario: ScenarioModel
    update_periods_s: list[float]


class SweepResponse(BaseModel):
    reports: list[ReportModel]


class CompareRequest(BaseModel):
    scenario: ScenarioModel
    update_periods_s: list[float] | None = None


class ContrastRow(BaseModel):
    update_period_s: float
    cracker_capture_mean_pct: float
    cracker_capture_stdev_pct: float
    benchmark_capture_mean_pct: float
    benchmark_capture_stdev_pct: float


class CompareResponse(BaseModel):
    cracker: list[ReportModel]
    benchmark: list[ReportModel]
    contrast: list[ContrastRow]
