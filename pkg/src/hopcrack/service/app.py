"""FastAPI service wrapping the simulator, sniffer, and trial harness."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from ..afh import ChannelMap, ConnectionParams, hop_sequence
from ..harness import aggregate, run_benchmark, run_comparison, run_scenario, run_trial
from ..reports import summary_text
from ..scenario import Scenario, ScenarioError, parse_map_spec
from .schemas import (
    CompareRequest,
    CompareResponse,
    ContrastRow,
    HopRow,
    OracleRequest,
    OracleResponse,
    ReportModel,
    RunRequest,
    RunResponse,
    SweepRequest,
    SweepResponse,
)


def _scenario_or_400(model) -> Scenario:
    try:
        return model.to_scenario()
    except ScenarioError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None


def _report_model(scenario: Scenario) -> ReportModel:
    results = run_scenario(scenario)
    report = aggregate(results)
    return ReportModel.build(report, results, summary_text([report]))


def create_app() -> FastAPI:
    app = FastAPI(title="hopcrack", version="0.1.0")

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/oracle", response_model=OracleResponse)
    def oracle(req: OracleRequest):
        try:
            channel_map = parse_map_spec(req.map)
            params = ConnectionParams(
                access_address=0,
                interval_us=7_500,
                hop_increment=req.h_inc,
                channel_map=channel_map,
                last_unmapped=req.luc,
            )
            sequence = hop_sequence(params, req.count)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        rows = [HopRow(event=e, channel=c) for e, c in sequence]
        return OracleResponse(rows=rows, lines=[f"{e},{c}" for e, c in sequence])

    @app.post("/run", response_model=RunResponse)
    def run(req: RunRequest):
        scenario = _scenario_or_400(req.scenario)
        return RunResponse(report=_report_model(scenario))

    @app.post("/sweep", response_model=SweepResponse)
    def sweep(req: SweepRequest):
        base = _scenario_or_400(req.scenario)
        if not req.update_periods_s:
            raise HTTPException(status_code=400, detail="update_periods_s: must not be empty")
        reports = []
        for period in req.update_periods_s:
            try:
                scenario = base.with_update_period(period)
            except ScenarioError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from None
            reports.append(_report_model(scenario))
        return SweepResponse(reports=reports)

    @app.post("/compare", response_model=CompareResponse)
    def compare(req: CompareRequest):
        base = _scenario_or_400(req.scenario)
        periods = req.update_periods_s or [base.update_period_s]
        cracker_reports, benchmark_reports, contrast = [], [], []
        for period in periods:
            try:
                scenario = base.with_update_period(period) if req.update_periods_s else base
            except ScenarioError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from None
            cracked, benched = run_comparison(scenario)
            crack_report = aggregate(cracked)
            bench_report = aggregate(benched)
            cracker_reports.append(
                ReportModel.build(crack_report, cracked, summary_text([crack_report]))
            )
            benchmark_reports.append(
                ReportModel.build(bench_report, benched, summary_text([bench_report]))
            )
            contrast.append(
                ContrastRow(
                    update_period_s=period,
                    cracker_capture_mean_pct=round(crack_report.capture_mean_pct, 2),
                    cracker_capture_stdev_pct=round(crack_report.capture_stdev_pct, 2),
                    benchmark_capture_mean_pct=round(bench_report.capture_mean_pct, 2),
                    benchmark_capture_stdev_pct=round(bench_report.capture_stdev_pct, 2),
                )
            )
        return CompareResponse(
            cracker=cracker_reports, benchmark=benchmark_reports, contrast=contrast
        )

    return app


app = create_app()
