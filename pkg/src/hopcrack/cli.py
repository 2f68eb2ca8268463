"""Command-line client for the hopcrack service.

The CLI is a thin client: every subcommand except `serve` talks to the
FastAPI service over HTTP. Without --server it spins the service up
in-process, so no running daemon is needed for local work.
"""

from __future__ import annotations

import argparse
import sys

import httpx

from .scenario import ScenarioError, load_scenario, scenario_keys

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REMOTE = 3
EXIT_IO = 4


def make_client(server: str | None):
    if server:
        return httpx.Client(base_url=server.rstrip("/"), timeout=600.0)
    from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app())


def _post(client, path: str, payload: dict) -> dict:
    response = client.post(path, json=payload)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise RuntimeError(f"{path} failed ({response.status_code}): {detail}")
    return response.json()


def _scenario_payload(path: str) -> dict:
    scenario = load_scenario(path)
    payload = {key: getattr(scenario, key) for key in scenario_keys()}
    return payload


def _write(path: str, content: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(content)


def _report_files(out_dir: str, label: str, reports: list[dict]) -> list[str]:
    import os

    os.makedirs(out_dir, exist_ok=True)
    acc_lines = ["scenario,param,accuracy_pct"]
    trial_lines = ["scenario,trial,hops_cint,hops_hinc,hops_cmap,capture_pct"]
    summaries = []
    for report in reports:
        for row in report["accuracy"]:
            acc_lines.append(f"{row['scenario']},{row['param']},{row['accuracy_pct']:.1f}")
        for row in report["trial_rows"]:
            trial_lines.append(
                f"{row['scenario']},{row['trial']},{row['hops_cint']},{row['hops_hinc']},"
                f"{row['hops_cmap']},{row['capture_pct']:.1f}"
            )
        summaries.append(report["summary"])
    paths = []
    for suffix, content in (
        ("accuracy.csv", "\n".join(acc_lines) + "\n"),
        ("trials.csv", "\n".join(trial_lines) + "\n"),
        ("summary.txt", "".join(summaries)),
    ):
        path = os.path.join(out_dir, f"{label}_{suffix}")
        _write(path, content)
        paths.append(path)
    return paths


def cmd_oracle(args) -> int:
    client = make_client(args.server)
    data = _post(
        client,
        "/oracle",
        {"h_inc": args.h_inc, "map": args.map, "luc": args.luc, "count": args.count},
    )
    text = "\n".join(data["lines"]) + "\n"
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_run(args) -> int:
    payload = _scenario_payload(args.scenario)
    client = make_client(args.server)
    data = _post(client, "/run", {"scenario": payload})
    paths = _report_files(args.out, payload["name"], [data["report"]])
    sys.stdout.write(data["report"]["summary"])
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    payload = _scenario_payload(args.scenario)
    periods = [float(p) for p in args.periods.split(",") if p.strip()]
    client = make_client(args.server)
    data = _post(client, "/sweep", {"scenario": payload, "update_periods_s": periods})
    paths = _report_files(args.out, f"{payload['name']}_sweep", data["reports"])
    for report in data["reports"]:
        sys.stdout.write(report["summary"])
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    payload = _scenario_payload(args.scenario)
    request: dict = {"scenario": payload}
    if args.periods:
        request["update_periods_s"] = [float(p) for p in args.periods.split(",") if p.strip()]
    client = make_client(args.server)
    data = _post(client, "/compare", request)
    paths = _report_files(args.out, f"{payload['name']}_cracker", data["cracker"])
    paths += _report_files(args.out, f"{payload['name']}_benchmark", data["benchmark"])
    contrast_lines = [
        "update_period_s,cracker_mean_pct,cracker_stdev_pct,benchmark_mean_pct,benchmark_stdev_pct"
    ]
    for row in data["contrast"]:
        contrast_lines.append(
            f"{row['update_period_s']:g},{row['cracker_capture_mean_pct']:.2f},"
            f"{row['cracker_capture_stdev_pct']:.2f},{row['benchmark_capture_mean_pct']:.2f},"
            f"{row['benchmark_capture_stdev_pct']:.2f}"
        )
    import os

    contrast_path = os.path.join(args.out, f"{payload['name']}_contrast.csv")
    _write(contrast_path, "\n".join(contrast_lines) + "\n")
    paths.append(contrast_path)
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hopcrack",
        description="Simulate BLE hopping connections and crack them with a single-channel sniffer.",
    )
    parser.add_argument("--server", help="base URL of a running service (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    oracle = sub.add_parser("oracle", help="emit a golden hop sequence as event,channel lines")
    oracle.add_argument("--h-inc", type=int, required=True, dest="h_inc")
    oracle.add_argument("--map", default="full")
    oracle.add_argument("--luc", type=int, default=0)
    oracle.add_argument("-n", "--count", type=int, required=True)
    oracle.add_argument("--out", help="write lines to a file instead of stdout")
    oracle.set_defaults(func=cmd_oracle)

    run = sub.add_parser("run", help="execute a scenario file and write reports")
    run.add_argument("--scenario", required=True)
    run.add_argument("--out", default="results")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a scenario across several map-update periods")
    sweep.add_argument("--scenario", required=True)
    sweep.add_argument("--periods", required=True, help="comma list of periods in seconds")
    sweep.add_argument("--out", default="results")
    sweep.set_defaults(func=cmd_sweep)

    compare = sub.add_parser("compare", help="run cracker and follow-mode benchmark on identical seeds")
    compare.add_argument("--scenario", required=True)
    compare.add_argument("--periods", help="optional comma list of update periods in seconds")
    compare.add_argument("--out", default="results")
    compare.set_defaults(func=cmd_compare)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REMOTE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
