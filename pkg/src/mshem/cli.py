"""Command-line client of the curve-tracing service.

The CLI is a thin HTTP client: by default it mounts the service in-process
(no socket), and with ``--server URL`` it talks to a running instance
instead.  Either way the request/response contract is identical, and the
client turns responses into the CSV/JSON data products.

Exit codes: 0 success, 1 input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import asyncio
import csv
import json
import sys
from pathlib import Path

import httpx

from .artifacts import CURVE_HEADER, MISMATCH_HEADER, fmt_float
from .service import create_app

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2


def _post(server: str | None, path: str, payload: dict) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=600.0) as client:
            return client.post(path, json=payload)

    async def go() -> httpx.Response:
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://mshem") as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def _fail(response: httpx.Response) -> int:
    try:
        body = response.json()
    except ValueError:
        body = {"error_type": "HTTPError", "category": "numerical",
                "message": response.text}
    print(json.dumps(body, sort_keys=True), file=sys.stderr)
    return EXIT_INPUT if body.get("category") == "input" else EXIT_NUMERICAL


def _read_case(path: str) -> str | None:
    try:
        return Path(path).read_text()
    except OSError as exc:
        print(json.dumps({"error_type": "CaseFileUnreadable", "category": "input",
                          "message": str(exc)}), file=sys.stderr)
        return None


def _read_direction(spec: str):
    if spec == "proportional":
        return "proportional", None
    try:
        return json.loads(Path(spec).read_text()), None
    except (OSError, json.JSONDecodeError) as exc:
        return None, json.dumps({"error_type": "DirectionFileUnreadable",
                                 "category": "input", "message": str(exc)})


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _tracer_payload(args) -> dict:
    return {"tol_predict": args.tol_predict, "tol_correct": args.tol_correct,
            "min_step_mw": args.min_step_mw, "order": args.order}


def cmd_solve(args) -> int:
    case_text = _read_case(args.case)
    if case_text is None:
        return EXIT_INPUT
    direction, err = _read_direction(args.direction)
    if err:
        print(err, file=sys.stderr)
        return EXIT_INPUT
    resp = _post(args.server, "/solve", {
        "case_text": case_text, "method": args.method, "lam": args.lam,
        "direction": direction, "tol": args.tol, "order": args.order})
    if resp.status_code != 200:
        return _fail(resp)
    text = json.dumps(resp.json(), indent=2, sort_keys=True)
    if args.out:
        out = _outdir(args)
        (out / "solution.json").write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _write_trace_artifacts(out: Path, body: dict) -> None:
    bus_ids = body["bus_ids"]
    mis_rows = []
    summary = {}
    for method, curve in body["curves"].items():
        name = method.replace("-", "_")
        with open(out / f"curve_{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CURVE_HEADER)
            for p in curve["points"]:
                for bid, vm, va in zip(bus_ids, p["v_mag_pu"], p["v_ang_rad"]):
                    w.writerow([fmt_float(p["lambda_mw"]), str(bid),
                                fmt_float(vm), fmt_float(va)])
        mis_rows += [(p["lambda_mw"], method, p["max_mismatch_mva"])
                     for p in curve["points"]]
        summary[method] = curve["summary"]
    with open(out / "mismatch.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MISMATCH_HEADER)
        for lam_mw, method, mis in mis_rows:
            w.writerow([fmt_float(lam_mw), method, fmt_float(mis)])
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")


def cmd_trace(args) -> int:
    case_text = _read_case(args.case)
    if case_text is None:
        return EXIT_INPUT
    direction, err = _read_direction(args.direction)
    if err:
        print(err, file=sys.stderr)
        return EXIT_INPUT
    resp = _post(args.server, "/trace", {
        "case_text": case_text, "method": args.method, "direction": direction,
        "tracer": _tracer_payload(args),
        "samples_per_stage": args.samples_per_stage})
    if resp.status_code != 200:
        return _fail(resp)
    _write_trace_artifacts(_outdir(args), resp.json())
    return EXIT_OK


def cmd_compare(args) -> int:
    case_text = _read_case(args.case)
    if case_text is None:
        return EXIT_INPUT
    direction, err = _read_direction(args.direction)
    if err:
        print(err, file=sys.stderr)
        return EXIT_INPUT
    resp = _post(args.server, "/compare", {
        "case_text": case_text, "direction": direction,
        "tracer": _tracer_payload(args)})
    if resp.status_code != 200:
        return _fail(resp)
    text = json.dumps(resp.json(), indent=2, sort_keys=True)
    if args.out:
        (_outdir(args) / "compare.json").write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case", required=True, help="case file (MATPOWER subset or JSON)")
    p.add_argument("--direction", default="proportional",
                   help="'proportional' or a JSON file with per-bus MW increments")
    p.add_argument("--server", default=None,
                   help="service URL; default runs the service in-process")
    p.add_argument("--order", type=int, default=30, help="series truncation order")


def _add_tracer_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol-predict", type=float, default=1e-8)
    p.add_argument("--tol-correct", type=float, default=1e-8)
    p.add_argument("--min-step-mw", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mshem",
        description="P-V curve tracing by multi-stage holomorphic embedding")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="single power-flow solve")
    _add_common(p)
    p.add_argument("--method", choices=["newton", "hem"], default="newton")
    p.add_argument("--lam", type=float, default=0.0, help="loading parameter")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", default=None, help="output directory (default: stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("trace", help="trace the P-V curve to the nose")
    _add_common(p)
    p.add_argument("--method", choices=["mshem", "cpf", "both", "hem-single"],
                   default="mshem")
    _add_tracer_flags(p)
    p.add_argument("--samples-per-stage", type=int, default=20)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("compare", help="cross-method comparison report")
    _add_common(p)
    _add_tracer_flags(p)
    p.add_argument("--out", default=None, help="output directory (default: stdout)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
