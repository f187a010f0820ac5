"""Batch front door: thin client over the service API.

Subcommands load instance files, send one request to the screenopt service
(an in-process app by default, or a remote `--server` URL), and render the
response into the documented output files plus a run manifest. Exit codes:
0 success, 1 domain or check failure, 2 usage or schema error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import math
import os
import sys
import time
from typing import Any, Optional

import httpx
import yaml

from . import __version__
from .errors import InstanceSchemaError
from .formats import (
    TOOL_NAME,
    atomic_write_text,
    dumps_json,
    fmt_real,
    parse_menu_csv,
)

log = logging.getLogger("screenopt")

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


def _configure_logging() -> None:
    level = _LOG_LEVELS.get(os.environ.get("SCREENOPT_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


class ServiceClient:
    """POSTs against a remote server or the in-process ASGI app."""

    def __init__(self, server: Optional[str] = None):
        self.server = server

    def post(self, path: str, payload: dict) -> tuple[int, Any]:
        if self.server:
            with httpx.Client(base_url=self.server, timeout=600.0) as client:
                response = client.post(path, json=payload)
                return response.status_code, response.json()

        from .service import create_app

        async def go():
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://screenopt.internal") as client:
                response = await client.post(path, json=payload)
                return response.status_code, response.json()

        return asyncio.run(go())


def _load_instance_payload(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = yaml.safe_load(handle)
    except OSError as exc:
        raise InstanceSchemaError("file", f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise InstanceSchemaError("file", f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InstanceSchemaError("instance", "expected a mapping at the top level")
    prices = data.get("prices")
    if isinstance(prices, dict):
        upper = prices.get("z_upper")
        if isinstance(upper, float) and math.isinf(upper):
            prices["z_upper"] = "inf"  # strict JSON parsers reject Infinity
    return data


def _load_config_overrides(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = yaml.safe_load(handle)
    except OSError as exc:
        raise InstanceSchemaError("config", f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise InstanceSchemaError("config", f"invalid YAML in {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise InstanceSchemaError("config", "expected a mapping of overrides")
    return data


def _describe_http_error(body: Any) -> str:
    if isinstance(body, dict):
        detail = body.get("detail", body)
        if isinstance(detail, dict):
            return detail.get("message", json.dumps(detail))
        if isinstance(detail, list):  # pydantic validation errors
            parts = []
            for err in detail:
                if isinstance(err, dict):
                    loc = ".".join(str(p) for p in err.get("loc", ()) if p != "body")
                    parts.append(f"{loc}: {err.get('msg', 'invalid')}")
                else:
                    parts.append(str(err))
            return "; ".join(parts)
        return json.dumps(detail)
    return str(body)


def _write_outputs(out_dir: str, files: dict[str, str]) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    for name, text in files.items():
        atomic_write_text(os.path.join(out_dir, name), text)
    return sorted(files)


def _write_manifest(out_dir: str, entry: dict) -> None:
    atomic_write_text(os.path.join(out_dir, "manifest.json"), dumps_json(entry))


def _solve_artifacts(body: dict) -> dict[str, str]:
    menu_rows = body["menu"]
    n_dim = len(menu_rows[0]["product"])
    header = [f"y_{k + 1}" for k in range(n_dim)] + ["price", "is_null"]
    menu_csv = [",".join(header)]
    for row in menu_rows:
        cells = [fmt_real(v) for v in row["product"]]
        cells.append(fmt_real(row["price"]))
        cells.append("true" if row["is_null"] else "false")
        menu_csv.append(",".join(cells))

    alloc_header = (["agent_index"] + [f"y_{k + 1}" for k in range(n_dim)]
                    + ["price", "is_null", "u", "profit_contrib"])
    alloc_csv = [",".join(alloc_header)]
    for row in body["allocation"]:
        cells = [str(row["agent_index"])]
        cells += [fmt_real(v) for v in row["product"]]
        cells.append(fmt_real(row["price"]))
        cells.append("true" if menu_rows[row["item"]]["is_null"] else "false")
        cells.append(fmt_real(row["utility"]))
        cells.append(fmt_real(row["profit_contrib"]))
        alloc_csv.append(",".join(cells))

    trace_csv = ["iteration,profit"]
    for iteration, profit in body["profit_trace"]:
        trace_csv.append(f"{iteration},{fmt_real(profit)}")

    return {
        "report.json": dumps_json(body),
        "menu.csv": "\n".join(menu_csv) + "\n",
        "allocation.csv": "\n".join(alloc_csv) + "\n",
        "trace.csv": "\n".join(trace_csv) + "\n",
    }


def _run_subcommand(args: argparse.Namespace) -> int:
    client = ServiceClient(args.server)
    overrides = _load_config_overrides(args.config)
    instance_payload = _load_instance_payload(args.instance)
    started = time.time()

    if args.command == "validate":
        request: dict[str, Any] = {
            "instance": instance_payload,
            "sample_count": overrides.get("sample_count", 1000),
            "seed": overrides.get("seed", 0),
            "workers": args.workers,
        }
        if args.samples is not None:
            request["sample_count"] = args.samples
        if args.seed is not None:
            request["seed"] = args.seed
        status, body = client.post("/validate", request)
        if status != 200:
            return _fail(status, body)
        files = _write_outputs(args.out, {"assumptions.json": dumps_json(body)})
        _write_manifest(args.out, _manifest(args, request, files, started))
        failed = [name for name, entry in body["assumptions"].items()
                  if entry["status"] == "fail"]
        for name in sorted(body["assumptions"]):
            print(f"{name}: {body['assumptions'][name]['status']}")
        if failed:
            print(f"assumption failures: {', '.join(sorted(failed))}")
            return 1
        print(f"all assumptions pass -> {args.out}/assumptions.json")
        return 0

    if args.command in ("solve", "oracle"):
        config = dict(overrides)
        if args.seed is not None and args.command == "solve":
            config["seed"] = args.seed
        if args.command == "solve":
            if args.menu_size is not None:
                config["menu_size"] = args.menu_size
            if args.restarts is not None:
                config["restarts"] = args.restarts
            if args.max_iters is not None:
                config["max_iters"] = args.max_iters
        else:
            if args.max_menu_size is not None:
                config["max_menu_size"] = args.max_menu_size
        request = {"instance": instance_payload, "config": config, "workers": args.workers}
        status, body = client.post(f"/{args.command}", request)
        if status != 200:
            return _fail(status, body)
        files = _write_outputs(args.out, _solve_artifacts(body))
        _write_manifest(args.out, _manifest(args, request, files, started))
        hits = body["boundary_hits"]
        hit_note = f" boundary_hits={hits}" if hits else ""
        print(f"profit={fmt_real(body['best_profit'])} termination={body['termination']}"
              f"{hit_note} -> {args.out}/report.json")
        return 0

    if args.command == "check":
        try:
            with open(args.menu, "r", encoding="utf-8") as handle:
                items = parse_menu_csv(handle.read())
        except OSError as exc:
            raise InstanceSchemaError("menu", f"cannot read {args.menu}: {exc}") from exc
        request = {
            "instance": instance_payload,
            "menu": [
                {"product": [float(v) for v in item.product],
                 "price": float(item.price), "is_null": bool(item.is_null)}
                for item in items
            ],
        }
        status, body = client.post("/check", request)
        if status != 200:
            return _fail(status, body)
        files = _write_outputs(args.out, {"check.json": dumps_json(body)})
        _write_manifest(args.out, _manifest(args, request, files, started))
        for row in body["checks"]:
            print(f"{row['name']}: {row['status']}" + (
                f" ({row['detail']})" if row["status"] == "fail" else ""))
        return 0 if body["passed"] else 1

    raise AssertionError(f"unhandled command {args.command!r}")


def _fail(status: int, body: Any) -> int:
    message = _describe_http_error(body)
    print(f"error: {message}", file=sys.stderr)
    return 2 if status == 422 else 1


def _manifest(args: argparse.Namespace, request: dict, files: list[str], started: float) -> dict:
    entry = {
        "tool": TOOL_NAME,
        "version": __version__,
        "subcommand": args.command,
        "instance_path": os.path.abspath(args.instance),
        "out_dir": os.path.abspath(args.out),
        "workers": args.workers,
        "server": args.server or "in-process",
        "request": {k: v for k, v in request.items() if k != "instance"},
        "outputs": files,
        "wall_clock_seconds": round(time.time() - started, 6),
    }
    if args.command == "check":
        entry["menu_path"] = os.path.abspath(args.menu)
    return entry


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=TOOL_NAME,
        description="Discretized multidimensional screening: validate, solve, audit.",
    )
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("instance", help="instance YAML file")
        p.add_argument("--out", default="screenopt-out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--workers", type=int, default=1, help="worker pool size")
        p.add_argument("--config", default=None, help="YAML/JSON config overrides")
        p.add_argument("--server", default=None, help="remote service URL (default: in-process)")

    p_validate = sub.add_parser("validate", help="probe the model assumptions")
    common(p_validate)
    p_validate.add_argument("--samples", type=int, default=None, help="sample budget (>= 100)")

    p_solve = sub.add_parser("solve", help="optimize a menu by pattern search")
    common(p_solve)
    p_solve.add_argument("--menu-size", type=int, default=None, help="items excluding null")
    p_solve.add_argument("--restarts", type=int, default=None)
    p_solve.add_argument("--max-iters", type=int, default=None)

    p_oracle = sub.add_parser("oracle", help="exact optimum over enumeration grids")
    common(p_oracle)
    p_oracle.add_argument("--max-menu-size", type=int, default=None)

    p_check = sub.add_parser("check", help="audit a menu file against an instance")
    common(p_check)
    p_check.add_argument("menu", help="menu CSV file")

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _run_subcommand(args)
    except InstanceSchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except httpx.HTTPError as exc:
        print(f"error: request failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
