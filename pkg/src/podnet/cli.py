"""Command line client for the update-delivery simulator.

Every command talks HTTP to the service layer. By default an in-process
instance of the app handles the request, so no server needs to be running;
pass --server to target a remote instance started with `podnet serve`.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    import warnings

    with warnings.catch_warnings():
        # The in-process transport shim warns about its own dependency
        # pinning; that's noise for CLI users.
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app())


def _fail_validation(resp: httpx.Response) -> None:
    click.echo("scenario rejected by schema validation:", err=True)
    try:
        detail = resp.json().get("detail", resp.text)
    except ValueError:
        detail = resp.text
    if isinstance(detail, list):
        for item in detail:
            loc = ".".join(str(part) for part in item.get("loc", []))
            click.echo(f"  {loc}: {item.get('msg', '')}", err=True)
    else:
        click.echo(f"  {detail}", err=True)
    sys.exit(2)


def _load_json(path: str, what: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        click.echo(f"cannot read {what} from {path}: {exc}", err=True)
        sys.exit(2)
    if not isinstance(data, dict):
        click.echo(f"{what} must be a JSON object, got {type(data).__name__}", err=True)
        sys.exit(2)
    return data


def _write(out: Path, name: str, payload) -> None:
    path = out / name
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote {path}")


@click.group()
def main() -> None:
    """Deterministic simulator for incentivized update delivery."""


@main.command("run")
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True, dir_okay=False), help="scenario JSON file")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="override the scenario seed")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="directory for run artifacts")
@click.option("--server", default=None, help="service URL; defaults to in-process")
def run_cmd(scenario_path: str, seed: int | None, out_dir: str, server: str | None) -> None:
    """Run one scenario and write its artifacts."""
    scenario = _load_json(scenario_path, "scenario")
    body: dict = {"scenario": scenario}
    if seed is not None:
        body["seed"] = seed
    with _client(server) as client:
        resp = client.post("/runs", json=body)
        if resp.status_code == 422:
            _fail_validation(resp)
        if resp.status_code == 400:
            click.echo(f"scenario rejected: {resp.json()['detail']}", err=True)
            sys.exit(2)
        resp.raise_for_status()
        data = resp.json()
        run_id = data["run_id"]
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write(out, "metrics.json", data["metrics"])
        _write(out, "verification.json", data["verification"])
        for name, endpoint in [
            ("run_log.json", "log"),
            ("ledger.json", "ledger"),
            ("audit.json", "audit"),
            ("delivery_report.json", "delivery"),
        ]:
            sub = client.get(f"/runs/{run_id}/{endpoint}")
            sub.raise_for_status()
            _write(out, name, sub.json())
    metrics = data["metrics"]
    verification = data["verification"]
    click.echo(
        f"run {run_id}: seed={metrics['seed']} "
        f"devices_updated={metrics['devices_updated']}/{metrics['devices_total']} "
        f"payments={metrics['payments_count']} refunds={metrics['refund_total']}"
    )
    if verification["ok"]:
        click.echo("verification: ok")
    else:
        click.echo("verification: FAILED", err=True)
        for violation in verification["violations"]:
            click.echo(f"  {violation['kind']}: {violation['detail']}", err=True)
        sys.exit(3)


@main.command("attack-suite")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="directory for the suite report")
@click.option("--server", default=None, help="service URL; defaults to in-process")
def attack_suite_cmd(out_dir: str, server: str | None) -> None:
    """Run the full adversarial suite and report each case."""
    with _client(server) as client:
        resp = client.post("/attack-suite")
        resp.raise_for_status()
        data = resp.json()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write(out, "attack_report.json", data)
    failed = 0
    for case in data["cases"]:
        mark = "PASS" if case["ok"] else "FAIL"
        note = " (documented caveat)" if case["caveat"] else ""
        click.echo(f"{mark} {case['name']}{note}")
        for check in case["checks"]:
            if not check["ok"]:
                failed += 1
                click.echo(f"     failed: {check['label']} [{check['detail']}]", err=True)
    if not data["ok"]:
        click.echo(f"attack suite: {failed} failed check(s)", err=True)
        sys.exit(1)
    click.echo("attack suite: all cases passed")


@main.command("replay")
@click.option("--log", "log_path", required=True, type=click.Path(exists=True, dir_okay=False), help="run_log.json from a previous run")
@click.option("--server", default=None, help="service URL; defaults to in-process")
def replay_cmd(log_path: str, server: str | None) -> None:
    """Re-execute a recorded run and check it reproduces bit for bit."""
    log = _load_json(log_path, "run log")
    with _client(server) as client:
        resp = client.post("/replay", json={"log": log})
        if resp.status_code in (400, 422):
            _fail_validation(resp)
        resp.raise_for_status()
        data = resp.json()
    for name in ("transcript", "ledger", "metrics"):
        got, want = data["digests"][name], data["expected"][name]
        status = "match" if got == want else f"DIVERGED (got {got}, recorded {want})"
        click.echo(f"{name}: {status}")
    if not data["match"]:
        click.echo("replay diverged from the recorded run", err=True)
        sys.exit(1)
    if not data["verification"]["ok"]:
        click.echo("replay matched but verification failed", err=True)
        sys.exit(3)
    click.echo("replay: bit-identical and verified")


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve_cmd(host: str, port: int) -> None:
    """Start the HTTP service."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
