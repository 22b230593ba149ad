"""HTTP service wrapping the simulator: submit scenarios, fetch artifacts,
run the attack suite, replay logs.

Runs execute synchronously inside the request; results live in process
memory, keyed by run id. This is an operator tool, not a multi-tenant
deployment target.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from ..sim import replay_log, run, run_attack_suite, verify_run
from ..sim.report import delivery_report, sanitize_audit
from .schemas import (
    AttackCaseModel,
    AttackSuiteResponse,
    ReplayRequest,
    ReplayResponse,
    RunRequest,
    RunResponse,
    RunSummary,
    VerificationSummary,
)


def _verification_summary(report) -> VerificationSummary:
    return VerificationSummary(ok=report.ok, violations=report.violations, stats=report.stats)


def create_app() -> FastAPI:
    app = FastAPI(title="podnet", version="0.1.0")
    runs: dict[str, dict] = {}
    app.state.runs = runs

    def _get(run_id: str) -> dict:
        entry = runs.get(run_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id}")
        return entry

    def _response(run_id: str, entry: dict) -> RunResponse:
        result = entry["result"]
        return RunResponse(
            run_id=run_id,
            label=entry["label"],
            metrics=result.metrics.model_dump(),
            verification=_verification_summary(entry["report"]),
            digests={
                "transcript": result.run_log["transcript_digest"],
                "ledger": result.run_log["ledger_digest"],
                "metrics": result.run_log["metrics_digest"],
            },
        )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/runs", response_model=RunResponse)
    def create_run(req: RunRequest) -> RunResponse:
        scenario = req.scenario
        if req.seed is not None:
            scenario = scenario.model_copy(update={"seed": req.seed})
        try:
            result = run(scenario)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        allow = set(result.manifest.addresses.get("device-self-dealer", []))
        report = verify_run(result, allow_self_deal=allow)
        run_id = f"run-{len(runs):04d}"
        entry = {"result": result, "report": report, "label": req.label}
        runs[run_id] = entry
        return _response(run_id, entry)

    @app.get("/runs", response_model=list[RunSummary])
    def list_runs() -> list[RunSummary]:
        out = []
        for run_id, entry in runs.items():
            m = entry["result"].metrics
            out.append(
                RunSummary(
                    run_id=run_id,
                    label=entry["label"],
                    seed=m.seed,
                    devices_total=m.devices_total,
                    devices_updated=m.devices_updated,
                    payments_count=m.payments_count,
                    verification_ok=entry["report"].ok,
                )
            )
        return out

    @app.get("/runs/{run_id}", response_model=RunResponse)
    def get_run(run_id: str) -> RunResponse:
        return _response(run_id, _get(run_id))

    @app.get("/runs/{run_id}/log")
    def get_log(run_id: str) -> JSONResponse:
        return JSONResponse(_get(run_id)["result"].run_log)

    @app.get("/runs/{run_id}/ledger")
    def get_ledger(run_id: str) -> JSONResponse:
        return JSONResponse(_get(run_id)["result"].ledger.dump())

    @app.get("/runs/{run_id}/audit")
    def get_audit(run_id: str) -> JSONResponse:
        return JSONResponse(sanitize_audit(_get(run_id)["result"].audit.records))

    @app.get("/runs/{run_id}/delivery")
    def get_delivery(run_id: str) -> JSONResponse:
        return JSONResponse(delivery_report(_get(run_id)["result"]))

    @app.post("/attack-suite", response_model=AttackSuiteResponse)
    def attack_suite() -> AttackSuiteResponse:
        outcomes = run_attack_suite()
        cases = [AttackCaseModel.model_validate(o.as_dict()) for o in outcomes]
        return AttackSuiteResponse(ok=all(c.ok for c in cases), cases=cases)

    @app.post("/replay", response_model=ReplayResponse)
    def replay(req: ReplayRequest) -> ReplayResponse:
        try:
            rep = replay_log(req.log)
        except (KeyError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=f"malformed run log: {exc}") from exc
        return ReplayResponse(
            match=rep.match,
            digests=rep.digests,
            expected=rep.expected,
            verification=_verification_summary(rep.verification),
        )

    return app
