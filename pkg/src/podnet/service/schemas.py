"""Request and response shapes for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

from ..sim.scenario import Scenario


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: Scenario
    seed: int | None = Field(default=None, ge=0, le=2**64 - 1, description="overrides scenario.seed")
    label: str = ""


class VerificationSummary(BaseModel):
    ok: bool
    violations: list[dict]
    stats: dict


class RunSummary(BaseModel):
    run_id: str
    label: str
    seed: int
    devices_total: int
    devices_updated: int
    payments_count: int
    verification_ok: bool


class RunResponse(BaseModel):
    run_id: str
    label: str
    metrics: dict
    verification: VerificationSummary
    digests: dict


class ReplayRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    log: dict


class ReplayResponse(BaseModel):
    match: bool
    digests: dict
    expected: dict
    verification: VerificationSummary


class AttackCheckModel(BaseModel):
    label: str
    ok: bool
    detail: str


class AttackCaseModel(BaseModel):
    name: str
    ok: bool
    caveat: bool
    checks: list[AttackCheckModel]


class AttackSuiteResponse(BaseModel):
    ok: bool
    cases: list[AttackCaseModel]
