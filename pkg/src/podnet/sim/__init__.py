from .scenario import AdversarySpec, LinkParams, Scenario
from .runner import Metrics, RunResult, run
from .verify import ReplayReport, VerificationReport, replay_log, verify_run
from .attacks import ATTACK_SUITE, AttackOutcome, run_attack_suite
from .report import write_artifacts

__all__ = [
    "AdversarySpec",
    "LinkParams",
    "Scenario",
    "Metrics",
    "RunResult",
    "run",
    "ReplayReport",
    "VerificationReport",
    "replay_log",
    "verify_run",
    "ATTACK_SUITE",
    "AttackOutcome",
    "run_attack_suite",
    "write_artifacts",
]
