"""Run artifacts: everything a run leaves behind for audit and replay.

Session secrets recorded in the in-memory audit stream are written out as
digests only; the files on disk must be safe to share with the same parties
who could read the network transcript.
"""

from __future__ import annotations

import json
from pathlib import Path

from .. import crypto
from .runner import RunResult
from .verify import VerificationReport

_SECRET_FIELDS = {"t", "r", "ciphertext"}


def sanitize_audit(records: list[dict]) -> list[dict]:
    out = []
    for record in records:
        row = {}
        for key, value in record.items():
            if isinstance(value, bytes):
                if key in _SECRET_FIELDS:
                    row[key + "_digest"] = crypto.hash_hex(value)
                else:
                    row[key] = value.hex()
            else:
                row[key] = value
        out.append(row)
    return out


def delivery_report(result: RunResult) -> list[dict]:
    """Per-device audit trail: who served each device, when it was paid, and
    when the device installed. Assembled from the ledger and audit records so
    the two sources cross-check each other."""

    installs = {
        (row["contract"], row["device"]): row for row in result.audit.by_kind("install")
    }
    refusals = {
        (row["contract"], row["device"]): row
        for row in result.audit.by_kind("install-refused")
    }
    rows = []
    for p in result.payments:
        key = (p.contract, p.device)
        if key in installs:
            status, tick = "installed", installs[key]["tick"]
        elif key in refusals:
            status, tick = "refused", refusals[key]["tick"]
        else:
            status, tick = "pending", None
        rows.append(
            {
                "device": p.device,
                "contract": p.contract,
                "distributor": p.distributor,
                "amount": p.amount,
                "paid_at_height": p.block_height,
                "paid_at_timestamp": p.block_timestamp,
                "status": status,
                "install_tick": tick,
            }
        )
    rows.sort(key=lambda r: (r["contract"], r["device"]))
    return rows


def write_artifacts(
    result: RunResult, out_dir: str | Path, report: VerificationReport | None = None
) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "metrics.json": result.metrics.model_dump(),
        "run_log.json": result.run_log,
        "ledger.json": result.ledger.dump(),
        "audit.json": sanitize_audit(result.audit.records),
        "delivery_report.json": delivery_report(result),
    }
    if report is not None:
        files["verification.json"] = report.as_dict()
    written = []
    for name, payload in files.items():
        path = out / name
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        written.append(path)
    return written
