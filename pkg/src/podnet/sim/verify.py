"""Post-run verification: replays the economic and security invariants over a
finished run's ledger, audit stream, and message transcript.

The checks are deliberately independent of the node implementations: they
recompute everything from recorded artifacts, so a bug that slips through the
protocol code still has to get past this layer before a run is called clean.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field

from .. import crypto
from ..contract import BidContract
from .runner import RunResult
from .scenario import Scenario

# Above this many session-times-message pairs the global secrecy sweep
# switches from exhaustive to participant-indexed plus a seeded sample.
_FULL_SCAN_BUDGET = 2_000_000


@dataclass
class VerificationReport:
    ok: bool
    violations: list[dict] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def violation_kinds(self) -> list[str]:
        return sorted({v["kind"] for v in self.violations})

    def as_dict(self) -> dict:
        return {"ok": self.ok, "violations": self.violations, "stats": self.stats}


@dataclass
class ReplayReport:
    match: bool
    digests: dict
    expected: dict
    verification: VerificationReport

    def as_dict(self) -> dict:
        return {
            "match": self.match,
            "digests": self.digests,
            "expected": self.expected,
            "verification": self.verification.as_dict(),
        }


def verify_run(
    result: RunResult,
    allow_self_deal: set[str] = frozenset(),
    secrecy: str = "auto",
) -> VerificationReport:
    violations: list[dict] = []
    stats: dict = {}

    def flag(kind: str, detail: str) -> None:
        violations.append({"kind": kind, "detail": detail})

    ledger = result.ledger

    # Money is neither created nor destroyed, globally and per escrow.
    if not ledger.conservation_ok():
        flag(
            "conservation",
            f"total={ledger.total_coins()} genesis={ledger.genesis_total}",
        )
    last_ts = ledger.blocks[-1].timestamp if ledger.blocks else -1
    for row in result.metrics.per_contract:
        if not row.reconciled:
            flag(
                "contract-imbalance",
                f"{row.contract}: paid={row.payments_total} refund={row.refund} "
                f"residual={row.residual_balance} deposit={row.deposit}",
            )
        if last_ts >= row.expiration and row.residual_balance != 0:
            flag("unswept-residual", f"{row.contract} residual={row.residual_balance}")

    # Every payment corresponds to a real exchange that delivered the real
    # file, to the distributor who ran it, before the escrow expired.
    sessions: dict[tuple[str, str], list[dict]] = {}
    for row in result.audit.by_kind("session-secret"):
        sessions.setdefault((row["contract"], row["device_pk"]), []).append(row)

    allowed_self_deals = 0
    for p in result.payments:
        instance = ledger.contracts.get(p.contract)
        if not isinstance(instance, BidContract):
            flag("payment-to-unknown-contract", p.contract)
            continue
        if p.block_timestamp >= instance.expiration:
            flag(
                "paid-after-expiration",
                f"{p.contract} device={p.device} ts={p.block_timestamp} exp={instance.expiration}",
            )
        revealed = instance.device_table.get(bytes.fromhex(p.device))
        if revealed is None:
            flag("paid-without-reveal", f"{p.contract} device={p.device}")
            continue
        match = next(
            (
                row
                for row in sessions.get((p.contract, p.device), [])
                if row["r"] == revealed
            ),
            None,
        )
        if match is None:
            if p.distributor in allow_self_deal:
                allowed_self_deals += 1
            else:
                flag(
                    "paid-without-session",
                    f"{p.contract} device={p.device} distributor={p.distributor}",
                )
            continue
        if match["distributor"] != p.distributor:
            flag(
                "payment-diverted",
                f"{p.contract} device={p.device}: session by {match['distributor']}, "
                f"paid {p.distributor}",
            )
        plain = crypto.stream_decrypt(match["ciphertext"], crypto.derive_sym_key(match["r"]))
        if crypto.hash_bytes(plain) != instance.update_hash:
            flag(
                "paid-for-wrong-content",
                f"{p.contract} device={p.device} distributor={p.distributor}",
            )

    pair_counts = Counter((p.contract, p.device) for p in result.payments)
    for (contract, device), n in pair_counts.items():
        if n > 1:
            flag("double-payment", f"{contract} device={device} count={n}")

    # Install-side: only paid-for content, correct digest, version monotone.
    installs = result.audit.by_kind("install")
    bad_digests = 0
    install_counts: Counter[tuple[str, str]] = Counter()
    per_device: dict[str, list[dict]] = {}
    for row in installs:
        install_counts[(row["device"], row["contract"])] += 1
        per_device.setdefault(row["device"], []).append(row)
        if (row["contract"], row["device"]) not in pair_counts:
            flag("install-without-payment", f"{row['contract']} device={row['device']}")
        instance = ledger.contracts.get(row["contract"])
        if not isinstance(instance, BidContract) or row["digest"] != instance.update_hash.hex():
            bad_digests += 1
            flag("bad-install-digest", f"{row['contract']} device={row['device']}")
    for (device, contract), n in install_counts.items():
        if n > 1:
            flag("double-install", f"{contract} device={device} count={n}")
    for device, rows in per_device.items():
        heights = [r["height"] for r in rows]  # audit order is execution order
        if any(b <= a for a, b in zip(heights, heights[1:])):
            flag("downgrade-install", f"device={device} heights={heights}")

    # A payment with no delivery resolution on the device side means someone
    # was paid while the device got nothing it could even refuse.
    resolved: set[tuple[str, str]] = set()

    def _addr_to_pk_pairs(rows: list[dict], key: str) -> None:
        for row in rows:
            device_addr = row[key]
            resolved.add((row["contract"], device_addr))

    _addr_to_pk_pairs(installs, "device")
    _addr_to_pk_pairs(result.audit.by_kind("install-refused"), "device")
    _addr_to_pk_pairs(
        [r for r in result.audit.by_kind("downgrade-refused") if r.get("at") == "install"],
        "device",
    )
    for p in result.payments:
        if p.distributor in allow_self_deal:
            continue
        if (p.contract, p.device) not in resolved:
            flag("paid-but-undelivered", f"{p.contract} device={p.device}")

    # Session secrets never cross the wire. The witness appears on the ledger
    # only inside the paid redeem; messages must never carry it (or the
    # preimage t), before or after.
    secret_rows = result.audit.by_kind("session-secret")
    by_pair: dict[tuple[str, str], list] = {}
    for m in result.messages:
        by_pair.setdefault((m.sender, m.recipient), []).append(m)

    def leak_scan(row: dict, records) -> None:
        r, t = row["r"], row["t"]
        for m in records:
            for blob in (m.payload, m.wire_payload):
                if r in blob or t in blob:
                    flag(
                        "secret-on-wire",
                        f"{row['contract']} device={row['device_pk']} msg_seq={m.seq}",
                    )
                    return

    pairs = len(secret_rows) * max(len(result.messages), 1)
    mode = secrecy
    if mode == "auto":
        mode = "full" if pairs <= _FULL_SCAN_BUDGET else "sampled"
    if mode == "full":
        for row in secret_rows:
            leak_scan(row, result.messages)
    else:
        for row in secret_rows:
            # A device's address is its public key hex, so the session row
            # names both endpoints; scan the traffic between them both ways.
            dist, dev = row["distributor"], row["device_pk"]
            participants = by_pair.get((dist, dev), []) + by_pair.get((dev, dist), [])
            leak_scan(row, participants)
        sampler = random.Random(result.scenario.seed ^ 0x5EC12EC7)
        sample = (
            secret_rows
            if len(secret_rows) <= 50
            else sampler.sample(secret_rows, 50)
        )
        for row in sample:
            leak_scan(row, result.messages)

    stats.update(
        {
            "payments": len(result.payments),
            "installs": len(installs),
            "sessions": len(secret_rows),
            "allowed_self_deals": allowed_self_deals,
            "bad_install_digests": bad_digests,
            "secrecy_mode": mode,
            "secrecy_pairs": pairs,
            "wasted_proofs": result.audit.counters.get("wasted-proof", 0),
        }
    )
    return VerificationReport(ok=not violations, violations=violations, stats=stats)


def replay_log(log: dict) -> ReplayReport:
    """Re-runs the scenario recorded in a run log and checks the replay is
    bit-identical: same transcript, same ledger, same metrics."""

    scenario = Scenario.model_validate(log["scenario"])
    from .runner import run

    result = run(scenario)
    digests = {
        "transcript": result.run_log["transcript_digest"],
        "ledger": result.run_log["ledger_digest"],
        "metrics": result.run_log["metrics_digest"],
    }
    expected = {
        "transcript": log.get("transcript_digest"),
        "ledger": log.get("ledger_digest"),
        "metrics": log.get("metrics_digest"),
    }
    allow = set(result.manifest.addresses.get("device-self-dealer", []))
    verification = verify_run(result, allow_self_deal=allow)
    match = digests == expected
    return ReplayReport(
        match=match, digests=digests, expected=expected, verification=verification
    )
