"""Deterministic discrete-event runner for update-delivery scenarios.

One logical clock in ticks drives everything: message delivery, storage
transfers, node timers, and block sealing are all just scheduled events,
processed in (tick, insertion order). All randomness flows from named
streams derived from the scenario seed, so a (scenario, seed) pair yields
bit-identical ledgers, logs, and metrics on every run.

The runner also owns the instrumentation the verifier needs: a transcript of
every channel message (with the exact bytes that crossed the wire) and an
audit stream where nodes and adversaries record what they did and why.
"""

from __future__ import annotations

import heapq
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Protocol

from pydantic import BaseModel

from .. import crypto
from ..contract import METHOD_PUBLISH_PROOF, METHOD_WITHDRAW, BidContract, default_templates
from ..dsn import Dsn, LinkModel
from ..encoding import canonical_json, unpack_tuple
from ..ledger import Call, Deploy, Ledger, SubmitResult, Transaction
from ..protocol import DeviceNode, DistributorNode, VendorNode
from .scenario import Scenario


def derive_rng(seed: int, label: str) -> random.Random:
    """A named random stream: stable under changes to any other stream."""
    digest = crypto.hash_bytes(f"podnet/rng/v1:{seed}:{label}".encode())
    return random.Random(int.from_bytes(digest[:8], "big"))


# -- instrumentation -----------------------------------------------------------


@dataclass
class MessageRecord:
    seq: int
    tick_sent: int
    sender: str
    recipient: str
    payload: bytes  # what the sender handed to the channel
    wire_payload: bytes  # what arrived (differs only when tampered)
    status: str  # delivered | dropped | tampered
    msg_type: str
    eavesdropped: bool = False
    tick_delivered: int | None = None


class RunAudit:
    """Append-only record of node decisions, session secrets, and adversary
    actions. This is out-of-band instrumentation for verification and
    reporting; no node can read it."""

    def __init__(self) -> None:
        self.records: list[dict] = []
        self.counters: Counter[str] = Counter()

    def emit(self, kind: str, **fields) -> None:
        entry = {"kind": kind, **fields}
        self.records.append(entry)
        self.counters[kind] += 1

    def by_kind(self, kind: str) -> list[dict]:
        return [r for r in self.records if r["kind"] == kind]


class ChannelHook(Protocol):
    """Adversary tap on the point-to-point channel. Hooks run in priority
    order while the message is in flight; they may observe the record, mark
    it dropped, or rewrite its wire bytes."""

    priority: int

    def on_send(self, record: MessageRecord) -> None: ...


_MSG_TYPE_NAMES = {
    b"podnet/msg/request/v1": "update-request",
    b"podnet/msg/challenge/v1": "challenge",
    b"podnet/msg/auth/v1": "device-auth",
    b"podnet/msg/offer/v1": "update-offer",
    b"podnet/msg/receipt/v1": "distribution-receipt",
    b"podnet/msg/hint/v1": "announce-hint",
}


def _message_type(payload: bytes) -> str:
    try:
        fields = unpack_tuple(payload)
    except Exception:
        return "opaque"
    if fields and fields[0] in _MSG_TYPE_NAMES:
        return _MSG_TYPE_NAMES[fields[0]]
    return "opaque"


# -- metrics -------------------------------------------------------------------


class ContractMetrics(BaseModel):
    contract: str
    vendor: str
    deposit: int
    expiration: int
    devices: int
    devices_paid_for: int
    payments_total: int
    refund: int
    residual_balance: int
    reconciled: bool


class Metrics(BaseModel):
    seed: int
    ticks_elapsed: int
    devices_total: int
    devices_updated: int
    installs: int
    install_refusals: int
    downgrade_refusals: int
    payments_count: int
    payments_total: int
    payments_per_distributor: dict[str, int]
    payment_counts_per_distributor: dict[str, int]
    refund_total: int
    ticks_to_full_coverage: int | None
    rejected_claims: dict[str, int]
    messages_sent: int
    messages_delivered: int
    messages_dropped: int
    messages_tampered: int
    transcript_bytes: int
    audit_counters: dict[str, int]
    per_contract: list[ContractMetrics]


@dataclass(frozen=True)
class PaymentRow:
    contract: str
    device: str
    distributor: str
    amount: int
    block_height: int
    block_timestamp: int


@dataclass
class AdversaryManifest:
    """Who the adversaries are, by kind, so expectations can tell adversarial
    earnings from theft."""

    addresses: dict[str, list[str]] = field(default_factory=dict)

    def add(self, kind: str, address: str) -> None:
        self.addresses.setdefault(kind, []).append(address)

    def all_addresses(self) -> set[str]:
        return {addr for entries in self.addresses.values() for addr in entries}


@dataclass
class RunResult:
    scenario: Scenario
    metrics: Metrics
    run_log: dict
    ledger: Ledger
    audit: RunAudit
    messages: list[MessageRecord]
    payments: list[PaymentRow]
    vendors: list[VendorNode]
    distributors: list[DistributorNode]
    devices: list[DeviceNode]
    manifest: AdversaryManifest
    device_census: list[str]


# -- node environment ----------------------------------------------------------


class Env:
    """The runner-backed implementation of the node environment."""

    def __init__(self, runner: "Runner", address: str, rng: random.Random):
        self._runner = runner
        self._address = address
        self.rng = rng

    @property
    def ledger(self) -> Ledger:
        return self._runner.ledger

    @property
    def dsn(self) -> Dsn:
        return self._runner.dsn

    @property
    def backend(self) -> crypto.SimulatedProofBackend:
        return self._runner.backend

    def now(self) -> int:
        return self._runner.now

    def send(self, recipient: str, payload: bytes) -> None:
        self._runner.send(self._address, recipient, payload)

    def schedule(self, delay: int, action: Callable[[], None]) -> None:
        self._runner.schedule(delay, action)

    def submit(self, tx: Transaction) -> SubmitResult:
        return self._runner.submit(tx)

    def emit_audit(self, kind: str, **fields) -> None:
        self._runner.audit.emit(kind, **fields)


# -- the runner ------------------------------------------------------------------


class Runner:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.seed = scenario.seed
        self.link = LinkModel(latency=scenario.link.latency, bandwidth=scenario.link.bandwidth)
        self.dsn = Dsn(self.link)
        self.backend = crypto.SimulatedProofBackend()
        self.audit = RunAudit()
        self.messages: list[MessageRecord] = []
        self.now = 0
        self.horizon = scenario.horizon()
        self._heap: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = 0
        self._msg_seq = 0
        self.nodes: dict[str, object] = {}
        self.poll_nodes: list = []
        self.channel_hooks: list[ChannelHook] = []
        self.submit_hooks: list[Callable[[Transaction], None]] = []
        self.manifest = AdversaryManifest()

        timeout = scenario.effective_session_timeout()

        vendor_keys = [
            crypto.KeyPair.generate(derive_rng(self.seed, f"key:vendor:{i}"))
            for i in range(scenario.vendors)
        ]
        device_keys = [
            [
                crypto.KeyPair.generate(derive_rng(self.seed, f"key:device:{i}:{j}"))
                for j in range(scenario.devices_per_vendor)
            ]
            for i in range(scenario.vendors)
        ]
        distributor_keys = [
            crypto.KeyPair.generate(derive_rng(self.seed, f"key:distributor:{i}"))
            for i in range(scenario.distributors)
        ]

        genesis: dict[str, int] = {}
        for kp in vendor_keys:
            genesis[kp.public.hex()] = scenario.deposit * scenario.releases
        # Impersonators hold their own funds; they must exist at genesis so the
        # conservation baseline includes them.
        impersonator_index = 0
        for spec in scenario.adversaries:
            if spec.kind == "vendor-impersonator":
                for _ in range(spec.count):
                    kp = crypto.KeyPair.generate(
                        derive_rng(self.seed, f"key:impersonator:{impersonator_index}")
                    )
                    genesis[kp.public.hex()] = scenario.deposit
                    impersonator_index += 1
        self.ledger = Ledger(genesis, default_templates())

        trusted = frozenset(kp.public for kp in vendor_keys)
        self.vendors: list[VendorNode] = []
        for i, kp in enumerate(vendor_keys):
            env = Env(self, kp.public.hex(), derive_rng(self.seed, f"rng:vendor:{i}"))
            node = VendorNode(
                keypair=kp,
                env=env,
                device_pks=[d.public for d in device_keys[i]],
                deposit=scenario.deposit,
                refund_window=scenario.refund_window,
                seeding_window=scenario.seeding_window,
            )
            self.vendors.append(node)
            self.nodes[node.address] = node

        self.distributors: list[DistributorNode] = []
        for i, kp in enumerate(distributor_keys):
            env = Env(self, kp.public.hex(), derive_rng(self.seed, f"rng:distributor:{i}"))
            node = DistributorNode(
                keypair=kp, env=env, trusted_vendors=trusted, session_timeout=timeout
            )
            self.distributors.append(node)
            self.nodes[node.address] = node
            self.poll_nodes.append(node)

        # Some device slots may be converted into self-dealing adversaries;
        # the contract membership lists are built from the full key census
        # either way, so conversion never changes what vendors deploy.
        self_dealer_slots = sum(
            spec.count for spec in scenario.adversaries if spec.kind == "device-self-dealer"
        )
        if self_dealer_slots > scenario.vendors * scenario.devices_per_vendor:
            raise ValueError("device-self-dealer count exceeds the device census")
        flat_devices = [
            (i, kp) for i, keys in enumerate(device_keys) for kp in keys
        ]
        converted = {
            kp.public.hex(): vendor_idx
            for vendor_idx, kp in flat_devices[len(flat_devices) - self_dealer_slots :]
        } if self_dealer_slots else {}

        arrivals = derive_rng(self.seed, "arrivals")
        self.devices: list[DeviceNode] = []
        self.device_census: list[str] = []
        self._pending_self_dealers: list[tuple[crypto.KeyPair, bytes, int]] = []
        for i, keys in enumerate(device_keys):
            for kp in keys:
                start_at = arrivals.randint(0, scenario.arrival_spread)
                self.device_census.append(kp.public.hex())
                if kp.public.hex() in converted:
                    self._pending_self_dealers.append((kp, vendor_keys[i].public, start_at))
                    continue
                env = Env(self, kp.public.hex(), derive_rng(self.seed, f"rng:device:{kp.public.hex()}"))
                node = DeviceNode(
                    keypair=kp,
                    env=env,
                    vendor_pk=vendor_keys[i].public,
                    session_timeout=timeout,
                    start_at=start_at,
                )
                self.devices.append(node)
                self.nodes[node.address] = node
                self.poll_nodes.append(node)

        from .attacks import install_adversaries

        install_adversaries(self, trusted, timeout)

        for i, vendor in enumerate(self.vendors):
            for k in range(scenario.releases):
                update = derive_rng(self.seed, f"update:{vendor.address}:{k}").randbytes(
                    scenario.update_size
                )
                self.schedule_at(1 + k * scenario.release_gap, self._make_release(vendor, update))

        tick = scenario.block_interval
        while tick <= self.horizon:
            self.schedule_at(tick, self._seal)
            tick += scenario.block_interval
        if self.horizon % scenario.block_interval != 0:
            self.schedule_at(self.horizon, self._seal)

    @staticmethod
    def _make_release(vendor: VendorNode, update: bytes) -> Callable[[], None]:
        return lambda: vendor.release_update(update)

    # -- scheduling ------------------------------------------------------------

    def schedule(self, delay: int, action: Callable[[], None]) -> None:
        self.schedule_at(self.now + delay, action)

    def schedule_at(self, tick: int, action: Callable[[], None]) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (tick, self._seq, action))

    # -- channel -----------------------------------------------------------------

    def send(self, sender: str, recipient: str, payload: bytes) -> None:
        self._msg_seq += 1
        record = MessageRecord(
            seq=self._msg_seq,
            tick_sent=self.now,
            sender=sender,
            recipient=recipient,
            payload=payload,
            wire_payload=payload,
            status="delivered",
            msg_type=_message_type(payload),
        )
        self.messages.append(record)
        for hook in self.channel_hooks:
            hook.on_send(record)
            if record.status == "dropped":
                break
        if record.status == "dropped":
            return
        duration = self.link.duration(len(record.wire_payload))
        self.schedule(duration, lambda: self._deliver(record))

    def _deliver(self, record: MessageRecord) -> None:
        record.tick_delivered = self.now
        node = self.nodes.get(record.recipient)
        if node is None:
            return
        from ..encoding import EncodingError
        from ..protocol import decode_message

        try:
            message = decode_message(record.wire_payload)
        except EncodingError:
            self.audit.emit(
                "malformed-message",
                sender=record.sender,
                recipient=record.recipient,
                tick=self.now,
            )
            return
        node.on_message(record.sender, message)

    # -- ledger ------------------------------------------------------------------

    def submit(self, tx: Transaction) -> SubmitResult:
        for hook in self.submit_hooks:
            hook(tx)
        return self.ledger.submit(tx)

    def _seal(self) -> None:
        self.ledger.seal(self.now)
        for node in self.poll_nodes:
            node.poll_ledger()

    # -- main loop -----------------------------------------------------------------

    def drive(self) -> None:
        while self._heap and self._heap[0][0] <= self.horizon:
            tick, _, action = heapq.heappop(self._heap)
            self.now = tick
            action()

    # -- results ---------------------------------------------------------------------

    def collect_payments(self) -> tuple[list[PaymentRow], dict[str, int], dict[str, int]]:
        payments: list[PaymentRow] = []
        rejected: Counter[str] = Counter()
        refunds: dict[str, int] = {}
        for block in self.ledger.blocks:
            for tx, receipt in zip(block.transactions, block.receipts):
                payload = tx.payload
                if not isinstance(payload, Call):
                    continue
                if payload.method == METHOD_PUBLISH_PROOF:
                    if receipt.ok:
                        payments.append(
                            PaymentRow(
                                contract=payload.contract,
                                device=receipt.info["device"],
                                distributor=receipt.info["distributor"],
                                amount=receipt.info["paid"],
                                block_height=block.height,
                                block_timestamp=block.timestamp,
                            )
                        )
                    else:
                        rejected[receipt.reason or "unknown"] += 1
                elif payload.method == METHOD_WITHDRAW and receipt.ok:
                    refunds[payload.contract] = (
                        refunds.get(payload.contract, 0) + receipt.info["refunded"]
                    )
        return payments, dict(rejected), refunds

    def _contract_deposits(self) -> dict[str, int]:
        deposits: dict[str, int] = {}
        for block in self.ledger.blocks:
            for tx, receipt in zip(block.transactions, block.receipts):
                if isinstance(tx.payload, Deploy) and receipt.ok:
                    deposits[receipt.info["contract"]] = tx.payload.deposit
        return deposits

    def build_metrics(self) -> tuple[Metrics, list[PaymentRow]]:
        payments, rejected, refunds = self.collect_payments()
        installs = self.audit.by_kind("install")
        updated_devices = {row["device"] for row in installs}
        census = set(self.device_census)
        full_at = None
        if census and census <= updated_devices:
            full_at = max(row["tick"] for row in installs)

        per_distributor_amount: Counter[str] = Counter()
        per_distributor_count: Counter[str] = Counter()
        for row in payments:
            per_distributor_amount[row.distributor] += row.amount
            per_distributor_count[row.distributor] += 1

        deposits = self._contract_deposits()
        per_contract = []
        for addr in sorted(self.ledger.contracts):
            instance = self.ledger.contracts[addr]
            if not isinstance(instance, BidContract):
                continue
            paid_here = sum(p.amount for p in payments if p.contract == addr)
            refund_here = refunds.get(addr, 0)
            deposit = deposits.get(addr, 0)
            per_contract.append(
                ContractMetrics(
                    contract=addr,
                    vendor=instance.owner,
                    deposit=deposit,
                    expiration=instance.expiration,
                    devices=instance.n,
                    devices_paid_for=instance.num_updated,
                    payments_total=paid_here,
                    refund=refund_here,
                    residual_balance=instance.balance,
                    reconciled=paid_here + refund_here + instance.balance == deposit,
                )
            )

        metrics = Metrics(
            seed=self.seed,
            ticks_elapsed=self.now,
            devices_total=len(self.device_census),
            devices_updated=len(updated_devices & census),
            installs=len(installs),
            install_refusals=self.audit.counters.get("install-refused", 0),
            downgrade_refusals=self.audit.counters.get("downgrade-refused", 0),
            payments_count=len(payments),
            payments_total=sum(p.amount for p in payments),
            payments_per_distributor=dict(sorted(per_distributor_amount.items())),
            payment_counts_per_distributor=dict(sorted(per_distributor_count.items())),
            refund_total=sum(refunds.values()),
            ticks_to_full_coverage=full_at,
            rejected_claims=dict(sorted(rejected.items())),
            messages_sent=len(self.messages),
            messages_delivered=sum(1 for m in self.messages if m.status != "dropped"),
            messages_dropped=sum(1 for m in self.messages if m.status == "dropped"),
            messages_tampered=sum(1 for m in self.messages if m.status == "tampered"),
            transcript_bytes=sum(len(m.wire_payload) for m in self.messages),
            audit_counters=dict(sorted(self.audit.counters.items())),
            per_contract=per_contract,
        )
        return metrics, payments

    def build_run_log(self, metrics: Metrics) -> dict:
        message_rows = [
            {
                "seq": m.seq,
                "tick_sent": m.tick_sent,
                "tick_delivered": m.tick_delivered,
                "sender": m.sender,
                "recipient": m.recipient,
                "type": m.msg_type,
                "size": len(m.wire_payload),
                "payload_digest": crypto.hash_hex(m.wire_payload),
                "status": m.status,
                "eavesdropped": m.eavesdropped,
            }
            for m in self.messages
        ]
        install_rows = self.audit.by_kind("install")
        log = {
            "format": "podnet-run-log/v1",
            "scenario": self.scenario.model_dump(),
            "messages": message_rows,
            "installs": install_rows,
            "transcript_digest": crypto.hash_hex(canonical_json(message_rows)),
            "ledger_digest": self.ledger.state_digest(),
            "metrics_digest": crypto.hash_hex(canonical_json(metrics.model_dump())),
        }
        return log


def run(scenario: Scenario) -> RunResult:
    runner = Runner(scenario)
    runner.drive()
    metrics, payments = runner.build_metrics()
    run_log = runner.build_run_log(metrics)
    return RunResult(
        scenario=scenario,
        metrics=metrics,
        run_log=run_log,
        ledger=runner.ledger,
        audit=runner.audit,
        messages=runner.messages,
        payments=payments,
        vendors=runner.vendors,
        distributors=runner.distributors,
        devices=runner.devices,
        manifest=runner.manifest,
        device_census=runner.device_census,
    )
