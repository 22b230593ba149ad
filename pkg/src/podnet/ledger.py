"""In-memory permissionless ledger: funded accounts, timestamped blocks,
hosted contracts, and an append-only event log with replayable subscriptions.

There is no mining, no fees, and no forks; the simulation scheduler is the
single writer and seals blocks on its own tick schedule. Transactions are
sender-signed over a canonical length-prefixed encoding, so recorded runs are
bit-stable. Contract deploys get Ethereum-style deterministic addresses from
(sender, deploy nonce), which lets a deployer know the address at submission
time, before the deploy is sealed.

Contract templates must evaluate every guard before mutating any state; a
rejected call is recorded in its block with a receipt and touches nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

from . import crypto
from .encoding import canonical_json, pack_tuple, u64_be

# Pseudo-address whose events announce every contract deployment; distributors
# and devices watch it the way they would watch a single factory contract.
FACTORY_ADDRESS = "00" * 32
DEPLOYED_EVENT = "ContractDeployed"


class LedgerError(Exception):
    """Simulator misconfiguration that must abort the run (e.g. non-monotonic seal)."""


@dataclass(frozen=True)
class Transfer:
    recipient: str
    amount: int

    def encode(self) -> bytes:
        return pack_tuple([b"transfer", bytes.fromhex(self.recipient), u64_be(self.amount)])


@dataclass(frozen=True)
class Deploy:
    template: str
    args: tuple[bytes, ...]
    deposit: int

    def encode(self) -> bytes:
        return pack_tuple([b"deploy", self.template.encode(), u64_be(self.deposit), *self.args])


@dataclass(frozen=True)
class Call:
    contract: str
    method: str
    args: tuple[bytes, ...]

    def encode(self) -> bytes:
        return pack_tuple(
            [b"call", bytes.fromhex(self.contract), self.method.encode(), *self.args]
        )


Payload = Transfer | Deploy | Call


@dataclass(frozen=True)
class Transaction:
    sender_pk: bytes
    payload: Payload
    signature: bytes

    @property
    def sender(self) -> str:
        return self.sender_pk.hex()

    def signing_bytes(self) -> bytes:
        return pack_tuple([b"podnet/tx/v1", self.sender_pk, self.payload.encode()])

    @property
    def tx_id(self) -> str:
        return crypto.hash_hex(self.signing_bytes() + self.signature)


def make_transaction(keypair: crypto.KeyPair, payload: Payload) -> Transaction:
    unsigned = Transaction(sender_pk=keypair.public, payload=payload, signature=b"")
    return Transaction(
        sender_pk=keypair.public,
        payload=payload,
        signature=keypair.sign(unsigned.signing_bytes()),
    )


@dataclass(frozen=True)
class SubmitResult:
    accepted: bool
    reason: str | None = None
    tx_id: str | None = None
    contract_address: str | None = None  # predicted address, deploys only


@dataclass(frozen=True)
class Receipt:
    tx_id: str
    status: str  # "ok" | "rejected"
    reason: str | None = None
    info: dict | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class Block:
    height: int
    timestamp: int
    transactions: tuple[Transaction, ...]
    receipts: tuple[Receipt, ...]


@dataclass(frozen=True)
class LedgerEvent:
    contract: str
    name: str
    args: tuple[bytes, ...]
    block_height: int


@dataclass(frozen=True)
class CallOutcome:
    ok: bool
    reason: str | None = None
    info: dict | None = None


class CallContext:
    """Execution context handed to a contract method during sealing."""

    def __init__(self, ledger: "Ledger", contract_address: str, sender: str, timestamp: int, height: int):
        self._ledger = ledger
        self._address = contract_address
        self.sender = sender
        self.block_timestamp = timestamp
        self.block_height = height

    def transfer_out(self, recipient: str, amount: int) -> None:
        contract = self._ledger.contracts[self._address]
        if amount < 0 or amount > contract.balance:
            raise LedgerError("contract transfer exceeds balance")
        contract.balance -= amount
        self._ledger.accounts[recipient] = self._ledger.accounts.get(recipient, 0) + amount

    def emit(self, name: str, args: tuple[bytes, ...]) -> None:
        self._ledger._emit(self._address, name, args)


class HostedContract(Protocol):
    balance: int

    def call(self, method: str, args: tuple[bytes, ...], ctx: CallContext) -> CallOutcome: ...

    def dump(self) -> dict: ...


class DeployError(Exception):
    """Constructor argument validation failed; the deploy is rejected."""


TemplateFactory = Callable[[str, tuple[bytes, ...], int, int], HostedContract]
# (owner address, args, deposit, deploy height) -> instance


class EventCursor:
    """Pull-based subscription: replays matching events from genesis, then
    yields new ones on each poll. Never blocks the scheduler."""

    def __init__(self, ledger: "Ledger", contract: str, name: str):
        self._ledger = ledger
        self._key = (contract, name)
        self._pos = 0

    def poll(self) -> list[LedgerEvent]:
        # Reads the per-stream index so a poll costs only its own new events,
        # which keeps large fleets of subscribers cheap.
        stream = self._ledger._events_by_key.get(self._key, ())
        matched = list(stream[self._pos :])
        self._pos = len(stream)
        return matched


@dataclass
class _PendingTx:
    tx: Transaction
    deploy_address: str | None = None


def contract_address(deployer_pk: bytes, nonce: int) -> str:
    return crypto.hash_hex(pack_tuple([b"podnet/contract/v1", deployer_pk, u64_be(nonce)]))


class Ledger:
    def __init__(self, genesis: dict[str, int], templates: dict[str, TemplateFactory]):
        for addr, balance in genesis.items():
            if balance < 0:
                raise ValueError(f"negative genesis balance for {addr}")
        self.accounts: dict[str, int] = dict(genesis)
        self.genesis_total = sum(genesis.values())
        self.templates = dict(templates)
        self.contracts: dict[str, HostedContract] = {}
        self.deploy_heights: dict[str, int] = {}
        self.blocks: list[Block] = []
        self.events: list[LedgerEvent] = []
        self._events_by_key: dict[tuple[str, str], list[LedgerEvent]] = {}
        self._pending: list[_PendingTx] = []
        self._deploy_nonces: dict[str, int] = {}

    # -- submission ----------------------------------------------------------

    def submit(self, tx: Transaction) -> SubmitResult:
        if not crypto.verify_sig(tx.sender_pk, tx.signature, tx.signing_bytes()):
            return SubmitResult(False, reason="bad-signature")
        payload = tx.payload
        if isinstance(payload, Transfer):
            if payload.amount < 0 or self.accounts.get(tx.sender, 0) < payload.amount:
                return SubmitResult(False, reason="insufficient-funds")
        elif isinstance(payload, Deploy):
            if payload.deposit < 0 or self.accounts.get(tx.sender, 0) < payload.deposit:
                return SubmitResult(False, reason="insufficient-funds")
            if payload.template not in self.templates:
                return SubmitResult(False, reason="unknown-template")
        elif isinstance(payload, Call):
            if payload.contract not in self.contracts:
                return SubmitResult(False, reason="unknown-contract")
        deploy_address = None
        if isinstance(payload, Deploy):
            nonce = self._deploy_nonces.get(tx.sender, 0)
            self._deploy_nonces[tx.sender] = nonce + 1
            deploy_address = contract_address(tx.sender_pk, nonce)
        self._pending.append(_PendingTx(tx=tx, deploy_address=deploy_address))
        return SubmitResult(True, tx_id=tx.tx_id, contract_address=deploy_address)

    @property
    def pending_count(self) -> int:
        return len(self._pending)

    @property
    def height(self) -> int:
        return len(self.blocks)

    # -- sealing -------------------------------------------------------------

    def seal(self, timestamp: int) -> Block:
        if timestamp < 0 or (self.blocks and timestamp <= self.blocks[-1].timestamp):
            raise LedgerError(
                f"non-monotonic seal timestamp {timestamp} "
                f"(previous {self.blocks[-1].timestamp if self.blocks else None})"
            )
        height = len(self.blocks)
        drained, self._pending = self._pending, []
        receipts = [self._execute(entry, timestamp, height) for entry in drained]
        block = Block(
            height=height,
            timestamp=timestamp,
            transactions=tuple(entry.tx for entry in drained),
            receipts=tuple(receipts),
        )
        self.blocks.append(block)
        return block

    def _execute(self, entry: _PendingTx, timestamp: int, height: int) -> Receipt:
        tx = entry.tx
        payload = tx.payload
        if isinstance(payload, Transfer):
            if self.accounts.get(tx.sender, 0) < payload.amount:
                return Receipt(tx.tx_id, "rejected", reason="insufficient-funds")
            self.accounts[tx.sender] -= payload.amount
            self.accounts[payload.recipient] = (
                self.accounts.get(payload.recipient, 0) + payload.amount
            )
            return Receipt(tx.tx_id, "ok", info={"amount": payload.amount})
        if isinstance(payload, Deploy):
            if self.accounts.get(tx.sender, 0) < payload.deposit:
                return Receipt(tx.tx_id, "rejected", reason="insufficient-funds")
            factory = self.templates.get(payload.template)
            if factory is None:
                return Receipt(tx.tx_id, "rejected", reason="unknown-template")
            try:
                instance = factory(tx.sender, payload.args, payload.deposit, height)
            except DeployError as exc:
                return Receipt(tx.tx_id, "rejected", reason=str(exc))
            address = entry.deploy_address
            assert address is not None
            self.accounts[tx.sender] -= payload.deposit
            self.contracts[address] = instance
            self.deploy_heights[address] = height
            self._emit(FACTORY_ADDRESS, DEPLOYED_EVENT, (tx.sender_pk, bytes.fromhex(address)), height)
            return Receipt(tx.tx_id, "ok", info={"contract": address})
        assert isinstance(payload, Call)
        instance = self.contracts.get(payload.contract)
        if instance is None:
            return Receipt(tx.tx_id, "rejected", reason="unknown-contract")
        ctx = CallContext(self, payload.contract, tx.sender, timestamp, height)
        outcome = instance.call(payload.method, payload.args, ctx)
        if outcome.ok:
            return Receipt(tx.tx_id, "ok", info=outcome.info)
        return Receipt(tx.tx_id, "rejected", reason=outcome.reason, info=outcome.info)

    def _emit(self, contract: str, name: str, args: tuple[bytes, ...], height: int | None = None) -> None:
        event = LedgerEvent(
            contract=contract,
            name=name,
            args=tuple(args),
            block_height=len(self.blocks) if height is None else height,
        )
        self.events.append(event)
        self._events_by_key.setdefault((contract, name), []).append(event)

    # -- queries -------------------------------------------------------------

    def subscribe(self, contract: str, name: str) -> EventCursor:
        return EventCursor(self, contract, name)

    def total_coins(self) -> int:
        return sum(self.accounts.values()) + sum(c.balance for c in self.contracts.values())

    def conservation_ok(self) -> bool:
        return self.total_coins() == self.genesis_total

    def dump(self) -> dict:
        return {
            "genesis_total": self.genesis_total,
            "height": self.height,
            "accounts": {addr: bal for addr, bal in sorted(self.accounts.items())},
            "contracts": {
                addr: {**self.contracts[addr].dump(), "deployed_at_height": self.deploy_heights[addr]}
                for addr in sorted(self.contracts)
            },
            "blocks": [
                {
                    "height": block.height,
                    "timestamp": block.timestamp,
                    "transactions": [
                        {
                            "tx_id": receipt.tx_id,
                            "sender": tx.sender,
                            "kind": type(tx.payload).__name__.lower(),
                            "status": receipt.status,
                            "reason": receipt.reason,
                            "info": receipt.info,
                        }
                        for tx, receipt in zip(block.transactions, block.receipts)
                    ],
                }
                for block in self.blocks
            ],
            "events": [
                {
                    "contract": ev.contract,
                    "name": ev.name,
                    "args": [arg.hex() for arg in ev.args],
                    "block_height": ev.block_height,
                }
                for ev in self.events
            ],
        }

    def dump_json(self) -> bytes:
        return canonical_json(self.dump())

    def state_digest(self) -> str:
        return crypto.hash_hex(self.dump_json())
