"""Vendor, distributor, and device state machines for incentivized update
delivery.

A vendor packages an update, seeds it on the storage network, and escrows a
per-release deposit. Distributors acquire the package, verify it really came
from a vendor they trust, and serve devices over point-to-point sessions.
The session trades the encrypted update against the device's signed receipt:
the distributor proves in zero knowledge that the ciphertext decrypts (under
the preimage of a committed digest s) to the exact file the escrow names, so
the device signs before it can decrypt, and the distributor's on-ledger
redeem both collects payment and reveals the decryption witness to the
device as a public event. Neither side can end up ahead: no valid proof, no
signature; no redeem, no payment and no key.

Nodes are deterministic single-threaded state machines driven by a scheduler
through the ``NodeEnv`` surface. They never share state; everything they know
arrives via messages, ledger events, or storage-network fetches.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Protocol

from . import crypto
from .contract import (
    KEY_REVEALED_EVENT,
    METHOD_PUBLISH_PROOF,
    METHOD_WITHDRAW,
    TEMPLATE_NAME,
    BidContract,
    RedeemTuple,
    device_ack_bytes,
    witness_hash,
)
from .dsn import Dsn
from .encoding import EncodingError, pack_tuple, unpack_tuple
from .ledger import (
    DEPLOYED_EVENT,
    FACTORY_ADDRESS,
    Call,
    Deploy,
    EventCursor,
    Ledger,
    SubmitResult,
    Transaction,
    make_transaction,
)

CHALLENGE_SIZE = 16
RETRY_BACKOFF = 5  # ticks between a failed exchange attempt and the next try


class NodeEnv(Protocol):
    """Everything a node may touch. Provided by the simulation runner; a node
    holds exactly one and never reaches around it."""

    ledger: Ledger
    dsn: Dsn
    backend: crypto.SimulatedProofBackend
    rng: random.Random

    def now(self) -> int: ...

    def send(self, recipient: str, payload: bytes) -> None: ...

    def schedule(self, delay: int, action: Callable[[], None]) -> None: ...

    def submit(self, tx: Transaction) -> SubmitResult: ...

    def emit_audit(self, kind: str, **fields) -> None: ...


# -- signing formats ----------------------------------------------------------


def auth_sig_bytes(challenge: bytes) -> bytes:
    """What a device signs to authenticate: the fresh per-session challenge."""
    return pack_tuple([b"podnet/auth/v1", challenge])


def package_sig_bytes(u_id: bytes, verifying_key: bytes) -> bytes:
    """What a vendor signs: the update digest concatenated with the proof
    verifying key, binding the key to this exact file."""
    return u_id + verifying_key


# -- update package -----------------------------------------------------------


@dataclass(frozen=True)
class UpdatePackage:
    """The vendor's published bundle: the update file itself, the proof keys
    for its distribution statement, and the vendor's binding signature."""

    vendor_pk: bytes
    update: bytes
    proving_key: bytes
    verifying_key: bytes
    vendor_sig: bytes

    @property
    def u_id(self) -> bytes:
        return crypto.hash_bytes(self.update)

    @property
    def p_id(self) -> bytes:
        return crypto.hash_bytes(self.serialize())

    def serialize(self) -> bytes:
        return pack_tuple(
            [
                b"podnet/package/v1",
                self.vendor_pk,
                self.update,
                self.proving_key,
                self.verifying_key,
                self.vendor_sig,
            ]
        )

    @classmethod
    def parse(cls, data: bytes) -> "UpdatePackage":
        fields = unpack_tuple(data)
        if len(fields) != 6 or fields[0] != b"podnet/package/v1":
            raise EncodingError("not an update package")
        vendor_pk, update, proving_key, verifying_key, vendor_sig = fields[1:]
        if len(vendor_pk) != crypto.PUBLIC_KEY_SIZE or len(vendor_sig) != crypto.SIGNATURE_SIZE:
            raise EncodingError("malformed package key or signature")
        return cls(
            vendor_pk=vendor_pk,
            update=update,
            proving_key=proving_key,
            verifying_key=verifying_key,
            vendor_sig=vendor_sig,
        )

    @classmethod
    def build(
        cls, vendor: crypto.KeyPair, update: bytes, proving_key: bytes, verifying_key: bytes
    ) -> "UpdatePackage":
        sig = vendor.sign(package_sig_bytes(crypto.hash_bytes(update), verifying_key))
        return cls(
            vendor_pk=vendor.public,
            update=update,
            proving_key=proving_key,
            verifying_key=verifying_key,
            vendor_sig=sig,
        )

    def verify(self, expected_vendor_pk: bytes) -> bool:
        return self.vendor_pk == expected_vendor_pk and crypto.verify_sig(
            self.vendor_pk, self.vendor_sig, package_sig_bytes(self.u_id, self.verifying_key)
        )


# -- wire messages -------------------------------------------------------------

_TAG_REQUEST = b"podnet/msg/request/v1"
_TAG_CHALLENGE = b"podnet/msg/challenge/v1"
_TAG_AUTH = b"podnet/msg/auth/v1"
_TAG_OFFER = b"podnet/msg/offer/v1"
_TAG_RECEIPT = b"podnet/msg/receipt/v1"
_TAG_HINT = b"podnet/msg/hint/v1"


@dataclass(frozen=True)
class UpdateRequest:
    device_pk: bytes
    contract: str

    def encode(self) -> bytes:
        return pack_tuple([_TAG_REQUEST, self.device_pk, bytes.fromhex(self.contract)])


@dataclass(frozen=True)
class Challenge:
    contract: str
    c: bytes

    def encode(self) -> bytes:
        return pack_tuple([_TAG_CHALLENGE, bytes.fromhex(self.contract), self.c])


@dataclass(frozen=True)
class DeviceAuth:
    device_pk: bytes
    contract: str
    sig: bytes

    def encode(self) -> bytes:
        return pack_tuple([_TAG_AUTH, self.device_pk, bytes.fromhex(self.contract), self.sig])


@dataclass(frozen=True)
class UpdateOffer:
    contract: str
    distributor_pk: bytes
    s: bytes
    ciphertext: bytes
    proof_tag: bytes
    verifying_key: bytes
    vendor_sig: bytes

    def encode(self) -> bytes:
        return pack_tuple(
            [
                _TAG_OFFER,
                bytes.fromhex(self.contract),
                self.distributor_pk,
                self.s,
                self.ciphertext,
                self.proof_tag,
                self.verifying_key,
                self.vendor_sig,
            ]
        )


@dataclass(frozen=True)
class DistributionReceipt:
    device_pk: bytes
    contract: str
    s: bytes
    ack_sig: bytes

    def encode(self) -> bytes:
        return pack_tuple(
            [_TAG_RECEIPT, self.device_pk, bytes.fromhex(self.contract), self.s, self.ack_sig]
        )


@dataclass(frozen=True)
class AnnounceHint:
    """Unsolicited gossip pointing a device at a contract. Honest nodes never
    send these; devices accept them but re-check every guard against the
    ledger, so a hint can at most waste a lookup."""

    contract: str

    def encode(self) -> bytes:
        return pack_tuple([_TAG_HINT, bytes.fromhex(self.contract)])


Message = UpdateRequest | Challenge | DeviceAuth | UpdateOffer | DistributionReceipt | AnnounceHint


def _need(cond: bool, detail: str) -> None:
    if not cond:
        raise EncodingError(detail)


def decode_message(data: bytes) -> Message:
    fields = unpack_tuple(data)
    _need(len(fields) >= 1, "empty message")
    tag, rest = fields[0], fields[1:]
    if tag == _TAG_REQUEST:
        _need(len(rest) == 2, "bad request shape")
        _need(len(rest[0]) == crypto.PUBLIC_KEY_SIZE and len(rest[1]) == 32, "bad request fields")
        return UpdateRequest(device_pk=rest[0], contract=rest[1].hex())
    if tag == _TAG_CHALLENGE:
        _need(len(rest) == 2, "bad challenge shape")
        _need(len(rest[0]) == 32 and len(rest[1]) == CHALLENGE_SIZE, "bad challenge fields")
        return Challenge(contract=rest[0].hex(), c=rest[1])
    if tag == _TAG_AUTH:
        _need(len(rest) == 3, "bad auth shape")
        _need(
            len(rest[0]) == crypto.PUBLIC_KEY_SIZE
            and len(rest[1]) == 32
            and len(rest[2]) == crypto.SIGNATURE_SIZE,
            "bad auth fields",
        )
        return DeviceAuth(device_pk=rest[0], contract=rest[1].hex(), sig=rest[2])
    if tag == _TAG_OFFER:
        _need(len(rest) == 7, "bad offer shape")
        contract, distributor_pk, s, ciphertext, proof_tag, verifying_key, vendor_sig = rest
        _need(
            len(contract) == 32
            and len(distributor_pk) == crypto.PUBLIC_KEY_SIZE
            and len(s) == crypto.DIGEST_SIZE
            and len(proof_tag) == crypto.PROOF_SIZE
            and len(vendor_sig) == crypto.SIGNATURE_SIZE,
            "bad offer fields",
        )
        return UpdateOffer(
            contract=contract.hex(),
            distributor_pk=distributor_pk,
            s=s,
            ciphertext=ciphertext,
            proof_tag=proof_tag,
            verifying_key=verifying_key,
            vendor_sig=vendor_sig,
        )
    if tag == _TAG_RECEIPT:
        _need(len(rest) == 4, "bad receipt shape")
        _need(
            len(rest[0]) == crypto.PUBLIC_KEY_SIZE
            and len(rest[1]) == 32
            and len(rest[2]) == crypto.DIGEST_SIZE
            and len(rest[3]) == crypto.SIGNATURE_SIZE,
            "bad receipt fields",
        )
        return DistributionReceipt(device_pk=rest[0], contract=rest[1].hex(), s=rest[2], ack_sig=rest[3])
    if tag == _TAG_HINT:
        _need(len(rest) == 1 and len(rest[0]) == 32, "bad hint shape")
        return AnnounceHint(contract=rest[0].hex())
    raise EncodingError("unknown message tag")


# -- vendor --------------------------------------------------------------------


@dataclass
class ReleaseRecord:
    contract: str
    update: bytes
    package: UpdatePackage
    keys: crypto.ProofKeys
    trapdoor: bytes
    expiration: int


class VendorNode:
    """Releases updates: runs proof setup, publishes the package, escrows the
    deposit, and sweeps whatever is unclaimed after expiration."""

    def __init__(
        self,
        keypair: crypto.KeyPair,
        env: NodeEnv,
        device_pks: list[bytes],
        deposit: int,
        refund_window: int,
        seeding_window: int,
    ):
        self.keypair = keypair
        self.address = keypair.public.hex()
        self.env = env
        self.device_pks = list(device_pks)
        self.deposit = deposit
        self.refund_window = refund_window
        self.seeding_window = seeding_window
        self.releases: dict[str, ReleaseRecord] = {}

    def release_update(self, update: bytes) -> str | None:
        if not update:
            raise ValueError("empty update")
        env = self.env
        if env.ledger.accounts.get(self.address, 0) < self.deposit:
            env.emit_audit("release-rejected", vendor=self.address, reason="insufficient-funds")
            return None
        u_id = crypto.hash_bytes(update)
        keys = env.backend.setup(u_id, env.rng)
        trapdoor = env.backend.trapdoor_of(keys)
        package = UpdatePackage.build(self.keypair, update, keys.proving, keys.verifying)
        expiration = env.now() + self.refund_window
        deploy = Deploy(
            template=TEMPLATE_NAME,
            args=BidContract.deploy_args(expiration, u_id, package.p_id, self.device_pks),
            deposit=self.deposit,
        )
        result = env.submit(make_transaction(self.keypair, deploy))
        if not result.accepted or result.contract_address is None:
            env.emit_audit("release-rejected", vendor=self.address, reason=result.reason)
            return None
        contract = result.contract_address
        # Seed the package only once the deploy is in flight, so a rejected
        # release leaves no trace on the storage network.
        p_cid = env.dsn.provide(self.address, package.serialize())
        env.schedule(self.seeding_window, lambda: env.dsn.unprovide(self.address, p_cid))
        env.schedule(self.refund_window, lambda: self._withdraw(contract))
        self.releases[contract] = ReleaseRecord(
            contract=contract,
            update=update,
            package=package,
            keys=keys,
            trapdoor=trapdoor,
            expiration=expiration,
        )
        env.emit_audit(
            "release",
            vendor=self.address,
            contract=contract,
            expiration=expiration,
            u_id=u_id.hex(),
        )
        return contract

    def _withdraw(self, contract: str) -> None:
        tx = make_transaction(self.keypair, Call(contract, METHOD_WITHDRAW, ()))
        self.env.submit(tx)


# -- distributor -----------------------------------------------------------------


@dataclass
class Holding:
    package: UpdatePackage
    u_id: bytes
    expiration: int


@dataclass
class _Acquire:
    deployer: bytes
    package_hash: bytes
    update_hash: bytes
    expiration: int
    tried: set[str]


@dataclass
class DistSession:
    seq: int
    contract: str
    device_pk: bytes
    state: str  # challenged -> authenticated -> offer-sent -> signature-received
    c: bytes
    opened_at: int
    t: bytes = b""
    r: bytes = b""
    s: bytes = b""
    ack_sig: bytes = b""


class DistributorNode:
    """Acquires released updates from the storage network and serves devices,
    redeeming each signed receipt against the escrow.

    ``claim_delay``, ``claim_copies``, and ``skip_claim_checks`` default to
    honest behavior; adversarial wrappers use them to submit late or
    duplicated claims that the contract must reject.
    """

    def __init__(
        self,
        keypair: crypto.KeyPair,
        env: NodeEnv,
        trusted_vendors: frozenset[bytes],
        session_timeout: int,
        claim_delay: int = 0,
        claim_copies: int = 1,
        skip_claim_checks: bool = False,
    ):
        self.keypair = keypair
        self.address = keypair.public.hex()
        self.env = env
        self.trusted_vendors = trusted_vendors
        self.session_timeout = session_timeout
        self.claim_delay = claim_delay
        self.claim_copies = claim_copies
        self.skip_claim_checks = skip_claim_checks
        self.holdings: dict[str, Holding] = {}
        self.sessions: dict[tuple[str, str], DistSession] = {}
        self._acquiring: dict[str, _Acquire] = {}
        self._factory_cursor = env.ledger.subscribe(FACTORY_ADDRESS, DEPLOYED_EVENT)
        self._seq = 0

    # ledger-driven behavior

    def poll_ledger(self) -> None:
        for event in self._factory_cursor.poll():
            deployer, contract_raw = event.args[0], event.args[1]
            self._on_release(deployer, contract_raw.hex())

    def _on_release(self, deployer: bytes, contract: str) -> None:
        if deployer not in self.trusted_vendors:
            self.env.emit_audit(
                "release-ignored", distributor=self.address, contract=contract, reason="untrusted-vendor"
            )
            return
        instance = self.env.ledger.contracts.get(contract)
        if not isinstance(instance, BidContract) or contract in self.holdings:
            return
        self._acquiring[contract] = _Acquire(
            deployer=deployer,
            package_hash=instance.package_hash,
            update_hash=instance.update_hash,
            expiration=instance.expiration,
            tried=set(),
        )
        self._fetch_package(contract)

    def _fetch_package(self, contract: str) -> None:
        acq = self._acquiring.get(contract)
        if acq is None:
            return
        p_cid = acq.package_hash.hex()
        provider = next(
            (p for p in self.env.dsn.lookup(p_cid) if p not in acq.tried and p != self.address),
            None,
        )
        if provider is None:
            acq.tried.clear()
            if self.env.now() + RETRY_BACKOFF < acq.expiration:
                self.env.schedule(RETRY_BACKOFF, lambda: self._fetch_package(contract))
            else:
                del self._acquiring[contract]
            return
        plan = self.env.dsn.plan_fetch(provider, p_cid)
        if plan is None:
            acq.tried.add(provider)
            self._fetch_package(contract)
            return
        self.env.schedule(
            plan.duration, lambda: self._finish_fetch(contract, provider, plan.data)
        )

    def _finish_fetch(self, contract: str, provider: str, data: bytes) -> None:
        acq = self._acquiring.get(contract)
        if acq is None:
            return
        if crypto.hash_bytes(data) != acq.package_hash:
            acq.tried.add(provider)
            self._fetch_package(contract)
            return
        try:
            package = UpdatePackage.parse(data)
        except EncodingError:
            self._discard_package(contract, "unparseable")
            return
        if package.vendor_pk != acq.deployer or not package.verify(acq.deployer):
            self._discard_package(contract, "bad-vendor-signature")
            return
        if package.u_id != acq.update_hash:
            self._discard_package(contract, "update-hash-mismatch")
            return
        del self._acquiring[contract]
        self.env.dsn.provide(self.address, package.update)
        self.env.dsn.provide(self.address, data)
        self.holdings[contract] = Holding(
            package=package, u_id=package.u_id, expiration=acq.expiration
        )
        self.env.emit_audit("distributor-registered", distributor=self.address, contract=contract)

    def _discard_package(self, contract: str, reason: str) -> None:
        del self._acquiring[contract]
        self.env.emit_audit(
            "package-discarded", distributor=self.address, contract=contract, reason=reason
        )

    # session behavior

    def on_message(self, sender: str, msg: Message) -> None:
        if isinstance(msg, UpdateRequest):
            self._on_request(sender, msg)
        elif isinstance(msg, DeviceAuth):
            self._on_auth(sender, msg)
        elif isinstance(msg, DistributionReceipt):
            self._on_receipt(sender, msg)

    def _on_request(self, sender: str, msg: UpdateRequest) -> None:
        if msg.contract not in self.holdings or sender != msg.device_pk.hex():
            return
        self._seq += 1
        session = DistSession(
            seq=self._seq,
            contract=msg.contract,
            device_pk=msg.device_pk,
            state="challenged",
            c=self.env.rng.randbytes(CHALLENGE_SIZE),
            opened_at=self.env.now(),
        )
        self.sessions[(sender, msg.contract)] = session
        self.env.send(sender, Challenge(contract=msg.contract, c=session.c).encode())
        self._arm_timeout(sender, msg.contract, session.seq)

    def _on_auth(self, sender: str, msg: DeviceAuth) -> None:
        session = self.sessions.get((sender, msg.contract))
        if session is None or session.state != "challenged" or session.device_pk != msg.device_pk:
            return
        holding = self.holdings.get(msg.contract)
        instance = self.env.ledger.contracts.get(msg.contract)
        if holding is None or not isinstance(instance, BidContract):
            return
        if msg.device_pk not in instance.device_table:
            self._abort(sender, msg.contract, "non-member-device")
            return
        if not crypto.verify_sig(msg.device_pk, msg.sig, auth_sig_bytes(session.c)):
            self._abort(sender, msg.contract, "bad-device-sig")
            return
        session.state = "authenticated"
        t = self.env.rng.randbytes(32)
        r = witness_hash(self.keypair.public, t)
        s = crypto.hash_bytes(r)
        ciphertext = crypto.stream_encrypt(holding.package.update, crypto.derive_sym_key(r))
        try:
            proof = self.env.backend.prove(
                crypto.ProofKeys(
                    proving=holding.package.proving_key,
                    verifying=holding.package.verifying_key,
                    statement_id=holding.u_id,
                ),
                ciphertext,
                s,
                holding.u_id,
                r,
            )
        except crypto.ProvingError:
            self._abort(sender, msg.contract, "proving-error")
            return
        session.t, session.r, session.s = t, r, s
        self.env.emit_audit(
            "session-secret",
            contract=msg.contract,
            device_pk=msg.device_pk.hex(),
            distributor=self.address,
            t=t,
            r=r,
            s=s,
            ciphertext=ciphertext,
        )
        offer = UpdateOffer(
            contract=msg.contract,
            distributor_pk=self.keypair.public,
            s=s,
            ciphertext=ciphertext,
            proof_tag=proof.data,
            verifying_key=holding.package.verifying_key,
            vendor_sig=holding.package.vendor_sig,
        )
        session.state = "offer-sent"
        self.env.send(sender, offer.encode())
        self._arm_timeout(sender, msg.contract, session.seq)

    def _on_receipt(self, sender: str, msg: DistributionReceipt) -> None:
        session = self.sessions.get((sender, msg.contract))
        if (
            session is None
            or session.state != "offer-sent"
            or msg.s != session.s
            or msg.device_pk != session.device_pk
        ):
            return
        holding = self.holdings[msg.contract]
        if not crypto.verify_sig(
            msg.device_pk, msg.ack_sig, device_ack_bytes(holding.u_id, msg.s)
        ):
            self._abort(sender, msg.contract, "bad-receipt-signature")
            return
        session.state = "signature-received"
        session.ack_sig = msg.ack_sig
        self.env.schedule(self.claim_delay, lambda: self._claim(sender, msg.contract, session.seq))

    def _claim(self, device_addr: str, contract: str, seq: int) -> None:
        session = self.sessions.get((device_addr, contract))
        if session is None or session.seq != seq or session.state != "signature-received":
            return
        del self.sessions[(device_addr, contract)]
        instance = self.env.ledger.contracts.get(contract)
        if not self.skip_claim_checks and isinstance(instance, BidContract):
            if self.env.now() >= instance.expiration:
                self.env.emit_audit(
                    "claim-abandoned", distributor=self.address, contract=contract, reason="expired"
                )
                return
            if instance.device_table.get(session.device_pk) is not None:
                self.env.emit_audit(
                    "claim-abandoned",
                    distributor=self.address,
                    contract=contract,
                    reason="already-claimed",
                )
                return
        redeem = RedeemTuple(
            device_pk=session.device_pk,
            t=session.t,
            s=session.s,
            distributor_pk=self.keypair.public,
            device_sig=session.ack_sig,
            r=session.r,
        )
        tx = make_transaction(
            self.keypair, Call(contract, METHOD_PUBLISH_PROOF, redeem.encode())
        )
        for _ in range(self.claim_copies):
            self.env.submit(tx)
        self.env.emit_audit(
            "claim-submitted",
            tick=self.env.now(),
            contract=contract,
            device_pk=session.device_pk.hex(),
            distributor=self.address,
            copies=self.claim_copies,
        )

    def _arm_timeout(self, device_addr: str, contract: str, seq: int) -> None:
        def fire() -> None:
            session = self.sessions.get((device_addr, contract))
            if session is None or session.seq != seq:
                return
            if session.state in ("challenged", "authenticated", "offer-sent"):
                wasted = session.state == "offer-sent"
                self._abort(device_addr, contract, "peer-disconnect")
                if wasted:
                    self.env.emit_audit(
                        "wasted-proof", distributor=self.address, contract=contract
                    )

        self.env.schedule(self.session_timeout, fire)

    def _abort(self, device_addr: str, contract: str, stage: str) -> None:
        self.sessions.pop((device_addr, contract), None)
        self.env.emit_audit(
            "exchange-abort",
            role="distributor",
            node=self.address,
            peer=device_addr,
            contract=contract,
            stage=stage,
            tick=self.env.now(),
        )


# -- device --------------------------------------------------------------------


@dataclass
class DevSession:
    seq: int
    contract: str
    provider: str
    state: str  # init -> challenged -> done
    opened_at: int


class DeviceNode:
    """Requests updates it is entitled to, trades its receipt signature for a
    verified encrypted copy, and installs once the ledger reveals the key.

    Trust anchors: the vendor public key burned in at manufacture, and the
    ledger itself. Everything a distributor sends is verified against those.
    """

    def __init__(
        self,
        keypair: crypto.KeyPair,
        env: NodeEnv,
        vendor_pk: bytes,
        session_timeout: int,
        start_at: int = 0,
    ):
        self.keypair = keypair
        self.address = keypair.public.hex()
        self.env = env
        self.vendor_pk = vendor_pk
        self.session_timeout = session_timeout
        self.start_at = start_at
        self.installed_version = -1
        self.installs: list[dict] = []
        self.pending: dict[str, tuple[bytes, bytes]] = {}  # contract -> (s, ciphertext)
        self.signed_contracts: set[str] = set()
        self._announcements: dict[str, int] = {}  # contract -> deploy height
        self._active: DevSession | None = None
        self._factory_cursor = env.ledger.subscribe(FACTORY_ADDRESS, DEPLOYED_EVENT)
        self._reveal_cursors: dict[str, EventCursor] = {}
        self._seq = 0

    # ledger-driven behavior

    def poll_ledger(self) -> None:
        if self.env.now() < self.start_at:
            return
        for event in self._factory_cursor.poll():
            self._on_release(event.args[0], event.args[1].hex())
        for contract, cursor in list(self._reveal_cursors.items()):
            for event in cursor.poll():
                self._on_key_revealed(contract, event.args)
        self._kick()

    def _on_release(self, deployer: bytes, contract: str) -> None:
        if deployer != self.vendor_pk:
            self.env.emit_audit(
                "release-ignored", device=self.address, contract=contract, reason="untrusted-vendor"
            )
            return
        self._consider(contract)

    def _consider(self, contract: str) -> None:
        instance = self.env.ledger.contracts.get(contract)
        if not isinstance(instance, BidContract) or self.keypair.public not in instance.device_table:
            return
        if contract in self.signed_contracts or contract in self._announcements:
            return
        if self._active is not None and self._active.contract == contract:
            return
        self._announcements[contract] = self.env.ledger.deploy_heights[contract]
        if contract not in self._reveal_cursors:
            self._reveal_cursors[contract] = self.env.ledger.subscribe(
                contract, KEY_REVEALED_EVENT
            )

    def _kick(self) -> None:
        if self._active is None and self._announcements:
            self._process_next()

    def _process_next(self) -> None:
        if self._active is not None:
            return
        while self._announcements:
            # Newest release first; anything older then trips the version guard.
            contract = max(self._announcements, key=self._announcements.get)
            height = self._announcements.pop(contract)
            if height <= self.installed_version:
                self.env.emit_audit(
                    "downgrade-refused",
                    device=self.address,
                    contract=contract,
                    height=height,
                    installed_version=self.installed_version,
                    at="request",
                )
                self._reveal_cursors.pop(contract, None)
                continue
            instance = self.env.ledger.contracts.get(contract)
            if not isinstance(instance, BidContract) or self.env.now() >= instance.expiration:
                self.env.emit_audit(
                    "announcement-expired", device=self.address, contract=contract
                )
                self._reveal_cursors.pop(contract, None)
                continue
            providers = self.env.dsn.lookup(instance.update_hash.hex())
            providers = [p for p in providers if p != self.address]
            if not providers:
                # Nobody is serving the file yet; try again shortly.
                self._announcements[contract] = height
                self.env.schedule(RETRY_BACKOFF, self._process_next)
                return
            provider = self.env.rng.choice(providers)
            self._seq += 1
            self._active = DevSession(
                seq=self._seq,
                contract=contract,
                provider=provider,
                state="init",
                opened_at=self.env.now(),
            )
            self.env.send(
                provider, UpdateRequest(device_pk=self.keypair.public, contract=contract).encode()
            )
            self._arm_timeout(self._seq)
            return

    # session behavior

    def on_message(self, sender: str, msg: Message) -> None:
        if isinstance(msg, Challenge):
            self._on_challenge(sender, msg)
        elif isinstance(msg, UpdateOffer):
            self._on_offer(sender, msg)
        elif isinstance(msg, AnnounceHint):
            self._on_hint(msg)

    def _on_challenge(self, sender: str, msg: Challenge) -> None:
        session = self._active
        if (
            session is None
            or session.state != "init"
            or sender != session.provider
            or msg.contract != session.contract
        ):
            return
        sig = self.keypair.sign(auth_sig_bytes(msg.c))
        session.state = "challenged"
        self.env.send(
            sender,
            DeviceAuth(device_pk=self.keypair.public, contract=msg.contract, sig=sig).encode(),
        )

    def _on_offer(self, sender: str, msg: UpdateOffer) -> None:
        session = self._active
        if (
            session is None
            or session.state != "challenged"
            or sender != session.provider
            or msg.contract != session.contract
        ):
            return
        instance = self.env.ledger.contracts.get(msg.contract)
        if not isinstance(instance, BidContract):
            return
        u_id = instance.update_hash
        if not crypto.verify_sig(
            self.vendor_pk, msg.vendor_sig, package_sig_bytes(u_id, msg.verifying_key)
        ):
            self._abort("bad-vendor-sig")
            return
        proof = crypto.Proof(
            data=msg.proof_tag,
            instance=crypto.ProofInstance(crypto.hash_bytes(msg.ciphertext), msg.s, u_id),
        )
        keys = crypto.ProofKeys(proving=b"", verifying=msg.verifying_key, statement_id=u_id)
        if not self.env.backend.verify(keys, msg.ciphertext, msg.s, u_id, proof):
            self._abort("bad-proof")
            return
        if msg.contract in self.signed_contracts:
            self._abort("already-signed")
            return
        self.pending[msg.contract] = (msg.s, msg.ciphertext)
        self.signed_contracts.add(msg.contract)
        ack = self.keypair.sign(device_ack_bytes(u_id, msg.s))
        session.state = "done"
        self._active = None
        self.env.send(
            sender,
            DistributionReceipt(
                device_pk=self.keypair.public, contract=msg.contract, s=msg.s, ack_sig=ack
            ).encode(),
        )
        self.env.emit_audit(
            "device-signed",
            device=self.address,
            contract=msg.contract,
            distributor=sender,
            s=msg.s.hex(),
            tick=self.env.now(),
        )
        self.env.schedule(0, self._kick)

    def _on_hint(self, msg: AnnounceHint) -> None:
        self.env.emit_audit("hint-received", device=self.address, contract=msg.contract)
        self._consider(msg.contract)
        self._kick()

    def _on_key_revealed(self, contract: str, args: tuple[bytes, ...]) -> None:
        device_pk, r = args[0], args[1]
        if device_pk != self.keypair.public:
            return
        entry = self.pending.get(contract)
        if entry is None:
            return
        s, ciphertext = entry
        if crypto.hash_bytes(r) != s:
            self.env.emit_audit(
                "reveal-ignored", device=self.address, contract=contract, reason="digest-mismatch"
            )
            return
        update = crypto.stream_decrypt(ciphertext, crypto.derive_sym_key(r))
        instance = self.env.ledger.contracts[contract]
        del self.pending[contract]
        if crypto.hash_bytes(update) != instance.update_hash:
            self.env.emit_audit(
                "install-refused",
                device=self.address,
                contract=contract,
                reason="content-hash-mismatch",
                tick=self.env.now(),
            )
            return
        height = self.env.ledger.deploy_heights[contract]
        if height <= self.installed_version:
            self.env.emit_audit(
                "downgrade-refused",
                device=self.address,
                contract=contract,
                height=height,
                installed_version=self.installed_version,
                at="install",
            )
            return
        self.installed_version = height
        record = {
            "device": self.address,
            "contract": contract,
            "height": height,
            "digest": instance.update_hash.hex(),
            "tick": self.env.now(),
        }
        self.installs.append(record)
        self.env.emit_audit("install", **record)
        self.env.schedule(0, self._kick)

    def _arm_timeout(self, seq: int) -> None:
        def fire() -> None:
            session = self._active
            if session is None or session.seq != seq or session.state == "done":
                return
            self._abort("peer-disconnect")

        self.env.schedule(self.session_timeout, fire)

    def _abort(self, stage: str) -> None:
        session = self._active
        if session is None:
            return
        self._active = None
        self.env.emit_audit(
            "exchange-abort",
            role="device",
            node=self.address,
            peer=session.provider,
            contract=session.contract,
            stage=stage,
            tick=self.env.now(),
        )
        if stage != "already-signed" and session.contract not in self.signed_contracts:
            # Keep trying other providers until the escrow expires.
            self._announcements.setdefault(
                session.contract, self.env.ledger.deploy_heights[session.contract]
            )
        self.env.schedule(RETRY_BACKOFF, self._process_next)
