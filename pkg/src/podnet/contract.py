"""Escrow contract for proof-of-distribution payouts.

A vendor deploys one instance per update release, funding it with a deposit
and registering the public keys of the devices that should receive the
update. A distributor that served a device redeems by publishing the tuple
proving the exchange happened; the contract checks the redeem guards in a
fixed order, pays the distributor its share, and reveals the decryption key
on the ledger as a public event. After the expiration timestamp the vendor
can sweep whatever was never claimed.

Payout rule: each successful claim pays balance // (devices remaining), so
earlier claims never starve later ones and integer rounding dust is swept by
the final claim or the vendor refund.
"""

from __future__ import annotations

from . import crypto
from .encoding import EncodingError, read_u64, u64_be
from .ledger import CallContext, CallOutcome, DeployError

TEMPLATE_NAME = "distribution-bid"
KEY_REVEALED_EVENT = "KeyRevealed"

METHOD_PUBLISH_PROOF = "publishProofOfDistribution"
METHOD_WITHDRAW = "withdrawFunds"

# Rejection reasons, in guard-evaluation order for publishProofOfDistribution.
REASON_EXPIRED = "expired"
REASON_UNKNOWN_DEVICE = "unknown-device"
REASON_ALREADY_CLAIMED = "already-claimed"
REASON_WITNESS_MISMATCH = "witness-mismatch"
REASON_STATEMENT_MISMATCH = "statement-mismatch"
REASON_BAD_DEVICE_SIG = "bad-device-signature"
REASON_NOT_EXPIRED = "not-expired"
REASON_NOT_OWNER = "not-owner"
REASON_UNKNOWN_METHOD = "unknown-method"
REASON_MALFORMED = "malformed-args"


def device_ack_bytes(update_hash: bytes, s: bytes) -> bytes:
    """Message a device signs to acknowledge receipt of the encrypted update:
    the raw concatenation of two fixed-width digests, so it is unambiguous."""
    return update_hash + s


def witness_hash(device_pk: bytes, t: bytes) -> bytes:
    return crypto.hash_bytes(device_pk + t)


class RedeemTuple:
    """Arguments of a publishProofOfDistribution call, with a byte codec so
    the tuple travels through transactions unchanged."""

    __slots__ = ("device_pk", "t", "s", "distributor_pk", "device_sig", "r")

    def __init__(
        self,
        device_pk: bytes,
        t: bytes,
        s: bytes,
        distributor_pk: bytes,
        device_sig: bytes,
        r: bytes,
    ):
        self.device_pk = device_pk
        self.t = t
        self.s = s
        self.distributor_pk = distributor_pk
        self.device_sig = device_sig
        self.r = r

    def encode(self) -> tuple[bytes, ...]:
        return (self.device_pk, self.t, self.s, self.distributor_pk, self.device_sig, self.r)

    @classmethod
    def decode(cls, args: tuple[bytes, ...]) -> "RedeemTuple":
        if len(args) != 6:
            raise EncodingError(f"redeem tuple has {len(args)} fields, expected 6")
        return cls(*args)


class BidContract:
    """Hosted escrow instance; one per released update."""

    def __init__(
        self,
        owner: str,
        owner_pk: bytes,
        expiration: int,
        update_hash: bytes,
        package_hash: bytes,
        device_pks: tuple[bytes, ...],
        deposit: int,
        deployed_at_height: int,
    ):
        self.owner = owner
        self.owner_pk = owner_pk
        self.expiration = expiration
        self.update_hash = update_hash
        self.package_hash = package_hash
        # device pk -> revealed witness once the device's update was claimed
        self.device_table: dict[bytes, bytes | None] = {pk: None for pk in device_pks}
        self.n = len(device_pks)
        self.num_updated = 0
        self.balance = deposit
        self.deployed_at_height = deployed_at_height

    # -- deploy --------------------------------------------------------------

    @staticmethod
    def deploy_args(
        expiration: int, update_hash: bytes, package_hash: bytes, device_pks: list[bytes]
    ) -> tuple[bytes, ...]:
        return (u64_be(expiration), update_hash, package_hash, *device_pks)

    @classmethod
    def from_deploy(
        cls, owner: str, args: tuple[bytes, ...], deposit: int, height: int
    ) -> "BidContract":
        if len(args) < 3:
            raise DeployError("missing constructor arguments")
        expiration_raw, update_hash, package_hash = args[0], args[1], args[2]
        device_pks = args[3:]
        try:
            expiration = read_u64(expiration_raw)
        except EncodingError as exc:
            raise DeployError(str(exc)) from exc
        unpack_args_ok = (
            len(update_hash) == crypto.DIGEST_SIZE and len(package_hash) == crypto.DIGEST_SIZE
        )
        if not unpack_args_ok:
            raise DeployError("malformed update or package hash")
        if not device_pks:
            raise DeployError("empty device list")
        if any(len(pk) != crypto.PUBLIC_KEY_SIZE for pk in device_pks):
            raise DeployError("malformed device public key")
        if len(set(device_pks)) != len(device_pks):
            raise DeployError("duplicate device public key")
        return cls(
            owner=owner,
            owner_pk=bytes.fromhex(owner),
            expiration=expiration,
            update_hash=update_hash,
            package_hash=package_hash,
            device_pks=device_pks,
            deposit=deposit,
            deployed_at_height=height,
        )

    # -- calls ---------------------------------------------------------------

    def call(self, method: str, args: tuple[bytes, ...], ctx: CallContext) -> CallOutcome:
        if method == METHOD_PUBLISH_PROOF:
            return self._publish_proof(args, ctx)
        if method == METHOD_WITHDRAW:
            return self._withdraw(ctx)
        return CallOutcome(False, reason=REASON_UNKNOWN_METHOD)

    def _publish_proof(self, args: tuple[bytes, ...], ctx: CallContext) -> CallOutcome:
        try:
            claim = RedeemTuple.decode(args)
        except EncodingError:
            return CallOutcome(False, reason=REASON_MALFORMED)
        # Guards run in a fixed order and mutate nothing until all pass.
        if ctx.block_timestamp >= self.expiration:
            return CallOutcome(False, reason=REASON_EXPIRED)
        if claim.device_pk not in self.device_table:
            return CallOutcome(False, reason=REASON_UNKNOWN_DEVICE)
        if self.device_table[claim.device_pk] is not None:
            return CallOutcome(False, reason=REASON_ALREADY_CLAIMED)
        if claim.r != witness_hash(claim.distributor_pk, claim.t):
            return CallOutcome(False, reason=REASON_WITNESS_MISMATCH)
        if claim.s != crypto.hash_bytes(claim.r):
            return CallOutcome(False, reason=REASON_STATEMENT_MISMATCH)
        if not crypto.verify_sig(
            claim.device_pk, claim.device_sig, device_ack_bytes(self.update_hash, claim.s)
        ):
            return CallOutcome(False, reason=REASON_BAD_DEVICE_SIG)
        payout = self.balance // (self.n - self.num_updated)
        self.num_updated += 1
        self.device_table[claim.device_pk] = claim.r
        ctx.transfer_out(claim.distributor_pk.hex(), payout)
        ctx.emit(KEY_REVEALED_EVENT, (claim.device_pk, claim.r))
        return CallOutcome(
            True,
            info={
                "paid": payout,
                "device": claim.device_pk.hex(),
                "distributor": claim.distributor_pk.hex(),
            },
        )

    def _withdraw(self, ctx: CallContext) -> CallOutcome:
        if ctx.block_timestamp < self.expiration:
            return CallOutcome(False, reason=REASON_NOT_EXPIRED)
        if ctx.sender != self.owner:
            return CallOutcome(False, reason=REASON_NOT_OWNER)
        refunded = self.balance
        ctx.transfer_out(self.owner, refunded)
        return CallOutcome(True, info={"refunded": refunded})

    # -- queries -------------------------------------------------------------

    def revealed_witness(self, device_pk: bytes) -> bytes | None:
        return self.device_table.get(device_pk)

    def dump(self) -> dict:
        return {
            "template": TEMPLATE_NAME,
            "owner": self.owner,
            "expiration": self.expiration,
            "update_hash": self.update_hash.hex(),
            "package_hash": self.package_hash.hex(),
            "devices": {
                pk.hex(): (r.hex() if r is not None else None)
                for pk, r in sorted(self.device_table.items())
            },
            "n": self.n,
            "num_updated": self.num_updated,
            "balance": self.balance,
        }


def default_templates() -> dict:
    return {TEMPLATE_NAME: BidContract.from_deploy}
