"""Escrow contract tests: deploy validation, every redeem guard, the payout
split, and withdraw. Claims go through the real ledger so block timestamps,
balance moves, and events are exercised, not just the guard returns."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from podnet import crypto
from podnet.contract import (
    KEY_REVEALED_EVENT,
    METHOD_PUBLISH_PROOF,
    METHOD_WITHDRAW,
    REASON_ALREADY_CLAIMED,
    REASON_BAD_DEVICE_SIG,
    REASON_EXPIRED,
    REASON_MALFORMED,
    REASON_NOT_EXPIRED,
    REASON_NOT_OWNER,
    REASON_STATEMENT_MISMATCH,
    REASON_UNKNOWN_DEVICE,
    REASON_UNKNOWN_METHOD,
    REASON_WITNESS_MISMATCH,
    TEMPLATE_NAME,
    BidContract,
    RedeemTuple,
    default_templates,
    device_ack_bytes,
    witness_hash,
)
from podnet.ledger import Call, Deploy, DeployError, Ledger, make_transaction

EXPIRATION = 1000
UPDATE = b"firmware image v2"
UPDATE_HASH = crypto.hash_bytes(UPDATE)


class Escrow:
    """One deployed 1-vendor escrow plus helpers to drive claims through
    sealed blocks with controlled timestamps."""

    def __init__(self, n_devices=4, deposit=100, seed=1):
        rng = random.Random(seed)
        self.vendor = crypto.KeyPair.generate(rng)
        self.devices = [crypto.KeyPair.generate(rng) for _ in range(n_devices)]
        self.distributor = crypto.KeyPair.generate(rng)
        self.rng = rng
        self.deposit = deposit
        self.ledger = Ledger(
            {self.vendor.public.hex(): deposit, self.distributor.public.hex(): 0},
            default_templates(),
        )
        deploy = Deploy(
            template=TEMPLATE_NAME,
            args=BidContract.deploy_args(
                EXPIRATION, UPDATE_HASH, crypto.hash_bytes(b"pkg"), [d.public for d in self.devices]
            ),
            deposit=deposit,
        )
        result = self.ledger.submit(make_transaction(self.vendor, deploy))
        assert result.accepted
        self.address = result.contract_address
        self._ts = 0
        self.seal()

    def seal(self, ts=None):
        self._ts = self._ts + 1 if ts is None else ts
        return self.ledger.seal(self._ts)

    @property
    def instance(self) -> BidContract:
        return self.ledger.contracts[self.address]

    def honest_claim(self, device, distributor=None):
        distributor = distributor or self.distributor
        t = self.rng.randbytes(32)
        r = witness_hash(distributor.public, t)
        s = crypto.hash_bytes(r)
        return RedeemTuple(
            device_pk=device.public,
            t=t,
            s=s,
            distributor_pk=distributor.public,
            device_sig=device.sign(device_ack_bytes(UPDATE_HASH, s)),
            r=r,
        )

    def redeem(self, claim, sender=None, ts=None):
        sender = sender or self.distributor
        tx = make_transaction(sender, Call(self.address, METHOD_PUBLISH_PROOF, claim.encode()))
        assert self.ledger.submit(tx).accepted
        return self.seal(ts).receipts[0]


@pytest.fixture
def escrow():
    return Escrow()


# -- deploy validation -----------------------------------------------------------


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda a: a[:2], "missing constructor arguments"),
        (lambda a: (b"\x00" * 7, a[1], a[2], a[3]), "expected 8-byte integer"),
        (lambda a: (a[0], b"short", a[2], a[3]), "malformed update or package hash"),
        (lambda a: a[:3], "empty device list"),
        (lambda a: (a[0], a[1], a[2], b"\x01" * 31), "malformed device public key"),
        (lambda a: (a[0], a[1], a[2], a[3], a[3]), "duplicate device public key"),
    ],
)
def test_deploy_argument_validation(mutate, message):
    good = BidContract.deploy_args(EXPIRATION, UPDATE_HASH, b"\x02" * 32, [b"\x01" * 32])
    with pytest.raises(DeployError, match=message):
        BidContract.from_deploy("aa" * 32, tuple(mutate(good)), 10, 0)


# -- redeem guards, one test per reason, in guard order ---------------------------


def test_honest_claim_pays_and_reveals(escrow):
    device = escrow.devices[0]
    claim = escrow.honest_claim(device)
    receipt = escrow.redeem(claim)
    assert receipt.ok
    assert receipt.info["paid"] == escrow.deposit // 4
    assert escrow.ledger.accounts[escrow.distributor.public.hex()] == escrow.deposit // 4
    assert escrow.instance.revealed_witness(device.public) == claim.r
    events = escrow.ledger.subscribe(escrow.address, KEY_REVEALED_EVENT).poll()
    assert len(events) == 1
    assert events[0].args == (device.public, claim.r)


def test_expired_claim_rejected(escrow):
    claim = escrow.honest_claim(escrow.devices[0])
    receipt = escrow.redeem(claim, ts=EXPIRATION)  # boundary: ts == expiration is late
    assert receipt.reason == REASON_EXPIRED
    assert escrow.instance.balance == escrow.deposit


def test_unknown_device_rejected(escrow):
    stranger = crypto.KeyPair.generate(random.Random(99))
    receipt = escrow.redeem(escrow.honest_claim(stranger))
    assert receipt.reason == REASON_UNKNOWN_DEVICE


def test_second_claim_for_same_device_rejected(escrow):
    device = escrow.devices[0]
    assert escrow.redeem(escrow.honest_claim(device)).ok
    # a different distributor with its own valid-looking tuple still loses
    rival = crypto.KeyPair.generate(random.Random(5))
    receipt = escrow.redeem(escrow.honest_claim(device, distributor=rival), sender=rival)
    assert receipt.reason == REASON_ALREADY_CLAIMED
    paid = escrow.ledger.accounts[escrow.distributor.public.hex()]
    assert paid == escrow.deposit // 4  # exactly one payment for the device


def test_front_run_payee_swap_hits_witness_guard(escrow):
    # the classic theft: copy a pending tuple, replace the payee key.
    # r = H(pk_d || t) binds the witness to the original distributor.
    claim = escrow.honest_claim(escrow.devices[0])
    thief = crypto.KeyPair.generate(random.Random(13))
    stolen = RedeemTuple(
        device_pk=claim.device_pk,
        t=claim.t,
        s=claim.s,
        distributor_pk=thief.public,
        device_sig=claim.device_sig,
        r=claim.r,
    )
    receipt = escrow.redeem(stolen, sender=thief)
    assert receipt.reason == REASON_WITNESS_MISMATCH
    assert escrow.ledger.accounts.get(thief.public.hex(), 0) == 0
    # the honest original still goes through afterwards
    assert escrow.redeem(claim).ok


def test_statement_mismatch_rejected(escrow):
    device = escrow.devices[0]
    claim = escrow.honest_claim(device)
    wrong_s = crypto.hash_bytes(b"not H(r)")
    bad = RedeemTuple(
        device_pk=claim.device_pk,
        t=claim.t,
        s=wrong_s,
        distributor_pk=claim.distributor_pk,
        device_sig=device.sign(device_ack_bytes(UPDATE_HASH, wrong_s)),
        r=claim.r,
    )
    assert escrow.redeem(bad).reason == REASON_STATEMENT_MISMATCH


def test_forged_device_signature_rejected(escrow):
    device = escrow.devices[0]
    claim = escrow.honest_claim(device)
    forger = crypto.KeyPair.generate(random.Random(21))
    for bad_sig in (
        forger.sign(device_ack_bytes(UPDATE_HASH, claim.s)),  # wrong key
        device.sign(device_ack_bytes(crypto.hash_bytes(b"other update"), claim.s)),  # wrong content
        b"\x00" * 64,
        b"",
    ):
        bad = RedeemTuple(
            device_pk=claim.device_pk,
            t=claim.t,
            s=claim.s,
            distributor_pk=claim.distributor_pk,
            device_sig=bad_sig,
            r=claim.r,
        )
        assert escrow.redeem(bad).reason == REASON_BAD_DEVICE_SIG
    assert escrow.instance.balance == escrow.deposit


def test_malformed_tuple_and_unknown_method(escrow):
    tx = make_transaction(
        escrow.distributor, Call(escrow.address, METHOD_PUBLISH_PROOF, (b"a", b"b"))
    )
    escrow.ledger.submit(tx)
    assert escrow.seal().receipts[0].reason == REASON_MALFORMED
    tx = make_transaction(escrow.distributor, Call(escrow.address, "mintCoins", ()))
    escrow.ledger.submit(tx)
    assert escrow.seal().receipts[0].reason == REASON_UNKNOWN_METHOD


def test_rejected_claim_mutates_nothing(escrow):
    before = escrow.instance.dump()
    stranger = crypto.KeyPair.generate(random.Random(99))
    escrow.redeem(escrow.honest_claim(stranger))
    assert escrow.instance.dump() == before
    assert escrow.ledger.conservation_ok()


# -- payout arithmetic -----------------------------------------------------------


def test_divisible_deposit_splits_evenly(escrow):
    amounts = [escrow.redeem(escrow.honest_claim(d)).info["paid"] for d in escrow.devices]
    assert amounts == [25, 25, 25, 25]
    assert escrow.instance.balance == 0


def test_non_divisible_deposit_pays_33_33_34():
    escrow = Escrow(n_devices=3, deposit=100)
    amounts = [escrow.redeem(escrow.honest_claim(d)).info["paid"] for d in escrow.devices]
    assert amounts == [33, 33, 34]  # floor division, dust to the last claim
    assert escrow.instance.balance == 0
    assert sum(amounts) == 100


def test_unclaimed_remainder_refunds_to_vendor():
    escrow = Escrow(n_devices=3, deposit=100)
    assert escrow.redeem(escrow.honest_claim(escrow.devices[0])).info["paid"] == 33
    tx = make_transaction(escrow.vendor, Call(escrow.address, METHOD_WITHDRAW, ()))
    escrow.ledger.submit(tx)
    receipt = escrow.seal(EXPIRATION).receipts[0]
    assert receipt.ok and receipt.info["refunded"] == 67
    assert escrow.ledger.accounts[escrow.vendor.public.hex()] == 67
    assert escrow.instance.balance == 0
    assert escrow.ledger.conservation_ok()


def test_zero_deposit_claims_pay_zero():
    # no guard inspects the balance, so a valid claim on an unfunded escrow
    # succeeds with a zero payout and still reveals the key
    escrow = Escrow(n_devices=2, deposit=0)
    receipt = escrow.redeem(escrow.honest_claim(escrow.devices[0]))
    assert receipt.ok and receipt.info["paid"] == 0
    assert escrow.instance.revealed_witness(escrow.devices[0].public) is not None
    assert escrow.ledger.conservation_ok()


@settings(max_examples=40, deadline=None)
@given(
    deposit=st.integers(min_value=0, max_value=10_000),
    n=st.integers(min_value=1, max_value=7),
    data=st.data(),
)
def test_payout_conservation_over_random_claim_subsets(deposit, n, data):
    escrow = Escrow(n_devices=n, deposit=deposit)
    claimers = data.draw(st.lists(st.integers(0, n - 1), unique=True, max_size=n))
    paid = 0
    for index in claimers:
        receipt = escrow.redeem(escrow.honest_claim(escrow.devices[index]))
        assert receipt.ok
        paid += receipt.info["paid"]
    tx = make_transaction(escrow.vendor, Call(escrow.address, METHOD_WITHDRAW, ()))
    escrow.ledger.submit(tx)
    refund = escrow.seal(EXPIRATION).receipts[0].info["refunded"]
    assert paid + refund == deposit  # exact, no dust lost
    if len(claimers) == n and deposit > 0:
        assert refund == 0  # full coverage leaves nothing to sweep


# -- withdraw guards --------------------------------------------------------------


def test_withdraw_before_expiration_rejected(escrow):
    tx = make_transaction(escrow.vendor, Call(escrow.address, METHOD_WITHDRAW, ()))
    escrow.ledger.submit(tx)
    assert escrow.seal(EXPIRATION - 1).receipts[0].reason == REASON_NOT_EXPIRED
    assert escrow.instance.balance == escrow.deposit


def test_withdraw_by_non_owner_rejected(escrow):
    tx = make_transaction(escrow.distributor, Call(escrow.address, METHOD_WITHDRAW, ()))
    escrow.ledger.submit(tx)
    assert escrow.seal(EXPIRATION).receipts[0].reason == REASON_NOT_OWNER


def test_claims_and_withdraw_race_in_one_block(escrow):
    # a claim and the sweep sealed in the same expired block: the claim is
    # late, the sweep wins, order inside the block does not leak money
    escrow.ledger.submit(
        make_transaction(
            escrow.distributor,
            Call(escrow.address, METHOD_PUBLISH_PROOF, escrow.honest_claim(escrow.devices[0]).encode()),
        )
    )
    escrow.ledger.submit(make_transaction(escrow.vendor, Call(escrow.address, METHOD_WITHDRAW, ())))
    block = escrow.seal(EXPIRATION)
    assert block.receipts[0].reason == REASON_EXPIRED
    assert block.receipts[1].ok and block.receipts[1].info["refunded"] == escrow.deposit
    assert escrow.ledger.conservation_ok()
