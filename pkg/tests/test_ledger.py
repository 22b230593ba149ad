"""Ledger semantics: signed submission, block sealing, deterministic deploy
addresses, event subscriptions, and coin conservation."""

import pytest

from podnet import crypto
from podnet.contract import TEMPLATE_NAME, BidContract, default_templates
from podnet.encoding import u64_be
from podnet.ledger import (
    DEPLOYED_EVENT,
    FACTORY_ADDRESS,
    Call,
    Deploy,
    Ledger,
    LedgerError,
    Transaction,
    Transfer,
    contract_address,
    make_transaction,
)


@pytest.fixture
def alice(rng):
    return crypto.KeyPair.generate(rng)


@pytest.fixture
def bob(rng):
    return crypto.KeyPair.generate(rng)


def fresh_ledger(*funded, amount=1000):
    return Ledger({kp.public.hex(): amount for kp in funded}, default_templates())


def deploy_payload(device_pks, deposit=100, expiration=10_000):
    args = BidContract.deploy_args(expiration, b"\x01" * 32, b"\x02" * 32, list(device_pks))
    return Deploy(template=TEMPLATE_NAME, args=args, deposit=deposit)


# -- transfers -----------------------------------------------------------------


def test_transfer_moves_funds(alice, bob):
    ledger = fresh_ledger(alice)
    result = ledger.submit(make_transaction(alice, Transfer(bob.public.hex(), 300)))
    assert result.accepted
    block = ledger.seal(1)
    assert block.receipts[0].ok
    assert ledger.accounts[alice.public.hex()] == 700
    assert ledger.accounts[bob.public.hex()] == 300
    assert ledger.conservation_ok()


def test_insufficient_funds_rejected_at_submit(alice, bob):
    ledger = fresh_ledger(alice)
    result = ledger.submit(make_transaction(alice, Transfer(bob.public.hex(), 1001)))
    assert not result.accepted
    assert result.reason == "insufficient-funds"
    assert ledger.pending_count == 0


def test_overdraft_within_one_block_rejected_at_seal(alice, bob):
    # both pass the submit-time balance check; execution order settles it
    ledger = fresh_ledger(alice)
    ledger.submit(make_transaction(alice, Transfer(bob.public.hex(), 800)))
    ledger.submit(make_transaction(alice, Transfer(bob.public.hex(), 800)))
    block = ledger.seal(1)
    assert [r.status for r in block.receipts] == ["ok", "rejected"]
    assert block.receipts[1].reason == "insufficient-funds"
    assert ledger.accounts[alice.public.hex()] == 200
    assert ledger.conservation_ok()


def test_forged_sender_signature_rejected(alice, bob):
    ledger = fresh_ledger(alice, bob)
    payload = Transfer(bob.public.hex(), 10)
    signed_by_bob = make_transaction(bob, payload)
    forged = Transaction(sender_pk=alice.public, payload=payload, signature=signed_by_bob.signature)
    result = ledger.submit(forged)
    assert not result.accepted
    assert result.reason == "bad-signature"


def test_payload_tamper_after_signing_rejected(alice, bob):
    ledger = fresh_ledger(alice)
    tx = make_transaction(alice, Transfer(bob.public.hex(), 10))
    tampered = Transaction(
        sender_pk=tx.sender_pk,
        payload=Transfer(bob.public.hex(), 999),
        signature=tx.signature,
    )
    assert not ledger.submit(tampered).accepted


def test_negative_transfer_unrepresentable(alice, bob):
    # amounts are u64 on the wire, so a negative never reaches the ledger
    with pytest.raises(ValueError):
        make_transaction(alice, Transfer(bob.public.hex(), -5))


# -- sealing -------------------------------------------------------------------


def test_seal_timestamps_strictly_increase(alice):
    ledger = fresh_ledger(alice)
    ledger.seal(5)
    with pytest.raises(LedgerError):
        ledger.seal(5)
    with pytest.raises(LedgerError):
        ledger.seal(4)
    ledger.seal(6)
    assert [b.height for b in ledger.blocks] == [0, 1]


def test_empty_blocks_are_fine(alice):
    ledger = fresh_ledger(alice)
    block = ledger.seal(1)
    assert block.transactions == ()
    assert ledger.height == 1


def test_negative_genesis_balance_rejected():
    with pytest.raises(ValueError):
        Ledger({"aa": -1}, {})


# -- deploys -------------------------------------------------------------------


def test_deploy_address_is_deterministic_and_predicted(alice, bob):
    ledger = fresh_ledger(alice)
    device = bob.public
    result = ledger.submit(make_transaction(alice, deploy_payload([device])))
    assert result.accepted
    predicted = result.contract_address
    assert predicted == contract_address(alice.public, 0)
    ledger.seal(1)
    assert predicted in ledger.contracts
    # second deploy from the same sender gets the next nonce
    second = ledger.submit(make_transaction(alice, deploy_payload([device])))
    assert second.contract_address == contract_address(alice.public, 1)
    assert second.contract_address != predicted


def test_deploy_escrows_deposit_and_emits_factory_event(alice, bob):
    ledger = fresh_ledger(alice)
    result = ledger.submit(make_transaction(alice, deploy_payload([bob.public], deposit=250)))
    ledger.seal(1)
    address = result.contract_address
    assert ledger.accounts[alice.public.hex()] == 750
    assert ledger.contracts[address].balance == 250
    assert ledger.conservation_ok()
    events = ledger.subscribe(FACTORY_ADDRESS, DEPLOYED_EVENT).poll()
    assert len(events) == 1
    assert events[0].args == (alice.public, bytes.fromhex(address))


def test_unknown_template_rejected_at_submit(alice):
    ledger = fresh_ledger(alice)
    bad = Deploy(template="no-such-template", args=(), deposit=0)
    result = ledger.submit(make_transaction(alice, bad))
    assert not result.accepted
    assert result.reason == "unknown-template"


def test_constructor_rejection_leaves_no_trace(alice):
    ledger = fresh_ledger(alice)
    bad = Deploy(template=TEMPLATE_NAME, args=(u64_be(5), b"short", b"x"), deposit=40)
    result = ledger.submit(make_transaction(alice, bad))
    assert result.accepted  # template exists and funds suffice at submit time
    block = ledger.seal(1)
    assert block.receipts[0].status == "rejected"
    assert ledger.accounts[alice.public.hex()] == 1000  # deposit not taken
    assert result.contract_address not in ledger.contracts
    assert ledger.conservation_ok()


def test_call_to_unknown_contract_rejected_at_submit(alice):
    ledger = fresh_ledger(alice)
    result = ledger.submit(make_transaction(alice, Call("ab" * 32, "anything", ())))
    assert not result.accepted
    assert result.reason == "unknown-contract"


# -- event cursors -------------------------------------------------------------


def test_cursor_replays_from_genesis_then_tails(alice, bob):
    ledger = fresh_ledger(alice)
    ledger.submit(make_transaction(alice, deploy_payload([bob.public])))
    ledger.seal(1)
    cursor = ledger.subscribe(FACTORY_ADDRESS, DEPLOYED_EVENT)
    assert len(cursor.poll()) == 1  # sees history from before subscription
    assert cursor.poll() == []
    ledger.submit(make_transaction(alice, deploy_payload([bob.public])))
    ledger.seal(2)
    assert len(cursor.poll()) == 1  # only the new one
    assert cursor.poll() == []


def test_cursors_are_independent_and_key_scoped(alice, bob):
    ledger = fresh_ledger(alice)
    ledger.submit(make_transaction(alice, deploy_payload([bob.public])))
    ledger.seal(1)
    first = ledger.subscribe(FACTORY_ADDRESS, DEPLOYED_EVENT)
    second = ledger.subscribe(FACTORY_ADDRESS, DEPLOYED_EVENT)
    other_name = ledger.subscribe(FACTORY_ADDRESS, "KeyRevealed")
    assert len(first.poll()) == 1
    assert len(second.poll()) == 1  # unaffected by the first cursor's reads
    assert other_name.poll() == []


# -- digests -------------------------------------------------------------------


def test_state_digest_tracks_state(alice, bob):
    ledger = fresh_ledger(alice)
    before = ledger.state_digest()
    assert before == fresh_ledger(alice).state_digest()  # pure function of state
    ledger.submit(make_transaction(alice, Transfer(bob.public.hex(), 1)))
    ledger.seal(1)
    assert ledger.state_digest() != before
