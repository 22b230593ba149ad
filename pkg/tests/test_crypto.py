"""Primitive-level tests: hash, signatures, the update cipher, and the
simulated proof-of-distribution backend.

The proof backend tests pin the security contract the rest of the system
leans on: completeness, soundness for everyone without the setup trapdoor,
instance binding, and the documented setup-holder forgery.
"""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from podnet import crypto
from podnet.crypto import (
    KeyPair,
    ProofInstance,
    ProvingError,
    SimulatedProofBackend,
    derive_sym_key,
    hash_bytes,
    hash_hex,
    statement_holds,
    stream_decrypt,
    stream_encrypt,
    verify_sig,
)

# -- hashing -------------------------------------------------------------------


def test_sha256_known_answer():
    # FIPS 180-4 test vectors
    assert hash_hex(b"") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    assert hash_hex(b"abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    assert hash_bytes(b"abc") == bytes.fromhex(hash_hex(b"abc"))


@given(st.binary(max_size=256))
def test_hash_is_deterministic_and_fixed_width(data):
    assert hash_bytes(data) == hash_bytes(data)
    assert len(hash_bytes(data)) == crypto.DIGEST_SIZE


def test_no_collisions_in_small_sample():
    rng = random.Random(7)
    inputs = {rng.randbytes(rng.randrange(0, 64)) for _ in range(2000)}
    assert len({hash_bytes(m) for m in inputs}) == len(inputs)


# -- signatures ----------------------------------------------------------------


def test_sign_verify_round_trip(keypair):
    msg = b"update-hash||s"
    sig = keypair.sign(msg)
    assert len(keypair.public) == crypto.PUBLIC_KEY_SIZE
    assert len(sig) == crypto.SIGNATURE_SIZE
    assert verify_sig(keypair.public, sig, msg)


def test_wrong_key_rejects(rng, keypair):
    other = KeyPair.generate(rng)
    sig = keypair.sign(b"m")
    assert not verify_sig(other.public, sig, b"m")


def test_wrong_message_rejects(keypair):
    sig = keypair.sign(b"m")
    assert not verify_sig(keypair.public, sig, b"m2")


def test_every_single_bit_flip_in_signature_rejects(keypair):
    msg = b"receipt"
    sig = keypair.sign(msg)
    for byte_index in range(len(sig)):
        for bit in range(8):
            flipped = bytearray(sig)
            flipped[byte_index] ^= 1 << bit
            assert not verify_sig(keypair.public, bytes(flipped), msg)


def test_malformed_inputs_return_false_not_raise(keypair):
    sig = keypair.sign(b"m")
    assert not verify_sig(b"\x00" * 31, sig, b"m")  # short key
    assert not verify_sig(keypair.public, sig[:-1], b"m")  # short sig
    assert not verify_sig(b"", b"", b"m")
    assert not verify_sig(b"\xff" * 32, b"\x00" * 64, b"m")  # non-curve point


def test_keypair_from_seed_is_deterministic():
    a = KeyPair.from_seed(b"\x11" * 32)
    b = KeyPair.from_seed(b"\x11" * 32)
    assert a.public == b.public
    assert a.sign(b"x") == b.sign(b"x")


# -- stream cipher -------------------------------------------------------------


@pytest.mark.parametrize("size", [0, 1, 64, 1024, 1 << 20])
def test_cipher_round_trip_sizes(rng, size):
    key = derive_sym_key(rng.randbytes(32))
    plain = rng.randbytes(size)
    cipher = stream_encrypt(plain, key)
    assert len(cipher) == size
    assert stream_decrypt(cipher, key) == plain


def test_wrong_key_yields_garbage_that_fails_hash_check(rng):
    plain = rng.randbytes(512)
    good = derive_sym_key(rng.randbytes(32))
    bad = derive_sym_key(rng.randbytes(32))
    recovered = stream_decrypt(stream_encrypt(plain, good), bad)
    assert recovered != plain
    assert hash_bytes(recovered) != hash_bytes(plain)


def test_cipher_key_length_enforced():
    with pytest.raises(ValueError):
        stream_encrypt(b"data", b"short")


def test_kdf_is_domain_separated():
    w = b"\x42" * 32
    assert derive_sym_key(w) != hash_bytes(w)
    assert len(derive_sym_key(w)) == crypto.SYM_KEY_SIZE


# -- proof backend -------------------------------------------------------------


def _exchange_fixture(rng):
    """A satisfiable instance: witness r, statement digest s = H(r), and the
    update encrypted under the key derived from r."""
    backend = SimulatedProofBackend()
    update = rng.randbytes(600)
    u_id = hash_bytes(update)
    keys = backend.setup(u_id, rng)
    r = rng.randbytes(32)
    s = hash_bytes(r)
    ciphertext = stream_encrypt(update, derive_sym_key(r))
    return backend, keys, update, u_id, r, s, ciphertext


def test_statement_oracle(rng):
    _, _, update, u_id, r, s, ciphertext = _exchange_fixture(rng)
    assert statement_holds(ciphertext, s, u_id, r)
    assert not statement_holds(ciphertext, s, u_id, rng.randbytes(32))
    assert not statement_holds(ciphertext, hash_bytes(b"other"), u_id, r)
    assert not statement_holds(ciphertext, s, hash_bytes(b"other"), r)


def test_prove_then_verify_completeness(rng):
    backend, keys, _, u_id, r, s, ciphertext = _exchange_fixture(rng)
    proof = backend.prove(keys, ciphertext, s, u_id, r)
    assert len(proof.data) == crypto.PROOF_SIZE  # succinct: constant size
    assert backend.verify(keys, ciphertext, s, u_id, proof)


def test_prove_refuses_false_statements(rng):
    backend, keys, _, u_id, r, s, ciphertext = _exchange_fixture(rng)
    with pytest.raises(ProvingError):
        backend.prove(keys, ciphertext, s, u_id, rng.randbytes(32))  # wrong witness
    with pytest.raises(ProvingError):
        backend.prove(keys, ciphertext, hash_bytes(rng.randbytes(32)), u_id, r)  # s != H(r)
    with pytest.raises(ProvingError):
        # ciphertext does not decrypt to the committed update
        backend.prove(keys, rng.randbytes(len(ciphertext)), s, u_id, r)


def test_verify_binds_every_instance_component(rng):
    backend, keys, _, u_id, r, s, ciphertext = _exchange_fixture(rng)
    proof = backend.prove(keys, ciphertext, s, u_id, r)
    tampered_ct = bytes([ciphertext[0] ^ 1]) + ciphertext[1:]
    assert not backend.verify(keys, tampered_ct, s, u_id, proof)
    assert not backend.verify(keys, ciphertext, hash_bytes(b"x"), u_id, proof)
    assert not backend.verify(keys, ciphertext, s, hash_bytes(b"x"), proof)
    bad_tag = crypto.Proof(data=bytes(32), instance=proof.instance)
    assert not backend.verify(keys, ciphertext, s, u_id, bad_tag)
    truncated = crypto.Proof(data=proof.data[:-1], instance=proof.instance)
    assert not backend.verify(keys, ciphertext, s, u_id, truncated)


def test_proofs_do_not_transfer_between_setups(rng):
    backend, keys, update, u_id, r, s, ciphertext = _exchange_fixture(rng)
    proof = backend.prove(keys, ciphertext, s, u_id, r)
    other_keys = backend.setup(u_id, rng)  # fresh setup, same statement id
    assert not backend.verify(other_keys, ciphertext, s, u_id, proof)


def test_verify_with_unknown_or_swapped_keys_fails(rng):
    backend, keys, _, u_id, r, s, ciphertext = _exchange_fixture(rng)
    proof = backend.prove(keys, ciphertext, s, u_id, r)
    foreign = SimulatedProofBackend().setup(u_id, random.Random(1))
    assert not backend.verify(foreign, ciphertext, s, u_id, proof)
    # role confusion: a proving key is not a verifying key
    swapped = crypto.ProofKeys(proving=keys.verifying, verifying=keys.proving, statement_id=u_id)
    assert not backend.verify(swapped, ciphertext, s, u_id, proof)


def test_proof_bytes_independent_of_witness_given_instance(rng):
    # zero-knowledge surrogate: the tag is a function of the instance alone,
    # so it leaks nothing about r beyond what the instance states
    backend, keys, _, u_id, r, s, ciphertext = _exchange_fixture(rng)
    proof = backend.prove(keys, ciphertext, s, u_id, r)
    instance = ProofInstance(hash_bytes(ciphertext), s, u_id)
    assert proof.instance == instance
    assert r not in proof.data
    assert backend.recorded_witness(proof) == r  # test instrumentation only


def test_forge_needs_the_setup_trapdoor(rng):
    backend, keys, _, u_id, _, s, ciphertext = _exchange_fixture(rng)
    # neither published key can mint proofs: soundness holds for every party
    # that did not run setup, which is the fair-exchange assumption
    with pytest.raises(ProvingError):
        backend.forge(keys.proving, ciphertext, s, u_id)
    with pytest.raises(ProvingError):
        backend.forge(keys.verifying, ciphertext, s, u_id)
    with pytest.raises(ProvingError):
        backend.forge(rng.randbytes(33), ciphertext, s, u_id)


def test_setup_holder_can_forge_false_statements(rng):
    # documented caveat of the trusted setup: the setup runner keeps a
    # trapdoor and can prove statements that are false
    backend, keys, _, u_id, _, _, _ = _exchange_fixture(rng)
    trapdoor = backend.trapdoor_of(keys)
    junk = rng.randbytes(600)
    s = hash_bytes(rng.randbytes(32))
    forged = backend.forge(trapdoor, junk, s, u_id)
    assert backend.verify(keys, junk, s, u_id, forged)
    assert not statement_holds(junk, s, u_id, rng.randbytes(32))


def test_trapdoor_lookup_rejects_unknown_keys(rng):
    backend = SimulatedProofBackend()
    foreign = SimulatedProofBackend().setup(b"\x01" * 32, rng)
    with pytest.raises(ProvingError):
        backend.trapdoor_of(foreign)


@settings(max_examples=25)
@given(st.binary(min_size=1, max_size=2048), st.binary(min_size=32, max_size=32))
def test_exchange_algebra(update, r):
    # the protocol's core identity: encrypt under KDF(r), publish s = H(r);
    # revealing r later is necessary and sufficient to recover the update
    s = hash_bytes(r)
    ciphertext = stream_encrypt(update, derive_sym_key(r))
    assert statement_holds(ciphertext, s, hash_bytes(update), r)
    assert stream_decrypt(ciphertext, derive_sym_key(r)) == update
