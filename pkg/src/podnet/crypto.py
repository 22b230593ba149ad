"""Hashing, signatures, the update stream cipher, and the proof-of-distribution
proof system.

One fixed 256-bit hash (SHA-256) is used everywhere digests are compared across
modules. Signatures are Ed25519: 32-byte public keys and deterministic
signatures, so recorded runs are bit-reproducible. The update cipher is an
unauthenticated ChaCha20 keystream; the decryption key is derived from the
witness digest with a domain-separated KDF, and a wrong key simply yields
garbage that fails the content-hash check downstream.

The proof system is pluggable. ``SimulatedProofBackend`` reproduces the
completeness, soundness-against-non-setup-parties, and succinctness contracts
of a SNARK without one: setup draws a per-statement secret, and a proof is a
keyed tag over the instance, issued only after the prover-side statement check
passes. Setup also issues a trapdoor value that only the party running setup
ever sees; ``forge`` demands it, so published proving/verifying keys cannot
mint proofs of false statements. That mirrors a trusted setup: the setup
runner can forge, everyone else gets soundness.
"""

from __future__ import annotations

import hashlib
import hmac
import random
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms

from .encoding import pack_tuple

DIGEST_SIZE = 32
PUBLIC_KEY_SIZE = 32
SIGNATURE_SIZE = 64
SYM_KEY_SIZE = 32
PROOF_SIZE = 32

_KDF_PREFIX = b"podnet/kdf/v1:"
_PROOF_DOMAIN = b"podnet/pod-proof/v1"
_CHACHA_NONCE = bytes(16)  # keys are single-use per session, so a fixed nonce is safe

_raw = serialization.Encoding.Raw
_raw_pub = serialization.PublicFormat.Raw

_default_rng = random.Random()


def hash_bytes(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def hash_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class KeyPair:
    """An Ed25519 signing key with its 32-byte raw public key."""

    secret: Ed25519PrivateKey
    public: bytes

    @classmethod
    def from_seed(cls, seed: bytes) -> "KeyPair":
        secret = Ed25519PrivateKey.from_private_bytes(seed)
        public = secret.public_key().public_bytes(_raw, _raw_pub)
        return cls(secret=secret, public=public)

    @classmethod
    def generate(cls, rng: random.Random | None = None) -> "KeyPair":
        rng = rng or _default_rng
        return cls.from_seed(rng.randbytes(32))

    def sign(self, message: bytes) -> bytes:
        return self.secret.sign(message)


def verify_sig(public: bytes, signature: bytes, message: bytes) -> bool:
    """True iff ``signature`` is valid for ``message`` under ``public``.

    Malformed keys or signatures return False instead of raising, so a
    garbled wire value can never abort a run.
    """
    if len(public) != PUBLIC_KEY_SIZE or len(signature) != SIGNATURE_SIZE:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


def derive_sym_key(witness: bytes) -> bytes:
    return hash_bytes(_KDF_PREFIX + witness)


def stream_encrypt(plain: bytes, key: bytes) -> bytes:
    if len(key) != SYM_KEY_SIZE:
        raise ValueError(f"symmetric key must be {SYM_KEY_SIZE} bytes")
    return Cipher(algorithms.ChaCha20(key, _CHACHA_NONCE), mode=None).encryptor().update(plain)


def stream_decrypt(cipher: bytes, key: bytes) -> bytes:
    # ChaCha20 is its own inverse under the same keystream.
    return stream_encrypt(cipher, key)


class ProvingError(Exception):
    """The claimed witness does not satisfy the statement, or the keys are unknown."""


@dataclass(frozen=True)
class ProofKeys:
    """Opaque proving/verifying key pair bound to one update's statement."""

    proving: bytes
    verifying: bytes
    statement_id: bytes


@dataclass(frozen=True)
class ProofInstance:
    ciphertext_digest: bytes
    s: bytes
    update_hash: bytes

    def encode(self) -> bytes:
        return pack_tuple([_PROOF_DOMAIN, self.ciphertext_digest, self.s, self.update_hash])


@dataclass(frozen=True)
class Proof:
    """Constant-size proof that the statement holds for its instance."""

    data: bytes
    instance: ProofInstance


def statement_holds(ciphertext: bytes, s: bytes, update_hash: bytes, witness: bytes) -> bool:
    """Direct evaluation of the distribution statement: the witness hashes to s
    and decrypts the ciphertext to the committed update. This is the oracle the
    proof system attests to; tests also call it independently of any proof."""
    if hash_bytes(witness) != s:
        return False
    return hash_bytes(stream_decrypt(ciphertext, derive_sym_key(witness))) == update_hash


_ROLE_PROVING = b"\x01"
_ROLE_VERIFYING = b"\x02"
_ROLE_TRAPDOOR = b"\x03"
_KEY_ID_SIZE = 16


class SimulatedProofBackend:
    """Stand-in for the (Gen, Prove, Verify) triple.

    Proof bytes are an HMAC over the instance under a per-setup secret, so they
    are statistically independent of the witness given the instance. The secret
    registry is per-backend-instance: parallel runs share no state, and a real
    SNARK backend can replace this class behind the same three methods.
    """

    def __init__(self) -> None:
        self._secrets: dict[bytes, tuple[bytes, bytes]] = {}
        self._trapdoors: dict[bytes, bytes] = {}
        self._witnesses: dict[bytes, bytes] = {}

    def setup(self, statement_id: bytes, rng: random.Random | None = None) -> ProofKeys:
        rng = rng or _default_rng
        key_id = rng.randbytes(_KEY_ID_SIZE)
        tau = rng.randbytes(32)
        self._secrets[key_id] = (tau, statement_id)
        self._trapdoors[key_id] = _ROLE_TRAPDOOR + key_id + rng.randbytes(16)
        proving = _ROLE_PROVING + key_id + rng.randbytes(16)
        verifying = _ROLE_VERIFYING + key_id + rng.randbytes(16)
        return ProofKeys(proving=proving, verifying=verifying, statement_id=statement_id)

    def trapdoor_of(self, keys: ProofKeys) -> bytes:
        """The setup secret behind these keys. Returned only against the full
        key pair object the setup call produced; the party that ran setup
        retains it privately, and nothing in a published key reveals it."""
        if len(keys.proving) == 1 + _KEY_ID_SIZE + 16 and keys.proving[:1] == _ROLE_PROVING:
            trapdoor = self._trapdoors.get(keys.proving[1 : 1 + _KEY_ID_SIZE])
            if trapdoor is not None:
                return trapdoor
        raise ProvingError("unknown keys")

    def _lookup(self, key_material: bytes, role: bytes) -> bytes | None:
        if len(key_material) != 1 + _KEY_ID_SIZE + 16 or key_material[:1] != role:
            return None
        entry = self._secrets.get(key_material[1 : 1 + _KEY_ID_SIZE])
        return entry[0] if entry else None

    def _tag(self, tau: bytes, instance: ProofInstance) -> bytes:
        return hmac.new(tau, instance.encode(), hashlib.sha256).digest()

    def prove(
        self,
        keys: ProofKeys,
        ciphertext: bytes,
        s: bytes,
        update_hash: bytes,
        witness: bytes,
    ) -> Proof:
        tau = self._lookup(keys.proving, _ROLE_PROVING)
        if tau is None:
            raise ProvingError("unknown proving key")
        if not statement_holds(ciphertext, s, update_hash, witness):
            raise ProvingError("witness does not satisfy the distribution statement")
        instance = ProofInstance(hash_bytes(ciphertext), s, update_hash)
        tag = self._tag(tau, instance)
        self._witnesses[tag] = witness
        return Proof(data=tag, instance=instance)

    def verify(
        self,
        keys: ProofKeys,
        ciphertext: bytes,
        s: bytes,
        update_hash: bytes,
        proof: Proof,
    ) -> bool:
        tau = self._lookup(keys.verifying, _ROLE_VERIFYING)
        if tau is None or len(proof.data) != PROOF_SIZE:
            return False
        instance = ProofInstance(hash_bytes(ciphertext), s, update_hash)
        if proof.instance != instance:
            return False
        return hmac.compare_digest(proof.data, self._tag(tau, instance))

    def forge(self, trapdoor: bytes, ciphertext: bytes, s: bytes, update_hash: bytes) -> Proof:
        """Produce a verifying proof with no witness at all.

        Demands the setup trapdoor, so only the party that ran setup can do
        this. Holders of the published proving or verifying keys cannot:
        soundness stands against everyone except the setup runner.
        """
        tau = self._lookup(trapdoor, _ROLE_TRAPDOOR)
        if tau is None:
            raise ProvingError("unknown trapdoor")
        instance = ProofInstance(hash_bytes(ciphertext), s, update_hash)
        return Proof(data=self._tag(tau, instance), instance=instance)

    def recorded_witness(self, proof: Proof) -> bytes | None:
        """Test instrumentation: the witness the prover used for this proof, if
        it was produced by ``prove``. Soundness checks re-run the statement
        oracle on it without ever shipping the witness to verifiers."""
        return self._witnesses.get(proof.data)


_default_backend = SimulatedProofBackend()


def pod_setup(statement_id: bytes, rng: random.Random | None = None) -> ProofKeys:
    return _default_backend.setup(statement_id, rng)


def pod_prove(keys: ProofKeys, ciphertext: bytes, s: bytes, update_hash: bytes, witness: bytes) -> Proof:
    return _default_backend.prove(keys, ciphertext, s, update_hash, witness)


def pod_verify(keys: ProofKeys, ciphertext: bytes, s: bytes, update_hash: bytes, proof: Proof) -> bool:
    return _default_backend.verify(keys, ciphertext, s, update_hash, proof)
