"""Adversarial harness: channel taps, dishonest nodes, and the named attack
suite with its expected outcomes.

Every adversary here is built from the same primitives honest nodes use; none
gets a private backdoor into the runner. Channel adversaries tap the message
layer through hooks, ledger adversaries race transactions through the public
submit path, and dishonest nodes are protocol state machines that deviate at
specific steps. The suite pins down what each attack is allowed to achieve:
usually nothing, occasionally a documented boundary (a vendor colluding
against itself, a device claiming its own bounty).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .. import crypto
from ..contract import (
    METHOD_PUBLISH_PROOF,
    METHOD_WITHDRAW,
    TEMPLATE_NAME,
    BidContract,
    RedeemTuple,
    device_ack_bytes,
    witness_hash,
)
from ..encoding import EncodingError
from ..ledger import (
    DEPLOYED_EVENT,
    FACTORY_ADDRESS,
    Call,
    Deploy,
    Transaction,
    make_transaction,
)
from ..protocol import (
    AnnounceHint,
    DistributorNode,
    UpdatePackage,
    UpdateOffer,
)
from .scenario import AdversarySpec, Scenario
from .runner import Env, MessageRecord, RunResult, Runner, derive_rng


# -- channel adversaries ---------------------------------------------------------


class EavesdropHook:
    """Passive global tap: every message is observed. The secrecy checks in
    the verifier treat the whole transcript as attacker-visible, so this hook
    only marks records; the damage (if any) would come from what the bytes
    contain."""

    priority = 0

    def on_send(self, record: MessageRecord) -> None:
        record.eavesdropped = True


class DropHook:
    priority = 1

    def __init__(self, p: float, rng: random.Random, runner: Runner):
        self.p = p
        self.rng = rng
        self.runner = runner

    def on_send(self, record: MessageRecord) -> None:
        if self.rng.random() < self.p:
            record.status = "dropped"
            self.runner.audit.emit(
                "message-dropped",
                sender=record.sender,
                recipient=record.recipient,
                type=record.msg_type,
                tick=record.tick_sent,
            )


class TamperHook:
    """Flips one byte of the wire payload with probability p. Receivers must
    reject the result: either the framing breaks, a signature stops
    verifying, or the proof no longer matches its instance."""

    priority = 2

    def __init__(self, p: float, rng: random.Random, runner: Runner):
        self.p = p
        self.rng = rng
        self.runner = runner

    def on_send(self, record: MessageRecord) -> None:
        if not record.wire_payload or self.rng.random() >= self.p:
            return
        data = bytearray(record.wire_payload)
        idx = self.rng.randrange(len(data))
        data[idx] ^= self.rng.randint(1, 255)
        record.wire_payload = bytes(data)
        record.status = "tampered"
        self.runner.audit.emit(
            "message-tampered",
            sender=record.sender,
            recipient=record.recipient,
            type=record.msg_type,
            byte=idx,
            tick=record.tick_sent,
        )


class FrontRunner:
    """Watches the public submit path and races every redeem it sees,
    substituting its own key as payee. The witness binds the payee, so the
    copied tuple fails the witness guard and the victim's original still
    pays out."""

    def __init__(self, runner: Runner, keypair: crypto.KeyPair):
        self.runner = runner
        self.keypair = keypair
        self.address = keypair.public.hex()

    def on_submit(self, tx: Transaction) -> None:
        if tx.sender == self.address:
            return
        payload = tx.payload
        if not isinstance(payload, Call) or payload.method != METHOD_PUBLISH_PROOF:
            return
        try:
            claim = RedeemTuple.decode(payload.args)
        except EncodingError:
            return
        stolen = RedeemTuple(
            device_pk=claim.device_pk,
            t=claim.t,
            s=claim.s,
            distributor_pk=self.keypair.public,
            device_sig=claim.device_sig,
            r=claim.r,
        )
        race = make_transaction(
            self.keypair, Call(payload.contract, METHOD_PUBLISH_PROOF, stolen.encode())
        )
        # Straight to the ledger: the copy enters the mempool ahead of the
        # victim's original, which is still sitting in this submit call.
        self.runner.ledger.submit(race)
        self.runner.audit.emit(
            "front-run-attempt",
            attacker=self.address,
            victim=tx.sender,
            contract=payload.contract,
            device_pk=claim.device_pk.hex(),
            tick=self.runner.now,
        )


class DowngradePusher:
    """Gossips the oldest live contract at every device, trying to talk them
    into re-installing a superseded release."""

    def __init__(self, runner: Runner, keypair: crypto.KeyPair):
        self.runner = runner
        self.keypair = keypair
        self.address = keypair.public.hex()
        self.period = 2 * runner.scenario.block_interval

    def start(self) -> None:
        self.runner.schedule_at(3 * self.runner.scenario.block_interval, self.push)

    def push(self) -> None:
        ledger = self.runner.ledger
        live = [
            addr
            for addr, inst in ledger.contracts.items()
            if isinstance(inst, BidContract) and self.runner.now < inst.expiration
        ]
        if live:
            oldest = min(live, key=lambda addr: ledger.deploy_heights[addr])
            hint = AnnounceHint(contract=oldest).encode()
            for device in self.runner.device_census:
                self.runner.send(self.address, device, hint)
            self.runner.audit.emit(
                "downgrade-push", attacker=self.address, contract=oldest, tick=self.runner.now
            )
        if self.runner.now + self.period <= self.runner.horizon:
            self.runner.schedule(self.period, self.push)


# -- dishonest nodes ---------------------------------------------------------------


class ImpersonatorNode(DistributorNode):
    """Claims to be a vendor without the vendor's key. Two fronts: deploys a
    bogus escrow naming someone else's devices, and serves honest contracts
    with self-signed packages. Devices and distributors must reject both on
    the vendor signature alone."""

    def __init__(
        self,
        keypair: crypto.KeyPair,
        env,
        trusted_vendors: frozenset[bytes],
        session_timeout: int,
        victim_device_pks: list[bytes],
        deposit: int,
        refund_window: int,
    ):
        super().__init__(keypair, env, trusted_vendors, session_timeout)
        self.victim_device_pks = victim_device_pks
        self.deposit = deposit
        self.refund_window = refund_window

    def bogus_release(self) -> None:
        if not self.victim_device_pks:
            return
        env = self.env
        update = env.rng.randbytes(512)
        u_id = crypto.hash_bytes(update)
        keys = env.backend.setup(u_id, env.rng)
        package = UpdatePackage.build(self.keypair, update, keys.proving, keys.verifying)
        expiration = env.now() + self.refund_window
        deploy = Deploy(
            template=TEMPLATE_NAME,
            args=BidContract.deploy_args(expiration, u_id, package.p_id, self.victim_device_pks),
            deposit=self.deposit,
        )
        result = env.submit(make_transaction(self.keypair, deploy))
        if not result.accepted or result.contract_address is None:
            return
        env.dsn.provide(self.address, package.serialize())
        env.dsn.provide(self.address, update)
        env.schedule(self.refund_window, lambda: self._reclaim(result.contract_address))
        env.emit_audit(
            "impersonation-release",
            attacker=self.address,
            contract=result.contract_address,
            expiration=expiration,
        )

    def _reclaim(self, contract: str) -> None:
        self.env.submit(make_transaction(self.keypair, Call(contract, METHOD_WITHDRAW, ())))

    def _on_auth(self, sender, msg) -> None:
        # Fake serving: answer the authenticated device with a package keyed
        # and signed by itself instead of the vendor.
        session = self.sessions.get((sender, msg.contract))
        if session is None or session.state != "challenged" or session.device_pk != msg.device_pk:
            return
        holding = self.holdings.get(msg.contract)
        if holding is None:
            return
        env = self.env
        junk = env.rng.randbytes(len(holding.package.update))
        junk_id = crypto.hash_bytes(junk)
        keys = env.backend.setup(junk_id, env.rng)
        t = env.rng.randbytes(32)
        r = witness_hash(self.keypair.public, t)
        s = crypto.hash_bytes(r)
        ciphertext = crypto.stream_encrypt(junk, crypto.derive_sym_key(r))
        proof = env.backend.prove(keys, ciphertext, s, junk_id, r)
        from ..protocol import package_sig_bytes

        vendor_sig = self.keypair.sign(package_sig_bytes(holding.u_id, keys.verifying))
        offer = UpdateOffer(
            contract=msg.contract,
            distributor_pk=self.keypair.public,
            s=s,
            ciphertext=ciphertext,
            proof_tag=proof.data,
            verifying_key=keys.verifying,
            vendor_sig=vendor_sig,
        )
        session.state = "offer-sent"
        env.send(sender, offer.encode())
        env.emit_audit(
            "fake-offer-sent",
            attacker=self.address,
            device=sender,
            contract=msg.contract,
            tick=env.now(),
        )
        self._arm_timeout(sender, msg.contract, session.seq)


class SelfDealerNode:
    """A device that claims its own bounty: it signs its own receipt, names
    itself as the distributor, and redeems without any exchange. The escrow
    pays it; this is the accepted limit of receipt-based incentives, and the
    verifier flags every such payment."""

    def __init__(self, keypair: crypto.KeyPair, env, vendor_pk: bytes, start_at: int):
        self.keypair = keypair
        self.address = keypair.public.hex()
        self.env = env
        self.vendor_pk = vendor_pk
        self.start_at = start_at
        self.installs: list[dict] = []
        self.installed_version = -1
        self._claimed: set[str] = set()
        self._witness: dict[str, bytes] = {}
        self._factory_cursor = env.ledger.subscribe(FACTORY_ADDRESS, DEPLOYED_EVENT)
        self._reveal_cursors: dict = {}

    def poll_ledger(self) -> None:
        if self.env.now() < self.start_at:
            return
        from ..contract import KEY_REVEALED_EVENT

        for event in self._factory_cursor.poll():
            deployer, contract = event.args[0], event.args[1].hex()
            if deployer != self.vendor_pk:
                continue
            instance = self.env.ledger.contracts.get(contract)
            if not isinstance(instance, BidContract):
                continue
            if self.keypair.public not in instance.device_table:
                continue
            self._reveal_cursors[contract] = self.env.ledger.subscribe(
                contract, KEY_REVEALED_EVENT
            )
            self._claim_own_bounty(contract, instance)
        for contract, cursor in list(self._reveal_cursors.items()):
            for event in cursor.poll():
                self._on_reveal(contract, event.args)

    def _claim_own_bounty(self, contract: str, instance: BidContract) -> None:
        if contract in self._claimed or self.env.now() >= instance.expiration:
            return
        self._claimed.add(contract)
        t = self.env.rng.randbytes(32)
        r = witness_hash(self.keypair.public, t)
        s = crypto.hash_bytes(r)
        ack = self.keypair.sign(device_ack_bytes(instance.update_hash, s))
        redeem = RedeemTuple(
            device_pk=self.keypair.public,
            t=t,
            s=s,
            distributor_pk=self.keypair.public,
            device_sig=ack,
            r=r,
        )
        self._witness[contract] = r
        self.env.submit(
            make_transaction(self.keypair, Call(contract, METHOD_PUBLISH_PROOF, redeem.encode()))
        )
        self.env.emit_audit(
            "self-deal-claim", device=self.address, contract=contract, tick=self.env.now()
        )

    def _on_reveal(self, contract: str, args: tuple[bytes, ...]) -> None:
        device_pk, _r = args[0], args[1]
        if device_pk != self.keypair.public or contract in {i["contract"] for i in self.installs}:
            return
        # Paid; now fetch the real package off the storage network for its
        # own install, like any freeloader would.
        instance = self.env.ledger.contracts[contract]
        p_cid = instance.package_hash.hex()
        providers = [p for p in self.env.dsn.lookup(p_cid) if p != self.address]
        if not providers:
            self.env.schedule(5, lambda: self._on_reveal(contract, args))
            return
        plan = self.env.dsn.plan_fetch(providers[0], p_cid)
        if plan is None:
            return
        self.env.schedule(plan.duration, lambda: self._finish_install(contract, plan.data))

    def _finish_install(self, contract: str, data: bytes) -> None:
        instance = self.env.ledger.contracts[contract]
        try:
            package = UpdatePackage.parse(data)
        except EncodingError:
            return
        if package.u_id != instance.update_hash:
            return
        height = self.env.ledger.deploy_heights[contract]
        if height <= self.installed_version:
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
        self.env.emit_audit("self-deal-install", device=self.address, contract=contract)

    def on_message(self, sender: str, msg) -> None:
        # Ignores all peer traffic; it only talks to the ledger.
        return


class ColludingDistributor(DistributorNode):
    """A distributor holding the vendor's proving trapdoor, modeling a vendor
    colluding against its own devices. It forges proofs for garbage
    ciphertexts: devices verify, sign, and the colluder is paid, but every
    install is refused on the content hash. Demonstrates that proof soundness
    is rooted in the setup, so the setup runner is the one party who can lie."""

    def __init__(self, *args, vendor_node, **kwargs):
        super().__init__(*args, **kwargs)
        self._vendor = vendor_node

    def _on_auth(self, sender, msg) -> None:
        session = self.sessions.get((sender, msg.contract))
        if session is None or session.state != "challenged" or session.device_pk != msg.device_pk:
            return
        holding = self.holdings.get(msg.contract)
        release = self._vendor.releases.get(msg.contract)
        if holding is None or release is None:
            return
        env = self.env
        if not crypto.verify_sig(msg.device_pk, msg.sig, _auth_bytes(session.c)):
            self._abort(sender, msg.contract, "bad-device-sig")
            return
        session.state = "authenticated"
        t = env.rng.randbytes(32)
        r = witness_hash(self.keypair.public, t)
        s = crypto.hash_bytes(r)
        junk = env.rng.randbytes(len(holding.package.update))
        ciphertext = crypto.stream_encrypt(junk, crypto.derive_sym_key(r))
        proof = env.backend.forge(release.trapdoor, ciphertext, s, holding.u_id)
        session.t, session.r, session.s = t, r, s
        env.emit_audit(
            "session-secret",
            contract=msg.contract,
            device_pk=msg.device_pk.hex(),
            distributor=self.address,
            t=t,
            r=r,
            s=s,
            ciphertext=ciphertext,
        )
        env.emit_audit(
            "forged-proof-served",
            attacker=self.address,
            device=sender,
            contract=msg.contract,
            tick=env.now(),
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
        env.send(sender, offer.encode())
        self._arm_timeout(sender, msg.contract, session.seq)


def _auth_bytes(challenge: bytes) -> bytes:
    from ..protocol import auth_sig_bytes

    return auth_sig_bytes(challenge)


# -- wiring adversaries into a run -------------------------------------------------


def install_adversaries(runner: Runner, trusted: frozenset[bytes], timeout: int) -> None:
    scenario = runner.scenario
    seed = scenario.seed
    impersonator_index = 0
    self_dealer_queue = list(runner._pending_self_dealers)

    for idx, spec in enumerate(scenario.adversaries):
        kind = spec.kind
        if kind == "eavesdrop-and-front-run":
            runner.channel_hooks.append(EavesdropHook())
            for k in range(spec.count):
                kp = crypto.KeyPair.generate(derive_rng(seed, f"key:front-runner:{idx}:{k}"))
                fr = FrontRunner(runner, kp)
                runner.submit_hooks.append(fr.on_submit)
                runner.manifest.add(kind, fr.address)
        elif kind == "message-drop":
            runner.channel_hooks.append(
                DropHook(spec.p, derive_rng(seed, f"adv:drop:{idx}"), runner)
            )
            runner.manifest.add(kind, f"hook:drop:{idx}")
        elif kind == "byte-tamper":
            runner.channel_hooks.append(
                TamperHook(spec.p, derive_rng(seed, f"adv:tamper:{idx}"), runner)
            )
            runner.manifest.add(kind, f"hook:tamper:{idx}")
        elif kind == "vendor-impersonator":
            for _ in range(spec.count):
                kp = crypto.KeyPair.generate(
                    derive_rng(seed, f"key:impersonator:{impersonator_index}")
                )
                env = Env(runner, kp.public.hex(), derive_rng(seed, f"rng:impersonator:{impersonator_index}"))
                victims = runner.vendors[0].device_pks if runner.vendors else []
                node = ImpersonatorNode(
                    keypair=kp,
                    env=env,
                    trusted_vendors=trusted,
                    session_timeout=timeout,
                    victim_device_pks=victims,
                    deposit=scenario.deposit,
                    refund_window=scenario.refund_window,
                )
                runner.nodes[node.address] = node
                runner.poll_nodes.append(node)
                runner.manifest.add(kind, node.address)
                runner.schedule_at(2, node.bogus_release)
                impersonator_index += 1
        elif kind == "double-claimer":
            for k in range(spec.count):
                kp = crypto.KeyPair.generate(derive_rng(seed, f"key:double-claimer:{idx}:{k}"))
                env = Env(runner, kp.public.hex(), derive_rng(seed, f"rng:double-claimer:{idx}:{k}"))
                node = DistributorNode(
                    keypair=kp,
                    env=env,
                    trusted_vendors=trusted,
                    session_timeout=timeout,
                    claim_copies=2,
                )
                runner.nodes[node.address] = node
                runner.poll_nodes.append(node)
                runner.manifest.add(kind, node.address)
        elif kind == "late-claimer":
            for k in range(spec.count):
                kp = crypto.KeyPair.generate(derive_rng(seed, f"key:late-claimer:{idx}:{k}"))
                env = Env(runner, kp.public.hex(), derive_rng(seed, f"rng:late-claimer:{idx}:{k}"))
                node = DistributorNode(
                    keypair=kp,
                    env=env,
                    trusted_vendors=trusted,
                    session_timeout=timeout,
                    claim_delay=scenario.refund_window,
                    skip_claim_checks=True,
                )
                runner.nodes[node.address] = node
                runner.poll_nodes.append(node)
                runner.manifest.add(kind, node.address)
        elif kind == "downgrade-pusher":
            for k in range(spec.count):
                kp = crypto.KeyPair.generate(derive_rng(seed, f"key:downgrade-pusher:{idx}:{k}"))
                pusher = DowngradePusher(runner, kp)
                pusher.start()
                runner.manifest.add(kind, pusher.address)
        elif kind == "device-self-dealer":
            for _ in range(spec.count):
                kp, vendor_pk, start_at = self_dealer_queue.pop(0)
                env = Env(runner, kp.public.hex(), derive_rng(seed, f"rng:device:{kp.public.hex()}"))
                node = SelfDealerNode(keypair=kp, env=env, vendor_pk=vendor_pk, start_at=start_at)
                runner.nodes[node.address] = node
                runner.poll_nodes.append(node)
                runner.manifest.add(kind, node.address)

    runner.channel_hooks.sort(key=lambda h: h.priority)


# -- the attack suite ----------------------------------------------------------------


@dataclass
class Check:
    label: str
    ok: bool
    detail: str = ""


@dataclass
class AttackOutcome:
    name: str
    ok: bool
    caveat: bool
    checks: list[Check] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "ok": self.ok,
            "caveat": self.caveat,
            "checks": [
                {"label": c.label, "ok": c.ok, "detail": c.detail} for c in self.checks
            ],
        }


def _outcome(name: str, checks: list[Check], caveat: bool = False) -> AttackOutcome:
    return AttackOutcome(name=name, ok=all(c.ok for c in checks), caveat=caveat, checks=checks)


def _payments_to(result: RunResult, addresses: set[str]) -> int:
    return sum(1 for p in result.payments if p.distributor in addresses)


def _verify(result: RunResult, allow_self_deal: bool = False):
    from .verify import verify_run

    allow = result.manifest.addresses.get("device-self-dealer", []) if allow_self_deal else []
    return verify_run(result, allow_self_deal=set(allow))


def front_run_case(seed: int = 1001) -> AttackOutcome:
    scenario = Scenario(
        seed=seed,
        vendors=1,
        distributors=3,
        devices_per_vendor=200,
        deposit=6000,
        refund_window=600,
        seeding_window=300,
        arrival_spread=20,
        adversaries=[AdversarySpec(kind="eavesdrop-and-front-run")],
    )
    from .runner import run

    result = run(scenario)
    report = _verify(result)
    attempts = result.audit.counters.get("front-run-attempt", 0)
    attackers = set(result.manifest.addresses.get("eavesdrop-and-front-run", []))
    checks = [
        Check("every claim was raced", attempts >= 200, f"attempts={attempts}"),
        Check(
            "no payment ever reached the attacker",
            _payments_to(result, attackers) == 0,
            f"stolen={_payments_to(result, attackers)}",
        ),
        Check(
            "every race lost on the witness guard",
            result.metrics.rejected_claims.get("witness-mismatch", 0) == attempts,
            str(result.metrics.rejected_claims),
        ),
        Check(
            "victims were still paid and devices updated",
            result.metrics.devices_updated == 200 and result.metrics.payments_count == 200,
            f"updated={result.metrics.devices_updated} payments={result.metrics.payments_count}",
        ),
        Check("run verifies clean", report.ok, "; ".join(report.violation_kinds())),
    ]
    return _outcome("eavesdrop-and-front-run", checks)


def message_drop_case(seed: int = 1002) -> AttackOutcome:
    scenario = Scenario(
        seed=seed,
        vendors=1,
        distributors=2,
        devices_per_vendor=12,
        deposit=1200,
        refund_window=500,
        adversaries=[AdversarySpec(kind="message-drop", p=0.3)],
    )
    from .runner import run

    result = run(scenario)
    report = _verify(result)
    m = result.metrics
    checks = [
        Check("messages actually dropped", m.messages_dropped > 0, f"dropped={m.messages_dropped}"),
        Check(
            "some exchanges still completed",
            m.devices_updated > 0,
            f"updated={m.devices_updated}/{m.devices_total}",
        ),
        Check(
            "payments match deliveries one for one",
            report.ok,
            "; ".join(report.violation_kinds()),
        ),
        Check("money conserved", result.ledger.conservation_ok(), ""),
    ]
    return _outcome("message-drop", checks)


def byte_tamper_case(seed: int = 1003) -> AttackOutcome:
    scenario = Scenario(
        seed=seed,
        vendors=1,
        distributors=2,
        devices_per_vendor=12,
        deposit=1200,
        refund_window=500,
        adversaries=[AdversarySpec(kind="byte-tamper", p=0.3)],
    )
    from .runner import run

    result = run(scenario)
    report = _verify(result)
    m = result.metrics
    checks = [
        Check("messages actually tampered", m.messages_tampered > 0, f"tampered={m.messages_tampered}"),
        Check(
            "no corrupted content was ever installed",
            report.ok and report.stats.get("bad_install_digests", 0) == 0,
            "; ".join(report.violation_kinds()),
        ),
        Check(
            "some exchanges survived via retries",
            m.devices_updated > 0,
            f"updated={m.devices_updated}/{m.devices_total}",
        ),
        Check("money conserved", result.ledger.conservation_ok(), ""),
    ]
    return _outcome("byte-tamper", checks)


def impersonator_case(seed: int = 1004) -> AttackOutcome:
    scenario = Scenario(
        seed=seed,
        vendors=1,
        distributors=1,
        devices_per_vendor=10,
        deposit=1000,
        refund_window=500,
        adversaries=[AdversarySpec(kind="vendor-impersonator")],
    )
    from .runner import run

    result = run(scenario)
    report = _verify(result)
    attackers = set(result.manifest.addresses.get("vendor-impersonator", []))
    bogus = [r["contract"] for r in result.audit.by_kind("impersonation-release")]
    registered_bogus = [
        r for r in result.audit.by_kind("distributor-registered") if r["contract"] in set(bogus)
    ]
    bad_sig_aborts = [
        r for r in result.audit.by_kind("exchange-abort") if r["stage"] == "bad-vendor-sig"
    ]
    bogus_installs = [r for r in result.audit.by_kind("install") if r["contract"] in set(bogus)]
    checks = [
        Check("bogus release was deployed", len(bogus) == 1, f"bogus={len(bogus)}"),
        Check(
            "no distributor served the bogus contract",
            len(registered_bogus) == 0,
            f"registered={len(registered_bogus)}",
        ),
        Check(
            "bogus release was ignored as untrusted",
            result.audit.counters.get("release-ignored", 0) > 0,
            f"ignored={result.audit.counters.get('release-ignored', 0)}",
        ),
        Check(
            "fake serving attempts happened",
            result.audit.counters.get("fake-offer-sent", 0) > 0,
            f"fake_offers={result.audit.counters.get('fake-offer-sent', 0)}",
        ),
        Check(
            "devices rejected every forged vendor signature",
            len(bad_sig_aborts) >= result.audit.counters.get("fake-offer-sent", 0) > 0,
            f"aborts={len(bad_sig_aborts)}",
        ),
        Check("nothing from the bogus contract installed", len(bogus_installs) == 0, ""),
        Check(
            "impersonator earned nothing",
            _payments_to(result, attackers) == 0,
            f"paid={_payments_to(result, attackers)}",
        ),
        Check(
            "all devices still got the real update",
            result.metrics.devices_updated == 10,
            f"updated={result.metrics.devices_updated}",
        ),
        Check("run verifies clean", report.ok, "; ".join(report.violation_kinds())),
    ]
    return _outcome("vendor-impersonator", checks)


def double_claim_case(seed: int = 1005) -> AttackOutcome:
    scenario = Scenario(
        seed=seed,
        vendors=1,
        distributors=1,
        devices_per_vendor=10,
        deposit=1000,
        refund_window=500,
        adversaries=[AdversarySpec(kind="double-claimer")],
    )
    from .runner import run

    result = run(scenario)
    report = _verify(result)
    attackers = set(result.manifest.addresses.get("double-claimer", []))
    dup_rejections = result.metrics.rejected_claims.get("already-claimed", 0)
    attacker_payments = _payments_to(result, attackers)
    checks = [
        Check(
            "double claimer served sessions and was paid once each",
            attacker_payments > 0,
            f"paid={attacker_payments}",
        ),
        Check(
            "every duplicate redeem was rejected",
            dup_rejections == attacker_payments,
            f"already-claimed={dup_rejections}",
        ),
        Check("no device was paid for twice", report.ok, "; ".join(report.violation_kinds())),
        Check("money conserved", result.ledger.conservation_ok(), ""),
    ]
    return _outcome("double-claimer", checks)


def late_claim_case(seed: int = 1006) -> AttackOutcome:
    scenario = Scenario(
        seed=seed,
        vendors=1,
        distributors=0,
        devices_per_vendor=6,
        deposit=600,
        refund_window=120,
        seeding_window=119,
        adversaries=[AdversarySpec(kind="late-claimer")],
    )
    from .runner import run

    result = run(scenario)
    report = _verify(result)
    expired_rejections = result.metrics.rejected_claims.get("expired", 0)
    checks = [
        Check(
            "stale redeems were rejected as expired",
            expired_rejections > 0,
            f"expired={expired_rejections}",
        ),
        Check("no payout after expiration", result.metrics.payments_count == 0, ""),
        Check(
            "vendor swept the full deposit back",
            result.metrics.refund_total == scenario.deposit,
            f"refund={result.metrics.refund_total}",
        ),
        Check("run verifies clean", report.ok, "; ".join(report.violation_kinds())),
    ]
    return _outcome("late-claimer", checks)


def downgrade_case(seed: int = 1007) -> AttackOutcome:
    scenario = Scenario(
        seed=seed,
        vendors=1,
        distributors=2,
        devices_per_vendor=10,
        releases=2,
        release_gap=8,
        deposit=1000,
        refund_window=500,
        arrival_spread=30,
        adversaries=[AdversarySpec(kind="downgrade-pusher")],
    )
    from .runner import run

    result = run(scenario)
    report = _verify(result)
    heights = sorted(result.ledger.deploy_heights.values())
    newest = heights[-1] if heights else -1
    on_newest = sum(1 for d in result.devices if d.installed_version == newest)
    checks = [
        Check(
            "hints reached devices",
            result.audit.counters.get("hint-received", 0) > 0,
            f"hints={result.audit.counters.get('hint-received', 0)}",
        ),
        Check(
            "at least one downgrade was refused",
            result.metrics.downgrade_refusals >= 1,
            f"refusals={result.metrics.downgrade_refusals}",
        ),
        Check(
            "every device ended on the newest release",
            on_newest == len(result.devices),
            f"on_newest={on_newest}/{len(result.devices)}",
        ),
        Check(
            "no install ever lowered a version",
            report.ok,
            "; ".join(report.violation_kinds()),
        ),
    ]
    return _outcome("downgrade-pusher", checks)


def self_deal_case(seed: int = 1008) -> AttackOutcome:
    scenario = Scenario(
        seed=seed,
        vendors=1,
        distributors=2,
        devices_per_vendor=8,
        deposit=800,
        refund_window=500,
        adversaries=[AdversarySpec(kind="device-self-dealer")],
    )
    from .runner import run

    result = run(scenario)
    dealers = set(result.manifest.addresses.get("device-self-dealer", []))
    report_strict = _verify(result, allow_self_deal=False)
    report_allowed = _verify(result, allow_self_deal=True)
    dealer_payments = _payments_to(result, dealers)
    checks = [
        Check(
            "self dealer was paid for its own receipt",
            dealer_payments == 1,
            f"paid={dealer_payments}",
        ),
        Check(
            "strict verification flags the self deal",
            not report_strict.ok
            and "paid-without-session" in report_strict.violation_kinds(),
            "; ".join(report_strict.violation_kinds()),
        ),
        Check(
            "with the dealer allowed, everything else is clean",
            report_allowed.ok and report_allowed.stats.get("allowed_self_deals", 0) == 1,
            "; ".join(report_allowed.violation_kinds()),
        ),
        Check(
            "full fleet coverage including the dealer",
            result.metrics.devices_updated == 8,
            f"updated={result.metrics.devices_updated}",
        ),
        Check("money conserved", result.ledger.conservation_ok(), ""),
    ]
    return _outcome("device-self-dealer", checks, caveat=True)


def vendor_forge_case(seed: int = 1009) -> AttackOutcome:
    scenario = Scenario(
        seed=seed,
        vendors=1,
        distributors=0,
        devices_per_vendor=4,
        deposit=400,
        refund_window=300,
    )
    runner = Runner(scenario)
    vendor = runner.vendors[0]
    kp = crypto.KeyPair.generate(derive_rng(seed, "key:colluder"))
    env = Env(runner, kp.public.hex(), derive_rng(seed, "rng:colluder"))
    colluder = ColludingDistributor(
        keypair=kp,
        env=env,
        trusted_vendors=frozenset({vendor.keypair.public}),
        session_timeout=scenario.effective_session_timeout(),
        vendor_node=vendor,
    )
    runner.nodes[colluder.address] = colluder
    runner.poll_nodes.append(colluder)
    runner.manifest.add("vendor-forge", colluder.address)
    runner.drive()
    metrics, payments = runner.build_metrics()
    result = RunResult(
        scenario=scenario,
        metrics=metrics,
        run_log=runner.build_run_log(metrics),
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
    from .verify import verify_run

    report = verify_run(result)
    forged = result.audit.counters.get("forged-proof-served", 0)
    refused = result.audit.counters.get("install-refused", 0)
    colluder_payments = _payments_to(result, {colluder.address})
    kinds = set(report.violation_kinds())
    checks = [
        Check("forged proofs were served", forged >= 4, f"forged={forged}"),
        Check(
            "devices accepted the forged proofs and signed",
            colluder_payments == forged and forged > 0,
            f"paid={colluder_payments}",
        ),
        Check(
            "every garbage payload was refused at install",
            refused == forged and metrics.devices_updated == 0,
            f"refused={refused} updated={metrics.devices_updated}",
        ),
        Check(
            "verification catches the broken exchange",
            not report.ok and kinds == {"paid-for-wrong-content"},
            "; ".join(sorted(kinds)),
        ),
        Check("money conserved", result.ledger.conservation_ok(), ""),
    ]
    return _outcome("vendor-forge", checks, caveat=True)


ATTACK_SUITE: list[tuple[str, object]] = [
    ("eavesdrop-and-front-run", front_run_case),
    ("message-drop", message_drop_case),
    ("byte-tamper", byte_tamper_case),
    ("vendor-impersonator", impersonator_case),
    ("double-claimer", double_claim_case),
    ("late-claimer", late_claim_case),
    ("downgrade-pusher", downgrade_case),
    ("device-self-dealer", self_deal_case),
    ("vendor-forge", vendor_forge_case),
]


def run_attack_suite() -> list[AttackOutcome]:
    return [case() for _, case in ATTACK_SUITE]
