"""Scenario schema: the full configuration of one simulated run.

A scenario plus its seed determines a run bit for bit. Everything is plain
JSON so scenario files can be written by hand and validated with clear
diagnostics before a run starts.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

ADVERSARY_KINDS = (
    "eavesdrop-and-front-run",
    "message-drop",
    "byte-tamper",
    "vendor-impersonator",
    "double-claimer",
    "downgrade-pusher",
    "device-self-dealer",
    "late-claimer",
)

AdversaryKind = Literal[
    "eavesdrop-and-front-run",
    "message-drop",
    "byte-tamper",
    "vendor-impersonator",
    "double-claimer",
    "downgrade-pusher",
    "device-self-dealer",
    "late-claimer",
]


class LinkParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    latency: int = Field(default=2, ge=1, description="ticks added to every transfer")
    bandwidth: int = Field(default=65536, ge=1, description="bytes moved per tick")


class AdversarySpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: AdversaryKind
    p: float = Field(default=0.2, ge=0.0, le=1.0, description="per-message probability, where the kind uses one")
    count: int = Field(default=1, ge=1, description="how many independent adversary nodes, where the kind is a node")


class Scenario(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(default=0, ge=0, le=2**64 - 1)
    vendors: int = Field(default=1, ge=0)
    distributors: int = Field(default=2, ge=0)
    devices_per_vendor: int = Field(default=3, ge=0)
    releases: int = Field(default=1, ge=1, description="updates released per vendor")
    release_gap: int = Field(default=60, ge=0, description="ticks between a vendor's releases")
    update_size: int = Field(default=1024, ge=1, description="update file size in bytes")
    deposit: int = Field(default=1200, ge=0, description="escrow per release")
    refund_window: int = Field(default=400, ge=0, description="ticks from release to escrow expiration")
    seeding_window: int = Field(default=200, ge=1, description="ticks the vendor keeps providing the package")
    arrival_spread: int = Field(default=10, ge=0, description="devices start at a uniform tick in [0, spread]")
    block_interval: int = Field(default=5, ge=1)
    max_ticks: int = Field(default=100_000, ge=1)
    session_timeout: int | None = Field(default=None, ge=1)
    link: LinkParams = Field(default_factory=LinkParams)
    adversaries: list[AdversarySpec] = Field(default_factory=list)

    def effective_session_timeout(self) -> int:
        if self.session_timeout is not None:
            return self.session_timeout
        # Must comfortably cover the largest single transfer (the offer,
        # which carries the encrypted update) plus a few control round trips.
        transfer = self.link.latency + -(-self.update_size // self.link.bandwidth)
        return transfer + 6 * self.link.latency + 10

    def horizon(self) -> int:
        # Far enough past the last expiration that every straggler claim
        # (even one delayed a full refund window) and the vendor sweep land
        # in a sealed block before the run stops.
        last_release = 1 + (self.releases - 1) * self.release_gap
        tail = self.effective_session_timeout() + 2 * self.block_interval + 4
        quiescent = last_release + self.refund_window + tail
        return min(self.max_ticks, quiescent)
