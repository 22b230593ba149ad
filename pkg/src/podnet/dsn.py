"""Content-addressed storage network with explicit provider records.

Models the out-of-band bulk channel: vendors seed immutable blobs, peers that
hold a copy advertise themselves as providers, and anyone can look up which
peers currently provide a content id. Transfer cost is a simple linear link
model so the simulation can charge ticks for moving large update files
without modeling real networking.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import crypto


def content_id(data: bytes) -> str:
    return crypto.hash_hex(data)


@dataclass(frozen=True)
class LinkModel:
    """latency in ticks, bandwidth in bytes per tick (> 0)."""

    latency: int
    bandwidth: int

    def duration(self, size: int) -> int:
        if size < 0:
            raise ValueError("negative transfer size")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        # ceil without floats; zero-byte fetches still pay latency
        return self.latency + -(-size // self.bandwidth)


@dataclass(frozen=True)
class FetchPlan:
    data: bytes
    duration: int


class Dsn:
    def __init__(self, link: LinkModel):
        self.link = link
        self._blobs: dict[str, bytes] = {}
        # cid -> provider ids in first-registration order
        self._providers: dict[str, list[str]] = {}

    def provide(self, provider: str, data: bytes) -> str:
        cid = content_id(data)
        self._blobs[cid] = data
        entries = self._providers.setdefault(cid, [])
        if provider not in entries:
            entries.append(provider)
        return cid

    def unprovide(self, provider: str, cid: str) -> None:
        entries = self._providers.get(cid)
        if entries and provider in entries:
            entries.remove(provider)

    def lookup(self, cid: str) -> list[str]:
        return list(self._providers.get(cid, []))

    def plan_fetch(self, provider: str, cid: str) -> FetchPlan | None:
        """Returns the blob and its transfer time, or None when the given
        peer does not (or no longer does) provide that content id."""
        if provider not in self._providers.get(cid, []):
            return None
        data = self._blobs[cid]
        return FetchPlan(data=data, duration=self.link.duration(len(data)))
