"""Runtime bit-exchange fabric between vQPUs for the classical model.

Delivery is reliable and FIFO per ordered (src, dst) pair; receives block,
sends do not. Every message is tagged with the sender's shot epoch so a
desynchronized shot loop surfaces as a hard EpochMismatch instead of a
silently reordered bit. Endpoints are job-scoped.

The transport is pluggable: an in-memory hub serves single-process runs and
tests, a socket transport sends frames to peer vQPU servers (whose receiver
worker feeds the local inbox).
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass

from .engine import ChannelHooks
from .errors import ChannelTimeout, EpochMismatch, JobAborted, PeerUnreachable

DEFAULT_RECV_TIMEOUT_MS = 30_000


@dataclass(frozen=True)
class BitMessage:
    src_circuit: str
    dst_circuit: str
    shot_epoch: int
    seq: int
    bit: int

    def to_obj(self) -> dict:
        return {"src": self.src_circuit, "dst": self.dst_circuit,
                "epoch": self.shot_epoch, "seq": self.seq, "bit": self.bit}

    @classmethod
    def from_obj(cls, obj: dict) -> "BitMessage":
        return cls(obj["src"], obj["dst"], obj["epoch"], obj["seq"], obj["bit"])


def is_bit_frame(obj: dict) -> bool:
    return {"src", "dst", "epoch", "seq", "bit"} <= set(obj)


class ChannelEndpoint:
    """One participant's view of the channel for a single distributed job."""

    def __init__(self, local_circuit: str, peer_map: dict[str, object],
                 transport, recv_timeout_ms: int = DEFAULT_RECV_TIMEOUT_MS):
        self.local_circuit = local_circuit
        self.peer_map = dict(peer_map)
        self.recv_timeout_ms = recv_timeout_ms
        self._transport = transport
        self._cond = threading.Condition()
        self._queues: dict[str, deque[BitMessage]] = {}
        self._aborted = False

    # inbound path, fed by the transport reader
    def deliver(self, msg: BitMessage) -> None:
        with self._cond:
            self._queues.setdefault(msg.src_circuit, deque()).append(msg)
            self._cond.notify_all()

    def abort(self) -> None:
        with self._cond:
            self._aborted = True
            self._cond.notify_all()

    def send_bit(self, msg: BitMessage) -> None:
        if msg.src_circuit != self.local_circuit:
            raise ValueError(
                f"endpoint {self.local_circuit!r} cannot send as {msg.src_circuit!r}")
        if self._aborted:
            raise JobAborted(f"channel for {self.local_circuit!r} is aborted")
        if msg.dst_circuit not in self.peer_map:
            raise PeerUnreachable(f"no address for peer {msg.dst_circuit!r}")
        self._transport.send(self.peer_map[msg.dst_circuit], msg)

    def recv_bit(self, from_circuit: str, shot_epoch: int, seq: int) -> int:
        deadline = time.monotonic() + self.recv_timeout_ms / 1000.0
        with self._cond:
            while True:
                if self._aborted:
                    raise JobAborted(
                        f"channel for {self.local_circuit!r} is aborted")
                q = self._queues.get(from_circuit)
                if q:
                    msg = q.popleft()
                    if msg.shot_epoch != shot_epoch or msg.seq != seq:
                        raise EpochMismatch(
                            f"expected (epoch {shot_epoch}, seq {seq}) from "
                            f"{from_circuit!r}, got (epoch {msg.shot_epoch}, "
                            f"seq {msg.seq})")
                    return msg.bit
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise ChannelTimeout(
                        f"no bit from {from_circuit!r} (epoch {shot_epoch}, "
                        f"seq {seq}) within {self.recv_timeout_ms} ms")
                self._cond.wait(remaining)

    def close(self) -> None:
        close = getattr(self._transport, "close", None)
        if close:
            close()

    def hooks(self) -> ChannelHooks:
        """Adapter for the engine's shot loop."""
        def send(peer: str, epoch: int, seq: int, bit: int) -> None:
            self.send_bit(BitMessage(self.local_circuit, peer, epoch, seq, bit))
        return ChannelHooks(send=send, recv=self.recv_bit)


class InMemoryHub:
    """Single-process transport: addresses are circuit ids.

    An optional delay function (seconds, called per message) runs in the
    sending thread, preserving per-pair FIFO while randomizing cross-pair
    interleavings for the ordering property tests.
    """

    def __init__(self, delay=None):
        self._endpoints: dict[str, ChannelEndpoint] = {}
        self._delay = delay
        self._lock = threading.Lock()

    def register(self, circuit_id: str, endpoint: ChannelEndpoint) -> None:
        with self._lock:
            self._endpoints[circuit_id] = endpoint

    def send(self, address, msg: BitMessage) -> None:
        if self._delay is not None:
            time.sleep(self._delay(msg))
        with self._lock:
            ep = self._endpoints.get(address)
        if ep is None:
            raise PeerUnreachable(f"no endpoint registered for {address!r}")
        ep.deliver(msg)


def establish(job_plan: dict[str, object], local_circuit: str | None = None,
              transport=None,
              recv_timeout_ms: int = DEFAULT_RECV_TIMEOUT_MS):
    """Create channel endpoints for a job plan (circuit id -> address).

    With `local_circuit` set, returns that participant's single endpoint
    bound to the given transport (required). Without it, returns a dict of
    endpoints for every participant wired through one in-memory hub, for
    single-process runs. Idempotent per job: endpoints connect lazily.
    """
    if local_circuit is not None:
        if transport is None:
            raise ValueError("a transport is required for a single endpoint")
        peers = {cid: addr for cid, addr in job_plan.items()
                 if cid != local_circuit}
        return ChannelEndpoint(local_circuit, peers, transport, recv_timeout_ms)

    hub = transport if isinstance(transport, InMemoryHub) else InMemoryHub()
    endpoints = {}
    for cid in job_plan:
        peers = {other: other for other in job_plan if other != cid}
        ep = ChannelEndpoint(cid, peers, hub, recv_timeout_ms)
        hub.register(cid, ep)
        endpoints[cid] = ep
    return endpoints
