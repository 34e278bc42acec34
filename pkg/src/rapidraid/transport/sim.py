"""Deterministic discrete-event network for chunk streams (built on simpy).

Timing model
------------
* Every node has one egress NIC, one ingress NIC and one CPU, each a FIFO
  resource. A frame from ``a`` to ``b`` holds a's egress and b's ingress for
  ``payload / bandwidth`` seconds, so concurrent streams at one node share
  that node's bandwidth.
* A link between two nodes uses the smaller bandwidth of the two node
  profiles and the latency profile of the slower (higher-latency) end. The
  profile is captured when the stream is opened.
* After transmission a frame arrives ``latency + U(-jitter, +jitter)`` later,
  never before the previous frame of the same stream.
* Flow control comes in three modes:
  - push: ``window`` bounds frames delivered to the receiver but not yet
    consumed; the sender sees that buffer state immediately. Frames in
    flight are held by the network (as a TCP window covering the
    bandwidth-delay product would).
  - ack: ``window`` bounds frames sent but not yet acknowledged; an
    acknowledgment leaves the receiver when it consumes the frame and
    crosses the link latency before the sender may reuse the slot.
  - pull: like ack, but the receiver also has to request the first
    ``window`` frames, so the initial credits pay the latency too.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import enum

import numpy as np
import simpy

from .frames import ChunkFrame, StreamRole


class TransportError(RuntimeError):
    pass


class UnknownEndpoint(TransportError, KeyError):
    pass


class StreamClosed(TransportError):
    pass


@dataclass(frozen=True)
class LinkProfile:
    bandwidth: float  # bytes per second
    base_latency: float = 0.0
    latency_jitter: float = 0.0

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.base_latency < 0 or self.latency_jitter < 0:
            raise ValueError("latency and jitter must be non-negative")
        if self.latency_jitter and self.latency_jitter >= self.base_latency:
            raise ValueError("jitter must be smaller than the base latency")

    @classmethod
    def mbps(cls, megabits: float, latency: float = 0.0, jitter: float = 0.0) -> LinkProfile:
        return cls(megabits * 1e6 / 8, latency, jitter)

    def transfer_time(self, nbytes: int) -> float:
        return nbytes / self.bandwidth


GIGABIT = LinkProfile.mbps(1000, latency=1e-4)
CONGESTED = LinkProfile.mbps(500, latency=0.100, jitter=0.010)


class SimNode:
    def __init__(self, env: simpy.Environment, name: str, profile: LinkProfile, cpu_rate: float | None):
        self.name = name
        self.profile = profile
        self.cpu_rate = cpu_rate
        self.egress = simpy.Resource(env, 1)
        self.ingress = simpy.Resource(env, 1)
        self.cpu = simpy.Resource(env, 1)

    def __repr__(self):
        return f"SimNode({self.name!r})"


_CLOSED = object()


class FlowControl(enum.Enum):
    PUSH = "push"
    ACK = "ack"
    PULL = "pull"


DEFAULT_FLOW = {
    StreamRole.FORWARD_X: FlowControl.PUSH,
    StreamRole.SOURCE_PULL: FlowControl.PULL,
    StreamRole.PARITY_PUSH: FlowControl.ACK,
}


class SimStream:
    """One ordered, reliable chunk channel between two simulated nodes."""

    def __init__(self, net: SimNetwork, src: SimNode, dst: SimNode, role: StreamRole,
                 window: int, flow: FlowControl):
        if window < 1:
            raise ValueError("window must be at least one frame")
        self.net = net
        self.env = net.env
        self.src = src
        self.dst = dst
        self.role = StreamRole(role)
        self.profile = net.link_profile(src.name, dst.name)
        self.window = window
        self.flow = FlowControl(flow)
        self.inbox = simpy.Store(self.env)
        self._wire = simpy.Store(self.env)  # (deliver_at, frame) in send order
        self.env.process(self._deliver())
        self.error: BaseException | None = None
        self._last_delivery = 0.0
        self._next_seq = 0
        self._buffered = 0  # delivered, not yet consumed
        self._space = self.env.event()
        self.frames = 0
        self.payload_bytes = 0
        initial = 0 if self.flow is FlowControl.PULL else window
        self.credits = simpy.Container(self.env, capacity=window, init=initial)
        if self.flow is FlowControl.PULL:
            self.env.process(self._return_credit(window))

    def _latency(self) -> float:
        p = self.profile
        if not p.latency_jitter:
            return p.base_latency
        return p.base_latency + self.net.rng.uniform(-p.latency_jitter, p.latency_jitter)

    def _return_credit(self, n: int = 1):
        yield self.env.timeout(self._latency())
        if self.error is None:
            yield self.credits.put(n)

    def _closed(self) -> StreamClosed:
        return StreamClosed(f"{self.src.name}->{self.dst.name} closed")

    def _acquire(self):
        if self.flow is FlowControl.PUSH:
            while self._buffered >= self.window and self.error is None:
                yield self._space
        else:
            yield self.credits.get(1)

    def send(self, frame: ChunkFrame):
        """Process generator: wait for flow control and the NICs, then transmit one frame."""
        if self.error is not None:
            raise self._closed() from self.error
        if frame.seq != self._next_seq:
            raise TransportError(f"out-of-order send: got seq {frame.seq}, expected {self._next_seq}")
        self._next_seq += 1
        yield from self._acquire()
        if self.error is not None:
            raise self._closed() from self.error
        with self.src.egress.request() as out_nic:
            yield out_nic
            with self.dst.ingress.request() as in_nic:
                yield in_nic
                yield self.env.timeout(self.profile.transfer_time(len(frame.payload)))
        deliver_at = max(self.env.now + self._latency(), self._last_delivery)
        self._last_delivery = deliver_at
        self.frames += 1
        self.payload_bytes += len(frame.payload)
        self.net.account(self, frame)
        self._wire.put((deliver_at, frame))

    def _deliver(self):
        while True:
            deliver_at, frame = yield self._wire.get()
            if deliver_at > self.env.now:
                yield self.env.timeout(deliver_at - self.env.now)
            if self.error is None:
                self._buffered += 1
                self.inbox.put(frame)

    def recv(self):
        """Process generator returning the next frame (raises StreamClosed on failure)."""
        item = yield self.inbox.get()
        if item is _CLOSED:
            self.inbox.put(_CLOSED)
            raise StreamClosed(f"{self.src.name}->{self.dst.name} failed") from self.error
        return item

    def _wake_sender(self):
        space, self._space = self._space, self.env.event()
        space.succeed()

    def consumed(self):
        """Receiver finished with a frame: free its buffer slot."""
        if self.error is not None:
            return
        self._buffered -= 1
        if self.flow is FlowControl.PUSH:
            self._wake_sender()
        else:
            self.env.process(self._return_credit())

    def fail(self, exc: BaseException):
        """Close the stream with an error visible to both ends."""
        if self.error is not None:
            return
        self.error = exc
        self.inbox.put(_CLOSED)
        # wake a sender blocked on flow control so it observes the error
        self._wake_sender()
        if self.credits.level < self.credits.capacity:
            self.credits.put(self.credits.capacity - self.credits.level)


@dataclass
class TrafficStats:
    payload: Counter = field(default_factory=Counter)
    frames: Counter = field(default_factory=Counter)
    framing: int = 0

    @property
    def payload_total(self) -> int:
        return sum(self.payload.values())

    @property
    def frame_total(self) -> int:
        return sum(self.frames.values())


class SimNetwork:
    """Registry of simulated nodes plus the shared event clock."""

    def __init__(self, default: LinkProfile = GIGABIT, seed: int = 0, cpu_rate: float | None = None,
                 env: simpy.Environment | None = None, trace: bool = False, capture: bool = False):
        self.env = env or simpy.Environment()
        self.default = default
        self.cpu_rate = cpu_rate
        self.rng = np.random.default_rng(seed)
        self.nodes: dict[str, SimNode] = {}
        self.traffic = TrafficStats()
        self.trace: list[tuple] | None = [] if trace else None
        self.captured: list[tuple[str, str, bytes]] | None = [] if capture else None

    @property
    def now(self) -> float:
        return self.env.now

    def register(self, name: str, profile: LinkProfile | None = None) -> SimNode:
        if name not in self.nodes:
            self.nodes[name] = SimNode(self.env, name, profile or self.default, self.cpu_rate)
        elif profile is not None:
            self.nodes[name].profile = profile
        return self.nodes[name]

    def node(self, name: str) -> SimNode:
        try:
            return self.nodes[name]
        except KeyError:
            raise UnknownEndpoint(name) from None

    def shape(self, name: str, profile: LinkProfile):
        """Apply ``profile`` to every link touching ``name`` from now on."""
        self.node(name).profile = profile

    def link_profile(self, a: str, b: str) -> LinkProfile:
        pa, pb = self.node(a).profile, self.node(b).profile
        slow = pb if pb.base_latency > pa.base_latency else pa
        return LinkProfile(min(pa.bandwidth, pb.bandwidth), slow.base_latency, slow.latency_jitter)

    def open_stream(self, src: str, dst: str, role: StreamRole = StreamRole.FORWARD_X,
                    window: int = 4, flow: FlowControl | None = None) -> SimStream:
        if flow is None:
            flow = DEFAULT_FLOW[StreamRole(role)]
        return SimStream(self, self.node(src), self.node(dst), role, window, flow)

    def compute(self, name: str, nbytes: int):
        """Process generator: occupy the node CPU for ``nbytes`` of multiply-accumulate work."""
        node = self.node(name)
        if not node.cpu_rate or nbytes <= 0:
            return
        with node.cpu.request() as req:
            yield req
            yield self.env.timeout(nbytes / node.cpu_rate)

    def account(self, stream: SimStream, frame: ChunkFrame):
        self.traffic.payload[stream.role] += len(frame.payload)
        self.traffic.frames[stream.role] += 1
        self.traffic.framing += len(frame) - len(frame.payload)
        if self.captured is not None:
            self.captured.append((stream.src.name, stream.dst.name, frame.encode()))

    def log(self, *event):
        if self.trace is not None:
            self.trace.append((self.env.now,) + event)

    def run(self, until=None):
        return self.env.run(until=until)
