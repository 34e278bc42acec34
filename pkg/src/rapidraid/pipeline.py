"""Pipelined RapidRAID encoding across a chain of n nodes.

Node i receives the running combination x_{i-1,i} from its predecessor, adds
its locally stored symbols scaled by psi to forward x_{i,i+1}, and at the
same time adds them scaled by xi to produce its own coded block c_i. Nothing
but x travels between nodes; source data never leaves the node storing it.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .codespec import RAPIDRAID, CodeSpec
from .galois import GaloisField, field as gf_field
from .jobs import (
    DEFAULT_CHUNK,
    EncodeAborted,
    EncodeResult,
    MemorySink,
    NodeFailure,
    split_chunks,
)
from .transport.frames import ChunkFrame, StreamRole
from .transport.sim import SimNetwork, TransportError
from .transport.sockets import SocketNetwork

DEFAULT_WINDOW = 4


class ChunkMismatch(ValueError):
    pass


@dataclass
class PipelineNodeState:
    index: int
    n: int
    gf: GaloisField
    local: list[np.ndarray]  # word arrays, one per stored slot
    psi: tuple[int, ...]
    xi: tuple[int, ...]
    chunks: list[tuple[int, int]]  # word ranges
    cursor: int = 0
    output: list[np.ndarray] = field(default_factory=list)

    @property
    def is_head(self) -> bool:
        return self.index == 0

    @property
    def is_tail(self) -> bool:
        return self.index == self.n - 1

    @property
    def done(self) -> bool:
        return self.cursor == len(self.chunks)

    def mul_acc_bytes(self, chunk_len: int) -> int:
        """Multiply-accumulate work for one chunk, in bytes processed."""
        return (len(self.psi) + len(self.xi)) * chunk_len

    def output_block(self) -> bytes:
        if not self.output:
            return b""
        return np.concatenate(self.output).tobytes()


def node_state(spec: CodeSpec, node: int, local_blocks: Sequence[bytes],
               chunk_size: int = DEFAULT_CHUNK) -> PipelineNodeState:
    if spec.kind != RAPIDRAID:
        raise ValueError("pipelined encoding needs a rapidraid code")
    params, layout, coeffs = spec.params, spec.layout, spec.coefficients
    gf = gf_field(params.field)
    slots = layout[node]
    if len(local_blocks) != len(slots):
        raise ValueError(f"node {node + 1} stores {len(slots)} symbols, got {len(local_blocks)} blocks")
    words = [gf.as_words(b) for b in local_blocks]
    if len({w.size for w in words}) != 1:
        raise ValueError(f"node {node + 1}: local blocks differ in length")
    wb = params.field.word_bytes
    chunks = [(a // wb, b // wb) for a, b in split_chunks(words[0].size * wb, chunk_size, wb)]
    return PipelineNodeState(node, params.n, gf, words, coeffs.psi[node], coeffs.xi[node], chunks)


def node_step(state: PipelineNodeState, incoming) -> tuple[bytes | None, bytes]:
    """Advance one chunk: return (forward chunk or None at the tail, output chunk)."""
    if state.done:
        raise ChunkMismatch(f"node {state.index + 1} already processed every chunk")
    a, b = state.chunks[state.cursor]
    gf = state.gf
    if incoming is None:
        if not state.is_head:
            raise ChunkMismatch(f"node {state.index + 1} needs an incoming chunk")
        x = np.zeros(b - a, dtype=gf.spec.dtype)
    else:
        try:
            x = gf.as_words(incoming)
        except ValueError as e:
            raise ChunkMismatch(str(e)) from None
        if x.size != b - a:
            raise ChunkMismatch(
                f"node {state.index + 1} chunk {state.cursor}: got {x.size} words, expected {b - a}"
            )
    out = x.copy()
    fwd = None if state.is_tail else x.copy()
    for s, local in enumerate(state.local):
        piece = local[a:b]
        out ^= gf.mul_words(state.xi[s], piece)
        if fwd is not None:
            fwd ^= gf.mul_words(state.psi[s], piece)
    state.output.append(out)
    state.cursor += 1
    return (None if fwd is None else fwd.tobytes()), out.tobytes()


@dataclass
class PipelineJob:
    spec: CodeSpec
    endpoints: list[str]
    local_blocks: list[list[bytes]]  # per node, per stored slot
    object_id: bytes
    chunk_size: int = DEFAULT_CHUNK
    window: int = DEFAULT_WINDOW
    fail_at: tuple[int, int] | None = None  # (node, chunk) fault injection

    def __post_init__(self):
        n = self.spec.params.n
        if len(self.endpoints) != n:
            raise ValueError(f"need {n} endpoints, got {len(self.endpoints)}")
        if len(self.local_blocks) != n:
            raise ValueError(f"need local blocks for {n} nodes, got {len(self.local_blocks)}")

    @classmethod
    def from_object(cls, spec: CodeSpec, blocks: Sequence[bytes], endpoints: list[str] | None = None,
                    object_id: bytes = bytes(16), **kw) -> PipelineJob:
        """Stage the two replicas of ``blocks`` according to the code's placement."""
        layout = spec.layout
        if endpoints is None:
            endpoints = [f"node{i + 1}" for i in range(spec.params.n)]
        local = [[blocks[j] for j in layout[i]] for i in range(spec.params.n)]
        return cls(spec, endpoints, local, object_id, **kw)


def _check_fault(job: PipelineJob, node: int, t: int):
    if job.fail_at == (node, t):
        raise NodeFailure(f"injected failure at node {node + 1}, chunk {t}")


def pipeline_process(job: PipelineJob, net: SimNetwork, sink=None):
    """Simpy process generator running ``job`` on ``net``; its value is an EncodeResult."""
    env = net.env
    sink = sink if sink is not None else MemorySink()
    n = job.spec.params.n
    eps = job.endpoints
    for ep in eps:
        net.register(ep)
    start = env.now
    states = [node_state(job.spec, i, job.local_blocks[i], job.chunk_size) for i in range(n)]
    streams = [net.open_stream(eps[i], eps[i + 1], StreamRole.FORWARD_X, job.window) for i in range(n - 1)]
    failures: list[tuple[int, BaseException]] = []
    persisted: dict[int, bytes] = {}
    finished: dict[int, float] = {}

    def run_node(i):
        st = states[i]
        inbound = streams[i - 1] if i > 0 else None
        outbound = streams[i] if i < n - 1 else None
        try:
            for t in range(len(st.chunks)):
                incoming = None
                if inbound is not None:
                    frame = yield from inbound.recv()
                    if frame.seq != t:
                        raise TransportError(f"node {i + 1} expected chunk {t}, got {frame.seq}")
                    incoming = frame.payload
                    net.log(i, "recv", t)
                _check_fault(job, i, t)
                a, b = st.chunks[t]
                yield from net.compute(eps[i], st.mul_acc_bytes((b - a) * st.gf.spec.word_bytes))
                fwd, _ = node_step(st, incoming)
                net.log(i, "emit", t)
                if inbound is not None:
                    inbound.consumed()
                if outbound is not None:
                    yield from outbound.send(ChunkFrame(job.object_id, StreamRole.FORWARD_X, i, t, fwd))
            data = st.output_block()
            sink.persist(eps[i], i, data)
            persisted[i] = data
            finished[i] = env.now
        except (NodeFailure, TransportError, ChunkMismatch) as e:
            failures.append((i, e))
            for s in (inbound, outbound):
                if s is not None:
                    s.fail(e)

    procs = [env.process(run_node(i)) for i in range(n)]
    yield env.all_of(procs)
    payload = sum(s.payload_bytes for s in streams)
    frames = sum(s.frames for s in streams)
    if failures:
        for i in persisted:
            sink.discard(eps[i], i)
        first = failures[0]
        raise EncodeAborted(f"pipeline aborted at node {first[0] + 1}: {first[1]}", failures)
    return EncodeResult(persisted, start, env.now, payload, frames, finished)


def run_pipeline(job: PipelineJob, net: SimNetwork | None = None, sink=None) -> EncodeResult:
    """Run one pipelined encode to completion on a (fresh by default) simulated network."""
    net = net if net is not None else SimNetwork()
    proc = net.env.process(pipeline_process(job, net, sink))
    net.run(until=proc)
    return proc.value


def run_pipeline_sockets(job: PipelineJob, net: SocketNetwork, sink=None) -> EncodeResult:
    """Run the same node state machines as threads talking over TCP."""
    import time

    sink = sink if sink is not None else MemorySink()
    n = job.spec.params.n
    eps = job.endpoints
    for ep in eps:
        net.register(ep)
    states = [node_state(job.spec, i, job.local_blocks[i], job.chunk_size) for i in range(n)]
    streams = [net.open_stream(eps[i], eps[i + 1], StreamRole.FORWARD_X, job.object_id, i) for i in range(n - 1)]
    failures: list[tuple[int, BaseException]] = []
    persisted: dict[int, bytes] = {}
    lock = threading.Lock()

    def run_node(i):
        st = states[i]
        inbound = streams[i - 1] if i > 0 else None
        outbound = streams[i] if i < n - 1 else None
        try:
            for t in range(len(st.chunks)):
                incoming = None
                if inbound is not None:
                    frame = inbound.recv()
                    if frame.seq != t:
                        raise TransportError(f"node {i + 1} expected chunk {t}, got {frame.seq}")
                    incoming = frame.payload
                _check_fault(job, i, t)
                fwd, _ = node_step(st, incoming)
                if outbound is not None:
                    outbound.send(ChunkFrame(job.object_id, StreamRole.FORWARD_X, i, t, fwd))
            with lock:
                persisted[i] = st.output_block()
                sink.persist(eps[i], i, persisted[i])
        except (NodeFailure, TransportError, ChunkMismatch, OSError) as e:
            with lock:
                failures.append((i, e))
        finally:
            if outbound is not None:
                outbound.close()

    start = time.monotonic()
    threads = [threading.Thread(target=run_node, args=(i,), name=f"pipe-{eps[i]}") for i in range(n)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if failures:
        for i in persisted:
            sink.discard(eps[i], i)
        first = failures[0]
        raise EncodeAborted(f"pipeline aborted at node {first[0] + 1}: {first[1]}", failures)
    return EncodeResult(persisted, start, time.monotonic(),
                        sum(s.payload_bytes for s in streams), sum(s.frames for s in streams))
