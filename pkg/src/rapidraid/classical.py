"""Baseline atomic encoder: one coordinator pulls k source blocks and pushes m parities."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .codespec import CodeParams, GeneratorMatrix, cauchy_generator
from .galois import field as gf_field
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

PARITY_WINDOW = 1  # one output buffer per sink, freed on acknowledgment


@dataclass
class ClassicalEncodeJob:
    params: CodeParams
    sources: list[str]  # k endpoints, source i holds block i
    sinks: list[str]  # m endpoints, sink r receives parity r
    coordinator: str
    blocks: list[bytes]  # block i is the content stored at sources[i]
    object_id: bytes = bytes(16)
    chunk_size: int = DEFAULT_CHUNK
    generator: GeneratorMatrix | None = None
    fail_at: tuple[str, int] | None = None  # (endpoint, chunk) fault injection

    def __post_init__(self):
        p = self.params
        if self.generator is None:
            self.generator = cauchy_generator(p)
        if not self.generator.is_systematic():
            raise ValueError("classical encoding needs a systematic generator")
        if (self.generator.n, self.generator.k) != (p.n, p.k):
            raise ValueError("generator shape does not match the code parameters")
        if len(self.sources) != p.k or len(self.blocks) != p.k:
            raise ValueError(f"need {p.k} sources and blocks")
        if len(self.sinks) != p.m:
            raise ValueError(f"need {p.m} parity sinks, got {len(self.sinks)}")
        if len({len(b) for b in self.blocks}) != 1:
            raise ValueError("source blocks differ in length")
        wb = p.field.word_bytes
        if self.chunk_size % wb:
            raise ValueError(f"chunk size must be a multiple of {wb} bytes")
        self.chunks = split_chunks(len(self.blocks[0]), self.chunk_size, wb)

    @classmethod
    def from_object(cls, params: CodeParams, blocks: Sequence[bytes], endpoints: list[str] | None = None,
                    coordinator: str = "coordinator", colocate: bool = False, **kw) -> ClassicalEncodeJob:
        """Sources are nodes 1..k, sinks nodes k+1..n; ``colocate`` runs the coordinator on source 1."""
        if endpoints is None:
            endpoints = [f"node{i + 1}" for i in range(params.n)]
        if colocate:
            coordinator = endpoints[0]
        return cls(params, endpoints[:params.k], endpoints[params.k:], coordinator, list(blocks), **kw)

    @property
    def parity_rows(self) -> list[tuple[int, ...]]:
        return [self.generator[self.params.k + r] for r in range(self.params.m)]

    def block_size(self) -> int:
        return len(self.blocks[0])


def _check_fault(job: ClassicalEncodeJob, endpoint: str, t: int):
    if job.fail_at == (endpoint, t):
        raise NodeFailure(f"injected failure at {endpoint}, chunk {t}")


def encode_chunk(gf, rows, inputs: list[np.ndarray]) -> list[np.ndarray]:
    out = []
    for row in rows:
        acc = np.zeros_like(inputs[0])
        for coef, w in zip(row, inputs):
            if coef:
                acc ^= gf.mul_words(coef, w)
        out.append(acc)
    return out


def _persist_systematic(job: ClassicalEncodeJob, sink):
    # systematic blocks are the sources themselves, written where they already live
    for i, ep in enumerate(job.sources):
        sink.persist(ep, i, job.blocks[i])


def encode_process(job: ClassicalEncodeJob, net: SimNetwork, sink=None):
    """Simpy process generator for one atomic encode; its value is an EncodeResult."""
    env = net.env
    sink = sink if sink is not None else MemorySink()
    p = job.params
    gf = gf_field(p.field)
    coord = job.coordinator
    for ep in [*job.sources, *job.sinks]:
        net.node(ep)  # unreachable endpoints fail before anything is sent
    net.register(coord)
    start = env.now
    failures: list[tuple[str, BaseException]] = []
    persisted: dict[int, tuple[str, bytes]] = {}
    finished: dict[int, float] = {}

    pulls = {}
    for i, ep in enumerate(job.sources):
        if ep != coord:
            pulls[i] = net.open_stream(ep, coord, StreamRole.SOURCE_PULL, window=1)
    pushes = {}
    for r, ep in enumerate(job.sinks):
        if ep != coord:
            pushes[r] = net.open_stream(coord, ep, StreamRole.PARITY_PUSH, window=PARITY_WINDOW)
    streams = [*pulls.values(), *pushes.values()]

    def abort(who, exc):
        failures.append((who, exc))
        for s in streams:
            s.fail(exc)

    def source(i):
        ep, data, s = job.sources[i], job.blocks[i], pulls[i]
        try:
            for t, (a, b) in enumerate(job.chunks):
                _check_fault(job, ep, t)
                yield from s.send(ChunkFrame(job.object_id, StreamRole.SOURCE_PULL, i, t, data[a:b]))
        except (NodeFailure, TransportError) as e:
            abort(ep, e)

    def parity_sink(r):
        ep, s = job.sinks[r], pushes[r]
        parts = []
        try:
            for t in range(len(job.chunks)):
                frame = yield from s.recv()
                _check_fault(job, ep, t)
                parts.append(frame.payload)
                s.consumed()
        except (NodeFailure, TransportError) as e:
            abort(ep, e)
            return
        persisted[p.k + r] = (ep, b"".join(parts))
        sink.persist(ep, p.k + r, persisted[p.k + r][1])
        finished[p.k + r] = env.now

    def upload(r, t, payload):
        try:
            yield from pushes[r].send(ChunkFrame(job.object_id, StreamRole.PARITY_PUSH, r, t, payload))
        except TransportError as e:
            abort(coord, e)

    def coordinator():
        local = {r: [] for r in range(p.m) if r not in pushes}
        pending = []
        try:
            for t, (a, b) in enumerate(job.chunks):
                inputs = []
                for i in range(p.k):
                    if i in pulls:
                        frame = yield from pulls[i].recv()
                        if frame.seq != t:
                            raise TransportError(f"source {i + 1}: expected chunk {t}, got {frame.seq}")
                        inputs.append(gf.as_words(frame.payload))
                    else:
                        inputs.append(gf.as_words(job.blocks[i][a:b]))
                _check_fault(job, coord, t)
                yield from net.compute(coord, p.k * p.m * (b - a))
                parity = encode_chunk(gf, job.parity_rows, inputs)
                net.log(coord, "encode", t)
                for s in pulls.values():
                    s.consumed()
                # the m output buffers are reused: previous uploads must be done
                if pending:
                    yield env.all_of(pending)
                pending = []
                for r, words in enumerate(parity):
                    if r in pushes:
                        pending.append(env.process(upload(r, t, words.tobytes())))
                    else:
                        local[r].append(words.tobytes())
            if pending:
                yield env.all_of(pending)
        except (NodeFailure, TransportError) as e:
            abort(coord, e)
            return
        for r, parts in local.items():
            persisted[p.k + r] = (coord, b"".join(parts))
            sink.persist(coord, p.k + r, persisted[p.k + r][1])
            finished[p.k + r] = env.now

    procs = [env.process(source(i)) for i in pulls]
    procs += [env.process(parity_sink(r)) for r in pushes]
    procs.append(env.process(coordinator()))
    yield env.all_of(procs)
    if failures:
        for idx, (ep, _) in persisted.items():
            sink.discard(ep, idx)
        raise EncodeAborted(f"classical encode aborted at {failures[0][0]}: {failures[0][1]}", failures)
    _persist_systematic(job, sink)
    blocks = {i: job.blocks[i] for i in range(p.k)}
    blocks.update({idx: data for idx, (_, data) in persisted.items()})
    return EncodeResult(blocks, start, env.now, sum(s.payload_bytes for s in streams),
                        sum(s.frames for s in streams), finished)


def encode_atomic(job: ClassicalEncodeJob, net: SimNetwork | None = None, sink=None) -> EncodeResult:
    """Run one atomic encode on a simulated network (fresh by default)."""
    if net is None:
        net = SimNetwork()
        for ep in [*job.sources, *job.sinks]:
            net.register(ep)
    proc = net.env.process(encode_process(job, net, sink))
    net.run(until=proc)
    return proc.value


def encode_atomic_sockets(job: ClassicalEncodeJob, net: SocketNetwork, sink=None) -> EncodeResult:
    """The same coordinator over TCP, each role on its own thread."""
    sink = sink if sink is not None else MemorySink()
    p = job.params
    gf = gf_field(p.field)
    coord = job.coordinator
    for ep in [*job.sources, *job.sinks, coord]:
        net.register(ep)
    pulls = {i: net.open_stream(ep, coord, StreamRole.SOURCE_PULL, job.object_id, i)
             for i, ep in enumerate(job.sources) if ep != coord}
    pushes = {r: net.open_stream(coord, ep, StreamRole.PARITY_PUSH, job.object_id, r)
              for r, ep in enumerate(job.sinks) if ep != coord}
    failures: list[tuple[str, BaseException]] = []
    persisted: dict[int, tuple[str, bytes]] = {}
    lock = threading.Lock()

    def fail(who, e):
        with lock:
            failures.append((who, e))

    def source(i):
        ep = job.sources[i]
        try:
            for t, (a, b) in enumerate(job.chunks):
                _check_fault(job, ep, t)
                pulls[i].send(ChunkFrame(job.object_id, StreamRole.SOURCE_PULL, i, t, job.blocks[i][a:b]))
        except (NodeFailure, TransportError, OSError) as e:
            fail(ep, e)
        finally:
            pulls[i].close()

    def parity_sink(r):
        ep = job.sinks[r]
        try:
            parts = []
            for t in range(len(job.chunks)):
                parts.append(pushes[r].recv().payload)
                _check_fault(job, ep, t)
        except (NodeFailure, TransportError, OSError) as e:
            fail(ep, e)
            return
        with lock:
            persisted[p.k + r] = (ep, b"".join(parts))
            sink.persist(ep, p.k + r, persisted[p.k + r][1])

    def coordinator():
        local = {r: [] for r in range(p.m) if r not in pushes}
        try:
            for t, (a, b) in enumerate(job.chunks):
                inputs = []
                for i in range(p.k):
                    if i in pulls:
                        frame = pulls[i].recv()
                        if frame.seq != t:
                            raise TransportError(f"source {i + 1}: expected chunk {t}, got {frame.seq}")
                        inputs.append(gf.as_words(frame.payload))
                    else:
                        inputs.append(gf.as_words(job.blocks[i][a:b]))
                _check_fault(job, coord, t)
                for r, words in enumerate(encode_chunk(gf, job.parity_rows, inputs)):
                    if r in pushes:
                        pushes[r].send(ChunkFrame(job.object_id, StreamRole.PARITY_PUSH, r, t, words.tobytes()))
                    else:
                        local[r].append(words.tobytes())
        except (NodeFailure, TransportError, OSError) as e:
            fail(coord, e)
            return
        finally:
            for s in pushes.values():
                s.close()
        with lock:
            for r, parts in local.items():
                persisted[p.k + r] = (coord, b"".join(parts))
                sink.persist(coord, p.k + r, persisted[p.k + r][1])

    start = time.monotonic()
    threads = [threading.Thread(target=source, args=(i,)) for i in pulls]
    threads += [threading.Thread(target=parity_sink, args=(r,)) for r in pushes]
    threads.append(threading.Thread(target=coordinator))
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if failures:
        for idx, (ep, _) in persisted.items():
            sink.discard(ep, idx)
        raise EncodeAborted(f"classical encode aborted at {failures[0][0]}: {failures[0][1]}", failures)
    _persist_systematic(job, sink)
    blocks = {i: job.blocks[i] for i in range(p.k)}
    blocks.update({idx: data for idx, (_, data) in persisted.items()})
    streams = [*pulls.values(), *pushes.values()]
    return EncodeResult(blocks, start, time.monotonic(), sum(s.payload_bytes for s in streams),
                        sum(s.frames for s in streams))
