"""Archival flow on a BlockStore: stage two replicas, encode, reduce to one replica."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

from .blockstore import (
    ArchivalState,
    Block,
    BlockCorruption,
    BlockNotFound,
    BlockRole,
    BlockStore,
    ObjectManifest,
    StoreError,
    StoreSink,
    transition,
)
from .classical import ClassicalEncodeJob, encode_atomic, encode_atomic_sockets
from .codespec import CLASSICAL, CodeSpec
from .decoder import reconstruct
from .jobs import DEFAULT_CHUNK, EncodeAborted, EncodeResult
from .pipeline import PipelineJob, run_pipeline, run_pipeline_sockets
from .transport.sim import SimNetwork
from .transport.sockets import SocketNetwork


def split_object(data: bytes, k: int, word_bytes: int) -> tuple[list[bytes], int]:
    """Zero-pad ``data`` into k equal word-aligned blocks; returns (blocks, block_size)."""
    if not data:
        raise ValueError("cannot encode an empty object")
    unit = k * word_bytes
    padded = data + bytes(-len(data) % unit)
    size = len(padded) // k
    return [padded[j * size:(j + 1) * size] for j in range(k)], size


def object_id_for(data: bytes, spec: CodeSpec) -> bytes:
    return hashlib.sha256(spec.digest() + data).digest()[:16]


def stage_object(store: BlockStore, data: bytes, spec: CodeSpec, nodes: Sequence[str]) -> ObjectManifest:
    """Write both replicas of every source block per the placement and record the manifest."""
    p = spec.params
    if len(nodes) < p.n:
        raise ValueError(f"a ({p.n},{p.k}) code needs {p.n} nodes, got {len(nodes)}")
    nodes = list(nodes[:p.n])
    blocks, size = split_object(data, p.k, p.field.word_bytes)
    oid = object_id_for(data, spec)
    layout = spec.layout
    replica1, replica2 = [None] * p.k, [None] * p.k
    for i in range(p.n):
        for slot, j in enumerate(layout[i]):
            r = layout.replica(i, slot)
            (replica1 if r == 1 else replica2)[j] = nodes[i]
            store.put_block(nodes[i], Block(oid, j, BlockRole.SOURCE, p.field, spec.digest(), blocks[j], r))
    manifest = ObjectManifest(oid, p.n, p.k, size, len(data), spec.to_text(),
                              tuple(replica1), tuple(replica2), tuple(nodes))
    store.save_manifest(manifest)
    return manifest


def _source(store: BlockStore, manifest: ObjectManifest, j: int, replica: int) -> bytes:
    node = (manifest.replica1 if replica == 1 else manifest.replica2)[j]
    return store.get_block(node, manifest.object_id, j, BlockRole.SOURCE, replica).payload


@dataclass
class EncodeOutcome:
    manifest: ObjectManifest
    result: EncodeResult
    engine: str


def encode_object(store: BlockStore, manifest: ObjectManifest, chunk_size: int = DEFAULT_CHUNK,
                  net: SimNetwork | SocketNetwork | None = None, colocate: bool = False,
                  fail_at=None) -> EncodeOutcome:
    """Encode a replicated object in place and archive it.

    On failure the manifest goes back to ``replicated`` with both replicas
    untouched, and EncodeAborted propagates.
    """
    spec = CodeSpec.from_text(manifest.code)
    p = spec.params
    manifest = transition(store, manifest, ArchivalState.ENCODING)
    sink = StoreSink(store, manifest.object_id, p.field, spec.digest())
    sockets = isinstance(net, SocketNetwork)
    try:
        if spec.kind == CLASSICAL:
            blocks = [_source(store, manifest, j, 1) for j in range(p.k)]
            job = ClassicalEncodeJob(p, list(manifest.coded[:p.k]), list(manifest.coded[p.k:]),
                                     manifest.coded[0] if colocate else "coordinator", blocks,
                                     manifest.object_id, chunk_size, spec.generator, fail_at)
            if net is None:
                net = SimNetwork()
            for node in manifest.coded:
                net.register(node)
            result = encode_atomic_sockets(job, net, sink) if sockets else encode_atomic(job, net, sink)
        else:
            layout = spec.layout
            local = []
            for i in range(p.n):
                local.append([_source(store, manifest, j, layout.replica(i, slot))
                              for slot, j in enumerate(layout[i])])
            job = PipelineJob(spec, list(manifest.coded), local, manifest.object_id, chunk_size,
                              fail_at=fail_at)
            if sockets:
                for node in manifest.coded:
                    net.register(node)
                result = run_pipeline_sockets(job, net, sink)
            else:
                result = run_pipeline(job, net, sink)
    except (EncodeAborted, StoreError):
        for node, index in list(sink.written):
            sink.discard(node, index)
        transition(store, manifest, ArchivalState.REPLICATED)
        raise
    manifest = transition(store, manifest, ArchivalState.ARCHIVED)
    return EncodeOutcome(manifest, result, spec.kind)


def read_object(store: BlockStore, object_id: bytes) -> bytes:
    """Return the original bytes, decoding from coded blocks if the object is archived."""
    manifest = store.load_manifest(object_id)
    if manifest.state == ArchivalState.ARCHIVED:
        spec = CodeSpec.from_text(manifest.code)
        available = {}
        for i, node in enumerate(manifest.coded):
            try:
                available[i] = store.get_block(node, object_id, i).payload
            except (BlockNotFound, BlockCorruption):
                continue
        blocks = reconstruct(spec.generator, available)
    else:
        blocks = []
        for j in range(manifest.k):
            try:
                blocks.append(_source(store, manifest, j, 1))
            except (BlockNotFound, BlockCorruption):
                blocks.append(_source(store, manifest, j, 2))
    return b"".join(blocks)[:manifest.length]
