import random

import crc32c
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rapidraid.archive import encode_object, read_object, split_object, stage_object
from rapidraid.blockstore import (
    HEADER_SIZE,
    ArchivalState,
    Block,
    BlockCorruption,
    BlockNotFound,
    BlockRole,
    BlockStore,
    ObjectManifest,
    StoreError,
    TransitionError,
    transition,
    verify_coded,
)
from rapidraid.codespec import CodeParams, classical_spec, rapidraid_spec
from rapidraid.galois import GF8, GF16
from rapidraid.jobs import EncodeAborted
from rapidraid.transport import SocketNetwork

NODES = [f"node{i + 1:02d}" for i in range(16)]
OID = bytes(range(16))
DIGEST = bytes(16)


def _data(size, seed=0):
    return random.Random(seed).randbytes(size)


def test_crc32c_check_value():
    assert crc32c.crc32c(b"123456789") == 0xE3069283


@given(st.binary(max_size=100), st.integers(0, 65535), st.sampled_from([GF8, GF16]))
def test_block_round_trip(payload, index, fs):
    block = Block(OID, index, BlockRole.CODED, fs, DIGEST, payload)
    raw = block.encode()
    assert len(raw) == HEADER_SIZE + len(payload)
    assert Block.decode(raw) == block


def test_block_header_is_64_bytes():
    raw = Block(OID, 2, BlockRole.SOURCE, GF16, DIGEST, b"abcd", replica=2).encode()
    assert HEADER_SIZE == 64
    assert raw[:8] == b"RRBK\x01\x01\x10\x00"
    assert raw[8:12] == (0x1100B).to_bytes(4, "big")


@settings(max_examples=50)
@given(st.integers(0, HEADER_SIZE + 15))
def test_any_flipped_byte_is_detected(pos):
    raw = bytearray(Block(OID, 1, BlockRole.CODED, GF8, DIGEST, bytes(range(16))).encode())
    raw[pos] ^= 0x40
    try:
        decoded = Block.decode(bytes(raw))
    except BlockCorruption:
        return
    # flips in descriptive fields (id, index, digest) decode to a different block
    assert decoded != Block(OID, 1, BlockRole.CODED, GF8, DIGEST, bytes(range(16)))


def test_block_replica_rules():
    with pytest.raises(ValueError):
        Block(OID, 0, BlockRole.SOURCE, GF8, DIGEST, b"")
    with pytest.raises(ValueError):
        Block(OID, 0, BlockRole.CODED, GF8, DIGEST, b"", replica=1)


def test_store_put_get_delete(tmp_path):
    store = BlockStore(tmp_path)
    block = Block(OID, 3, BlockRole.CODED, GF16, DIGEST, b"payload!")
    store.put_block("n1", block)
    assert store.get_block("n1", OID, 3) == block
    assert store.usage() == 8
    assert store.nodes() == ["n1"]
    store.delete_block("n1", OID, 3)
    with pytest.raises(BlockNotFound):
        store.get_block("n1", OID, 3)
    with pytest.raises(BlockNotFound):
        store.delete_block("n1", OID, 3)


def test_store_detects_corruption_on_disk(tmp_path):
    store = BlockStore(tmp_path)
    path = store.put_block("n1", Block(OID, 0, BlockRole.CODED, GF8, DIGEST, b"abcdef"))
    raw = bytearray(path.read_bytes())
    raw[-1] ^= 1
    path.write_bytes(bytes(raw))
    with pytest.raises(BlockCorruption):
        store.get_block("n1", OID, 0)


def test_store_rejects_bad_node_names(tmp_path):
    store = BlockStore(tmp_path)
    for bad in ("", "../x", ".hidden", "manifests"):
        with pytest.raises(StoreError):
            store.path(bad, OID, BlockRole.CODED, 0)


def test_manifest_text_round_trip(tmp_path):
    spec = rapidraid_spec(CodeParams(6, 4), seed=0)
    m = ObjectManifest(OID, 6, 4, 128, 500, spec.to_text(), ("a", "b", "c", "d"),
                       ("c", "d", "e", "f"), tuple("abcdef"))
    assert ObjectManifest.from_text(m.to_text()) == m
    assert m.code_digest == spec.digest()
    with pytest.raises(StoreError):
        ObjectManifest.from_text(m.to_text().replace("k=4\n", ""))
    with pytest.raises(StoreError):
        ObjectManifest.from_text("nonsense")


def test_split_object_pads_to_words():
    blocks, size = split_object(b"x" * 23, 4, 2)
    assert size == 6
    assert b"".join(blocks) == b"x" * 23 + bytes(1)
    with pytest.raises(ValueError):
        split_object(b"", 4, 2)


def test_staging_follows_placement(tmp_path):
    store = BlockStore(tmp_path)
    spec = rapidraid_spec(CodeParams(6, 4), seed=0)
    m = stage_object(store, _data(1000), spec, NODES[:6])
    assert m.replica1 == ("node01", "node02", "node03", "node04")
    assert m.replica2 == ("node03", "node04", "node05", "node06")
    assert store.usage(m.object_id) == 2 * 4 * m.block_size


@pytest.mark.parametrize("kind", ["rapidraid", "classical"])
def test_archive_storage_and_read_back(tmp_path, kind):
    store = BlockStore(tmp_path)
    params = CodeParams(16, 11)
    spec = rapidraid_spec(params, seed=1) if kind == "rapidraid" else classical_spec(params)
    data = _data(50_000, 1)
    m = stage_object(store, data, spec, NODES)
    assert store.usage(m.object_id) == 2 * 11 * m.block_size
    out = encode_object(store, m, chunk_size=1024)
    assert out.manifest.state == ArchivalState.ARCHIVED
    # n coded blocks plus the retained first replica
    assert store.usage(m.object_id) == (16 + 11) * m.block_size
    assert read_object(store, m.object_id) == data
    assert verify_coded(store, out.manifest) == []


def test_read_after_losing_nodes(tmp_path):
    store = BlockStore(tmp_path)
    spec = rapidraid_spec(CodeParams(16, 11), seed=2)
    data = _data(20_000, 2)
    m = encode_object(store, stage_object(store, data, spec, NODES), chunk_size=2048).manifest
    for i in (0, 4, 9, 15, 3):
        store.delete_block(m.coded[i], m.object_id, i)
    assert read_object(store, m.object_id) == data


def test_replicated_read_falls_back_to_second_replica(tmp_path):
    store = BlockStore(tmp_path)
    data = _data(3000, 3)
    m = stage_object(store, data, rapidraid_spec(CodeParams(8, 4), seed=0), NODES[:8])
    store.delete_block(m.replica1[2], m.object_id, 2, BlockRole.SOURCE, 1)
    assert read_object(store, m.object_id) == data


@pytest.mark.parametrize("kind,where", [("rapidraid", (5, 1)), ("classical", ("node14", 1))])
def test_failed_encode_rolls_back(tmp_path, kind, where):
    store = BlockStore(tmp_path)
    params = CodeParams(16, 11)
    spec = rapidraid_spec(params, seed=0) if kind == "rapidraid" else classical_spec(params)
    m = stage_object(store, _data(20_000, 4), spec, NODES)
    before = store.usage(m.object_id)
    with pytest.raises(EncodeAborted):
        encode_object(store, m, chunk_size=512, fail_at=where)
    back = store.load_manifest(m.object_id)
    assert back.state == ArchivalState.REPLICATED
    assert store.usage(m.object_id) == before
    assert not any(store.has_block(node, m.object_id, i) for i, node in enumerate(m.coded))


def test_archive_refused_without_valid_coded_blocks(tmp_path):
    store = BlockStore(tmp_path)
    m = stage_object(store, _data(4000, 5), rapidraid_spec(CodeParams(8, 4), seed=0), NODES[:8])
    enc = transition(store, m, ArchivalState.ENCODING)
    with pytest.raises(TransitionError, match="refused"):
        transition(store, enc, ArchivalState.ARCHIVED)
    # replicas untouched
    assert all(store.has_block(node, m.object_id, j, BlockRole.SOURCE, 2) for j, node in enumerate(m.replica2))


def test_coded_block_from_other_code_fails_verification(tmp_path):
    store = BlockStore(tmp_path)
    spec = rapidraid_spec(CodeParams(8, 4), seed=0)
    m = encode_object(store, stage_object(store, _data(4000, 6), spec, NODES[:8]), chunk_size=256).manifest
    block = store.get_block(m.coded[3], m.object_id, 3)
    store.put_block(m.coded[3], Block(m.object_id, 3, BlockRole.CODED, GF16, bytes(16), block.payload))
    assert verify_coded(store, m) == [3]


@pytest.mark.parametrize("src,dst", [
    (ArchivalState.REPLICATED, ArchivalState.ARCHIVED),
    (ArchivalState.ARCHIVED, ArchivalState.REPLICATED),
    (ArchivalState.ARCHIVED, ArchivalState.ENCODING),
    (ArchivalState.REPLICATED, ArchivalState.REPLICATED),
])
def test_illegal_transitions(tmp_path, src, dst):
    store = BlockStore(tmp_path)
    m = stage_object(store, _data(500, 7), rapidraid_spec(CodeParams(6, 4), seed=0), NODES[:6])
    from dataclasses import replace
    with pytest.raises(TransitionError):
        transition(store, replace(m, state=src), dst)


def test_socket_encode_archives(tmp_path):
    store = BlockStore(tmp_path)
    spec = rapidraid_spec(CodeParams(8, 4), seed=0)
    data = _data(6000, 8)
    m = stage_object(store, data, spec, NODES[:8])
    with SocketNetwork() as net:
        out = encode_object(store, m, chunk_size=512, net=net)
    assert out.manifest.state == ArchivalState.ARCHIVED
    assert read_object(store, m.object_id) == data
