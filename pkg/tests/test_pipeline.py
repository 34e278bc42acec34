import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rapidraid.codespec import CodeParams, classical_spec, rapidraid_spec
from rapidraid.galois import GF8, GF16
from rapidraid.jobs import EncodeAborted, MemorySink
from rapidraid.pipeline import (
    ChunkMismatch,
    PipelineJob,
    node_state,
    node_step,
    run_pipeline,
    run_pipeline_sockets,
)
from rapidraid.transport import SimNetwork, SocketNetwork, StreamRole
from rapidraid.transport.frames import ChunkFrame

import oracles


def _object(k, size, seed):
    rng = random.Random(seed)
    return [rng.randbytes(size) for _ in range(k)]


def _offline(spec, blocks):
    rows = [list(r) for r in spec.generator.rows]
    return oracles.matvec_blocks(rows, blocks, spec.params.field.reduction_polynomial)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 8), st.data())
def test_state_machine_chain_matches_generator(k, data):
    n = data.draw(st.integers(k, min(2 * k, 12)))
    fs = data.draw(st.sampled_from([GF8, GF16]))
    spec = rapidraid_spec(CodeParams(n, k, fs), seed=data.draw(st.integers(0, 1000)))
    words = data.draw(st.integers(1, 20))
    chunk = data.draw(st.integers(1, 8)) * fs.word_bytes
    blocks = _object(k, words * fs.word_bytes, data.draw(st.integers(0, 1000)))
    states = [node_state(spec, i, [blocks[j] for j in spec.layout[i]], chunk) for i in range(n)]
    for _ in states[0].chunks:
        x = None
        for s in states:
            x, _ = node_step(s, x)
    assert [s.output_block() for s in states] == spec.generator.encode(blocks)


def test_node_step_rejects_wrong_sizes():
    spec = rapidraid_spec(CodeParams(6, 4), seed=0)
    blocks = _object(4, 16, 0)
    head = node_state(spec, 0, [blocks[0]], 8)
    second = node_state(spec, 1, [blocks[1]], 8)
    with pytest.raises(ChunkMismatch):
        node_step(second, None)
    with pytest.raises(ChunkMismatch):
        node_step(second, b"\x00" * 6)
    node_step(head, None)
    node_step(head, None)
    with pytest.raises(ChunkMismatch):
        node_step(head, None)


def test_node_state_needs_rapidraid_code():
    with pytest.raises(ValueError):
        node_state(classical_spec(CodeParams(6, 4)), 0, [b"ab"])


def test_node_state_checks_slot_count():
    spec = rapidraid_spec(CodeParams(6, 4), seed=0)
    with pytest.raises(ValueError):
        node_state(spec, 2, [b"abcd"])


@pytest.mark.parametrize("chunk", [2, 4096, 65536, 1024])
def test_sim_pipeline_is_bit_exact(chunk):
    spec = rapidraid_spec(CodeParams(16, 11), seed=4)
    blocks = _object(11, 3000, chunk)
    result = run_pipeline(PipelineJob.from_object(spec, blocks, chunk_size=chunk))
    assert result.codeword() == _offline(spec, blocks)


def test_pipeline_traffic_is_n_minus_one_blocks():
    spec = rapidraid_spec(CodeParams(16, 11), seed=0)
    size = 8192
    net = SimNetwork()
    result = run_pipeline(PipelineJob.from_object(spec, _object(11, size, 1), chunk_size=1024), net)
    assert result.payload_bytes == 15 * size
    assert net.traffic.payload == {StreamRole.FORWARD_X: 15 * size}
    assert result.frames == 15 * 8


def test_pipeline_trace_orders_chunks():
    spec = rapidraid_spec(CodeParams(6, 4), seed=0)
    net = SimNetwork(trace=True)
    run_pipeline(PipelineJob.from_object(spec, _object(4, 64, 2), chunk_size=16), net)
    assert net.trace, "tracing was requested"
    times = [t for t, *_ in net.trace]
    assert times == sorted(times)


def test_pipeline_is_deterministic():
    spec = rapidraid_spec(CodeParams(16, 11), seed=0)
    blocks = _object(11, 4096, 3)
    runs = [run_pipeline(PipelineJob.from_object(spec, blocks, chunk_size=512), SimNetwork(seed=5)) for _ in range(2)]
    assert runs[0].elapsed == runs[1].elapsed
    assert runs[0].block_finish == runs[1].block_finish


def test_injected_failure_aborts_and_discards():
    spec = rapidraid_spec(CodeParams(8, 4), seed=0)
    sink = MemorySink()
    job = PipelineJob.from_object(spec, _object(4, 256, 4), chunk_size=32, fail_at=(3, 2))
    with pytest.raises(EncodeAborted) as err:
        run_pipeline(job, sink=sink)
    assert "node 4" in str(err.value)
    assert sink.blocks == {}


def test_job_shape_checks():
    spec = rapidraid_spec(CodeParams(6, 4), seed=0)
    with pytest.raises(ValueError):
        PipelineJob(spec, ["a"] * 5, [[b""]] * 6, bytes(16))


def test_socket_pipeline_matches_sim():
    spec = rapidraid_spec(CodeParams(8, 4), seed=2)
    blocks = _object(4, 4000, 5)
    with SocketNetwork(capture=True) as net:
        result = run_pipeline_sockets(PipelineJob.from_object(spec, blocks, chunk_size=512), net)
        frames = [ChunkFrame.decode(raw) for _, _, raw in net.captured]
    assert result.codeword() == _offline(spec, blocks)
    assert sum(len(f.payload) for f in frames) == 7 * 4000
    assert {f.role for f in frames} == {StreamRole.FORWARD_X}


def test_socket_pipeline_failure():
    spec = rapidraid_spec(CodeParams(6, 4), seed=2)
    sink = MemorySink()
    with SocketNetwork() as net:
        job = PipelineJob.from_object(spec, _object(4, 256, 6), chunk_size=64, fail_at=(2, 1))
        with pytest.raises(EncodeAborted):
            run_pipeline_sockets(job, net, sink)
    assert sink.blocks == {}
