import random
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rapidraid.codespec import CodeParams, classical_spec, rapidraid_spec
from rapidraid.decoder import (
    DecodeError,
    DecodeSet,
    SingularMatrixError,
    decode,
    invert_submatrix,
    matmul,
    rank,
    reconstruct,
    select_subset,
)
from rapidraid.galois import GF8, GF16

import oracles

F16 = oracles.TableField(0x1100B)


def _blocks(k, size, seed):
    rng = random.Random(seed)
    return [rng.randbytes(size) for _ in range(k)]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.randoms(use_true_random=False))
def test_inverse_times_matrix_is_identity(size, rnd):
    m = [[rnd.randrange(65536) for _ in range(size)] for _ in range(size)]
    if oracles.rank(m, F16) < size:
        with pytest.raises(SingularMatrixError):
            invert_submatrix(m, GF16)
        return
    inv = invert_submatrix(m, GF16)
    eye = [[int(i == j) for j in range(size)] for i in range(size)]
    assert matmul(inv, m, GF16) == eye
    assert matmul(m, inv, GF16) == eye


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.randoms(use_true_random=False))
def test_rank_matches_oracle(r, c, rnd):
    # small entries make rank deficiency common
    m = [[rnd.choice([0, 1, 2, 3]) for _ in range(c)] for _ in range(r)]
    assert rank(m, GF16) == oracles.rank(m, F16)


def test_singular_error_names_rows():
    with pytest.raises(SingularMatrixError) as err:
        invert_submatrix([[1, 2], [2, 4]], GF8, labels=(0, 4))
    assert err.value.rows == (0, 4)
    assert "{1,5}" in str(err.value)


def test_non_square_rejected():
    with pytest.raises(DecodeError):
        invert_submatrix([[1, 2]], GF8)


def test_select_subset_skips_dependent_set():
    g = rapidraid_spec(CodeParams(8, 4), seed=0).generator
    # {c1,c2,c5,c6} is dependent, so the next lexicographic subset is chosen
    assert select_subset(g, [0, 1, 4, 5, 6]) == (0, 1, 4, 6)


def test_dependent_set_alone_cannot_decode():
    spec = rapidraid_spec(CodeParams(8, 4), seed=0)
    coded = spec.generator.encode(_blocks(4, 32, 0))
    with pytest.raises(DecodeError):
        reconstruct(spec.generator, {i: coded[i] for i in (0, 1, 4, 5)})


def test_too_few_blocks():
    spec = classical_spec(CodeParams(8, 4))
    coded = spec.generator.encode(_blocks(4, 8, 1))
    with pytest.raises(DecodeError):
        reconstruct(spec.generator, {0: coded[0], 5: coded[5], 7: coded[7]})


def test_systematic_fast_path_returns_sources():
    spec = classical_spec(CodeParams(16, 11))
    src = _blocks(11, 64, 2)
    coded = spec.generator.encode(src)
    assert reconstruct(spec.generator, dict(enumerate(coded))) == src


@pytest.mark.parametrize("kind", ["rapidraid", "classical"])
def test_every_recoverable_8_4_pattern(kind):
    params = CodeParams(8, 4)
    spec = rapidraid_spec(params, seed=5) if kind == "rapidraid" else classical_spec(params)
    src = _blocks(4, 96, 3)
    coded = spec.generator.encode(src)
    rows = [list(r) for r in spec.generator.rows]
    for size in range(4, 9):
        for surv in combinations(range(8), size):
            if oracles.rank([rows[i] for i in surv], F16) < 4:
                continue
            assert reconstruct(spec.generator, {i: coded[i] for i in surv}, chunk_size=32) == src


def test_decode_chunking_does_not_matter():
    spec = rapidraid_spec(CodeParams(16, 11), seed=1)
    src = _blocks(11, 1000, 4)
    coded = spec.generator.encode(src)
    dset = DecodeSet.from_generator(spec.generator, dict(enumerate(coded)), range(5, 16))
    for chunk in (2, 6, 64, 1 << 20):
        assert decode(dset, GF16, chunk) == src


def test_decode_rejects_mismatched_lengths():
    spec = rapidraid_spec(CodeParams(6, 4), seed=0)
    coded = spec.generator.encode(_blocks(4, 16, 0))
    coded[2] = coded[2][:8]
    with pytest.raises(DecodeError):
        decode(DecodeSet.from_generator(spec.generator, dict(enumerate(coded)), (0, 1, 2, 3)), GF16)
