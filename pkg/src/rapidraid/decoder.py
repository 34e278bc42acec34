"""Gaussian elimination over GF(2^l) and object reconstruction from k blocks."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

from .codespec import GeneratorMatrix, format_subset
from .galois import FieldSpec, field

DEFAULT_CHUNK = 64 * 1024


class DecodeError(ValueError):
    pass


class SingularMatrixError(DecodeError):
    """Raised when a square matrix has no inverse.

    ``column`` is the pivot column that vanished during elimination and
    ``rows`` the caller-supplied row labels, when known.
    """

    def __init__(self, column: int, rows: Sequence[int] | None = None):
        self.column = column
        self.rows = tuple(rows) if rows is not None else None
        where = f" for rows {format_subset(self.rows)}" if self.rows is not None else ""
        super().__init__(f"singular matrix{where}: no pivot in column {column + 1}")


def rank(matrix: Sequence[Sequence[int]], spec: FieldSpec) -> int:
    gf = field(spec)
    m = [list(r) for r in matrix]
    if not m:
        return 0
    ncols = len(m[0])
    r = 0
    for c in range(ncols):
        pivot = next((i for i in range(r, len(m)) if m[i][c]), None)
        if pivot is None:
            continue
        m[r], m[pivot] = m[pivot], m[r]
        inv = gf.inv(m[r][c])
        m[r] = [gf.mul(inv, v) for v in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c]:
                f = m[i][c]
                m[i] = [a ^ gf.mul(f, b) for a, b in zip(m[i], m[r])]
        r += 1
        if r == len(m):
            break
    return r


def invert_submatrix(matrix: Sequence[Sequence[int]], spec: FieldSpec,
                     labels: Sequence[int] | None = None) -> list[list[int]]:
    """Gauss-Jordan inverse; the first nonzero entry at or below the diagonal is the pivot."""
    gf = field(spec)
    size = len(matrix)
    if any(len(row) != size for row in matrix):
        raise DecodeError(f"matrix is not square ({size} rows)")
    aug = [list(row) + [int(i == j) for j in range(size)] for i, row in enumerate(matrix)]
    for c in range(size):
        pivot = next((i for i in range(c, size) if aug[i][c]), None)
        if pivot is None:
            raise SingularMatrixError(c, labels)
        aug[c], aug[pivot] = aug[pivot], aug[c]
        inv = gf.inv(aug[c][c])
        aug[c] = [gf.mul(inv, v) for v in aug[c]]
        for i in range(size):
            f = aug[i][c]
            if i != c and f:
                aug[i] = [a ^ gf.mul(f, b) for a, b in zip(aug[i], aug[c])]
    return [row[size:] for row in aug]


def matmul(a: Sequence[Sequence[int]], b: Sequence[Sequence[int]], spec: FieldSpec) -> list[list[int]]:
    gf = field(spec)
    out = []
    for row in a:
        res = [0] * len(b[0])
        for x, brow in zip(row, b):
            if x:
                for j, y in enumerate(brow):
                    res[j] ^= gf.mul(x, y)
        out.append(res)
    return out


@dataclass
class DecodeSet:
    indices: tuple[int, ...]
    rows: list[list[int]]
    blocks: list[bytes]

    @classmethod
    def from_generator(cls, generator: GeneratorMatrix, blocks: Mapping[int, bytes],
                       indices: Iterable[int] | None = None) -> DecodeSet:
        if indices is None:
            indices = select_subset(generator, blocks.keys())
        indices = tuple(indices)
        return cls(indices, generator.submatrix(indices), [blocks[i] for i in indices])


def select_subset(generator: GeneratorMatrix, available: Iterable[int]) -> tuple[int, ...]:
    """Lexicographically smallest k-subset of ``available`` with full rank."""
    available = sorted(set(available))
    k = generator.k
    if len(available) < k:
        raise DecodeError(f"need {k} blocks, only {len(available)} available")
    if rank(generator.submatrix(available), generator.field) < k:
        raise DecodeError(f"blocks {format_subset(available)} do not span the object")
    for subset in combinations(available, k):
        if rank(generator.submatrix(subset), generator.field) == k:
            return subset
    raise AssertionError("unreachable: full-rank set has an independent k-subset")


def decode(dset: DecodeSet, spec: FieldSpec, chunk_size: int = DEFAULT_CHUNK) -> list[bytes]:
    """Recover o_1..o_k from k coded blocks, one chunk at a time."""
    k = len(dset.indices)
    if len(dset.rows) != k or len(dset.blocks) != k:
        raise DecodeError("a decode set needs exactly k rows and k blocks")
    lengths = {len(b) for b in dset.blocks}
    if len(lengths) != 1:
        raise DecodeError(f"coded blocks differ in length: {sorted(lengths)}")
    if dset.rows == [[int(i == j) for j in range(k)] for i in range(k)]:
        return [bytes(b) for b in dset.blocks]
    inverse = invert_submatrix(dset.rows, spec, dset.indices)
    gf = field(spec)
    words = [gf.as_words(b) for b in dset.blocks]
    step = max(1, chunk_size // gf.spec.word_bytes)
    total = words[0].size
    out = [np.empty(total, dtype=spec.dtype) for _ in range(k)]
    for start in range(0, total, step):
        stop = min(total, start + step)
        for j, coefs in enumerate(inverse):
            acc = np.zeros(stop - start, dtype=spec.dtype)
            for coef, w in zip(coefs, words):
                if coef:
                    acc ^= gf.mul_words(coef, w[start:stop])
            out[j][start:stop] = acc
    return [o.tobytes() for o in out]


def reconstruct(generator: GeneratorMatrix, blocks: Mapping[int, bytes],
                chunk_size: int = DEFAULT_CHUNK) -> list[bytes]:
    """Decode from whatever coded blocks survived, choosing the subset automatically."""
    return decode(DecodeSet.from_generator(generator, blocks), generator.field, chunk_size)
