"""Slow, independent reference implementations used to cross-check the package.

Nothing here imports rapidraid: arithmetic, placement, the coding recursion
and linear algebra are all redone from first principles.
"""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import combinations


def clmul(a: int, b: int) -> int:
    """Carry-less (XOR) product of two polynomials over GF(2)."""
    r = 0
    while b:
        if b & 1:
            r ^= a
        a <<= 1
        b >>= 1
    return r


def polymod(a: int, poly: int) -> int:
    deg = poly.bit_length() - 1
    while a.bit_length() - 1 >= deg:
        a ^= poly << (a.bit_length() - 1 - deg)
    return a


def gf_mul(a: int, b: int, poly: int) -> int:
    """Shift-and-XOR multiply, then reduce by long division."""
    return polymod(clmul(a, b), poly)


def gf_pow(a: int, e: int, poly: int) -> int:
    r = 1
    while e:
        if e & 1:
            r = gf_mul(r, a, poly)
        a = gf_mul(a, a, poly)
        e >>= 1
    return r


def gf_inv(a: int, poly: int) -> int:
    """Fermat inverse a^(2^l - 2)."""
    bits = poly.bit_length() - 1
    if a == 0:
        raise ZeroDivisionError
    return gf_pow(a, (1 << bits) - 2, poly)


class TableField:
    """Log tables derived from :func:`gf_mul`, for oracle loops that need speed."""

    def __init__(self, poly: int):
        self.poly = poly
        self.bits = poly.bit_length() - 1
        self.size = 1 << self.bits
        order = self.size - 1
        g = next(g for g in range(2, self.size) if self._order(g) == order)
        self.exp = [0] * (2 * order)
        self.log = [0] * self.size
        x = 1
        for i in range(order):
            self.exp[i] = self.exp[i + order] = x
            self.log[x] = i
            x = gf_mul(x, g, poly)
        self.order = order

    def _order(self, g: int) -> int:
        x, n = g, 1
        while x != 1:
            x = gf_mul(x, g, self.poly)
            n += 1
        return n

    def mul(self, a: int, b: int) -> int:
        if not a or not b:
            return 0
        return self.exp[self.log[a] + self.log[b]]

    def inv(self, a: int) -> int:
        return self.exp[self.order - self.log[a]]


def mul_buffer(coef: int, src: bytes, acc: bytes, poly: int) -> bytes:
    """Word-by-word ``acc + coef * src``; 16-bit words are little-endian."""
    width = (poly.bit_length() - 1) // 8
    out = bytearray()
    for i in range(0, len(src), width):
        s = int.from_bytes(src[i:i + width], "little")
        a = int.from_bytes(acc[i:i + width], "little")
        out += (a ^ gf_mul(coef, s, poly)).to_bytes(width, "little")
    return bytes(out)


def stored_symbols(n: int, k: int) -> list[list[int]]:
    """0-based symbols on each node: o_i on node i (i <= k), o_{i-(n-k)} on node i > n-k."""
    nodes = []
    for i in range(1, n + 1):
        held = []
        if i <= k:
            held.append(i - 1)
        if i > n - k:
            held.append(i - (n - k) - 1)
        nodes.append(held)
    return nodes


def pipeline_generator(n: int, k: int, psi, xi, F: TableField) -> list[list[int]]:
    """Run the forwarding recursion numerically on unit source vectors.

    ``psi[i][s]`` / ``xi[i][s]`` scale the s-th symbol stored on node i.
    Rows of the result are coded blocks, columns source symbols.
    """
    rows = []
    x = [0] * k
    for i, held in enumerate(stored_symbols(n, k)):
        c = list(x)
        nxt = list(x)
        for s, sym in enumerate(held):
            c[sym] ^= xi[i][s]
            if i < n - 1:
                nxt[sym] ^= psi[i][s]
        rows.append(c)
        x = nxt
    return rows


def written_out_84_matrix(psi: list[int], xi: list[int]) -> list[list[int]]:
    """The (8,4) generator written out entry by entry; psi/xi are 1-indexed lists (index 0 unused)."""
    p, x = psi, xi
    return [
        [x[1], 0, 0, 0],
        [p[1], x[2], 0, 0],
        [p[1], p[2], x[3], 0],
        [p[1], p[2], p[3], x[4]],
        [p[1] ^ x[5], p[2], p[3], p[4]],
        [p[1] ^ p[5], p[2] ^ x[6], p[3], p[4]],
        [p[1] ^ p[5], p[2] ^ p[6], p[3] ^ x[7], p[4]],
        [p[1] ^ p[5], p[2] ^ p[6], p[3] ^ p[7], p[4] ^ x[8]],
    ]


def rank(rows: list[list[int]], F: TableField) -> int:
    m = [list(r) for r in rows]
    r = 0
    cols = len(m[0]) if m else 0
    for c in range(cols):
        piv = next((i for i in range(r, len(m)) if m[i][c]), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = F.inv(m[r][c])
        m[r] = [F.mul(v, inv) for v in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c]:
                f = m[i][c]
                m[i] = [a ^ F.mul(f, b) for a, b in zip(m[i], m[r])]
        r += 1
    return r


def matvec_blocks(rows: list[list[int]], blocks: list[bytes], poly: int) -> list[bytes]:
    """Whole-block encode with the word-loop buffer oracle."""
    out = []
    for row in rows:
        acc = bytes(len(blocks[0]))
        for coef, b in zip(row, blocks):
            acc = mul_buffer(coef, b, acc, poly)
        out.append(acc)
    return out


def unrecoverable_by_size(rows: list[list[int]], k: int, F: TableField) -> list[int]:
    """Brute force: for each survivor set, recoverable iff its rows have rank k."""
    n = len(rows)
    counts = [0] * (n + 1)
    for size in range(n + 1):
        if size < k:
            counts[size] = math.comb(n, size)
            continue
        for surv in combinations(range(n), size):
            if rank([rows[i] for i in surv], F) < k:
                counts[size] += 1
    return counts


def loss(counts: list[int], p: Fraction) -> Fraction:
    n = len(counts) - 1
    return sum((c * (1 - p) ** s * p ** (n - s) for s, c in enumerate(counts)), Fraction(0))


def nines(loss_value: Fraction) -> int:
    """Largest d with loss <= 10^-d, by exact integer comparison."""
    d = 0
    while loss_value * 10 ** (d + 1) <= 1:
        d += 1
    return d


def binomial_tail(n: int, k: int, p: Fraction) -> Fraction:
    """P(at most k-1 of n nodes survive)."""
    return sum((math.comb(n, s) * (1 - p) ** s * p ** (n - s) for s in range(k)), Fraction(0))
