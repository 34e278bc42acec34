"""Arithmetic over the binary extension fields GF(2^l).

Scalar operations work on plain ints for speed; :class:`FieldElement` wraps a
value together with its field for callers that want mismatches caught.
Bulk operations work on numpy word arrays (``uint8`` for l=8, little-endian
``uint16`` for l=16).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DEFAULT_POLYNOMIALS = {
    2: 0x7,  # x^2 + x + 1
    4: 0x13,  # x^4 + x + 1
    8: 0x11D,  # x^8 + x^4 + x^3 + x^2 + 1
    16: 0x1100B,  # x^16 + x^12 + x^3 + x + 1
}

# Word sizes usable for block striping. Smaller fields exist only for analysis.
BUFFER_WORD_BITS = (8, 16)


class FieldError(ValueError):
    pass


def _poly_mod(a: int, b: int) -> int:
    db = b.bit_length() - 1
    while a and a.bit_length() - 1 >= db:
        a ^= b << (a.bit_length() - 1 - db)
    return a


def is_irreducible(poly: int) -> bool:
    """Brute-force check: no factor of degree 1..deg/2 divides ``poly``."""
    degree = poly.bit_length() - 1
    if degree < 1:
        return False
    for d in range(1, degree // 2 + 1):
        for f in range(1 << d, 1 << (d + 1)):
            if _poly_mod(poly, f) == 0:
                return False
    return True


@dataclass(frozen=True)
class FieldSpec:
    word_bits: int = 8
    reduction_polynomial: int | None = None

    def __post_init__(self):
        if self.reduction_polynomial is None:
            if self.word_bits not in DEFAULT_POLYNOMIALS:
                raise FieldError(f"no default polynomial for word_bits={self.word_bits}")
            object.__setattr__(self, "reduction_polynomial", DEFAULT_POLYNOMIALS[self.word_bits])
        if not 2 <= self.word_bits <= 16:
            raise FieldError(f"word_bits must be in [2, 16], got {self.word_bits}")
        if self.reduction_polynomial.bit_length() - 1 != self.word_bits:
            raise FieldError(
                f"polynomial {self.reduction_polynomial:#x} does not have degree {self.word_bits}"
            )
        if not _irreducible_cached(self.reduction_polynomial):
            raise FieldError(f"polynomial {self.reduction_polynomial:#x} is reducible")

    @property
    def size(self) -> int:
        return 1 << self.word_bits

    @property
    def word_bytes(self) -> int:
        if self.word_bits not in BUFFER_WORD_BITS:
            raise FieldError(f"GF(2^{self.word_bits}) cannot be used for block buffers")
        return self.word_bits // 8

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.uint8) if self.word_bits <= 8 else np.dtype("<u2")

    def __str__(self):
        return f"GF(2^{self.word_bits})/{self.reduction_polynomial:#x}"


@lru_cache(maxsize=None)
def _irreducible_cached(poly: int) -> bool:
    return is_irreducible(poly)


GF8 = FieldSpec(8)
GF16 = FieldSpec(16)


class GaloisField:
    """Log/antilog tables and operations for one :class:`FieldSpec`.

    Use :func:`field` to obtain the shared instance for a spec; tables are
    immutable once built.
    """

    def __init__(self, spec: FieldSpec):
        self.spec = spec
        self.bits = spec.word_bits
        self.size = spec.size
        self.order = self.size - 1
        self.generator = self._find_generator()
        exp = np.zeros(2 * self.order, dtype=np.int64)
        log = np.zeros(self.size, dtype=np.int64)
        x = 1
        for i in range(self.order):
            exp[i] = x
            log[x] = i
            x = self._slow_mul(x, self.generator)
        exp[self.order:] = exp[: self.order]
        exp.setflags(write=False)
        log.setflags(write=False)
        self.exp = exp
        self.log = log
        # plain lists are much faster than numpy scalars in tight Python loops
        self._exp = exp.tolist()
        self._log = log.tolist()

    def _slow_mul(self, a: int, b: int) -> int:
        poly, top = self.spec.reduction_polynomial, self.size
        r = 0
        while b:
            if b & 1:
                r ^= a
            b >>= 1
            a <<= 1
            if a & top:
                a ^= poly
        return r

    def _find_generator(self) -> int:
        for g in range(2, self.size):
            x, n = g, 1
            while x != 1:
                x = self._slow_mul(x, g)
                n += 1
            if n == self.size - 1:
                return g
        return 1  # GF(2)

    def _check(self, a: int):
        if not 0 <= a < self.size:
            raise FieldError(f"{a} is not an element of {self.spec}")

    # scalar operations

    @staticmethod
    def add(a: int, b: int) -> int:
        return a ^ b

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return self._exp[self._log[a] + self._log[b]]

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("0 has no multiplicative inverse")
        return self._exp[self.order - self._log[a]]

    def div(self, a: int, b: int) -> int:
        if b == 0:
            raise ZeroDivisionError("division by zero")
        if a == 0:
            return 0
        return self._exp[self._log[a] - self._log[b] + self.order]

    def pow(self, a: int, e: int) -> int:
        if a == 0:
            return 0 if e else 1
        return self._exp[(self._log[a] * e) % self.order]

    def random(self, rng: np.random.Generator, nonzero: bool = False, size=None):
        lo = 1 if nonzero else 0
        if size is None:
            return int(rng.integers(lo, self.size))
        return rng.integers(lo, self.size, size=size)

    # vectorized operations

    def mul_array(self, a, b) -> np.ndarray:
        """Elementwise product of two broadcastable integer arrays."""
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        out = self.exp[self.log[a] + self.log[b]]
        return np.where((a == 0) | (b == 0), 0, out)

    def inv_array(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=np.int64)
        if np.any(a == 0):
            raise ZeroDivisionError("0 has no multiplicative inverse")
        return self.exp[self.order - self.log[a]]

    def scale_table(self, coef: int) -> np.ndarray:
        """Lookup table ``t`` with ``t[v] == coef * v`` for every field value."""
        return _scale_table(self.spec, coef)

    def mul_words(self, coef: int, words: np.ndarray) -> np.ndarray:
        if coef == 0:
            return np.zeros_like(words)
        if coef == 1:
            return words.copy()
        return self.scale_table(coef)[words]

    def mul_buffer(self, coef: int, src, acc):
        """Return ``acc + coef * src`` computed word by word.

        ``src`` and ``acc`` are bytes-like or word arrays of equal length; the
        result has the type of ``acc`` (bytes in, bytes out).
        """
        src_w = self.as_words(src)
        acc_w = self.as_words(acc)
        if src_w.shape != acc_w.shape:
            raise FieldError(f"buffer length mismatch: {src_w.size} vs {acc_w.size} words")
        out = acc_w ^ self.mul_words(coef, src_w)
        if isinstance(acc, np.ndarray):
            return out
        return out.tobytes()

    def as_words(self, buf) -> np.ndarray:
        if isinstance(buf, np.ndarray):
            if buf.dtype == self.spec.dtype:
                return buf
            if buf.dtype == np.uint8:
                buf = buf.tobytes()
            else:
                raise FieldError(f"unexpected word dtype {buf.dtype}")
        wb = self.spec.word_bytes
        if len(buf) % wb:
            raise FieldError(f"buffer length {len(buf)} is not a multiple of {wb} bytes")
        return np.frombuffer(buf, dtype=self.spec.dtype)


@lru_cache(maxsize=None)
def field(spec: FieldSpec = GF8) -> GaloisField:
    return GaloisField(spec)


@lru_cache(maxsize=256)
def _scale_table(spec: FieldSpec, coef: int) -> np.ndarray:
    gf = field(spec)
    values = np.arange(spec.size, dtype=np.int64)
    table = gf.mul_array(values, coef).astype(spec.dtype)
    table.setflags(write=False)
    return table


@dataclass(frozen=True)
class FieldElement:
    value: int
    field: FieldSpec = GF8

    def __post_init__(self):
        if not 0 <= self.value < self.field.size:
            raise FieldError(f"{self.value} is not an element of {self.field}")

    def _other(self, other: FieldElement) -> int:
        if not isinstance(other, FieldElement):
            raise TypeError(f"expected FieldElement, got {type(other).__name__}")
        if other.field != self.field:
            raise FieldError(f"mismatched fields: {self.field} and {other.field}")
        return other.value

    def __add__(self, other):
        return add(self, other)

    __sub__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return mul(self, inv(other))

    def __bool__(self):
        return self.value != 0

    def __int__(self):
        return self.value

    def __repr__(self):
        return f"FieldElement({self.value:#x}, {self.field})"


def add(a: FieldElement, b: FieldElement) -> FieldElement:
    return FieldElement(a.value ^ a._other(b), a.field)


def mul(a: FieldElement, b: FieldElement) -> FieldElement:
    return FieldElement(field(a.field).mul(a.value, a._other(b)), a.field)


def inv(a: FieldElement) -> FieldElement:
    return FieldElement(field(a.field).inv(a.value), a.field)


def mul_buffer(coef: FieldElement, src, acc):
    """Word-striped multiply-accumulate: ``acc[i] + coef * src[i]``."""
    return field(coef.field).mul_buffer(coef.value, src, acc)
