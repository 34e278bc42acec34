"""Code definitions: replica placement, pipeline coefficients and generator matrices.

Indices are 0-based throughout the API (node 0 is the head of the pipeline,
source symbol 0 is the first object block). Human-facing output converts to
the 1-based numbering used in the literature via :func:`format_subset`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .galois import GF16, FieldSpec, field

RAPIDRAID = "rapidraid"
CLASSICAL = "classical"


class CodeError(ValueError):
    pass


@dataclass(frozen=True)
class CodeParams:
    n: int
    k: int
    field: FieldSpec = GF16

    def __post_init__(self):
        if self.n < 1 or self.k < 1:
            raise CodeError(f"n and k must be positive, got ({self.n},{self.k})")
        if not self.k <= self.n <= 2 * self.k:
            raise CodeError(f"need k <= n <= 2k, got ({self.n},{self.k})")

    @property
    def m(self) -> int:
        return self.n - self.k

    def __str__(self):
        return f"({self.n},{self.k})"


@dataclass(frozen=True)
class Placement:
    """Source-symbol indices held by each pipeline node, in slot order.

    Slot 0 is the first-replica symbol when the node has one; a node in the
    overlap region also holds a second-replica symbol in slot 1.
    """

    nodes: tuple[tuple[int, ...], ...]
    k: int

    @property
    def n(self) -> int:
        return len(self.nodes)

    def __getitem__(self, node: int) -> tuple[int, ...]:
        return self.nodes[node]

    def holders(self, symbol: int) -> list[int]:
        return [i for i, syms in enumerate(self.nodes) if symbol in syms]

    def replica(self, node: int, slot: int) -> int:
        """1 or 2: which replica of the object a stored slot belongs to."""
        return 1 if node < self.k and slot == 0 else 2


def placement(params: CodeParams) -> Placement:
    """Replica layout: first replica on nodes 0..k-1, second on n-k..n-1."""
    n, k = params.n, params.k
    nodes = []
    for i in range(n):
        syms = []
        if i < k:
            syms.append(i)
        if i >= n - k:
            syms.append(i - (n - k))
        nodes.append(tuple(syms))
    return Placement(tuple(nodes), k)


@dataclass(frozen=True)
class CoefficientSet:
    """Per-(node, slot) forwarding (psi) and output (xi) coefficients."""

    psi: tuple[tuple[int, ...], ...]
    xi: tuple[tuple[int, ...], ...]

    def check(self, layout: Placement, spec: FieldSpec):
        n = layout.n
        if len(self.psi) != n or len(self.xi) != n:
            raise CodeError(f"coefficient set covers {len(self.xi)} nodes, placement has {n}")
        for i, syms in enumerate(layout.nodes):
            want_psi = len(syms) if i < n - 1 else 0
            if len(self.psi[i]) != want_psi:
                raise CodeError(f"node {i + 1}: expected {want_psi} psi entries, got {len(self.psi[i])}")
            if len(self.xi[i]) != len(syms):
                raise CodeError(f"node {i + 1}: expected {len(syms)} xi entries, got {len(self.xi[i])}")
            if any(x == 0 for x in self.xi[i]):
                raise CodeError(f"node {i + 1}: xi coefficients must be nonzero")
            for c in self.psi[i] + self.xi[i]:
                if not 0 <= c < spec.size:
                    raise CodeError(f"coefficient {c:#x} outside {spec}")

    @classmethod
    def random(cls, layout: Placement, spec: FieldSpec, rng: np.random.Generator) -> CoefficientSet:
        gf = field(spec)
        n = layout.n
        psi = tuple(
            tuple(gf.random(rng, nonzero=True) for _ in syms) if i < n - 1 else ()
            for i, syms in enumerate(layout.nodes)
        )
        xi = tuple(tuple(gf.random(rng, nonzero=True) for _ in syms) for syms in layout.nodes)
        return cls(psi, xi)

    def items(self):
        """Yield ``(kind, node, slot, value)`` in canonical order."""
        for i in range(len(self.xi)):
            for s, v in enumerate(self.psi[i]):
                yield "psi", i, s, v
            for s, v in enumerate(self.xi[i]):
                yield "xi", i, s, v


def generator_terms(layout: Placement, k: int) -> list[list[frozenset]]:
    """Symbolic generator: each entry is the set of coefficient labels summed there.

    Labels are ``("psi"|"xi", node, slot)``. Characteristic 2 makes a label
    that appears twice cancel, hence sets rather than multisets.
    """
    n = layout.n
    forward = [frozenset()] * k
    rows = []
    for i, syms in enumerate(layout.nodes):
        out = list(forward)
        nxt = list(forward)
        for s, j in enumerate(syms):
            out[j] = out[j] ^ {("xi", i, s)}
            if i < n - 1:
                nxt[j] = nxt[j] ^ {("psi", i, s)}
        rows.append(out)
        forward = nxt
    return rows


@dataclass(frozen=True)
class GeneratorMatrix:
    rows: tuple[tuple[int, ...], ...]
    field: FieldSpec

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def k(self) -> int:
        return len(self.rows[0])

    def __getitem__(self, i: int) -> tuple[int, ...]:
        return self.rows[i]

    def to_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=np.int64)

    def submatrix(self, indices: Iterable[int]) -> list[list[int]]:
        return [list(self.rows[i]) for i in indices]

    def is_systematic(self) -> bool:
        k = self.k
        return all(self.rows[i][j] == int(i == j) for i in range(k) for j in range(k))

    def encode(self, blocks: Sequence[bytes], rows: Iterable[int] | None = None) -> list[bytes]:
        """Offline whole-block multiplication ``G . o`` (optionally only some rows)."""
        if len(blocks) != self.k:
            raise CodeError(f"expected {self.k} blocks, got {len(blocks)}")
        gf = field(self.field)
        words = [gf.as_words(b) for b in blocks]
        if len({w.size for w in words}) > 1:
            raise CodeError("source blocks differ in length")
        out = []
        for i in range(self.n) if rows is None else rows:
            acc = np.zeros_like(words[0])
            for coef, w in zip(self.rows[i], words):
                if coef:
                    acc ^= gf.mul_words(coef, w)
            out.append(acc.tobytes())
        return out


def derive_generator(params: CodeParams, layout: Placement, coeffs: CoefficientSet) -> GeneratorMatrix:
    """Unroll the forwarding recursion into the n x k generator matrix."""
    coeffs.check(layout, params.field)
    lookup = {(kind, i, s): v for kind, i, s, v in coeffs.items()}
    rows = []
    for term_row in generator_terms(layout, params.k):
        row = []
        for labels in term_row:
            v = 0
            for label in labels:
                try:
                    v ^= lookup[label]
                except KeyError:
                    raise CodeError(f"missing coefficient {label}") from None
            row.append(v)
        rows.append(tuple(row))
    return GeneratorMatrix(tuple(rows), params.field)


def cauchy_generator(params: CodeParams) -> GeneratorMatrix:
    """Systematic generator [I_k; C] with C[r][c] = 1 / ((r + k) + c)."""
    n, k = params.n, params.k
    gf = field(params.field)
    if n > gf.size:
        raise CodeError(f"{params.field} has too few points for n={n}")
    rows = [tuple(int(i == j) for j in range(k)) for i in range(k)]
    for r in range(n - k):
        rows.append(tuple(gf.inv((r + k) ^ c) for c in range(k)))
    return GeneratorMatrix(tuple(rows), params.field)


@dataclass(frozen=True)
class CodeSpec:
    """A complete code description, serializable to canonical text."""

    kind: str
    params: CodeParams
    coefficients: CoefficientSet | None = None

    def __post_init__(self):
        if self.kind not in (RAPIDRAID, CLASSICAL):
            raise CodeError(f"unknown code kind {self.kind!r}")
        if self.kind == RAPIDRAID:
            if self.coefficients is None:
                raise CodeError("a rapidraid code needs coefficients")
            self.coefficients.check(self.layout, self.params.field)

    @property
    def layout(self) -> Placement:
        return placement(self.params)

    @property
    def generator(self) -> GeneratorMatrix:
        return _generator(self)

    def to_text(self) -> str:
        p = self.params
        lines = [
            "# rapidraid code spec v1",
            f"kind={self.kind}",
            f"n={p.n}",
            f"k={p.k}",
            f"word_bits={p.field.word_bits}",
            f"reduction_polynomial={p.field.reduction_polynomial:#x}",
        ]
        if self.coefficients is not None:
            for kind, i, s, v in self.coefficients.items():
                lines.append(f"{kind}.{i + 1}.{s + 1}={v:#x}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> CodeSpec:
        values = {}
        coef = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise CodeError(f"malformed line {raw!r}")
            key = key.strip()
            if key.startswith(("psi.", "xi.")):
                kind, node, slot = key.split(".")
                coef[(kind, int(node) - 1, int(slot) - 1)] = int(value, 0)
            else:
                values[key] = value.strip()
        try:
            spec = FieldSpec(int(values["word_bits"]), int(values["reduction_polynomial"], 0))
            params = CodeParams(int(values["n"]), int(values["k"]), spec)
            kind = values["kind"]
        except KeyError as e:
            raise CodeError(f"code spec is missing {e.args[0]!r}") from None
        coefficients = None
        if kind == RAPIDRAID:
            layout = placement(params)
            n = params.n
            try:
                psi = tuple(
                    tuple(coef.pop(("psi", i, s)) for s in range(len(syms))) if i < n - 1 else ()
                    for i, syms in enumerate(layout.nodes)
                )
                xi = tuple(
                    tuple(coef.pop(("xi", i, s)) for s in range(len(syms)))
                    for i, syms in enumerate(layout.nodes)
                )
            except KeyError as e:
                kind_, i, s = e.args[0]
                raise CodeError(f"missing coefficient {kind_}.{i + 1}.{s + 1}") from None
            if coef:
                raise CodeError(f"unexpected coefficients: {sorted(coef)}")
            coefficients = CoefficientSet(psi, xi)
        return cls(kind, params, coefficients)

    def digest(self) -> bytes:
        return hashlib.sha256(self.to_text().encode()).digest()[:16]


_generator_cache: dict = {}


def _generator(spec: CodeSpec) -> GeneratorMatrix:
    g = _generator_cache.get(spec)
    if g is None:
        if spec.kind == CLASSICAL:
            g = cauchy_generator(spec.params)
        else:
            g = derive_generator(spec.params, spec.layout, spec.coefficients)
        _generator_cache[spec] = g
    return g


def rapidraid_spec(params: CodeParams, seed: int | None = None,
                   coefficients: CoefficientSet | None = None) -> CodeSpec:
    """Build a RapidRAID code; random coefficients are drawn when none are given."""
    if coefficients is None:
        coefficients = CoefficientSet.random(placement(params), params.field, np.random.default_rng(seed))
    return CodeSpec(RAPIDRAID, params, coefficients)


def classical_spec(params: CodeParams) -> CodeSpec:
    return CodeSpec(CLASSICAL, params)


def format_subset(indices: Iterable[int]) -> str:
    return "{" + ",".join(str(i + 1) for i in sorted(indices)) + "}"
