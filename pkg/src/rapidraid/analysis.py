"""Fault-tolerance analysis: k-subset rank census, coefficient search, static resilience.

A k-subset of codeword blocks is *naturally* dependent when it is rank
deficient for every choice of coefficients. We detect that by evaluating the
generator at several independent random coefficient assignments over a large
field: a subset that is not naturally dependent has a nonzero determinant
polynomial of degree <= k, so it is singular at a random point with
probability at most k / 2^l (Schwartz-Zippel).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from itertools import combinations
from math import comb

import numpy as np

from .codespec import (
    CodeParams,
    CoefficientSet,
    GeneratorMatrix,
    derive_generator,
    format_subset,
    placement,
)
from .galois import GF16, FieldSpec, GaloisField, field

MAX_N = 20
BATCH = 8192


class AnalysisError(ValueError):
    pass


class SearchExhausted(AnalysisError):
    def __init__(self, budget: int, best_accidental: int, best: CoefficientSet | None):
        self.budget = budget
        self.best_accidental = best_accidental
        self.best = best
        super().__init__(
            f"no coefficient set free of accidental dependencies after {budget} attempts "
            f"(best attempt had {best_accidental})"
        )


def full_rank_mask(gf: GaloisField, mats: np.ndarray) -> np.ndarray:
    """Batched Gaussian elimination: True where the (S, k, k) matrices are invertible."""
    mats = np.array(mats, dtype=np.int64, copy=True)
    s, k, _ = mats.shape
    ok = np.ones(s, dtype=bool)
    idx = np.arange(s)
    for c in range(k):
        nz = mats[:, c:, c] != 0
        ok &= nz.any(axis=1)
        piv = c + nz.argmax(axis=1)
        top = mats[idx, c].copy()
        mats[idx, c] = mats[idx, piv]
        mats[idx, piv] = top
        pv = mats[:, c, c]
        inv = gf.inv_array(np.where(pv == 0, 1, pv))
        mats[:, c, :] = gf.mul_array(mats[:, c, :], inv[:, None])
        if c + 1 < k:
            f = mats[:, c + 1:, c]
            mats[:, c + 1:, :] ^= gf.mul_array(f[:, :, None], mats[:, None, c, :])
    return ok


def subset_array(n: int, k: int) -> np.ndarray:
    return np.array(list(combinations(range(n), k)), dtype=np.int64).reshape(-1, k)


def singular_subsets(generator: GeneratorMatrix, subsets: np.ndarray | None = None) -> np.ndarray:
    """Boolean mask over ``subsets`` (default: all k-subsets) marking rank-deficient ones."""
    gf = field(generator.field)
    g = generator.to_array()
    if subsets is None:
        subsets = subset_array(generator.n, generator.k)
    out = np.empty(len(subsets), dtype=bool)
    for start in range(0, len(subsets), BATCH):
        chunk = subsets[start:start + BATCH]
        out[start:start + BATCH] = ~full_rank_mask(gf, g[chunk])
    return out


def _singular_chunk(args):
    rows, spec, chunk = args
    gf = field(spec)
    return ~full_rank_mask(gf, np.asarray(rows)[chunk])


@dataclass
class DependencyReport:
    params: CodeParams
    total_subsets: int
    dependent_subsets: list[tuple[int, ...]]
    natural_count: int
    accidental_subsets: list[tuple[int, ...]] = dc_field(default_factory=list)
    trials: int = 0

    @property
    def percent_independent(self) -> float:
        return 100.0 * (self.total_subsets - len(self.dependent_subsets)) / self.total_subsets

    @property
    def is_mds(self) -> bool:
        return not self.dependent_subsets

    def summary(self) -> str:
        n, k = self.params.n, self.params.k
        dep = len(self.dependent_subsets)
        noun = "subset" if dep == 1 else "subsets"
        lines = [
            f"({n},{k}) RapidRAID: {self.total_subsets} {k}-subsets, "
            f"{self.percent_independent:.4f}% independent, MDS={'yes' if self.is_mds else 'no'}",
        ]
        if dep <= 20:
            listed = ", ".join(format_subset(s) for s in self.dependent_subsets)
            lines.append(f"{dep} dependent {noun}" + (f": {listed}" if dep else ""))
        else:
            lines.append(f"{dep} dependent {noun}")
        if self.accidental_subsets:
            lines.append(f"{len(self.accidental_subsets)} accidental witness(es) over {self.trials} trials")
        return "\n".join(lines)

    def to_csv_rows(self):
        yield ["n", "k", "subset", "kind"]
        n, k = self.params.n, self.params.k
        for s in self.dependent_subsets:
            yield [n, k, " ".join(str(i + 1) for i in s), "natural"]
        for s in self.accidental_subsets:
            yield [n, k, " ".join(str(i + 1) for i in s), "accidental"]


def _check_tractable(params: CodeParams):
    if params.n > MAX_N:
        raise AnalysisError(
            f"n={params.n} exceeds the enumeration bound n <= {MAX_N} "
            f"({comb(params.n, params.k)} subsets)"
        )


def classify_dependencies(params: CodeParams, trials: int = 3, seed: int | None = 0,
                          spec: FieldSpec = GF16, workers: int = 1) -> DependencyReport:
    """Census of all k-subsets under ``trials`` random coefficient assignments over ``spec``."""
    _check_tractable(params)
    if trials < 1:
        raise AnalysisError("need at least one trial")
    n, k = params.n, params.k
    rng = np.random.default_rng(seed)
    layout = placement(params)
    run_params = CodeParams(n, k, spec)
    subsets = subset_array(n, k)
    hits = np.zeros(len(subsets), dtype=np.int64)
    chunks = [slice(s, s + BATCH) for s in range(0, len(subsets), BATCH)]
    pool = ProcessPoolExecutor(workers) if workers > 1 and len(chunks) > 1 else None
    try:
        for _ in range(trials):
            coeffs = CoefficientSet.random(layout, spec, rng)
            g = derive_generator(run_params, layout, coeffs)
            if pool is None:
                hits += singular_subsets(g, subsets)
            else:
                rows = g.to_array()
                jobs = [(rows, spec, subsets[c]) for c in chunks]
                hits += np.concatenate(list(pool.map(_singular_chunk, jobs)))
    finally:
        if pool is not None:
            pool.shutdown()
    natural = [tuple(int(x) for x in subsets[i]) for i in np.flatnonzero(hits == trials)]
    accidental = [tuple(int(x) for x in subsets[i]) for i in np.flatnonzero((hits > 0) & (hits < trials))]
    return DependencyReport(params, len(subsets), natural, len(natural), accidental, trials)


def search_coefficients(params: CodeParams, natural: DependencyReport, budget: int = 10,
                        seed: int | None = None) -> CoefficientSet:
    """Random search for coefficients with no dependencies beyond the natural ones.

    Each attempt is verified against every k-subset of the codeword.
    """
    _check_tractable(params)
    if (natural.params.n, natural.params.k) != (params.n, params.k):
        raise AnalysisError(f"report is for {natural.params}, not {params}")
    rng = np.random.default_rng(seed)
    layout = placement(params)
    subsets = subset_array(params.n, params.k)
    allowed = {tuple(s) for s in natural.dependent_subsets}
    best, best_count = None, None
    for _ in range(budget):
        coeffs = CoefficientSet.random(layout, params.field, rng)
        g = derive_generator(params, layout, coeffs)
        bad = np.flatnonzero(singular_subsets(g, subsets))
        accidental = sum(1 for i in bad if tuple(int(x) for x in subsets[i]) not in allowed)
        if accidental == 0:
            return coeffs
        if best_count is None or accidental < best_count:
            best, best_count = coeffs, accidental
    raise SearchExhausted(budget, best_count if best_count is not None else 0, best)


@dataclass(frozen=True)
class ResilienceResult:
    p: float
    loss_probability: float
    nines: int | float
    exact_loss: Fraction | None = None


def nines_of(loss: Fraction) -> int | float:
    """floor(-log10(loss)) evaluated exactly on a rational loss probability."""
    if loss <= 0:
        return math.inf
    d = max(0, math.floor(-math.log10(float(loss))) - 1)
    while loss <= Fraction(1, 10 ** (d + 1)):
        d += 1
    while d > 0 and loss > Fraction(1, 10 ** d):
        d -= 1
    return d


def unrecoverable_counts(n: int, k: int, dependent: list[tuple[int, ...]]) -> list[int]:
    """Number of unrecoverable survivor sets of each size 0..n.

    A survivor set can rebuild the object iff it contains an independent
    k-subset; the indicator is spread to all supersets with a subset-sum pass
    over the 2^n survivor bitmasks.
    """
    if n > MAX_N:
        raise AnalysisError(f"n={n} exceeds the enumeration bound n <= {MAX_N}")
    size = 1 << n
    rec = np.zeros(size, dtype=bool)
    masks = np.array([sum(1 << i for i in s) for s in combinations(range(n), k)], dtype=np.int64)
    rec[masks] = True
    if dependent:
        rec[np.array([sum(1 << i for i in s) for s in dependent], dtype=np.int64)] = False
    for b in range(n):
        view = rec.reshape(-1, 2, 1 << b)
        view[:, 1, :] |= view[:, 0, :]
    counts = np.bincount(_popcount(size)[~rec], minlength=n + 1)
    return [int(c) for c in counts]


def _popcount(size: int) -> np.ndarray:
    x = np.arange(size, dtype=np.int64)
    out = np.zeros(size, dtype=np.int64)
    while x.any():
        out += x & 1
        x >>= 1
    return out


def loss_from_counts(counts: list[int], p: Fraction) -> Fraction:
    n = len(counts) - 1
    q = 1 - p
    return sum((c * q ** s * p ** (n - s) for s, c in enumerate(counts) if c), Fraction(0))


def _as_fraction(p) -> Fraction:
    f = Fraction(str(p)) if isinstance(p, float) else Fraction(p)
    if not 0 <= f <= 1:
        raise AnalysisError(f"failure probability must lie in [0, 1], got {p}")
    return f


def static_resilience(report: DependencyReport, p) -> ResilienceResult:
    """Probability of losing the object when each node fails independently with probability p."""
    counts = unrecoverable_counts(report.params.n, report.params.k, report.dependent_subsets)
    pf = _as_fraction(p)
    loss = loss_from_counts(counts, pf)
    return ResilienceResult(float(pf), float(loss), nines_of(loss), loss)


def mds_report(params: CodeParams) -> DependencyReport:
    """A report with no dependent subsets, as for a Cauchy Reed-Solomon code."""
    return DependencyReport(params, comb(params.n, params.k), [], 0)


def replication_resilience(replicas: int, p) -> ResilienceResult:
    """r-way replication: the object is lost iff all r replica nodes fail."""
    pf = _as_fraction(p)
    loss = loss_from_counts(unrecoverable_counts(replicas, 1, []), pf)
    return ResilienceResult(float(pf), float(loss), nines_of(loss), loss)


def mds_tail(n: int, k: int, p) -> Fraction:
    """Closed form: P(more than n-k of n nodes fail)."""
    pf = _as_fraction(p)
    return sum((comb(n, f) * pf ** f * (1 - pf) ** (n - f) for f in range(n - k + 1, n + 1)), Fraction(0))


@dataclass(frozen=True)
class ConjectureRow:
    n: int
    k: int
    mds: bool
    dependent: int
    total: int

    @property
    def predicted_mds(self) -> bool:
        return self.k >= self.n - 3

    @property
    def percent_independent(self) -> float:
        return 100.0 * (self.total - self.dependent) / self.total


def verify_conjecture(n_max: int = 16, ns=None, trials: int = 3, seed: int | None = 0,
                      workers: int = 1) -> list[ConjectureRow]:
    """Census every (n, k) with n/2 <= k < n for the requested n values.

    ``ns`` defaults to multiples of four up to ``n_max``.
    """
    if ns is None:
        ns = range(4, n_max + 1, 4)
    rows = []
    for n in ns:
        if n > n_max:
            continue
        for k in range(math.ceil(n / 2), n):
            rep = classify_dependencies(CodeParams(n, k), trials=trials, seed=seed, workers=workers)
            rows.append(ConjectureRow(n, k, rep.is_mds, len(rep.dependent_subsets), rep.total_subsets))
    return rows
