"""Benchmarks over the simulated transport, plus the closed-form timing models.

All runs are deterministic for a fixed seed: payload contents, the choice of
congested nodes and latency jitter all derive from it.
"""

from __future__ import annotations

import csv
import io
import math
import statistics
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .classical import ClassicalEncodeJob, encode_process
from .codespec import CLASSICAL, RAPIDRAID, CodeParams, rapidraid_spec
from .galois import FieldSpec
from .jobs import DEFAULT_CHUNK
from .pipeline import PipelineJob, pipeline_process
from .transport.sim import CONGESTED, GIGABIT, LinkProfile, SimNetwork

SCHEMA_VERSION = 1
CSV_COLUMNS = ("scenario", "engine", "object", "seconds", "congested_count", "seed")
ENGINES = (CLASSICAL, RAPIDRAID)
DOMINANCE = 10  # tau_block should exceed the per-hop terms by this factor


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class TimingModel:
    tau_block: float
    tau_classical: float = 0.0
    tau_pipe: float = 0.0

    def __post_init__(self):
        if min(self.tau_block, self.tau_classical, self.tau_pipe) < 0:
            raise ValueError("timing terms must be non-negative")
        if self.tau_block < DOMINANCE * max(self.tau_classical, self.tau_pipe):
            warnings.warn("tau_block does not dominate the per-chunk terms; predictions are loose",
                          stacklevel=3)

    @classmethod
    def calibrate(cls, profile: LinkProfile, block_size: int, chunk_size: int, m: int) -> TimingModel:
        """Timing terms implied by a uniform link profile."""
        chunk = min(chunk_size, block_size)
        return cls(
            tau_block=profile.transfer_time(block_size),
            tau_classical=m * profile.transfer_time(chunk) + 2 * profile.base_latency,
            tau_pipe=profile.transfer_time(chunk) + profile.base_latency,
        )


def predict(model: TimingModel, params: CodeParams, engine: str) -> float:
    if engine == CLASSICAL:
        return model.tau_block * max(params.k, params.m - 1) + model.tau_classical
    if engine == RAPIDRAID:
        return model.tau_block + (params.n - 1) * model.tau_pipe
    raise ValueError(f"unknown engine {engine!r}")


def percentile(values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the smallest value with at least q% of the data at or below it."""
    if not values:
        raise ValueError("no values")
    if not 0 <= q <= 100:
        raise ValueError("percentile must lie in [0, 100]")
    ordered = sorted(values)
    rank = max(1, math.ceil(q / 100 * len(ordered)))
    return ordered[rank - 1]


@dataclass(frozen=True)
class Summary:
    count: int
    median: float
    p25: float
    p75: float
    min: float
    max: float

    @classmethod
    def of(cls, values: Sequence[float]) -> Summary:
        return cls(len(values), statistics.median(values), percentile(values, 25),
                   percentile(values, 75), min(values), max(values))


@dataclass(frozen=True)
class BenchScenario:
    name: str = "default"
    params: CodeParams = CodeParams(16, 11)
    engines: tuple[str, ...] = ENGINES
    objects: int = 1
    congested: tuple[int, ...] = ()  # 0-based physical node indices
    congested_profile: LinkProfile = CONGESTED
    link_profile: LinkProfile = GIGABIT
    block_size: int = 1 << 20
    chunk_size: int = DEFAULT_CHUNK
    repetitions: int = 1
    seed: int = 0
    cpu_rate: float | None = None  # bytes of multiply-accumulate per second; None = free

    def __post_init__(self):
        if self.repetitions < 1:
            raise ScenarioError("repetitions must be at least 1")
        if self.objects < 1:
            raise ScenarioError("objects must be at least 1")
        for e in self.engines:
            if e not in ENGINES:
                raise ScenarioError(f"unknown engine {e!r}")
        bad = [c for c in self.congested if not 0 <= c < self.node_count]
        if bad:
            raise ScenarioError(f"congested nodes {[c + 1 for c in bad]} are not among the "
                                f"{self.node_count} participating nodes")
        if len(set(self.congested)) != len(self.congested):
            raise ScenarioError("congested nodes listed twice")
        wb = self.params.field.word_bytes
        if self.block_size % wb or self.chunk_size % wb:
            raise ScenarioError(f"block and chunk sizes must be multiples of {wb} bytes")

    @property
    def node_count(self) -> int:
        return self.params.n

    def nodes(self) -> list[str]:
        return [f"node{i + 1}" for i in range(self.node_count)]

    def object_nodes(self, j: int) -> list[str]:
        """Physical nodes for object j: its last node (the coordinator's home) is node j mod n."""
        names = self.nodes()
        n = self.params.n
        if self.objects == 1:
            return names
        return [names[(j + 1 + i) % n] for i in range(n)]

    def with_congestion(self, count: int) -> BenchScenario:
        """The same scenario with ``count`` congested nodes, chosen by a seeded permutation."""
        if not 0 <= count <= self.node_count:
            raise ScenarioError(f"cannot congest {count} of {self.node_count} nodes")
        order = np.random.default_rng(self.seed).permutation(self.node_count)
        return replace(self, congested=tuple(sorted(int(c) for c in order[:count])))


@dataclass(frozen=True)
class Record:
    scenario: str
    engine: str
    object: int
    seconds: float
    congested_count: int
    seed: int


@dataclass
class ScenarioResult:
    scenario: BenchScenario
    records: list[Record] = field(default_factory=list)

    def seconds(self, engine: str) -> list[float]:
        return [r.seconds for r in self.records if r.engine == engine]

    def summary(self, engine: str) -> Summary:
        return Summary.of(self.seconds(engine))

    def summaries(self) -> dict[str, Summary]:
        return {e: self.summary(e) for e in self.scenario.engines}


def _object_blocks(s: BenchScenario, rng: np.random.Generator) -> list[list[bytes]]:
    k, B = s.params.k, s.block_size
    return [[rng.integers(0, 256, B, dtype=np.uint8).tobytes() for _ in range(k)] for _ in range(s.objects)]


def _network(s: BenchScenario, seed: int) -> SimNetwork:
    net = SimNetwork(default=s.link_profile, seed=seed, cpu_rate=s.cpu_rate)
    for i, name in enumerate(s.nodes()):
        net.register(name, s.congested_profile if i in s.congested else None)
    return net


def _run_engine(s: BenchScenario, engine: str, objects: list[list[bytes]], seed: int) -> list[float]:
    net = _network(s, seed)
    env = net.env
    spec = rapidraid_spec(s.params, seed=seed)
    procs = []
    for j, blocks in enumerate(objects):
        oid = j.to_bytes(16, "big")
        eps = s.object_nodes(j)
        if engine == RAPIDRAID:
            job = PipelineJob.from_object(spec, blocks, eps, object_id=oid, chunk_size=s.chunk_size)
            procs.append(env.process(pipeline_process(job, net)))
        else:
            # a lone object gets a dedicated coordinator; concurrent ones run on a parity node
            coordinator = "coordinator" if s.objects == 1 else eps[-1]
            job = ClassicalEncodeJob.from_object(s.params, blocks, eps, coordinator=coordinator,
                                                 object_id=oid, chunk_size=s.chunk_size)
            procs.append(env.process(encode_process(job, net)))
    net.run(until=env.all_of(procs))
    return [p.value.finished - p.value.started for p in procs]


def run_scenario(s: BenchScenario) -> ScenarioResult:
    result = ScenarioResult(s)
    for rep in range(s.repetitions):
        seed = s.seed + rep
        objects = _object_blocks(s, np.random.default_rng(seed))
        for engine in s.engines:
            for j, secs in enumerate(_run_engine(s, engine, objects, seed)):
                result.records.append(Record(s.name, engine, j, secs, len(s.congested), seed))
    return result


def congestion_sweep(s: BenchScenario, max_congested: int) -> list[ScenarioResult]:
    if not 0 <= max_congested <= s.node_count:
        raise ScenarioError(f"max_congested must lie in 0..{s.node_count}")
    return [run_scenario(s.with_congestion(c)) for c in range(max_congested + 1)]


def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares line through (xs, ys): returns (slope, intercept, r_squared)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - float((resid ** 2).sum()) / ss_tot
    return float(slope), float(intercept), r2


def write_csv(results: Iterable[ScenarioResult], out) -> None:
    out.write(f"# rapidraid bench schema={SCHEMA_VERSION}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for res in results:
        for r in res.records:
            w.writerow((r.scenario, r.engine, r.object, f"{r.seconds:.9f}", r.congested_count, r.seed))


def read_csv(text: str) -> list[Record]:
    lines = text.splitlines()
    if not lines or lines[0] != f"# rapidraid bench schema={SCHEMA_VERSION}":
        raise ScenarioError("not a rapidraid bench CSV (schema line missing or unsupported)")
    reader = csv.DictReader(io.StringIO("\n".join(lines[1:])))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ScenarioError(f"unexpected CSV columns {reader.fieldnames}")
    return [Record(row["scenario"], row["engine"], int(row["object"]), float(row["seconds"]),
                   int(row["congested_count"]), int(row["seed"])) for row in reader]


def _profile(bandwidth_mbps: str, latency_ms: str, jitter_ms: str) -> LinkProfile:
    return LinkProfile.mbps(float(bandwidth_mbps), float(latency_ms) / 1000, float(jitter_ms) / 1000)


def parse_scenario(text: str) -> tuple[BenchScenario, int | None]:
    """Parse key=value scenario text; returns the scenario and an optional sweep bound.

    Keys: name, n, k, word_bits, engines, objects, congested (1-based node list)
    or congested_count, block_size, chunk_size, repetitions, seed, cpu_rate,
    link_mbps, link_latency_ms, link_jitter_ms, congested_mbps,
    congested_latency_ms, congested_jitter_ms, sweep.
    """
    kv = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ScenarioError(f"line {lineno}: expected key=value")
        kv[key.strip()] = value.strip()
    known = {"name", "n", "k", "word_bits", "engines", "objects", "congested", "congested_count",
             "block_size", "chunk_size", "repetitions", "seed", "cpu_rate", "link_mbps",
             "link_latency_ms", "link_jitter_ms", "congested_mbps", "congested_latency_ms",
             "congested_jitter_ms", "sweep"}
    unknown = sorted(set(kv) - known)
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {', '.join(unknown)}")
    try:
        params = CodeParams(int(kv.get("n", 16)), int(kv.get("k", 11)),
                            FieldSpec(int(kv.get("word_bits", 16))))
        s = BenchScenario(
            name=kv.get("name", "default"),
            params=params,
            engines=tuple(e.strip() for e in kv.get("engines", ",".join(ENGINES)).split(",")),
            objects=int(kv.get("objects", 1)),
            congested=tuple(int(c) - 1 for c in kv["congested"].split(",")) if kv.get("congested") else (),
            link_profile=_profile(kv.get("link_mbps", 1000), kv.get("link_latency_ms", 0.1),
                                  kv.get("link_jitter_ms", 0)),
            congested_profile=_profile(kv.get("congested_mbps", 500), kv.get("congested_latency_ms", 100),
                                       kv.get("congested_jitter_ms", 10)),
            block_size=int(kv.get("block_size", 1 << 20)),
            chunk_size=int(kv.get("chunk_size", DEFAULT_CHUNK)),
            repetitions=int(kv.get("repetitions", 1)),
            seed=int(kv.get("seed", 0)),
            cpu_rate=float(kv["cpu_rate"]) if kv.get("cpu_rate") else None,
        )
        if "congested_count" in kv:
            if s.congested:
                raise ScenarioError("give either congested or congested_count, not both")
            s = s.with_congestion(int(kv["congested_count"]))
        sweep = int(kv["sweep"]) if "sweep" in kv else None
    except ScenarioError:
        raise
    except ValueError as e:
        raise ScenarioError(str(e)) from None
    return s, sweep
