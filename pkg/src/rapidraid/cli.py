"""Command-line entry point: ``rapidraid <command> ...``.

Exit codes: 0 success, 2 usage or input error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import __version__
from .analysis import (
    AnalysisError,
    SearchExhausted,
    classify_dependencies,
    mds_report,
    replication_resilience,
    search_coefficients,
    static_resilience,
    unrecoverable_counts,
    verify_conjecture,
)
from .archive import encode_object, read_object, stage_object
from .bench import ScenarioError, congestion_sweep, parse_scenario, run_scenario, write_csv
from .blockstore import (
    ArchivalState,
    BlockRole,
    BlockStore,
    StoreError,
    verify_coded,
)
from .codespec import CLASSICAL, RAPIDRAID, CodeError, CodeParams, CodeSpec, classical_spec, rapidraid_spec
from .decoder import DecodeError
from .galois import FieldError, FieldSpec
from .jobs import DEFAULT_CHUNK, EncodeAborted
from .transport.sim import TransportError
from .transport.sockets import SocketNetwork, parse_address

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3

log = logging.getLogger("rapidraid")


class UsageError(Exception):
    pass


def _params(args) -> CodeParams:
    try:
        return CodeParams(args.n, args.k, FieldSpec(args.field))
    except (CodeError, FieldError) as e:
        raise UsageError(str(e)) from None


def _code(args, engine: str) -> CodeSpec:
    if getattr(args, "code", None):
        try:
            spec = CodeSpec.from_text(Path(args.code).read_text())
        except OSError as e:
            raise UsageError(f"cannot read code spec: {e}") from None
        if spec.kind != engine:
            raise UsageError(f"code spec is {spec.kind!r} but engine is {engine!r}")
        return spec
    params = _params(args)
    return rapidraid_spec(params, seed=args.seed) if engine == RAPIDRAID else classical_spec(params)


def _endpoints(args, n: int) -> tuple[list[str], dict[str, str]]:
    """Node names, plus TCP addresses when endpoints are given as name=host:port."""
    if not args.endpoints:
        return [f"node{i + 1}" for i in range(n)], {}
    names, addresses = [], {}
    for item in args.endpoints.split(","):
        name, sep, addr = item.strip().partition("=")
        if not name:
            raise UsageError(f"empty endpoint in {args.endpoints!r}")
        names.append(name)
        if sep:
            try:
                parse_address(addr)
            except ValueError as e:
                raise UsageError(str(e)) from None
            addresses[name] = addr
    if len(names) < n:
        raise UsageError(f"a code with n={n} needs at least {n} endpoints, got {len(names)}")
    if addresses and len(addresses) != len(names):
        raise UsageError("give a host:port for every endpoint or for none")
    return names, addresses


def _object_id(text: str) -> bytes:
    try:
        oid = bytes.fromhex(text)
    except ValueError:
        oid = b""
    if len(oid) != 16:
        raise UsageError(f"object id must be 32 hex digits, got {text!r}")
    return oid


def cmd_encode(args) -> int:
    path = Path(args.file)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror or e}") from None
    if not data:
        raise UsageError(f"{path} is empty: nothing to split into blocks")
    spec = _code(args, args.engine)
    if args.chunk_size % spec.params.field.word_bytes:
        raise UsageError(f"chunk size must be a multiple of {spec.params.field.word_bytes} bytes")
    nodes, addresses = _endpoints(args, spec.params.n)
    store = BlockStore(args.store)
    manifest = stage_object(store, data, spec, nodes)
    net = None
    if addresses:
        net = SocketNetwork()
        for name in nodes[:spec.params.n]:
            net.register(name, addresses[name])
        if spec.kind == CLASSICAL:
            net.register("coordinator")
    try:
        outcome = encode_object(store, manifest, args.chunk_size, net, colocate=args.colocate)
    except EncodeAborted as e:
        print(f"encode failed: {e}; replicas left intact", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        if net is not None:
            net.close()
    res, m = outcome.result, outcome.manifest
    p = spec.params
    print(f"object {m.object_id.hex()}")
    print(f"code {spec.kind} ({p.n},{p.k}) over GF(2^{p.field.word_bits}), digest {spec.digest().hex()}")
    print(f"block size {m.block_size} bytes, object length {m.length} bytes")
    print(f"network payload {res.payload_bytes} bytes in {res.frames} frames "
          f"({res.payload_bytes / m.block_size:.2f} blocks)")
    clock = "wall-clock" if addresses else "simulated"
    print(f"encode time {res.elapsed:.6f} s ({clock})")
    print(f"state {m.state.value}, stored {store.usage(m.object_id)} bytes")
    if args.out:
        Path(args.out).write_text(spec.to_text())
    return EXIT_OK


def cmd_decode(args) -> int:
    store = BlockStore(args.store)
    oid = _object_id(args.object_id)
    try:
        data = read_object(store, oid)
    except DecodeError as e:
        print(f"decode failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
    return EXIT_OK


def _write_rows(path: str, rows):
    with open(path, "w", newline="") as f:
        csv.writer(f, lineterminator="\n").writerows(rows)


def cmd_analyze(args) -> int:
    params = _params(args)
    report = classify_dependencies(params, trials=args.trials, seed=args.seed, workers=args.workers)
    print(report.summary())
    if args.out:
        _write_rows(args.out, report.to_csv_rows())
    return EXIT_OK


def cmd_search(args) -> int:
    params = _params(args)
    natural = classify_dependencies(params, trials=args.trials, seed=args.seed, workers=args.workers)
    try:
        coeffs = search_coefficients(params, natural, budget=args.budget, seed=args.seed)
    except SearchExhausted as e:
        print(f"no coefficients free of accidental dependencies within {e.budget} attempts "
              f"(best had {e.best_accidental})", file=sys.stderr)
        return EXIT_RUNTIME
    spec = rapidraid_spec(params, coefficients=coeffs)
    print(f"found coefficients with only the {len(natural.dependent_subsets)} natural dependencies; "
          f"digest {spec.digest().hex()}")
    if args.out:
        Path(args.out).write_text(spec.to_text())
    else:
        sys.stdout.write(spec.to_text())
    return EXIT_OK


def cmd_resilience(args) -> int:
    ps = args.p or [0.2, 0.1, 0.01, 0.001]
    if args.scheme == "3replica":
        results = [replication_resilience(3, p) for p in ps]
        label = "3-replication"
    elif args.scheme == "classical":
        params = _params(args)
        results = [static_resilience(mds_report(params), p) for p in ps]
        label = f"({params.n},{params.k}) classical MDS"
    else:
        params = _params(args)
        report = classify_dependencies(params, trials=args.trials, seed=args.seed, workers=args.workers)
        counts = unrecoverable_counts(params.n, params.k, report.dependent_subsets)
        beyond = [f"{c} of size {s}" for s, c in enumerate(counts) if s >= params.k and c]
        print(f"census: {len(report.dependent_subsets)} dependent {params.k}-subsets; "
              f"unrecoverable survivor sets of size >= k: {', '.join(beyond) or 'none'}")
        results = [static_resilience(report, p) for p in ps]
        label = f"({params.n},{params.k}) RapidRAID"
    rows = [["scheme", "p", "loss_probability", "nines"]]
    for r in results:
        print(f"{label}: p={r.p:g} loss={r.loss_probability:.6e} nines={r.nines}")
        rows.append([args.scheme, f"{r.p:g}", f"{r.loss_probability:.12e}", r.nines])
    if args.out:
        _write_rows(args.out, rows)
    return EXIT_OK


def cmd_verify_conjecture(args) -> int:
    rows = verify_conjecture(args.n_max, ns=args.ns, trials=args.trials, seed=args.seed,
                             workers=args.workers)
    ok = True
    csv_rows = [["n", "k", "dependent", "total", "percent_independent", "mds", "predicted_mds"]]
    for r in rows:
        match = r.mds == r.predicted_mds
        ok &= match
        print(f"({r.n},{r.k}): {r.dependent} dependent of {r.total}, "
              f"{r.percent_independent:.4f}% independent, MDS={'yes' if r.mds else 'no'}"
              f"{'' if match else '  <-- contradicts k >= n-3'}")
        csv_rows.append([r.n, r.k, r.dependent, r.total, f"{r.percent_independent:.6f}", r.mds, r.predicted_mds])
    for n in sorted({r.n for r in rows}):
        mds_ks = [r.k for r in rows if r.n == n and r.mds]
        frontier = min(mds_ks) if mds_ks else None
        print(f"n={n}: MDS frontier k >= {frontier}" if frontier is not None else f"n={n}: no MDS code")
    print("conjecture holds" if ok else "conjecture violated")
    if args.out:
        _write_rows(args.out, csv_rows)
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_bench(args) -> int:
    try:
        text = Path(args.scenario).read_text()
    except OSError as e:
        raise UsageError(f"cannot read scenario: {e}") from None
    try:
        scenario, sweep = parse_scenario(text)
    except (ScenarioError, CodeError, FieldError) as e:
        raise UsageError(f"bad scenario: {e}") from None
    if args.sweep is not None:
        sweep = args.sweep
    results = congestion_sweep(scenario, sweep) if sweep is not None else [run_scenario(scenario)]
    for res in results:
        for engine, s in res.summaries().items():
            print(f"{res.scenario.name} congested={len(res.scenario.congested)} {engine}: "
                  f"median={s.median:.6f}s p25={s.p25:.6f} p75={s.p75:.6f} min={s.min:.6f} max={s.max:.6f}")
    if args.out:
        with open(args.out, "w", newline="") as f:
            write_csv(results, f)
    return EXIT_OK


def cmd_store(args) -> int:
    store = BlockStore(args.store)
    if args.action == "list":
        for m in store.manifests():
            print(f"{m.object_id.hex()} ({m.n},{m.k}) {m.state.value} length={m.length}")
        return EXIT_OK
    if not args.object_id:
        raise UsageError(f"store {args.action} needs an object id")
    oid = _object_id(args.object_id)
    m = store.load_manifest(oid)
    if args.action == "show":
        sys.stdout.write(m.to_text())
        print(f"# stored payload bytes: {store.usage(oid)}")
        return EXIT_OK
    if args.action == "verify":
        bad = verify_coded(store, m) if m.state == ArchivalState.ARCHIVED else []
        if bad:
            print("invalid coded blocks: " + ", ".join(str(i + 1) for i in bad))
            return EXIT_RUNTIME
        print("ok")
        return EXIT_OK
    # drop-replica: the retained replica goes only on explicit request
    if m.state != ArchivalState.ARCHIVED:
        print("object is not archived; refusing to drop its last replica", file=sys.stderr)
        return EXIT_RUNTIME
    if verify_coded(store, m):
        print("coded blocks do not verify; refusing to drop the replica", file=sys.stderr)
        return EXIT_RUNTIME
    for j, node in enumerate(m.replica1):
        if store.has_block(node, oid, j, BlockRole.SOURCE, 1):
            store.delete_block(node, oid, j, BlockRole.SOURCE, 1)
    print(f"dropped replica 1; stored {store.usage(oid)} bytes")
    return EXIT_OK


def _code_args(p: argparse.ArgumentParser, n=16, k=11):
    p.add_argument("--n", type=int, default=n, help=f"codeword length (default {n})")
    p.add_argument("--k", type=int, default=k, help=f"source blocks (default {k})")
    p.add_argument("--field", type=int, choices=(8, 16), default=16, help="word size in bits")
    p.add_argument("--seed", type=int, default=0)


def _census_args(p: argparse.ArgumentParser):
    p.add_argument("--trials", type=int, default=3, help="random coefficient draws per census")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rapidraid", description="Pipelined erasure code toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="stage a file as replicas, encode it and archive it")
    p.add_argument("file")
    _code_args(p)
    p.add_argument("--engine", choices=(CLASSICAL, RAPIDRAID), default=RAPIDRAID)
    p.add_argument("--code", help="code spec file (overrides --n/--k/--field/--seed)")
    p.add_argument("--chunk-size", type=int, default=DEFAULT_CHUNK)
    p.add_argument("--store", default="rapidraid-store")
    p.add_argument("--endpoints", help="comma list of node names, or name=host:port for TCP")
    p.add_argument("--colocate", action="store_true", help="run the classical coordinator on node 1")
    p.add_argument("--out", help="write the code spec used")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="rebuild an object from the store")
    p.add_argument("object_id")
    p.add_argument("--store", default="rapidraid-store")
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("analyze", help="census of linearly dependent k-subsets")
    _code_args(p, 8, 4)
    _census_args(p)
    p.add_argument("--out", help="CSV of dependent subsets")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("search-coeffs", help="find coefficients with no accidental dependencies")
    _code_args(p)
    _census_args(p)
    p.add_argument("--budget", type=int, default=10)
    p.add_argument("--out", help="write the resulting code spec")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("resilience", help="static resilience in nines")
    p.add_argument("--scheme", choices=("3replica", "classical", "rapidraid"), required=True)
    _code_args(p)
    _census_args(p)
    p.add_argument("--p", type=float, action="append", help="node failure probability (repeatable)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_resilience)

    p = sub.add_parser("verify-conjecture", help="check MDS iff k >= n-3 over a range of codes")
    p.add_argument("--n-max", type=int, default=16)
    p.add_argument("--ns", type=int, nargs="+", help="explicit n values (default multiples of 4)")
    p.add_argument("--seed", type=int, default=0)
    _census_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify_conjecture)

    p = sub.add_parser("bench", help="run a benchmark scenario on the simulated network")
    p.add_argument("--scenario", required=True, help="key=value scenario file")
    p.add_argument("--sweep", type=int, help="congestion sweep up to this many nodes")
    p.add_argument("--out", help="CSV output")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("store", help="inspect and administer a block store")
    p.add_argument("action", choices=("list", "show", "verify", "drop-replica"))
    p.add_argument("object_id", nargs="?")
    p.add_argument("--store", default="rapidraid-store")
    p.set_defaults(func=cmd_store)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (StoreError, TransportError, DecodeError, OSError) as e:
        print(f"failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (UsageError, AnalysisError, CodeError, FieldError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
