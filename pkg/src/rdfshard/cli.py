"""rdfshard command line."""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import sys
from pathlib import Path

from .allocation import (
    Catalog,
    Host,
    HostInfo,
    allocate,
    build_fragment_graph,
    optimal_host_count,
    stats_from_store,
)
from .bench import BenchConfig, GenConfig, bench, generate_queries, synthetic_dataset
from .example import EXAMPLE_QUERY_LOG, write_example
from .fragments import Fragmentation, FragmentRouter, partition
from .planner import explain as explain_plan
from .planner import plan_query
from .sparql import LogEntry, format_query_log, parse_sparql, read_query_log
from .store import Dictionary, TripleStore, format_ntriples, iter_ntriples, parse_ntriples
from .workload import build_global_query_graph

EXIT_USAGE = 2
EXIT_RUNTIME = 3

log = logging.getLogger("rdfshard")


class UsageError(Exception):
    pass


def _load_store(path: str) -> tuple[TripleStore, Dictionary]:
    d = Dictionary()
    return TripleStore(parse_ntriples(path, d)), d


def _output(path: str | None):
    if path and path != "-":
        return open(path, "w", encoding="utf-8", newline="")
    return contextlib.nullcontext(sys.stdout)


def _query_text(args) -> str:
    if args.sparql:
        return args.sparql
    if args.file:
        return Path(args.file).read_text(encoding="utf-8")
    raise UsageError("give a query with --sparql or --file")


def _capacities(args, n: int) -> list[int | None]:
    caps = args.capacity or []
    if not caps:
        return [None] * n
    if len(caps) == 1:
        return caps * n
    if len(caps) != n:
        raise UsageError(f"{len(caps)} capacities given for {n} hosts")
    return caps


# ---------------------------------------------------------------- commands


def cmd_gen_example(args) -> None:
    with _output(args.out) as out:
        n = write_example(out)
    if args.query_log:
        Path(args.query_log).write_text(EXAMPLE_QUERY_LOG, encoding="utf-8")
    log.info("wrote %d triples", n)


def cmd_gen_synthetic(args) -> None:
    with _output(args.out) as out:
        for t in synthetic_dataset(args.triples, args.seed):
            out.write(format_ntriples(*t))


def cmd_partition(args) -> None:
    store, d = _load_store(args.data)
    ql = read_query_log(args.query_log)
    res = partition(store, d, ql, args.theta, args.fraction, args.seed, args.cap)
    Path(args.out).write_text(json.dumps(res.fragmentation.to_json(), indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
    sys.stdout.write(res.fragmentation.table())


def _fragment_graph(args, fm: Fragmentation):
    return build_fragment_graph(build_global_query_graph(read_query_log(args.query_log), args.theta), fm)


def cmd_allocate(args) -> None:
    fm = Fragmentation.from_json(json.loads(Path(args.fragmentation).read_text(encoding="utf-8")))
    graph = _fragment_graph(args, fm)
    caps = _capacities(args, args.hosts)
    workers = args.workers.split(",") if args.workers else [""] * args.hosts
    if len(workers) != args.hosts:
        raise UsageError(f"{len(workers)} worker addresses given for {args.hosts} hosts")
    alloc = allocate(fm, graph, [Host(i, caps[i], workers[i]) for i in range(args.hosts)], args.triple_bytes)
    catalog = Catalog(fm, alloc, [HostInfo(i, workers[i], caps[i]) for i in range(args.hosts)])
    if args.data:
        store, d = _load_store(args.data)
        dict_path = str(Path(args.out).with_suffix(".dict.tsv"))
        d.save(dict_path)
        catalog.dictionary_path = dict_path
        catalog.stats = stats_from_store(store.triples(), FragmentRouter(fm, d), fm)
    catalog.save(args.out)
    for h in range(args.hosts):
        print(f"host {h}: {' '.join(map(str, alloc.fragments_on(h)))}")


def cmd_optimize_hosts(args) -> None:
    if args.min < 1 or args.max < args.min:
        raise UsageError("need 1 <= --min <= --max")
    fm = Fragmentation.from_json(json.loads(Path(args.fragmentation).read_text(encoding="utf-8")))
    store, d = _load_store(args.data)
    ql = read_query_log(args.query_log)
    graph = build_fragment_graph(build_global_query_graph(ql, args.theta), fm)
    stats = stats_from_store(store.triples(), FragmentRouter(fm, d), fm)
    cap = args.capacity[0] if args.capacity else None
    res = optimal_host_count(fm, graph, ql, stats, d, range(args.min, args.max + 1), capacity=cap)
    if args.sweep_csv:
        with open(args.sweep_csv, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["hosts", "cost"])
            w.writerows(res.costs)
    print(res.best)


def cmd_serve_worker(args) -> None:
    from .runtime.worker import WorkerServer, parse_address

    server = WorkerServer(parse_address(args.listen), args.host_id)
    log.info("worker %s listening on %s", args.host_id, server.address)
    print(server.address, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def cmd_serve_coordinator(args) -> None:
    from .runtime.coordinator import Coordinator
    from .runtime.endpoint import CoordinatorServer
    from .runtime.worker import parse_address

    catalog = Catalog.load(args.catalog)
    workers = args.workers.split(",") if args.workers else [h.address for h in catalog.hosts]
    coord = Coordinator(catalog, workers)
    if args.data:
        coord.bootstrap(iter_ntriples(args.data))
    else:
        coord.hello()
    server = CoordinatorServer(coord, parse_address(args.listen))
    print(server.address, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def cmd_query(args) -> None:
    from .runtime.endpoint import CoordinatorClient

    res = CoordinatorClient(args.coordinator).execute(_query_text(args))
    with _output(args.out) as out:
        out.write("\t".join("?" + v for v in res.vars) + "\n")
        for row in res.rows:
            out.write("\t".join(t.to_ntriples() for t in row) + "\n")
    print(f"{len(res.rows)} rows, {res.remote_pages} remote pages", file=sys.stderr)


def cmd_explain(args) -> None:
    text = _query_text(args)
    if args.coordinator:
        from .runtime.endpoint import CoordinatorClient

        print(CoordinatorClient(args.coordinator).explain(text))
    elif args.catalog:
        catalog = Catalog.load(args.catalog)
        print(explain_plan(plan_query(parse_sparql(text), catalog)))
    else:
        raise UsageError("explain needs --coordinator or --catalog")


def cmd_update(args) -> None:
    from .runtime.endpoint import CoordinatorClient, parse_update_lines

    src = open(args.file, encoding="utf-8") if args.file != "-" else contextlib.nullcontext(sys.stdin)
    with src as fh:
        lines = fh.read().splitlines()
    parse_update_lines(lines)  # reject malformed input before contacting the cluster
    r = CoordinatorClient(args.coordinator).update(lines)
    print(f"deleted {r['deleted']}, inserted {r['inserted']} on hosts {r['hosts']}")


def cmd_gen_queries(args) -> None:
    terms = list(iter_ntriples(args.data))
    if not terms:
        raise UsageError("data file holds no triples")
    cfg = GenConfig(args.count, args.max_star, args.max_path, args.seed)
    qs = generate_queries(terms, cfg)
    with _output(args.out) as out:
        out.write(format_query_log([LogEntry(q) for q in qs]))


def cmd_bench(args) -> None:
    from .runtime.endpoint import CoordinatorClient

    cfg = BenchConfig(args.concurrency, args.interval_ms, args.repetitions, args.timeout)
    queries = [e.query for e in read_query_log(args.queries)]
    client = CoordinatorClient(args.coordinator, timeout=args.timeout)
    with _output(args.out) as out:
        bench(client, queries, cfg, out)


# ---------------------------------------------------------------- parser


def _positive_float(text: str) -> float:
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rdfshard", description="Workload-aware distributed RDF store")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def query_args(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--sparql", help="query text")
        g.add_argument("--file", help="file holding the query")

    def workload_args(sp):
        sp.add_argument("--query-log", required=True)
        sp.add_argument("--theta", type=_positive_int, default=2)

    sp = sub.add_parser("gen-example", help="write the cities/companies example dataset")
    sp.add_argument("--out", default="-")
    sp.add_argument("--query-log", help="also write the example query log here")
    sp.set_defaults(func=cmd_gen_example)

    sp = sub.add_parser("gen-synthetic", help="write a seeded university-style dataset")
    sp.add_argument("--triples", type=_positive_int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_gen_synthetic)

    sp = sub.add_parser("partition", help="derive a fragmentation from data and a query log")
    sp.add_argument("--data", required=True)
    workload_args(sp)
    sp.add_argument("--fraction", type=float, default=0.1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--cap", type=_positive_int, default=24)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_partition)

    sp = sub.add_parser("allocate", help="place fragments on hosts and write a catalog")
    sp.add_argument("--fragmentation", required=True)
    workload_args(sp)
    sp.add_argument("--hosts", type=_positive_int, required=True)
    sp.add_argument("--capacity", type=_positive_int, action="append", help="bytes; once for all hosts or once per host")
    sp.add_argument("--triple-bytes", type=_positive_int, default=100)
    sp.add_argument("--workers", help="comma-separated worker addresses")
    sp.add_argument("--data", help="N-Triples file used for the dictionary and statistics")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_allocate)

    sp = sub.add_parser("optimize-hosts", help="sweep host counts and report the cheapest")
    sp.add_argument("--fragmentation", required=True)
    workload_args(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--min", type=int, default=1)
    sp.add_argument("--max", type=int, default=8)
    sp.add_argument("--capacity", type=_positive_int, action="append")
    sp.add_argument("--sweep-csv")
    sp.set_defaults(func=cmd_optimize_hosts)

    sp = sub.add_parser("serve-worker", help="run a worker")
    sp.add_argument("--listen", default="127.0.0.1:0")
    sp.add_argument("--host-id", type=int)
    sp.set_defaults(func=cmd_serve_worker)

    sp = sub.add_parser("serve-coordinator", help="bootstrap workers and serve clients")
    sp.add_argument("--catalog", required=True)
    sp.add_argument("--workers", help="comma-separated worker addresses (default: from the catalog)")
    sp.add_argument("--data", help="N-Triples file to bootstrap from")
    sp.add_argument("--listen", default="127.0.0.1:0")
    sp.set_defaults(func=cmd_serve_coordinator)

    sp = sub.add_parser("query", help="run a query through a coordinator")
    sp.add_argument("--coordinator", required=True)
    query_args(sp)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_query)

    sp = sub.add_parser("explain", help="print the distributed plan of a query")
    sp.add_argument("--coordinator")
    sp.add_argument("--catalog")
    query_args(sp)
    sp.set_defaults(func=cmd_explain)

    sp = sub.add_parser("update", help="apply '+'/'-' prefixed N-Triples lines")
    sp.add_argument("--coordinator", required=True)
    sp.add_argument("--file", default="-")
    sp.set_defaults(func=cmd_update)

    sp = sub.add_parser("gen-queries", help="generate random star and path queries")
    sp.add_argument("--data", required=True)
    sp.add_argument("--count", type=_positive_int, default=100)
    sp.add_argument("--max-star", type=_positive_int, default=6)
    sp.add_argument("--max-path", type=_positive_int, default=4)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_gen_queries)

    sp = sub.add_parser("bench", help="time a query set against a coordinator")
    sp.add_argument("--coordinator", required=True)
    sp.add_argument("--queries", required=True)
    sp.add_argument("--concurrency", type=_positive_int, default=1)
    sp.add_argument("--interval-ms", type=_positive_float, default=1000.0)
    sp.add_argument("--repetitions", type=_positive_int, default=1)
    sp.add_argument("--timeout", type=_positive_float, default=60.0)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rdfshard: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, PermissionError) as exc:
        print(f"rdfshard: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        log.debug("command failed", exc_info=True)
        print(f"rdfshard: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
