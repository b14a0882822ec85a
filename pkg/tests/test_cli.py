import json
import threading
from collections import Counter

import pytest

from rdfshard.allocation import Catalog
from rdfshard.cli import main
from rdfshard.example import CITY_QUERY, db
from rdfshard.oracle import CentralStore, evaluate
from rdfshard.runtime import CoordinatorClient, CoordinatorServer, LocalCluster
from rdfshard.store import iter_ntriples
from rdfshard.terms import Term, numeric_value


@pytest.fixture(scope="module")
def example_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    data, ql = d / "example.nt", d / "example.rq"
    assert main(["gen-example", "--out", str(data), "--query-log", str(ql)]) == 0
    return d, data, ql


def test_gen_example_counts(example_files):
    _, data, _ = example_files
    terms = list(iter_ntriples(str(data)))
    assert len(terms) == 19500
    by_prop = Counter(p.lexical.rsplit("/", 1)[-1] for _, p, _ in terms)
    assert by_prop["name"] == 4500 and by_prop["population"] == 3000 and by_prop["revenue"] == 2000
    assert sum(1 for _, p, o in terms if o == Term.literal("Apple")) == 1
    assert sum(1 for _, p, o in terms if p == db("located") and o == db("Germany")) == 300
    revenues = [numeric_value(o) for _, p, o in terms if p == db("revenue")]
    assert min(revenues) >= 10**9


def test_partition_prints_table(example_files, capsys):
    d, data, ql = example_files
    out = d / "frag.json"
    assert main(["partition", "--data", str(data), "--query-log", str(ql), "--fraction", "1.0", "--out", str(out)]) == 0
    sizes = [f["size"] for f in json.loads(out.read_text())["fragments"]]
    assert sizes == [2000, 4499, 3000, 3000, 2000, 1700, 300, 1, 3000]
    assert "4499" in capsys.readouterr().out


def test_pipeline_end_to_end(example_files, capsys, example_data):
    d, data, ql = example_files
    frag, catalog = d / "frag2.json", d / "catalog.json"
    assert main(["partition", "--data", str(data), "--query-log", str(ql), "--fraction", "1.0", "--out", str(frag)]) == 0
    assert main(["allocate", "--fragmentation", str(frag), "--query-log", str(ql), "--hosts", "3",
                 "--data", str(data), "--out", str(catalog)]) == 0
    assert (d / "catalog.dict.tsv").exists()
    assert main(["explain", "--catalog", str(catalog), "--sparql", CITY_QUERY]) == 0
    assert "MergeJoin" in capsys.readouterr().out
    cat = Catalog.load(catalog)
    with LocalCluster(cat, iter_ntriples(str(data))) as cluster:
        server = CoordinatorServer(cluster.coordinator).start()
        try:
            out = d / "rows.tsv"
            assert main(["query", "--coordinator", server.address, "--sparql", CITY_QUERY, "--out", str(out)]) == 0
            lines = out.read_text().splitlines()
            assert lines[0] == "?name" and len(lines) == 301
            upd = d / "u.txt"
            upd.write_text('- <http://example.org/db/city0> <http://example.org/db/name> "City 0" .\n')
            assert main(["update", "--coordinator", server.address, "--file", str(upd)]) == 0
            res = CoordinatorClient(server.address).execute(CITY_QUERY)
            expected = evaluate(CITY_QUERY, CentralStore(t for t in example_data if t[2] != Term.literal("City 0")))
            assert Counter(res.rows) == expected
        finally:
            server.stop()


def test_optimize_hosts_reports_sweep_argmin(example_files, capsys):
    d, data, ql = example_files
    frag, sweep = d / "frag3.json", d / "sweep.csv"
    main(["partition", "--data", str(data), "--query-log", str(ql), "--fraction", "1.0", "--out", str(frag)])
    capsys.readouterr()
    assert main(["optimize-hosts", "--fragmentation", str(frag), "--query-log", str(ql), "--data", str(data),
                 "--min", "1", "--max", "4", "--sweep-csv", str(sweep)]) == 0
    best = int(capsys.readouterr().out.strip())
    rows = [line.split(",") for line in sweep.read_text().splitlines()[1:]]
    assert best == min(((float(c), int(n)) for n, c in rows))[1]


def test_usage_errors_exit_2(example_files, capsys):
    d, data, ql = example_files
    with pytest.raises(SystemExit) as err:
        main(["partition"])
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        main(["bench", "--coordinator", "x:1", "--queries", "q", "--interval-ms", "0"])
    assert err.value.code == 2
    assert main(["explain", "--sparql", "SELECT * WHERE { ?s ?p ?o }"]) == 2


def test_runtime_errors_exit_3(example_files, tmp_path):
    d, data, ql = example_files
    assert main(["partition", "--data", str(tmp_path / "missing.nt"), "--query-log", str(ql), "--out", str(tmp_path / "f")]) == 3
    bad = tmp_path / "bad.txt"
    bad.write_text("* <http://x/a> <http://x/p> <http://x/b> .\n")
    assert main(["update", "--coordinator", "127.0.0.1:1", "--file", str(bad)]) == 3
    assert main(["query", "--coordinator", "127.0.0.1:1", "--sparql", "SELECT * WHERE { ?s ?p ?o }"]) == 3


def test_gen_queries_and_bench(example_files, capsys):
    d, data, ql = example_files
    qs = d / "gen.rq"
    assert main(["gen-queries", "--data", str(data), "--count", "5", "--seed", "1", "--out", str(qs)]) == 0
    text = qs.read_text()
    n_queries = text.count("SELECT")
    assert 1 <= n_queries <= 5
    assert main(["gen-queries", "--data", str(data), "--count", "5", "--seed", "1", "--out", str(d / "gen2.rq")]) == 0
    assert (d / "gen2.rq").read_text() == text
    frag, catalog = d / "frag4.json", d / "catalog4.json"
    main(["partition", "--data", str(data), "--query-log", str(ql), "--fraction", "1.0", "--out", str(frag)])
    main(["allocate", "--fragmentation", str(frag), "--query-log", str(ql), "--hosts", "2", "--data", str(data),
          "--out", str(catalog)])
    with LocalCluster(Catalog.load(catalog), iter_ntriples(str(data))) as cluster:
        server = CoordinatorServer(cluster.coordinator).start()
        try:
            out = d / "bench.csv"
            assert main(["bench", "--coordinator", server.address, "--queries", str(qs), "--interval-ms", "1",
                         "--out", str(out)]) == 0
            lines = out.read_text().splitlines()
            assert lines[0] == "query_id,run,concurrency,response_ms,rows,remote_pages"
            assert len(lines) == 1 + n_queries
            assert all(int(line.split(",")[4]) >= 1 for line in lines[1:])
        finally:
            server.stop()


def test_serve_worker_prints_address(capsys, monkeypatch):
    import rdfshard.runtime.worker as worker

    started = threading.Event()

    def once(self, *a, **k):
        started.set()
        raise KeyboardInterrupt

    monkeypatch.setattr(worker.WorkerServer, "serve_forever", once)
    assert main(["serve-worker", "--host-id", "0"]) == 0
    assert started.is_set()
    assert capsys.readouterr().out.strip().startswith("127.0.0.1:")
