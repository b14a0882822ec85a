"""In-process cluster on loopback sockets, for tests and local experiments."""

from __future__ import annotations

from collections.abc import Iterable

from ..allocation import Catalog
from ..terms import Term
from .coordinator import Coordinator
from .worker import WorkerServer


class LocalCluster:
    """n worker servers on 127.0.0.1 plus a coordinator, bootstrapped from ``data``."""

    def __init__(self, catalog: Catalog, data: Iterable[tuple[Term, Term, Term]] | None = None):
        self.workers = [WorkerServer(("127.0.0.1", 0), h).start() for h in range(catalog.n_hosts)]
        self.coordinator = Coordinator(catalog, [w.address for w in self.workers])
        if data is not None:
            self.coordinator.bootstrap(data)

    def __enter__(self) -> LocalCluster:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def stop_worker(self, host: int) -> None:
        self.workers[host].stop()

    def close(self) -> None:
        for w in self.workers:
            try:
                w.stop()
            except OSError:
                pass
