from .cluster import LocalCluster
from .coordinator import Coordinator, QueryAborted, QueryResult, Update, UpdateRejected, UpdateResult
from .endpoint import CoordinatorClient, CoordinatorServer, parse_update_lines
from .deploy import Deployment, Exchange, split_and_deploy
from .worker import WorkerServer

__all__ = [
    "Coordinator",
    "CoordinatorClient",
    "CoordinatorServer",
    "Deployment",
    "Exchange",
    "LocalCluster",
    "QueryAborted",
    "QueryResult",
    "Update",
    "UpdateRejected",
    "UpdateResult",
    "WorkerServer",
    "parse_update_lines",
    "split_and_deploy",
]
