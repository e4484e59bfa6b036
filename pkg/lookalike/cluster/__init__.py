"""
Cluster package initialization
"""

from .client import QueryClient, QueryOutcome, QueryResult, query_client
from .config import ClusterConfig, ShardSpec
from .node import MiningPlan, ShardNode
from .query_service import HitLog, QueryService, serve_queries
from .transfer import LocalTransport, NetworkTransport, PeerTransport, TransferServer, transfer_receive, transfer_send

__all__ = [
    "QueryClient",
    "QueryOutcome",
    "QueryResult",
    "query_client",
    "ClusterConfig",
    "ShardSpec",
    "MiningPlan",
    "ShardNode",
    "HitLog",
    "QueryService",
    "serve_queries",
    "LocalTransport",
    "NetworkTransport",
    "PeerTransport",
    "TransferServer",
    "transfer_receive",
    "transfer_send",
]
