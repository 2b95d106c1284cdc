"""Chunk-level data path: stores, servers, wire protocol, read-through client."""

from .chunkstore import ChunkStore
from .client import DatasetClient, LocalCluster, LocalWireTransport, TcpTransport
from .remote import RemoteStore
from .server import ChunkServer, chunk_owner

__all__ = [
    "ChunkServer",
    "ChunkStore",
    "DatasetClient",
    "LocalCluster",
    "LocalWireTransport",
    "RemoteStore",
    "TcpTransport",
    "chunk_owner",
]
