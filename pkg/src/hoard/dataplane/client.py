"""Dataset client: reassembles byte ranges from the owning chunk servers.

Chunks owned by the client's co-located node are read directly (no wire
bytes); everything else goes through a transport speaking the binary
protocol. Chunk requests run in parallel but reassembly is offset-ordered.
"""

from __future__ import annotations

import socket
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from ..cachemgr import StripeMap
from ..errors import (ChunkCorruptError, HoardError, NotFoundError,
                      NotOwnerError, RemoteStoreError, WireProtocolError)
from . import wire
from .chunkstore import ChunkStore
from .remote import RemoteStore
from .server import ChunkServer, DatasetHandle, FetchSummary

_ERROR_EXCEPTIONS = {
    wire.ERR_NOT_OWNER: NotOwnerError,
    wire.ERR_OUT_OF_RANGE: NotFoundError,
    wire.ERR_REMOTE_UNAVAILABLE: RemoteStoreError,
    wire.ERR_CORRUPT: ChunkCorruptError,
    wire.ERR_UNKNOWN_DATASET: NotFoundError,
    wire.ERR_BAD_REQUEST: HoardError,
}


def raise_for_error(frame: wire.Frame) -> None:
    if frame.msg_type != wire.MSG_ERROR:
        return
    code, message = wire.decode_error_payload(frame.payload)
    raise _ERROR_EXCEPTIONS.get(code, HoardError)(message)


class LocalWireTransport:
    """In-process transport that still encodes/decodes real frames, with
    per-edge byte counters so tests can assert traffic locality."""

    def __init__(self, servers: dict[str, ChunkServer]):
        self.servers = servers
        self.bytes_sent: dict[tuple[str, str], int] = {}
        self._lock = threading.Lock()

    def request(self, src: str, dst: str, frame: wire.Frame) -> wire.Frame:
        raw = wire.encode_frame(frame)
        server = self.servers.get(dst)
        if server is None:
            raise NotFoundError(f"no chunk server for node {dst!r}")
        resp = server.handle_frame_bytes(raw)
        with self._lock:
            self.bytes_sent[(src, dst)] = self.bytes_sent.get((src, dst), 0) + len(raw)
            self.bytes_sent[(dst, src)] = self.bytes_sent.get((dst, src), 0) + len(resp)
        return wire.decode_frame(resp)

    def wire_bytes_to(self, dst: str) -> int:
        with self._lock:
            return sum(n for (_, to), n in self.bytes_sent.items() if to == dst)


class TcpTransport:
    """One persistent connection per peer node, requests serialized per
    connection."""

    def __init__(self, addresses: dict[str, tuple[str, int]], timeout: float = 30.0):
        self.addresses = addresses
        self.timeout = timeout
        self._conns: dict[str, socket.socket] = {}
        self._locks: dict[str, threading.Lock] = {n: threading.Lock() for n in addresses}

    def _connect(self, node: str) -> socket.socket:
        if node not in self.addresses:
            raise NotFoundError(f"no address known for node {node!r}")
        sock = socket.create_connection(self.addresses[node], timeout=self.timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return sock

    def request(self, src: str, dst: str, frame: wire.Frame) -> wire.Frame:
        lock = self._locks.setdefault(dst, threading.Lock())
        with lock:
            sock = self._conns.get(dst)
            if sock is None:
                sock = self._connect(dst)
                self._conns[dst] = sock
            try:
                sock.sendall(wire.encode_frame(frame))
                return wire.read_frame(lambda n: _recv_exactly(sock, n))
            except (OSError, WireProtocolError):
                self._conns.pop(dst, None)
                sock.close()
                raise

    def close(self) -> None:
        for sock in self._conns.values():
            sock.close()
        self._conns.clear()


def _recv_exactly(sock: socket.socket, n: int) -> bytes:
    parts = []
    remaining = n
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            raise WireProtocolError("connection closed mid-frame")
        parts.append(chunk)
        remaining -= len(chunk)
    return b"".join(parts)


class DatasetClient:
    def __init__(self, transport, local_node_id: str | None = None,
                 local_server: ChunkServer | None = None,
                 max_parallel: int = 8):
        self.transport = transport
        self.local_node_id = local_node_id
        self.local_server = local_server
        self.max_parallel = max_parallel
        self._request_id = 0
        self._id_lock = threading.Lock()

    def _next_request_id(self) -> int:
        with self._id_lock:
            self._request_id += 1
            return self._request_id

    def fetch_chunk(self, handle: DatasetHandle, index: int) -> bytes:
        owner = handle.stripe.owner(index)
        if owner == self.local_node_id and self.local_server is not None:
            return self.local_server.serve_chunk(handle.uuid_hex, index)
        frame = wire.Frame(
            msg_type=wire.MSG_GET_CHUNK, request_id=self._next_request_id(),
            dataset_uuid=bytes.fromhex(handle.uuid_hex), chunk_index=index)
        resp = self.transport.request(self.local_node_id or "client", owner, frame)
        raise_for_error(resp)
        if resp.msg_type != wire.MSG_CHUNK_DATA:
            raise WireProtocolError(f"unexpected response type {resp.msg_type}")
        return resp.payload

    def read(self, handle: DatasetHandle, offset: int, length: int) -> bytes:
        """Exactly the dataset bytes in [offset, offset+length)."""
        stripe = handle.stripe
        if offset < 0 or length < 0 or offset + length > stripe.size_bytes:
            raise NotFoundError(
                f"range [{offset}, {offset + length}) out of bounds for "
                f"dataset {stripe.dataset_name!r} of {stripe.size_bytes} bytes")
        if length == 0:
            return b""
        cs = stripe.chunk_size_bytes
        first = offset // cs
        last = (offset + length - 1) // cs
        indices = list(range(first, last + 1))
        if len(indices) == 1:
            chunks = [self.fetch_chunk(handle, first)]
        else:
            with ThreadPoolExecutor(max_workers=min(self.max_parallel,
                                                    len(indices))) as pool:
                chunks = list(pool.map(lambda i: self.fetch_chunk(handle, i),
                                       indices))
        parts = []
        for index, data in zip(indices, chunks):
            lo = max(offset, index * cs) - index * cs
            hi = min(offset + length, index * cs + len(data)) - index * cs
            parts.append(data[lo:hi])
        return b"".join(parts)


class LocalCluster:
    """In-process set of chunk servers, one per cache node, sharing a
    remote-store stub. The desk-scale stand-in for a deployed cluster and
    the harness the data-plane tests run against."""

    def __init__(self, cache_root: str | Path, node_ids: list[str],
                 remote: RemoteStore | None = None, on_chunk_cached=None):
        self.cache_root = Path(cache_root)
        self.remote = remote if remote is not None else RemoteStore()
        self._handles: dict[str, DatasetHandle] = {}
        self.servers: dict[str, ChunkServer] = {}
        for node_id in node_ids:
            store = ChunkStore(self.cache_root / node_id)
            self.servers[node_id] = ChunkServer(
                node_id=node_id, store=store, remote=self.remote,
                resolver=self._resolve, on_chunk_cached=on_chunk_cached)
        self.transport = LocalWireTransport(self.servers)

    def _resolve(self, dataset_uuid_hex: str) -> DatasetHandle:
        try:
            return self._handles[dataset_uuid_hex]
        except KeyError:
            raise NotFoundError(
                f"no dataset registered for uuid {dataset_uuid_hex}") from None

    def register(self, uuid_hex: str, stripe: StripeMap, remote_url: str) -> DatasetHandle:
        handle = DatasetHandle(uuid_hex=uuid_hex, stripe=stripe,
                               remote_url=remote_url)
        self._handles[uuid_hex] = handle
        return handle

    def unregister(self, uuid_hex: str) -> None:
        self._handles.pop(uuid_hex, None)

    def client(self, local_node_id: str | None = None,
               max_parallel: int = 8) -> DatasetClient:
        server = self.servers.get(local_node_id) if local_node_id else None
        return DatasetClient(self.transport, local_node_id=local_node_id,
                             local_server=server, max_parallel=max_parallel)

    def prefetch(self, uuid_hex: str) -> FetchSummary:
        """Fetch every absent chunk onto its owner; idempotent. On a remote
        failure, progress made so far is kept and the error propagates."""
        handle = self._resolve(uuid_hex)
        total = FetchSummary()
        start = time.monotonic()
        try:
            for node_id in handle.stripe.cache_nodes:
                part = self.servers[node_id].prefetch(uuid_hex)
                total.chunks_fetched += part.chunks_fetched
                total.bytes_fetched += part.bytes_fetched
        finally:
            total.duration_s = time.monotonic() - start
        return total

    def present_chunks(self, uuid_hex: str) -> set[int]:
        handle = self._resolve(uuid_hex)
        present: set[int] = set()
        for node_id in handle.stripe.cache_nodes:
            present |= self.servers[node_id].store.present_chunks(uuid_hex)
        return present

    def delete_dataset(self, uuid_hex: str) -> dict[str, int]:
        handle = self._handles.get(uuid_hex)
        freed = {}
        servers = (handle.stripe.cache_nodes if handle is not None
                   else list(self.servers))
        for node_id in servers:
            freed[node_id] = self.servers[node_id].store.delete_dataset(uuid_hex)
        self.unregister(uuid_hex)
        return freed
