"""Chunk server: serves owned chunks, read-through on miss.

Per-chunk fetches coalesce: concurrent requests for the same absent chunk
trigger exactly one remote read. Stored chunks are checksum-verified on
every read; a mismatch invalidates the chunk and refetches it once.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol

from ..cachemgr import StripeMap
from ..errors import (ChunkCorruptError, HoardError, NotFoundError,
                      NotOwnerError, RemoteStoreError)
from . import wire
from .chunkstore import ChunkStore
from .crc32c import crc32c
from .remote import RemoteStore


def chunk_owner(stripe: StripeMap, index: int) -> str:
    """Owning node for a chunk; pure round-robin over the stripe's nodes."""
    if not 0 <= index < stripe.num_chunks:
        raise NotFoundError(
            f"chunk index {index} out of range [0, {stripe.num_chunks}) "
            f"for dataset {stripe.dataset_name!r}")
    return stripe.owner(index)


@dataclass(frozen=True)
class DatasetHandle:
    """Everything a server needs to serve one dataset."""

    uuid_hex: str
    stripe: StripeMap
    remote_url: str


class DatasetResolver(Protocol):
    def __call__(self, dataset_uuid_hex: str) -> DatasetHandle: ...


@dataclass
class FetchSummary:
    chunks_fetched: int = 0
    bytes_fetched: int = 0
    duration_s: float = 0.0


class _InFlight:
    __slots__ = ("event", "data", "error")

    def __init__(self):
        self.event = threading.Event()
        self.data: bytes | None = None
        self.error: Exception | None = None


class ChunkServer:
    """One per cache node.

    ``on_chunk_cached(dataset_name, nbytes)`` fires exactly once per chunk
    that transitions to present, letting the catalog track cached bytes.
    """

    def __init__(self, node_id: str, store: ChunkStore, remote: RemoteStore,
                 resolver: DatasetResolver,
                 on_chunk_cached: Callable[[str, int], None] | None = None):
        self.node_id = node_id
        self.store = store
        self.remote = remote
        self.resolver = resolver
        self.on_chunk_cached = on_chunk_cached
        self._lock = threading.Lock()
        self._inflight: dict[tuple[str, int], _InFlight] = {}

    # -- core serve path -----------------------------------------------------

    def serve_chunk(self, dataset_uuid_hex: str, index: int) -> bytes:
        handle = self.resolver(dataset_uuid_hex)
        owner = chunk_owner(handle.stripe, index)
        if owner != self.node_id:
            raise NotOwnerError(
                f"node {self.node_id!r} does not own chunk {index} of "
                f"{handle.stripe.dataset_name!r}; owner is {owner!r}",
                owner=owner)
        if self.store.has(dataset_uuid_hex, index):
            data, recorded = self.store.read(dataset_uuid_hex, index)
            if crc32c(data) == recorded:
                return data
            # corrupted on disk: drop, refetch once, verify the stored copy
            self.store.invalidate(dataset_uuid_hex, index)
            self._fetch(handle, index)
            data, recorded = self.store.read(dataset_uuid_hex, index)
            if crc32c(data) != recorded:
                raise ChunkCorruptError(
                    f"chunk {index} of {handle.stripe.dataset_name!r} failed "
                    f"verification after refetch")
            return data
        return self._fetch(handle, index)

    def chunk_state(self, dataset_uuid_hex: str, index: int) -> tuple[int, int, int]:
        """(wire chunk state, stored length, stored crc32c)."""
        with self._lock:
            fetching = (dataset_uuid_hex, index) in self._inflight
        if fetching:
            return wire.CHUNK_FETCHING, 0, 0
        if self.store.has(dataset_uuid_hex, index):
            length, crc = self.store.recorded_crc(dataset_uuid_hex, index)
            return wire.CHUNK_PRESENT, length, crc
        return wire.CHUNK_ABSENT, 0, 0

    def ensure_chunk(self, dataset_uuid_hex: str, index: int) -> int:
        """Fetch the chunk if absent; returns bytes fetched (0 on a hit)."""
        handle = self.resolver(dataset_uuid_hex)
        if chunk_owner(handle.stripe, index) != self.node_id:
            raise NotOwnerError(
                f"node {self.node_id!r} does not own chunk {index}",
                owner=chunk_owner(handle.stripe, index))
        if self.store.has(dataset_uuid_hex, index):
            return 0
        return len(self._fetch(handle, index))

    def prefetch(self, dataset_uuid_hex: str) -> FetchSummary:
        """Fetch every owned absent chunk of the dataset; idempotent. A
        remote failure stops early with partial progress retained."""
        handle = self.resolver(dataset_uuid_hex)
        summary = FetchSummary()
        start = time.monotonic()
        try:
            for index in range(handle.stripe.num_chunks):
                if handle.stripe.owner(index) != self.node_id:
                    continue
                fetched = self.ensure_chunk(dataset_uuid_hex, index)
                if fetched:
                    summary.chunks_fetched += 1
                    summary.bytes_fetched += fetched
        finally:
            summary.duration_s = time.monotonic() - start
        return summary

    def _fetch(self, handle: DatasetHandle, index: int) -> bytes:
        key = (handle.uuid_hex, index)
        with self._lock:
            pending = self._inflight.get(key)
            if pending is None:
                pending = _InFlight()
                self._inflight[key] = pending
                leader = True
            else:
                leader = False
        if not leader:
            pending.event.wait()
            if pending.error is not None:
                raise pending.error
            assert pending.data is not None
            return pending.data
        try:
            stripe = handle.stripe
            offset = index * stripe.chunk_size_bytes
            length = stripe.chunk_length(index)
            data = self.remote.read(handle.remote_url, offset, length)
            self.store.put(handle.uuid_hex, index, data)
            if self.on_chunk_cached is not None:
                self.on_chunk_cached(stripe.dataset_name, len(data))
            pending.data = data
            return data
        except Exception as e:
            pending.error = e
            raise
        finally:
            with self._lock:
                del self._inflight[key]
            pending.event.set()

    # -- wire entry point ------------------------------------------------------

    def handle_frame(self, frame: wire.Frame) -> wire.Frame:
        uuid_hex = frame.dataset_uuid.hex()

        def error(code: int, message: str) -> wire.Frame:
            return wire.Frame(
                msg_type=wire.MSG_ERROR, request_id=frame.request_id,
                dataset_uuid=frame.dataset_uuid, chunk_index=frame.chunk_index,
                payload=wire.encode_error_payload(code, message))

        if frame.msg_type == wire.MSG_GET_CHUNK:
            try:
                data = self.serve_chunk(uuid_hex, frame.chunk_index)
            except NotOwnerError as e:
                return error(wire.ERR_NOT_OWNER, f"{e}")
            except NotFoundError as e:
                code = (wire.ERR_OUT_OF_RANGE if "out of range" in str(e)
                        else wire.ERR_UNKNOWN_DATASET)
                return error(code, f"{e}")
            except RemoteStoreError as e:
                return error(wire.ERR_REMOTE_UNAVAILABLE, f"{e}")
            except ChunkCorruptError as e:
                return error(wire.ERR_CORRUPT, f"{e}")
            except HoardError as e:
                return error(wire.ERR_BAD_REQUEST, f"{e}")
            return wire.Frame(msg_type=wire.MSG_CHUNK_DATA,
                              request_id=frame.request_id,
                              dataset_uuid=frame.dataset_uuid,
                              chunk_index=frame.chunk_index, payload=data)

        if frame.msg_type == wire.MSG_STAT:
            try:
                state, length, crc = self.chunk_state(uuid_hex, frame.chunk_index)
            except HoardError as e:
                return error(wire.ERR_UNKNOWN_DATASET, f"{e}")
            return wire.Frame(msg_type=wire.MSG_STAT_RESP,
                              request_id=frame.request_id,
                              dataset_uuid=frame.dataset_uuid,
                              chunk_index=frame.chunk_index,
                              payload=wire.encode_stat_payload(state, length, crc))

        return error(wire.ERR_BAD_REQUEST,
                     f"unsupported message type {frame.msg_type}")

    def handle_frame_bytes(self, raw: bytes) -> bytes:
        return wire.encode_frame(self.handle_frame(wire.decode_frame(raw)))
