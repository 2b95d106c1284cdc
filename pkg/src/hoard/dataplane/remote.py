"""Remote-store stub: byte-range reads over local files.

A dataset's ``remote_url`` (``file://...`` or a bare path) names either a
single file or a directory tree; a directory is exposed as the
concatenation of its files in sorted relative-path order. An optional
throttle emulates a slow NFS/object store, and every read lands in a
request log so tests can count fetches and inject failures.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import urlparse

from ..errors import NotFoundError, RemoteStoreError


def url_to_path(url: str) -> Path:
    parsed = urlparse(url)
    if parsed.scheme in ("", "file"):
        return Path(parsed.path if parsed.scheme else url)
    raise RemoteStoreError(f"unsupported remote url scheme {parsed.scheme!r}")


@dataclass(frozen=True)
class _Extent:
    path: Path
    offset: int  # logical offset of this file within the dataset
    size: int


@dataclass(frozen=True)
class ReadRequest:
    url: str
    offset: int
    length: int


class RemoteStore:
    """Thread-safe. ``fail_after`` makes the store raise once that many
    reads have been served (for partial-failure tests); clear it to
    recover."""

    def __init__(self, bytes_per_second: float | None = None):
        self.bytes_per_second = bytes_per_second
        self.request_log: list[ReadRequest] = []
        self.fail_after: int | None = None
        self._lock = threading.Lock()
        self._extents: dict[str, list[_Extent]] = {}

    # -- layout ----------------------------------------------------------

    def _index(self, url: str) -> list[_Extent]:
        with self._lock:
            cached = self._extents.get(url)
        if cached is not None:
            return cached
        root = url_to_path(url)
        if not root.exists():
            raise NotFoundError(f"remote object {url!r} does not exist")
        extents: list[_Extent] = []
        if root.is_file():
            extents.append(_Extent(root, 0, root.stat().st_size))
        else:
            offset = 0
            files = sorted(p for p in root.rglob("*") if p.is_file())
            for p in files:
                size = p.stat().st_size
                extents.append(_Extent(p, offset, size))
                offset += size
        with self._lock:
            self._extents[url] = extents
        return extents

    def size(self, url: str) -> int:
        extents = self._index(url)
        if not extents:
            return 0
        last = extents[-1]
        return last.offset + last.size

    def invalidate_index(self, url: str | None = None) -> None:
        with self._lock:
            if url is None:
                self._extents.clear()
            else:
                self._extents.pop(url, None)

    # -- reads -------------------------------------------------------------

    @property
    def request_count(self) -> int:
        with self._lock:
            return len(self.request_log)

    def read(self, url: str, offset: int, length: int) -> bytes:
        if offset < 0 or length < 0:
            raise RemoteStoreError(f"invalid range ({offset}, {length})")
        with self._lock:
            if self.fail_after is not None and len(self.request_log) >= self.fail_after:
                raise RemoteStoreError(f"remote store unreachable (reading {url!r})")
            self.request_log.append(ReadRequest(url, offset, length))
        extents = self._index(url)
        total = self.size(url)
        if offset + length > total:
            raise RemoteStoreError(
                f"range [{offset}, {offset + length}) beyond object size {total}")
        if self.bytes_per_second:
            time.sleep(length / self.bytes_per_second)
        parts: list[bytes] = []
        remaining = length
        pos = offset
        for ext in extents:
            if remaining == 0:
                break
            if pos >= ext.offset + ext.size:
                continue
            if pos < ext.offset:
                break
            start = pos - ext.offset
            take = min(remaining, ext.size - start)
            with open(ext.path, "rb") as fh:
                fh.seek(start)
                parts.append(fh.read(take))
            pos += take
            remaining -= take
        data = b"".join(parts)
        if len(data) != length:
            raise RemoteStoreError(
                f"short read from {url!r}: wanted {length}, got {len(data)}")
        return data
