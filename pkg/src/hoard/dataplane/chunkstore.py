"""On-disk chunk storage for one cache node.

Layout: ``<root>/<dataset_uuid>/<chunk_index as 10-digit decimal>.chunk``
plus a per-dataset ``manifest.txt`` of ``index length crc32c`` records.
The manifest is append-only with last-entry-wins; a negative length marks
an invalidated chunk.
"""

from __future__ import annotations

import os
import threading
from pathlib import Path

from ..errors import NotFoundError
from .crc32c import crc32c

MANIFEST_NAME = "manifest.txt"


class ChunkStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._manifests: dict[str, dict[int, tuple[int, int]]] = {}

    def _dataset_dir(self, dataset_uuid: str) -> Path:
        return self.root / dataset_uuid

    def _chunk_path(self, dataset_uuid: str, index: int) -> Path:
        return self._dataset_dir(dataset_uuid) / f"{index:010d}.chunk"

    # -- manifest -----------------------------------------------------------

    def _load_manifest(self, dataset_uuid: str) -> dict[int, tuple[int, int]]:
        with self._lock:
            cached = self._manifests.get(dataset_uuid)
            if cached is not None:
                return cached
        entries: dict[int, tuple[int, int]] = {}
        path = self._dataset_dir(dataset_uuid) / MANIFEST_NAME
        if path.exists():
            with open(path, "r", encoding="ascii") as fh:
                for line in fh:
                    parts = line.split()
                    if len(parts) != 3:
                        continue
                    index, length, crc = int(parts[0]), int(parts[1]), int(parts[2])
                    if length < 0:
                        entries.pop(index, None)
                    else:
                        entries[index] = (length, crc)
        with self._lock:
            self._manifests[dataset_uuid] = entries
        return entries

    def _append_manifest(self, dataset_uuid: str, index: int, length: int,
                         crc: int) -> None:
        path = self._dataset_dir(dataset_uuid) / MANIFEST_NAME
        with open(path, "a", encoding="ascii") as fh:
            fh.write(f"{index} {length} {crc}\n")

    def manifest(self, dataset_uuid: str) -> dict[int, tuple[int, int]]:
        return dict(self._load_manifest(dataset_uuid))

    # -- chunk operations -----------------------------------------------------

    def has(self, dataset_uuid: str, index: int) -> bool:
        return index in self._load_manifest(dataset_uuid)

    def present_chunks(self, dataset_uuid: str) -> set[int]:
        return set(self._load_manifest(dataset_uuid))

    def stored_bytes(self, dataset_uuid: str) -> int:
        return sum(length for length, _ in self._load_manifest(dataset_uuid).values())

    def recorded_crc(self, dataset_uuid: str, index: int) -> tuple[int, int]:
        entries = self._load_manifest(dataset_uuid)
        if index not in entries:
            raise NotFoundError(f"chunk {dataset_uuid}/{index} not present")
        return entries[index]

    def put(self, dataset_uuid: str, index: int, data: bytes) -> int:
        """Atomically persist a chunk; returns its crc32c."""
        ddir = self._dataset_dir(dataset_uuid)
        ddir.mkdir(parents=True, exist_ok=True)
        crc = crc32c(data)
        path = self._chunk_path(dataset_uuid, index)
        tmp = path.with_suffix(".chunk.tmp")
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
        with self._lock:
            entries = self._manifests.setdefault(dataset_uuid, {})
            entries[index] = (len(data), crc)
        self._append_manifest(dataset_uuid, index, len(data), crc)
        return crc

    def read(self, dataset_uuid: str, index: int) -> tuple[bytes, int]:
        """Returns (stored bytes, recorded crc32c); verification is the
        caller's decision."""
        entries = self._load_manifest(dataset_uuid)
        if index not in entries:
            raise NotFoundError(f"chunk {dataset_uuid}/{index} not present")
        length, crc = entries[index]
        path = self._chunk_path(dataset_uuid, index)
        try:
            with open(path, "rb") as fh:
                data = fh.read()
        except FileNotFoundError:
            raise NotFoundError(f"chunk file missing for {dataset_uuid}/{index}") from None
        return data, crc

    def invalidate(self, dataset_uuid: str, index: int) -> None:
        path = self._chunk_path(dataset_uuid, index)
        if path.exists():
            path.unlink()
        with self._lock:
            self._manifests.setdefault(dataset_uuid, {}).pop(index, None)
        self._append_manifest(dataset_uuid, index, -1, 0)

    def delete_dataset(self, dataset_uuid: str) -> int:
        """Remove every chunk of a dataset; returns bytes freed."""
        freed = self.stored_bytes(dataset_uuid)
        ddir = self._dataset_dir(dataset_uuid)
        if ddir.exists():
            for p in ddir.iterdir():
                p.unlink()
            ddir.rmdir()
        with self._lock:
            self._manifests.pop(dataset_uuid, None)
        return freed
