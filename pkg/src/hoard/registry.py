"""Catalog of datasets and jobs with a crash-safe on-disk state file.

The whole catalog is one JSON document rewritten via write-to-temp plus
atomic rename on every mutation, so a reader (or a crash) only ever sees
the old or the new catalog. Timestamps are a logical counter, not wall
clock, which keeps tests and the simulator deterministic.
"""

from __future__ import annotations

import json
import os
import uuid
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .cachemgr import StripeMap
from .errors import (ConfigError, DuplicateError, IllegalTransitionError,
                     InUseError, NotFoundError)

SCHEMA_VERSION = 1
CATALOG_FILENAME = "catalog.json"

# Chunk ids carry a 16-byte dataset uuid; deriving it from the name keeps
# it stable across catalog reloads and re-registrations.
_UUID_NAMESPACE = uuid.UUID("6f8f57715090da2632453988d9a1501b")


def dataset_uuid(name: str) -> uuid.UUID:
    return uuid.uuid5(_UUID_NAMESPACE, name)


class DatasetState(str, Enum):
    REGISTERED = "Registered"
    CACHING = "Caching"
    CACHED = "Cached"
    EVICTING = "Evicting"
    EVICTED = "Evicted"


LEGAL_TRANSITIONS: frozenset[tuple[DatasetState, DatasetState]] = frozenset({
    (DatasetState.REGISTERED, DatasetState.CACHING),
    (DatasetState.CACHING, DatasetState.CACHED),
    (DatasetState.CACHED, DatasetState.EVICTING),
    (DatasetState.EVICTING, DatasetState.EVICTED),
    (DatasetState.EVICTED, DatasetState.CACHING),  # re-admission
})


class JobStatus(str, Enum):
    QUEUED = "Queued"
    RUNNING = "Running"
    FINISHED = "Finished"


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    remote_url: str
    store_id: str
    size_bytes: int
    prefetch: bool = False
    pinned: bool = False
    credentials: str = ""  # opaque, never interpreted

    def validate(self) -> None:
        if not self.name:
            raise ConfigError("dataset name must be non-empty")
        if self.size_bytes <= 0:
            raise ConfigError(f"dataset {self.name!r}: size_bytes must be > 0")


@dataclass(frozen=True)
class DatasetRecord:
    spec: DatasetSpec
    state: DatasetState = DatasetState.REGISTERED
    stripe_map: StripeMap | None = None
    cached_bytes: int = 0
    last_access: int = 0
    created_at: int = 0

    @property
    def uuid(self) -> uuid.UUID:
        return dataset_uuid(self.spec.name)

    def check_invariants(self) -> None:
        if self.state == DatasetState.CACHED:
            if self.cached_bytes != self.spec.size_bytes or self.stripe_map is None:
                raise IllegalTransitionError(
                    f"dataset {self.spec.name!r}: Cached requires full bytes and a stripe map")
        if self.state in (DatasetState.REGISTERED, DatasetState.EVICTED):
            if self.cached_bytes != 0 or self.stripe_map is not None:
                raise IllegalTransitionError(
                    f"dataset {self.spec.name!r}: {self.state.value} must hold no cache bytes")


@dataclass(frozen=True)
class JobSpec:
    job_id: str
    dataset_name: str
    nodes_requested: int
    gpus_per_node: int
    mount_path: str
    model: str = ""  # name of a ModelProfile, resolved by the simulator

    def validate(self) -> None:
        if not self.job_id:
            raise ConfigError("job_id must be non-empty")
        if self.nodes_requested < 1:
            raise ConfigError(f"job {self.job_id!r}: nodes_requested must be >= 1")
        if self.gpus_per_node < 1:
            raise ConfigError(f"job {self.job_id!r}: gpus_per_node must be >= 1")


@dataclass(frozen=True)
class JobRecord:
    spec: JobSpec
    status: JobStatus = JobStatus.QUEUED
    assigned_nodes: tuple[str, ...] = ()
    locality_tier: str = ""
    queue_reason: str = ""
    submitted_at: int = 0


def _spec_to_dict(spec: DatasetSpec) -> dict:
    return {
        "name": spec.name,
        "remote_url": spec.remote_url,
        "store_id": spec.store_id,
        "size_bytes": spec.size_bytes,
        "prefetch": spec.prefetch,
        "pinned": spec.pinned,
        "credentials": spec.credentials,
    }


def _record_to_dict(rec: DatasetRecord) -> dict:
    return {
        "spec": _spec_to_dict(rec.spec),
        "state": rec.state.value,
        "stripe_map": rec.stripe_map.to_dict() if rec.stripe_map else None,
        "cached_bytes": rec.cached_bytes,
        "last_access": rec.last_access,
        "created_at": rec.created_at,
    }


def _record_from_dict(d: dict) -> DatasetRecord:
    return DatasetRecord(
        spec=DatasetSpec(**d["spec"]),
        state=DatasetState(d["state"]),
        stripe_map=StripeMap.from_dict(d["stripe_map"]) if d.get("stripe_map") else None,
        cached_bytes=d["cached_bytes"],
        last_access=d["last_access"],
        created_at=d["created_at"],
    )


def _job_to_dict(job: JobRecord) -> dict:
    return {
        "spec": {
            "job_id": job.spec.job_id,
            "dataset_name": job.spec.dataset_name,
            "nodes_requested": job.spec.nodes_requested,
            "gpus_per_node": job.spec.gpus_per_node,
            "mount_path": job.spec.mount_path,
            "model": job.spec.model,
        },
        "status": job.status.value,
        "assigned_nodes": list(job.assigned_nodes),
        "locality_tier": job.locality_tier,
        "queue_reason": job.queue_reason,
        "submitted_at": job.submitted_at,
    }


def _job_from_dict(d: dict) -> JobRecord:
    return JobRecord(
        spec=JobSpec(**d["spec"]),
        status=JobStatus(d["status"]),
        assigned_nodes=tuple(d["assigned_nodes"]),
        locality_tier=d["locality_tier"],
        queue_reason=d["queue_reason"],
        submitted_at=d["submitted_at"],
    )


class Registry:
    """Single-writer catalog. Mutations persist before returning."""

    def __init__(self, state_dir: str | Path, eviction_policy: str = "lru"):
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self._path = self.state_dir / CATALOG_FILENAME
        self.clock = 0
        self.eviction_policy = eviction_policy
        self.datasets: dict[str, DatasetRecord] = {}
        self.jobs: dict[str, JobRecord] = {}
        self.pending_commands: list[dict] = []
        if self._path.exists():
            self._load()
        else:
            self.save()

    # -- persistence ---------------------------------------------------

    def _load(self) -> None:
        with open(self._path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(
                f"catalog {self._path}: unsupported schema_version "
                f"{doc.get('schema_version')!r}")
        self.clock = doc["clock"]
        self.eviction_policy = doc.get("eviction_policy", self.eviction_policy)
        self.datasets = {name: _record_from_dict(d)
                         for name, d in doc["datasets"].items()}
        self.jobs = {jid: _job_from_dict(d) for jid, d in doc["jobs"].items()}
        self.pending_commands = list(doc.get("pending_commands", []))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "clock": self.clock,
            "eviction_policy": self.eviction_policy,
            "datasets": {name: _record_to_dict(r)
                         for name, r in sorted(self.datasets.items())},
            "jobs": {jid: _job_to_dict(j) for jid, j in sorted(self.jobs.items())},
            "pending_commands": self.pending_commands,
        }

    def save(self) -> None:
        # write-to-temp + rename: os.replace is atomic on POSIX, so the
        # catalog on disk is always either the old or the new document
        tmp = self._path.with_suffix(".json.tmp")
        data = json.dumps(self.to_dict(), indent=2, sort_keys=False)
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self._path)

    def tick(self) -> int:
        self.clock += 1
        return self.clock

    # -- datasets ------------------------------------------------------

    def add_dataset(self, spec: DatasetSpec) -> DatasetRecord:
        spec.validate()
        if spec.name in self.datasets:
            raise DuplicateError(f"dataset {spec.name!r} already registered")
        now = self.tick()
        record = DatasetRecord(spec=spec, state=DatasetState.REGISTERED,
                               created_at=now, last_access=now)
        self.datasets[spec.name] = record
        if spec.prefetch:
            self.pending_commands.append({"op": "prefetch", "dataset": spec.name})
        self.save()
        return record

    def get_dataset(self, name: str) -> DatasetRecord:
        try:
            return self.datasets[name]
        except KeyError:
            raise NotFoundError(f"unknown dataset {name!r}") from None

    def list_datasets(self) -> list[DatasetRecord]:
        return sorted(self.datasets.values(), key=lambda r: r.created_at)

    def transition(self, name: str, to: DatasetState) -> DatasetRecord:
        record = self.get_dataset(name)
        edge = (record.state, to)
        if edge not in LEGAL_TRANSITIONS:
            raise IllegalTransitionError(
                f"dataset {name!r}: illegal transition "
                f"{record.state.value} -> {to.value}")
        updates: dict = {"state": to}
        if to == DatasetState.CACHED:
            if record.stripe_map is None:
                raise IllegalTransitionError(
                    f"dataset {name!r}: cannot mark Cached without a stripe map")
            updates["cached_bytes"] = record.spec.size_bytes
            updates["last_access"] = self.tick()
        elif to in (DatasetState.EVICTED, DatasetState.REGISTERED):
            updates["cached_bytes"] = 0
            updates["stripe_map"] = None
        new = replace(record, **updates)
        new.check_invariants()
        self.datasets[name] = new
        self.save()
        return new

    def abort_caching(self, name: str) -> DatasetRecord:
        """Roll back a partially-fetched dataset straight to Evicted.

        The lifecycle graph has no edge out of Caching except to Cached, so
        evicting a dataset whose fetch never completed uses this dedicated
        cleanup path instead of transition().
        """
        record = self.get_dataset(name)
        if record.state != DatasetState.CACHING:
            raise IllegalTransitionError(
                f"dataset {name!r} is {record.state.value}, not Caching")
        new = replace(record, state=DatasetState.EVICTED, cached_bytes=0,
                      stripe_map=None)
        new.check_invariants()
        self.datasets[name] = new
        self.save()
        return new

    def set_stripe(self, name: str, stripe: StripeMap | None) -> DatasetRecord:
        record = self.get_dataset(name)
        new = replace(record, stripe_map=stripe)
        self.datasets[name] = new
        self.save()
        return new

    def add_cached_bytes(self, name: str, nbytes: int) -> DatasetRecord:
        record = self.get_dataset(name)
        new = replace(record, cached_bytes=min(record.cached_bytes + nbytes,
                                               record.spec.size_bytes))
        self.datasets[name] = new
        self.save()
        return new

    def touch_dataset(self, name: str) -> DatasetRecord:
        record = self.get_dataset(name)
        new = replace(record, last_access=self.tick())
        self.datasets[name] = new
        self.save()
        return new

    def set_pinned(self, name: str, pinned: bool) -> DatasetRecord:
        record = self.get_dataset(name)
        new = replace(record, spec=replace(record.spec, pinned=pinned))
        self.datasets[name] = new
        self.save()
        return new

    def remove_dataset(self, name: str) -> None:
        """Drop the record. Callers must have evicted any cached bytes first."""
        record = self.get_dataset(name)
        users = self.running_jobs_for(name)
        if users:
            raise InUseError(
                f"dataset {name!r} is in use by running job(s): {', '.join(users)}")
        if record.state not in (DatasetState.REGISTERED, DatasetState.EVICTED):
            raise IllegalTransitionError(
                f"dataset {name!r} is {record.state.value}; evict before deleting")
        del self.datasets[name]
        self.pending_commands = [c for c in self.pending_commands
                                 if c.get("dataset") != name]
        self.save()

    # -- jobs ------------------------------------------------------------

    def submit_job(self, spec: JobSpec) -> JobRecord:
        spec.validate()
        if spec.job_id in self.jobs:
            raise DuplicateError(f"job {spec.job_id!r} already submitted")
        if spec.dataset_name not in self.datasets:
            raise NotFoundError(
                f"job {spec.job_id!r} references unknown dataset {spec.dataset_name!r}")
        record = JobRecord(spec=spec, submitted_at=self.tick())
        self.jobs[spec.job_id] = record
        self.save()
        return record

    def get_job(self, job_id: str) -> JobRecord:
        try:
            return self.jobs[job_id]
        except KeyError:
            raise NotFoundError(f"unknown job {job_id!r}") from None

    def list_jobs(self) -> list[JobRecord]:
        return sorted(self.jobs.values(), key=lambda j: j.submitted_at)

    def update_job(self, job_id: str, **updates) -> JobRecord:
        record = self.get_job(job_id)
        new = replace(record, **updates)
        self.jobs[job_id] = new
        self.save()
        return new

    def running_jobs_for(self, dataset_name: str) -> list[str]:
        return [j.spec.job_id for j in self.jobs.values()
                if j.spec.dataset_name == dataset_name and j.status == JobStatus.RUNNING]

    def datasets_in_use(self) -> set[str]:
        return {j.spec.dataset_name for j in self.jobs.values()
                if j.status == JobStatus.RUNNING}

    # -- command queue ---------------------------------------------------

    def pop_command(self) -> dict | None:
        if not self.pending_commands:
            return None
        cmd = self.pending_commands.pop(0)
        self.save()
        return cmd
