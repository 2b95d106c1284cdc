"""Control plane: wires registry, cache manager, scheduler, and data plane.

All catalog mutations are serialized behind one lock (the desk-scale
realization of a single-writer command loop); planning functions run on
snapshots. Long data-plane operations (prefetch, reads) run outside the
lock and re-enter it per chunk to account cached bytes.
"""

from __future__ import annotations

import threading
from pathlib import Path

from . import cachemgr, scheduler
from .cachemgr import CacheState, StripeMap
from .dataplane import LocalCluster, RemoteStore
from .dataplane.server import FetchSummary
from .errors import (CapacityError, IllegalTransitionError,
                     InsufficientGPUsError, InUseError, NotFoundError)
from .events import EventLog
from .registry import (DatasetRecord, DatasetSpec, DatasetState, JobRecord,
                       JobSpec, JobStatus, Registry)
from .scheduler import JobPlacement
from .topology import ClusterTopology, load_topology, serialize_topology

TOPOLOGY_FILENAME = "topology.yaml"
EVENTS_FILENAME = "events.log"


class ControlPlane:
    def __init__(self, state_dir: str | Path, topology: ClusterTopology | None = None,
                 eviction_policy: str = cachemgr.POLICY_LRU,
                 chunk_size_bytes: int = cachemgr.DEFAULT_CHUNK_SIZE,
                 log_format: str = "text",
                 remote_bytes_per_second: float | None = None):
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self.registry = Registry(self.state_dir, eviction_policy=eviction_policy)
        self.topology = self._resolve_topology(topology)
        self.chunk_size_bytes = chunk_size_bytes
        self.events = EventLog(self.state_dir / EVENTS_FILENAME, fmt=log_format)
        self.remote = RemoteStore(bytes_per_second=remote_bytes_per_second)
        self.cluster = LocalCluster(
            self.state_dir / "cache",
            node_ids=[n.node_id for n in self.topology.nodes],
            remote=self.remote,
            on_chunk_cached=self._on_chunk_cached)
        self.cache_state = self._rebuild_cache_state()

    # -- bootstrap --------------------------------------------------------

    def _resolve_topology(self, topology: ClusterTopology | None) -> ClusterTopology:
        path = self.state_dir / TOPOLOGY_FILENAME
        if topology is not None:
            path.write_text(serialize_topology(topology), encoding="utf-8")
            return topology
        if path.exists():
            return load_topology(path.read_text(encoding="utf-8"))
        raise NotFoundError(
            f"no topology: pass --topology once or place {TOPOLOGY_FILENAME} "
            f"in {self.state_dir}")

    def _rebuild_cache_state(self) -> CacheState:
        state = CacheState.from_topology(self.topology,
                                         policy=self.registry.eviction_policy)
        residents = [r for r in self.registry.list_datasets()
                     if r.state in (DatasetState.CACHING, DatasetState.CACHED)
                     and r.stripe_map is not None]
        residents.sort(key=lambda r: r.last_access)
        for record in residents:
            state.charge(record.stripe_map, record.last_access,
                         pinned=record.spec.pinned)
            self.cluster.register(record.uuid.hex, record.stripe_map,
                                  record.spec.remote_url)
        return state

    def _on_chunk_cached(self, dataset_name: str, nbytes: int) -> None:
        with self._lock:
            self.registry.add_cached_bytes(dataset_name, nbytes)

    # -- datasets -----------------------------------------------------------

    def add_dataset(self, spec: DatasetSpec) -> DatasetRecord:
        with self._lock:
            if spec.store_id and not self.topology.has_store(spec.store_id):
                raise NotFoundError(f"unknown remote store {spec.store_id!r}")
            record = self.registry.add_dataset(spec)
            self.events.emit("dataset_added", dataset=spec.name,
                             size_bytes=spec.size_bytes, prefetch=spec.prefetch)
            return record

    def list_datasets(self) -> list[DatasetRecord]:
        with self._lock:
            return self.registry.list_datasets()

    def lru_position(self, name: str) -> int | None:
        """0 = next eviction victim; None when pinned or not resident."""
        with self._lock:
            queue = cachemgr.lru_victims(self.cache_state)
            return queue.index(name) if name in queue else None

    def _ensure_admitted(self, name: str,
                         hint: list[str] | None = None) -> DatasetRecord:
        record = self.registry.get_dataset(name)
        if record.state in (DatasetState.CACHING, DatasetState.CACHED):
            return record
        decision = cachemgr.admit(
            name, record.spec.size_bytes, self.topology, self.cache_state,
            hint=hint, in_use=self.registry.datasets_in_use(),
            chunk_size_bytes=self.chunk_size_bytes)
        if not decision.admitted:
            self.events.emit("error_admission_rejected", dataset=name,
                             reason=decision.reason)
            raise CapacityError(decision.reason)
        for victim in decision.victims:
            self.evict_dataset(victim)
        return self._commit_stripe(name, decision.stripe)

    def _commit_stripe(self, name: str, stripe: StripeMap) -> DatasetRecord:
        record = self.registry.get_dataset(name)
        self.cache_state.charge(stripe, self.registry.tick(),
                                pinned=record.spec.pinned)
        self.registry.set_stripe(name, stripe)
        record = self.registry.transition(name, DatasetState.CACHING)
        self.cluster.register(record.uuid.hex, stripe, record.spec.remote_url)
        self.events.emit("dataset_admitted", dataset=name,
                         cache_nodes=",".join(stripe.cache_nodes),
                         num_chunks=stripe.num_chunks)
        return record

    def prefetch_dataset(self, name: str,
                         hint: list[str] | None = None) -> FetchSummary:
        with self._lock:
            record = self._ensure_admitted(name, hint=hint)
            uuid_hex = record.uuid.hex
        summary = self.cluster.prefetch(uuid_hex)
        with self._lock:
            self._maybe_mark_cached(name)
            self.events.emit("dataset_prefetched", dataset=name,
                             chunks=summary.chunks_fetched,
                             bytes=summary.bytes_fetched)
        return summary

    def _maybe_mark_cached(self, name: str) -> DatasetRecord:
        record = self.registry.get_dataset(name)
        if (record.state == DatasetState.CACHING and record.stripe_map is not None
                and record.cached_bytes >= record.spec.size_bytes):
            record = self.registry.transition(name, DatasetState.CACHED)
            self.cache_state.touch(name, record.last_access)
        return record

    def evict_dataset(self, name: str, force: bool = False) -> dict[str, int]:
        """Remove a dataset's chunks everywhere; returns bytes freed per node."""
        with self._lock:
            record = self.registry.get_dataset(name)
            users = self.registry.running_jobs_for(name)
            if users:
                raise InUseError(
                    f"dataset {name!r} is read by running job(s): {', '.join(users)}")
            if record.state == DatasetState.CACHED:
                self.cache_state.release(name, force=force)  # validates pin
                self.registry.transition(name, DatasetState.EVICTING)
                self.cluster.delete_dataset(record.uuid.hex)
                self.registry.transition(name, DatasetState.EVICTED)
            elif record.state == DatasetState.CACHING:
                self.cache_state.release(name, force=force)
                self.cluster.delete_dataset(record.uuid.hex)
                self.registry.abort_caching(name)
            else:
                raise IllegalTransitionError(
                    f"dataset {name!r} is {record.state.value}; nothing to evict")
            freed = record.stripe_map.bytes_per_node() if record.stripe_map else {}
            self.events.emit("dataset_evicted", dataset=name, force=force,
                             freed_bytes=sum(freed.values()))
            return freed

    def delete_dataset(self, name: str) -> None:
        with self._lock:
            record = self.registry.get_dataset(name)
            users = self.registry.running_jobs_for(name)
            if users:
                raise InUseError(
                    f"dataset {name!r} is read by running job(s): {', '.join(users)}")
            if record.state in (DatasetState.CACHED, DatasetState.CACHING):
                self.evict_dataset(name, force=True)
            self.registry.remove_dataset(name)
            self.events.emit("dataset_deleted", dataset=name)

    def pin_dataset(self, name: str, pinned: bool = True) -> DatasetRecord:
        with self._lock:
            record = self.registry.set_pinned(name, pinned)
            if name in self.cache_state.residents:
                if pinned:
                    self.cache_state.pin(name)
                else:
                    self.cache_state.unpin(name)
            return record

    def touch_dataset(self, name: str) -> None:
        with self._lock:
            record = self.registry.touch_dataset(name)
            if name in self.cache_state.residents:
                self.cache_state.touch(name, record.last_access)

    # -- command queue -------------------------------------------------------

    def run_pending(self) -> list[dict]:
        """Drain queued commands (asynchronous prefetches)."""
        done = []
        while True:
            with self._lock:
                cmd = self.registry.pop_command()
            if cmd is None:
                return done
            if cmd.get("op") == "prefetch":
                self.prefetch_dataset(cmd["dataset"])
            done.append(cmd)

    # -- jobs ------------------------------------------------------------------

    def _gpu_free(self) -> dict[str, int]:
        running = [(j.assigned_nodes, j.spec.gpus_per_node)
                   for j in self.registry.jobs.values()
                   if j.status == JobStatus.RUNNING]
        return scheduler.build_gpu_free(self.topology, running)

    def _place(self, spec: JobSpec) -> JobPlacement:
        record = self.registry.get_dataset(spec.dataset_name)
        gpu_free = self._gpu_free()
        if spec.dataset_name in self.cache_state.residents:
            return scheduler.place_job(spec, self.topology, self.cache_state,
                                       gpu_free).placement
        try:
            plan = scheduler.place_job(
                spec, self.topology, self.cache_state, gpu_free,
                dataset_size_bytes=record.spec.size_bytes,
                chunk_size_bytes=self.chunk_size_bytes)
        except CapacityError:
            # nothing fits without eviction; let the policy make room
            self._ensure_admitted(spec.dataset_name)
            return scheduler.place_job(spec, self.topology, self.cache_state,
                                       gpu_free).placement
        stripe = StripeMap.build(spec.dataset_name, record.spec.size_bytes,
                                 self.chunk_size_bytes, plan.stripe_nodes)
        self._commit_stripe(spec.dataset_name, stripe)
        return plan.placement

    def submit_job(self, spec: JobSpec) -> JobRecord:
        with self._lock:
            self.registry.submit_job(spec)
            try:
                placement = self._place(spec)
            except InsufficientGPUsError as e:
                record = self.registry.update_job(
                    spec.job_id, status=JobStatus.QUEUED, queue_reason=str(e))
                self.events.emit("job_queued", job=spec.job_id, reason=str(e))
                return record
            record = self.registry.update_job(
                spec.job_id, status=JobStatus.RUNNING,
                assigned_nodes=placement.assigned_nodes,
                locality_tier=placement.locality_tier.label(), queue_reason="")
            self.touch_dataset(spec.dataset_name)
            self.events.emit("job_placed", job=spec.job_id,
                             nodes=",".join(placement.assigned_nodes),
                             tier=placement.locality_tier.label())
            return record

    def finish_job(self, job_id: str) -> list[JobRecord]:
        """Mark a job finished, then retry queued jobs in FIFO order.
        Returns the jobs that started as a result."""
        with self._lock:
            job = self.registry.get_job(job_id)
            if job.status != JobStatus.RUNNING:
                raise IllegalTransitionError(f"job {job_id!r} is not running")
            self.registry.update_job(job_id, status=JobStatus.FINISHED)
            self.events.emit("job_finished", job=job_id)
            started = []
            for queued in self.registry.list_jobs():
                if queued.status != JobStatus.QUEUED:
                    continue
                try:
                    placement = self._place(queued.spec)
                except InsufficientGPUsError:
                    continue
                record = self.registry.update_job(
                    queued.spec.job_id, status=JobStatus.RUNNING,
                    assigned_nodes=placement.assigned_nodes,
                    locality_tier=placement.locality_tier.label(),
                    queue_reason="")
                self.touch_dataset(queued.spec.dataset_name)
                self.events.emit("job_placed", job=queued.spec.job_id,
                                 nodes=",".join(placement.assigned_nodes),
                                 tier=placement.locality_tier.label())
                started.append(record)
            return started

    # -- reads --------------------------------------------------------------

    def read_dataset(self, name: str, offset: int = 0,
                     length: int | None = None,
                     local_node_id: str | None = None) -> bytes:
        """Byte range of a dataset via its chunk servers (read-through)."""
        with self._lock:
            record = self.registry.get_dataset(name)
            if record.stripe_map is None:
                self._ensure_admitted(name)
                record = self.registry.get_dataset(name)
            handle = self.cluster._resolve(record.uuid.hex)
        if length is None:
            length = record.spec.size_bytes - offset
        client = self.cluster.client(local_node_id)
        data = client.read(handle, offset, length)
        with self._lock:
            self.touch_dataset(name)
            self._maybe_mark_cached(name)
        return data
