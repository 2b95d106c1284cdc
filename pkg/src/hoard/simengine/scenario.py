"""Scenario documents: workload plus hardware parameters for one run.

Same YAML family as the topology config; sections: topology, datasets,
models, jobs, memory_model, epochs, seed, plus tuning knobs (kappa_miss,
remote_efficiency, chunk_size_bytes).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import yaml

from .. import cachemgr
from ..errors import ConfigError
from ..registry import DatasetSpec, JobSpec
from ..topology import ClusterTopology, RemoteStoreSpec, topology_from_dict
from .model import ACCESS_MODES, MemoryCacheModel, ModelProfile

log = logging.getLogger("hoard.simengine")

SCHEMA_VERSION = 1
SPEEDUP_HORIZONS = (2, 30, 60, 90)


@dataclass(frozen=True)
class ScenarioJob:
    job: JobSpec
    access_mode: str


@dataclass(frozen=True)
class Scenario:
    topology: ClusterTopology
    datasets: tuple[DatasetSpec, ...]
    models: dict[str, ModelProfile]
    jobs: tuple[ScenarioJob, ...]
    memory_model: MemoryCacheModel
    epochs: int
    kappa_miss: float = 1.69  # first-epoch cache-write slowdown
    remote_efficiency: float = 0.61  # end-to-end efficiency of remote reads
    chunk_size_bytes: int = cachemgr.DEFAULT_CHUNK_SIZE
    seed: int = 0
    cache_hints: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.kappa_miss < 1:
            raise ConfigError("kappa_miss must be >= 1")
        if not 0 < self.remote_efficiency <= 1:
            raise ConfigError("remote_efficiency must be in (0, 1]")
        if self.chunk_size_bytes <= 0:
            raise ConfigError("chunk_size_bytes must be > 0")
        if not self.jobs:
            raise ConfigError("scenario has no jobs")
        self.memory_model.validate()
        dataset_names = set()
        for ds in self.datasets:
            ds.validate()
            if ds.name in dataset_names:
                raise ConfigError(f"duplicate dataset {ds.name!r}")
            dataset_names.add(ds.name)
            if not self.topology.has_store(ds.store_id):
                raise ConfigError(
                    f"dataset {ds.name!r} references unknown store {ds.store_id!r}")
        for profile in self.models.values():
            profile.validate()
        node_ids = {n.node_id for n in self.topology.nodes}
        for name, hint in self.cache_hints.items():
            if name not in dataset_names:
                raise ConfigError(f"cache hint for unknown dataset {name!r}")
            for h in hint:
                if h not in node_ids:
                    raise ConfigError(
                        f"cache hint for {name!r} names unknown node {h!r}")
        seen_jobs = set()
        for sj in self.jobs:
            sj.job.validate()
            if sj.job.job_id in seen_jobs:
                raise ConfigError(f"duplicate job {sj.job.job_id!r}")
            seen_jobs.add(sj.job.job_id)
            if sj.access_mode not in ACCESS_MODES:
                raise ConfigError(
                    f"job {sj.job.job_id!r}: access_mode must be one of {ACCESS_MODES}")
            if sj.job.dataset_name not in dataset_names:
                raise ConfigError(
                    f"job {sj.job.job_id!r} references unknown dataset "
                    f"{sj.job.dataset_name!r}")
            if sj.job.model not in self.models:
                raise ConfigError(
                    f"job {sj.job.job_id!r} references unknown model "
                    f"{sj.job.model!r}")
            profile = self.models[sj.job.model]
            dataset = self.dataset(sj.job.dataset_name)
            ratio = profile.epoch_bytes() / dataset.size_bytes
            if not 0.9 <= ratio <= 1.1:
                log.warning(
                    "model %r: images_per_epoch x bytes_per_image is %.0f%% of "
                    "dataset %r size", profile.name, 100 * ratio, dataset.name)

    def dataset(self, name: str) -> DatasetSpec:
        for ds in self.datasets:
            if ds.name == name:
                return ds
        raise ConfigError(f"unknown dataset {name!r}")

    def store_for(self, dataset_name: str) -> RemoteStoreSpec:
        return self.topology.store(self.dataset(dataset_name).store_id)

    def with_modes(self, mode: str) -> "Scenario":
        """Copy with every job forced to one access mode."""
        jobs = tuple(ScenarioJob(job=sj.job, access_mode=mode) for sj in self.jobs)
        return replace(self, jobs=jobs)

    def with_mdr(self, mdr: float) -> "Scenario":
        return replace(self, memory_model=replace(self.memory_model, mdr=mdr))

    def with_remote_scale(self, factor: float) -> "Scenario":
        """Copy with every remote store's bandwidth scaled by ``factor``."""
        if factor <= 0:
            raise ConfigError("remote bandwidth scale must be > 0")
        stores = tuple(
            replace(s, aggregate_read_bandwidth_Bps=s.aggregate_read_bandwidth_Bps * factor)
            for s in self.topology.remote_stores)
        return replace(self, topology=replace(self.topology, remote_stores=stores))


def _as_int(value, where: str) -> int:
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number, got {value!r}") from None
    if f != int(f):
        raise ConfigError(f"{where}: expected an integral value, got {value!r}")
    return int(f)


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ConfigError("scenario document must be a mapping")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported scenario schema_version {version!r}")
    if "topology" not in doc:
        raise ConfigError("scenario: missing topology section")
    topology = topology_from_dict(doc["topology"])

    datasets = []
    cache_hints: dict[str, tuple[str, ...]] = {}
    for i, d in enumerate(doc.get("datasets") or []):
        where = f"datasets[{i}]"
        if "name" not in d:
            raise ConfigError(f"{where}: missing name")
        datasets.append(DatasetSpec(
            name=str(d["name"]),
            remote_url=str(d.get("remote_url", "")),
            store_id=str(d.get("store_id", "")),
            size_bytes=_as_int(d.get("size_bytes", 0), where + ".size_bytes"),
            prefetch=bool(d.get("prefetch", False)),
            pinned=bool(d.get("pinned", False)),
        ))
        if d.get("cache_node_hint"):
            cache_hints[str(d["name"])] = tuple(str(n) for n in d["cache_node_hint"])

    models = {}
    for i, m in enumerate(doc.get("models") or []):
        where = f"models[{i}]"
        if "name" not in m:
            raise ConfigError(f"{where}: missing name")
        profile = ModelProfile(
            name=str(m["name"]),
            fps_compute_ceiling=float(m.get("fps_compute_ceiling", 0)),
            bytes_per_image=float(m.get("bytes_per_image", 0)),
            images_per_epoch=_as_int(m.get("images_per_epoch", 0),
                                     where + ".images_per_epoch"),
            batch_size=_as_int(m.get("batch_size", 1), where + ".batch_size"),
        )
        models[profile.name] = profile

    jobs = []
    for i, j in enumerate(doc.get("jobs") or []):
        where = f"jobs[{i}]"
        if "job_id" not in j:
            raise ConfigError(f"{where}: missing job_id")
        jobs.append(ScenarioJob(
            job=JobSpec(
                job_id=str(j["job_id"]),
                dataset_name=str(j.get("dataset", j.get("dataset_name", ""))),
                nodes_requested=_as_int(j.get("nodes_requested", 1),
                                        where + ".nodes_requested"),
                gpus_per_node=_as_int(j.get("gpus_per_node", 1),
                                      where + ".gpus_per_node"),
                mount_path=str(j.get("mount_path", "/data")),
                model=str(j.get("model", "")),
            ),
            access_mode=str(j.get("access_mode", "HOARD")),
        ))

    mm = doc.get("memory_model") or {}
    memory_model = MemoryCacheModel(
        mdr=float(mm.get("mdr", 0.5)),
        policy=str(mm.get("policy", "lru-cyclic")),
        full_cache_threshold=float(mm.get("full_cache_threshold", 1.1)),
    )

    scenario = Scenario(
        topology=topology,
        datasets=tuple(datasets),
        models=models,
        jobs=tuple(jobs),
        memory_model=memory_model,
        epochs=_as_int(doc.get("epochs", 1), "epochs"),
        kappa_miss=float(doc.get("kappa_miss", 1.69)),
        remote_efficiency=float(doc.get("remote_efficiency", 0.61)),
        chunk_size_bytes=_as_int(doc.get("chunk_size_bytes",
                                         cachemgr.DEFAULT_CHUNK_SIZE),
                                 "chunk_size_bytes"),
        seed=_as_int(doc.get("seed", 0), "seed"),
        cache_hints=cache_hints,
    )
    scenario.validate()
    return scenario


def load_scenario(text: str) -> Scenario:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"scenario parse error: {e}") from e
    if doc is None:
        raise ConfigError("empty scenario document")
    return scenario_from_dict(doc)
