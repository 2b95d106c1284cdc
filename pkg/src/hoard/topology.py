"""Cluster model: racks, nodes, remote stores, and link-budget arithmetic.

All byte quantities are bytes (suffix ``_bytes`` / ``_Bps``); all network
rates are bits/second (suffix ``_bps``). A topology is immutable after
loading and safe to share across threads.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError

log = logging.getLogger("hoard.topology")

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    rack_id: str
    gpus: int
    memory_bytes: int
    cache_capacity_bytes: int
    nvme_bandwidth_Bps: float
    nic_bandwidth_bps: float

    def validate(self) -> None:
        if not self.node_id:
            raise ConfigError("node_id must be non-empty")
        if self.gpus < 0:
            raise ConfigError(f"node {self.node_id}: gpus must be >= 0")
        for name in ("memory_bytes", "cache_capacity_bytes",
                     "nvme_bandwidth_Bps", "nic_bandwidth_bps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"node {self.node_id}: {name} must be > 0")


@dataclass(frozen=True)
class RackSpec:
    rack_id: str
    tor_ports: int
    port_bandwidth_bps: float
    oversubscription_ratio: float
    # Explicit because published TOR specs often quote an aggregate that the
    # port math does not reproduce; derived from the ports only when absent.
    uplink_bandwidth_bps: float = 0.0

    def validate(self) -> None:
        if not self.rack_id:
            raise ConfigError("rack_id must be non-empty")
        if self.tor_ports <= 0 or self.port_bandwidth_bps <= 0:
            raise ConfigError(f"rack {self.rack_id}: ports and port bandwidth must be > 0")
        if self.oversubscription_ratio < 1:
            raise ConfigError(f"rack {self.rack_id}: oversubscription_ratio must be >= 1")
        if self.uplink_bandwidth_bps <= 0:
            raise ConfigError(f"rack {self.rack_id}: uplink_bandwidth_bps must be > 0")

    @staticmethod
    def derived_uplink_bps(tor_ports: int, port_bandwidth_bps: float,
                           oversubscription_ratio: float) -> float:
        return tor_ports * port_bandwidth_bps / oversubscription_ratio


@dataclass(frozen=True)
class RemoteStoreSpec:
    store_id: str
    kind: str  # "nfs-like" | "object-store-like"
    aggregate_read_bandwidth_Bps: float
    url: str = ""

    KINDS = ("nfs-like", "object-store-like")

    def validate(self) -> None:
        if not self.store_id:
            raise ConfigError("store_id must be non-empty")
        if self.kind not in self.KINDS:
            raise ConfigError(f"store {self.store_id}: kind must be one of {self.KINDS}")
        if self.aggregate_read_bandwidth_Bps <= 0:
            raise ConfigError(f"store {self.store_id}: aggregate_read_bandwidth_Bps must be > 0")


@dataclass(frozen=True)
class ClusterTopology:
    racks: tuple[RackSpec, ...]
    nodes: tuple[NodeSpec, ...]
    remote_stores: tuple[RemoteStoreSpec, ...] = field(default_factory=tuple)

    def validate(self) -> None:
        if not self.nodes:
            raise ConfigError("no nodes in topology")
        if not self.racks:
            raise ConfigError("no racks in topology")
        seen: set[str] = set()
        for obj, ident in (
            [(r, r.rack_id) for r in self.racks]
            + [(n, n.node_id) for n in self.nodes]
            + [(s, s.store_id) for s in self.remote_stores]
        ):
            obj.validate()
            if ident in seen:
                raise ConfigError(f"duplicate identifier {ident!r}")
            seen.add(ident)
        rack_ids = {r.rack_id for r in self.racks}
        for n in self.nodes:
            if n.rack_id not in rack_ids:
                raise ConfigError(f"node {n.node_id} references unknown rack {n.rack_id!r}")

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise ConfigError(f"unknown node {node_id!r}")

    def rack(self, rack_id: str) -> RackSpec:
        for r in self.racks:
            if r.rack_id == rack_id:
                return r
        raise ConfigError(f"unknown rack {rack_id!r}")

    def store(self, store_id: str) -> RemoteStoreSpec:
        for s in self.remote_stores:
            if s.store_id == store_id:
                return s
        raise ConfigError(f"unknown remote store {store_id!r}")

    def has_store(self, store_id: str) -> bool:
        return any(s.store_id == store_id for s in self.remote_stores)

    def nodes_in_rack(self, rack_id: str) -> list[NodeSpec]:
        return [n for n in self.nodes if n.rack_id == rack_id]

    def total_cache_capacity_bytes(self) -> int:
        return sum(n.cache_capacity_bytes for n in self.nodes)


def uplink_utilization(rack: RackSpec, misplaced_jobs: float,
                       per_job_rate_bps: float) -> float:
    """Fraction of the rack up-link consumed by misplaced jobs, in [0, 1].

    ``misplaced_jobs`` may be fractional (projections over a job population
    yield non-integer effective counts). Saturation clamps at 1.0 and is
    logged, never raised.
    """
    if misplaced_jobs < 0:
        raise ConfigError("misplaced_jobs must be >= 0")
    if per_job_rate_bps < 0:
        raise ConfigError("per_job_rate_bps must be >= 0")
    raw = misplaced_jobs * per_job_rate_bps / rack.uplink_bandwidth_bps
    if raw > 1.0:
        log.warning("rack %s up-link saturated: demand %.3fx capacity",
                    rack.rack_id, raw)
        return 1.0
    return raw


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"{where}: missing required field {key!r}")
    return mapping[key]


def _as_int(value, where: str) -> int:
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number, got {value!r}") from None
    if not math.isfinite(f) or f != int(f):
        raise ConfigError(f"{where}: expected an integral value, got {value!r}")
    return int(f)


def _as_float(value, where: str) -> float:
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number, got {value!r}") from None
    if not math.isfinite(f):
        raise ConfigError(f"{where}: expected a finite number, got {value!r}")
    return f


def topology_from_dict(doc: dict) -> ClusterTopology:
    """Build and validate a topology from a parsed config mapping."""
    if not isinstance(doc, dict):
        raise ConfigError("topology document must be a mapping")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported topology schema_version {version!r}")

    racks = []
    for i, r in enumerate(doc.get("racks") or []):
        where = f"racks[{i}]"
        ports = _as_int(_require(r, "tor_ports", where), where + ".tor_ports")
        port_bw = _as_float(_require(r, "port_bandwidth_bps", where), where + ".port_bandwidth_bps")
        oversub = _as_float(r.get("oversubscription_ratio", 1.0), where + ".oversubscription_ratio")
        uplink = r.get("uplink_bandwidth_bps")
        if uplink is None:
            uplink = RackSpec.derived_uplink_bps(ports, port_bw, oversub)
        else:
            uplink = _as_float(uplink, where + ".uplink_bandwidth_bps")
        racks.append(RackSpec(
            rack_id=str(_require(r, "rack_id", where)),
            tor_ports=ports,
            port_bandwidth_bps=port_bw,
            oversubscription_ratio=oversub,
            uplink_bandwidth_bps=uplink,
        ))

    nodes = []
    for i, n in enumerate(doc.get("nodes") or []):
        where = f"nodes[{i}]"
        nodes.append(NodeSpec(
            node_id=str(_require(n, "node_id", where)),
            rack_id=str(_require(n, "rack_id", where)),
            gpus=_as_int(_require(n, "gpus", where), where + ".gpus"),
            memory_bytes=_as_int(_require(n, "memory_bytes", where), where + ".memory_bytes"),
            cache_capacity_bytes=_as_int(_require(n, "cache_capacity_bytes", where),
                                         where + ".cache_capacity_bytes"),
            nvme_bandwidth_Bps=_as_float(_require(n, "nvme_bandwidth_Bps", where),
                                         where + ".nvme_bandwidth_Bps"),
            nic_bandwidth_bps=_as_float(_require(n, "nic_bandwidth_bps", where),
                                        where + ".nic_bandwidth_bps"),
        ))

    stores = []
    for i, s in enumerate(doc.get("remote_stores") or []):
        where = f"remote_stores[{i}]"
        stores.append(RemoteStoreSpec(
            store_id=str(_require(s, "store_id", where)),
            kind=str(_require(s, "kind", where)),
            aggregate_read_bandwidth_Bps=_as_float(
                _require(s, "aggregate_read_bandwidth_Bps", where),
                where + ".aggregate_read_bandwidth_Bps"),
            url=str(s.get("url", "")),
        ))

    topo = ClusterTopology(racks=tuple(racks), nodes=tuple(nodes),
                           remote_stores=tuple(stores))
    topo.validate()
    return topo


def topology_to_dict(topo: ClusterTopology) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "racks": [
            {
                "rack_id": r.rack_id,
                "tor_ports": r.tor_ports,
                "port_bandwidth_bps": r.port_bandwidth_bps,
                "oversubscription_ratio": r.oversubscription_ratio,
                "uplink_bandwidth_bps": r.uplink_bandwidth_bps,
            }
            for r in topo.racks
        ],
        "nodes": [
            {
                "node_id": n.node_id,
                "rack_id": n.rack_id,
                "gpus": n.gpus,
                "memory_bytes": n.memory_bytes,
                "cache_capacity_bytes": n.cache_capacity_bytes,
                "nvme_bandwidth_Bps": n.nvme_bandwidth_Bps,
                "nic_bandwidth_bps": n.nic_bandwidth_bps,
            }
            for n in topo.nodes
        ],
        "remote_stores": [
            {
                "store_id": s.store_id,
                "kind": s.kind,
                "aggregate_read_bandwidth_Bps": s.aggregate_read_bandwidth_Bps,
                "url": s.url,
            }
            for s in topo.remote_stores
        ],
    }


def load_topology(document: str) -> ClusterTopology:
    """Parse a YAML topology document and validate it."""
    try:
        doc = yaml.safe_load(document)
    except yaml.YAMLError as e:
        raise ConfigError(f"topology parse error: {e}") from e
    if doc is None:
        raise ConfigError("empty topology document")
    return topology_from_dict(doc)


def serialize_topology(topo: ClusterTopology) -> str:
    return yaml.safe_dump(topology_to_dict(topo), sort_keys=False)
