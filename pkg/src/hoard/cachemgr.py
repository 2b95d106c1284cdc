"""Dataset-granularity cache management.

A dataset is striped round-robin over an ordered subset of cache nodes and
is always either fully admitted or fully absent: admission reserves the
whole stripe, eviction removes whole datasets (never files or chunks).
Placement functions are pure over a :class:`CacheState` snapshot; mutations
go through the owning control plane.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .errors import CapacityError, DuplicateError, NotFoundError, PinnedError
from .topology import ClusterTopology

log = logging.getLogger("hoard.cachemgr")

DEFAULT_CHUNK_SIZE = 4 * 1024 * 1024  # amortizes per-chunk overhead, keeps tests fast

POLICY_MANUAL = "manual"
POLICY_LRU = "lru"
POLICIES = (POLICY_MANUAL, POLICY_LRU)


@dataclass(frozen=True)
class StripeMap:
    """Deterministic chunk->node assignment: chunk i lives on cache_nodes[i % k]."""

    dataset_name: str
    size_bytes: int
    chunk_size_bytes: int
    num_chunks: int
    cache_nodes: tuple[str, ...]

    @staticmethod
    def build(dataset_name: str, size_bytes: int, chunk_size_bytes: int,
              cache_nodes: list[str] | tuple[str, ...]) -> "StripeMap":
        if size_bytes <= 0:
            raise CapacityError(f"dataset {dataset_name!r}: size must be > 0")
        if chunk_size_bytes <= 0:
            raise CapacityError(f"dataset {dataset_name!r}: chunk size must be > 0")
        nodes = tuple(cache_nodes)
        if not nodes:
            raise CapacityError(f"dataset {dataset_name!r}: empty cache-node set")
        if len(set(nodes)) != len(nodes):
            raise CapacityError(f"dataset {dataset_name!r}: duplicate cache nodes")
        return StripeMap(
            dataset_name=dataset_name,
            size_bytes=size_bytes,
            chunk_size_bytes=chunk_size_bytes,
            num_chunks=math.ceil(size_bytes / chunk_size_bytes),
            cache_nodes=nodes,
        )

    def owner(self, index: int) -> str:
        if not 0 <= index < self.num_chunks:
            raise IndexError(f"chunk index {index} out of range [0, {self.num_chunks})")
        return self.cache_nodes[index % len(self.cache_nodes)]

    def chunk_length(self, index: int) -> int:
        if not 0 <= index < self.num_chunks:
            raise IndexError(f"chunk index {index} out of range [0, {self.num_chunks})")
        if index == self.num_chunks - 1:
            return self.size_bytes - index * self.chunk_size_bytes
        return self.chunk_size_bytes

    def chunks_per_node(self) -> dict[str, int]:
        k = len(self.cache_nodes)
        counts = {}
        for i, node in enumerate(self.cache_nodes):
            # indices i, i+k, i+2k, ... below num_chunks
            counts[node] = (self.num_chunks - i + k - 1) // k if i < self.num_chunks else 0
        return counts

    def bytes_per_node(self) -> dict[str, int]:
        """Exact byte load per node, accounting for the short final chunk."""
        counts = self.chunks_per_node()
        loads = {n: c * self.chunk_size_bytes for n, c in counts.items()}
        last = self.num_chunks - 1
        short_by = self.chunk_size_bytes - self.chunk_length(last)
        loads[self.owner(last)] -= short_by
        return loads

    def to_dict(self) -> dict:
        return {
            "dataset_name": self.dataset_name,
            "size_bytes": self.size_bytes,
            "chunk_size_bytes": self.chunk_size_bytes,
            "num_chunks": self.num_chunks,
            "cache_nodes": list(self.cache_nodes),
        }

    @staticmethod
    def from_dict(d: dict) -> "StripeMap":
        stripe = StripeMap.build(d["dataset_name"], d["size_bytes"],
                                 d["chunk_size_bytes"], d["cache_nodes"])
        if stripe.num_chunks != d["num_chunks"]:
            raise CapacityError(f"stripe map for {d['dataset_name']!r}: "
                                f"inconsistent num_chunks {d['num_chunks']}")
        return stripe


@dataclass
class CacheState:
    """Capacity accounting plus the LRU queue of whole datasets.

    ``lru`` holds unpinned residents oldest-first and is maintained
    incrementally by admit/touch/evict/pin/unpin.
    """

    policy: str
    capacity_bytes: dict[str, int]
    used_bytes: dict[str, int] = field(default_factory=dict)
    residents: dict[str, StripeMap] = field(default_factory=dict)
    last_access: dict[str, int] = field(default_factory=dict)
    pinned: set[str] = field(default_factory=set)
    lru: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.policy not in POLICIES:
            raise CapacityError(f"unknown eviction policy {self.policy!r}")
        for node in self.capacity_bytes:
            self.used_bytes.setdefault(node, 0)

    @staticmethod
    def from_topology(topology: ClusterTopology, policy: str = POLICY_LRU) -> "CacheState":
        return CacheState(
            policy=policy,
            capacity_bytes={n.node_id: n.cache_capacity_bytes for n in topology.nodes},
        )

    def free_bytes(self, node_id: str) -> int:
        return self.capacity_bytes[node_id] - self.used_bytes[node_id]

    def clone(self) -> "CacheState":
        return CacheState(
            policy=self.policy,
            capacity_bytes=dict(self.capacity_bytes),
            used_bytes=dict(self.used_bytes),
            residents=dict(self.residents),
            last_access=dict(self.last_access),
            pinned=set(self.pinned),
            lru=list(self.lru),
        )

    def charge(self, stripe: StripeMap, t: int, pinned: bool = False) -> None:
        """Reserve the stripe's bytes on every node; all-or-nothing."""
        name = stripe.dataset_name
        if name in self.residents:
            raise DuplicateError(f"dataset {name!r} already resident")
        loads = stripe.bytes_per_node()
        for node, add in loads.items():
            if node not in self.capacity_bytes:
                raise NotFoundError(f"stripe references unknown node {node!r}")
            if self.used_bytes[node] + add > self.capacity_bytes[node]:
                raise CapacityError(
                    f"admitting {name!r} would overcommit node {node!r} "
                    f"({self.used_bytes[node] + add} > {self.capacity_bytes[node]})")
        for node, add in loads.items():
            self.used_bytes[node] += add
        self.residents[name] = stripe
        self.last_access[name] = t
        if pinned:
            self.pinned.add(name)
        else:
            self.lru.append(name)

    def touch(self, name: str, t: int) -> None:
        if name not in self.residents:
            raise NotFoundError(f"dataset {name!r} not resident in cache")
        self.last_access[name] = t
        if name in self.lru:
            self.lru.remove(name)
            self.lru.append(name)

    def release(self, name: str, force: bool = False) -> dict[str, int]:
        """Drop a resident dataset; returns exact bytes freed per node."""
        if name not in self.residents:
            raise NotFoundError(f"dataset {name!r} not resident in cache")
        if name in self.pinned and not force:
            raise PinnedError(f"dataset {name!r} is pinned; pass force to evict")
        freed = self.residents[name].bytes_per_node()
        for node, sub in freed.items():
            self.used_bytes[node] -= sub
        del self.residents[name]
        del self.last_access[name]
        self.pinned.discard(name)
        if name in self.lru:
            self.lru.remove(name)
        return freed

    def pin(self, name: str) -> None:
        if name not in self.residents:
            raise NotFoundError(f"dataset {name!r} not resident in cache")
        self.pinned.add(name)
        if name in self.lru:
            self.lru.remove(name)

    def unpin(self, name: str) -> None:
        if name not in self.residents:
            raise NotFoundError(f"dataset {name!r} not resident in cache")
        if name not in self.pinned:
            return
        self.pinned.discard(name)
        # reinsert at the position its last_access dictates
        order = self.last_access
        idx = 0
        while idx < len(self.lru) and order[self.lru[idx]] <= order[name]:
            idx += 1
        self.lru.insert(idx, name)


def per_node_demand_bytes(num_chunks: int, k: int, chunk_size_bytes: int) -> int:
    """Conservative per-node reservation for a balanced stripe over k nodes."""
    return math.ceil(num_chunks / k) * chunk_size_bytes


def select_cache_nodes(
    name: str,
    size_bytes: int,
    topology: ClusterTopology,
    state: CacheState,
    hint: list[str] | tuple[str, ...] | None = None,
    chunk_size_bytes: int = DEFAULT_CHUNK_SIZE,
) -> list[str]:
    """Choose the ordered cache-node subset for a new dataset.

    Without a hint: the smallest subset whose balanced stripe fits every
    member's free capacity, preferring most-free nodes. With a hint (a
    job's compute nodes): all hint nodes are kept together whenever any
    stripe containing them fits, extending with same-rack then most-free
    nodes; hint nodes are dropped only when no stripe can include them.
    Ties always break on lexicographic node id.
    """
    if name in state.residents:
        raise DuplicateError(f"dataset {name!r} is already cached or being cached")
    num_chunks = math.ceil(size_bytes / chunk_size_bytes)
    if num_chunks <= 0:
        raise CapacityError(f"dataset {name!r}: nothing to stripe")

    node_ids = [n.node_id for n in topology.nodes]
    free = {nid: state.free_bytes(nid) for nid in node_ids}
    rack_of = {n.node_id: n.rack_id for n in topology.nodes}
    total = len(node_ids)

    def demand(k: int) -> int:
        return per_node_demand_bytes(num_chunks, k, chunk_size_bytes)

    hints: list[str] = []
    for h in dict.fromkeys(hint or []):
        if h in free:
            hints.append(h)
        else:
            log.warning("ignoring unknown hint node %r for dataset %r", h, name)
    hint_racks = {rack_of[h] for h in hints}

    def fill_order(exclude: set[str]) -> list[str]:
        rest = [n for n in node_ids if n not in exclude]
        rest.sort(key=lambda n: (0 if rack_of[n] in hint_racks else 1, -free[n], n))
        return rest

    def with_all(required: list[str]) -> list[str] | None:
        # smallest stripe that keeps every required node
        fills = fill_order(set(required))
        for k in range(max(1, len(required)), total + 1):
            dem = demand(k)
            if any(free[h] < dem for h in required):
                continue
            extra = [n for n in fills if free[n] >= dem][: k - len(required)]
            if len(required) + len(extra) == k:
                return required + extra
        return None

    if hints:
        picked = with_all(hints)
        if picked is None:
            # drop hint nodes that cannot fit a share at even the lowest demand
            viable = [h for h in hints if free[h] >= demand(total)]
            if viable and viable != hints:
                picked = with_all(viable)
        if picked is not None:
            return picked
        # fall through: prefer hint nodes among feasible candidates, smallest k

    base = sorted(node_ids, key=lambda n: (0 if n in hints else 1,
                                           0 if rack_of[n] in hint_racks else 1,
                                           -free[n], n))
    for k in range(1, total + 1):
        dem = demand(k)
        cand = [n for n in base if free[n] >= dem]
        if len(cand) >= k:
            return cand[:k]
    raise CapacityError(
        f"dataset {name!r} ({size_bytes} B) does not fit the free cache capacity "
        f"of any node subset")


@dataclass(frozen=True)
class AdmissionDecision:
    """Outcome of an admission attempt.

    ``admitted`` false means rejected (manual policy, cache full). When
    admitted, ``victims`` lists whole datasets that must be evicted first,
    oldest first; empty when the stripe fits as-is.
    """

    admitted: bool
    stripe: StripeMap | None = None
    victims: tuple[str, ...] = ()
    reason: str = ""


def admit(
    name: str,
    size_bytes: int,
    topology: ClusterTopology,
    state: CacheState,
    hint: list[str] | tuple[str, ...] | None = None,
    in_use: frozenset[str] | set[str] = frozenset(),
    chunk_size_bytes: int = DEFAULT_CHUNK_SIZE,
) -> AdmissionDecision:
    """Decide how to admit a dataset under the state's eviction policy.

    Pure planning: the returned decision must be applied by the caller
    (evict victims, then charge the stripe). Under the lru policy, whole
    unpinned datasets are selected oldest-first until the stripe fits;
    datasets in ``in_use`` by running jobs are never chosen.
    """

    def try_select(snapshot: CacheState) -> StripeMap | None:
        try:
            nodes = select_cache_nodes(name, size_bytes, topology, snapshot,
                                       hint=hint, chunk_size_bytes=chunk_size_bytes)
        except CapacityError:
            return None
        return StripeMap.build(name, size_bytes, chunk_size_bytes, nodes)

    stripe = try_select(state)
    if stripe is not None:
        return AdmissionDecision(admitted=True, stripe=stripe)

    if state.policy == POLICY_MANUAL:
        return AdmissionDecision(
            admitted=False,
            reason=f"cache full: dataset {name!r} needs a manual eviction first")

    work = state.clone()
    victims: list[str] = []
    while True:
        victim = next((d for d in work.lru if d not in in_use), None)
        if victim is None:
            raise CapacityError(
                f"dataset {name!r} does not fit even after evicting all "
                f"unpinned idle datasets")
        work.release(victim)
        victims.append(victim)
        stripe = try_select(work)
        if stripe is not None:
            return AdmissionDecision(admitted=True, stripe=stripe,
                                     victims=tuple(victims))


def lru_victims(state: CacheState) -> list[str]:
    """Current eviction order: unpinned residents, least recently used first."""
    return list(state.lru)
