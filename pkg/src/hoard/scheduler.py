"""Locality-aware job placement.

Placement quality is a three-level tier: every assigned node holds part of
the dataset's stripe (node-local), every assigned node at least shares a
rack with a stripe node (rack-local), anything else is misplaced. Tier
comparison is strict lexicographic; within the chosen tier nodes with the
most free GPUs win, ties break on node id. All functions here are pure
planning over snapshots; committing a placement is the control plane's job.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import IntEnum

from . import cachemgr
from .cachemgr import CacheState, select_cache_nodes
from .errors import CapacityError, InsufficientGPUsError, NotFoundError
from .registry import JobSpec
from .topology import ClusterTopology, uplink_utilization


class LocalityTier(IntEnum):
    """Ordered so that greater is better."""

    MISPLACED = 0
    RACK_LOCAL = 1
    NODE_LOCAL = 2

    def label(self) -> str:
        return {self.MISPLACED: "Misplaced",
                self.RACK_LOCAL: "RackLocal",
                self.NODE_LOCAL: "NodeLocal"}[self]


@dataclass(frozen=True)
class JobPlacement:
    job_id: str
    assigned_nodes: tuple[str, ...]
    locality_tier: LocalityTier
    dataset_name: str


@dataclass(frozen=True)
class PlacementPlan:
    """A placement plus, for a not-yet-cached dataset, the stripe chosen
    jointly with it. ``stripe_nodes`` is None when the dataset is already
    resident."""

    placement: JobPlacement
    stripe_nodes: tuple[str, ...] | None = None


def node_tier(node_id: str, stripe_nodes: set[str],
              rack_of: dict[str, str]) -> LocalityTier:
    if node_id in stripe_nodes:
        return LocalityTier.NODE_LOCAL
    stripe_racks = {rack_of[s] for s in stripe_nodes}
    if rack_of[node_id] in stripe_racks:
        return LocalityTier.RACK_LOCAL
    return LocalityTier.MISPLACED


def placement_tier(assigned: tuple[str, ...], stripe_nodes: set[str],
                   rack_of: dict[str, str]) -> LocalityTier:
    """A job runs at the tier of its worst node: one remote-reading worker
    stalls the rest of a synchronous job."""
    return min(node_tier(n, stripe_nodes, rack_of) for n in assigned)


def _pick(candidates: list[str], count: int, gpu_free: dict[str, int]) -> tuple[str, ...]:
    ordered = sorted(candidates, key=lambda n: (-gpu_free[n], n))
    return tuple(ordered[:count])


def place_job(
    job: JobSpec,
    topology: ClusterTopology,
    cache_state: CacheState,
    gpu_free: dict[str, int],
    dataset_size_bytes: int | None = None,
    chunk_size_bytes: int = cachemgr.DEFAULT_CHUNK_SIZE,
) -> PlacementPlan:
    """Place a job in the best achievable locality tier.

    If the dataset is already resident its stripe fixes the tier geometry;
    otherwise compute nodes and cache nodes are chosen jointly so the
    returned tier is the best joint outcome (the planned stripe is part of
    the plan and must be the one committed).

    ``dataset_size_bytes`` is required for the joint (uncached) case.
    """
    rack_of = {n.node_id: n.rack_id for n in topology.nodes}
    for node_id in gpu_free:
        if node_id not in rack_of:
            raise NotFoundError(f"gpu_free references unknown node {node_id!r}")
    want = job.nodes_requested
    feasible = [n.node_id for n in topology.nodes
                if gpu_free.get(n.node_id, 0) >= job.gpus_per_node]
    if len(feasible) < want:
        raise InsufficientGPUsError(
            f"job {job.job_id!r} needs {want} node(s) with {job.gpus_per_node} "
            f"free GPU(s); only {len(feasible)} node(s) qualify")

    stripe = cache_state.residents.get(job.dataset_name)
    if stripe is not None:
        stripe_set = set(stripe.cache_nodes)
        for tier in (LocalityTier.NODE_LOCAL, LocalityTier.RACK_LOCAL,
                     LocalityTier.MISPLACED):
            pool = [n for n in feasible if node_tier(n, stripe_set, rack_of) >= tier]
            if len(pool) >= want:
                assigned = _pick(pool, want, gpu_free)
                return PlacementPlan(JobPlacement(
                    job_id=job.job_id, assigned_nodes=assigned,
                    locality_tier=placement_tier(assigned, stripe_set, rack_of),
                    dataset_name=job.dataset_name))
        raise InsufficientGPUsError(f"job {job.job_id!r}: no feasible node set")

    if dataset_size_bytes is None:
        raise NotFoundError(
            f"job {job.job_id!r}: dataset {job.dataset_name!r} is not cached and "
            f"no size was provided for joint planning")
    return _plan_joint(job, topology, cache_state, gpu_free, feasible,
                       dataset_size_bytes, chunk_size_bytes, rack_of)


def _plan_joint(job, topology, cache_state, gpu_free, feasible, size_bytes,
                chunk_size_bytes, rack_of) -> PlacementPlan:
    want = job.nodes_requested
    num_chunks = math.ceil(size_bytes / chunk_size_bytes)
    node_ids = [n.node_id for n in topology.nodes]
    total = len(node_ids)
    free_cache = {nid: cache_state.free_bytes(nid) for nid in node_ids}

    def demand(k: int) -> int:
        return cachemgr.per_node_demand_bytes(num_chunks, k, chunk_size_bytes)

    def cap_ok(k: int) -> list[str]:
        dem = demand(k)
        return [n for n in node_ids if free_cache[n] >= dem]

    def finish(assigned: tuple[str, ...], tier: LocalityTier,
               stripe_nodes: list[str]) -> PlacementPlan:
        return PlacementPlan(
            placement=JobPlacement(job_id=job.job_id, assigned_nodes=assigned,
                                   locality_tier=tier,
                                   dataset_name=job.dataset_name),
            stripe_nodes=tuple(stripe_nodes))

    # Node-local: a stripe superset of the compute nodes must fit. Smallest
    # such stripe wins; grows only while shrinking per-node demand helps.
    for k in range(want, total + 1):
        cand = cap_ok(k)
        gpu_cand = [n for n in cand if n in set(feasible)]
        if len(cand) >= k and len(gpu_cand) >= want:
            assigned = _pick(gpu_cand, want, gpu_free)
            stripe_nodes = select_cache_nodes(
                job.dataset_name, size_bytes, topology, cache_state,
                hint=list(assigned), chunk_size_bytes=chunk_size_bytes)
            return finish(assigned, LocalityTier.NODE_LOCAL, stripe_nodes)

    # Rack-local: every rack hosting compute must receive a stripe node.
    # Rack counts are small at this scale, so rack subsets are enumerated
    # exhaustively (smallest subsets first for determinism).
    rack_ids = sorted({rack_of[n] for n in feasible})
    for size in range(1, len(rack_ids) + 1):
        for racks in itertools.combinations(rack_ids, size):
            rack_set = set(racks)
            pool = [n for n in feasible if rack_of[n] in rack_set]
            if len(pool) < want:
                continue
            assigned = _pick(pool, want, gpu_free)
            compute_racks = sorted({rack_of[n] for n in assigned})
            plan = _covering_stripe(compute_racks, demand, free_cache,
                                    node_ids, rack_of, total)
            if plan is not None:
                return finish(assigned, LocalityTier.RACK_LOCAL, plan)

    # Misplaced: any feasible stripe anywhere.
    assigned = _pick(feasible, want, gpu_free)
    stripe_nodes = select_cache_nodes(
        job.dataset_name, size_bytes, topology, cache_state,
        hint=list(assigned), chunk_size_bytes=chunk_size_bytes)
    return finish(assigned, LocalityTier.MISPLACED, stripe_nodes)


def _covering_stripe(compute_racks, demand, free_cache, node_ids, rack_of,
                     total) -> list[str] | None:
    """Smallest capacity-feasible stripe with a member in every compute rack."""
    for k in range(len(compute_racks), total + 1):
        dem = demand(k)
        cand = [n for n in node_ids if free_cache[n] >= dem]
        if len(cand) < k:
            continue
        by_rack = {r: [n for n in cand if rack_of[n] == r] for r in compute_racks}
        if any(not ns for ns in by_rack.values()):
            continue
        stripe: list[str] = []
        for r in compute_racks:
            stripe.append(min(by_rack[r], key=lambda n: (-free_cache[n], n)))
        rest = sorted((n for n in cand if n not in stripe),
                      key=lambda n: (-free_cache[n], n))
        stripe.extend(rest[: k - len(stripe)])
        if len(stripe) == k:
            return stripe
    return None


@dataclass(frozen=True)
class RackUplinkRow:
    rack_id: str
    misplaced_jobs: float
    utilization: float
    saturated: bool


def placement_report(placements: list[JobPlacement], topology: ClusterTopology,
                     per_job_rate_bps: float) -> list[RackUplinkRow]:
    """Per-rack up-link utilization from the misplaced jobs running in it."""
    rack_of = {n.node_id: n.rack_id for n in topology.nodes}
    counts: dict[str, float] = {r.rack_id: 0.0 for r in topology.racks}
    for p in placements:
        if p.locality_tier != LocalityTier.MISPLACED:
            continue
        for rack in sorted({rack_of[n] for n in p.assigned_nodes}):
            counts[rack] += 1.0
    rows = []
    for rack in topology.racks:
        n = counts[rack.rack_id]
        raw = n * per_job_rate_bps / rack.uplink_bandwidth_bps
        rows.append(RackUplinkRow(
            rack_id=rack.rack_id, misplaced_jobs=n,
            utilization=uplink_utilization(rack, n, per_job_rate_bps),
            saturated=raw > 1.0))
    return rows


def uplink_sweep(rack, total_jobs: int, misplaced_percents: list[float],
                 per_job_rate_bps: float) -> list[tuple[float, float]]:
    """Projected up-link utilization for a population of jobs of which a
    given percentage is misplaced. Effective job counts are fractional
    (percent x population), matching how such projections are constructed.
    """
    out = []
    for pct in misplaced_percents:
        eff = total_jobs * pct / 100.0
        out.append((pct, uplink_utilization(rack, eff, per_job_rate_bps)))
    return out


def build_gpu_free(topology: ClusterTopology,
                   running: list[tuple[tuple[str, ...], int]]) -> dict[str, int]:
    """Free GPUs per node given running (assigned_nodes, gpus_per_node) pairs."""
    free = {n.node_id: n.gpus for n in topology.nodes}
    for nodes, gpus in running:
        for node in nodes:
            free[node] -= gpus
            if free[node] < 0:
                raise CapacityError(f"node {node!r} is GPU-overcommitted")
    return free
