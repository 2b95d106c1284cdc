"""Flow-level discrete-event simulation of training I/O.

Each job's storage traffic is a set of weighted flows over shared
resources (remote store, per-node NVMe, NICs, rack up-links). Rates are
max-min fair and recomputed at every event boundary (epoch completions,
job finishes); between events everything is piecewise constant, so byte
accounting is exact. No randomness: identical scenarios produce
bit-identical reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .. import cachemgr, scheduler
from ..cachemgr import CacheState, StripeMap
from ..errors import CapacityError, InsufficientGPUsError
from ..registry import DatasetSpec
from ..scheduler import JobPlacement, LocalityTier
from .fairshare import Flow, max_min_rates
from .model import (MODE_HOARD, MODE_NVME_COPY, MODE_REM, ModelProfile,
                    mem_hit_rate)
from .projections import speedup_projection
from .scenario import SPEEDUP_HORIZONS, Scenario

_BOUNDARY_SLACK = 1 + 1e-12


@dataclass(frozen=True)
class PlacedJob:
    job_id: str
    mode: str
    profile: ModelProfile
    dataset: DatasetSpec
    store_id: str
    assigned_nodes: tuple[str, ...]
    stripe: StripeMap | None
    locality_tier: LocalityTier

    def local_byte_fraction(self) -> float:
        """Mean, over the job's workers, of the stripe byte fraction their
        own node owns (zero for workers off the stripe)."""
        if self.stripe is None:
            return 0.0
        per_node = self.stripe.bytes_per_node()
        size = self.stripe.size_bytes
        return sum(per_node.get(a, 0) / size for a in self.assigned_nodes) \
            / len(self.assigned_nodes)


@dataclass(frozen=True)
class SimSetup:
    scenario: Scenario
    placed: tuple[PlacedJob, ...]

    def job(self, job_id: str) -> PlacedJob:
        for pj in self.placed:
            if pj.job_id == job_id:
                return pj
        raise CapacityError(f"job {job_id!r} is not part of this scenario")


@dataclass(frozen=True)
class JobRates:
    """Per-second rates for one job under the current allocation."""

    fps: float
    device_Bps: float  # bytes/s read from any storage device
    remote_Bps: float
    peer_Bps: float
    local_Bps: float
    mem_Bps: float


@dataclass(frozen=True)
class EpochRow:
    job_id: str
    epoch: int
    mode: str
    duration_s: float
    fps: float
    remote_bytes: float
    peer_bytes: float
    mem_bytes: float
    local_bytes: float


@dataclass(frozen=True)
class JobTotals:
    job_id: str
    mode: str
    duration_s: float
    transmitted_bytes: float  # remote + peer + local (memory hits excluded)
    mem_bytes: float
    mean_rate_bps: float


@dataclass(frozen=True)
class SimReport:
    seed: int
    rows: tuple[EpochRow, ...]
    job_totals: tuple[JobTotals, ...]
    makespan_s: float
    speedups: dict[int, float] = field(default_factory=dict)

    def rows_for(self, job_id: str) -> list[EpochRow]:
        return [r for r in self.rows if r.job_id == job_id]

    def mean_job_duration_s(self) -> float:
        return sum(t.duration_s for t in self.job_totals) / len(self.job_totals)

    def mean_job_transmitted_bytes(self) -> float:
        return sum(t.transmitted_bytes for t in self.job_totals) / len(self.job_totals)

    def mean_job_rate_bps(self) -> float:
        return sum(t.mean_rate_bps for t in self.job_totals) / len(self.job_totals)

    def mean_fps(self, epoch: int | None = None, warm: bool = False) -> float:
        rows = [r for r in self.rows
                if (epoch is None or r.epoch == epoch) and (not warm or r.epoch >= 2)]
        if not rows:
            raise CapacityError("no epoch rows selected")
        return sum(r.fps for r in rows) / len(rows)


# -- placement ---------------------------------------------------------------


def prepare(scenario: Scenario) -> SimSetup:
    """Stripe datasets and place jobs exactly as the control plane would."""
    topo = scenario.topology
    state = CacheState.from_topology(topo, policy=cachemgr.POLICY_MANUAL)
    gpu_free = {n.node_id: n.gpus for n in topo.nodes}
    clock = 0

    for ds in scenario.datasets:
        hint = scenario.cache_hints.get(ds.name)
        if hint:
            nodes = cachemgr.select_cache_nodes(
                ds.name, ds.size_bytes, topo, state, hint=list(hint),
                chunk_size_bytes=scenario.chunk_size_bytes)
            clock += 1
            state.charge(StripeMap.build(ds.name, ds.size_bytes,
                                         scenario.chunk_size_bytes, nodes), clock)

    placed: list[PlacedJob] = []
    for sj in scenario.jobs:
        job = sj.job
        dataset = scenario.dataset(job.dataset_name)
        stripe = state.residents.get(job.dataset_name)
        if stripe is not None:
            plan = scheduler.place_job(job, topo, state, gpu_free)
            placement = plan.placement
        elif sj.access_mode == MODE_HOARD:
            plan = scheduler.place_job(job, topo, state, gpu_free,
                                       dataset_size_bytes=dataset.size_bytes,
                                       chunk_size_bytes=scenario.chunk_size_bytes)
            placement = plan.placement
            assert plan.stripe_nodes is not None
            stripe = StripeMap.build(dataset.name, dataset.size_bytes,
                                     scenario.chunk_size_bytes, plan.stripe_nodes)
            clock += 1
            state.charge(stripe, clock)
        else:
            placement = _place_compute_only(job, topo, gpu_free)
        for node in placement.assigned_nodes:
            gpu_free[node] -= job.gpus_per_node
        placed.append(PlacedJob(
            job_id=job.job_id, mode=sj.access_mode,
            profile=scenario.models[job.model], dataset=dataset,
            store_id=dataset.store_id,
            assigned_nodes=placement.assigned_nodes, stripe=stripe,
            locality_tier=placement.locality_tier))
    return SimSetup(scenario=scenario, placed=tuple(placed))


def _place_compute_only(job, topo, gpu_free) -> JobPlacement:
    """GPU-only placement for jobs that bypass the cache (REM, NVME_COPY)."""
    feasible = [n.node_id for n in topo.nodes
                if gpu_free[n.node_id] >= job.gpus_per_node]
    if len(feasible) < job.nodes_requested:
        raise InsufficientGPUsError(
            f"job {job.job_id!r} needs {job.nodes_requested} node(s); "
            f"only {len(feasible)} have {job.gpus_per_node} free GPU(s)")
    feasible.sort(key=lambda n: (-gpu_free[n], n))
    return JobPlacement(job_id=job.job_id,
                        assigned_nodes=tuple(feasible[:job.nodes_requested]),
                        locality_tier=LocalityTier.MISPLACED,
                        dataset_name=job.dataset_name)


# -- rate computation ---------------------------------------------------------


def _resource_capacities(scenario: Scenario) -> dict[str, float]:
    topo = scenario.topology
    caps: dict[str, float] = {}
    for store in topo.remote_stores:
        # remote_efficiency folds protocol/client overhead into the store
        caps[f"remote:{store.store_id}"] = \
            store.aggregate_read_bandwidth_Bps * scenario.remote_efficiency
    for node in topo.nodes:
        caps[f"nvme:{node.node_id}"] = node.nvme_bandwidth_Bps
        caps[f"nic_out:{node.node_id}"] = node.nic_bandwidth_bps / 8.0
        caps[f"nic_in:{node.node_id}"] = node.nic_bandwidth_bps / 8.0
    for rack in topo.racks:
        caps[f"uplink:{rack.rack_id}"] = rack.uplink_bandwidth_bps / 8.0
    return caps


def _job_flows(pj: PlacedJob, epoch: int, scenario: Scenario,
               rack_of: dict[str, str]) -> tuple[list[Flow], float, bool]:
    """(flows, demand, cold) for one job at one epoch. ``demand`` is the
    path rate the job asks for; a cold cache divides the achieved path
    rate by kappa_miss before it reaches the GPUs."""
    profile = pj.profile
    hit = mem_hit_rate(scenario.memory_model, epoch)
    need = profile.fps_compute_ceiling * profile.bytes_per_image * (1.0 - hit)
    if need <= 0:
        return [], 0.0, False
    jid = pj.job_id
    m = len(pj.assigned_nodes)

    if pj.mode == MODE_REM:
        return [Flow(jid, 1.0, (f"remote:{pj.store_id}",))], need, False

    if pj.mode == MODE_NVME_COPY:
        flows = [Flow(jid, 1.0 / m, (f"nvme:{a}",)) for a in pj.assigned_nodes]
        return flows, need, False

    # HOARD
    if pj.stripe is None:
        raise CapacityError(f"job {jid!r} uses the cache but has no stripe")
    per_node = pj.stripe.bytes_per_node()
    size = pj.stripe.size_bytes
    if epoch == 1:
        # read-through fill: remote path plus the cache write path, with the
        # delivered rate further divided by the miss penalty
        flows = [Flow(jid, 1.0, (f"remote:{pj.store_id}",))]
        for owner, nbytes in per_node.items():
            flows.append(Flow(jid, nbytes / size, (f"nvme:{owner}",)))
        return flows, need * scenario.kappa_miss, True

    flows = []
    for reader in pj.assigned_nodes:
        for owner, nbytes in per_node.items():
            weight = (nbytes / size) / m
            if owner == reader:
                flows.append(Flow(jid, weight, (f"nvme:{owner}",)))
            else:
                path = [f"nvme:{owner}", f"nic_out:{owner}", f"nic_in:{reader}"]
                if rack_of[owner] != rack_of[reader]:
                    path += [f"uplink:{rack_of[owner]}",
                             f"uplink:{rack_of[reader]}"]
                flows.append(Flow(jid, weight, tuple(path)))
    return flows, need, False


def compute_rates(setup: SimSetup, epoch_by_job: dict[str, int]) -> dict[str, JobRates]:
    """Max-min fair rates for every job listed in ``epoch_by_job``."""
    scenario = setup.scenario
    rack_of = {n.node_id: n.rack_id for n in scenario.topology.nodes}
    caps = _resource_capacities(scenario)

    flows: list[Flow] = []
    demands: dict[str, float] = {}
    cold: dict[str, bool] = {}
    hits: dict[str, float] = {}
    for pj in setup.placed:
        if pj.job_id not in epoch_by_job:
            continue
        epoch = epoch_by_job[pj.job_id]
        job_flows, demand, is_cold = _job_flows(pj, epoch, scenario, rack_of)
        flows.extend(job_flows)
        demands[pj.job_id] = demand
        cold[pj.job_id] = is_cold
        hits[pj.job_id] = mem_hit_rate(scenario.memory_model, epoch)

    alloc = max_min_rates(flows, caps, demands)

    out: dict[str, JobRates] = {}
    for pj in setup.placed:
        if pj.job_id not in epoch_by_job:
            continue
        profile = pj.profile
        hit = hits[pj.job_id]
        device = alloc[pj.job_id]
        if cold[pj.job_id]:
            device /= scenario.kappa_miss
        if hit < 1.0:
            fps_val = min(profile.fps_compute_ceiling,
                          device / (profile.bytes_per_image * (1.0 - hit)))
        else:
            fps_val = profile.fps_compute_ceiling
            device = 0.0
        delivered = fps_val * profile.bytes_per_image
        mem_rate = delivered * hit
        dev_rate = delivered - mem_rate
        remote = peer = local = 0.0
        if pj.mode == MODE_REM:
            remote = dev_rate
        elif pj.mode == MODE_NVME_COPY:
            local = dev_rate
        elif epoch_by_job[pj.job_id] == 1:
            remote = dev_rate
        else:
            frac = pj.local_byte_fraction()
            local = dev_rate * frac
            peer = dev_rate * (1.0 - frac)
        out[pj.job_id] = JobRates(fps=fps_val, device_Bps=dev_rate,
                                  remote_Bps=remote, peer_Bps=peer,
                                  local_Bps=local, mem_Bps=mem_rate)
    return out


def effective_bandwidth(job_id: str, epoch_index: int, scenario: Scenario,
                        concurrent_epochs: dict[str, int] | None = None) -> float:
    """Storage read bandwidth (bytes/s) one job achieves at an epoch, with
    every other job concurrently at the epoch given in
    ``concurrent_epochs`` (default: the same epoch for everyone)."""
    setup = prepare(scenario)
    epochs = {pj.job_id: epoch_index for pj in setup.placed}
    if concurrent_epochs:
        epochs.update(concurrent_epochs)
    rates = compute_rates(setup, epochs)
    if job_id not in rates:
        raise CapacityError(f"unknown job {job_id!r}")
    return rates[job_id].device_Bps


# -- event loop ---------------------------------------------------------------


@dataclass
class _JobState:
    epoch: int = 1
    images_left: float = 0.0
    epoch_start: float = 0.0
    remote: float = 0.0
    peer: float = 0.0
    mem: float = 0.0
    local: float = 0.0

    def reset_epoch(self, images: int, now: float) -> None:
        self.images_left = images
        self.epoch_start = now
        self.remote = self.peer = self.mem = self.local = 0.0


def simulate(scenario: Scenario) -> tuple[list[EpochRow], float]:
    """Run one scenario to completion; (epoch rows, makespan seconds)."""
    setup = prepare(scenario)
    states: dict[str, _JobState] = {}
    order = [pj.job_id for pj in setup.placed]
    for pj in setup.placed:
        st = _JobState()
        st.reset_epoch(pj.profile.images_per_epoch, 0.0)
        states[pj.job_id] = st
    alive = list(order)
    rows: list[EpochRow] = []
    now = 0.0

    while alive:
        rates = compute_rates(setup, {j: states[j].epoch for j in alive})
        dt = math.inf
        for j in alive:
            if rates[j].fps <= 0:
                raise CapacityError(f"job {j!r} starved: zero throughput")
            dt = min(dt, states[j].images_left / rates[j].fps)
        finishing = [j for j in alive
                     if states[j].images_left / rates[j].fps <= dt * _BOUNDARY_SLACK]
        now += dt
        still_alive = []
        for j in alive:
            st = states[j]
            r = rates[j]
            st.remote += r.remote_Bps * dt
            st.peer += r.peer_Bps * dt
            st.mem += r.mem_Bps * dt
            st.local += r.local_Bps * dt
            if j in finishing:
                pj = setup.job(j)
                duration = now - st.epoch_start
                rows.append(EpochRow(
                    job_id=j, epoch=st.epoch, mode=pj.mode,
                    duration_s=duration,
                    fps=pj.profile.images_per_epoch / duration,
                    remote_bytes=st.remote, peer_bytes=st.peer,
                    mem_bytes=st.mem, local_bytes=st.local))
                if st.epoch < scenario.epochs:
                    st.epoch += 1
                    st.reset_epoch(pj.profile.images_per_epoch, now)
                    still_alive.append(j)
            else:
                st.images_left -= r.fps * dt
                still_alive.append(j)
        alive = still_alive
    return rows, now


def run_scenario(scenario: Scenario, with_baseline: bool = True) -> SimReport:
    """Simulate a scenario; the report includes long-training speedups
    against a forced-REM twin of the same workload."""
    scenario.validate()
    rows, makespan = simulate(scenario)

    totals = []
    for sj in scenario.jobs:
        jid = sj.job.job_id
        job_rows = [r for r in rows if r.job_id == jid]
        duration = sum(r.duration_s for r in job_rows)
        transmitted = sum(r.remote_bytes + r.peer_bytes + r.local_bytes
                          for r in job_rows)
        mem_bytes = sum(r.mem_bytes for r in job_rows)
        totals.append(JobTotals(
            job_id=jid, mode=sj.access_mode, duration_s=duration,
            transmitted_bytes=transmitted, mem_bytes=mem_bytes,
            mean_rate_bps=transmitted * 8.0 / duration))

    speedups: dict[int, float] = {}
    if with_baseline:
        if all(sj.access_mode == MODE_REM for sj in scenario.jobs):
            rem_rows = rows
        else:
            rem_rows, _ = simulate(scenario.with_modes(MODE_REM))
        t_rem = sum(r.duration_s for r in rem_rows) / len(rem_rows)
        firsts = [r.duration_s for r in rows if r.epoch == 1]
        warms = [r.duration_s for r in rows if r.epoch >= 2]
        t_first = sum(firsts) / len(firsts)
        t_warm = sum(warms) / len(warms) if warms else t_first
        speedups = {n: speedup_projection(t_first, t_warm, t_rem, n)
                    for n in SPEEDUP_HORIZONS}

    return SimReport(seed=scenario.seed, rows=tuple(rows),
                     job_totals=tuple(totals), makespan_s=makespan,
                     speedups=speedups)
