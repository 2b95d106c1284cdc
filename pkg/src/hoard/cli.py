"""Command-line surface: dataset/job lifecycle, chunk server, reads, simulator."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import cachemgr, simengine
from .control import ControlPlane
from .dataplane import ChunkStore, DatasetClient, RemoteStore, TcpTransport
from .dataplane.server import ChunkServer, DatasetHandle
from .dataplane.tcp import ChunkTcpServer
from .errors import ConfigError, HoardError, NotFoundError
from .registry import DatasetSpec, DatasetState, JobSpec, Registry
from .simengine import report as simreport
from .topology import load_topology


def _fail(e: HoardError) -> None:
    click.echo(f"error: {e}", err=True)
    sys.exit(e.exit_code)


def _control(ctx: click.Context) -> ControlPlane:
    opts = ctx.obj
    topology = None
    if opts["topology"]:
        topology = load_topology(Path(opts["topology"]).read_text(encoding="utf-8"))
    return ControlPlane(
        state_dir=opts["state_dir"], topology=topology,
        eviction_policy=opts["policy"], chunk_size_bytes=opts["chunk_size"],
        log_format=opts["log_format"])


@click.group()
@click.option("--state-dir", envvar="HOARD_STATE_DIR", default="./hoard-state",
              show_default=True, help="Directory holding the catalog, chunk "
              "caches, and event log.")
@click.option("--topology", envvar="HOARD_TOPOLOGY", default=None,
              help="Topology YAML; cached into the state dir on first use.")
@click.option("--log-format", envvar="HOARD_LOG_FORMAT",
              type=click.Choice(["text", "json-lines"]), default="text",
              show_default=True, help="Event log record format.")
@click.option("--policy", envvar="HOARD_POLICY",
              type=click.Choice(list(cachemgr.POLICIES)), default="lru",
              show_default=True, help="Cache eviction policy.")
@click.option("--chunk-size", envvar="HOARD_CHUNK_SIZE", type=int,
              default=cachemgr.DEFAULT_CHUNK_SIZE, show_default=True,
              help="Stripe chunk size in bytes.")
@click.option("--seed", envvar="HOARD_SEED", type=int, default=None,
              help="Override scenario seeds.")
@click.pass_context
def main(ctx, state_dir, topology, log_format, policy, chunk_size, seed):
    """Desk-scale distributed dataset cache and training-I/O simulator."""
    ctx.obj = {"state_dir": state_dir, "topology": topology,
               "log_format": log_format, "policy": policy,
               "chunk_size": chunk_size, "seed": seed}


# -- dataset ------------------------------------------------------------------


@main.group()
def dataset():
    """Register, cache, and evict datasets."""


@dataset.command("add")
@click.option("--name", required=True, help="Unique dataset name.")
@click.option("--url", required=True, help="Remote location (file:// path).")
@click.option("--store", default="", help="Remote store id from the topology.")
@click.option("--size", type=int, default=None,
              help="Dataset size in bytes; probed from --url when omitted.")
@click.option("--prefetch/--no-prefetch", default=False, show_default=True,
              help="Queue an asynchronous prefetch on registration.")
@click.option("--pin/--no-pin", default=False, show_default=True,
              help="Exempt from LRU eviction.")
@click.pass_context
def dataset_add(ctx, name, url, store, size, prefetch, pin):
    """Register a remote dataset."""
    try:
        control = _control(ctx)
        if size is None:
            size = control.remote.size(url)
        record = control.add_dataset(DatasetSpec(
            name=name, remote_url=url, store_id=store, size_bytes=size,
            prefetch=prefetch, pinned=pin))
        click.echo(f"{record.spec.name}: {record.state.value} "
                   f"({record.spec.size_bytes} bytes)")
    except HoardError as e:
        _fail(e)


@dataset.command("list")
@click.pass_context
def dataset_list(ctx):
    """Print name, state, size, cache nodes, and LRU position."""
    try:
        control = _control(ctx)
        click.echo(f"{'NAME':<20}{'STATE':<12}{'SIZE':>14}  "
                   f"{'CACHE NODES':<24}{'LRU#':>5}")
        for record in control.list_datasets():
            nodes = ",".join(record.stripe_map.cache_nodes) if record.stripe_map else "-"
            pos = control.lru_position(record.spec.name)
            lru = str(pos) if pos is not None else ("pin" if record.spec.pinned else "-")
            click.echo(f"{record.spec.name:<20}{record.state.value:<12}"
                       f"{record.spec.size_bytes:>14}  {nodes:<24}{lru:>5}")
    except HoardError as e:
        _fail(e)


@dataset.command("prefetch")
@click.option("--name", required=True, help="Dataset to fetch into the cache.")
@click.pass_context
def dataset_prefetch(ctx, name):
    """Admit (if needed) and fetch every chunk of a dataset."""
    try:
        summary = _control(ctx).prefetch_dataset(name)
        click.echo(f"{name}: fetched {summary.chunks_fetched} chunks "
                   f"({summary.bytes_fetched} bytes) in {summary.duration_s:.2f}s")
    except HoardError as e:
        _fail(e)


@dataset.command("evict")
@click.option("--name", required=True, help="Dataset to evict.")
@click.option("--force", is_flag=True, default=False,
              help="Evict even if pinned.")
@click.pass_context
def dataset_evict(ctx, name, force):
    """Remove a dataset's chunks from every cache node."""
    try:
        freed = _control(ctx).evict_dataset(name, force=force)
        click.echo(f"{name}: evicted, freed {sum(freed.values())} bytes "
                   f"on {len(freed)} node(s)")
    except HoardError as e:
        _fail(e)


@dataset.command("pin")
@click.option("--name", required=True, help="Dataset to pin.")
@click.pass_context
def dataset_pin(ctx, name):
    """Exempt a dataset from LRU eviction."""
    try:
        _control(ctx).pin_dataset(name, True)
        click.echo(f"{name}: pinned")
    except HoardError as e:
        _fail(e)


@dataset.command("unpin")
@click.option("--name", required=True, help="Dataset to unpin.")
@click.pass_context
def dataset_unpin(ctx, name):
    """Return a dataset to the LRU queue."""
    try:
        _control(ctx).pin_dataset(name, False)
        click.echo(f"{name}: unpinned")
    except HoardError as e:
        _fail(e)


@dataset.command("delete")
@click.option("--name", required=True, help="Dataset to remove entirely.")
@click.pass_context
def dataset_delete(ctx, name):
    """Evict (if cached) and remove a dataset from the catalog."""
    try:
        _control(ctx).delete_dataset(name)
        click.echo(f"{name}: deleted")
    except HoardError as e:
        _fail(e)


@main.command("pending")
@click.argument("action", type=click.Choice(["run", "list"]))
@click.pass_context
def pending(ctx, action):
    """Inspect or drain the queued asynchronous commands."""
    try:
        control = _control(ctx)
        if action == "list":
            for cmd in control.registry.pending_commands:
                click.echo(f"{cmd['op']} {cmd.get('dataset', '')}")
        else:
            for cmd in control.run_pending():
                click.echo(f"ran {cmd['op']} {cmd.get('dataset', '')}")
    except HoardError as e:
        _fail(e)


# -- jobs ----------------------------------------------------------------------


@main.group()
def job():
    """Submit and track training jobs."""


@job.command("submit")
@click.option("--id", "job_id", required=True, help="Unique job id.")
@click.option("--dataset", required=True, help="Registered dataset name.")
@click.option("--nodes", type=int, default=1, show_default=True,
              help="Nodes requested (gang-placed).")
@click.option("--gpus-per-node", type=int, default=1, show_default=True,
              help="GPUs required on each node.")
@click.option("--mount", default="/data", show_default=True,
              help="Mount path inside the job's container.")
@click.option("--model", default="", help="Model profile name (simulator).")
@click.pass_context
def job_submit(ctx, job_id, dataset, nodes, gpus_per_node, mount, model):
    """Submit a job; prints its placement or queue reason."""
    try:
        record = _control(ctx).submit_job(JobSpec(
            job_id=job_id, dataset_name=dataset, nodes_requested=nodes,
            gpus_per_node=gpus_per_node, mount_path=mount, model=model))
        if record.status.value == "Running":
            click.echo(f"{job_id}: {record.locality_tier} on "
                       f"{','.join(record.assigned_nodes)}")
        else:
            click.echo(f"{job_id}: queued ({record.queue_reason})")
    except HoardError as e:
        _fail(e)


@job.command("status")
@click.option("--id", "job_id", default=None, help="Limit to one job.")
@click.pass_context
def job_status(ctx, job_id):
    """Show job states, assignments, and locality tiers."""
    try:
        control = _control(ctx)
        records = ([control.registry.get_job(job_id)] if job_id
                   else control.registry.list_jobs())
        click.echo(f"{'JOB':<16}{'STATUS':<10}{'TIER':<11}{'NODES':<24}{'DATASET'}")
        for r in records:
            click.echo(f"{r.spec.job_id:<16}{r.status.value:<10}"
                       f"{r.locality_tier or '-':<11}"
                       f"{','.join(r.assigned_nodes) or '-':<24}"
                       f"{r.spec.dataset_name}")
    except HoardError as e:
        _fail(e)


@job.command("finish")
@click.option("--id", "job_id", required=True, help="Running job to finish.")
@click.pass_context
def job_finish(ctx, job_id):
    """Mark a job finished and start queued jobs that now fit."""
    try:
        started = _control(ctx).finish_job(job_id)
        click.echo(f"{job_id}: finished")
        for record in started:
            click.echo(f"{record.spec.job_id}: {record.locality_tier} on "
                       f"{','.join(record.assigned_nodes)}")
    except HoardError as e:
        _fail(e)


# -- data plane -----------------------------------------------------------------


def _parse_listen(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"--listen must be host:port, got {value!r}")
    return host, int(port)


@main.command("serve")
@click.option("--node", required=True, help="Node id this server acts as.")
@click.option("--listen", required=True, help="host:port to bind.")
@click.option("--cache-root", default=None,
              help="Chunk directory (default: <state-dir>/cache/<node>).")
@click.pass_context
def serve(ctx, node, listen, cache_root):
    """Run a chunk server for one node until interrupted."""
    try:
        opts = ctx.obj
        state_dir = Path(opts["state_dir"])
        registry = Registry(state_dir)
        remote = RemoteStore()
        root = Path(cache_root) if cache_root else state_dir / "cache" / node

        def resolver(uuid_hex: str) -> DatasetHandle:
            reg = Registry(state_dir)  # reload: other processes mutate it
            for record in reg.list_datasets():
                if record.uuid.hex == uuid_hex and record.stripe_map is not None:
                    return DatasetHandle(uuid_hex=uuid_hex,
                                         stripe=record.stripe_map,
                                         remote_url=record.spec.remote_url)
            raise NotFoundError(f"no cached dataset with uuid {uuid_hex}")

        del registry
        server = ChunkServer(node_id=node, store=ChunkStore(root),
                             remote=remote, resolver=resolver)
        address = _parse_listen(listen)
        try:
            tcp = ChunkTcpServer(address, server)
        except OSError as e:
            raise ConfigError(f"cannot bind {listen}: {e}") from e
        click.echo(f"serving node {node} on {listen} (cache {root})", err=True)
        try:
            tcp.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            tcp.server_close()
    except HoardError as e:
        _fail(e)


def _parse_peers(value: str) -> dict[str, tuple[str, int]]:
    peers = {}
    for part in value.split(","):
        if not part:
            continue
        node, _, addr = part.partition("=")
        if not addr:
            raise ConfigError(f"--peers entries must be node=host:port, got {part!r}")
        peers[node] = _parse_listen(addr)
    return peers


@main.command("cat")
@click.option("--dataset", "name", required=True, help="Dataset to read.")
@click.option("--offset", type=int, default=0, show_default=True,
              help="Starting byte offset.")
@click.option("--length", type=int, default=None,
              help="Bytes to read (default: to end of dataset).")
@click.option("--peers", default="",
              help="node=host:port,... chunk servers; in-process when empty.")
@click.pass_context
def cat(ctx, name, offset, length, peers):
    """Stream a dataset byte range to stdout."""
    try:
        if peers:
            state_dir = Path(ctx.obj["state_dir"])
            registry = Registry(state_dir)
            record = registry.get_dataset(name)
            if record.stripe_map is None:
                raise NotFoundError(f"dataset {name!r} is not cached")
            if length is None:
                length = record.spec.size_bytes - offset
            transport = TcpTransport(_parse_peers(peers))
            client = DatasetClient(transport)
            handle = DatasetHandle(uuid_hex=record.uuid.hex,
                                   stripe=record.stripe_map,
                                   remote_url=record.spec.remote_url)
            data = client.read(handle, offset, length)
            transport.close()
        else:
            data = _control(ctx).read_dataset(name, offset, length)
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    except HoardError as e:
        _fail(e)


# -- simulator --------------------------------------------------------------------


@main.group()
def sim():
    """Flow-level training-I/O simulation."""


@sim.command("run")
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Scenario YAML file.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Output directory for reports.")
@click.pass_context
def sim_run(ctx, scenario_path, out_dir):
    """Run a scenario; write report.csv, tables.txt, and sweep series."""
    try:
        scenario = simengine.load_scenario(
            Path(scenario_path).read_text(encoding="utf-8"))
        if ctx.obj["seed"] is not None:
            from dataclasses import replace
            scenario = replace(scenario, seed=ctx.obj["seed"])
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)

        report = simengine.run_scenario(scenario)
        (out / "report.csv").write_text(simreport.report_to_csv(report),
                                        encoding="utf-8")

        by_mode = simreport.mode_reports(scenario)
        (out / "tables.txt").write_text(
            simreport.render_tables(scenario, by_mode), encoding="utf-8")
        (out / "fps_timeline.csv").write_text(
            simreport.fps_timeline_csv(by_mode), encoding="utf-8")
        (out / "mdr_sweep.csv").write_text(
            simreport.sweep_to_csv(simreport.sweep_mdr(scenario), "mdr"),
            encoding="utf-8")
        (out / "remote_bw_sweep.csv").write_text(
            simreport.sweep_to_csv(simreport.sweep_remote_bandwidth(scenario),
                                   "remote_scale"), encoding="utf-8")
        click.echo(f"wrote {out / 'report.csv'}")
        click.echo(f"wrote {out / 'tables.txt'}")
        for line in (out / "tables.txt").read_text(encoding="utf-8").splitlines():
            click.echo(line)
    except HoardError as e:
        _fail(e)


@main.command("topology")
@click.argument("action", type=click.Choice(["check"]))
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
def topology_cmd(action, path):
    """Validate a topology file and print a summary."""
    try:
        topo = load_topology(Path(path).read_text(encoding="utf-8"))
        click.echo(f"{len(topo.racks)} rack(s), {len(topo.nodes)} node(s), "
                   f"{len(topo.remote_stores)} remote store(s)")
        click.echo(f"aggregate cache capacity: "
                   f"{topo.total_cache_capacity_bytes()} bytes")
    except HoardError as e:
        _fail(e)


if __name__ == "__main__":
    main()
