"""
Command-line interface for lookalike
"""

import asyncio
import json
import math
import signal
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from . import __version__
from .cluster.client import QueryClient, QueryOutcome
from .cluster.config import ClusterConfig
from .cluster.node import MiningPlan, ShardNode
from .cluster.transfer import NetworkTransport
from .core.config import Config
from .core.coverage import DEPLOYMENT_PROFILES, plan_table
from .core.errors import ConfigurationError, LookalikeError
from .guard.sinks import AlertLogSink, ConsoleSink, SinkManager, watch
from .guard.sources import ReplaySource, StreamSource, TailSource
from .mining.bench import bench as run_bench
from .mining.miner import Miner, MiningStats, StopCondition
from .simulation import (
    SimulationReport,
    cluster_coverage,
    in_process_cluster,
    latency_scaling,
    predicted_coverage,
    measure_transfer_latency,
    run_simulation,
)
from .storage.shard_store import open_shard
from .utils.helpers import format_binary_size, format_duration
from .utils.logging import setup_logging

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

console = Console()
err_console = Console(stderr=True)


class LookalikeGroup(click.Group):
    """Maps failures to exit status: 1 usage/configuration, 2 runtime"""

    def main(self, *args, standalone_mode: bool = True, **kwargs):
        try:
            result = super().main(*args, standalone_mode=False, **kwargs)
            code = result if isinstance(result, int) else EXIT_OK
        except click.ClickException as e:
            e.show()
            code = EXIT_USAGE
        except click.exceptions.Abort:
            err_console.print("[yellow]Aborted[/yellow]")
            code = EXIT_USAGE
        except ConfigurationError as e:
            err_console.print(f"[red]Configuration error: {e}[/red]")
            code = EXIT_USAGE
        except (LookalikeError, OSError) as e:
            err_console.print(f"[red]Error: {e}[/red]")
            code = EXIT_RUNTIME
        if standalone_mode:
            sys.exit(code)
        return code


def _obj(ctx: click.Context) -> Dict[str, Any]:
    return ctx.ensure_object(dict)


def _load_cluster(ctx: click.Context) -> ClusterConfig:
    path = _obj(ctx).get("config_path")
    if path is None:
        raise click.UsageError("this command needs --config PATH")
    return ClusterConfig.load(path)


def _emit_json(data: Any) -> None:
    click.echo(json.dumps(data, indent=2, default=str))


@click.group(cls=LookalikeGroup)
@click.version_option(version=__version__)
@click.option("--config", "-c", "config_path", type=click.Path(dir_okay=False, path_type=Path), help="Cluster config file")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Master seed for every randomized step")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False), default=None)
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[Path], seed: Optional[int], log_level: Optional[str]):
    """lookalike - similar-address stores, coverage planning and substitution detection"""
    config = Config.from_env()
    if log_level:
        config.log_level = log_level.upper()
    config.validate()
    setup_logging(config.log_level)
    obj = _obj(ctx)
    obj.update(config=config, config_path=config_path, seed=seed)


# ----------------------------------------------------------------------
# mine


def _stop_condition(
    cluster: ClusterConfig,
    generated: Optional[int],
    occupancy: Optional[int],
    duration: Optional[float],
    tau: Optional[float],
    until_signaled: bool = False,
) -> StopCondition:
    if tau is not None:
        if generated is not None:
            raise click.UsageError("--tau and --generated are exclusive")
        generated = int(round(tau * 16**cluster.n_match))
    if until_signaled and generated is None and occupancy is None and duration is None:
        return StopCondition.seconds(math.inf)
    return StopCondition(target_generated=generated, target_occupancy=occupancy, duration=duration)


@cli.command()
@click.option("--shard", "shard_id", type=int, default=0, show_default=True, help="Local shard id")
@click.option("--workers", "-w", type=click.IntRange(1, 1024), default=1, show_default=True)
@click.option("--generated", type=click.IntRange(0), help="Stop after this many accounts")
@click.option("--occupancy", type=click.IntRange(0), help="Stop when the local shard holds this many records")
@click.option("--duration", type=click.FloatRange(0), help="Stop after this many seconds")
@click.option("--tau", type=click.FloatRange(0), help="Stop after tau x 16^N accounts")
@click.option("--discard-foreign", is_flag=True, help="Drop accounts owned by other shards instead of transferring them")
@click.option("--summary", type=click.Path(dir_okay=False, path_type=Path), help="Write a JSON summary here")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output")
@click.pass_context
def mine(ctx, shard_id, workers, generated, occupancy, duration, tau, discard_foreign, summary, as_json):
    """Mine accounts into the local shard"""
    obj = _obj(ctx)
    cluster = _load_cluster(ctx)
    config: Config = obj["config"]
    stop = _stop_condition(cluster, generated, occupancy, duration, tau)

    spec = cluster.shard(shard_id)
    transport = None if discard_foreign or len(cluster.shards) == 1 else NetworkTransport(cluster.n_match, config)
    with open_shard(spec.shard_file(cluster.n_match), config=config) as store:
        miner = Miner(store, cluster, shard_id, transport=transport, config=config, discard_foreign=discard_foreign)
        stats = miner.mine(workers, stop, seed=obj["seed"])
        occupied = store.occupancy()

    if summary is not None:
        stats.write_summary(summary)
    if as_json:
        _emit_json({**stats.to_dict(), "occupancy": occupied, "slots": spec.a1 - spec.a0})
        return

    _render_mining(f"Mining shard {shard_id}", stats, occupied, spec.a1 - spec.a0)


def _render_mining(title: str, stats: MiningStats, occupied: int, slots: int) -> None:
    table = Table(title=title)
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="green")
    for key, value in stats.to_dict().items():
        table.add_row(key, f"{value:.2f}" if isinstance(value, float) else str(value))
    table.add_row("occupancy", f"{occupied} / {slots} ({occupied / slots:.2%})")
    console.print(table)


# ----------------------------------------------------------------------
# serve


async def _serve(cluster: ClusterConfig, shard_id: int, config: Config, mining: Optional[MiningPlan]) -> ShardNode:
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            loop.add_signal_handler(sig, stop.set)
        except (NotImplementedError, RuntimeError):
            pass
    async with ShardNode(cluster, shard_id, config=config, mining=mining) as node:
        spec = node.spec
        lines = [
            f"shard {shard_id}  slots [{spec.a0:#x}, {spec.a1:#x})",
            f"query udp {spec.host}:{spec.query_port}  transfer tcp {spec.host}:{spec.transfer_port}",
        ]
        if mining is not None:
            lines.append(f"mining with {mining.workers} worker(s)")
        console.print(Panel.fit("\n".join(lines), title="lookalike serve", style="bold blue"))
        await stop.wait()
    return node


@cli.command()
@click.option("--shard", "shard_id", type=int, default=0, show_default=True)
@click.option("--mine-workers", type=click.IntRange(0, 1024), default=0, show_default=True, help="Also mine with this many workers")
@click.option("--generated", type=click.IntRange(0), help="Stop mining after this many accounts")
@click.option("--occupancy", type=click.IntRange(0), help="Stop mining at this local occupancy")
@click.option("--duration", type=click.FloatRange(0), help="Stop mining after this many seconds")
@click.option("--tau", type=click.FloatRange(0), help="Stop mining after tau x 16^N accounts")
@click.option("--discard-foreign", is_flag=True, help="Drop foreign accounts instead of transferring them")
@click.pass_context
def serve(ctx, shard_id, mine_workers, generated, occupancy, duration, tau, discard_foreign):
    """Run the query service, transfer receiver and optional miner for one shard until signaled"""
    obj = _obj(ctx)
    cluster = _load_cluster(ctx)
    mining = None
    if mine_workers:
        stop = _stop_condition(cluster, generated, occupancy, duration, tau, until_signaled=True)
        mining = MiningPlan(mine_workers, stop, seed=obj["seed"], discard_foreign=discard_foreign)
    elif any(v is not None for v in (generated, occupancy, duration, tau)) or discard_foreign:
        raise click.UsageError("mining options need --mine-workers")

    node = asyncio.run(_serve(cluster, shard_id, obj["config"], mining))
    if node.mining_stats is not None:
        slots = node.spec.a1 - node.spec.a0
        _render_mining(f"Mining shard {shard_id}", node.mining_stats, node.store.occupancy(), slots)
    console.print("[yellow]Stopped[/yellow]")
    if node.mining_error is not None:
        raise node.mining_error


# ----------------------------------------------------------------------
# query


@cli.command()
@click.argument("address")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def query(ctx, address, as_json):
    """Ask the owning shard for a substitute of ADDRESS"""
    cluster = _load_cluster(ctx)
    client = QueryClient.from_config(cluster, _obj(ctx)["config"])
    try:
        result = asyncio.run(client.query(address))
    except ValueError as e:
        raise click.BadParameter(str(e), param_hint="ADDRESS") from e

    if as_json:
        _emit_json(
            {
                "target": str(result.target),
                "outcome": result.outcome.value,
                "substitute": str(result.substitute) if result.substitute else None,
                "latency": result.latency,
                "attempts": result.attempts,
                "shard": result.shard_id,
            }
        )
        return
    if result.outcome is QueryOutcome.SUBSTITUTE:
        console.print(f"[green]substitute[/green] {result.substitute.checksummed()} [dim]({format_duration(result.latency)})[/dim]")
    else:
        console.print(f"[yellow]{result.outcome.value}[/yellow] after {result.attempts} attempt(s)")


# ----------------------------------------------------------------------
# simulate


def _render_report(report: SimulationReport) -> None:
    table = Table(title="Simulation")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="green")
    table.add_row("queries", str(report.queries))
    table.add_row("hits", f"{report.hits} ({report.verified_hits} verified)")
    table.add_row("misses", f"{report.misses} ({report.errors} errors)")
    table.add_row("timeouts", str(report.timeouts))
    table.add_row("hit rate", f"{report.hit_rate:.4f}")
    if report.predicted_coverage is not None:
        table.add_row("predicted coverage", f"{report.predicted_coverage:.4f}")
    lat = report.latency
    if lat.count:
        table.add_row(
            "latency min/mean/p95/max",
            " / ".join(format_duration(v) for v in (lat.min, lat.mean, lat.p95, lat.max)),
        )
    console.print(table)


@cli.command()
@click.option("--queries", "-n", type=click.IntRange(0), default=10_000, show_default=True)
@click.option("--in-process", is_flag=True, help="Open the stores and serve them from this process")
@click.option("--generated", type=click.IntRange(0), help="Accounts mined, for the predicted coverage")
@click.option("--concurrency", type=click.IntRange(1), default=32, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def simulate(ctx, queries, in_process, generated, concurrency, as_json):
    """Query random targets against the cluster and report the hit rate"""
    obj = _obj(ctx)
    cluster = _load_cluster(ctx)
    config: Config = obj["config"]

    predicted = None
    if generated is not None:
        predicted = predicted_coverage(generated, cluster.n_match)
    elif in_process:
        predicted = cluster_coverage(cluster, config)

    async def run() -> SimulationReport:
        if in_process:
            async with in_process_cluster(cluster, config) as live:
                return await run_simulation(live, queries, obj["seed"], config, predicted, concurrency)
        return await run_simulation(cluster, queries, obj["seed"], config, predicted, concurrency)

    report = asyncio.run(run())
    if as_json:
        _emit_json(report.to_dict())
    else:
        _render_report(report)


# ----------------------------------------------------------------------
# plan


def _parse_float_list(value: str) -> List[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError as e:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}") from e


@cli.command()
@click.option("--n-min", type=click.IntRange(1, 40), default=4, show_default=True)
@click.option("--n-max", type=click.IntRange(1, 40), default=11, show_default=True)
@click.option("--coverage", "coverages", default="0.5,0.95", show_default=True, help="Comma-separated targets in (0, 1)")
@click.option("--rate", type=click.FloatRange(0, min_open=True), help="Accounts per second")
@click.option("--profile", type=click.Choice(sorted(DEPLOYMENT_PROFILES)), help="Take the rate from a reference machine")
@click.option("--servers", type=click.IntRange(1), default=1, show_default=True)
@click.option("--rounded", is_flag=True, help="Use the rounded multipliers 3, 1 and 0.7")
@click.option("--json", "as_json", is_flag=True)
def plan(n_min, n_max, coverages, rate, profile, servers, rounded, as_json):
    """Coverage, storage and time planning table"""
    if n_min > n_max:
        raise click.UsageError("--n-min must not exceed --n-max")
    if profile is not None:
        if rate is not None:
            raise click.UsageError("--rate and --profile are exclusive")
        rate = DEPLOYMENT_PROFILES[profile].accounts_per_second
        if rate is None:
            raise click.UsageError(f"profile {profile} has no reference rate")
    targets = _parse_float_list(coverages)
    if not targets or any(not 0 < t < 1 for t in targets):
        raise click.BadParameter("coverage targets must lie in (0, 1)", param_hint="--coverage")

    rows = plan_table(range(n_min, n_max + 1), targets, rate=rate, servers=servers, rounded=rounded)
    if as_json:
        _emit_json([row.to_dict() for row in rows])
        return

    table = Table(title=f"Coverage plan ({servers} server{'s' if servers > 1 else ''})")
    table.add_column("N", style="cyan", justify="right")
    table.add_column("C", justify="right")
    table.add_column("tau", justify="right")
    table.add_column("accounts", justify="right")
    table.add_column("storage total", style="green", justify="right")
    table.add_column("per server", style="green", justify="right")
    table.add_column("time", style="yellow", justify="right")
    for row in rows:
        table.add_row(
            str(row.n_match),
            f"{row.coverage:.4f}",
            f"{row.tau:.4g}",
            f"{row.accounts:,.0f}",
            format_binary_size(row.storage_bytes),
            format_binary_size(row.storage_per_server),
            format_duration(row.time_estimate) if row.time_estimate is not None else "-",
        )
    console.print(table)


# ----------------------------------------------------------------------
# guard


@cli.command()
@click.option("--replay", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="Replay a recorded event log")
@click.option("--tail", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="Follow a file, one event per line")
@click.option("--stdin", "use_stdin", is_flag=True, help="Read events from standard input")
@click.option("--idle-timeout", type=click.FloatRange(0), help="Stop following after this many idle seconds")
@click.option("--alert-log", type=click.Path(dir_okay=False, path_type=Path), help="Append alerts to this file")
@click.option("--window-ms", type=click.IntRange(0), help="Replacement window in milliseconds")
@click.pass_context
def guard(ctx, replay, tail, use_stdin, idle_timeout, alert_log, window_ms):
    """Watch a text event source for address appearance and substitution"""
    chosen = [s for s in (replay, tail, use_stdin or None) if s is not None]
    if len(chosen) != 1:
        raise click.UsageError("choose exactly one of --replay, --tail, --stdin")
    config: Config = _obj(ctx)["config"]
    if replay is not None:
        source = ReplaySource(replay)
    elif tail is not None:
        source = TailSource(tail, idle_timeout=idle_timeout, from_start=True)
    else:
        source = StreamSource()

    sinks = SinkManager([ConsoleSink(console)])
    if alert_log is not None:
        sinks.add(AlertLogSink(alert_log))
    try:
        summary = asyncio.run(watch(source, sinks, window_ms if window_ms is not None else config.guard_window_ms))
    finally:
        sinks.close()
    counts = ", ".join(f"{kind}={count}" for kind, count in summary.alerts.items())
    console.print(f"[dim]{summary.events} events; {counts}[/dim]")


# ----------------------------------------------------------------------
# bench


def _parse_int_list(value: str) -> List[int]:
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError as e:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}") from e


@cli.command()
@click.option("--workers", "worker_list", default="1,2,4,8,16", show_default=True, help="Comma-separated worker counts")
@click.option("--accounts", type=click.IntRange(0), default=1000, show_default=True, help="Accounts per worker")
@click.option("--n-match", type=click.IntRange(1, 8), default=4, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def bench(ctx, worker_list, accounts, n_match, as_json):
    """Mining throughput by worker count"""
    counts = _parse_int_list(worker_list)
    obj = _obj(ctx)
    rows = run_bench(counts, accounts, n_match=n_match, seed=obj["seed"], config=obj["config"])
    if as_json:
        _emit_json([row.to_dict() for row in rows])
        return
    table = Table(title="Mining benchmark")
    table.add_column("workers", style="cyan", justify="right")
    table.add_column("accounts", justify="right")
    table.add_column("elapsed", justify="right")
    table.add_column("accounts/s", style="green", justify="right")
    for row in rows:
        table.add_row(str(row.workers), str(row.accounts), format_duration(row.elapsed), f"{row.rate:,.0f}")
    console.print(table)


# ----------------------------------------------------------------------
# latency


@cli.command()
@click.option("--small", type=click.IntRange(1), default=10_000, show_default=True, help="Records in the small store")
@click.option("--large", type=click.IntRange(1), default=100_000, show_default=True, help="Records in the large store")
@click.option("--n-match", type=click.IntRange(1, 8), default=6, show_default=True)
@click.option("--queries", type=click.IntRange(1), default=500, show_default=True)
@click.option("--transfer", is_flag=True, help="Also time cooperative-transfer round trips")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def latency(ctx, small, large, n_match, queries, transfer, as_json):
    """Loopback query latency against a small and a large store"""
    obj = _obj(ctx)
    config: Config = obj["config"]
    seed = obj["seed"] or 0
    if large > 16**n_match or small > 16**n_match:
        raise click.UsageError(f"N={n_match} has only {16 ** n_match} slots")
    scaling = asyncio.run(latency_scaling(small, large, n_match, queries, seed=seed, config=config))
    timing = asyncio.run(measure_transfer_latency(n_match=n_match, seed=seed, config=config)) if transfer else None

    if as_json:
        data = {"scaling": scaling.to_dict()}
        if timing is not None:
            data["transfer"] = timing.to_dict()
        _emit_json(data)
        return
    table = Table(title=f"Query latency, N={n_match}")
    table.add_column("records", style="cyan", justify="right")
    table.add_column("mean", justify="right")
    table.add_column("p95", justify="right")
    for records, summary in ((small, scaling.small), (large, scaling.large)):
        table.add_row(f"{records:,}", format_duration(summary.mean), format_duration(summary.p95))
    console.print(table)
    console.print(f"ratio {scaling.ratio:.3f}, {scaling.reads_per_lookup:.2f} reads per lookup")
    if timing is not None:
        console.print(
            f"transfer: {timing.batches} x {timing.batch_records} records, "
            f"mean {format_duration(timing.latency.mean)}, {timing.megabytes_per_second:.1f} MB/s"
        )


if __name__ == "__main__":
    cli()
