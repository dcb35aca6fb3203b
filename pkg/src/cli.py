"""CLI interface for hybridpipe."""

import logging
import signal
import threading
import time
from contextlib import contextmanager
from pathlib import Path

import click
import numpy as np
import typer
from typer.core import TyperGroup

from src.core.config import get_settings
from src.core.errors import EXIT_USAGE, CorrectnessError, HybridPipeError
from src.core.formats import write_header
from src.core.logging_config import setup_logging
from src.core.models import RunConfig, parse_group, parse_int_list, parse_range
from src.engine import EngineContext, TaskKind, TaskSpec
from src.engine.worker import main as run_worker
from src.observer import TimingObserver
from src.ptycho import io as ptycho_io
from src.ptycho.params import SolverParams
from src.ptycho.simulate import coverage_mask, phase_aligned_correlation, simulate_scan
from src.ptycho.solver import reconstruct
from src.rendezvous import start_server
from src.streamlog import MessageLog, MicroBatchPlan, run_stream
from src.streamlog.microbatch import INIT_KEY, STOP_KEY
from src.tasks import bench, stream
from src.tasks.ptycho import RECONSTRUCT
from src.tomo import io as tomo_io
from src.tomo.params import ArtParams
from src.tomo.phantom import ellipse_phantom
from src.tomo.pipeline import angle_range, reconstruct_volume, relative_error, simulate_projections
from src.tomo.system_matrix import cached_matrix

logger = logging.getLogger(__name__)


class UsageExitGroup(TyperGroup):
    """Usage errors exit 1 instead of click's default 2 (2 is a correctness failure)."""

    def parse_args(self, ctx: click.Context, args: list[str]) -> list[str]:
        try:
            return super().parse_args(ctx, args)
        except click.UsageError as e:
            e.exit_code = EXIT_USAGE
            raise

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = EXIT_USAGE
            raise


app = typer.Typer(cls=UsageExitGroup, help="hybridpipe: rendezvous, collectives and pipelines on one machine")
ptycho_app = typer.Typer(cls=UsageExitGroup, help="Ptychographic simulation and reconstruction")
tomo_app = typer.Typer(cls=UsageExitGroup, help="Tomographic simulation and reconstruction")
app.add_typer(ptycho_app, name="ptycho")
app.add_typer(tomo_app, name="tomo")


@contextmanager
def _exit_on_error():
    """Map library errors to their exit codes."""
    try:
        yield
    except HybridPipeError as e:
        logger.exception("Command failed")
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(e.exit_code) from e


@app.callback(invoke_without_command=True)
def main(
    ctx: typer.Context,
    worker: bool = typer.Option(False, "--worker", hidden=True, help="Run as an engine worker process"),
    driver: str | None = typer.Option(None, "--driver", hidden=True, help="Driver endpoint host:port"),
):
    """Single executable for the server, benchmarks and pipelines."""
    with _exit_on_error():
        level = get_settings().logging.level
        if worker:
            if not driver:
                raise click.UsageError("--worker requires --driver host:port")
            setup_logging("worker", level)
            run_worker(driver)
            raise typer.Exit(0)
        setup_logging("server" if ctx.invoked_subcommand == "serve" else "driver", level)
    if ctx.invoked_subcommand is None:
        typer.echo(ctx.get_help())
        raise typer.Exit(EXIT_USAGE)


@app.command()
def serve(
    rdv: str = typer.Option("127.0.0.1:7000", "--rdv", help="Endpoint to bind, host:port"),
    groups: list[str] = typer.Option([], "--groups", help="Group to declare as name:size (repeatable)"),
):
    """Run a rendezvous server until interrupted."""
    with _exit_on_error():
        declared = [parse_group(g) for g in groups]
        RunConfig.build(subcommand="serve", rdv=rdv)
        handle = start_server(rdv, declared)
        stop = threading.Event()
        for sig in (signal.SIGINT, signal.SIGTERM):
            signal.signal(sig, lambda *_: stop.set())
        typer.echo(f"rendezvous server listening on {handle.endpoint}")
        try:
            while not stop.wait(0.5):
                pass
        finally:
            handle.shutdown()
        typer.echo("rendezvous server stopped")


@app.command("bench-allreduce")
def bench_allreduce(
    workers: str = typer.Option("1,2,4,8", "--workers", help="Comma list of worker counts"),
    n: int = typer.Option(2_000_000, "--n", min=1, help="Elements per buffer"),
    repeats: int = typer.Option(10, "--repeats", min=1, help="Runs per path"),
    out: Path = typer.Option(Path("out/bench_allreduce.csv"), "--out", help="Timing CSV"),
):
    """Compare driver-collect sums with collective allreduce."""
    with _exit_on_error():
        config = RunConfig.build(subcommand="bench-allreduce", workers=parse_int_list(workers), out=out)
        if 0 in config.workers:
            raise click.BadParameter("worker counts must be >= 1", param_hint="--workers")
        observer = TimingObserver()
        sendbuf = TaskSpec.build(bench.SENDBUF, {"n": n})
        allreduce = TaskSpec.build(bench.ALLREDUCE, {"n": n}, kind=TaskKind.COLLECTIVE)
        for p in config.workers:
            oracle = bench.oracle(p, n)
            with EngineContext(workers=p) as context:
                collected, seconds = _timed(
                    repeats,
                    lambda: [np.sum(context.parallelize(range(p), p).map(sendbuf).collect(), axis=0, dtype=np.float32)],
                )
                observer.record("driver_collect", p, seconds, collected, oracle)
                reduced, seconds = _timed(
                    repeats, lambda: context.parallelize(range(p), p).map_partitions_with_index(allreduce).collect()
                )
                observer.record("allreduce", p, seconds, reduced, oracle, require_identical=True)
        report = observer.write_csv(config.out)
        for row in report.rows:
            typer.echo(f"{row.scenario:>15} P={row.workers}: {row.seconds:.6f}s")
        typer.echo(f"Wrote {config.out}")


def _timed(repeats: int, run):
    """Run ``repeats`` times; return the last result and the mean seconds."""
    result, total = None, 0.0
    for _ in range(repeats):
        started = time.perf_counter()
        result = run()
        total += time.perf_counter() - started
    return result, total / repeats


@ptycho_app.command("sim")
def ptycho_sim(
    out: Path = typer.Option(Path("out/scan"), "--out", help="Scan directory"),
    seed: int = typer.Option(0, "--seed"),
    size: int = typer.Option(128, "--size", min=8, help="Object width and height"),
    probe: int = typer.Option(32, "--probe", min=4, help="Probe width and height"),
    grid: int = typer.Option(8, "--grid", min=1, help="Scan grid points per side"),
    jitter: int = typer.Option(2, "--jitter", min=0, help="Position jitter in pixels"),
):
    """Write a synthetic scan with its ground truth."""
    with _exit_on_error():
        config = RunConfig.build(subcommand="ptycho sim", seed=seed, out=out)
        scan = simulate_scan((size, size), (probe, probe), grid, jitter=jitter, seed=config.seed)
        ptycho_io.write_scan(config.out, scan)
        typer.echo(f"Wrote {scan.num_frames} frames to {config.out}")


@ptycho_app.command("recon")
def ptycho_recon(
    scan_dir: Path = typer.Option(..., "--scan", help="Scan directory written by 'ptycho sim'"),
    out: Path = typer.Option(Path("out/ptycho"), "--out", help="Output directory"),
    algorithm: str = typer.Option("raar", "--algorithm", help="raar or dm"),
    beta: float | None = typer.Option(None, "--beta"),
    iters: int | None = typer.Option(None, "--iters", help="Iterations"),
    workers: int = typer.Option(0, "--workers", min=0, help="Worker processes (0 runs in the driver)"),
    partitions: int = typer.Option(1, "--partitions", min=1, help="Ranks the frames are split over"),
    seed: int = typer.Option(0, "--seed"),
):
    """Reconstruct probe and object; write phase PGM, eps CSV and correlation."""
    with _exit_on_error():
        config = RunConfig.build(
            subcommand="ptycho recon", workers=[workers], partitions=partitions, seed=seed, out=out,
            solver={"algorithm": algorithm, "beta": beta, "iterations": iters, "seed": seed},
        )
        params = SolverParams.from_settings(**config.solver)
        scan = ptycho_io.read_scan(scan_dir)
        if partitions > scan.num_frames:
            raise click.BadParameter(f"at most {scan.num_frames} partitions", param_hint="--partitions")

        if partitions == 1 and workers == 0:
            result = reconstruct(scan, params)
            probe, obj, epsilon, seconds = result.probe, result.object, result.epsilon, result.seconds
        else:
            task = TaskSpec.build(
                RECONSTRUCT,
                {"scan": str(scan_dir.resolve()), "params": params.model_dump()},
                kind=TaskKind.COLLECTIVE,
            )
            with EngineContext(workers=workers) as context:
                (first,) = context.parallelize(scan.partition(partitions), partitions).map_partitions_with_index(task).collect()
            probe, obj, epsilon, seconds = first["probe"], first["object"], first["epsilon"], first["seconds"]

        config.out.mkdir(parents=True, exist_ok=True)
        ptycho_io.write_complex(config.out / "object.raw", obj)
        ptycho_io.write_complex(config.out / "probe.raw", probe)
        ptycho_io.write_phase_pgm(config.out / "object_phase.pgm", obj)
        ptycho_io.write_epsilon_csv(config.out / "epsilon.csv", epsilon)
        summary = {
            "algorithm": params.algorithm,
            "iterations": params.iterations,
            "partitions": partitions,
            "seconds": seconds,
            "epsilon_first": epsilon[0],
            "epsilon_last": epsilon[-1],
        }
        if scan.object_true is not None and scan.probe_true is not None:
            mask = coverage_mask(scan.probe_true, scan.positions, scan.object_shape)
            summary["correlation"] = phase_aligned_correlation(obj, scan.object_true, mask)
            typer.echo(f"correlation vs truth: {summary['correlation']:.4f}")
        write_header(config.out / "summary.json", summary)
        typer.echo(f"eps {epsilon[0]:.3e} -> {epsilon[-1]:.3e} after {params.iterations} iterations")


@tomo_app.command("sim")
def tomo_sim(
    out: Path = typer.Option(Path("out/tilt"), "--out", help="Tilt-series directory"),
    nray: int = typer.Option(64, "--nray", min=2, help="Rays per projection (= slice width)"),
    nslice: int = typer.Option(8, "--nslice", min=1, help="Slices"),
    angles: str = typer.Option("-90:90:2", "--angles", help="start:stop:step in degrees"),
    seed: int = typer.Option(0, "--seed"),
):
    """Write an ellipse phantom and its simulated tilt series."""
    with _exit_on_error():
        config = RunConfig.build(subcommand="tomo sim", seed=seed, out=out)
        tilt = angle_range(*parse_range(angles))
        phantom = ellipse_phantom(nray, nslice)
        series = simulate_projections(phantom, cached_matrix(nray, 1.0, tilt, nray, 1.0))
        tomo_io.write_series(config.out, series, seed=config.seed)
        tomo_io.write_volume(config.out, phantom, name="phantom")
        typer.echo(f"Wrote {nslice} slices x {len(tilt)} angles to {config.out}")


@tomo_app.command("recon")
def tomo_recon(
    scan_dir: Path = typer.Option(..., "--scan", help="Tilt-series directory written by 'tomo sim'"),
    out: Path = typer.Option(Path("out/tomo"), "--out", help="Output directory"),
    workers: str = typer.Option("0", "--workers", help="Comma list of worker counts"),
    partitions: int | None = typer.Option(None, "--partitions", min=1, help="Slice blocks (default: one per worker)"),
    beta: float | None = typer.Option(None, "--beta"),
    iters: int | None = typer.Option(None, "--iters", help="Sweeps"),
    seed: int = typer.Option(0, "--seed"),
):
    """Reconstruct a volume slice by slice; write volume, slice PGMs and timings."""
    with _exit_on_error():
        config = RunConfig.build(
            subcommand="tomo recon", workers=parse_int_list(workers), partitions=partitions, seed=seed, out=out,
            art={"beta": beta, "sweeps": iters, "seed": seed},
        )
        params = ArtParams.from_settings(**config.art)
        series = tomo_io.read_series(scan_dir)
        n_slice = series.shape[0]

        observer = TimingObserver(rtol=0.0)
        timings: list[tuple[int, float]] = []
        reference = None
        for w in config.workers:
            parts = min(n_slice, config.partitions or max(w, 1))
            with EngineContext(workers=w) as context:
                result = reconstruct_volume(series, params, parts, context)
            if reference is None:
                reference = result.volume
            if observer.record("tomo", w, result.seconds, [result.volume], reference, require_identical=True):
                timings.append((w, result.seconds))
        report = observer.build_report()
        if not report.ok:
            raise CorrectnessError("volumes differ across worker counts: " + report.summary)

        config.out.mkdir(parents=True, exist_ok=True)
        tomo_io.write_volume(config.out, reference)
        tomo_io.write_slice_pgms(config.out / "slices", reference)
        tomo_io.write_timing_csv(config.out / "timing.csv", timings)
        for w, seconds in sorted(timings):
            typer.echo(f"workers={w}: {seconds:.3f}s")
        phantom_header = scan_dir / "phantom.json"
        if phantom_header.exists():
            truth = tomo_io.read_volume(scan_dir, name="phantom")
            errors = [relative_error(reference[s], truth[s]) for s in range(n_slice)]
            write_header(config.out / "summary.json", {"relative_error": errors})
            typer.echo(f"max relative error per slice: {max(errors):.4f}")


@app.command("stream-demo")
def stream_demo(
    topics: int = typer.Option(4, "--topics", min=1, help="Topics to create"),
    records: int = typer.Option(100, "--records", min=1, help="Records per topic per batch"),
    batches: int = typer.Option(2, "--batches", min=1, help="Micro-batches"),
    length: int = typer.Option(8, "--length", min=1, help="float32 values per record"),
    workers: int = typer.Option(0, "--workers", min=0, help="Worker processes (0 runs in the driver)"),
    seed: int = typer.Option(0, "--seed"),
    out: Path = typer.Option(Path("out/stream"), "--out", help="Log directory"),
):
    """Produce records, then reduce each micro-batch with a collective allreduce."""
    with _exit_on_error():
        config = RunConfig.build(subcommand="stream-demo", workers=[workers], seed=seed, out=out)
        control = get_settings().streamlog.control_topic
        names = [f"topic{i}" for i in range(topics)]
        rng = np.random.default_rng(config.seed)

        with MessageLog(config.out) as log:
            for name in (*names, control):
                if not log.has_topic(name):
                    log.create_topic(name, 1)
            start = min(log.next_offset(name) for name in names)
            log.produce(control, 0, INIT_KEY, b"")
            oracles = []
            for _ in range(batches):
                total = np.zeros(length, dtype=np.float64)
                for name in names:
                    for _ in range(records):
                        value = rng.standard_normal(length).astype("<f4")
                        total += value
                        log.produce(name, 0, b"", value.tobytes())
                oracles.append(total)
            log.produce(control, 0, STOP_KEY, b"")

            plan = MicroBatchPlan.build(
                topics=names, interval=0.0, start_offset=start, max_records_per_batch=records,
                control_topic=control,
            )
            task = TaskSpec.build(stream.ALLREDUCE_SUM, {"length": length}, kind=TaskKind.COLLECTIVE)
            with EngineContext(workers=workers) as context:
                report = run_stream(context, log, plan, task)

        observer = TimingObserver()
        for batch, oracle in zip(report.batches, oracles):
            sums = [item["sum"] for part in batch.results for item in part]
            observer.record("stream", workers, batch.seconds, sums, oracle, require_identical=True)
            typer.echo(
                f"batch [{batch.start}, {batch.until}): {batch.num_partitions} partitions, "
                f"{batch.count} records, {batch.seconds:.3f}s"
            )
        result = observer.build_report()
        if not result.ok or len(report.batches) != batches:
            raise CorrectnessError(f"stream sums disagree with the oracle: {result.summary}")
        typer.echo(f"{len(report.batches)} batches verified; stopped={report.stopped}")


if __name__ == "__main__":
    app()
