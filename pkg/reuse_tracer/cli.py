"""Command-line entry point: ``reuse-tracer run|export|verify|report``."""

import logging
import sys
from pathlib import Path
from typing import Annotated, Sequence

import click
import typer
from pydantic import TypeAdapter, ValidationError

from reuse_tracer.exceptions import ManifestError, ReuseTracerError
from reuse_tracer.oracle import ORACLE_MAX_COMMITS
from reuse_tracer.pipeline import Pipeline, load_reports
from reuse_tracer.schemas import DEFAULT_MIN_TIME, PipelineConfig, StageName, StageReport

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_STAGE_FAILED = 2
EXIT_MISMATCH = 3

_reports_adapter = TypeAdapter(list[StageReport])

app = typer.Typer(
    add_completion=False,
    no_args_is_help=True,
    help="Detect copy-based reuse of files across a corpus of git repositories.",
)

ManifestOption = Annotated[
    Path,
    typer.Option("--manifest", envvar="REUSE_TRACER_MANIFEST", help="Manifest of project<TAB>repo_path lines."),
]
WorkDirOption = Annotated[
    Path,
    typer.Option("--work-dir", envvar="REUSE_TRACER_WORK_DIR", help="Directory holding every stage's output."),
]
WorkersOption = Annotated[int, typer.Option("--workers", envvar="REUSE_TRACER_WORKERS", help="Worker processes.")]
MinTimeOption = Annotated[
    int,
    typer.Option("--min-time", envvar="REUSE_TRACER_MIN_TIME", help="Earliest plausible commit time (unix seconds)."),
]
MaxTimeOption = Annotated[
    int | None,
    typer.Option(
        "--max-time",
        envvar="REUSE_TRACER_MAX_TIME",
        help="Latest plausible commit time (unix seconds). Defaults to the ingest time.",
    ),
]
ExcludeOption = Annotated[
    Path | None,
    typer.Option("--exclude-blobs", envvar="REUSE_TRACER_EXCLUDE_BLOBS", help="File of blob sha1s to ignore."),
]
StagesOption = Annotated[
    str | None,
    typer.Option("--stages", envvar="REUSE_TRACER_STAGES", help="Comma-separated subset of stages to run."),
]
ForceOption = Annotated[bool, typer.Option("--force", help="Re-run stages even when their markers match.")]
TagOption = Annotated[str, typer.Option("--tag", envvar="REUSE_TRACER_TAG", help="Version tag of release files.")]
MemoryBudgetOption = Annotated[
    int,
    typer.Option("--memory-budget", envvar="REUSE_TRACER_MEMORY_BUDGET", help="Bytes one sort may hold in memory."),
]
TempDirOption = Annotated[
    Path | None,
    typer.Option("--temp-dir", envvar="REUSE_TRACER_TEMP_DIR", help="Directory for sort spill runs."),
]

DEFAULT_MEMORY_BUDGET = PipelineConfig.model_fields["memory_budget"].default


def _parse_stages(value: str | None) -> frozenset[StageName]:
    if value is None:
        return frozenset(StageName)
    names = {name.strip() for name in value.split(",")} - {""}
    try:
        return frozenset(StageName(name) for name in names)
    except ValueError:
        known = ", ".join(StageName)
        message = f"Unknown stage in {value!r}; expected a subset of {known}"
        raise typer.BadParameter(message, param_hint="--stages") from None


def _config(**kwargs: object) -> PipelineConfig:
    try:
        return PipelineConfig.model_validate(kwargs)
    except ValidationError as e:
        error = e.errors()[0]
        location = ".".join(str(part) for part in error["loc"])
        raise typer.BadParameter(f"{location}: {error['msg']}" if location else error["msg"]) from e


def _echo_reports(reports: Sequence[StageReport]) -> None:
    typer.echo(_reports_adapter.dump_json(list(reports), indent=2).decode())


@app.callback()
def main_callback(
    verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Log debug output.")] = False,
) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@app.command("run")
def run_command(
    manifest: ManifestOption,
    work_dir: WorkDirOption,
    workers: WorkersOption = 1,
    min_time: MinTimeOption = DEFAULT_MIN_TIME,
    max_time: MaxTimeOption = None,
    exclude_blobs: ExcludeOption = None,
    stages: StagesOption = None,
    force: ForceOption = False,
    tag: TagOption = "local",
    memory_budget: MemoryBudgetOption = DEFAULT_MEMORY_BUDGET,
    temp_dir: TempDirOption = None,
) -> None:
    """Run the requested stages, skipping those already complete."""
    config = _config(
        manifest_path=manifest,
        work_dir=work_dir,
        workers=workers,
        min_time=min_time,
        max_time=max_time,
        exclude_blobs_path=exclude_blobs,
        stages=_parse_stages(stages),
        force=force,
        tag=tag,
        memory_budget=memory_budget,
        temp_dir=temp_dir,
    )
    _echo_reports(Pipeline(config).run())


@app.command("export")
def export_command(
    manifest: ManifestOption,
    work_dir: WorkDirOption,
    workers: WorkersOption = 1,
    force: ForceOption = False,
    tag: TagOption = "local",
) -> None:
    """Write the release files from a completed detect stage."""
    config = _config(manifest_path=manifest, work_dir=work_dir, workers=workers, force=force, tag=tag)
    _echo_reports(Pipeline(config).run(frozenset({StageName.export})))


@app.command("verify")
def verify_command(
    manifest: ManifestOption,
    work_dir: WorkDirOption,
    workers: WorkersOption = 1,
    min_time: MinTimeOption = DEFAULT_MIN_TIME,
    max_time: MaxTimeOption = None,
    exclude_blobs: ExcludeOption = None,
    force: ForceOption = False,
    tag: TagOption = "local",
    memory_budget: MemoryBudgetOption = DEFAULT_MEMORY_BUDGET,
    temp_dir: TempDirOption = None,
    max_commits: Annotated[
        int, typer.Option("--max-commits", help="Refuse corpora with more commits than this.")
    ] = ORACLE_MAX_COMMITS,
) -> None:
    """Run the full pipeline and compare its output with a brute-force recomputation."""
    config = _config(
        manifest_path=manifest,
        work_dir=work_dir,
        workers=workers,
        min_time=min_time,
        max_time=max_time,
        exclude_blobs_path=exclude_blobs,
        force=force,
        tag=tag,
        memory_budget=memory_budget,
        temp_dir=temp_dir,
    )
    report = Pipeline(config).verify(max_commits=max_commits)
    typer.echo(report.model_dump_json(indent=2))
    if not report.passed:
        raise typer.Exit(EXIT_MISMATCH)


@app.command("report")
def report_command(work_dir: WorkDirOption) -> None:
    """Print the reports of the stages completed in a work directory."""
    _echo_reports(load_reports(work_dir))


def main(argv: Sequence[str] | None = None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    command = typer.main.get_command(app)
    try:
        result = command.main(args, prog_name="reuse-tracer", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        return EXIT_USAGE
    except ManifestError as e:
        typer.echo(f"Error: {e}", err=True)
        return EXIT_USAGE
    except ReuseTracerError as e:
        typer.echo(f"Error: {e}", err=True)
        return EXIT_STAGE_FAILED
    return result if isinstance(result, int) else EXIT_OK


def run() -> None:
    sys.exit(main())
