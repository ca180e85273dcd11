import logging
import time
from collections import Counter
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Mapping

from reuse_tracer.corpus import load_manifest
from reuse_tracer.detect import load_exclusions
from reuse_tracer.engine.records import read_records
from reuse_tracer.exceptions import ReuseTracerError, StageFailedError, StageMissingError
from reuse_tracer.export import read_export
from reuse_tracer.oracle import (
    ORACLE_MAX_COMMITS,
    check_oracle_size,
    compare_timelines,
    instances_from_timeline,
    oracle_timeline,
)
from reuse_tracer.schemas import PARTITIONS, STAGE_ORDER, PipelineConfig, StageName, StageReport, VerifyReport
from reuse_tracer.stages import STAGES, WorkerPool, WorkLayout
from reuse_tracer.stages.ingest import INGEST_INFO, IngestInfo
from reuse_tracer.utils import digest

logger = logging.getLogger(__name__)


def _format_meta(metadata: Mapping[str, object]) -> str:
    return " ".join(f"{key}={metadata[key]}" for key in sorted(metadata))


@contextmanager
def stage_span(stage: str, **start_meta: object) -> Iterator[dict[str, Any]]:
    """
    Log ``stage=<name> event=start|finish|error`` lines around a block.

    The yielded dict is merged into the finish line.
    """
    start = time.perf_counter()
    logger.debug("stage=%s event=start %s", stage, _format_meta(start_meta))
    outcome: dict[str, Any] = {}
    try:
        yield outcome
    except Exception:
        logger.error("stage=%s event=error %s", stage, _format_meta(start_meta))
        raise
    outcome.setdefault("duration_sec", round(time.perf_counter() - start, 3))
    logger.info("stage=%s event=finish %s", stage, _format_meta({**start_meta, **outcome}))


class Pipeline:
    """
    Runs the requested stages in dependency order over one work directory.

    A stage is skipped when its completion marker matches the digest of its name, its
    fingerprint and its prerequisites' markers; otherwise its directory is reset and it
    runs again from its inputs.
    """

    def __init__(self, config: PipelineConfig) -> None:
        self.config = config
        self.layout = WorkLayout(config.work_dir)

    def run(self, stages: frozenset[StageName] | None = None) -> list[StageReport]:
        requested = self.config.stages if stages is None else stages
        reports = []
        with WorkerPool(self.config.workers) as pool:
            for name in STAGE_ORDER:
                if name in requested:
                    reports.append(self._run_stage(name, pool))
        return reports

    def _run_stage(self, name: StageName, pool: WorkerPool) -> StageReport:
        stage = STAGES[name](self.config, self.layout, pool)
        prerequisites = []
        for required in stage.requires:
            marker = self.layout.read_marker(required)
            if marker is None:
                raise StageMissingError(required)
            prerequisites.append(marker)

        expected = digest([name, *stage.fingerprint(), *prerequisites])
        report = self.layout.read_report(name)
        if not self.config.force and report is not None and self.layout.read_marker(name) == expected:
            logger.info("stage=%s event=skip marker=%s", name, expected[:12])
            return report

        with stage_span(name, workers=self.config.workers) as outcome:
            self.layout.reset(name)
            try:
                report = stage.execute()
            except ReuseTracerError:
                raise
            except Exception as e:
                raise StageFailedError(name, str(e) or type(e).__name__) from e
            outcome.update(report.counts)
        self.layout.write_report(report)
        self.layout.write_marker(name, expected)
        return report

    def reports(self) -> list[StageReport]:
        return load_reports(self.config.work_dir)

    def bounds(self) -> tuple[int, int]:
        if self.config.max_time is not None:
            return self.config.min_time, self.config.max_time
        info = IngestInfo.model_validate_json((self.layout.stage_dir(StageName.ingest) / INGEST_INFO).read_text())
        return self.config.min_time, info.ingested_at

    def verify(self, max_commits: int = ORACLE_MAX_COMMITS) -> VerifyReport:
        """Run every stage, then diff the exported dataset and the timeline against the oracle."""
        manifest = load_manifest(self.config.manifest_path)
        commits = check_oracle_size(manifest, max_commits)
        self.run(frozenset(StageName))
        min_time, max_time = self.bounds()
        with stage_span("verify", commits=commits, max_commits=max_commits) as outcome:
            timeline = oracle_timeline(
                manifest,
                min_time=min_time,
                max_time=max_time,
                max_commits=max_commits,
            )
            expected = instances_from_timeline(timeline, load_exclusions(self.config.exclude_blobs_path))
            exported = Counter(read_export(self.layout.stage_dir(StageName.export), self.config.tag))
            unexpected = [instance for instance, n in exported.items() for _ in range(n - (instance in expected))]
            pipeline_timeline = (
                (blob, int(first), project)
                for j in range(PARTITIONS)
                for blob, first, project in read_records(self.layout.partition(StageName.timeline, "b2tP", j))
            )
            report = VerifyReport(
                pipeline_instances=exported.total(),
                oracle_instances=len(expected),
                missing=sorted(expected - exported.keys()),
                unexpected=sorted(unexpected),
                timeline_mismatches=compare_timelines(pipeline_timeline, timeline),
            )
            outcome.update(
                missing=len(report.missing),
                unexpected=len(report.unexpected),
                timeline_mismatches=len(report.timeline_mismatches),
            )
        return report


def load_reports(work_dir: Path) -> list[StageReport]:
    layout = WorkLayout(work_dir)
    return [report for name in STAGE_ORDER if (report := layout.read_report(name)) is not None]
