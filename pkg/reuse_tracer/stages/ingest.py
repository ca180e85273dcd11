import shutil
import time
from functools import cached_property
from pathlib import Path

from reuse_tracer.corpus import MAPS, IngestTask, ingest_repository, load_manifest, repository_fingerprint, spill_path
from reuse_tracer.engine.partition import PartitionedWriter, partition_by_sha1
from reuse_tracer.engine.records import read_records, write_records
from reuse_tracer.engine.sort import external_sort
from reuse_tracer.schemas import PARTITIONS, BaseModel, CorpusManifest, RepositoryReport, StageName, StageReport
from reuse_tracer.stages.base import Stage
from reuse_tracer.utils import file_digest

INGEST_INFO = "ingest.json"
DIAGNOSTICS = "diagnostics.txt"

RAW_KEYS = {"c2p": (0, 1), "c2dat": (0, 1, 2), "c2fbb": (0, 1, 2, 3)}


class IngestInfo(BaseModel):
    ingested_at: int
    """
    Wall-clock time of the ingest; the default upper bound for plausible commit times.
    """
    repositories: list[RepositoryReport] = []


class SortTask(BaseModel):
    source: Path
    target: Path
    key_spec: tuple[int, ...]
    memory_budget: int
    temp_dir: Path | None = None


def sort_partition(task: SortTask) -> int:
    if not task.source.exists():
        return write_records(task.target, [])
    run = external_sort(
        task.source, task.target, task.key_spec, task.memory_budget, temp_dir=task.temp_dir, unique=True
    )
    return run.record_count


class IngestStage(Stage):
    """
    Extracts c2p, c2dat and c2fbb from every repository, one worker per manifest entry, then
    partitions each map by commit and sorts every partition.
    """

    name = StageName.ingest

    @cached_property
    def manifest(self) -> CorpusManifest:
        return load_manifest(self.config.manifest_path)

    def fingerprint(self) -> list[str]:
        refs = [ref for entry in self.manifest.entries for ref in repository_fingerprint(entry)]
        return [file_digest(self.config.manifest_path), *refs]

    def execute(self) -> StageReport:
        spill_dir = self.directory / "spill"
        unsorted_dir = self.directory / "unsorted"
        tasks = [
            IngestTask(entry=entry, spill_dir=spill_dir, index=index)
            for index, entry in enumerate(self.manifest.entries)
        ]
        reports = self.pool.map(ingest_repository, tasks)
        ingested_at = int(time.time())

        counts = {
            "projects": len(reports),
            "commits": sum(r.commits for r in reports),
            "events": sum(r.events for r in reports),
            "skipped_commits": sum(r.skipped_commits for r in reports),
            "incomplete_commits": sum(r.incomplete_commits for r in reports),
        }
        for map_name in MAPS:
            with PartitionedWriter(unsorted_dir, map_name) as writer:
                for task in tasks:
                    for record in read_records(spill_path(spill_dir, task.index, map_name)):
                        writer.write(partition_by_sha1(record[0]), record)
            sort_tasks = [
                SortTask(
                    source=writer.path(partition),
                    target=self.layout.partition(self.name, map_name, partition),
                    key_spec=RAW_KEYS[map_name],
                    memory_budget=self.config.memory_budget,
                    temp_dir=self.config.temp_dir,
                )
                for partition in range(PARTITIONS)
            ]
            counts[f"{map_name}_records"] = sum(self.pool.map(sort_partition, sort_tasks))

        with (self.directory / DIAGNOSTICS).open("w", encoding="utf-8") as diagnostics:
            for task in tasks:
                for record in read_records(spill_path(spill_dir, task.index, "diag")):
                    diagnostics.write(";".join(record) + "\n")
        info = IngestInfo(ingested_at=ingested_at, repositories=reports)
        (self.directory / INGEST_INFO).write_text(info.model_dump_json(indent=2))
        shutil.rmtree(spill_dir, ignore_errors=True)
        shutil.rmtree(unsorted_dir, ignore_errors=True)
        return StageReport(stage=self.name, counts=counts)
