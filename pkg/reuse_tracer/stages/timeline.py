import logging
import shutil
from pathlib import Path

from reuse_tracer.engine.partition import partition_by_sha1, partition_file
from reuse_tracer.engine.records import RecordWriter, read_records, write_records
from reuse_tracer.engine.sort import split_and_sort
from reuse_tracer.exceptions import StageFailedError
from reuse_tracer.schemas import PARTITIONS, BaseModel, CommitMeta, StageName, StageReport
from reuse_tracer.stages.base import Stage
from reuse_tracer.stages.ingest import INGEST_INFO, IngestInfo
from reuse_tracer.timeline import SUB_RUN_KEY, build_b2tP, build_c2Ptb, first_per_project, sanitize_times
from reuse_tracer.utils import pad_time

logger = logging.getLogger(__name__)


class CommitPartitionTask(BaseModel):
    partition: int
    c2fbb: Path
    c2dat: Path
    c2P: Path
    c2Ptb: Path
    sub_dir: Path
    memory_budget: int
    temp_dir: Path | None = None


class CommitPartitionResult(BaseModel):
    records: int
    missing_commits: int


class BlobPartitionTask(BaseModel):
    sub_runs: list[Path]
    b2tP: Path


def sub_run_path(sub_dir: Path, blob_partition: int, commit_partition: int) -> Path:
    return sub_dir / f"{blob_partition:03d}" / partition_file("c2Ptb", commit_partition)


def build_commit_partition(task: CommitPartitionTask) -> CommitPartitionResult:
    """Join one commit partition into c2Ptb and split it by blob into sorted, reduced sub-runs."""
    missing: set[str] = set()
    with RecordWriter(task.c2Ptb) as c2Ptb:
        c2Ptb.write_all(record.to_record() for record in build_c2Ptb(task.c2fbb, task.c2dat, task.c2P, missing=missing))
    split_and_sort(
        ((blob, time, project, commit) for commit, project, time, blob in read_records(task.c2Ptb)),
        lambda record: partition_by_sha1(record[0]),
        lambda j: sub_run_path(task.sub_dir, j, task.partition),
        SUB_RUN_KEY,
        task.memory_budget,
        temp_dir=task.temp_dir,
        reduce=first_per_project,
    )
    if missing:
        logger.warning("Commit partition %03d: %d commits have no c2dat record", task.partition, len(missing))
    return CommitPartitionResult(records=c2Ptb.count, missing_commits=len(missing))


def build_blob_partition(task: BlobPartitionTask) -> int:
    return write_records(task.b2tP, (entry.to_record() for entry in build_b2tP(task.sub_runs)))


class TimelineStage(Stage):
    """
    Sanitizes commit times, joins the raw maps into c2Ptb, and reduces it to the b2tP timeline:
    the first time every blob appeared in every deforked project.
    """

    name = StageName.timeline
    requires = (StageName.ingest, StageName.defork)

    def fingerprint(self) -> list[str]:
        min_time, max_time = self.bounds()
        return [f"min_time={min_time}", f"max_time={max_time}"]

    def bounds(self) -> tuple[int, int]:
        max_time = self.config.max_time
        if max_time is None:
            info = IngestInfo.model_validate_json((self.layout.stage_dir(StageName.ingest) / INGEST_INFO).read_text())
            max_time = info.ingested_at
        if self.config.min_time >= max_time:
            raise StageFailedError(self.name, f"min_time {self.config.min_time} is not before max_time {max_time}")
        return self.config.min_time, max_time

    def sanitize(self) -> int:
        commits = (
            CommitMeta.from_record(record)
            for i in range(PARTITIONS)
            for record in read_records(self.layout.partition(StageName.ingest, "c2dat", i))
        )
        sanitized = sanitize_times(commits, self.bounds())
        by_partition: list[list[tuple[str, str]]] = [[] for _ in range(PARTITIONS)]
        for commit in sorted(sanitized):
            meta = sanitized[commit]
            assert meta.effective_time is not None
            by_partition[partition_by_sha1(commit)].append((commit, pad_time(meta.effective_time)))
        for i, records in enumerate(by_partition):
            write_records(self.layout.partition(self.name, "c2dat", i), records)
        return sum(meta.repaired for meta in sanitized.values())

    def execute(self) -> StageReport:
        repaired = self.sanitize()
        sub_dir = self.directory / "sub"
        commit_tasks = [
            CommitPartitionTask(
                partition=i,
                c2fbb=self.layout.partition(StageName.ingest, "c2fbb", i),
                c2dat=self.layout.partition(self.name, "c2dat", i),
                c2P=self.layout.partition(StageName.defork, "c2P", i),
                c2Ptb=self.layout.partition(self.name, "c2Ptb", i),
                sub_dir=sub_dir,
                memory_budget=self.config.memory_budget,
                temp_dir=self.config.temp_dir,
            )
            for i in range(PARTITIONS)
        ]
        results = self.pool.map(build_commit_partition, commit_tasks)

        blob_tasks = [
            BlobPartitionTask(
                sub_runs=[path for i in range(PARTITIONS) if (path := sub_run_path(sub_dir, j, i)).exists()],
                b2tP=self.layout.partition(self.name, "b2tP", j),
            )
            for j in range(PARTITIONS)
        ]
        entries = sum(self.pool.map(build_blob_partition, blob_tasks))
        shutil.rmtree(sub_dir, ignore_errors=True)
        return StageReport(
            stage=self.name,
            counts={
                "repaired_commits": repaired,
                "missing_commits": sum(r.missing_commits for r in results),
                "c2Ptb_records": sum(r.records for r in results),
                "b2tP_entries": entries,
            },
        )
