import shutil
from functools import cached_property
from pathlib import Path

from reuse_tracer.detect import (
    expand_copy_instances,
    find_origins,
    load_exclusions,
    merge_origin_partition,
    spill_by_origin,
)
from reuse_tracer.engine.records import read_records
from reuse_tracer.schemas import (
    PARTITIONS,
    BaseModel,
    ExclusionList,
    OriginRecord,
    StageName,
    StageReport,
    TimelineEntry,
)
from reuse_tracer.stages.base import Stage
from reuse_tracer.utils import digest


class BlobPartitionTask(BaseModel):
    partition: int
    b2tP: Path
    origins: Path
    singletons: Path
    spill_dir: Path
    exclusions: ExclusionList
    memory_budget: int
    temp_dir: Path | None = None


class BlobPartitionResult(BaseModel):
    origins: int = 0
    singletons: int = 0
    excluded: int = 0
    instances: int = 0


class OriginPartitionTask(BaseModel):
    partition: int
    spill_dir: Path
    target: Path


def detect_blob_partition(task: BlobPartitionTask) -> BlobPartitionResult:
    """Sweep one b2tP partition for origins, then expand and fan out its copy instances by origin project."""
    counts = find_origins(
        (TimelineEntry.from_record(record) for record in read_records(task.b2tP)),
        task.exclusions,
        task.origins,
        task.singletons,
    )
    instances = expand_copy_instances(
        (OriginRecord.from_record(record) for record in read_records(task.origins)),
        (TimelineEntry.from_record(record) for record in read_records(task.b2tP)),
    )
    runs = spill_by_origin(instances, task.spill_dir, task.partition, task.memory_budget, temp_dir=task.temp_dir)
    return BlobPartitionResult(
        origins=counts.origins,
        singletons=counts.singletons,
        excluded=counts.excluded,
        instances=sum(run.record_count for run in runs.values()),
    )


def merge_origin(task: OriginPartitionTask) -> int:
    return merge_origin_partition(task.spill_dir, task.partition, task.target).record_count


class DetectStage(Stage):
    """
    Elects the originating project of every reused blob and emits the Ptb2Pt copy instances,
    regrouped into partitions by origin project.
    """

    name = StageName.detect
    requires = (StageName.timeline,)

    @cached_property
    def exclusions(self) -> ExclusionList:
        return load_exclusions(self.config.exclude_blobs_path)

    def fingerprint(self) -> list[str]:
        return [digest(sorted(self.exclusions.blobs))]

    def execute(self) -> StageReport:
        spill_dir = self.directory / "spill"
        blob_tasks = [
            BlobPartitionTask(
                partition=j,
                b2tP=self.layout.partition(StageName.timeline, "b2tP", j),
                origins=self.layout.partition(self.name, "origins", j),
                singletons=self.layout.partition(self.name, "singletons", j),
                spill_dir=spill_dir,
                exclusions=self.exclusions,
                memory_budget=self.config.memory_budget,
                temp_dir=self.config.temp_dir,
            )
            for j in range(PARTITIONS)
        ]
        results = self.pool.map(detect_blob_partition, blob_tasks)

        origin_tasks = [
            OriginPartitionTask(
                partition=k,
                spill_dir=spill_dir,
                target=self.layout.partition(self.name, "Ptb2Pt", k),
            )
            for k in range(PARTITIONS)
        ]
        regrouped = sum(self.pool.map(merge_origin, origin_tasks))
        shutil.rmtree(spill_dir, ignore_errors=True)
        return StageReport(
            stage=self.name,
            counts={
                "origins": sum(r.origins for r in results),
                "singletons": sum(r.singletons for r in results),
                "excluded_blobs": sum(r.excluded for r in results),
                "copy_instances": regrouped,
            },
        )
