from pathlib import Path

from reuse_tracer.export import export_partition, release_name
from reuse_tracer.schemas import PARTITIONS, BaseModel, StageName, StageReport
from reuse_tracer.stages.base import Stage


class ExportTask(BaseModel):
    source: Path
    target: Path


def export_task(task: ExportTask) -> int:
    return export_partition(task.source, task.target)


class ExportStage(Stage):
    """
    Writes the release files: one zstd file per origin partition, unpadded timestamps.
    """

    name = StageName.export
    requires = (StageName.detect,)

    def fingerprint(self) -> list[str]:
        return [f"tag={self.config.tag}"]

    def execute(self) -> StageReport:
        tasks = [
            ExportTask(
                source=self.layout.partition(StageName.detect, "Ptb2Pt", k),
                target=self.directory / release_name(self.config.tag, k),
            )
            for k in range(PARTITIONS)
        ]
        counts = self.pool.map(export_task, tasks)
        return StageReport(
            stage=self.name,
            counts={"copy_instances": sum(counts), "files": len(tasks)},
        )
