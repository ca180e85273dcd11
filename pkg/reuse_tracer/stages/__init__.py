from reuse_tracer.schemas import StageName
from reuse_tracer.stages.base import Stage, WorkerPool, WorkLayout
from reuse_tracer.stages.defork import DeforkStage
from reuse_tracer.stages.detect import DetectStage
from reuse_tracer.stages.export import ExportStage
from reuse_tracer.stages.ingest import IngestStage
from reuse_tracer.stages.timeline import TimelineStage

STAGES: dict[StageName, type[Stage]] = {
    StageName.ingest: IngestStage,
    StageName.defork: DeforkStage,
    StageName.timeline: TimelineStage,
    StageName.detect: DetectStage,
    StageName.export: ExportStage,
}

__all__ = ["STAGES", "Stage", "WorkLayout", "WorkerPool"]
