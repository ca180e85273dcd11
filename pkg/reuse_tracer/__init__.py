from reuse_tracer.pipeline import Pipeline
from reuse_tracer.schemas import CopyInstance, PipelineConfig, StageName

__all__ = ["CopyInstance", "Pipeline", "PipelineConfig", "StageName"]
