from functools import cached_property
from pathlib import Path

from reuse_tracer.corpus import load_manifest
from reuse_tracer.defork import build_fork_components, compose_c2p, read_fork_map, write_fork_map
from reuse_tracer.engine.records import write_records
from reuse_tracer.engine.sort import k_way_merge
from reuse_tracer.schemas import PARTITIONS, BaseModel, CorpusManifest, StageName, StageReport
from reuse_tracer.stages.base import Stage

P2P = "p2P"


class ComposeTask(BaseModel):
    c2p: Path
    c2P: Path
    p2P: Path


def compose_partition(task: ComposeTask) -> int:
    return write_records(task.c2P, compose_c2p(task.c2p, read_fork_map(task.p2P)))


class DeforkStage(Stage):
    """
    Elects one representative per fork component and rewrites c2p into the deforked c2P map.
    """

    name = StageName.defork
    requires = (StageName.ingest,)

    @cached_property
    def manifest(self) -> CorpusManifest:
        return load_manifest(self.config.manifest_path)

    def fingerprint(self) -> list[str]:
        return []

    def execute(self) -> StageReport:
        c2p_runs = [self.layout.partition(StageName.ingest, "c2p", i) for i in range(PARTITIONS)]
        fork_map = build_fork_components(
            ((commit, project) for commit, project in k_way_merge(c2p_runs, (0, 1))),
            projects=self.manifest.projects,
            presorted=True,
        )
        p2P = self.directory / P2P
        write_fork_map(fork_map, p2P)
        tasks = [
            ComposeTask(c2p=c2p_runs[i], c2P=self.layout.partition(self.name, "c2P", i), p2P=p2P)
            for i in range(PARTITIONS)
        ]
        composed = sum(self.pool.map(compose_partition, tasks))
        return StageReport(
            stage=self.name,
            counts={
                "projects": len(fork_map),
                "representatives": len(fork_map.representatives),
                "c2P_records": composed,
            },
        )
