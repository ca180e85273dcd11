import json
import logging
import shutil
from abc import ABC, abstractmethod
from concurrent.futures import Executor, ProcessPoolExecutor
from pathlib import Path
from types import TracebackType
from typing import Any, Callable, Iterable, Self, Sequence, TypeVar

from reuse_tracer.engine.partition import partition_file
from reuse_tracer.schemas import PipelineConfig, StageName, StageReport

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

MARKER = ".complete"
REPORT = "report.json"


class WorkLayout:
    """
    Files of one pipeline run under ``work_dir``: one directory per stage, holding its
    partitions, its report and, once it has finished, its completion marker.
    """

    def __init__(self, work_dir: Path) -> None:
        self.work_dir = work_dir

    def stage_dir(self, stage: StageName | str) -> Path:
        return self.work_dir / str(stage)

    def partition(self, stage: StageName | str, map_name: str, partition: int) -> Path:
        return self.stage_dir(stage) / partition_file(map_name, partition)

    def read_marker(self, stage: StageName | str) -> str | None:
        path = self.stage_dir(stage) / MARKER
        return path.read_text().strip() if path.exists() else None

    def write_marker(self, stage: StageName | str, digest: str) -> None:
        (self.stage_dir(stage) / MARKER).write_text(digest + "\n")

    def read_report(self, stage: StageName | str) -> StageReport | None:
        path = self.stage_dir(stage) / REPORT
        if not path.exists():
            return None
        return StageReport.model_validate_json(path.read_text())

    def write_report(self, report: StageReport) -> None:
        (self.stage_dir(report.stage) / REPORT).write_text(report.model_dump_json(indent=2))

    def read_json(self, stage: StageName | str, name: str) -> Any:
        return json.loads((self.stage_dir(stage) / name).read_text())

    def reset(self, stage: StageName | str) -> Path:
        directory = self.stage_dir(stage)
        if directory.exists():
            shutil.rmtree(directory)
        directory.mkdir(parents=True)
        return directory


class WorkerPool:
    """
    Runs shard functions over task lists, in worker processes when ``workers > 1``.

    Results come back in task order whatever the worker count.
    """

    def __init__(self, workers: int = 1) -> None:
        self.workers = workers
        self._executor: Executor | None = None

    def map(self, fn: Callable[[T], R], tasks: Iterable[T]) -> list[R]:
        if self._executor is None:
            return [fn(task) for task in tasks]
        return list(self._executor.map(fn, tasks))

    def __enter__(self) -> Self:
        if self.workers > 1:
            self._executor = ProcessPoolExecutor(max_workers=self.workers)
            logger.debug("started %d worker processes", self.workers)
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc_value: BaseException | None,
        traceback: TracebackType | None,
    ) -> None:
        if self._executor is not None:
            self._executor.shutdown(cancel_futures=exc_type is not None)
            self._executor = None


class Stage(ABC):
    name: StageName = NotImplemented
    requires: Sequence[StageName] = ()

    def __init__(self, config: PipelineConfig, layout: WorkLayout, pool: WorkerPool) -> None:
        self.config = config
        self.layout = layout
        self.pool = pool

    @property
    def directory(self) -> Path:
        return self.layout.stage_dir(self.name)

    @abstractmethod
    def fingerprint(self) -> list[str]:
        """Inputs of this stage besides its prerequisites' outputs; a change means the stage must re-run."""

    @abstractmethod
    def execute(self) -> StageReport: ...
