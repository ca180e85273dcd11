import logging
import tempfile
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

from pydantic import ValidationError

from reuse_tracer.engine.join import group_by_key, merge_join
from reuse_tracer.engine.partition import partition_by_name, partition_file
from reuse_tracer.engine.records import RecordWriter, SortedRun, write_run
from reuse_tracer.engine.sort import check_sorted, k_way_merge, split_and_sort
from reuse_tracer.exceptions import InconsistentInputsError, ManifestError
from reuse_tracer.schemas import PARTITIONS, CopyInstance, ExclusionList, OriginRecord, Record, TimelineEntry

logger = logging.getLogger(__name__)

ORIGIN_KEY = (0, 1, 2, 3)
"""Sort key of Ptb2Pt records: origin project, origin time, blob, destination project."""


def load_exclusions(path: Path | None) -> ExclusionList:
    """Read one sha1 per line; '#' starts a comment. The empty blob is always excluded."""
    if path is None:
        return ExclusionList()
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ManifestError(f"Cannot read exclusion list {path}: {e}") from e
    blobs = {line.split("#", 1)[0].strip() for line in lines} - {""}
    logger.debug("loaded %d excluded blobs from %s", len(blobs), path)
    try:
        return ExclusionList(blobs=frozenset(blobs))
    except ValidationError as e:
        raise ManifestError(f"{path}: {e.errors()[0]['msg']}") from e


def iter_origins(
    entries: Iterable[TimelineEntry],
    exclusions: ExclusionList,
    *,
    excluded: list[str] | None = None,
) -> Iterator[tuple[OriginRecord, int]]:
    """
    Sweep a timeline sorted by (blob, time, project).

    Yields the first entry of every non-excluded blob with the number of projects holding it.
    """
    records = check_sorted((entry.to_record() for entry in entries), (0, 1, 2), "b2tP")
    for (blob,), group in group_by_key(records, (0,)):
        if blob in exclusions:
            if excluded is not None:
                excluded.append(blob)
            continue
        yield OriginRecord.from_record(group[0]), len(group)


class OriginCounts(NamedTuple):
    origins: int
    singletons: int
    excluded: int


def find_origins(
    entries: Iterable[TimelineEntry],
    exclusions: ExclusionList,
    origins: Path,
    singletons: Path,
) -> OriginCounts:
    """Split blobs into reused ones (first entry is the origin) and blobs seen in a single project."""
    excluded: list[str] = []
    with RecordWriter(origins) as reused, RecordWriter(singletons) as single:
        for origin, projects in iter_origins(entries, exclusions, excluded=excluded):
            (reused if projects > 1 else single).write(origin.to_record())
    return OriginCounts(reused.count, single.count, len(excluded))


def expand_copy_instances(
    origins: Iterable[OriginRecord],
    entries: Iterable[TimelineEntry],
) -> Iterator[CopyInstance]:
    """Pair every origin with each other project holding the blob."""

    def missing(record: Record) -> None:
        raise InconsistentInputsError(f"Origin blob {record[0]} has no timeline entries")

    joined = merge_join(
        (origin.to_record() for origin in origins),
        (entry.to_record() for entry in entries),
        (0,),
        on_unmatched=missing,
    )
    for blob, time_o, project_o, time_d, project_d in joined:
        if project_d != project_o:
            yield CopyInstance(project_o, int(time_o), blob, project_d, int(time_d))


def spill_run_path(spill_dir: Path, origin_partition: int, blob_partition: int) -> Path:
    return spill_dir / f"{origin_partition:03d}" / partition_file("Ptb2Pt", blob_partition)


def spill_by_origin(
    instances: Iterable[CopyInstance],
    spill_dir: Path,
    blob_partition: int,
    memory_budget: int,
    *,
    temp_dir: Path | None = None,
) -> dict[int, SortedRun]:
    """Fan one blob partition's instances out by origin project, each spill sorted by ``ORIGIN_KEY``."""
    return split_and_sort(
        (instance.to_record() for instance in instances),
        lambda record: partition_by_name(record[0]),
        lambda k: spill_run_path(spill_dir, k, blob_partition),
        ORIGIN_KEY,
        memory_budget,
        temp_dir=temp_dir,
    )


def merge_origin_partition(spill_dir: Path, origin_partition: int, output: Path) -> SortedRun:
    """Merge the spills every blob partition left for one origin partition."""
    spills = [
        path for j in range(PARTITIONS) if (path := spill_run_path(spill_dir, origin_partition, j)).exists()
    ]
    return write_run(output, k_way_merge(spills, ORIGIN_KEY), ORIGIN_KEY)


def regroup_by_origin(
    streams: Sequence[Iterable[CopyInstance]],
    output_dir: Path,
    memory_budget: int,
    *,
    temp_dir: Path | None = None,
) -> list[SortedRun]:
    """
    Regroup blob-partitioned instances into one Ptb2Pt partition per origin project.

    Instance partitions are ``partition_by_name(project_o)``; every partition file is written, empty or not.
    """
    with tempfile.TemporaryDirectory(prefix="reuse-tracer-regroup-", dir=temp_dir) as scratch:
        for index, stream in enumerate(streams):
            spill_by_origin(stream, Path(scratch), index, memory_budget, temp_dir=temp_dir)
        return [
            merge_origin_partition(Path(scratch), k, output_dir / partition_file("Ptb2Pt", k))
            for k in range(PARTITIONS)
        ]
