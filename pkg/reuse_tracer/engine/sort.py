import heapq
import logging
import tempfile
from operator import itemgetter
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Sequence

from reuse_tracer.engine.partition import PartitionedWriter
from reuse_tracer.engine.records import SortedRun, read_records, write_records, write_run
from reuse_tracer.exceptions import SpillError, UnsortedInputError
from reuse_tracer.schemas import PARTITIONS, Record

logger = logging.getLogger(__name__)

KeySpec = tuple[int, ...]
RecordSource = SortedRun | Path | Iterable[Record]

# Python str ordering is code point ordering, which equals byte-wise ordering of UTF-8.


def key_function(key_spec: KeySpec) -> Callable[[Record], Any]:
    if len(key_spec) == 1:
        (index,) = key_spec
        return lambda record: (record[index],)
    return itemgetter(*key_spec)


def record_size(record: Record) -> int:
    return sum(map(len, record)) + len(record)


def open_source(source: RecordSource) -> tuple[Iterator[Record], str]:
    if isinstance(source, SortedRun):
        return source.records(), str(source.path)
    if isinstance(source, Path):
        return read_records(source), str(source)
    return iter(source), type(source).__name__


def check_sorted(records: Iterable[Record], key_spec: KeySpec, source: str) -> Iterator[Record]:
    """Pass records through, aborting on the first key regression."""
    key = key_function(key_spec)
    previous = None
    for position, record in enumerate(records):
        current = key(record)
        if previous is not None and current < previous:
            raise UnsortedInputError(source, position)
        previous = current
        yield record


def unique_records(records: Iterable[Record]) -> Iterator[Record]:
    previous = None
    for record in records:
        if record != previous:
            yield record
        previous = record


def _spill(records: list[Record], directory: Path, index: int) -> Path:
    path = directory / f"run.{index:05d}.zst"
    write_records(path, records)
    return path


def external_sort(
    source: RecordSource,
    output: Path,
    key_spec: KeySpec,
    memory_budget: int,
    *,
    temp_dir: Path | None = None,
    unique: bool = False,
) -> SortedRun:
    """
    Sort a record file larger than memory.

    Records are gathered until their text size reaches ``memory_budget``, sorted and spilled as
    temporary runs, which are then merged. The sort is stable, so records with equal keys keep their
    input order. ``unique`` drops records identical to their predecessor in the output.
    """
    key = key_function(key_spec)
    records, _ = open_source(source)
    try:
        with tempfile.TemporaryDirectory(prefix="reuse-tracer-sort-", dir=temp_dir) as scratch:
            runs: list[Path] = []
            chunk: list[Record] = []
            size = 0
            for record in records:
                chunk.append(record)
                size += record_size(record)
                if size >= memory_budget:
                    chunk.sort(key=key)
                    runs.append(_spill(chunk, Path(scratch), len(runs)))
                    chunk, size = [], 0
            chunk.sort(key=key)
            if runs:
                if chunk:
                    runs.append(_spill(chunk, Path(scratch), len(runs)))
                logger.debug("Merging %d spilled runs into %s", len(runs), output)
                merged: Iterable[Record] = heapq.merge(*(read_records(run) for run in runs), key=key)
            else:
                merged = chunk
            if unique:
                merged = unique_records(merged)
            run = write_run(output, merged, key_spec)
            run.spilled_runs = len(runs)
            return run
    except OSError as e:
        path = getattr(e, "filename", None) or temp_dir or output
        raise SpillError(path, str(e)) from e


def k_way_merge(runs: Sequence[RecordSource], key_spec: KeySpec) -> Iterator[Record]:
    """
    Merge sorted runs into one sorted stream.

    Equal keys are ordered by run index, then by their order inside the run.
    """
    sources = []
    for run in runs:
        records, name = open_source(run)
        sources.append(check_sorted(records, key_spec, name))
    return heapq.merge(*sources, key=key_function(key_spec))


def split_and_sort(
    records: Iterable[Record],
    route: Callable[[Record], int],
    output: Callable[[int], Path],
    key_spec: KeySpec,
    memory_budget: int,
    *,
    temp_dir: Path | None = None,
    reduce: Callable[[Iterable[Record]], Iterable[Record]] | None = None,
    partitions: int = PARTITIONS,
) -> dict[int, SortedRun]:
    """
    Route records into partitions, then sort each non-empty partition into ``output(partition)``.

    ``reduce`` is applied to each sorted partition before it is written.
    """
    with tempfile.TemporaryDirectory(prefix="reuse-tracer-split-", dir=temp_dir) as scratch:
        with PartitionedWriter(Path(scratch), "split", partitions=partitions) as writer:
            for record in records:
                writer.write(route(record), record)
        runs: dict[int, SortedRun] = {}
        for partition, count in enumerate(writer.counts):
            if not count:
                continue
            target = output(partition)
            if reduce is None:
                runs[partition] = external_sort(
                    writer.path(partition), target, key_spec, memory_budget, temp_dir=temp_dir
                )
                continue
            sorted_path = Path(scratch) / f"sorted.{partition:03d}.zst"
            external_sort(writer.path(partition), sorted_path, key_spec, memory_budget, temp_dir=temp_dir)
            runs[partition] = write_run(target, reduce(read_records(sorted_path)), key_spec)
        return runs
