import logging
from collections import deque
from typing import Iterable, Iterator, Sequence

from reuse_tracer.engine.join import group_by_key, merge_join
from reuse_tracer.engine.sort import RecordSource, k_way_merge
from reuse_tracer.exceptions import CommitCycleError
from reuse_tracer.schemas import C2PtbRecord, CommitMeta, Record, TimelineEntry

logger = logging.getLogger(__name__)

TIMELINE_KEY = (0, 1, 2)
"""Sort key of b2tP records: blob, time, project."""
SUB_RUN_KEY = (0, 1, 2, 3)
"""Sort key of blob-partitioned c2Ptb records: blob, time, project, commit."""


def sanitize_times(commits: Iterable[CommitMeta], bounds: tuple[int, int]) -> dict[str, CommitMeta]:
    """
    Assign effective times that never precede a parent's.

    A commit whose raw time lies within ``bounds`` gets the later of its raw time and its parents'
    effective times. A commit outside the bounds is repaired: it inherits the latest parent effective
    time, or the lower bound for roots. Parents outside the set count as the lower bound.
    """
    min_time, max_time = bounds
    by_id = {commit.commit: commit for commit in commits}
    children: dict[str, list[str]] = {}
    pending: dict[str, int] = {}
    for commit in by_id.values():
        known = {parent for parent in commit.parents if parent in by_id}
        pending[commit.commit] = len(known)
        for parent in known:
            children.setdefault(parent, []).append(commit.commit)

    ready = deque(sorted(commit for commit, count in pending.items() if count == 0))
    result: dict[str, CommitMeta] = {}
    while ready:
        commit = by_id[ready.popleft()]
        floor = max(
            (result[p].effective_time if p in result else min_time for p in commit.parents),
            default=min_time,
        )
        assert floor is not None
        if min_time <= commit.raw_time <= max_time:
            effective, repaired = max(commit.raw_time, floor), False
        else:
            effective, repaired = floor, True
        result[commit.commit] = commit.model_copy(update={"effective_time": effective, "repaired": repaired})
        for child in children.get(commit.commit, ()):
            pending[child] -= 1
            if pending[child] == 0:
                ready.append(child)

    if len(result) != len(by_id):
        raise CommitCycleError(f"{len(by_id) - len(result)} commits are part of a parent cycle")
    logger.debug("sanitized %d commits, bounds=%d..%d", len(result), min_time, max_time)
    return result


def _created_blobs(c2fbb: RecordSource) -> Iterator[Record]:
    for commit, group in group_by_key(c2fbb, (0,)):
        for blob in sorted({record[2] for record in group}):
            yield commit[0], blob


def build_c2Ptb(
    c2fbb: RecordSource,
    c2dat: RecordSource,
    c2P: RecordSource,
    *,
    missing: set[str] | None = None,
) -> Iterator[C2PtbRecord]:
    """
    Join one commit partition of the raw maps into (commit, project, time, blob) records.

    ``c2dat`` holds ``commit;effective_time`` and ``c2P`` holds ``commit;deforked project``, both
    sorted by commit. Commits of ``c2fbb`` absent from ``c2dat`` are dropped and added to ``missing``.
    """

    def unmatched(record: Record) -> None:
        if missing is not None:
            missing.add(record[0])

    with_time = merge_join(_created_blobs(c2fbb), c2dat, (0,), on_unmatched=unmatched)
    for commit, blob, time, project in merge_join(with_time, c2P, (0,)):
        yield C2PtbRecord(commit, project, int(time), blob)


def first_per_project(entries: Iterable[Record]) -> Iterator[Record]:
    """
    Keep the first record of every (blob, project) pair from records sorted by blob, time, project.

    Output records are ``blob;time;project``.
    """
    for _, group in group_by_key(entries, (0,)):
        seen: set[str] = set()
        for record in group:
            if record[2] not in seen:
                seen.add(record[2])
                yield record[:3]


def build_b2tP(sub_runs: Sequence[RecordSource]) -> Iterator[TimelineEntry]:
    """
    Merge the sub-runs of one blob partition, one per commit partition, into the blob timeline.

    Exactly one entry per (blob, project) is produced, carrying the earliest time, in
    (blob, time, project) order.
    """
    for record in first_per_project(k_way_merge(sub_runs, TIMELINE_KEY)):
        yield TimelineEntry.from_record(record)
