from itertools import groupby
from typing import Any, Callable, Iterator

from reuse_tracer.engine.sort import KeySpec, RecordSource, check_sorted, key_function, open_source
from reuse_tracer.schemas import Record


def group_by_key(source: RecordSource, key_spec: KeySpec) -> Iterator[tuple[Any, list[Record]]]:
    """Yield ``(key, records)`` for each run of equal keys, checking the input is sorted."""
    records, name = open_source(source)
    key = key_function(key_spec)
    for value, group in groupby(check_sorted(records, key_spec, name), key=key):
        yield value, list(group)


def merge_join(
    left: RecordSource,
    right: RecordSource,
    key_spec: KeySpec = (0,),
    *,
    on_unmatched: Callable[[Record], None] | None = None,
) -> Iterator[Record]:
    """
    Inner join of two runs sorted on the same key fields.

    Each output record is the left record followed by the right record's non-key fields; equal-key
    groups produce their cross-product in left-major order. ``on_unmatched`` receives every left
    record whose key has no match on the right.
    """
    right_rest = None
    left_groups = group_by_key(left, key_spec)
    right_groups = group_by_key(right, key_spec)
    left_group = next(left_groups, None)
    right_group = next(right_groups, None)
    while left_group is not None and right_group is not None:
        left_key, left_rows = left_group
        right_key, right_rows = right_group
        if left_key < right_key:
            if on_unmatched is not None:
                for row in left_rows:
                    on_unmatched(row)
            left_group = next(left_groups, None)
        elif right_key < left_key:
            right_group = next(right_groups, None)
        else:
            if right_rest is None:
                right_rest = [i for i in range(len(right_rows[0])) if i not in key_spec]
            for left_row in left_rows:
                for right_row in right_rows:
                    yield left_row + tuple(right_row[i] for i in right_rest)
            left_group = next(left_groups, None)
            right_group = next(right_groups, None)
    if on_unmatched is not None:
        while left_group is not None:
            for row in left_group[1]:
                on_unmatched(row)
            left_group = next(left_groups, None)
