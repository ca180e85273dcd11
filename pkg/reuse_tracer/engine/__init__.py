from reuse_tracer.engine.join import group_by_key, merge_join
from reuse_tracer.engine.partition import (
    PartitionedWriter,
    fnv1a32,
    partition_by_name,
    partition_by_sha1,
    partition_file,
)
from reuse_tracer.engine.records import RecordWriter, SortedRun, read_records, write_records, write_run
from reuse_tracer.engine.sort import KeySpec, RecordSource, external_sort, k_way_merge, split_and_sort

__all__ = [
    "KeySpec",
    "PartitionedWriter",
    "RecordSource",
    "RecordWriter",
    "SortedRun",
    "external_sort",
    "fnv1a32",
    "group_by_key",
    "k_way_merge",
    "merge_join",
    "partition_by_name",
    "partition_by_sha1",
    "partition_file",
    "read_records",
    "split_and_sort",
    "write_records",
    "write_run",
]
