import re
from pathlib import Path
from typing import Iterator

from reuse_tracer.engine.records import RecordWriter, read_records
from reuse_tracer.exceptions import MalformedKeyError
from reuse_tracer.schemas import PARTITIONS, CopyInstance, Record

_LINE_RE = re.compile(r"^([^;\n]+);(0|[1-9][0-9]*);([0-9a-f]{40});([^;\n]+);(0|[1-9][0-9]*)$")


def release_name(tag: str, partition: int) -> str:
    return f"Ptb2PtFull{tag}.{partition}.zst"


def export_record(instance: CopyInstance) -> Record:
    return instance.project_o, str(instance.time_o), instance.blob, instance.project_d, str(instance.time_d)


def format_copy_instance(instance: CopyInstance) -> str:
    """``originating repo;timestamp;blob;destination repo;timestamp`` with unpadded decimal timestamps."""
    return ";".join(export_record(instance))


def parse_copy_instance(line: str) -> CopyInstance:
    match = _LINE_RE.match(line.rstrip("\n"))
    if match is None:
        raise MalformedKeyError(f"Not a Ptb2Pt line: {line!r}")
    project_o, time_o, blob, project_d, time_d = match.groups()
    return CopyInstance(project_o, int(time_o), blob, project_d, int(time_d))


def export_partition(source: Path, target: Path) -> int:
    """Rewrite one detect partition (padded timestamps) in release format."""
    with RecordWriter(target) as writer:
        for record in read_records(source):
            writer.write(export_record(CopyInstance.from_record(record)))
        return writer.count


def read_export(export_dir: Path, tag: str) -> Iterator[CopyInstance]:
    for partition in range(PARTITIONS):
        for record in read_records(export_dir / release_name(tag, partition)):
            yield parse_copy_instance(";".join(record))
