from pathlib import Path
from types import TracebackType
from typing import Self

from reuse_tracer.engine.records import RecordWriter
from reuse_tracer.schemas import PARTITIONS, Record
from reuse_tracer.utils import check_sha1

FNV32_OFFSET_BASIS = 0x811C9DC5
FNV32_PRIME = 0x01000193


def fnv1a32(data: bytes) -> int:
    h = FNV32_OFFSET_BASIS
    for byte in data:
        h = ((h ^ byte) * FNV32_PRIME) & 0xFFFFFFFF
    return h


def partition_by_sha1(key: str) -> int:
    """Route by the seven most significant bits of the sha1."""
    check_sha1(key)
    return int(key[:2], 16) >> 1


def partition_by_name(name: str) -> int:
    """Route by the seven most significant bits of the 32-bit FNV-1a digest of the UTF-8 name."""
    return fnv1a32(name.encode()) >> 25


def partition_file(map_name: str, partition: int, ext: str = "zst") -> str:
    return f"{map_name}.{partition:03d}.{ext}"


class PartitionedWriter:
    """
    Fans records out to one file per partition.

    Records are buffered per partition and flushed as independent zstd frames appended to the
    partition file, so only one compressor is open at a time.
    """

    def __init__(
        self,
        directory: Path,
        map_name: str,
        *,
        partitions: int = PARTITIONS,
        flush_bytes: int = 4 * 1024 * 1024,
    ) -> None:
        self.directory = directory
        self.map_name = map_name
        self.partitions = partitions
        self.flush_bytes = flush_bytes
        self.counts = [0] * partitions

        self._buffers: list[list[Record]] = [[] for _ in range(partitions)]
        self._sizes = [0] * partitions

    def path(self, partition: int) -> Path:
        return self.directory / partition_file(self.map_name, partition)

    def write(self, partition: int, record: Record) -> None:
        self._buffers[partition].append(record)
        self._sizes[partition] += sum(map(len, record)) + len(record)
        self.counts[partition] += 1
        if self._sizes[partition] >= self.flush_bytes:
            self._flush(partition)

    def _flush(self, partition: int) -> None:
        buffer = self._buffers[partition]
        if not buffer:
            return
        with RecordWriter(self.path(partition), append=True) as writer:
            writer.write_all(buffer)
        self._buffers[partition] = []
        self._sizes[partition] = 0

    def close(self) -> None:
        for partition in range(self.partitions):
            self._flush(partition)

    def __enter__(self) -> Self:
        self.directory.mkdir(parents=True, exist_ok=True)
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc_value: BaseException | None,
        traceback: TracebackType | None,
    ) -> None:
        if exc_type is None:
            self.close()
