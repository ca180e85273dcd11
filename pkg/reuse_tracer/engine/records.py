import io
from pathlib import Path
from types import TracebackType
from typing import Iterable, Iterator, Self

import zstandard as zstd

from reuse_tracer.exceptions import SpillError
from reuse_tracer.schemas import BaseModel, Record

FIELD_SEPARATOR = ";"
COMPRESSION_LEVEL = 3


class RecordWriter:
    """
    Writes ';'-separated records as one zstd frame.

    With ``append=True`` the frame is added after any frames already in the file; readers
    see the concatenation as a single stream.
    """

    def __init__(self, path: Path, *, append: bool = False) -> None:
        self.path = path
        self.append = append
        self.count = 0
        self._text: io.TextIOWrapper | None = None

    def write(self, record: Record) -> None:
        assert self._text is not None, "Writer is not open"
        try:
            self._text.write(FIELD_SEPARATOR.join(record))
            self._text.write("\n")
        except OSError as e:
            raise SpillError(self.path, str(e)) from e
        self.count += 1

    def write_all(self, records: Iterable[Record]) -> int:
        for record in records:
            self.write(record)
        return self.count

    def __enter__(self) -> Self:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            fh = self.path.open("ab" if self.append else "wb")
        except OSError as e:
            raise SpillError(self.path, str(e)) from e
        writer = zstd.ZstdCompressor(level=COMPRESSION_LEVEL).stream_writer(fh)
        self._text = io.TextIOWrapper(writer, encoding="utf-8", newline="\n")  # type: ignore[arg-type]
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc_value: BaseException | None,
        traceback: TracebackType | None,
    ) -> None:
        if self._text is None:
            return
        try:
            self._text.close()
        except OSError as e:
            if exc_type is None:
                raise SpillError(self.path, str(e)) from e
        finally:
            self._text = None


def read_records(path: Path, *, missing_ok: bool = False) -> Iterator[Record]:
    if missing_ok and not path.exists():
        return
    with path.open("rb") as fh:
        reader = zstd.ZstdDecompressor().stream_reader(fh, read_across_frames=True)
        with io.TextIOWrapper(reader, encoding="utf-8", newline="\n") as text:  # type: ignore[arg-type]
            for line in text:
                yield tuple(line.rstrip("\n").split(FIELD_SEPARATOR))


def write_records(path: Path, records: Iterable[Record]) -> int:
    with RecordWriter(path) as writer:
        return writer.write_all(records)


class SortedRun(BaseModel):
    """
    A record file whose records are in non-decreasing order of their key fields.
    """

    path: Path
    key_spec: tuple[int, ...]
    record_count: int = 0
    spilled_runs: int = 0
    """
    Temporary runs merged to produce the file; 0 when it was sorted in memory.
    """

    def records(self) -> Iterator[Record]:
        return read_records(self.path, missing_ok=self.record_count == 0)


def write_run(path: Path, records: Iterable[Record], key_spec: tuple[int, ...]) -> SortedRun:
    count = write_records(path, records)
    return SortedRun(path=path, key_spec=key_spec, record_count=count)
