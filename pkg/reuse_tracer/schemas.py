from enum import StrEnum, auto
from pathlib import Path
from typing import Annotated, Literal, NamedTuple, Self, Sequence

from pydantic import (
    AfterValidator,
    BaseModel as PydanticBaseModel,
    ConfigDict,
    Field,
    PositiveInt,
    StringConstraints,
    field_validator,
    model_validator,
)

from reuse_tracer.exceptions import UnknownProjectError
from reuse_tracer.utils import EMPTY_BLOB, SHA1_PATTERN, pad_time

Record = tuple[str, ...]
"""One line of an intermediate file, split on ';'."""

Sha1 = Annotated[str, StringConstraints(pattern=SHA1_PATTERN)]

DEFAULT_MIN_TIME = 631152000
"""1990-01-01T00:00:00Z, the lower bound of a plausible commit time."""
MAX_PADDED_TIME = 9_999_999_999
PARTITIONS = 128


def _check_project_name(value: str) -> str:
    if not value:
        raise ValueError("Project name must not be empty")
    for forbidden in (";", "\n", "\r", "\t", "/"):
        if forbidden in value:
            raise ValueError(f"Project name {value!r} contains forbidden character {forbidden!r}")
    return value


ProjectName = Annotated[str, AfterValidator(_check_project_name)]


class BaseModel(PydanticBaseModel):
    model_config = ConfigDict(use_enum_values=True)


class StageName(StrEnum):
    """
    Pipeline stages in dependency order.
    """

    ingest = auto()
    defork = auto()
    timeline = auto()
    detect = auto()
    export = auto()


STAGE_ORDER: Sequence[StageName] = tuple(StageName)


class ManifestEntry(BaseModel):
    project: ProjectName
    """
    Flattened forge name: slashes replaced by underscores, GitHub host omitted.
    """
    repo_path: Path
    """
    Location of the git object store.
    """


class CorpusManifest(BaseModel):
    entries: list[ManifestEntry] = []

    @model_validator(mode="after")
    def validate_unique(self) -> Self:
        seen: set[str] = set()
        for entry in self.entries:
            if entry.project in seen:
                raise ValueError(f"Duplicate project in manifest: {entry.project}")
            seen.add(entry.project)
        return self

    @property
    def projects(self) -> list[str]:
        return [entry.project for entry in self.entries]


class CommitMeta(BaseModel):
    """
    Commit identity, parents and timestamps (the c2dat role).
    """

    commit: Sha1
    parents: list[Sha1] = []
    raw_time: int
    """
    Committer timestamp as recorded in the object.
    """
    effective_time: int | None = None
    """
    Timestamp after sanitization; never earlier than any parent's.
    """
    repaired: bool = False
    """
    Set when raw_time fell outside the plausible bounds and was replaced.
    """

    def to_record(self) -> Record:
        return self.commit, str(self.raw_time), ",".join(self.parents)

    @classmethod
    def from_record(cls, record: Record) -> Self:
        commit, raw_time, parents = record
        return cls.model_construct(
            commit=commit,
            parents=parents.split(",") if parents else [],
            raw_time=int(raw_time),
            effective_time=None,
            repaired=False,
        )


class BlobEvent(BaseModel):
    """
    A commit creating a new blob at a path (the c2fbb role).
    """

    commit: Sha1
    project: ProjectName
    path: str
    old_blob: Sha1 | None = None
    """
    Blob at the same path in the first parent, if the path existed there.
    """
    new_blob: Sha1

    @model_validator(mode="after")
    def validate_changed(self) -> Self:
        if self.old_blob == self.new_blob:
            raise ValueError("A blob event must change the blob at its path")
        return self

    def to_record(self) -> Record:
        return self.commit, self.project, self.new_blob, self.old_blob or "-"


class C2PtbRecord(NamedTuple):
    commit: str
    project: str
    time: int
    blob: str

    def to_record(self) -> Record:
        return self.commit, self.project, pad_time(self.time), self.blob

    @classmethod
    def from_record(cls, record: Record) -> Self:
        return cls(record[0], record[1], int(record[2]), record[3])


class TimelineEntry(NamedTuple):
    """One b2tP row: the first time a blob appeared in a deforked project."""

    blob: str
    time: int
    project: str

    def to_record(self) -> Record:
        return self.blob, pad_time(self.time), self.project

    @classmethod
    def from_record(cls, record: Record) -> Self:
        return cls(record[0], int(record[1]), record[2])


class OriginRecord(NamedTuple):
    blob: str
    time_o: int
    project_o: str

    def to_record(self) -> Record:
        return self.blob, pad_time(self.time_o), self.project_o

    @classmethod
    def from_record(cls, record: Record) -> Self:
        return cls(record[0], int(record[1]), record[2])


class CopyInstance(NamedTuple):
    """One Ptb2Pt row."""

    project_o: str
    time_o: int
    blob: str
    project_d: str
    time_d: int

    def to_record(self) -> Record:
        return self.project_o, pad_time(self.time_o), self.blob, self.project_d, pad_time(self.time_d)

    @classmethod
    def from_record(cls, record: Record) -> Self:
        return cls(record[0], int(record[1]), record[2], record[3], int(record[4]))


class ForkMap(BaseModel):
    """
    Project name to deforked representative (the p2P role).
    """

    mapping: dict[str, str] = {}

    model_config = ConfigDict(frozen=True)

    def resolve(self, project: str) -> str:
        try:
            return self.mapping[project]
        except KeyError:
            raise UnknownProjectError(f"unknown project: {project}") from None

    def __len__(self) -> int:
        return len(self.mapping)

    @property
    def representatives(self) -> set[str]:
        return set(self.mapping.values())


class ExclusionList(BaseModel):
    """
    Blobs that are created independently rather than copied, e.g. the empty file.
    """

    blobs: frozenset[Sha1] = Field(frozenset(), validate_default=True)

    model_config = ConfigDict(frozen=True)

    @field_validator("blobs", mode="after")
    @classmethod
    def include_empty_blob(cls, value: frozenset[str]) -> frozenset[str]:
        return value | {EMPTY_BLOB}

    def __contains__(self, blob: object) -> bool:
        return blob in self.blobs


class PipelineConfig(BaseModel):
    manifest_path: Path
    work_dir: Path
    partitions: Literal[128] = PARTITIONS
    workers: PositiveInt = 1
    min_time: int = Field(DEFAULT_MIN_TIME, ge=0)
    max_time: int | None = Field(None, le=MAX_PADDED_TIME)
    """
    Upper bound of a plausible commit time. None means the time the corpus was ingested.
    """
    exclude_blobs_path: Path | None = None
    stages: frozenset[StageName] = frozenset(StageName)
    force: bool = False
    tag: str = "local"
    memory_budget: PositiveInt = 256 * 1024 * 1024
    """
    Bytes of records held in memory by one sort before spilling a run to disk.
    """
    temp_dir: Path | None = None

    @model_validator(mode="after")
    def validate_bounds(self) -> Self:
        if self.max_time is not None and self.min_time >= self.max_time:
            raise ValueError("min_time must be earlier than max_time")
        if not self.tag or any(c in self.tag for c in "/;\n"):
            raise ValueError(f"Invalid release tag: {self.tag!r}")
        return self


class RepositoryReport(BaseModel):
    project: str
    commits: int = 0
    events: int = 0
    skipped_commits: int = 0
    """
    Commit objects that could not be parsed.
    """
    incomplete_commits: int = 0
    """
    Commits whose trees could not be fully read; their event sets may be partial.
    """


class StageReport(BaseModel):
    stage: StageName
    counts: dict[str, int] = {}


class VerifyReport(BaseModel):
    pipeline_instances: int = 0
    oracle_instances: int = 0
    missing: list[CopyInstance] = []
    """
    Instances the oracle found that the pipeline did not export.
    """
    unexpected: list[CopyInstance] = []
    """
    Exported instances the oracle does not confirm.
    """
    timeline_mismatches: list[str] = []

    @property
    def passed(self) -> bool:
        return not (self.missing or self.unexpected or self.timeline_mismatches)
