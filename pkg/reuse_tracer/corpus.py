import logging
from pathlib import Path
from types import TracebackType
from typing import Iterator, Self, Sequence

import git
from git.exc import BadName, BadObject, GitError, InvalidGitRepositoryError, NoSuchPathError
from git.objects import Commit, Tree
from pydantic import ValidationError

from reuse_tracer.engine.records import RecordWriter
from reuse_tracer.exceptions import IngestError, ManifestError
from reuse_tracer.schemas import BaseModel, BlobEvent, CommitMeta, CorpusManifest, ManifestEntry, RepositoryReport
from reuse_tracer.utils import encode_path

logger = logging.getLogger(__name__)

SYMLINK_MODE = 0o120000
MAPS = ("c2p", "c2dat", "c2fbb")

_OBJECT_ERRORS = (ValueError, KeyError, TypeError, BadName, BadObject, GitError)


def load_manifest(path: Path) -> CorpusManifest:
    """
    Parse a ``project<TAB>repo_path`` manifest.

    Blank lines and lines starting with '#' are ignored. Relative repository paths are resolved against
    the manifest's directory.
    """
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ManifestError(f"Cannot read manifest {path}: {e}") from e
    entries = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        project, sep, repo_path = line.partition("\t")
        if not sep or not repo_path.strip():
            raise ManifestError(f"{path}:{number}: expected 'project<TAB>repo_path'")
        try:
            entries.append(ManifestEntry(project=project, repo_path=path.parent / repo_path.strip()))
        except ValidationError as e:
            raise ManifestError(f"{path}:{number}: {e.errors()[0]['msg']}") from e
    try:
        return CorpusManifest(entries=entries)
    except ValidationError as e:
        raise ManifestError(f"{path}: {e.errors()[0]['msg']}") from e


class RepositoryReader:
    """
    Read-only view of one manifest entry's object store.
    """

    def __init__(self, entry: ManifestEntry) -> None:
        self.entry = entry
        self.report = RepositoryReport(project=entry.project)
        self.diagnostics: list[tuple[str, str, str, str]] = []

        self._repo: git.Repo | None = None
        self._incomplete = False

    @property
    def repo(self) -> git.Repo:
        if self._repo is None:
            raise IngestError("Repository is not open. Please enter the context.")
        return self._repo

    def ref_commits(self) -> list[tuple[str, Commit]]:
        """Commits named by local branches and tags; remote-tracking refs are ignored."""
        targets = []
        for ref in [*self.repo.heads, *self.repo.tags]:
            try:
                commit = ref.commit
            except _OBJECT_ERRORS as e:
                logger.warning("%s: skipping ref %s: %s", self.entry.project, ref.path, e)
                continue
            targets.append((ref.path, commit))
        return sorted(targets, key=lambda target: target[0])

    def commits(self) -> Iterator[CommitMeta]:
        """Yield every commit reachable from a branch or tag exactly once."""
        seen: set[str] = set()
        stack = [commit for _, commit in reversed(self.ref_commits())]
        while stack:
            commit = stack.pop()
            if commit.hexsha in seen:
                continue
            seen.add(commit.hexsha)
            try:
                parents = commit.parents
                meta = CommitMeta(
                    commit=commit.hexsha,
                    parents=[parent.hexsha for parent in parents],
                    raw_time=commit.committed_date,
                )
            except (*_OBJECT_ERRORS, ValidationError) as e:
                logger.warning("%s: skipping malformed commit %s: %s", self.entry.project, commit.hexsha, e)
                self.report.skipped_commits += 1
                self._diagnose(commit.hexsha, "", f"malformed commit: {e}")
                continue
            self.report.commits += 1
            stack.extend(reversed(parents))
            yield meta

    def blob_events(self, meta: CommitMeta) -> list[BlobEvent]:
        """
        Blobs created by a commit.

        A (path, blob) pair is created when the blob differs from the blob at that path in every parent.
        Symlinks and submodule entries are not blobs of the project.
        """
        self._incomplete = False
        try:
            commit = self.repo.commit(meta.commit)
            tree = commit.tree
            parents: list[Tree | None] = []
            for parent in commit.parents:
                try:
                    parents.append(parent.tree)
                except _OBJECT_ERRORS as e:
                    self._mark_incomplete(meta.commit, "", f"unreadable parent {parent.hexsha}: {e}")
                    parents.append(None)
        except _OBJECT_ERRORS as e:
            self._mark_incomplete(meta.commit, "", f"unreadable commit tree: {e}")
            self.report.incomplete_commits += 1
            return []
        events = [
            BlobEvent(commit=meta.commit, project=self.entry.project, path=path, old_blob=old, new_blob=new)
            for path, new, old in self._created(meta.commit, tree, parents, "")
        ]
        if self._incomplete:
            self.report.incomplete_commits += 1
        self.report.events += len(events)
        return events

    def _created(
        self,
        commit: str,
        tree: Tree,
        parents: Sequence[Tree | None],
        prefix: str,
    ) -> Iterator[tuple[str, str, str | None]]:
        try:
            items = list(tree)
        except _OBJECT_ERRORS as e:
            self._mark_incomplete(commit, prefix, f"unreadable tree: {e}")
            return
        parent_items = [self._index(commit, parent, prefix) for parent in parents]
        for item in items:
            path = f"{prefix}{item.name}"
            if item.type == "tree":
                subtrees = [_subtree(entries.get(item.name)) for entries in parent_items]
                if any(subtree is not None and subtree.binsha == item.binsha for subtree in subtrees):
                    continue
                yield from self._created(commit, item, subtrees, f"{path}/")
            elif item.type == "blob" and item.mode != SYMLINK_MODE:
                previous = [_file_sha(entries.get(item.name)) for entries in parent_items]
                if item.hexsha in previous:
                    continue
                yield path, item.hexsha, previous[0] if previous else None

    def _index(self, commit: str, tree: Tree | None, prefix: str) -> dict[str, object]:
        if tree is None:
            return {}
        try:
            return {item.name: item for item in tree}
        except _OBJECT_ERRORS as e:
            self._mark_incomplete(commit, prefix, f"unreadable parent tree: {e}")
            return {}

    def _mark_incomplete(self, commit: str, path: str, reason: str) -> None:
        self._incomplete = True
        self._diagnose(commit, path, reason)

    def _diagnose(self, commit: str, path: str, reason: str) -> None:
        self.diagnostics.append((self.entry.project, commit, encode_path(path), encode_path(reason)))

    def __enter__(self) -> Self:
        try:
            self._repo = git.Repo(self.entry.repo_path)
        except (InvalidGitRepositoryError, NoSuchPathError, OSError) as e:
            raise IngestError(
                f"Manifest entry '{self.entry.project}': cannot read repository at {self.entry.repo_path}"
            ) from e
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc_value: BaseException | None,
        traceback: TracebackType | None,
    ) -> None:
        if self._repo is not None:
            self._repo.close()
            self._repo = None


def _subtree(item: object) -> Tree | None:
    return item if isinstance(item, Tree) else None


def _file_sha(item: object) -> str | None:
    if getattr(item, "type", None) == "blob" and getattr(item, "mode", None) != SYMLINK_MODE:
        return item.hexsha  # type: ignore[attr-defined, no-any-return]
    return None


def enumerate_commits(reader: RepositoryReader) -> Iterator[CommitMeta]:
    """Commits of the reader's project; malformed ones are skipped and counted in ``reader.report``."""
    return reader.commits()


def extract_blob_events(reader: RepositoryReader, commit: CommitMeta) -> list[BlobEvent]:
    return reader.blob_events(commit)


def repository_fingerprint(entry: ManifestEntry) -> list[str]:
    """Branch and tag targets of a repository; any change to them invalidates a previous ingest."""
    with RepositoryReader(entry) as reader:
        return [f"{entry.project}:{path}={commit.hexsha}" for path, commit in reader.ref_commits()]


class IngestTask(BaseModel):
    entry: ManifestEntry
    spill_dir: Path
    index: int


def spill_path(spill_dir: Path, index: int, map_name: str) -> Path:
    return spill_dir / f"{index:05d}.{map_name}.zst"


def ingest_repository(task: IngestTask) -> RepositoryReport:
    """
    Extract the raw maps of one manifest entry into worker-private spill files.

    Writes ``c2p`` (commit;project), ``c2dat`` (commit;raw_time;parents) and
    ``c2fbb`` (commit;project;new_blob;old_blob or '-') plus a diagnostics spill.
    """
    project = task.entry.project
    with (
        RepositoryReader(task.entry) as reader,
        RecordWriter(spill_path(task.spill_dir, task.index, "c2p")) as c2p,
        RecordWriter(spill_path(task.spill_dir, task.index, "c2dat")) as c2dat,
        RecordWriter(spill_path(task.spill_dir, task.index, "c2fbb")) as c2fbb,
    ):
        for meta in enumerate_commits(reader):
            c2p.write((meta.commit, project))
            c2dat.write(meta.to_record())
            c2fbb.write_all(event.to_record() for event in extract_blob_events(reader, meta))
    with RecordWriter(spill_path(task.spill_dir, task.index, "diag")) as diag:
        diag.write_all(reader.diagnostics)
    logger.info(
        "Ingested %s: %d commits, %d events, %d skipped, %d incomplete",
        project,
        reader.report.commits,
        reader.report.events,
        reader.report.skipped_commits,
        reader.report.incomplete_commits,
    )
    return reader.report
