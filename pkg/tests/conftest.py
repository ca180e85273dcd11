from io import BytesIO
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import git
import pytest
from git.objects import Commit, Tree
from git.objects.fun import tree_to_stream
from gitdb import IStream

from reuse_tracer.schemas import PipelineConfig

TREE_MODE = 0o040000
FILE_MODE = 0o100644
EXECUTABLE_MODE = 0o100755
SYMLINK_MODE = 0o120000
GITLINK_MODE = 0o160000

MAX_TIME = 2_000_000_000

ACTOR = git.Actor("Fixture Author", "fixture@example.com")


class Symlink(NamedTuple):
    target: str


class Gitlink(NamedTuple):
    commit: str


class Executable(NamedTuple):
    data: bytes


FileSpec = bytes | Symlink | Gitlink | Executable


class RepoBuilder:
    """Writes objects straight into a bare repository so commit times and tree modes are exact."""

    def __init__(self, repo: git.Repo, name: str) -> None:
        self.repo = repo
        self.name = name
        self.commits = 0

    @property
    def path(self) -> Path:
        return Path(self.repo.git_dir)

    def _store(self, kind: str, data: bytes) -> bytes:
        return self.repo.odb.store(IStream(kind, len(data), BytesIO(data))).binsha

    def _tree(self, files: Mapping[str, FileSpec]) -> bytes:
        nested: dict[str, dict[str, FileSpec]] = {}
        entries: list[tuple[bytes, int, str]] = []
        for path, content in files.items():
            head, sep, rest = path.partition("/")
            if sep:
                nested.setdefault(head, {})[rest] = content
            elif isinstance(content, Symlink):
                entries.append((self._store("blob", content.target.encode()), SYMLINK_MODE, head))
            elif isinstance(content, Gitlink):
                entries.append((bytes.fromhex(content.commit), GITLINK_MODE, head))
            elif isinstance(content, Executable):
                entries.append((self._store("blob", content.data), EXECUTABLE_MODE, head))
            else:
                entries.append((self._store("blob", content), FILE_MODE, head))
        for name, subtree in nested.items():
            entries.append((self._tree(subtree), TREE_MODE, name))
        entries.sort(key=lambda entry: entry[2] + "/" if entry[1] == TREE_MODE else entry[2])
        buffer = BytesIO()
        tree_to_stream(entries, buffer.write)
        return self._store("tree", buffer.getvalue())

    def commit(
        self,
        files: Mapping[str, FileSpec],
        time: int,
        *,
        parents: Sequence[Commit] | None = None,
        branch: str = "main",
    ) -> Commit:
        if parents is None:
            parents = [self.repo.heads[branch].commit] if branch in self.repo.heads else []
        self.commits += 1
        date = f"{time} +0000"
        commit = Commit.create_from_tree(
            self.repo,
            Tree(self.repo, self._tree(files)),
            f"{self.name} commit {self.commits}",
            parent_commits=list(parents),
            head=False,
            author=ACTOR,
            committer=ACTOR,
            author_date=date,
            commit_date=date,
        )
        self.repo.create_head(branch, commit, force=True)
        return commit

    def tag(self, name: str, commit: Commit) -> None:
        self.repo.create_tag(name, ref=commit)

    def drop_object(self, hexsha: str) -> None:
        """Delete a loose object, leaving a corrupt store behind."""
        (self.path / "objects" / hexsha[:2] / hexsha[2:]).unlink()


class CorpusBuilder:
    def __init__(self, root: Path) -> None:
        self.root = root
        self.repos: dict[str, RepoBuilder] = {}

    def repo(self, name: str) -> RepoBuilder:
        repo = git.Repo.init(self.root / "repos" / f"{name}.git", bare=True)
        self.repos[name] = RepoBuilder(repo, name)
        return self.repos[name]

    def fork(self, source: str, name: str) -> RepoBuilder:
        path = self.root / "repos" / f"{name}.git"
        repo = git.Repo.clone_from(str(self.repos[source].path), str(path), bare=True)
        self.repos[name] = RepoBuilder(repo, name)
        return self.repos[name]

    def manifest(self) -> Path:
        path = self.root / "manifest.tsv"
        lines = [f"{name}\trepos/{name}.git\n" for name in sorted(self.repos)]
        path.write_text("".join(lines), encoding="utf-8")
        return path

    def config(self, work_dir: str = "work", **kwargs: object) -> PipelineConfig:
        options: dict[str, object] = {"max_time": MAX_TIME, "memory_budget": 4096}
        options.update(kwargs)
        return PipelineConfig(manifest_path=self.manifest(), work_dir=self.root / work_dir, **options)


@pytest.fixture
def corpus(tmp_path: Path) -> CorpusBuilder:
    return CorpusBuilder(tmp_path)
