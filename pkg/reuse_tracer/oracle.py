"""
Brute-force recomputation of copy instances straight from the repositories.

Nothing here goes through the partitioned pipeline: commits come from ``git rev-list``, blobs from
full tree listings of every commit, forks are merged pairwise and times are sanitized by evaluating
the parent rule directly.
"""

import logging
import time
from collections import defaultdict
from typing import Iterable, Mapping

import git

from reuse_tracer.exceptions import OracleRefusedError
from reuse_tracer.schemas import DEFAULT_MIN_TIME, CopyInstance, CorpusManifest, ExclusionList

logger = logging.getLogger(__name__)

ORACLE_MAX_COMMITS = 10_000

Timeline = dict[tuple[str, str], int]
"""(blob, deforked project) -> first time."""


class _Commit:
    __slots__ = ("parents", "raw_time", "blobs")

    def __init__(self, parents: list[str], raw_time: int, blobs: set[str]) -> None:
        self.parents = parents
        self.raw_time = raw_time
        self.blobs = blobs


def _refuse(count: int, project: str, limit: int) -> OracleRefusedError:
    return OracleRefusedError(
        f"Corpus too large for the oracle: {count} commits counted by the time project '{project}' was walked, "
        f"limit is {limit}"
    )


def _tips(repo: git.Repo) -> list[str]:
    tips: set[str] = set()
    for ref in [*repo.heads, *repo.tags]:
        try:
            tips.add(ref.commit.hexsha)
        except ValueError:
            continue
    return sorted(tips)


def check_oracle_size(manifest: CorpusManifest, max_commits: int = ORACLE_MAX_COMMITS) -> int:
    """Count the distinct commits of a corpus without reading trees; refuse past ``max_commits``."""
    seen: set[str] = set()
    for entry in manifest.entries:
        with git.Repo(entry.repo_path) as repo:
            tips = _tips(repo)
            if not tips:
                continue
            for commit in repo.iter_commits(rev=tips):
                seen.add(commit.hexsha)
                if len(seen) > max_commits:
                    raise _refuse(len(seen), entry.project, max_commits)
    return len(seen)


def _walk(repo: git.Repo, project: str, commits: dict[str, _Commit], limit: int) -> set[str]:
    tips = _tips(repo)
    if not tips:
        return set()
    members = set()
    for commit in repo.iter_commits(rev=tips):
        members.add(commit.hexsha)
        if commit.hexsha in commits:
            continue
        blobs = {
            item.hexsha
            for item in commit.tree.traverse()
            if item.type == "blob" and item.mode != 0o120000  # type: ignore[union-attr]
        }
        commits[commit.hexsha] = _Commit([p.hexsha for p in commit.parents], commit.committed_date, blobs)
        if len(commits) > limit:
            raise _refuse(len(commits), project, limit)
    return members


def _components(project_commits: Mapping[str, set[str]]) -> dict[str, str]:
    groups = [({project}, set(commits)) for project, commits in project_commits.items()]
    merged = True
    while merged:
        merged = False
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                if groups[i][1] & groups[j][1]:
                    groups[i] = (groups[i][0] | groups[j][0], groups[i][1] | groups[j][1])
                    del groups[j]
                    merged = True
                    break
            if merged:
                break
    mapping = {}
    for projects, _ in groups:
        representative = min(projects, key=lambda p: (-len(project_commits[p]), p))
        for project in projects:
            mapping[project] = representative
    return mapping


def _effective_times(commits: Mapping[str, _Commit], min_time: int, max_time: int) -> dict[str, int]:
    effective: dict[str, int] = {}
    for start in sorted(commits):
        stack = [start]
        while stack:
            sha = stack[-1]
            if sha in effective:
                stack.pop()
                continue
            commit = commits[sha]
            todo = [p for p in commit.parents if p in commits and p not in effective]
            if todo:
                stack.extend(todo)
                continue
            inherited = max((effective.get(p, min_time) for p in commit.parents), default=min_time)
            if min_time <= commit.raw_time <= max_time:
                effective[sha] = max(commit.raw_time, inherited)
            else:
                effective[sha] = inherited
            stack.pop()
    return effective


def oracle_timeline(
    manifest: CorpusManifest,
    *,
    min_time: int = DEFAULT_MIN_TIME,
    max_time: int | None = None,
    max_commits: int = ORACLE_MAX_COMMITS,
) -> Timeline:
    """First sanitized time of every blob in every deforked project, by full enumeration."""
    upper = max_time if max_time is not None else int(time.time())
    commits: dict[str, _Commit] = {}
    project_commits: dict[str, set[str]] = {}
    for entry in manifest.entries:
        repo = git.Repo(entry.repo_path)
        try:
            project_commits[entry.project] = _walk(repo, entry.project, commits, max_commits)
        finally:
            repo.close()
    representatives = _components(project_commits)
    effective = _effective_times(commits, min_time, upper)

    timeline: Timeline = {}
    for project, members in project_commits.items():
        representative = representatives[project]
        for sha in members:
            for blob in commits[sha].blobs:
                key = (blob, representative)
                if key not in timeline or effective[sha] < timeline[key]:
                    timeline[key] = effective[sha]
    logger.info("Oracle walked %d commits in %d projects", len(commits), len(project_commits))
    return timeline


def instances_from_timeline(timeline: Timeline, exclusions: ExclusionList) -> set[CopyInstance]:
    by_blob: dict[str, list[tuple[int, str]]] = defaultdict(list)
    for (blob, project), first in timeline.items():
        if blob not in exclusions:
            by_blob[blob].append((first, project))
    instances = set()
    for blob, holders in by_blob.items():
        time_o, project_o = min(holders)
        for time_d, project_d in holders:
            if project_d != project_o:
                instances.add(CopyInstance(project_o, time_o, blob, project_d, time_d))
    return instances


def oracle_copy_instances(
    manifest: CorpusManifest,
    *,
    min_time: int = DEFAULT_MIN_TIME,
    max_time: int | None = None,
    exclusions: ExclusionList | None = None,
    max_commits: int = ORACLE_MAX_COMMITS,
) -> set[CopyInstance]:
    timeline = oracle_timeline(manifest, min_time=min_time, max_time=max_time, max_commits=max_commits)
    return instances_from_timeline(timeline, exclusions or ExclusionList())


def compare_timelines(pipeline: Iterable[tuple[str, int, str]], oracle: Timeline) -> list[str]:
    """Describe every (blob, project) whose first time differs between the two sides."""
    mismatches = []
    seen = set()
    for blob, first, project in pipeline:
        key = (blob, project)
        seen.add(key)
        expected = oracle.get(key)
        if expected != first:
            mismatches.append(f"{blob};{project}: pipeline={first} oracle={expected}")
    for blob, project in sorted(oracle.keys() - seen):
        mismatches.append(f"{blob};{project}: pipeline=None oracle={oracle[(blob, project)]}")
    return mismatches
