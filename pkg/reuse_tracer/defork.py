import logging
from collections import Counter
from itertools import groupby
from operator import itemgetter
from pathlib import Path
from typing import Iterable, Iterator

from reuse_tracer.engine.join import group_by_key
from reuse_tracer.engine.sort import RecordSource
from reuse_tracer.exceptions import ManifestError
from reuse_tracer.schemas import ForkMap, Record

logger = logging.getLogger(__name__)


class UnionFind:
    """Disjoint sets over hashable names with path compression and union by rank."""

    def __init__(self) -> None:
        self.parent: dict[str, str] = {}
        self.rank: dict[str, int] = {}

    def add(self, item: str) -> None:
        if item not in self.parent:
            self.parent[item] = item
            self.rank[item] = 0

    def find(self, item: str) -> str:
        root = item
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[item] != root:
            self.parent[item], item = root, self.parent[item]
        return root

    def union(self, a: str, b: str) -> None:
        root_a, root_b = self.find(a), self.find(b)
        if root_a == root_b:
            return
        if self.rank[root_a] < self.rank[root_b]:
            root_a, root_b = root_b, root_a
        self.parent[root_b] = root_a
        if self.rank[root_a] == self.rank[root_b]:
            self.rank[root_a] += 1

    def groups(self) -> dict[str, list[str]]:
        result: dict[str, list[str]] = {}
        for item in self.parent:
            result.setdefault(self.find(item), []).append(item)
        return result


def build_fork_components(
    c2p_records: Iterable[tuple[str, str]],
    *,
    projects: Iterable[str] = (),
    presorted: bool = False,
) -> ForkMap:
    """
    Collapse projects connected through shared commits.

    The representative of each component is the member with the most commits, ties broken by the
    lexicographically smallest name. ``projects`` adds members that have no commits at all. Unless
    ``presorted`` is set the records are sorted by commit first.
    """
    records: Iterable[tuple[str, str]] = c2p_records if presorted else sorted(c2p_records)
    components = UnionFind()
    commit_counts: Counter[str] = Counter()
    for project in projects:
        components.add(project)
    for _, group in groupby(records, key=itemgetter(0)):
        members = sorted({project for _, project in group})
        for project in members:
            components.add(project)
            commit_counts[project] += 1
        for project in members[1:]:
            components.union(members[0], project)

    mapping: dict[str, str] = {}
    for members in components.groups().values():
        representative = min(members, key=lambda p: (-commit_counts[p], p))
        for project in members:
            mapping[project] = representative
    logger.info("Deforked %d projects into %d components", len(mapping), len(set(mapping.values())))
    return ForkMap(mapping=dict(sorted(mapping.items())))


def resolve(fork_map: ForkMap, project: str) -> str:
    return fork_map.resolve(project)


def write_fork_map(fork_map: ForkMap, path: Path) -> None:
    """Write the p2P file: ``project;representative`` sorted by project."""
    lines = [f"{project};{representative}\n" for project, representative in sorted(fork_map.mapping.items())]
    path.write_text("".join(lines), encoding="utf-8")


def read_fork_map(path: Path) -> ForkMap:
    mapping = {}
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        project, sep, representative = line.partition(";")
        if not sep:
            raise ManifestError(f"{path}:{number}: malformed p2P line")
        mapping[project] = representative
    return ForkMap(mapping=mapping)


def compose_c2p(c2p: RecordSource, fork_map: ForkMap) -> Iterator[Record]:
    """Map each commit's projects to their representatives: the c2P relation, sorted and unique."""
    for commit, group in group_by_key(c2p, (0,)):
        for representative in sorted({fork_map.resolve(record[1]) for record in group}):
            yield commit[0], representative
