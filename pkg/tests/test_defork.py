import random
from collections import defaultdict
from itertools import combinations
from pathlib import Path

import pytest

from reuse_tracer.defork import UnionFind, build_fork_components, compose_c2p, read_fork_map, write_fork_map
from reuse_tracer.exceptions import UnknownProjectError
from reuse_tracer.schemas import ForkMap

C1, C2, C3, C4 = ("1" * 40, "2" * 40, "3" * 40, "4" * 40)


def test_union_find_groups() -> None:
    sets = UnionFind()
    for item in "abcde":
        sets.add(item)
    sets.union("a", "b")
    sets.union("c", "d")
    sets.union("b", "d")

    assert sets.find("a") == sets.find("c")
    assert sets.find("e") == "e"
    assert sorted(sorted(group) for group in sets.groups().values()) == [["a", "b", "c", "d"], ["e"]]


def test_union_find_long_chain() -> None:
    sets = UnionFind()
    names = [f"p{i}" for i in range(10_000)]
    for name in names:
        sets.add(name)
    for a, b in zip(names, names[1:]):
        sets.union(a, b)
    assert len({sets.find(name) for name in names}) == 1


def test_shared_commit_joins_projects() -> None:
    fork_map = build_fork_components([(C1, "A"), (C1, "B"), (C2, "C")])
    assert fork_map.mapping == {"A": "A", "B": "A", "C": "C"}


def test_representative_has_most_commits() -> None:
    records = [(C1, "orig"), (C1, "fork"), (C2, "fork"), (C3, "fork"), (C2, "zz"), (C4, "orig")]
    fork_map = build_fork_components(records)
    assert fork_map.mapping == {"fork": "fork", "orig": "fork", "zz": "fork"}


def test_representative_tie_goes_to_smallest_name() -> None:
    fork_map = build_fork_components([(C1, "b_proj"), (C1, "a_proj")])
    assert fork_map.resolve("b_proj") == "a_proj"


def test_transitive_components() -> None:
    records = [(C1, "A"), (C1, "B"), (C2, "B"), (C2, "C"), (C3, "D")]
    fork_map = build_fork_components(records)
    assert {fork_map.resolve(p) for p in "ABC"} == {"B"}
    assert fork_map.resolve("D") == "D"
    assert fork_map.representatives == {"B", "D"}


def test_projects_without_commits_map_to_themselves() -> None:
    fork_map = build_fork_components([], projects=["empty"])
    assert fork_map.mapping == {"empty": "empty"}


def test_unknown_project() -> None:
    with pytest.raises(UnknownProjectError, match="unknown project: nope"):
        ForkMap(mapping={"a": "a"}).resolve("nope")


def test_fork_map_file(tmp_path: Path) -> None:
    fork_map = build_fork_components([(C1, "b"), (C1, "a"), (C2, "c")])
    path = tmp_path / "p2P"
    write_fork_map(fork_map, path)

    assert path.read_text() == "a;a\nb;a\nc;c\n"
    assert read_fork_map(path) == fork_map


def test_compose_c2p_deduplicates_per_commit() -> None:
    fork_map = ForkMap(mapping={"orig": "orig", "fork": "orig", "other": "other"})
    c2p = [(C1, "fork"), (C1, "orig"), (C2, "fork"), (C3, "other")]
    assert list(compose_c2p(c2p, fork_map)) == [(C1, "orig"), (C2, "orig"), (C3, "other")]


def test_compose_c2p_rejects_unknown_projects() -> None:
    with pytest.raises(UnknownProjectError):
        list(compose_c2p([(C1, "ghost")], ForkMap(mapping={})))


def closure_by_pairwise_merging(records: list[tuple[str, str]]) -> dict[str, str]:
    project_commits: dict[str, set[str]] = defaultdict(set)
    for commit, project in records:
        project_commits[project].add(commit)
    groups = [({project}, set(commits)) for project, commits in project_commits.items()]
    merged = True
    while merged:
        merged = False
        for i, j in combinations(range(len(groups)), 2):
            if groups[i][1] & groups[j][1]:
                groups[i] = (groups[i][0] | groups[j][0], groups[i][1] | groups[j][1])
                del groups[j]
                merged = True
                break
    return {
        project: min(members, key=lambda member: (-len(project_commits[member]), member))
        for members, _ in groups
        for project in members
    }


@pytest.mark.parametrize("seed", range(200))
def test_components_match_pairwise_closure(seed: int) -> None:
    rng = random.Random(seed)
    projects = [f"p{i:02d}" for i in range(rng.randrange(1, 15))]
    commits = [f"{rng.getrandbits(160):040x}" for _ in range(rng.randrange(1, 30))]
    records = [(rng.choice(commits), rng.choice(projects)) for _ in range(rng.randrange(1, 60))]

    mapping = build_fork_components(records).mapping

    assert mapping == closure_by_pairwise_merging(records)
    assert all(mapping[mapping[project]] == mapping[project] for project in mapping)
    shuffled = records[:]
    rng.shuffle(shuffled)
    assert build_fork_components(shuffled).mapping == mapping
    assert build_fork_components(sorted(shuffled), presorted=True).mapping == mapping
