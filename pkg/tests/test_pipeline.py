import logging
import time
from collections import Counter, defaultdict
from typing import Callable

import pytest

from reuse_tracer.corpus import load_manifest
from reuse_tracer.detect import load_exclusions
from reuse_tracer.engine.records import read_records, write_records
from reuse_tracer.exceptions import OracleRefusedError, StageFailedError, StageMissingError
from reuse_tracer.export import read_export, release_name
from reuse_tracer.oracle import check_oracle_size, oracle_copy_instances, oracle_timeline
from reuse_tracer.pipeline import Pipeline, load_reports
from reuse_tracer.schemas import PARTITIONS, CopyInstance, StageName, TimelineEntry
from reuse_tracer.stages import timeline as timeline_stage
from reuse_tracer.stages.ingest import INGEST_INFO, IngestInfo
from reuse_tracer.utils import EMPTY_BLOB, git_blob_sha1
from tests.conftest import MAX_TIME, CorpusBuilder
from tests.corpora import CORPORA, LIB, LICENSE, T0, UTIL, forks_and_copy, merge_propagation, planted_copies


def exported(pipeline: Pipeline) -> list[CopyInstance]:
    return list(read_export(pipeline.layout.stage_dir(StageName.export), pipeline.config.tag))


def export_bytes(pipeline: Pipeline) -> list[bytes]:
    directory = pipeline.layout.stage_dir(StageName.export)
    return [(directory / release_name(pipeline.config.tag, k)).read_bytes() for k in range(PARTITIONS)]


def timeline(pipeline: Pipeline) -> list[TimelineEntry]:
    return [
        TimelineEntry.from_record(record)
        for j in range(PARTITIONS)
        for record in read_records(pipeline.layout.partition(StageName.timeline, "b2tP", j))
    ]


def skipped_stages(caplog: pytest.LogCaptureFixture) -> list[str]:
    return [str(record.args[0]) for record in caplog.records if "event=skip" in str(record.msg)]  # type: ignore[index]


def build_forks(corpus: CorpusBuilder) -> None:
    original = corpus.repo("orig_project")
    original.commit({"core.py": LIB}, T0)
    original.commit({"core.py": LIB, "doc.md": b"docs\n"}, T0 + 10)
    fork_a = corpus.fork("orig_project", "fork_a")
    fork_a.commit({"core.py": LIB, "doc.md": b"docs\n", "extra.py": UTIL}, T0 + 20)
    corpus.fork("orig_project", "fork_b")
    original.commit({"core.py": LIB, "doc.md": b"more docs\n"}, T0 + 30)
    original.commit({"core.py": LIB, "doc.md": b"even more docs\n"}, T0 + 40)


@pytest.mark.parametrize("build", CORPORA.values(), ids=CORPORA.keys())
def test_pipeline_matches_oracle(corpus: CorpusBuilder, build: Callable[[CorpusBuilder], None]) -> None:
    build(corpus)
    pipeline = Pipeline(corpus.config())
    pipeline.run()

    instances = exported(pipeline)
    assert len(instances) == len(set(instances))
    assert set(instances) == oracle_copy_instances(load_manifest(corpus.manifest()), max_time=MAX_TIME)
    assert pipeline.verify().passed


@pytest.mark.parametrize("build", CORPORA.values(), ids=CORPORA.keys())
def test_copy_instances_conserve_projects(corpus: CorpusBuilder, build: Callable[[CorpusBuilder], None]) -> None:
    build(corpus)
    pipeline = Pipeline(corpus.config())
    pipeline.run()

    holders: dict[str, set[str]] = defaultdict(set)
    for entry in timeline(pipeline):
        holders[entry.blob].add(entry.project)
    instances = exported(pipeline)
    per_blob = Counter(instance.blob for instance in instances)
    origins: dict[str, set[tuple[str, int]]] = defaultdict(set)
    for instance in instances:
        assert instance.time_o <= instance.time_d
        assert instance.project_o != instance.project_d
        origins[instance.blob].add((instance.project_o, instance.time_o))
    for blob, projects in holders.items():
        if blob == EMPTY_BLOB or len(projects) == 1:
            assert blob not in per_blob
            continue
        assert per_blob[blob] == len(projects) - 1
        assert len(origins[blob]) == 1


def test_planted_copies(corpus: CorpusBuilder) -> None:
    planted_copies(corpus)
    pipeline = Pipeline(corpus.config())
    pipeline.run()

    lib, util, license_blob = git_blob_sha1(LIB), git_blob_sha1(UTIL), git_blob_sha1(LICENSE)
    assert sorted(exported(pipeline)) == [
        CopyInstance("alpha", T0 + 100, lib, "beta", T0 + 500),
        CopyInstance("alpha", T0 + 100, lib, "gamma", T0 + 700),
        CopyInstance("gamma", T0 - 50, license_blob, "alpha", T0 + 100),
        CopyInstance("gamma", T0 + 700, util, "delta", T0 + 800),
    ]


def test_forks_are_not_copies(corpus: CorpusBuilder) -> None:
    build_forks(corpus)
    pipeline = Pipeline(corpus.config())
    pipeline.run()
    assert exported(pipeline) == []

    unrelated = corpus.repo("unrelated")
    unrelated.commit({"copied/core.py": LIB}, T0 + 1000)
    pipeline = Pipeline(corpus.config())
    pipeline.run()

    assert exported(pipeline) == [CopyInstance("orig_project", T0, git_blob_sha1(LIB), "unrelated", T0 + 1000)]
    fork_map = (pipeline.layout.stage_dir(StageName.defork) / "p2P").read_text().splitlines()
    assert fork_map == [
        "fork_a;orig_project",
        "fork_b;orig_project",
        "orig_project;orig_project",
        "unrelated;unrelated",
    ]


def test_implausible_times_are_repaired(corpus: CorpusBuilder) -> None:
    merge_propagation(corpus)
    pipeline = Pipeline(corpus.config())
    reports = {report.stage: report for report in pipeline.run()}

    first_seen = {(entry.blob, entry.project): entry.time for entry in timeline(pipeline)}
    merged, late, left = git_blob_sha1(b"merged\n"), git_blob_sha1(b"late\n"), git_blob_sha1(b"left\n")
    assert first_seen[(merged, "merger")] == T0 + 300
    assert first_seen[(late, "merger")] == T0 + 300
    assert first_seen[(left, "other")] == T0 + 200
    assert reports[StageName.timeline].counts["repaired_commits"] == 2

    instances = set(exported(pipeline))
    assert CopyInstance("other", T0 + 200, merged, "merger", T0 + 300) in instances
    assert CopyInstance("merger", T0 + 100, left, "other", T0 + 200) in instances


def test_exclusion_list(corpus: CorpusBuilder) -> None:
    planted_copies(corpus)
    exclusions = corpus.root / "exclude.txt"
    exclusions.write_text(f"# license text\n{git_blob_sha1(LICENSE)}\n")
    pipeline = Pipeline(corpus.config(exclude_blobs_path=exclusions))
    reports = {report.stage: report for report in pipeline.run()}

    assert git_blob_sha1(LICENSE) not in {instance.blob for instance in exported(pipeline)}
    assert reports[StageName.detect].counts["excluded_blobs"] == 1
    expected = oracle_copy_instances(
        load_manifest(corpus.manifest()), max_time=MAX_TIME, exclusions=load_exclusions(exclusions)
    )
    assert set(exported(pipeline)) == expected


def test_output_is_independent_of_worker_count(corpus: CorpusBuilder) -> None:
    planted_copies(corpus)
    outputs = []
    for workers in (1, 4, 16):
        pipeline = Pipeline(corpus.config(f"work-{workers}", workers=workers))
        pipeline.run()
        outputs.append(export_bytes(pipeline))
    assert outputs[0] == outputs[1] == outputs[2]


def test_interrupted_stage_resumes_to_identical_output(
    corpus: CorpusBuilder, monkeypatch: pytest.MonkeyPatch
) -> None:
    planted_copies(corpus)
    clean = Pipeline(corpus.config("clean"))
    clean.run()

    calls = 0
    build_blob_partition = timeline_stage.build_blob_partition

    def crash_midway(task: timeline_stage.BlobPartitionTask) -> int:
        nonlocal calls
        calls += 1
        if calls > PARTITIONS // 2:
            raise RuntimeError("worker killed")
        return build_blob_partition(task)

    interrupted = Pipeline(corpus.config("interrupted"))
    monkeypatch.setattr(timeline_stage, "build_blob_partition", crash_midway)
    with pytest.raises(StageFailedError, match="worker killed"):
        interrupted.run()
    assert interrupted.layout.read_marker(StageName.timeline) is None

    monkeypatch.undo()
    interrupted.run()
    assert export_bytes(interrupted) == export_bytes(clean)


def test_partial_output_without_marker_is_rebuilt(corpus: CorpusBuilder) -> None:
    planted_copies(corpus)
    clean = Pipeline(corpus.config("clean"))
    clean.run()

    partial = Pipeline(corpus.config("partial", stages=frozenset({StageName.ingest, StageName.defork})))
    partial.run()
    stale = partial.layout.partition(StageName.timeline, "b2tP", 0)
    stale.parent.mkdir(parents=True)
    stale.write_bytes(b"not a zstd frame")

    resumed = Pipeline(corpus.config("partial"))
    resumed.run()
    assert export_bytes(resumed) == export_bytes(clean)


def test_rerun_skips_completed_stages(corpus: CorpusBuilder, caplog: pytest.LogCaptureFixture) -> None:
    planted_copies(corpus)
    pipeline = Pipeline(corpus.config())
    first = pipeline.run()

    caplog.set_level(logging.INFO)
    second = pipeline.run()
    assert skipped_stages(caplog) == [str(name) for name in StageName]
    assert second == first
    assert load_reports(pipeline.config.work_dir) == first


def test_force_reruns_every_stage(corpus: CorpusBuilder, caplog: pytest.LogCaptureFixture) -> None:
    planted_copies(corpus)
    Pipeline(corpus.config()).run()

    caplog.set_level(logging.INFO)
    Pipeline(corpus.config(force=True)).run()
    assert skipped_stages(caplog) == []


def test_config_change_invalidates_downstream_stages(
    corpus: CorpusBuilder, caplog: pytest.LogCaptureFixture
) -> None:
    planted_copies(corpus)
    Pipeline(corpus.config()).run()

    exclusions = corpus.root / "exclude.txt"
    exclusions.write_text(f"{git_blob_sha1(LIB)}\n")
    caplog.set_level(logging.INFO)
    pipeline = Pipeline(corpus.config(exclude_blobs_path=exclusions))
    pipeline.run()

    assert skipped_stages(caplog) == ["ingest", "defork", "timeline"]
    assert git_blob_sha1(LIB) not in {instance.blob for instance in exported(pipeline)}


def test_missing_prerequisite_names_the_stage(corpus: CorpusBuilder) -> None:
    planted_copies(corpus)
    pipeline = Pipeline(corpus.config(stages=frozenset({StageName.detect})))
    with pytest.raises(StageMissingError, match="Stage 'timeline' has not completed"):
        pipeline.run()


def test_empty_manifest(corpus: CorpusBuilder) -> None:
    pipeline = Pipeline(corpus.config())
    reports = pipeline.run()

    assert [report.stage for report in reports] == list(StageName)
    for report in reports:
        assert all(value == 0 for name, value in report.counts.items() if name != "files")
    directory = pipeline.layout.stage_dir(StageName.export)
    assert sorted(path.name for path in directory.glob("Ptb2PtFull*")) == sorted(
        release_name("local", k) for k in range(PARTITIONS)
    )
    assert exported(pipeline) == []


def test_max_time_defaults_to_ingest_time(corpus: CorpusBuilder) -> None:
    merge_propagation(corpus)
    pipeline = Pipeline(corpus.config(max_time=None))
    pipeline.run()

    info = IngestInfo.model_validate_json(
        (pipeline.layout.stage_dir(StageName.ingest) / INGEST_INFO).read_text()
    )
    assert pipeline.bounds() == (pipeline.config.min_time, info.ingested_at)
    assert [report.project for report in info.repositories] == ["merger", "other", "third"]
    assert pipeline.verify().passed


def test_verify_reports_a_deleted_line(corpus: CorpusBuilder) -> None:
    planted_copies(corpus)
    pipeline = Pipeline(corpus.config())
    report = pipeline.verify()
    assert report.passed
    assert report.pipeline_instances == report.oracle_instances == 4

    directory = pipeline.layout.stage_dir(StageName.export)
    path = next(
        directory / release_name("local", k)
        for k in range(PARTITIONS)
        if list(read_records(directory / release_name("local", k)))
    )
    records = list(read_records(path))
    write_records(path, records[1:])

    report = pipeline.verify()
    assert not report.passed
    assert [tuple(map(str, instance)) for instance in report.missing] == [records[0]]
    assert report.unexpected == []


def test_verify_fork_only_corpus(corpus: CorpusBuilder) -> None:
    build_forks(corpus)
    report = Pipeline(corpus.config()).verify()
    assert report.passed
    assert report.pipeline_instances == report.oracle_instances == 0


def test_oracle_size_counts_shared_history_once(corpus: CorpusBuilder) -> None:
    forks_and_copy(corpus)
    assert check_oracle_size(load_manifest(corpus.manifest())) == 6

    with pytest.raises(OracleRefusedError, match=r"6 commits counted by the time project 'unrelated'.*limit is 5"):
        check_oracle_size(load_manifest(corpus.manifest()), max_commits=5)


def test_oracle_walk_refuses_large_corpus(corpus: CorpusBuilder) -> None:
    planted_copies(corpus)
    with pytest.raises(OracleRefusedError, match=r"4 commits counted by the time project 'beta'.*limit is 3"):
        oracle_timeline(load_manifest(corpus.manifest()), max_time=MAX_TIME, max_commits=3)


def test_verify_refuses_before_running_stages(corpus: CorpusBuilder) -> None:
    planted_copies(corpus)
    pipeline = Pipeline(corpus.config())
    with pytest.raises(OracleRefusedError, match=r"4 commits counted by the time project 'beta'.*limit is 3"):
        pipeline.verify(max_commits=3)

    assert all(pipeline.layout.read_marker(name) is None for name in StageName)
    assert pipeline.reports() == []


@pytest.mark.slow
def test_hundred_thousand_events_with_four_workers(corpus: CorpusBuilder) -> None:
    files, commits = 500, 50
    for r in range(4):
        repo = corpus.repo(f"bulk{r}")
        for c in range(commits):
            tree = {f"src/f{j:03d}.txt": f"repo {r} commit {c} file {j}\n".encode() for j in range(files)}
            tree["shared.py"] = LIB
            repo.commit(tree, T0 + 1000 * r + c)

    pipeline = Pipeline(corpus.config(workers=4, memory_budget=64 << 20))
    started = time.perf_counter()
    reports = pipeline.run()
    elapsed = time.perf_counter() - started

    assert reports[0].counts["events"] >= 10**5
    assert reports[-1].counts["copy_instances"] == 3
    assert elapsed < 60
