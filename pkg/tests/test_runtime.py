import json
import re
import shutil
from datetime import datetime
from pathlib import Path

import pytest

from resumepipe.backend import BackendConfig
from resumepipe.config import (
    CorpusSource,
    RunConfig,
    config_hash,
    load_config,
    new_run_id,
)
from resumepipe.decide import DecisionCriteria, DecisionRecord
from resumepipe.errors import ConfigError, IntegrityError, StageError
from resumepipe.runtime import (
    HASHED_FILES,
    RunReport,
    attach_decision,
    audit_redaction,
    compute_content_hash,
    compute_timing,
    load_run,
    load_run_decision,
    run_pipeline,
    verify_run_dir,
)


def mock_cfg(store_root, **kw):
    defaults = dict(corpus=CorpusSource(kind="bundled"),
                    backend=BackendConfig(kind="mock"),
                    store_root=str(store_root))
    defaults.update(kw)
    return RunConfig(**defaults)


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    store = tmp_path_factory.mktemp("store")
    cfg = mock_cfg(store)
    report = run_pipeline(cfg)
    return cfg, report, Path(store) / report.run_id


class TestRunConfig:
    def test_round_trip(self):
        cfg = mock_cfg("runs", seed=7, top_k=5,
                       criteria=DecisionCriteria(hires=3, role_description="dba"))
        assert RunConfig.from_json(cfg.to_json()) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            RunConfig.from_json({"seeed": 42})

    def test_load_config_from_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"seed": 9, "top_k": 3}), encoding="utf-8")
        cfg = load_config(path)
        assert cfg.seed == 9 and cfg.top_k == 3

    def test_load_config_missing_or_broken(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{nope", encoding="utf-8")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(bad)

    @pytest.mark.parametrize("patch,needle", [
        (dict(corpus=CorpusSource(kind="tar", path="x")), "corpus kind"),
        (dict(corpus=CorpusSource(kind="dir", path="/no/such/dir")), "not found"),
        (dict(top_k=0), "top_k"),
        (dict(token_limit=0), "token_limit"),
        (dict(token_estimator="bytes"), "estimator"),
        (dict(decision_mode="vote"), "decision_mode"),
        (dict(templates={"rank": "x"}), "unknown stage"),
        (dict(backend_overrides={"rank": BackendConfig()}), "unknown stage"),
        (dict(wpm=0), "wpm"),
        (dict(manual_decision_minutes=-1), "manual_decision_minutes"),
    ])
    def test_validate_rejects(self, patch, needle):
        cfg = mock_cfg("runs")
        for key, value in patch.items():
            setattr(cfg, key, value)
        with pytest.raises(ConfigError, match=needle):
            cfg.validate()

    def test_config_hash_tracks_content(self):
        a = mock_cfg("runs")
        b = mock_cfg("runs")
        assert config_hash(a) == config_hash(b)
        b.seed = 43
        assert config_hash(a) != config_hash(b)

    def test_run_id_format(self):
        cfg = mock_cfg("runs")
        rid = new_run_id(cfg, now=datetime(2025, 3, 1, 12, 0, 0, 123456))
        assert re.fullmatch(r"20250301T120000\.123456-[0-9a-f]{8}", rid)
        assert rid.endswith(config_hash(cfg)[:8])


class TestPipelineRun:
    def test_status_and_counts(self, finished_run):
        _, report, _ = finished_run
        assert report.status == "ok"
        c = report.counts
        assert c["ingested"] == 20 and c["kept"] == 20 and c["excluded"] == 0
        assert c["sentences"] == 173
        assert c["fully_redacted"] == 1
        assert c["assessed"] == c["kept"] - c["fully_redacted"]
        assert c["redacted_sentences"] > 0
        assert c["kept_word_count"] > 0

    def test_artifacts_on_disk(self, finished_run):
        _, _, run_dir = finished_run
        expected = {"config.snapshot.json", "records.jsonl", "excluded.jsonl",
                    "classified.jsonl", "assessments.jsonl", "shortlist.json",
                    "decision.json", "decision_core.json", "timing.json",
                    "run_report.json", "manifest.json", "transcript.jsonl",
                    "prompts.jsonl"}
        assert expected <= {p.name for p in run_dir.iterdir()}

    def test_shortlist_ordering(self, finished_run):
        cfg, report, _ = finished_run
        assert len(report.shortlist) == cfg.top_k
        grades = [c["grade"] for c in report.shortlist]
        assert grades == sorted(grades, reverse=True)

    def test_auto_decision_recorded(self, finished_run):
        cfg, report, run_dir = finished_run
        assert report.decision is not None
        assert report.decision["mode"] == "auto"
        assert len(report.decision["selected_ids"]) == cfg.criteria.hires
        assert report.decision["selected_ids"][0] == report.shortlist[0]["id"]
        stored = load_run_decision(run_dir)
        assert stored.selected_ids == report.decision["selected_ids"]

    def test_prompt_log_has_only_post_redaction_stages(self, finished_run):
        _, _, run_dir = finished_run
        tags = set()
        with (run_dir / "prompts.jsonl").open(encoding="utf-8") as fh:
            for line in fh:
                tags.add(json.loads(line)["tag"])
        assert tags == {"assess", "decide"}

    def test_verify_and_load_round_trip(self, finished_run):
        cfg, report, run_dir = finished_run
        verify_run_dir(run_dir)
        loaded = load_run(report.run_id, cfg.store_root)
        assert loaded.run_id == report.run_id
        assert loaded.counts == report.counts
        assert loaded.content_hash == report.content_hash

    def test_redaction_audit_is_clean(self, finished_run):
        _, _, run_dir = finished_run
        assert audit_redaction(run_dir) == []

    def test_repeat_runs_reproduce_content_hash(self, tmp_path):
        cfg = mock_cfg(tmp_path / "store")
        hashes = {run_pipeline(cfg).content_hash for _ in range(3)}
        assert len(hashes) == 1

    def test_failed_stage_leaves_loadable_run(self, tmp_path):
        corpus = tmp_path / "corpus"
        corpus.mkdir()
        (corpus / "contact_only.txt").write_text(
            "Pat Smith | pat@mail.example | +1 555 010 0000\n"
            "Phone: (555) 010-0000\n", encoding="utf-8")
        cfg = mock_cfg(tmp_path / "store",
                       corpus=CorpusSource(kind="dir", path=str(corpus)))
        with pytest.raises(StageError) as exc:
            run_pipeline(cfg)
        assert exc.value.stage == "assess"
        run_dir = next((tmp_path / "store").iterdir())
        verify_run_dir(run_dir)
        report = load_run(run_dir.name, cfg.store_root)
        assert report.status == "failed:assess"
        assert (run_dir / "classified.jsonl").is_file()
        assert not (run_dir / "assessments.jsonl").exists()


class TestRunStore:
    @pytest.fixture
    def run_copy(self, finished_run, tmp_path):
        _, report, run_dir = finished_run
        copy = tmp_path / "store" / report.run_id
        shutil.copytree(run_dir, copy)
        return copy

    def test_tampered_file_detected(self, run_copy):
        (run_copy / "records.jsonl").write_text("tampered\n", encoding="utf-8")
        with pytest.raises(IntegrityError, match="modified: records.jsonl"):
            verify_run_dir(run_copy)

    def test_missing_file_detected(self, run_copy):
        (run_copy / "shortlist.json").unlink()
        with pytest.raises(IntegrityError, match="missing: shortlist.json"):
            verify_run_dir(run_copy)

    def test_no_manifest_detected(self, run_copy):
        (run_copy / "manifest.json").unlink()
        with pytest.raises(IntegrityError, match="no manifest"):
            verify_run_dir(run_copy)

    def test_wall_clock_files_stay_outside_content_hash(self, run_copy):
        before = compute_content_hash(run_copy)
        (run_copy / "timing.json").write_text("{}\n", encoding="utf-8")
        assert compute_content_hash(run_copy) == before
        assert "timing.json" not in HASHED_FILES

    def test_attach_decision_reseals(self, run_copy):
        old_hash = compute_content_hash(run_copy)
        shortlist = json.loads((run_copy / "shortlist.json").read_text())
        decision = DecisionRecord(
            run_id=run_copy.name,
            selected_ids=[shortlist[1]["id"]],
            rationale="Second candidate fits the brief better.",
            mode="manual", decider="reviewer",
            criteria=DecisionCriteria(hires=1, role_description="swe"))
        report = attach_decision(run_copy, decision)
        assert report.decision["mode"] == "manual"
        assert report.content_hash != old_hash
        verify_run_dir(run_copy)
        assert load_run_decision(run_copy).decider == "reviewer"

    def test_planted_leak_is_caught(self, run_copy):
        classified = (run_copy / "classified.jsonl").read_text(encoding="utf-8")
        pi_text = next(json.loads(line)["text"]
                       for line in classified.splitlines()
                       if json.loads(line)["label"] == "personal information")
        with (run_copy / "prompts.jsonl").open("a", encoding="utf-8") as fh:
            fh.write(json.dumps({"tag": "assess", "request_hash": "x",
                                 "system": "", "user": f"Resume:\n{pi_text}",
                                 "response": "ok"}) + "\n")
        hits = audit_redaction(run_copy)
        assert hits and hits[0]["text"] == pi_text
        assert hits[0]["location"].startswith("prompts.jsonl")

    def test_leak_in_summary_is_caught(self, run_copy):
        classified = (run_copy / "classified.jsonl").read_text(encoding="utf-8")
        pi_text = next(json.loads(line)["text"]
                       for line in classified.splitlines()
                       if json.loads(line)["label"] == "personal information")
        assessments = (run_copy / "assessments.jsonl").read_text(encoding="utf-8")
        rows = [json.loads(line) for line in assessments.splitlines()]
        rows[0]["summary"] = f"Reach them at {pi_text} for details."
        (run_copy / "assessments.jsonl").write_text(
            "\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
        hits = audit_redaction(run_copy)
        assert any(h["location"].startswith("assessments.jsonl") for h in hits)


class TestTiming:
    STAGES = [
        {"stage": "ingest", "wall_ms": 1000, "items": 5, "llm_ms_total": 0},
        {"stage": "assess", "wall_ms": 2000, "items": 5, "llm_ms_total": 1500},
        {"stage": "decide", "wall_ms": 3000, "items": 1, "llm_ms_total": 2500},
    ]

    def test_ledger_totals(self):
        ledger = compute_timing(self.STAGES, kept_word_count=23800, wpm=238)
        assert ledger["total_wall_ms"] == 6000
        assert ledger["total_llm_ms"] == 4000
        assert ledger["manual_estimate_min"] == pytest.approx(100.0)
        assert ledger["wpm"] == 238

    def test_auto_speedup_uses_total_wall(self):
        ledger = compute_timing(self.STAGES, kept_word_count=23800, wpm=238)
        # 6000 ms of wall clock is 0.1 min against a 100 min manual estimate
        assert ledger["speedups"]["auto"]["raw"] == pytest.approx(1000.0)
        assert ledger["speedups"]["auto"]["reported"] == 1000

    def test_semi_auto_swaps_decide_wall_for_human_budget(self):
        ledger = compute_timing(self.STAGES, kept_word_count=23800, wpm=238,
                                manual_decision_minutes=22.0)
        semi = ledger["speedups"]["semi_auto"]
        expected = 100.0 / ((6000 - 3000) / 60000.0 + 22.0)
        assert semi["raw"] == pytest.approx(expected)
        assert ledger["speedups"]["manual_decision_minutes"] == 22.0

    def test_zero_duration_run(self):
        stages = [{"stage": "ingest", "wall_ms": 0, "items": 0, "llm_ms_total": 0}]
        ledger = compute_timing(stages, kept_word_count=0, wpm=238,
                                manual_decision_minutes=0.0)
        assert "note" in ledger["speedups"]


class TestRunReport:
    def test_json_round_trip(self):
        report = RunReport(run_id="r1", counts={"kept": 2},
                           shortlist=[{"id": "a", "grade": 90, "summary": "s"}],
                           timing={"total_wall_ms": 10}, content_hash="abc")
        again = RunReport.from_json(report.to_json())
        assert again == report
