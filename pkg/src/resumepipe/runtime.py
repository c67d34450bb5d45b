"""Pipeline orchestration: run the stages in order, persist every artifact,
measure timing, and keep runs reproducible.

A run directory is append-only while the run executes and sealed with a
manifest at the end. The content hash covers only deterministic artifacts,
so re-running the same config against the mock backend must reproduce it
byte for byte; wall-clock measurements live in files outside the hash.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import metrics
from .assess import (AgentAssessment, assess_corpus, grade_error_ledger,
                     read_assessments, write_assessments)
from .backend import ChatClient
from .classify import (PERSONAL_INFORMATION, ClassifiedSentence, classify_resume,
                       eval_classification, read_classified, read_gold_labels,
                       redact, write_classified)
from .config import RunConfig, config_hash, new_run_id
from .decide import (DecisionRecord, decide_auto, rank_candidates, read_decision,
                     take_top_k, write_decision)
from .errors import IntegrityError, StageError
from .ingest import (filter_corpus, ingest_documents, load_bundled_corpus,
                     load_corpus_dir, load_corpus_jsonl, read_records,
                     write_records)
from .prompts import load_stage_template

log = logging.getLogger(__name__)

SNAPSHOT_FILE = "config.snapshot.json"
MANIFEST_FILE = "manifest.json"
REPORT_FILE = "run_report.json"

# Only byte-stable artifacts participate in the content hash; anything
# carrying wall-clock or per-run identifiers stays out.
HASHED_FILES = (
    SNAPSHOT_FILE,
    "records.jsonl",
    "excluded.jsonl",
    "classified.jsonl",
    "assessments.jsonl",
    "shortlist.json",
    "decision_core.json",
    "metrics.json",
)


@dataclass
class RunReport:
    run_id: str
    status: str = "ok"
    config: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    error_ledger: dict = field(default_factory=dict)
    shortlist: list = field(default_factory=list)
    decision: dict | None = None
    metrics: dict | None = None
    timing: dict = field(default_factory=dict)
    content_hash: str = ""

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "status": self.status,
            "config": self.config,
            "counts": self.counts,
            "error_ledger": self.error_ledger,
            "shortlist": self.shortlist,
            "decision": self.decision,
            "metrics": self.metrics,
            "timing": self.timing,
            "content_hash": self.content_hash,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RunReport":
        return cls(run_id=obj["run_id"], status=obj.get("status", "ok"),
                   config=obj.get("config", {}), counts=obj.get("counts", {}),
                   error_ledger=obj.get("error_ledger", {}),
                   shortlist=obj.get("shortlist", []),
                   decision=obj.get("decision"), metrics=obj.get("metrics"),
                   timing=obj.get("timing", {}),
                   content_hash=obj.get("content_hash", ""))


# ---------------------------------------------------------------------------
# Timing
# ---------------------------------------------------------------------------

def compute_timing(stages: list[dict], kept_word_count: int, wpm: int = 238,
                   manual_decision_minutes: float = 22.0) -> dict:
    """Aggregate stage timings into the ledger with the manual baseline.

    The automatic speedup compares total automated wall time to a human
    reading the kept corpus; the semi-automatic variant swaps the decision
    stage's wall time for a configured human decision budget.
    """
    total_wall_ms = sum(s["wall_ms"] for s in stages)
    total_llm_ms = sum(s.get("llm_ms_total", 0) for s in stages)
    manual_min = metrics.manual_time_estimate(kept_word_count, wpm)
    ledger = {
        "stages": stages,
        "total_wall_ms": total_wall_ms,
        "total_llm_ms": total_llm_ms,
        "manual_estimate_min": manual_min,
        "wpm": wpm,
    }
    auto_min = total_wall_ms / 60000.0
    decide_ms = sum(s["wall_ms"] for s in stages if s["stage"] == "decide")
    semi_min = (total_wall_ms - decide_ms) / 60000.0 + manual_decision_minutes
    if auto_min <= 0 or semi_min <= 0:
        ledger["speedups"] = {"note": "zero-duration run, speedups undefined"}
    else:
        ledger["speedups"] = {
            "auto": metrics.speedup_multiple(manual_min, auto_min),
            "semi_auto": metrics.speedup_multiple(manual_min, semi_min),
            "manual_decision_minutes": manual_decision_minutes,
        }
    return ledger


class _StageTimer:
    def __init__(self) -> None:
        self.stages: list[dict] = []

    def run(self, name: str):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.started = time.monotonic()
                self.items = 0
                self.llm_ms = 0
                return self

            def __exit__(self, exc_type, exc, tb):
                timer.stages.append({
                    "stage": name,
                    "wall_ms": int((time.monotonic() - self.started) * 1000),
                    "items": self.items,
                    "llm_ms_total": self.llm_ms,
                })
                return False

        return _Ctx()


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

def _load_docs(cfg: RunConfig):
    if cfg.corpus.kind == "bundled":
        return load_bundled_corpus()
    if cfg.corpus.kind == "dir":
        return load_corpus_dir(cfg.corpus.path)
    return load_corpus_jsonl(cfg.corpus.path)


def _build_clients(cfg: RunConfig, run_dir: Path) -> dict[str, ChatClient]:
    clients: dict[str, ChatClient] = {}
    shared: dict[str, ChatClient] = {}
    for stage in ("classify", "assess", "decide"):
        bc = cfg.backend_for(stage)
        key = json.dumps(bc.to_json(), sort_keys=True)
        if key not in shared:
            shared[key] = ChatClient(bc, transcript_path=run_dir / "transcript.jsonl")
        clients[stage] = shared[key]
    return clients


def _llm_ms(clients: dict[str, ChatClient], tag: str) -> int:
    total = 0
    seen: set[int] = set()
    for client in clients.values():
        if id(client) in seen:
            continue
        seen.add(id(client))
        total += sum(e["latency_ms"] for e in client.call_log if e["tag"] == tag)
    return total


def _write_prompt_log(clients: dict[str, ChatClient], run_dir: Path) -> None:
    """Persist full prompt/response pairs of the stages that must never see
    personal information, for the redaction audit."""
    entries = []
    seen: set[int] = set()
    for client in clients.values():
        if id(client) in seen:
            continue
        seen.add(id(client))
        for e in client.call_log:
            if e["tag"] in ("assess", "decide"):
                entries.append({"tag": e["tag"], "request_hash": e["request_hash"],
                                "system": e["system"], "user": e["user"],
                                "response": e["response"]})
    with (run_dir / "prompts.jsonl").open("w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps(e, ensure_ascii=False, sort_keys=True) + "\n")


def decision_core(record: DecisionRecord) -> dict:
    """The reproducible part of a decision: everything except run identity
    and wall-clock timestamp."""
    return {
        "selected_ids": list(record.selected_ids),
        "rationale": record.rationale,
        "mode": record.mode,
        "decider": record.decider,
        "criteria": record.criteria.to_json(),
    }


def run_pipeline(cfg: RunConfig, run_id: str | None = None,
                 clients: dict[str, ChatClient] | None = None) -> RunReport:
    """Execute ingest, classify, assess, decide and evaluate with barriers.

    Stage outputs are persisted as each stage completes; a stage abort still
    leaves a loadable partial run with status "failed:<stage>".
    """
    cfg.validate()
    run_id = run_id or new_run_id(cfg)
    run_dir = Path(cfg.store_root) / run_id
    run_dir.mkdir(parents=True, exist_ok=False)
    (run_dir / SNAPSHOT_FILE).write_text(
        json.dumps(cfg.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    clients = clients or _build_clients(cfg, run_dir)
    report = RunReport(run_id=run_id, config=cfg.to_json())
    timer = _StageTimer()
    kept_word_count = 0

    try:
        with timer.run("ingest") as t:
            docs = _load_docs(cfg)
            records = ingest_documents(docs, cfg.token_estimator)
            kept, excluded = filter_corpus(records, cfg.token_limit)
            write_records(kept, run_dir / "records.jsonl")
            write_records(excluded, run_dir / "excluded.jsonl")
            kept_word_count = sum(r.word_count for r in kept)
            report.counts.update(ingested=len(records), kept=len(kept),
                                 excluded=len(excluded),
                                 kept_word_count=kept_word_count)
            t.items = len(records)

        with timer.run("classify") as t:
            template = load_stage_template("classify", cfg.templates.get("classify"))
            classified: list[ClassifiedSentence] = []
            redacted = []
            for record in kept:
                sentences = classify_resume(record, clients["classify"], template)
                classified.extend(sentences)
                redacted.append(redact(sentences))
            write_classified(classified, run_dir / "classified.jsonl")
            fully_redacted = [r.resume_id for r in redacted if r.fully_redacted]
            report.counts.update(
                sentences=len(classified),
                redacted_sentences=sum(r.redacted_count for r in redacted),
                fully_redacted=len(fully_redacted))
            t.items = len(classified)
            t.llm_ms = _llm_ms(clients, "classify")

        with timer.run("assess") as t:
            template = load_stage_template("assess", cfg.templates.get("assess"))
            assessable = [r for r in redacted if r.retained]
            for rid in fully_redacted:
                log.warning("resume %s skipped by assess: fully redacted", rid)
            if not assessable:
                raise StageError("assess",
                                 "every resume was fully redacted; nothing left "
                                 "to grade")
            assessments = assess_corpus(
                assessable, clients["assess"], template,
                word_limit=cfg.summary_word_limit,
                max_new_tokens=cfg.max_new_tokens, sampling=cfg.sampling,
                truncate_mode=cfg.truncate_summaries)
            write_assessments(assessments, run_dir / "assessments.jsonl")
            report.error_ledger = grade_error_ledger(assessments)
            report.counts["assessed"] = len(assessments)
            t.items = len(assessments)
            t.llm_ms = _llm_ms(clients, "assess")

        with timer.run("decide") as t:
            ranked = rank_candidates(assessments)
            shortlist = take_top_k(ranked, cfg.top_k)
            report.shortlist = [{"id": c.resume_id, "grade": c.grade_numeric,
                                 "summary": c.summary} for c in shortlist]
            (run_dir / "shortlist.json").write_text(
                json.dumps(report.shortlist, ensure_ascii=False, indent=2,
                           sort_keys=True) + "\n", encoding="utf-8")
            if cfg.decision_mode == "auto":
                template = load_stage_template("decide", cfg.templates.get("decide"))
                decision = decide_auto(shortlist, cfg.criteria, clients["decide"],
                                       template, run_id=run_id,
                                       max_new_tokens=cfg.max_new_tokens)
                _persist_decision(run_dir, decision)
                report.decision = decision.to_json()
                t.items = 1
            t.llm_ms = _llm_ms(clients, "decide")

        with timer.run("evaluate") as t:
            evaluation = _evaluate(cfg, run_dir, classified, assessments)
            if evaluation is not None:
                report.metrics = evaluation
                t.items = evaluation.get("summary_metrics", {}).get("n", 0)
    except StageError as exc:
        report.status = f"failed:{exc.stage}"
        log.error("run %s aborted in stage %s: %s", run_id, exc.stage, exc)
        _finalize(cfg, run_dir, report, timer, clients, kept_word_count)
        raise

    _finalize(cfg, run_dir, report, timer, clients, kept_word_count)
    return report


def _persist_decision(run_dir: Path, decision: DecisionRecord) -> None:
    write_decision(decision, run_dir / "decision.json")
    (run_dir / "decision_core.json").write_text(
        json.dumps(decision_core(decision), ensure_ascii=False, indent=2,
                   sort_keys=True) + "\n", encoding="utf-8")


def _evaluate(cfg: RunConfig, run_dir: Path,
              classified: list[ClassifiedSentence],
              assessments: list[AgentAssessment]) -> dict | None:
    out: dict = {}
    if cfg.gold_assessments:
        gold = {a.resume_id: a for a in read_assessments(cfg.gold_assessments)}
        common = [a for a in assessments if a.resume_id in gold]
        if common:
            pairs = [(a.summary, gold[a.resume_id].summary) for a in common]
            grades = [(a.grade.numeric, gold[a.resume_id].grade.numeric)
                      for a in common]
            summary_report = metrics.evaluate_pairs(pairs, grades,
                                                    smoothing=cfg.bleu_smoothing)
            ranks = metrics.rank_stats([g for g, _ in grades],
                                       [g for _, g in grades],
                                       [a.resume_id for a in common],
                                       k=cfg.top_k)
            out["summary_metrics"] = summary_report.to_json()
            out["rank_stats"] = ranks.to_json()
    if cfg.gold_labels:
        gold_labels = read_gold_labels(cfg.gold_labels)
        pred, gold_seq = [], []
        for s in classified:
            key = (s.resume_id, s.segment_index)
            if key in gold_labels:
                pred.append(s.label)
                gold_seq.append(gold_labels[key])
        if pred:
            out["label_f1"] = eval_classification(pred, gold_seq).to_json()
    if not out:
        return None
    (run_dir / "metrics.json").write_text(
        json.dumps(out, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    return out


def _finalize(cfg: RunConfig, run_dir: Path, report: RunReport,
              timer: _StageTimer, clients: dict[str, ChatClient],
              kept_word_count: int) -> None:
    _write_prompt_log(clients, run_dir)
    report.timing = compute_timing(timer.stages, kept_word_count, cfg.wpm,
                                   cfg.manual_decision_minutes)
    (run_dir / "timing.json").write_text(
        json.dumps(report.timing, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    report.content_hash = compute_content_hash(run_dir)
    (run_dir / REPORT_FILE).write_text(
        json.dumps(report.to_json(), ensure_ascii=False, indent=2,
                   sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(run_dir)


# ---------------------------------------------------------------------------
# Run store
# ---------------------------------------------------------------------------

def compute_content_hash(run_dir: Path) -> str:
    h = hashlib.sha256()
    for name in HASHED_FILES:
        p = run_dir / name
        if p.is_file():
            h.update(name.encode("utf-8"))
            h.update(b"\0")
            h.update(p.read_bytes())
            h.update(b"\0")
    return h.hexdigest()


def write_manifest(run_dir: Path) -> None:
    entries = {}
    for p in sorted(run_dir.iterdir()):
        if p.is_file() and p.name != MANIFEST_FILE:
            entries[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    (run_dir / MANIFEST_FILE).write_text(
        json.dumps(entries, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def verify_run_dir(run_dir: Path) -> None:
    manifest_path = run_dir / MANIFEST_FILE
    if not run_dir.is_dir():
        raise IntegrityError(f"run directory not found: {run_dir}")
    if not manifest_path.is_file():
        raise IntegrityError(f"run {run_dir.name} has no manifest")
    entries = json.loads(manifest_path.read_text(encoding="utf-8"))
    problems = []
    for name, digest in entries.items():
        p = run_dir / name
        if not p.is_file():
            problems.append(f"missing: {name}")
        elif hashlib.sha256(p.read_bytes()).hexdigest() != digest:
            problems.append(f"modified: {name}")
    if problems:
        raise IntegrityError(
            f"run {run_dir.name} failed verification: {'; '.join(problems)}")


def load_run(run_id: str, store_root: str | Path = "runs") -> RunReport:
    run_dir = Path(store_root) / run_id
    verify_run_dir(run_dir)
    report_path = run_dir / REPORT_FILE
    if not report_path.is_file():
        raise IntegrityError(f"run {run_id} has no report file")
    return RunReport.from_json(json.loads(report_path.read_text(encoding="utf-8")))


def attach_decision(run_dir: Path, decision: DecisionRecord) -> RunReport:
    """Store a decision made after the pipeline finished (manual mode or a
    re-decision) and re-seal the run directory."""
    report = RunReport.from_json(
        json.loads((run_dir / REPORT_FILE).read_text(encoding="utf-8")))
    _persist_decision(run_dir, decision)
    report.decision = decision.to_json()
    report.content_hash = compute_content_hash(run_dir)
    (run_dir / REPORT_FILE).write_text(
        json.dumps(report.to_json(), ensure_ascii=False, indent=2,
                   sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(run_dir)
    return report


def load_run_decision(run_dir: Path) -> DecisionRecord | None:
    path = run_dir / "decision.json"
    if not path.is_file():
        return None
    return read_decision(path)


# ---------------------------------------------------------------------------
# Redaction audit
# ---------------------------------------------------------------------------

def audit_redaction(run_dir: Path) -> list[dict]:
    """Search every persisted downstream prompt, response and summary for
    personal-information sentence text. An empty result means the redaction
    guarantee held for this run."""
    classified = read_classified(run_dir / "classified.jsonl")
    pi_texts = [s.text for s in classified
                if s.label == PERSONAL_INFORMATION and s.text.strip()]
    hits: list[dict] = []

    def scan(text: str, location: str) -> None:
        for pi in pi_texts:
            if pi in text:
                hits.append({"text": pi, "location": location})

    prompts_path = run_dir / "prompts.jsonl"
    if prompts_path.is_file():
        with prompts_path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                e = json.loads(line)
                for part in ("system", "user", "response"):
                    scan(e.get(part, ""), f"prompts.jsonl:{lineno}:{part}")
    assess_path = run_dir / "assessments.jsonl"
    if assess_path.is_file():
        for a in read_assessments(assess_path):
            scan(a.summary, f"assessments.jsonl:{a.resume_id}:summary")
    decision_path = run_dir / "decision.json"
    if decision_path.is_file():
        scan(read_decision(decision_path).rationale, "decision.json:rationale")
    return hits


__all__ = [
    "RunReport", "run_pipeline", "compute_timing", "load_run", "verify_run_dir",
    "attach_decision", "load_run_decision", "audit_redaction",
    "compute_content_hash", "write_manifest", "decision_core", "config_hash",
    "read_records", "HASHED_FILES",
]
