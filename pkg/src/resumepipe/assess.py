"""Grading and summarization stage.

One backend call per redacted resume asks for a grade in the fixed
"Grade: XX/100" format plus a short summary. Malformed grades are recorded
as numeric zero rather than retried, so backend misbehavior stays visible
in the error ledger.
"""

from __future__ import annotations

import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .backend import ChatClient, ChatRequest
from .classify import RedactedResume
from .errors import StageError
from .prompts import DEFAULT_SUMMARY_WORD_LIMIT, PromptTemplate, load_stage_template

log = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_GRADE_MALFORMED = "grade_malformed"
STATUS_SUMMARY_MISSING = "summary_missing"

REASON_NON_NUMERIC = "non_numeric"
REASON_OUT_OF_RANGE = "out_of_range"
REASON_MISSING = "missing"


@dataclass(frozen=True)
class GradeValue:
    """Either a valid integer score or a malformed raw excerpt.

    Malformed grades coerce to numeric 0 everywhere a number is needed.
    """

    score: int | None = None
    raw: str = ""
    reason: str = ""  # empty for valid grades
    note: str = ""    # e.g. fractional input floored

    @classmethod
    def valid(cls, score: int, note: str = "") -> "GradeValue":
        if not 0 <= score <= 100:
            raise ValueError(f"valid grade out of range: {score}")
        return cls(score=score, note=note)

    @classmethod
    def malformed(cls, raw: str, reason: str) -> "GradeValue":
        return cls(score=None, raw=raw, reason=reason)

    @property
    def is_valid(self) -> bool:
        return self.score is not None

    @property
    def numeric(self) -> int:
        return self.score if self.score is not None else 0


@dataclass
class AgentAssessment:
    resume_id: str
    grade: GradeValue
    summary: str
    raw_output: str = ""
    parse_status: str = STATUS_OK
    latency_ms: int = 0
    backend_name: str = ""
    over_limit: bool = False

    @property
    def summary_word_count(self) -> int:
        return len(self.summary.split())

    def to_json(self) -> dict:
        return {
            "id": self.resume_id,
            "grade": self.grade.numeric,
            "grade_status": "valid" if self.grade.is_valid else self.grade.reason,
            "summary": self.summary,
            "latency_ms": self.latency_ms,
            "backend": self.backend_name,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AgentAssessment":
        status = obj.get("grade_status", "valid")
        if status == "valid":
            grade = GradeValue.valid(int(obj["grade"]))
            parse_status = STATUS_OK
        else:
            grade = GradeValue.malformed(raw="", reason=status)
            parse_status = STATUS_GRADE_MALFORMED
        return cls(resume_id=str(obj["id"]), grade=grade,
                   summary=obj.get("summary", ""), parse_status=parse_status,
                   latency_ms=int(obj.get("latency_ms", 0)),
                   backend_name=obj.get("backend", ""))


# ---------------------------------------------------------------------------
# Prompt building
# ---------------------------------------------------------------------------

def build_assessment_prompt(resume: RedactedResume,
                            template: PromptTemplate | None = None,
                            word_limit: int = DEFAULT_SUMMARY_WORD_LIMIT) -> str:
    if not resume.retained:
        raise StageError("assess", f"resume {resume.resume_id}: no content to assess")
    template = template or load_stage_template("assess")
    template.require_slots("resume", "word_limit")
    return template.render(resume=resume.text(), word_limit=word_limit)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_GRADE_MARKER_RE = re.compile(r"\bgrade\s*:", re.I)
_GRADE_VALUE_RE = re.compile(r"\s*(-?\d+(?:\.\d+)?)\s*(?:/\s*100)?")
_SUMMARY_MARKER_RE = re.compile(r"\bsummary\s*:", re.I)


def _parse_grade(raw: str) -> tuple[GradeValue, int]:
    """Return the grade plus the offset where the grade line ends."""
    marker = _GRADE_MARKER_RE.search(raw)
    if marker is None:
        return GradeValue.malformed(raw="", reason=REASON_MISSING), 0
    line_end = raw.find("\n", marker.end())
    if line_end < 0:
        line_end = len(raw)
    m = _GRADE_VALUE_RE.match(raw, marker.end())
    if m is None or not m.group(1):
        excerpt = raw[marker.end():line_end].strip()
        return GradeValue.malformed(raw=excerpt, reason=REASON_NON_NUMERIC), line_end
    value = float(m.group(1))
    if not 0 <= value <= 100:
        return GradeValue.malformed(raw=m.group(1), reason=REASON_OUT_OF_RANGE), line_end
    note = ""
    if value != int(value):
        note = "fractional_floored"
        log.warning("fractional grade %s floored", m.group(1))
    return GradeValue.valid(math.floor(value), note=note), line_end


def _parse_summary(raw: str, grade_line_end: int) -> str | None:
    m = _SUMMARY_MARKER_RE.search(raw)
    if m is not None:
        return raw[m.end():].strip()
    # No explicit marker: take the first paragraph after the grade line.
    tail = raw[grade_line_end:].strip()
    if not tail:
        return None
    return tail.split("\n\n", 1)[0].strip()


def parse_assessment(raw: str) -> tuple[GradeValue, str, str]:
    """Split model output into (grade, summary, parse_status). Total function."""
    grade, line_end = _parse_grade(raw)
    summary = _parse_summary(raw, line_end)
    if not grade.is_valid:
        status = STATUS_GRADE_MALFORMED
    elif summary is None:
        status = STATUS_SUMMARY_MISSING
    else:
        status = STATUS_OK
    return grade, summary or "", status


# ---------------------------------------------------------------------------
# Stage execution
# ---------------------------------------------------------------------------

def assess_resume(resume: RedactedResume, client: ChatClient,
                  template: PromptTemplate | None = None,
                  word_limit: int = DEFAULT_SUMMARY_WORD_LIMIT,
                  max_new_tokens: int = 200,
                  sampling: bool = True) -> AgentAssessment:
    """One grading call for one resume. Transport errors retry inside the
    client; a malformed grade is recorded as-is and never retried."""
    if not resume.retained:
        raise StageError("assess", f"resume {resume.resume_id}: no content to assess")
    template = template or load_stage_template("assess")
    system, user = template.render_parts(resume=resume.text(), word_limit=word_limit)
    req = ChatRequest(system_text=system, user_text=user,
                      max_new_tokens=max_new_tokens, sampling=sampling,
                      request_tag="assess")
    resp = client.complete(req)
    grade, summary, status = parse_assessment(resp.text)
    return AgentAssessment(resume_id=resume.resume_id, grade=grade,
                           summary=summary, raw_output=resp.text,
                           parse_status=status, latency_ms=resp.latency_ms,
                           backend_name=resp.backend_name)


def assess_corpus(resumes: Sequence[RedactedResume], client: ChatClient,
                  template: PromptTemplate | None = None,
                  word_limit: int = DEFAULT_SUMMARY_WORD_LIMIT,
                  max_new_tokens: int = 200,
                  sampling: bool = True,
                  truncate_mode: bool = False) -> list[AgentAssessment]:
    """Assess every resume, concurrently up to the backend in-flight limit."""
    template = template or load_stage_template("assess")

    def one(resume: RedactedResume) -> AgentAssessment:
        a = assess_resume(resume, client, template, word_limit,
                          max_new_tokens, sampling)
        return check_summary_limit(a, word_limit, truncate=truncate_mode)

    items = list(resumes)
    workers = max(1, min(client.config.max_in_flight, len(items) or 1))
    if workers == 1 or len(items) <= 1:
        return [one(r) for r in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, items))


_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


def check_summary_limit(assessment: AgentAssessment,
                        limit: int = DEFAULT_SUMMARY_WORD_LIMIT,
                        truncate: bool = False) -> AgentAssessment:
    """Flag summaries longer than the word limit; optionally truncate.

    Truncation keeps whole sentences while they fit the budget, so the
    result ends at a sentence boundary. The default mode never edits text.
    """
    words = assessment.summary.split()
    if len(words) <= limit:
        return assessment
    if not truncate:
        return replace(assessment, over_limit=True)
    sentences = _SENTENCE_SPLIT_RE.split(assessment.summary)
    kept: list[str] = []
    used = 0
    for s in sentences:
        n = len(s.split())
        if used + n > limit:
            break
        kept.append(s)
        used += n
    truncated = " ".join(kept) if kept else " ".join(words[:limit])
    return replace(assessment, summary=truncated, over_limit=True)


def grade_error_ledger(assessments: Sequence[AgentAssessment]) -> dict:
    """Count malformed grades and partition them by failure reason."""
    by_reason: dict[str, int] = {}
    for a in assessments:
        if not a.grade.is_valid:
            by_reason[a.grade.reason] = by_reason.get(a.grade.reason, 0) + 1
    return {"total_errors": sum(by_reason.values()), "by_reason": by_reason}


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def write_assessments(assessments: Sequence[AgentAssessment], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for a in assessments:
            fh.write(json.dumps(a.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def read_assessments(path: str | Path) -> list[AgentAssessment]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(AgentAssessment.from_json(json.loads(line)))
    return out
