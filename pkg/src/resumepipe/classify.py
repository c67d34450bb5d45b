"""Sentence classification stage.

Each resume sentence gets exactly one of seven labels, through a prompted
backend call with a rule cascade as offline fallback. Personal information
is then redacted so later stages never see it.
"""

from __future__ import annotations

import json
import logging
import math
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .backend import ChatClient, ChatRequest
from .errors import ContractViolation, RetriesExhausted, StageError, TransportError
from .prompts import PromptTemplate, load_stage_template

log = logging.getLogger(__name__)

PERSONAL_INFORMATION = "personal information"
EXPERIENCE = "experience"
SUMMARY = "summary"
EDUCATION = "education"
QUALIFICATION_CERTIFICATION = "qualification certification"
SKILL = "skill"
OBJECTIVE = "objective"

LABELS = (
    PERSONAL_INFORMATION,
    EXPERIENCE,
    SUMMARY,
    EDUCATION,
    QUALIFICATION_CERTIFICATION,
    SKILL,
    OBJECTIVE,
)

LABEL_SET = frozenset(LABELS)

SOURCES = ("llm", "heuristic", "gold")


@dataclass(frozen=True)
class ParseFailure:
    raw: str
    reason: str = "no_label"


@dataclass
class ClassifiedSentence:
    resume_id: str
    segment_index: int
    text: str
    label: str
    source: str = "llm"
    raw_answer: str = ""

    def __post_init__(self) -> None:
        if self.label not in LABEL_SET:
            raise ContractViolation(f"unknown label {self.label!r}")
        if self.source not in SOURCES:
            raise ContractViolation(f"unknown source {self.source!r}")
        if self.segment_index < 0:
            raise ContractViolation(f"negative segment index {self.segment_index}")

    def to_json(self) -> dict:
        return {
            "id": self.resume_id,
            "segment_index": self.segment_index,
            "text": self.text,
            "label": self.label,
            "source": self.source,
            "raw_answer": self.raw_answer,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ClassifiedSentence":
        return cls(resume_id=obj["id"], segment_index=int(obj["segment_index"]),
                   text=obj.get("text", ""), label=obj["label"],
                   source=obj.get("source", "llm"),
                   raw_answer=obj.get("raw_answer", ""))


@dataclass
class RedactedResume:
    resume_id: str
    retained: list[ClassifiedSentence] = field(default_factory=list)
    redacted_count: int = 0

    @property
    def segment_count(self) -> int:
        return self.redacted_count + len(self.retained)

    @property
    def fully_redacted(self) -> bool:
        return self.redacted_count > 0 and not self.retained

    def text(self) -> str:
        return "\n".join(s.text for s in self.retained)


# ---------------------------------------------------------------------------
# Rule cascade
# ---------------------------------------------------------------------------

_EMAIL_RE = re.compile(r"[\w.+-]+@[\w-]+\.[\w.-]+")
_URL_RE = re.compile(r"https?://|www\.|linkedin\.com|github\.com", re.I)
_CONTACT_LEADIN_RE = re.compile(r"\b(phone|tel|mobile|email|e-mail|address|contact)\s*:", re.I)
_PHONE_RE = re.compile(r"\+?\(?\d{2,4}\)?[\s.-]\d{3,4}(?:[\s.-]\d{3,4})?")
_ZIP_STREET_RE = re.compile(r"\b\d{1,5}\s+\w+\s+(street|st\.|avenue|ave\.?|road|rd\.?|blvd|lane|drive)\b", re.I)
_YEAR_RUN_RE = re.compile(r"(19|20)\d{2}")

_DEGREE_RE = re.compile(
    r"\b(bs|ba|ms|ma|bsc|msc|phd|mba|beng|meng|bachelor'?s?|master'?s?|doctorate|"
    r"university|college|institute of technology|diploma|gpa|graduated|undergraduate|coursework)\b", re.I)
_CERT_RE = re.compile(
    r"\b(certified|certification|certificate|licen[cs]ed?|licen[cs]e|credential|pmp|cpa|cfa)\b", re.I)

_YEAR_RANGE_RE = re.compile(
    r"\b(19|20)\d{2}\s*(-|–|—|to|until)\s*((19|20)\d{2}|present|current|now|today)\b", re.I)
_MONTH_YEAR_RE = re.compile(
    r"\b(jan|feb|mar|apr|may|jun|jul|aug|sep|oct|nov|dec)[a-z]*\.?\s+(19|20)\d{2}\b", re.I)
_YEARS_OF_RE = re.compile(r"\b\d+\+?\s+years?\b", re.I)
_ROLE_VERB_RE = re.compile(
    r"^(led|managed|developed|built|designed|implemented|created|launched|maintained|"
    r"engineered|architected|supervised|coordinated|delivered|improved|reduced|increased|"
    r"automated|migrated|mentored|oversaw|spearheaded|debugged|deployed|optimized|"
    r"joined|worked|served|administered|operated|responsible)\b", re.I)

_OBJECTIVE_RE = re.compile(
    r"^(career\s+)?objective\b|\b(seeking|aspiring to|looking for a|to obtain a|"
    r"eager to (join|contribute)|my goal is)\b", re.I)

_SKILL_LEADIN_RE = re.compile(
    r"^(technical\s+|core\s+)?(skills?|technologies|tools|stack)\s*:", re.I)
_SKILL_PHRASE_RE = re.compile(
    r"\b(proficient in|familiar with|experienced (with|in)|expertise in|fluent in|"
    r"working knowledge of|hands-on with)\b", re.I)


def _looks_like_phone(sentence: str) -> bool:
    for m in _PHONE_RE.finditer(sentence):
        runs = re.findall(r"\d+", m.group(0))
        if sum(len(r) for r in runs) < 7:
            continue
        if all(_YEAR_RUN_RE.fullmatch(r) for r in runs):
            continue  # "2015-2019" is a date range, not a phone number
        return True
    return False


def _looks_like_list(sentence: str) -> bool:
    items = [p.strip() for p in sentence.split(",") if p.strip()]
    if len(items) < 3:
        return False
    avg_words = sum(len(p.split()) for p in items) / len(items)
    return avg_words <= 3.0


def heuristic_classify(sentence: str) -> str:
    """Deterministic label via a fixed rule cascade; first hit wins."""
    if not sentence:
        raise ContractViolation("sentence must be non-empty")
    if (_EMAIL_RE.search(sentence) or _URL_RE.search(sentence)
            or _CONTACT_LEADIN_RE.search(sentence) or _ZIP_STREET_RE.search(sentence)
            or _looks_like_phone(sentence)):
        return PERSONAL_INFORMATION
    nodots = sentence.replace(".", "")
    if _DEGREE_RE.search(nodots):
        return EDUCATION
    if _CERT_RE.search(sentence):
        return QUALIFICATION_CERTIFICATION
    if (_YEAR_RANGE_RE.search(sentence) or _MONTH_YEAR_RE.search(sentence)
            or _YEARS_OF_RE.search(sentence) or _ROLE_VERB_RE.search(sentence)):
        return EXPERIENCE
    if _OBJECTIVE_RE.search(sentence):
        return OBJECTIVE
    if (_SKILL_LEADIN_RE.search(sentence) or _SKILL_PHRASE_RE.search(sentence)
            or _looks_like_list(sentence)):
        return SKILL
    return SUMMARY


# ---------------------------------------------------------------------------
# Prompting and parsing
# ---------------------------------------------------------------------------

def build_classification_prompt(sentence: str, template: PromptTemplate | None = None) -> str:
    if not sentence:
        raise ContractViolation("sentence must be non-empty")
    template = template or load_stage_template("classify")
    template.require_slots("sentence", "labels")
    return template.render(sentence=sentence, labels=", ".join(LABELS))


_ANSWER_MARKER_RE = re.compile(r"answer\s*:", re.I)


def parse_label_response(raw: str) -> str | ParseFailure:
    """Pick the canonical label out of free-form model text.

    Only the region after the last "Answer:" marker is searched (the whole
    text when no marker exists). The earliest label occurrence wins; equal
    starts go to the longer label so compound names stay whole.
    """
    markers = list(_ANSWER_MARKER_RE.finditer(raw))
    region = raw[markers[-1].end():] if markers else raw
    lowered = region.lower()
    best: tuple[int, int] | None = None  # (position, -length)
    best_label = ""
    for label in LABELS:
        pos = lowered.find(label)
        if pos < 0:
            continue
        key = (pos, -len(label))
        if best is None or key < best:
            best = key
            best_label = label
    if best is None:
        return ParseFailure(raw=raw)
    return best_label


def classify_resume(record, client: ChatClient,
                    template: PromptTemplate | None = None,
                    parse_retries: int = 1) -> list[ClassifiedSentence]:
    """Label every segment of a record, one backend call per sentence.

    Calls run concurrently up to the backend's in-flight limit and results
    are re-assembled in segment order. A response that parses to no label is
    retried once past the cache, then falls back to the rule cascade.
    """
    template = template or load_stage_template("classify")

    def one(index_segment: tuple[int, str]) -> ClassifiedSentence:
        index, segment = index_segment
        prompt = build_classification_prompt(segment, template)
        req = ChatRequest(system_text="", user_text=prompt, request_tag="classify")
        try:
            resp = client.complete(req)
            parsed = parse_label_response(resp.text)
            retries = parse_retries
            while isinstance(parsed, ParseFailure) and retries > 0:
                retries -= 1
                resp = client.complete(req, use_cache=False)
                parsed = parse_label_response(resp.text)
        except (TransportError, RetriesExhausted) as exc:
            raise StageError("classify",
                             f"backend failure on {record.resume_id} segment {index}: {exc}")
        if isinstance(parsed, ParseFailure):
            log.warning("unparseable label for %s segment %d; using rule cascade",
                        record.resume_id, index)
            return ClassifiedSentence(record.resume_id, index, segment,
                                      heuristic_classify(segment),
                                      source="heuristic", raw_answer=resp.text)
        return ClassifiedSentence(record.resume_id, index, segment, parsed,
                                  source="llm", raw_answer=resp.text)

    items = list(enumerate(record.segments))
    workers = max(1, min(client.config.max_in_flight, len(items) or 1))
    if workers == 1 or len(items) <= 1:
        return [one(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, items))


def heuristic_classify_resume(record) -> list[ClassifiedSentence]:
    """Label every segment offline with the rule cascade only."""
    return [ClassifiedSentence(record.resume_id, i, seg, heuristic_classify(seg),
                               source="heuristic")
            for i, seg in enumerate(record.segments)]


# ---------------------------------------------------------------------------
# Redaction
# ---------------------------------------------------------------------------

def redact(classified: Sequence[ClassifiedSentence]) -> RedactedResume:
    """Drop personal-information sentences, keeping the rest in order."""
    if not classified:
        raise ContractViolation("nothing to redact")
    ids = {s.resume_id for s in classified}
    if len(ids) > 1:
        raise ContractViolation(f"mixed resume ids in one redaction: {sorted(ids)}")
    retained = [s for s in classified if s.label != PERSONAL_INFORMATION]
    redacted = len(classified) - len(retained)
    out = RedactedResume(resume_id=classified[0].resume_id, retained=retained,
                         redacted_count=redacted)
    if out.fully_redacted:
        log.warning("resume %s is fully redacted", out.resume_id)
    return out


# ---------------------------------------------------------------------------
# Dataset split
# ---------------------------------------------------------------------------

def split_dataset(items: Sequence, ratios: tuple[float, float, float] = (0.7, 0.15, 0.15),
                  seed: int = 42) -> tuple[list, list, list]:
    """Shuffle once under the seed and cut into train/valid/test.

    Train and valid sizes are floored from the ratios (with an epsilon so
    exact products like 0.7 * 1000 do not land one short); test takes the
    remainder, so the three parts are disjoint and cover the input.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    if len(items) < 3:
        raise ValueError(f"need at least 3 items to split, got {len(items)}")
    shuffled = list(items)
    random.Random(seed).shuffle(shuffled)
    n = len(shuffled)
    n_train = math.floor(ratios[0] * n + 1e-9)
    n_valid = math.floor(ratios[1] * n + 1e-9)
    return (shuffled[:n_train],
            shuffled[n_train:n_train + n_valid],
            shuffled[n_train + n_valid:])


# ---------------------------------------------------------------------------
# Label evaluation
# ---------------------------------------------------------------------------

@dataclass
class F1Report:
    micro: float
    macro: float
    weighted: float
    per_class: dict[str, dict[str, float]]

    def to_json(self) -> dict:
        return {"micro": self.micro, "macro": self.macro,
                "weighted": self.weighted, "per_class": self.per_class}


def eval_classification(pred: Sequence[str], gold: Sequence[str]) -> F1Report:
    """Multi-class precision/recall/F1 in micro, macro and weighted flavors.

    With one label per item, micro-F1 reduces to plain accuracy.
    """
    if len(pred) != len(gold):
        raise ValueError(f"length mismatch: {len(pred)} pred vs {len(gold)} gold")
    if not gold:
        raise ValueError("nothing to evaluate")
    classes = sorted(set(pred) | set(gold))
    per_class: dict[str, dict[str, float]] = {}
    macro_sum = 0.0
    weighted_sum = 0.0
    for c in classes:
        tp = sum(1 for p, g in zip(pred, gold) if p == c and g == c)
        fp = sum(1 for p, g in zip(pred, gold) if p == c and g != c)
        fn = sum(1 for p, g in zip(pred, gold) if p != c and g == c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        support = tp + fn
        per_class[c] = {"precision": precision, "recall": recall,
                        "f1": f1, "support": float(support)}
        macro_sum += f1
        weighted_sum += f1 * support
    micro = sum(1 for p, g in zip(pred, gold) if p == g) / len(gold)
    return F1Report(micro=micro, macro=macro_sum / len(classes),
                    weighted=weighted_sum / len(gold), per_class=per_class)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def write_classified(sentences: Sequence[ClassifiedSentence], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def read_classified(path: str | Path) -> list[ClassifiedSentence]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(ClassifiedSentence.from_json(json.loads(line)))
    return out


def write_gold_labels(sentences: Sequence[ClassifiedSentence], path: str | Path) -> None:
    """Slim gold-label file: one {"id","segment_index","label"} per line."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(json.dumps({"id": s.resume_id, "segment_index": s.segment_index,
                                 "label": s.label}, sort_keys=True) + "\n")


def read_gold_labels(path: str | Path) -> dict[tuple[str, int], str]:
    gold: dict[tuple[str, int], str] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            gold[(str(obj["id"]), int(obj["segment_index"]))] = obj["label"]
    return gold
