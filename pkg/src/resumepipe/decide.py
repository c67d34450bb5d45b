"""Decision stage: rank assessed candidates, shortlist, and pick hires.

The pick is made either by a role-played executive agent over the shortlist
cards or by a recorded human decision; both produce the same record shape.
Only cards (id, grade, summary) reach this stage, never raw resume text.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from .backend import ChatClient, ChatRequest
from .assess import AgentAssessment
from .classify import ParseFailure
from .errors import StageError, ValidationError
from .prompts import PromptTemplate, load_stage_template

log = logging.getLogger(__name__)

_NUM_WORDS = ("zero", "one", "two", "three", "four", "five", "six", "seven",
              "eight", "nine", "ten", "eleven", "twelve", "thirteen",
              "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
              "nineteen", "twenty")


def num_word(n: int) -> str:
    return _NUM_WORDS[n] if 0 <= n < len(_NUM_WORDS) else str(n)


@dataclass(frozen=True)
class CandidateCard:
    resume_id: str
    grade_numeric: int
    summary: str

    def rendered(self) -> str:
        return f"ID: {self.resume_id} | Grade: {self.grade_numeric}/100 | Summary: {self.summary}"


@dataclass(frozen=True)
class DecisionCriteria:
    hires: int = 1
    role_description: str = ""
    extra_instructions: str = ""

    def __post_init__(self) -> None:
        if self.hires < 1:
            raise ValidationError("hires must be a positive integer",
                                  fields={"hires": f"got {self.hires}"})

    def to_json(self) -> dict:
        return {"hires": self.hires, "role_description": self.role_description,
                "extra_instructions": self.extra_instructions}

    @classmethod
    def from_json(cls, obj: dict) -> "DecisionCriteria":
        return cls(hires=int(obj.get("hires", 1)),
                   role_description=obj.get("role_description", ""),
                   extra_instructions=obj.get("extra_instructions", ""))


@dataclass
class DecisionRecord:
    run_id: str
    selected_ids: list[str]
    rationale: str
    mode: str  # auto | manual
    decider: str
    criteria: DecisionCriteria
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def __post_init__(self) -> None:
        if self.mode not in ("auto", "manual"):
            raise ValidationError("mode must be auto or manual",
                                  fields={"mode": f"got {self.mode!r}"})
        if len(self.selected_ids) != self.criteria.hires:
            raise ValidationError(
                "selection count does not match the hire count",
                fields={"selected_ids": f"expected {self.criteria.hires}, "
                                        f"got {len(self.selected_ids)}"})

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "selected_ids": list(self.selected_ids),
            "rationale": self.rationale,
            "mode": self.mode,
            "decider": self.decider,
            "criteria": self.criteria.to_json(),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DecisionRecord":
        return cls(run_id=obj["run_id"], selected_ids=list(obj["selected_ids"]),
                   rationale=obj.get("rationale", ""), mode=obj["mode"],
                   decider=obj.get("decider", ""),
                   criteria=DecisionCriteria.from_json(obj.get("criteria", {})),
                   timestamp=obj.get("timestamp", ""))


# ---------------------------------------------------------------------------
# Ranking
# ---------------------------------------------------------------------------

def rank_candidates(assessments: Sequence[AgentAssessment]) -> list[CandidateCard]:
    """Order by grade descending; malformed grades sink below a valid zero;
    remaining ties break by ascending resume id, so any input permutation
    yields the same order."""
    if not assessments:
        raise ValueError("nothing to rank")

    def key(a: AgentAssessment):
        return (-a.grade.numeric, 0 if a.grade.is_valid else 1, a.resume_id)

    ordered = sorted(assessments, key=key)
    return [CandidateCard(a.resume_id, a.grade.numeric, a.summary) for a in ordered]


def take_top_k(ranked: Sequence[CandidateCard], k: int = 10) -> list[CandidateCard]:
    if k < 1:
        raise ValueError(f"top-k must be >= 1, got {k}")
    return list(ranked[:k])


# ---------------------------------------------------------------------------
# Decision prompt
# ---------------------------------------------------------------------------

def criteria_sentence(criteria: DecisionCriteria, pool_size: int) -> str:
    if criteria.role_description:
        noun = "individual" if criteria.hires == 1 else "individuals"
        return (f"You are now recruiting {num_word(criteria.hires)} {noun} for "
                f"{criteria.role_description} roles in your company.")
    noun = "candidate" if criteria.hires == 1 else "candidates"
    return (f"You are now selecting {num_word(criteria.hires)} {noun} out of "
            f"{num_word(pool_size)} based on the provided grades and summaries.")


def _render_slots(shortlist: Sequence[CandidateCard],
                  criteria: DecisionCriteria) -> dict:
    cards = "\n".join(card.rendered() for card in shortlist)
    extra = f"\n{criteria.extra_instructions}" if criteria.extra_instructions else ""
    return {
        "criteria_sentence": criteria_sentence(criteria, len(shortlist)),
        "cards": cards,
        "hires": criteria.hires,
        "extra": extra,
    }


def build_decision_prompt(shortlist: Sequence[CandidateCard],
                          criteria: DecisionCriteria,
                          template: PromptTemplate | None = None) -> str:
    if not shortlist:
        raise ValueError("shortlist is empty")
    if criteria.hires > len(shortlist):
        raise ValidationError(
            "cannot hire more candidates than the shortlist holds",
            fields={"hires": f"{criteria.hires} > shortlist size {len(shortlist)}"})
    template = template or load_stage_template("decide")
    template.require_slots("criteria_sentence", "cards", "hires")
    return template.render(**_render_slots(shortlist, criteria))


# ---------------------------------------------------------------------------
# Decision parsing
# ---------------------------------------------------------------------------

def parse_decision(raw: str, shortlist: Sequence[CandidateCard],
                   hires: int) -> tuple[list[str], str] | ParseFailure:
    """Collect the first `hires` distinct shortlist ids mentioned in the text.

    Ids are matched with word boundaries, in order of first appearance; ids
    outside the shortlist never count. Too few mentions is a ParseFailure.
    """
    found: list[tuple[int, str]] = []
    for card in shortlist:
        m = re.search(rf"(?<!\w){re.escape(card.resume_id)}(?!\w)", raw)
        if m:
            found.append((m.start(), card.resume_id))
    found.sort()
    selected = [rid for _, rid in found[:hires]]
    if len(selected) < hires:
        return ParseFailure(raw=raw, reason="too_few_ids")
    return selected, raw


# ---------------------------------------------------------------------------
# Auto and manual decisions
# ---------------------------------------------------------------------------

_STRICT_REMINDER = ("\n\nRespond with exactly {hires} candidate ID(s), each "
                    "written exactly as it appears in the list above.")


def decide_auto(shortlist: Sequence[CandidateCard], criteria: DecisionCriteria,
                client: ChatClient, template: PromptTemplate | None = None,
                run_id: str = "", max_new_tokens: int = 200) -> DecisionRecord:
    if not shortlist:
        raise StageError("decide", "shortlist is empty")
    if criteria.hires > len(shortlist):
        raise ValidationError(
            "cannot hire more candidates than the shortlist holds",
            fields={"hires": f"{criteria.hires} > shortlist size {len(shortlist)}"})
    template = template or load_stage_template("decide")
    system, user = template.render_parts(**_render_slots(shortlist, criteria))

    req = ChatRequest(system_text=system, user_text=user,
                      max_new_tokens=max_new_tokens, request_tag="decide")
    resp = client.complete(req)
    parsed = parse_decision(resp.text, shortlist, criteria.hires)
    if isinstance(parsed, ParseFailure):
        log.warning("decision response named too few ids; retrying once strictly")
        strict = ChatRequest(
            system_text=system,
            user_text=user + _STRICT_REMINDER.format(hires=criteria.hires),
            max_new_tokens=max_new_tokens, request_tag="decide")
        resp = client.complete(strict)
        parsed = parse_decision(resp.text, shortlist, criteria.hires)
    if isinstance(parsed, ParseFailure):
        raise StageError("decide",
                         f"undecodable decision after retry; last output: {parsed.raw[:500]}")
    selected, rationale = parsed
    return DecisionRecord(run_id=run_id, selected_ids=selected,
                          rationale=rationale, mode="auto",
                          decider=client.config.model_name, criteria=criteria)


def record_manual_decision(shortlist: Sequence[CandidateCard],
                           criteria: DecisionCriteria,
                           selected_ids: Sequence[str], rationale: str,
                           user: str, run_id: str = "") -> DecisionRecord:
    pool = {card.resume_id for card in shortlist}
    outside = [rid for rid in selected_ids if rid not in pool]
    if outside:
        raise ValidationError(
            "selection includes ids outside the shortlist",
            fields={"selected_ids": f"not in shortlist: {', '.join(outside)}"})
    if len(set(selected_ids)) != len(selected_ids):
        raise ValidationError("selection repeats an id",
                              fields={"selected_ids": "duplicate ids"})
    return DecisionRecord(run_id=run_id, selected_ids=list(selected_ids),
                          rationale=rationale, mode="manual", decider=user,
                          criteria=criteria)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def write_decision(record: DecisionRecord, path: str | Path) -> None:
    Path(path).write_text(json.dumps(record.to_json(), ensure_ascii=False,
                                     indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def read_decision(path: str | Path) -> DecisionRecord:
    return DecisionRecord.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
