"""Run configuration: one JSON file drives a whole pipeline run.

The loaded config is validated up front (referenced files must exist, knobs
in range) and then snapshotted verbatim into the run directory, so a stored
run is reproducible from its own snapshot alone.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .backend import BackendConfig
from .decide import DecisionCriteria
from .errors import ConfigError
from .ingest import DEFAULT_TOKEN_LIMIT, ESTIMATORS

CORPUS_KINDS = ("dir", "jsonl", "bundled")
DECISION_MODES = ("auto", "manual")
STAGES = ("classify", "assess", "decide")

_KNOWN_KEYS = {
    "corpus", "backend", "backend_overrides", "templates", "token_limit",
    "token_estimator", "top_k", "criteria", "gold_labels", "gold_assessments",
    "seed", "summary_word_limit", "truncate_summaries", "max_new_tokens",
    "sampling", "bleu_smoothing", "wpm", "manual_decision_minutes",
    "decision_mode", "store_root",
}


@dataclass
class CorpusSource:
    kind: str = "bundled"
    path: str = ""

    def to_json(self) -> dict:
        return {"kind": self.kind, "path": self.path}


@dataclass
class RunConfig:
    corpus: CorpusSource = field(default_factory=CorpusSource)
    backend: BackendConfig = field(default_factory=BackendConfig)
    backend_overrides: dict[str, BackendConfig] = field(default_factory=dict)
    templates: dict[str, str] = field(default_factory=dict)
    token_limit: int = DEFAULT_TOKEN_LIMIT
    token_estimator: str = "chars_div_4"
    top_k: int = 10
    criteria: DecisionCriteria = field(default_factory=DecisionCriteria)
    gold_labels: str = ""
    gold_assessments: str = ""
    seed: int = 42
    summary_word_limit: int = 100
    truncate_summaries: bool = False
    max_new_tokens: int = 200
    sampling: bool = True
    bleu_smoothing: bool = False
    wpm: int = 238
    manual_decision_minutes: float = 22.0
    decision_mode: str = "auto"
    store_root: str = "runs"

    def backend_for(self, stage: str) -> BackendConfig:
        return self.backend_overrides.get(stage, self.backend)

    def to_json(self) -> dict:
        return {
            "corpus": self.corpus.to_json(),
            "backend": self.backend.to_json(),
            "backend_overrides": {s: b.to_json() for s, b in self.backend_overrides.items()},
            "templates": dict(self.templates),
            "token_limit": self.token_limit,
            "token_estimator": self.token_estimator,
            "top_k": self.top_k,
            "criteria": self.criteria.to_json(),
            "gold_labels": self.gold_labels,
            "gold_assessments": self.gold_assessments,
            "seed": self.seed,
            "summary_word_limit": self.summary_word_limit,
            "truncate_summaries": self.truncate_summaries,
            "max_new_tokens": self.max_new_tokens,
            "sampling": self.sampling,
            "bleu_smoothing": self.bleu_smoothing,
            "wpm": self.wpm,
            "manual_decision_minutes": self.manual_decision_minutes,
            "decision_mode": self.decision_mode,
            "store_root": self.store_root,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        unknown = set(obj) - _KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        corpus_obj = obj.get("corpus", {})
        overrides = {s: BackendConfig.from_json(b)
                     for s, b in obj.get("backend_overrides", {}).items()}
        return cls(
            corpus=CorpusSource(kind=corpus_obj.get("kind", "bundled"),
                                path=corpus_obj.get("path", "")),
            backend=BackendConfig.from_json(obj.get("backend", {})),
            backend_overrides=overrides,
            templates=dict(obj.get("templates", {})),
            token_limit=int(obj.get("token_limit", DEFAULT_TOKEN_LIMIT)),
            token_estimator=obj.get("token_estimator", "chars_div_4"),
            top_k=int(obj.get("top_k", 10)),
            criteria=DecisionCriteria.from_json(obj.get("criteria", {})),
            gold_labels=obj.get("gold_labels", ""),
            gold_assessments=obj.get("gold_assessments", ""),
            seed=int(obj.get("seed", 42)),
            summary_word_limit=int(obj.get("summary_word_limit", 100)),
            truncate_summaries=bool(obj.get("truncate_summaries", False)),
            max_new_tokens=int(obj.get("max_new_tokens", 200)),
            sampling=bool(obj.get("sampling", True)),
            bleu_smoothing=bool(obj.get("bleu_smoothing", False)),
            wpm=int(obj.get("wpm", 238)),
            manual_decision_minutes=float(obj.get("manual_decision_minutes", 22.0)),
            decision_mode=obj.get("decision_mode", "auto"),
            store_root=obj.get("store_root", "runs"),
        )

    def validate(self) -> None:
        if self.corpus.kind not in CORPUS_KINDS:
            raise ConfigError(f"corpus kind must be one of {CORPUS_KINDS}, "
                              f"got {self.corpus.kind!r}")
        if self.corpus.kind == "dir" and not Path(self.corpus.path).is_dir():
            raise ConfigError(f"corpus directory not found: {self.corpus.path}")
        if self.corpus.kind == "jsonl" and not Path(self.corpus.path).is_file():
            raise ConfigError(f"corpus file not found: {self.corpus.path}")
        for stage, path in self.templates.items():
            if stage not in STAGES:
                raise ConfigError(f"template for unknown stage {stage!r}")
            if not Path(path).is_file():
                raise ConfigError(f"template file not found: {path}")
        for label, path in (("gold_labels", self.gold_labels),
                            ("gold_assessments", self.gold_assessments)):
            if path and not Path(path).is_file():
                raise ConfigError(f"{label} file not found: {path}")
        for stage in self.backend_overrides:
            if stage not in STAGES:
                raise ConfigError(f"backend override for unknown stage {stage!r}")
        if self.token_limit < 1:
            raise ConfigError("token_limit must be >= 1")
        if self.token_estimator not in ESTIMATORS:
            raise ConfigError(f"unknown token estimator {self.token_estimator!r}")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.summary_word_limit < 1:
            raise ConfigError("summary_word_limit must be >= 1")
        if self.max_new_tokens < 1:
            raise ConfigError("max_new_tokens must be >= 1")
        if self.decision_mode not in DECISION_MODES:
            raise ConfigError(f"decision_mode must be one of {DECISION_MODES}")
        if self.wpm <= 0:
            raise ConfigError("wpm must be positive")
        if self.manual_decision_minutes < 0:
            raise ConfigError("manual_decision_minutes must be >= 0")


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}")
    cfg = RunConfig.from_json(obj)
    cfg.validate()
    return cfg


def config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(cfg.to_json(), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def new_run_id(cfg: RunConfig, now: datetime | None = None) -> str:
    """Sortable run id: timestamp to the microsecond plus a config hash tag."""
    stamp = (now or datetime.now()).strftime("%Y%m%dT%H%M%S.%f")
    return f"{stamp}-{config_hash(cfg)[:8]}"
