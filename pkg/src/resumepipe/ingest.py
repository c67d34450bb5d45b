"""Corpus ingestion: normalization, sentence segmentation, token counting,
length filtering, and dataset download with content-hash caching.

Resumes arrive as plain text (one file per resume or line-delimited records)
and leave as ``ResumeRecord`` objects whose segments are clean, ordered,
non-empty sentences.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from filelock import FileLock

from .errors import ConfigError, IntegrityError, TransportError

log = logging.getLogger(__name__)

DEFAULT_TOKEN_LIMIT = 4096

# Sentence terminators followed by whitespace mark in-line sentence ends.
_TERMINATOR_RE = re.compile(r"[.!?]+(?=\s)")
_BULLET_RE = re.compile(r"^[-*•]+\s+")
_WORD_RE = re.compile(r"\S+")


@dataclass
class RawDocument:
    """A resume as received, before any normalization."""

    doc_id: str
    source_name: str = ""
    media_hint: str = "plain_text"  # plain_text | pre_extracted
    body: str = ""
    warnings: list[str] = field(default_factory=list)


@dataclass
class ResumeRecord:
    """Normalized resume: ordered sentence segments plus length counters."""

    resume_id: str
    segments: list[str] = field(default_factory=list)
    word_count: int = 0
    token_count: int = 0

    def recount_words(self) -> None:
        self.word_count = sum(len(_WORD_RE.findall(s)) for s in self.segments)

    def text(self) -> str:
        return "\n".join(self.segments)

    def to_json(self) -> dict:
        return {
            "id": self.resume_id,
            "segments": list(self.segments),
            "word_count": self.word_count,
            "token_count": self.token_count,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ResumeRecord":
        return cls(
            resume_id=obj["id"],
            segments=list(obj["segments"]),
            word_count=int(obj.get("word_count", 0)),
            token_count=int(obj.get("token_count", 0)),
        )


def _clean_line(line: str) -> str:
    """Replace tabs with spaces, drop other control characters, trim ends."""
    line = line.replace("\t", " ")
    line = "".join(ch for ch in line if unicodedata.category(ch) != "Cc")
    return line.strip()


def normalize_document(doc: RawDocument) -> ResumeRecord:
    """Turn a raw document into line-based segments.

    Each non-blank content line becomes one segment; blank lines only mark
    boundaries. An empty body is not an error: it yields zero segments and
    appends a warning to the document.
    """
    body = doc.body.replace("\r\n", "\n").replace("\r", "\n")
    segments = [cleaned for line in body.split("\n") if (cleaned := _clean_line(line))]
    if not segments:
        doc.warnings.append("empty body")
    record = ResumeRecord(resume_id=doc.doc_id, segments=segments)
    record.recount_words()
    return record


def _strip_bullets(line: str) -> str:
    while True:
        stripped = _BULLET_RE.sub("", line)
        if stripped == line:
            return stripped
        line = stripped


def _split_line(line: str) -> list[str]:
    """Split one line at sentence terminators followed by whitespace.

    Abbreviation guard: no split when the token carrying the terminator is,
    without its trailing terminator cluster, at most 3 characters long AND
    the next word starts lowercase ("M.S. in", "Inc. since"). Both conditions
    must hold to suppress the split.
    """
    pieces: list[str] = []
    start = 0
    for m in _TERMINATOR_RE.finditer(line):
        cluster_start, cluster_end = m.start(), m.end()
        token_start = line.rfind(" ", 0, cluster_start) + 1
        core = line[token_start:cluster_start]
        rest = line[cluster_end:].lstrip()
        next_lower = bool(rest) and rest[0].islower()
        if len(core) <= 3 and next_lower:
            continue
        pieces.append(line[start:cluster_end].strip())
        start = cluster_end
    pieces.append(line[start:].strip())
    return [p for p in pieces if p]


def segment_sentences(record: ResumeRecord) -> ResumeRecord:
    """Re-split line segments into sentence segments.

    Leading bullet markers (-, *, and the bullet glyph) are stripped, lines
    holding several sentences are split at terminators, ordering is kept and
    indices stay contiguous. Applying this twice equals applying it once.
    """
    segments: list[str] = []
    for line in record.segments:
        line = _strip_bullets(line)
        segments.extend(_split_line(line))
    out = ResumeRecord(resume_id=record.resume_id, segments=segments,
                       token_count=record.token_count)
    out.recount_words()
    return out


def chars_div_4(record: ResumeRecord) -> int:
    """Default estimator: ceil(character count / 4) over the joined text."""
    return math.ceil(len(record.text()) / 4)


def whitespace_tokens(record: ResumeRecord) -> int:
    return sum(len(_WORD_RE.findall(s)) for s in record.segments)


TokenEstimator = Callable[[ResumeRecord], int]

ESTIMATORS: dict[str, TokenEstimator] = {
    "chars_div_4": chars_div_4,
    "whitespace": whitespace_tokens,
}


def count_tokens(record: ResumeRecord, estimator: TokenEstimator | str = "chars_div_4") -> int:
    """Count tokens with the given estimator and store the result on the record."""
    if isinstance(estimator, str):
        try:
            estimator = ESTIMATORS[estimator]
        except KeyError:
            raise ConfigError(f"unknown token estimator {estimator!r}")
    record.token_count = int(estimator(record))
    return record.token_count


def filter_corpus(records: list[ResumeRecord], max_tokens: int = DEFAULT_TOKEN_LIMIT,
                  ) -> tuple[list[ResumeRecord], list[ResumeRecord]]:
    """Partition records into (kept, excluded) by token budget.

    Only records strictly exceeding ``max_tokens`` are excluded; the boundary
    value is kept. Both lists preserve input order.
    """
    kept = [r for r in records if r.token_count <= max_tokens]
    excluded = [r for r in records if r.token_count > max_tokens]
    return kept, excluded


# ---------------------------------------------------------------------------
# Corpus loading
# ---------------------------------------------------------------------------

def load_corpus_dir(path: str | Path) -> list[RawDocument]:
    """Directory of UTF-8 .txt files, one resume per file, stem = resume id."""
    p = Path(path)
    if not p.is_dir():
        raise ConfigError(f"corpus directory not found: {p}")
    docs = []
    for f in sorted(p.glob("*.txt")):
        docs.append(RawDocument(doc_id=f.stem, source_name=str(f),
                                body=f.read_text(encoding="utf-8")))
    return docs


def load_bundled_corpus() -> list[RawDocument]:
    """The packaged 20-resume synthetic fixture, for offline runs and tests."""
    from importlib import resources

    root = resources.files("resumepipe").joinpath("data/fixtures/resumes")
    docs = []
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".txt"):
            docs.append(RawDocument(doc_id=entry.name[:-4], source_name=entry.name,
                                    body=entry.read_text(encoding="utf-8")))
    return docs


def load_corpus_jsonl(path: str | Path) -> list[RawDocument]:
    """Line-delimited records, each line an object {"id": str, "text": str}."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"corpus file not found: {p}")
    docs = []
    with p.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{p}:{lineno}: invalid JSON record: {exc}")
            docs.append(RawDocument(doc_id=str(obj["id"]), source_name=f"{p}:{lineno}",
                                    media_hint="pre_extracted", body=obj["text"]))
    return docs


def load_labeled_corpus(path: str | Path) -> tuple[list[RawDocument], dict[tuple[str, int], str]]:
    """Parse a sentence-classification corpus of tab-separated lines.

    Expected layout: one "sentence<TAB>label" pair per line, resumes separated
    by blank lines. Returns the documents plus a gold-label map keyed by
    (resume_id, line index within the resume).
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"corpus file not found: {p}")
    docs: list[RawDocument] = []
    gold: dict[tuple[str, int], str] = {}
    current: list[str] = []

    def flush() -> None:
        if current:
            doc_id = f"resume_{len(docs) + 1:04d}"
            docs.append(RawDocument(doc_id=doc_id, source_name=str(p),
                                    media_hint="pre_extracted", body="\n".join(current)))
            current.clear()

    with p.open(encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip():
                flush()
                continue
            if "\t" in line:
                text, label = line.rsplit("\t", 1)
                gold[(f"resume_{len(docs) + 1:04d}", len(current))] = label.strip().lower()
                current.append(text)
            else:
                current.append(line)
    flush()
    return docs, gold


def ingest_documents(docs: Iterable[RawDocument],
                     estimator: TokenEstimator | str = "chars_div_4") -> list[ResumeRecord]:
    """normalize -> segment -> count for every document, in order."""
    records = []
    for doc in docs:
        record = segment_sentences(normalize_document(doc))
        count_tokens(record, estimator)
        records.append(record)
    return records


def write_records(records: Iterable[ResumeRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def read_records(path: str | Path) -> list[ResumeRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(ResumeRecord.from_json(json.loads(line)))
    return records


# ---------------------------------------------------------------------------
# Dataset download
# ---------------------------------------------------------------------------

def _default_fetcher(url: str) -> bytes:
    import requests

    try:
        resp = requests.get(url, timeout=60)
    except requests.RequestException as exc:
        raise TransportError(f"download failed for {url}: {exc}", retryable=True)
    if resp.status_code != 200:
        raise TransportError(f"download failed for {url}: HTTP {resp.status_code}",
                             status=resp.status_code, retryable=resp.status_code in (429,) or resp.status_code >= 500)
    return resp.content


def fetch_dataset(url: str, cache_dir: str | Path,
                  fetcher: Callable[[str], bytes] | None = None) -> Path:
    """Download ``url`` once into ``cache_dir``; later calls hit the cache.

    The payload is stored under a name derived from the url hash, next to a
    sidecar recording the content hash. A cached file that no longer matches
    its recorded hash raises IntegrityError naming the file.
    """
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    key = hashlib.sha256(url.encode("utf-8")).hexdigest()[:16]
    data_path = cache / f"{key}.data"
    meta_path = cache / f"{key}.json"

    with FileLock(str(cache / f"{key}.lock")):
        if data_path.is_file() and meta_path.is_file():
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            digest = hashlib.sha256(data_path.read_bytes()).hexdigest()
            if digest != meta.get("sha256"):
                raise IntegrityError(
                    f"cached file {data_path} does not match recorded hash")
            log.debug("dataset cache hit for %s", url)
            return data_path

        payload = (fetcher or _default_fetcher)(url)
        data_path.write_bytes(payload)
        meta_path.write_text(json.dumps({
            "url": url,
            "sha256": hashlib.sha256(payload).hexdigest(),
            "bytes": len(payload),
        }, indent=2), encoding="utf-8")
        log.info("downloaded %s (%d bytes)", url, len(payload))
        return data_path
