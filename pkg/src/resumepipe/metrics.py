"""Evaluation mathematics for summaries, grades, and rankings.

Everything here is pure. The tokenizer is pinned (lowercase, punctuation
separated into standalone tokens, whitespace split) because overlap metrics
are meaningless without a fixed tokenization, and its version tag travels
inside every report.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

TOKENIZER_VERSION = "lower-punct-split-v1"
DEFAULT_WPM = 238
DEFAULT_BIN_WIDTH = 5
GRADE_TOLERANCE = 5

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase and split; every punctuation character is its own token."""
    return _TOKEN_RE.findall(text.lower())


def make_ngrams(tokens: Sequence[str], n: int) -> Counter:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _score(match: float, cand_total: int, ref_total: int) -> RougeScore:
    p = match / cand_total if cand_total else 0.0
    r = match / ref_total if ref_total else 0.0
    return RougeScore(precision=p, recall=r, f1=_f1(p, r))


def rouge_n(candidate: str, reference: str, n: int) -> RougeScore:
    """Clipped n-gram overlap between candidate and reference."""
    cand = make_ngrams(tokenize(candidate), n)
    ref = make_ngrams(tokenize(reference), n)
    match = sum(min(count, ref[gram]) for gram, count in cand.items())
    return _score(match, sum(cand.values()), sum(ref.values()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, two-row dynamic programming."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> RougeScore:
    cand = tokenize(candidate)
    ref = tokenize(reference)
    return _score(lcs_length(cand, ref), len(cand), len(ref))


def bleu(candidate: str, reference: str, max_n: int = 4,
         smoothing: bool = False) -> float:
    """Geometric mean of clipped n-gram precisions times the brevity penalty.

    Uniform weights over n = 1..max_n. With smoothing on, add-one smoothing
    applies to orders n >= 2 only; with it off, any zero precision gives 0.
    """
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand_grams = make_ngrams(cand, n) if len(cand) >= n else Counter()
        ref_grams = make_ngrams(ref, n) if len(ref) >= n else Counter()
        match = sum(min(c, ref_grams[g]) for g, c in cand_grams.items())
        total = sum(cand_grams.values())
        if smoothing and n >= 2:
            p = (match + 1) / (total + 1)
        else:
            p = match / total if total else 0.0
        if p == 0:
            return 0.0
        log_sum += math.log(p)
    geo = math.exp(log_sum / max_n)
    c, r = len(cand), len(ref)
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return geo * bp


# ---------------------------------------------------------------------------
# Grade agreement
# ---------------------------------------------------------------------------

def grade_accuracy(pred: Sequence[int], gold: Sequence[int],
                   tolerance: int = GRADE_TOLERANCE) -> float:
    """Fraction of grades within +/- tolerance of gold, boundary inclusive."""
    if len(pred) != len(gold):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(gold)}")
    if not pred:
        raise ValueError("nothing to score")
    hits = sum(1 for p, g in zip(pred, gold) if abs(p - g) <= tolerance)
    return hits / len(pred)


# ---------------------------------------------------------------------------
# Rank statistics
# ---------------------------------------------------------------------------

def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the average of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _pearson(x: Sequence[float], y: Sequence[float]) -> float:
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = sum((a - mx) ** 2 for a in x)
    vy = sum((b - my) ** 2 for b in y)
    if vx == 0 or vy == 0:
        raise ValueError("constant input has no rank correlation")
    return cov / math.sqrt(vx * vy)


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank correlation; the closed form on tie-free data, Pearson over
    average ranks when ties are present."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 2:
        raise ValueError("need at least 2 points")
    rx = average_ranks(x)
    ry = average_ranks(y)
    tie_free = len(set(x)) == n and len(set(y)) == n
    if tie_free:
        d2 = sum((a - b) ** 2 for a, b in zip(rx, ry))
        return 1 - 6 * d2 / (n * (n * n - 1))
    return _pearson(rx, ry)


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> float:
    """Kendall's tau, with the tau-b tie adjustment when ties are present."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 2:
        raise ValueError("need at least 2 points")
    concordant = discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            a = (x[i] > x[j]) - (x[i] < x[j])
            b = (y[i] > y[j]) - (y[i] < y[j])
            prod = a * b
            if prod > 0:
                concordant += 1
            elif prod < 0:
                discordant += 1
    n0 = n * (n - 1) // 2
    tx = Counter(x)
    ty = Counter(y)
    n1 = sum(t * (t - 1) // 2 for t in tx.values())
    n2 = sum(t * (t - 1) // 2 for t in ty.values())
    denom = math.sqrt((n0 - n1) * (n0 - n2))
    if denom == 0:
        raise ValueError("constant input has no rank correlation")
    return (concordant - discordant) / denom


def topk_overlap(rank_a: Sequence[str], rank_b: Sequence[str], k: int) -> int:
    if k > len(rank_a) or k > len(rank_b):
        raise ValueError(f"k={k} exceeds a ranking length "
                         f"({len(rank_a)}, {len(rank_b)})")
    return len(set(rank_a[:k]) & set(rank_b[:k]))


# ---------------------------------------------------------------------------
# Grade distribution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GradeHistogram:
    bins: dict[int, int]
    bin_width: int = DEFAULT_BIN_WIDTH

    @property
    def n(self) -> int:
        return sum(self.bins.values())

    def vector(self) -> list[int]:
        return [self.bins.get(start, 0) for start in range(0, 100, self.bin_width)]


def grade_histogram(grades: Sequence[int],
                    bin_width: int = DEFAULT_BIN_WIDTH) -> tuple[GradeHistogram, dict]:
    """Bin grades by width (100 folds into the last bin) plus mean and
    population standard deviation of the raw values."""
    if not grades:
        raise ValueError("no grades to bin")
    if 100 % bin_width:
        raise ValueError(f"bin width {bin_width} does not divide 100")
    bins: dict[int, int] = {}
    for g in grades:
        if not 0 <= g <= 100:
            raise ValueError(f"grade out of range: {g}")
        start = min((g // bin_width) * bin_width, 100 - bin_width)
        bins[start] = bins.get(start, 0) + 1
    mean = sum(grades) / len(grades)
    var = sum((g - mean) ** 2 for g in grades) / len(grades)
    hist = GradeHistogram(bins=bins, bin_width=bin_width)
    return hist, {"mean": mean, "std": math.sqrt(var)}


def cosine_hist(h1: GradeHistogram | Sequence[float],
                h2: GradeHistogram | Sequence[float]) -> float:
    """Cosine similarity of two count vectors or same-layout histograms."""
    if isinstance(h1, GradeHistogram) and isinstance(h2, GradeHistogram):
        if h1.bin_width != h2.bin_width:
            raise ValueError("histograms use different bin layouts")
        v1, v2 = h1.vector(), h2.vector()
    elif isinstance(h1, GradeHistogram) or isinstance(h2, GradeHistogram):
        raise ValueError("cannot mix a histogram with a raw vector")
    else:
        v1, v2 = list(h1), list(h2)
        if len(v1) != len(v2):
            raise ValueError(f"length mismatch: {len(v1)} vs {len(v2)}")
    n1 = math.sqrt(sum(a * a for a in v1))
    n2 = math.sqrt(sum(b * b for b in v2))
    if n1 == 0 or n2 == 0:
        raise ValueError("zero vector has no direction")
    return sum(a * b for a, b in zip(v1, v2)) / (n1 * n2)


# ---------------------------------------------------------------------------
# Time model
# ---------------------------------------------------------------------------

def manual_time_estimate(total_words: int, wpm: int = DEFAULT_WPM) -> float:
    """Minutes a human reader needs for the corpus at the given pace."""
    if wpm <= 0:
        raise ValueError(f"wpm must be positive, got {wpm}")
    if total_words < 0:
        raise ValueError(f"negative word count: {total_words}")
    return total_words / wpm


def speedup_multiple(manual_minutes: float, automated_minutes: float) -> dict:
    """Manual over automated time, raw plus round-half-up integer."""
    if automated_minutes <= 0:
        raise ValueError("automated time must be positive")
    raw = manual_minutes / automated_minutes
    return {"raw": raw, "reported": math.floor(raw + 0.5)}


# ---------------------------------------------------------------------------
# Corpus reports
# ---------------------------------------------------------------------------

@dataclass
class MetricReport:
    rouge1: RougeScore
    rouge2: RougeScore
    rougeL: RougeScore
    bleu: float
    grade_accuracy: float | None
    n: int
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        def rs(s: RougeScore) -> dict:
            return {"precision": s.precision, "recall": s.recall, "f1": s.f1}
        return {"rouge1": rs(self.rouge1), "rouge2": rs(self.rouge2),
                "rougeL": rs(self.rougeL), "bleu": self.bleu,
                "grade_accuracy": self.grade_accuracy, "n": self.n,
                "metadata": dict(self.metadata)}


@dataclass
class RankStats:
    spearman_rho: float | None
    kendall_tau: float | None
    cosine: float | None
    topk_overlap: int | None
    k: int

    def to_json(self) -> dict:
        return {"spearman_rho": self.spearman_rho, "kendall_tau": self.kendall_tau,
                "cosine": self.cosine, "topk_overlap": self.topk_overlap,
                "k": self.k}


def _mean_rouge(scores: list[RougeScore]) -> RougeScore:
    n = len(scores)
    return RougeScore(precision=sum(s.precision for s in scores) / n,
                      recall=sum(s.recall for s in scores) / n,
                      f1=sum(s.f1 for s in scores) / n)


def evaluate_pairs(pairs: Sequence[tuple[str, str]],
                   grades: Sequence[tuple[int, int]] | None = None,
                   smoothing: bool = False) -> MetricReport:
    """Corpus metrics as the arithmetic mean of per-pair scores.

    ``pairs`` holds (candidate, reference) summary texts; ``grades`` holds
    matching (predicted, gold) grade pairs when grade data exists.
    """
    if not pairs:
        raise ValueError("no pairs to evaluate")
    r1 = [rouge_n(c, r, 1) for c, r in pairs]
    r2 = [rouge_n(c, r, 2) for c, r in pairs]
    rl = [rouge_l(c, r) for c, r in pairs]
    bl = [bleu(c, r, smoothing=smoothing) for c, r in pairs]
    acc = None
    if grades:
        acc = grade_accuracy([p for p, _ in grades], [g for _, g in grades])
    return MetricReport(
        rouge1=_mean_rouge(r1), rouge2=_mean_rouge(r2), rougeL=_mean_rouge(rl),
        bleu=sum(bl) / len(bl), grade_accuracy=acc, n=len(pairs),
        metadata={"tokenizer": TOKENIZER_VERSION, "bleu_smoothing": smoothing,
                  "aggregation": "mean_of_pair_scores"})


def rank_stats(pred_grades: Sequence[int], gold_grades: Sequence[int],
               ids: Sequence[str], k: int = 10) -> RankStats:
    """Rank agreement between two gradings of the same candidates.

    Constant gradings have no defined correlation; those fields come back
    None rather than failing the whole report.
    """
    if not (len(pred_grades) == len(gold_grades) == len(ids)):
        raise ValueError("pred, gold and ids must align")
    try:
        rho = spearman_rho(pred_grades, gold_grades)
        tau = kendall_tau(pred_grades, gold_grades)
    except ValueError:
        rho = tau = None
    cos = None
    if pred_grades:
        h1, _ = grade_histogram(list(pred_grades))
        h2, _ = grade_histogram(list(gold_grades))
        cos = cosine_hist(h1, h2)
    overlap = None
    k_eff = min(k, len(ids))
    if k_eff >= 1:
        pred_by_id = dict(zip(ids, pred_grades))
        gold_by_id = dict(zip(ids, gold_grades))
        by_pred = sorted(ids, key=lambda i: (-pred_by_id[i], i))
        by_gold = sorted(ids, key=lambda i: (-gold_by_id[i], i))
        overlap = topk_overlap(by_pred, by_gold, k_eff)
    return RankStats(spearman_rho=rho, kendall_tau=tau, cosine=cos,
                     topk_overlap=overlap, k=k_eff)


def render_scaled(report: MetricReport) -> str:
    """Human-readable rendering with scores scaled to 0..100."""
    lines = [
        f"pairs evaluated: {report.n}",
        f"rouge-1 f1: {report.rouge1.f1 * 100:.2f}",
        f"rouge-2 f1: {report.rouge2.f1 * 100:.2f}",
        f"rouge-l f1: {report.rougeL.f1 * 100:.2f}",
        f"bleu: {report.bleu * 100:.2f}",
    ]
    if report.grade_accuracy is not None:
        lines.append(f"grade accuracy (+/-5): {report.grade_accuracy * 100:.2f}")
    return "\n".join(lines)
