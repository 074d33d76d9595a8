"""Evaluation stack: Exact Match, entailment-based attribution scoring,
human attribution ratings with majority vote, bootstrap uncertainty, Pearson
correlation, least squares fits, and paired t-tests.

Exact Match normalization: lowercase, strip punctuation, drop the articles
"a"/"an"/"the", collapse whitespace. Automatic attribution scores binarize at
0.5 (inclusive). Human ratings mark an item attributable when a strict
majority of its raters answered yes to both rating questions.
"""

from __future__ import annotations

import json
import math
import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .backends import EntailmentQuery, render_hypothesis, render_premise

DEFAULT_RESAMPLES = 10_000

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


class MetricError(ValueError):
    """Raised for undefined metrics or malformed evaluation inputs."""


# ---------------------------------------------------------------------------
# Exact Match
# ---------------------------------------------------------------------------


def normalize_answer(s: str) -> str:
    """Lowercase, remove punctuation and articles, collapse whitespace."""
    s = s.lower().translate(_PUNCT_TABLE)
    s = _ARTICLE_RE.sub(" ", s)
    return " ".join(s.split())


def exact_match(prediction: str, references: Sequence[str]) -> int:
    """1 iff the normalized prediction equals some normalized reference."""
    if not references:
        raise MetricError("exact_match requires at least one reference")
    normalized = normalize_answer(prediction)
    return int(any(normalized == normalize_answer(ref) for ref in references))


# ---------------------------------------------------------------------------
# Automatic attribution scoring
# ---------------------------------------------------------------------------


def autoais_item(
    question: str, answer: str, passage_text: str | None, scorer
) -> tuple[float, int]:
    """Entailment score of the rendered question+answer given the passage,
    binarized at 0.5 (inclusive). Items without a passage score (0.0, 0)."""
    if passage_text is None:
        return 0.0, 0
    score = scorer.entail(
        EntailmentQuery(premise=passage_text, hypothesis=render_hypothesis(question, answer))
    )
    return score, int(score >= 0.5)


def autoais_run(run, corpus, scorer) -> dict[str, tuple[float, int]]:
    """Per-question (score, bin) for a run; flagged failures score (0.0, 0)."""
    results: dict[str, tuple[float, int]] = {}
    for qid, output in run.outputs.items():
        if output.failure is not None or output.passage_id is None:
            results[qid] = (0.0, 0)
            continue
        passage = corpus.by_id[output.passage_id]
        premise = render_premise(passage.title, passage.text)
        results[qid] = autoais_item(output.question, output.answer, premise, scorer)
    return results


def autoais_score(run, corpus, scorer) -> float:
    """Percent of run items whose binarized entailment score is 1."""
    if not run.outputs:
        raise MetricError("cannot score an empty run")
    bins = [b for _, b in autoais_run(run, corpus, scorer).values()]
    return 100.0 * sum(bins) / len(bins)


# ---------------------------------------------------------------------------
# Human ratings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RatingRecord:
    question_id: str
    rater_id: str
    interpretable: bool
    supported: bool
    system: str


def ais_item(ratings: Sequence[RatingRecord]) -> int:
    """1 iff a strict majority of raters judged the item attributable
    (both rating questions answered yes)."""
    if not ratings:
        raise MetricError("ais_item requires at least one rating")
    attributable = sum(1 for r in ratings if r.interpretable and r.supported)
    return int(attributable * 2 > len(ratings))


def ais_run(run, ratings: Sequence[RatingRecord]) -> dict[str, int]:
    """Per-question majority-vote values for a run.

    Flagged failures score 0 without ratings; every other item must have at
    least one rating for this run's system.
    """
    by_question: dict[str, list[RatingRecord]] = {}
    for record in ratings:
        if record.system == run.name:
            by_question.setdefault(record.question_id, []).append(record)
    items: dict[str, int] = {}
    missing = []
    for qid, output in run.outputs.items():
        if output.failure is not None:
            items[qid] = 0
        elif qid in by_question:
            items[qid] = ais_item(by_question[qid])
        else:
            missing.append(qid)
    if missing:
        raise MetricError(f"missing ratings for items: {sorted(missing)}")
    return items


def ais_score(
    run,
    ratings: Sequence[RatingRecord],
    *,
    resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> tuple[float, float, tuple[float, float]]:
    """(percent attributable, bootstrap standard error, 95% CI) for a run."""
    items = [ais_run(run, ratings)[qid] for qid in sorted(run.outputs)]
    percent = 100.0 * sum(items) / len(items)
    se, ci = bootstrap_se(items, resamples=resamples, seed=seed)
    return percent, se, ci


# ---------------------------------------------------------------------------
# Uncertainty and correlation statistics
# ---------------------------------------------------------------------------


def bootstrap_se(
    binary_items: Sequence[int],
    resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> tuple[float, tuple[float, float]]:
    """Two-sided bootstrap over item means.

    Returns (standard error, (2.5th, 97.5th percentile)) of the resampled
    means, both on the 0-100 percent scale. Deterministic per seed.
    """
    n = len(binary_items)
    if n < 2:
        raise MetricError("bootstrap requires at least 2 items")
    data = np.asarray(binary_items, dtype=np.float64)
    rng = np.random.default_rng(seed)
    means = np.empty(resamples, dtype=np.float64)
    chunk = max(1, min(resamples, 20_000_000 // max(n, 1)))
    done = 0
    while done < resamples:
        take = min(chunk, resamples - done)
        idx = rng.integers(0, n, size=(take, n))
        means[done : done + take] = data[idx].mean(axis=1)
        done += take
    se = float(np.std(means, ddof=1)) * 100.0
    low, high = np.percentile(means, [2.5, 97.5])
    return se, (float(low) * 100.0, float(high) * 100.0)


def _check_series(xs: Sequence[float], ys: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    if len(xs) != len(ys):
        raise MetricError(f"series lengths differ: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise MetricError("need at least 2 points")
    return np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation coefficient between two equal-length series."""
    x, y = _check_series(xs, ys)
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt((dx * dx).sum()))
    sy = float(np.sqrt((dy * dy).sum()))
    if sx == 0.0 or sy == 0.0:
        raise MetricError("pearson undefined, zero variance series")
    r = float((dx * dy).sum()) / (sx * sy)
    return max(-1.0, min(1.0, r))


def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """Ordinary least squares (slope, intercept)."""
    x, y = _check_series(xs, ys)
    dx = x - x.mean()
    varx = float((dx * dx).sum())
    if varx == 0.0:
        raise MetricError("linear_fit undefined, zero variance in x")
    slope = float((dx * (y - y.mean())).sum()) / varx
    return slope, float(y.mean() - slope * x.mean())


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    # Lentz's algorithm for the incomplete-beta continued fraction.
    max_iter = 300
    eps = 3e-15
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) >= tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) >= tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) >= tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) >= tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) >= tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b), the regularized incomplete beta function."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Paired Student t on per-question differences, with a two-sided p-value
    from the t distribution at n-1 degrees of freedom."""
    x, y = _check_series(a, b)
    diffs = x - y
    n = len(diffs)
    sd = float(np.std(diffs, ddof=1))
    if sd == 0.0:
        raise MetricError("paired t-test undefined, zero variance differences")
    t = float(diffs.mean()) / (sd / math.sqrt(n))
    df = n - 1
    p = regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
    return t, p


def instance_correlation(
    ais_items: Mapping[str, int], autoais_scores: Mapping[str, float]
) -> float:
    """Pearson over aligned per-question (human rating, automatic score) pairs."""
    if set(ais_items) != set(autoais_scores):
        raise MetricError("instance series are not aligned on the same question ids")
    qids = sorted(ais_items)
    return pearson([float(ais_items[q]) for q in qids], [autoais_scores[q] for q in qids])


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class PerQuestionMetrics:
    em: int
    autoais_score: float | None = None
    autoais_bin: int | None = None
    ais: int | None = None


@dataclass
class MetricReport:
    system: str
    n: int
    em_pct: float
    autoais_pct: float | None = None
    ais_pct: float | None = None
    ais_se: float | None = None
    ais_ci95: tuple[float, float] | None = None
    per_question: dict[str, PerQuestionMetrics] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "n": self.n,
            "em_pct": self.em_pct,
            "autoais_pct": self.autoais_pct,
            "ais_pct": self.ais_pct,
            "ais_se": self.ais_se,
            "ais_ci95": list(self.ais_ci95) if self.ais_ci95 else None,
            "per_question": {
                qid: {
                    "em": m.em,
                    "autoais_score": m.autoais_score,
                    "autoais_bin": m.autoais_bin,
                    "ais": m.ais,
                }
                for qid, m in sorted(self.per_question.items())
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricReport":
        ci = data.get("ais_ci95")
        return cls(
            system=data["system"],
            n=data["n"],
            em_pct=data["em_pct"],
            autoais_pct=data.get("autoais_pct"),
            ais_pct=data.get("ais_pct"),
            ais_se=data.get("ais_se"),
            ais_ci95=(ci[0], ci[1]) if ci else None,
            per_question={
                qid: PerQuestionMetrics(
                    em=m["em"],
                    autoais_score=m.get("autoais_score"),
                    autoais_bin=m.get("autoais_bin"),
                    ais=m.get("ais"),
                )
                for qid, m in data.get("per_question", {}).items()
            },
        )


def compute_report(
    run,
    references: Mapping[str, Sequence[str]],
    *,
    corpus=None,
    scorer=None,
    ratings: Sequence[RatingRecord] | None = None,
    resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> MetricReport:
    """Score a run: EM always; entailment scoring when a scorer and corpus are
    given; human AIS with bootstrap uncertainty when ratings are given.

    Flagged per-question failures score 0 on every metric.
    """
    if not run.outputs:
        raise MetricError("cannot score an empty run")
    missing_refs = [qid for qid in run.outputs if qid not in references]
    if missing_refs:
        raise MetricError(f"missing references for items: {sorted(missing_refs)}")

    per_question: dict[str, PerQuestionMetrics] = {}
    for qid in sorted(run.outputs):
        output = run.outputs[qid]
        if output.failure is not None:
            em = 0
        else:
            em = exact_match(output.answer, references[qid])
        per_question[qid] = PerQuestionMetrics(em=em)

    autoais_pct = None
    if scorer is not None:
        if corpus is None:
            raise MetricError("automatic attribution scoring requires the corpus")
        per_item = autoais_run(run, corpus, scorer)
        for qid, (score, bin_) in per_item.items():
            per_question[qid].autoais_score = score
            per_question[qid].autoais_bin = bin_
        autoais_pct = 100.0 * sum(b for _, b in per_item.values()) / len(per_item)

    ais_pct = ais_se_value = ais_ci = None
    if ratings is not None:
        items = ais_run(run, ratings)
        for qid, value in items.items():
            per_question[qid].ais = value
        ordered = [items[qid] for qid in sorted(items)]
        ais_pct = 100.0 * sum(ordered) / len(ordered)
        ais_se_value, ais_ci = bootstrap_se(ordered, resamples=resamples, seed=seed)

    em_pct = 100.0 * sum(m.em for m in per_question.values()) / len(per_question)
    return MetricReport(
        system=run.name,
        n=len(per_question),
        em_pct=em_pct,
        autoais_pct=autoais_pct,
        ais_pct=ais_pct,
        ais_se=ais_se_value,
        ais_ci95=ais_ci,
        per_question=per_question,
    )


def format_report_table(reports: Sequence[MetricReport]) -> str:
    """Human-readable summary table with EM / AutoAIS / AIS columns."""
    header = f"{'System':<24} {'n':>6} {'EM':>6} {'AutoAIS':>8} {'AIS':>14}"
    lines = [header, "-" * len(header)]
    for report in reports:
        autoais = f"{report.autoais_pct:.1f}" if report.autoais_pct is not None else "-"
        if report.ais_pct is not None:
            ais = f"{report.ais_pct:.1f} +/- {report.ais_se:.1f}"
        else:
            ais = "-"
        lines.append(
            f"{report.system:<24} {report.n:>6} {report.em_pct:>6.1f} {autoais:>8} {ais:>14}"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def load_references(path: str | Path) -> dict[str, list[str]]:
    """References JSONL: {"question_id": ..., "answers": [...]} per line."""
    references: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MetricError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            qid = obj.get("question_id")
            answers = obj.get("answers")
            if not isinstance(qid, str) or not isinstance(answers, list) or not answers:
                raise MetricError(f"line {lineno}: expected question_id and non-empty answers")
            references[qid] = [str(a) for a in answers]
    return references


def load_ratings(path: str | Path) -> list[RatingRecord]:
    """Ratings JSONL. A record with interpretable=false is coerced to
    supported=false at ingest (the support question presupposes
    interpretability)."""
    records = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MetricError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            try:
                interpretable = bool(obj["interpretable"])
                records.append(
                    RatingRecord(
                        question_id=str(obj["question_id"]),
                        rater_id=str(obj["rater_id"]),
                        interpretable=interpretable,
                        supported=bool(obj["supported"]) and interpretable,
                        system=str(obj["system"]),
                    )
                )
            except KeyError as exc:
                raise MetricError(f"line {lineno}: missing field {exc}") from exc
    return records


def write_ratings(records: Iterable[RatingRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(
                json.dumps(
                    {
                        "question_id": record.question_id,
                        "system": record.system,
                        "rater_id": record.rater_id,
                        "interpretable": record.interpretable,
                        "supported": record.supported,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
