"""Keyphrase extraction for cluster summaries.

Rapid automatic keyword extraction over cleaned messages: stop words act as
phrase delimiters, each word scores degree/frequency over the candidate set,
and a phrase scores the sum of its word scores. The word-cloud payload is
plain data; rendering is the consumer's job.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .preprocess import DEFAULT_STOPWORDS


@dataclass(frozen=True)
class CloudPhrase:
    text: str
    score: float
    weight: float


@dataclass(frozen=True)
class KeyphraseCloud:
    """Ranked phrases for one cluster, weights scaled into (0, 1]."""

    cluster_label: int
    phrases: tuple[CloudPhrase, ...]

    def to_payload(self) -> dict:
        return {
            "cluster": self.cluster_label,
            "phrases": [
                {"text": p.text, "score": p.score, "weight": p.weight} for p in self.phrases
            ],
        }


def _candidates(text: str, stopwords: frozenset[str] | set[str]) -> Iterable[tuple[str, ...]]:
    run: list[str] = []
    for token in text.split():
        if token in stopwords:
            if run:
                yield tuple(run)
                run = []
        else:
            run.append(token)
    if run:
        yield tuple(run)


def rake_extract(
    texts: Sequence[str],
    stopwords: frozenset[str] | set[str] | None = None,
    top_n: int = 15,
) -> list[tuple[str, float]]:
    """Extract the top_n key phrases across cleaned texts.

    Texts must still contain their stop words; candidate phrases are the
    maximal stop-word-free token runs. Duplicate phrases merge into one entry
    while all their occurrences still count toward word statistics. Equal
    scores order lexicographically.
    """
    stops = stopwords if stopwords is not None else DEFAULT_STOPWORDS
    freq: dict[str, int] = {}
    degree: dict[str, int] = {}
    phrases: list[tuple[str, ...]] = []
    for text in texts:
        for candidate in _candidates(text, stops):
            phrases.append(candidate)
            for word in candidate:
                freq[word] = freq.get(word, 0) + 1
                degree[word] = degree.get(word, 0) + len(candidate)
    if not phrases:
        return []
    word_score = {w: degree[w] / freq[w] for w in freq}
    scored: dict[str, float] = {}
    for candidate in phrases:
        text = " ".join(candidate)
        if text not in scored:
            scored[text] = sum(word_score[w] for w in candidate)
    ranked = sorted(scored.items(), key=lambda item: (-item[1], item[0]))
    return ranked[: max(0, top_n)]


def wordcloud_data(cluster_label: int, ranked: Sequence[tuple[str, float]]) -> KeyphraseCloud:
    """Scale ranked phrase scores to weights in (0, 1] relative to the max."""
    if not ranked:
        return KeyphraseCloud(cluster_label=cluster_label, phrases=())
    top = max(score for _, score in ranked)
    phrases = tuple(
        CloudPhrase(text=text, score=float(score), weight=float(score / top))
        for text, score in ranked
    )
    return KeyphraseCloud(cluster_label=cluster_label, phrases=phrases)
