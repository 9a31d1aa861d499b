"""Feature extraction: tf-idf with n-grams, PCA reduction, embedding averages.

All vectorizers produce a FeatureMatrix whose rows line up with record ids.
Conventions are pinned for reproducibility: idf(t) = ln((1+N)/(1+df(t))) + 1,
rows L2-normalized, PCA components signed so the largest-magnitude loading
is non-negative.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import ProviderError, VectorizeError


class VectorizerTag(Enum):
    TFIDF = "tfidf"
    FASTTEXT = "fasttext"
    EXTERNAL = "external"


class DuplicateTokenWarning(UserWarning):
    """A word-vector file defined the same token twice; the last entry wins."""


@dataclass(eq=False)
class FeatureMatrix:
    """Numeric features for a set of records, one row per record."""

    record_ids: tuple[str, ...]
    rows: np.ndarray
    vectorizer_tag: VectorizerTag
    preprocessed: bool
    zero_rows: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=float)
        if self.rows.ndim != 2:
            raise VectorizeError("feature matrix must be two-dimensional")
        if self.rows.shape[0] != len(self.record_ids):
            raise VectorizeError("row count does not match record ids")
        if self.rows.shape[1] < 1:
            raise VectorizeError("feature matrix must have at least one dimension")
        if not np.all(np.isfinite(self.rows)):
            raise VectorizeError("feature matrix contains non-finite values")

    @property
    def dims(self) -> int:
        return int(self.rows.shape[1])

    @property
    def n_records(self) -> int:
        return int(self.rows.shape[0])


def _default_ids(count: int) -> tuple[str, ...]:
    return tuple(str(i) for i in range(count))


def _ngrams(tokens: Sequence[str], ngram_range: tuple[int, int]) -> list[str]:
    lo, hi = ngram_range
    grams: list[str] = []
    for n in range(lo, hi + 1):
        for i in range(len(tokens) - n + 1):
            grams.append(" ".join(tokens[i : i + n]))
    return grams


@dataclass
class TfidfModel:
    """Fitted vocabulary and idf weights."""

    vocabulary: dict[str, int]
    idf: np.ndarray
    ngram_range: tuple[int, int]
    min_df: int


def fit_tfidf(
    texts: Sequence[str],
    ngram_range: tuple[int, int] = (1, 3),
    min_df: int = 1,
) -> TfidfModel:
    """Fit vocabulary and idf over whitespace-tokenized texts.

    idf(t) = ln((1+N)/(1+df(t))) + 1 with N = len(texts). Terms below min_df
    are discarded. Vocabulary indices follow lexicographic term order.
    """
    lo, hi = ngram_range
    if not (1 <= lo <= hi):
        raise VectorizeError(f"bad ngram range {ngram_range!r}")
    n_docs = len(texts)
    non_empty = sum(1 for t in texts if t.split())
    if non_empty < 2:
        raise VectorizeError("tf-idf needs at least 2 non-empty documents")
    df: dict[str, int] = {}
    for text in texts:
        for gram in set(_ngrams(text.split(), ngram_range)):
            df[gram] = df.get(gram, 0) + 1
    kept = sorted(term for term, count in df.items() if count >= min_df)
    if not kept:
        raise VectorizeError(f"no terms satisfy min_df={min_df}")
    vocabulary = {term: i for i, term in enumerate(kept)}
    idf = np.array([math.log((1 + n_docs) / (1 + df[t])) + 1.0 for t in kept])
    return TfidfModel(vocabulary=vocabulary, idf=idf, ngram_range=ngram_range, min_df=min_df)


def transform_tfidf(
    model: TfidfModel,
    texts: Sequence[str],
    record_ids: Sequence[str] | None = None,
    preprocessed: bool = False,
) -> FeatureMatrix:
    """Map texts onto the fitted vocabulary: raw count x idf, L2-normalized.

    Terms unseen at fit time are ignored. Documents with no known terms
    become zero rows and are flagged in FeatureMatrix.zero_rows.
    """
    ids = tuple(record_ids) if record_ids is not None else _default_ids(len(texts))
    if len(ids) != len(texts):
        raise VectorizeError("record ids do not match texts")
    rows = np.zeros((len(texts), len(model.vocabulary)))
    for i, text in enumerate(texts):
        for gram in _ngrams(text.split(), model.ngram_range):
            col = model.vocabulary.get(gram)
            if col is not None:
                rows[i, col] += 1.0
    rows *= model.idf
    norms = np.linalg.norm(rows, axis=1)
    zero = norms == 0.0
    rows[~zero] /= norms[~zero, None]
    return FeatureMatrix(
        record_ids=ids,
        rows=rows,
        vectorizer_tag=VectorizerTag.TFIDF,
        preprocessed=preprocessed,
        zero_rows=tuple(int(i) for i in np.flatnonzero(zero)),
    )


@dataclass
class PcaModel:
    """Centering vector plus orthonormal components, strongest first."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance_ratio: np.ndarray


def fit_pca(matrix: FeatureMatrix, target: float | int = 0.95, cap: int = 100) -> PcaModel:
    """Fit PCA on the matrix rows.

    `target` is either a variance fraction in (0, 1] (keep the smallest
    component count reaching it) or an integer dimension cap. The kept count
    is always capped at min(cap, n-1, dims). Each component is signed so its
    largest-magnitude loading is non-negative. Zero-variance input raises
    a degenerate-matrix error.
    """
    rows = matrix.rows
    n, dims = rows.shape
    if n < 2:
        raise VectorizeError("PCA needs at least 2 rows")
    mean = rows.mean(axis=0)
    centered = rows - mean
    if not np.any(centered):
        raise VectorizeError("degenerate matrix: zero variance in every dimension")
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    power = singular**2
    ratios = power / power.sum()
    limit = min(cap, n - 1, dims)
    if isinstance(target, int) and not isinstance(target, bool):
        k = min(target, limit)
    else:
        if not (0.0 < target <= 1.0):
            raise VectorizeError(f"bad variance target {target!r}")
        reached = np.flatnonzero(np.cumsum(ratios) >= target - 1e-12)
        k = int(reached[0]) + 1 if reached.size else len(ratios)
        k = min(k, limit)
    if k < 1:
        raise VectorizeError("PCA cap leaves no components")
    components = vt[:k].copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(mean=mean, components=components, explained_variance_ratio=ratios[:k].copy())


def apply_pca(model: PcaModel, matrix: FeatureMatrix) -> FeatureMatrix:
    """Project matrix rows onto the fitted components."""
    if matrix.dims != model.mean.shape[0]:
        raise VectorizeError(
            f"matrix has {matrix.dims} dims but PCA was fitted on {model.mean.shape[0]}"
        )
    projected = (matrix.rows - model.mean) @ model.components.T
    return FeatureMatrix(
        record_ids=matrix.record_ids,
        rows=projected,
        vectorizer_tag=matrix.vectorizer_tag,
        preprocessed=matrix.preprocessed,
        zero_rows=matrix.zero_rows,
    )


def reconstruct_pca(model: PcaModel, matrix: FeatureMatrix) -> np.ndarray:
    """Back-project reduced rows into the original space, adding the mean."""
    return matrix.rows @ model.components + model.mean


@dataclass
class WordVectorTable:
    """Token-to-vector lookup loaded from a .vec file."""

    dim: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def __contains__(self, token: str) -> bool:
        return token in self.entries


def load_word_vectors(stream: IO[str] | IO[bytes] | str | Iterable[str]) -> WordVectorTable:
    """Load a .vec file: header `count dim`, then `token v1 .. v<dim>` lines.

    A line with the wrong number of values raises an error naming the line;
    duplicate tokens keep the last entry and emit a DuplicateTokenWarning.
    """
    if isinstance(stream, str):
        lines: Iterable[str] = stream.splitlines()
    else:
        lines = (ln.decode("utf-8") if isinstance(ln, bytes) else ln for ln in stream)
    it = iter(lines)
    try:
        header = next(it).split()
    except StopIteration:
        raise VectorizeError("line 1: empty word-vector file") from None
    if len(header) != 2:
        raise VectorizeError("line 1: expected header 'count dim'")
    try:
        _, dim = int(header[0]), int(header[1])
    except ValueError:
        raise VectorizeError("line 1: expected integer header 'count dim'") from None
    if dim < 1:
        raise VectorizeError("line 1: dimension must be positive")
    table = WordVectorTable(dim=dim)
    for lineno, raw in enumerate(it, start=2):
        if not raw.strip():
            continue
        parts = raw.split()
        if len(parts) != dim + 1:
            raise VectorizeError(f"line {lineno}: expected {dim} values, got {len(parts) - 1}")
        token = parts[0]
        try:
            vector = np.array([float(v) for v in parts[1:]])
        except ValueError:
            raise VectorizeError(f"line {lineno}: non-numeric vector value") from None
        if token in table.entries:
            warnings.warn(f"duplicate token {token!r}, keeping last entry", DuplicateTokenWarning)
        table.entries[token] = vector
    return table


def embed_average(
    table: WordVectorTable,
    tokens_per_doc: Sequence[Sequence[str]],
    record_ids: Sequence[str] | None = None,
    preprocessed: bool = False,
) -> FeatureMatrix:
    """Average the in-vocabulary token vectors of each document.

    Out-of-vocabulary tokens are skipped; documents with no known tokens
    become zero rows and are flagged.
    """
    ids = tuple(record_ids) if record_ids is not None else _default_ids(len(tokens_per_doc))
    if len(ids) != len(tokens_per_doc):
        raise VectorizeError("record ids do not match documents")
    rows = np.zeros((len(tokens_per_doc), table.dim))
    zero: list[int] = []
    for i, tokens in enumerate(tokens_per_doc):
        known = [table.entries[t] for t in tokens if t in table.entries]
        if known:
            rows[i] = np.mean(known, axis=0)
        else:
            zero.append(i)
    return FeatureMatrix(
        record_ids=ids,
        rows=rows,
        vectorizer_tag=VectorizerTag.FASTTEXT,
        preprocessed=preprocessed,
        zero_rows=tuple(zero),
    )


def _embed_from_file(path: Path, texts: Sequence[str], record_ids: Sequence[str]) -> np.ndarray:
    by_id: dict[str, list[float]] = {}
    ordered: list[list[float]] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProviderError(f"provider file {path}: line {lineno}: invalid JSON ({exc.msg})") from None
        if "vector" not in obj:
            raise ProviderError(f"provider file {path}: line {lineno}: missing 'vector'")
        vector = [float(v) for v in obj["vector"]]
        ordered.append(vector)
        if obj.get("id") is not None:
            by_id[str(obj["id"])] = vector
    if len(by_id) == len(ordered) and all(rid in by_id for rid in record_ids):
        vectors = [by_id[rid] for rid in record_ids]
    else:
        if len(ordered) != len(texts):
            raise ProviderError(
                f"provider file {path}: has {len(ordered)} vectors for {len(texts)} texts"
            )
        vectors = ordered
    dims = {len(v) for v in vectors}
    if len(dims) != 1:
        raise ProviderError(f"provider file {path}: inconsistent vector dimensions {sorted(dims)}")
    return np.array(vectors, dtype=float)


def _embed_from_http(endpoint: str, texts: Sequence[str], timeout: float) -> np.ndarray:
    import httpx

    url = endpoint.rstrip("/")
    if not url.endswith("/embed"):
        url += "/embed"
    try:
        response = httpx.post(url, json={"texts": list(texts)}, timeout=timeout)
        response.raise_for_status()
        payload = response.json()
    except Exception as exc:
        raise ProviderError(f"embedding provider unreachable: {exc}") from None
    vectors = payload.get("vectors")
    dim = payload.get("dim")
    if not isinstance(vectors, list) or not isinstance(dim, int):
        raise ProviderError("embedding provider returned a malformed payload")
    if len(vectors) != len(texts):
        raise ProviderError(f"provider returned {len(vectors)} vectors for {len(texts)} texts")
    for row in vectors:
        if len(row) != dim:
            raise ProviderError(f"provider vector length {len(row)} does not match dim {dim}")
    return np.array(vectors, dtype=float)


def embed_external(
    endpoint: str,
    texts: Sequence[str],
    record_ids: Sequence[str] | None = None,
    preprocessed: bool = False,
    timeout: float = 30.0,
) -> FeatureMatrix:
    """Fetch embeddings from an external provider.

    `endpoint` is either an http(s) URL (POST /embed with {"texts": [...]})
    or a path to a precomputed JSONL file of {"id": ..., "vector": [...]}
    lines, matched by record id when ids are given, positionally otherwise.
    Count or dimension mismatches raise ProviderError.
    """
    ids = tuple(record_ids) if record_ids is not None else _default_ids(len(texts))
    if len(ids) != len(texts):
        raise VectorizeError("record ids do not match texts")
    if endpoint.startswith(("http://", "https://")):
        rows = _embed_from_http(endpoint, texts, timeout)
    else:
        path = Path(endpoint)
        if not path.is_file():
            raise ProviderError(f"embedding provider unreachable: no such file {endpoint!r}")
        rows = _embed_from_file(path, texts, ids)
    return FeatureMatrix(
        record_ids=ids,
        rows=rows,
        vectorizer_tag=VectorizerTag.EXTERNAL,
        preprocessed=preprocessed,
    )
