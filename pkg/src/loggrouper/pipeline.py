"""End-to-end run orchestration and artifact persistence.

run_matrix executes every requested vectorizer x preprocessing x clusterer
combo on a windowed corpus, scores the assignments, picks the best combo and
summarizes its groups with key phrases. Runs are deterministic: equal corpus,
config and seed produce the same run id and byte-identical artifacts, so
wall-clock timings live only on the in-memory run, never in the files.
"""
from __future__ import annotations

import hashlib
import json
import os
import shutil
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import cluster as _cluster
from . import vectorize as _vectorize
from .cluster import Algorithm, ClusterAssignment
from .errors import (
    ClusterError,
    CorruptArtifactError,
    PipelineError,
    ProviderError,
    QualityError,
    RunExistsError,
    RunNotFoundError,
    VectorizeError,
)
from .ingest import Corpus, WindowSpec, parse_rfc3339, serialize_records
from .keyphrase import CloudPhrase, KeyphraseCloud, rake_extract, wordcloud_data
from .preprocess import DEFAULT_STOPWORDS, clean, clean_document, load_stopwords
from .quality import Combo, QualityReport, QualityScore, build_report
from .quality import calinski_harabasz as _ch
from .quality import silhouette as _sc
from .vectorize import FeatureMatrix, VectorizerTag


class Preprocessing(Enum):
    RAW = "raw"
    PREPROCESSED = "preprocessed"
    BOTH = "both"


class RunStatus(Enum):
    PENDING = "pending"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


DEFAULT_SEED = 42
_MANIFEST = "manifest.json"
_REPORT = "report.json"
_ASSIGNMENTS = "assignments.json"
_CLOUDS = "clouds.json"


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs besides the corpus itself."""

    window: WindowSpec
    vectorizers: tuple[VectorizerTag, ...] = (VectorizerTag.TFIDF,)
    clusterers: tuple[Algorithm, ...] = (
        Algorithm.KMEANS,
        Algorithm.AGGLOMERATIVE,
        Algorithm.DBSCAN,
        Algorithm.SPECTRAL,
    )
    preprocessing: Preprocessing = Preprocessing.BOTH
    seed: int = DEFAULT_SEED
    k_range: tuple[int, ...] | None = None
    provider: str | None = None
    word_vectors: str | None = None
    stopwords: str | None = None
    top_n_phrases: int = 15

    def __post_init__(self) -> None:
        object.__setattr__(self, "vectorizers", tuple(self.vectorizers))
        object.__setattr__(self, "clusterers", tuple(self.clusterers))
        if self.k_range is not None:
            object.__setattr__(self, "k_range", tuple(int(k) for k in self.k_range))
        if not self.vectorizers:
            raise PipelineError("config needs at least one vectorizer")
        if not self.clusterers:
            raise PipelineError("config needs at least one clusterer")
        if len(set(self.vectorizers)) != len(self.vectorizers):
            raise PipelineError("duplicate vectorizers in config")
        if len(set(self.clusterers)) != len(self.clusterers):
            raise PipelineError("duplicate clusterers in config")


@dataclass
class PipelineRun:
    """A run's full result; timings are observability only, not identity."""

    run_id: str
    config: RunConfig
    status: RunStatus
    report: QualityReport | None = None
    assignments: dict[str, ClusterAssignment] = field(default_factory=dict)
    clouds: dict[int, KeyphraseCloud] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    n_records: int = 0
    timings: dict[str, float] = field(default_factory=dict, compare=False)


def default_k_range(n_records: int) -> tuple[int, ...]:
    """Candidate cluster counts 2..min(15, n-1)."""
    return tuple(range(2, min(15, n_records - 1) + 1))


def required_records(config: RunConfig) -> int:
    """Smallest corpus this config can run on."""
    k_min = min(config.k_range) if config.k_range else 2
    return max(3, k_min)


def config_to_obj(config: RunConfig) -> dict:
    """JSON-safe view of a config; branch sets become sorted lists."""
    return {
        "window": {
            "from": config.window.start.isoformat(),
            "to": config.window.end.isoformat(),
            "branches": sorted(config.window.branches),
        },
        "vectorizers": [v.value for v in config.vectorizers],
        "clusterers": [c.value for c in config.clusterers],
        "preprocessing": config.preprocessing.value,
        "seed": config.seed,
        "k_range": list(config.k_range) if config.k_range is not None else None,
        "provider": config.provider,
        "word_vectors": config.word_vectors,
        "stopwords": config.stopwords,
        "top_n_phrases": config.top_n_phrases,
    }


def config_from_obj(obj: dict) -> RunConfig:
    """Inverse of config_to_obj; raises PipelineError on malformed input."""
    try:
        window_obj = obj["window"]
        window = WindowSpec(
            start=parse_rfc3339(window_obj["from"]),
            end=parse_rfc3339(window_obj["to"]),
            branches=frozenset(window_obj.get("branches", ())),
        )
        return RunConfig(
            window=window,
            vectorizers=tuple(VectorizerTag(v) for v in obj.get("vectorizers", ("tfidf",))),
            clusterers=tuple(
                Algorithm(c)
                for c in obj.get(
                    "clusterers", ("kmeans", "agglomerative", "dbscan", "spectral")
                )
            ),
            preprocessing=Preprocessing(obj.get("preprocessing", "both")),
            seed=int(obj.get("seed", DEFAULT_SEED)),
            k_range=tuple(obj["k_range"]) if obj.get("k_range") else None,
            provider=obj.get("provider"),
            word_vectors=obj.get("word_vectors"),
            stopwords=obj.get("stopwords"),
            top_n_phrases=int(obj.get("top_n_phrases", 15)),
        )
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(f"invalid run config: {exc}") from None


def compute_run_id(corpus: Corpus, config: RunConfig) -> str:
    """Deterministic run id from corpus content and canonical config."""
    digest = hashlib.sha256()
    digest.update(serialize_records(corpus.records).encode("utf-8"))
    digest.update(json.dumps(config_to_obj(config), sort_keys=True).encode("utf-8"))
    return "run-" + digest.hexdigest()[:16]


def _variants(preprocessing: Preprocessing) -> tuple[bool, ...]:
    if preprocessing is Preprocessing.RAW:
        return (False,)
    if preprocessing is Preprocessing.PREPROCESSED:
        return (True,)
    return (False, True)


def _build_matrix(
    vectorizer: VectorizerTag,
    preprocessed: bool,
    corpus: Corpus,
    config: RunConfig,
    prep_texts: list[str],
    prep_tokens: list[tuple[str, ...]],
    word_table_cache: dict,
) -> FeatureMatrix:
    ids = [r.id for r in corpus.records]
    n = len(ids)
    raw_texts = [r.message for r in corpus.records]
    texts = prep_texts if preprocessed else raw_texts
    if vectorizer is VectorizerTag.TFIDF:
        model = _vectorize.fit_tfidf(texts)
        wide = _vectorize.transform_tfidf(model, texts, record_ids=ids, preprocessed=preprocessed)
        pca = _vectorize.fit_pca(wide, target=0.95, cap=100)
        return _vectorize.apply_pca(pca, wide)
    if vectorizer is VectorizerTag.FASTTEXT:
        if not config.word_vectors:
            raise VectorizeError("fasttext vectorizer needs a word_vectors file")
        if "table" not in word_table_cache:
            with open(config.word_vectors, "r", encoding="utf-8") as handle:
                word_table_cache["table"] = _vectorize.load_word_vectors(handle)
        tokens = prep_tokens if preprocessed else [tuple(t.split()) for t in raw_texts]
        return _vectorize.embed_average(
            word_table_cache["table"], tokens, record_ids=ids, preprocessed=preprocessed
        )
    if vectorizer is VectorizerTag.EXTERNAL:
        if not config.provider:
            raise ProviderError("external vectorizer needs a provider")
        return _vectorize.embed_external(
            config.provider, texts, record_ids=ids, preprocessed=preprocessed
        )
    raise VectorizeError(f"unknown vectorizer {vectorizer!r}")


def _cluster_combo(
    matrix: FeatureMatrix,
    algorithm: Algorithm,
    config: RunConfig,
) -> ClusterAssignment:
    n = matrix.n_records
    if algorithm is Algorithm.DBSCAN:
        min_samples = min(_cluster.default_min_samples(matrix.dims), n - 1)
        eps, search = _cluster.greedy_eps(matrix, min_samples, seed=config.seed)
        assignment = _cluster.dbscan(matrix, eps, min_samples)
        assignment.params["eps_search"] = {
            "candidates": [
                {"eps": c["eps"], "silhouette": c["score"]} for c in search["candidates"]
            ]
        }
        return assignment
    ks = config.k_range if config.k_range is not None else default_k_range(n)
    ks = tuple(k for k in ks if 2 <= k <= n - 1)
    if len(ks) < 3:
        raise ClusterError("k range has fewer than 3 usable values")
    curve = _cluster.elbow_select_k(matrix, ks, algorithm, seed=config.seed)
    assignment = _cluster.run_clusterer(matrix, algorithm, k=curve.chosen_k, seed=config.seed)
    assignment.params["elbow"] = {
        "ks": list(curve.ks),
        "sse": [float(v) for v in curve.values],
        "chosen_k": curve.chosen_k,
    }
    return assignment


def run_matrix(corpus: Corpus, config: RunConfig) -> PipelineRun:
    """Execute the full comparison matrix over a corpus.

    Combos that fail (degenerate features, no viable epsilon, unreachable
    provider, undefined scores) are recorded with their reason and excluded
    from normalization; the run only fails when every combo fails.
    """
    n = len(corpus.records)
    needed = required_records(config)
    if n < needed:
        raise PipelineError(f"corpus needs at least {needed} records, got {n}")
    run_id = compute_run_id(corpus, config)
    timings: dict[str, float] = {}
    started = time.perf_counter()

    stopword_set = (
        load_stopwords(config.stopwords) if config.stopwords else DEFAULT_STOPWORDS
    )
    clock = time.perf_counter()
    docs = [clean_document(r.id, r.message) for r in corpus.records]
    prep_texts = [d.text for d in docs]
    prep_tokens = [d.tokens for d in docs]
    timings["preprocess"] = time.perf_counter() - clock

    matrices: dict[tuple[VectorizerTag, bool], FeatureMatrix] = {}
    failures: dict[str, str] = {}
    word_table_cache: dict = {}
    clock = time.perf_counter()
    for vectorizer in config.vectorizers:
        for preprocessed in _variants(config.preprocessing):
            try:
                matrices[(vectorizer, preprocessed)] = _build_matrix(
                    vectorizer, preprocessed, corpus, config,
                    prep_texts, prep_tokens, word_table_cache,
                )
            except (VectorizeError, ProviderError, OSError) as exc:
                for algorithm in config.clusterers:
                    combo = Combo(vectorizer, preprocessed, algorithm)
                    failures[combo.key] = str(exc)
    timings["vectorize"] = time.perf_counter() - clock

    scores: list[QualityScore] = []
    assignments: dict[str, ClusterAssignment] = {}
    clock = time.perf_counter()
    for (vectorizer, preprocessed), matrix in sorted(
        matrices.items(), key=lambda item: (item[0][0].value, item[0][1])
    ):
        for algorithm in sorted(config.clusterers, key=lambda a: a.value):
            combo = Combo(vectorizer, preprocessed, algorithm)
            try:
                assignment = _cluster_combo(matrix, algorithm, config)
                sc = _sc(matrix, assignment)
                ch = _ch(matrix, assignment)
            except (ClusterError, QualityError) as exc:
                failures[combo.key] = str(exc)
                continue
            assignments[combo.key] = assignment
            scores.append(
                QualityScore(
                    combo=combo,
                    sc=sc,
                    ch=ch,
                    n_clusters=assignment.k,
                    noise_fraction=assignment.noise_count / n,
                )
            )
    timings["cluster"] = time.perf_counter() - clock

    if not scores:
        timings["total"] = time.perf_counter() - started
        return PipelineRun(
            run_id=run_id,
            config=config,
            status=RunStatus.FAILED,
            failures=failures,
            n_records=n,
            timings=timings,
        )

    report = build_report(scores)
    clock = time.perf_counter()
    best = assignments[report.best_combo.key]
    cleaned_by_id = {r.id: clean(r.message) for r in corpus.records}
    clouds: dict[int, KeyphraseCloud] = {}
    labels = np.asarray(best.labels)
    for label in sorted(set(best.labels)):
        member_ids = [best.record_ids[i] for i in np.flatnonzero(labels == label)]
        ranked = rake_extract(
            [cleaned_by_id[rid] for rid in member_ids],
            stopwords=stopword_set,
            top_n=config.top_n_phrases,
        )
        clouds[int(label)] = wordcloud_data(int(label), ranked)
    timings["keyphrase"] = time.perf_counter() - clock
    timings["total"] = time.perf_counter() - started
    return PipelineRun(
        run_id=run_id,
        config=config,
        status=RunStatus.DONE,
        report=report,
        assignments=assignments,
        clouds=clouds,
        failures=failures,
        n_records=n,
        timings=timings,
    )


def _dump_json(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def _combo_to_obj(combo: Combo) -> dict:
    return {
        "vectorizer": combo.vectorizer.value,
        "preprocessed": combo.preprocessed,
        "algorithm": combo.algorithm.value,
    }


def _combo_from_obj(obj: dict) -> Combo:
    return Combo(
        vectorizer=VectorizerTag(obj["vectorizer"]),
        preprocessed=bool(obj["preprocessed"]),
        algorithm=Algorithm(obj["algorithm"]),
    )


def report_to_obj(report: QualityReport) -> dict:
    """JSON-safe report payload, scores in canonical combo order."""
    return {
        "scores": [
            {
                **_combo_to_obj(score.combo),
                "sc": score.sc,
                "ch": score.ch,
                "n_clusters": score.n_clusters,
                "noise_fraction": score.noise_fraction,
                "nsc": report.normalized[i][0],
                "nch": report.normalized[i][1],
            }
            for i, score in enumerate(report.scores)
        ],
        "group_averages": {
            algorithm.value: {"ansc": pair[0], "anch": pair[1]}
            for algorithm, pair in report.group_averages.items()
        },
        "best_combo": _combo_to_obj(report.best_combo),
    }


def report_from_obj(obj: dict) -> QualityReport:
    scores = []
    normalized = []
    for row in obj["scores"]:
        scores.append(
            QualityScore(
                combo=_combo_from_obj(row),
                sc=float(row["sc"]),
                ch=float(row["ch"]),
                n_clusters=int(row["n_clusters"]),
                noise_fraction=float(row["noise_fraction"]),
            )
        )
        normalized.append((float(row["nsc"]), float(row["nch"])))
    averages = {
        Algorithm(name): (float(pair["ansc"]), float(pair["anch"]))
        for name, pair in obj["group_averages"].items()
    }
    return QualityReport(
        scores=tuple(scores),
        normalized=tuple(normalized),
        group_averages=averages,
        best_combo=_combo_from_obj(obj["best_combo"]),
    )


def persist_run(run: PipelineRun, root: str | Path) -> Path:
    """Write a run's artifacts under root/<run_id>, atomically.

    Files are written into a temp directory that is renamed into place, so a
    crash never leaves a partial run directory. Re-persisting an existing
    run id raises RunExistsError. Failed runs persist the manifest with
    failure reasons but no report, assignments or clouds.
    """
    if run.status not in (RunStatus.DONE, RunStatus.FAILED):
        raise PipelineError(f"cannot persist a run in status {run.status.value}")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    target = root / run.run_id
    if target.exists():
        raise RunExistsError(f"run directory exists: {target}")
    tmp = root / f".tmp-{run.run_id}"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir()
    manifest = {
        "run_id": run.run_id,
        "status": run.status.value,
        "config": config_to_obj(run.config),
        "counts": {
            "records": run.n_records,
            "combos_succeeded": len(run.assignments),
            "combos_failed": len(run.failures),
        },
        "failures": dict(sorted(run.failures.items())),
    }
    (tmp / _MANIFEST).write_text(_dump_json(manifest), encoding="utf-8")
    if run.status is RunStatus.DONE:
        (tmp / _REPORT).write_text(_dump_json(report_to_obj(run.report)), encoding="utf-8")
        assignments_obj = {
            key: {
                "record_ids": list(a.record_ids),
                "labels": list(a.labels),
                "k": a.k,
                "algorithm": a.algorithm.value,
                "seed": a.seed,
                "params": a.params,
            }
            for key, a in sorted(run.assignments.items())
        }
        (tmp / _ASSIGNMENTS).write_text(_dump_json(assignments_obj), encoding="utf-8")
        clouds_obj = {
            "best_combo": _combo_to_obj(run.report.best_combo),
            "clouds": [run.clouds[label].to_payload() for label in sorted(run.clouds)],
        }
        (tmp / _CLOUDS).write_text(_dump_json(clouds_obj), encoding="utf-8")
    try:
        os.rename(tmp, target)
    except OSError:
        shutil.rmtree(tmp, ignore_errors=True)
        raise RunExistsError(f"run directory exists: {target}") from None
    return target


def _read_json(path: Path) -> dict:
    if not path.is_file():
        raise CorruptArtifactError(f"missing artifact file: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptArtifactError(f"corrupt artifact file: {path} ({exc})") from None


def load_run(run_id: str, root: str | Path) -> PipelineRun:
    """Reconstruct a persisted run; the inverse of persist_run."""
    target = Path(root) / run_id
    if not target.is_dir():
        raise RunNotFoundError(f"no run directory: {target}")
    manifest = _read_json(target / _MANIFEST)
    try:
        status = RunStatus(manifest["status"])
        config = config_from_obj(manifest["config"])
        run = PipelineRun(
            run_id=manifest["run_id"],
            config=config,
            status=status,
            failures=dict(manifest.get("failures", {})),
            n_records=int(manifest.get("counts", {}).get("records", 0)),
        )
    except (KeyError, ValueError, PipelineError) as exc:
        raise CorruptArtifactError(f"corrupt artifact file: {target / _MANIFEST} ({exc})") from None
    if status is not RunStatus.DONE:
        return run
    report_obj = _read_json(target / _REPORT)
    assignments_obj = _read_json(target / _ASSIGNMENTS)
    clouds_obj = _read_json(target / _CLOUDS)
    try:
        run.report = report_from_obj(report_obj)
        for key, row in assignments_obj.items():
            run.assignments[key] = ClusterAssignment(
                record_ids=tuple(row["record_ids"]),
                labels=tuple(int(x) for x in row["labels"]),
                k=int(row["k"]),
                algorithm=Algorithm(row["algorithm"]),
                params=row["params"],
                seed=int(row["seed"]),
            )
        for payload in clouds_obj["clouds"]:
            cloud = KeyphraseCloud(
                cluster_label=int(payload["cluster"]),
                phrases=tuple(
                    CloudPhrase(text=p["text"], score=float(p["score"]), weight=float(p["weight"]))
                    for p in payload["phrases"]
                ),
            )
            run.clouds[cloud.cluster_label] = cloud
    except (KeyError, ValueError, TypeError) as exc:
        raise CorruptArtifactError(f"corrupt artifact in {target} ({exc})") from None
    return run
