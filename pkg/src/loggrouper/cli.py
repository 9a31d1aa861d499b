"""Command-line entry points.

Exit codes: 0 success, 2 usage or parse errors, 3 too little data to work
with, 4 every combo failed, 5 the server port could not be bound.
"""
from __future__ import annotations

import dataclasses
import socket
import sys
from pathlib import Path

import click

from .cluster import Algorithm
from .errors import (
    EmptyWindowError,
    IngestError,
    PipelineError,
    RunExistsError,
    RunNotFoundError,
    CorruptArtifactError,
    WindowPlacementError,
)
from .ingest import (
    WindowSpec,
    load_rules,
    parse_plaintext,
    parse_rfc3339,
    parse_structured,
    select_window,
    serialize_records,
)
from .pipeline import (
    DEFAULT_SEED,
    Preprocessing,
    RunConfig,
    RunStatus,
    load_run,
    persist_run,
    run_matrix,
)
from .report import render_csv, render_figures, render_json, render_table
from .service import create_app, load_service_config
from .vectorize import VectorizerTag

EXIT_USAGE = 2
EXIT_EMPTY = 3
EXIT_ALL_FAILED = 4
EXIT_BIND = 5


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    raise SystemExit(code)


@click.group()
def main() -> None:
    """Group nightly failure logs and compare clustering configurations."""


@main.command()
@click.option("--input", "input_file", type=click.File("r"), required=True,
              help="Log file to read; use - for stdin.")
@click.option("--format", "fmt", type=click.Choice(["jsonl", "plain"]), default="jsonl",
              show_default=True, help="Input format.")
@click.option("--rules", "rules_path", type=click.Path(dir_okay=False), default=None,
              help="Extraction rules file, required for plain format.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True,
              help="Where to write the normalized JSONL records.")
def ingest(input_file, fmt: str, rules_path: str | None, out_path: str) -> None:
    """Parse raw logs into normalized JSONL records."""
    try:
        if fmt == "plain":
            if rules_path is None:
                raise click.UsageError("--rules is required with --format plain")
            rules = load_rules(rules_path)
            source = getattr(input_file, "name", "") or ""
            result = parse_plaintext(input_file, rules, source=source)
        else:
            result = parse_structured(input_file)
    except (IngestError, OSError) as exc:
        _fail(EXIT_USAGE, str(exc))
    for warning in result.warnings:
        click.echo(f"warning: {warning}", err=True)
    if not result.records:
        _fail(EXIT_EMPTY, f"no records parsed ({result.dropped} dropped by severity)")
    Path(out_path).write_text(serialize_records(result.records), encoding="utf-8")
    click.echo(f"wrote {len(result.records)} records to {out_path} ({result.dropped} dropped)")


def _parse_enum_list(raw: str, enum_cls, what: str) -> tuple:
    values = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            values.append(enum_cls(part))
        except ValueError:
            choices = ", ".join(e.value for e in enum_cls)
            raise click.UsageError(f"unknown {what} {part!r} (choose from {choices})")
    if not values:
        raise click.UsageError(f"no {what} given")
    return tuple(values)


def _parse_k_range(raw: str) -> tuple[int, ...]:
    try:
        if ":" in raw:
            lo, hi = raw.split(":", 1)
            return tuple(range(int(lo), int(hi) + 1))
        return tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError:
        raise click.UsageError(f"bad k range {raw!r}; use LO:HI or a comma list")


@main.command(name="run")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="JSONL records produced by ingest.")
@click.option("--from", "start", required=True, help="Window start (RFC 3339).")
@click.option("--to", "end", required=True, help="Window end (RFC 3339), exclusive.")
@click.option("--branches", default="", help="Comma-separated branch filter; empty = all.")
@click.option("--vectorizers", default="tfidf", show_default=True)
@click.option("--clusterers", default="kmeans,agglomerative,dbscan,spectral", show_default=True)
@click.option("--preprocess", type=click.Choice(["raw", "preprocessed", "both"]),
              default="both", show_default=True)
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
@click.option("--k-range", "k_range", default=None,
              help="Candidate cluster counts, LO:HI or comma list; default 2..min(15, n-1).")
@click.option("--word-vectors", "word_vectors", type=click.Path(dir_okay=False), default=None,
              help=".vec file for the fasttext vectorizer.")
@click.option("--provider", default=None,
              help="External embedding endpoint (http(s) URL or JSONL file).")
@click.option("--stopwords", type=click.Path(dir_okay=False), default=None,
              help="Stop-word file for keyphrase extraction.")
@click.option("--top-n", "top_n", type=int, default=15, show_default=True,
              help="Key phrases kept per group.")
@click.option("--out", "out_root", type=click.Path(file_okay=False), required=True,
              help="Artifact root; the run writes into <out>/<run-id>/.")
def run_command(
    corpus_path: str,
    start: str,
    end: str,
    branches: str,
    vectorizers: str,
    clusterers: str,
    preprocess: str,
    seed: int,
    k_range: str | None,
    word_vectors: str | None,
    provider: str | None,
    stopwords: str | None,
    top_n: int,
    out_root: str,
) -> None:
    """Cluster a windowed corpus across every requested combo."""
    try:
        window = WindowSpec(
            start=parse_rfc3339(start),
            end=parse_rfc3339(end),
            branches=frozenset(b.strip() for b in branches.split(",") if b.strip()),
        )
        config = RunConfig(
            window=window,
            vectorizers=_parse_enum_list(vectorizers, VectorizerTag, "vectorizer"),
            clusterers=_parse_enum_list(clusterers, Algorithm, "clusterer"),
            preprocessing=Preprocessing(preprocess),
            seed=seed,
            k_range=_parse_k_range(k_range) if k_range else None,
            provider=provider,
            word_vectors=word_vectors,
            stopwords=stopwords,
            top_n_phrases=top_n,
        )
    except (IngestError, PipelineError) as exc:
        _fail(EXIT_USAGE, str(exc))
    try:
        parsed = parse_structured(Path(corpus_path).read_text(encoding="utf-8"))
    except (IngestError, OSError) as exc:
        _fail(EXIT_USAGE, str(exc))
    try:
        corpus = select_window(parsed.records, window)
    except (EmptyWindowError, WindowPlacementError) as exc:
        _fail(EXIT_EMPTY, str(exc))
    except IngestError as exc:
        _fail(EXIT_USAGE, str(exc))
    try:
        result = run_matrix(corpus, config)
    except PipelineError as exc:
        _fail(EXIT_EMPTY, str(exc))
    try:
        target = persist_run(result, out_root)
        click.echo(f"artifacts: {target}")
    except RunExistsError:
        click.echo(f"artifacts already exist for {result.run_id}; leaving them in place")
    if result.status is RunStatus.FAILED:
        for key, reason in sorted(result.failures.items()):
            click.echo(f"failed: {key}: {reason}", err=True)
        _fail(EXIT_ALL_FAILED, "every combo failed")
    click.echo(render_table(result), nl=False)


@main.command()
@click.option("--run", "run_dir", type=click.Path(exists=True, file_okay=False),
              required=True, help="A run directory written by the run command.")
@click.option("--format", "fmt", type=click.Choice(["table", "json", "csv"]),
              default="table", show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write the report here instead of stdout.")
@click.option("--figures-dir", "figures_dir", type=click.Path(file_okay=False), default=None,
              help="Directory for PNG figures; defaults next to --out.")
def report(run_dir: str, fmt: str, out_path: str | None, figures_dir: str | None) -> None:
    """Render a persisted run as a table, JSON or CSV, plus figures."""
    run_path = Path(run_dir)
    try:
        result = load_run(run_path.name, run_path.parent)
    except (RunNotFoundError, CorruptArtifactError, PipelineError) as exc:
        _fail(EXIT_USAGE, str(exc))
    rendered = {"table": render_table, "json": render_json, "csv": render_csv}[fmt](result)
    if out_path is not None:
        Path(out_path).write_text(rendered, encoding="utf-8")
        click.echo(f"report: {out_path}")
        if figures_dir is None:
            figures_dir = str(Path(out_path).resolve().parent)
    else:
        click.echo(rendered, nl=False)
    if figures_dir is not None and result.status is RunStatus.DONE:
        for figure in render_figures(result, figures_dir):
            click.echo(f"figure: {figure}", err=True)


@main.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="JSON file with host, port, artifact_root, static_dir.")
@click.option("--host", default=None, help="Override the bind host.")
@click.option("--port", type=int, default=None, help="Override the bind port.")
@click.option("--artifact-root", "artifact_root", type=click.Path(file_okay=False), default=None)
@click.option("--static-dir", "static_dir", type=click.Path(file_okay=False), default=None,
              help="Serve a built review UI from this directory under /ui.")
def serve(
    config_path: str | None,
    host: str | None,
    port: int | None,
    artifact_root: str | None,
    static_dir: str | None,
) -> None:
    """Start the REST API server."""
    try:
        service_config = load_service_config(config_path)
    except ValueError as exc:
        _fail(EXIT_USAGE, str(exc))
    overrides = {
        key: value
        for key, value in (
            ("host", host),
            ("port", port),
            ("artifact_root", artifact_root),
            ("static_dir", static_dir),
        )
        if value is not None
    }
    if overrides:
        service_config = dataclasses.replace(service_config, **overrides)
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((service_config.host, service_config.port))
    except OSError as exc:
        probe.close()
        _fail(EXIT_BIND, f"cannot bind {service_config.host}:{service_config.port}: {exc}")
    probe.close()
    app = create_app(service_config)
    click.echo(f"listening on {service_config.host}:{service_config.port}")
    import uvicorn

    uvicorn.run(app, host=service_config.host, port=service_config.port, log_level="warning")


if __name__ == "__main__":
    main(prog_name="loggrouper")
