"""Rendering of run results: text table, CSV, JSON and figures.

Everything renders from a PipelineRun (fresh or loaded from artifacts).
Figures are written as PNG files next to whatever delimited output the
caller asked for; rendering uses the Agg backend so no display is needed.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .pipeline import PipelineRun, RunStatus, config_to_obj, report_to_obj
from .quality import QualityReport

_COLUMNS = ("vectorizer", "pre", "algorithm", "k", "noise%", "SC", "CH", "NSC", "NCH")


def _table_rows(report: QualityReport) -> list[tuple[str, ...]]:
    rows = []
    for score, (nsc, nch) in zip(report.scores, report.normalized):
        rows.append(
            (
                score.combo.vectorizer.value,
                "yes" if score.combo.preprocessed else "no",
                score.combo.algorithm.value,
                str(score.n_clusters),
                f"{100.0 * score.noise_fraction:.1f}",
                f"{score.sc:.6g}",
                f"{score.ch:.6g}",
                f"{nsc:.6g}",
                f"{nch:.6g}",
            )
        )
    return rows


def render_table(run: PipelineRun) -> str:
    """Human-readable comparison table with averages, winner and failures."""
    lines: list[str] = [f"run {run.run_id}  status={run.status.value}  records={run.n_records}"]
    if run.report is not None:
        rows = _table_rows(run.report)
        widths = [
            max(len(_COLUMNS[i]), *(len(r[i]) for r in rows)) for i in range(len(_COLUMNS))
        ]
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(_COLUMNS)))
        for row in rows:
            lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
        lines.append("")
        lines.append("per-algorithm averages (ANSC / ANCH):")
        for algorithm, (ansc, anch) in run.report.group_averages.items():
            lines.append(f"  {algorithm.value:14s} {ansc:.6g} / {anch:.6g}")
        lines.append(f"best combo: {run.report.best_combo.key}")
    if run.failures:
        lines.append("failed combos:")
        for key, reason in sorted(run.failures.items()):
            lines.append(f"  {key}: {reason}")
    return "\n".join(lines) + "\n"


def render_csv(run: PipelineRun) -> str:
    """One row per combo, failures included with their reason."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        [
            "vectorizer",
            "preprocessed",
            "algorithm",
            "status",
            "n_clusters",
            "noise_fraction",
            "sc",
            "ch",
            "nsc",
            "nch",
            "reason",
        ]
    )
    if run.report is not None:
        for score, (nsc, nch) in zip(run.report.scores, run.report.normalized):
            writer.writerow(
                [
                    score.combo.vectorizer.value,
                    score.combo.preprocessed,
                    score.combo.algorithm.value,
                    "ok",
                    score.n_clusters,
                    score.noise_fraction,
                    score.sc,
                    score.ch,
                    nsc,
                    nch,
                    "",
                ]
            )
    for key, reason in sorted(run.failures.items()):
        vectorizer, variant, algorithm = key.split("+")
        writer.writerow(
            [vectorizer, variant == "preprocessed", algorithm, "failed", "", "", "", "", "", "", reason]
        )
    return buffer.getvalue()


def render_json(run: PipelineRun) -> str:
    """Machine-readable dump of everything the table shows."""
    body = {
        "run_id": run.run_id,
        "status": run.status.value,
        "n_records": run.n_records,
        "config": config_to_obj(run.config),
        "report": report_to_obj(run.report) if run.report is not None else None,
        "failures": dict(sorted(run.failures.items())),
    }
    return json.dumps(body, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def render_figures(run: PipelineRun, out_dir: str | Path) -> list[Path]:
    """Write PNG figures for a completed run; returns the files created.

    Always: mean normalized score per combo and per-algorithm averages.
    When any combo selected k by elbow, their SSE curves are overlaid in a
    third figure with the chosen k marked.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if run.status is not RunStatus.DONE or run.report is None:
        raise ValueError(f"figures need a completed run, got status {run.status.value}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    keys = [s.combo.key for s in run.report.scores]
    means = [(nsc + nch) / 2.0 for nsc, nch in run.report.normalized]
    fig, ax = plt.subplots(figsize=(8, max(2.5, 0.5 * len(keys))))
    bars = ax.barh(range(len(keys)), means, color="#4878a8")
    best_key = run.report.best_combo.key
    for i, key in enumerate(keys):
        if key == best_key:
            bars[i].set_color("#2a9d5c")
    ax.set_yticks(range(len(keys)))
    ax.set_yticklabels(keys)
    ax.invert_yaxis()
    ax.set_xlabel("mean normalized score")
    ax.set_xlim(0.0, 1.0)
    ax.set_title("combo comparison")
    fig.tight_layout()
    path = out_dir / "combo_scores.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    algorithms = [a.value for a in run.report.group_averages]
    ansc = [pair[0] for pair in run.report.group_averages.values()]
    anch = [pair[1] for pair in run.report.group_averages.values()]
    positions = range(len(algorithms))
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.38
    ax.bar([p - width / 2 for p in positions], ansc, width, label="ANSC", color="#4878a8")
    ax.bar([p + width / 2 for p in positions], anch, width, label="ANCH", color="#d08434")
    ax.set_xticks(list(positions))
    ax.set_xticklabels(algorithms)
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("average normalized score")
    ax.set_title("per-algorithm averages")
    ax.legend()
    fig.tight_layout()
    path = out_dir / "algorithm_averages.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    curves = [
        (key, assignment.params["elbow"])
        for key, assignment in sorted(run.assignments.items())
        if "elbow" in assignment.params
    ]
    if curves:
        fig, ax = plt.subplots(figsize=(7, 4))
        for key, elbow in curves:
            ax.plot(elbow["ks"], elbow["sse"], marker="o", markersize=3, label=key)
            chosen = elbow["chosen_k"]
            sse_at = elbow["sse"][elbow["ks"].index(chosen)]
            ax.plot([chosen], [sse_at], marker="D", markersize=8, color="black", zorder=5)
        ax.set_xlabel("k")
        ax.set_ylabel("within-cluster SSE")
        ax.set_title("elbow curves (diamond = chosen k)")
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = out_dir / "elbow_curves.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    return written
