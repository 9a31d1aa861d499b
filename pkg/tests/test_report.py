import csv
import dataclasses
import io
import json

import pytest

from loggrouper.pipeline import RunStatus, config_from_obj
from loggrouper.report import render_csv, render_figures, render_json, render_table

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


class TestTable:
    def test_header_line(self, template_run):
        table = render_table(template_run)
        first = table.splitlines()[0]
        assert first == f"run {template_run.run_id}  status=done  records=60"

    def test_one_row_per_scored_combo(self, template_run):
        table = render_table(template_run)
        for score in template_run.report.scores:
            assert score.combo.algorithm.value in table
        # six scored rows between the column header and the blank separator
        lines = table.splitlines()
        start = next(i for i, l in enumerate(lines) if l.startswith("vectorizer"))
        end = lines.index("", start)
        assert end - start - 1 == len(template_run.report.scores)

    def test_best_combo_and_failures_sections(self, template_run):
        table = render_table(template_run)
        assert f"best combo: {template_run.report.best_combo.key}" in table
        assert "failed combos:" in table
        for key, reason in template_run.failures.items():
            assert f"  {key}: {reason}" in table

    def test_failed_run_renders_without_report(self, template_run):
        failed = dataclasses.replace(template_run, status=RunStatus.FAILED, report=None)
        table = render_table(failed)
        assert "status=failed" in table
        assert "best combo" not in table
        assert "failed combos:" in table

    def test_ends_with_newline(self, template_run):
        assert render_table(template_run).endswith("\n")


class TestCsv:
    def test_row_counts(self, template_run):
        rows = list(csv.reader(io.StringIO(render_csv(template_run))))
        expected = 1 + len(template_run.report.scores) + len(template_run.failures)
        assert len(rows) == expected

    def test_ok_rows_carry_scores(self, template_run):
        rows = list(csv.reader(io.StringIO(render_csv(template_run))))
        header = rows[0]
        assert header[0] == "vectorizer" and header[-1] == "reason"
        ok = [r for r in rows[1:] if r[3] == "ok"]
        assert len(ok) == len(template_run.report.scores)
        for row, score in zip(ok, template_run.report.scores):
            assert row[0] == score.combo.vectorizer.value
            assert row[1] == str(score.combo.preprocessed)
            assert float(row[6]) == score.sc
            assert row[10] == ""

    def test_failed_rows_carry_reason(self, template_run):
        rows = list(csv.reader(io.StringIO(render_csv(template_run))))
        failed = [r for r in rows[1:] if r[3] == "failed"]
        assert len(failed) == len(template_run.failures)
        for row in failed:
            key = f"{row[0]}+{'preprocessed' if row[1] == 'True' else 'raw'}+{row[2]}"
            assert row[10] == template_run.failures[key]
            assert row[4] == ""  # no cluster count on a failure


class TestJson:
    def test_round_trip(self, template_run):
        text = render_json(template_run)
        assert text.endswith("\n")
        body = json.loads(text)
        assert body["run_id"] == template_run.run_id
        assert body["status"] == "done"
        assert body["n_records"] == 60
        assert config_from_obj(body["config"]) == template_run.config
        assert body["failures"] == template_run.failures
        assert len(body["report"]["scores"]) == len(template_run.report.scores)

    def test_failed_run_has_null_report(self, template_run):
        failed = dataclasses.replace(template_run, status=RunStatus.FAILED, report=None)
        body = json.loads(render_json(failed))
        assert body["report"] is None


class TestFigures:
    def test_writes_three_pngs(self, template_run, tmp_path):
        written = render_figures(template_run, tmp_path)
        names = [p.name for p in written]
        assert names == ["combo_scores.png", "algorithm_averages.png", "elbow_curves.png"]
        for path in written:
            assert path.read_bytes()[:8] == PNG_MAGIC

    def test_elbow_figure_skipped_without_curves(self, template_run, tmp_path):
        bare = dataclasses.replace(template_run, assignments={})
        written = render_figures(bare, tmp_path)
        assert [p.name for p in written] == ["combo_scores.png", "algorithm_averages.png"]

    def test_requires_completed_run(self, template_run, tmp_path):
        failed = dataclasses.replace(template_run, status=RunStatus.FAILED, report=None)
        with pytest.raises(ValueError, match="completed run"):
            render_figures(failed, tmp_path)

    def test_creates_output_directory(self, template_run, tmp_path):
        target = tmp_path / "deep" / "figs"
        written = render_figures(template_run, target)
        assert all(p.parent == target for p in written)
