import { describe, expect, it } from "vitest";

import type { GroupsPayload, LogRecord, RunSummary } from "../src/api.js";
import {
  FONT_MIN_PX,
  FONT_SPAN_PX,
  escapeHtml,
  fontSizePx,
  groupTitle,
  previewLine,
  renderDrilldown,
  renderGroupsBoard,
  renderWordcloud,
} from "../src/render.js";

// Fixture mirroring a real /runs/{id}/groups response for a finished run of
// 60 records in three equal groups.
const GROUPS_FIXTURE: GroupsPayload = {
  run_id: "run-b78c4572151322a5",
  best_combo: { vectorizer: "tfidf", preprocessed: false, algorithm: "kmeans" },
  total_records: 60,
  groups: [
    {
      cluster: 0,
      size: 20,
      noise: false,
      member_ids: ["r000", "r003", "r006"],
      top_phrases: [
        { text: "link aggregation failed", score: 9.0, weight: 1.0 },
        { text: "2 retries", score: 4.0, weight: 0.4444444444444444 },
      ],
    },
    {
      cluster: 1,
      size: 20,
      noise: false,
      member_ids: ["r002", "r005"],
      top_phrases: [
        { text: "spanning tree topology change detected", score: 25.0, weight: 1.0 },
      ],
    },
    {
      cluster: 2,
      size: 20,
      noise: false,
      member_ids: ["r001", "r004"],
      top_phrases: [
        { text: "memory pool exhausted", score: 9.0, weight: 1.0 },
        { text: "buffer allocation", score: 2.25, weight: 0.25 },
      ],
    },
  ],
};

const RUN_FIXTURE: RunSummary = {
  run_id: "run-b78c4572151322a5",
  status: "done",
  n_records: 60,
  config: {},
};

const RECORD_FIXTURE: LogRecord = {
  id: "r000",
  timestamp: "2025-11-02T22:00:00+00:00",
  severity: "critical",
  message: "link aggregation failed on port lag2 after 3 retries\n  trace: lacp state expired\n  trace: giving up",
  branch: "main",
  session_id: "night-0",
};

function countOccurrences(haystack: string, needle: string): number {
  return haystack.split(needle).length - 1;
}

describe("groups board", () => {
  const html = renderGroupsBoard(RUN_FIXTURE, GROUPS_FIXTURE, new Map());

  it("renders one card per group", () => {
    expect(countOccurrences(html, '<section class="group-card"')).toBe(3);
  });

  it("header record count equals the sum of group sizes", () => {
    const sizes = [...html.matchAll(/data-size="(\d+)"/g)].map((m) => Number(m[1]));
    expect(sizes.reduce((a, b) => a + b, 0)).toBe(60);
    expect(html).toContain('data-records="60"');
    expect(html).toContain("60 records");
  });

  it("orders groups by size, then label", () => {
    const labels = [...html.matchAll(/data-cluster="(\d+)"/g)].map((m) => Number(m[1]));
    expect(labels).toEqual([0, 1, 2]);
  });

  it("shows the winning combo", () => {
    expect(html).toContain("tfidf / raw / kmeans");
  });
});

describe("proportional font sizing", () => {
  it("follows min + weight * span", () => {
    expect(fontSizePx(1.0)).toBe(FONT_MIN_PX + FONT_SPAN_PX);
    expect(fontSizePx(0.5)).toBe(FONT_MIN_PX + 0.5 * FONT_SPAN_PX);
    expect(fontSizePx(0.25)).toBe(FONT_MIN_PX + 0.25 * FONT_SPAN_PX);
  });

  it("clamps weights outside (0, 1]", () => {
    expect(fontSizePx(1.7)).toBe(FONT_MIN_PX + FONT_SPAN_PX);
    expect(fontSizePx(-0.2)).toBe(FONT_MIN_PX);
  });

  it("renders the top-weight phrase at max size and scales the rest", () => {
    const html = renderGroupsBoard(RUN_FIXTURE, GROUPS_FIXTURE, new Map());
    expect(html).toContain(`style="font-size:${FONT_MIN_PX + FONT_SPAN_PX}px"`);
    expect(html).toContain(`style="font-size:${FONT_MIN_PX + 0.25 * FONT_SPAN_PX}px"`);
    const sizes = [...html.matchAll(/font-size:([0-9.]+)px/g)].map((m) => Number(m[1]));
    expect(Math.max(...sizes)).toBe(FONT_MIN_PX + FONT_SPAN_PX);
    expect(Math.min(...sizes)).toBeGreaterThan(FONT_MIN_PX);
  });

  it("sorts phrases by weight with lexicographic tie-break", () => {
    const html = renderWordcloud({
      cluster: 0,
      phrases: [
        { text: "beta", score: 2, weight: 0.5 },
        { text: "alpha", score: 2, weight: 0.5 },
        { text: "top", score: 4, weight: 1.0 },
      ],
    });
    const order = [...html.matchAll(/>([a-z ]+)<\/span>/g)].map((m) => m[1]);
    expect(order).toEqual(["top", "alpha", "beta"]);
  });
});

describe("drill-down", () => {
  const html = renderDrilldown(RECORD_FIXTURE);

  it("keeps the multi-line message untransformed inside <pre>", () => {
    const pre = html.match(/<pre class="log-message">([\s\S]*)<\/pre>/);
    const body = pre?.[1] ?? "";
    expect(body).toBe(
      "link aggregation failed on port lag2 after 3 retries\n  trace: lacp state expired\n  trace: giving up",
    );
    expect(body.split("\n")).toHaveLength(3);
  });

  it("shows the metadata header", () => {
    for (const field of ["r000", "2025-11-02T22:00:00+00:00", "critical", "main", "night-0"]) {
      expect(html).toContain(field);
    }
  });

  it("exposes the record id for copy-to-clipboard", () => {
    expect(html).toContain('data-copy="r000"');
  });

  it("escapes markup hidden in log content", () => {
    const hostile = renderDrilldown({
      ...RECORD_FIXTURE,
      message: 'fail <script>alert("x")</script> & exit',
    });
    expect(hostile).not.toContain("<script>");
    expect(hostile).toContain("&lt;script&gt;");
    expect(hostile).toContain("&amp; exit");
  });

  it("handles records without timestamps", () => {
    const bare = renderDrilldown({ ...RECORD_FIXTURE, timestamp: null });
    expect(bare).toContain("no timestamp");
  });
});

describe("noise groups", () => {
  const withNoise: GroupsPayload = {
    ...GROUPS_FIXTURE,
    total_records: 63,
    groups: [
      ...GROUPS_FIXTURE.groups,
      { cluster: -1, size: 3, noise: true, member_ids: ["r900"], top_phrases: [] },
    ],
  };

  it("labels the noise group and styles it apart", () => {
    const html = renderGroupsBoard(RUN_FIXTURE, withNoise, new Map());
    expect(html).toContain("unclustered");
    expect(html).toContain('class="group-card noise"');
    expect(groupTitle({ cluster: -1, noise: true })).toBe("unclustered");
    expect(groupTitle({ cluster: 2, noise: false })).toBe("group 2");
  });
});

describe("previews", () => {
  it("shows first line, timestamp and branch per member", () => {
    const records = new Map<string, LogRecord>([["r000", RECORD_FIXTURE]]);
    const html = renderGroupsBoard(RUN_FIXTURE, GROUPS_FIXTURE, records);
    expect(html).toContain('data-record-id="r000"');
    expect(html).toContain("link aggregation failed on port lag2 after 3 retries");
    expect(html).not.toContain("trace: lacp state expired");
  });

  it("truncates long first lines at the budget with an ellipsis", () => {
    const line = "x".repeat(300);
    const preview = previewLine(line + "\nsecond");
    expect(preview).toHaveLength(96);
    expect(preview.endsWith("…")).toBe(true);
    expect(previewLine("short one\nsecond")).toBe("short one");
  });
});

describe("escapeHtml", () => {
  it("escapes the five significant characters", () => {
    expect(escapeHtml(`<a href="x" title='y'>&</a>`)).toBe(
      "&lt;a href=&quot;x&quot; title=&#39;y&#39;&gt;&amp;&lt;/a&gt;",
    );
  });
});
