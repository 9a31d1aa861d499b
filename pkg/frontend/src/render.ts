// Pure HTML-string renderers. Keeping these free of DOM state makes the
// board deterministic for a given payload and directly testable.
import type { CloudPayload, GroupPayload, GroupsPayload, LogRecord, Phrase, RunSummary } from "./api.js";

export const FONT_MIN_PX = 12;
export const FONT_SPAN_PX = 20;
export const PREVIEW_BUDGET = 96;

const ESCAPES: Record<string, string> = {
  "&": "&amp;",
  "<": "&lt;",
  ">": "&gt;",
  '"': "&quot;",
  "'": "&#39;",
};

export function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (ch) => ESCAPES[ch] ?? ch);
}

// font-size = min + weight * span, with weights clamped into (0, 1].
export function fontSizePx(weight: number, min = FONT_MIN_PX, span = FONT_SPAN_PX): number {
  const clamped = Math.min(1, Math.max(0, weight));
  return min + clamped * span;
}

// First line of the raw message, cut to the preview budget with an ellipsis.
export function previewLine(message: string, budget = PREVIEW_BUDGET): string {
  const firstLine = message.split("\n", 1)[0] ?? "";
  if (firstLine.length <= budget) return firstLine;
  return firstLine.slice(0, budget - 1) + "…";
}

export function groupTitle(group: Pick<GroupPayload, "cluster" | "noise">): string {
  return group.noise ? "unclustered" : `group ${group.cluster}`;
}

function phraseSpans(phrases: Phrase[]): string {
  const ordered = [...phrases].sort((a, b) => b.weight - a.weight || a.text.localeCompare(b.text));
  return ordered
    .map(
      (phrase) =>
        `<span class="phrase" style="font-size:${fontSizePx(phrase.weight)}px"` +
        ` title="score ${phrase.score}">${escapeHtml(phrase.text)}</span>`,
    )
    .join(" ");
}

export function renderWordcloud(payload: CloudPayload): string {
  return `<div class="wordcloud" data-cluster="${payload.cluster}">${phraseSpans(payload.phrases)}</div>`;
}

function previewItems(group: GroupPayload, records: Map<string, LogRecord>): string {
  const items = group.member_ids
    .map((id) => records.get(id))
    .filter((record): record is LogRecord => record !== undefined)
    .map((record) => {
      const stamp = record.timestamp ?? "no timestamp";
      return (
        `<li class="preview" data-record-id="${escapeHtml(record.id)}">` +
        `<span class="stamp">${escapeHtml(stamp)}</span>` +
        `<span class="branch">${escapeHtml(record.branch)}</span>` +
        `<span class="first-line">${escapeHtml(previewLine(record.message))}</span></li>`
      );
    });
  return items.join("");
}

export function renderGroupCard(group: GroupPayload, records: Map<string, LogRecord>): string {
  const classes = group.noise ? "group-card noise" : "group-card";
  return (
    `<section class="${classes}" data-cluster="${group.cluster}" data-size="${group.size}">` +
    `<h2>${groupTitle(group)} <span class="size">${group.size}</span></h2>` +
    `<div class="wordcloud">${phraseSpans(group.top_phrases)}</div>` +
    `<ul class="previews">${previewItems(group, records)}</ul>` +
    `</section>`
  );
}

export function renderRunHeader(run: RunSummary, payload: GroupsPayload): string {
  const combo = payload.best_combo;
  const pre = combo.preprocessed ? "preprocessed" : "raw";
  return (
    `<header class="run-header" data-records="${payload.total_records}">` +
    `<span class="run-id">${escapeHtml(run.run_id)}</span>` +
    `<span class="records">${payload.total_records} records</span>` +
    `<span class="combo">${escapeHtml(`${combo.vectorizer} / ${pre} / ${combo.algorithm}`)}</span>` +
    `</header>`
  );
}

export function renderGroupsBoard(
  run: RunSummary,
  payload: GroupsPayload,
  records: Map<string, LogRecord>,
): string {
  const ordered = [...payload.groups].sort((a, b) => b.size - a.size || a.cluster - b.cluster);
  const cards = ordered.map((group) => renderGroupCard(group, records)).join("");
  return renderRunHeader(run, payload) + `<main class="groups">${cards}</main>`;
}

// Raw log view: metadata header plus the untransformed message. The message
// goes inside <pre> so line structure survives exactly as logged.
export function renderDrilldown(record: LogRecord): string {
  const stamp = record.timestamp ?? "no timestamp";
  return (
    `<article class="drilldown" data-record-id="${escapeHtml(record.id)}">` +
    `<header><span class="record-id">${escapeHtml(record.id)}</span>` +
    `<span class="stamp">${escapeHtml(stamp)}</span>` +
    `<span class="severity">${escapeHtml(record.severity)}</span>` +
    `<span class="branch">${escapeHtml(record.branch)}</span>` +
    `<span class="session">${escapeHtml(record.session_id)}</span>` +
    `<button class="copy-id" data-copy="${escapeHtml(record.id)}">copy id</button>` +
    `</header>` +
    `<pre class="log-message">${escapeHtml(record.message)}</pre>` +
    `</article>`
  );
}

export function renderBanner(text: string, retryable: boolean): string {
  const classes = retryable ? "banner retryable" : "banner";
  const retry = retryable ? `<button class="retry">retry</button>` : "";
  return `<div class="${classes}" role="alert">${escapeHtml(text)}${retry}</div>`;
}

export function renderSpinner(statusText: string): string {
  return `<div class="spinner" role="status">${escapeHtml(statusText)}</div>`;
}
