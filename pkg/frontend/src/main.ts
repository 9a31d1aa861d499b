// DOM wiring. All logic that deserves tests lives in api/poll/window/render;
// this file only moves data between them and the page.
import { ApiClient, ApiError, bannerFor, type LogRecord } from "./api.js";
import { pollRun, PollCancelled, type PollHandle } from "./poll.js";
import { renderBanner, renderDrilldown, renderGroupsBoard, renderSpinner } from "./render.js";
import { buildRunRequest, presetBounds, type PresetName } from "./window.js";

const PREVIEWS_PER_GROUP = 3;

const api = new ApiClient((input, init) => fetch(input, init));

const board = document.querySelector<HTMLElement>("#board")!;
const detail = document.querySelector<HTMLElement>("#detail")!;
const form = document.querySelector<HTMLFormElement>("#window-form")!;
const fromInput = document.querySelector<HTMLInputElement>("#from")!;
const toInput = document.querySelector<HTMLInputElement>("#to")!;
const branchesInput = document.querySelector<HTMLInputElement>("#branches")!;
const corpusInput = document.querySelector<HTMLInputElement>("#corpus")!;
const runInput = document.querySelector<HTMLInputElement>("#run-id")!;

let activePoll: PollHandle | null = null;

function showBanner(error: unknown): void {
  const banner = bannerFor(error);
  board.innerHTML = renderBanner(banner.text, banner.retryable);
}

function cancelActivePoll(): void {
  if (activePoll !== null) {
    activePoll.done.catch(() => undefined);
    activePoll.cancel();
    activePoll = null;
  }
}

async function showRun(runId: string): Promise<void> {
  cancelActivePoll();
  board.innerHTML = renderSpinner("waiting for the run to finish…");
  const handle = pollRun(() => api.getRun(runId), {
    onUpdate: (summary) => {
      board.innerHTML = renderSpinner(`run ${summary.run_id} is ${summary.status}…`);
    },
  });
  activePoll = handle;
  let summary;
  try {
    summary = await handle.done;
  } catch (error) {
    if (!(error instanceof PollCancelled)) showBanner(error);
    return;
  }
  activePoll = null;
  if (summary.status === "failed") {
    const message = summary.error?.message ?? "the run failed";
    showBanner(new ApiError(summary.error?.code ?? "internal", message, 0));
    return;
  }
  try {
    const groups = await api.getGroups(runId);
    const previewIds = groups.groups.flatMap((group) =>
      group.member_ids.slice(0, PREVIEWS_PER_GROUP),
    );
    const records = new Map<string, LogRecord>();
    for (const id of previewIds) {
      records.set(id, await api.getLog(id));
    }
    board.innerHTML = renderGroupsBoard(summary, groups, records);
  } catch (error) {
    showBanner(error);
  }
}

form.addEventListener("submit", (event) => {
  event.preventDefault();
  const branches = branchesInput.value.split(",").map((branch) => branch.trim());
  const request = buildRunRequest(
    { from: fromInput.value, to: toInput.value, branches },
    corpusInput.value,
  );
  api
    .postRun(request)
    .then((accepted) => {
      runInput.value = accepted.run_id;
      return showRun(accepted.run_id);
    })
    .catch(showBanner);
});

document.querySelectorAll<HTMLButtonElement>("button[data-preset]").forEach((button) => {
  button.addEventListener("click", () => {
    const bounds = presetBounds(button.dataset.preset as PresetName, new Date());
    fromInput.value = bounds.from;
    toInput.value = bounds.to;
  });
});

document.querySelector<HTMLButtonElement>("#open-run")!.addEventListener("click", () => {
  const runId = runInput.value.trim();
  if (runId) void showRun(runId);
});

board.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const preview = target.closest<HTMLElement>("[data-record-id]");
  if (preview === null) return;
  const recordId = preview.dataset.recordId!;
  api
    .getLog(recordId)
    .then((record) => {
      detail.innerHTML = renderDrilldown(record);
    })
    .catch((error) => {
      const banner = bannerFor(error);
      detail.innerHTML = renderBanner(banner.text, banner.retryable);
    });
});

detail.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  if (target.matches("button.copy-id")) {
    void navigator.clipboard.writeText(target.dataset.copy ?? "");
  }
});
