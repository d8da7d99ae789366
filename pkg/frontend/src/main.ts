/** DOM wiring: binds the session machine to the page. */

import { ApiClient } from "./api.js";
import { LocalPendingStore, ReviewSession, SessionState } from "./session.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function startApp(reviewerId: string): void {
  const api = new ApiClient("");
  const session = new ReviewSession({
    api,
    reviewerId,
    store: new LocalPendingStore(`heightqa-pending-${reviewerId}`),
    onChange: render,
  });

  const loginPanel = el<HTMLDivElement>("login-panel");
  const reviewPanel = el<HTMLDivElement>("review-panel");
  const donePanel = el<HTMLDivElement>("done-panel");
  const question = el<HTMLParagraphElement>("question");
  const answer = el<HTMLParagraphElement>("answer");
  const taskTag = el<HTMLSpanElement>("task-tag");
  const overlay = el<HTMLImageElement>("overlay");
  const notice = el<HTMLDivElement>("notice");
  const retryBanner = el<HTMLDivElement>("retry-banner");
  const retryButton = el<HTMLButtonElement>("retry-button");
  const progressLine = el<HTMLDivElement>("progress-line");
  const doneSummary = el<HTMLDivElement>("done-summary");
  const verdictButtons: Record<string, HTMLButtonElement> = {
    correct: el<HTMLButtonElement>("btn-correct"),
    incorrect: el<HTMLButtonElement>("btn-incorrect"),
    ambiguous: el<HTMLButtonElement>("btn-ambiguous"),
  };

  let zoomed = false;

  function render(state: SessionState): void {
    loginPanel.hidden = true;
    reviewPanel.hidden = state.phase === "done";
    donePanel.hidden = state.phase !== "done";

    const enabled = session.canSubmit();
    for (const button of Object.values(verdictButtons)) {
      button.disabled = !enabled;
    }

    if (state.item) {
      question.textContent = state.item.question;
      answer.textContent = state.item.answer;
      taskTag.textContent = `${state.item.task} · ${state.item.record_id}`;
      overlay.src = api.overlayUrl(state.item.overlay_image_ref);
    }
    overlay.style.opacity = state.overlayVisible ? "1" : "0.25";
    overlay.title = state.overlayVisible
      ? "mask shown (space to hide)"
      : "mask hidden (space to show)";

    notice.hidden = !state.notice;
    notice.textContent = state.notice ?? "";
    retryBanner.hidden = !state.retryBanner;
    el<HTMLSpanElement>("retry-text").textContent = state.retryBanner ?? "";
    progressLine.textContent =
      `${state.reviewed} verdict(s) sent as ${reviewerId}` +
      (state.phase === "submitting" ? " — sending…" : "");

    if (state.phase === "done" && state.progress) {
      const p = state.progress;
      doneSummary.textContent =
        `All caught up. ${p.complete}/${p.total} items complete, ` +
        `${p.partially_reviewed} partially reviewed, ${p.verdicts} verdicts total.`;
    }
  }

  for (const [verdict, button] of Object.entries(verdictButtons)) {
    button.addEventListener("click", () => {
      void session.submitVerdict(verdict as "correct" | "incorrect" | "ambiguous");
    });
  }
  retryButton.addEventListener("click", () => void session.retry());
  overlay.addEventListener("click", () => {
    zoomed = !zoomed;
    overlay.classList.toggle("zoomed", zoomed);
  });
  document.addEventListener("keydown", (event) => {
    if (event.target instanceof HTMLInputElement) {
      return;
    }
    if (event.key === " ") {
      event.preventDefault();
    }
    void session.handleKey(event.key);
  });

  void session.start();
}

function init(): void {
  const form = el<HTMLFormElement>("login-form");
  const input = el<HTMLInputElement>("reviewer-input");
  const saved = window.localStorage.getItem("heightqa-reviewer");
  if (saved) {
    input.value = saved;
  }
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const reviewerId = input.value.trim();
    if (reviewerId) {
      window.localStorage.setItem("heightqa-reviewer", reviewerId);
      startApp(reviewerId);
    }
  });
}

document.addEventListener("DOMContentLoaded", init);
