/**
 * Annotation UI: splits overview, step-by-step label entry with keyboard
 * shortcuts, skip, and the reviewer accept/return flow. Plain DOM, no
 * framework; every interactive element carries a data attribute so scripted
 * sessions can drive it.
 */

import { AnnotationApi, ApiError, ConflictError, NetworkError, SplitSummary } from "./api.js";
import {
  Session,
  StepLabel,
  TaskView,
  canSubmit,
  handleKey,
  labeledCount,
  setLabel,
  startSession,
} from "./state.js";

type View = "splits" | "annotate" | "review";

interface Banner {
  text: string;
  action: "retry" | "reload" | null;
}

const LABELS: StepLabel[] = ["positive", "negative", "neutral"];

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export class App {
  private view: View = "splits";
  private splits: SplitSummary[] = [];
  private task: TaskView | null = null;
  private session: Session | null = null;
  private reviewSplit: number | null = null;
  private reviewTasks: TaskView[] = [];
  private banner: Banner | null = null;
  private queue: Promise<void> = Promise.resolve();
  private lastSubmit: (() => Promise<void>) | null = null;

  constructor(
    private root: HTMLElement,
    private api: AnnotationApi,
    private assignee: string,
  ) {
    root.addEventListener("click", (event) => this.onClick(event));
    root.ownerDocument.addEventListener("keydown", (event) => this.onKey(event));
  }

  /** Resolves when all queued user actions have settled (test hook). */
  whenIdle(): Promise<void> {
    return this.queue;
  }

  start(): Promise<void> {
    return this.enqueue(() => this.showSplits());
  }

  private enqueue(action: () => Promise<void>): Promise<void> {
    this.queue = this.queue.then(action).catch((error) => this.fail(error));
    return this.queue;
  }

  private async fail(error: unknown): Promise<void> {
    if (error instanceof ConflictError) {
      this.banner = { text: `Task changed elsewhere: ${error.message}. Reload it?`, action: "reload" };
    } else if (error instanceof NetworkError) {
      this.banner = { text: `Network trouble: ${error.message}. Your selections are kept.`, action: "retry" };
    } else if (error instanceof ApiError) {
      this.banner = { text: error.message, action: null };
    } else {
      this.banner = { text: String(error), action: null };
    }
    this.render();
  }

  // -- actions ----------------------------------------------------------------

  private async showSplits(): Promise<void> {
    this.splits = await this.api.listSplits();
    this.view = "splits";
    this.task = null;
    this.session = null;
    this.render();
  }

  private async claimNext(splitId: number): Promise<void> {
    try {
      this.task = await this.api.claim(splitId, this.assignee);
    } catch (error) {
      if (error instanceof ApiError && error.status === 400) {
        this.banner = { text: "No claimable task left in this split.", action: null };
        await this.showSplits();
        return;
      }
      throw error;
    }
    this.session = startSession(this.task);
    this.view = "annotate";
    this.banner = null;
    this.render();
  }

  private async submit(): Promise<void> {
    const session = this.session;
    const task = this.task;
    if (!session || !task || !canSubmit(session)) return;
    const submitOnce = async () => {
      await this.api.submitLabels(task.task_id, session.labels as StepLabel[], session.version);
      this.lastSubmit = null;
      await this.claimNext(task.split_id);
    };
    this.lastSubmit = submitOnce;
    await submitOnce();
  }

  private async skip(): Promise<void> {
    const task = this.task;
    const session = this.session;
    if (!task || !session) return;
    await this.api.skip(task.task_id, session.version);
    await this.claimNext(task.split_id);
  }

  private async reloadTask(): Promise<void> {
    if (!this.task) return;
    this.task = await this.api.task(this.task.task_id);
    this.session = startSession(this.task);
    this.banner = null;
    this.render();
  }

  private async openReview(splitId: number): Promise<void> {
    const split = this.splits.find((s) => s.split_id === splitId);
    let taskIds: string[];
    if (split && split.state === "in_review") {
      taskIds = split.review_task_ids;
    } else {
      taskIds = (await this.api.sampleReview(splitId)).task_ids;
    }
    this.reviewSplit = splitId;
    this.reviewTasks = await Promise.all(taskIds.map((id) => this.api.task(id)));
    this.view = "review";
    this.banner = null;
    this.render();
  }

  private async resolveReview(accepted: boolean): Promise<void> {
    if (this.reviewSplit === null) return;
    await this.api.resolveReview(this.reviewSplit, accepted);
    this.reviewSplit = null;
    await this.showSplits();
  }

  // -- events -----------------------------------------------------------------

  private onClick(event: Event): void {
    const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
    if (!target || target.hasAttribute("disabled")) return;
    const action = target.dataset.action;
    if (action === "annotate") {
      void this.enqueue(() => this.claimNext(Number(target.dataset.split)));
    } else if (action === "review") {
      void this.enqueue(() => this.openReview(Number(target.dataset.split)));
    } else if (action === "label") {
      this.applyLabel(Number(target.dataset.step), target.dataset.label as StepLabel);
    } else if (action === "submit") {
      void this.enqueue(() => this.submit());
    } else if (action === "skip") {
      void this.enqueue(() => this.skip());
    } else if (action === "back") {
      void this.enqueue(() => this.showSplits());
    } else if (action === "accept") {
      void this.enqueue(() => this.resolveReview(true));
    } else if (action === "return") {
      void this.enqueue(() => this.resolveReview(false));
    } else if (action === "retry") {
      const retry = this.lastSubmit;
      this.banner = null;
      if (retry) void this.enqueue(retry);
      else this.render();
    } else if (action === "reload") {
      void this.enqueue(() => this.reloadTask());
    }
  }

  private onKey(event: KeyboardEvent): void {
    if (this.view !== "annotate" || !this.session) return;
    const updated = handleKey(this.session, event.key);
    if (updated) {
      this.session = updated;
      this.render();
      event.preventDefault();
    } else if (event.key === "Enter" && canSubmit(this.session)) {
      void this.enqueue(() => this.submit());
      event.preventDefault();
    }
  }

  private applyLabel(step: number, label: StepLabel): void {
    if (!this.session) return;
    this.session = setLabel(this.session, step, label);
    this.render();
  }

  // -- rendering ---------------------------------------------------------------

  private render(): void {
    const parts: string[] = [`<header><h1>Step annotation</h1>`];
    parts.push(`<span class="assignee">annotator: ${escapeHtml(this.assignee)}</span></header>`);
    if (this.banner) {
      parts.push(`<div class="banner" data-testid="banner">${escapeHtml(this.banner.text)}`);
      if (this.banner.action === "retry") {
        parts.push(` <button data-action="retry" data-testid="retry">Retry</button>`);
      } else if (this.banner.action === "reload") {
        parts.push(` <button data-action="reload" data-testid="reload">Reload task</button>`);
      }
      parts.push(`</div>`);
    }
    if (this.view === "splits") parts.push(this.renderSplits());
    if (this.view === "annotate") parts.push(this.renderAnnotate());
    if (this.view === "review") parts.push(this.renderReview());
    this.root.innerHTML = parts.join("");
  }

  private renderSplits(): string {
    const rows = this.splits
      .map((split) => {
        const counts = split.status_counts;
        const done = (counts["labeled"] ?? 0) + (counts["skipped"] ?? 0);
        const reviewLabel = split.state === "in_review" ? "Resume review" : "Review";
        const canAnnotate = split.state === "open" ? "" : "disabled";
        const canReview = split.state === "open" || split.state === "in_review" ? "" : "disabled";
        return (
          `<tr data-testid="split-row" data-split="${split.split_id}">` +
          `<td>split ${split.split_id}</td><td>${split.state}</td>` +
          `<td>${done}/${split.size} done</td>` +
          `<td><button data-action="annotate" data-split="${split.split_id}" ${canAnnotate}>Annotate</button>` +
          `<button data-action="review" data-split="${split.split_id}" ${canReview}>${reviewLabel}</button></td></tr>`
        );
      })
      .join("");
    return `<table class="splits"><thead><tr><th>split</th><th>state</th><th>progress</th><th></th></tr></thead><tbody>${rows}</tbody></table>`;
  }

  private renderImage(image: string | null): string {
    if (!image) return "";
    if (image.startsWith("data:") || image.includes("://")) {
      return `<img class="attachment" src="${escapeHtml(image)}" alt="attachment">`;
    }
    return `<div class="attachment-ref">attachment: ${escapeHtml(image)}</div>`;
  }

  private renderAnnotate(): string {
    const task = this.task;
    const session = this.session;
    if (!task || !session) return "<p>No task.</p>";
    const steps = session.steps
      .map((text, i) => {
        const focused = i === session.focus ? " focused" : "";
        const buttons = LABELS.map((label) => {
          const selected = session.labels[i] === label ? " selected" : "";
          return (
            `<button data-action="label" data-step="${i}" data-label="${label}"` +
            ` class="label-btn${selected}">${label}</button>`
          );
        }).join("");
        return (
          `<li class="step${focused}" data-step="${i}">` +
          `<div class="step-text">${escapeHtml(text)}</div>` +
          `<div class="step-labels">${buttons}</div></li>`
        );
      })
      .join("");
    const gate = canSubmit(session) ? "" : "disabled";
    return (
      `<section class="task" data-testid="task" data-task="${task.task_id}">` +
      this.renderImage(task.image) +
      `<h2>Question</h2><p class="question">${escapeHtml(task.question)}</p>` +
      `<p class="ground-truth">Ground truth: <strong>${escapeHtml(task.ground_truth)}</strong></p>` +
      `<p class="hint">Keys: 1 positive, 2 negative, 3 neutral, j/k move, Enter submit.</p>` +
      `<ol class="steps">${steps}</ol>` +
      `<p data-testid="progress">${labeledCount(session)}/${session.labels.length} steps labeled</p>` +
      `<button data-action="submit" data-testid="submit" ${gate}>Submit labels</button>` +
      `<button data-action="skip" data-testid="skip">Skip task</button>` +
      `<button data-action="back">Back to splits</button></section>`
    );
  }

  private renderReview(): string {
    const tasks = this.reviewTasks
      .map((task) => {
        const labels = (task.draft_labels ?? []).map((l) => l ?? "?").join(", ");
        return (
          `<li data-testid="review-task" data-task="${task.task_id}">` +
          `<div>${escapeHtml(task.question)}</div><div class="labels">${labels}</div></li>`
        );
      })
      .join("");
    return (
      `<section class="review" data-testid="review" data-split="${this.reviewSplit}">` +
      `<h2>Reviewing split ${this.reviewSplit} (${this.reviewTasks.length} sampled tasks)</h2>` +
      `<ul>${tasks}</ul>` +
      `<button data-action="accept" data-testid="accept">Accept split</button>` +
      `<button data-action="return" data-testid="return">Return for re-annotation</button>` +
      `<button data-action="back">Back to splits</button></section>`
    );
  }
}

export function mountApp(root: HTMLElement, api: AnnotationApi, assignee: string): App {
  const app = new App(root, api, assignee);
  void app.start();
  return app;
}

declare global {
  interface Window {
    STEPLAB_API_BASE?: string;
    STEPLAB_TOKEN?: string;
    STEPLAB_ASSIGNEE?: string;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const base = window.STEPLAB_API_BASE ?? "";
  const api = new AnnotationApi(base, window.STEPLAB_TOKEN ?? null);
  mountApp(document.getElementById("app")!, api, window.STEPLAB_ASSIGNEE ?? "annotator");
}
