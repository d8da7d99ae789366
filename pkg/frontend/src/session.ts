/** Review session state machine, free of any DOM dependency.
 *
 * Guarantees the service relies on:
 *  - verdict submission is possible only while an item is on screen, and
 *    at most one submission is in flight at a time;
 *  - a verdict is created only by an explicit user action (every POST body
 *    traces back to one submitVerdict call);
 *  - an unacknowledged verdict survives page refreshes in the pending
 *    store and is re-sent idempotently before anything else happens.
 */

import { ApiClient, ConflictError, ForbiddenError } from "./api.js";
import type { Progress, ReviewItem, Verdict, VerdictPayload } from "./types.js";

export type Phase = "idle" | "loading" | "ready" | "submitting" | "done" | "halted";

export interface PendingStore {
  load(): VerdictPayload | null;
  save(payload: VerdictPayload): void;
  clear(): void;
}

export class MemoryPendingStore implements PendingStore {
  private value: VerdictPayload | null = null;
  load(): VerdictPayload | null {
    return this.value;
  }
  save(payload: VerdictPayload): void {
    this.value = payload;
  }
  clear(): void {
    this.value = null;
  }
}

export class LocalPendingStore implements PendingStore {
  constructor(private readonly key: string) {}
  load(): VerdictPayload | null {
    const raw = window.localStorage.getItem(this.key);
    return raw ? (JSON.parse(raw) as VerdictPayload) : null;
  }
  save(payload: VerdictPayload): void {
    window.localStorage.setItem(this.key, JSON.stringify(payload));
  }
  clear(): void {
    window.localStorage.removeItem(this.key);
  }
}

export interface SessionState {
  phase: Phase;
  item: ReviewItem | null;
  overlayVisible: boolean;
  progress: Progress | null;
  notice: string | null;      // transient info (conflict, duplicate)
  retryBanner: string | null; // network failure with a held verdict
  reviewed: number;           // verdicts acknowledged this session
}

export interface SessionOptions {
  api: ApiClient;
  reviewerId: string;
  store?: PendingStore;
  onChange?: (state: SessionState) => void;
}

export class ReviewSession {
  readonly api: ApiClient;
  readonly reviewerId: string;
  readonly actionLog: VerdictPayload[] = [];

  private readonly store: PendingStore;
  private readonly onChange: (state: SessionState) => void;

  state: SessionState = {
    phase: "idle",
    item: null,
    overlayVisible: true,
    progress: null,
    notice: null,
    retryBanner: null,
    reviewed: 0,
  };

  constructor(options: SessionOptions) {
    this.api = options.api;
    this.reviewerId = options.reviewerId;
    this.store = options.store ?? new MemoryPendingStore();
    this.onChange = options.onChange ?? (() => undefined);
  }

  private emit(): void {
    this.onChange(this.state);
  }

  /** Resume any held verdict (idempotent re-send), then load the first item. */
  async start(): Promise<void> {
    const pending = this.store.load();
    if (pending && pending.reviewer_id === this.reviewerId) {
      this.state.phase = "submitting";
      this.emit();
      const delivered = await this.deliver(pending);
      if (!delivered) {
        return; // retry banner is up; the held verdict stays stored
      }
    }
    await this.fetchNext();
  }

  canSubmit(): boolean {
    return this.state.phase === "ready" && this.state.item !== null;
  }

  /** One explicit user action -> at most one verdict payload. */
  async submitVerdict(verdict: Verdict, note = ""): Promise<boolean> {
    if (!this.canSubmit()) {
      return false;
    }
    const item = this.state.item as ReviewItem;
    const payload: VerdictPayload = {
      record_id: item.record_id,
      reviewer_id: this.reviewerId,
      verdict,
      note,
    };
    this.actionLog.push(payload);
    this.store.save(payload);
    this.state.phase = "submitting";
    this.state.notice = null;
    this.emit();
    const delivered = await this.deliver(payload);
    if (delivered) {
      await this.fetchNext();
    }
    return true;
  }

  /** Re-send the held verdict after a network failure. */
  async retry(): Promise<void> {
    const pending = this.store.load();
    if (!pending) {
      await this.fetchNext();
      return;
    }
    this.state.phase = "submitting";
    this.state.retryBanner = null;
    this.emit();
    if (await this.deliver(pending)) {
      await this.fetchNext();
    }
  }

  toggleOverlay(): void {
    this.state.overlayVisible = !this.state.overlayVisible;
    this.emit();
  }

  /** Keyboard mapping: 1/2/3 vote, space toggles the overlay. */
  async handleKey(key: string): Promise<void> {
    if (key === " " || key === "Spacebar") {
      this.toggleOverlay();
      return;
    }
    const verdict = ({ "1": "correct", "2": "incorrect", "3": "ambiguous" } as
      Record<string, Verdict>)[key];
    if (verdict) {
      await this.submitVerdict(verdict);
    }
  }

  private async deliver(payload: VerdictPayload): Promise<boolean> {
    try {
      const result = await this.api.submitVerdict(payload);
      this.store.clear();
      this.state.reviewed += 1;
      this.state.retryBanner = null;
      if (result.outcome === "duplicate") {
        this.state.notice = "Verdict was already recorded; nothing changed.";
      }
      return true;
    } catch (error) {
      if (error instanceof ConflictError) {
        // A different verdict of ours is already stored: drop the held
        // payload (the service wins) and re-fetch to show the live state.
        this.store.clear();
        this.state.notice =
          "Conflict: a different verdict of yours is already recorded.";
        await this.fetchNext();
        return false;
      }
      if (error instanceof ForbiddenError) {
        this.store.clear();
        this.state.phase = "halted";
        this.state.notice = "This reviewer id is not on the roster.";
        this.emit();
        return false;
      }
      // Network trouble: keep the verdict, offer retry, lose nothing.
      this.state.phase = "ready";
      this.state.retryBanner = "Could not reach the service; your verdict is held. Retry.";
      this.emit();
      return false;
    }
  }

  private async fetchNext(): Promise<void> {
    this.state.phase = "loading";
    this.emit();
    try {
      const next = await this.api.nextItem(this.reviewerId);
      if (next.done || next.item === null) {
        this.state.item = null;
        this.state.phase = "done";
        this.state.progress = await this.api.progress();
      } else {
        this.state.item = next.item;
        this.state.phase = "ready";
      }
    } catch (error) {
      if (error instanceof ForbiddenError) {
        this.state.phase = "halted";
        this.state.notice = "This reviewer id is not on the roster.";
      } else {
        this.state.phase = "ready";
        this.state.retryBanner = "Could not reach the service. Retry.";
      }
    }
    this.emit();
  }
}
