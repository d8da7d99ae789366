/** In-memory stand-in for the review service with the same HTTP semantics:
 * oldest-unjudged-first queue, two verdicts complete an item, idempotent
 * duplicates, 409 on conflicts, 403 off-roster, plus fault injection for
 * network-failure paths.
 */

import type { FetchLike } from "../src/api.js";
import type { ReviewItem, VerdictPayload } from "../src/types.js";

interface StoredVerdict extends VerdictPayload {}

export class FakeService {
  readonly verdicts = new Map<string, StoredVerdict>(); // key: record|reviewer
  private failures = 0;
  private failAfterStore = 0;
  readonly requests: string[] = [];

  constructor(
    readonly items: ReviewItem[],
    readonly roster: string[] = ["reviewer-a", "reviewer-b"],
    readonly required = 2,
  ) {}

  /** Reject the next n requests before touching state (network down). */
  failNextRequests(n: number): void {
    this.failures = n;
  }

  /** Store the verdict but drop the response (ack lost on the wire). */
  loseNextAck(): void {
    this.failAfterStore = 1;
  }

  storedCount(): number {
    return this.verdicts.size;
  }

  private itemVerdicts(recordId: string): StoredVerdict[] {
    return [...this.verdicts.values()].filter((v) => v.record_id === recordId);
  }

  private status(recordId: string): string {
    const n = this.itemVerdicts(recordId).length;
    if (n >= this.required) return "complete";
    return n > 0 ? "partially_reviewed" : "pending";
  }

  private json(body: unknown, status = 200): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  }

  fetch: FetchLike = async (input, init) => {
    this.requests.push(`${init?.method ?? "GET"} ${input}`);
    if (this.failures > 0) {
      this.failures -= 1;
      throw new TypeError("fetch failed (injected)");
    }
    const url = new URL(input, "http://fake");
    if (url.pathname === "/items/next") {
      const reviewer = url.searchParams.get("reviewer") ?? "";
      if (!this.roster.includes(reviewer)) {
        return this.json({ detail: "unknown reviewer" }, 403);
      }
      for (const item of this.items) {
        if (this.status(item.record_id) === "complete") continue;
        if (this.verdicts.has(`${item.record_id}|${reviewer}`)) continue;
        return this.json({
          item: { ...item, status: this.status(item.record_id) },
          done: false,
        });
      }
      return this.json({ item: null, done: true });
    }
    if (url.pathname === "/verdicts" && init?.method === "POST") {
      const payload = JSON.parse(String(init.body)) as VerdictPayload;
      if (!this.roster.includes(payload.reviewer_id)) {
        return this.json({ detail: "unknown reviewer" }, 403);
      }
      if (!this.items.some((i) => i.record_id === payload.record_id)) {
        return this.json({ detail: "unknown record" }, 404);
      }
      const key = `${payload.record_id}|${payload.reviewer_id}`;
      const existing = this.verdicts.get(key);
      if (existing) {
        if (existing.verdict === payload.verdict && existing.note === payload.note) {
          return this.json({ outcome: "duplicate", status: this.status(payload.record_id) });
        }
        return this.json({ detail: "conflicting verdict" }, 409);
      }
      this.verdicts.set(key, payload);
      if (this.failAfterStore > 0) {
        this.failAfterStore -= 1;
        throw new TypeError("ack lost (injected)");
      }
      return this.json({ outcome: "stored", status: this.status(payload.record_id) });
    }
    if (url.pathname === "/progress") {
      const counts = { pending: 0, partially_reviewed: 0, complete: 0 };
      for (const item of this.items) {
        counts[this.status(item.record_id) as keyof typeof counts] += 1;
      }
      return this.json({
        ...counts,
        total: this.items.length,
        verdicts: this.verdicts.size,
      });
    }
    return this.json({ detail: "not found" }, 404);
  };
}

export function makeItems(n: number): ReviewItem[] {
  return Array.from({ length: n }, (_, i) => ({
    record_id: `tile01-ER-${String(i).padStart(3, "0")}`,
    tile_id: "tile01",
    task: "ER",
    question: `What is the terrain elevation at pixel (${i}, ${i})?`,
    answer: `${100 + i}.0`,
    overlay_image_ref: `/overlays/tile01-ER-${String(i).padStart(3, "0")}`,
    assigned_reviewers: ["reviewer-a", "reviewer-b"],
    status: "pending" as const,
  }));
}
