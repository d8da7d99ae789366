/** Thin typed client over the review service HTTP API.
 *
 * The fetch function is injectable so tests can run against a fake or a
 * live service on any port. Error semantics: HTTP 409 and 403 surface as
 * typed errors the session machine reacts to; network failures reject
 * with whatever fetch threw.
 */

import type { NextItemResponse, Progress, VerdictPayload, VerdictResponse } from "./types.js";

export class ConflictError extends Error {
  constructor(detail: string) {
    super(detail);
    this.name = "ConflictError";
  }
}

export class ForbiddenError extends Error {
  constructor(detail: string) {
    super(detail);
    this.name = "ForbiddenError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async checked(resp: Response): Promise<Response> {
    if (resp.status === 409) {
      throw new ConflictError(await resp.text());
    }
    if (resp.status === 403) {
      throw new ForbiddenError(await resp.text());
    }
    if (!resp.ok) {
      throw new Error(`HTTP ${resp.status}: ${await resp.text()}`);
    }
    return resp;
  }

  async nextItem(reviewerId: string): Promise<NextItemResponse> {
    const url = `${this.baseUrl}/items/next?reviewer=${encodeURIComponent(reviewerId)}`;
    const resp = await this.checked(await this.fetchFn(url));
    return (await resp.json()) as NextItemResponse;
  }

  async submitVerdict(payload: VerdictPayload): Promise<VerdictResponse> {
    const resp = await this.checked(
      await this.fetchFn(`${this.baseUrl}/verdicts`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(payload),
      }),
    );
    return (await resp.json()) as VerdictResponse;
  }

  async progress(): Promise<Progress> {
    const resp = await this.checked(await this.fetchFn(`${this.baseUrl}/progress`));
    return (await resp.json()) as Progress;
  }

  overlayUrl(ref: string): string {
    return `${this.baseUrl}${ref}`;
  }
}
