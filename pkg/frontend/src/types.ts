/** Shared types mirroring the review service's JSON contracts. */

export type Verdict = "correct" | "incorrect" | "ambiguous";

export interface ReviewItem {
  record_id: string;
  tile_id: string;
  task: string;
  question: string;
  answer: string;
  overlay_image_ref: string;
  assigned_reviewers: string[];
  status: "pending" | "partially_reviewed" | "complete";
}

export interface NextItemResponse {
  item: ReviewItem | null;
  done: boolean;
}

export interface VerdictPayload {
  record_id: string;
  reviewer_id: string;
  verdict: Verdict;
  note: string;
}

export interface VerdictResponse {
  outcome: "stored" | "duplicate";
  status: string;
}

export interface Progress {
  pending: number;
  partially_reviewed: number;
  complete: number;
  total: number;
  verdicts: number;
}
