/** Pure view-model builders. Displayed numbers are raw substrings cut from
 * the response body, never re-serialized floats, so what the user reads is
 * byte-equal to what the service sent. */

import { ClassifyOutcome } from "./api.js";

export interface BarRow {
  emotion: string;
  rawValue: string; // exact substring from the response JSON
  fraction: number; // parsed value for bar geometry only
}

export interface ResultViewModel {
  kind: "result";
  rows: BarRow[];
  predicted: string;
  perView: Record<string, string>;
  modelId: string;
}

export interface ErrorViewModel {
  kind: "error";
  message: string; // server's message, verbatim
}

const NUMBER_RE = /"([A-Za-z_]+)"\s*:\s*(-?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)/g;

/** Slice the flat "probabilities" object out of the raw JSON text and capture
 * each emotion's value substring exactly as transmitted. */
export function extractProbabilityRows(rawText: string): BarRow[] {
  const key = '"probabilities"';
  const at = rawText.indexOf(key);
  if (at < 0) return [];
  const open = rawText.indexOf("{", at + key.length);
  if (open < 0) return [];
  const close = rawText.indexOf("}", open);
  if (close < 0) return [];
  const body = rawText.slice(open + 1, close);
  const rows: BarRow[] = [];
  for (const m of body.matchAll(NUMBER_RE)) {
    rows.push({ emotion: m[1], rawValue: m[2], fraction: Number.parseFloat(m[2]) });
  }
  return rows;
}

export function buildViewModel(outcome: ClassifyOutcome): ResultViewModel | ErrorViewModel {
  if (!outcome.ok) {
    const message =
      outcome.json && typeof outcome.json.error === "string"
        ? outcome.json.error
        : `service error (HTTP ${outcome.status})`;
    return { kind: "error", message };
  }
  const rows = extractProbabilityRows(outcome.rawText);
  return {
    kind: "result",
    rows,
    predicted: outcome.json?.predicted ?? "",
    perView: outcome.json?.per_view_agreement ?? {},
    modelId: outcome.json?.model_id ?? "",
  };
}

/** Bar width percent; proportional to the probability. */
export function barWidthPercent(row: BarRow): number {
  return Math.max(0, Math.min(100, row.fraction * 100));
}
