/** Pure helpers between the DOM and the API client. */

import type { AttributeInfo, PredicateBody, QueryBody } from "./api.js";

export const WEIGHT_MIN = -1;
export const WEIGHT_MAX = 1;
export const WEIGHT_STEP = 0.1;

/** Clamp a typed-in weight to [-1, 1] and snap it to the 0.1 grid the
 * sliders use. Anything unparseable becomes 0 (attribute not ranked). */
export function clampWeight(raw: number): number {
  if (!Number.isFinite(raw)) return 0;
  const clamped = Math.min(WEIGHT_MAX, Math.max(WEIGHT_MIN, raw));
  return Math.round(clamped * 10) / 10;
}

/** Sliders sitting at zero mean "leave this attribute out". */
export function activeWeights(all: Record<string, number>): Record<string, number> {
  const out: Record<string, number> = {};
  for (const [attr, w] of Object.entries(all)) {
    if (w !== 0) out[attr] = w;
  }
  return out;
}

export interface FilterDraft {
  lo?: number;
  hi?: number;
  equals?: string;
}

/** Turn the filter inputs into predicate bodies. A numeric range needs
 * both bounds filled; a blank category select means no constraint. */
export function draftPredicates(
  attributes: AttributeInfo[],
  drafts: ReadonlyMap<string, FilterDraft>,
): PredicateBody[] {
  const preds: PredicateBody[] = [];
  for (const attr of attributes) {
    const draft = drafts.get(attr.name);
    if (!draft) continue;
    if (draft.equals !== undefined && draft.equals !== "") {
      preds.push({ attribute: attr.name, equals: draft.equals });
    } else if (draft.lo !== undefined && draft.hi !== undefined
        && Number.isFinite(draft.lo) && Number.isFinite(draft.hi)) {
      preds.push({ attribute: attr.name, range: { lo: draft.lo, hi: draft.hi } });
    }
  }
  return preds;
}

export function buildQueryBody(
  weights: Record<string, number>,
  predicates: PredicateBody[],
  pageSize: number,
): QueryBody {
  return {
    predicates,
    ranking: { mode: "md", weights: activeWeights(weights) },
    page_size: pageSize,
  };
}

export function detailUrl(template: string, id: string): string {
  return template.replace("{id}", encodeURIComponent(id));
}

export function formatCell(v: number | string): string {
  return String(v);
}

export function formatScore(score: number): string {
  return score.toFixed(4);
}

export function formatStats(stats: {
  queries_issued: number;
  parallel_fraction: number;
  elapsed_ms: number;
  page_queries?: number;
  page_elapsed_ms?: number;
}): string {
  const page = stats.page_queries !== undefined
    ? `page: ${stats.page_queries} queries in ${(stats.page_elapsed_ms ?? 0).toFixed(1)} ms; `
    : "";
  return page + `session: ${stats.queries_issued} queries, `
    + `${(stats.parallel_fraction * 100).toFixed(0)}% in parallel batches, `
    + `${stats.elapsed_ms.toFixed(1)} ms backend time`;
}
