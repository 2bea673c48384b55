/** Typed client for the gateway's JSON API. Everything the UI knows about
 * the backend goes through this module. */

export interface AttributeInfo {
  name: string;
  /** "numeric-continuous", "numeric-discrete", or "categorical". */
  kind: string;
  min?: number;
  max?: number;
  resolution?: number;
  categories?: string[];
}

export function isNumeric(attr: AttributeInfo): boolean {
  return attr.kind.startsWith("numeric");
}

export interface PopularFunction {
  label: string;
  weights: Record<string, number>;
}

export interface SourceInfo {
  source_id: string;
  name: string;
  k: number;
  attributes: AttributeInfo[];
  popular_functions: PopularFunction[];
  detail_url_template: string | null;
}

export interface TupleRow {
  id: string;
  values: Record<string, number | string>;
  score: number;
}

export interface PageStats {
  queries_issued: number;
  sequential_queries: number;
  parallel_batch_queries: number;
  parallel_fraction: number;
  elapsed_ms: number;
  page_queries?: number;
  page_elapsed_ms?: number;
  page_wall_ms?: number;
}

export interface PageDoc {
  tuples: TupleRow[];
  page_index: number;
  exhausted: boolean;
  stats: PageStats;
}

export interface RangeBody {
  lo: number;
  hi: number;
}

export interface PredicateBody {
  attribute: string;
  equals?: number | string;
  range?: RangeBody;
}

export interface QueryBody {
  predicates: PredicateBody[];
  ranking: { mode: "md"; weights: Record<string, number> };
  page_size: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly field?: string,
  ) {
    super(message);
  }
}

/** Structural subset of fetch so tests can hand in a fake. */
export interface ResponseLike {
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<ResponseLike>;

interface ErrorBody {
  code?: string;
  message?: string;
  field?: string;
}

export class Gateway {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = {
      method,
      headers: { "content-type": "application/json" },
    };
    if (body !== undefined) init.body = JSON.stringify(body);
    const resp = await this.fetchFn(this.base + path, init);
    const doc = (await resp.json()) as T & ErrorBody;
    if (!resp.ok) {
      throw new ApiError(resp.status, doc.code ?? "error",
        doc.message ?? `request failed with ${resp.status}`, doc.field);
    }
    return doc;
  }

  listSources(): Promise<SourceInfo[]> {
    return this.call("GET", "/sources");
  }

  openSession(sourceId: string): Promise<{ session_id: string }> {
    return this.call("POST", "/sessions", { source_id: sourceId });
  }

  query(sessionId: string, body: QueryBody): Promise<PageDoc> {
    return this.call("POST", `/sessions/${sessionId}/query`, body);
  }

  next(sessionId: string): Promise<PageDoc> {
    return this.call("POST", `/sessions/${sessionId}/next`);
  }

  stats(sessionId: string): Promise<PageStats & { pages_served: number }> {
    return this.call("GET", `/sessions/${sessionId}/stats`);
  }
}
