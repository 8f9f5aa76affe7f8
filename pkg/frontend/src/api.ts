// Typed client for the part-editing HTTP API. The transport is injectable so
// tests replay recorded exchanges instead of hitting a live server.

import type { NearestResponse, ObservationPayload, PartSummary, ReconstructResponse } from "./types";

export interface Exchange {
  method: string;
  path: string;
  body: unknown | null;
  status: number;
  response: string; // raw text (JSON or OBJ)
}

export type Transport = (method: string, path: string, body?: unknown) => Promise<{ status: number; text: string }>;

export function fetchTransport(baseUrl = ""): Transport {
  return async (method, path, body) => {
    const resp = await fetch(baseUrl + path, {
      method,
      headers: body !== undefined ? { "content-type": "application/json" } : undefined,
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    return { status: resp.status, text: await resp.text() };
  };
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export class ApiClient {
  readonly log: Exchange[] = [];

  constructor(private transport: Transport) {}

  private async call(method: string, path: string, body?: unknown): Promise<string> {
    const { status, text } = await this.transport(method, path, body);
    this.log.push({ method, path, body: body ?? null, status, response: text });
    if (status < 200 || status >= 300) {
      throw new ApiError(status, text);
    }
    return text;
  }

  private async json<T>(method: string, path: string, body?: unknown): Promise<T> {
    return JSON.parse(await this.call(method, path, body)) as T;
  }

  reconstruct(payload: ObservationPayload): Promise<ReconstructResponse> {
    return this.json("POST", "/api/reconstruct", payload);
  }

  sessionMesh(sessionId: string, res: number, part?: number): Promise<string> {
    const suffix = part === undefined ? "" : `&part=${part}`;
    return this.call("GET", `/api/sessions/${sessionId}/mesh?res=${res}${suffix}`);
  }

  replace(sessionId: string, part: number, body: { part_id: string } | { source: "decoded" }): Promise<PartSummary> {
    return this.json("POST", `/api/sessions/${sessionId}/parts/${part}/replace`, body);
  }

  interpolate(sessionId: string, part: number, partId: string, alpha: number): Promise<PartSummary> {
    return this.json("POST", `/api/sessions/${sessionId}/parts/${part}/interpolate`, { part_id: partId, alpha });
  }

  setTransform(sessionId: string, part: number, center: [number, number, number], scale: number): Promise<PartSummary> {
    return this.json("POST", `/api/sessions/${sessionId}/parts/${part}/transform`, { center, scale });
  }

  nearest(sessionId: string, part: number, k: number, refs?: string[]): Promise<NearestResponse> {
    const refQuery = refs && refs.length ? `&refs=${encodeURIComponent(refs.join(","))}` : "";
    return this.json("GET", `/api/parts/nearest?session=${sessionId}&part=${part}&k=${k}${refQuery}`);
  }

  dbPartMesh(partId: string): Promise<string> {
    return this.call("GET", `/api/db/parts/${partId}/mesh`);
  }

  dbIndex(): Promise<{ shapes: string[]; parts: { part_id: string; source_shape_id: string }[] }> {
    return this.json("GET", "/api/db/index");
  }
}

/** Key-order-independent JSON rendering, so recorded bodies match issued ones. */
export function stableStringify(value: unknown): string {
  if (value === null || typeof value !== "object") return JSON.stringify(value);
  if (Array.isArray(value)) return `[${value.map(stableStringify).join(",")}]`;
  const obj = value as Record<string, unknown>;
  const keys = Object.keys(obj).sort();
  return `{${keys.map((k) => `${JSON.stringify(k)}:${stableStringify(obj[k])}`).join(",")}}`;
}

/** Serves recorded exchanges; requests must match a recording exactly.
 * Repeated identical requests pop successive recordings (responses are
 * session-state dependent); an exhausted queue keeps serving its last one. */
export function replayTransport(recorded: Exchange[]): Transport {
  const key = (method: string, path: string, body: unknown) => `${method} ${path} ${stableStringify(body ?? null)}`;
  const queues = new Map<string, Exchange[]>();
  for (const ex of recorded) {
    const k = key(ex.method, ex.path, ex.body);
    if (!queues.has(k)) queues.set(k, []);
    queues.get(k)!.push(ex);
  }
  return async (method, path, body) => {
    const queue = queues.get(key(method, path, body));
    if (!queue || !queue.length) {
      throw new Error(`no recorded exchange for ${method} ${path} body=${stableStringify(body ?? null)}`);
    }
    const ex = queue.length > 1 ? queue.shift()! : queue[0];
    return { status: ex.status, text: ex.response };
  };
}
