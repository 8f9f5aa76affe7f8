// Editor state: a session view assembled purely from server responses, an
// append-only action log, and deterministic replay (undo = truncate the log
// and replay from scratch). The store never derives geometry client-side;
// every mesh string is a verbatim server OBJ.

import { ApiClient } from "./api";
import type { Candidate, ObservationPayload, PartSummary } from "./types";

export const MESH_RES = 48;
export const CANDIDATE_K = 5;

export type Action =
  | { kind: "reconstruct"; input: ObservationPayload }
  | { kind: "select"; part: number }
  | { kind: "set_refs"; refs: string[] }
  | { kind: "replace"; part: number; partId: string | null } // null restores the decoded code
  | { kind: "interpolate"; part: number; partId: string; alpha: number }
  | { kind: "transform"; part: number; center: [number, number, number]; scale: number };

export interface SessionView {
  sessionId: string | null;
  parts: PartSummary[];
  selected: number | null;
  candidates: Candidate[];
  refs: string[];
  alpha: number;
  meshObj: string;
  partMeshObj: string | null;
  busy: boolean;
  error: string | null;
}

export function emptyView(): SessionView {
  return {
    sessionId: null,
    parts: [],
    selected: null,
    candidates: [],
    refs: [],
    alpha: 0.5,
    meshObj: "",
    partMeshObj: null,
    busy: false,
    error: null,
  };
}

export class EditorStore {
  view: SessionView = emptyView();
  log: Action[] = [];
  private listeners: Array<(v: SessionView) => void> = [];

  constructor(
    private client: ApiClient,
    private meshRes: number = MESH_RES,
  ) {}

  onChange(fn: (v: SessionView) => void): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.view);
  }

  setAlpha(alpha: number): void {
    this.view.alpha = alpha;
    this.emit();
  }

  /** Apply one action: issue its requests, record it in the log. */
  async dispatch(action: Action): Promise<void> {
    if (this.view.busy) {
      throw new Error("an edit is already in flight for this session");
    }
    this.view.busy = true;
    this.view.error = null;
    this.emit();
    try {
      await this.apply(action);
      this.log.push(action);
    } catch (err) {
      this.view.error = err instanceof Error ? err.message : String(err);
      throw err;
    } finally {
      this.view.busy = false;
      this.emit();
    }
  }

  private async apply(action: Action): Promise<void> {
    switch (action.kind) {
      case "reconstruct": {
        const resp = await this.client.reconstruct(action.input);
        this.view = { ...emptyView(), refs: this.view.refs, alpha: this.view.alpha };
        this.view.sessionId = resp.session_id;
        this.view.parts = resp.parts;
        this.view.meshObj = await this.client.sessionMesh(resp.session_id, this.meshRes);
        break;
      }
      case "select": {
        const sid = this.requireSession();
        this.view.selected = action.part;
        this.view.partMeshObj = await this.client.sessionMesh(sid, this.meshRes, action.part);
        await this.refreshCandidates(action.part);
        break;
      }
      case "set_refs": {
        this.view.refs = [...action.refs];
        if (this.view.selected !== null) {
          await this.refreshCandidates(this.view.selected);
        }
        break;
      }
      case "replace": {
        const sid = this.requireSession();
        const body = action.partId === null ? ({ source: "decoded" } as const) : { part_id: action.partId };
        const summary = await this.client.replace(sid, action.part, body);
        await this.afterEdit(action.part, summary);
        break;
      }
      case "interpolate": {
        const sid = this.requireSession();
        const summary = await this.client.interpolate(sid, action.part, action.partId, action.alpha);
        await this.afterEdit(action.part, summary);
        break;
      }
      case "transform": {
        const sid = this.requireSession();
        const summary = await this.client.setTransform(sid, action.part, action.center, action.scale);
        await this.afterEdit(action.part, summary);
        break;
      }
    }
  }

  private requireSession(): string {
    if (!this.view.sessionId) {
      throw new Error("no live session; reconstruct first");
    }
    return this.view.sessionId;
  }

  private async refreshCandidates(part: number): Promise<void> {
    const sid = this.requireSession();
    const resp = await this.client.nearest(sid, part, CANDIDATE_K, this.view.refs);
    this.view.candidates = resp.candidates;
  }

  private async afterEdit(part: number, summary: PartSummary): Promise<void> {
    const sid = this.requireSession();
    this.view.parts = this.view.parts.map((p) => (p.index === part ? summary : p));
    this.view.meshObj = await this.client.sessionMesh(sid, this.meshRes);
    if (this.view.selected === part) {
      this.view.partMeshObj = await this.client.sessionMesh(sid, this.meshRes, part);
      await this.refreshCandidates(part);
    }
  }

  /** Undo the last action by replaying the truncated log from scratch. */
  async undo(): Promise<void> {
    if (!this.log.length) return;
    const shorter = this.log.slice(0, -1);
    await this.replay(shorter);
  }

  /** Rebuild the whole view from an action log. Deterministic: the same log
   * issues the same request sequence and lands in the same state. */
  async replay(log: Action[]): Promise<void> {
    this.view = emptyView();
    this.log = [];
    for (const action of log) {
      await this.dispatch(action);
    }
    this.emit();
  }
}
