// Deterministic replay against exchanges recorded from the live service
// (regenerate with: python3 scripts/record_ui_fixtures.py from the repo root).
// The replay transport only answers requests that exactly match a recording,
// so these tests pin the store's request mapping AND the served bytes.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { beforeAll, describe, expect, it } from "vitest";

import { ApiClient, replayTransport, type Exchange } from "../src/api";
import { EditorStore, type Action } from "../src/state";

interface Fixture {
  mesh_res: number;
  k: number;
  session_id: string;
  points: number[][];
  top_candidate: string;
  blend_part: string;
  part0: { center: [number, number, number]; scale: number };
  final_mesh: string;
  identity_mesh: string;
  exchanges: Exchange[];
}

let fixture: Fixture;

beforeAll(() => {
  const path = join(dirname(fileURLToPath(import.meta.url)), "fixtures", "session.json");
  fixture = JSON.parse(readFileSync(path, "utf-8"));
});

function scriptedActions(): Action[] {
  const c = fixture.part0.center;
  return [
    { kind: "reconstruct", input: { points: fixture.points } },
    { kind: "select", part: 1 },
    { kind: "replace", part: 1, partId: fixture.top_candidate },
    { kind: "select", part: 2 },
    { kind: "interpolate", part: 2, partId: fixture.blend_part, alpha: 0.0 },
    { kind: "select", part: 0 },
    { kind: "transform", part: 0, center: [c[0] + 0.1, c[1], c[2]], scale: fixture.part0.scale },
    { kind: "interpolate", part: 0, partId: fixture.blend_part, alpha: 0.5 },
    { kind: "transform", part: 0, center: c, scale: fixture.part0.scale },
    { kind: "replace", part: 1, partId: null },
  ];
}

function freshStore(): EditorStore {
  return new EditorStore(new ApiClient(replayTransport(fixture.exchanges)), fixture.mesh_res);
}

describe("recorded 10-action session", () => {
  it("replays to the recorded final OBJ byte-identically", async () => {
    const store = freshStore();
    await store.replay(scriptedActions());
    expect(store.log).toHaveLength(10);
    expect(store.view.meshObj).toBe(fixture.final_mesh);
  });

  it("interpolate with alpha=0 leaves the served OBJ identical", async () => {
    const store = freshStore();
    const actions = scriptedActions();
    await store.replay(actions.slice(0, 4));
    const before = store.view.meshObj;
    expect(before).toBe(fixture.identity_mesh);
    await store.dispatch(actions[4]); // alpha = 0
    expect(store.view.meshObj).toBe(before);
  });

  it("replace-from-top-candidate updates the part row provenance in one cycle", async () => {
    const store = freshStore();
    const actions = scriptedActions();
    await store.replay(actions.slice(0, 2));
    expect(store.view.candidates[0].part_id).toBe(fixture.top_candidate);
    await store.dispatch(actions[2]);
    expect(store.view.parts[1].provenance).toMatchObject({ source: "db", part_id: fixture.top_candidate });
    // the replaced part's code now sits exactly on the stored embedding
    expect(store.view.candidates[0].part_id).toBe(fixture.top_candidate);
    expect(store.view.candidates[0].distance).toBe(0);
  });

  it("two full replays produce identical request logs and state", async () => {
    const a = freshStore();
    await a.replay(scriptedActions());
    const b = freshStore();
    await b.replay(scriptedActions());
    expect(a.view).toEqual(b.view);
    expect(a.log).toEqual(b.log);
  });

  it("transform re-post restores the prior state (reversible edits)", async () => {
    const store = freshStore();
    const actions = scriptedActions();
    await store.replay(actions.slice(0, 7)); // through the +0.1 transform
    const moved = store.view.parts[0].center[0];
    await store.dispatch(actions[7]);
    await store.dispatch(actions[8]); // re-post original values
    expect(store.view.parts[0].center[0]).toBeCloseTo(moved - 0.1, 12);
  });
});
