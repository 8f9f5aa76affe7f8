// DOM wiring: file picker -> reconstruct, part table, candidate picker,
// interpolation slider, transform fields, undo via log replay, OBJ download.

import { ApiClient, fetchTransport } from "./api";
import { base64FromBytes, pointsFromContainer } from "./container";
import { EditorStore } from "./state";
import type { SessionView } from "./state";
import { MeshViewer } from "./viewer";

const $ = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;

const client = new ApiClient(fetchTransport(""));
const store = new EditorStore(client);
const viewer = new MeshViewer($("viewport") as HTMLCanvasElement);

function toast(msg: string): void {
  const el = $("toast");
  el.textContent = msg;
  el.classList.add("show");
  setTimeout(() => el.classList.remove("show"), 4000);
}

async function guarded(fn: () => Promise<void>): Promise<void> {
  try {
    await fn();
  } catch (err) {
    toast(err instanceof Error ? err.message : String(err));
  }
}

function render(view: SessionView): void {
  $("session-label").textContent = view.sessionId ?? "no session";
  for (const btn of document.querySelectorAll<HTMLButtonElement>("button[data-edit]")) {
    btn.disabled = view.busy || !view.sessionId;
  }
  ($("undo") as HTMLButtonElement).disabled = view.busy || store.log.length === 0;

  const tbody = $("parts-body");
  tbody.innerHTML = "";
  for (const part of view.parts) {
    const tr = document.createElement("tr");
    if (part.index === view.selected) tr.classList.add("selected");
    const prov =
      part.provenance.source === "decoded"
        ? "decoded"
        : `${part.provenance.source}: ${part.provenance.part_id ?? ""}`;
    tr.innerHTML =
      `<td>${part.index}</td>` +
      `<td>${part.center.map((c) => c.toFixed(3)).join(", ")}</td>` +
      `<td>${part.scale.toFixed(3)}</td>` +
      `<td>${part.empty ? "<span class='badge'>empty</span>" : ""}</td>` +
      `<td>${prov}</td>`;
    tr.addEventListener("click", () => guarded(() => store.dispatch({ kind: "select", part: part.index })));
    tbody.appendChild(tr);
  }

  const list = $("candidates");
  list.innerHTML = "";
  for (const cand of view.candidates) {
    const li = document.createElement("li");
    li.innerHTML = `<code>${cand.part_id}</code> <small>d=${cand.distance.toFixed(4)}</small>`;
    const replaceBtn = document.createElement("button");
    replaceBtn.textContent = "replace";
    replaceBtn.disabled = view.busy || view.selected === null;
    replaceBtn.addEventListener("click", () =>
      guarded(() => store.dispatch({ kind: "replace", part: view.selected!, partId: cand.part_id })),
    );
    const blendBtn = document.createElement("button");
    blendBtn.textContent = `blend α=${view.alpha.toFixed(2)}`;
    blendBtn.disabled = view.busy || view.selected === null;
    blendBtn.addEventListener("click", () =>
      guarded(() =>
        store.dispatch({ kind: "interpolate", part: view.selected!, partId: cand.part_id, alpha: view.alpha }),
      ),
    );
    li.append(" ", replaceBtn, " ", blendBtn);
    list.appendChild(li);
  }

  if (view.selected !== null) {
    const part = view.parts[view.selected];
    ($("tx") as HTMLInputElement).value = String(part.center[0]);
    ($("ty") as HTMLInputElement).value = String(part.center[1]);
    ($("tz") as HTMLInputElement).value = String(part.center[2]);
    ($("tscale") as HTMLInputElement).value = String(part.scale);
  }

  viewer.showUnion(view.meshObj);
  viewer.showPart(view.selected !== null ? view.partMeshObj : null);
  if (view.error) toast(view.error);
}

store.onChange(render);

$("file").addEventListener("change", () =>
  guarded(async () => {
    const input = $("file") as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    const buf = await file.arrayBuffer();
    if (file.name.endsWith(".pgm")) {
      await store.dispatch({ kind: "reconstruct", input: { image: base64FromBytes(new Uint8Array(buf)) } });
    } else {
      await store.dispatch({ kind: "reconstruct", input: { points: pointsFromContainer(buf) } });
    }
  }),
);

($("alpha") as HTMLInputElement).addEventListener("input", (ev) => {
  store.setAlpha(Number((ev.target as HTMLInputElement).value));
});

$("apply-transform").addEventListener("click", () =>
  guarded(async () => {
    if (store.view.selected === null) return;
    await store.dispatch({
      kind: "transform",
      part: store.view.selected,
      center: [
        Number(($("tx") as HTMLInputElement).value),
        Number(($("ty") as HTMLInputElement).value),
        Number(($("tz") as HTMLInputElement).value),
      ],
      scale: Number(($("tscale") as HTMLInputElement).value),
    });
  }),
);

$("restore-decoded").addEventListener("click", () =>
  guarded(async () => {
    if (store.view.selected === null) return;
    await store.dispatch({ kind: "replace", part: store.view.selected, partId: null });
  }),
);

$("set-refs").addEventListener("click", () =>
  guarded(async () => {
    const raw = ($("refs") as HTMLInputElement).value;
    const refs = raw
      .split(",")
      .map((s) => s.trim())
      .filter(Boolean);
    await store.dispatch({ kind: "set_refs", refs });
  }),
);

$("undo").addEventListener("click", () => guarded(() => store.undo()));

$("wireframe").addEventListener("change", (ev) => {
  viewer.setWireframe((ev.target as HTMLInputElement).checked);
});

$("download").addEventListener("click", () => {
  if (!store.view.meshObj) return;
  const blob = new Blob([store.view.meshObj], { type: "text/plain" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = `${store.view.sessionId ?? "mesh"}.obj`;
  a.click();
  URL.revokeObjectURL(a.href);
});

render(store.view);
