import { ApiClient } from "./api.js";
import { COLORS, drawCamera, drawTopDown } from "./draw.js";
import {
  applyError,
  applyInstruction,
  applySession,
  echoHtml,
  emptyState,
  escapeHtml,
  type ViewState,
} from "./state.js";

const params = new URLSearchParams(window.location.search);
const client = new ApiClient(params.get("api") ?? undefined);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const camera = el<HTMLCanvasElement>("camera").getContext("2d")!;
const topdown = el<HTMLCanvasElement>("topdown").getContext("2d")!;
const bannerEl = el<HTMLDivElement>("banner");
const echoEl = el<HTMLDivElement>("echo");
const memoryEl = el<HTMLUListElement>("memory");
const sessionEl = el<HTMLSpanElement>("session-label");
const promptEl = el<HTMLInputElement>("prompt");
const seedEl = el<HTMLInputElement>("seed");

let state: ViewState = emptyState();
const history: string[] = [];
let historyPos = 0;

// One request on the wire at a time; later submissions wait their turn.
let chain: Promise<void> = Promise.resolve();

function enqueue(work: () => Promise<void>) {
  chain = chain.then(work);
}

function render() {
  drawCamera(camera, state.scene, state.overlays, state.candidates);
  const highlight: Record<string, string> = {};
  for (const o of state.overlays) {
    if (o.kind !== "gold") highlight[o.instance_id] = COLORS[o.kind];
  }
  drawTopDown(topdown, state.scene, highlight);
  bannerEl.className = `banner ${state.banner.kind}`;
  bannerEl.textContent = state.banner.text;
  echoEl.innerHTML = echoHtml(state.echo);
  sessionEl.textContent = state.sessionId ? `session ${state.sessionId}` : "offline";
  memoryEl.innerHTML = state.memory.names
    .map(
      (n) =>
        `<li><b>${escapeHtml(n.display_name)}</b>` +
        ` <span class="dim">(${n.observations} obs, ${escapeHtml(n.source_scene_id)})</span></li>`
    )
    .join("");
}

function message(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}

function newSession(seed: number) {
  enqueue(async () => {
    try {
      state = applySession(emptyState(), await client.createSession(seed));
    } catch (err) {
      state = applyError(state, message(err));
    }
    render();
  });
}

function newScene(seed: number) {
  enqueue(async () => {
    if (!state.sessionId) return;
    try {
      state = applySession(state, await client.newScene(state.sessionId, seed));
    } catch (err) {
      state = applyError(state, message(err));
    }
    render();
  });
}

function submit(raw: string) {
  const text = raw.trim();
  if (!text) return;
  history.push(text);
  historyPos = history.length;
  enqueue(async () => {
    if (!state.sessionId) return;
    try {
      state = applyInstruction(
        state,
        await client.submitInstruction(state.sessionId, text)
      );
    } catch (err) {
      state = applyError(state, message(err));
    }
    render();
  });
}

el<HTMLFormElement>("prompt-form").addEventListener("submit", (ev) => {
  ev.preventDefault();
  submit(promptEl.value);
  promptEl.value = "";
});

promptEl.addEventListener("keydown", (ev) => {
  if (ev.key === "ArrowUp" && historyPos > 0) {
    historyPos -= 1;
    promptEl.value = history[historyPos];
    ev.preventDefault();
  } else if (ev.key === "ArrowDown" && historyPos < history.length) {
    historyPos += 1;
    promptEl.value = history[historyPos] ?? "";
    ev.preventDefault();
  }
});

el<HTMLButtonElement>("newsession").addEventListener("click", () => {
  newSession(Number(seedEl.value) || 0);
});

el<HTMLButtonElement>("newscene").addEventListener("click", () => {
  newScene(Number(seedEl.value) || 0);
});

render();
newSession(Number(seedEl.value) || 0);
