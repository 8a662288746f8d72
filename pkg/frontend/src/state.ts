import type {
  Box,
  InstructionResponse,
  MemoryPayload,
  ScenePayload,
  SessionPayload,
} from "./types.js";

// Everything the console renders. Boxes are copied verbatim from service
// payloads; the client never does its own grounding.

export interface Overlay {
  kind: "gold" | "src" | "dst";
  instance_id: string;
  box: Box;
}

export interface Banner {
  kind: "ok" | "fail" | "info" | "error";
  text: string;
}

export interface EchoSegment {
  text: string;
  entity_type: string | null;
}

export interface ViewState {
  sessionId: string | null;
  scene: ScenePayload | null;
  memory: MemoryPayload;
  overlays: Overlay[];
  candidates: Box[];
  echo: EchoSegment[];
  banner: Banner;
  lastResponse: InstructionResponse | null;
}

export function emptyState(): ViewState {
  return {
    sessionId: null,
    scene: null,
    memory: { version: "", names: [] },
    overlays: [],
    candidates: [],
    echo: [],
    banner: { kind: "info", text: "no session" },
    lastResponse: null,
  };
}

/** New session or new scene: both payloads carry a fresh scene + memory. */
export function applySession(state: ViewState, payload: SessionPayload): ViewState {
  return {
    ...state,
    sessionId: payload.session_id,
    scene: payload.scene,
    memory: payload.memory,
    overlays: [],
    candidates: [],
    echo: [],
    banner: {
      kind: "info",
      text: `session ${payload.session_id}, scene ${payload.scene.scene_id}`,
    },
    lastResponse: null,
  };
}

function trueBox(scene: ScenePayload | null, instanceId: string): Box | null {
  if (!scene) return null;
  const inst = scene.instances.find((i) => i.instance_id === instanceId);
  return inst ? inst.box : null;
}

function bannerFor(response: InstructionResponse): Banner {
  const r = response.result;
  if (response.instruction.class === "instruction-not-supported") {
    return { kind: "info", text: "instruction not supported, nothing done" };
  }
  if (r.episode_kind === "naming") {
    return r.sr_ok
      ? { kind: "ok", text: `stored name "${r.stored_name}"` }
      : { kind: "fail", text: `naming failed (${r.failure_stage})` };
  }
  return r.sr_ok
    ? { kind: "ok", text: `placed ${r.chosen_src} on ${r.chosen_dst}` }
    : { kind: "fail", text: `failed at stage "${r.failure_stage}"` };
}

export function echoSegments(response: InstructionResponse): EchoSegment[] {
  const text = response.instruction.text;
  const spans = [...response.entities].sort((a, b) => a.start - b.start);
  const segments: EchoSegment[] = [];
  let cursor = 0;
  for (const span of spans) {
    if (span.start < cursor) continue;
    if (span.start > cursor) {
      segments.push({ text: text.slice(cursor, span.start), entity_type: null });
    }
    segments.push({
      text: text.slice(span.start, span.end),
      entity_type: span.entity_type,
    });
    cursor = span.end;
  }
  if (cursor < text.length) {
    segments.push({ text: text.slice(cursor), entity_type: null });
  }
  return segments;
}

/**
 * Fold an instruction response into the view. Gold boxes are looked up in
 * the scene that was current when the instruction ran: the response scene
 * already reflects a completed place, so the moved object's box there is
 * its new location, not the one the robot acted on.
 */
export function applyInstruction(
  state: ViewState,
  response: InstructionResponse
): ViewState {
  const overlays: Overlay[] = [];
  if (response.instruction.class !== "instruction-not-supported") {
    const { src, dst } = response.chosen;
    if (src) {
      const gold = trueBox(state.scene, src.instance_id);
      if (gold) {
        overlays.push({ kind: "gold", instance_id: src.instance_id, box: gold });
      }
      if (src.box) {
        overlays.push({ kind: "src", instance_id: src.instance_id, box: src.box });
      }
    }
    if (dst && dst.box) {
      overlays.push({ kind: "dst", instance_id: dst.instance_id, box: dst.box });
    }
  }
  return {
    ...state,
    scene: response.scene,
    memory: response.memory,
    overlays,
    candidates: response.candidates.flatMap((ranked) => ranked.map((c) => c.box)),
    echo: echoSegments(response),
    banner: bannerFor(response),
    lastResponse: response,
  };
}

/** Errors only touch the banner; the rest of the view stays as it was. */
export function applyError(state: ViewState, message: string): ViewState {
  return { ...state, banner: { kind: "error", text: message } };
}

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function echoHtml(segments: EchoSegment[]): string {
  return segments
    .map((seg) =>
      seg.entity_type
        ? `<mark class="ent ent-${seg.entity_type}">${escapeHtml(seg.text)}</mark>`
        : escapeHtml(seg.text)
    )
    .join("");
}
