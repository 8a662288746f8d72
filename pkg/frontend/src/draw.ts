import type { Overlay } from "./state.js";
import type { Box, ScenePayload } from "./types.js";

// The slice of CanvasRenderingContext2D the console uses; tests substitute
// a recording stub. Style properties carry the DOM union so a real 2d
// context is assignable.
export interface Ctx {
  canvas: { width: number; height: number };
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
}

// Figure convention: green gold box, pink predicted src, orange predicted dst.
export const COLORS = {
  gold: "#00c853",
  src: "#ff4fa3",
  dst: "#ff9100",
} as const;

const NEUTRAL = "#9aa0a6";
const CANDIDATE = "#4a6da7";

export const EMPTY_MESSAGE = "no scene, create a session";

function rect(ctx: Ctx, box: Box) {
  ctx.strokeRect(box[0], box[1], box[2] - box[0], box[3] - box[1]);
}

export function drawCamera(
  ctx: Ctx,
  scene: ScenePayload | null,
  overlays: Overlay[],
  candidates: Box[] = []
) {
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  if (!scene) {
    ctx.fillStyle = NEUTRAL;
    ctx.font = "16px sans-serif";
    ctx.fillText(EMPTY_MESSAGE, 20, 30);
    return;
  }
  ctx.font = "11px sans-serif";
  for (const inst of scene.instances) {
    ctx.lineWidth = 1;
    ctx.strokeStyle = NEUTRAL;
    rect(ctx, inst.box);
    ctx.fillStyle = NEUTRAL;
    ctx.fillText(inst.instance_id, inst.box[0], Math.max(10, inst.box[1] - 3));
  }
  for (const box of candidates) {
    ctx.lineWidth = 1;
    ctx.strokeStyle = CANDIDATE;
    rect(ctx, box);
  }
  for (const o of overlays) {
    ctx.lineWidth = 2;
    ctx.strokeStyle = COLORS[o.kind];
    rect(ctx, o.box);
    ctx.fillStyle = COLORS[o.kind];
    ctx.fillText(o.kind, o.box[0] + 2, o.box[3] + 12);
  }
}

/** Schematic overhead view of footprints, world y pointing up. */
export function drawTopDown(
  ctx: Ctx,
  scene: ScenePayload | null,
  highlight: Record<string, string> = {}
) {
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  if (!scene) return;
  const [xmin, ymin, xmax, ymax] = scene.table_bounds;
  const sx = ctx.canvas.width / (xmax - xmin);
  const sy = ctx.canvas.height / (ymax - ymin);
  ctx.lineWidth = 1;
  ctx.strokeStyle = NEUTRAL;
  ctx.strokeRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  ctx.font = "10px sans-serif";
  for (const inst of scene.instances) {
    const [ex, ey] = inst.extents;
    const px = (inst.x - ex / 2 - xmin) * sx;
    const py = (ymax - (inst.y + ey / 2)) * sy;
    const color = highlight[inst.instance_id] ?? NEUTRAL;
    ctx.strokeStyle = color;
    ctx.strokeRect(px, py, ex * sx, ey * sy);
    ctx.fillStyle = color;
    ctx.fillText(inst.object_id, px, Math.max(8, py - 2));
  }
}
