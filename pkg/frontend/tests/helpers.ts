import type { Ctx } from "../src/draw.js";

export interface Call {
  op: string;
  args: unknown[];
  strokeStyle?: string;
  fillStyle?: string;
  lineWidth?: number;
}

/** Canvas stand-in that records every draw call with the style in force. */
export function recorder(width = 640, height = 480) {
  const calls: Call[] = [];
  const ctx: Ctx = {
    canvas: { width, height },
    strokeStyle: "",
    fillStyle: "",
    lineWidth: 1,
    font: "",
    clearRect(...args: number[]) {
      calls.push({ op: "clearRect", args });
    },
    strokeRect(...args: number[]) {
      calls.push({
        op: "strokeRect",
        args,
        strokeStyle: String(this.strokeStyle),
        lineWidth: this.lineWidth,
      });
    },
    fillRect(...args: number[]) {
      calls.push({ op: "fillRect", args, fillStyle: String(this.fillStyle) });
    },
    fillText(text: string, x: number, y: number) {
      calls.push({
        op: "fillText",
        args: [text, x, y],
        fillStyle: String(this.fillStyle),
      });
    },
  };
  return { ctx, calls };
}

export function strokes(calls: Call[]): Call[] {
  return calls.filter((c) => c.op === "strokeRect");
}
