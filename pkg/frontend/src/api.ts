import type {
  InstructionResponse,
  MemoryPayload,
  ScenePayload,
  SessionPayload,
} from "./types.js";

const DEFAULT_BASE = "http://127.0.0.1:8023";

export class ApiError extends Error {
  status: number;

  constructor(status: number, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
  }
}

function describeDetail(detail: unknown): string {
  if (typeof detail === "string") return detail;
  if (Array.isArray(detail)) {
    return detail
      .map((d) =>
        d && typeof d === "object" && "field" in d && "message" in d
          ? `${(d as { field: unknown }).field}: ${(d as { message: unknown }).message}`
          : String(d)
      )
      .join("; ");
  }
  return "request failed";
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  let res: Response;
  try {
    res = await fetch(url, init);
  } catch (err) {
    throw new ApiError(0, `service unreachable: ${String(err)}`);
  }
  if (!res.ok) {
    let message = `HTTP ${res.status}`;
    try {
      const body = (await res.json()) as { detail?: unknown };
      message = describeDetail(body.detail);
    } catch {
      // non-JSON error body, keep the bare status
    }
    throw new ApiError(res.status, message);
  }
  return res.json() as Promise<T>;
}

export class ApiClient {
  readonly base: string;

  constructor(base: string = DEFAULT_BASE) {
    this.base = base.replace(/\/+$/, "");
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return request<T>(this.base + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  createSession(
    seed: number,
    nObjects?: [number, number],
    noise?: Record<string, unknown>
  ): Promise<SessionPayload> {
    const body: Record<string, unknown> = { seed };
    if (nObjects) body.n_objects = nObjects;
    if (noise) body.noise = noise;
    return this.post("/sessions", body);
  }

  getScene(sessionId: string): Promise<ScenePayload> {
    return request(`${this.base}/sessions/${sessionId}/scene`);
  }

  submitInstruction(sessionId: string, text: string): Promise<InstructionResponse> {
    return this.post(`/sessions/${sessionId}/instruction`, { text });
  }

  getMemory(sessionId: string): Promise<MemoryPayload> {
    return request(`${this.base}/sessions/${sessionId}/memory`);
  }

  newScene(
    sessionId: string,
    seed: number,
    nObjects?: [number, number]
  ): Promise<SessionPayload> {
    const body: Record<string, unknown> = { seed };
    if (nObjects) body.n_objects = nObjects;
    return this.post(`/sessions/${sessionId}/newscene`, body);
  }
}
