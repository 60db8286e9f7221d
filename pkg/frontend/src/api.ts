// Thin JSON client for the game service. One in-flight request per session
// is enforced here; the server stays the arbiter of game state.

import { StatePayload, UtteranceResponse } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class NetworkError extends Error {}

export class ApiClient {
  private busy = false;

  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  get inFlight(): boolean {
    return this.busy;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    if (this.busy) {
      throw new ApiError(0, "a request is already in flight");
    }
    this.busy = true;
    try {
      let resp: Response;
      try {
        resp = await this.fetchImpl(this.baseUrl + path, init);
      } catch (e) {
        throw new NetworkError(String(e));
      }
      if (!resp.ok) {
        let detail = `${resp.status}`;
        try {
          const body = await resp.json();
          detail = body.detail ?? detail;
        } catch {
          // keep the bare status
        }
        throw new ApiError(resp.status, detail);
      }
      return (await resp.json()) as T;
    } finally {
      this.busy = false;
    }
  }

  createSession(seed?: number, threshold = 0.8):
      Promise<{ session_id: string; state: StatePayload }> {
    return this.request("/session", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(seed === undefined ? { threshold } : { seed, threshold }),
    });
  }

  getState(sessionId: string): Promise<StatePayload> {
    return this.request(`/session/${sessionId}/state`);
  }

  submitUtterance(sessionId: string, text: string): Promise<UtteranceResponse> {
    return this.request(`/session/${sessionId}/utterance`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ text }),
    });
  }

  assistantAction(sessionId: string): Promise<{ state: StatePayload } & Record<string, unknown>> {
    return this.request(`/session/${sessionId}/assistant_action`, {
      method: "POST",
    });
  }
}
