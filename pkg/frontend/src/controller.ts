// Session controller: holds the last server payload, guards duplicate
// submits, and turns server responses into re-renders. All game logic stays
// on the server; refreshing the page rehydrates from GET /state.

import { ApiClient, ApiError, NetworkError } from "./api.js";
import { renderError, safeRenderSession } from "./render.js";
import { ActionSummary, Role, StatePayload } from "./types.js";

export class SessionController {
  state: StatePayload | null = null;
  lastAction: ActionSummary | null = null;
  errorHtml = "";
  private submittedForStep = new Set<string>();

  constructor(
    private api: ApiClient,
    private role: Role,
    private onRender: (html: string) => void,
  ) {}

  html(): string {
    if (this.state === null) {
      return `<div class="session loading">connecting...</div>`;
    }
    return safeRenderSession(this.state, this.role, this.lastAction, this.errorHtml);
  }

  private paint(): void {
    this.onRender(this.html());
  }

  private stepKey(): string {
    if (!this.state) {
      return "none";
    }
    const nUtts = this.state.rounds.reduce((n, r) => n + r.utterances.length, 0);
    return `${this.state.round_index}:${this.state.phase}:${nUtts}`;
  }

  async start(sessionId: string | null, seed?: number): Promise<void> {
    try {
      if (sessionId) {
        this.state = await this.api.getState(sessionId);
      } else {
        const created = await this.api.createSession(seed);
        this.state = created.state;
      }
      this.errorHtml = "";
    } catch (e) {
      this.errorHtml = renderError(`could not reach the service: ${e}`, true);
    }
    this.paint();
  }

  async refresh(): Promise<void> {
    if (!this.state) {
      return;
    }
    await this.start(this.state.session_id);
  }

  /** Client-side checks: nonempty, no duplicate submit for the same step. */
  canSubmit(text: string): boolean {
    return text.trim().length > 0 && !this.submittedForStep.has(this.stepKey());
  }

  async submitUtterance(text: string): Promise<void> {
    if (!this.state || this.state.phase !== "awaiting_utterance") {
      return;
    }
    if (!this.canSubmit(text)) {
      return; // empty input or duplicate submit: blocked client-side
    }
    const key = this.stepKey();
    this.submittedForStep.add(key);
    try {
      const resp = await this.api.submitUtterance(this.state.session_id, text);
      this.state = resp.state;
      this.lastAction = resp.action;
      this.errorHtml = "";
    } catch (e) {
      this.submittedForStep.delete(key); // allow retry
      if (e instanceof NetworkError) {
        this.errorHtml = renderError(`network failure: ${e.message}`, true);
      } else if (e instanceof ApiError) {
        this.errorHtml = renderError(e.message, false);
      } else {
        this.errorHtml = renderError(String(e), false);
      }
    }
    this.paint();
  }

  async assistantAct(): Promise<void> {
    if (!this.state || this.state.phase !== "awaiting_action") {
      return;
    }
    try {
      const resp = await this.api.assistantAction(this.state.session_id);
      this.state = resp.state as StatePayload;
      this.lastAction = {
        action: (resp as Record<string, unknown>).action as "chose" | "asked",
        index: (resp as Record<string, unknown>).index as number | null,
        outcome: (resp as Record<string, unknown>).outcome as string,
        points_delta: (resp as Record<string, unknown>).points_delta as number,
      };
      this.errorHtml = "";
    } catch (e) {
      if (e instanceof NetworkError) {
        this.errorHtml = renderError(`network failure: ${e.message}`, true);
      } else if (e instanceof ApiError && e.status !== 409) {
        this.errorHtml = renderError(e.message, false);
      }
      // a 409 means we raced the server; refresh silently
      await this.refresh();
      return;
    }
    this.paint();
  }
}
