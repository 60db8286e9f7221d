import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, test } from "vitest";

import { ApiClient, FetchLike } from "../src/api.js";
import { SessionController } from "../src/controller.js";
import { StatePayload } from "../src/types.js";

const fixture = JSON.parse(
  readFileSync(join(__dirname, "..", "fixtures", "recorded_game.json"), "utf-8"),
);
const firstState: StatePayload = fixture.steps[0].state;
const afterUtterance = fixture.steps.find((s: { type: string }) => s.type === "utterance");

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

function makeController(fetchImpl: FetchLike) {
  const api = new ApiClient("http://test", fetchImpl);
  const paints: string[] = [];
  const controller = new SessionController(api, "user", (html) => paints.push(html));
  return { controller, paints };
}

describe("session controller", () => {
  test("start rehydrates from GET /state", async () => {
    const calls: string[] = [];
    const { controller, paints } = makeController(async (url) => {
      calls.push(url);
      return jsonResponse(firstState);
    });
    await controller.start(firstState.session_id);
    expect(calls[0]).toContain(`/session/${firstState.session_id}/state`);
    expect(paints.at(-1)).toContain(`data-score="${firstState.score}"`);
  });

  test("empty utterances are blocked client-side", async () => {
    let posts = 0;
    const { controller } = makeController(async (url, init) => {
      if (init?.method === "POST") {
        posts += 1;
      }
      return jsonResponse(firstState);
    });
    controller.state = firstState;
    await controller.submitUtterance("   ");
    expect(posts).toBe(0);
  });

  test("duplicate submits for one step are guarded", async () => {
    let posts = 0;
    const { controller } = makeController(async () => {
      posts += 1;
      return jsonResponse({ state: afterUtterance.state, action: afterUtterance.action });
    });
    controller.state = firstState;
    await controller.submitUtterance("jetblue one");
    // same step again (state not reset): blocked without a network call
    controller.state = firstState;
    await controller.submitUtterance("jetblue one");
    expect(posts).toBe(1);
  });

  test("network failure shows a retry affordance", async () => {
    const { controller, paints } = makeController(async () => {
      throw new Error("connection refused");
    });
    controller.state = firstState;
    await controller.submitUtterance("jetblue one");
    const html = paints.at(-1)!;
    expect(html).toContain("error-banner");
    expect(html).toContain("retry-btn");
  });

  test("server validation errors render inline without retry", async () => {
    const { controller, paints } = makeController(async () =>
      jsonResponse({ detail: "empty utterance" }, 422),
    );
    controller.state = firstState;
    await controller.submitUtterance("x");
    const html = paints.at(-1)!;
    expect(html).toContain("empty utterance");
    expect(html).not.toContain("retry-btn");
  });

  test("failed submits may be retried (guard released)", async () => {
    let attempt = 0;
    const { controller, paints } = makeController(async () => {
      attempt += 1;
      if (attempt === 1) {
        throw new Error("flaky network");
      }
      return jsonResponse({ state: afterUtterance.state, action: afterUtterance.action });
    });
    controller.state = firstState;
    await controller.submitUtterance("jetblue one");
    controller.state = firstState;
    await controller.submitUtterance("jetblue one");
    expect(attempt).toBe(2);
    expect(paints.at(-1)).toContain(`data-score="${afterUtterance.state.score}"`);
  });
});
