// Pure HTML-string renderers. Keeping these DOM-free makes golden-file
// snapshots and node-side tests trivial; the browser shell just assigns
// innerHTML and wires events by element id.

import {
  ActionSummary,
  FEATURE_LABELS,
  FlightDict,
  GRID_VALUES,
  Role,
  StatePayload,
} from "./types.js";

const esc = (s: string): string =>
  s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");

const fmt = (x: number, digits = 2): string => x.toFixed(digits);

export function renderFlightCard(f: FlightDict, index: number,
                                 highlight: boolean): string {
  const cls = highlight ? "flight-card chosen" : "flight-card";
  return [
    `<div class="${cls}" data-option="${index}">`,
    `<div class="carrier">[${index}] ${esc(f.carrier)}</div>`,
    `<ul class="attrs">`,
    `<li>price ${fmt(f.price_norm)}</li>`,
    `<li>stops ${fmt(f.stops_norm, 1)}</li>`,
    `<li>layover ${fmt(f.longest_stop_norm)}</li>`,
    `<li>slack ${fmt(f.arrival_slack_norm)}</li>`,
    `</ul>`,
    `</div>`,
  ].join("");
}

export function renderMarginals(marginals: number[][]): string {
  const rows = marginals.map((row, d) => {
    const sum = row.reduce((a, b) => a + b, 0);
    const offMass = Math.abs(sum - 1) > 1e-6 ? " bad-mass" : "";
    const cells = row
      .map(
        (m, v) =>
          `<td class="cell" data-mass="${m.toFixed(6)}" title="${GRID_VALUES[v]}: ${fmt(m, 3)}"` +
          ` style="background: rgba(38, 99, 235, ${Math.min(1, m).toFixed(6)})"></td>`,
      )
      .join("");
    return `<tr class="marginal-row${offMass}"><th>${FEATURE_LABELS[d]}</th>${cells}</tr>`;
  });
  const header = GRID_VALUES.map((v) => `<th>${v}</th>`).join("");
  return [
    `<table class="marginals"><thead><tr><th></th>${header}</tr></thead>`,
    `<tbody>${rows.join("")}</tbody></table>`,
  ].join("");
}

export function renderMeanBars(mean: number[]): string {
  const bars = mean.map((m, d) => {
    const width = Math.min(100, Math.abs(m) * 100);
    const side = m >= 0 ? "pos" : "neg";
    return (
      `<div class="mean-row"><span class="label">${FEATURE_LABELS[d]}</span>` +
      `<span class="bar ${side}" data-mean="${m.toFixed(6)}" style="width: ${width.toFixed(1)}%"></span>` +
      `<span class="value">${fmt(m)}</span></div>`
    );
  });
  return `<div class="mean-bars">${bars.join("")}</div>`;
}

export function renderThetaPanel(theta: number[], role: Role): string {
  if (role !== "user") {
    return "";
  }
  const cells = theta
    .map((w, d) => `<li>${FEATURE_LABELS[d]}: <b>${w}</b></li>`)
    .join("");
  return `<div class="theta-panel"><h3>your hidden preferences</h3><ul>${cells}</ul></div>`;
}

export function renderActionLog(state: StatePayload): string {
  const items = state.rounds.map((r, i) => {
    const utts = r.utterances.map((u) => `"${esc(u)}"`).join(", ");
    let act = "pending";
    if (r.assistant_action === "chose") {
      act = `chose option ${r.chosen_index} (${r.outcome}, ${r.points_delta > 0 ? "+" : ""}${r.points_delta})`;
    } else if (r.assistant_action === "asked") {
      act = `asked for help (${r.points_delta})`;
    }
    return `<li>round ${i + 1}: ${utts || "(no utterance)"} &rarr; ${act}</li>`;
  });
  return `<ol class="action-log">${items.join("")}</ol>`;
}

function renderPrompt(state: StatePayload): string {
  if (state.finished) {
    return `<div class="prompt done">game over - final score <b data-score="${state.score}">${state.score}</b></div>`;
  }
  if (state.phase === "awaiting_utterance") {
    const why = {
      initial: "describe the flight you want",
      ask_response: "the assistant asked for help",
      corrective: "describe the correct flight",
    }[state.pending ?? "initial"];
    return [
      `<div class="prompt speak"><label for="utterance-input">${why}</label>`,
      `<input id="utterance-input" type="text" autocomplete="off" />`,
      `<button id="utterance-send">send</button></div>`,
    ].join("");
  }
  return (
    `<div class="prompt act"><button id="assistant-act">let the assistant act</button>` +
    `<span class="hint">threshold ${fmt(state.threshold)}</span></div>`
  );
}

export function renderLastAction(action: ActionSummary | null): string {
  if (!action) {
    return "";
  }
  const text =
    action.action === "chose"
      ? `assistant chose option ${action.index}: ${action.outcome} (${action.points_delta > 0 ? "+" : ""}${action.points_delta})`
      : `assistant asked for another hint (${action.points_delta})`;
  return `<div class="last-action ${action.outcome}">${text}</div>`;
}

export function renderError(message: string, retryable: boolean): string {
  const retry = retryable ? `<button id="retry-btn">retry</button>` : "";
  return `<div class="error-banner">${esc(message)} ${retry}</div>`;
}

export function renderSession(state: StatePayload, role: Role,
                              lastAction: ActionSummary | null = null,
                              error = ""): string {
  const optionCards = state.finished || !state.options
    ? `<div class="no-options">no more rounds</div>`
    : state.options.flights
        .map((f, i) => renderFlightCard(f, i, false))
        .join("");
  return [
    `<div class="session" data-session="${esc(state.session_id)}">`,
    error,
    `<div class="status">round <b data-round="${state.round_index}">${Math.min(state.round_index + 1, state.rounds.length)}</b>/6`,
    ` &middot; score <b data-score="${state.score}">${state.score}</b></div>`,
    renderThetaPanel(state.theta_star, role),
    `<div class="options">${optionCards}</div>`,
    renderLastAction(lastAction),
    renderPrompt(state),
    `<h3>posterior marginals</h3>`,
    renderMarginals(state.posterior.marginals),
    `<h3>posterior mean</h3>`,
    renderMeanBars(state.posterior.mean),
    `<h3>log</h3>`,
    renderActionLog(state),
    `</div>`,
  ].join("\n");
}

export function renderMalformed(detail: string): string {
  return (
    `<div class="session broken">` +
    renderError(`malformed state payload: ${detail}`, false) +
    `</div>`
  );
}

// Defensive entry point: a bad payload must yield an error banner, never a
// crash of the page shell.
export function safeRenderSession(payload: unknown, role: Role,
                                  lastAction: ActionSummary | null = null,
                                  error = ""): string {
  const p = payload as StatePayload;
  if (
    !p ||
    typeof p !== "object" ||
    !Array.isArray(p.rounds) ||
    !p.posterior ||
    !Array.isArray(p.posterior.marginals) ||
    p.posterior.marginals.length !== 8
  ) {
    return renderMalformed("missing rounds or posterior");
  }
  try {
    return renderSession(p, role, lastAction, error);
  } catch (e) {
    return renderMalformed(String(e));
  }
}
