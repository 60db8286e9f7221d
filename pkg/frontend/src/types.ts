// Wire types for the game service payloads. The server is the single source
// of truth; the client never mutates game state locally.

export interface FlightDict {
  v: string;
  carrier: string;
  price_norm: number;
  stops_norm: number;
  longest_stop_norm: number;
  arrival_slack_norm: number;
}

export interface OptionSetDict {
  v: string;
  flights: FlightDict[];
}

export interface RoundDict {
  options: OptionSetDict;
  utterances: string[];
  assistant_action: "chose" | "asked" | null;
  chosen_index: number | null;
  outcome: "correct" | "incorrect" | "na";
  points_delta: number;
}

export interface PosteriorDict {
  mean: number[];
  marginals: number[][]; // 8 features x 5 grid values
  mode: "exact" | "importance";
  ess?: number;
}

export type Phase = "awaiting_utterance" | "awaiting_action" | "finished";

export interface StatePayload {
  v: string;
  session_id: string;
  game_id: string;
  theta_star: number[];
  round_index: number;
  phase: Phase;
  pending: "initial" | "ask_response" | "corrective" | null;
  score: number;
  rounds: RoundDict[];
  posterior: PosteriorDict;
  finished: boolean;
  threshold: number;
  options?: OptionSetDict;
}

export interface ActionSummary {
  action: "chose" | "asked";
  index: number | null;
  outcome: string;
  points_delta: number;
}

export interface UtteranceResponse {
  state: StatePayload;
  action: ActionSummary | null;
}

export type Role = "user" | "assistant";

export const GRID_VALUES = [-1, -0.5, 0, 0.5, 1];

export const FEATURE_LABELS = [
  "american",
  "delta",
  "jetblue",
  "southwest",
  "price",
  "stops",
  "layover",
  "slack",
];
