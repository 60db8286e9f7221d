"""Multi-round flight-booking game engine.

A game fixes a hidden reward vector and runs 6 rounds. Each round presents
3 fresh flights. The first round always begins with a user utterance; in
every round the assistant either books the flight its posterior favors or
asks for help. Scoring per round: +25 correct booking, -100 incorrect, -20
ask. Incorrect bookings and asks are followed by one user utterance (which
updates the posterior) before the round closes.

The module also provides the synthetic speakers used for closed-loop play
and corpus generation, JSONL corpus ingestion, and an append-only event log
whose replay reconstructs final game states exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .domain import (
    CARRIERS,
    FEATURE_NAMES,
    N_OPTIONS,
    OptionSet,
    RewardVector,
    Rng,
    optimal_option,
    sample_option_set,
    sample_reward,
)
from .language import Clause, Grammar, SemanticForm, Utterance, default_grammar
from .models import Corpus, CorpusRound
from .pragmatics import (
    PragmaticsConfig,
    RewardPosterior,
    argmax_lowest,
    grid_option_rewards,
    l2_update,
    s1_support_distribution,
)

N_ROUNDS = 6
POINTS_CORRECT = 25
POINTS_INCORRECT = -100
POINTS_ASK = -20

PHASE_UTTERANCE = "awaiting_utterance"
PHASE_ACTION = "awaiting_action"
PHASE_FINISHED = "finished"

PENDING_INITIAL = "initial"
PENDING_ASK = "ask_response"
PENDING_CORRECTIVE = "corrective"


class GameFlowError(RuntimeError):
    pass


class ReplayMismatch(RuntimeError):
    pass


@dataclass(frozen=True)
class RoundRecord:
    options: OptionSet
    utterances: tuple[Utterance, ...] = ()
    assistant_action: str | None = None  # "chose" | "asked"
    chosen_index: int | None = None
    outcome: str = "na"  # "correct" | "incorrect" | "na"
    points_delta: int = 0

    def to_dict(self) -> dict:
        return {
            "options": self.options.to_dict(),
            "utterances": [u.raw for u in self.utterances],
            "assistant_action": self.assistant_action,
            "chosen_index": self.chosen_index,
            "outcome": self.outcome,
            "points_delta": self.points_delta,
        }


@dataclass(frozen=True)
class GameState:
    game_id: str
    theta_star: RewardVector
    option_sets: tuple[OptionSet, ...]
    rounds: tuple[RoundRecord, ...]
    phase: str
    pending: str | None
    score: int
    posterior: RewardPosterior

    @property
    def round_index(self) -> int:
        return len(self.rounds) - 1

    @property
    def current_options(self) -> OptionSet:
        return self.rounds[-1].options

    @property
    def finished(self) -> bool:
        return self.phase == PHASE_FINISHED

    def to_dict(self) -> dict:
        return {
            "v": "v1",
            "game_id": self.game_id,
            "theta_star": list(self.theta_star.weights),
            "round_index": self.round_index,
            "phase": self.phase,
            "pending": self.pending,
            "score": self.score,
            "rounds": [r.to_dict() for r in self.rounds],
            "posterior": self.posterior.snapshot(),
        }


@dataclass(frozen=True)
class AssistantPolicy:
    """Books the modal option when confident enough, otherwise asks."""

    confidence_threshold: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")

    def decide(self, posterior: RewardPosterior, options: OptionSet) -> tuple[str, int | None]:
        p = option_optimality_prob(posterior, options)
        best = int(argmax_lowest(p))
        if p[best] >= self.confidence_threshold:
            return "chose", best
        return "asked", None


def option_optimality_prob(posterior: RewardPosterior, options: OptionSet) -> np.ndarray:
    """Posterior probability that each option is the reward-optimal one
    (lowest-index tie-break, matching `optimal_option`)."""
    from .domain import ARGMAX_TOL

    posterior.check_normalized(1e-9)
    if posterior.thetas is None:
        rewards = grid_option_rewards(options)
    else:
        rewards = posterior.points() @ options.feature_matrix().T
    w = posterior.weights
    r0, r1, r2 = rewards[:, 0], rewards[:, 1], rewards[:, 2]
    m = np.maximum(np.maximum(r0, r1), r2) - ARGMAX_TOL
    t0 = r0 >= m
    t1 = ~t0 & (r1 >= m)
    mass0 = float(np.sum(w, where=t0))
    mass1 = float(np.sum(w, where=t1))
    mass2 = float(np.sum(w, where=~t0 & ~t1))
    return np.array([mass0, mass1, mass2])


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------


def new_game(game_id: str, theta_star: RewardVector, option_sets,
             posterior: RewardPosterior | None = None) -> GameState:
    option_sets = tuple(option_sets)
    if len(option_sets) != N_ROUNDS:
        raise ValueError(f"a game needs {N_ROUNDS} option sets")
    return GameState(
        game_id=game_id,
        theta_star=theta_star,
        option_sets=option_sets,
        rounds=(RoundRecord(option_sets[0]),),
        phase=PHASE_UTTERANCE,
        pending=PENDING_INITIAL,
        score=0,
        posterior=posterior or RewardPosterior.uniform_exact(),
    )


def game_from_seed(game_id: str, seed: int) -> GameState:
    """Deterministic fresh game: hidden reward and 6 option sets from `seed`."""
    rng = Rng(seed)
    theta = sample_reward(rng.split(0))
    sets = [sample_option_set(rng.split(1 + i)) for i in range(N_ROUNDS)]
    return new_game(game_id, theta, sets)


def _advance(state: GameState) -> GameState:
    if state.round_index + 1 >= N_ROUNDS:
        return replace(state, phase=PHASE_FINISHED, pending=None)
    nxt = RoundRecord(state.option_sets[state.round_index + 1])
    return replace(state, rounds=state.rounds + (nxt,), phase=PHASE_ACTION, pending=None)


def apply_utterance(state: GameState, u: Utterance, cfg: PragmaticsConfig,
                    rng: Rng | None = None) -> GameState:
    """Record a user utterance for the open round and update the posterior."""
    if state.phase != PHASE_UTTERANCE:
        raise GameFlowError(f"no utterance expected in phase {state.phase}")
    posterior = l2_update(state.posterior, u, state.current_options, cfg, rng)
    cur = state.rounds[-1]
    cur = replace(cur, utterances=cur.utterances + (u,))
    state = replace(state, rounds=state.rounds[:-1] + (cur,), posterior=posterior)
    if state.pending == PENDING_INITIAL:
        return replace(state, phase=PHASE_ACTION, pending=None)
    return _advance(state)


def apply_action(state: GameState, decision: tuple[str, int | None]) -> tuple[GameState, dict]:
    """Apply a decided assistant action; returns (state, action summary)."""
    if state.phase != PHASE_ACTION:
        raise GameFlowError(f"no action expected in phase {state.phase}")
    action, index = decision
    cur = state.rounds[-1]
    best, _ = optimal_option(state.theta_star, cur.options)
    if action == "chose":
        outcome = "correct" if index == best else "incorrect"
        points = POINTS_CORRECT if outcome == "correct" else POINTS_INCORRECT
    elif action == "asked":
        outcome, points, index = "na", POINTS_ASK, None
    else:
        raise GameFlowError(f"unknown action {action!r}")
    cur = replace(cur, assistant_action=action, chosen_index=index,
                  outcome=outcome, points_delta=points)
    state = replace(state, rounds=state.rounds[:-1] + (cur,), score=state.score + points)
    if action == "asked":
        state = replace(state, phase=PHASE_UTTERANCE, pending=PENDING_ASK)
    elif outcome == "incorrect":
        state = replace(state, phase=PHASE_UTTERANCE, pending=PENDING_CORRECTIVE)
    else:
        state = _advance(state)
    summary = {"action": action, "index": index, "outcome": outcome,
               "points_delta": points}
    return state, summary


def take_action(state: GameState, assistant: AssistantPolicy) -> tuple[GameState, dict]:
    return apply_action(state, assistant.decide(state.posterior, state.current_options))


def step_round(state: GameState, assistant: AssistantPolicy, speaker,
               cfg: PragmaticsConfig, rng: Rng | None = None,
               log: "GameLog | None" = None) -> GameState:
    """Drive the current round to completion with a synthetic speaker."""
    if state.finished:
        raise GameFlowError("game already finished")
    round_index = state.round_index
    while not state.finished and state.round_index == round_index:
        if state.phase == PHASE_UTTERANCE:
            u = speaker.speak(state.theta_star, state.current_options)
            if log is not None:
                log.append({"event": "utterance", "round": round_index, "text": u.raw})
            state = apply_utterance(state, u, cfg, rng)
        else:
            state, summary = take_action(state, assistant)
            if log is not None:
                log.append({"event": "action", "round": round_index, **summary})
    return state


def play_game(state: GameState, assistant: AssistantPolicy, speaker,
              cfg: PragmaticsConfig, rng: Rng | None = None,
              log: "GameLog | None" = None) -> GameState:
    while not state.finished:
        state = step_round(state, assistant, speaker, cfg, rng, log)
    return state


# ---------------------------------------------------------------------------
# synthetic speakers
# ---------------------------------------------------------------------------


def _scalar_gap_clause(theta_star: RewardVector, options: OptionSet,
                       xi_star: int) -> Clause:
    """Superlative on the scalar where the optimum is most extreme."""
    phi = options.feature_matrix()
    others = [i for i in range(N_OPTIONS) if i != xi_star]
    best_d, best_gap, best_dir = 4, -np.inf, 1
    for d in range(4, 8):
        col = phi[:, d]
        up = col[xi_star] - max(col[o] for o in others)
        down = min(col[o] for o in others) - col[xi_star]
        gap, direction = (up, 1) if up >= down else (down, -1)
        if gap > best_gap:
            best_d, best_gap, best_dir = d, gap, direction
    return Clause(FEATURE_NAMES[best_d], best_dir, None, superlative=True)


def discriminative_clauses(theta_star: RewardVector, options: OptionSet,
                           xi_star: int) -> list[Clause]:
    """Single clauses that pick out the optimal option in this context."""
    phi = options.feature_matrix()
    star = options.flights[xi_star]
    others = [i for i in range(N_OPTIONS) if i != xi_star]
    out: list[Clause] = []
    if all(options.flights[o].carrier != star.carrier for o in others):
        out.append(Clause(f"carrier_{star.carrier.lower()}", 1))
        out.append(Clause(f"carrier_{star.carrier.lower()}", 1, "strong"))
    shared = {options.flights[o].carrier for o in others}
    if len(shared) == 1:
        bad = shared.pop()
        if bad != star.carrier:
            out.append(Clause(f"carrier_{bad.lower()}", -1, "strong"))
    for d in range(4, 8):
        col = phi[:, d]
        if all(col[xi_star] > col[o] + 1e-9 for o in others):
            out.append(Clause(FEATURE_NAMES[d], 1, None, superlative=True))
        if all(col[xi_star] < col[o] - 1e-9 for o in others):
            out.append(Clause(FEATURE_NAMES[d], -1, None, superlative=True))
    return out


def _clause_true_in_context(dim: int, sign: int, options: OptionSet,
                            xi_star: int) -> bool:
    """Whether the signed preference also points at the optimal option here."""
    phi = options.feature_matrix()
    others = [i for i in range(N_OPTIONS) if i != xi_star]
    if dim < 4:
        has = phi[xi_star, dim] > 0.5
        return has if sign > 0 else not has and any(phi[o, dim] > 0.5 for o in others)
    col = sign * phi[:, dim]
    return all(col[xi_star] >= col[o] for o in others)


def reward_descriptive_form(theta_star: RewardVector, n_clauses: int, rng: Rng,
                            options: OptionSet | None = None,
                            xi_star: int | None = None) -> SemanticForm | None:
    """Clauses for the strongest-weighted features, polarity matching theta.

    When a context is given, equally useful mentions are ordered so that
    clauses also true of the optimal option come first: speakers describe
    their reward but pick the aspects that help in the current round.
    """
    w = theta_star.array()
    nonzero = np.flatnonzero(w)
    if len(nonzero) == 0:
        return None
    jitter = rng.gen.random(len(nonzero)) * 1e-6
    rank = -np.abs(w[nonzero]) + jitter
    if options is not None:
        helpful = np.array([
            _clause_true_in_context(d, int(np.sign(w[d])), options, xi_star)
            for d in nonzero
        ])
        rank = rank - helpful  # lexicographic-ish: helpfulness breaks weight ties
    order = nonzero[np.argsort(rank)]
    chosen = order[: min(n_clauses, len(order))]
    clauses = [
        Clause(FEATURE_NAMES[d], int(np.sign(w[d])),
               "strong" if abs(w[d]) == 1.0 else "weak")
        for d in chosen
    ]
    return SemanticForm.of(*clauses)


def scripted_utterance(theta_star: RewardVector, options: OptionSet, rng: Rng,
                       grammar: Grammar | None = None,
                       reward_prob: float = 0.5) -> Utterance:
    """Rule-based stand-in for a human speaker.

    With probability `reward_prob` it describes the 1-2 dominant reward
    components; otherwise it picks a clause that uniquely identifies the
    optimal flight in context (falling back across modes when one has
    nothing to say).
    """
    grammar = grammar or default_grammar()
    xi_star, _ = optimal_option(theta_star, options)
    form: SemanticForm | None = None
    if rng.gen.random() < reward_prob:
        form = reward_descriptive_form(theta_star, int(rng.gen.integers(1, 3)), rng,
                                       options, xi_star)
    if form is None:
        candidates = discriminative_clauses(theta_star, options, xi_star)
        if candidates:
            form = SemanticForm.of(candidates[int(rng.gen.integers(len(candidates)))])
        else:
            form = reward_descriptive_form(theta_star, 1, rng)
    if form is None:  # zero reward and no discriminative clause
        form = SemanticForm.of(_scalar_gap_clause(theta_star, options, xi_star))
    return grammar.realize(form, rng)


@dataclass
class SyntheticSpeaker:
    """Closed-loop utterance source: samples the mixture speaker, or scripts."""

    mode: str  # "s1" | "scripted"
    rng: Rng
    cfg: PragmaticsConfig | None = None  # required in s1 mode
    grammar: Grammar | None = None

    def __post_init__(self):
        if self.mode not in ("s1", "scripted"):
            raise ValueError(f"unknown speaker mode {self.mode!r}")
        if self.mode == "s1" and self.cfg is None:
            raise ValueError("s1 speaker needs a pragmatics config")

    def speak(self, theta_star: RewardVector, options: OptionSet) -> Utterance:
        if self.mode == "s1":
            dist = s1_support_distribution(theta_star, options, self.cfg)
            i = int(self.rng.gen.choice(len(dist), p=dist))
            return self.cfg.support[i]
        grammar = self.grammar or default_grammar()
        form = reward_descriptive_form(theta_star, 1, self.rng)
        if form is None:
            xi_star, _ = optimal_option(theta_star, options)
            form = SemanticForm.of(_scalar_gap_clause(theta_star, options, xi_star))
        return grammar.realize(form, self.rng)


# ---------------------------------------------------------------------------
# corpus generation and ingestion
# ---------------------------------------------------------------------------


def generate_corpus(n_games: int, seed: int, grammar: Grammar | None = None,
                    reward_prob: float = 0.5, rounds_per_game: int = N_ROUNDS) -> Corpus:
    """Scripted-speaker corpus of (utterance, options, reward, optimum) rounds."""
    grammar = grammar or default_grammar()
    rng = Rng(seed)
    rounds = []
    for gi in range(n_games):
        game_rng = rng.split(gi)
        theta = sample_reward(game_rng.split(0))
        for ri in range(rounds_per_game):
            options = sample_option_set(game_rng.split(1 + 2 * ri))
            xi_star, _ = optimal_option(theta, options)
            u = scripted_utterance(theta, options, game_rng.split(2 + 2 * ri),
                                   grammar, reward_prob)
            rounds.append(CorpusRound(f"game-{gi:04d}", ri, u, options, theta, xi_star))
    return Corpus(tuple(rounds))


def generate_s1_games(n_games: int, cfg: PragmaticsConfig, seed: int,
                      rounds_per_game: int = N_ROUNDS) -> Corpus:
    """Evaluation games where every round's utterance is sampled from the
    trained mixture speaker given the hidden reward and the fresh context."""
    rng = Rng(seed)
    rounds = []
    for gi in range(n_games):
        game_rng = rng.split(gi)
        theta = sample_reward(game_rng.split(0))
        speaker = SyntheticSpeaker("s1", game_rng.split(1), cfg=cfg)
        for ri in range(rounds_per_game):
            options = sample_option_set(game_rng.split(2 + ri))
            xi_star, _ = optimal_option(theta, options)
            u = speaker.speak(theta, options)
            rounds.append(CorpusRound(f"eval-{gi:04d}", ri, u, options, theta, xi_star))
    return Corpus(tuple(rounds))


CORPUS_SCHEMA = "v1"


def write_corpus(corpus: Corpus, path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"corpus_schema": CORPUS_SCHEMA}) + "\n")
        for r in corpus:
            fh.write(json.dumps(r.to_dict()) + "\n")


def ingest_corpus(path) -> tuple[Corpus, list[str]]:
    """Read and validate a corpus file; bad rows are reported and skipped.

    Raises on an unreadable file or a schema-version mismatch in the header.
    """
    rounds, errors = [], []
    with open(path) as fh:
        lines = fh.readlines()
    start = 0
    if lines:
        first = json.loads(lines[0]) if lines[0].strip() else {}
        if isinstance(first, dict) and "corpus_schema" in first:
            if first["corpus_schema"] != CORPUS_SCHEMA:
                raise ValueError(
                    f"corpus schema {first['corpus_schema']!r}, expected {CORPUS_SCHEMA!r}"
                )
            start = 1
    for lineno, line in enumerate(lines[start:], start + 1):
        if not line.strip():
            continue
        try:
            row = CorpusRound.from_dict(json.loads(line))
            row.validate()
            rounds.append(row)
        except (ValueError, KeyError, TypeError) as e:
            errors.append(f"line {lineno}: {e}")
    return Corpus(tuple(rounds)), errors


# ---------------------------------------------------------------------------
# event log persistence
# ---------------------------------------------------------------------------


class GameLog:
    """Append-only JSONL event log; replay rebuilds the exact final state."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self.events: list[dict] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if self.path.exists():
                with open(self.path) as fh:
                    self.events = [json.loads(x) for x in fh if x.strip()]

    def append(self, event: dict) -> None:
        self.events.append(event)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(event) + "\n")

    def record_created(self, state: GameState, threshold: float) -> None:
        self.append({
            "event": "created",
            "v": "v1",
            "game_id": state.game_id,
            "theta_star": list(state.theta_star.weights),
            "option_sets": [o.to_dict() for o in state.option_sets],
            "threshold": threshold,
        })


def replay_log(log: GameLog, cfg: PragmaticsConfig, rng: Rng | None = None,
               strict: bool = True) -> GameState:
    """Rebuild a game from its event log.

    With `strict`, re-derives each assistant action from the replayed
    posterior and the logged threshold, and demands agreement with the log.
    """
    events = iter(log.events)
    head = next(events, None)
    if head is None or head.get("event") != "created":
        raise ReplayMismatch("log must start with a created event")
    theta = RewardVector.from_array(head["theta_star"])
    sets = [OptionSet.from_dict(d) for d in head["option_sets"]]
    state = new_game(head["game_id"], theta, sets)
    policy = AssistantPolicy(head["threshold"])
    for ev in events:
        if ev["event"] == "utterance":
            state = apply_utterance(state, Utterance.from_text(ev["text"]), cfg, rng)
        elif ev["event"] == "action":
            decision = (ev["action"], ev.get("index"))
            if strict:
                derived = policy.decide(state.posterior, state.current_options)
                if derived != decision:
                    raise ReplayMismatch(
                        f"round {state.round_index}: log says {decision}, "
                        f"policy derives {derived}"
                    )
            state, summary = apply_action(state, decision)
            if summary["outcome"] != ev["outcome"] \
                    or summary["points_delta"] != ev["points_delta"]:
                raise ReplayMismatch(f"outcome mismatch at round {ev['round']}")
        else:
            raise ReplayMismatch(f"unknown event {ev['event']!r}")
    return state


def simulate_games(n_games: int, assistant: AssistantPolicy, cfg: PragmaticsConfig,
                   seed: int, speaker_mode: str = "s1", log_dir=None,
                   ) -> tuple[list[GameState], list[GameLog]]:
    """Run full closed-loop games with a synthetic speaker."""
    states, logs = [], []
    for gi in range(n_games):
        state = game_from_seed(f"sim-{seed}-{gi:05d}", (seed << 20) + gi)
        log = GameLog(None if log_dir is None else Path(log_dir) / f"{state.game_id}.jsonl")
        log.record_created(state, assistant.confidence_threshold)
        speaker = SyntheticSpeaker(speaker_mode, Rng((seed << 21) + gi), cfg=cfg)
        state = play_game(state, assistant, speaker, cfg, log=log)
        states.append(state)
        logs.append(log)
    return states, logs
