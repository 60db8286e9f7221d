"""Command-line entry points: datagen, train, evaluate, simulate, play, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import game as engine
from .artifacts import demo_bundle, load_bundle, save_bundle, train_bundle
from .evaluation import eval_games_from_corpus, oracle_switch, run_models
from .language import Utterance
from .models import TrainConfig


def _bundle_from_args(args):
    if getattr(args, "demo", False):
        print("building demo artifacts (small models, single-clause support)...")
        return demo_bundle(args.seed)
    if not args.artifacts:
        sys.exit("error: pass --artifacts DIR or --demo")
    return load_bundle(args.artifacts)


def cmd_datagen(args) -> int:
    corpus = engine.generate_corpus(args.games, args.seed, reward_prob=args.reward_prob)
    engine.write_corpus(corpus, args.out)
    print(f"wrote {len(corpus)} rounds ({args.games} games) to {args.out}")
    return 0


def cmd_train(args) -> int:
    corpus, errors = engine.ingest_corpus(args.corpus)
    for e in errors:
        print(f"skipped {e}", file=sys.stderr)
    if args.config:
        lcfg = TrainConfig.from_ini(args.config, "listener")
        scfg = TrainConfig.from_ini(args.config, "speaker")
    else:
        lcfg = TrainConfig(lr=0.8, momentum=0.9, max_steps=4000, patience=300,
                           seed=args.seed)
        scfg = TrainConfig(lr=0.5, momentum=0.9, max_steps=700, patience=80,
                           seed=args.seed)
    bundle = train_bundle(corpus, lcfg, scfg,
                          support_max_clauses=args.support_clauses)
    save_bundle(bundle, args.out_dir)
    lr, sr = bundle.listener.report, bundle.speaker.report
    print(f"listener: {lr.steps} steps, train loss {lr.final_train_loss:.4f}, "
          f"val loss {lr.final_val_loss:.4f}")
    print(f"speaker:  {sr.steps} steps, train loss {sr.final_train_loss:.4f}, "
          f"val loss {sr.final_val_loss:.4f}, "
          f"p(reward-descriptive) = {1 / (1 + np.exp(-bundle.mixture_logit)):.3f}")
    print(f"saved artifacts to {args.out_dir}")
    return 0


def cmd_evaluate(args) -> int:
    bundle = _bundle_from_args(args)
    cfg = bundle.config()
    if args.games_file:
        corpus, errors = engine.ingest_corpus(args.games_file)
        for e in errors:
            print(f"skipped {e}", file=sys.stderr)
    else:
        print(f"generating {args.games} evaluation games from the trained speaker...")
        corpus = engine.generate_s1_games(args.games, cfg, seed=args.seed)
    games = eval_games_from_corpus(corpus)
    cfgs = {
        "full": cfg,
        "action_only": cfg.with_alpha(1.0),
        "reward_only": cfg.with_alpha(0.0),
    }
    report = run_models(games, cfgs, n_heldout=args.n_heldout, seed=args.seed)
    switch = oracle_switch(
        games,
        {"action_only": cfg.with_alpha(1.0), "reward_only": cfg.with_alpha(0.0)},
        n_heldout=args.n_heldout,
        seed=args.seed,
    )
    report.models["oracle_switch"] = switch.models["oracle_switch"]
    print(report.to_text_table())
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_json_dict(), indent=2))
        print(f"report -> {args.report}")
    if args.table:
        Path(args.table).write_text(report.to_text_table() + "\n")
        print(f"table -> {args.table}")
    if args.curves:
        Path(args.curves).write_text(report.curves_csv())
        print(f"curves -> {args.curves}")
    return 0


def cmd_simulate(args) -> int:
    bundle = _bundle_from_args(args)
    cfg = bundle.config()
    policy = engine.AssistantPolicy(args.threshold)
    states, _ = engine.simulate_games(args.games, policy, cfg, seed=args.seed,
                                      log_dir=args.log_dir)
    scores = [s.score for s in states]
    chose = sum(1 for s in states for r in s.rounds if r.assistant_action == "chose")
    correct = sum(1 for s in states for r in s.rounds if r.outcome == "correct")
    asked = sum(1 for s in states for r in s.rounds if r.assistant_action == "asked")
    print(f"{args.games} games at threshold {args.threshold}: "
          f"mean score {np.mean(scores):.1f} "
          f"(chose {chose}, correct {correct}, asked {asked})")
    if args.out:
        with open(args.out, "w") as fh:
            for s in states:
                fh.write(json.dumps(s.to_dict()) + "\n")
        print(f"states -> {args.out}")
    return 0


def _print_round(state: engine.GameState) -> None:
    print(f"\n--- round {state.round_index + 1}/{engine.N_ROUNDS} "
          f"| score {state.score} ---")
    for i, f in enumerate(state.current_options.flights):
        print(f"  [{i}] {f.carrier:<10} price {f.price_norm:.2f}  "
              f"stops {f.stops_norm:.1f}  layover {f.longest_stop_norm:.2f}  "
              f"slack {f.arrival_slack_norm:.2f}")


def cmd_play(args) -> int:
    bundle = _bundle_from_args(args)
    cfg = bundle.config()
    state = engine.game_from_seed("play", args.seed)
    policy = engine.AssistantPolicy(args.threshold)
    print("you are the user; the assistant must learn your preferences.")
    print("your hidden reward vector (carrier x4, price, stops, layover, slack):")
    print(" ", state.theta_star.weights)
    while not state.finished:
        _print_round(state)
        if state.phase == engine.PHASE_UTTERANCE:
            why = {engine.PENDING_INITIAL: "describe the flight you want",
                   engine.PENDING_ASK: "the assistant asked for help",
                   engine.PENDING_CORRECTIVE: "describe the correct flight"}[state.pending]
            text = ""
            while not text.strip():
                text = input(f"({why}) > ")
            state = engine.apply_utterance(state, Utterance.from_text(text), cfg)
            mean = np.round(state.posterior.mean(), 2)
            print(f"  posterior mean now {mean.tolist()}")
        else:
            p = engine.option_optimality_prob(state.posterior, state.current_options)
            state, summary = engine.take_action(state, policy)
            print(f"  assistant (confidence {p.max():.2f}): {summary['action']}"
                  + (f" option {summary['index']} -> {summary['outcome']}"
                     f" ({summary['points_delta']:+d})"
                     if summary["action"] == "chose" else " (-20)"))
    print(f"\ngame over. final score: {state.score}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    bundle = _bundle_from_args(args)
    app = create_app(bundle=bundle, log_dir=args.log_dir, static_dir=args.static,
                     rng_seed=args.seed)
    print(f"serving on http://{args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flightpref",
        description="reward inference from flight-preference language",
    )
    parser.add_argument("--seed", type=int, default=0, help="global random seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate a synthetic training corpus")
    p.add_argument("--games", type=int, default=500, help="number of 6-round games")
    p.add_argument("--reward-prob", type=float, default=0.5,
                   help="share of reward-descriptive utterances")
    p.add_argument("--out", required=True, help="output corpus JSONL")
    p.set_defaults(fn=cmd_datagen)

    p = sub.add_parser("train", help="train base models from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", help="INI file with [listener] and [speaker] sections")
    p.add_argument("--support-clauses", type=int, default=2,
                   help="max clauses in the speaker normalization support")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="held-out accuracy report and curves")
    p.add_argument("--artifacts")
    p.add_argument("--demo", action="store_true", help="use small demo models")
    p.add_argument("--games-file", help="evaluation games (corpus JSONL)")
    p.add_argument("--games", type=int, default=91,
                   help="games to generate when no file is given")
    p.add_argument("--n-heldout", type=int, default=1000)
    p.add_argument("--report", help="write JSON report here")
    p.add_argument("--table", help="write text table here")
    p.add_argument("--curves", help="write per-round CSV here")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("simulate", help="closed-loop games with a synthetic user")
    p.add_argument("--artifacts")
    p.add_argument("--demo", action="store_true")
    p.add_argument("--games", type=int, default=100)
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--log-dir", help="write per-game event logs here")
    p.add_argument("--out", help="write final states JSONL here")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("play", help="interactive terminal game")
    p.add_argument("--artifacts")
    p.add_argument("--demo", action="store_true")
    p.add_argument("--threshold", type=float, default=0.8)
    p.set_defaults(fn=cmd_play)

    p = sub.add_parser("serve", help="run the HTTP service (and static UI)")
    p.add_argument("--artifacts")
    p.add_argument("--demo", action="store_true")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--log-dir", help="session event-log directory")
    p.add_argument("--static", help="static UI asset directory")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
