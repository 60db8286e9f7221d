#!/usr/bin/env python3
"""Record a seeded demo game through the HTTP service into JSON fixtures
consumed by the frontend tests (payload snapshots + utterance script)."""

import argparse
import json
from pathlib import Path

from fastapi.testclient import TestClient

from flightpref.artifacts import demo_bundle
from flightpref.domain import OptionSet, RewardVector, Rng
from flightpref.game import SyntheticSpeaker
from flightpref.service import create_app

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "frontend" / "fixtures"


def record(demo_seed: int, session_seed: int, threshold: float) -> dict:
    bundle = demo_bundle(demo_seed)
    app = create_app(bundle=bundle)
    client = TestClient(app)
    speaker = SyntheticSpeaker("scripted", Rng(4242))

    resp = client.post("/session", json={"seed": session_seed, "threshold": threshold})
    body = resp.json()
    sid = body["session_id"]
    state = body["state"]
    steps = [{"type": "create", "state": state, "action": None}]

    while not state["finished"]:
        if state["phase"] == "awaiting_utterance":
            theta = RewardVector.from_array(state["theta_star"])
            options = OptionSet.from_dict(state["options"])
            text = speaker.speak(theta, options).raw
            out = client.post(f"/session/{sid}/utterance", json={"text": text}).json()
            state = out["state"]
            steps.append({"type": "utterance", "text": text, "state": state,
                          "action": out["action"]})
        else:
            out = client.post(f"/session/{sid}/assistant_action").json()
            state = out["state"]
            action = {k: out[k] for k in ("action", "index", "outcome", "points_delta")}
            steps.append({"type": "action", "state": state, "action": action})
    return {
        "demo_seed": demo_seed,
        "session_seed": session_seed,
        "threshold": threshold,
        "final_score": state["score"],
        "steps": steps,
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--demo-seed", type=int, default=11)
    parser.add_argument("--session-seed", type=int, default=2024)
    parser.add_argument("--threshold", type=float, default=0.7)
    parser.add_argument("--out", default=str(FIXTURE_DIR / "recorded_game.json"))
    args = parser.parse_args()
    doc = record(args.demo_seed, args.session_seed, args.threshold)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(doc, indent=1))
    print(f"recorded {len(doc['steps'])} steps (final score {doc['final_score']}) "
          f"-> {args.out}")


if __name__ == "__main__":
    main()
