"""Trained-model artifact directories.

An artifact directory holds the three trained parameter files plus a meta
file pinning the utterance support and pragmatics defaults, so services and
evaluation runs can reconstruct an identical engine from disk.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .language import default_grammar
from .models import (
    ActionSpeakerParams,
    Corpus,
    ListenerParams,
    SpeakerParams,
    TrainConfig,
    load_params,
    save_params,
    train_listener,
    train_speaker_latent,
)
from .pragmatics import PragmaticsConfig

META_NAME = "meta.json"


@dataclass
class ArtifactBundle:
    listener: ListenerParams
    speaker: SpeakerParams
    action_speaker: ActionSpeakerParams
    mixture_logit: float
    support_max_clauses: int = 2
    alpha: float = 0.5
    beta: float = math.inf

    def config(self, **overrides) -> PragmaticsConfig:
        support = default_grammar().enumerate_utterances(self.support_max_clauses)
        kwargs = dict(
            listener=self.listener,
            speaker=self.speaker,
            support=support,
            alpha=self.alpha,
            beta=self.beta,
        )
        kwargs.update(overrides)
        return PragmaticsConfig(**kwargs)


def train_bundle(corpus: Corpus, listener_cfg: TrainConfig, speaker_cfg: TrainConfig,
                 support_max_clauses: int = 2, alpha: float = 0.5) -> ArtifactBundle:
    support = default_grammar().enumerate_utterances(support_max_clauses)
    listener = train_listener(corpus, listener_cfg)
    speaker, action_speaker, logit = train_speaker_latent(corpus, support, speaker_cfg)
    return ArtifactBundle(listener, speaker, action_speaker, logit,
                          support_max_clauses, alpha)


def save_bundle(bundle: ArtifactBundle, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_params(bundle.listener, directory / "listener.json")
    save_params(bundle.speaker, directory / "speaker.json")
    save_params(bundle.action_speaker, directory / "action_speaker.json")
    meta = {
        "format": "v1",
        "mixture_logit": bundle.mixture_logit,
        "support_max_clauses": bundle.support_max_clauses,
        "alpha": bundle.alpha,
        "beta": "inf" if math.isinf(bundle.beta) else bundle.beta,
    }
    (directory / META_NAME).write_text(json.dumps(meta, indent=2))


def load_bundle(directory) -> ArtifactBundle:
    directory = Path(directory)
    meta_path = directory / META_NAME
    if not meta_path.exists():
        raise FileNotFoundError(f"no trained artifacts at {directory}")
    meta = json.loads(meta_path.read_text())
    if meta.get("format") != "v1":
        raise ValueError(f"unsupported artifact format {meta.get('format')!r}")
    beta = meta["beta"]
    return ArtifactBundle(
        listener=load_params(directory / "listener.json"),
        speaker=load_params(directory / "speaker.json"),
        action_speaker=load_params(directory / "action_speaker.json"),
        mixture_logit=meta["mixture_logit"],
        support_max_clauses=meta["support_max_clauses"],
        alpha=meta["alpha"],
        beta=math.inf if beta == "inf" else float(beta),
    )


def demo_bundle(seed: int = 11) -> ArtifactBundle:
    """Small self-contained bundle (single-clause support, short training) for
    demos and tests that need a working engine without a training run."""
    from .game import generate_corpus

    corpus = generate_corpus(80, seed)
    cfg = TrainConfig(max_steps=250, patience=60, seed=seed)
    return train_bundle(corpus, cfg, cfg, support_max_clauses=1)
