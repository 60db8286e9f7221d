"""Evaluation protocol: held-out accuracy, reward distance, baselines.

A model is evaluated by replaying recorded games as the listener, updating
its reward posterior on each observed (utterance, option set) round, and
asking after every round how often the posterior-mean reward picks the same
option as the true reward on freshly sampled sets of three flights.
"""

from __future__ import annotations

import hashlib
import io
import json
import zlib
from dataclasses import dataclass, field

import numpy as np

from .domain import OptionSet, RewardVector, Rng, optimal_option, sample_option_features
from .language import Utterance, default_grammar
from .models import Corpus, lbase_prob, lbase_prob_matrix
from .pragmatics import (
    PragmaticsConfig,
    RewardPosterior,
    argmax_lowest,
    l2_update,
)

CHANCE_ACCURACY = 1.0 / 3.0


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def heldout_battery(rng: Rng, n_sets: int) -> np.ndarray:
    """Fixed evaluation battery of option-set features, shape (n, 3, 8)."""
    return sample_option_features(rng, n_sets)


def battery_accuracy(battery: np.ndarray, theta_hat: np.ndarray,
                     theta_star: np.ndarray) -> float:
    """Fraction of sets where both rewards pick the same option (lowest-index
    ties under each)."""
    picks_hat = argmax_lowest(battery @ np.asarray(theta_hat, dtype=float), axis=1)
    picks_star = argmax_lowest(battery @ np.asarray(theta_star, dtype=float), axis=1)
    return float(np.mean(picks_hat == picks_star))


def held_out_accuracy(theta_hat, theta_star: RewardVector, n_sets: int,
                      rng: Rng) -> float:
    """Accuracy of a reward estimate on `n_sets` freshly generated sets."""
    if n_sets < 1:
        raise ValueError("n_sets must be positive")
    battery = heldout_battery(rng, n_sets)
    return battery_accuracy(battery, np.asarray(theta_hat, dtype=float),
                            theta_star.array())


def l2_distance(theta_hat, theta_star) -> float:
    a = np.asarray(theta_hat, dtype=float)
    b = theta_star.array() if isinstance(theta_star, RewardVector) else np.asarray(theta_star, dtype=float)
    if a.shape != (8,) or b.shape != (8,):
        raise ValueError("reward vectors must be 8-dimensional")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def oracle_k_baseline(theta_star: RewardVector, k: int, rng: Rng) -> np.ndarray:
    """Estimate knowing k randomly chosen components exactly, 0 elsewhere.

    Zero is the mean of the uniform distribution over the weight grid, so the
    unknown components carry a maximally uncertain point estimate.
    """
    if not 0 <= k <= 8:
        raise ValueError("k must lie in 0..8")
    est = np.zeros(8)
    known = rng.gen.choice(8, size=k, replace=False)
    est[known] = theta_star.array()[known]
    return est


def paired_bootstrap(model_a_scores, model_b_scores, n_resamples: int,
                     rng: Rng) -> float:
    """Two-sided paired bootstrap p-value for a difference in means."""
    a = np.asarray(model_a_scores, dtype=float)
    b = np.asarray(model_b_scores, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("score lists must be 1-d and equally long")
    if n_resamples < 1000:
        raise ValueError("use at least 1000 resamples")
    d = a - b
    idx = rng.gen.integers(len(d), size=(n_resamples, len(d)))
    means = d[idx].mean(axis=1)
    lo = (np.sum(means <= 0) + 1) / (n_resamples + 1)
    hi = (np.sum(means >= 0) + 1) / (n_resamples + 1)
    return float(min(1.0, 2.0 * min(lo, hi)))


# ---------------------------------------------------------------------------
# games and reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalGame:
    game_id: str
    theta_star: RewardVector
    rounds: tuple  # of (Utterance, OptionSet)


def eval_games_from_corpus(corpus: Corpus) -> list[EvalGame]:
    games = []
    for game_id, rounds in corpus.games().items():
        games.append(EvalGame(
            game_id=game_id,
            theta_star=rounds[0].theta,
            rounds=tuple((r.utterance, r.options) for r in rounds),
        ))
    return games


@dataclass
class ModelStats:
    """Per-model evaluation results; `acc`/`l2` are (games, rounds) arrays."""

    name: str
    acc: np.ndarray
    l2: np.ndarray
    curve_labels: tuple[str, ...] = ()
    curve_acc: np.ndarray | None = None
    curve_acc_sem: np.ndarray | None = None
    curve_l2: np.ndarray | None = None
    curve_l2_sem: np.ndarray | None = None

    @property
    def round_scores(self) -> np.ndarray:
        return self.acc.reshape(-1)

    @property
    def acc_mean(self) -> float:
        return float(self.acc.mean())

    @property
    def acc_sem(self) -> float:
        return _sem(self.acc.reshape(-1))

    @property
    def l2_mean(self) -> float:
        return float(self.l2.mean())

    @property
    def l2_sem(self) -> float:
        return _sem(self.l2.reshape(-1))


def _sem(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float("nan")
    return float(x.std(ddof=1) / np.sqrt(len(x)))


def _curve_bins(n_rounds: int) -> list[tuple[str, list[int]]]:
    """Observed-utterance-count bins; five- and six-round bins are merged."""
    bins: list[tuple[str, list[int]]] = []
    for i in range(min(n_rounds, 4)):
        bins.append((str(i + 1), [i]))
    if n_rounds >= 5:
        bins.append(("5+", list(range(4, n_rounds))))
    return bins


@dataclass
class EvalReport:
    models: dict[str, ModelStats]
    p_values: dict[str, float] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "models": {
                name: {
                    "held_out_accuracy": m.acc_mean,
                    "held_out_accuracy_sem": m.acc_sem,
                    "l2_distance": m.l2_mean,
                    "l2_distance_sem": m.l2_sem,
                    "curve": [
                        {
                            "observed": lab,
                            "accuracy": float(m.curve_acc[i]),
                            "accuracy_sem": float(m.curve_acc_sem[i]),
                            "l2": float(m.curve_l2[i]),
                            "l2_sem": float(m.curve_l2_sem[i]),
                        }
                        for i, lab in enumerate(m.curve_labels)
                    ],
                }
                for name, m in self.models.items()
            },
            "p_values": self.p_values,
            "metadata": self.metadata,
        }

    def to_text_table(self) -> str:
        lines = ["Method                        Held-out accuracy (%)    Reward L2",
                 "-" * 64]
        for name, m in self.models.items():
            lines.append(
                f"{name:<28}  {100 * m.acc_mean:5.1f} +/- {100 * m.acc_sem:4.2f}"
                f"          {m.l2_mean:5.3f}"
            )
        if self.p_values:
            lines.append("")
            for pair, p in self.p_values.items():
                lines.append(f"paired bootstrap {pair}: p = {p:.4f}")
        return "\n".join(lines)

    def curves_csv(self) -> str:
        buf = io.StringIO()
        buf.write("round_index,model,accuracy,l2,stderr\n")
        for name, m in self.models.items():
            for i, lab in enumerate(m.curve_labels):
                buf.write(f"{lab},{name},{m.curve_acc[i]:.6f},"
                          f"{m.curve_l2[i]:.6f},{m.curve_acc_sem[i]:.6f}\n")
        return buf.getvalue()


def _finish_stats(name: str, acc: np.ndarray, l2: np.ndarray) -> ModelStats:
    stats = ModelStats(name, acc, l2)
    bins = _curve_bins(acc.shape[1])
    stats.curve_labels = tuple(lab for lab, _ in bins)
    stats.curve_acc = np.array([acc[:, cols].mean() for _, cols in bins])
    stats.curve_acc_sem = np.array([_sem(acc[:, cols].reshape(-1)) for _, cols in bins])
    stats.curve_l2 = np.array([l2[:, cols].mean() for _, cols in bins])
    stats.curve_l2_sem = np.array([_sem(l2[:, cols].reshape(-1)) for _, cols in bins])
    return stats


def _config_hash(cfgs: dict[str, PragmaticsConfig]) -> str:
    doc = {name: cfg.fingerprint() for name, cfg in cfgs.items()}
    return hashlib.sha1(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:12]


def run_models(eval_games, cfgs: dict[str, PragmaticsConfig], n_heldout: int = 1000,
               seed: int = 0, skip_bad_listener_rounds: frozenset[str] = frozenset(),
               ) -> EvalReport:
    """Replay games under each config, scoring the posterior after each round.

    All models share one held-out battery so per-round scores are paired.
    Models named in `skip_bad_listener_rounds` skip posterior updates on
    rounds where their config's listener ranks the true optimum below
    another option (the known-action oracle).
    """
    games = list(eval_games)
    if any(len(g.rounds) == 0 for g in games):
        raise ValueError("every evaluation game needs at least one round")
    battery = heldout_battery(Rng(seed).split(9001), n_heldout)
    n_rounds = max(len(g.rounds) for g in games)
    report_models: dict[str, ModelStats] = {}
    for name, cfg in cfgs.items():
        acc = np.full((len(games), n_rounds), np.nan)
        l2 = np.full((len(games), n_rounds), np.nan)
        skip_oracle = name in skip_bad_listener_rounds
        for gi, game in enumerate(games):
            post = RewardPosterior.uniform_exact()
            upd_rng = Rng(seed).split(zlib.crc32(f"{name}/{game.game_id}".encode()))
            star = game.theta_star.array()
            for ri, (u, options) in enumerate(game.rounds):
                if skip_oracle and _listener_wrong(cfg, u, options, game.theta_star):
                    pass  # drop the update, keep scoring the running posterior
                else:
                    post = l2_update(post, u, options, cfg, upd_rng)
                theta_hat = post.mean()
                acc[gi, ri] = battery_accuracy(battery, theta_hat, star)
                l2[gi, ri] = l2_distance(theta_hat, star)
        report_models[name] = _finish_stats(name, acc, l2)
    report = EvalReport(
        models=report_models,
        metadata={"seed": seed, "n_games": len(games), "n_heldout": n_heldout,
                  "config_hash": _config_hash(cfgs)},
    )
    _add_pairwise_tests(report, seed)
    return report


def _listener_wrong(cfg: PragmaticsConfig, u: Utterance, options: OptionSet,
                    theta_star: RewardVector) -> bool:
    listener = cfg.listener
    probs = listener.probs(u, options) if hasattr(listener, "probs") \
        else lbase_prob(listener, u, options)
    best, _ = optimal_option(theta_star, options)
    return int(np.argmax(probs)) != best


def _add_pairwise_tests(report: EvalReport, seed: int, n_resamples: int = 10_000) -> None:
    names = list(report.models)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            p = paired_bootstrap(
                report.models[a].round_scores,
                report.models[b].round_scores,
                n_resamples,
                Rng(seed).split(zlib.crc32(f"boot/{a}/{b}".encode())),
            )
            report.p_values[f"{a} vs {b}"] = p


def oracle_switch(eval_games, cfgs: dict[str, PragmaticsConfig],
                  n_heldout: int = 1000, seed: int = 0) -> EvalReport:
    """Round-level oracle that takes the better of two ablations per round.

    Each ablation keeps its own running posterior; the switch only selects
    which one's held-out accuracy to report for the round.
    """
    if set(cfgs) != {"action_only", "reward_only"}:
        raise ValueError("oracle_switch expects exactly the two ablation configs")
    base = run_models(eval_games, cfgs, n_heldout=n_heldout, seed=seed)
    a, r = base.models["action_only"], base.models["reward_only"]
    switch_acc = np.maximum(a.acc, r.acc)
    switch_l2 = np.where(a.acc >= r.acc, a.l2, r.l2)
    base.models["oracle_switch"] = _finish_stats("oracle_switch", switch_acc, switch_l2)
    _add_pairwise_tests(base, seed)
    return base


def known_action_ablation(eval_games, cfg: PragmaticsConfig,
                          n_heldout: int = 1000, seed: int = 0) -> EvalReport:
    """Full model plus the variant that skips rounds the listener gets wrong."""
    return run_models(
        eval_games,
        {"full": cfg, "known_action": cfg},
        n_heldout=n_heldout,
        seed=seed,
        skip_bad_listener_rounds=frozenset({"known_action"}),
    )


# ---------------------------------------------------------------------------
# degraded listener (known-action experiments)
# ---------------------------------------------------------------------------


@dataclass
class MisreadingListener:
    """Listener with a systematic comprehension defect.

    A deterministic fraction of utterance types (hash-selected by content,
    not by round) is permanently misread: one attribute mention is replaced
    with a distractor before scoring, so "jetblue one" may always be heard
    as "delta one". This mimics the confident, repeatable errors of a
    trained listener rather than per-round random noise.
    """

    base: object
    misread_rate: float
    seed: int = 0
    _map: dict = field(default_factory=dict, repr=False)
    _enc_cache: dict = field(default_factory=dict, repr=False)

    @property
    def featurizer(self):
        return self.base.featurizer

    def misread(self, u: Utterance) -> Utterance:
        key = u.key()
        if key not in self._map:
            grammar = default_grammar()
            heard = u
            if zlib.crc32(f"{self.seed}|read|{key}".encode()) / 2 ** 32 < self.misread_rate:
                mentions = grammar.attribute_mentions(u.tokens)
                if mentions:
                    m = mentions[zlib.crc32(f"{self.seed}|m|{key}".encode()) % len(mentions)]
                    alts = grammar.distractor_targets(m)
                    alt = alts[zlib.crc32(f"{self.seed}|a|{key}".encode()) % len(alts)]
                    tokens = grammar.substitute_mention(u.tokens, m, alt)
                    heard = Utterance(" ".join(tokens), tokens)
            self._map[key] = heard
        return self._map[key]

    def probs(self, u: Utterance, options: OptionSet) -> np.ndarray:
        return lbase_prob(self.base, self.misread(u), options)

    def support_probs(self, support, options: OptionSet) -> np.ndarray:
        key = id(support)
        if key not in self._enc_cache:
            heard = [self.misread(u) for u in support]
            self._enc_cache[key] = self.base.featurizer.encode_batch(heard)
        return lbase_prob_matrix(self.base, self._enc_cache[key], options)


def listener_top1_accuracy(listener, eval_games) -> float:
    """Fraction of rounds where the listener's top option is the true optimum."""
    hits, total = 0, 0
    for game in eval_games:
        for u, options in game.rounds:
            probs = listener.probs(u, options) if hasattr(listener, "probs") \
                else lbase_prob(listener, u, options)
            best, _ = optimal_option(game.theta_star, options)
            hits += int(np.argmax(probs)) == best
            total += 1
    return hits / total if total else float("nan")


def calibrate_misreading(base_listener, eval_games, target: float,
                         seed: int = 0) -> MisreadingListener:
    """Misreading rate (by bisection) degrading top-1 accuracy to ~`target`."""
    lo, hi = 0.0, 1.0
    for _ in range(12):
        mid = 0.5 * (lo + hi)
        acc = listener_top1_accuracy(MisreadingListener(base_listener, mid, seed),
                                     eval_games)
        if acc > target:
            lo = mid
        else:
            hi = mid
    return MisreadingListener(base_listener, 0.5 * (lo + hi), seed)
