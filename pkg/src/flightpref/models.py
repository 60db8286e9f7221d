"""Trainable base listener and speakers.

All three models score softmax over inner products between a fixed sparse
utterance encoding (token unigrams + parsed clause indicators + bias) and a
learned linear map of the conditioning side:

  listener:        p(option | u, M)      ~ exp(psi(u) . W_l phi(flight)),
                   normalized over the 3 flights in the context
  reward speaker:  p(u | theta)          ~ exp(psi(u) . W_s zeta(theta) / tau),
                   normalized over a fixed utterance set
  action speaker:  p(u | best flight)    ~ exp(psi(u) . W_a phi(flight)),
                   training-time only, same normalization as the reward speaker

The two speakers are trained jointly under a latent indicator for whether an
utterance describes the reward or the contextual action; the indicator prior
p(descriptive) = sigmoid(l) is learned alongside the weights. Training is
plain full-batch gradient descent with optional momentum, early-stopped on
held-out loss.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import language
from .domain import (
    N_FEATURES,
    N_OPTIONS,
    WEIGHT_GRID,
    Flight,
    OptionSet,
    RewardVector,
    Rng,
    optimal_option,
)
from .language import Grammar, Utterance, UtteranceSet, default_grammar
from .numerics import logsumexp, sigmoid, softmax

FLIGHT_DIM = N_FEATURES + 1  # raw features + bias
THETA_DIM = N_FEATURES * len(WEIGHT_GRID) + 1  # per-component grid one-hot + bias


class TrainingDiverged(RuntimeError):
    pass


class EnsembleError(ValueError):
    pass


# ---------------------------------------------------------------------------
# encodings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UtteranceFeaturizer:
    """Deterministic sparse encoding of an utterance.

    Features: one indicator per known token, a shared UNK indicator for
    unknown tokens, one indicator per grammar clause key (from the parse),
    and a bias. The token vocabulary is fixed at training time.
    """

    vocab: tuple[str, ...]
    clause_keys: tuple[str, ...]

    @classmethod
    def build(cls, utterances, grammar: Grammar | None = None) -> "UtteranceFeaturizer":
        grammar = grammar or default_grammar()
        tokens = sorted({t for u in utterances for t in u.tokens})
        return cls(tuple(tokens), tuple(sorted(grammar.realizations)))

    @property
    def dim(self) -> int:
        return len(self.vocab) + 1 + len(self.clause_keys) + 1

    def encode(self, u: Utterance, grammar: Grammar | None = None) -> np.ndarray:
        grammar = grammar or default_grammar()
        tok_index = {t: i for i, t in enumerate(self.vocab)}
        x = np.zeros(self.dim)
        self._fill(x, u, tok_index, grammar)
        return x

    def encode_batch(self, utterances, grammar: Grammar | None = None) -> np.ndarray:
        grammar = grammar or default_grammar()
        tok_index = {t: i for i, t in enumerate(self.vocab)}
        X = np.zeros((len(utterances), self.dim))
        for row, u in zip(X, utterances):
            self._fill(row, u, tok_index, grammar)
        return X

    def _fill(self, row: np.ndarray, u: Utterance, tok_index: dict, grammar: Grammar) -> None:
        unk = len(self.vocab)
        for t in u.tokens:
            i = tok_index.get(t, unk)
            row[i] = 1.0
        clause_base = len(self.vocab) + 1
        key_index = {k: i for i, k in enumerate(self.clause_keys)}
        for clause in grammar.parse(u).clauses:
            i = key_index.get(clause.key())
            if i is not None:
                row[clause_base + i] = 1.0
        row[-1] = 1.0


def flight_feature_matrix(phi: np.ndarray) -> np.ndarray:
    """Append a bias column to raw flight features (..., 8) -> (..., 9)."""
    phi = np.asarray(phi, dtype=float)
    return np.concatenate([phi, np.ones(phi.shape[:-1] + (1,))], axis=-1)


def theta_feature_matrix(thetas: np.ndarray) -> np.ndarray:
    """Grid one-hot encoding of reward vectors (..., 8) -> (..., 41).

    Each component is encoded as an indicator over its 5 admissible values,
    plus one bias feature; inputs must lie on the weight grid.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    n = thetas.shape[0]
    scaled = (thetas + 1.0) * 2.0
    idx = np.rint(scaled).astype(int)
    if idx.min() < 0 or idx.max() >= len(WEIGHT_GRID) \
            or not np.allclose(scaled, idx, atol=1e-9):
        raise ValueError("reward components must lie on the weight grid")
    out = np.zeros((n, THETA_DIM))
    cols = np.arange(N_FEATURES) * len(WEIGHT_GRID) + idx
    out[np.arange(n)[:, None], cols] = 1.0
    out[:, -1] = 1.0
    return out


# ---------------------------------------------------------------------------
# corpus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusRound:
    game_id: str
    round_index: int
    utterance: Utterance
    options: OptionSet
    theta: RewardVector
    xi_star: int

    def validate(self) -> None:
        if not 0 <= self.xi_star < N_OPTIONS:
            raise ValueError(f"xi_star={self.xi_star} out of range")
        best, _ = optimal_option(self.theta, self.options)
        if best != self.xi_star:
            raise ValueError(f"xi_star={self.xi_star} but optimum is {best}")

    def to_dict(self) -> dict:
        return {
            "game_id": self.game_id,
            "round": self.round_index,
            "theta": list(self.theta.weights),
            "options": [f.features().tolist() for f in self.options.flights],
            "utterance": self.utterance.raw,
            "xi_star": self.xi_star,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusRound":
        options = OptionSet(tuple(Flight.from_features(phi) for phi in d["options"]))
        return cls(
            game_id=str(d["game_id"]),
            round_index=int(d["round"]),
            utterance=Utterance.from_text(d["utterance"]),
            options=options,
            theta=RewardVector.from_array(d["theta"]),
            xi_star=int(d["xi_star"]),
        )


@dataclass(frozen=True)
class Corpus:
    rounds: tuple[CorpusRound, ...]

    def __len__(self):
        return len(self.rounds)

    def __iter__(self):
        return iter(self.rounds)

    def utterances(self) -> list[Utterance]:
        return [r.utterance for r in self.rounds]

    def unique_utterances(self) -> UtteranceSet:
        return UtteranceSet.of(self.utterances())

    def games(self) -> dict[str, list[CorpusRound]]:
        out: dict[str, list[CorpusRound]] = {}
        for r in self.rounds:
            out.setdefault(r.game_id, []).append(r)
        for rounds in out.values():
            rounds.sort(key=lambda r: r.round_index)
        return out


# ---------------------------------------------------------------------------
# parameters and scoring
# ---------------------------------------------------------------------------


@dataclass
class TrainReport:
    steps: int = 0
    final_train_loss: float = float("nan")
    final_val_loss: float = float("nan")


@dataclass
class ListenerParams:
    featurizer: UtteranceFeaturizer
    weights: np.ndarray  # (utterance dim, FLIGHT_DIM)
    report: TrainReport | None = field(default=None, compare=False)

    @classmethod
    def zeros(cls, featurizer: UtteranceFeaturizer) -> "ListenerParams":
        return cls(featurizer, np.zeros((featurizer.dim, FLIGHT_DIM)))


@dataclass
class SpeakerParams:
    featurizer: UtteranceFeaturizer
    weights: np.ndarray  # (utterance dim, THETA_DIM)
    tau: float = 3.0
    report: TrainReport | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    @classmethod
    def zeros(cls, featurizer: UtteranceFeaturizer, tau: float = 3.0) -> "SpeakerParams":
        return cls(featurizer, np.zeros((featurizer.dim, THETA_DIM)), tau)


@dataclass
class ActionSpeakerParams:
    featurizer: UtteranceFeaturizer
    weights: np.ndarray  # (utterance dim, FLIGHT_DIM)

    @classmethod
    def zeros(cls, featurizer: UtteranceFeaturizer) -> "ActionSpeakerParams":
        return cls(featurizer, np.zeros((featurizer.dim, FLIGHT_DIM)))


@dataclass(frozen=True)
class ListenerEnsemble:
    members: tuple

    @property
    def featurizer(self):
        return self.members[0].featurizer


@dataclass(frozen=True)
class SpeakerEnsemble:
    members: tuple

    @property
    def featurizer(self):
        return self.members[0].featurizer

    @property
    def tau(self):
        return self.members[0].tau


def _average(dists: list[np.ndarray]) -> np.ndarray:
    if len(dists) == 1:
        return dists[0]
    mean = np.mean(dists, axis=0)
    return mean / mean.sum(axis=-1, keepdims=True)


def lbase_prob(params, u: Utterance, options: OptionSet) -> np.ndarray:
    """Listener distribution over the 3 options in context."""
    if isinstance(params, ListenerEnsemble):
        return _average([lbase_prob(m, u, options) for m in params.members])
    x = params.featurizer.encode(u)
    scores = (x @ params.weights) @ flight_feature_matrix(options.feature_matrix()).T
    return softmax(scores)


def lbase_prob_matrix(params, encoded: np.ndarray, options: OptionSet) -> np.ndarray:
    """Listener distributions for pre-encoded utterances, shape (n, 3)."""
    if isinstance(params, ListenerEnsemble):
        return _average([lbase_prob_matrix(m, encoded, options) for m in params.members])
    scores = (encoded @ params.weights) @ flight_feature_matrix(options.feature_matrix()).T
    return softmax(scores, axis=1)


def sbase_prob(params, theta: RewardVector, support: UtteranceSet,
               encoded: np.ndarray | None = None) -> np.ndarray:
    """Reward-speaker distribution over the support set."""
    if len(support) == 0:
        raise ValueError("empty utterance support")
    if isinstance(params, SpeakerEnsemble):
        return _average([sbase_prob(m, theta, support, encoded) for m in params.members])
    if encoded is None:
        encoded = params.featurizer.encode_batch(list(support))
    zeta = theta_feature_matrix(theta.array())[0]
    scores = (encoded @ params.weights) @ zeta / params.tau
    return softmax(scores)


def sact_prob(params, xi_star: Flight, support: UtteranceSet,
              encoded: np.ndarray | None = None) -> np.ndarray:
    """Action-speaker distribution over the support set (training-time model)."""
    if len(support) == 0:
        raise ValueError("empty utterance support")
    if encoded is None:
        encoded = params.featurizer.encode_batch(list(support))
    phi = flight_feature_matrix(xi_star.features())
    scores = (encoded @ params.weights) @ phi
    return softmax(scores)


def ensemble(models):
    """Average same-type models' output probabilities (singleton: identity)."""
    models = list(models)
    if not models:
        raise EnsembleError("need at least one model")
    kinds = {type(m) for m in models}
    if len(kinds) > 1:
        raise EnsembleError(f"mixed model types: {kinds}")
    feats = {m.featurizer for m in models}
    if len(feats) > 1:
        raise EnsembleError("members were built over different supports/vocabularies")
    if isinstance(models[0], ListenerParams):
        return ListenerEnsemble(tuple(models))
    if isinstance(models[0], SpeakerParams):
        if len({m.tau for m in models}) > 1:
            raise EnsembleError("members disagree on tau")
        return SpeakerEnsemble(tuple(models))
    raise EnsembleError(f"cannot ensemble {type(models[0])}")


# ---------------------------------------------------------------------------
# hard negatives
# ---------------------------------------------------------------------------


def hard_negatives(u: Utterance, k: int, rng: Rng,
                   grammar: Grammar | None = None) -> list[Utterance]:
    """Up to k corrupted copies of `u`, each with one attribute phrase swapped
    for a same-slot distractor (e.g. one carrier for another).

    Detection is by exact token match, so it also works on out-of-grammar
    text that happens to contain attribute words. Returns fewer than k
    (possibly none) when no attribute mention is found.
    """
    if k > 4:
        raise ValueError("at most 4 hard negatives per utterance")
    grammar = grammar or default_grammar()
    mentions = grammar.attribute_mentions(u.tokens)
    if not mentions:
        return []
    mentioned_targets = {m.target for m in mentions}
    out: list[Utterance] = []
    seen = {u.key()}
    for _ in range(k * 8):
        if len(out) >= k:
            break
        m = mentions[int(rng.gen.integers(len(mentions)))]
        choices = [t for t in grammar.distractor_targets(m) if t not in mentioned_targets]
        if not choices:
            continue
        target = choices[int(rng.gen.integers(len(choices)))]
        tokens = grammar.substitute_mention(u.tokens, m, target)
        cand = Utterance(" ".join(tokens), tokens)
        if cand.key() not in seen:
            seen.add(cand.key())
            out.append(cand)
    return out


# ---------------------------------------------------------------------------
# losses and gradients
# ---------------------------------------------------------------------------


def listener_loss_and_grad(W: np.ndarray, X: np.ndarray, Phi: np.ndarray,
                           y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of the listener and its gradient in W.

    X: (n, d) utterance encodings; Phi: (n, 3, 9) option features with bias;
    y: (n,) correct option indices.
    """
    n = X.shape[0]
    scores = np.einsum("nk,nok->no", X @ W, Phi)
    logp = scores - logsumexp(scores, axis=1, keepdims=True)
    loss = -float(np.mean(logp[np.arange(n), y]))
    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    grad = X.T @ np.einsum("no,nok->nk", delta, Phi) / n
    return loss, grad


@dataclass
class SpeakerBatch:
    """Precomputed tensors for the latent-variable speaker objective.

    The normalization pool for example i is the batch's unique utterances
    plus that example's own hard negatives.
    """

    X: np.ndarray          # (n, d) true utterance encodings
    theta_f: np.ndarray    # (n, THETA_DIM)
    xi_f: np.ndarray       # (n, FLIGHT_DIM)
    pool: np.ndarray       # (b, d) unique batch utterance encodings
    own_col: np.ndarray    # (n,) row of `pool` holding each true utterance
    neg: np.ndarray        # (m, d) stacked hard-negative encodings
    neg_owner: np.ndarray  # (m,) example index owning each negative

    @classmethod
    def build(cls, rounds, featurizer: UtteranceFeaturizer, n_negatives: int,
              rng: Rng, grammar: Grammar | None = None) -> "SpeakerBatch":
        grammar = grammar or default_grammar()
        utts = [r.utterance for r in rounds]
        X = featurizer.encode_batch(utts, grammar)
        theta_f = theta_feature_matrix(np.stack([r.theta.array() for r in rounds]))
        xi_f = flight_feature_matrix(
            np.stack([r.options.flights[r.xi_star].features() for r in rounds])
        )
        uniq_keys: dict[str, int] = {}
        own_col = np.zeros(len(rounds), dtype=int)
        pool_list = []
        for i, u in enumerate(utts):
            k = u.key()
            if k not in uniq_keys:
                uniq_keys[k] = len(pool_list)
                pool_list.append(u)
            own_col[i] = uniq_keys[k]
        pool = featurizer.encode_batch(pool_list, grammar)
        neg_rows, neg_owner = [], []
        for i, u in enumerate(utts):
            for neg in hard_negatives(u, n_negatives, rng, grammar):
                neg_rows.append(featurizer.encode(neg, grammar))
                neg_owner.append(i)
        neg = np.stack(neg_rows) if neg_rows else np.zeros((0, featurizer.dim))
        return cls(X, theta_f, xi_f, pool, own_col,
                   neg, np.asarray(neg_owner, dtype=int))


def _component_logprob(batch: SpeakerBatch, W: np.ndarray, cond: np.ndarray,
                       tau: float):
    """Per-example log prob of the true utterance under one speaker component.

    Returns (logp, pool softmax (b, n), negative softmax (m,)).
    """
    n = batch.X.shape[0]
    P = (batch.pool @ W) @ cond.T / tau                      # (b, n)
    own = P[batch.own_col, np.arange(n)]
    if len(batch.neg):
        neg_s = np.einsum("md,dk,mk->m", batch.neg, W, cond[batch.neg_owner]) / tau
        m = P.max(axis=0)
        np.maximum.at(m, batch.neg_owner, neg_s)
        sums = np.exp(P - m).sum(axis=0)
        np.add.at(sums, batch.neg_owner, np.exp(neg_s - m[batch.neg_owner]))
        logZ = m + np.log(sums)
        q_neg = np.exp(neg_s - logZ[batch.neg_owner])
    else:
        logZ = logsumexp(P, axis=0)
        q_neg = np.zeros(0)
    q_pool = np.exp(P - logZ[None, :])
    return own - logZ, q_pool, q_neg


def _component_grad(batch: SpeakerBatch, cond: np.ndarray, tau: float,
                    resp: np.ndarray, q_pool: np.ndarray,
                    q_neg: np.ndarray) -> np.ndarray:
    """Gradient of -mean(resp * logp_component) in the component's weights."""
    n = batch.X.shape[0]
    grad = batch.pool.T @ ((q_pool * resp[None, :]) @ cond)
    if len(batch.neg):
        w = (q_neg * resp[batch.neg_owner])[:, None]
        grad += batch.neg.T @ (w * cond[batch.neg_owner])
    grad -= batch.X.T @ (resp[:, None] * cond)
    return grad / (n * tau)


def speaker_latent_loss_and_grads(Ws: np.ndarray, Wa: np.ndarray, l: float,
                                  batch: SpeakerBatch, tau: float):
    """Negative mean marginal log likelihood of the two-speaker mixture.

    The mixture weight sigmoid(l) is the prior that an utterance is
    reward-descriptive. Returns (loss, dWs, dWa, dl).
    """
    a, qs_pool, qs_neg = _component_logprob(batch, Ws, batch.theta_f, tau)
    b, qa_pool, qa_neg = _component_logprob(batch, Wa, batch.xi_f, 1.0)
    log_sig = -np.logaddexp(0.0, -l)      # log sigmoid(l)
    log_1m = -np.logaddexp(0.0, l)        # log (1 - sigmoid(l))
    loss = -float(np.mean(np.logaddexp(log_sig + a, log_1m + b)))
    r1 = sigmoid(l + a - b)
    dWs = _component_grad(batch, batch.theta_f, tau, r1, qs_pool, qs_neg)
    dWa = _component_grad(batch, batch.xi_f, 1.0, 1.0 - r1, qa_pool, qa_neg)
    dl = float(np.mean(sigmoid(l) - r1))
    return loss, dWs, dWa, dl


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    lr: float = 0.5
    momentum: float = 0.9
    max_steps: int = 1500
    patience: int = 100
    val_fraction: float = 0.1
    seed: int = 0
    tau: float = 3.0
    n_hard_negatives: int = 4

    @classmethod
    def from_ini(cls, path, section: str) -> "TrainConfig":
        parser = configparser.ConfigParser()
        with open(path) as fh:
            parser.read_file(fh)
        cfg = cls()
        if not parser.has_section(section):
            return cfg
        for key, raw in parser.items(section):
            if not hasattr(cfg, key):
                raise ValueError(f"unknown training option {key!r} in [{section}]")
            current = getattr(cfg, key)
            setattr(cfg, key, type(current)(raw) if not isinstance(current, int)
                    else int(float(raw)))
        return cfg


def _split(n: int, val_fraction: float, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.gen.permutation(n)
    n_val = int(n * val_fraction)
    if n >= 10 and val_fraction > 0:
        n_val = max(1, n_val)
    return perm[n_val:], perm[:n_val]


def _descend(params: list[np.ndarray], grads: list[np.ndarray],
             velocity: list[np.ndarray], cfg: TrainConfig) -> None:
    for p, g, v in zip(params, grads, velocity):
        v *= cfg.momentum
        v -= cfg.lr * g
        p += v


def train_listener(corpus: Corpus, cfg: TrainConfig,
                   grammar: Grammar | None = None) -> ListenerParams:
    """Fit the base listener by gradient descent on mean cross-entropy."""
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    grammar = grammar or default_grammar()
    featurizer = UtteranceFeaturizer.build(corpus.utterances(), grammar)
    X = featurizer.encode_batch(corpus.utterances(), grammar)
    Phi = flight_feature_matrix(np.stack([r.options.feature_matrix() for r in corpus]))
    y = np.asarray([r.xi_star for r in corpus])
    tr, va = _split(len(corpus), cfg.val_fraction, Rng(cfg.seed))
    has_val = len(va) > 0

    W = np.zeros((featurizer.dim, FLIGHT_DIM))
    vel = [np.zeros_like(W)]
    best = (np.inf, W.copy(), 0)
    train_loss = np.nan
    for step in range(1, cfg.max_steps + 1):
        train_loss, grad = listener_loss_and_grad(W, X[tr], Phi[tr], y[tr])
        if not np.isfinite(train_loss):
            raise TrainingDiverged(f"listener loss became {train_loss} at step {step}")
        _descend([W], [grad], vel, cfg)
        watch = listener_loss_and_grad(W, X[va], Phi[va], y[va])[0] if has_val else train_loss
        if watch < best[0] - 1e-12:
            best = (watch, W.copy(), step)
        elif step - best[2] > cfg.patience:
            break
    W = best[1]
    report = TrainReport(
        steps=step,
        final_train_loss=listener_loss_and_grad(W, X[tr], Phi[tr], y[tr])[0],
        final_val_loss=best[0] if has_val else np.nan,
    )
    return ListenerParams(featurizer, W, report)


def _profile_mixture_logit(a: np.ndarray, b: np.ndarray) -> float:
    """Maximize mean log(s*e^a + (1-s)*e^b) over s; returns the logit of s*.

    The objective is concave in s, so bisection on its derivative suffices.
    """
    def deriv(s):
        ea, eb = np.exp(a - np.maximum(a, b)), np.exp(b - np.maximum(a, b))
        return float(np.mean((ea - eb) / (s * ea + (1 - s) * eb)))

    lo, hi = 1e-7, 1 - 1e-7
    if deriv(lo) <= 0:
        s = lo
    elif deriv(hi) >= 0:
        s = hi
    else:
        for _ in range(70):
            mid = 0.5 * (lo + hi)
            if deriv(mid) > 0:
                lo = mid
            else:
                hi = mid
        s = 0.5 * (lo + hi)
    return float(np.log(s) - np.log1p(-s))


def train_speaker_latent(corpus: Corpus, support: UtteranceSet, cfg: TrainConfig,
                         grammar: Grammar | None = None
                         ) -> tuple[SpeakerParams, ActionSpeakerParams, float]:
    """Jointly fit reward and action speakers on the marginal likelihood.

    `support` fixes the vocabulary (evaluation-time normalization set);
    training normalizes over in-batch utterances plus hard negatives. The
    returned logit l gives the learned prior sigmoid(l) of an utterance
    being reward-descriptive.
    """
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    grammar = grammar or default_grammar()
    featurizer = UtteranceFeaturizer.build(
        list(corpus.utterances()) + list(support), grammar
    )
    rng = Rng(cfg.seed)
    tr, va = _split(len(corpus), cfg.val_fraction, rng.split(1))
    rounds = list(corpus.rounds)
    batch = SpeakerBatch.build([rounds[i] for i in tr], featurizer,
                               cfg.n_hard_negatives, rng.split(2), grammar)
    val_batch = None
    if len(va):
        val_batch = SpeakerBatch.build([rounds[i] for i in va], featurizer,
                                       cfg.n_hard_negatives, rng.split(3), grammar)

    Ws = np.zeros((featurizer.dim, THETA_DIM))
    Wa = np.zeros((featurizer.dim, FLIGHT_DIM))
    l = 0.0  # sigmoid(0) = 0.5: agnostic initial split
    vel = [np.zeros_like(Ws), np.zeros_like(Wa), np.zeros(1)]
    best = (np.inf, Ws.copy(), Wa.copy(), l, 0)
    for step in range(1, cfg.max_steps + 1):
        loss, dWs, dWa, dl = speaker_latent_loss_and_grads(Ws, Wa, l, batch, cfg.tau)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"speaker loss became {loss} at step {step}")
        larr = np.asarray([l])
        _descend([Ws, Wa, larr], [dWs, dWa, np.asarray([dl])], vel, cfg)
        l = float(larr[0])
        if val_batch is not None:
            watch = speaker_latent_loss_and_grads(Ws, Wa, l, val_batch, cfg.tau)[0]
        else:
            watch = loss
        if watch < best[0] - 1e-12:
            best = (watch, Ws.copy(), Wa.copy(), l, step)
        elif step - best[4] > cfg.patience:
            break
    _, Ws, Wa, l, _ = best
    # final profile step: set the mixture weight optimally for the learned
    # components, which a finite descent run only approaches
    a, _, _ = _component_logprob(batch, Ws, batch.theta_f, cfg.tau)
    b, _, _ = _component_logprob(batch, Wa, batch.xi_f, 1.0)
    l = _profile_mixture_logit(a, b)
    train_loss = speaker_latent_loss_and_grads(Ws, Wa, l, batch, cfg.tau)[0]
    val_loss = (speaker_latent_loss_and_grads(Ws, Wa, l, val_batch, cfg.tau)[0]
                if val_batch is not None else np.nan)
    report = TrainReport(steps=step, final_train_loss=train_loss, final_val_loss=val_loss)
    return (SpeakerParams(featurizer, Ws, cfg.tau, report),
            ActionSpeakerParams(featurizer, Wa), l)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_KINDS = {
    "listener": (ListenerParams, FLIGHT_DIM),
    "speaker": (SpeakerParams, THETA_DIM),
    "action_speaker": (ActionSpeakerParams, FLIGHT_DIM),
}


def save_params(params, path) -> None:
    for kind, (cls, _) in _KINDS.items():
        if isinstance(params, cls):
            break
    else:
        raise ValueError(f"cannot serialize {type(params)}")
    doc = {
        "format": "v1",
        "kind": kind,
        "vocab": list(params.featurizer.vocab),
        "clause_keys": list(params.featurizer.clause_keys),
        "shape": list(params.weights.shape),
        "weights": params.weights.tolist(),
    }
    if kind == "speaker":
        doc["tau"] = params.tau
    Path(path).write_text(json.dumps(doc))


def load_params(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "v1":
        raise ValueError(f"unsupported params format {doc.get('format')!r}")
    cls, cond_dim = _KINDS[doc["kind"]]
    featurizer = UtteranceFeaturizer(tuple(doc["vocab"]), tuple(doc["clause_keys"]))
    W = np.asarray(doc["weights"], dtype=float)
    if list(W.shape) != doc["shape"] or W.shape != (featurizer.dim, cond_dim):
        raise ValueError(f"weight shape {W.shape} does not match header")
    if doc["kind"] == "speaker":
        return cls(featurizer, W, doc["tau"])
    return cls(featurizer, W)
