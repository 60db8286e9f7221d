"""Pragmatic speaker model and Bayesian reward inference.

The speaker chooses an utterance for reward theta in context M as a mixture:
with weight alpha it optimizes the listener's immediate action,

    p_action(u | theta, M) = sum_xi p_refer(u | xi, M) p_opt(xi | theta, M),

where p_opt is Boltzmann-rational in reward (rationality beta; beta=inf is
argmax) and p_refer(u | xi, M) is proportional to the base listener's
probability of picking xi given u, normalized over a fixed utterance
support. With weight (1 - alpha) it describes the reward directly via the
base reward speaker. Inverting this speaker with Bayes' rule yields a
posterior over reward vectors; rounds are conditionally independent given
the reward, so multi-round inference is a running product of per-round
likelihoods.

Inference is exact by enumeration over the full 5^8 reward grid (the
reference path) or approximate by self-normalized importance sampling.
"""

from __future__ import annotations

import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np

from . import models
from .domain import ARGMAX_TOL, N_FEATURES, WEIGHT_GRID, OptionSet, RewardVector, Rng
from .language import Utterance, UtteranceSet
from .models import flight_feature_matrix, theta_feature_matrix
from .numerics import logsumexp, softmax

GRID_SIZE = len(WEIGHT_GRID) ** N_FEATURES  # 390,625

_GRID: np.ndarray | None = None
_GRID_DIGITS: np.ndarray | None = None


def reward_grid() -> np.ndarray:
    """All reward vectors on the grid, shape (390625, 8); row i has base-5
    digits of i as component indices, most significant digit first."""
    global _GRID
    if _GRID is None:
        _GRID = np.asarray(WEIGHT_GRID)[grid_digits()]
        _GRID.setflags(write=False)
    return _GRID


def grid_digits() -> np.ndarray:
    global _GRID_DIGITS
    if _GRID_DIGITS is None:
        idx = np.arange(GRID_SIZE)
        base = len(WEIGHT_GRID)
        _GRID_DIGITS = np.stack(
            [(idx // base ** (N_FEATURES - 1 - d)) % base for d in range(N_FEATURES)],
            axis=1,
        ).astype(np.uint8)
        _GRID_DIGITS.setflags(write=False)
    return _GRID_DIGITS


def theta_digits(thetas: np.ndarray) -> np.ndarray:
    """Component grid indices (0..4) for reward vectors on the grid."""
    scaled = (np.asarray(thetas, dtype=float) + 1.0) * 2.0
    d = np.rint(scaled).astype(np.int64)
    if d.min() < 0 or d.max() >= len(WEIGHT_GRID) \
            or not np.allclose(scaled, d, atol=1e-9):
        raise ValueError("reward vector off the weight grid")
    return d


def argmax_lowest(values: np.ndarray, axis: int = -1, tol: float = ARGMAX_TOL) -> np.ndarray:
    """Lowest index whose value is within `tol` of the maximum."""
    values = np.asarray(values)
    m = values.max(axis=axis, keepdims=True)
    return np.argmax(values >= m - tol, axis=axis)


_REWARDS_CACHE: OrderedDict = OrderedDict()
_REWARDS_CACHE_SIZE = 8


def grid_option_rewards(options: OptionSet) -> np.ndarray:
    """reward_grid() @ phi(options).T with a small content-keyed cache; one
    round touches the same matrix several times (update + decision)."""
    cached = _REWARDS_CACHE.get(options)
    if cached is None:
        cached = reward_grid() @ options.feature_matrix().T
        _REWARDS_CACHE[options] = cached
        if len(_REWARDS_CACHE) > _REWARDS_CACHE_SIZE:
            _REWARDS_CACHE.popitem(last=False)
    else:
        _REWARDS_CACHE.move_to_end(options)
    return cached


@dataclass
class PragmaticsConfig:
    """Everything the pragmatic engine needs: base models, utterance support,
    mixture weight alpha (nearsightedness), speaker rationality beta, and the
    inference mode."""

    listener: object
    speaker: object
    support: UtteranceSet
    alpha: float = 0.5
    beta: float = math.inf
    inference: str = "exact"  # "exact" | "importance"
    n_samples: int = 200_000
    proposal: str = "prior"  # "prior" | "uniform"
    component: str = "mixture"  # "mixture" | "action" | "reward" (dedicated paths)
    _caches: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.inference not in ("exact", "importance"):
            raise ValueError(f"unknown inference mode {self.inference!r}")
        if self.component not in ("mixture", "action", "reward"):
            raise ValueError(f"unknown component {self.component!r}")
        if self.component != "mixture" and self.inference != "exact":
            raise ValueError("dedicated single-component paths are exact-only")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if len(self.support) == 0:
            raise ValueError("empty utterance support")

    def with_alpha(self, alpha: float) -> "PragmaticsConfig":
        cfg = replace(self, alpha=alpha)
        cfg._caches = self._caches  # encodings and normalizers do not depend on alpha
        return cfg

    def with_component(self, component: str) -> "PragmaticsConfig":
        cfg = replace(self, component=component)
        cfg._caches = self._caches
        return cfg

    def fingerprint(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "support_size": len(self.support),
            "inference": self.inference,
            "n_samples": self.n_samples,
            "proposal": self.proposal,
            "component": self.component,
        }

    # -- cached encodings --------------------------------------------------

    def support_encoding(self, featurizer) -> np.ndarray:
        key = ("enc", featurizer)
        if key not in self._caches:
            self._caches[key] = featurizer.encode_batch(list(self.support))
        return self._caches[key]

    def support_speaker_scores(self, speaker) -> np.ndarray:
        """(encoded support @ W / tau), shape (n_support, THETA_DIM); cached."""
        key = ("sscores", id(speaker))
        if key not in self._caches:
            enc = self.support_encoding(speaker.featurizer)
            self._caches[key] = (enc @ speaker.weights) / speaker.tau
        return self._caches[key]

    def support_listener_map(self, listener) -> np.ndarray:
        """(encoded support @ W), shape (n_support, FLIGHT_DIM); cached."""
        key = ("lmap", id(listener))
        if key not in self._caches:
            enc = self.support_encoding(listener.featurizer)
            self._caches[key] = enc @ listener.weights
        return self._caches[key]

    def speaker_log_normalizers(self, speaker=None) -> np.ndarray:
        """log sum_u exp(score(u, theta)/tau) over the support, for the whole
        reward grid. Cached; this is the one expensive precomputation."""
        speaker = speaker if speaker is not None else self.speaker
        key = ("logz", id(speaker))
        if key not in self._caches:
            scores = self.support_speaker_scores(speaker)  # (n_sup, THETA_DIM)
            digits = grid_digits()
            out = np.empty(GRID_SIZE)
            chunk = 2048
            for lo in range(0, GRID_SIZE, chunk):
                hi = min(lo + chunk, GRID_SIZE)
                zf = _theta_features_from_digits(digits[lo:hi])
                out[lo:hi] = logsumexp(scores @ zf.T, axis=0)
            self._caches[key] = out
        return self._caches[key]


def _theta_features_from_digits(digits: np.ndarray) -> np.ndarray:
    n = digits.shape[0]
    zf = np.zeros((n, models.THETA_DIM))
    cols = np.arange(N_FEATURES) * len(WEIGHT_GRID) + digits.astype(np.int64)
    zf[np.arange(n)[:, None], cols] = 1.0
    zf[:, -1] = 1.0
    return zf


# ---------------------------------------------------------------------------
# speaker model components
# ---------------------------------------------------------------------------


def p_opt(theta: RewardVector, options: OptionSet, beta: float) -> np.ndarray:
    """Boltzmann choice over the 3 options; beta=inf is uniform on the
    argmax tie-set."""
    rewards = options.feature_matrix() @ theta.array()
    return _p_opt_from_rewards(rewards[None, :], beta)[0]


def _p_opt_from_rewards(rewards: np.ndarray, beta: float) -> np.ndarray:
    if math.isinf(beta):
        m = rewards.max(axis=-1, keepdims=True)
        mask = (rewards >= m - ARGMAX_TOL).astype(float)
        return mask / mask.sum(axis=-1, keepdims=True)
    if beta == 0.0:
        return np.full_like(rewards, 1.0 / rewards.shape[-1])
    return softmax(beta * rewards, axis=-1)


def _action_values_from_rewards(rewards: np.ndarray, prefer: np.ndarray,
                                beta: float) -> np.ndarray:
    """sum_xi p_opt(xi | theta) * prefer[xi] for a (n, 3) reward matrix.

    Column arithmetic for the beta=inf case; equivalent to building the
    Boltzmann matrix and contracting, but with far fewer array passes.
    """
    if math.isinf(beta):
        r0, r1, r2 = rewards[:, 0], rewards[:, 1], rewards[:, 2]
        m = np.maximum(np.maximum(r0, r1), r2) - ARGMAX_TOL
        t0, t1, t2 = r0 >= m, r1 >= m, r2 >= m
        num = t0 * prefer[0] + t1 * prefer[1] + t2 * prefer[2]
        cnt = t0.astype(float)
        cnt += t1
        cnt += t2
        return num / cnt
    if beta == 0.0:
        return np.full(rewards.shape[0], float(np.mean(prefer)))
    return _p_opt_from_rewards(rewards, beta) @ prefer


def _listener_support_probs(cfg: PragmaticsConfig, options: OptionSet) -> np.ndarray:
    """Base listener distributions for every support utterance, shape (n, 3)."""
    listener = cfg.listener
    if hasattr(listener, "support_probs"):
        return listener.support_probs(cfg.support, options)
    if isinstance(listener, models.ListenerParams):
        phi = flight_feature_matrix(options.feature_matrix())
        return softmax(cfg.support_listener_map(listener) @ phi.T, axis=1)
    enc = cfg.support_encoding(listener.featurizer)
    return models.lbase_prob_matrix(listener, enc, options)


def _speaker_support_dist(cfg: PragmaticsConfig, theta: RewardVector) -> np.ndarray:
    """Base reward-speaker distribution over the support (ensemble-averaged)."""
    speaker = cfg.speaker
    members = speaker.members if isinstance(speaker, models.SpeakerEnsemble) else [speaker]
    zeta = theta_feature_matrix(theta.array())[0]
    dists = [softmax(cfg.support_speaker_scores(m) @ zeta) for m in members]
    return dists[0] if len(dists) == 1 else np.mean(dists, axis=0)


def _listener_probs(cfg: PragmaticsConfig, u: Utterance, options: OptionSet) -> np.ndarray:
    listener = cfg.listener
    if hasattr(listener, "probs"):
        return listener.probs(u, options)
    return models.lbase_prob(listener, u, options)


def refer_normalizers(cfg: PragmaticsConfig, options: OptionSet) -> np.ndarray:
    """Per-option normalizer sum_u p_lbase(xi | u, M) over the support."""
    return _listener_support_probs(cfg, options).sum(axis=0)


def p_refer(u: Utterance, xi: int, options: OptionSet, cfg: PragmaticsConfig) -> float:
    """Probability of choosing u to refer to option xi (support-normalized)."""
    return float(p_refer_vector(u, options, cfg)[xi])


def p_refer_vector(u: Utterance, options: OptionSet, cfg: PragmaticsConfig) -> np.ndarray:
    return _listener_probs(cfg, u, options) / refer_normalizers(cfg, options)


def p_action(u: Utterance, theta: RewardVector, options: OptionSet,
             cfg: PragmaticsConfig) -> float:
    """Action-optimizing term: sum over options of p_refer * p_opt."""
    return float(p_refer_vector(u, options, cfg) @ p_opt(theta, options, cfg.beta))


def _speaker_reward_prob(cfg: PragmaticsConfig, u: Utterance, theta: RewardVector) -> float:
    """p(u | theta) under the base reward speaker, normalized over the support."""
    speaker = cfg.speaker
    members = speaker.members if isinstance(speaker, models.SpeakerEnsemble) else [speaker]
    zeta = theta_feature_matrix(theta.array())[0]
    vals = []
    for m in members:
        score = float((m.featurizer.encode(u) @ m.weights) @ zeta) / m.tau
        logz = logsumexp(cfg.support_speaker_scores(m) @ zeta)
        vals.append(math.exp(score - logz))
    return float(np.mean(vals))


def s1_prob(u: Utterance, theta: RewardVector, options: OptionSet,
            cfg: PragmaticsConfig) -> float:
    """Mixture speaker probability of u given theta and the context."""
    return (cfg.alpha * p_action(u, theta, options, cfg)
            + (1.0 - cfg.alpha) * _speaker_reward_prob(cfg, u, theta))


def s1_support_distribution(theta: RewardVector, options: OptionSet,
                            cfg: PragmaticsConfig) -> np.ndarray:
    """Mixture speaker distribution over the whole support for one reward."""
    Lp = _listener_support_probs(cfg, options)
    prefer = Lp / Lp.sum(axis=0, keepdims=True)
    pa = prefer @ p_opt(theta, options, cfg.beta)
    pr = _speaker_support_dist(cfg, theta)
    return cfg.alpha * pa + (1.0 - cfg.alpha) * pr


def marginalization_identity_check(theta: RewardVector, options: OptionSet,
                                   cfg: PragmaticsConfig) -> float:
    """Max absolute gap over the support between the mixture speaker and the
    equivalent generative factorization that mixes inside the option sum."""
    Lp = _listener_support_probs(cfg, options)
    prefer = Lp / Lp.sum(axis=0, keepdims=True)
    popt = p_opt(theta, options, cfg.beta)
    pr = _speaker_support_dist(cfg, theta)
    # p(u | xi, theta, M) = alpha p_refer(u | xi, M) + (1 - alpha) p(u | theta),
    # then marginalize xi out with p_opt
    per_option = cfg.alpha * prefer + (1.0 - cfg.alpha) * pr[:, None]
    factored = per_option @ popt
    direct = cfg.alpha * (prefer @ popt) + (1.0 - cfg.alpha) * pr
    return float(np.max(np.abs(factored - direct)))


# ---------------------------------------------------------------------------
# grid likelihoods
# ---------------------------------------------------------------------------


def action_likelihood_grid(u: Utterance, options: OptionSet,
                           cfg: PragmaticsConfig) -> np.ndarray:
    """p_action(u | theta, M) for every grid point, shape (390625,)."""
    prefer = p_refer_vector(u, options, cfg)
    return _action_values_from_rewards(grid_option_rewards(options), prefer, cfg.beta)


def reward_likelihood_grid(u: Utterance, cfg: PragmaticsConfig) -> np.ndarray:
    """p(u | theta) under the base reward speaker for every grid point.

    Recently computed vectors are kept (games and replays reuse the same
    short utterances constantly); entries are returned read-only.
    """
    lru = cfg._caches.setdefault("reward_lik_lru", OrderedDict())
    key = (id(cfg.speaker), u.key())
    cached = lru.get(key)
    if cached is not None:
        lru.move_to_end(key)
        return cached
    speaker = cfg.speaker
    members = speaker.members if isinstance(speaker, models.SpeakerEnsemble) else [speaker]
    digits = grid_digits()
    total = np.zeros(GRID_SIZE)
    for m in members:
        w_u = (m.featurizer.encode(u) @ m.weights) / m.tau  # (THETA_DIM,)
        blocks = w_u[:-1].reshape(N_FEATURES, len(WEIGHT_GRID))
        scores = np.full(GRID_SIZE, w_u[-1])
        for d in range(N_FEATURES):
            scores += blocks[d, digits[:, d]]
        total += np.exp(scores - cfg.speaker_log_normalizers(m))
    total /= len(members)
    total.setflags(write=False)
    lru[key] = total
    if len(lru) > 32:
        lru.popitem(last=False)
    return total


def s1_likelihood_grid(u: Utterance, options: OptionSet,
                       cfg: PragmaticsConfig) -> np.ndarray:
    return (cfg.alpha * action_likelihood_grid(u, options, cfg)
            + (1.0 - cfg.alpha) * reward_likelihood_grid(u, cfg))


# ---------------------------------------------------------------------------
# posteriors
# ---------------------------------------------------------------------------


class NotNormalized(ValueError):
    pass


@dataclass(frozen=True)
class RewardPosterior:
    """Weighted distribution over reward vectors.

    Exact mode (`thetas is None`) puts one weight on each of the 390,625
    grid points. Sampled mode carries the drawn points explicitly. Updates
    return new objects; `degenerate` marks an update whose likelihood was
    zero everywhere and therefore returned its prior unchanged.
    """

    weights: np.ndarray
    thetas: np.ndarray | None = None
    degenerate: bool = False

    @property
    def mode(self) -> str:
        return "exact" if self.thetas is None else "importance"

    @classmethod
    def uniform_exact(cls) -> "RewardPosterior":
        return cls(np.full(GRID_SIZE, 1.0 / GRID_SIZE))

    def check_normalized(self, tol: float = 1e-12) -> None:
        if abs(float(self.weights.sum()) - 1.0) > tol:
            raise NotNormalized(f"weights sum to {self.weights.sum()}")

    def points(self) -> np.ndarray:
        return reward_grid() if self.thetas is None else self.thetas

    def mean(self) -> np.ndarray:
        return self.weights @ self.points()

    def marginals(self) -> np.ndarray:
        """Per-feature mass on each of the 5 grid values, shape (8, 5)."""
        digits = grid_digits() if self.thetas is None else theta_digits(self.thetas)
        out = np.zeros((N_FEATURES, len(WEIGHT_GRID)))
        for d in range(N_FEATURES):
            out[d] = np.bincount(digits[:, d], weights=self.weights,
                                 minlength=len(WEIGHT_GRID))
        return out

    def ess(self) -> float:
        """Effective sample size of the (normalized) weights."""
        return float(1.0 / np.sum(self.weights ** 2)) if self.thetas is not None else float("nan")

    def snapshot(self) -> dict:
        doc = {
            "mean": self.mean().tolist(),
            "marginals": self.marginals().tolist(),
            "mode": self.mode,
        }
        if self.mode == "importance":
            doc["ess"] = self.ess()
        return doc


def posterior_mean(p: RewardPosterior) -> np.ndarray:
    p.check_normalized()
    return p.mean()


def posterior_marginals(p: RewardPosterior) -> np.ndarray:
    p.check_normalized()
    return p.marginals()


def _exact_update(prior: RewardPosterior, likelihood: np.ndarray) -> RewardPosterior:
    with np.errstate(divide="ignore"):
        logw = np.log(prior.weights) + np.log(likelihood)
    total = logsumexp(logw)
    if not np.isfinite(total):
        warnings.warn("all-zero likelihood; posterior kept equal to the prior")
        return replace(prior, degenerate=True)
    return RewardPosterior(np.exp(logw - total))


def _importance_update(prior: RewardPosterior, u: Utterance, options: OptionSet,
                       cfg: PragmaticsConfig, rng: Rng) -> RewardPosterior:
    n = cfg.n_samples
    if cfg.proposal == "prior":
        pts = prior.points()
        idx = rng.gen.choice(len(pts), size=n, p=prior.weights)
        thetas = pts[idx]
        # weights proportional to the likelihood (prior cancels the proposal)
        correction = 0.0
    elif cfg.proposal == "uniform":
        if prior.thetas is not None:
            raise ValueError("uniform proposal needs an exact-grid prior")
        gidx = rng.gen.integers(GRID_SIZE, size=n)
        thetas = reward_grid()[gidx]
        with np.errstate(divide="ignore"):
            correction = np.log(prior.weights[gidx] * GRID_SIZE)
    else:
        raise ValueError(f"unknown proposal {cfg.proposal!r}")

    lik = _s1_values(u, options, cfg, thetas)
    with np.errstate(divide="ignore"):
        logw = np.log(lik) + correction
    total = logsumexp(logw)
    if not np.isfinite(total):
        warnings.warn("all-zero likelihood; posterior kept equal to the prior")
        return replace(prior, degenerate=True)
    return RewardPosterior(np.exp(logw - total), thetas=thetas)


def _s1_values(u: Utterance, options: OptionSet, cfg: PragmaticsConfig,
               thetas: np.ndarray) -> np.ndarray:
    """s1 likelihood of u at arbitrary grid-valued reward vectors."""
    prefer = p_refer_vector(u, options, cfg)
    rewards = thetas @ options.feature_matrix().T
    pa = _action_values_from_rewards(rewards, prefer, cfg.beta)

    speaker = cfg.speaker
    members = speaker.members if isinstance(speaker, models.SpeakerEnsemble) else [speaker]
    digits = theta_digits(thetas)
    pr = np.zeros(len(thetas))
    for m in members:
        w_u = (m.featurizer.encode(u) @ m.weights) / m.tau
        blocks = w_u[:-1].reshape(N_FEATURES, len(WEIGHT_GRID))
        scores = np.full(len(thetas), w_u[-1])
        for d in range(N_FEATURES):
            scores += blocks[d, digits[:, d]]
        flat = np.ravel_multi_index(digits.T, (len(WEIGHT_GRID),) * N_FEATURES)
        pr += np.exp(scores - cfg.speaker_log_normalizers(m)[flat])
    pr /= len(members)
    return cfg.alpha * pa + (1.0 - cfg.alpha) * pr


def l2_update(prior: RewardPosterior, u: Utterance, options: OptionSet,
              cfg: PragmaticsConfig, rng: Rng | None = None) -> RewardPosterior:
    """One Bayesian update of the reward posterior on an observed utterance."""
    if cfg.component == "action":
        return action_only_update(prior, u, options, cfg)
    if cfg.component == "reward":
        return reward_only_update(prior, u, options, cfg)
    prior.check_normalized(1e-9)
    if cfg.inference == "exact":
        if prior.thetas is not None:
            raise ValueError("exact inference needs a full-grid prior")
        return _exact_update(prior, s1_likelihood_grid(u, options, cfg))
    if rng is None:
        raise ValueError("importance-sampling inference needs an rng")
    return _importance_update(prior, u, options, cfg, rng)


def action_only_update(prior: RewardPosterior, u: Utterance, options: OptionSet,
                       cfg: PragmaticsConfig) -> RewardPosterior:
    """Dedicated exact update using only the action-optimizing term."""
    prior.check_normalized(1e-9)
    if prior.thetas is not None:
        raise ValueError("dedicated paths need a full-grid prior")
    return _exact_update(prior, action_likelihood_grid(u, options, cfg))


def reward_only_update(prior: RewardPosterior, u: Utterance, options: OptionSet,
                       cfg: PragmaticsConfig) -> RewardPosterior:
    """Dedicated exact update using only the reward-descriptive term."""
    prior.check_normalized(1e-9)
    if prior.thetas is not None:
        raise ValueError("dedicated paths need a full-grid prior")
    return _exact_update(prior, reward_likelihood_grid(u, cfg))


def sequential_update(prior: RewardPosterior, rounds, cfg: PragmaticsConfig,
                      rng: Rng | None = None) -> RewardPosterior:
    """Left fold of l2_update over (utterance, option set) rounds."""
    post = prior
    for u, options in rounds:
        post = l2_update(post, u, options, cfg, rng)
    return post
