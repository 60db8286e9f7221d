"""Pragmatic reward inference from language in a flight-booking game.

The package infers a user's 8-dimensional flight-preference vector from
short utterances by inverting a speaker model that mixes action-eliciting
and reward-describing language, and wraps that inference in a multi-round
booking game with training, evaluation, simulation, and serving tools.
"""

from .domain import Flight, OptionSet, RewardVector, Rng, optimal_option, reward
from .language import (
    Clause,
    SemanticForm,
    Utterance,
    UtteranceSet,
    clause_reward_consistency,
    enumerate_utterances,
    parse,
    realize,
)
from .pragmatics import (
    PragmaticsConfig,
    RewardPosterior,
    l2_update,
    p_action,
    p_opt,
    p_refer,
    posterior_marginals,
    posterior_mean,
    s1_prob,
    sequential_update,
)

__version__ = "0.1.0"

__all__ = [
    "Flight", "OptionSet", "RewardVector", "Rng", "optimal_option", "reward",
    "Clause", "SemanticForm", "Utterance", "UtteranceSet",
    "clause_reward_consistency", "enumerate_utterances", "parse", "realize",
    "PragmaticsConfig", "RewardPosterior", "l2_update", "p_action", "p_opt",
    "p_refer", "posterior_marginals", "posterior_mean", "s1_prob",
    "sequential_update", "__version__",
]
