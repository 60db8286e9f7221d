"""Flights, option sets, reward vectors, and deterministic context generation.

A flight is described by an 8-dimensional feature vector: four mutually
exclusive carrier indicators followed by four scalar attributes normalized
to [0, 1]. Rewards are linear, with weights restricted to the 5-point grid
{-1, -0.5, 0, 0.5, 1} per component.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

CARRIERS = ("American", "Delta", "JetBlue", "Southwest")

SCALAR_FEATURES = ("price", "stops", "longest_stop", "arrival_slack")

#: Names of the 8 feature dimensions, in vector order.
FEATURE_NAMES = tuple(f"carrier_{c.lower()}" for c in CARRIERS) + SCALAR_FEATURES

N_FEATURES = 8
N_OPTIONS = 3

#: Admissible reward weight values per component.
WEIGHT_GRID = (-1.0, -0.5, 0.0, 0.5, 1.0)

STOPS_VALUES = (0.0, 0.5, 1.0)  # encodes 0 / 1 / 2 stops

#: Scalar attributes are drawn from this grid so posteriors and golden files
#: are exactly reproducible.
SCALAR_GRID_POINTS = 101

ARGMAX_TOL = 1e-12

SCHEMA_VERSION = "v1"


class Rng:
    """Deterministic random stream (PCG64) with a documented split rule.

    Same seed gives identical streams on every platform. Parallel consumers
    must not share an instance; derive independent streams with `split`,
    which seeds a child from ``SeedSequence([seed, key])``.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))

    def split(self, key: int) -> "Rng":
        child = Rng.__new__(Rng)
        child.seed = int(key)
        child.gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, int(key)]))
        )
        return child

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"


@dataclass(frozen=True)
class Flight:
    """One flight option. Scalar attributes live in [0, 1]."""

    carrier: str
    price_norm: float
    stops_norm: float
    longest_stop_norm: float
    arrival_slack_norm: float

    def __post_init__(self):
        if self.carrier not in CARRIERS:
            raise ValueError(f"unknown carrier {self.carrier!r}")
        for name in ("price_norm", "stops_norm", "longest_stop_norm", "arrival_slack_norm"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def features(self) -> np.ndarray:
        """8-dim feature vector: carrier one-hot block, then the scalars."""
        phi = np.zeros(N_FEATURES)
        phi[CARRIERS.index(self.carrier)] = 1.0
        phi[4] = self.price_norm
        phi[5] = self.stops_norm
        phi[6] = self.longest_stop_norm
        phi[7] = self.arrival_slack_norm
        return phi

    def to_dict(self) -> dict:
        return {
            "v": SCHEMA_VERSION,
            "carrier": self.carrier,
            "price_norm": self.price_norm,
            "stops_norm": self.stops_norm,
            "longest_stop_norm": self.longest_stop_norm,
            "arrival_slack_norm": self.arrival_slack_norm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Flight":
        _check_schema(d)
        return cls(
            carrier=d["carrier"],
            price_norm=d["price_norm"],
            stops_norm=d["stops_norm"],
            longest_stop_norm=d["longest_stop_norm"],
            arrival_slack_norm=d["arrival_slack_norm"],
        )

    @classmethod
    def from_features(cls, phi: Sequence[float]) -> "Flight":
        """Inverse of `features`; validates the carrier one-hot block."""
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} features, got shape {phi.shape}")
        block = phi[:4]
        ones = np.flatnonzero(np.isclose(block, 1.0))
        if len(ones) != 1 or not np.allclose(np.delete(block, ones[0]), 0.0):
            raise ValueError(f"carrier block {block.tolist()} is not one-hot")
        return cls(
            carrier=CARRIERS[int(ones[0])],
            price_norm=float(phi[4]),
            stops_norm=float(phi[5]),
            longest_stop_norm=float(phi[6]),
            arrival_slack_norm=float(phi[7]),
        )


@dataclass(frozen=True)
class OptionSet:
    """The decision context: an ordered triple of flights."""

    flights: tuple[Flight, Flight, Flight]

    def __post_init__(self):
        if len(self.flights) != N_OPTIONS:
            raise ValueError(f"an option set holds exactly {N_OPTIONS} flights")

    def has_duplicates(self) -> bool:
        return len(set(self.flights)) < N_OPTIONS

    def feature_matrix(self) -> np.ndarray:
        """Stacked features, shape (3, 8)."""
        return np.stack([f.features() for f in self.flights])

    def to_dict(self) -> dict:
        return {"v": SCHEMA_VERSION, "flights": [f.to_dict() for f in self.flights]}

    @classmethod
    def from_dict(cls, d: dict) -> "OptionSet":
        _check_schema(d)
        return cls(tuple(Flight.from_dict(x) for x in d["flights"]))


@dataclass(frozen=True)
class RewardVector:
    """Reward weights, one per feature, each on the 5-point grid."""

    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.weights) != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} weights")
        for w in self.weights:
            if w not in WEIGHT_GRID:
                raise ValueError(f"weight {w} is off the grid {WEIGHT_GRID}")

    def array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def to_dict(self) -> dict:
        return {"v": SCHEMA_VERSION, "weights": list(self.weights)}

    @classmethod
    def from_dict(cls, d: dict) -> "RewardVector":
        _check_schema(d)
        return cls(tuple(float(w) for w in d["weights"]))

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> "RewardVector":
        return cls(tuple(float(w) for w in arr))


def _check_schema(d: dict) -> None:
    v = d.get("v")
    if v != SCHEMA_VERSION:
        raise ValueError(f"schema version {v!r}, expected {SCHEMA_VERSION!r}")


def reward(theta: RewardVector, flight: Flight) -> float:
    """Linear reward: dot product of the weights with the flight features."""
    return float(theta.array() @ flight.features())


def optimal_option(theta: RewardVector, options: OptionSet) -> tuple[int, tuple[int, ...]]:
    """Index of the highest-reward flight, plus the full argmax tie-set.

    The returned index is the lowest member of the tie-set; ties are rewards
    within ARGMAX_TOL of the maximum.
    """
    rewards = options.feature_matrix() @ theta.array()
    best = rewards.max()
    ties = tuple(int(i) for i in np.flatnonzero(rewards >= best - ARGMAX_TOL))
    return ties[0], ties


def sample_flight(rng: Rng) -> Flight:
    g = rng.gen
    return Flight(
        carrier=CARRIERS[int(g.integers(len(CARRIERS)))],
        price_norm=int(g.integers(SCALAR_GRID_POINTS)) / (SCALAR_GRID_POINTS - 1),
        stops_norm=STOPS_VALUES[int(g.integers(len(STOPS_VALUES)))],
        longest_stop_norm=int(g.integers(SCALAR_GRID_POINTS)) / (SCALAR_GRID_POINTS - 1),
        arrival_slack_norm=int(g.integers(SCALAR_GRID_POINTS)) / (SCALAR_GRID_POINTS - 1),
    )


def sample_option_set(rng: Rng) -> OptionSet:
    return OptionSet((sample_flight(rng), sample_flight(rng), sample_flight(rng)))


def sample_reward(rng: Rng) -> RewardVector:
    idx = rng.gen.integers(len(WEIGHT_GRID), size=N_FEATURES)
    return RewardVector(tuple(WEIGHT_GRID[int(i)] for i in idx))


def sample_option_features(rng: Rng, n_sets: int) -> np.ndarray:
    """Feature tensor of `n_sets` freshly sampled option sets, shape (n, 3, 8).

    Vectorized equivalent of stacking `sample_option_set` results; used by the
    evaluation code where thousands of sets are needed. Draws the same
    distribution as `sample_flight` but not the same stream order.
    """
    g = rng.gen
    n = n_sets * N_OPTIONS
    phi = np.zeros((n, N_FEATURES))
    phi[np.arange(n), g.integers(len(CARRIERS), size=n)] = 1.0
    denom = SCALAR_GRID_POINTS - 1
    phi[:, 4] = g.integers(SCALAR_GRID_POINTS, size=n) / denom
    phi[:, 5] = np.asarray(STOPS_VALUES)[g.integers(len(STOPS_VALUES), size=n)]
    phi[:, 6] = g.integers(SCALAR_GRID_POINTS, size=n) / denom
    phi[:, 7] = g.integers(SCALAR_GRID_POINTS, size=n) / denom
    return phi.reshape(n_sets, N_OPTIONS, N_FEATURES)


def dump_jsonl(records: Iterable, path) -> int:
    """Write objects with a `to_dict` method to a JSONL file; returns count."""
    n = 0
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict()) + "\n")
            n += 1
    return n


def load_jsonl(path, cls) -> list:
    with open(path) as fh:
        return [cls.from_dict(json.loads(line)) for line in fh if line.strip()]
