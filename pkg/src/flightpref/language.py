"""Controlled utterance language: grammar, parser, realizer, enumeration.

The grammar is a closed template language over the 8 flight features
(4 carriers + 4 scalar attributes). Every utterance denotes a set of
clauses; a clause states a signed preference about one feature, either
generically ("i like low prices", weak/strong) or anchored to the current
options via a superlative ("cheapest one please"). Parsing is total:
strings outside the grammar yield an empty clause set flagged OOV.

Grammar templates live in a versioned text file (see data/grammar_v1.txt
for the line format). Parsing inverts realization exactly on every
grammar-generated string.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .domain import CARRIERS, FEATURE_NAMES, RewardVector, Rng

#: Enumerated/realized utterances keep strictly fewer than 8 tokens.
MAX_TOKENS = 7

WEAK = "weak"
STRONG = "strong"
SUP = "sup"

_CARRIER_TARGETS = tuple(f"carrier_{c.lower()}" for c in CARRIERS)


@dataclass(frozen=True)
class Utterance:
    raw: str
    tokens: tuple[str, ...]

    @classmethod
    def from_text(cls, text: str) -> "Utterance":
        return cls(raw=text, tokens=tuple(text.lower().split()))

    def key(self) -> str:
        return " ".join(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Utterance) and self.tokens == other.tokens

    def __hash__(self):
        return hash(self.tokens)


@dataclass(frozen=True)
class Clause:
    """A signed preference about one feature.

    `polarity` is the sign of the reward component the clause endorses:
    +1 means the speaker wants the feature high (or wants that carrier),
    -1 the opposite. Superlative clauses ("cheapest one") carry the
    direction of the superlative in `polarity` and have no degree.
    """

    target: str
    polarity: int
    degree: str | None = WEAK
    superlative: bool = False

    def __post_init__(self):
        if self.target not in FEATURE_NAMES:
            raise ValueError(f"unknown target {self.target!r}")
        if self.polarity not in (-1, 1):
            raise ValueError("polarity must be +1 or -1")
        if self.superlative:
            if self.degree is not None:
                raise ValueError("superlative clauses carry no degree")
            if self.target in _CARRIER_TARGETS:
                raise ValueError("carriers have no superlative form")
        elif self.degree not in (WEAK, STRONG):
            raise ValueError(f"bad degree {self.degree!r}")

    @property
    def flavor(self) -> str:
        return SUP if self.superlative else self.degree

    def key(self) -> str:
        sign = "+" if self.polarity > 0 else "-"
        return f"{self.target}|{sign}|{self.flavor}"

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "polarity": self.polarity,
            "degree": self.degree,
            "superlative": self.superlative,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Clause":
        return cls(d["target"], d["polarity"], d["degree"], d["superlative"])


def _target_index(target: str) -> int:
    return FEATURE_NAMES.index(target)


@dataclass(frozen=True)
class SemanticForm:
    """A set of clauses, at most one per feature, in canonical target order."""

    clauses: tuple[Clause, ...]
    oov: bool = False

    def __post_init__(self):
        targets = [c.target for c in self.clauses]
        if len(set(targets)) != len(targets):
            raise ValueError("at most one clause per feature")
        if list(targets) != sorted(targets, key=_target_index):
            raise ValueError("clauses must be in canonical target order")

    @classmethod
    def of(cls, *clauses: Clause, oov: bool = False) -> "SemanticForm":
        ordered = tuple(sorted(clauses, key=lambda c: _target_index(c.target)))
        return cls(ordered, oov=oov)

    def is_empty(self) -> bool:
        return not self.clauses

    def to_dict(self) -> dict:
        return {"clauses": [c.to_dict() for c in self.clauses], "oov": self.oov}

    @classmethod
    def from_dict(cls, d: dict) -> "SemanticForm":
        return cls.of(*(Clause.from_dict(c) for c in d["clauses"]), oov=d.get("oov", False))


EMPTY_FORM = SemanticForm(())


@dataclass(frozen=True)
class UtteranceSet:
    """Deduplicated utterances in canonical (lexicographic) order."""

    utterances: tuple[Utterance, ...]
    _index: dict = field(repr=False, hash=False, compare=False, default_factory=dict)

    @classmethod
    def of(cls, utterances) -> "UtteranceSet":
        by_key = {u.key(): u for u in utterances}
        ordered = tuple(by_key[k] for k in sorted(by_key))
        return cls(ordered, {u.key(): i for i, u in enumerate(ordered)})

    def index_of(self, u: Utterance) -> int | None:
        return self._index.get(u.key())

    def __len__(self):
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def __getitem__(self, i):
        return self.utterances[i]


@dataclass(frozen=True)
class Mention:
    """An attribute phrase occurrence inside a token sequence."""

    start: int
    end: int  # exclusive
    kind: str  # carrier | scalar | sup
    target: str
    polarity: int  # lexical direction; carriers use +1
    phrase: tuple[str, ...]


class GrammarError(ValueError):
    pass


class Grammar:
    """Template grammar expanded into exact parse and realization tables."""

    def __init__(self, text: str):
        self.version = None
        # lexemes[kind][(target, polarity)] = phrase tokens
        self.lexemes: dict[str, dict[tuple[str, int], tuple[str, ...]]] = {
            "carrier": {},
            "scalar": {},
            "sup": {},
        }
        self.templates: list[tuple[str, int | None, str, str]] = []
        self.joins: list[str] = []
        self._read(text)
        # surface key -> SemanticForm (single-clause only)
        self.single_table: dict[str, SemanticForm] = {}
        # clause key -> list of token tuples
        self.realizations: dict[str, list[tuple[str, ...]]] = {}
        self._expand()
        self._check_joinability()
        self.vocabulary = sorted({t for key in self.single_table for t in key.split()} | {"and"})

    def _read(self, text: str) -> None:
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            tag = parts[0]
            try:
                if tag == "version":
                    self.version = parts[1]
                elif tag == "lex":
                    _, kind, target, pol, phrase = parts
                    polarity = 1 if pol in ("+", "*") else -1
                    if target not in FEATURE_NAMES:
                        raise GrammarError(f"unknown feature {target!r}")
                    self.lexemes[kind][(target, polarity)] = tuple(phrase.split())
                elif tag == "tpl":
                    _, kind, pol, degree, pattern = parts
                    polarity = None if pol == "*" else (1 if pol == "+" else -1)
                    self.templates.append((kind, polarity, degree, pattern))
                elif tag == "join":
                    self.joins.append(parts[1])
                else:
                    raise GrammarError(f"unknown line tag {tag!r}")
            except (IndexError, KeyError) as e:
                raise GrammarError(f"bad grammar line {lineno}: {line!r}") from e
        if self.version is None:
            raise GrammarError("grammar file missing version line")
        if not self.joins:
            raise GrammarError("grammar needs at least one join pattern")

    def _expand(self) -> None:
        def add(clause: Clause, surface: str) -> None:
            tokens = tuple(surface.split())
            if any(any(ch.isdigit() for ch in t) for t in tokens):
                raise GrammarError(f"digit in template surface {surface!r}")
            if len(tokens) > MAX_TOKENS:
                raise GrammarError(f"surface too long: {surface!r}")
            key = " ".join(tokens)
            form = SemanticForm.of(clause)
            prev = self.single_table.get(key)
            if prev is not None and prev != form:
                raise GrammarError(f"ambiguous surface {key!r}")
            self.single_table[key] = form
            self.realizations.setdefault(clause.key(), []).append(tokens)

        for kind, polarity, degree, pattern in self.templates:
            if kind == "carrier":
                for (target, _), phrase in self.lexemes["carrier"].items():
                    clause = Clause(target, polarity, degree)
                    add(clause, pattern.replace("{c}", " ".join(phrase)))
            elif kind == "scalar":
                for (target, pol), phrase in self.lexemes["scalar"].items():
                    clause = Clause(target, pol, degree)
                    add(clause, pattern.replace("{f}", " ".join(phrase)))
            elif kind == "sup":
                for (target, pol), phrase in self.lexemes["sup"].items():
                    clause = Clause(target, pol, None, superlative=True)
                    add(clause, pattern.replace("{s}", " ".join(phrase)))
            else:
                raise GrammarError(f"unknown template kind {kind!r}")

    def _check_joinability(self) -> None:
        # every distinct-target clause pair must fit at least one join under
        # the token cap, or realize() could fail on a valid form
        mins = {k: min(len(t) for t in v) for k, v in self.realizations.items()}
        for a, b in itertools.combinations(mins, 2):
            if a.split("|")[0] == b.split("|")[0]:
                continue
            if mins[a] + mins[b] + 1 > MAX_TOKENS:
                raise GrammarError(f"no short enough join for {a} + {b}")

    # -- parsing ------------------------------------------------------------

    def parse(self, u: Utterance) -> SemanticForm:
        """Total parse: grammar strings get their form, everything else OOV."""
        tokens = u.tokens
        key = " ".join(tokens)
        form = self.single_table.get(key)
        if form is not None:
            return form
        for i, tok in enumerate(tokens):
            if tok != "and":
                continue
            left = self.single_table.get(" ".join(tokens[:i]))
            right = self.single_table.get(" ".join(tokens[i + 1:]))
            if left is None or right is None:
                continue
            lc, rc = left.clauses[0], right.clauses[0]
            if lc.target == rc.target:
                continue
            return SemanticForm.of(lc, rc)
        return SemanticForm((), oov=True)

    # -- realization ----------------------------------------------------------

    def realize(self, form: SemanticForm, rng: Rng) -> Utterance:
        """Sample uniformly among the surface strings of a form (< 8 tokens)."""
        if form.is_empty():
            raise ValueError("cannot realize an empty form")
        if len(form.clauses) == 1:
            options = self.realizations[form.clauses[0].key()]
            tokens = options[int(rng.gen.integers(len(options)))]
        elif len(form.clauses) == 2:
            a, b = form.clauses
            pairs = [
                (ta, tb)
                for ta in self.realizations[a.key()]
                for tb in self.realizations[b.key()]
                if len(ta) + len(tb) + 1 <= MAX_TOKENS
            ]
            ta, tb = pairs[int(rng.gen.integers(len(pairs)))]
            tokens = ta + ("and",) + tb
        else:
            raise ValueError("forms with more than 2 clauses are not realizable")
        return Utterance(" ".join(tokens), tokens)

    def surfaces(self, form: SemanticForm) -> list[str]:
        """All realizations of a form, as canonical strings."""
        if len(form.clauses) == 1:
            return [" ".join(t) for t in self.realizations[form.clauses[0].key()]]
        a, b = form.clauses
        return [
            " ".join(ta + ("and",) + tb)
            for ta in self.realizations[a.key()]
            for tb in self.realizations[b.key()]
            if len(ta) + len(tb) + 1 <= MAX_TOKENS
        ]

    # -- enumeration ----------------------------------------------------------

    def clause_inventory(self) -> list[Clause]:
        out = []
        for key in self.realizations:
            target, sign, flavor = key.split("|")
            polarity = 1 if sign == "+" else -1
            if flavor == SUP:
                out.append(Clause(target, polarity, None, superlative=True))
            else:
                out.append(Clause(target, polarity, flavor))
        return out

    def enumerate_utterances(self, max_clauses: int) -> UtteranceSet:
        """Every grammar string with at most `max_clauses` clauses.

        Only strings under 8 whitespace tokens are produced; the grammar
        contains no digits by construction.
        """
        if not 1 <= max_clauses <= 2:
            raise ValueError("max_clauses must be 1 or 2")
        strings = set(self.single_table)
        if max_clauses == 2:
            inventory = self.clause_inventory()
            for a, b in itertools.combinations(inventory, 2):
                if a.target == b.target:
                    continue
                strings.update(self.surfaces(SemanticForm.of(a, b)))
        return UtteranceSet.of(Utterance.from_text(s) for s in strings)

    # -- attribute mentions (hard-negative support) -----------------------------

    def attribute_mentions(self, tokens: tuple[str, ...]) -> list[Mention]:
        """Occurrences of attribute phrases, longest match first, no overlaps."""
        phrases = []
        for kind, table in self.lexemes.items():
            for (target, polarity), phrase in table.items():
                phrases.append((len(phrase), kind, target, polarity, phrase))
        phrases.sort(key=lambda p: -p[0])
        covered = [False] * len(tokens)
        mentions = []
        for length, kind, target, polarity, phrase in phrases:
            for start in range(0, len(tokens) - length + 1):
                end = start + length
                if any(covered[start:end]):
                    continue
                if tuple(tokens[start:end]) == phrase:
                    for j in range(start, end):
                        covered[j] = True
                    mentions.append(Mention(start, end, kind, target, polarity, phrase))
        mentions.sort(key=lambda m: m.start)
        return mentions

    def substitute_mention(self, tokens: tuple[str, ...], mention: Mention,
                           new_target: str) -> tuple[str, ...]:
        """Swap one attribute phrase for the same-slot phrase of another feature."""
        alt = self.lexemes[mention.kind][(new_target, mention.polarity)]
        return tokens[:mention.start] + alt + tokens[mention.end:]

    def distractor_targets(self, mention: Mention) -> list[str]:
        return [
            target
            for (target, polarity) in self.lexemes[mention.kind]
            if polarity == mention.polarity and target != mention.target
        ]


def load_default_grammar() -> Grammar:
    text = resources.files("flightpref.data").joinpath("grammar_v1.txt").read_text()
    return Grammar(text)


_DEFAULT: Grammar | None = None


def default_grammar() -> Grammar:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_default_grammar()
    return _DEFAULT


def parse(u: Utterance) -> SemanticForm:
    return default_grammar().parse(u)


def realize(form: SemanticForm, rng: Rng) -> Utterance:
    return default_grammar().realize(form, rng)


def enumerate_utterances(max_clauses: int) -> UtteranceSet:
    return default_grammar().enumerate_utterances(max_clauses)


def clause_reward_consistency(form: SemanticForm, theta: RewardVector) -> float:
    """Fraction of clauses agreeing with the sign of their reward component.

    A strong clause needs the full weight (|theta_i| = 1); weak and
    superlative clauses need |theta_i| >= 0.5. Empty forms score 0.
    """
    if form.is_empty():
        return 0.0
    w = theta.array()
    hits = 0
    for clause in form.clauses:
        wi = w[_target_index(clause.target)]
        if np.sign(wi) != clause.polarity:
            continue
        required = 1.0 if clause.flavor == STRONG else 0.5
        if abs(wi) >= required:
            hits += 1
    return hits / len(form.clauses)


def emit_corpus_jsonl(utterances, grammar: Grammar, path) -> int:
    """Write {"tokens": [...], "form": {...}} rows for a set of utterances."""
    n = 0
    with open(path, "w") as fh:
        for u in utterances:
            row = {"tokens": list(u.tokens), "form": grammar.parse(u).to_dict()}
            fh.write(json.dumps(row) + "\n")
            n += 1
    return n
