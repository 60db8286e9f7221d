import itertools
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flightpref.domain import RewardVector, Rng
from flightpref.language import (
    MAX_TOKENS,
    Clause,
    Grammar,
    GrammarError,
    SemanticForm,
    Utterance,
    UtteranceSet,
    clause_reward_consistency,
    emit_corpus_jsonl,
)


def U(text):
    return Utterance.from_text(text)


def test_parse_carrier_template(grammar):
    form = grammar.parse(U("the jetblue flight"))
    assert form.clauses == (Clause("carrier_jetblue", 1, "weak"),)


def test_parse_superlative_negative_price_direction(grammar):
    # "cheapest" wants the price axis low: one superlative price clause with
    # negative direction
    form = grammar.parse(U("cheapest one please"))
    (clause,) = form.clauses
    assert clause.target == "price"
    assert clause.superlative
    assert clause.polarity == -1


def test_parse_negated_carrier(grammar):
    form = grammar.parse(U("anything but american"))
    assert form.clauses == (Clause("carrier_american", -1, "strong"),)


def test_parse_out_of_grammar_total(grammar):
    form = grammar.parse(U("take the blue one"))
    assert form.oov and form.is_empty()


@given(st.lists(st.text(alphabet="abcdefgh ", min_size=1, max_size=8), max_size=6))
@settings(max_examples=80, deadline=None)
def test_parse_never_raises(tokens):
    from flightpref.language import default_grammar

    default_grammar().parse(Utterance.from_text(" ".join(tokens)))


def test_realize_carrier_options(grammar):
    form = SemanticForm.of(Clause("carrier_delta", 1, "weak"))
    seen = {grammar.realize(form, Rng(i)).raw for i in range(60)}
    assert seen <= set(grammar.surfaces(form))
    for s in ("delta", "the delta flight", "i like delta"):
        assert s in set(grammar.surfaces(form))


def test_realize_deterministic(grammar):
    form = SemanticForm.of(Clause("price", -1, None, superlative=True))
    a = grammar.realize(form, Rng(5))
    b = grammar.realize(form, Rng(5))
    assert a == b


def test_realize_empty_fails(grammar):
    with pytest.raises(ValueError):
        grammar.realize(SemanticForm(()), Rng(0))


def test_roundtrip_all_forms(grammar):
    inventory = grammar.clause_inventory()
    forms = [SemanticForm.of(c) for c in inventory]
    forms += [
        SemanticForm.of(a, b)
        for a, b in itertools.combinations(inventory, 2)
        if a.target != b.target
    ]
    rng = Rng(3)
    for form in forms:
        u = grammar.realize(form, rng)
        assert grammar.parse(u) == form, u.raw


def test_enumeration_basic(grammar, support1, support2):
    # every single-clause combination is present for all 8 targets
    keys = {c.key() for c in grammar.clause_inventory()}
    for target in ("price", "stops", "longest_stop", "arrival_slack"):
        for sign in "+-":
            assert f"{target}|{sign}|weak" in keys
            assert f"{target}|{sign}|strong" in keys
            assert f"{target}|{sign}|sup" in keys
    for c in ("american", "delta", "jetblue", "southwest"):
        for sign in "+-":
            assert f"carrier_{c}|{sign}|weak" in keys
            assert f"carrier_{c}|{sign}|strong" in keys
    assert len(support1) < len(support2)
    assert {u.key() for u in support1} <= {u.key() for u in support2}


def test_enumeration_token_and_digit_filters(support2):
    for u in support2:
        assert len(u.tokens) < 8
        assert not any(ch.isdigit() for t in u.tokens for ch in t)


def test_enumeration_count_matches_recursive_oracle(grammar, support2):
    # independent count: expand the template tables directly
    singles = set(grammar.single_table)
    pair_count = set()
    by_clause = {}
    for key, surfaces in grammar.realizations.items():
        by_clause[key] = [" ".join(t) for t in surfaces]
    for a, b in itertools.combinations(sorted(by_clause), 2):
        if a.split("|")[0] == b.split("|")[0]:
            continue
        ca, cb = sorted([a, b], key=lambda k: list(grammar.realizations).index(k))
        # order clauses canonically by feature position
        from flightpref.domain import FEATURE_NAMES

        ka = FEATURE_NAMES.index(a.split("|")[0])
        kb = FEATURE_NAMES.index(b.split("|")[0])
        first, second = (a, b) if ka <= kb else (b, a)
        for sa in by_clause[first]:
            for sb in by_clause[second]:
                joined = f"{sa} and {sb}"
                if len(joined.split()) <= MAX_TOKENS:
                    pair_count.add(joined)
    assert len(support2) == len(singles | pair_count)


def test_enumeration_bounds(grammar):
    with pytest.raises(ValueError):
        grammar.enumerate_utterances(0)
    with pytest.raises(ValueError):
        grammar.enumerate_utterances(3)


def test_utterance_set_canonical_order(support1):
    keys = [u.key() for u in support1]
    assert keys == sorted(keys)
    assert len(set(keys)) == len(keys)
    assert support1.index_of(support1[5]) == 5
    assert support1.index_of(U("no such utterance here")) is None
    dedup = UtteranceSet.of([U("delta"), U("delta"), U("american")])
    assert [u.raw for u in dedup] == ["american", "delta"]


def test_clause_consistency_examples():
    strong_pos = SemanticForm.of(Clause("carrier_jetblue", 1, "strong"))
    theta_pos = RewardVector((0, 0, 1.0, 0, 0, 0, 0, 0))
    theta_neg = RewardVector((0, 0, -1.0, 0, 0, 0, 0, 0))
    assert clause_reward_consistency(strong_pos, theta_pos) == 1.0
    assert clause_reward_consistency(strong_pos, theta_neg) == 0.0
    mixed = SemanticForm.of(
        Clause("carrier_jetblue", 1, "strong"), Clause("price", 1, "weak")
    )
    theta_half = RewardVector((0, 0, 1.0, 0, -0.5, 0, 0, 0))
    assert clause_reward_consistency(mixed, theta_half) == 0.5
    assert clause_reward_consistency(SemanticForm(()), theta_pos) == 0.0


def test_clause_consistency_degree_thresholds():
    weak = SemanticForm.of(Clause("price", 1, "weak"))
    strong = SemanticForm.of(Clause("price", 1, "strong"))
    half = RewardVector((0, 0, 0, 0, 0.5, 0, 0, 0))
    full = RewardVector((0, 0, 0, 0, 1.0, 0, 0, 0))
    assert clause_reward_consistency(weak, half) == 1.0
    assert clause_reward_consistency(strong, half) == 0.0
    assert clause_reward_consistency(strong, full) == 1.0


def test_attribute_mentions_and_substitution(grammar):
    mentions = grammar.attribute_mentions(U("jetblue one please").tokens)
    assert len(mentions) == 1 and mentions[0].target == "carrier_jetblue"
    swapped = grammar.substitute_mention(
        U("jetblue one please").tokens, mentions[0], "carrier_delta"
    )
    assert swapped == ("delta", "one", "please")
    # scalar phrase mention
    mentions = grammar.attribute_mentions(U("i like low prices").tokens)
    assert [m.target for m in mentions] == ["price"]
    swapped = grammar.substitute_mention(
        U("i like low prices").tokens, mentions[0], "stops"
    )
    assert " ".join(swapped) == "i like direct routes"


def test_grammar_rejects_ambiguity():
    text = (
        "version\t1\n"
        "lex\tcarrier\tcarrier_delta\t*\tdelta\n"
        "tpl\tcarrier\t+\tweak\t{c}\n"
        "tpl\tcarrier\t-\tweak\t{c}\n"
        "join\t{a} and {b}\n"
    )
    with pytest.raises(GrammarError):
        Grammar(text)


def test_emit_corpus_jsonl(grammar, support1, tmp_path):
    path = tmp_path / "corpus.jsonl"
    n = emit_corpus_jsonl(list(support1)[:5], grammar, path)
    rows = [json.loads(x) for x in path.read_text().splitlines()]
    assert n == len(rows) == 5
    assert set(rows[0]) == {"tokens", "form"}
    form = SemanticForm.from_dict(rows[0]["form"])
    assert form == grammar.parse(support1[0])
