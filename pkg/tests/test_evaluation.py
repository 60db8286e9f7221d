import numpy as np
import pytest
from dataclasses import replace

from flightpref.domain import RewardVector, Rng, sample_reward
from flightpref.evaluation import (
    EvalGame,
    MisreadingListener,
    calibrate_misreading,
    battery_accuracy,
    eval_games_from_corpus,
    held_out_accuracy,
    heldout_battery,
    known_action_ablation,
    l2_distance,
    listener_top1_accuracy,
    oracle_k_baseline,
    oracle_switch,
    paired_bootstrap,
    run_models,
)
from flightpref.game import generate_corpus, generate_s1_games
from flightpref.language import Utterance


@pytest.fixture(scope="module")
def eval_games(small_cfg):
    corpus = generate_s1_games(8, small_cfg, seed=42)
    return eval_games_from_corpus(corpus)


# -- metrics -------------------------------------------------------------------


def test_held_out_accuracy_self_agreement():
    theta = sample_reward(Rng(1))
    acc = held_out_accuracy(theta.array(), theta, 1000, Rng(2))
    assert acc == 1.0


def test_held_out_accuracy_negated_below_chance():
    rng = Rng(3)
    theta = RewardVector((1.0, -0.5, 0.5, -1.0, 1.0, 0.5, -0.5, 1.0))
    acc = held_out_accuracy(-theta.array(), theta, 1000, rng)
    assert acc < 0.33


def test_held_out_accuracy_zero_vector_chance():
    rng = Rng(4)
    accs = [held_out_accuracy(np.zeros(8), sample_reward(rng), 1000, rng.split(i))
            for i in range(20)]
    assert abs(np.mean(accs) - 1 / 3) < 0.03


def test_held_out_accuracy_deterministic():
    theta = sample_reward(Rng(5))
    a = held_out_accuracy(np.ones(8) * 0.1, theta, 500, Rng(77))
    b = held_out_accuracy(np.ones(8) * 0.1, theta, 500, Rng(77))
    assert a == b
    with pytest.raises(ValueError):
        held_out_accuracy(np.zeros(8), theta, 0, Rng(0))


def test_l2_distance():
    theta = RewardVector((1.0,) * 8)
    assert l2_distance(theta.array(), theta) == 0.0
    assert l2_distance(np.zeros(8), theta) == pytest.approx(np.sqrt(8))
    rng = Rng(6)
    a, b = rng.gen.normal(size=8), rng.gen.normal(size=8)
    manual = sum((x - y) ** 2 for x, y in zip(a, b)) ** 0.5
    assert l2_distance(a, b) == pytest.approx(manual, rel=1e-12)
    with pytest.raises(ValueError):
        l2_distance(np.zeros(4), theta)


def test_oracle_k_endpoints():
    theta = sample_reward(Rng(7))
    assert np.array_equal(oracle_k_baseline(theta, 0, Rng(1)), np.zeros(8))
    assert np.array_equal(oracle_k_baseline(theta, 8, Rng(1)), theta.array())
    est = oracle_k_baseline(theta, 3, Rng(2))
    known = np.flatnonzero(est != 0)
    assert len(known) <= 3
    assert all(est[d] == theta.weights[d] for d in known)
    with pytest.raises(ValueError):
        oracle_k_baseline(theta, 9, Rng(0))


def test_oracle_k_accuracy_monotone_small():
    rng = Rng(8)
    battery = heldout_battery(rng.split(0), 400)
    means = []
    for k in range(9):
        accs = []
        for i in range(40):
            theta = sample_reward(rng.split(100 + i))
            est = oracle_k_baseline(theta, k, rng.split(1000 + 9 * i + k))
            accs.append(battery_accuracy(battery, est, theta.array()))
        means.append(np.mean(accs))
    violations = sum(1 for a, b in zip(means, means[1:]) if b < a - 0.02)
    assert violations <= 1
    assert means[8] >= 0.99


# -- paired bootstrap ------------------------------------------------------------


def test_paired_bootstrap_identical_lists():
    scores = np.linspace(0, 1, 50)
    assert paired_bootstrap(scores, scores, 2000, Rng(1)) == 1.0


def test_paired_bootstrap_constant_difference():
    a = np.ones(100)
    b = np.zeros(100)
    assert paired_bootstrap(a, b, 2000, Rng(2)) < 0.01


def test_paired_bootstrap_calibration():
    rng = Rng(3)
    rejections = 0
    trials = 400
    for t in range(trials):
        g = rng.split(t).gen
        a = g.normal(size=60)
        b = g.normal(size=60)
        p = paired_bootstrap(a, b, 1000, rng.split(10_000 + t))
        rejections += p < 0.05
    assert abs(rejections / trials - 0.05) < 0.03


def test_paired_bootstrap_validation():
    with pytest.raises(ValueError):
        paired_bootstrap([1, 2], [1], 2000, Rng(0))
    with pytest.raises(ValueError):
        paired_bootstrap([1, 2], [1, 2], 10, Rng(0))


# -- model runs -------------------------------------------------------------------


def test_run_models_alpha1_equals_dedicated_path(small_cfg, eval_games):
    games = eval_games[:3]
    via_alpha = run_models(games, {"m": small_cfg.with_alpha(1.0)},
                           n_heldout=300, seed=5)
    via_component = run_models(games, {"m": small_cfg.with_component("action")},
                               n_heldout=300, seed=5)
    assert np.array_equal(via_alpha.models["m"].acc, via_component.models["m"].acc)
    assert np.array_equal(via_alpha.models["m"].l2, via_component.models["m"].l2)


def test_run_models_report_shapes(small_cfg, eval_games):
    cfgs = {"full": small_cfg, "reward_only": small_cfg.with_alpha(0.0)}
    rep = run_models(eval_games, cfgs, n_heldout=200, seed=3)
    full = rep.models["full"]
    assert full.acc.shape == (len(eval_games), 6)
    assert full.curve_labels == ("1", "2", "3", "4", "5+")
    assert 0.0 <= full.acc_mean <= 1.0
    assert "full vs reward_only" in rep.p_values
    doc = rep.to_json_dict()
    assert set(doc) == {"models", "p_values", "metadata"}
    csv = rep.curves_csv()
    assert csv.splitlines()[0] == "round_index,model,accuracy,l2,stderr"
    assert len(csv.splitlines()) == 1 + 2 * 5
    assert "Method" in rep.to_text_table()
    with pytest.raises(ValueError):
        run_models([EvalGame("g", sample_reward(Rng(0)), ())], cfgs)


def test_oracle_switch_dominates(small_cfg, eval_games):
    cfgs = {"action_only": small_cfg.with_alpha(1.0),
            "reward_only": small_cfg.with_alpha(0.0)}
    rep = oracle_switch(eval_games, cfgs, n_heldout=200, seed=3)
    sw = rep.models["oracle_switch"]
    assert sw.acc_mean >= max(rep.models["action_only"].acc_mean,
                              rep.models["reward_only"].acc_mean) - 1e-12
    assert np.all(sw.acc >= rep.models["action_only"].acc - 1e-12)
    assert np.all(sw.acc >= rep.models["reward_only"].acc - 1e-12)
    with pytest.raises(ValueError):
        oracle_switch(eval_games, {"full": small_cfg})


def test_known_action_with_perfect_listener_is_identity(small_cfg, eval_games):
    # listener never wrong -> nothing skipped -> identical runs
    class PerfectListener:
        featurizer = small_cfg.listener.featurizer

        def probs(self, u, options):
            from flightpref.domain import optimal_option

            game = next(g for g in eval_games
                        for (uu, oo) in g.rounds if oo is options)
            best, _ = optimal_option(game.theta_star, options)
            out = np.full(3, 1e-6)
            out[best] = 1 - 2e-6
            return out

        def support_probs(self, support, options):
            row = self.probs(None, options)
            return np.tile(row, (len(support), 1))

    cfg = replace(small_cfg, listener=PerfectListener())
    cfg._caches = {}
    rep = known_action_ablation(eval_games[:3], cfg, n_heldout=200, seed=4)
    assert np.array_equal(rep.models["full"].acc, rep.models["known_action"].acc)


def test_known_action_adversarial_listener_stays_uniform(small_cfg, eval_games):
    # listener always wrong -> every round skipped -> posterior stays uniform,
    # so the estimate is the zero vector in every round
    class AdversarialListener:
        featurizer = small_cfg.listener.featurizer

        def probs(self, u, options):
            from flightpref.domain import optimal_option

            game = next(g for g in eval_games
                        for (uu, oo) in g.rounds if oo is options)
            best, _ = optimal_option(game.theta_star, options)
            out = np.zeros(3)
            out[(best + 1) % 3] = 1.0
            return out + 1e-9

        def support_probs(self, support, options):
            return np.tile(self.probs(None, options), (len(support), 1))

    cfg = replace(small_cfg, listener=AdversarialListener())
    cfg._caches = {}
    games = eval_games[:2]
    rep = run_models(games, {"skip": cfg}, n_heldout=200, seed=4,
                     skip_bad_listener_rounds=frozenset({"skip"}))
    battery = heldout_battery(Rng(4).split(9001), 200)
    for gi, game in enumerate(games):
        expected = battery_accuracy(battery, np.zeros(8), game.theta_star.array())
        assert np.allclose(rep.models["skip"].acc[gi], expected)


# -- degraded listeners -------------------------------------------------------------


def test_misreading_listener_deterministic(small_bundle, eval_games):
    noisy = MisreadingListener(small_bundle.listener, 0.5, seed=1)
    u = eval_games[0].rounds[0][0]
    options = eval_games[0].rounds[0][1]
    assert np.array_equal(noisy.probs(u, options), noisy.probs(u, options))
    heard = noisy.misread(u)
    assert noisy.misread(u) == heard
    full = MisreadingListener(small_bundle.listener, 1.0, seed=1)
    changed = sum(full.misread(u2).key() != u2.key()
                  for g in eval_games for (u2, _) in g.rounds)
    assert changed > 0


def test_calibrate_misreading(small_bundle, small_cfg):
    corpus = generate_corpus(25, seed=31)
    games = eval_games_from_corpus(corpus)
    base = listener_top1_accuracy(small_bundle.listener, games)
    target = base - 0.15
    noisy = calibrate_misreading(small_bundle.listener, games, target, seed=2)
    acc = listener_top1_accuracy(noisy, games)
    assert abs(acc - target) < 0.06
