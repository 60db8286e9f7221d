"""Acceptance suite: one test per primary criterion, at the stated sizes
and tolerances. Each test prints a single PASS/FAIL line (run with -s or
check captured output)."""

import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from flightpref.domain import Rng, sample_option_set, sample_reward
from flightpref.evaluation import (
    battery_accuracy,
    calibrate_misreading,
    eval_games_from_corpus,
    heldout_battery,
    known_action_ablation,
    listener_top1_accuracy,
    oracle_k_baseline,
    oracle_switch,
    paired_bootstrap,
    run_models,
)
from flightpref.game import (
    AssistantPolicy,
    GameLog,
    POINTS_ASK,
    POINTS_CORRECT,
    POINTS_INCORRECT,
    generate_corpus,
    generate_s1_games,
    replay_log,
    simulate_games,
)
from flightpref.language import default_grammar
from flightpref.models import (
    SpeakerBatch,
    UtteranceFeaturizer,
    flight_feature_matrix,
    listener_loss_and_grad,
    speaker_latent_loss_and_grads,
)
from flightpref.pragmatics import (
    RewardPosterior,
    action_only_update,
    l2_update,
    marginalization_identity_check,
    reward_only_update,
)

pytestmark = pytest.mark.acceptance


def _report(n: int, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")


@pytest.fixture(scope="module")
def engine(strong_cfg):
    return strong_cfg


@pytest.fixture(scope="module")
def table1_games(engine):
    return eval_games_from_corpus(generate_s1_games(91, engine, seed=606))


def test_criterion_1_marginalization_identity(engine):
    t0 = time.time()
    rng = Rng(11_001)
    worst = 0.0
    alphas = [0.0, 0.5, 1.0]
    betas = [0.0, 0.5, 2.0, math.inf]
    for i in range(100):
        theta = sample_reward(rng.split(2 * i))
        options = sample_option_set(rng.split(2 * i + 1))
        alpha = alphas[i % 3] if i % 2 == 0 else float(rng.gen.random())
        beta = betas[i % 4]
        cfg = replace(engine, alpha=alpha, beta=beta)
        cfg._caches = engine._caches
        worst = max(worst, marginalization_identity_check(theta, options, cfg))
    ok = worst < 1e-10
    _report(1, ok, f"marginalization identity max gap {worst:.2e} over 100 "
                   f"configs ({time.time() - t0:.0f}s)")
    assert ok


def test_criterion_2_ablation_bitwise_equivalence(engine):
    t0 = time.time()
    rng = Rng(12_001)
    prior = RewardPosterior.uniform_exact()
    all_equal = True
    for i in range(20):
        options = sample_option_set(rng.split(3 * i))
        u = engine.support[int(rng.split(3 * i + 1).gen.integers(len(engine.support)))]
        fa = l2_update(prior, u, options, engine.with_alpha(1.0))
        da = action_only_update(prior, u, options, engine)
        fr = l2_update(prior, u, options, engine.with_alpha(0.0))
        dr = reward_only_update(prior, u, options, engine)
        all_equal &= np.array_equal(fa.weights, da.weights)
        all_equal &= np.array_equal(fr.weights, dr.weights)
    _report(2, all_equal, f"alpha endpoint posteriors bitwise-equal to "
                          f"dedicated paths on 20 rounds ({time.time() - t0:.0f}s)")
    assert all_equal


def test_criterion_3_importance_sampling(engine):
    t0 = time.time()
    prior = RewardPosterior.uniform_exact()
    rng = Rng(13_001)
    worst_tv = 0.0
    for i in range(10):
        options = sample_option_set(rng.split(3 * i))
        u = engine.support[int(rng.split(3 * i + 1).gen.integers(len(engine.support)))]
        exact = l2_update(prior, u, options, engine)
        cfg = replace(engine, inference="importance", n_samples=200_000)
        cfg._caches = engine._caches
        approx = l2_update(prior, u, options, cfg, rng=rng.split(3 * i + 2))
        tv = 0.5 * np.abs(exact.marginals() - approx.marginals()).sum(axis=1)
        worst_tv = max(worst_tv, float(tv.max()))
    tv_ok = worst_tv < 0.05

    # error decay consistent with 1/sqrt(n): quadrupling n should roughly
    # halve the error of the posterior-mean estimate
    options = sample_option_set(Rng(13_777))
    u = engine.support[42]
    exact_mean = l2_update(prior, u, options, engine).mean()

    def err(n, seed):
        cfg = replace(engine, inference="importance", n_samples=n)
        cfg._caches = engine._caches
        approx = l2_update(prior, u, options, cfg, rng=Rng(seed))
        return float(np.linalg.norm(approx.mean() - exact_mean))

    errs_n = [err(200_000, 20_000 + s) for s in range(20)]
    errs_4n = [err(800_000, 30_000 + s) for s in range(20)]
    ratio = float(np.median(errs_n) / np.median(errs_4n))
    ratio_ok = 1.6 <= ratio <= 2.6
    ok = tv_ok and ratio_ok
    _report(3, ok, f"IS vs exact: max marginal TV {worst_tv:.4f} (< 0.05), "
                   f"median error ratio n vs 4n = {ratio:.2f} in [1.6, 2.6] "
                   f"({time.time() - t0:.0f}s)")
    assert ok


def test_criterion_4_oracle_k_reproduction():
    t0 = time.time()
    rng = Rng(14_001)
    n_thetas, n_sets = 500, 1000
    sums = np.zeros(9)
    for i in range(n_thetas):
        theta = sample_reward(rng.split(2 * i))
        battery = heldout_battery(rng.split(2 * i + 1), n_sets)
        star = theta.array()
        for k in range(9):
            est = oracle_k_baseline(theta, k, rng.split(10_000 + 9 * i + k))
            sums[k] += battery_accuracy(battery, est, star)
    means = sums / n_thetas
    monotone = all(b >= a - 1e-12 for a, b in zip(means, means[1:]))
    k0_ok = 0.30 <= means[0] <= 0.37
    k8_ok = means[8] >= 0.99
    ok = monotone and k0_ok and k8_ok
    paper = {1: 43.0, 2: 51.5, 3: 60.2, 4: 64.7}
    comparison = ", ".join(
        f"k={k}: {100 * means[k]:.1f}% (reference {paper[k]:.1f}%)"
        for k in (1, 2, 3, 4)
    )
    _report(4, ok, "oracle-k accuracies "
                   + np.array2string(100 * means, precision=1)
                   + f"; monotone={monotone}, k0={means[0]:.3f}, k8={means[8]:.3f}. "
                   + comparison
                   + " -- reference numbers depend on the flight generator, "
                     "match within a few points is not a gate "
                   + f"({time.time() - t0:.0f}s)")
    assert ok


def test_criterion_5_directional_table1(engine, table1_games):
    t0 = time.time()
    cfgs = {
        "full": engine,
        "action_only": engine.with_alpha(1.0),
        "reward_only": engine.with_alpha(0.0),
    }
    rep = run_models(table1_games, cfgs, n_heldout=1000, seed=17)
    print()
    print(rep.to_text_table())
    full = rep.models["full"]
    act = rep.models["action_only"]
    rew = rep.models["reward_only"]
    p_full_act = paired_bootstrap(full.round_scores, act.round_scores, 10_000,
                                  Rng(55_001))
    p_full_rew = paired_bootstrap(full.round_scores, rew.round_scores, 10_000,
                                  Rng(55_002))
    sw = oracle_switch(
        table1_games,
        {"action_only": engine.with_alpha(1.0), "reward_only": engine.with_alpha(0.0)},
        n_heldout=1000,
        seed=17,
    ).models["oracle_switch"]
    beats = full.acc_mean > act.acc_mean and full.acc_mean > rew.acc_mean
    sig = p_full_act < 0.05 and p_full_rew < 0.05
    switch_ok = sw.acc_mean >= max(act.acc_mean, rew.acc_mean) - 1e-12
    ok = beats and sig and switch_ok
    _report(5, ok, f"full {100 * full.acc_mean:.1f}% vs action-only "
                   f"{100 * act.acc_mean:.1f}% (p={p_full_act:.4f}) and "
                   f"reward-only {100 * rew.acc_mean:.1f}% (p={p_full_rew:.4f}); "
                   f"oracle switch {100 * sw.acc_mean:.1f}% "
                   f"({time.time() - t0:.0f}s)")
    assert ok


def _curve_ok(values, sems, decreasing: bool) -> tuple[bool, int]:
    sign = 1.0 if decreasing else -1.0
    gaps = [(sign * (b - a), i) for i, (a, b) in enumerate(zip(values, values[1:]))]
    violations = [(g, i) for g, i in gaps if g > 0]
    if not violations:
        return True, 0
    if len(violations) > 1:
        return False, len(violations)
    g, i = violations[0]
    tolerance = math.sqrt(sems[i] ** 2 + sems[i + 1] ** 2)
    return g <= tolerance, 1


def test_criterion_6_multiturn_trend(engine):
    t0 = time.time()
    games = eval_games_from_corpus(generate_s1_games(100, engine, seed=707))
    rep = run_models(games, {"full": engine}, n_heldout=1000, seed=23)
    full = rep.models["full"]
    l2_ok, l2_viol = _curve_ok(full.curve_l2, full.curve_l2_sem, decreasing=True)
    acc_ok, acc_viol = _curve_ok(full.curve_acc, full.curve_acc_sem, decreasing=False)
    ok = l2_ok and acc_ok
    _report(6, ok, f"multi-turn trend over 100 games: "
                   f"L2 {np.array2string(full.curve_l2, precision=3)} "
                   f"({l2_viol} violations), accuracy "
                   f"{np.array2string(full.curve_acc, precision=3)} "
                   f"({acc_viol} violations) ({time.time() - t0:.0f}s)")
    assert ok


def test_criterion_7_known_action_oracle(engine, strong_bundle):
    t0 = time.time()
    # instruction-style games (nearsighted speaker), inference at alpha=0.5
    games = eval_games_from_corpus(
        generate_s1_games(91, engine.with_alpha(1.0), seed=808)
    )
    noisy = calibrate_misreading(strong_bundle.listener, games, target=0.74, seed=3)
    top1 = listener_top1_accuracy(noisy, games)
    top1_ok = 0.70 <= top1 <= 0.78
    cfg = replace(engine, listener=noisy)
    cfg._caches = dict(engine._caches)
    rep = known_action_ablation(games, cfg, n_heldout=1000, seed=17)
    full = rep.models["full"]
    skip = rep.models["known_action"]
    p = paired_bootstrap(skip.round_scores, full.round_scores, 10_000, Rng(57_001))
    improves = skip.acc_mean > full.acc_mean
    sig = p < 0.05
    ok = top1_ok and improves and sig
    _report(7, ok, f"degraded listener top-1 {100 * top1:.1f}% (~74%); skip "
                   f"{100 * skip.acc_mean:.1f}% vs full {100 * full.acc_mean:.1f}%"
                   f" (p={p:.4f}) ({time.time() - t0:.0f}s)")
    assert ok


def _rel_err(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(
        np.linalg.norm(a), np.linalg.norm(b), 1e-300
    )


def _fd(fn, x, eps=1e-5):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        xp, xm = x.copy(), x.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (fn(xp) - fn(xm)) / (2 * eps)
        it.iternext()
    return g


def test_criterion_8_training_correctness(strong_bundle):
    t0 = time.time()
    worst = 0.0
    for trial in range(25):
        corpus = generate_corpus(2, seed=80_000 + trial)
        fz = UtteranceFeaturizer.build(corpus.utterances())
        X = fz.encode_batch(corpus.utterances())
        Phi = flight_feature_matrix(
            np.stack([r.options.feature_matrix() for r in corpus])
        )
        y = np.array([r.xi_star for r in corpus])
        W = Rng(81_000 + trial).gen.normal(size=(fz.dim, 9)) * 0.4
        _, grad = listener_loss_and_grad(W, X, Phi, y)
        fd = _fd(lambda w: listener_loss_and_grad(w, X, Phi, y)[0], W)
        worst = max(worst, _rel_err(grad, fd))
    for trial in range(25):
        corpus = generate_corpus(1, seed=82_000 + trial)
        fz = UtteranceFeaturizer.build(corpus.utterances())
        batch = SpeakerBatch.build(list(corpus.rounds), fz, 2,
                                   Rng(83_000 + trial))
        g = Rng(84_000 + trial).gen
        Ws = g.normal(size=(fz.dim, 41)) * 0.3
        Wa = g.normal(size=(fz.dim, 9)) * 0.3
        l = float(g.normal()) * 0.5
        _, dWs, dWa, dl = speaker_latent_loss_and_grads(Ws, Wa, l, batch, 3.0)
        fd_s = _fd(lambda w: speaker_latent_loss_and_grads(w, Wa, l, batch, 3.0)[0], Ws)
        fd_a = _fd(lambda w: speaker_latent_loss_and_grads(Ws, w, l, batch, 3.0)[0], Wa)
        worst = max(worst, _rel_err(dWs, fd_s), _rel_err(dWa, fd_a))
    grad_ok = worst < 1e-5

    heldout = eval_games_from_corpus(generate_corpus(60, seed=555))
    top1 = listener_top1_accuracy(strong_bundle.listener, heldout)
    top1_ok = top1 >= 0.90
    ok = grad_ok and top1_ok
    _report(8, ok, f"gradient checks on 50 instances: worst relative error "
                   f"{worst:.2e} (< 1e-5); trained listener top-1 "
                   f"{100 * top1:.1f}% (>= 90%) ({time.time() - t0:.0f}s)")
    assert ok


def test_criterion_9_game_accounting(strong_bundle):
    t0 = time.time()
    cfg = strong_bundle.config(
        support=default_grammar().enumerate_utterances(1)
    )
    cfg.speaker_log_normalizers()
    states, logs = simulate_games(1000, AssistantPolicy(0.6), cfg, seed=9_001)
    accounting_ok = True
    outcome_counts = {"correct": 0, "incorrect": 0, "asked": 0}
    for s in states:
        correct = sum(1 for r in s.rounds if r.outcome == "correct")
        incorrect = sum(1 for r in s.rounds if r.outcome == "incorrect")
        asks = sum(1 for r in s.rounds if r.assistant_action == "asked")
        outcome_counts["correct"] += correct
        outcome_counts["incorrect"] += incorrect
        outcome_counts["asked"] += asks
        expected = (POINTS_CORRECT * correct + POINTS_INCORRECT * incorrect
                    + POINTS_ASK * asks)
        accounting_ok &= s.score == expected and len(s.rounds) == 6
    mix_ok = all(v > 0 for v in outcome_counts.values())

    replay_ok = True
    for state, log in zip(states, logs):
        replayed = replay_log(log, cfg, strict=True)
        replay_ok &= json.dumps(replayed.to_dict()) == json.dumps(state.to_dict())
    ok = accounting_ok and replay_ok and mix_ok
    _report(9, ok, f"1000 games: score identity exact, outcome mix "
                   f"{outcome_counts}, log replay byte-identical={replay_ok} "
                   f"({time.time() - t0:.0f}s)")
    assert ok
