import itertools
import math

import numpy as np
import pytest

from summax.envs import ScriptedEnvironment, StochasticEnvironment
from summax.harness import (
    AGGREGATE_COLUMNS,
    RunTrace,
    aggregate,
    best_fixed_subset,
    export_csv,
    figure_setup,
    fixed_comparator,
    gamma_regret,
    read_csv,
    run_episode,
    run_replicas,
)
from summax.policies import CascadeUCB, ComBand, Exp3, MSExp3
from summax.setfn import SumMaxFunction, tabulate
from summax.surrogate import approximation_ratio


def small_pair(horizon=200, k=6, m=2):
    env = StochasticEnvironment(n_arms=k, n_slots=m, horizon=horizon)
    pol = MSExp3(n_arms=k, n_draws=m, horizon=horizon, reward_range=(0, 1))
    return pol, env


class TestRun:
    def test_deterministic(self, tmp_path):
        pol, env = small_pair()
        a = export_csv(run_episode(pol, env, 200, seed=3), tmp_path / "a.csv")
        b = export_csv(run_episode(pol, env, 200, seed=3), tmp_path / "b.csv")
        assert a.read_bytes() == b.read_bytes()

    def test_empty_trace(self, tmp_path):
        pol, env = small_pair()
        tr = run_episode(pol, env, 0, seed=0)
        assert len(tr) == 0
        path = export_csv(tr, tmp_path / "e.csv")
        assert path.read_text().strip().count("\n") == 0

    def test_prefix_sums(self):
        pol, env = small_pair()
        tr = run_episode(pol, env, 200, seed=1)
        assert np.array_equal(tr.cum_reward, np.cumsum(tr.reward))
        assert np.array_equal(tr.cum_profit, np.cumsum(tr.reward - tr.empty_value - tr.paid_cost))

    def test_seed_isolation(self):
        pol, env = small_pair()
        solo = run_replicas(pol, env, [4], 200)[0]
        batch = run_replicas(pol, env, [1, 4, 8], 200)[1]
        assert solo.seed == batch.seed == 4
        np.testing.assert_array_equal(solo.actions, batch.actions)
        np.testing.assert_array_equal(solo.reward, batch.reward)

    def test_latent_independent_of_policy(self):
        _, env = small_pair()
        a = run_episode(MSExp3(n_arms=6, n_draws=2, horizon=200, reward_range=(0, 1)), env, 200, 2)
        b = run_episode(CascadeUCB(n_arms=6, n_slots=2), env, 200, 2)
        e1 = env.__class__(**env.get_params()).reset([2])
        e2 = env.__class__(**env.get_params()).reset([2])
        np.testing.assert_array_equal(e1.attract_, e2.attract_)
        assert len(a) == len(b) == 200

    def test_exp3_lockstep_through_harness(self):
        env = StochasticEnvironment(n_arms=10, n_slots=1, horizon=1000)
        a = run_episode(MSExp3(n_arms=10, n_draws=1, horizon=1000, reward_range=(0, 1)), env, 1000, 5)
        b = run_episode(Exp3(n_arms=10, horizon=1000, reward_range=(0, 1)), env, 1000, 5)
        np.testing.assert_array_equal(a.actions, b.actions)

    def test_all_policies_complete(self):
        env, policies, horizon = figure_setup("worstcase", 0.002)
        for pol in policies:
            traces = run_replicas(pol, env, [0, 1], horizon)
            agg = aggregate(traces)
            assert np.all(np.isfinite(agg.ci_halfwidth))


class TestRegret:
    def test_gamma_examples(self):
        assert approximation_ratio(3, 3) == pytest.approx(19 / 27)
        assert approximation_ratio(1, 1) == 1.0
        assert approximation_ratio(1000, 1000) == pytest.approx(1 - 1 / math.e, abs=1e-3)
        assert approximation_ratio(50, 50) > 1 - 1 / math.e

    def test_series_definition(self):
        pol, env = small_pair()
        tr = run_episode(pol, env, 200, seed=0)
        e = StochasticEnvironment(**env.get_params()).reset([0])
        cmp = fixed_comparator(e, 0, [0, 1])
        g = approximation_ratio(2, 2)
        mask = 0b11
        hit = ((e._bits[0] & mask) != 0).astype(float)
        expected = g * np.cumsum(hit) - np.cumsum(tr.reward)
        np.testing.assert_allclose(gamma_regret(tr, cmp), expected)

    def test_best_fixed_subset_exhaustive(self):
        _, env = small_pair(horizon=300)
        e = env.reset([7])
        best = best_fixed_subset(e, 0, 2)
        scores = {}
        for k in (1, 2):
            for combo in itertools.combinations(range(6), k):
                rhat, cost = e.per_round_values(0, sum(1 << i for i in combo))
                scores[combo] = approximation_ratio(k, 2) * rhat.sum() - 2 / k * cost.sum()
        assert best.size <= 2 and not best.heuristic
        combo = tuple(i for i in range(6) if best.mask >> i & 1)
        assert scores[combo] == pytest.approx(max(scores.values()))

    def test_unconstrained_flag(self):
        _, env = small_pair(horizon=100)
        e = env.reset([0])
        assert best_fixed_subset(e, 0, 2, max_size=None).size >= 1

    def test_greedy_fallback(self):
        e = StochasticEnvironment(n_arms=22, n_slots=2, horizon=50).reset([0])
        best = best_fixed_subset(e, 0, 2)
        assert best.heuristic and 1 <= best.size <= 2

    def test_empty_comparator_rejected(self):
        _, env = small_pair()
        with pytest.raises(ValueError):
            fixed_comparator(env.reset([0]), 0, [])

    def test_shift_invariance(self):
        rng = np.random.default_rng(0)
        v = rng.random((2, 4))
        base = tabulate(SumMaxFunction(v, 0.0))
        horizon = 150

        def script(offset):
            table = {"type": "table", "L": 4, "values": (base.table + offset).tolist()}
            return {"functions": {"f": table}, "rounds": [{"fn": "f"}] * horizon}

        out = []
        for offset in (0.0, 3.5):
            env = ScriptedEnvironment(script=script(offset)).reset([0])
            lo, hi = env.reward_range
            pol = MSExp3(n_arms=4, n_draws=2, horizon=horizon, reward_range=(lo, hi)).reset([0])
            probs = []
            for t in range(horizon):
                sel = pol.select()
                pol.update(sel, env.step(t, sel).feedback)
                probs.append(pol.probs_[0].copy())
            tr = run_episode(MSExp3(n_arms=4, n_draws=2, horizon=horizon, reward_range=(lo, hi)),
                             ScriptedEnvironment(script=script(offset)), horizon, 0)
            cmp = fixed_comparator(env, 0, [0, 2])
            out.append((np.array(probs), gamma_regret(tr, cmp)))
        np.testing.assert_allclose(out[0][0], out[1][0], atol=1e-12)
        np.testing.assert_allclose(out[0][1], out[1][1], atol=1e-9)

    def test_sublinear_small(self):
        means = []
        for horizon in (300, 3000):
            pol, env = small_pair(horizon=horizon, k=8, m=2)
            seeds = list(range(10))
            traces = run_replicas(pol, env, seeds, horizon)
            e = StochasticEnvironment(**{**env.get_params(), "horizon": horizon}).reset(seeds)
            means.append(np.mean([gamma_regret(t, best_fixed_subset(e, t.replica, 2))[-1] / horizon
                                  for t in traces]))
        assert means[1] < means[0]


def make_trace(reward, policy="p", seed=0):
    n = len(reward)
    return RunTrace(policy, seed, "h", 1, np.zeros(n), reward, np.zeros(n), np.zeros(n))


class TestAggregate:
    def test_identical(self):
        agg = aggregate([make_trace([1.0, 2.0]), make_trace([1.0, 2.0])])
        np.testing.assert_array_equal(agg.ci_halfwidth, 0.0)

    def test_two_series(self):
        agg = aggregate([make_trace([0.0]), make_trace([2.0])])
        assert agg.mean_cum_reward[0] == 1.0
        assert agg.ci_halfwidth[0] == pytest.approx(1.96)

    def test_divisor(self):
        rng = np.random.default_rng(0)
        rows = rng.random((35, 5))
        agg = aggregate([make_trace(r) for r in rows])
        cum = np.cumsum(rows, axis=1)
        np.testing.assert_allclose(agg.ci_halfwidth, 1.96 * cum.std(axis=0, ddof=1) / math.sqrt(35))

    def test_preconditions(self):
        with pytest.raises(ValueError):
            aggregate([make_trace([1.0])])
        with pytest.raises(ValueError):
            aggregate([make_trace([1.0]), make_trace([1.0, 2.0])])


class TestCsv:
    def test_aggregate_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        agg = aggregate([make_trace(rng.random(7) / 3) for _ in range(4)])
        cols = read_csv(export_csv(agg, tmp_path / "a.csv"))
        assert tuple(cols) == AGGREGATE_COLUMNS and len(cols) == 5
        np.testing.assert_allclose(cols["mean_cum_reward"], agg.mean_cum_reward, atol=1e-12)
        np.testing.assert_allclose(cols["ci_halfwidth"], agg.ci_halfwidth, atol=1e-12)

    def test_trace_round_trip(self, tmp_path):
        pol, env = small_pair(horizon=50)
        tr = run_episode(pol, env, 50, seed=0)
        cols = read_csv(export_csv(tr, tmp_path / "t.csv"))
        np.testing.assert_allclose(cols["cum_profit"], tr.cum_profit, atol=1e-12)
        np.testing.assert_array_equal(cols["actions"], tr.actions)

    def test_comband_trace(self, tmp_path):
        env = StochasticEnvironment(n_arms=5, n_slots=2, horizon=40)
        tr = run_episode(ComBand(n_arms=5, n_slots=2, horizon=40), env, 40, seed=0)
        assert np.all(np.array([bin(a).count("1") for a in tr.actions]) == 2)
