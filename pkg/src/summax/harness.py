"""Simulation loop, profit and gamma-regret metrics, seed aggregation, CSV export."""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import clone

from ._validation import as_mask, check_seeds
from .envs import BaseEnvironment, make_environment
from .policies import POLICIES, BasePolicy
from .surrogate import approximation_ratio

Z_95 = 1.96
TRACE_COLUMNS = ("t", "actions", "reward", "empty_value", "paid_cost", "cum_reward", "cum_profit")
AGGREGATE_COLUMNS = ("t", "policy", "mean_cum_reward", "ci_halfwidth", "mean_cum_profit")
EXHAUSTIVE_ARM_LIMIT = 20


def config_hash(config) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RunTrace:
    """Per-round record of one (policy, environment, seed) replica.

    ``actions`` holds the played set as a bitmask (bit i for arm i). Profit
    is ``reward - empty_value - paid_cost``.
    """

    policy: str
    seed: int
    config_hash: str
    n_draws: int
    actions: np.ndarray
    reward: np.ndarray
    empty_value: np.ndarray
    paid_cost: np.ndarray
    replica: int = 0

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=np.int64)
        for name in ("reward", "empty_value", "paid_cost"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    def __len__(self):
        return len(self.reward)

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, len(self) + 1)

    @property
    def profit(self) -> np.ndarray:
        return self.reward - self.empty_value - self.paid_cost

    @property
    def cum_reward(self) -> np.ndarray:
        return np.cumsum(self.reward)

    @property
    def cum_profit(self) -> np.ndarray:
        return np.cumsum(self.profit)

    def columns(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TRACE_COLUMNS}


def _n_draws(policy: BasePolicy) -> int:
    for name in ("n_draws_", "n_draws", "n_slots"):
        value = getattr(policy, name, None)
        if value is not None:
            return int(value)
    return 1


def _bitmask(mask: np.ndarray) -> np.ndarray:
    return mask.astype(np.int64) @ (1 << np.arange(mask.shape[1], dtype=np.int64))


def run_replicas(policy: BasePolicy, env: BaseEnvironment, seeds, horizon: int | None = None,
                 config=None) -> list[RunTrace]:
    """Drive fresh copies of ``policy`` and ``env`` for every seed in lockstep.

    Replica ``r`` only consumes randomness derived from ``seeds[r]``, so its
    trace does not depend on which other seeds run alongside it.
    """
    seeds = check_seeds(seeds)
    policy = clone(policy)
    env = clone(env)
    if horizon is not None:
        for est in (policy, env):
            if "horizon" in est.get_params():
                est.set_params(horizon=horizon)
    env.reset(seeds)
    policy.reset(seeds)
    n_rounds = env.horizon_ if horizon is None else int(horizon)
    n_rep = len(seeds)
    actions = np.zeros((n_rep, n_rounds), dtype=np.int64)
    reward = np.zeros((n_rep, n_rounds))
    empty = np.zeros((n_rep, n_rounds))
    paid = np.zeros((n_rep, n_rounds))
    for t in range(n_rounds):
        selection = policy.select()
        outcome = env.step(t, selection)
        policy.update(selection, outcome.feedback)
        actions[:, t] = _bitmask(selection.mask)
        reward[:, t] = outcome.reward
        empty[:, t] = env.empty_value(t)
        paid[:, t] = env.paid_cost(t, selection.mask)
    digest = config_hash(config if config is not None else
                         {"policy": policy.get_params(), "env": env.get_params()})
    m = _n_draws(policy)
    return [
        RunTrace(policy.name, s, digest, m, actions[r], reward[r], empty[r], paid[r], replica=r)
        for r, s in enumerate(seeds)
    ]


def run_episode(policy: BasePolicy, env: BaseEnvironment, horizon: int | None = None,
                seed: int = 0, config=None) -> RunTrace:
    if horizon == 0:
        return RunTrace(getattr(policy, "name", "policy"), int(seed), config_hash(config or {}),
                        _n_draws(policy), [], [], [], [])
    return run_replicas(policy, env, [seed], horizon, config)[0]


def _run_job(job):
    policy, env, seeds, horizon, config = job
    return run_replicas(policy, env, seeds, horizon, config)


def run_grid(policies: list[BasePolicy], env: BaseEnvironment, seeds, horizon=None, config=None,
             workers: int | None = None) -> dict[str, list[RunTrace]]:
    """Run every policy on every seed. ``workers > 1`` spreads policies over processes."""
    workers = workers or os.cpu_count() or 1
    jobs = [(p, env, check_seeds(seeds), horizon, config) for p in policies]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    return {traces[0].policy: traces for traces in results if traces}


@dataclass
class Comparator:
    """A fixed nonempty subset with its per-round values r_t(S) - r_t(empty) and costs."""

    mask: int
    size: int
    rhat: np.ndarray
    cost: np.ndarray
    heuristic: bool = False


def _candidate_masks(n_arms: int, max_size: int | None) -> np.ndarray:
    limit = n_arms if max_size is None else min(max_size, n_arms)
    if limit == n_arms:
        masks = np.arange(1, 1 << n_arms, dtype=np.int64)
        return masks
    out = []
    for k in range(1, limit + 1):
        for combo in itertools.combinations(range(n_arms), k):
            out.append(sum(1 << i for i in combo))
    return np.asarray(out, dtype=np.int64)


def _popcount(masks: np.ndarray) -> np.ndarray:
    return np.array([bin(int(m)).count("1") for m in masks])


def _comparator_score(env, replica, masks, n_draws, gamma):
    value, cost = env.cumulative_values(replica, masks)
    sizes = _popcount(masks)
    g = gamma if gamma is not None else np.array([approximation_ratio(s, n_draws) for s in sizes])
    return g * value - n_draws / sizes * cost


def best_fixed_subset(env: BaseEnvironment, replica: int, n_draws: int,
                      max_size: int | None = -1, gamma: float | None = None) -> Comparator:
    """Maximize the comparator side of the gamma-regret over fixed nonempty subsets.

    ``max_size=-1`` restricts to ``|S| <= n_draws``; ``None`` lifts the
    restriction. Enumeration is exhaustive up to 20 arms, greedy beyond
    (flagged as heuristic).
    """
    n_arms = env.n_arms_ if hasattr(env, "n_arms_") else env.n_arms
    if max_size == -1:
        max_size = n_draws
    heuristic = n_arms > EXHAUSTIVE_ARM_LIMIT
    if not heuristic:
        masks = _candidate_masks(n_arms, max_size)
        best = int(masks[np.argmax(_comparator_score(env, replica, masks, n_draws, gamma))])
    else:
        limit = n_arms if max_size is None else max_size
        best, best_score = 0, -math.inf
        current = 0
        for _ in range(limit):
            options = np.array([current | (1 << i) for i in range(n_arms) if not current >> i & 1])
            scores = _comparator_score(env, replica, options, n_draws, gamma)
            j = int(np.argmax(scores))
            current = int(options[j])
            if scores[j] > best_score:
                best, best_score = current, float(scores[j])
    rhat, cost = env.per_round_values(replica, best)
    return Comparator(best, bin(best).count("1"), rhat, cost, heuristic)


def fixed_comparator(env: BaseEnvironment, replica: int, subset) -> Comparator:
    n_arms = env.n_arms_ if hasattr(env, "n_arms_") else env.n_arms
    mask = as_mask(subset, n_arms)
    if mask == 0:
        raise ValueError("comparator subset must be nonempty")
    rhat, cost = env.per_round_values(replica, mask)
    return Comparator(mask, bin(mask).count("1"), rhat, cost)


def gamma_regret(trace: RunTrace, comparator: Comparator, gamma: float | None = None) -> np.ndarray:
    """gamma * sum r_hat(S) - (M/|S|) sum c(S) - realized cumulative profit."""
    if len(comparator.rhat) != len(trace):
        raise ValueError("comparator and trace lengths differ")
    m = trace.n_draws
    if gamma is None:
        gamma = approximation_ratio(comparator.size, m)
    return (gamma * np.cumsum(comparator.rhat)
            - m / comparator.size * np.cumsum(comparator.cost)
            - trace.cum_profit)


def mean_and_halfwidth(rows) -> tuple[np.ndarray, np.ndarray]:
    rows = np.asarray(rows, dtype=float)
    if rows.shape[0] < 2:
        raise ValueError("need at least two series")
    std = rows.std(axis=0, ddof=1)
    return rows.mean(axis=0), Z_95 * std / math.sqrt(rows.shape[0])


@dataclass
class Aggregate:
    policy: str
    t: np.ndarray
    mean_cum_reward: np.ndarray
    ci_halfwidth: np.ndarray
    mean_cum_profit: np.ndarray
    n_traces: int = 0
    extra: dict = field(default_factory=dict)

    def final(self) -> tuple[float, float]:
        return float(self.mean_cum_reward[-1]), float(self.ci_halfwidth[-1])


def aggregate(traces: list[RunTrace]) -> Aggregate:
    if len(traces) < 2:
        raise ValueError("aggregate needs at least two traces")
    if len({len(tr) for tr in traces}) != 1:
        raise ValueError("traces must have equal length")
    mean_r, half = mean_and_halfwidth([tr.cum_reward for tr in traces])
    mean_p, _ = mean_and_halfwidth([tr.cum_profit for tr in traces])
    return Aggregate(traces[0].policy, traces[0].t, mean_r, half, mean_p, len(traces))


def export_csv(obj, path) -> Path:
    """Write an :class:`Aggregate`, a list of them, or a :class:`RunTrace` to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if isinstance(obj, RunTrace):
            writer.writerow(TRACE_COLUMNS)
            cols = obj.columns()
            for i in range(len(obj)):
                writer.writerow([_fmt(cols[c][i]) for c in TRACE_COLUMNS])
        else:
            aggs = [obj] if isinstance(obj, Aggregate) else list(obj)
            writer.writerow(AGGREGATE_COLUMNS)
            for agg in aggs:
                for i in range(len(agg.t)):
                    writer.writerow([int(agg.t[i]), agg.policy, _fmt(agg.mean_cum_reward[i]),
                                     _fmt(agg.ci_halfwidth[i]), _fmt(agg.mean_cum_profit[i])])
    return path


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def read_csv(path) -> dict[str, list]:
    """Column-oriented read of any file written by :func:`export_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = {name: [] for name in header}
        for row in reader:
            for name, value in zip(header, row):
                cols[name].append(value if name == "policy" else float(value))
    return cols


FIGURES = {"stochastic": "stochastic", "corrupted": "corrupted", "worstcase": "worst_case"}
FIGURE_POLICIES = ("msexp3", "cascade_ucb", "cascade_kl", "comband")
FULL_HORIZON = 100_000
FULL_ARMS = 20
FULL_SLOTS = 3
FULL_SEEDS = 35


def figure_setup(figure: str, scale: float = 0.2) -> tuple[BaseEnvironment, list[BasePolicy], int]:
    """Environment and the four compared policies for one experiment panel."""
    if figure not in FIGURES:
        raise ValueError(f"unknown figure {figure!r}; choose from {sorted(FIGURES)}")
    if not 0 < scale <= 1:
        raise ValueError("scale must lie in (0, 1]")
    horizon = int(round(FULL_HORIZON * scale))
    k, m = FULL_ARMS, FULL_SLOTS
    env = make_environment(FIGURES[figure], n_arms=k, n_slots=m, horizon=horizon)
    lo_hi = (0.0, 1.0)
    policies = [
        POLICIES["msexp3"](n_arms=k, n_draws=m, horizon=horizon, reward_range=lo_hi),
        POLICIES["cascade_ucb"](n_arms=k, n_slots=m),
        POLICIES["cascade_kl"](n_arms=k, n_slots=m),
        POLICIES["comband"](n_arms=k, n_slots=m, horizon=horizon, reward_range=lo_hi),
    ]
    return env, policies, horizon


def reproduce_figure(figure: str, scale: float = 0.2, n_seeds: int = FULL_SEEDS, base_seed: int = 0,
                     workers: int | None = None) -> dict[str, Aggregate]:
    env, policies, horizon = figure_setup(figure, scale)
    seeds = list(range(base_seed, base_seed + n_seeds))
    config = {"figure": figure, "scale": scale, "seeds": seeds}
    grid = run_grid(policies, env, seeds, horizon, config, workers)
    return {name: aggregate(traces) for name, traces in grid.items()}


def write_metadata(path, config: dict, seeds, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"config": config, "seeds": list(seeds), "config_hash": config_hash(config)}
    if extra:
        payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str))
    return path
