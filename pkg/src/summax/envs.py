"""Oblivious reward/cost generators.

An environment fixes its whole reward and cost sequence at :meth:`reset`, as a
function of its parameters and the replica seeds only. ``step`` returns a
:class:`RoundOutcome`; policies only ever see ``outcome.feedback``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_positive_int, check_seeds
from .policies.base import Feedback, Selection
from .setfn import SumMaxFunction, TabulatedSetFunction, function_from_dict


def env_seed(seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), 0])


@dataclass
class RoundOutcome:
    reward: np.ndarray
    costs: np.ndarray
    click_position: np.ndarray | None
    latent: dict

    @property
    def feedback(self) -> Feedback:
        return Feedback(reward=self.reward, costs=self.costs, click_position=self.click_position)


class BaseEnvironment(BaseEstimator):
    """Common protocol; subclasses fill the latent sequence in ``reset``."""

    kind = "base"
    reveals_all_costs = False

    def reset(self, seeds=None):
        raise NotImplementedError

    @property
    def n_replicas(self) -> int:
        return len(self.seeds_)

    def _check_round(self, t: int) -> None:
        if not hasattr(self, "seeds_"):
            raise RuntimeError("environment must be reset before stepping")
        if not 0 <= t < self.horizon_:
            raise IndexError(f"round {t} outside horizon {self.horizon_}")

    def empty_value(self, t: int) -> np.ndarray:
        return np.zeros(self.n_replicas)

    def paid_cost(self, t: int, mask: np.ndarray) -> np.ndarray:
        return np.zeros(mask.shape[0])

    def _revealed(self, costs: np.ndarray, mask: np.ndarray) -> np.ndarray:
        if self.reveals_all_costs:
            return costs
        return np.where(mask, costs, np.nan)


class AttractionEnvironment(BaseEnvironment):
    """Each arm k attracts independently with probability theta_k per round;
    the reward of a set is 1 iff one of its arms attracts."""

    reward_range = (0.0, 1.0)

    def _thetas(self, rng, n_arms, n_slots):
        raise NotImplementedError

    def _corrupt(self, attract, good):
        return attract

    def reset(self, seeds=None):
        k = check_positive_int(self.n_arms, "n_arms")
        m = check_positive_int(self.n_slots, "n_slots")
        t = check_positive_int(self.horizon, "horizon")
        if m > k:
            raise ValueError("n_slots cannot exceed n_arms")
        self.seeds_ = check_seeds(seeds)
        self.horizon_ = t
        thetas, goods, attracts = [], [], []
        for s in self.seeds_:
            rng = np.random.default_rng(env_seed(s))
            good = np.zeros(k, dtype=bool)
            good[rng.choice(k, size=m, replace=False)] = True
            theta = self._thetas(rng, good)
            attract = rng.random((t, k)) < theta
            thetas.append(theta)
            goods.append(good)
            attracts.append(self._corrupt(attract, good))
        self.theta_ = np.stack(thetas)
        self.good_arms_ = np.stack(goods)
        self.attract_ = np.stack(attracts)
        self._bits = self.attract_.astype(np.int64) @ (1 << np.arange(k, dtype=np.int64))
        return self

    def step(self, t: int, selection: Selection) -> RoundOutcome:
        self._check_round(t)
        attracted = self.attract_[:, t, :]
        mask = selection.mask
        reward = (mask & attracted).any(axis=1).astype(float)
        click = None
        if selection.order is not None:
            hit = np.take_along_axis(attracted, selection.order, axis=1)
            click = np.where(hit.any(axis=1), hit.argmax(axis=1), -1)
        costs = self._revealed(np.zeros(mask.shape), mask)
        return RoundOutcome(reward, costs, click, {"attracted": attracted})

    def cumulative_values(self, replica: int, masks) -> tuple[np.ndarray, np.ndarray]:
        """Total reward (minus the empty-set value) and cost of fixed subsets."""
        masks = np.asarray(masks, dtype=np.int64)
        bits, counts = np.unique(self._bits[replica], return_counts=True)
        hits = (bits[None, :] & masks[:, None]) != 0
        return hits.astype(float) @ counts, np.zeros(masks.shape)

    def per_round_values(self, replica: int, mask: int) -> tuple[np.ndarray, np.ndarray]:
        rhat = ((self._bits[replica] & int(mask)) != 0).astype(float)
        return rhat, np.zeros(self.horizon_)


class StochasticEnvironment(AttractionEnvironment):
    kind = "stochastic"

    def __init__(self, n_arms=20, n_slots=3, horizon=1000, p_good=0.3, p_bad=0.1):
        self.n_arms = n_arms
        self.n_slots = n_slots
        self.horizon = horizon
        self.p_good = p_good
        self.p_bad = p_bad

    def _thetas(self, rng, good):
        if not 0.0 <= self.p_bad <= self.p_good <= 1.0:
            raise ValueError("need 0 <= p_bad <= p_good <= 1")
        return np.where(good, self.p_good, self.p_bad)


class CorruptedEnvironment(StochasticEnvironment):
    """Stochastic, except good arms never attract during the first floor(sqrt(T)) rounds."""

    kind = "corrupted"

    @property
    def corruption_rounds(self) -> int:
        return math.isqrt(int(self.horizon))

    def _corrupt(self, attract, good):
        attract[: self.corruption_rounds, good] = False
        return attract


class WorstCaseEnvironment(AttractionEnvironment):
    """Gaussian attraction probabilities around 1/2 with a small lift on the good arms."""

    kind = "worst_case"

    def __init__(self, n_arms=20, n_slots=3, horizon=1000, log_base="e"):
        self.n_arms = n_arms
        self.n_slots = n_slots
        self.horizon = horizon
        self.log_base = log_base

    @property
    def sigma2(self) -> float:
        if self.log_base == "e":
            log_t = math.log(self.horizon)
        elif self.log_base in (10, "10"):
            log_t = math.log10(self.horizon)
        else:
            raise ValueError("log_base must be 'e' or 10")
        return 1.0 / (192.0 + 96.0 * log_t)

    @property
    def epsilon(self) -> float:
        return math.sqrt(self.sigma2) * math.sqrt(
            self.n_arms * self.n_slots / (8.0 * self.horizon)
        )

    def _thetas(self, rng, good):
        if self.n_arms * self.n_slots > 8 * self.horizon:
            raise ValueError("worst-case environment needs K*M <= 8T")
        x = rng.normal(0.5, math.sqrt(self.sigma2), size=good.shape)
        return np.clip(x + self.epsilon * good, 0.0, 1.0)


class _FunctionSequenceEnvironment(BaseEnvironment):
    """Rewards from a per-round sequence of set functions with per-arm costs."""

    def _setup(self, functions: list, schedule: np.ndarray, costs: np.ndarray, cost_cap: float):
        n = {f.num_arms for f in functions}
        if len(n) != 1:
            raise ValueError("all functions must share the same number of arms")
        self.n_arms_ = n.pop()
        if costs.shape[-1] != self.n_arms_:
            raise ValueError("cost vectors do not match the number of arms")
        if np.any(costs < 0) or np.any(costs > cost_cap):
            raise ValueError(f"costs must lie in [0, {cost_cap}]")
        self.functions_ = functions
        self.schedule_ = schedule  # (R, T) function index per round
        self.costs_ = costs  # (R, T, L)
        self.cost_cap_ = cost_cap
        lows, highs = [], []
        for f in functions:
            if isinstance(f, SumMaxFunction):
                lows.append(f.empty_value)
                highs.append(float(f.values.max(axis=1).sum()))
            else:
                lows.append(float(f.table.min()))
                highs.append(float(f.table.max()))
        lo, hi = min(lows), max(highs)
        self.reward_range = (lo, hi if hi > lo else lo + 1.0)

    def _evaluate(self, fn_index: int, masks: np.ndarray) -> np.ndarray:
        f = self.functions_[fn_index]
        if isinstance(f, SumMaxFunction):
            return f.evaluate_masks(masks)
        bits = masks.astype(np.int64) @ (1 << np.arange(f.num_arms, dtype=np.int64))
        return f.table[bits]

    def _empty(self, fn_index: int) -> float:
        f = self.functions_[fn_index]
        return f.empty_value if isinstance(f, SumMaxFunction) else float(f.table[0])

    def step(self, t: int, selection: Selection) -> RoundOutcome:
        self._check_round(t)
        mask = selection.mask
        if mask.shape[1] != self.n_arms_:
            raise ValueError("selection does not match the number of arms")
        reward = np.empty(mask.shape[0])
        for r in range(mask.shape[0]):
            reward[r] = self._evaluate(int(self.schedule_[r, t]), mask[r : r + 1])[0]
        costs = self.costs_[:, t, :]
        latent = {"function": self.schedule_[:, t], "costs": costs}
        return RoundOutcome(reward, self._revealed(costs, mask), None, latent)

    def empty_value(self, t: int) -> np.ndarray:
        return np.array([self._empty(int(i)) for i in self.schedule_[:, t]])

    def paid_cost(self, t: int, mask: np.ndarray) -> np.ndarray:
        return np.where(mask, self.costs_[:, t, :], 0.0).sum(axis=1)

    def _subset_members(self, masks: np.ndarray) -> np.ndarray:
        return ((masks[:, None] >> np.arange(self.n_arms_)) & 1).astype(bool)

    def cumulative_values(self, replica: int, masks) -> tuple[np.ndarray, np.ndarray]:
        masks = np.asarray(masks, dtype=np.int64)
        members = self._subset_members(masks)
        fn_ids, counts = np.unique(self.schedule_[replica], return_counts=True)
        total = np.zeros(masks.shape)
        for i, c in zip(fn_ids, counts):
            total += c * (self._evaluate(int(i), members) - self._empty(int(i)))
        cost_total = members.astype(float) @ self.costs_[replica].sum(axis=0)
        return total, cost_total

    def per_round_values(self, replica: int, mask: int) -> tuple[np.ndarray, np.ndarray]:
        members = self._subset_members(np.array([mask]))
        values = {int(i): self._evaluate(int(i), members)[0] - self._empty(int(i))
                  for i in np.unique(self.schedule_[replica])}
        rhat = np.array([values[int(i)] for i in self.schedule_[replica]])
        cost = self.costs_[replica] @ members[0].astype(float)
        return rhat, cost


class ScriptedEnvironment(_FunctionSequenceEnvironment):
    """Replays a fixed script of (function id, cost vector) rounds.

    Script format::

        {"functions": {id: fnspec, ...} or [fnspec, ...],
         "rounds": [{"fn": id, "costs": [...]}, ...],
         "cost_cap": C}

    with ``fnspec`` as accepted by :func:`summax.setfn.function_from_dict`.
    Replicas all see the same script; seeds are irrelevant.
    """

    kind = "scripted"

    def __init__(self, script=None, path=None):
        self.script = script
        self.path = path

    def _load(self) -> dict:
        if self.script is not None:
            return self.script
        if self.path is None:
            raise ValueError("scripted environment needs a script or a path")
        with open(Path(self.path)) as fh:
            return json.load(fh)

    def reset(self, seeds=None):
        script = self._load()
        try:
            fn_specs = script["functions"]
            rounds = script["rounds"]
        except (KeyError, TypeError) as exc:
            raise ValueError("malformed script: needs 'functions' and 'rounds'") from exc
        if not rounds:
            raise ValueError("malformed script: no rounds")
        if isinstance(fn_specs, list):
            fn_specs = dict(enumerate(fn_specs))
        if not isinstance(fn_specs, dict) or not fn_specs:
            raise ValueError("malformed script: 'functions' must be a non-empty object or list")
        ids = list(fn_specs)
        functions = [function_from_dict(fn_specs[i]) for i in ids]
        lookup = {str(i): n for n, i in enumerate(ids)}
        n_arms = functions[0].num_arms
        schedule, costs = [], []
        for rec in rounds:
            key = str(rec.get("fn"))
            if key not in lookup:
                raise ValueError(f"malformed script: unknown function id {rec.get('fn')!r}")
            schedule.append(lookup[key])
            costs.append(rec.get("costs", [0.0] * n_arms))
        costs = np.asarray(costs, dtype=float)
        self.seeds_ = check_seeds(seeds)
        r = len(self.seeds_)
        self.horizon_ = len(rounds)
        cap = float(script.get("cost_cap", 1.0))
        self._setup(
            functions,
            np.tile(np.asarray(schedule), (r, 1)),
            np.tile(costs[None], (r, 1, 1)),
            cap,
        )
        return self

    @property
    def horizon(self) -> int:
        return self.horizon_


class FacilityEnvironment(_FunctionSequenceEnvironment):
    """Sum-max rewards with per-arm opening costs; every cost is revealed.

    ``function`` is a fixed set function; alternatively ``functions`` gives a
    pool that is visited ``"cycle"`` or ``"random"`` per round. When neither
    is given, a random sum-max function with ``n_users`` rows of uniform
    values is drawn per replica. ``cost_model`` is ``{"kind": "uniform"}``
    (i.i.d. uniform on [0, cost_cap]) or ``{"kind": "constant", "costs": [...]}``.
    """

    kind = "facility"
    reveals_all_costs = True

    def __init__(self, n_arms=10, horizon=1000, cost_cap=1.0, cost_model=None,
                 function=None, functions=None, schedule="cycle", n_users=5):
        self.n_arms = n_arms
        self.horizon = horizon
        self.cost_cap = cost_cap
        self.cost_model = cost_model
        self.function = function
        self.functions = functions
        self.schedule = schedule
        self.n_users = n_users

    def reset(self, seeds=None):
        k = check_positive_int(self.n_arms, "n_arms")
        t = check_positive_int(self.horizon, "horizon")
        self.seeds_ = check_seeds(seeds)
        self.horizon_ = t
        model = self.cost_model or {"kind": "uniform"}
        pool = self.functions if self.functions is not None else (
            [self.function] if self.function is not None else None)
        if pool is not None:
            pool = [function_from_dict(f) if isinstance(f, dict) else f for f in pool]
        functions, schedules, all_costs = [], [], []
        for s in self.seeds_:
            rng = np.random.default_rng(env_seed(s))
            if pool is None:
                base = len(functions)
                functions.append(SumMaxFunction(rng.random((self.n_users, k)), 0.0))
                sched = np.full(t, base)
            else:
                base = len(functions)
                functions.extend(pool)
                if self.schedule == "cycle":
                    sched = base + np.arange(t) % len(pool)
                elif self.schedule == "random":
                    sched = base + rng.integers(len(pool), size=t)
                else:
                    raise ValueError(f"unknown schedule {self.schedule!r}")
            if model["kind"] == "uniform":
                costs = rng.random((t, k)) * self.cost_cap
            elif model["kind"] == "constant":
                costs = np.tile(np.asarray(model["costs"], dtype=float), (t, 1))
            else:
                raise ValueError(f"unknown cost model {model['kind']!r}")
            schedules.append(sched)
            all_costs.append(costs)
        self._setup(functions, np.stack(schedules), np.stack(all_costs), float(self.cost_cap))
        if pool is None:
            # random functions differ per seed; the declared range must not
            self.reward_range = (0.0, float(self.n_users))
        if self.n_arms_ != k:
            raise ValueError("function size does not match n_arms")
        return self


ENVIRONMENTS = {
    "stochastic": StochasticEnvironment,
    "corrupted": CorruptedEnvironment,
    "worst_case": WorstCaseEnvironment,
    "scripted": ScriptedEnvironment,
    "facility": FacilityEnvironment,
}


def make_environment(kind: str, **params) -> BaseEnvironment:
    try:
        cls = ENVIRONMENTS[kind]
    except KeyError:
        raise ValueError(f"unknown environment kind {kind!r}") from None
    return cls(**params)
