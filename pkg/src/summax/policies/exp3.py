"""Exponential-weights policies over arms: MSExp3, its facility-location wrapper
FLExp3, and a textbook Exp3 used as an equivalence reference."""

from __future__ import annotations

import math

import numpy as np

from .._validation import check_positive_int
from .base import BasePolicy, Feedback, Selection, categorical_draws


def regret_scale(n_arms: int, n_draws: int, horizon: int, cost_cap: float) -> float:
    """(1 + C) sqrt(2 ln(L) M (L + M - 1) T)."""
    return (1.0 + cost_cap) * math.sqrt(
        2.0 * math.log(n_arms) * n_draws * (n_arms + n_draws - 1) * horizon
    )


def learning_rate(n_arms: int, n_draws: int, horizon: int, cost_cap: float) -> float:
    return math.log(n_arms) / regret_scale(n_arms, n_draws, horizon, cost_cap)


def reward_estimates(draws: np.ndarray, reward: np.ndarray, costs: np.ndarray,
                     probs: np.ndarray) -> np.ndarray:
    """g_i = (r - c_i) / p_i * #{j : b_j = i}, vectorised over leading axes.

    ``draws`` (..., M) int, ``reward`` (...,), ``costs`` and ``probs`` (..., L).
    Entries of ``costs`` for arms that were not drawn are ignored.
    """
    n_arms = probs.shape[-1]
    counts = (draws[..., :, None] == np.arange(n_arms)).sum(axis=-2)
    drawn = counts > 0
    safe_costs = np.where(drawn, costs, 0.0)
    safe_probs = np.where(drawn, probs, 1.0)
    return np.where(drawn, (reward[..., None] - safe_costs) / safe_probs * counts, 0.0)


def _softmax(log_weights: np.ndarray) -> np.ndarray:
    w = np.exp(log_weights - log_weights.max(axis=1, keepdims=True))
    return w / w.sum(axis=1, keepdims=True)


class MSExp3(BasePolicy):
    """Draw ``n_draws`` arms i.i.d. from exponential weights and play their union.

    Rewards in ``reward_range`` are mapped affinely onto [-1, 0] and costs are
    divided by the width of that range, so ``cost_cap`` is in reward units.

    Parameters
    ----------
    n_arms, n_draws, horizon : int
    cost_cap : float
        Upper bound C on the per-arm costs.
    reward_range : (float, float)
    learning_rate : float or None
        Defaults to ln(L) / R with R the regret scale.
    random_state : int or None
        Seed used when :meth:`reset` gets no explicit seeds.
    """

    name = "msexp3"

    def __init__(self, n_arms=2, n_draws=1, horizon=1000, cost_cap=0.0,
                 reward_range=(-1.0, 0.0), learning_rate=None, random_state=None):
        self.n_arms = n_arms
        self.n_draws = n_draws
        self.horizon = horizon
        self.cost_cap = cost_cap
        self.reward_range = reward_range
        self.learning_rate = learning_rate
        self.random_state = random_state

    def _validate(self):
        check_positive_int(self.n_arms, "n_arms", minimum=2)
        check_positive_int(self.n_draws, "n_draws")
        check_positive_int(self.horizon, "horizon")
        if self.cost_cap < 0:
            raise ValueError("cost_cap must be nonnegative")
        lo, hi = self.reward_range
        if not lo < hi:
            raise ValueError("reward_range must satisfy lo < hi")

    def reset(self, seeds=None):
        self._validate()
        lo, hi = map(float, self.reward_range)
        self.scale_ = hi - lo
        self.offset_ = hi
        self.cost_cap_ = self.cost_cap / self.scale_
        if self.learning_rate is None:
            self.eta_ = learning_rate(self.n_arms, self.n_draws, self.horizon, self.cost_cap_)
        else:
            self.eta_ = float(self.learning_rate)
        self.streams_ = self._streams(seeds, self.n_draws)
        self.log_weights_ = np.zeros((len(self.streams_), self.n_arms))
        self.round_ = 0
        return self

    @property
    def probs_(self) -> np.ndarray:
        return _softmax(self.log_weights_)

    def map_reward(self, reward) -> np.ndarray:
        return (np.asarray(reward, dtype=float) - self.offset_) / self.scale_

    def select(self) -> Selection:
        self._check_started()
        if self.round_ >= self.horizon:
            raise RuntimeError("horizon exhausted")
        probs = self.probs_
        draws = categorical_draws(probs, self.streams_.next())
        mask = np.zeros(probs.shape, dtype=bool)
        np.put_along_axis(mask, draws, True, axis=1)
        return Selection(mask=mask, draws=draws, probs=probs)

    def update(self, selection: Selection, feedback: Feedback):
        self._check_started()
        reward = np.asarray(feedback.reward, dtype=float)
        lo, hi = self.reward_range
        span = hi - lo
        if np.any(reward < lo - 1e-9 * span) or np.any(reward > hi + 1e-9 * span):
            raise ValueError(f"reward outside the declared range {self.reward_range}")
        mask = selection.mask
        if feedback.costs is None:
            costs = np.zeros(mask.shape)
        else:
            costs = np.asarray(feedback.costs, dtype=float)
            revealed = np.where(mask, costs, 0.0)
            if np.any(np.isnan(revealed)):
                raise ValueError("missing cost for a drawn arm")
            if np.any(revealed < 0) or np.any(revealed > self.cost_cap * (1 + 1e-12)):
                raise ValueError(f"cost outside [0, {self.cost_cap}]")
            costs = revealed / self.scale_
        g = reward_estimates(selection.draws, self.map_reward(reward), costs, selection.probs)
        self.log_weights_ = self.log_weights_ + self.eta_ * g
        self.log_weights_ -= self.log_weights_.max(axis=1, keepdims=True)
        self.round_ += 1
        return self


class Exp3(BasePolicy):
    """Textbook Exp3 on rewards in [-1, 0] with importance-weighted estimates.

    Kept deliberately independent of :class:`MSExp3`: it stores normalised
    probabilities and applies multiplicative updates.
    """

    name = "exp3"

    def __init__(self, n_arms=2, horizon=1000, learning_rate=None,
                 reward_range=(-1.0, 0.0), random_state=None):
        self.n_arms = n_arms
        self.horizon = horizon
        self.learning_rate = learning_rate
        self.reward_range = reward_range
        self.random_state = random_state

    def reset(self, seeds=None):
        check_positive_int(self.n_arms, "n_arms", minimum=2)
        if self.learning_rate is None:
            self.eta_ = math.log(self.n_arms) / math.sqrt(
                2.0 * math.log(self.n_arms) * self.n_arms * self.horizon
            )
        else:
            self.eta_ = float(self.learning_rate)
        self.streams_ = self._streams(seeds, 1)
        self.probs_ = np.full((len(self.streams_), self.n_arms), 1.0 / self.n_arms)
        return self

    def select(self) -> Selection:
        self._check_started()
        u = self.streams_.next()[:, 0]
        rows = []
        for p, ui in zip(self.probs_, u):
            acc = 0.0
            arm = self.n_arms - 1
            total = p.sum()
            for i, pi in enumerate(p):
                acc += pi
                if acc > ui * total:
                    arm = i
                    break
            rows.append(arm)
        arms = np.array(rows)
        mask = np.zeros(self.probs_.shape, dtype=bool)
        mask[np.arange(len(arms)), arms] = True
        return Selection(mask=mask, draws=arms[:, None], probs=self.probs_.copy())

    def update(self, selection: Selection, feedback: Feedback):
        lo, hi = self.reward_range
        mapped = (np.asarray(feedback.reward, dtype=float) - hi) / (hi - lo)
        arms = selection.draws[:, 0]
        for r, arm in enumerate(arms):
            p = self.probs_[r]
            estimate = mapped[r] / p[arm]
            w = p.copy()
            w[arm] *= math.exp(self.eta_ * estimate)
            self.probs_[r] = w / w.sum()
        return self


def flexp3_draws(n_facilities: int, horizon: int) -> int:
    """ceil((K/2) ln(T/K^2)); the raw value must be at least 1."""
    raw = n_facilities / 2.0 * math.log(horizon / n_facilities**2)
    if raw < 1.0:
        raise ValueError(
            f"horizon {horizon} too small for {n_facilities} facilities: "
            f"(K/2) ln(T/K^2) = {raw:.4g} < 1"
        )
    return math.ceil(raw - 1e-12)


class FLExp3(BasePolicy):
    """Facility location via MSExp3 on K real arms plus K zero-cost dummy arms.

    The played set is the inner draw restricted to real arms; the environment
    must reveal the costs of all K real arms every round.
    """

    name = "flexp3"

    def __init__(self, n_arms=2, horizon=1000, cost_cap=1.0, reward_range=(-1.0, 0.0),
                 n_draws=None, random_state=None):
        self.n_arms = n_arms
        self.horizon = horizon
        self.cost_cap = cost_cap
        self.reward_range = reward_range
        self.n_draws = n_draws
        self.random_state = random_state

    def reset(self, seeds=None):
        k = check_positive_int(self.n_arms, "n_arms")
        m = flexp3_draws(k, self.horizon) if self.n_draws is None else self.n_draws
        self.inner_ = MSExp3(
            n_arms=2 * k,
            n_draws=m,
            horizon=self.horizon,
            cost_cap=self.cost_cap,
            reward_range=self.reward_range,
            random_state=self.random_state,
        ).reset(seeds)
        self.streams_ = self.inner_.streams_
        return self

    @property
    def n_draws_(self) -> int:
        return self.inner_.n_draws

    @property
    def probs_(self) -> np.ndarray:
        return self.inner_.probs_

    def select(self) -> Selection:
        self._check_started()
        inner = self.inner_.select()
        self.last_inner_ = inner
        return Selection(mask=inner.mask[:, : self.n_arms], draws=inner.draws, probs=inner.probs)

    def update(self, selection: Selection, feedback: Feedback):
        if feedback.costs is None:
            raise ValueError("FLExp3 needs the costs of every real arm")
        costs = np.asarray(feedback.costs, dtype=float)
        if costs.shape[-1] != self.n_arms or np.any(np.isnan(costs)):
            raise ValueError("FLExp3 needs the costs of every real arm")
        extended = np.concatenate([costs, np.zeros_like(costs)], axis=1)
        inner = self.last_inner_
        self.inner_.update(inner, Feedback(reward=feedback.reward, costs=extended))
        self.last_costs_ = extended
        return self
