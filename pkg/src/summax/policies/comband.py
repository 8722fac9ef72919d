"""ComBand over m-subsets with a linear-time product-weighted subset sampler."""

from __future__ import annotations

import itertools
import math

import numpy as np

from .._validation import check_positive_int
from .base import BasePolicy, Feedback, Selection

REGULARIZATION = 1e-10


def product_subset_tables(q, m: int) -> tuple[np.ndarray, np.ndarray]:
    """DP tables for m-subsets weighted by the product of their entries.

    ``z[k, j]`` sums the weight of all (k+1)-subsets whose largest index is
    ``j``; ``Z[k]`` is its running sum over ``j``. Leading axes broadcast.
    Returns arrays of shape (..., m, d).
    """
    q = np.asarray(q, dtype=float)
    d = q.shape[-1]
    z = np.zeros(q.shape[:-1] + (m, d))
    big_z = np.zeros_like(z)
    z[..., 0, :] = q
    big_z[..., 0, :] = np.cumsum(q, axis=-1)
    for k in range(1, m):
        z[..., k, 1:] = big_z[..., k - 1, :-1] * q[..., 1:]
        big_z[..., k, :] = np.cumsum(z[..., k, :], axis=-1)
    return z, big_z


def _check_sampler_args(q: np.ndarray, m: int) -> None:
    d = q.shape[-1]
    if not 1 <= m <= d:
        raise ValueError(f"subset size m={m} must lie in [1, {d}]")
    if np.any(~(q > 0)) or not np.all(np.isfinite(q)):
        raise ValueError("subset weights must be positive and finite")


def sample_product_subsets(q, m: int, uniforms) -> np.ndarray:
    """Batched sampler: ``q`` (R, d), ``uniforms`` (R, m) -> sorted indices (R, m).

    The largest index is drawn first, then each smaller one conditionally on
    the one above it.
    """
    q = np.asarray(q, dtype=float)
    q = q / q.max(axis=-1, keepdims=True)
    _, big_z = product_subset_tables(q, m)
    z_last = big_z[:, m - 1, :]
    rows = np.arange(q.shape[0])
    out = np.empty((q.shape[0], m), dtype=np.int64)
    target = uniforms[:, m - 1] * z_last[:, -1]
    j = np.minimum((z_last <= target[:, None]).sum(axis=1), q.shape[1] - 1)
    out[:, m - 1] = j
    for k in range(m - 2, -1, -1):
        cum = big_z[:, k, :]
        target = uniforms[:, k] * cum[rows, j - 1]
        j = np.minimum((cum <= target[:, None]).sum(axis=1), j - 1)
        out[:, k] = j
    return out


def comband_sample_subset(q, m: int, rng=None) -> list[int]:
    """Draw an m-subset of range(d) with probability proportional to prod q_i."""
    q = np.asarray(q, dtype=float)
    _check_sampler_args(q, m)
    rng = np.random.default_rng(rng)
    return sample_product_subsets(q[None, :], m, rng.random((1, m)))[0].tolist()


def product_subset_law(q, m: int) -> dict[tuple[int, ...], float]:
    """Subset probabilities implied by the sampler's conditional tables.

    Each subset's probability is the product of the conditional probabilities
    along its draw path, read straight off the DP tables.
    """
    q = np.asarray(q, dtype=float)
    _check_sampler_args(q, m)
    z, big_z = product_subset_tables(q / q.max(), m)
    d = q.shape[-1]
    law = {}
    for subset in itertools.combinations(range(d), m):
        top = subset[-1]
        prob = z[m - 1, top] / big_z[m - 1, d - 1]
        for k in range(m - 2, -1, -1):
            above = subset[k + 1]
            prob *= z[k, subset[k]] / big_z[k, above - 1]
        law[subset] = float(prob)
    return law


def elementary_symmetric(q, m: int) -> np.ndarray:
    """e_0..e_m of the last axis of ``q``."""
    q = np.asarray(q, dtype=float)
    e = np.zeros(q.shape[:-1] + (m + 1,))
    e[..., 0] = 1.0
    for k in range(q.shape[-1]):
        e[..., 1:] = e[..., 1:] + q[..., k, None] * e[..., :-1]
    return e


def product_law_cooccurrence(q, m: int) -> np.ndarray:
    """E[v v^T] for the incidence vector v of a product-weighted m-subset.

    ``q`` has shape (R, d); returns (R, d, d).
    """
    q = np.asarray(q, dtype=float)
    q = q / q.max(axis=-1, keepdims=True)
    e = elementary_symmetric(q, m)
    # e_k without arm i, by deleting one factor at a time
    without_i = np.zeros(q.shape + (m + 1,))
    without_i[..., 0] = 1.0
    for k in range(1, m + 1):
        without_i[..., k] = np.maximum(
            e[..., None, k] - q * without_i[..., k - 1], 0.0
        )
    total = e[..., m]
    marg = q * without_i[..., m - 1] / total[..., None]
    out = np.zeros(q.shape + (q.shape[-1],))
    if m >= 2:
        qi = q[..., :, None]
        qj = q[..., None, :]
        prev = np.ones(out.shape)
        for k in range(1, m - 1):
            prev = np.maximum(without_i[..., :, None, k] - qj * prev, 0.0)
        out = qi * qj * prev / total[..., None, None]
    d = q.shape[-1]
    idx = np.arange(d)
    out[..., idx, idx] = marg
    return out


def uniform_cooccurrence(d: int, m: int) -> np.ndarray:
    off = m * (m - 1) / (d * (d - 1)) if d > 1 else 0.0
    out = np.full((d, d), off)
    np.fill_diagonal(out, m / d)
    return out


def default_exploration(d: int, m: int, horizon: int) -> float:
    return min(1.0, math.sqrt(d * math.log(math.comb(d, m)) / horizon))


class ComBand(BasePolicy):
    """Exponential weights over m-subsets mixed with uniform exploration.

    The observed scalar reward of the played subset is treated as a linear
    loss ``1 - reward`` (after mapping ``reward_range`` onto [0, 1]) and
    estimated per arm through the inverse co-occurrence matrix.
    """

    name = "comband"

    def __init__(self, n_arms=2, n_slots=1, horizon=1000, gamma=None, eta=None,
                 reward_range=(0.0, 1.0), random_state=None):
        self.n_arms = n_arms
        self.n_slots = n_slots
        self.horizon = horizon
        self.gamma = gamma
        self.eta = eta
        self.reward_range = reward_range
        self.random_state = random_state

    def reset(self, seeds=None):
        d = check_positive_int(self.n_arms, "n_arms")
        m = check_positive_int(self.n_slots, "n_slots")
        if m > d:
            raise ValueError("n_slots cannot exceed n_arms")
        check_positive_int(self.horizon, "horizon")
        gamma = default_exploration(d, m, self.horizon) if self.gamma is None else float(self.gamma)
        if not 0.0 <= gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        self.gamma_ = gamma
        self.eta_ = gamma / (2 * d) if self.eta is None else float(self.eta)
        self.streams_ = self._streams(seeds, m + 1)
        self.cum_loss_ = np.zeros((len(self.streams_), d))
        self.uniform_cooc_ = uniform_cooccurrence(d, m)
        return self

    @property
    def weights_(self) -> np.ndarray:
        log_q = -self.eta_ * self.cum_loss_
        return np.exp(log_q - log_q.max(axis=1, keepdims=True))

    def select(self) -> Selection:
        self._check_started()
        u = self.streams_.next()
        q = self.weights_
        explore = u[:, 0] < self.gamma_
        q = np.where(explore[:, None], 1.0, q)
        chosen = sample_product_subsets(q, self.n_slots, u[:, 1:])
        mask = np.zeros(q.shape, dtype=bool)
        np.put_along_axis(mask, chosen, True, axis=1)
        return Selection(mask=mask, order=chosen)

    def cooccurrence(self) -> np.ndarray:
        exploit = product_law_cooccurrence(self.weights_, self.n_slots)
        return (1 - self.gamma_) * exploit + self.gamma_ * self.uniform_cooc_

    def update(self, selection: Selection, feedback: Feedback):
        lo, hi = self.reward_range
        loss = (hi - np.asarray(feedback.reward, dtype=float)) / (hi - lo)
        cooc = self.cooccurrence() + REGULARIZATION * np.eye(self.n_arms)
        v = selection.mask.astype(float)
        estimate = np.linalg.solve(cooc, v[..., None])[..., 0]
        self.cum_loss_ = self.cum_loss_ + loss[:, None] * estimate
        return self
