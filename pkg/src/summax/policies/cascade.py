"""Cascading-bandit baselines: rank arms by an upper confidence index and learn
from the position of the first click."""

from __future__ import annotations

import math

import numpy as np

from .._validation import check_positive_int
from .base import BasePolicy, Feedback, Selection

KL_TOL = 1e-9
KL_MAX_ITER = 64


def ucb1_index(clicks, pulls, t) -> np.ndarray:
    """mean + sqrt(1.5 ln t / n); unpulled arms get +inf."""
    clicks = np.asarray(clicks, dtype=float)
    pulls = np.asarray(pulls, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        idx = clicks / pulls + np.sqrt(1.5 * np.log(t) / pulls)
    return np.where(pulls > 0, idx, np.inf)


def bernoulli_kl(p, q) -> np.ndarray:
    p = np.clip(p, 0.0, 1.0)
    q = np.clip(q, 1e-15, 1 - 1e-15)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(p > 0, p * np.log(p / q), 0.0)
        b = np.where(p < 1, (1 - p) * np.log((1 - p) / (1 - q)), 0.0)
    return a + b


def kl_ucb_index(clicks, pulls, t, tol: float = KL_TOL, max_iter: int = KL_MAX_ITER) -> np.ndarray:
    """Largest x >= mean with n kl(mean, x) <= ln t, by bisection."""
    clicks = np.asarray(clicks, dtype=float)
    pulls = np.asarray(pulls, dtype=float)
    pulled = pulls > 0
    safe = np.where(pulled, pulls, 1.0)
    mean = np.where(pulled, clicks / safe, 0.0)
    budget = np.log(t) / safe
    # kl(p, x) = -H(p) - p ln x - (1 - p) ln(1 - x); the entropy part is fixed
    with np.errstate(divide="ignore", invalid="ignore"):
        neg_entropy = (np.where(mean > 0, mean * np.log(mean), 0.0)
                       + np.where(mean < 1, (1 - mean) * np.log1p(-mean), 0.0))
    target = budget - neg_entropy
    comp = 1.0 - mean
    # Pinsker: kl(p, x) >= 2 (x - p)^2 bounds the root from above
    span = np.minimum(1.0, mean + np.sqrt(budget / 2.0) + tol) - mean
    span = np.where(pulled, span, 0.0)
    # bisect every entry on [mean, mean + span] with a shared relative step
    widest = float(span.max()) if span.size else 0.0
    n_iter = min(max_iter, max(0, math.ceil(math.log2(widest / tol)))) if widest > tol else 0
    frac = np.zeros_like(mean)
    step = 1.0
    for _ in range(n_iter):
        step *= 0.5
        mid = np.clip(mean + (frac + step) * span, 1e-15, 1 - 1e-15)
        ok = -(mean * np.log(mid) + comp * np.log1p(-mid)) <= target
        frac += step * ok
    return np.where(pulled, mean + frac * span, np.inf)


class CascadeUCB(BasePolicy):
    """CascadeUCB1 (``variant="ucb"``) or CascadeKL-UCB (``variant="kl"``).

    Presents the ``n_slots`` arms with the largest index, ties to the lowest
    arm. Arms up to and including the first click are observed.
    """

    name = "cascade_ucb"

    def __init__(self, n_arms=2, n_slots=1, variant="ucb", random_state=None):
        self.n_arms = n_arms
        self.n_slots = n_slots
        self.variant = variant
        self.random_state = random_state

    def reset(self, seeds=None):
        check_positive_int(self.n_arms, "n_arms")
        check_positive_int(self.n_slots, "n_slots")
        if self.n_slots > self.n_arms:
            raise ValueError("n_slots cannot exceed n_arms")
        if self.variant not in ("ucb", "kl"):
            raise ValueError(f"unknown variant {self.variant!r}")
        self.streams_ = self._streams(seeds, 0)
        shape = (len(self.streams_), self.n_arms)
        self.clicks_ = np.zeros(shape)
        self.pulls_ = np.zeros(shape)
        self.round_ = 0
        return self

    def index(self) -> np.ndarray:
        t = self.round_ + 1
        if self.variant == "ucb":
            return ucb1_index(self.clicks_, self.pulls_, t)
        return kl_ucb_index(self.clicks_, self.pulls_, t)

    def select(self) -> Selection:
        self._check_started()
        order = np.argsort(-self.index(), axis=1, kind="stable")[:, : self.n_slots]
        mask = np.zeros(self.clicks_.shape, dtype=bool)
        np.put_along_axis(mask, order, True, axis=1)
        return Selection(mask=mask, order=order)

    def update(self, selection: Selection, feedback: Feedback):
        if feedback.click_position is None:
            raise ValueError("cascade policies need the click position")
        pos = np.asarray(feedback.click_position)
        slots = np.arange(self.n_slots)
        # no click (-1) means the whole list was examined
        last = np.where(pos < 0, self.n_slots - 1, pos)
        observed = slots[None, :] <= last[:, None]
        clicked = slots[None, :] == pos[:, None]
        rows = np.arange(len(pos))[:, None]
        self.pulls_[rows, selection.order] += observed
        self.clicks_[rows, selection.order] += clicked
        self.round_ += 1
        return self


class CascadeKLUCB(CascadeUCB):
    name = "cascade_kl"

    def __init__(self, n_arms=2, n_slots=1, variant="kl", random_state=None):
        super().__init__(n_arms=n_arms, n_slots=n_slots, variant=variant,
                         random_state=random_state)
