"""Shared machinery for policies that run a batch of independent replicas.

Every policy keeps its learning state with a leading replica axis so that the
seeds of an experiment advance in lockstep through one set of numpy calls.
Each replica owns its random stream, so a replica's trajectory depends on its
own seed only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .._validation import check_seeds

BLOCK_ROUNDS = 1024


class ReplicaStreams:
    """Per-replica uniform streams served in fixed-width rows.

    Row ``t`` of replica ``r`` only depends on the seed of ``r`` and on ``width``.
    """

    def __init__(self, seeds, width: int, block: int = BLOCK_ROUNDS):
        self.seeds = check_seeds(seeds)
        self.width = int(width)
        self.block = int(block)
        self._gens = [np.random.default_rng(s) for s in self.seeds]
        self._buf = np.empty((len(self.seeds), 0, self.width))
        self._pos = 0

    def __len__(self):
        return len(self.seeds)

    def next(self) -> np.ndarray:
        if self._pos >= self._buf.shape[1]:
            self._buf = np.stack([g.random((self.block, self.width)) for g in self._gens])
            self._pos = 0
        row = self._buf[:, self._pos, :]
        self._pos += 1
        return row


def policy_seed(seed: int) -> np.random.SeedSequence:
    """Policy randomness is decoupled from the environment stream of the same seed."""
    return np.random.SeedSequence([int(seed), 1])


@dataclass
class Selection:
    """What a policy plays this round, one row per replica.

    ``mask`` marks the chosen arms. ``order`` lists presented arms for ranking
    policies and ``draws`` the raw index sequence for sampling policies.
    """

    mask: np.ndarray
    order: np.ndarray | None = None
    draws: np.ndarray | None = None
    probs: np.ndarray | None = None


@dataclass
class Feedback:
    """Policy-facing view of a round: no latent environment state."""

    reward: np.ndarray
    costs: np.ndarray | None = None
    click_position: np.ndarray | None = None


class BasePolicy(BaseEstimator):
    """Hyperparameters live in ``__init__``; learned state in ``*_`` attributes
    created by :meth:`reset`."""

    name = "policy"

    def reset(self, seeds=None):
        raise NotImplementedError

    def select(self) -> Selection:
        raise NotImplementedError

    def update(self, selection: Selection, feedback: Feedback):
        raise NotImplementedError

    @property
    def n_replicas(self) -> int:
        self._check_started()
        return len(self.streams_)

    def _check_started(self):
        if not hasattr(self, "streams_"):
            raise NotFittedError(f"{type(self).__name__} must be reset before use")

    def _default_seeds(self, seeds):
        if seeds is None:
            seeds = 0 if self.random_state is None else self.random_state
        return check_seeds(seeds)

    def _streams(self, seeds, width: int) -> ReplicaStreams:
        seeds = self._default_seeds(seeds)
        # a width-0 stream still needs a valid generator per replica
        return ReplicaStreams(
            [policy_seed(s).generate_state(1)[0] for s in seeds], max(width, 1)
        )


def categorical_draws(probs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF draws: ``probs`` (R, L), ``uniforms`` (R, k) -> indices (R, k)."""
    cdf = np.cumsum(probs, axis=1)
    target = uniforms * cdf[:, -1:]
    idx = (cdf[:, None, :] <= target[:, :, None]).sum(axis=2)
    return np.minimum(idx, probs.shape[1] - 1)
