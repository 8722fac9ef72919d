"""Online decision policies."""

from .base import BasePolicy, Feedback, ReplicaStreams, Selection, categorical_draws
from .cascade import CascadeKLUCB, CascadeUCB, bernoulli_kl, kl_ucb_index, ucb1_index
from .comband import (
    ComBand,
    comband_sample_subset,
    product_law_cooccurrence,
    product_subset_law,
    sample_product_subsets,
    uniform_cooccurrence,
)
from .exp3 import FLExp3, Exp3, MSExp3, flexp3_draws, learning_rate, regret_scale, reward_estimates

POLICIES = {
    "msexp3": MSExp3,
    "flexp3": FLExp3,
    "exp3": Exp3,
    "cascade_ucb": CascadeUCB,
    "cascade_kl": CascadeKLUCB,
    "comband": ComBand,
}

__all__ = [
    "POLICIES",
    "BasePolicy",
    "CascadeKLUCB",
    "CascadeUCB",
    "ComBand",
    "Exp3",
    "FLExp3",
    "Feedback",
    "MSExp3",
    "ReplicaStreams",
    "Selection",
    "bernoulli_kl",
    "categorical_draws",
    "comband_sample_subset",
    "flexp3_draws",
    "kl_ucb_index",
    "learning_rate",
    "product_law_cooccurrence",
    "product_subset_law",
    "regret_scale",
    "reward_estimates",
    "sample_product_subsets",
    "ucb1_index",
    "uniform_cooccurrence",
]
