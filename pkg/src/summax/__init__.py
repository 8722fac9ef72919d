"""Bandit learning over sum-max reward functions.

Set-function tools (:mod:`summax.setfn`), the smooth draw-based surrogate
(:mod:`summax.surrogate`), policies, environments, a simulation harness and
a verification suite.
"""

from .setfn import (
    SumMaxFunction,
    TabulatedSetFunction,
    build_counterexample,
    build_summax,
    check_monotone_submodular,
    check_pseudo_concave,
    check_pseudo_submodular,
    subset_decomposition,
    tabulate,
)
from .policies import CascadeKLUCB, CascadeUCB, ComBand, Exp3, FLExp3, MSExp3

__version__ = "0.1.0"

__all__ = [
    "SumMaxFunction",
    "TabulatedSetFunction",
    "build_counterexample",
    "build_summax",
    "check_monotone_submodular",
    "check_pseudo_concave",
    "check_pseudo_submodular",
    "subset_decomposition",
    "tabulate",
    "MSExp3",
    "FLExp3",
    "Exp3",
    "CascadeUCB",
    "CascadeKLUCB",
    "ComBand",
]
