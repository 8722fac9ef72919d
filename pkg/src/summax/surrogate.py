"""Smooth surrogate of a set function under M i.i.d. draws from a simplex vector.

For a decomposition d of r, Psi(q) = sum_S d(S) (sum_{i in S} q_i)^M equals the
expected value of r on the set formed by M independent draws from q.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ._validation import as_mask, check_finite_array, check_positive_int, subset_indicator
from .setfn import SubsetDecomposition, subset_decomposition, tabulate

SIMPLEX_TOL = 1e-9
INTERIOR_FLOOR = 1e-12
ENUMERATION_BUDGET = 10**7


@dataclass(frozen=True, eq=False)
class SimplexVector:
    probs: np.ndarray

    def __post_init__(self):
        p = check_finite_array(self.probs, "probs", ndim=1)
        if np.any(p < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"probabilities sum to {p.sum()}, not 1")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __len__(self):
        return self.probs.shape[0]

    def require_interior(self, floor: float = INTERIOR_FLOOR) -> "SimplexVector":
        if self.probs.min() < floor:
            raise ValueError(f"min probability {self.probs.min()} below interior floor {floor}")
        return self


@dataclass(frozen=True, eq=False)
class CostVector:
    costs: np.ndarray
    cost_cap: float

    def __post_init__(self):
        c = check_finite_array(self.costs, "costs", ndim=1)
        cap = float(self.cost_cap)
        if cap < 0:
            raise ValueError("cost_cap must be nonnegative")
        if np.any(c < 0) or np.any(c > cap):
            raise ValueError(f"costs must lie in [0, {cap}]")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "cost_cap", cap)


def _probs(q) -> np.ndarray:
    if isinstance(q, SimplexVector):
        return q.probs
    return SimplexVector(q).probs


def _point(q) -> np.ndarray:
    # Psi is a polynomial on all of R^L; finite differences step off the simplex
    if isinstance(q, SimplexVector):
        return q.probs
    return check_finite_array(q, "q", ndim=1)


def _as_decomposition(d) -> SubsetDecomposition:
    if isinstance(d, SubsetDecomposition):
        return d
    return subset_decomposition(d)


def _check_dims(d: SubsetDecomposition, q: np.ndarray) -> None:
    if q.shape[0] != d.num_arms:
        raise ValueError(f"q has {q.shape[0]} entries but the function has {d.num_arms} arms")


def _power(base: np.ndarray, exponent: int) -> np.ndarray:
    if exponent <= 64:
        return base**exponent
    with np.errstate(divide="ignore"):
        return np.where(base > 0, np.exp(exponent * np.log(base)), 0.0)


def _subset_mass(d: SubsetDecomposition, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    members = subset_indicator(d.num_arms)
    return members, members @ q


def phi_value(d, q, n_draws: int) -> float:
    """Psi(q) = sum_S d(S) q(S)^M."""
    d = _as_decomposition(d)
    q = _point(q)
    m = check_positive_int(n_draws, "n_draws")
    _check_dims(d, q)
    _, mass = _subset_mass(d, q)
    return float(d.coeffs @ _power(mass, m))


def phi_gradient(d, q, n_draws: int) -> np.ndarray:
    """d Psi / d q_i = M sum_{S containing i} d(S) q(S)^(M-1)."""
    d = _as_decomposition(d)
    q = _point(q)
    m = check_positive_int(n_draws, "n_draws")
    _check_dims(d, q)
    members, mass = _subset_mass(d, q)
    return m * (members.T @ (d.coeffs * _power(mass, m - 1)))


def phi_hessian(d, q, n_draws: int) -> np.ndarray:
    d = _as_decomposition(d)
    q = _point(q)
    m = check_positive_int(n_draws, "n_draws", minimum=2)
    _check_dims(d, q)
    members, mass = _subset_mass(d, q)
    weights = d.coeffs * _power(mass, m - 2)
    weighted = members.T * weights
    return m * (m - 1) * (weighted @ members)


def phi_quadratic_form(d, q, n_draws: int, x) -> float:
    """x^T Hess Psi(q) x for a zero-sum direction x."""
    x = check_finite_array(x, "x", ndim=1)
    if abs(x.sum()) > 1e-9 * np.linalg.norm(x):
        raise ValueError("x must sum to zero")
    if n_draws < 2:
        raise ValueError("the Hessian form needs n_draws >= 2")
    return float(x @ phi_hessian(d, q, n_draws) @ x)


def objective_with_costs(d, q, costs, n_draws: int) -> tuple[float, np.ndarray]:
    """Psi(q) - M q.c and its gradient."""
    c = costs.costs if isinstance(costs, CostVector) else check_finite_array(costs, "costs", ndim=1)
    qv = _point(q)
    if c.shape != qv.shape:
        raise ValueError("costs and q have different lengths")
    value = phi_value(d, qv, n_draws) - n_draws * float(qv @ c)
    grad = phi_gradient(d, qv, n_draws) - n_draws * c
    return value, grad


def expectation_oracle(g, q, n_draws: int) -> float:
    """Exact E[r({b_1..b_M})] by enumerating every ordered draw sequence."""
    g = tabulate(g)
    q = _probs(q)
    m = check_positive_int(n_draws, "n_draws")
    n = g.num_arms
    if q.shape[0] != n:
        raise ValueError("dimension mismatch")
    if n**m > ENUMERATION_BUDGET:
        raise ValueError(f"{n}^{m} sequences exceed the enumeration budget")
    total = 0.0
    for seq in itertools.product(range(n), repeat=m):
        weight = 1.0
        mask = 0
        for b in seq:
            weight *= q[b]
            mask |= 1 << b
        total += weight * g.table[mask]
    return total


def comparator_vector(subset, n_arms: int) -> SimplexVector:
    mask = as_mask(subset, n_arms)
    if mask == 0:
        raise ValueError("comparator subset must be nonempty")
    members = ((mask >> np.arange(n_arms)) & 1).astype(float)
    return SimplexVector(members / members.sum())


def approximation_ratio(subset_size: int, n_draws: int) -> float:
    """1 - ((|S| - 1)/|S|)^M."""
    s = check_positive_int(subset_size, "subset_size")
    return 1.0 - ((s - 1) / s) ** n_draws

