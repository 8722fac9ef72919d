"""Executable certificates on desk-scale instances.

Each check compares an implementation against an independent oracle (full
enumeration, Monte Carlo or a closed form) and returns a :class:`CheckResult`.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .policies.comband import product_subset_law, sample_product_subsets
from .policies.exp3 import reward_estimates
from .setfn import (
    COUNTEREXAMPLE_DIRECTION,
    COUNTEREXAMPLE_SUBSET,
    SumMaxFunction,
    TabulatedSetFunction,
    build_counterexample,
    check_monotone_submodular,
    check_pseudo_concave,
    quadratic_form,
    subset_decomposition,
    tabulate,
)
from .surrogate import (
    SimplexVector,
    approximation_ratio,
    comparator_vector,
    expectation_oracle,
    objective_with_costs,
    phi_quadratic_form,
    phi_value,
)


@dataclass
class CheckResult:
    """``passed`` records whether ``measured`` meets ``bound_or_target`` within ``tolerance``."""

    name: str
    passed: bool
    measured: float
    bound_or_target: float
    tolerance: float
    details: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        for key in ("measured", "bound_or_target", "tolerance"):
            setattr(self, key, float(getattr(self, key)))

    def to_dict(self) -> dict:
        return asdict(self)


def random_summax(rng, n_arms: int, n_rows: int, empty: float | None = None) -> SumMaxFunction:
    values = rng.random((n_rows, n_arms))
    if empty is None:
        empty = float(values.min(axis=1).sum() - rng.random())
    return SumMaxFunction(values, empty)


def _random_simplex(rng, n: int, floor: float = 0.0) -> np.ndarray:
    p = rng.dirichlet(np.ones(n))
    return floor + (1 - n * floor) * p


def _draw_mask(seq) -> int:
    mask = 0
    for b in seq:
        mask |= 1 << b
    return mask


def verify_phi_expectation(trials: int = 50, seed: int = 0) -> CheckResult:
    """Closed-form Psi against exact enumeration of every draw sequence."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(trials):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, 5))
        f = random_summax(rng, n, int(rng.integers(1, 5)))
        q = _random_simplex(rng, n)
        if trial % 5 == 4:
            q = np.eye(n)[int(rng.integers(n))]
        d = subset_decomposition(f)
        worst = max(worst, abs(phi_value(d, q, m) - expectation_oracle(f, q, m)))
    # for a single draw Psi is linear: sum_i q_i r({i})
    f = random_summax(rng, 4, 3)
    q = _random_simplex(rng, 4)
    linear = sum(q[i] * f([i]) for i in range(4))
    worst = max(worst, abs(phi_value(subset_decomposition(f), q, 1) - linear))
    tol = 1e-10
    return CheckResult("phi_expectation", worst <= tol, worst, 0.0, tol,
                       f"{trials} random cases plus the single-draw closed form")


def verify_unbiased_gradient(samples: int = 10**6, seed: int = 0, n_arms: int = 5,
                             n_draws: int = 3, cost_cap: float = 1.0, floor: float = 0.05,
                             probs=None, chunk: int = 200_000) -> CheckResult:
    """Monte Carlo mean of the reward estimate against grad Psi - M c."""
    rng = np.random.default_rng(seed)
    f = random_summax(rng, n_arms, 4)
    g = tabulate(f)
    lo, hi = g.table.min(), g.table.max()
    # rewards in [-1, 0]
    table = (g.table - hi) / (hi - lo)
    costs = cost_cap * rng.random(n_arms)
    p = _random_simplex(rng, n_arms, floor) if probs is None else np.asarray(probs, dtype=float)
    p = SimplexVector(p).require_interior(floor).probs
    target = objective_with_costs(TabulatedSetFunction(n_arms, table), p, costs, n_draws)[1]
    total = np.zeros(n_arms)
    total_sq = np.zeros(n_arms)
    weights = 1 << np.arange(n_arms)
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        draws = rng.choice(n_arms, size=(k, n_draws), p=p)
        masks = np.bitwise_or.reduce(weights[draws], axis=1)
        est = reward_estimates(draws, table[masks], np.broadcast_to(costs, (k, n_arms)),
                               np.broadcast_to(p, (k, n_arms)))
        total += est.sum(axis=0)
        total_sq += (est**2).sum(axis=0)
        done += k
    mean = total / samples
    std = np.sqrt(np.maximum(total_sq / samples - mean**2, 0.0) * samples / (samples - 1))
    stderr = std / math.sqrt(samples)
    z = np.abs(mean - target) / stderr
    worst = float(z.max())
    return CheckResult(
        "unbiased_gradient", worst <= 4.0, worst, 0.0, 4.0,
        f"max |mean - target| in standard errors over {n_arms} coordinates, {samples} samples; "
        f"per-coordinate false alarm about 6e-5, so below {n_arms * 6.4e-5:.1e} for the set",
    )


def _second_moment(table: np.ndarray, costs: np.ndarray, p: np.ndarray, m: int) -> float:
    n = len(p)
    seqs = np.array(list(itertools.product(range(n), repeat=m)), dtype=np.int64)
    weights = np.prod(p[seqs], axis=1)
    masks = np.bitwise_or.reduce(1 << seqs, axis=1)
    est = reward_estimates(seqs, table[masks], np.broadcast_to(costs, (len(seqs), n)),
                           np.broadcast_to(p, (len(seqs), n)))
    return float(weights @ (est**2 @ p))


def verify_second_moment(trials: int = 50, seed: int = 0) -> CheckResult:
    """E[sum_i p_i g_i^2] <= (1 + C)^2 M (L + M - 1) by exact enumeration."""
    rng = np.random.default_rng(seed)
    worst_slack = math.inf
    for _ in range(trials):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, 5))
        cap = float(rng.choice([0.0, 0.5, 1.0, 2.0]))
        g = tabulate(random_summax(rng, n, int(rng.integers(1, 4))))
        lo, hi = g.table.min(), g.table.max()
        table = (g.table - hi) / (hi - lo) if hi > lo else np.zeros_like(g.table)
        costs = cap * rng.random(n)
        p = _random_simplex(rng, n, 0.01)
        bound = (1 + cap) ** 2 * m * (n + m - 1)
        worst_slack = min(worst_slack, bound - _second_moment(table, costs, p, m))
    # equality case: one draw, no costs, reward constantly -1
    n = 4
    p = _random_simplex(rng, n, 0.05)
    tight = _second_moment(-np.ones(1 << n), np.zeros(n), p, 1)
    equality_gap = abs(tight - n)
    passed = worst_slack >= -1e-12 and equality_gap <= 1e-12
    return CheckResult(
        "second_moment", passed, worst_slack, 0.0, 1e-12,
        f"min bound - moment over {trials} cases; equality case gap {equality_gap:.2e}",
    )


def _uniform_draw_expectation(g: TabulatedSetFunction, arms: list[int], m: int) -> float:
    total = 0.0
    for seq in itertools.product(arms, repeat=m):
        total += g.table[_draw_mask(seq)]
    return total / len(arms) ** m


def verify_sampling_lemma(trials: int = 50, seed: int = 0) -> CheckResult:
    """M uniform draws from S recover a (1 - (1 - 1/|S|)^M) share of r(S) - r(empty).

    The same expectation written as Psi at the uniform vector over S is
    checked against it, together with the comparator inequality.
    """
    rng = np.random.default_rng(seed)
    worst_slack = math.inf
    worst_gap = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 7))
        f = random_summax(rng, n, int(rng.integers(1, 5)))
        g = tabulate(f)
        size = int(rng.integers(1, min(n, 5) + 1))
        arms = sorted(rng.choice(n, size=size, replace=False).tolist())
        m = int(rng.integers(1, 6))
        mask = _draw_mask(arms)
        empty = g.table[0]
        gamma = approximation_ratio(size, m)
        exact = _uniform_draw_expectation(g, arms, m)
        worst_slack = min(worst_slack, exact - empty - gamma * (g.table[mask] - empty))
        psi = phi_value(subset_decomposition(g), comparator_vector(arms, n), m)
        worst_gap = max(worst_gap, abs(psi - exact))
        worst_slack = min(worst_slack, psi - empty - gamma * (g.table[mask] - empty))
    passed = worst_slack >= -1e-12 and worst_gap <= 1e-10
    return CheckResult(
        "sampling_lemma", passed, worst_slack, 0.0, 1e-12,
        f"min slack over {trials} cases; max |Psi(u_S) - E| = {worst_gap:.2e}",
    )


def verify_concavity(trials: int = 100, directions: int = 100, seed: int = 0) -> CheckResult:
    """Hessian forms of Psi along zero-sum directions are nonpositive for sum-max functions."""
    rng = np.random.default_rng(seed)
    worst = -math.inf
    tables_ok = True
    for _ in range(trials):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(2, 5))
        f = random_summax(rng, n, int(rng.integers(1, 5)))
        g = tabulate(f)
        d = subset_decomposition(g)
        q = _random_simplex(rng, n, 0.01)
        scale = max(np.abs(g.table).max(), 1.0) * m * m
        for _ in range(directions):
            x = rng.normal(size=n)
            x -= x.mean()
            worst = max(worst, phi_quadratic_form(d, q, m, x) / scale)
        tables_ok &= check_pseudo_concave(g).holds
    counter = build_counterexample()
    witness_form = phi_quadratic_form(
        subset_decomposition(counter), np.eye(8)[7], 3, COUNTEREXAMPLE_DIRECTION
    )
    detected = witness_form > 0 and not check_pseudo_concave(counter).holds
    tol = 1e-10
    passed = worst <= tol and tables_ok and detected
    return CheckResult(
        "concavity", passed, worst, 0.0, tol,
        f"max scaled form over {trials}x{directions} cases; tabulated checks "
        f"{'hold' if tables_ok else 'fail'}; counterexample form at its witness "
        f"{witness_form:.6g} (must be positive)",
    )


def verify_counterexample(alpha: float = 2.0 / 3.0) -> CheckResult:
    g = build_counterexample(alpha)
    monotone = check_monotone_submodular(g).holds
    concave = check_pseudo_concave(g)
    form = quadratic_form(g, COUNTEREXAMPLE_SUBSET, COUNTEREXAMPLE_DIRECTION)
    target = 17 - 24 * alpha
    # values never decrease from triples to quadruples
    sizes = np.array([bin(s).count("1") for s in range(1 << 8)])
    boundary = g.table[sizes == 4].min() >= g.table[sizes == 3].max()
    passed = monotone and not concave.holds and abs(form - target) <= 1e-12 and boundary
    return CheckResult(
        "counterexample", passed, form, target, 1e-12,
        f"monotone submodular: {monotone}; pseudo-concave: {concave.holds}; "
        f"size 3 to 4 step monotone: {boundary}",
    )


def _product_law(q: np.ndarray, m: int) -> dict[tuple[int, ...], float]:
    weights = {s: math.prod(q[list(s)]) for s in itertools.combinations(range(len(q)), m)}
    total = math.fsum(weights.values())
    return {s: w / total for s, w in weights.items()}


def verify_comband_sampler(repeats: int = 20, samples: int = 10**5, seed: int = 0) -> CheckResult:
    """DP-implied subset law against the brute-force product law, plus a chi-square fit."""
    rng = np.random.default_rng(seed)
    worst_tv = 0.0
    for _ in range(repeats):
        for d in range(1, 11):
            for m in range(1, min(4, d) + 1):
                q = rng.uniform(0.05, 3.0, size=d)
                dp = product_subset_law(q, m)
                exact = _product_law(q, m)
                tv = 0.5 * sum(abs(dp[s] - exact[s]) for s in exact)
                worst_tv = max(worst_tv, tv)
    d, m = 6, 3
    q = rng.uniform(0.2, 3.0, size=d)
    exact = _product_law(q, m)
    index = {s: i for i, s in enumerate(exact)}
    drawn = sample_product_subsets(np.tile(q, (samples, 1)), m, rng.random((samples, m)))
    counts = np.zeros(len(index))
    for row in map(tuple, drawn.tolist()):
        counts[index[row]] += 1
    expected = samples * np.array(list(exact.values()))
    p_value = float(stats.chisquare(counts, expected).pvalue)
    passed = worst_tv <= 1e-12 and p_value > 1e-3
    return CheckResult(
        "comband_sampler", passed, worst_tv, 0.0, 1e-12,
        f"max TV over d<=10, m<=4, {repeats} weight draws; chi-square p = {p_value:.4g} "
        f"at {samples} samples (d={d}, m={m})",
    )


CHECKS = {
    "phi_expectation": verify_phi_expectation,
    "unbiased_gradient": verify_unbiased_gradient,
    "second_moment": verify_second_moment,
    "sampling_lemma": verify_sampling_lemma,
    "concavity": verify_concavity,
    "counterexample": verify_counterexample,
    "comband_sampler": verify_comband_sampler,
}


def run_suite(selector: str = "all") -> list[CheckResult]:
    if selector == "all":
        names = list(CHECKS)
    elif selector in CHECKS:
        names = [selector]
    else:
        raise ValueError(f"unknown check {selector!r}; choose 'all' or one of {sorted(CHECKS)}")
    return [CHECKS[name]() for name in names]


def write_report(results: list[CheckResult], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps([r.to_dict() for r in results], indent=2))
    return path
