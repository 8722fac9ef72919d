"""Set functions over a finite ground set: sum-max construction, dense tables,
subset decompositions and brute-force property checkers.

Arms are 0-based in code. A subset is either an iterable of arms or a bitmask
with bit ``i`` set iff arm ``i`` belongs to the subset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import (
    as_mask,
    check_finite_array,
    check_table_size,
    popcount,
)

SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class SumMaxFunction:
    """r(S) = sum_k max_{i in S} values[k, i] for S nonempty, r(empty) = empty_value."""

    values: np.ndarray
    empty_value: float = 0.0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = check_finite_array(self.values, "values", ndim=2)
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError("values must have at least one row and one column")
        empty_value = float(self.empty_value)
        if not np.isfinite(empty_value):
            raise ValueError("empty_value must be finite")
        floor = float(values.min(axis=1).sum())
        if empty_value > floor + SLACK * max(1.0, abs(floor)):
            raise ValueError(
                f"empty_value {empty_value} exceeds sum of row minima {floor}"
            )
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "empty_value", empty_value)

    @property
    def num_rows(self) -> int:
        return self.values.shape[0]

    @property
    def num_arms(self) -> int:
        return self.values.shape[1]

    def __call__(self, subset) -> float:
        return eval_summax(self, subset)

    def evaluate_masks(self, masks: np.ndarray) -> np.ndarray:
        """Vectorised evaluation on a boolean array of shape (..., num_arms)."""
        masks = np.asarray(masks, dtype=bool)
        picked = np.where(masks[..., None, :], self.values, -np.inf)
        out = picked.max(axis=-1).sum(axis=-1)
        return np.where(masks.any(axis=-1), out, self.empty_value)


@dataclass(frozen=True, eq=False)
class TabulatedSetFunction:
    """Dense table of a set function; ``table[mask]`` is r(S)."""

    num_arms: int
    table: np.ndarray

    def __post_init__(self):
        table = check_finite_array(self.table, "table", ndim=1)
        if self.num_arms < 1:
            raise ValueError("num_arms must be positive")
        if table.shape[0] != 1 << self.num_arms:
            raise ValueError(
                f"table length {table.shape[0]} != 2**{self.num_arms}"
            )
        table = table.copy()
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    def __call__(self, subset) -> float:
        return float(self.table[as_mask(subset, self.num_arms)])

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.table)))


@dataclass(frozen=True, eq=False)
class SubsetDecomposition:
    """Coefficients d with r(Q) = sum over S containing Q of d(S)."""

    num_arms: int
    coeffs: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return _superset_sum(np.asarray(self.coeffs, dtype=float), self.num_arms)


@dataclass(frozen=True, eq=False)
class Witness:
    subset: int
    violation: float
    vector: np.ndarray | None = None
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class PropertyReport:
    name: str
    holds: bool
    witness: Witness | None = None
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.holds == (self.witness is not None):
            raise ValueError("a witness is present exactly when the property fails")

    def to_dict(self) -> dict:
        out = {"property": self.name, "holds": self.holds, **self.detail}
        if self.witness is not None:
            w = self.witness
            out["witness"] = {
                "subset": w.subset,
                "violation": w.violation,
                "vector": None if w.vector is None else w.vector.tolist(),
                **w.detail,
            }
        return out


def eval_summax(f: SumMaxFunction, subset) -> float:
    mask = as_mask(subset, f.num_arms)
    if mask == 0:
        return f.empty_value
    cols = [i for i in range(f.num_arms) if mask >> i & 1]
    return float(f.values[:, cols].max(axis=1).sum())


def build_summax(kind: str, **params) -> SumMaxFunction:
    """Build one of the standard sum-max families.

    ``hitting_set``: ``sets`` (list of arm collections), ``n_arms``.
    ``best_of_k``: ``arms`` (the attracting set A), ``n_arms``.
    ``combinatorial``: ``weights`` (nonnegative, one per arm).
    ``k_medians``: ``points`` (array of shape (n,) or (n, dim)) and ``metric``
    (``"euclidean"``, ``"manhattan"`` or a precomputed distance matrix).
    """
    if kind == "hitting_set":
        sets = params.get("sets")
        n_arms = params.get("n_arms")
        if not sets:
            raise ValueError("hitting_set needs a non-empty list of sets")
        if n_arms is None:
            raise ValueError("hitting_set needs n_arms")
        values = np.zeros((len(sets), n_arms))
        for k, members in enumerate(sets):
            for arm in members:
                if not 0 <= arm < n_arms:
                    raise ValueError(f"arm {arm} out of range")
                values[k, arm] = 1.0
        return SumMaxFunction(values, 0.0, {"kind": kind})
    if kind == "best_of_k":
        arms = params.get("arms")
        n_arms = params.get("n_arms")
        if arms is None or n_arms is None:
            raise ValueError("best_of_k needs arms and n_arms")
        f = build_summax("hitting_set", sets=[list(arms)], n_arms=n_arms)
        return SumMaxFunction(f.values, 0.0, {"kind": kind})
    if kind == "combinatorial":
        weights = params.get("weights")
        if weights is None or len(weights) == 0:
            raise ValueError("combinatorial needs a non-empty weight vector")
        w = check_finite_array(weights, "weights", ndim=1)
        if np.any(w < 0):
            raise ValueError("combinatorial weights must be nonnegative")
        return SumMaxFunction(np.diag(w), 0.0, {"kind": kind})
    if kind == "k_medians":
        points = params.get("points")
        if points is None or len(points) == 0:
            raise ValueError("k_medians needs a non-empty point list")
        dist = _distance_matrix(points, params.get("metric", "euclidean"))
        shift = float(dist.max())
        return SumMaxFunction(shift - dist, 0.0, {"kind": kind, "shift": shift})
    raise ValueError(f"unknown sum-max family {kind!r}")


def _distance_matrix(points, metric) -> np.ndarray:
    if isinstance(metric, str):
        pts = check_finite_array(points, "points")
        if pts.ndim == 1:
            pts = pts[:, None]
        diff = pts[:, None, :] - pts[None, :, :]
        if metric == "euclidean":
            return np.sqrt((diff**2).sum(axis=-1))
        if metric == "manhattan":
            return np.abs(diff).sum(axis=-1)
        raise ValueError(f"unknown metric {metric!r}")
    dist = check_finite_array(metric, "distance matrix", ndim=2)
    n = len(points)
    if dist.shape != (n, n):
        raise ValueError(f"distance matrix must be {n}x{n}")
    if np.max(np.abs(dist - dist.T)) > 1e-12:
        raise ValueError("distance matrix is not symmetric")
    if np.any(dist < 0) or np.any(np.abs(np.diag(dist)) > 1e-12):
        raise ValueError("distance matrix must be nonnegative with zero diagonal")
    return dist


def tabulate(f, limit: int | None = None) -> TabulatedSetFunction:
    """Dense table of a sum-max function (or pass-through for a table).

    Both paths enforce the table limit, which bounds the cost of every checker.
    """
    check_table_size(f.num_arms, limit)
    if isinstance(f, TabulatedSetFunction):
        return f
    # running row-wise maxima, doubling the table one arm at a time
    row_max = np.full((f.num_rows, 1), -np.inf)
    for i in range(f.num_arms):
        row_max = np.concatenate(
            [row_max, np.maximum(row_max, f.values[:, i : i + 1])], axis=1
        )
    table = row_max.sum(axis=0)
    table[0] = f.empty_value
    return TabulatedSetFunction(f.num_arms, table)


def _butterfly(arr: np.ndarray, n_arms: int, op) -> np.ndarray:
    """Apply ``op(low, high)`` across every bit, in place over a copy.

    ``low`` are the entries whose bit is clear and ``high`` their partners with
    the bit set; ``op`` returns the pair (new_low, new_high).
    """
    out = np.array(arr, dtype=float, copy=True)
    for b in range(n_arms):
        view = out.reshape(-1, 2, 1 << b)
        low, high = op(view[:, 0, :], view[:, 1, :])
        view[:, 0, :] = low
        view[:, 1, :] = high
    return out


def _superset_sum(values: np.ndarray, n_arms: int) -> np.ndarray:
    return _butterfly(values, n_arms, lambda lo, hi: (lo + hi, hi))


def subset_decomposition(g, limit: int | None = None) -> SubsetDecomposition:
    """Unique d with r(Q) = sum_{S >= Q} d(S).

    Solves the superset-triangular system by Moebius inversion, one arm at a
    time; this is the same elimination as peeling subsets from the full set
    down to smaller cardinalities.
    """
    g = tabulate(g, limit)
    check_table_size(g.num_arms, limit)
    coeffs = _butterfly(g.table, g.num_arms, lambda lo, hi: (lo - hi, hi))
    return SubsetDecomposition(g.num_arms, coeffs)


def pair_matrices(g: TabulatedSetFunction) -> np.ndarray:
    """U[S, i, j] = r(S | {i, j}) for every subset S, shape (2**L, L, L)."""
    n = g.num_arms
    bits = 1 << np.arange(n)
    idx = np.arange(1 << n)[:, None, None] | bits[None, :, None] | bits[None, None, :]
    return g.table[idx]


def quadratic_form(g: TabulatedSetFunction, subset, x) -> float:
    """x^T U^{r,S} x with U_ij = r(S | {i, j})."""
    mask = as_mask(subset, g.num_arms)
    x = np.asarray(x, dtype=float)
    bits = 1 << np.arange(g.num_arms)
    u = g.table[mask | bits[:, None] | bits[None, :]]
    return float(x @ u @ x)


def check_pseudo_concave(g, tol: float | None = None) -> PropertyReport:
    """Nonpositivity of every U^{r,S} on the zero-sum subspace."""
    g = tabulate(g)
    n = g.num_arms
    if tol is None:
        tol = 1e-9 * max(g.scale, 1.0)
    if tol <= 0:
        raise ValueError("tol must be positive")
    u = pair_matrices(g)
    sym = 0.5 * (u + np.swapaxes(u, 1, 2))
    proj = np.eye(n) - np.full((n, n), 1.0 / n)
    eigval, eigvec = np.linalg.eigh(proj @ sym @ proj)
    top = eigval[:, -1]
    bad = np.flatnonzero(top > tol)
    detail = {"max_eigenvalue": float(top.max()), "tol": tol}
    if bad.size == 0:
        return PropertyReport("pseudo_concave", True, detail=detail)
    mask = int(bad[0])
    x = proj @ eigvec[mask, :, -1]
    x /= np.linalg.norm(x)
    witness = Witness(mask, quadratic_form(g, mask, x), x)
    return PropertyReport("pseudo_concave", False, witness, detail)


def _marginals(g: TabulatedSetFunction, arm: int) -> np.ndarray:
    """m[S] = r(S + arm) - r(S) for S without arm; NaN where S contains arm."""
    masks = np.arange(1 << g.num_arms)
    bit = 1 << arm
    out = np.full(masks.shape, np.nan)
    without = (masks & bit) == 0
    out[without] = g.table[masks[without] | bit] - g.table[masks[without]]
    return out


def check_monotone_submodular(g) -> PropertyReport:
    """Monotonicity and diminishing returns over all S <= T, i not in T."""
    g = tabulate(g)
    n = g.num_arms
    mono_witness = None
    sub_witness = None
    for arm in range(n):
        marg = _marginals(g, arm)
        if mono_witness is None:
            neg = np.flatnonzero(marg < -SLACK)
            if neg.size:
                s = int(neg[0])
                mono_witness = Witness(s, float(-marg[s]), detail={"arm": arm, "kind": "monotone"})
        if sub_witness is None:
            filled = np.where(np.isnan(marg), -np.inf, marg)
            # sup_marg[S] = max over supersets T (without arm) of the marginal at T
            sup_marg = _butterfly(filled, n, lambda lo, hi: (np.maximum(lo, hi), hi))
            valid = ~np.isnan(marg)
            gap = np.full(marg.shape, -np.inf)
            gap[valid] = sup_marg[valid] - marg[valid]
            bad = np.flatnonzero(gap > SLACK)
            if bad.size:
                s = int(bad[0])
                sup = _supersets_without(s, arm, n)
                t = int(sup[np.argmax(marg[sup])])
                sub_witness = Witness(
                    s,
                    float(marg[t] - marg[s]),
                    detail={"arm": arm, "superset": t, "kind": "submodular"},
                )
    monotone = mono_witness is None
    submodular = sub_witness is None
    detail = {"monotone": monotone, "submodular": submodular}
    if monotone and submodular:
        return PropertyReport("monotone_submodular", True, detail=detail)
    return PropertyReport("monotone_submodular", False, mono_witness or sub_witness, detail)


def _supersets_without(mask: int, arm: int, n_arms: int) -> np.ndarray:
    masks = np.arange(1 << n_arms)
    return masks[((masks & mask) == mask) & ((masks >> arm & 1) == 0)]


def check_pseudo_submodular(g) -> PropertyReport:
    """Every nonempty S has some i whose marginals below S - i dominate the last one."""
    g = tabulate(g)
    n = g.num_arms
    size = 1 << n
    masks = np.arange(size)
    admissible = np.zeros(size, dtype=bool)
    shortfall = np.full(size, np.inf)
    for arm in range(n):
        bit = 1 << arm
        marg = _marginals(g, arm)
        filled = np.where(np.isnan(marg), np.inf, marg)
        # sub_min[T] = min over subsets Q of T (without arm) of the marginal at Q
        sub_min = _butterfly(filled, n, lambda lo, hi: (lo, np.minimum(lo, hi)))
        has = (masks & bit) != 0
        rest = masks[has] ^ bit
        gap = marg[rest] - sub_min[rest]
        admissible[has] |= gap <= SLACK
        shortfall[has] = np.minimum(shortfall[has], gap)
    bad = np.flatnonzero(~admissible[1:]) + 1
    if bad.size == 0:
        return PropertyReport("pseudo_submodular", True)
    s = int(bad[0])
    return PropertyReport("pseudo_submodular", False, Witness(s, float(shortfall[s])))


COUNTEREXAMPLE_ARMS = 8


def build_counterexample(alpha: float = 2.0 / 3.0) -> TabulatedSetFunction:
    """Monotone submodular function on 8 arms that is not pseudo-concave.

    Triples containing the last arm take their values from the pair matrix at
    S = {last arm}; all remaining values are the fixed constants chosen for
    alpha = 2/3. Only the quadratic form 17 - 24 alpha at the
    (1,1,1,1,-1,-1,-1,-1) direction is parametric in alpha.
    """
    alpha = float(alpha)
    if not 0.0 < alpha < 17.0 / 24.0:
        raise ValueError("alpha must lie in (0, 17/24)")
    n = COUNTEREXAMPLE_ARMS
    last = 1 << (n - 1)
    group_a = 0b0001111
    group_b = 0b1110000
    by_size = {0: -1.0, 1: 0.0, 2: 1.0, 3: 5.0 / 3.0}
    for k in range(4, n + 1):
        by_size[k] = 2.0 + (k - 3) / 6.0
    masks = np.arange(1 << n)
    sizes = popcount(masks)
    table = np.array([by_size[int(k)] for k in sizes])
    for mask in masks[(sizes == 3) & ((masks & last) != 0)]:
        others = int(mask) & ~last
        same_group = (others & group_a) == others or (others & group_b) == others
        table[mask] = 2.0 if same_group else 1.0 + alpha
    return TabulatedSetFunction(n, table)


COUNTEREXAMPLE_DIRECTION = np.array([1.0, 1, 1, 1, -1, -1, -1, -1])
COUNTEREXAMPLE_SUBSET = 1 << (COUNTEREXAMPLE_ARMS - 1)


# -- file format ----------------------------------------------------------


def function_from_dict(spec: dict):
    kind = spec.get("type")
    if kind == "summax":
        values = spec["V"]
        f = SumMaxFunction(np.asarray(values, dtype=float), float(spec.get("empty", 0.0)))
        if "L" in spec and spec["L"] != f.num_arms:
            raise ValueError(f"L={spec['L']} does not match V with {f.num_arms} columns")
        if "N" in spec and spec["N"] != f.num_rows:
            raise ValueError(f"N={spec['N']} does not match V with {f.num_rows} rows")
        return f
    if kind == "table":
        return TabulatedSetFunction(int(spec["L"]), np.asarray(spec["values"], dtype=float))
    raise ValueError(f"unknown set-function type {kind!r}")


def function_to_dict(f) -> dict:
    if isinstance(f, SumMaxFunction):
        return {
            "type": "summax",
            "L": f.num_arms,
            "N": f.num_rows,
            "V": f.values.tolist(),
            "empty": f.empty_value,
        }
    if isinstance(f, TabulatedSetFunction):
        return {"type": "table", "L": f.num_arms, "values": f.table.tolist()}
    raise TypeError(f"cannot serialise {type(f).__name__}")


def load_function(path):
    with open(Path(path)) as fh:
        return function_from_dict(json.load(fh))


def save_function(f, path) -> None:
    with open(Path(path), "w") as fh:
        json.dump(function_to_dict(f), fh)
