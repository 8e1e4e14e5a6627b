"""Experimental designs in the unit cube and pick-freeze point sets.

Everything is sampled in normalized coordinates ``[0, 1]^d``;
:class:`InputDistribution` maps to and from physical units at evaluation time.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class InputDistribution:
    """Product of independent uniform marginals ``U(lower_i, upper_i)``."""

    lower: tuple
    upper: tuple
    names: tuple = None

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size == 0:
            raise InputError("lower and upper must be vectors of equal length")
        if not np.all(lo < hi):
            raise InputError("each marginal needs lower < upper")
        object.__setattr__(self, "lower", tuple(lo.tolist()))
        object.__setattr__(self, "upper", tuple(hi.tolist()))
        if self.names is None:
            object.__setattr__(self, "names", tuple(f"x{i + 1}" for i in range(lo.size)))
        elif len(self.names) != lo.size:
            raise InputError("one name per marginal expected")
        else:
            object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def unit(cls, d):
        return cls((0.0,) * d, (1.0,) * d)

    @property
    def dim(self):
        return len(self.lower)

    def to_physical(self, u):
        lo, hi = np.array(self.lower), np.array(self.upper)
        return lo + (hi - lo) * np.asarray(u, dtype=float)

    def to_unit(self, x):
        lo, hi = np.array(self.lower), np.array(self.upper)
        return (np.asarray(x, dtype=float) - lo) / (hi - lo)

    def sample(self, m, seed=None):
        """``m`` i.i.d. draws in normalized coordinates (``seed`` may be a Generator)."""
        return _rng(seed).random((m, self.dim))


@dataclass(frozen=True)
class PickFreezeDesign:
    """Paired Monte-Carlo samples sharing the columns in ``frozen``.

    ``X_tilde2`` (only for the Mauntz estimator) keeps the non-frozen block of
    ``X_tilde`` and redraws the frozen block independently.
    """

    frozen: tuple
    X: np.ndarray
    X_tilde: np.ndarray
    X_tilde2: np.ndarray = None

    @property
    def m(self):
        return self.X.shape[0]

    def stacked(self):
        """All evaluation points: ``X``, then ``X_tilde``, then ``X_tilde2``."""
        blocks = [self.X, self.X_tilde]
        if self.X_tilde2 is not None:
            blocks.append(self.X_tilde2)
        return np.vstack(blocks)


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def lhs(n, d, seed=None):
    """Random Latin hypercube: one point per stratum ``[k/n, (k+1)/n)`` per column."""
    if n < 1 or d < 1:
        raise InputError("lhs needs n >= 1 and d >= 1")
    rng = _rng(seed)
    strata = np.column_stack([rng.permutation(n) for _ in range(d)])
    return (strata + rng.random((n, d))) / n


def centered_l2_discrepancy(points):
    """Squared centered L2 discrepancy (Hickernell) of a design in ``[0,1]^d``."""
    x = np.asarray(points, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InputError("design must be a non-empty n x d matrix")
    n, d = x.shape
    a = np.abs(x - 0.5)
    term1 = (13.0 / 12.0) ** d
    term2 = np.prod(1.0 + 0.5 * a - 0.5 * a * a, axis=1).sum() * 2.0 / n
    pair = 1.0 + 0.5 * a[:, None, :] + 0.5 * a[None, :, :] - 0.5 * np.abs(x[:, None, :] - x[None, :, :])
    term3 = np.prod(pair, axis=2).sum() / n**2
    return float(term1 - term2 + term3)


def _cd_rows_part(x, i, j):
    """Terms of the squared discrepancy that involve rows ``i`` or ``j``."""
    n = x.shape[0]
    a = np.abs(x - 0.5)
    rows = [i, j]
    c = np.prod(1.0 + 0.5 * a[rows] - 0.5 * a[rows] ** 2, axis=1)
    pair = np.prod(
        1.0 + 0.5 * a[rows, None, :] + 0.5 * a[None, :, :] - 0.5 * np.abs(x[rows, None, :] - x[None, :, :]),
        axis=2,
    )
    # pair[0] is row i against every row, pair[1] row j; i-j counted twice overall
    total = 2.0 * (pair[0].sum() + pair[1].sum()) - pair[0, i] - pair[1, j] - 2.0 * pair[0, j]
    return -2.0 / n * c.sum() + total / n**2


def optimize_lhs(n, d, seed=None, iterations=1000):
    """LHS improved by greedy column-wise pair exchanges on the centered L2 discrepancy.

    An exchange swaps two entries of one column, so the Latin hypercube
    stratification is preserved.  Only strictly improving moves are kept.
    """
    if iterations < 0:
        raise InputError("iterations must be >= 0")
    rng = _rng(seed)
    x = lhs(n, d, rng)
    if iterations == 0 or n < 2:
        return x
    for _ in range(iterations):
        col = rng.integers(d)
        i, j = rng.choice(n, size=2, replace=False)
        before = _cd_rows_part(x, i, j)
        x[[i, j], col] = x[[j, i], col]
        if _cd_rows_part(x, i, j) >= before:
            x[[i, j], col] = x[[j, i], col]
    return x


def nested_union(coarse_candidate, fine):
    """Make a coarse design that contains ``fine`` row-exactly.

    For each fine point in row order the nearest remaining candidate
    (Euclidean, lowest index on ties) is removed; the coarse design is
    ``fine`` followed by the surviving candidates.

    Returns
    -------
    (D1, D2) with ``D2 = fine``.
    """
    coarse = np.asarray(coarse_candidate, dtype=float)
    fine = np.asarray(fine, dtype=float)
    if fine.size == 0:
        return coarse.copy(), fine.reshape(0, coarse.shape[1])
    if coarse.ndim != 2 or fine.ndim != 2 or coarse.shape[1] != fine.shape[1]:
        raise InputError("designs must share the input dimension")
    if coarse.shape[0] < fine.shape[0]:
        raise InputError("coarse candidate must have at least as many points as the fine design")
    alive = np.ones(coarse.shape[0], dtype=bool)
    for p in fine:
        dist = np.sum((coarse - p) ** 2, axis=1)
        dist[~alive] = np.inf
        alive[int(np.argmin(dist))] = False
    return np.vstack([fine, coarse[alive]]), fine.copy()


def pick_freeze(dist, u, m, seed=None, with_mauntz=False):
    """Draw a pick-freeze design for the input group ``u`` (0-based indices)."""
    d = dist.dim
    u = tuple(sorted(set(int(i) for i in u)))
    if not u:
        raise InputError("the frozen index set must be non-empty")
    if u[0] < 0 or u[-1] >= d:
        raise InputError(f"indices {u} out of range for dimension {d}")
    if m < 2:
        raise InputError("pick_freeze needs m >= 2")
    rng = _rng(seed)
    X = dist.sample(m, rng)
    X_tilde = dist.sample(m, rng)
    X_tilde[:, u] = X[:, u]
    X_tilde2 = None
    if with_mauntz:
        X_tilde2 = X_tilde.copy()
        X_tilde2[:, u] = dist.sample(m, rng)[:, u]
    return PickFreezeDesign(u, X, X_tilde, X_tilde2)


def contains_rows(big, small):
    """True when every row of ``small`` appears exactly in ``big``."""
    if len(small) == 0:
        return True
    keys = {row.tobytes() for row in np.ascontiguousarray(big, dtype=float)}
    return all(row.tobytes() in keys for row in np.ascontiguousarray(small, dtype=float))


def row_lookup(big, small):
    """Index in ``big`` of each row of ``small`` (exact match); raises if absent."""
    keys = {}
    for i, row in enumerate(np.ascontiguousarray(big, dtype=float)):
        keys.setdefault(row.tobytes(), i)
    out = []
    for row in np.ascontiguousarray(small, dtype=float):
        try:
            out.append(keys[row.tobytes()])
        except KeyError:
            raise InputError("design row not found in the coarser design") from None
    return np.array(out, dtype=int)


def save_csv(path, points, header=None):
    np.savetxt(path, np.asarray(points), delimiter=",", fmt="%.17g",
               header=",".join(header) if header else "", comments="")


def load_csv(path):
    with open(path) as fh:
        first = fh.readline()
    skip = 1 if any(c.isalpha() for c in first.replace("e", "").replace("E", "")) else 0
    return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=skip))
