"""Stationary tensor-product correlation kernels.

All kernels here are products of one-dimensional correlation functions of
the scaled distance ``h = |x_i - y_i| / theta_i``.  The nugget is treated as
part of the kernel: it is added whenever two points coincide exactly, so that
a cross-correlation vector evaluated at a design point equals the matching
column of the (nugget-inflated) correlation matrix.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, LinAlgError

from .errors import ConditioningError, InputError

FAMILIES = ("matern52", "sqexp")

DEFAULT_NUGGET = 1e-8
MAX_NUGGET = 1e-4

_SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class KernelSpec:
    """Correlation family plus one positive length scale per input."""

    family: str
    length_scales: tuple

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        theta = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        if theta.ndim != 1 or theta.size == 0:
            raise InputError("length_scales must be a non-empty vector")
        if not np.all(np.isfinite(theta)) or np.any(theta <= 0):
            raise InputError(f"length scales must be positive and finite, got {theta}")
        object.__setattr__(self, "length_scales", tuple(float(t) for t in theta))

    @property
    def dim(self):
        return len(self.length_scales)

    @property
    def theta(self):
        return np.array(self.length_scales)

    def with_length_scales(self, theta):
        return KernelSpec(self.family, tuple(np.asarray(theta, dtype=float)))

    def to_dict(self):
        return {"family": self.family, "length_scales": list(self.length_scales)}

    @classmethod
    def from_dict(cls, data):
        return cls(data["family"], tuple(data["length_scales"]))


def _rho(family, h):
    if family == "matern52":
        return (1.0 + _SQRT5 * h + (5.0 / 3.0) * h * h) * np.exp(-_SQRT5 * h)
    return np.exp(-0.5 * h * h)


def _as_points(x, d, name):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :] if d is None or x.size == d else x[:, None]
    if x.ndim != 2:
        raise InputError(f"{name} must be a point or a matrix of points")
    if d is not None and x.shape[1] != d and x.shape[0] > 0:
        raise InputError(f"{name} has dimension {x.shape[1]}, kernel expects {d}")
    return x


def correlation(spec, x, y):
    """Correlation between two single points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != (spec.dim,) or y.shape != (spec.dim,):
        raise InputError(
            f"points must have dimension {spec.dim}, got {x.shape} and {y.shape}"
        )
    h = np.abs(x - y) / spec.theta
    return float(np.prod(_rho(spec.family, h)))


def cross_corr_matrix(spec, x, y, nugget=0.0):
    """Correlations between every row of ``x`` and every row of ``y``.

    Returns an array of shape ``(len(x), len(y))``.  ``nugget`` is added to
    entries where the two points coincide exactly.
    """
    x = _as_points(x, spec.dim, "x")
    y = _as_points(y, spec.dim, "y")
    out = np.ones((x.shape[0], y.shape[0]))
    same = np.ones(out.shape, dtype=bool) if nugget else None
    for i, theta in enumerate(spec.length_scales):
        diff = np.abs(x[:, i, None] - y[None, :, i])
        out *= _rho(spec.family, diff / theta)
        if same is not None:
            same &= diff == 0.0
    if same is not None:
        out[same] += nugget
    return out


def paired_corr(spec, x, y, nugget=0.0):
    """Correlations ``r(x_i, y_i)`` between matching rows of two point sets."""
    x = _as_points(x, spec.dim, "x")
    y = _as_points(y, spec.dim, "y")
    if x.shape != y.shape:
        raise InputError("paired point sets must have the same shape")
    h = np.abs(x - y) / spec.theta
    return np.prod(_rho(spec.family, h), axis=1) + nugget * np.all(h == 0.0, axis=1)


def corr_matrix(spec, points, nugget=0.0):
    """Correlation matrix ``R`` of a point set, with ``nugget`` on the diagonal."""
    if nugget < 0:
        raise InputError("nugget must be nonnegative")
    points = _as_points(points, spec.dim, "points")
    if points.shape[0] < 1:
        raise InputError("corr_matrix needs at least one point")
    R = cross_corr_matrix(spec, points, points)
    R[np.diag_indices_from(R)] += nugget
    return R


def cross_corr(spec, x, design, nugget=0.0):
    """Vector ``r(x)`` of correlations between ``x`` and each design row."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (spec.dim,):
        raise InputError(f"x must have dimension {spec.dim}")
    design = np.asarray(design, dtype=float).reshape(-1, spec.dim)
    if design.shape[0] == 0:
        return np.empty(0)
    return cross_corr_matrix(spec, x[None, :], design, nugget)[0]


def stable_cholesky(R, nugget=0.0, max_nugget=MAX_NUGGET):
    """Lower Cholesky factor of ``R + nugget*I`` with nugget escalation.

    ``R`` must not already contain the nugget.  On failure the nugget is
    multiplied by 10 until ``max_nugget``; a zero nugget is tried only once.

    Returns
    -------
    L : ndarray
        Lower-triangular factor.
    nugget : float
        The nugget that succeeded.
    """
    tried = []
    eta = float(nugget)
    diag = np.diag_indices_from(R)
    while True:
        tried.append(eta)
        A = R.copy()
        A[diag] += eta
        try:
            L = cholesky(A, lower=True, check_finite=False)
            if np.all(np.isfinite(L)) and np.all(np.diag(L) > 0):
                return L, eta
        except LinAlgError:
            pass
        if eta == 0.0 or eta * 10 > max_nugget * (1 + 1e-12):
            break
        eta *= 10
    raise ConditioningError(
        f"correlation matrix of size {R.shape[0]} not factorizable; nuggets tried {tried}",
        tried,
    )
