"""Pick-freeze Monte-Carlo estimators of closed Sobol indices.

Every estimator takes outputs at paired points ``X`` and ``X_tilde`` that
share the studied input block, and estimates
``Var(E[z(X) | X_u]) / Var(z(X))`` as a covariance-over-variance ratio.
The ``*_batch`` functions work along the last axis so that many bootstrap
resamples can be evaluated in one call; degenerate cells come back as NaN.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .design import pick_freeze
from .errors import DegenerateOutputError, InputError

ESTIMATORS = ("sobol93", "janon", "mauntz")

DEGENERATE_RTOL = 1e-12


@dataclass
class PairedEvaluations:
    zX: np.ndarray
    zX_tilde: np.ndarray
    zX_tilde2: np.ndarray = None

    def __post_init__(self):
        self.zX = np.asarray(self.zX, dtype=float)
        self.zX_tilde = np.asarray(self.zX_tilde, dtype=float)
        if self.zX_tilde2 is not None:
            self.zX_tilde2 = np.asarray(self.zX_tilde2, dtype=float)
        vectors = [v for v in (self.zX, self.zX_tilde, self.zX_tilde2) if v is not None]
        if any(v.shape != self.zX.shape for v in vectors) or self.zX.ndim != 1:
            raise InputError("evaluation vectors must be 1-D and of equal length")
        if self.zX.size < 2:
            raise InputError("need at least two pick-freeze pairs")
        if not all(np.all(np.isfinite(v)) for v in vectors):
            raise InputError("evaluations must be finite")

    @property
    def m(self):
        return self.zX.size


def _ratio(num, den, zX):
    scale = np.mean(zX * zX, axis=-1)
    bad = np.abs(den) <= DEGENERATE_RTOL * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(bad, np.nan, num / np.where(bad, 1.0, den))
    return out


def sobol93_batch(zX, zXt):
    """Product-of-means estimator: ``cov(zX, zXt) / var(zX)`` (biased moments)."""
    cx = zX - zX.mean(axis=-1, keepdims=True)
    cy = zXt - zXt.mean(axis=-1, keepdims=True)
    return _ratio(np.mean(cx * cy, axis=-1), np.mean(cx * cx, axis=-1), zX)


def janon_batch(zX, zXt):
    """Pooled-mean estimator with the symmetrized second moment.

    Numerator ``mean(zX*zXt) - c^2`` and denominator
    ``mean((zX^2 + zXt^2)/2) - c^2`` with ``c`` the mean of both samples.
    """
    c = 0.5 * (zX.mean(axis=-1, keepdims=True) + zXt.mean(axis=-1, keepdims=True))
    cx, cy = zX - c, zXt - c
    num = np.mean(cx * cy, axis=-1)
    den = np.mean(0.5 * (cx * cx + cy * cy), axis=-1)
    return _ratio(num, den, zX)


def mauntz_batch(zX, zXt, zXt2):
    """Small-index estimator ``mean((zX - mean zX) * (zXt - zXt2)) / var(zX)``."""
    cx = zX - zX.mean(axis=-1, keepdims=True)
    return _ratio(np.mean(cx * (zXt - zXt2), axis=-1), np.mean(cx * cx, axis=-1), zX)


def estimate_batch(kind, zX, zXt, zXt2=None):
    if kind == "sobol93":
        return sobol93_batch(zX, zXt)
    if kind == "janon":
        return janon_batch(zX, zXt)
    if kind == "mauntz":
        if zXt2 is None:
            raise InputError("the Mauntz estimator needs the third sample")
        return mauntz_batch(zX, zXt, zXt2)
    raise InputError(f"unknown estimator {kind!r}; expected one of {ESTIMATORS}")


def _scalar(value):
    value = float(value)
    if np.isnan(value):
        raise DegenerateOutputError("output variance is zero; index undefined")
    return value


def estimate_sobol93(ev):
    return _scalar(sobol93_batch(ev.zX, ev.zX_tilde))


def estimate_janon(ev):
    return _scalar(janon_batch(ev.zX, ev.zX_tilde))


def estimate_mauntz(ev):
    if ev.zX_tilde2 is None:
        raise InputError("the Mauntz estimator needs zX_tilde2")
    return _scalar(mauntz_batch(ev.zX, ev.zX_tilde, ev.zX_tilde2))


def estimate(kind, ev):
    return _scalar(estimate_batch(kind, ev.zX, ev.zX_tilde, ev.zX_tilde2))


def bootstrap_indices(m, B, seed=None):
    """``B x m`` resampling rows; row 0 is the identity (the original sample).

    Each row is applied jointly to all evaluation vectors so the pick-freeze
    pairing survives resampling.
    """
    if m < 1 or B < 1:
        raise InputError("bootstrap_indices needs m >= 1 and B >= 1")
    rng = np.random.default_rng(seed)
    rows = np.empty((B, m), dtype=np.intp)
    rows[0] = np.arange(m)
    if B > 1:
        rows[1:] = rng.integers(0, m, size=(B - 1, m))
    return rows


class IdentityCheck(NamedTuple):
    """Both sides of ``Var(E[z|X_u]) = Cov(z(X), z(X_tilde))``."""

    lhs: float
    rhs: float
    rhs_se: float


def conditional_variance_grid(z, dist, u, grid=64):
    """``Var(E[z(X) | X_u])`` by the midpoint rule on a tensor grid.

    ``z`` takes an ``(N, d)`` array of physical inputs.  Cost is ``grid**d``
    evaluations, so this is meant for cheap functions in low dimension.
    """
    d = dist.dim
    u = sorted(set(u))
    nodes = (np.arange(grid) + 0.5) / grid
    mesh = np.stack(np.meshgrid(*([nodes] * d), indexing="ij"), axis=-1).reshape(-1, d)
    values = np.asarray(z(dist.to_physical(mesh)), dtype=float).reshape((grid,) * d)
    others = tuple(i for i in range(d) if i not in u)
    cond = values.mean(axis=others) if others else values
    return float(np.mean(cond**2) - np.mean(cond) ** 2)


def pick_freeze_identity_check(z, dist, u, m, seed=None, grid=64):
    """Grid quadrature of the conditional-expectation variance vs. the pick-freeze covariance."""
    lhs = conditional_variance_grid(z, dist, u, grid)
    pf = pick_freeze(dist, u, m, seed)
    zx = np.asarray(z(dist.to_physical(pf.X)), dtype=float)
    zt = np.asarray(z(dist.to_physical(pf.X_tilde)), dtype=float)
    prod = (zx - zx.mean()) * (zt - zt.mean())
    return IdentityCheck(lhs, float(prod.sum() / (m - 1)), float(prod.std(ddof=1) / np.sqrt(m)))


def mc_indices(z, dist, subsets, m, seed=None, estimator="janon"):
    """Plain pick-freeze estimates on the true function, one per input subset."""
    seeds = np.random.SeedSequence(seed).spawn(len(subsets))
    out = []
    for u, s in zip(subsets, seeds):
        pf = pick_freeze(dist, u, m, np.random.default_rng(s), with_mauntz=estimator == "mauntz")
        ev = PairedEvaluations(
            z(dist.to_physical(pf.X)),
            z(dist.to_physical(pf.X_tilde)),
            None if pf.X_tilde2 is None else z(dist.to_physical(pf.X_tilde2)),
        )
        out.append(estimate(estimator, ev))
    return out
