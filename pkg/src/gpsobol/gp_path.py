"""Conditional Gaussian-process paths by kriging conditioning.

A conditional path is built from an unconditioned draw ``Zt`` of the prior
``GP(0, sigma2 * r)``::

    path(x) = Zt(x) + kriging_predictor(x; data - Zt(D))

which has the law of the predictive process without ever factorizing the
(near-singular) predictive covariance.  In "universal" mode the predictor
re-estimates the trend coefficients from ``data - Zt(D)``; in "simple" mode
the trend is zero.

Unconditioned draws come from either a Cholesky factor of the prior
correlation on the (deduplicated) evaluation set, or a Nystrom
approximation of the Karhunen-Loeve expansion built on an anchor design.
The Nystrom draw adds independent noise restoring the exact marginal
variance at each point.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, eigh, solve_triangular

from .design import optimize_lhs
from .errors import InputError
from .kernel import corr_matrix, cross_corr_matrix, stable_cholesky

CHOLESKY_LIMIT = 4000
NYSTROM_ANCHORS = 1000
NYSTROM_MASS = 0.999
NYSTROM_RTOL = 1e-12

_CHUNK = 4096
_FEATURE_CACHE = 1 << 25  # entries of the cached Nystrom feature matrix


@dataclass
class GPPath:
    """One realization evaluated on a finite point set.

    ``levels`` holds the intermediate per-level values of a multi-fidelity
    draw (last entry equals ``values``); it is ``None`` otherwise.
    """

    points: np.ndarray
    values: np.ndarray
    provenance: dict = field(default_factory=dict)
    levels: list = None

    def to_csv(self, path):
        d = self.points.shape[1] if self.points.ndim == 2 else 0
        header = ",".join([f"x{i + 1}" for i in range(d)] + ["value"])
        data = np.column_stack([self.points.reshape(len(self.values), d), self.values])
        np.savetxt(path, data, delimiter=",", fmt="%.17g", header=header, comments="")


class NystromBasis:
    """Truncated eigen-expansion of a correlation kernel on an anchor set.

    ``features(x) @ xi`` with ``xi ~ N(0, I)`` is a draw whose covariance is
    the Nystrom approximation ``r(x, A) K_A^-1 r(A, y)`` (restricted to the
    retained eigenpairs).  A path is the coefficient vector ``xi`` and can be
    evaluated at any new point later.
    """

    def __init__(self, kernel, anchors, rank=None, mass=NYSTROM_MASS, rtol=NYSTROM_RTOL):
        anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
        if rank is not None and rank > len(anchors):
            raise InputError(f"rank {rank} exceeds the anchor set size {len(anchors)}")
        evals, evecs = eigh(corr_matrix(kernel, anchors))
        evals, evecs = evals[::-1], evecs[:, ::-1]
        positive = int(np.sum(evals > rtol * evals[0]))
        if rank is None and mass is not None:
            frac = np.cumsum(evals[:positive]) / np.sum(evals[:positive])
            rank = int(np.searchsorted(frac, mass) + 1)
        rank = positive if rank is None else min(rank, positive)
        self.kernel = kernel
        self.anchors = anchors
        self.rank = rank
        self.eigenvalues = evals[:rank]
        self._T = evecs[:, :rank] / np.sqrt(evals[:rank])

    @classmethod
    def default(cls, kernel, size=NYSTROM_ANCHORS, seed=0, mass=NYSTROM_MASS):
        """Optimized-LHS anchors, truncated at ``mass`` of the eigenvalue sum."""
        anchors = optimize_lhs(size, kernel.dim, seed, iterations=2 * size)
        return cls(kernel, anchors, mass=mass)

    @classmethod
    def for_model(cls, model, size=NYSTROM_ANCHORS, seed=0):
        """Anchors = model design plus an optimized LHS, kept to numerical rank.

        Conditioning cannot remove the independent residual noise, so the
        expansion must be accurate relative to the predictive variance, not
        the prior variance; including the design makes it exact there.
        """
        extra = optimize_lhs(size, model.dim, seed, iterations=2 * size)
        extra = extra[~_rows_in(extra, model.design)]
        return cls(model.kernel, np.vstack([model.design, extra]), mass=None)

    def features(self, X):
        return cross_corr_matrix(self.kernel, X, self.anchors) @ self._T


def _rows_in(X, Y):
    keys = {row.tobytes() for row in np.ascontiguousarray(Y, dtype=float)}
    return np.array([row.tobytes() in keys for row in np.ascontiguousarray(X, dtype=float)], dtype=bool)


def _unique_with_design(design, points):
    stacked = np.vstack([design, points]) if len(points) else design
    U, inv = np.unique(stacked, axis=0, return_inverse=True)
    inv = inv.ravel()
    return U, inv[:len(design)], inv[len(design):]


def _choose_method(method, size):
    if method == "auto":
        return "cholesky" if size <= CHOLESKY_LIMIT else "nystrom"
    if method not in ("cholesky", "nystrom"):
        raise InputError(f"unknown sampling method {method!r}")
    return method


class _PriorSampler:
    """Unconditioned draws of ``GP(0, sigma2 * (r + nugget))`` on fixed points."""

    def __init__(self, kernel, sigma2, points, nugget, method, basis=None):
        self.points = points
        self.scale = np.sqrt(sigma2)
        self.method = method
        self.nugget = nugget
        if method == "cholesky":
            self.L, _ = stable_cholesky(corr_matrix(kernel, points), nugget)
        else:
            self.basis = basis if basis is not None else NystromBasis.default(kernel)
            if self.basis.kernel != kernel:
                raise InputError("Nystrom basis was built for a different kernel")
            self._features = None
            if len(points) * self.basis.rank <= _FEATURE_CACHE:
                Phi = self.basis.features(points)
                self._features = (Phi, self._residual_scale(Phi))

    def _residual_scale(self, Phi):
        return np.sqrt(np.maximum(1.0 + self.nugget - np.sum(Phi * Phi, axis=1), 0.0))

    def draw(self, rngs):
        U = len(self.points)
        if self.method == "cholesky":
            E = np.column_stack([rng.standard_normal(U) for rng in rngs])
            return self.scale * (self.L @ E)
        r = self.basis.rank
        xi = np.empty((r, len(rngs)))
        E = np.empty((U, len(rngs)))
        for k, rng in enumerate(rngs):
            xi[:, k] = rng.standard_normal(r)
            E[:, k] = rng.standard_normal(U)
        if self._features is not None:
            Phi, resid = self._features
            return self.scale * (Phi @ xi + resid[:, None] * E)
        out = np.empty((U, len(rngs)))
        for start in range(0, U, _CHUNK):
            sl = slice(start, start + _CHUNK)
            Phi = self.basis.features(self.points[sl])
            out[sl] = Phi @ xi + self._residual_scale(Phi)[:, None] * E[sl]
        return self.scale * out


def _conditioning_coefficients(model, V, mode):
    """Trend and correlation weights of the predictor fed with data ``V`` (n x K)."""
    if mode == "simple":
        G = np.zeros((model.q, V.shape[1]))
        W = cho_solve((model.L, True), V, check_finite=False)
        return G, W
    if mode != "universal":
        raise InputError(f"unknown conditioning mode {mode!r}")
    LV = solve_triangular(model.L, V, lower=True, check_finite=False)
    G = cho_solve((model.LA, True), model._G.T @ LV, check_finite=False)
    W = solve_triangular(model.L, LV - model._G @ G, lower=True, trans="T", check_finite=False)
    return G, W


def _predictor(model, P, HP, G, W):
    out = np.empty((len(P), W.shape[1]))
    for start in range(0, len(P), _CHUNK):
        sl = slice(start, start + _CHUNK)
        out[sl] = model.cross(P[sl]) @ W
        if HP is not None:
            out[sl] += HP[sl] @ G
    return out


def condition_path(model, points, prior_at_points, prior_at_design, mode="universal", data=None,
                   regressors=None):
    """Turn unconditioned values into a conditional path of ``model``.

    Parameters
    ----------
    model : KrigingModel
    points : (M, d) array
    prior_at_points : (M,) array
        Unconditioned draw at ``points``.
    prior_at_design : (n,) array
        The same draw at the design points (required).
    mode : {"universal", "simple"}
        "simple" fixes the trend coefficients of the correction to zero.
    data : (n,) array, optional
        Values to condition on; defaults to the model observations.
    regressors : (M, q) array, optional
        Regressors at ``points`` for universal mode (defaults to the model's
        trend basis).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, model.dim)
    zp = np.asarray(prior_at_points, dtype=float).reshape(len(points), -1)
    if prior_at_design is None:
        raise InputError("unconditioned values at the design points are required")
    zd = np.asarray(prior_at_design, dtype=float).reshape(-1, zp.shape[1])
    if zd.shape[0] != model.n:
        raise InputError(f"need unconditioned values at all {model.n} design points, got {zd.shape[0]}")
    data = model.z if data is None else np.asarray(data, dtype=float)
    V = data.reshape(model.n, -1) - zd
    G, W = _conditioning_coefficients(model, V, mode)
    HP = None
    if mode == "universal":
        HP = model.regressors(points) if regressors is None else regressors
    values = zp + _predictor(model, points, HP, G, W)
    values = values[:, 0] if np.ndim(prior_at_points) == 1 else values
    return GPPath(points, values, {"mode": mode})


class ConditionalSampler:
    """Draws conditional paths of a kriging model on a fixed point set.

    Everything that depends only on the model and the points (deduplicated
    evaluation set, prior factorization or Nystrom basis) is computed once;
    :meth:`draw` then produces one path per generator, so a path depends only
    on its own generator and not on how paths are batched.

    Parameters
    ----------
    model : KrigingModel
    points : (M, d) array
    method : {"auto", "cholesky", "nystrom"}
        "auto" picks Cholesky when the deduplicated set (points plus design)
        has at most ``CHOLESKY_LIMIT`` rows.
    mode : {"universal", "simple"}
    basis : NystromBasis, optional
        Reused across samplers for the same kernel.
    """

    def __init__(self, model, points, method="auto", mode="universal", basis=None):
        self.model = model
        self.points = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, model.dim)
        self.mode = mode
        U, self._idx_design, self._idx_points = _unique_with_design(model.design, self.points)
        self._U = U
        self.method = _choose_method(method, len(U))
        if self.method == "nystrom" and basis is None:
            basis = NystromBasis.for_model(model)
        self._prior = _PriorSampler(model.kernel, model.sigma2, U, model.nugget, self.method, basis)
        self._HU = model.regressors(U) if mode == "universal" else None

    @property
    def basis(self):
        return getattr(self._prior, "basis", None)

    def draw_prior(self, rngs):
        return self._prior.draw(rngs)

    def draw(self, rngs, data=None):
        """Conditional paths at ``points``, shape ``(M, len(rngs))``.

        ``data`` (n,) or (n, K) replaces the model observations; simple-mode
        multi-fidelity levels pass one residual vector per path.
        """
        Zt = self._prior.draw(rngs)
        data = self.model.z if data is None else np.asarray(data, dtype=float)
        data = np.broadcast_to(data.reshape(self.model.n, -1), (self.model.n, len(rngs)))
        G, W = _conditioning_coefficients(self.model, data - Zt[self._idx_design], self.mode)
        paths = Zt + _predictor(self.model, self._U, self._HU, G, W)
        # the predictor reproduces its data at design points; remove roundoff there
        paths[self._idx_design] = data
        return paths[self._idx_points]


def sample_unconditioned(kernel, sigma2, points, seed=None, method="cholesky", nugget=0.0,
                         n_paths=None, basis=None, rank=None):
    """Draw from ``GP(0, sigma2 * r)`` on ``points``.

    ``method="nystrom"`` uses ``basis`` if given, otherwise builds one on the
    default anchor design truncated at ``rank`` (or at 99.9% eigenvalue mass).
    Returns shape ``(M,)``, or ``(M, n_paths)`` when ``n_paths`` is given.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, kernel.dim)
    if len(points) == 0:
        return np.empty(0) if n_paths is None else np.empty((0, n_paths))
    if method == "nystrom" and basis is None:
        anchors = optimize_lhs(NYSTROM_ANCHORS, kernel.dim, 0, iterations=2 * NYSTROM_ANCHORS)
        basis = NystromBasis(kernel, anchors, rank=rank)
    U, inv = np.unique(points, axis=0, return_inverse=True)
    prior = _PriorSampler(kernel, sigma2, U, nugget, _choose_method(method, len(U)), basis)
    seeds = np.random.SeedSequence(seed).spawn(1 if n_paths is None else n_paths)
    values = prior.draw([np.random.default_rng(s) for s in seeds])[inv.ravel()]
    return values[:, 0] if n_paths is None else values


def path_rngs(seed, count):
    """Independent per-path generators derived from one master seed."""
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in seq.spawn(count)]


def sample_conditional(model, points, seed=None, method="auto", mode="universal", n_paths=None,
                       basis=None):
    """Conditional path(s) of ``model`` on ``points``; deterministic in ``seed``."""
    points = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, model.dim)
    count = 1 if n_paths is None else n_paths
    if len(points) == 0:
        values = np.empty(0) if n_paths is None else np.empty((0, count))
        return GPPath(points, values, {"seed": seed})
    sampler = ConditionalSampler(model, points, method, mode, basis)
    values = sampler.draw(path_rngs(seed, count))
    if n_paths is None:
        values = values[:, 0]
    return GPPath(points, values, {"seed": seed, "method": sampler.method, "mode": mode})
