"""Recursive multi-fidelity co-kriging and its Sobol analysis.

Level ``t >= 2`` follows ``z_t(x) = rho_{t-1} z_{t-1}(x) + f_t(x)' beta_t + delta_t(x)``
with ``delta_t`` a Gaussian process independent of the coarser levels.  Each
level is stored as a :class:`~gpsobol.kriging.KrigingModel` whose regression
matrix is ``H_t = [z_{t-1}(D_t), F_t]``, so the GLS coefficients are
``(rho_hat, beta_hat)`` and the residual variance uses ``n_t - p_t - 1``
degrees of freedom.  Designs must be nested, ``D_s ⊆ ... ⊆ D_1``, and
``z_{t-1}(D_t)`` always uses the observed coarser values.

Predictive moments follow the recursions

``mu^t(x) = rho_hat mu^{t-1}(x) + mu_delta_t(x)``

``k^t(x, y) = E[rho^2] k^{t-1}(x, y) + k_delta_t(x, y)``

where ``k_delta_t`` is the universal-kriging covariance of level ``t`` with
regressors ``h_t(x) = [mu^{t-1}(x), f_t(x)]`` and
``E[rho^2] = rho_hat^2 + sigma_t^2 [(H' R^-1 H)^-1]_11``.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .design import InputDistribution, contains_rows, pick_freeze, row_lookup
from .errors import DegenerateOutputError, InputError
from .gp_path import ConditionalSampler, GPPath, path_rngs
from .kernel import DEFAULT_NUGGET, KernelSpec
from .kriging import KrigingModel, fit, trend_basis
from .kriging_sobol import (
    _check_args,
    _finalize,
    first_approach_ratio,
    index_samples,
    seed_streams,
)

FORMAT = "gpsobol/multifidelity"
FORMAT_VERSION = 1


def _per_level(value, s, name):
    if isinstance(value, (list, tuple)):
        if len(value) != s:
            raise InputError(f"{name}: expected {s} entries, got {len(value)}")
        return list(value)
    return [value] * s


@dataclass
class MultiFidelityModel:
    """Fitted co-kriging model; ``levels[0]`` is plain kriging on ``D_1``.

    ``parents[t]`` holds, for ``t >= 1``, the row of each ``D_{t+1}`` point in
    ``D_t`` (0-based level numbering in code).
    """

    levels: list
    parents: list

    @property
    def s(self):
        return len(self.levels)

    @property
    def dim(self):
        return self.levels[0].dim

    def trend(self, t):
        return self.levels[t].trend

    def regressors(self, t, X, mu_prev=None):
        """``h_t(X)``: trend basis, preceded by ``mu^{t-1}(X)`` for ``t >= 1``."""
        F = trend_basis(self.levels[t].trend, X)
        if t == 0:
            return F
        return np.column_stack([mu_prev, F])

    def rho(self, t):
        """Posterior mean of the adjustment coefficient entering level ``t`` (``t >= 1``)."""
        return float(self.levels[t].coef[0])

    def rho_sq(self, t):
        """``E[rho^2]`` under the Gaussian posterior of level ``t``'s coefficients."""
        lvl = self.levels[t]
        return float(lvl.coef[0] ** 2 + lvl.coef_cov()[0, 0])

    def means(self, X):
        """``[mu^1(X), ..., mu^s(X)]``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = []
        mu = None
        for t, lvl in enumerate(self.levels):
            mu = lvl.mean_with(X, self.regressors(t, X, mu))
            out.append(mu)
        return out

    def predict_mean(self, X):
        X = np.asarray(X, dtype=float)
        mu = self.means(X)[-1]
        return float(mu[0]) if X.ndim == 1 else mu

    def predict_cov_matrix(self, X, Y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        mX, mY = self.means(X), self.means(Y)
        K = None
        for t, lvl in enumerate(self.levels):
            HX = self.regressors(t, X, mX[t - 1] if t else None)
            HY = self.regressors(t, Y, mY[t - 1] if t else None)
            kd = lvl.cov_with(X, Y, HX, HY)
            K = kd if t == 0 else self.rho_sq(t) * K + kd
        return K

    def predict_cov(self, x, y):
        return float(self.predict_cov_matrix(np.ravel(x)[None, :], np.ravel(y)[None, :])[0, 0])

    def sample_rho_beta(self, t, seed=None, size=None):
        """Draw ``(rho*_{t-1}, beta*_t)`` from ``N(coef, sigma_t^2 (H' R^-1 H)^-1)``."""
        if t < 1 or t >= self.s:
            raise InputError("coefficients are sampled for levels 2..s only")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        lvl = self.levels[t]
        xi = rng.standard_normal((lvl.q,) if size is None else (lvl.q, size))
        draw = _coef_draw(lvl, xi)
        return draw if size is None else draw.T

    def to_dict(self):
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "levels": [lvl.to_dict() for lvl in self.levels],
            "parents": [None] + [p.tolist() for p in self.parents[1:]],
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("format") != FORMAT:
            raise InputError(f"not a multi-fidelity model document (format={data.get('format')!r})")
        if data.get("version") != FORMAT_VERSION:
            raise InputError(f"unsupported multi-fidelity model version {data.get('version')!r}")
        levels = [KrigingModel.from_dict(d) for d in data["levels"]]
        parents = [None] + [np.asarray(p, dtype=int) for p in data["parents"][1:]]
        return cls(levels, parents)


def _coef_draw(lvl, xi):
    """``coef + sigma * LA^-T xi`` (columns of ``xi`` are independent draws)."""
    shift = solve_triangular(lvl.LA, xi, lower=True, trans="T", check_finite=False)
    coef = lvl.coef if xi.ndim == 1 else lvl.coef[:, None]
    return coef + np.sqrt(lvl.sigma2) * shift


def mf_fit(designs, observations, trends="constant", kernels="matern52", nugget=DEFAULT_NUGGET,
           optimizer_budget=5, seed=0, thetas=None):
    """Fit the recursive co-kriging model level by level, coarse to fine.

    Parameters
    ----------
    designs : list of (n_t, d) arrays
        ``designs[0]`` is the coarsest (cheapest) level; each later design must
        be a row-exact subset of the previous one.
    observations : list of (n_t,) arrays
    trends, kernels : str or per-level list
        Trend basis names and kernel family names.
    thetas : per-level list of length-scale vectors (or ``None`` entries), optional
        Fixed length scales; ``None`` means maximum likelihood.
    """
    s = len(designs)
    if s == 0 or len(observations) != s:
        raise InputError("need one observation vector per design")
    designs = [np.atleast_2d(np.asarray(D, dtype=float)) for D in designs]
    observations = [np.asarray(z, dtype=float).ravel() for z in observations]
    trends = _per_level(trends, s, "trends")
    kernels = _per_level(kernels, s, "kernels")
    thetas = [None] * s if thetas is None else _per_level(list(thetas), s, "thetas")
    levels, parents = [], [None]
    for t in range(s):
        D, z = designs[t], observations[t]
        if len(z) != len(D):
            raise InputError(f"level {t + 1}: {len(D)} design rows but {len(z)} observations")
        family = kernels[t].family if isinstance(kernels[t], KernelSpec) else kernels[t]
        theta = kernels[t].theta if isinstance(kernels[t], KernelSpec) else thetas[t]
        H = None
        if t > 0:
            if not contains_rows(designs[t - 1], D):
                raise InputError(f"design of level {t + 1} is not contained in the design of level {t}")
            rows = row_lookup(designs[t - 1], D)
            parents.append(rows)
            H = np.column_stack([observations[t - 1][rows], trend_basis(trends[t], D)])
        # level 1 uses the caller's seed so that one level reproduces plain kriging
        level_seed = seed if t == 0 or seed is None else [seed, t]
        model = fit(D, z, trends[t], family, nugget, optimizer_budget,
                    seed=level_seed, theta=theta, regressors=H)
        levels.append(model)
    return MultiFidelityModel(levels, parents)


def mf_predict_mean(model, x):
    return model.predict_mean(x)


def mf_predict_cov(model, x, y):
    return model.predict_cov(x, y)


def sample_rho_beta(model, t, seed=None, size=None):
    return model.sample_rho_beta(t, seed, size)


class MultiFidelitySampler:
    """Per-level predictive paths on a fixed point set.

    Level 1 is a universal-kriging conditional path.  For each finer level a
    coefficient draw ``(rho*, beta*)`` is taken and the update is
    ``z <- rho* z + f_t' beta* + delta``, where ``delta`` is a simple-kriging
    conditional path of the discrepancy given the residual data
    ``z_t - F_t beta* - rho* z_{t-1}(D_t)``.  Each generator is consumed in the
    order: level-1 path, then per level the coefficients and the discrepancy.
    """

    def __init__(self, model, points, method="auto", basis=None):
        self.model = model
        self.points = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, model.dim)
        self._samplers = [ConditionalSampler(model.levels[0], self.points, method, "universal", basis)]
        for lvl in model.levels[1:]:
            self._samplers.append(ConditionalSampler(lvl, self.points, method, "simple"))
        self._F = [trend_basis(lvl.trend, self.points) for lvl in model.levels]

    @property
    def method(self):
        return self._samplers[0].method

    def draw(self, rngs):
        """List of ``(M, K)`` arrays, one per level."""
        z = self._samplers[0].draw(rngs)
        out = [z]
        for t in range(1, self.model.s):
            lvl = self.model.levels[t]
            xi = np.column_stack([rng.standard_normal(lvl.q) for rng in rngs])
            w = _coef_draw(lvl, xi)
            rho, beta = w[0], w[1:]
            prev_obs = lvl.F[:, 0]
            data = lvl.z[:, None] - lvl.F[:, 1:] @ beta - prev_obs[:, None] * rho
            delta = self._samplers[t].draw(rngs, data=data)
            z = rho * z + self._F[t] @ beta + delta
            out.append(z)
        return out


def algorithm2_sample(model, points, seed=None, n_paths=None, method="auto", basis=None):
    """Predictive path(s) of the finest level, keeping every intermediate level.

    Returns a :class:`GPPath` whose ``values`` are the level-``s`` values and
    whose ``levels`` list holds the values at every level.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, model.dim)
    count = 1 if n_paths is None else n_paths
    sampler = MultiFidelitySampler(model, points, method, basis)
    levels = sampler.draw(path_rngs(seed, count))
    if n_paths is None:
        levels = [v[:, 0] for v in levels]
    return GPPath(points, levels[-1], {"seed": seed, "method": sampler.method}, levels)


def mf_algorithm1(model, dist, u, m, n_paths=300, n_boot=200, estimator="janon", seed=0,
                  method="auto", basis=None, threads=1):
    """Index-sample matrices for every level from shared multi-fidelity paths.

    Same seeding scheme as :func:`gpsobol.kriging_sobol.algorithm1`; with one
    level the result is identical to it.
    """
    _check_args(m, n_paths, n_boot, estimator)
    dist = InputDistribution.unit(model.dim) if dist is None else dist
    pf_seed, boot_seed, path_seed = seed_streams(seed)
    pf = pick_freeze(dist, u, m, np.random.default_rng(pf_seed), with_mauntz=estimator == "mauntz")
    points = pf.stacked()
    sampler = MultiFidelitySampler(model, points, method, basis)
    per_level = index_samples(sampler.draw, len(points), m, n_paths, n_boot, estimator,
                              boot_seed, path_seed, threads)
    out = []
    for t, values in enumerate(per_level, start=1):
        meta = {"u": list(pf.frozen), "m": m, "n_paths": n_paths, "n_boot": n_boot,
                "estimator": estimator, "seed": seed if isinstance(seed, int) else None,
                "method": sampler.method, "level": t}
        out.append(_finalize(values, meta))
    return out


def discrepancy_terms(model, X):
    """Per-level ``mu_delta_t(X)`` (``mu^1`` at level 1) and regressors ``h_t(X)``."""
    mus = model.means(X)
    deltas, H = [], []
    for t in range(model.s):
        H.append(model.regressors(t, X, mus[t - 1] if t else None))
        deltas.append(mus[0] if t == 0 else mus[t] - model.rho(t) * mus[t - 1])
    return deltas, H


def mf_first_approach(model, pf):
    """Expected-moment index ratio expanded over levels.

    The predictive mean and covariance of the finest level are written as
    ``mu^s = sum_t w_t mu_delta_t`` and ``k^s = sum_t v_t k_delta_t`` with
    ``w_t = prod_{j >= t} rho_hat_j`` and ``v_t = prod_{j >= t} E[rho_j^2]``
    (empty products are 1); the double sums over levels are evaluated term by term.
    """
    X, Xt = pf.X, pf.X_tilde
    s, m = model.s, len(X)
    dX, HX = discrepancy_terms(model, X)
    dXt, HXt = discrepancy_terms(model, Xt)
    w = np.ones(s)
    v = np.ones(s)
    for t in range(s - 2, -1, -1):
        w[t] = w[t + 1] * model.rho(t + 1)
        v[t] = v[t + 1] * model.rho_sq(t + 1)

    cov_pair = np.zeros(m)
    var_X = np.zeros(m)
    sum_XXt = sum_XX = 0.0
    for t, lvl in enumerate(model.levels):
        cov_pair += v[t] * lvl.cov_pairs_with(X, Xt, HX[t], HXt[t])
        var_X += v[t] * lvl.var_with(X, HX[t])
        sum_XXt += v[t] * lvl.cov_sum_with(X, Xt, HX[t], HXt[t])
        sum_XX += v[t] * lvl.cov_sum_with(X, X, HX[t], HX[t])

    mean_X = sum(w[t] * dX[t] for t in range(s))
    mean_Xt = sum(w[t] * dXt[t] for t in range(s))
    if s == 1:
        return first_approach_ratio(mean_X, mean_Xt, cov_pair, var_X, sum_XXt, sum_XX)

    # mean products sum_{t, t'} w_t w_t' mu_delta_t(.) mu_delta_t'(.), term by term
    prod_pair = np.zeros(m)
    prod_self = np.zeros(m)
    cross_sum = self_sum = 0.0
    for t in range(s):
        for tt in range(s):
            a, b, c = w[t] * dX[t], w[tt] * dXt[tt], w[tt] * dX[tt]
            prod_pair += a * b
            prod_self += a * c
            cross_sum += a.sum() * b.sum()
            self_sum += a.sum() * c.sum()
    num = np.mean(cov_pair) + np.mean(prod_pair) - (sum_XXt + cross_sum) / m**2
    den = np.mean(var_X) + np.mean(prod_self) - (sum_XX + self_sum) / m**2
    if abs(den) <= 1e-12 * (np.mean(var_X) + np.mean(mean_X**2)):
        raise DegenerateOutputError("predictive output variance is zero")
    return float(num / den)
