"""Universal kriging: GLS trend, REML variance, ML length scales, predictions.

The model is written for a generic regression matrix ``F`` (one row of
regressors per design point).  Plain kriging uses a polynomial trend basis;
multi-fidelity levels pass ``H = [z_{t-1}(D_t), F_t]`` and supply their own
regressors at prediction points through the ``*_with`` methods.

All solves go through one Cholesky factor of ``R`` and one of
``A = F' R^-1 F``; no explicit inverse is formed except inside
:meth:`KrigingModel.loo_predictions`, which needs the diagonal of ``R^-1``.
"""
import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular, LinAlgError
from scipy.optimize import minimize

from .errors import FitError, InputError, RankDeficiencyError
from .errors import ConditioningError
from .kernel import (
    DEFAULT_NUGGET,
    KernelSpec,
    corr_matrix,
    cross_corr_matrix,
    paired_corr,
    stable_cholesky,
)

TRENDS = ("constant", "linear")
FORMAT = "gpsobol/kriging"
FORMAT_VERSION = 1

_CHUNK = 4096


def trend_basis(trend, X):
    """Regressors ``f(x)'`` for each row of ``X``: constant or constant+linear."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    ones = np.ones((X.shape[0], 1))
    if trend == "constant":
        return ones
    if trend == "linear":
        return np.hstack([ones, X])
    raise InputError(f"unknown trend {trend!r}; expected one of {TRENDS}")


def _as_points(X, d):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = X.reshape(1, -1) if single else X.reshape(-1, d)
    if X.shape[1] != d:
        raise InputError(f"points have dimension {X.shape[1]}, model expects {d}")
    return X, single


def kernel_sum(spec, X, Y, nugget=0.0):
    """``sum_ij r(X_i, Y_j)`` without materializing the full matrix."""
    total = 0.0
    step = max(1, (1 << 22) // max(1, len(Y)))
    for start in range(0, len(X), step):
        total += cross_corr_matrix(spec, X[start:start + step], Y, nugget).sum()
    return total


def _gls(L, F, z):
    """GLS pieces for a given Cholesky factor ``L`` of ``R``."""
    G = solve_triangular(L, F, lower=True, check_finite=False)
    w = solve_triangular(L, z, lower=True, check_finite=False)
    A = G.T @ G
    try:
        LA = cholesky(A, lower=True, check_finite=False)
    except LinAlgError:
        raise RankDeficiencyError("F' R^-1 F is singular") from None
    if np.linalg.cond(A) > 1e14:
        raise RankDeficiencyError(f"F' R^-1 F is numerically singular (cond={np.linalg.cond(A):.3g})")
    coef = cho_solve((LA, True), G.T @ w, check_finite=False)
    resid = w - G @ coef
    return G, LA, coef, resid, float(resid @ resid)


class KrigingModel:
    """Fitted universal-kriging surrogate (treat as immutable).

    Parameters
    ----------
    design : (n, d) array
    z : (n,) array
        Observations at the design points.
    kernel : KernelSpec
    nugget : float
        Added to the correlation of coincident points.
    trend : str
        Name of the trend basis used for ``F`` and for new points.
    F : (n, q) array, optional
        Regression matrix at the design; defaults to ``trend_basis(trend, design)``.
        Passing a custom matrix (multi-fidelity) makes :meth:`predict_mean`
        unusable; use the ``*_with`` variants instead.
    """

    def __init__(self, design, z, kernel, nugget=DEFAULT_NUGGET, trend="constant", F=None):
        self.design = np.atleast_2d(np.asarray(design, dtype=float))
        self.z = np.asarray(z, dtype=float).ravel()
        n, d = self.design.shape
        if self.z.shape != (n,):
            raise InputError("one observation per design row expected")
        if kernel.dim != d:
            raise InputError("kernel dimension does not match the design")
        self.kernel = kernel
        self.trend = trend
        self.custom_regressors = F is not None
        self.F = trend_basis(trend, self.design) if F is None else np.asarray(F, dtype=float).reshape(n, -1)
        self.q = self.F.shape[1]
        if n <= self.q:
            raise InputError(f"need more design points ({n}) than regressors ({self.q})")
        self.L, self.nugget = stable_cholesky(corr_matrix(kernel, self.design), nugget)
        self._G, self.LA, self.coef, resid, rss = _gls(self.L, self.F, self.z)
        self.dof = n - self.q
        self.sigma2 = max(rss / self.dof, np.finfo(float).tiny)
        self.alpha = solve_triangular(self.L, resid, lower=True, trans="T", check_finite=False)

    @property
    def n(self):
        return self.design.shape[0]

    @property
    def dim(self):
        return self.design.shape[1]

    @property
    def beta(self):
        return self.coef

    @property
    def theta(self):
        return self.kernel.theta

    def regressors(self, X):
        if self.custom_regressors:
            raise InputError("model uses custom regressors; call the *_with methods")
        return trend_basis(self.trend, X)

    def coef_cov(self):
        """Posterior covariance ``sigma2 * (F' R^-1 F)^-1`` of the GLS coefficients."""
        Linv = solve_triangular(self.LA, np.eye(self.q), lower=True, check_finite=False)
        return self.sigma2 * (Linv.T @ Linv)

    # ------------------------------------------------------------------
    # predictive moments given regressors at the prediction points

    def cross(self, X):
        return cross_corr_matrix(self.kernel, X, self.design, self.nugget)

    def _whiten(self, X, HX):
        """``W = L^-1 r(X)'`` and ``V = LA^-1 (h(X)' - F' R^-1 r(X)')``."""
        W = solve_triangular(self.L, self.cross(X).T, lower=True, check_finite=False)
        U = np.asarray(HX, dtype=float).reshape(len(X), self.q).T - self._G.T @ W
        V = solve_triangular(self.LA, U, lower=True, check_finite=False)
        return W, V

    def mean_with(self, X, HX):
        X = np.atleast_2d(X)
        return np.asarray(HX).reshape(len(X), self.q) @ self.coef + self.cross(X) @ self.alpha

    def cov_with(self, X, Y, HX, HY):
        X, Y = np.atleast_2d(X), np.atleast_2d(Y)
        WX, VX = self._whiten(X, HX)
        WY, VY = self._whiten(Y, HY)
        K = cross_corr_matrix(self.kernel, X, Y, self.nugget)
        return self.sigma2 * (K - WX.T @ WY + VX.T @ VY)

    def var_with(self, X, HX):
        X = np.atleast_2d(X)
        W, V = self._whiten(X, HX)
        prior = 1.0 + self.nugget
        return self.sigma2 * (prior - np.sum(W * W, axis=0) + np.sum(V * V, axis=0))

    def cov_pairs_with(self, X, Y, HX, HY):
        """Elementwise ``s_n^2(X_i, Y_i)`` for paired rows."""
        X, Y = np.atleast_2d(X), np.atleast_2d(Y)
        if X.shape != Y.shape:
            raise InputError("paired point sets must have the same shape")
        out = np.empty(len(X))
        for start in range(0, len(X), _CHUNK):
            sl = slice(start, start + _CHUNK)
            WX, VX = self._whiten(X[sl], HX[sl])
            WY, VY = self._whiten(Y[sl], HY[sl])
            k = paired_corr(self.kernel, X[sl], Y[sl], self.nugget)
            out[sl] = self.sigma2 * (k - np.sum(WX * WY, axis=0) + np.sum(VX * VY, axis=0))
        return out

    def cov_sum_with(self, X, Y, HX, HY):
        """``sum_ij s_n^2(X_i, Y_j)`` in O((|X| + |Y|) n) memory."""
        X, Y = np.atleast_2d(X), np.atleast_2d(Y)
        wx = vx = wy = vy = 0.0
        for start in range(0, len(X), _CHUNK):
            W, V = self._whiten(X[start:start + _CHUNK], HX[start:start + _CHUNK])
            wx, vx = wx + W.sum(axis=1), vx + V.sum(axis=1)
        for start in range(0, len(Y), _CHUNK):
            W, V = self._whiten(Y[start:start + _CHUNK], HY[start:start + _CHUNK])
            wy, vy = wy + W.sum(axis=1), vy + V.sum(axis=1)
        ksum = kernel_sum(self.kernel, X, Y, self.nugget)
        return self.sigma2 * (ksum - np.dot(wx, wy) + np.dot(vx, vy))

    # ------------------------------------------------------------------
    # trend-basis conveniences

    def predict_mean(self, X):
        """``m_n(x) = f(x)' beta + r(x)' R^-1 (z - F beta)``; scalar for a single point."""
        X, single = _as_points(X, self.dim)
        out = self.mean_with(X, self.regressors(X))
        return float(out[0]) if single else out

    def predict_var(self, X):
        X, single = _as_points(X, self.dim)
        out = self.var_with(X, self.regressors(X))
        return float(out[0]) if single else out

    def predict_cov_matrix(self, X, Y):
        X, _ = _as_points(X, self.dim)
        Y, _ = _as_points(Y, self.dim)
        return self.cov_with(X, Y, self.regressors(X), self.regressors(Y))

    def predict_cov(self, x, y):
        """Predictive covariance ``s_n^2(x, y)`` between two points."""
        x, _ = _as_points(np.asarray(x, dtype=float).ravel(), self.dim)
        y, _ = _as_points(np.asarray(y, dtype=float).ravel(), self.dim)
        return float(self.predict_cov_matrix(x, y)[0, 0])

    def cov_pairs(self, X, Y):
        X, _ = _as_points(X, self.dim)
        Y, _ = _as_points(Y, self.dim)
        return self.cov_pairs_with(X, Y, self.regressors(X), self.regressors(Y))

    def cov_sum(self, X, Y):
        X, _ = _as_points(X, self.dim)
        Y, _ = _as_points(Y, self.dim)
        return self.cov_sum_with(X, Y, self.regressors(X), self.regressors(Y))

    # ------------------------------------------------------------------

    def loo_predictions(self):
        """Leave-one-out predictive means with the trend re-estimated each time.

        Uses the augmented system ``[[R, F], [F', 0]]``: the LOO residual of
        point i is ``(R^-1 (z - F beta))_i / Q_ii`` where ``Q`` is the top-left
        block of the inverse augmented matrix.
        """
        Linv = solve_triangular(self.L, np.eye(self.n), lower=True, check_finite=False)
        diag_Rinv = np.sum(Linv * Linv, axis=0)
        P = Linv.T @ self._G  # R^-1 F
        PA = solve_triangular(self.LA, P.T, lower=True, check_finite=False)
        Q = diag_Rinv - np.sum(PA * PA, axis=0)
        return self.z - self.alpha / Q

    def profile_nll(self):
        return profile_nll(self.L, self.F, self.z)

    def to_dict(self):
        out = {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "design": self.design.tolist(),
            "z": self.z.tolist(),
            "kernel": self.kernel.to_dict(),
            "nugget": self.nugget,
            "trend": self.trend,
            "beta": self.coef.tolist(),
            "sigma2": self.sigma2,
        }
        if self.custom_regressors:
            out["F"] = self.F.tolist()
        return out

    @classmethod
    def from_dict(cls, data):
        if data.get("format") != FORMAT:
            raise InputError(f"not a kriging model document (format={data.get('format')!r})")
        if data.get("version") != FORMAT_VERSION:
            raise InputError(f"unsupported kriging model version {data.get('version')!r}")
        return cls(
            data["design"],
            data["z"],
            KernelSpec.from_dict(data["kernel"]),
            nugget=data["nugget"],
            trend=data["trend"],
            F=data.get("F"),
        )


def profile_nll(L, F, z):
    """Negative profile log-likelihood (beta and sigma^2 concentrated out), up to constants."""
    n = len(z)
    _, _, _, _, rss = _gls(L, F, z)
    return 0.5 * n * np.log(max(rss / n, 1e-300)) + np.sum(np.log(np.diag(L)))


def theta_bounds(design):
    """Per-dimension box ``[0.01 * range, 10 * range]`` for the length scales."""
    span = np.ptp(design, axis=0)
    span = np.where(span > 0, span, 1.0)
    return np.column_stack([1e-2 * span, 10.0 * span])


def fit(design, z, trend="constant", kernel_family="matern52", nugget=DEFAULT_NUGGET,
        optimizer_budget=5, seed=0, theta=None, regressors=None):
    """Fit a kriging model.

    Length scales maximize the profile likelihood by multi-start L-BFGS-B on
    ``log(theta)``; ``optimizer_budget`` is the number of starts.  Passing
    ``theta`` skips the optimization.  ``regressors`` overrides the trend
    basis at the design (used by the multi-fidelity levels).
    """
    design = np.atleast_2d(np.asarray(design, dtype=float))
    z = np.asarray(z, dtype=float).ravel()
    n, d = design.shape
    if len(np.unique(design, axis=0)) != n:
        raise InputError("design contains duplicate rows")
    F = trend_basis(trend, design) if regressors is None else np.asarray(regressors, dtype=float).reshape(n, -1)
    if n <= F.shape[1]:
        raise InputError(f"need more design points ({n}) than regressors ({F.shape[1]})")
    if theta is not None:
        kernel = KernelSpec(kernel_family, tuple(np.broadcast_to(np.asarray(theta, float), (d,))))
        return KrigingModel(design, z, kernel, nugget, trend, None if regressors is None else F)

    scale = np.std(z)
    zs = z / scale if scale > 0 else z
    box = np.log(theta_bounds(design))
    penalty = 1e10

    def objective(log_theta):
        spec = KernelSpec(kernel_family, tuple(np.exp(log_theta)))
        try:
            L, _ = stable_cholesky(corr_matrix(spec, design), nugget)
            value = profile_nll(L, F, zs)
        except (ConditioningError, RankDeficiencyError):
            return penalty
        return value if np.isfinite(value) else penalty

    rng = np.random.default_rng(seed)
    starts = [box.mean(axis=1)]
    starts += [rng.uniform(box[:, 0], box[:, 1]) for _ in range(max(optimizer_budget, 1) - 1)]
    best = None
    for x0 in starts:
        res = minimize(objective, x0, method="L-BFGS-B", bounds=box)
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun) or best.fun >= penalty:
        raise FitError("no finite likelihood value found for any start")
    kernel = KernelSpec(kernel_family, tuple(np.exp(best.x)))
    return KrigingModel(design, z, kernel, nugget, trend, None if regressors is None else F)


def nash_sutcliffe(predictions, outputs):
    """``1 - sum (pred - z)^2 / sum (z - mean z)^2``."""
    pred = np.asarray(predictions, dtype=float).ravel()
    obs = np.asarray(outputs, dtype=float).ravel()
    if pred.shape != obs.shape or pred.size == 0:
        raise InputError("predictions and outputs must be non-empty and the same length")
    denom = np.sum((obs - obs.mean()) ** 2)
    if denom <= 0:
        raise InputError("degenerate test set: outputs are all equal")
    return float(1.0 - np.sum((pred - obs) ** 2) / denom)


def efficiency(model, test_inputs, test_outputs):
    """Nash-Sutcliffe efficiency of the predictive mean on a test set."""
    return nash_sutcliffe(model.predict_mean(np.atleast_2d(test_inputs)), test_outputs)


def loo_efficiency(model):
    if model.n < 3:
        raise InputError("leave-one-out needs at least 3 design points")
    return nash_sutcliffe(model.loo_predictions(), model.z)
