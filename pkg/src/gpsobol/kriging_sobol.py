"""Sobol indices of a kriging surrogate and their uncertainty.

:func:`algorithm1` samples the ``N_Z x B`` matrix of index estimates
obtained by evaluating one pick-freeze estimator on ``N_Z`` conditional
paths of the surrogate, each under ``B`` bootstrap resamples of the
Monte-Carlo sample.  Rows spread metamodel uncertainty, columns spread
Monte-Carlo uncertainty; :func:`budget` separates the two and
:func:`balance_m` grows ``m`` until the Monte-Carlo part stops dominating.

Seeding: one master seed is split into three independent streams (pick-freeze
design, bootstrap rows, paths) and the path stream is split once more into one
generator per path, so results do not depend on batching or thread count.
"""
import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .design import InputDistribution, pick_freeze
from .errors import DegenerateOutputError, InputError
from .gp_path import ConditionalSampler, path_rngs
from .sobol_mc import ESTIMATORS, PairedEvaluations, bootstrap_indices, estimate_batch, estimate_janon

MAX_DEGENERATE_FRACTION = 0.01
REGIME_RATIO = 2.0
QUANTILE_LEVELS = (0.025, 0.05, 0.5, 0.95, 0.975)

_PATH_MEMORY = 1 << 24  # doubles per batch of sampled paths


@dataclass
class IndexSampleMatrix:
    """``values[k, l]``: estimate on path ``k`` under bootstrap row ``l``.

    Column 0 holds the estimates on the original (un-resampled) sample.
    Degenerate cells are NaN and counted in ``meta["degenerate_cells"]``.
    """

    values: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self):
        return self.values.shape[0]

    @property
    def n_boot(self):
        return self.values.shape[1]

    def to_csv(self, path):
        """Write ``k,l,value`` rows with 1-based ``k`` and ``l``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "l", "value"])
            for k, row in enumerate(self.values, start=1):
                for l, v in enumerate(row, start=1):
                    w.writerow([k, l, repr(float(v))])


@dataclass(frozen=True)
class UncertaintyBudget:
    var_total: float
    var_metamodel: float
    var_mc: float
    regime: str

    def to_dict(self):
        return {"var_total": self.var_total, "var_metamodel": self.var_metamodel,
                "var_mc": self.var_mc, "regime": self.regime}


def _cells(s):
    values = s.values if isinstance(s, IndexSampleMatrix) else np.asarray(s, dtype=float)
    if values.ndim != 2 or values.size == 0:
        raise InputError("index sample must be a non-empty N_Z x B matrix")
    return values


def mean_index(s):
    """Grand mean over all cells."""
    return float(np.nanmean(_cells(s)))


def var_total(s):
    """Variance over all cells with divisor ``N_Z * B - 1``."""
    v = _cells(s)
    v = v[np.isfinite(v)]
    if v.size < 2:
        raise InputError("var_total needs at least two cells")
    return float(np.var(v, ddof=1))


def var_metamodel(s):
    """Across-path variance, averaged over bootstrap columns."""
    v = _cells(s)
    if v.shape[0] < 2:
        raise InputError("var_metamodel needs N_Z >= 2")
    return float(np.nanmean(np.nanvar(v, axis=0, ddof=1)))


def var_mc(s):
    """Across-bootstrap variance, averaged over paths."""
    v = _cells(s)
    if v.shape[1] < 2:
        raise InputError("var_mc needs B >= 2")
    return float(np.nanmean(np.nanvar(v, axis=1, ddof=1)))


def classify(var_meta, var_monte_carlo, ratio=REGIME_RATIO):
    """Which error source dominates: more than ``ratio`` times the other."""
    if var_meta > ratio * var_monte_carlo:
        return "metamodel-dominated"
    if var_monte_carlo > ratio * var_meta:
        return "mc-dominated"
    return "balanced"


def budget(s):
    vm, vc = var_metamodel(s), var_mc(s)
    return UncertaintyBudget(var_total(s), vm, vc, classify(vm, vc))


def quantiles(s, levels=QUANTILE_LEVELS, mode="full"):
    """Empirical quantiles (linear interpolation) of the index sample.

    ``mode="full"`` pools every cell; ``mode="metamodel"`` uses only the
    un-resampled column, i.e. metamodel uncertainty alone.
    """
    v = _cells(s)
    if mode == "full":
        cells = v.ravel()
    elif mode in ("metamodel", "metamodel-only"):
        cells = v[:, 0]
    else:
        raise InputError(f"unknown quantile mode {mode!r}")
    cells = cells[np.isfinite(cells)]
    if cells.size == 0:
        raise InputError("no finite cells to take quantiles of")
    return np.quantile(cells, np.asarray(levels, dtype=float))


def seed_streams(seed):
    """Pick-freeze, bootstrap and path seed sequences derived from ``seed``."""
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return seq.spawn(3)


def _check_args(m, n_paths, n_boot, estimator):
    if m < 2:
        raise InputError("m must be at least 2")
    if n_paths < 1 or n_boot < 1:
        raise InputError("N_Z and B must be at least 1")
    if estimator not in ESTIMATORS:
        raise InputError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")


def index_samples(draw, n_points, m, n_paths, n_boot, estimator, boot_seed, path_seed, threads=1):
    """Core loop shared by the single- and multi-fidelity drivers.

    ``draw(rngs)`` returns a list (one entry per output level) of
    ``(n_points, len(rngs))`` arrays of path values at the stacked
    pick-freeze points.  Returns one ``N_Z x B`` matrix per level.
    """
    boot = bootstrap_indices(m, n_boot, np.random.default_rng(boot_seed))
    rngs = path_rngs(path_seed, n_paths)
    size = max(1, min(n_paths, _PATH_MEMORY // max(n_points, 1)))
    batches = [range(s, min(s + size, n_paths)) for s in range(0, n_paths, size)]

    def run(batch):
        levels = draw([rngs[k] for k in batch])
        out = []
        for paths in levels:
            block = np.empty((len(batch), n_boot))
            for j in range(len(batch)):
                v = paths[:, j]
                parts = [v[i * m:(i + 1) * m][boot] for i in range(n_points // m)]
                block[j] = estimate_batch(estimator, *parts)
            out.append(block)
        return out

    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, batches))
    else:
        results = [run(b) for b in batches]
    n_levels = len(results[0])
    return [np.vstack([r[t] for r in results]) for t in range(n_levels)]


def _finalize(values, meta):
    bad = int(np.count_nonzero(~np.isfinite(values)))
    if bad > MAX_DEGENERATE_FRACTION * values.size:
        raise DegenerateOutputError(
            f"{bad} of {values.size} index estimates have zero output variance"
        )
    meta = dict(meta, degenerate_cells=bad)
    return IndexSampleMatrix(values, meta)


def algorithm1(model, dist, u, m, n_paths=300, n_boot=200, estimator="janon", seed=0,
               method="auto", basis=None, threads=1):
    """Sample the distribution of the kriging-based index estimator.

    Parameters
    ----------
    model : KrigingModel
        Surrogate in normalized coordinates.
    dist : InputDistribution or None
        Only its dimension is used (sampling happens in ``[0, 1]^d``).
    u : iterable of int
        Studied input group, 0-based.
    m : int
        Monte-Carlo sample size of the pick-freeze design.
    n_paths, n_boot : int
        ``N_Z`` conditional paths and ``B`` bootstrap rows (row 0 is the
        original sample).
    estimator : {"sobol93", "janon", "mauntz"}
    seed : int or SeedSequence
    method : {"auto", "cholesky", "nystrom"}
        Unconditioned sampling route, see :class:`ConditionalSampler`.
    basis : NystromBasis, optional
    threads : int
        Worker threads over batches of paths.

    Returns
    -------
    IndexSampleMatrix
    """
    _check_args(m, n_paths, n_boot, estimator)
    dist = InputDistribution.unit(model.dim) if dist is None else dist
    pf_seed, boot_seed, path_seed = seed_streams(seed)
    pf = pick_freeze(dist, u, m, np.random.default_rng(pf_seed), with_mauntz=estimator == "mauntz")
    points = pf.stacked()
    sampler = ConditionalSampler(model, points, method=method, basis=basis)
    values, = index_samples(lambda rngs: [sampler.draw(rngs)], len(points), m, n_paths, n_boot,
                            estimator, boot_seed, path_seed, threads)
    meta = {"u": list(pf.frozen), "m": m, "n_paths": n_paths, "n_boot": n_boot,
            "estimator": estimator, "seed": seed if isinstance(seed, int) else None,
            "method": sampler.method}
    return _finalize(values, meta)


@dataclass
class BalanceResult:
    """Outcome of :func:`balance_m`: the chosen ``m`` and every tested budget."""

    m: int
    balanced: bool
    trace: list

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["m", "var_meta", "var_mc", "regime"])
            for m, b in self.trace:
                w.writerow([m, repr(b.var_metamodel), repr(b.var_mc), b.regime])


def balance_m(model, dist, u, m0=100, growth=2.0, n_paths=100, n_boot=100, estimator="janon",
              seed=0, m_max=20000, method="auto", basis=None, threads=1):
    """Smallest tested ``m`` at which Monte-Carlo variance no longer dominates.

    ``m`` grows geometrically from ``m0`` while ``var_mc > var_metamodel``;
    the first ``m`` with ``var_metamodel >= var_mc`` is returned with
    ``balanced=True``.  If ``m_max`` is reached first it is returned with
    ``balanced=False``.  Every step reuses ``seed``.
    """
    if m0 < 2 or growth <= 1:
        raise InputError("balance_m needs m0 >= 2 and growth > 1")
    if n_paths < 2 or n_boot < 2:
        raise InputError("balance_m needs N_Z >= 2 and B >= 2")
    m_max = max(int(m_max), int(m0))
    m = int(m0)
    trace = []
    while True:
        s = algorithm1(model, dist, u, m, n_paths, n_boot, estimator, seed, method, basis, threads)
        b = budget(s)
        trace.append((m, b))
        if b.var_metamodel >= b.var_mc:
            return BalanceResult(m, True, trace)
        if m >= m_max:
            return BalanceResult(m, False, trace)
        m = min(int(np.ceil(m * growth)), m_max)


def first_approach_ratio(mean_X, mean_Xt, cov_pair, var_X, sum_cov_XXt, sum_cov_XX):
    """Ratio of the Monte-Carlo double sums of the predictive-moment formula.

    Numerator ``mean_i[s2(X_i, Xt_i) + m(X_i) m(Xt_i)]
    - (sum_ij s2(X_i, Xt_j) + sum_i m(X_i) sum_j m(Xt_j)) / m^2``;
    the denominator has ``Xt`` replaced by ``X``.
    """
    m = len(mean_X)
    # shift the means: the products minus product of sums are shift-invariant
    c = float(np.mean(mean_X))
    a, b = mean_X - c, mean_Xt - c
    num = np.mean(cov_pair) + np.mean(a * b) - (sum_cov_XXt + a.sum() * b.sum()) / m**2
    den = np.mean(var_X) + np.mean(a * a) - (sum_cov_XX + a.sum() ** 2) / m**2
    if abs(den) <= 1e-12 * (np.mean(var_X) + np.mean(mean_X**2)):
        raise DegenerateOutputError("predictive output variance is zero")
    return float(num / den)


def first_approach_estimate(model, pf):
    """Ratio of expected pick-freeze covariance to expected variance under the surrogate."""
    X, Xt = pf.X, pf.X_tilde
    HX, HXt = model.regressors(X), model.regressors(Xt)
    return first_approach_ratio(
        model.mean_with(X, HX),
        model.mean_with(Xt, HXt),
        model.cov_pairs_with(X, Xt, HX, HXt),
        model.var_with(X, HX),
        model.cov_sum_with(X, Xt, HX, HXt),
        model.cov_sum_with(X, X, HX, HX),
    )


def plugin_estimate(model, pf):
    """Janon estimator applied to the predictive mean."""
    return estimate_janon(PairedEvaluations(model.predict_mean(pf.X), model.predict_mean(pf.X_tilde)))
