"""Frequentist synthetic-control estimators and effect computation.

Four fitting strategies share the WeightSolution machinery of :mod:`.qp`:

* ``fit_adh``: donor simplex on the stacked outcome/covariate system.
* ``fit_psconv``: the same system with a free level shift.
* ``fit_lscm``: outcomes only, nonnegative donors, free shift, no sum
  constraint.
* ``fit_dinet``: outcomes only, elastic-net penalized regression with the
  penalty pair chosen by blocked cross-validation over pre-treatment time.

``counterfactual`` turns any fitted weight vector into post-period effects.
The average effect divides by the number of post periods; where the source
material is ambiguous between that and the full series length, we treat the
full-length divisor as an error because it would bias every method's average
effect toward zero by the same factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .panel import Panel, build_design
from .qp import ConstraintSet, WeightSolution, solve_constrained

__all__ = [
    "SCMFit",
    "EffectSeries",
    "fit_adh",
    "fit_lscm",
    "fit_psconv",
    "fit_dinet",
    "counterfactual",
    "synthetic_path",
]

METHOD_TAGS = ("ADH", "LSCM", "DINET", "PSCONV", "BAYES")

DEFAULT_ALPHA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
LAMBDA_PATH_LEN = 50
LAMBDA_PATH_FLOOR = 1e-4


@dataclass(frozen=True)
class SCMFit:
    """A fitted weight vector with its method tag and diagnostics.

    ``weights`` has length N: the shift coefficient first (zero for methods
    without one), donor weights after, in panel donor order. ``tuning``
    records method-specific selections such as the penalty pair. ``solution``
    carries the underlying WeightSolution for methods solved through qp, None
    for the penalized path.
    """

    method: str
    weights: np.ndarray
    objective: float
    active_set: tuple
    tuning: dict = field(default_factory=dict)
    solution: WeightSolution | None = None

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.method not in METHOD_TAGS:
            raise ConfigError(f"unknown method tag {self.method!r}")


@dataclass(frozen=True)
class EffectSeries:
    """Post-period counterfactual, per-period effects, and their mean."""

    times: tuple
    counterfactual: np.ndarray
    effects: np.ndarray
    ate: float

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(self.times))
        object.__setattr__(self, "counterfactual", np.asarray(self.counterfactual, dtype=float))
        object.__setattr__(self, "effects", np.asarray(self.effects, dtype=float))


def _qp_fit(method: str, panel: Panel, cset: ConstraintSet,
            use_covariates: bool, use_intercept: bool) -> SCMFit:
    design = build_design(panel, use_covariates=use_covariates, use_intercept=use_intercept)
    sol = solve_constrained(design, None, cset)
    return SCMFit(
        method=method,
        weights=sol.weights,
        objective=sol.objective,
        active_set=sol.active_set,
        solution=sol,
    )


def fit_adh(panel: Panel) -> SCMFit:
    """Donor-simplex fit on pre-period outcomes stacked over covariates.

    No shift coefficient: the synthetic unit must match the treated level,
    not just its shape. Identity row weighting throughout.
    """
    return _qp_fit("ADH", panel, ConstraintSet.CONV, use_covariates=True, use_intercept=False)


def fit_psconv(panel: Panel) -> SCMFit:
    """Simplex fit with a free level shift, on the stacked system.

    The shift absorbs any constant offset between the treated unit and the
    donor hull, so the objective is never worse than fit_adh's on the same
    panel.
    """
    return _qp_fit("PSCONV", panel, ConstraintSet.PS_CONV, use_covariates=True, use_intercept=True)


def fit_lscm(panel: Panel) -> SCMFit:
    """Nonnegative donor weights with a free shift and no sum constraint,
    fitted to pre-period outcomes only.

    When the intercept and a donor can trade off with equal fit, the solver's
    minimum-norm rule picks the smallest donor vector among the optima.
    """
    return _qp_fit("LSCM", panel, ConstraintSet.CONI, use_covariates=False, use_intercept=True)


def _soft(x: float, thresh: float) -> float:
    if x > thresh:
        return x - thresh
    if x < -thresh:
        return x + thresh
    return 0.0


def _center(D, y):
    """Column means, centered Gram matrix, cross moments and outcome
    variance. Profiling the unpenalized intercept out of the objective
    leaves the weight problem on centered data with identical minimizers."""
    n_rows = D.shape[0]
    means = D.mean(axis=0)
    Dc = D - means
    ybar = float(np.mean(y))
    yc = y - ybar
    G = (Dc.T @ Dc) / n_rows
    d = Dc.T @ yc / n_rows
    return means, ybar, G, d, float(yc @ yc) / n_rows


def _gram_cd(G, d, alpha, lam, w, max_sweeps, tol):
    """Cyclic coordinate descent on the penalized least-squares objective
    ||yc - Dc w||^2 / (2 n) + lam ((1-alpha)/2 ||w||^2 + alpha |w|_1) in Gram
    form (G = Dc'Dc/n, d = Dc'yc/n). Updates w in place.

    Soft-threshold updates leave inactive coordinates at exact zero, which
    downstream sparsity reporting relies on. Between full passes the sweep
    cycles only over the currently nonzero coordinates; the next full pass
    either admits new ones or certifies convergence. Convergence is judged
    on curvature-weighted steps (largest G_jj (Δw_j)^2), so near-collinear
    donors cannot stall the sweep by trading weight along directions the
    fit is flat in; ``tol`` is therefore on the objective's scale.
    """
    k = w.shape[0]
    diag = np.diagonal(G)
    ridge = lam * (1.0 - alpha)
    l1 = lam * alpha
    g = G @ w

    def pass_over(idx):
        delta = 0.0
        for i in idx:
            if diag[i] == 0.0:
                continue
            rho = d[i] - g[i] + diag[i] * w[i]
            w_new = _soft(rho, l1) / (diag[i] + ridge)
            step = w_new - w[i]
            if step != 0.0:
                g[:] += step * G[:, i]
                w[i] = w_new
                delta = max(delta, diag[i] * step * step)
        return delta

    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        if pass_over(range(k)) <= tol:
            return
        active = np.flatnonzero(w).tolist()
        while sweeps < max_sweeps and len(active) < k:
            sweeps += 1
            if pass_over(active) <= tol:
                break


def _cd_enet(D, y, alpha, lam, w, max_sweeps, tol):
    """One elastic-net fit with an unpenalized intercept; returns (b0, w)
    with w updated in place. ``tol`` is relative to the outcome variance."""
    means, ybar, G, d, yvar = _center(D, y)
    _gram_cd(G, d, alpha, lam, w, max_sweeps, tol * yvar)
    return ybar - float(means @ w), w


def _ridge_solutions(G, d, lams):
    """Exact solutions of the pure squared penalty, all penalties at once,
    from one eigendecomposition. Eigendirections at numerical zero are
    dropped, so the unpenalized limit is the minimum-norm least squares
    solution."""
    evals, Q = np.linalg.eigh(G)
    dq = Q.T @ d
    cutoff = float(evals[-1]) * G.shape[0] * np.finfo(float).eps if evals.size else 0.0
    cutoff = max(cutoff, 0.0)
    W = np.empty((len(lams), G.shape[0]))
    for li, lam in enumerate(lams):
        denom = evals + lam
        safe = denom > cutoff
        W[li] = Q @ np.where(safe, dq / np.where(safe, denom, 1.0), 0.0)
    return W


def _lambda_path(D, y, alpha):
    # smallest lambda with all donors at zero; the ridge-only corner keeps
    # the same scale via a floor on alpha
    n_rows = D.shape[0]
    yc = y - np.mean(y)
    lam_max = float(np.max(np.abs(D.T @ yc))) / (n_rows * max(alpha, 1e-3))
    if lam_max <= 0.0:
        lam_max = 1.0
    return np.geomspace(lam_max, LAMBDA_PATH_FLOOR * lam_max, LAMBDA_PATH_LEN)


def fit_dinet(panel: Panel, alpha_grid=None, lambda_grid=None, folds: int | None = None) -> SCMFit:
    """Elastic-net regression of the treated pre-period path on donor paths.

    Parameters
    ----------
    panel : Panel
    alpha_grid : sequence of floats in [0, 1], optional
        Mixing values; defaults to {0, 0.25, 0.5, 0.75, 1}.
    lambda_grid : sequence of positive floats, optional
        Shared penalty grid. By default each alpha gets its own 50-point
        geometric path from the smallest all-zero penalty down by 1e-4.
    folds : int, optional
        Cross-validation fold count, at least 2 and at most the pre-period
        length. Defaults to 10, reduced to the pre-period length on short
        panels.

    Notes
    -----
    Folds are contiguous time blocks, not shuffles: held-out errors then
    respect the serial structure of the pre-period. The selected pair
    minimizes mean held-out squared error; exact ties go to the larger
    penalty (scanning each path from above). A final full-data refit at the
    selection is returned.
    """
    n_pre = panel.pre_periods
    if alpha_grid is None:
        alpha_grid = DEFAULT_ALPHA_GRID
    alpha_grid = [float(a) for a in alpha_grid]
    if len(alpha_grid) == 0:
        raise ConfigError("alpha_grid is empty")
    for a in alpha_grid:
        if not 0.0 <= a <= 1.0:
            raise ConfigError(f"alpha {a} outside [0, 1]")
    if lambda_grid is not None:
        lambda_grid = sorted((float(l) for l in lambda_grid), reverse=True)
        if len(lambda_grid) == 0:
            raise ConfigError("lambda_grid is empty")
        if any(l < 0 for l in lambda_grid):
            raise ConfigError("lambda_grid entries must be nonnegative")
    if folds is None:
        folds = min(10, n_pre)
    if not 2 <= folds <= n_pre:
        raise ConfigError(
            f"folds must satisfy 2 <= folds <= pre_periods={n_pre}, got {folds}"
        )

    y = panel.Y[0, :n_pre].astype(float)
    D = panel.Y[1:, :n_pre].T.astype(float).copy()
    k = D.shape[1]

    fold_idx = np.array_split(np.arange(n_pre), folds)
    fold_stats = []
    for held in fold_idx:
        mask = np.ones(n_pre, dtype=bool)
        mask[held] = False
        fold_stats.append((_center(D[mask], y[mask]), D[held], y[held]))

    best = None  # (mse, alpha, lam)
    for alpha in alpha_grid:
        lams = np.asarray(lambda_grid, dtype=float) if lambda_grid is not None else _lambda_path(D, y, alpha)
        sse = np.zeros(lams.shape[0])
        for (means, ybar, G, d, yvar), D_te, y_te in fold_stats:
            if alpha == 0.0:
                W = _ridge_solutions(G, d, lams)
                for li in range(lams.shape[0]):
                    b0 = ybar - float(means @ W[li])
                    err = y_te - b0 - D_te @ W[li]
                    sse[li] += float(err @ err)
                continue
            w = np.zeros(k)
            for li, lam in enumerate(lams):
                _gram_cd(G, d, alpha, lam, w, max_sweeps=2000, tol=1e-7 * yvar)
                b0 = ybar - float(means @ w)
                err = y_te - b0 - D_te @ w
                sse[li] += float(err @ err)
        for li in range(lams.shape[0]):
            mse = sse[li] / n_pre
            if best is None or mse < best[0]:
                best = (mse, alpha, float(lams[li]))

    _, alpha_star, lam_star = best
    if alpha_star == 0.0:
        means, ybar, G, d, _ = _center(D, y)
        w = _ridge_solutions(G, d, [lam_star])[0]
        b0 = ybar - float(means @ w)
    else:
        w = np.zeros(k)
        b0, w = _cd_enet(D, y, alpha_star, lam_star, w, max_sweeps=200_000, tol=1e-12)

    weights = np.concatenate([[b0], w])
    r = y - b0 - D @ w
    objective = float(r @ r) / (2 * n_pre) + lam_star * (
        (1.0 - alpha_star) / 2.0 * float(w @ w) + alpha_star * float(np.sum(np.abs(w)))
    )
    active = tuple(int(j) + 1 for j in np.flatnonzero(w == 0.0))
    return SCMFit(
        method="DINET",
        weights=weights,
        objective=objective,
        active_set=active,
        tuning={"alpha": alpha_star, "lam": lam_star, "cv_mse": best[0], "folds": folds},
    )


def synthetic_path(fit: SCMFit, panel: Panel) -> np.ndarray:
    """Weighted donor path plus shift over all T periods."""
    w = np.asarray(fit.weights, dtype=float)
    if w.shape != (panel.n_units,):
        raise DimensionError(
            f"weights have length {w.shape[0]} for a panel of {panel.n_units} units"
        )
    return w[0] + w[1:] @ panel.Y[1:]


def counterfactual(fit: SCMFit, panel: Panel) -> EffectSeries:
    """Post-period counterfactual and effects for a fitted weight vector."""
    path = synthetic_path(fit, panel)
    post = slice(panel.pre_periods, panel.n_times)
    cf = path[post]
    effects = panel.Y[0, post] - cf
    return EffectSeries(
        times=panel.times[post],
        counterfactual=cf,
        effects=effects,
        ate=float(np.mean(effects)),
    )
