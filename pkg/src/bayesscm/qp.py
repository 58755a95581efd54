"""Constrained least-squares weight solvers with exact-zero bookkeeping.

Every estimator in the package minimizes a diagonally weighted residual
``(X1 - X0 w)' V (X1 - X0 w)`` over one of five constraint families on the
weight vector: the donor simplex, the donor simplex with a free level shift,
nonnegative donors with a free shift, and the two affine relaxations that keep
the sum constraint but drop the sign constraints.

The inequality-constrained families are solved by a primal active-set method.
Clamped coordinates are held at floating-point zero, never at a small
positive value, so downstream sparsity logic can test ``w == 0.0`` exactly.
The affine families reduce to one saddle-point linear system and raise
:class:`~bayesscm.errors.RankError` when that system is singular.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    IterationLimitError,
    NumericError,
    RankError,
)
from .panel import DesignMatrices

__all__ = [
    "ConstraintSet",
    "Duals",
    "WeightSolution",
    "KKTReport",
    "solve_constrained",
    "solve_affine",
    "kkt_certificate",
]


class ConstraintSet(Enum):
    """Constraint families for the weight vector.

    CONV
        No shift, nonnegative donor weights summing to one.
    PS_CONV
        Free shift, nonnegative donor weights summing to one.
    CONI
        Free shift, nonnegative donor weights, no sum constraint.
    AFFINE_W1
        No shift, donor weights summing to one, signs free.
    AFFINE_W2
        Free shift, donor weights summing to one, signs free.
    """

    CONV = "conv"
    PS_CONV = "ps_conv"
    CONI = "coni"
    AFFINE_W1 = "affine_w1"
    AFFINE_W2 = "affine_w2"

    @property
    def has_shift(self) -> bool:
        return self in (ConstraintSet.PS_CONV, ConstraintSet.CONI, ConstraintSet.AFFINE_W2)

    @property
    def sum_constrained(self) -> bool:
        return self is not ConstraintSet.CONI

    @property
    def sign_constrained(self) -> bool:
        return self in (ConstraintSet.CONV, ConstraintSet.PS_CONV, ConstraintSet.CONI)


@dataclass(frozen=True)
class Duals:
    """Multipliers at the solution: one scalar for the sum-to-one constraint
    (None when the family has no sum constraint) and one value per donor for
    the sign constraints (zeros for the affine families)."""

    equality: float | None
    inequality: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "inequality", np.asarray(self.inequality, dtype=float))


@dataclass(frozen=True)
class WeightSolution:
    """Solver output.

    ``weights`` always has length N: position 0 is the shift coefficient
    (exactly 0.0 when the family pins it), positions 1..N-1 are donor weights
    in design column order. ``active_set`` lists donor positions clamped at
    exactly zero. ``nonunique`` flags a rank-deficient face, in which case
    the returned point is the minimum-Euclidean-norm optimizer of the donor
    weights on that face.
    """

    weights: np.ndarray
    objective: float
    constraint: ConstraintSet
    active_set: tuple
    duals: Duals
    nonunique: bool
    iterations: int

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))


@dataclass(frozen=True)
class KKTReport:
    """Violation magnitudes for a solution certified against its constraints.

    All entries are nonnegative; ``passed`` is true when every violation is
    at most ``tol``. ``stationarity`` measures the Lagrangian gradient,
    ``dual_feasibility`` the most negative sign multiplier,
    ``complementary_slackness`` the largest |mu_i * w_i| product, and the
    ``primal_*`` entries measure constraint violations of the point itself.
    """

    stationarity: float
    dual_feasibility: float
    complementary_slackness: float
    primal_sum: float
    primal_sign: float
    primal_shift: float
    passed: bool
    tol: float

    def as_dict(self) -> dict:
        return {
            "stationarity": self.stationarity,
            "dual_feasibility": self.dual_feasibility,
            "complementary_slackness": self.complementary_slackness,
            "primal_sum": self.primal_sum,
            "primal_sign": self.primal_sign,
            "primal_shift": self.primal_shift,
            "passed": self.passed,
            "tol": self.tol,
        }


def _diag_weights(V, n_rows: int) -> np.ndarray:
    """Normalize V to a validated 1-d nonnegative diagonal."""
    if V is None:
        return np.ones(n_rows)
    v = np.asarray(V, dtype=float)
    if v.ndim == 0:
        v = np.full(n_rows, float(v))
    elif v.ndim == 2:
        if v.shape[0] != v.shape[1] or np.any(v != np.diag(np.diag(v))):
            raise NumericError("V must be diagonal")
        v = np.diag(v).astype(float)
    if v.shape != (n_rows,):
        raise DimensionError(f"V has {v.shape[0]} weights for {n_rows} design rows")
    if not np.all(np.isfinite(v)):
        raise NumericError("V contains non-finite entries")
    if np.any(v < 0.0):
        raise NumericError("V contains negative entries")
    if not np.any(v > 0.0):
        raise NumericError("V is identically zero")
    return v


def _check_finite(design: DesignMatrices):
    if not (np.all(np.isfinite(design.X1)) and np.all(np.isfinite(design.X0))):
        raise NumericError("design matrices contain non-finite entries")


def _zero_sum_basis(k: int) -> np.ndarray:
    # orthonormal basis of the zero-sum subspace of R^k
    q = np.linalg.qr(np.ones((k, 1)), mode="complete")[0]
    return q[:, 1:]


def _face_solve_sum(BF: np.ndarray, t: np.ndarray):
    """Minimize ||t - BF w||^2 subject to sum(w) = 1 on the free face.

    Returns the minimizer and a rank-deficiency flag. Under rank deficiency
    the returned point is the minimum-norm minimizer: with the uniform point
    as offset and an orthonormal zero-sum basis, least-squares on the reduced
    coordinates minimizes ||w|| itself over the optimal set.
    """
    k = BF.shape[1]
    if k == 1:
        return np.array([1.0]), False
    a = np.full(k, 1.0 / k)
    Z = _zero_sum_basis(k)
    M = BF @ Z
    # judge rank against the face matrix scale: when columns of BF are exactly
    # affinely dependent, M is pure rounding noise and lstsq's relative test
    # would call it full rank (and amplify the noise by its inverse)
    um, s, vt = np.linalg.svd(M, full_matrices=False)
    scale = float(np.linalg.svd(BF, compute_uv=False)[0])
    keep = s > max(M.shape) * np.finfo(float).eps * max(scale, 1.0)
    proj = um.T @ (t - BF @ a)
    u = vt.T @ np.where(keep, proj / np.where(keep, s, 1.0), 0.0)
    return a + Z @ u, int(np.sum(keep)) < k - 1


def _face_solve_free(BF: np.ndarray, t: np.ndarray):
    w, _, rank, _ = np.linalg.lstsq(BF, t, rcond=None)
    return w, rank < BF.shape[1]


def _active_set(B: np.ndarray, t: np.ndarray, sum_to_one: bool, tol: float, max_iter: int):
    """Primal active-set loop for min ||t - B w||^2 with w >= 0 and an
    optional sum-to-one constraint.

    Returns (w, lam, mu, nonunique, iterations). Coordinates in the working
    set are exactly 0.0. Multipliers follow the convention
    grad + lam * 1 - mu = 0, so mu_i = grad_i + lam on clamped coordinates.
    """
    m, n = B.shape
    w = np.zeros(n)
    free = np.zeros(n, dtype=bool)
    if sum_to_one:
        start = int(np.argmin(((t[:, None] - B) ** 2).sum(axis=0)))
        w[start] = 1.0
        free[start] = True
    nonunique = False
    last_clamped = -1

    for iteration in range(1, max_iter + 1):
        F = np.flatnonzero(free)
        if F.size == 0:
            # reachable only without the sum constraint; w = 0 is the iterate
            grad = 2.0 * (B.T @ (B @ w - t))
            worst = int(np.argmin(grad))
            if grad[worst] >= -tol:
                return w, None, grad, nonunique, iteration
            free[worst] = True
            continue

        BF = B[:, F]
        if sum_to_one:
            w_hat, rank_def = _face_solve_sum(BF, t)
        else:
            w_hat, rank_def = _face_solve_free(BF, t)

        if np.min(w_hat) >= -tol:
            w = np.zeros(n)
            w[F] = np.maximum(w_hat, 0.0)
            nonunique = nonunique or rank_def
            grad = 2.0 * (B.T @ (B @ w - t))
            lam = -float(np.mean(grad[F])) if sum_to_one else None
            mu = grad + (lam if sum_to_one else 0.0)
            clamped = np.flatnonzero(~free)
            if clamped.size == 0:
                return w, lam, np.where(free, 0.0, mu), nonunique, iteration
            order = clamped[np.argsort(mu[clamped], kind="stable")]
            # prefer releasing a coordinate other than the one just clamped,
            # which breaks the only cheap two-cycle this method can enter
            candidate = next((c for c in order if mu[c] < -tol and c != last_clamped), None)
            if candidate is None and mu[order[0]] < -tol:
                candidate = int(order[0])
            if candidate is None:
                return w, lam, np.where(free, 0.0, mu), nonunique, iteration
            free[candidate] = True
            last_clamped = -1
        else:
            # step from the current feasible w toward the face optimum until
            # the first coordinate hits zero, then clamp it exactly
            wF = w[F]
            heading_neg = np.flatnonzero(w_hat < 0.0)
            steps = wF[heading_neg] / (wF[heading_neg] - w_hat[heading_neg])
            alpha = float(np.min(steps))
            blocked = heading_neg[steps <= alpha + 1e-15]
            w[F] = wF + alpha * (w_hat - wF)
            for b in blocked:
                w[F[b]] = 0.0
                free[F[b]] = False
            last_clamped = int(F[blocked[0]])

    raise IterationLimitError(
        f"active-set solver exceeded {max_iter} iterations on a {m}x{n} problem"
    )


def _profile_shift(X1: np.ndarray, donors: np.ndarray, shift_col: np.ndarray, v: np.ndarray):
    """Eliminate the free shift coefficient in closed form.

    Projects the shift column out of the objective under the V inner product;
    the reduced problem has the same donor minimizers and multipliers, and the
    shift is recovered by one weighted least-squares step. Returns the reduced
    design, reduced target, and the recovery function.
    """
    vs = v * shift_col
    denom = float(shift_col @ vs)
    if denom <= 0.0:
        raise NumericError("shift column carries no weight under V")
    cross = (vs @ donors) / denom
    target_coef = float(vs @ X1) / denom
    sq = np.sqrt(v)
    B = sq[:, None] * donors - np.outer(sq * shift_col, cross)
    t = sq * (X1 - target_coef * shift_col)

    def recover(w: np.ndarray) -> float:
        return target_coef - float(cross @ w)

    return B, t, recover


def _require_shift_column(design: DesignMatrices, cset: ConstraintSet):
    if not design.has_intercept:
        raise ConfigError(
            f"{cset.name} has a free shift coefficient; build the design with an intercept column"
        )


def _exact_sum(w: np.ndarray) -> np.ndarray:
    # push rounding slack into the largest coordinate so the sum is exact
    if w.size:
        w[int(np.argmax(w))] += 1.0 - w.sum()
    return w


def _assemble(design, donor_w, shift):
    full = np.zeros(design.n_units)
    full[0] = shift
    full[1:] = donor_w
    return full


def solve_constrained(design: DesignMatrices, V, cset: ConstraintSet,
                      tol: float = 1e-10, max_iter: int | None = None) -> WeightSolution:
    """Minimize the V-weighted residual over an inequality-constrained family.

    Parameters
    ----------
    design : DesignMatrices
        Stacked system; PS_CONV and CONI require its intercept column.
    V : None, scalar, vector, or diagonal matrix
        Row weights; None means identity. Entries must be nonnegative and not
        all zero (rows with zero weight simply drop out of the fit).
    cset : ConstraintSet
        CONV, PS_CONV, or CONI. Affine families go through solve_affine.
    tol : float
        Feasibility and dual tolerance of the active-set loop.
    max_iter : int, optional
        Iteration cap, defaulting to 50 N.

    Returns
    -------
    WeightSolution
        With donor weights clamped at exactly 0.0 on the active set, the sum
        constraint exact by construction, and multipliers for certification.
    """
    if not isinstance(cset, ConstraintSet):
        raise ConfigError(f"unknown constraint set {cset!r}")
    if not cset.sign_constrained:
        raise ConfigError(f"{cset.name} has no sign constraints; use solve_affine")
    _check_finite(design)
    v = _diag_weights(V, design.blocks.n_rows)
    if max_iter is None:
        max_iter = 50 * design.n_units

    donors = design.donor_columns()
    sq = np.sqrt(v)

    if cset is ConstraintSet.CONV:
        B = sq[:, None] * donors
        t = sq * design.X1
        recover = None
    else:
        _require_shift_column(design, cset)
        B, t, recover = _profile_shift(design.X1, donors, design.X0[:, 0], v)

    w, lam, mu, nonunique, iterations = _active_set(
        B, t, cset.sum_constrained, tol, max_iter
    )
    if cset.sum_constrained:
        w = _exact_sum(w)
    shift = recover(w) if recover is not None else 0.0
    weights = _assemble(design, w, shift)
    resid = design.residual(weights)
    objective = float(resid @ (v * resid))
    active = tuple(int(j) + 1 for j in np.flatnonzero(w == 0.0))
    return WeightSolution(
        weights=weights,
        objective=objective,
        constraint=cset,
        active_set=active,
        duals=Duals(equality=lam, inequality=mu),
        nonunique=nonunique,
        iterations=iterations,
    )


def solve_affine(design: DesignMatrices, V, cset: ConstraintSet) -> WeightSolution:
    """Solve the sign-free families by their saddle-point linear system.

    AFFINE_W1 optimizes donor weights under the sum constraint alone;
    AFFINE_W2 adds the free shift coefficient. A singular system raises
    RankError carrying the null-space dimension; no minimum-norm selection is
    attempted because these solutions feed sparsity comparisons that need a
    unique point.
    """
    if cset not in (ConstraintSet.AFFINE_W1, ConstraintSet.AFFINE_W2):
        raise ConfigError(f"solve_affine handles the affine families, not {cset!r}")
    _check_finite(design)
    v = _diag_weights(V, design.blocks.n_rows)

    donors = design.donor_columns()
    if cset is ConstraintSet.AFFINE_W2:
        _require_shift_column(design, cset)
        A = design.X0
        c = np.ones(A.shape[1])
        c[0] = 0.0
    else:
        A = donors
        c = np.ones(A.shape[1])

    G = 2.0 * (A.T @ (v[:, None] * A))
    dim = A.shape[1] + 1
    kkt = np.zeros((dim, dim))
    kkt[:-1, :-1] = G
    kkt[:-1, -1] = c
    kkt[-1, :-1] = c
    rhs = np.concatenate([2.0 * (A.T @ (v * design.X1)), [1.0]])

    s = np.linalg.svd(kkt, compute_uv=False)
    cutoff = s[0] * dim * np.finfo(float).eps if s[0] > 0 else 0.0
    rank = int(np.sum(s > cutoff))
    if rank < dim:
        raise RankError(
            f"singular KKT system for {cset.name} (null space dimension {dim - rank})",
            nullity=dim - rank,
        )
    sol = np.linalg.solve(kkt, rhs)
    coef, lam = sol[:-1], float(sol[-1])

    if cset is ConstraintSet.AFFINE_W2:
        shift, donor_w = float(coef[0]), coef[1:]
    else:
        shift, donor_w = 0.0, coef
    donor_w = _exact_sum(donor_w.copy())
    weights = _assemble(design, donor_w, shift)
    resid = design.residual(weights)
    objective = float(resid @ (v * resid))
    active = tuple(int(j) + 1 for j in np.flatnonzero(donor_w == 0.0))
    return WeightSolution(
        weights=weights,
        objective=objective,
        constraint=cset,
        active_set=active,
        duals=Duals(equality=lam, inequality=np.zeros(donor_w.shape[0])),
        nonunique=False,
        iterations=1,
    )


def kkt_certificate(sol: WeightSolution, design: DesignMatrices, V=None,
                    tol: float = 1e-8) -> KKTReport:
    """Certify a solution against the first-order optimality conditions.

    The gradient is recomputed from the stored weights, so perturbing a
    passing solution's weight vector surfaces as a stationarity violation. Stored
    multipliers are used when the solution carries them; otherwise multipliers
    are estimated from the gradient on the inactive coordinates.
    """
    cset = sol.constraint
    _check_finite(design)
    v = _diag_weights(V, design.blocks.n_rows)
    w_full = np.asarray(sol.weights, dtype=float)
    if w_full.shape != (design.n_units,):
        raise DimensionError(
            f"weights have length {w_full.shape[0]}; design implies {design.n_units}"
        )

    resid = design.residual(w_full)
    cols = design.X0
    grad_cols = -2.0 * (cols.T @ (v * resid))
    if design.has_intercept:
        grad_shift = float(grad_cols[0])
        grad_donors = grad_cols[1:]
    else:
        grad_shift = 0.0
        grad_donors = grad_cols
    donor_w = w_full[1:]

    lam = sol.duals.equality
    mu = np.asarray(sol.duals.inequality, dtype=float)
    if mu.shape != donor_w.shape:
        raise DimensionError("stored mu length does not match the donor count")
    if cset.sum_constrained and lam is None:
        inactive = np.flatnonzero(donor_w != 0.0)
        pool = inactive if inactive.size else np.arange(donor_w.shape[0])
        lam = -float(np.mean(grad_donors[pool]))

    lam_term = lam if cset.sum_constrained else 0.0
    stationarity_vec = grad_donors + lam_term - (mu if cset.sign_constrained else 0.0)
    stationarity = float(np.max(np.abs(stationarity_vec))) if donor_w.size else 0.0
    if cset.has_shift:
        stationarity = max(stationarity, abs(grad_shift))

    if cset.sign_constrained:
        dual_feasibility = float(max(0.0, -np.min(mu))) if mu.size else 0.0
        complementary = float(np.max(np.abs(mu * donor_w))) if mu.size else 0.0
        primal_sign = float(max(0.0, -np.min(donor_w))) if donor_w.size else 0.0
    else:
        dual_feasibility = 0.0
        complementary = 0.0
        primal_sign = 0.0

    primal_sum = abs(float(donor_w.sum()) - 1.0) if cset.sum_constrained else 0.0
    primal_shift = 0.0 if cset.has_shift else abs(float(w_full[0]))

    passed = all(
        x <= tol
        for x in (stationarity, dual_feasibility, complementary,
                  primal_sum, primal_sign, primal_shift)
    )
    return KKTReport(
        stationarity=stationarity,
        dual_feasibility=dual_feasibility,
        complementary_slackness=complementary,
        primal_sum=primal_sum,
        primal_sign=primal_sign,
        primal_shift=primal_shift,
        passed=passed,
        tol=tol,
    )
