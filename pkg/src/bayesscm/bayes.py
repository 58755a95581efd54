"""Spike-and-slab Bayesian synthetic control: posterior mode, donor
selection, and Gibbs sampling on the selected support.

The model weights the squared residual of the stacked system by a diagonal
matrix built from one positive noise scale and one 0/1 gate per covariate
block; the gates carry Bernoulli priors, the noise scale an inverse-gamma
prior, and the weight vector is uniform over the shifted simplex. Estimation
runs in three stages:

1. ``mcem_map``: Monte Carlo EM for the posterior mode of the weights. The
   E-step averages the gate indicators and reciprocal noise scale over a
   short Gibbs run; the M-step re-solves the shifted-simplex program under
   the averaged weighting, whose active-set solver returns exact zeros.
2. ``select_donors``: the nonzero pattern of the mode defines the donor pool.
3. ``gibbs_sample``: a blocked Gibbs chain over (weights, noise scale, gates)
   restricted to the pool, feeding ``effect_posterior`` and ``hpd_interval``.

The weight sweep treats the largest-index pool member as the slack
coordinate absorbing the sum constraint. Two sweep variants are provided,
because the conditional that treats the slack as fixed data ("verbatim", the
default, kept for fidelity to the construction this package reproduces) is
not an exact Gibbs kernel on the constrained space; "collapsed" substitutes
the slack out and is exact. Both preserve the support invariants to the last
bit; their empirical gap is measured in the test suite.
"""

from __future__ import annotations

import logging
import math
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import (
    ConfigError,
    ConvergenceWarning,
    DegenerateError,
    DimensionError,
    DomainError,
    NumericError,
)
from .panel import DesignMatrices, Panel, RowBlocks
from .qp import ConstraintSet, WeightSolution, solve_constrained
from .sampling import RngStream, as_generator, inverse_gamma, truncated_normal

__all__ = [
    "Hyperparams",
    "EMConfig",
    "McmcConfig",
    "VState",
    "MAPResult",
    "EMStep",
    "DonorPool",
    "PosteriorDraws",
    "EffectPosterior",
    "mcem_map",
    "select_donors",
    "gibbs_weight_sweep",
    "draw_noise_scale",
    "draw_gates",
    "gibbs_sample",
    "effect_posterior",
    "hpd_interval",
]

log = logging.getLogger(__name__)

ZERO_WEIGHT_TOL = 1e-8

SWEEP_SCHEMES = ("verbatim", "collapsed")


@dataclass(frozen=True)
class Hyperparams:
    """Prior settings: inverse-gamma (shape, rate) on the noise scale and a
    Bernoulli inclusion probability per covariate block.

    The defaults (0.5, 0.5, 0.5) are weakly informative: a heavy-tailed
    scale prior and indifferent gates.
    """

    noise_shape: float = 0.5
    noise_rate: float = 0.5
    gate_prior: float | tuple = 0.5

    def __post_init__(self):
        if self.noise_shape <= 0.0 or self.noise_rate <= 0.0:
            raise DomainError("noise_shape and noise_rate must be positive")
        probs = np.atleast_1d(np.asarray(self.gate_prior, dtype=float))
        if np.any(probs < 0.0) or np.any(probs > 1.0):
            raise DomainError("gate_prior entries must lie in [0, 1]")

    def gate_vector(self, n_blocks: int) -> np.ndarray:
        probs = np.atleast_1d(np.asarray(self.gate_prior, dtype=float))
        if probs.size == 1:
            return np.full(n_blocks, float(probs[0]))
        if probs.size != n_blocks:
            raise DimensionError(
                f"gate_prior has {probs.size} entries for {n_blocks} covariate blocks"
            )
        return probs.astype(float)


@dataclass(frozen=True)
class VState:
    """Residual-weighting state: positive noise scale and 0/1 gates.

    ``diagonal()`` realizes the implied row weights: 1/scale on outcome rows
    and gate/scale on each covariate block's rows, so a closed gate removes
    its block from every weighted fit.
    """

    scale: float
    gates: np.ndarray
    blocks: RowBlocks

    def __post_init__(self):
        object.__setattr__(self, "gates", np.asarray(self.gates, dtype=float))
        if not self.scale > 0.0:
            raise DomainError(f"noise scale must be positive, got {self.scale}")
        if self.gates.shape != (len(self.blocks.sizes),):
            raise DimensionError(
                f"{self.gates.shape[0]} gates for {len(self.blocks.sizes)} covariate blocks"
            )
        if not np.all((self.gates == 0.0) | (self.gates == 1.0)):
            raise DomainError("gates must be 0 or 1")

    def diagonal(self) -> np.ndarray:
        return _row_weights(self.blocks, self.gates) / self.scale


@dataclass(frozen=True)
class EMConfig:
    """Monte Carlo EM schedule.

    The S-step sample size grows geometrically from ``base_draws`` by
    ``growth`` per iteration, capped at ``max_draws``; each S-step warms up
    ``warmup`` cycles from the previous gate state. Strict convergence is
    two consecutive weight changes below ``tol``. Because the S-step average
    has Monte Carlo noise, a chain whose recent changes all sit below
    ``stall_tol`` after the cap is reached is treated as converged-at-noise-
    floor and refined once with a ``polish_draws``-cycle S-step.
    """

    tol: float = 1e-6
    max_iter: int = 200
    base_draws: int = 200
    growth: float = 1.2
    max_draws: int = 20_000
    warmup: int = 20
    stall_tol: float = 5e-3
    stall_window: int = 5
    polish_draws: int = 50_000

    def __post_init__(self):
        if self.tol <= 0.0 or self.stall_tol <= 0.0:
            raise ConfigError("tolerances must be positive")
        if self.max_iter < 1 or self.base_draws < 1 or self.max_draws < self.base_draws:
            raise ConfigError("iteration and draw counts must be positive and ordered")
        if self.growth < 1.0:
            raise ConfigError("growth must be at least 1")
        if self.warmup < 0 or self.stall_window < 1 or self.polish_draws < 1:
            raise ConfigError("warmup, stall_window and polish_draws must be sensible")


@dataclass(frozen=True)
class McmcConfig:
    """Gibbs chain protocol: retained draw count, burn-in, thinning, seed,
    and which weight-sweep variant to run."""

    draws: int = 10_000
    burnin: int = 2_000
    thin: int = 1
    seed: int = 0
    scheme: str = "verbatim"

    def __post_init__(self):
        if self.draws < 1 or self.burnin < 0 or self.thin < 1:
            raise ConfigError("need draws >= 1, burnin >= 0, thin >= 1")
        if self.scheme not in SWEEP_SCHEMES:
            raise ConfigError(f"scheme must be one of {SWEEP_SCHEMES}, got {self.scheme!r}")


@dataclass(frozen=True)
class EMStep:
    """One EM iteration's E-step averages and the resulting weight movement."""

    draws: int
    inv_scale: float
    gate_means: tuple
    delta: float


@dataclass(frozen=True)
class MAPResult:
    """Posterior-mode estimate with its EM trace.

    ``weights`` carries exact zeros on excluded donors (active-set M-step).
    ``stop_reason`` is "tol" (strict criterion), "stall" (noise-floor rule),
    or "cap" (iteration limit; ``warning`` then holds the message that was
    also issued as a ConvergenceWarning).
    """

    weights: np.ndarray
    vtrace: tuple
    iterations: int
    converged: bool
    stop_reason: str
    warning: str | None
    solution: WeightSolution

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))


@dataclass(frozen=True)
class DonorPool:
    """Active/inactive split of donor positions.

    Positions index the weight vector: 1..N-1, never 0 (the shift). The
    largest active position serves as the slack coordinate in the Gibbs
    sweep.
    """

    active: tuple
    inactive: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "active", tuple(sorted(int(j) for j in self.active)))
        object.__setattr__(self, "inactive", tuple(sorted(int(j) for j in self.inactive)))
        if not self.active:
            raise DegenerateError("donor pool is empty")
        both = self.active + self.inactive
        if len(set(both)) != len(both):
            raise ConfigError("active and inactive donor sets overlap")
        if set(both) != set(range(1, len(both) + 1)):
            raise ConfigError("donor positions must cover 1..N-1 exactly")

    @property
    def n_units(self) -> int:
        return len(self.active) + len(self.inactive) + 1

    @property
    def slack(self) -> int:
        return self.active[-1]


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained Gibbs draws: weight vectors (rows), noise scales, gates.

    Every row of ``weights`` satisfies the support exactly: zeros off the
    pool, nonnegative on it, active entries summing to one.
    """

    weights: np.ndarray
    scales: np.ndarray
    gates: np.ndarray
    pool: DonorPool
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "scales", np.asarray(self.scales, dtype=float))
        object.__setattr__(self, "gates", np.asarray(self.gates, dtype=np.int64))
        m = self.weights.shape[0]
        if self.scales.shape[0] != m or self.gates.shape[0] != m:
            raise DimensionError("draw matrices disagree on the number of draws")

    @property
    def n_draws(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class EffectPosterior:
    """Per-period treatment-effect draws and their summaries.

    ``effect_draws`` is draws-by-post-periods; ``ate_draws`` averages each
    row. ``lower``/``upper`` are per-period HPD bounds at ``level``; the
    interval for the average effect is (``ate_lower``, ``ate_upper``).
    """

    times: tuple
    effect_draws: np.ndarray
    ate_draws: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    ate_mean: float
    ate_lower: float
    ate_upper: float
    level: float


def _row_weights(blocks: RowBlocks, gate_values: np.ndarray) -> np.ndarray:
    """Ones on outcome rows, the (possibly fractional) gate value on each
    covariate block's rows."""
    s = np.ones(blocks.n_rows)
    for j, _ in enumerate(blocks.sizes):
        s[blocks.block_rows(j)] = gate_values[j]
    return s


def _block_sq_norms(resid: np.ndarray, blocks: RowBlocks):
    """Squared residual norms: outcome rows, then one value per block."""
    out = resid[blocks.outcome_rows]
    q_out = float(out @ out)
    q_blocks = np.empty(len(blocks.sizes))
    for j, _ in enumerate(blocks.sizes):
        r = resid[blocks.block_rows(j)]
        q_blocks[j] = float(r @ r)
    return q_out, q_blocks


def _noise_given(q_out, q_blocks, gates, blocks, hyper, gen) -> float:
    shape = hyper.noise_shape + (blocks.pre_periods + float(gates @ np.asarray(blocks.sizes))) / 2.0
    rate = hyper.noise_rate + (q_out + float(gates @ q_blocks)) / 2.0
    return inverse_gamma(shape, rate, gen)


def _gate_probs(q_blocks, scale, prior) -> np.ndarray:
    """Inclusion probability per block. In the density ratio between a block
    being weighted or removed, every other block's contribution cancels,
    leaving log-odds = prior log-odds - (block residual)^2 / (2 scale)."""
    with np.errstate(divide="ignore"):
        log_odds = np.log(prior) - np.log1p(-prior) - q_blocks / (2.0 * scale)
    probs = expit(log_odds)
    probs = np.where(prior == 0.0, 0.0, probs)
    return np.where(prior == 1.0, 1.0, probs)


def _gates_given(q_blocks, scale, prior, gen) -> np.ndarray:
    probs = _gate_probs(q_blocks, scale, prior)
    if probs.size == 0:
        return np.zeros(0)
    return (gen.random(probs.size) < probs).astype(float)


def draw_noise_scale(design: DesignMatrices, weights, gates, hyper: Hyperparams, rng) -> float:
    """One draw of the noise scale given weights and gates.

    Inverse-gamma with shape offset plus half the weighted row count, and
    rate offset plus half the gate-weighted squared residual.
    """
    gen = as_generator(rng)
    gates = np.asarray(gates, dtype=float)
    resid = design.residual(weights)
    q_out, q_blocks = _block_sq_norms(resid, design.blocks)
    return _noise_given(q_out, q_blocks, gates, design.blocks, hyper, gen)


def gate_probabilities(design: DesignMatrices, weights, scale: float,
                       hyper: Hyperparams) -> np.ndarray:
    """Inclusion probability of each covariate gate given weights and the
    noise scale, computed in log space to survive large blocks."""
    if not scale > 0.0:
        raise DomainError(f"noise scale must be positive, got {scale}")
    resid = design.residual(weights)
    _, q_blocks = _block_sq_norms(resid, design.blocks)
    prior = hyper.gate_vector(len(design.blocks.sizes))
    return _gate_probs(q_blocks, float(scale), prior)


def draw_gates(design: DesignMatrices, weights, scale: float, hyper: Hyperparams, rng) -> np.ndarray:
    """One draw of all gates given weights and the noise scale; independent
    across blocks."""
    gen = as_generator(rng)
    probs = gate_probabilities(design, weights, scale, hyper)
    if probs.size == 0:
        return np.zeros(0)
    return (gen.random(probs.size) < probs).astype(float)


def _settle_slack(w: np.ndarray, active: tuple) -> None:
    """Set the slack coordinate so the active weights sum to exactly 1.0
    under numpy summation, absorbing at most ulp-level corrections; any
    negative slack from round-off is pushed into the largest other weight."""
    idx = list(active)
    slack = idx[-1]
    w[slack] = 1.0 - float(np.sum(w[idx[:-1]])) if len(idx) > 1 else 1.0
    for _ in range(6):
        if w[slack] < 0.0:
            donor = idx[int(np.argmax(w[idx[:-1]]))]
            w[donor] += w[slack]
            w[slack] = 0.0
        total = float(np.sum(w[idx]))
        if total == 1.0:
            return
        w[slack] -= total - 1.0
    if abs(float(np.sum(w[idx])) - 1.0) > 1e-12:  # pragma: no cover - defensive
        raise NumericError("slack settlement failed to restore the sum constraint")


def _sweep(design, active, w, resid, scale, sdiag, gen, scheme) -> None:
    """One full weight sweep, in place.

    ``resid`` is maintained as X1 - X0 w throughout. The shift (if the
    design has one) gets a normal draw; every non-slack pool member gets a
    truncated-normal draw on [0, U] where U is one minus the other non-slack
    active weights; the slack closes the sum. The verbatim variant conditions
    on the slack's stale value; the collapsed variant eliminates it, moving
    slack mass simultaneously with each draw.
    """
    X0 = design.X0
    has_int = design.has_intercept

    def col(position: int) -> np.ndarray:
        return X0[:, position] if has_int else X0[:, position - 1]

    if has_int:
        shift_col = X0[:, 0]
        denom = float((sdiag * shift_col) @ shift_col)
        mean = w[0] + float((sdiag * shift_col) @ resid) / denom
        new = gen.normal(mean, math.sqrt(scale / denom))
        resid -= (new - w[0]) * shift_col
        w[0] = new

    slack = active[-1]
    others = active[:-1]
    if others:
        nonslack = float(np.sum(w[list(others)]))
        slack_col = col(slack)
        for j in others:
            xj = col(j)
            bound = 1.0 - (nonslack - w[j])
            if scheme == "collapsed":
                direction = xj - slack_col
            else:
                direction = xj
            denom = float((sdiag * direction) @ direction)
            if bound <= 0.0:
                # unreachable analytically; guards accumulated round-off
                log.warning("weight sweep hit a nonpositive bound %.3e at position %d", bound, j)
                new = 0.0
            elif denom <= 0.0:
                # every weighted row of this direction is gated out: the
                # conditional is flat on [0, bound]
                new = gen.uniform(0.0, bound)
            else:
                mean = w[j] + float((sdiag * direction) @ resid) / denom
                new = truncated_normal(mean, math.sqrt(scale / denom), 0.0, bound, gen)
            if scheme == "collapsed":
                new_slack = bound - new
                resid -= (new - w[j]) * xj + (new_slack - w[slack]) * slack_col
                w[slack] = new_slack
            else:
                resid -= (new - w[j]) * xj
            nonslack += new - w[j]
            w[j] = new

    before = w[slack]
    _settle_slack(w, active)
    if w[slack] != before:
        resid -= (w[slack] - before) * col(slack)


def gibbs_weight_sweep(design: DesignMatrices, pool: DonorPool, weights,
                       state: VState, rng, scheme: str = "verbatim") -> np.ndarray:
    """One weight sweep given the current weighting state; returns the new
    weight vector without mutating the input.

    The input must already satisfy the support: zeros off the pool,
    nonnegative on it, active weights summing to one.
    """
    if scheme not in SWEEP_SCHEMES:
        raise ConfigError(f"scheme must be one of {SWEEP_SCHEMES}, got {scheme!r}")
    if pool.n_units != design.n_units:
        raise DimensionError(
            f"pool implies {pool.n_units} units, design has {design.n_units}"
        )
    gen = as_generator(rng)
    w = np.asarray(weights, dtype=float).copy()
    if w.shape != (design.n_units,):
        raise DimensionError(f"weights must have length {design.n_units}")
    resid = design.residual(w)
    sdiag = _row_weights(design.blocks, state.gates)
    _sweep(design, pool.active, w, resid, float(state.scale), sdiag, gen, scheme)
    return w


def mcem_map(design: DesignMatrices, hyper: Hyperparams | None = None,
             em: EMConfig | None = None, rng=None) -> MAPResult:
    """Posterior mode of the weight vector by Monte Carlo EM.

    Parameters
    ----------
    design : DesignMatrices
        Must carry the intercept column; covariate blocks may be absent, in
        which case the weighting is a scalar and the mode coincides with the
        plain shifted-simplex fit.
    hyper, em : optional
        Priors and schedule; defaults are the package defaults.
    rng : RngStream or numpy Generator, optional
        Pass a fresh stream for reproducible runs; defaults to stream (0, 0).

    Returns
    -------
    MAPResult
        With exact zeros in ``weights`` and the E-step trace. Hitting the
        iteration cap issues (and records) a ConvergenceWarning instead of
        raising.
    """
    hyper = hyper if hyper is not None else Hyperparams()
    em = em if em is not None else EMConfig()
    if not design.has_intercept:
        raise ConfigError("the shifted-simplex model needs the intercept column")
    gen = as_generator(rng if rng is not None else RngStream(0, 0))
    blocks = design.blocks
    n_blocks = len(blocks.sizes)
    prior = hyper.gate_vector(n_blocks)

    sol = solve_constrained(design, None, ConstraintSet.PS_CONV)
    w = sol.weights
    gates = np.ones(n_blocks)
    trace = []
    recent = deque(maxlen=em.stall_window)
    hits = 0
    stop_reason = "cap"
    iterations = 0

    def s_step(n_cycles: int, gates0: np.ndarray):
        resid = design.residual(w)
        q_out, q_blocks = _block_sq_norms(resid, blocks)
        g = gates0
        inv_sum = 0.0
        gate_sum = np.zeros(n_blocks)
        for c in range(em.warmup + n_cycles):
            scale = _noise_given(q_out, q_blocks, g, blocks, hyper, gen)
            g = _gates_given(q_blocks, scale, prior, gen)
            if c >= em.warmup:
                inv_sum += 1.0 / scale
                gate_sum += g
        return inv_sum / n_cycles, gate_sum / n_cycles, g

    for t in range(em.max_iter):
        iterations = t + 1
        draws_t = min(em.base_draws * math.ceil(em.growth ** t), em.max_draws)
        inv_mean, gate_mean, gates = s_step(draws_t, gates)
        vdiag = inv_mean * _row_weights(blocks, gate_mean)
        msol = solve_constrained(design, vdiag, ConstraintSet.PS_CONV)
        delta = float(np.max(np.abs(msol.weights - w)))
        w, sol = msol.weights, msol
        trace.append(EMStep(draws_t, inv_mean, tuple(gate_mean), delta))
        hits = hits + 1 if delta < em.tol else 0
        if hits >= 2:
            stop_reason = "tol"
            break
        recent.append(delta)
        if (draws_t >= em.max_draws and len(recent) == em.stall_window
                and max(recent) < em.stall_tol):
            stop_reason = "stall"
            break

    warning = None
    if stop_reason != "tol":
        # one refinement pass at the noise floor (or at the cap) with a much
        # larger S-step sample, so the reported mode is as settled as the
        # budget allows
        inv_mean, gate_mean, gates = s_step(em.polish_draws, gates)
        vdiag = inv_mean * _row_weights(blocks, gate_mean)
        msol = solve_constrained(design, vdiag, ConstraintSet.PS_CONV)
        delta = float(np.max(np.abs(msol.weights - w)))
        w, sol = msol.weights, msol
        trace.append(EMStep(em.polish_draws, inv_mean, tuple(gate_mean), delta))
        if stop_reason == "cap":
            warning = (
                f"EM hit the iteration cap ({em.max_iter}) with last weight "
                f"change {delta:.2e}; result polished but unconverged"
            )
            warnings.warn(warning, ConvergenceWarning)

    return MAPResult(
        weights=w,
        vtrace=tuple(trace),
        iterations=iterations,
        converged=stop_reason != "cap",
        stop_reason=stop_reason,
        warning=warning,
        solution=sol,
    )


def select_donors(result, threshold: float = ZERO_WEIGHT_TOL) -> DonorPool:
    """Donor pool from the nonzero pattern of a posterior-mode estimate.

    Accepts a MAPResult or a bare weight vector. The M-step produces exact
    zeros, so the threshold only guards against near-zero residue from other
    weight sources.
    """
    w = np.asarray(getattr(result, "weights", result), dtype=float)
    if w.ndim != 1 or w.shape[0] < 2:
        raise DimensionError("expected a full-length weight vector")
    donors = np.abs(w[1:])
    active = tuple(int(j) + 1 for j in np.flatnonzero(donors > threshold))
    inactive = tuple(int(j) + 1 for j in np.flatnonzero(donors <= threshold))
    if not active:
        raise DegenerateError(
            "no donor weight exceeds the zero threshold; the mode retains no donors"
        )
    return DonorPool(active=active, inactive=inactive)


def _restricted_start(design: DesignMatrices, pool: DonorPool) -> np.ndarray:
    """Shifted-simplex fit with off-pool donor columns removed, embedded back
    into the full weight vector."""
    keep = [0] + [j for j in pool.active] if design.has_intercept else [j - 1 for j in pool.active]
    X0 = design.X0[:, keep]
    sub = DesignMatrices(X1=design.X1, X0=X0, blocks=design.blocks,
                         has_intercept=design.has_intercept)
    sol = solve_constrained(sub, None, ConstraintSet.PS_CONV if design.has_intercept
                            else ConstraintSet.CONV)
    w = np.zeros(design.n_units)
    w[0] = sol.weights[0]
    for k, j in enumerate(pool.active):
        w[j] = sol.weights[k + 1]
    return w


def _check_support(w: np.ndarray, pool: DonorPool) -> np.ndarray:
    w = np.asarray(w, dtype=float).copy()
    if w.shape != (pool.n_units,):
        raise DimensionError(f"weights must have length {pool.n_units}")
    off = list(pool.inactive)
    if off and float(np.max(np.abs(w[off]))) > ZERO_WEIGHT_TOL:
        raise DomainError("initial weights put mass on inactive donors")
    if off:
        w[off] = 0.0
    act = list(pool.active)
    if float(np.min(w[act])) < -ZERO_WEIGHT_TOL:
        raise DomainError("initial weights are negative on the pool")
    w[act] = np.clip(w[act], 0.0, None)
    if abs(float(np.sum(w[act])) - 1.0) > 1e-6:
        raise DomainError("initial active weights do not sum to one")
    _settle_slack(w, pool.active)
    return w


def gibbs_sample(design: DesignMatrices, pool: DonorPool,
                 hyper: Hyperparams | None = None,
                 mcmc: McmcConfig | None = None,
                 init=None, rng=None) -> PosteriorDraws:
    """Blocked Gibbs chain over (weights, noise scale, gates) on the pool.

    Parameters
    ----------
    design : DesignMatrices
    pool : DonorPool
        Usually from select_donors.
    hyper, mcmc : optional
        Priors and chain protocol (draws retained after burn-in and
        thinning; total sweeps = burnin + draws * thin).
    init : array, optional
        Starting weights on the support; defaults to the pool-restricted
        shifted-simplex fit, which is the mode's natural stand-in.
    rng : optional
        Overrides mcmc.seed when given.

    Returns
    -------
    PosteriorDraws
        One row per retained draw; support invariants hold exactly.
    """
    hyper = hyper if hyper is not None else Hyperparams()
    mcmc = mcmc if mcmc is not None else McmcConfig()
    if pool.n_units != design.n_units:
        raise DimensionError(
            f"pool implies {pool.n_units} units, design has {design.n_units}"
        )
    gen = as_generator(rng) if rng is not None else RngStream(mcmc.seed, 0).generator
    blocks = design.blocks
    n_blocks = len(blocks.sizes)
    prior = hyper.gate_vector(n_blocks)

    w = _check_support(init, pool) if init is not None else _restricted_start(design, pool)
    gates = np.ones(n_blocks)
    resid = design.residual(w)
    q_out, q_blocks = _block_sq_norms(resid, blocks)
    scale = _noise_given(q_out, q_blocks, gates, blocks, hyper, gen)

    total = mcmc.burnin + mcmc.draws * mcmc.thin
    kept_w = np.empty((mcmc.draws, design.n_units))
    kept_scale = np.empty(mcmc.draws)
    kept_gates = np.empty((mcmc.draws, n_blocks), dtype=np.int64)
    kept = 0

    sdiag = _row_weights(blocks, gates)
    for sweep_idx in range(total):
        _sweep(design, pool.active, w, resid, scale, sdiag, gen, mcmc.scheme)
        if sweep_idx % 512 == 511:
            # refresh the maintained residual; float drift is tiny but free to remove
            resid = design.residual(w)
        q_out, q_blocks = _block_sq_norms(resid, blocks)
        scale = _noise_given(q_out, q_blocks, gates, blocks, hyper, gen)
        gates = _gates_given(q_blocks, scale, prior, gen)
        sdiag = _row_weights(blocks, gates)
        if sweep_idx >= mcmc.burnin and (sweep_idx - mcmc.burnin) % mcmc.thin == 0:
            kept_w[kept] = w
            kept_scale[kept] = scale
            kept_gates[kept] = gates.astype(np.int64)
            kept += 1

    return PosteriorDraws(
        weights=kept_w,
        scales=kept_scale,
        gates=kept_gates,
        pool=pool,
        meta={
            "draws": mcmc.draws,
            "burnin": mcmc.burnin,
            "thin": mcmc.thin,
            "scheme": mcmc.scheme,
            "seed": None if rng is not None else mcmc.seed,
        },
    )


def hpd_interval(sample, level: float) -> tuple:
    """Shortest contiguous interval covering ceil(level * M) sorted points.

    Ties go to the leftmost shortest window. Needs at least 20 points to say
    anything meaningful about an interval.
    """
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    m = x.size
    if m < 20:
        raise DomainError(f"need at least 20 sample points for an HPD interval, got {m}")
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie strictly between 0 and 1, got {level}")
    k = math.ceil(level * m)
    widths = x[k - 1:] - x[: m - k + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + k - 1])


def effect_posterior(draws: PosteriorDraws, panel: Panel, level: float = 0.95) -> EffectPosterior:
    """Treatment-effect draws for every post period, with HPD summaries.

    Each weight draw maps to a counterfactual path; the effect is the
    observed outcome minus that path, and the average effect divides by the
    number of post periods.
    """
    if draws.weights.shape[1] != panel.n_units:
        raise DimensionError(
            f"draws carry {draws.weights.shape[1]} weight positions, panel has "
            f"{panel.n_units} units"
        )
    post = slice(panel.pre_periods, panel.n_times)
    y_treated = panel.Y[0, post]
    donors = panel.Y[1:, post]
    cf = draws.weights[:, :1] + draws.weights[:, 1:] @ donors
    theta = y_treated[None, :] - cf
    ate = theta.mean(axis=1)
    n_post = theta.shape[1]
    lower = np.empty(n_post)
    upper = np.empty(n_post)
    for t in range(n_post):
        lower[t], upper[t] = hpd_interval(theta[:, t], level)
    ate_lower, ate_upper = hpd_interval(ate, level)
    return EffectPosterior(
        times=panel.times[post],
        effect_draws=theta,
        ate_draws=ate,
        mean=theta.mean(axis=0),
        lower=lower,
        upper=upper,
        ate_mean=float(ate.mean()),
        ate_lower=ate_lower,
        ate_upper=ate_upper,
        level=level,
    )
