"""End-to-end guarantees, one verdict line per check.

Each test prints ``ACCEPTANCE PASS/FAIL: <name>`` before asserting, so a
``pytest -s`` log always carries the full scorecard. The checks compare the
package against independent references (exhaustive search, dense quadrature,
literal density evaluation) or against frozen published values, never
against its own output.
"""

import csv
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import norm

import oracles
from _helpers import stacked_design
from bayesscm import RngStream, SimConfig, generate_dataset
from bayesscm.bayes import (
    DonorPool,
    EMConfig,
    Hyperparams,
    McmcConfig,
    effect_posterior,
    gate_probabilities,
    gibbs_sample,
    mcem_map,
    select_donors,
)
from bayesscm.cli import main
from bayesscm.errors import RankError
from bayesscm.panel import build_design, load_panel, write_panel
from bayesscm.qp import ConstraintSet, kkt_certificate, solve_affine, solve_constrained
from bayesscm.sampling import inverse_gamma, truncated_normal
from bayesscm.simlab import run_replications


def _verdict(name: str, ok: bool, detail: str = "") -> str:
    line = f"ACCEPTANCE {'PASS' if ok else 'FAIL'}: {name}"
    if detail:
        line += f" [{detail}]"
    print(line, flush=True)
    return line


def test_constrained_fits_match_exhaustive_search():
    # 200 random small instances, alternating plain and shifted hulls, each
    # scored against a hierarchically refined lattice search of the same
    # objective; stationarity certificates must hold at the same time
    start = time.monotonic()
    worst = 0.0
    certs = 0
    for i in range(200):
        gen = RngStream(20240, i).generator
        k = int(gen.integers(2, 6))
        rows_out = int(gen.integers(2, 7))
        p = int(gen.integers(0, min(4, 10 - rows_out) + 1))
        donors = gen.normal(0.0, 1.0, (rows_out + p, k))
        x1 = gen.normal(0.0, 1.5, rows_out + p)
        shift = bool(i % 2)
        design = stacked_design(x1, donors, rows_out, sizes=(1,) * p, shift=shift)
        cset = ConstraintSet.PS_CONV if shift else ConstraintSet.CONV
        sol = solve_constrained(design, None, cset)
        certs += int(kkt_certificate(sol, design).passed)
        shift_col = design.X0[:, 0] if shift else None
        donor_cols = design.X0[:, 1:] if shift else design.X0
        obj_ref, _ = oracles.grid_simplex_minimum(x1, donor_cols, shift_col=shift_col)
        worst = max(worst, abs(sol.objective - obj_ref))
    elapsed = time.monotonic() - start

    ok = worst < 1e-3 and certs == 200 and elapsed < 120.0
    line = _verdict(
        "constrained objectives match grid search on 200 instances", ok,
        f"worst |obj diff| {worst:.2e}, certificates {certs}/200, {elapsed:.0f}s")
    assert ok, line


def test_binding_sign_constraints_zero_out_a_donor():
    # whenever the sum-one fit with free signs leaves the feasible set, the
    # sign-constrained fit must park at least one donor exactly at zero
    found = with_zero = 0
    i = 0
    while found < 200 and i < 3000:
        gen = RngStream(777, i).generator
        i += 1
        k = int(gen.integers(2, 6))
        rows = k + 2 + int(gen.integers(0, 4))
        donors = gen.normal(0.0, 1.0, (rows, k))
        x1 = gen.normal(0.0, 2.0, rows)
        shift = bool(i % 2)
        design = stacked_design(x1, donors, rows, shift=shift)
        try:
            aff = solve_affine(
                design, None,
                ConstraintSet.AFFINE_W2 if shift else ConstraintSet.AFFINE_W1)
        except RankError:
            continue
        if float(np.min(aff.weights[1:])) >= 0.0:
            continue
        found += 1
        con = solve_constrained(
            design, None,
            ConstraintSet.PS_CONV if shift else ConstraintSet.CONV)
        with_zero += int(bool(np.any(con.weights[1:] == 0.0)))

    ok = found == 200 and with_zero == 200
    line = _verdict(
        "binding sign constraints produce an exact zero weight", ok,
        f"{with_zero}/{found} instances")
    assert ok, line


def test_conditional_samplers_match_references():
    draws = inverse_gamma(2.5, 1.5, RngStream(1001, 0), size=100_000)
    ig_err = abs(float(np.mean(draws)) - 1.0)

    tn = truncated_normal(2.0, 1.5, 0.0, 1.0, RngStream(1001, 1), size=200_000)
    m1_ref = oracles.truncated_normal_moment(2.0, 1.5, 0.0, 1.0, order=1)
    m2_ref = oracles.truncated_normal_moment(2.0, 1.5, 0.0, 1.0, order=2)
    half = truncated_normal(0.0, 1.0, 0.0, np.inf, RngStream(1001, 2), size=200_000)
    half_ref = oracles.truncated_normal_moment(0.0, 1.0, 0.0, np.inf, order=1)
    tn_err = max(abs(float(np.mean(tn)) - m1_ref),
                 abs(float(np.mean(tn ** 2)) - m2_ref),
                 abs(float(np.mean(half)) - half_ref))

    gen = RngStream(1001, 3).generator
    donors = gen.normal(0.0, 1.0, (5, 3)).round(6)
    x1 = gen.normal(0.0, 1.0, 5).round(6)
    design = stacked_design(x1, donors, 4, sizes=(1,), shift=True)
    w = np.array([0.25, 0.5, 0.3, 0.2])
    rows = design.blocks.block_rows(0)
    fitted = x1[rows] - design.residual(w)[rows]
    want = oracles.gate_probability(x1[rows], fitted, 0.8, 0.5)
    got = float(gate_probabilities(design, w, 0.8, Hyperparams())[0])
    gate_err = abs(got - want)

    ok = ig_err < 0.02 and tn_err < 0.01 and gate_err <= 1e-10
    line = _verdict(
        "conditional samplers match quadrature and density ratios", ok,
        f"inv-gamma mean err {ig_err:.4f}, trunc-normal moment err {tn_err:.4f}, "
        f"gate prob err {gate_err:.1e}")
    assert ok, line


def test_gibbs_chain_matches_quadrature_posterior():
    # two-donor toy problem whose (weight, shift, scale) posterior admits a
    # dense quadrature reference; the chain's Rao-Blackwellized first-weight
    # marginal must agree in total variation. The stale-slack sweep's
    # distance is measured alongside as the documented comparison.
    start = time.monotonic()
    t = np.arange(1.0, 13.0)
    x2 = np.round(np.sin(t / 2.0) + 0.3 * t, 6)
    x3 = np.round(0.25 * t + 1.0, 6)
    x1 = np.round(0.55 * x2 + 0.45 * x3 + 1.8
                  + RngStream(314, 0).generator.normal(0.0, 0.35, 12), 6)
    design = stacked_design(x1, np.column_stack([x2, x3]), 12, shift=True)
    pool = DonorPool(active=(1, 2))
    hyper = Hyperparams(noise_shape=2.0, noise_rate=1.5)
    ic = design.X0[:, 0]

    edges, reference = oracles.weight_marginal_quadrature(
        x1, ic, x2, x3, 2.0, 1.5, cells=200)

    d = x2 - x3
    dtd = float(d @ d)
    r0d = float((x1 - x3) @ d)
    icd = float(ic @ d)

    def chain_marginal(scheme):
        mcmc = McmcConfig(draws=50_000, burnin=2_000, seed=99, scheme=scheme)
        draws = gibbs_sample(design, pool, hyper=hyper, mcmc=mcmc,
                             init=np.array([0.0, 0.5, 0.5]))
        mus = (r0d - draws.weights[:, 0] * icd) / dtd
        sds = np.sqrt(draws.scales / dtd)
        mass = np.zeros(edges.shape[0] - 1)
        for lo in range(0, mus.shape[0], 10_000):
            m, s = mus[lo:lo + 10_000, None], sds[lo:lo + 10_000, None]
            cdf = norm.cdf((edges[None, :] - m) / s)
            cell = cdf[:, 1:] - cdf[:, :-1]
            mass += (cell / (cdf[:, -1:] - cdf[:, :1])).sum(axis=0)
        return mass / mus.shape[0]

    tv = oracles.total_variation(chain_marginal("collapsed"), reference)
    tv_stale = oracles.total_variation(chain_marginal("verbatim"), reference)
    elapsed = time.monotonic() - start

    ok = tv < 0.05 and elapsed < 300.0
    line = _verdict(
        "Gibbs posterior matches quadrature within TV 0.05", ok,
        f"collapsed TV {tv:.5f}, stale-slack TV {tv_stale:.5f} (documented), "
        f"{elapsed:.0f}s")
    assert ok, line


def test_benchmark_rankings_and_error_bands():
    start = time.monotonic()
    cfg = SimConfig(theta0=1.0, reps=100, seed=7)
    res = run_replications(cfg, methods=("ADH", "PSCONV", "BAYES"),
                           rng=RngStream(7, 0), jobs=min(4, os.cpu_count() or 1))
    elapsed = time.monotonic() - start

    te, ate = res.mse_te, res.mse_ate
    bayes_best = (te["BAYES"] < te["ADH"] and te["BAYES"] < te["PSCONV"]
                  and ate["BAYES"] < ate["ADH"] and ate["BAYES"] < ate["PSCONV"])
    shift_gain = ate["PSCONV"] <= 0.5 * ate["ADH"]
    in_band = 0.05 <= te["BAYES"] <= 0.15
    ok = (bayes_best and shift_gain and in_band and elapsed < 1800.0
          and all(v == 0 for v in res.failures.values()))
    line = _verdict(
        "benchmark rankings and error bands over 100 replications", ok,
        f"MSE_TE {te['BAYES']:.4f}/{te['PSCONV']:.4f}/{te['ADH']:.4f} "
        f"(BAYES/PSCONV/ADH), MSE_ATE ratio PSCONV/ADH "
        f"{ate['PSCONV'] / ate['ADH']:.2f}, {elapsed:.0f}s")
    assert ok, line


@pytest.mark.skipif("BAYESSCM_BASQUE_DATA" not in os.environ,
                    reason="set BAYESSCM_BASQUE_DATA to a directory holding "
                           "outcomes.csv and covariates.csv")
def test_terrorism_study_reproduces_published_numbers():
    root = Path(os.environ["BAYESSCM_BASQUE_DATA"])
    treated = os.environ.get("BAYESSCM_BASQUE_TREATED", "Basque Country")
    boundary = os.environ.get("BAYESSCM_BASQUE_PRE_END", "1969")
    cov = root / "covariates.csv"
    panel = load_panel(root / "outcomes.csv", treated, boundary,
                       covariates_path=cov if cov.exists() else None)

    design = build_design(panel, use_covariates=True, use_intercept=True)
    gen = RngStream(0, 0).generator
    mode = mcem_map(design, hyper=Hyperparams(), em=EMConfig(), rng=gen)
    pool = select_donors(mode)
    draws = gibbs_sample(design, pool, hyper=Hyperparams(),
                         mcmc=McmcConfig(draws=20_000, burnin=5_000,
                                         scheme="collapsed"),
                         init=mode.weights, rng=gen)
    post = effect_posterior(draws, panel)

    def donor_weight(fragment):
        hits = [j for j, u in enumerate(panel.donor_ids)
                if fragment in u.lower()]
        assert len(hits) == 1, (fragment, panel.donor_ids)
        return float(mode.weights[1 + hits[0]])

    w_cat = donor_weight("catalu")
    w_mad = donor_weight("madrid")
    ok = (abs(post.ate_mean - (-1.077)) <= 0.15
          and abs(post.ate_lower - (-1.722)) <= 0.20
          and abs(post.ate_upper - (-0.513)) <= 0.20
          and abs(w_cat - 0.343) <= 0.10
          and abs(w_mad - 0.372) <= 0.10)
    line = _verdict(
        "regional study matches published posterior and weights", ok,
        f"ATE {post.ate_mean:.3f}, HPD ({post.ate_lower:.3f}, "
        f"{post.ate_upper:.3f}), weights {w_cat:.3f}/{w_mad:.3f}")
    assert ok, line


def test_cli_reruns_are_byte_identical(tmp_path):
    cfg = SimConfig(n_units=6, n_times=12, pre_periods=5, n_covariates=2,
                    reps=1, seed=2)
    panel, _ = generate_dataset(cfg, RngStream(21, 0))
    data, cov = tmp_path / "outcomes.csv", tmp_path / "covariates.csv"
    write_panel(panel, data, cov)
    flags = ["--data", str(data), "--covariates", str(cov),
             "--treated", "unit1", "--pre-end", "5"]

    commands = {
        "estimate": ["estimate", *flags, "--method", "psconv", "--diagnostics"],
        "posterior": ["posterior", *flags, "--draws", "300", "--burnin", "100",
                      "--seed", "3", "--scheme", "collapsed"],
        "simulate": ["simulate", "--reps", "2", "--methods", "adh,psconv",
                     "--seed", "5"],
    }
    unstable = {"manifest.json", "report_manifest.json"}
    mismatches = []
    checked = 0
    for name, argv in commands.items():
        d1, d2 = tmp_path / f"{name}1", tmp_path / f"{name}2"
        assert main([*argv, "--out", str(d1)]) == 0
        assert main([*argv, "--out", str(d2)]) == 0
        if name == "posterior":
            for d in (d1, d2):
                assert main(["report", "--from", str(d)]) == 0
        for p1 in sorted(d1.iterdir()):
            if p1.name in unstable:
                continue
            checked += 1
            if p1.read_bytes() != (d2 / p1.name).read_bytes():
                mismatches.append(f"{name}/{p1.name}")

    ok = not mismatches and checked >= 10
    line = _verdict(
        "command reruns with one seed are byte-identical", ok,
        f"{checked} files compared" + (f", mismatched: {mismatches}" if mismatches else ""))
    assert ok, line
