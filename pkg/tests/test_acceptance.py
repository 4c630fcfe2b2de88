"""Acceptance gate: ten end-to-end criteria at their stated tolerances.

Each test records a one-line verdict that is printed in the
"acceptance criteria" section at the end of the pytest run. Run alone with::

    pytest tests/test_acceptance.py -v
    python3 tests/test_acceptance.py
"""

from __future__ import annotations

import json
import time
import warnings

import numpy as np
import pytest
from helpers import ACCEPTANCE_RESULTS, breakpoints, toy_model
from oracles import brute_force_posteriors, linear_solve_stationary, quad_cdf, quad_mass, second_eigen_modulus

from ptse import backend, cli, hmm
from ptse.estimator import FitConfig, deserialize, fit, serialize
from ptse.exceptions import ConstraintFallbackWarning
from ptse.mqe import fit_emission
from ptse.predictor import ForecastInput, ensemble_pdf, ensemble_quantile, quantile_bracket
from ptse.simulator import random_transition_matrix, regime_switching_frame

RECOVERY_A = np.array([[0.8, 0.15, 0.05], [0.1, 0.7, 0.2], [0.2, 0.2, 0.6]])
RECOVERY_MAX_ITERS = 25


def record(n: int, ok: bool, detail: str):
    ACCEPTANCE_RESULTS[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def quiet(fn, *args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*args, **kwargs)


# 1 ---------------------------------------------------------------------------


def test_01_empirical_cdf_convergence(tmp_path, capsys):
    start = time.perf_counter()
    worst_terminal, worst_abs, worst_tail = 0.0, 0.0, 0.0
    for K in (3, 5, 10):
        out = tmp_path / f"k{K}.csv"
        code = cli.main(["simulate", "--k", str(K), "--t", "1000", "--reps", "100", "--tau", "0.5", "--seed", "7", "--out", str(out)])
        capsys.readouterr()
        assert code == 0
        s = json.loads(out.with_suffix(".json").read_text())["summary"]
        worst_terminal = max(worst_terminal, s["terminal_gap"])
        worst_abs = max(worst_abs, s["terminal_abs_gap"])
        worst_tail = max(worst_tail, s["max_gap_after_50"])
    elapsed = time.perf_counter() - start
    ok = worst_terminal < 0.02 and worst_abs < 0.02 and worst_tail < 0.05 and elapsed < 30
    record(
        1,
        ok,
        f"K=3,5,10: max gap at T=1000 {worst_terminal:.4f} (mean-of-abs {worst_abs:.4f}) < 0.02; "
        f"max gap for T>=50 {worst_tail:.4f} < 0.05; {elapsed:.1f}s < 30s",
    )


# 2 ---------------------------------------------------------------------------


def test_02_forward_backward_matches_enumeration():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        K, T = int(rng.integers(1, 4)), int(rng.integers(2, 7))
        L = rng.uniform(0.01, 3.0, (T, K))
        M = rng.uniform(0.01, 1.0, (K, K))
        A = M / M.sum(axis=1, keepdims=True)
        p = rng.uniform(0.01, 1.0, K)
        pi = p / p.sum()
        post = hmm.forward_backward(L, A, pi)
        g, x, ll = brute_force_posteriors(L, A, pi)
        worst = max(worst, np.abs(post.gamma - g).max(), np.abs(post.xi - x).max(), abs(post.log_likelihood - ll))
    elapsed = time.perf_counter() - start
    record(2, worst <= 1e-9 and elapsed < 5, f"200 instances K<=3, T<=6: max deviation {worst:.2e} <= 1e-9; {elapsed:.2f}s < 5s")


# 3 ---------------------------------------------------------------------------


def test_03_stationary_distribution():
    rng = np.random.default_rng(3)
    worst_oracle, worst_resid = 0.0, 0.0
    for _ in range(100):
        K = int(rng.integers(2, 11))
        A = rng.uniform(0.001, 1.0, (K, K))
        A /= A.sum(axis=1, keepdims=True)
        p = hmm.stationary_distribution(A)
        worst_oracle = max(worst_oracle, np.abs(p - linear_solve_stationary(A)).max())
        worst_resid = max(worst_resid, np.abs(p @ A - p).max())
    record(
        3,
        worst_oracle <= 1e-10 and worst_resid <= 1e-12,
        f"100 matrices K<=10: |pi* - solve| {worst_oracle:.2e} <= 1e-10; |pi*A - pi*| {worst_resid:.2e} <= 1e-12",
    )


# 4 ---------------------------------------------------------------------------


def test_04_frobenius_decay_rate():
    rng = np.random.default_rng(4)
    worst = 0.0
    for i in range(20):
        K = int(rng.integers(2, 11))
        A = random_transition_matrix(K, rng.integers(2**32))
        d = hmm.frobenius_decay(A, 200)
        window = slice(19, 200)
        slope = np.polyfit(d.t[window], d.log_distance[window], 1)[0]
        target = np.log(second_eigen_modulus(A))
        worst = max(worst, abs(slope - target) / abs(target))
    record(4, worst <= 0.05, f"20 random positive matrices: max relative slope error {worst:.2e} <= 5%")


# 5 ---------------------------------------------------------------------------


def _random_feasible_emission(rng, q):
    while True:
        T = int(rng.integers(5, 120))
        res = rng.normal(rng.uniform(-1.5, 1.5), rng.uniform(0.2, 3.0), T)
        g = rng.uniform(0.001, 1.0, T)
        sigma = float(rng.uniform(0.05, 1.0) * res.std())
        with warnings.catch_warnings():
            warnings.simplefilter("error", ConstraintFallbackWarning)
            try:
                return fit_emission(res, g, sigma, q)
            except ConstraintFallbackWarning:
                continue


def test_05_mqe_constraints():
    rng = np.random.default_rng(5)
    worst_cdf, worst_mass, worst_quad_cdf = 0.0, 0.0, 0.0
    for q in (0.1, 0.5, 0.9):
        for _ in range(100):
            e = _random_feasible_emission(rng, q)
            lo, hi = e.support(12.0)
            worst_cdf = max(worst_cdf, abs(e.cdf(0.0) - q))
            worst_mass = max(worst_mass, abs(quad_mass(e.pdf, lo, hi, e.residuals) - 1.0))
            worst_quad_cdf = max(worst_quad_cdf, abs(quad_cdf(e.pdf, 0.0, lo, e.residuals) - q))
    ok = worst_cdf <= 1e-6 and worst_mass <= 1e-6 and worst_quad_cdf <= 1e-6
    record(
        5,
        ok,
        f"300 feasible emissions, q in (0.1, 0.5, 0.9): |F(0) - q| {worst_cdf:.2e}, "
        f"|quad F(0) - q| {worst_quad_cdf:.2e}, |mass - 1| {worst_mass:.2e} (all <= 1e-6)",
    )


# 6 ---------------------------------------------------------------------------


def test_06_quantile_inversion():
    rng = np.random.default_rng(6)
    worst_cdf, worst_shift = 0.0, 0.0
    for seed in range(100):
        m = toy_model(1000 + seed)
        shifts = rng.uniform(-5, 5, m.n_members)
        inp = ForecastInput(shifts)
        f = ensemble_quantile(m, inp)
        lo, _ = quantile_bracket(m, inp)
        cdf = quad_cdf(lambda y: ensemble_pdf(m, inp, y), f.quantile_value, lo, breakpoints(m, shifts))
        worst_cdf = max(worst_cdf, abs(cdf - m.q))
        c = rng.uniform(-100, 100)
        g = ensemble_quantile(m, ForecastInput(shifts + c))
        worst_shift = max(worst_shift, abs((g.quantile_value - f.quantile_value) - c))
    record(
        6,
        worst_cdf <= 1e-8 and worst_shift <= 1e-9,
        f"100 fitted toy models: |quad CDF(tau) - q| {worst_cdf:.2e} <= 1e-8; shift error {worst_shift:.2e} <= 1e-9",
    )


# 7 ---------------------------------------------------------------------------


def test_07_synthetic_recovery():
    truth = hmm.stationary_distribution(RECOVERY_A)
    start = time.perf_counter()
    worst, worst_path, worst_fit = 0.0, 0.0, 0.0
    for seed in range(10):
        frame, states = regime_switching_frame(RECOVERY_A, [-3.0, 0.0, 3.0], 0.7, 0.5, 2000, seed=700 + seed)
        m = quiet(fit, frame, FitConfig(max_iters=RECOVERY_MAX_ITERS, seed=seed))
        visited = np.bincount(np.asarray(states), minlength=3) / len(states)
        worst = max(worst, np.abs(m.pi_star - truth).max())
        # diagnostics: sampling error of the realised path, and fit error against it
        worst_path = max(worst_path, np.abs(visited - truth).max())
        worst_fit = max(worst_fit, np.abs(m.pi_star - visited).max())
    elapsed = time.perf_counter() - start
    record(
        7,
        worst < 0.05 and elapsed < 60,
        f"K=3, T=2000, 10 seeds, max_iters={RECOVERY_MAX_ITERS}: max |pi* - truth| {worst:.4f} < 0.05; {elapsed:.1f}s < 60s "
        f"(path frequencies vs truth {worst_path:.4f}; pi* vs path frequencies {worst_fit:.4f})",
    )


# 8 ---------------------------------------------------------------------------


def test_08_ensemble_dominance(tmp_path, fixtures_dir, capsys):
    start = time.perf_counter()
    parts, ok = [], True
    for tag, q in (("q50", "0.5"), ("q90", "0.9")):
        train = fixtures_dir / f"regime_{tag}_train.csv"
        test = fixtures_dir / f"regime_{tag}_test.csv"
        model, fc = tmp_path / f"{tag}.json", tmp_path / f"{tag}.csv"
        assert cli.main(["fit", str(train), "--q", q, "--out", str(model)]) in (0, 2)
        assert cli.main(["predict", str(model), str(test), "--out", str(fc)]) == 0
        capsys.readouterr()
        assert cli.main(["evaluate", str(fc), str(test), "--format", "json-lines", "--members"]) == 0
        scores = {r["series"]: r["value"] for r in map(json.loads, capsys.readouterr().out.splitlines())}
        ens = scores.pop("ensemble")
        best_name = min(scores, key=scores.get)
        margin = 1.0 - ens / scores[best_name]
        ok &= margin >= 0.01
        parts.append(f"q={q}: ensemble {ens:.4f} vs best member {scores[best_name]:.4f} (margin {100 * margin:.1f}%)")
    elapsed = time.perf_counter() - start
    record(8, ok and elapsed < 30, "; ".join(parts) + f"; {elapsed:.1f}s < 30s")


# 9 ---------------------------------------------------------------------------


def test_09_determinism_and_golden(tmp_path, fixtures_dir, golden_dir, capsys):
    from ptse.io import read_dataset

    frame = read_dataset(fixtures_dir / "toy_k3.csv").to_frame(0.5)
    future = read_dataset(fixtures_dir / "toy_k3_future.csv", require_target=False)
    preds = []
    for _ in range(2):
        m = deserialize(serialize(quiet(fit, frame, FitConfig(seed=3))))
        preds.append([ensemble_quantile(m, ForecastInput(row)).quantile_value for row in future.member_matrix(list(m.member_names))])
    in_process = serialize(quiet(fit, frame, FitConfig(seed=3))) == serialize(quiet(fit, frame, FitConfig(seed=3))) and preds[0] == preds[1]

    golden_ok = True
    exact = backend() == "numba"
    for name in ("toy_k2", "toy_k3"):
        model, fc = tmp_path / f"{name}.json", tmp_path / f"{name}.csv"
        cli.main(["fit", str(fixtures_dir / f"{name}.csv"), "--q", "0.5", "--out", str(model), "--seed", "0"])
        cli.main(["predict", str(model), str(fixtures_dir / f"{name}_future.csv"), "--out", str(fc)])
        capsys.readouterr()
        cli.main(["evaluate", str(fc), str(fixtures_dir / f"{name}_actuals.csv"), "--format", "json-lines", "--members"])
        ev = capsys.readouterr().out
        pinned = [(golden_dir / f"{name}_{s}").read_text() for s in ("model.json", "forecast.csv", "evaluate.jsonl")]
        got = [model.read_text(), fc.read_text(), ev]
        if exact:
            golden_ok &= pinned == got
        else:
            a, b = deserialize(pinned[0]), deserialize(got[0])
            golden_ok &= np.allclose(a.pi_star, b.pi_star, rtol=1e-6)
    mode = "byte-exact" if exact else "numeric (numpy backend)"
    record(9, in_process and golden_ok, f"two seeded runs bit-identical: {in_process}; golden files match ({mode}): {golden_ok}")


# 10 --------------------------------------------------------------------------


def test_10_frozen_emission_monotonicity():
    rng = np.random.default_rng(10)
    worst = np.inf
    for i in range(20):
        K = int(rng.integers(2, 4))
        M = rng.uniform(0.05, 1.0, (K, K))
        A = M / M.sum(axis=1, keepdims=True)
        frame, _ = regime_switching_frame(A, np.sort(rng.uniform(-3, 3, K)), float(rng.uniform(0.3, 1.2)), float(rng.choice([0.1, 0.5, 0.9])), 200, seed=i)
        m = quiet(fit, frame, FitConfig(max_iters=30, freeze_emissions_after=1, seed=i, bootstrap_B=5))
        worst = min(worst, np.diff(m.fit_trace[1:]).min())
    record(10, worst >= -1e-8, f"20 fits with emissions frozen after iteration 1: smallest step {worst:.2e} >= -1e-8")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
