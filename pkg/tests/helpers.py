"""Small model builders shared by several test modules."""

from __future__ import annotations

import warnings

import numpy as np

from ptse.estimator import FitConfig, fit
from ptse.simulator import regime_switching_frame

# acceptance criteria record (passed, detail) here; conftest prints them after the run
ACCEPTANCE_RESULTS: dict = {}


def toy_model(seed: int, T: int = 60, max_iters: int = 5):
    """A quick EM fit on a random 2- or 3-regime constant-member series."""
    rng = np.random.default_rng(seed)
    K = int(rng.integers(2, 4))
    M = rng.uniform(0.05, 1.0, (K, K))
    A = M / M.sum(axis=1, keepdims=True)
    offsets = np.sort(rng.uniform(-3, 3, K))
    q = float(rng.choice([0.1, 0.5, 0.9]))
    frame, _ = regime_switching_frame(A, offsets, float(rng.uniform(0.3, 1.5)), q, T, seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fit(frame, FitConfig(max_iters=max_iters, bootstrap_B=5, seed=seed))


def breakpoints(model, shifts):
    """Kernel centres of every shifted component, for splitting quadrature."""
    return np.concatenate([m + e.residuals for m, e in zip(shifts, model.emissions)])
