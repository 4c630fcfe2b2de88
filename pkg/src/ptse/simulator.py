"""Synthetic Gaussian-emission HMMs and the empirical-CDF convergence experiment."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from . import hmm, kernels


def random_transition_matrix(K: int, seed) -> np.ndarray:
    """Uniform(0, 1] entries, rows normalized to sum to one."""
    if K < 1:
        raise ValueError("K must be at least 1")
    rng = np.random.default_rng(seed)
    M = 1.0 - rng.random((K, K))
    return M / M.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class SimConfig:
    """Synthetic HMM: ``K`` states, Gaussian emission ``N(means[k], stds[k])``.

    ``A=None`` draws a random transition matrix from ``seed``.
    """

    K: int
    T: int
    means: np.ndarray
    stds: np.ndarray
    A: np.ndarray | None = None
    replications: int = 100
    tau: float = 0.5
    seed: int = 0

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float).ravel()
        stds = np.asarray(self.stds, dtype=float).ravel()
        if self.K < 1 or self.T < 1:
            raise ValueError("K and T must be positive")
        if means.size != self.K or stds.size != self.K:
            raise ValueError(f"need {self.K} means and stds")
        if np.any(stds <= 0):
            raise ValueError("emission stds must be positive")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        A = random_transition_matrix(self.K, self.seed) if self.A is None else hmm.check_transition(self.A)
        if A.shape != (self.K, self.K):
            raise ValueError("A must be K x K")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)
        object.__setattr__(self, "A", A)

    @classmethod
    def figure_setup(cls, K: int, T: int = 1000, replications: int = 100, tau: float = 0.5, seed: int = 0, spread: str = "std"):
        """Means ``0.2 k`` and spread ``sqrt(k) + 1`` for ``k = 1..K``.

        ``spread="std"`` reads the spread as a standard deviation,
        ``spread="var"`` as a variance.
        """
        k = np.arange(1, K + 1, dtype=float)
        s = np.sqrt(k) + 1.0
        if spread == "var":
            s = np.sqrt(s)
        elif spread != "std":
            raise ValueError("spread must be 'std' or 'var'")
        return cls(K=K, T=T, means=0.2 * k, stds=s, replications=replications, tau=tau, seed=seed)

    def echo(self) -> dict:
        return {
            "K": self.K,
            "T": self.T,
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "A": self.A.tolist(),
            "replications": self.replications,
            "tau": self.tau,
            "seed": self.seed,
        }


def sample_hmm(config: SimConfig, initial, rng=None):
    """Draw ``(states, observations)`` of length ``T``; states are 0-based."""
    initial = hmm.check_distribution(initial, config.K)
    rng = np.random.default_rng(config.seed) if rng is None else rng
    u = rng.random(config.T)
    z = rng.standard_normal(config.T)
    states = kernels.sample_chain(np.cumsum(config.A, axis=1), np.cumsum(initial), u)
    obs = config.means[states] + config.stds[states] * z
    return states, obs


def theoretical_limit(config: SimConfig, pi_star=None) -> float:
    """``sum_k pi*_k Phi((tau - mu_k) / s_k)``."""
    if pi_star is None:
        pi_star = hmm.stationary_distribution(config.A)
    return float(np.dot(pi_star, ndtr((config.tau - config.means) / config.stds)))


def replication_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(r)]))


@dataclass(frozen=True)
class ConvergenceReport:
    """Running empirical CDFs at ``tau``, one row per replication."""

    trajectories: np.ndarray
    limit: float
    pi_star: np.ndarray
    config: SimConfig = field(repr=False)

    @property
    def mean(self) -> np.ndarray:
        return self.trajectories.mean(axis=0)

    @property
    def band(self) -> tuple[np.ndarray, np.ndarray]:
        """Pointwise 2.5% / 97.5% percentiles across replications."""
        lo, hi = np.percentile(self.trajectories, [2.5, 97.5], axis=0)
        return lo, hi

    @property
    def mean_gap(self) -> np.ndarray:
        """``|mean_r F_t^r - L|`` for every ``t``."""
        return np.abs(self.mean - self.limit)

    @property
    def abs_gap(self) -> np.ndarray:
        """``mean_r |F_t^r - L|`` for every ``t``."""
        return np.abs(self.trajectories - self.limit).mean(axis=0)

    def summary(self) -> dict:
        T = self.trajectories.shape[1]
        tail = self.mean_gap[min(49, T - 1):]
        return {
            "K": self.config.K,
            "T": T,
            "replications": self.trajectories.shape[0],
            "tau": self.config.tau,
            "limit": self.limit,
            "terminal_mean": float(self.mean[-1]),
            "terminal_gap": float(self.mean_gap[-1]),
            "terminal_abs_gap": float(self.abs_gap[-1]),
            "max_gap_after_50": float(tail.max()),
        }

    def write(self, path) -> tuple[Path, Path]:
        """Write ``replication,t,empirical_cdf`` CSV plus a JSON sidecar; returns both paths."""
        path = Path(path)
        R, T = self.trajectories.shape
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["replication", "t", "empirical_cdf"])
            for r in range(R):
                for t in range(T):
                    w.writerow([r, t + 1, repr(float(self.trajectories[r, t]))])
        side = path.with_suffix(".json")
        doc = {
            "limit": self.limit,
            "pi_star": self.pi_star.tolist(),
            "config": self.config.echo(),
            "summary": self.summary(),
        }
        side.write_text(json.dumps(doc, indent=1) + "\n")
        return path, side


def run_convergence_experiment(config: SimConfig) -> ConvergenceReport:
    """Simulate ``replications`` paths from random initial distributions.

    Each replication draws its initial distribution uniformly on the simplex
    (normalized exponentials) from its own generator seeded by
    ``(seed, replication)``, so replications can be reordered or run in
    parallel without changing results.
    """
    pi_star = hmm.stationary_distribution(config.A)
    limit = theoretical_limit(config, pi_star)
    steps = np.arange(1, config.T + 1)
    traj = np.empty((config.replications, config.T))
    for r in range(config.replications):
        rng = replication_rng(config.seed, r)
        e = rng.exponential(size=config.K)
        _, obs = sample_hmm(config, e / e.sum(), rng)
        traj[r] = np.cumsum(obs <= config.tau) / steps
    return ConvergenceReport(trajectories=traj, limit=limit, pi_star=pi_star, config=config)


def regime_switching_frame(A, offsets, noise_std: float, q: float, T: int, seed, level=None, initial=None):
    """Target driven by a hidden regime chain, with one member tuned to each regime.

    ``y_t = level_t + offsets[S_t] + noise_std * z_t`` and member ``k``
    predicts ``level_t + offsets[k] + noise_std * Phi^{-1}(q)``, the exact
    level-``q`` quantile of ``y_t`` when regime ``k`` is active. With no
    ``level`` the members are constants.

    Returns ``(frame, states)``.
    """
    from scipy.special import ndtri

    from .frame import TimeSeriesFrame

    A = hmm.check_transition(A)
    offsets = np.asarray(offsets, dtype=float).ravel()
    K = A.shape[0]
    if offsets.size != K:
        raise ValueError("one offset per regime required")
    rng = np.random.default_rng(seed)
    init = hmm.stationary_distribution(A) if initial is None else hmm.check_distribution(initial, K)
    states = kernels.sample_chain(np.cumsum(A, axis=1), np.cumsum(init), rng.random(T))
    z = rng.standard_normal(T)
    base = np.zeros(T) if level is None else np.broadcast_to(np.asarray(level, dtype=float), (T,))
    y = base + offsets[states] + noise_std * z
    preds = base[:, None] + offsets[None, :] + noise_std * float(ndtri(q))
    frame = TimeSeriesFrame.from_arrays(y, preds, q, member_names=[f"regime{k}" for k in range(K)])
    return frame, states
