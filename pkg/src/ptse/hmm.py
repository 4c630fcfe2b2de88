"""Discrete-state HMM algebra: scaled forward/backward, EM updates, stationarity."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .exceptions import DegenerateLikelihood, NoConvergence, StarvedStateWarning

ROW_TOL = 1e-12
STARVED_MASS = 1e-300


@dataclass(frozen=True)
class Posteriors:
    """Posterior state and transition probabilities from one E step.

    Attributes
    ----------
    gamma : ndarray, shape (T, K)
        ``gamma[t, k]`` is P(state k at t | all observations).
    xi : ndarray, shape (T - 1, K, K)
        ``xi[t, i, j]`` is P(state i at t and state j at t + 1 | all observations).
    log_likelihood : float
        Data log-likelihood in nats.
    """

    gamma: np.ndarray
    xi: np.ndarray
    log_likelihood: float

    @property
    def n_states(self) -> int:
        return self.gamma.shape[1]


def check_transition(A, tol: float = ROW_TOL) -> np.ndarray:
    """Return ``A`` as a float array after checking it is square and row-stochastic."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"transition matrix must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)) or np.any(A < 0):
        raise ValueError("transition matrix entries must be finite and nonnegative")
    if np.max(np.abs(A.sum(axis=1) - 1.0)) > tol:
        raise ValueError("transition matrix rows must sum to 1")
    return A


def check_distribution(p, n_states: int | None = None, tol: float = ROW_TOL) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or (n_states is not None and p.shape[0] != n_states):
        raise ValueError(f"state distribution must have length {n_states}, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1.0) > tol:
        raise ValueError("state distribution must be nonnegative and sum to 1")
    return p


def _check_likelihoods(likelihoods, n_states):
    L = np.asarray(likelihoods, dtype=float)
    if L.ndim != 2 or L.shape[1] != n_states:
        raise ValueError(f"likelihood table must have shape (T, {n_states}), got {L.shape}")
    if L.shape[0] < 2:
        raise ValueError("likelihood table needs at least 2 rows")
    if not np.all(np.isfinite(L)) or np.any(L < 0):
        raise ValueError("likelihood entries must be finite and nonnegative")
    dead = np.flatnonzero(~np.any(L > 0, axis=1))
    if dead.size:
        raise DegenerateLikelihood(f"every state has zero density at t={int(dead[0])}")
    return L


def _forward(L, A, pi):
    alpha, c, fail = kernels.forward(L, A, pi)
    if fail >= 0:
        raise DegenerateLikelihood(
            f"forward pass lost all probability mass at t={fail}; "
            "no state reachable under A has positive density there"
        )
    return alpha, c


def forward_backward(likelihoods, A, pi) -> Posteriors:
    """Run the scaled forward-backward recursions.

    Parameters
    ----------
    likelihoods : array_like, shape (T, K)
        Emission density of observation ``t`` under state ``k``.
    A : array_like, shape (K, K)
        Row-stochastic transition matrix.
    pi : array_like, shape (K,)
        Initial state distribution.

    Returns
    -------
    Posteriors

    Raises
    ------
    DegenerateLikelihood
        If some observation has zero density under every reachable state.
    """
    A = check_transition(A)
    K = A.shape[0]
    pi = check_distribution(pi, K)
    L = _check_likelihoods(likelihoods, K)

    alpha, c = _forward(L, A, pi)
    beta = kernels.backward(L, A, c)

    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)

    xi = alpha[:-1, :, None] * A[None, :, :] * (L[1:] * beta[1:])[:, None, :]
    xi /= c[1:, None, None]
    xi /= xi.sum(axis=(1, 2), keepdims=True)

    return Posteriors(gamma=gamma, xi=xi, log_likelihood=float(np.log(c).sum()))


def log_likelihood(likelihoods, A, pi) -> float:
    """Data log-likelihood from the scaled forward pass alone."""
    A = check_transition(A)
    pi = check_distribution(pi, A.shape[0])
    L = _check_likelihoods(likelihoods, A.shape[0])
    _, c = _forward(L, A, pi)
    return float(np.log(c).sum())


def update_transition(post: Posteriors) -> np.ndarray:
    """M-step transition estimate: expected i->j transitions over expected departures from i.

    States whose posterior mass over t = 1..T-1 is below 1e-300 get a uniform
    row and a :class:`StarvedStateWarning`.
    """
    num = post.xi.sum(axis=0)
    den = post.gamma[:-1].sum(axis=0)
    K = num.shape[0]
    A = np.empty_like(num)
    for i in range(K):
        if den[i] < STARVED_MASS or not num[i].sum() > 0:
            warnings.warn(
                f"state {i} received no posterior mass; transition row reset to uniform",
                StarvedStateWarning,
                stacklevel=2,
            )
            A[i] = 1.0 / K
        else:
            A[i] = num[i] / den[i]
    # den and the xi row sums agree analytically; renormalize away rounding
    A /= A.sum(axis=1, keepdims=True)
    return A


def update_initial(post: Posteriors) -> np.ndarray:
    pi = post.gamma[0].copy()
    return pi / pi.sum()


def stationary_distribution(A, pi=None, tol: float = 1e-12, max_iter: int = 10**6) -> np.ndarray:
    """Stationary row vector of ``A`` by fixed-point iteration from ``pi``.

    Iterates ``p <- p A`` until ``max|p A - p| <= tol``.

    Raises
    ------
    NoConvergence
        If ``max_iter`` steps pass without meeting ``tol`` (periodic or
        reducible chains). The exception carries the last iterate.
    """
    A = check_transition(A)
    K = A.shape[0]
    pi = np.full(K, 1.0 / K) if pi is None else check_distribution(pi, K)
    p, resid, n = kernels.power_iteration(A, pi, tol, max_iter)
    if resid > tol:
        raise NoConvergence(
            f"power iteration did not converge in {max_iter} steps (residual {resid:.3e})",
            last=p,
            residual=resid,
        )
    return p


@dataclass(frozen=True)
class FrobeniusDecay:
    t: np.ndarray
    distance: np.ndarray
    log_distance: np.ndarray


def frobenius_decay(A, t_max: int) -> FrobeniusDecay:
    """Distance ``||A^t - 1 pi*||_F`` for ``t = 1..t_max``.

    Uses ``A^t - 1 pi* = (A - 1 pi*)^t`` and carries the running norm in log
    space, so the log distance stays accurate after the distance itself
    underflows.
    """
    A = check_transition(A)
    K = A.shape[0]
    pi_star = stationary_distribution(A)
    B = A - np.outer(np.ones(K), pi_star)

    t = np.arange(1, t_max + 1)
    log_d = np.full(t_max, -np.inf)
    M = np.eye(K)
    scale = 0.0
    for n in range(t_max):
        M = M @ B
        norm = np.linalg.norm(M)
        if norm == 0.0:
            break
        scale += np.log(norm)
        log_d[n] = scale
        M /= norm
    return FrobeniusDecay(t=t, distance=np.exp(log_d), log_distance=log_d)
