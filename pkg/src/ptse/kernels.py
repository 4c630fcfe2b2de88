"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The public names at the bottom of the module dispatch on
:data:`ptse._accel.USE_NUMBA`. Both variants consume identical inputs and
return identical shapes; results agree to rounding (summation order differs).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

from ._accel import USE_NUMBA, njit

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_INV_SQRT_2 = 1.0 / math.sqrt(2.0)

# rows per block in the numpy mixture evaluation; bounds the temporary at ~32 MB
_BLOCK_ELEMS = 4_000_000


# --------------------------------------------------------------------------
# scaled forward / backward recursions
# --------------------------------------------------------------------------


@njit
def _forward_nb(lik, A, pi):
    T, K = lik.shape
    alpha = np.zeros((T, K))
    c = np.zeros(T)
    s = 0.0
    for k in range(K):
        v = pi[k] * lik[0, k]
        alpha[0, k] = v
        s += v
    if not s > 0.0:
        return alpha, c, 0
    c[0] = s
    for k in range(K):
        alpha[0, k] /= s
    for t in range(1, T):
        s = 0.0
        for j in range(K):
            acc = 0.0
            for i in range(K):
                acc += alpha[t - 1, i] * A[i, j]
            v = acc * lik[t, j]
            alpha[t, j] = v
            s += v
        if not s > 0.0:
            return alpha, c, t
        c[t] = s
        for j in range(K):
            alpha[t, j] /= s
    return alpha, c, -1


def _forward_np(lik, A, pi):
    T, K = lik.shape
    alpha = np.zeros((T, K))
    c = np.zeros(T)
    a = pi * lik[0]
    for t in range(T):
        if t > 0:
            a = (alpha[t - 1] @ A) * lik[t]
        s = a.sum()
        if not s > 0.0:
            alpha[t] = a
            return alpha, c, t
        c[t] = s
        alpha[t] = a / s
    return alpha, c, -1


@njit
def _backward_nb(lik, A, c):
    T, K = lik.shape
    beta = np.ones((T, K))
    tmp = np.empty(K)
    for t in range(T - 2, -1, -1):
        for j in range(K):
            tmp[j] = lik[t + 1, j] * beta[t + 1, j]
        for i in range(K):
            acc = 0.0
            for j in range(K):
                acc += A[i, j] * tmp[j]
            beta[t, i] = acc / c[t + 1]
    return beta


def _backward_np(lik, A, c):
    T, K = lik.shape
    beta = np.ones((T, K))
    for t in range(T - 2, -1, -1):
        beta[t] = (A @ (lik[t + 1] * beta[t + 1])) / c[t + 1]
    return beta


# --------------------------------------------------------------------------
# Gaussian mixture density / distribution sums
# --------------------------------------------------------------------------


@njit
def _mixture_pdf_nb(centers, coefs, sigma, x):
    n = x.shape[0]
    m = centers.shape[0]
    out = np.empty(n)
    inv = 1.0 / sigma
    for i in range(n):
        s = 0.0
        xi = x[i]
        for j in range(m):
            z = (xi - centers[j]) * inv
            s += coefs[j] * math.exp(-0.5 * z * z)
        out[i] = s * inv * _INV_SQRT_2PI
    return out


@njit
def _mixture_cdf_nb(centers, coefs, sigma, x):
    n = x.shape[0]
    m = centers.shape[0]
    out = np.empty(n)
    inv = 1.0 / sigma
    for i in range(n):
        s = 0.0
        xi = x[i]
        for j in range(m):
            z = (xi - centers[j]) * inv
            s += coefs[j] * 0.5 * math.erfc(-z * _INV_SQRT_2)
        out[i] = s
    return out


# exp(-0.5 * z * z) is exactly 0.0 in double precision beyond this
_Z_ZERO = 38.7


@njit
def _self_mixture_pdf_nb(centers, coefs, sigma):
    # pairwise kernel is symmetric: evaluate each pair once, on sorted centers
    order = np.argsort(centers)
    c = centers[order]
    w = coefs[order]
    m = c.shape[0]
    acc = np.zeros(m)
    inv = 1.0 / sigma
    for i in range(m):
        acc[i] += w[i]
        ci = c[i]
        for j in range(i + 1, m):
            z = (c[j] - ci) * inv
            if z > _Z_ZERO:
                break
            e = math.exp(-0.5 * z * z)
            acc[i] += w[j] * e
            acc[j] += w[i] * e
    out = np.empty(m)
    for i in range(m):
        out[order[i]] = acc[i] * inv * _INV_SQRT_2PI
    return out


def _self_mixture_pdf_np(centers, coefs, sigma):
    return _mixture_pdf_np(centers, coefs, sigma, centers)


def _blocked(fn, centers, coefs, sigma, x):
    n, m = x.shape[0], max(centers.shape[0], 1)
    step = max(1, _BLOCK_ELEMS // m)
    out = np.empty(n)
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        z = (x[lo:hi, None] - centers[None, :]) / sigma
        out[lo:hi] = fn(z) @ coefs
    return out


def _mixture_pdf_np(centers, coefs, sigma, x):
    return _blocked(lambda z: np.exp(-0.5 * z * z), centers, coefs, sigma, x) * (_INV_SQRT_2PI / sigma)


def _mixture_cdf_np(centers, coefs, sigma, x):
    return _blocked(ndtr, centers, coefs, sigma, x)


# --------------------------------------------------------------------------
# linear binning onto a regular grid
# --------------------------------------------------------------------------


@njit
def _linear_binning_nb(values, weights, lo, delta, n_grid):
    B, N = values.shape
    counts = np.zeros((B, n_grid))
    last = n_grid - 1
    for b in range(B):
        for t in range(N):
            pos = (values[b, t] - lo) / delta
            if pos < 0.0 or pos > last:
                continue
            i = int(math.floor(pos))
            if i >= last:
                counts[b, last] += weights[t]
                continue
            f = pos - i
            counts[b, i] += weights[t] * (1.0 - f)
            counts[b, i + 1] += weights[t] * f
    return counts


def _linear_binning_np(values, weights, lo, delta, n_grid):
    B, N = values.shape
    last = n_grid - 1
    pos = (values - lo) / delta
    w = np.broadcast_to(weights, values.shape)
    keep = (pos >= 0.0) & (pos <= last)
    i = np.minimum(np.floor(pos), last - 1).astype(np.int64)
    f = pos - i
    rows = np.broadcast_to(np.arange(B)[:, None] * n_grid, values.shape)
    idx = (rows + i)[keep]
    lower = np.bincount(idx, (w * (1.0 - f))[keep], minlength=B * n_grid)
    upper = np.bincount(idx + 1, (w * f)[keep], minlength=B * n_grid + 1)[: B * n_grid]
    return (lower + upper).reshape(B, n_grid)


# --------------------------------------------------------------------------
# power iteration for the stationary row vector
# --------------------------------------------------------------------------


@njit
def _power_iteration_nb(A, pi, tol, max_iter):
    K = A.shape[0]
    p = pi / pi.sum()
    nxt = np.empty(K)
    resid = np.inf
    for n in range(max_iter):
        resid = 0.0
        s = 0.0
        for j in range(K):
            acc = 0.0
            for i in range(K):
                acc += p[i] * A[i, j]
            nxt[j] = acc
            s += acc
            d = abs(acc - p[j])
            if d > resid:
                resid = d
        if resid <= tol:
            return p, resid, n
        for j in range(K):
            p[j] = nxt[j] / s
    return p, resid, max_iter


def _power_iteration_np(A, pi, tol, max_iter):
    p = pi / pi.sum()
    resid = np.inf
    for n in range(max_iter):
        nxt = p @ A
        resid = float(np.max(np.abs(nxt - p)))
        if resid <= tol:
            return p, resid, n
        p = nxt / nxt.sum()
    return p, resid, max_iter


# --------------------------------------------------------------------------
# Markov chain path sampling by inverse CDF
# --------------------------------------------------------------------------


@njit
def _sample_chain_nb(cum_A, cum_init, u):
    T = u.shape[0]
    K = cum_init.shape[0]
    states = np.empty(T, dtype=np.int64)
    x = u[0] * cum_init[K - 1]
    j = 0
    while j < K - 1 and cum_init[j] <= x:
        j += 1
    states[0] = j
    for t in range(1, T):
        row = states[t - 1]
        x = u[t] * cum_A[row, K - 1]
        j = 0
        while j < K - 1 and cum_A[row, j] <= x:
            j += 1
        states[t] = j
    return states


def _sample_chain_np(cum_A, cum_init, u):
    T = u.shape[0]
    K = cum_init.shape[0]
    states = np.empty(T, dtype=np.int64)
    s = min(int(np.searchsorted(cum_init, u[0] * cum_init[-1], side="right")), K - 1)
    states[0] = s
    for t in range(1, T):
        row = cum_A[s]
        s = min(int(np.searchsorted(row, u[t] * row[-1], side="right")), K - 1)
        states[t] = s
    return states


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

NUMBA_KERNELS = {
    "forward": _forward_nb,
    "backward": _backward_nb,
    "mixture_pdf": _mixture_pdf_nb,
    "self_mixture_pdf": _self_mixture_pdf_nb,
    "mixture_cdf": _mixture_cdf_nb,
    "linear_binning": _linear_binning_nb,
    "power_iteration": _power_iteration_nb,
    "sample_chain": _sample_chain_nb,
}

NUMPY_KERNELS = {
    "forward": _forward_np,
    "backward": _backward_np,
    "mixture_pdf": _mixture_pdf_np,
    "self_mixture_pdf": _self_mixture_pdf_np,
    "mixture_cdf": _mixture_cdf_np,
    "linear_binning": _linear_binning_np,
    "power_iteration": _power_iteration_np,
    "sample_chain": _sample_chain_np,
}

_ACTIVE = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def forward(lik, A, pi):
    """Scaled forward pass. Returns ``(alpha_hat, c, fail_index)``; ``fail_index`` is -1 on success."""
    return _ACTIVE["forward"](_f64(lik), _f64(A), _f64(pi))


def backward(lik, A, c):
    """Scaled backward pass using the forward scale factors ``c``."""
    return _ACTIVE["backward"](_f64(lik), _f64(A), _f64(c))


def mixture_pdf(centers, coefs, sigma, x):
    """``sum_j coefs[j] * phi((x - centers[j]) / sigma) / sigma`` at every ``x``."""
    return _ACTIVE["mixture_pdf"](_f64(centers), _f64(coefs), float(sigma), _f64(np.atleast_1d(x)))


def self_mixture_pdf(centers, coefs, sigma):
    """:func:`mixture_pdf` evaluated at the centers themselves."""
    return _ACTIVE["self_mixture_pdf"](_f64(centers), _f64(coefs), float(sigma))


def mixture_cdf(centers, coefs, sigma, x):
    """``sum_j coefs[j] * Phi((x - centers[j]) / sigma)`` at every ``x``."""
    return _ACTIVE["mixture_cdf"](_f64(centers), _f64(coefs), float(sigma), _f64(np.atleast_1d(x)))


def linear_binning(values, weights, lo, delta, n_grid):
    """Linear-bin each row of ``values`` (shape ``(B, N)``) onto ``n_grid`` nodes."""
    return _ACTIVE["linear_binning"](_f64(np.atleast_2d(values)), _f64(weights), float(lo), float(delta), int(n_grid))


def power_iteration(A, pi, tol, max_iter):
    """Iterate ``p <- p A``; returns ``(p, residual, n_iter)``."""
    return _ACTIVE["power_iteration"](_f64(A), _f64(pi), float(tol), int(max_iter))


def sample_chain(cum_A, cum_init, u):
    """Draw a state path from row-cumulative transition sums and uniforms ``u``."""
    return _ACTIVE["sample_chain"](_f64(cum_A), _f64(cum_init), _f64(u))
