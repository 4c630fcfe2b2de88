"""Residual densities whose q-th quantile is pinned at zero.

Each member's residual density is a weighted Gaussian KDE in which residuals
at or below zero share one multiplier and positive residuals another. The two
multipliers are chosen so the density integrates to one and its CDF at zero
equals ``q``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import kernels
from .exceptions import ConstraintFallbackWarning, OneSidedResiduals, SingularSystem

SINGULAR_TOL = 1e-14


@dataclass(frozen=True)
class MqeEmission:
    """Side-weighted residual KDE for one member.

    ``constrained`` is False when the side constants fell back to the plain
    weighted KDE (``w_neg == w_pos == 1 / sum(gamma_weights)``).
    """

    residuals: np.ndarray
    gamma_weights: np.ndarray
    bandwidth: float
    w_neg: float
    w_pos: float
    q: float
    constrained: bool = True

    def __post_init__(self):
        res = np.asarray(self.residuals, dtype=float).ravel()
        gam = np.asarray(self.gamma_weights, dtype=float).ravel()
        if res.shape != gam.shape:
            raise ValueError("residuals and gamma_weights must align")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError("bandwidth must be positive")
        object.__setattr__(self, "residuals", res)
        object.__setattr__(self, "gamma_weights", gam)

    @property
    def coefficients(self) -> np.ndarray:
        """Per-residual mixture weight ``W_side * gamma_t``."""
        side = np.where(self.residuals <= 0.0, self.w_neg, self.w_pos)
        return side * self.gamma_weights

    def pdf(self, eps):
        return emission_pdf(self, eps)

    def cdf(self, eps):
        return emission_cdf(self, eps)

    def pdf_at_residuals(self) -> np.ndarray:
        """Density at each stored residual (the E-step likelihood column)."""
        return kernels.self_mixture_pdf(self.residuals, self.coefficients, self.bandwidth)

    def support(self, pad: float = 10.0) -> tuple[float, float]:
        return (
            float(self.residuals.min() - pad * self.bandwidth),
            float(self.residuals.max() + pad * self.bandwidth),
        )


def _shape_like(eps, out):
    return float(out[0]) if np.ndim(eps) == 0 else out.reshape(np.shape(eps))


def emission_pdf(e: MqeEmission, eps):
    out = kernels.mixture_pdf(e.residuals, e.coefficients, e.bandwidth, np.ravel(eps))
    return _shape_like(eps, out)


def emission_cdf(e: MqeEmission, eps):
    out = kernels.mixture_cdf(e.residuals, e.coefficients, e.bandwidth, np.ravel(eps))
    return _shape_like(eps, out)


def solve_side_constants(residuals, gamma_weights, bandwidth: float, q: float) -> tuple[float, float]:
    """Solve the 2x2 normalization / zero-quantile system for ``(w_neg, w_pos)``.

    With ``v_t = Phi(-eps_t / bandwidth)`` (each kernel's mass below zero) the
    system is::

        w_neg * sum_{eps<=0} g_t     + w_pos * sum_{eps>0} g_t     = 1
        w_neg * sum_{eps<=0} g_t v_t + w_pos * sum_{eps>0} g_t v_t = q

    The solution may have a negative component when ``q`` lies outside what
    the kernel spill-over allows; callers decide how to handle that.

    Raises
    ------
    OneSidedResiduals
        If every residual is on the same side of zero.
    SingularSystem
        If the two side-average masses below zero coincide.
    """
    res = np.asarray(residuals, dtype=float).ravel()
    g = np.asarray(gamma_weights, dtype=float).ravel()
    neg = res <= 0.0
    if neg.all() or not neg.any():
        raise OneSidedResiduals("all residuals lie on one side of zero")
    s_neg = g[neg].sum()
    s_pos = g[~neg].sum()
    if not (s_neg > 0 and s_pos > 0):
        raise OneSidedResiduals("one side of zero carries no weight")
    v = ndtr(-res / bandwidth)
    r_neg = np.dot(g[neg], v[neg]) / s_neg
    r_pos = np.dot(g[~neg], v[~neg]) / s_pos
    gap = r_neg - r_pos
    if abs(gap) < SINGULAR_TOL:
        raise SingularSystem("side masses below zero coincide; constraint system is singular")
    # mass assigned to the nonpositive side
    u_neg = (q - r_pos) / gap
    return float(u_neg / s_neg), float((1.0 - u_neg) / s_pos)


def fit_emission(residuals, gamma_weights, bandwidth: float, q: float, label: str | None = None) -> MqeEmission:
    """Build a member's emission, falling back to the plain weighted KDE when infeasible.

    The fallback (both side constants equal to ``1 / sum(gamma)``) drops the
    zero-quantile constraint and raises :class:`ConstraintFallbackWarning`.
    """
    res = np.asarray(residuals, dtype=float).ravel()
    g = np.asarray(gamma_weights, dtype=float).ravel()
    who = f"member {label!r}: " if label is not None else ""
    try:
        w_neg, w_pos = solve_side_constants(res, g, bandwidth, q)
    except (OneSidedResiduals, SingularSystem) as err:
        reason = str(err)
    else:
        if w_neg >= 0 and w_pos >= 0:
            return MqeEmission(res, g, bandwidth, w_neg, w_pos, q, True)
        reason = "negative side constant"
    warnings.warn(
        f"{who}quantile constraint infeasible ({reason}); using unconstrained weighted KDE",
        ConstraintFallbackWarning,
        stacklevel=2,
    )
    w = 1.0 / g.sum()
    return MqeEmission(res, g, bandwidth, w, w, q, False)
