"""Ensemble density, quantile inversion and q-risk scoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimator import EnsembleModel
from .exceptions import BracketFailure, ShapeMismatch, ZeroDenominator

MAX_BISECTIONS = 200


@dataclass(frozen=True)
class ForecastInput:
    member_predictions: np.ndarray
    horizon_label: str = ""

    def __post_init__(self):
        m = np.asarray(self.member_predictions, dtype=float).ravel()
        if not np.all(np.isfinite(m)):
            raise ValueError("member predictions must be finite")
        object.__setattr__(self, "member_predictions", m)


@dataclass(frozen=True)
class EnsembleForecast:
    quantile_value: float
    level: float
    cdf_residual: float
    weights: np.ndarray
    shifts: np.ndarray
    horizon_label: str = ""


def _shifts(model: EnsembleModel, inp: ForecastInput) -> np.ndarray:
    m = inp.member_predictions
    if m.size != model.n_members:
        raise ShapeMismatch(f"expected {model.n_members} member predictions, got {m.size}")
    return m


def ensemble_pdf(model: EnsembleModel, inp: ForecastInput, y):
    """``sum_k pi*_k f_k(y - m_k)``."""
    m = _shifts(model, inp)
    y = np.asarray(y, dtype=float)
    out = np.zeros(y.size)
    for w, e, mk in zip(model.pi_star, model.emissions, m):
        out += w * np.atleast_1d(e.pdf(y.ravel() - mk))
    return float(out[0]) if y.ndim == 0 else out.reshape(y.shape)


def ensemble_cdf(model: EnsembleModel, inp: ForecastInput, y):
    """Closed-form mixture CDF ``sum_k pi*_k F_k(y - m_k)``."""
    m = _shifts(model, inp)
    y = np.asarray(y, dtype=float)
    out = np.zeros(y.size)
    for w, e, mk in zip(model.pi_star, model.emissions, m):
        out += w * np.atleast_1d(e.cdf(y.ravel() - mk))
    return float(out[0]) if y.ndim == 0 else out.reshape(y.shape)


def quantile_bracket(model: EnsembleModel, inp: ForecastInput, pad: float = 10.0) -> tuple[float, float]:
    m = _shifts(model, inp)
    smax = max(e.bandwidth for e in model.emissions)
    lo = min(mk + e.residuals.min() for mk, e in zip(m, model.emissions)) - pad * smax
    hi = max(mk + e.residuals.max() for mk, e in zip(m, model.emissions)) + pad * smax
    return float(lo), float(hi)


def ensemble_quantile(model: EnsembleModel, inp: ForecastInput, tol: float = 1e-9) -> EnsembleForecast:
    """Solve ``CDF(tau) = q`` by bisection on the analytic mixture CDF.

    Bisection runs until the bracket cannot be split further in floating
    point (or 200 halvings); the closer endpoint is returned.

    Raises
    ------
    BracketFailure
        If the default bracket, and the same bracket widened tenfold about its
        centre, both fail to straddle ``q``.
    """
    q = model.q

    def F(x):
        return ensemble_cdf(model, inp, x)

    lo, hi = quantile_bracket(model, inp)
    f_lo, f_hi = F(lo), F(hi)
    if not (f_lo <= q <= f_hi):
        mid, half = 0.5 * (lo + hi), 5.0 * (hi - lo)
        lo, hi = mid - half, mid + half
        f_lo, f_hi = F(lo), F(hi)
        if not (f_lo <= q <= f_hi):
            raise BracketFailure(f"CDF range [{f_lo:.3g}, {f_hi:.3g}] on [{lo:.6g}, {hi:.6g}] does not straddle q={q}")

    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = F(mid)
        if f_mid == q:
            lo = hi = mid
            f_lo = f_hi = f_mid
            break
        if f_mid < q:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid

    tau, f_tau = (lo, f_lo) if abs(f_lo - q) <= abs(f_hi - q) else (hi, f_hi)
    resid = abs(f_tau - q)
    if resid > tol:
        raise BracketFailure(f"bisection stalled with |CDF - q| = {resid:.3e}")
    return EnsembleForecast(
        quantile_value=float(tau),
        level=q,
        cdf_residual=float(resid),
        weights=model.pi_star.copy(),
        shifts=inp.member_predictions.copy(),
        horizon_label=inp.horizon_label,
    )


def pinball_loss(actual, predicted, q: float):
    """Elementwise quantile loss ``q (y - yhat)`` above and ``(1 - q)(yhat - y)`` below."""
    diff = np.asarray(actual, dtype=float) - np.asarray(predicted, dtype=float)
    return np.where(diff >= 0, q * diff, (q - 1.0) * diff)


def q_risk(actuals, predicted_quantiles, q: float) -> float:
    """Normalized quantile loss ``2 sum_t P_q(y_t, yhat_t) / sum_t |y_t|``."""
    y = np.asarray(actuals, dtype=float).ravel()
    yhat = np.asarray(predicted_quantiles, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise ShapeMismatch(f"{y.size} actuals vs {yhat.size} predictions")
    den = np.abs(y).sum()
    if not den > 0:
        raise ZeroDenominator("sum of |actuals| is zero")
    return float(2.0 * pinball_loss(y, yhat, q).sum() / den)
