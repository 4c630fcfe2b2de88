"""Aligned training data: target series plus member quantile predictions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import MissingData


@dataclass(frozen=True)
class TimeSeriesFrame:
    """Targets ``y_t`` and each member's level-``q`` prediction over the same window.

    ``member_predictions[:, k]`` holds member ``k``'s forecasts. Timestamps are
    opaque strings that must be strictly increasing.
    """

    timestamps: tuple
    targets: np.ndarray
    member_predictions: np.ndarray
    q: float
    member_names: tuple

    def __post_init__(self):
        targets = np.asarray(self.targets, dtype=float).ravel()
        preds = np.asarray(self.member_predictions, dtype=float)
        if preds.ndim == 1:
            preds = preds[:, None]
        T = targets.size
        if preds.ndim != 2 or preds.shape[0] != T:
            raise ValueError(f"member predictions must have shape ({T}, K), got {preds.shape}")
        names = tuple(str(n) for n in self.member_names)
        if len(names) != preds.shape[1]:
            raise ValueError("one member name per prediction column required")
        if len(set(names)) != len(names):
            raise ValueError("member names must be unique")
        stamps = tuple(str(s) for s in self.timestamps) if self.timestamps is not None else tuple(
            f"{t:08d}" for t in range(T)
        )
        if len(stamps) != T:
            raise ValueError("one timestamp per row required")
        if any(a >= b for a, b in zip(stamps, stamps[1:])):
            raise ValueError("timestamps must be strictly increasing")
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"quantile level must lie in (0, 1), got {self.q}")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "member_predictions", preds)
        object.__setattr__(self, "member_names", names)
        object.__setattr__(self, "timestamps", stamps)
        object.__setattr__(self, "q", float(self.q))

    @classmethod
    def from_arrays(cls, targets, member_predictions, q, member_names=None, timestamps=None):
        preds = np.asarray(member_predictions, dtype=float)
        K = 1 if preds.ndim == 1 else preds.shape[1]
        if member_names is None:
            member_names = [f"m{k}" for k in range(K)]
        return cls(timestamps, targets, preds, q, member_names)

    @property
    def n_steps(self) -> int:
        return self.targets.size

    @property
    def n_members(self) -> int:
        return self.member_predictions.shape[1]

    def permuted(self, order) -> TimeSeriesFrame:
        """Same frame with member columns reordered."""
        order = list(order)
        return TimeSeriesFrame(
            self.timestamps,
            self.targets,
            self.member_predictions[:, order],
            self.q,
            [self.member_names[i] for i in order],
        )


def build_residuals(series: TimeSeriesFrame) -> np.ndarray:
    """Residual matrix ``y_t - M_k(X_t)``, shape ``(T, K)``."""
    y = series.targets
    preds = series.member_predictions
    if y.size < 2 or preds.shape[1] < 1:
        raise ValueError("need at least 2 rows and 1 member")
    bad = ~np.isfinite(preds)
    if np.any(~np.isfinite(y)) or np.any(bad):
        rows = np.flatnonzero(~np.isfinite(y) | bad.any(axis=1))
        raise MissingData(f"missing or non-finite cells in rows {rows[:10].tolist()}")
    return y[:, None] - preds
