"""EM fitting of the optimal-member HMM with constrained KDE emissions."""

from __future__ import annotations

import json
import logging
import warnings
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import hmm
from .exceptions import (
    ConvergenceWarning,
    LikelihoodFloorWarning,
    MalformedDocument,
    NonFiniteLikelihood,
    SchemaVersionMismatch,
    ShapeMismatch,
    SmallSampleWarning,
)
from .frame import TimeSeriesFrame, build_residuals
from .mqe import MqeEmission, fit_emission
from .wkde import DEFAULT_B, DEFAULT_N_CANDIDATES, DEFAULT_SPAN, WeightedSample, default_candidates, select_bandwidth, silverman_bandwidth

log = logging.getLogger(__name__)

SCHEMA = "ptse.ensemble-model"
SCHEMA_VERSION = 1
LIKELIHOOD_FLOOR = 1e-300
WEIGHT_FLOOR = 1e-300


@dataclass(frozen=True)
class FitConfig:
    """EM controls.

    ``n_candidates`` log-spaced bandwidths spanning ``[s0/span, s0*span]``
    around the Silverman pilot ``s0`` are scored each M step.
    ``freeze_bandwidths_after`` / ``freeze_emissions_after`` stop re-estimating
    bandwidths / whole emissions from that iteration index on (``None``: never).
    """

    max_iters: int = 100
    loglik_tol: float = 1e-6
    param_tol: float = 1e-5
    n_candidates: int = DEFAULT_N_CANDIDATES
    candidate_span: float = DEFAULT_SPAN
    bootstrap_B: int = DEFAULT_B
    seed: int = 0
    pi_star_tol: float = 1e-12
    freeze_bandwidths_after: int | None = None
    freeze_emissions_after: int | None = None

    def __post_init__(self):
        for name in ("max_iters", "n_candidates", "bootstrap_B"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be at least 1")
        for name in ("loglik_tol", "param_tol", "pi_star_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.candidate_span > 1:
            raise ValueError("candidate_span must exceed 1")
        if int(self.seed) < 0:
            raise ValueError("seed must be nonnegative")


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    A: np.ndarray
    pi: np.ndarray
    pi_star: np.ndarray
    emissions: tuple
    q: float
    member_names: tuple
    fit_trace: np.ndarray
    converged: bool = True
    n_iter: int = 0
    floored: int = 0
    fallbacks: int = 0

    @property
    def n_members(self) -> int:
        return len(self.emissions)

    @property
    def bandwidths(self) -> np.ndarray:
        return np.array([e.bandwidth for e in self.emissions])

    def same_as(self, other: EnsembleModel) -> bool:
        """Bitwise equality of every field."""
        return serialize(self) == serialize(other)


def member_seed(seed: int, name: str) -> np.random.SeedSequence:
    # keyed by label, not position, so reordering members reorders results only
    return np.random.SeedSequence([int(seed), zlib.crc32(name.encode("utf-8"))])


def likelihood_table(residuals: np.ndarray, emissions, floor: float = LIKELIHOOD_FLOOR):
    """Emission densities ``f_k(eps_tk)`` floored at ``floor``; returns ``(table, n_floored)``."""
    T, K = residuals.shape
    L = np.empty((T, K))
    for k, e in enumerate(emissions):
        if e.residuals.shape == residuals[:, k].shape and np.array_equal(e.residuals, residuals[:, k]):
            L[:, k] = e.pdf_at_residuals()
        else:
            L[:, k] = e.pdf(residuals[:, k])
    if not np.all(np.isfinite(L)):
        return L, 0
    low = L < floor
    n_low = int(low.sum())
    if n_low:
        L[low] = floor
    return L, n_low


def _initial_bandwidth(values, weights):
    sample = WeightedSample(values, weights)
    s0 = silverman_bandwidth(sample)
    return s0 if s0 > 0 else 1e-6 * max(1.0, abs(float(values[0])))


def fit(series: TimeSeriesFrame, config: FitConfig | None = None) -> EnsembleModel:
    """Fit transition matrix, initial distribution and member emissions by EM.

    Starts from uniform ``A`` and ``pi`` and unconstrained-weight MQE emissions
    with uniform posterior weights. Each iteration runs the forward-backward
    E step, re-estimates ``A`` and ``pi``, then for each member reselects the
    bandwidth by bootstrap and re-solves the side constants with the member's
    posterior occupancy as sample weights. Stops once the log-likelihood change
    is below ``loglik_tol`` and the largest change in ``A``, ``pi`` and the
    bandwidths is below ``param_tol``.

    The returned model's ``fit_trace[-1]`` is the log-likelihood of the
    returned parameters. Hitting ``max_iters`` returns the last iterate with
    ``converged=False`` and a :class:`ConvergenceWarning`.
    """
    config = config or FitConfig()
    res = build_residuals(series)
    T, K = res.shape
    q = series.q
    names = series.member_names
    if T < 2 * K:
        warnings.warn(f"only {T} observations for {K} members (fewer than 2K)", SmallSampleWarning, stacklevel=2)

    seeds = [member_seed(config.seed, n) for n in names]
    weights = np.full(T, 1.0 / K)
    emissions = [fit_emission(res[:, k], weights, _initial_bandwidth(res[:, k], weights), q, names[k]) for k in range(K)]
    A = np.full((K, K), 1.0 / K)
    pi = np.full(K, 1.0 / K)

    trace: list[float] = []
    change = np.inf
    converged = False
    floored = 0
    n_iter = 0

    def e_step():
        L, n_low = likelihood_table(res, emissions)
        if not np.all(np.isfinite(L)):
            raise NonFiniteLikelihood("emission densities produced NaN or Inf", trace)
        return hmm.forward_backward(L, A, pi), n_low

    for it in range(config.max_iters):
        n_iter = it + 1
        post, floored = e_step()
        trace.append(post.log_likelihood)
        log.debug("iteration %d: loglik %.10g", it, post.log_likelihood)
        if it > 0 and abs(trace[-1] - trace[-2]) < config.loglik_tol and change < config.param_tol:
            converged = True
            break

        A_new = hmm.update_transition(post)
        pi_new = hmm.update_initial(post)
        change = max(np.max(np.abs(A_new - A)), np.max(np.abs(pi_new - pi)))

        frozen = config.freeze_emissions_after is not None and it >= config.freeze_emissions_after
        if not frozen:
            fixed_bw = config.freeze_bandwidths_after is not None and it >= config.freeze_bandwidths_after
            for k in range(K):
                w = np.maximum(post.gamma[:, k], WEIGHT_FLOOR)
                old = emissions[k].bandwidth
                if fixed_bw:
                    bw = old
                else:
                    sample = WeightedSample(res[:, k], w)
                    s0 = _initial_bandwidth(res[:, k], w)
                    cands = default_candidates(s0, config.n_candidates, config.candidate_span)
                    bw = select_bandwidth(sample, cands, config.bootstrap_B, seeds[k]).sigma_star
                emissions[k] = fit_emission(res[:, k], w, bw, q, names[k])
                change = max(change, abs(bw - old))
        A, pi = A_new, pi_new
    else:
        post, floored = e_step()
        trace.append(post.log_likelihood)
        warnings.warn(f"EM stopped at max_iters={config.max_iters} before converging", ConvergenceWarning, stacklevel=2)

    if floored:
        warnings.warn(
            f"{floored} emission densities floored at {LIKELIHOOD_FLOOR:g}", LikelihoodFloorWarning, stacklevel=2
        )

    pi_star = hmm.stationary_distribution(A, pi, tol=config.pi_star_tol)
    return EnsembleModel(
        A=A,
        pi=pi,
        pi_star=pi_star,
        emissions=tuple(emissions),
        q=q,
        member_names=names,
        fit_trace=np.asarray(trace),
        converged=converged,
        n_iter=n_iter,
        floored=floored,
        fallbacks=sum(not e.constrained for e in emissions),
    )


def loglik(series: TimeSeriesFrame, model: EnsembleModel) -> float:
    """Log-likelihood of ``series`` under ``model`` (scaled forward pass)."""
    if series.n_members != model.n_members:
        raise ShapeMismatch(f"series has {series.n_members} members, model has {model.n_members}")
    if series.q != model.q:
        raise ShapeMismatch(f"series level q={series.q} differs from model q={model.q}")
    L, _ = likelihood_table(build_residuals(series), model.emissions)
    return hmm.log_likelihood(L, model.A, model.pi)


# --------------------------------------------------------------------------
# model document
# --------------------------------------------------------------------------


def _hex(x) -> str:
    return float(x).hex()


def _hexes(a) -> list:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return _hex(a)
    return [_hexes(row) for row in a] if a.ndim > 1 else [float(v).hex() for v in a]


def _unhex(v, what):
    if isinstance(v, list):
        return np.array([_unhex(x, what) for x in v], dtype=float)
    if not isinstance(v, str):
        raise MalformedDocument(f"{what}: expected hex-float string, got {type(v).__name__}")
    try:
        return float.fromhex(v)
    except ValueError as err:
        raise MalformedDocument(f"{what}: bad hex float {v!r}") from err


def to_document(model: EnsembleModel) -> dict:
    return {
        "schema": SCHEMA,
        "version": SCHEMA_VERSION,
        "n_states": model.n_members,
        "q": _hex(model.q),
        "member_names": list(model.member_names),
        "A": _hexes(model.A),
        "pi": _hexes(model.pi),
        "pi_star": _hexes(model.pi_star),
        "emissions": [
            {
                "member": name,
                "bandwidth": _hex(e.bandwidth),
                "w_neg": _hex(e.w_neg),
                "w_pos": _hex(e.w_pos),
                "q": _hex(e.q),
                "constrained": bool(e.constrained),
                "residuals": _hexes(e.residuals),
                "gamma_weights": _hexes(e.gamma_weights),
            }
            for name, e in zip(model.member_names, model.emissions)
        ],
        "fit_trace": _hexes(model.fit_trace),
        "converged": bool(model.converged),
        "n_iter": int(model.n_iter),
        "floored": int(model.floored),
        "fallbacks": int(model.fallbacks),
    }


def serialize(model: EnsembleModel) -> str:
    """JSON text with every real stored as a hex-float string (lossless)."""
    return json.dumps(to_document(model), indent=1) + "\n"


def _get(doc, key, what="document"):
    try:
        return doc[key]
    except (KeyError, TypeError) as err:
        raise MalformedDocument(f"{what}: missing field {key!r}") from err


def from_document(doc) -> EnsembleModel:
    if not isinstance(doc, dict):
        raise MalformedDocument("model document must be a JSON object")
    if doc.get("schema") != SCHEMA:
        raise SchemaVersionMismatch(f"unknown schema {doc.get('schema')!r}, expected {SCHEMA!r}")
    if doc.get("version") != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"schema version {doc.get('version')!r} not supported (expected {SCHEMA_VERSION})")

    K = _get(doc, "n_states")
    names = _get(doc, "member_names")
    raw_em = _get(doc, "emissions")
    if not isinstance(K, int) or K < 1:
        raise MalformedDocument(f"n_states must be a positive integer, got {K!r}")
    if not isinstance(names, list) or len(names) != K:
        raise MalformedDocument(f"expected {K} member names")
    if not isinstance(raw_em, list) or len(raw_em) != K:
        raise MalformedDocument(f"header declares {K} states but document has {len(raw_em) if isinstance(raw_em, list) else 0} emissions")

    A = _unhex(_get(doc, "A"), "A")
    pi = _unhex(_get(doc, "pi"), "pi")
    pi_star = _unhex(_get(doc, "pi_star"), "pi_star")
    if A.shape != (K, K) or pi.shape != (K,) or pi_star.shape != (K,):
        raise MalformedDocument("A, pi or pi_star shape does not match n_states")

    emissions = []
    for k, raw in enumerate(raw_em):
        what = f"emission {k}"
        res = _unhex(_get(raw, "residuals", what), what)
        gam = _unhex(_get(raw, "gamma_weights", what), what)
        if res.ndim != 1 or res.shape != gam.shape:
            raise MalformedDocument(f"{what}: residuals and gamma_weights must be equal-length lists")
        try:
            emissions.append(
                MqeEmission(
                    res,
                    gam,
                    _unhex(_get(raw, "bandwidth", what), what),
                    _unhex(_get(raw, "w_neg", what), what),
                    _unhex(_get(raw, "w_pos", what), what),
                    _unhex(_get(raw, "q", what), what),
                    bool(_get(raw, "constrained", what)),
                )
            )
        except ValueError as err:
            raise MalformedDocument(f"{what}: {err}") from err

    trace = _unhex(_get(doc, "fit_trace"), "fit_trace")
    return EnsembleModel(
        A=A,
        pi=pi,
        pi_star=pi_star,
        emissions=tuple(emissions),
        q=_unhex(_get(doc, "q"), "q"),
        member_names=tuple(str(n) for n in names),
        fit_trace=np.atleast_1d(trace),
        converged=bool(_get(doc, "converged")),
        n_iter=int(_get(doc, "n_iter")),
        floored=int(doc.get("floored", 0)),
        fallbacks=int(doc.get("fallbacks", 0)),
    )


def deserialize(text: str) -> EnsembleModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise MalformedDocument(f"not valid JSON: {err}") from err
    return from_document(doc)
