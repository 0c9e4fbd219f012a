"""Hidden Markov model with Poisson emissions and absorbing low/high states.

State vectors always use the order ``(A, 0, 1, ..., N, N+1)``:

* ``A`` -- the stopped state entered after an alarm,
* ``0`` -- the absorbing low-rate state,
* ``1..N`` -- the normal states,
* ``N+1`` -- the absorbing high-rate state.

State ``k`` therefore lives at array position ``k + 1`` and ``A`` at position 0.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from ._validation import check_count, check_positive_int, check_probability, check_rate
from .exceptions import (
    ConfigurationError,
    DegenerateObservationError,
    InvalidParameterError,
)

STOP = 0  # array position of the stopped state A

_ROW_TOL = 1e-12
_CLAMP = 1e-15


def pos(state):
    """Array position of hidden state ``state`` (0..N+1)."""
    return state + 1


def log_poisson_pmf(rate, count):
    """Elementwise ``log P(Y = count)`` for ``Y ~ Pois(rate)``; broadcasts."""
    rate = np.asarray(rate, dtype=float)
    count = np.asarray(count)
    return count * np.log(rate) - rate - gammaln(count + 1.0)


def poisson_pmf(rate, count):
    """Poisson probability mass ``exp(-rate) * rate**count / count!``.

    Evaluated in log space so large counts do not overflow the factorial.
    """
    rate = check_rate(rate)
    count = check_count(count)
    return float(np.exp(log_poisson_pmf(rate, count)))


@dataclass(frozen=True)
class RateLadder:
    """Ordered Poisson rates ``lambda_0 < lambda_1 < ... < lambda_{N+1}``."""

    rates: tuple

    def __post_init__(self):
        rates = tuple(check_rate(r, "rates") for r in self.rates)
        if len(rates) < 3:
            raise InvalidParameterError(
                f"a ladder needs at least 3 rates (N >= 1), got {len(rates)}"
            )
        for lo, hi in zip(rates, rates[1:]):
            if not lo < hi:
                raise InvalidParameterError(f"rates must be strictly increasing: {rates}")
        object.__setattr__(self, "rates", rates)

    @property
    def normal_count(self):
        return len(self.rates) - 2

    @property
    def array(self):
        return np.array(self.rates)

    @property
    def low(self):
        return self.rates[0]

    @property
    def high(self):
        return self.rates[-1]

    def log_emissions(self, count):
        """Log-likelihood of ``count`` under every state 0..N+1."""
        return log_poisson_pmf(self.array, count)


class TransitionModel:
    """Normal-state transition block ``pbar`` plus the absorbing self-loops.

    ``pbar`` has one row per normal state 1..N and columns for destination
    states 0..N+1.  ``a_low`` / ``a_high`` are the self-transition
    probabilities of states 0 and N+1; the remainder jumps to the other
    absorbing state.
    """

    def __init__(self, pbar, a_low=1.0, a_high=1.0):
        pbar = np.array(pbar, dtype=float)
        if pbar.ndim != 2 or pbar.shape[0] < 1 or pbar.shape[1] != pbar.shape[0] + 2:
            raise ConfigurationError(
                f"pbar must have shape (N, N+2), got {pbar.shape}"
            )
        if not np.all(np.isfinite(pbar)) or np.any(pbar < 0):
            raise InvalidParameterError("pbar entries must be finite and nonnegative")
        if np.any(np.abs(pbar.sum(axis=1) - 1.0) > _ROW_TOL):
            raise InvalidParameterError("every row of pbar must sum to 1")
        pbar.setflags(write=False)
        self._pbar = pbar
        self._a_low = check_probability(a_low, "a_low")
        self._a_high = check_probability(a_high, "a_high")

    pbar = property(lambda self: self._pbar)
    a_low = property(lambda self: self._a_low)
    a_high = property(lambda self: self._a_high)

    @property
    def normal_count(self):
        return self._pbar.shape[0]

    @property
    def identical_rows(self):
        return bool(np.all(self._pbar == self._pbar[0]))

    @property
    def row(self):
        """The shared row of ``pbar``; only meaningful when rows are identical."""
        if not self.identical_rows:
            raise ConfigurationError("pbar rows are not identical")
        return self._pbar[0]

    def __eq__(self, other):
        if not isinstance(other, TransitionModel):
            return NotImplemented
        return (
            self._a_low == other._a_low
            and self._a_high == other._a_high
            and self._pbar.shape == other._pbar.shape
            and bool(np.all(self._pbar == other._pbar))
        )

    def __hash__(self):
        return hash((self._pbar.tobytes(), self._a_low, self._a_high))

    def __repr__(self):
        return (
            f"TransitionModel(pbar={self._pbar.tolist()!r}, "
            f"a_low={self._a_low!r}, a_high={self._a_high!r})"
        )


class ReducedBelief(NamedTuple):
    """Belief mass on the two absorbing states.

    ``q_normal`` is the mass on the normal states.  It is redundant
    (``1 - q_low - q_high``) but carrying it keeps full relative precision
    when one absorbing mass is close to 1; ``None`` means "derive it".
    """

    q_low: float
    q_high: float
    q_normal: float | None = None

    @property
    def normal_mass(self):
        if self.q_normal is None:
            return max(1.0 - self.q_low - self.q_high, 0.0)
        return self.q_normal


def _check_dims(model, n):
    n = check_positive_int(n, "n")
    if model.normal_count != n:
        raise ConfigurationError(
            f"transition model has {model.normal_count} normal states, expected {n}"
        )
    return n


def build_p2(model, n):
    """Continue-control transition matrix of size ``(N+3, N+3)``."""
    n = _check_dims(model, n)
    lo, hi = pos(0), pos(n + 1)
    p2 = np.zeros((n + 3, n + 3))
    p2[STOP, STOP] = 1.0
    p2[lo, lo] = model.a_low
    p2[lo, hi] = 1.0 - model.a_low
    p2[pos(1):pos(n + 1), pos(0):] = model.pbar
    p2[hi, lo] = 1.0 - model.a_high
    p2[hi, hi] = model.a_high
    return p2


def build_p1(n):
    """Stop-control transition matrix: every state jumps to ``A``."""
    n = check_positive_int(n, "n")
    p1 = np.zeros((n + 3, n + 3))
    p1[:, STOP] = 1.0
    return p1


def check_belief(belief, n, name="belief"):
    """Validate a full belief vector and return it as a float array."""
    b = np.asarray(belief, dtype=float)
    if b.shape != (n + 3,):
        raise InvalidParameterError(f"{name} must have length {n + 3}, got {b.shape}")
    if not np.all(np.isfinite(b)) or np.any(b < 0):
        raise InvalidParameterError(f"{name} entries must be finite and nonnegative")
    if abs(b.sum() - 1.0) > _ROW_TOL:
        raise InvalidParameterError(f"{name} must sum to 1, got {b.sum()!r}")
    return b


def _clean(b):
    # rounding may leave tiny negatives; clamp and renormalise
    if np.any(b < 0):
        if np.any(b < -_CLAMP):
            raise DegenerateObservationError("belief update produced negative mass")
        b = np.where(b < 0, 0.0, b)
        b = b / b.sum()
    return b


def _checked_inputs(belief, count, ladder, model):
    n = ladder.normal_count
    _check_dims(model, n)
    b = check_belief(belief, n)
    if b[STOP] != 0.0:
        raise InvalidParameterError("the filter only runs before stopping: belief[A] must be 0")
    return b, check_count(count)


def _update(b, count, ladder, p2):
    predicted = p2.T @ b
    loglik = np.full(b.shape, -np.inf)
    loglik[1:] = ladder.log_emissions(count)
    active = predicted > 0
    if not np.any(active):
        raise DegenerateObservationError("predicted belief has no mass")
    shift = np.max(loglik[active])
    if not np.isfinite(shift):
        raise DegenerateObservationError(f"count {count} has zero likelihood in every state")
    weighted = np.zeros_like(b)
    weighted[active] = predicted[active] * np.exp(loglik[active] - shift)
    total = weighted.sum()
    if not total > 0:
        raise DegenerateObservationError(f"count {count} has zero predictive probability")
    return _clean(weighted / total), total * np.exp(shift)


def belief_update(belief, count, ladder, model, p2=None):
    """One step of the Bayes filter under the continue control.

    Predicts with ``P2`` and reweights by the Poisson likelihood of ``count``.
    State ``A`` gets emission weight 0, so a belief with no stopped mass keeps
    none.  ``p2`` may be passed to skip rebuilding the transition matrix.
    """
    b, count = _checked_inputs(belief, count, ladder, model)
    if p2 is None:
        p2 = build_p2(model, ladder.normal_count)
    return _update(b, count, ladder, p2)[0]


def sigma(belief, count, ladder, model, p2=None):
    """One-step predictive probability of ``count`` (the filter's normaliser)."""
    b, count = _checked_inputs(belief, count, ladder, model)
    if p2 is None:
        p2 = build_p2(model, ladder.normal_count)
    return float(_update(b, count, ladder, p2)[1])


def _reduced_weights(q_low, q_high, rest, log_lik, row, a_low, a_high):
    q_low = np.asarray(q_low, dtype=float)
    q_high = np.asarray(q_high, dtype=float)
    log_lik = np.asarray(log_lik, dtype=float)
    row = np.asarray(row, dtype=float)
    if rest is None:
        rest = 1.0 - q_low - q_high
    rest = np.clip(np.asarray(rest, dtype=float), 0.0, None)[..., None]

    pred_low = a_low * q_low + (1.0 - a_high) * q_high
    pred_high = (1.0 - a_low) * q_low + a_high * q_high
    shape = np.broadcast_shapes(rest.shape[:-1] + row.shape, log_lik.shape)
    pred = np.broadcast_to(rest * row, shape).copy()
    pred[..., 0] += pred_low
    pred[..., -1] += pred_high
    return pred * np.exp(log_lik)


def reduced_step(q_low, q_high, log_lik, row, a_low, a_high):
    """Vectorised reduced filter on the absorbing-state masses.

    ``log_lik`` holds log-likelihoods for states 0..N+1 along its last axis and
    broadcasts against ``q_low``/``q_high``.  Valid only when every row of
    ``pbar`` equals ``row``.  Returns ``(q_low', q_high', sigma)``.
    """
    weights = _reduced_weights(q_low, q_high, None, log_lik, row, a_low, a_high)
    total = weights.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        new_low = weights[..., 0] / total
        new_high = weights[..., -1] / total
    return new_low, new_high, total


def reduced_update(rb, count, ladder, row, a_low, a_high):
    """Scalar reduced filter step returning a new :class:`ReducedBelief`.

    ``rb`` may be a :class:`ReducedBelief` or a plain ``(q_low, q_high)``
    pair.  Uses a max-shift in log space, so very large counts do not
    underflow.
    """
    rb = ReducedBelief(*rb)
    q_low, q_high, rest = float(rb.q_low), float(rb.q_high), float(rb.normal_mass)
    if q_low < 0 or q_high < 0 or rest < 0 or q_low + q_high > 1.0 + _ROW_TOL:
        raise InvalidParameterError(f"invalid reduced belief {rb!r}")
    count = check_count(count)
    row = np.asarray(row, dtype=float)
    if row.shape != (ladder.normal_count + 2,):
        raise ConfigurationError("row length must equal N+2")
    loglik = ladder.log_emissions(count)
    loglik = loglik - loglik.max()
    weights = _reduced_weights(q_low, q_high, rest, loglik, row, a_low, a_high)
    total = weights.sum()
    if not total > 0:
        raise DegenerateObservationError(f"count {count} has zero predictive probability")
    return ReducedBelief(float(weights[0] / total), float(weights[-1] / total),
                         float(weights[1:-1].sum() / total))


def filter_batch(counts, ladder, p2, initial):
    """Run the full filter over many streams at once.

    ``counts`` has shape ``(n_streams, n_steps)``; ``initial`` is a single
    belief.  Returns beliefs of shape ``(n_streams, n_steps, N+3)`` where entry
    ``[:, k]`` is the belief after ``k + 1`` observations.
    """
    counts = np.asarray(counts)
    n_streams, n_steps = counts.shape
    width = p2.shape[0]
    b = np.broadcast_to(np.asarray(initial, dtype=float), (n_streams, width)).copy()
    rates = ladder.array
    out = np.empty((n_streams, n_steps, width))
    for k in range(n_steps):
        predicted = b @ p2
        loglik = log_poisson_pmf(rates[None, :], counts[:, k, None])
        loglik = loglik - loglik.max(axis=1, keepdims=True)
        weighted = np.zeros_like(predicted)
        weighted[:, 1:] = predicted[:, 1:] * np.exp(loglik)
        total = weighted.sum(axis=1, keepdims=True)
        if np.any(total <= 0):
            raise DegenerateObservationError("zero predictive probability in batch filter")
        b = weighted / total
        out[:, k] = b
    return out
