"""Streaming belief-sum change detector.

The detection statistic is ``alpha * pi(0) + (1 - alpha) * pi(N+1)``; an alarm
is raised at the first step where it strictly exceeds the threshold.  With
``alpha = 0.5`` and ``report_sum=True`` the plain sum ``pi(0) + pi(N+1)`` is
reported instead, compared against the same threshold.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_count, check_counts, check_open_unit, check_probability
from .exceptions import ConfigurationError, InvalidParameterError
from .hmm import RateLadder, TransitionModel, belief_update, build_p2, filter_batch, pos

MODES = ("monitor", "stop")
TRAJECTORY_COLUMNS = ("step", "count", "statistic", "q_low", "q_high")


def uniform_prior(n):
    """Uniform belief over the normal states 1..N."""
    b = np.zeros(n + 3)
    b[pos(1):pos(n + 1)] = 1.0 / n
    return b


@dataclass(frozen=True, eq=False)
class DetectorConfig:
    ladder: RateLadder
    model: TransitionModel
    alpha: float = 0.5
    threshold: float = 0.8
    prior: np.ndarray | None = None
    report_sum: bool = False
    p2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.ladder.normal_count
        if self.model.normal_count != n:
            raise ConfigurationError(
                f"ladder has {n} normal states but pbar has {self.model.normal_count} rows"
            )
        check_probability(self.alpha, "alpha")
        check_open_unit(self.threshold, "threshold")
        prior = uniform_prior(n) if self.prior is None else np.asarray(self.prior, dtype=float)
        if prior.shape == (n,):
            full = np.zeros(n + 3)
            full[pos(1):pos(n + 1)] = prior
            prior = full
        if prior.shape != (n + 3,):
            raise ConfigurationError(f"prior must have length {n} or {n + 3}")
        if np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-12:
            raise ConfigurationError("prior must be a probability vector")
        if prior[0] != 0 or prior[pos(0)] != 0 or prior[pos(n + 1)] != 0:
            raise ConfigurationError("prior must put zero mass on A, 0 and N+1")
        prior.setflags(write=False)
        object.__setattr__(self, "prior", prior)
        p2 = build_p2(self.model, n)
        p2.setflags(write=False)
        object.__setattr__(self, "p2", p2)

    @property
    def n(self):
        return self.ladder.normal_count

    @property
    def sums(self):
        return self.report_sum and self.alpha == 0.5

    def statistic(self, q_low, q_high):
        if self.sums:
            return q_low + q_high
        return self.alpha * q_low + (1.0 - self.alpha) * q_high


@dataclass(frozen=True, eq=False)
class DetectorState:
    belief: np.ndarray
    step: int = 0
    alarmed: bool = False
    alarm_step: int | None = None


@dataclass(frozen=True)
class StatisticRecord:
    step: int
    count: int
    statistic: float
    q_low: float
    q_high: float

    def as_row(self):
        return (self.step, self.count, self.statistic, self.q_low, self.q_high)


def init(config):
    return DetectorState(belief=config.prior.copy())


def _masses(belief, n):
    return float(belief[pos(0)]), float(belief[pos(n + 1)])


def initial_statistic(config):
    return config.statistic(*_masses(config.prior, config.n))


def step(state, count, config, auto_continue=False):
    """Advance the detector by one count; returns ``(new_state, record)``.

    Stepping an alarmed detector is refused unless ``auto_continue`` is set,
    in which case the statistic keeps updating and the first alarm is kept.
    """
    if state.alarmed and not auto_continue:
        raise ConfigurationError("detector already alarmed; re-initialise it first")
    count = check_count(count)
    belief = belief_update(state.belief, count, config.ladder, config.model, p2=config.p2)
    k = state.step + 1
    q_low, q_high = _masses(belief, config.n)
    stat = config.statistic(q_low, q_high)
    alarmed, alarm_step = state.alarmed, state.alarm_step
    if not alarmed and stat > config.threshold:
        alarmed, alarm_step = True, k
    new = DetectorState(belief=belief, step=k, alarmed=alarmed, alarm_step=alarm_step)
    return new, StatisticRecord(k, count, stat, q_low, q_high)


def run(counts, config, mode="monitor"):
    """Filter a whole count sequence.

    ``mode="monitor"`` keeps computing the statistic after the first alarm;
    ``mode="stop"`` ends the trajectory at the alarm.  Returns
    ``(records, alarm_step)``.
    """
    if mode not in MODES:
        raise InvalidParameterError(f"mode must be one of {MODES}, got {mode!r}")
    counts = check_counts(counts)
    state = init(config)
    records = []
    for y in counts:
        state, rec = step(state, int(y), config, auto_continue=True)
        records.append(rec)
        if mode == "stop" and state.alarmed:
            break
    return records, state.alarm_step


def statistics_batch(counts, config):
    """Statistic trajectories for a matrix of streams, shape ``(n_streams, n_steps)``."""
    counts = np.atleast_2d(np.asarray(counts))
    beliefs = filter_batch(counts, config.ladder, config.p2, config.prior)
    return config.statistic(beliefs[..., pos(0)], beliefs[..., pos(config.n + 1)])


def first_crossing(stats, threshold):
    """1-based first index with ``stats > threshold`` along the last axis; 0 if none."""
    hit = np.asarray(stats) > threshold
    first = np.argmax(hit, axis=-1) + 1
    return np.where(hit.any(axis=-1), first, 0)


def write_trajectory(records, path_or_file):
    def _write(fh):
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for r in records:
            w.writerow((r.step, r.count, repr(r.statistic), repr(r.q_low), repr(r.q_high)))

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            _write(fh)


def alarm_report(stream_id, alarm_step, config):
    """Structured ``key: value`` text describing one stream's alarm."""
    lines = [
        f"stream: {stream_id}",
        f"alarm_step: {'none' if alarm_step is None else alarm_step}",
        f"threshold: {config.threshold!r}",
        f"alpha: {config.alpha!r}",
    ]
    return "\n".join(lines) + "\n"


class BeliefSumDetector(BaseEstimator):
    """Belief-sum quickest change detector with an sklearn-style interface.

    ``fit`` learns the normal rates from training counts unless ``rates`` is
    given; ``transform`` returns the detection statistic per count and
    ``predict`` flags the counts at which the statistic exceeds ``threshold``.

    Parameters
    ----------
    rates : sequence of float or None
        Full ladder ``lambda_0..lambda_{N+1}``.  When ``None`` it is learned
        in :meth:`fit` with ``n_normal`` clusters.
    n_normal : int
    pbar : "uniform" or array of shape (N, N+2)
    a_low, a_high : float
    alpha : float
    threshold : float
    report_sum : bool
    prior : "uniform" or array of length N
    mode : {"monitor", "stop"}
    boundary_multiplier, rate_floor : float
        Passed to the rate learner.
    """

    def __init__(
        self,
        rates=None,
        n_normal=5,
        pbar="uniform",
        a_low=1.0,
        a_high=1.0,
        alpha=0.5,
        threshold=0.8,
        report_sum=False,
        prior="uniform",
        mode="monitor",
        boundary_multiplier=3.0,
        rate_floor=1e-3,
    ):
        self.rates = rates
        self.n_normal = n_normal
        self.pbar = pbar
        self.a_low = a_low
        self.a_high = a_high
        self.alpha = alpha
        self.threshold = threshold
        self.report_sum = report_sum
        self.prior = prior
        self.mode = mode
        self.boundary_multiplier = boundary_multiplier
        self.rate_floor = rate_floor

    def fit(self, X=None, y=None):
        from .learner import (
            LearnerConfig,
            TrainingSet,
            default_transition,
            learn_ladder,
        )

        if self.mode not in MODES:
            raise InvalidParameterError(f"mode must be one of {MODES}")
        if self.rates is None:
            if X is None:
                raise InvalidParameterError("training counts are required when rates is None")
            cfg = LearnerConfig(self.n_normal, self.boundary_multiplier, self.rate_floor)
            ladder, _ = learn_ladder(TrainingSet(X), cfg)
        else:
            ladder = RateLadder(tuple(self.rates))
        n = ladder.normal_count
        if isinstance(self.pbar, str):
            if self.pbar != "uniform":
                raise InvalidParameterError(f"unknown pbar {self.pbar!r}")
            model = default_transition(n, self.a_low, self.a_high)
        else:
            model = TransitionModel(self.pbar, self.a_low, self.a_high)
        prior = None if isinstance(self.prior, str) and self.prior == "uniform" else self.prior
        self.config_ = DetectorConfig(
            ladder, model, self.alpha, self.threshold, prior, self.report_sum
        )
        self.ladder_ = ladder
        self.model_ = model
        return self

    def _records(self, X):
        check_is_fitted(self, "config_")
        return run(check_counts(X), self.config_, mode=self.mode)

    def transform(self, X):
        """Statistic after each count (shorter than ``X`` in stop mode after an alarm)."""
        records, _ = self._records(X)
        return np.array([r.statistic for r in records])

    def predict(self, X):
        """Boolean flag per processed count: statistic strictly above threshold."""
        return self.transform(X) > self.threshold

    def detect(self, X):
        """First alarm step (1-based) or ``None``."""
        return self._records(X)[1]

    def trajectory(self, X):
        return self._records(X)[0]

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)
