"""Markov-modulated Poisson count paths and Monte Carlo detector evaluation.

Time indexing: the hidden chain starts at ``X_0`` drawn from the prior over
the normal states, which is never observed.  Step ``k = 1, 2, ...`` moves the
chain with ``P2`` and emits ``Y_k ~ Pois(lambda_{X_k})``.  ``states[k-1]`` and
``counts[k-1]`` hold ``X_k`` and ``Y_k``; change points and alarm steps are
1-based step numbers on the same clock.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive_int
from .detector import first_crossing, statistics_batch
from .exceptions import ConfigurationError
from .hmm import RateLadder, TransitionModel, build_p2, log_poisson_pmf, reduced_step

REPORT_COLUMNS = ("threshold", "false_alarm_fraction", "mean_delay", "censored_count")


def trial_rng(seed, index):
    """Generator for trial ``index``; independent of how many trials are run."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    ladder: RateLadder
    model: TransitionModel
    prior: np.ndarray | None = None
    horizon: int = 200
    seed: int = 0

    def __post_init__(self):
        n = self.ladder.normal_count
        if self.model.normal_count != n:
            raise ConfigurationError("ladder and transition model disagree on N")
        check_positive_int(self.horizon, "horizon")
        prior = np.full(n, 1.0 / n) if self.prior is None else np.asarray(self.prior, float)
        if prior.shape != (n,) or np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-12:
            raise ConfigurationError("prior must be a distribution over the N normal states")
        object.__setattr__(self, "prior", prior)

    @property
    def n(self):
        return self.ladder.normal_count


@dataclass(frozen=True, eq=False)
class SamplePath:
    initial_state: int
    states: np.ndarray
    counts: np.ndarray
    change_point: int | None


def _change_point(states, n):
    absorbed = (states == 0) | (states == n + 1)
    return int(np.argmax(absorbed)) + 1 if absorbed.any() else None


def _chain_table(config):
    # rows/cols indexed by hidden state 0..N+1 (A is never visited pre-stop)
    p2 = build_p2(config.model, config.n)[1:, 1:]
    return np.cumsum(p2, axis=1)


def sample_path(config, rng=None):
    """Draw one path; deterministic given ``rng`` (defaults to ``config.seed``)."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    cum = _chain_table(config)
    rates = config.ladder.array
    x0 = int(rng.choice(np.arange(1, config.n + 1), p=config.prior))
    u = rng.random(config.horizon)
    states = np.empty(config.horizon, dtype=np.int64)
    x = x0
    for k in range(config.horizon):
        x = int(np.searchsorted(cum[x], u[k], side="right"))
        x = min(x, config.n + 1)
        states[k] = x
    counts = rng.poisson(rates[states])
    return SamplePath(x0, states, counts, _change_point(states, config.n))


def sample_paths(config, n_paths, rng):
    """Vectorised draw of many paths; returns ``(initial, states, counts)`` arrays."""
    n_paths = check_positive_int(n_paths, "n_paths")
    cum = _chain_table(config)
    x = 1 + rng.choice(config.n, size=n_paths, p=config.prior)
    initial = x.copy()
    states = np.empty((n_paths, config.horizon), dtype=np.int64)
    for k in range(config.horizon):
        u = rng.random(n_paths)
        x = np.minimum((u[:, None] >= cum[x]).sum(axis=1), config.n + 1)
        states[:, k] = x
    counts = rng.poisson(config.ladder.array[states])
    return initial, states, counts


def change_points(states, n):
    """1-based first absorption step per row; 0 where absent."""
    absorbed = (states == 0) | (states == n + 1)
    return np.where(absorbed.any(axis=1), np.argmax(absorbed, axis=1) + 1, 0)


def write_path(path, fh_or_name):
    def _write(fh):
        w = csv.writer(fh)
        w.writerow(("timestamp", "count", "state"))
        for k, (c, s) in enumerate(zip(path.counts, path.states), start=1):
            w.writerow((k, int(c), int(s)))

    if hasattr(fh_or_name, "write"):
        _write(fh_or_name)
    else:
        with open(fh_or_name, "w", newline="") as fh:
            _write(fh)


def scripted_day(ladder, model, n_slots, rng, event=None, event_state=None):
    """A "day" of counts whose normal stretches never absorb.

    Normal slots follow the chain restricted to states 1..N (each ``pbar`` row
    renormalised over the normal columns).  Slots in ``event = (start, stop)``
    (0-based, half-open) are forced into ``event_state`` (default N+1).
    Returns ``(states, counts)``.
    """
    n = ladder.normal_count
    block = model.pbar[:, 1:-1]
    mass = block.sum(axis=1, keepdims=True)
    if np.any(mass <= 0):
        raise ConfigurationError("some normal state cannot stay within the normal states")
    cum = np.cumsum(block / mass, axis=1)
    states = np.empty(n_slots, dtype=np.int64)
    u = rng.random(n_slots)
    x = 1 + int(rng.integers(n))
    for k in range(n_slots):
        x = 1 + min(int(np.searchsorted(cum[x - 1], u[k], side="right")), n - 1)
        states[k] = x
    if event is not None:
        start, stop = event
        states[start:stop] = n + 1 if event_state is None else event_state
    counts = rng.poisson(ladder.array[states])
    return states, counts


@dataclass
class EvalReport:
    """Per-threshold operating points of a Monte Carlo evaluation.

    ``alarm_steps[i, j]`` is trial ``i``'s alarm step under ``thresholds[j]``
    (0 when the horizon ended first).
    """

    trials: int
    thresholds: np.ndarray
    false_alarm_fraction: np.ndarray
    mean_detection_delay: np.ndarray
    censored_count: np.ndarray
    alarm_steps: np.ndarray = field(repr=False)
    change_points: np.ndarray = field(repr=False)
    alpha: float = 0.5

    def rows(self):
        for j, thr in enumerate(self.thresholds):
            yield (
                float(thr),
                float(self.false_alarm_fraction[j]),
                float(self.mean_detection_delay[j]),
                int(self.censored_count[j]),
            )

    def to_csv(self, fh_or_name):
        def _write(fh):
            w = csv.writer(fh)
            w.writerow(REPORT_COLUMNS)
            for thr, fa, delay, cens in self.rows():
                w.writerow((repr(thr), repr(fa), repr(delay), cens))

        if hasattr(fh_or_name, "write"):
            _write(fh_or_name)
        else:
            with open(fh_or_name, "w", newline="") as fh:
                _write(fh)

    def summary(self):
        lines = [f"trials: {self.trials}", f"alpha: {self.alpha!r}"]
        for thr, fa, delay, cens in self.rows():
            lines.append(
                f"threshold {thr:g}: false_alarm_fraction={fa:.4f} "
                f"mean_delay={delay:.4f} censored={cens}"
            )
        return "\n".join(lines) + "\n"


def evaluate(scenario, det, trials, thresholds):
    """Stop-at-alarm evaluation of ``det`` on ``trials`` simulated paths.

    A false alarm is an alarm strictly before the change point (including
    paths that never change within the horizon).  Delay ``tau - tau_c`` is
    averaged over trials that alarm at or after the change point; runs
    without any alarm are counted as censored.
    """
    trials = check_positive_int(trials, "trials")
    thresholds = np.asarray(sorted(float(t) for t in thresholds))
    paths = [sample_path(scenario, trial_rng(scenario.seed, i)) for i in range(trials)]
    counts = np.stack([p.counts for p in paths])
    cps = np.array([p.change_point or 0 for p in paths])
    stats = statistics_batch(counts, det)
    alarms = np.stack([first_crossing(stats, t) for t in thresholds], axis=1)

    never_changed = cps == 0
    fa = np.zeros(len(thresholds))
    delay = np.full(len(thresholds), math.nan)
    censored = np.zeros(len(thresholds), dtype=np.int64)
    for j in range(len(thresholds)):
        tau = alarms[:, j]
        fired = tau > 0
        false = fired & (never_changed | (tau < cps))
        detected = fired & ~never_changed & (tau >= cps)
        fa[j] = false.mean()
        censored[j] = int((~fired).sum())
        if detected.any():
            delay[j] = float(np.mean(tau[detected] - cps[detected]))
    return EvalReport(trials, thresholds, fa, delay, censored, alarms, cps, det.alpha)


def policy_rollouts(decide, q_low, q_high, ladder, model, c_f, c_d, n_rollouts, rng,
                    max_steps=100_000):
    """Monte Carlo cost of a stopping policy started from a reduced belief.

    ``decide(q_low, q_high)`` returns a boolean "stop" array.  The hidden state
    is drawn from the belief (normal mass spread like the shared ``pbar`` row)
    and each rollout accrues ``c_d`` per continued step in an absorbed state
    and ``c_f`` if it stops in a normal state.  Returns the per-rollout costs.
    """
    n = ladder.normal_count
    row = model.row
    normal = row[1:-1] / row[1:-1].sum() if row[1:-1].sum() > 0 else np.full(n, 1.0 / n)
    probs = np.concatenate([[q_low], (1.0 - q_low - q_high) * normal, [q_high]])
    probs = np.clip(probs, 0.0, None)
    states = rng.choice(n + 2, size=n_rollouts, p=probs / probs.sum())
    cum = _chain_table(ScenarioConfig(ladder, model))
    rates = ladder.array
    ql = np.full(n_rollouts, float(q_low))
    qh = np.full(n_rollouts, float(q_high))
    cost = np.zeros(n_rollouts)
    active = np.ones(n_rollouts, dtype=bool)
    for _ in range(max_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        stop = np.asarray(decide(ql[idx], qh[idx]), dtype=bool)
        s_idx = idx[stop]
        x = states[s_idx]
        cost[s_idx] += np.where((x >= 1) & (x <= n), c_f, 0.0)
        active[s_idx] = False
        c_idx = idx[~stop]
        if c_idx.size == 0:
            continue
        x = states[c_idx]
        cost[c_idx] += np.where((x == 0) | (x == n + 1), c_d, 0.0)
        u = rng.random(c_idx.size)
        x = np.minimum((u[:, None] >= cum[x]).sum(axis=1), n + 1)
        states[c_idx] = x
        y = rng.poisson(rates[x])
        ll = log_poisson_pmf(rates[None, :], y[:, None])
        ll = ll - ll.max(axis=1, keepdims=True)
        ql[c_idx], qh[c_idx], _ = reduced_step(
            ql[c_idx], qh[c_idx], ll, row, model.a_low, model.a_high
        )
    else:
        raise RuntimeError("policy rollouts did not terminate within max_steps")
    return cost
