"""Learning the normal-rate ladder from training counts."""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_counts, check_positive_int, check_rate
from .exceptions import InvalidParameterError
from .hmm import RateLadder, TransitionModel

logger = logging.getLogger(__name__)

# Reference ladders fitted on a recorded training day; shipped as-is.
REFERENCE_LADDERS = {
    "person": (0.001, 5.0, 10.0, 15.0, 20.0, 25.0, 65.0),
    "car": (0.00001, 0.001, 55.0),
    "camera-person": (0.001, 2.0, 4.0, 6.0, 8.0, 55.0),
    "instagram": (0.001, 0.1, 2.0),
}


@dataclass(frozen=True)
class TrainingSet:
    counts: np.ndarray
    source_label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "counts", check_counts(self.counts))

    def digest(self):
        return hashlib.sha256(self.counts.tobytes()).hexdigest()


@dataclass(frozen=True)
class LearnerConfig:
    n_normal: int = 5
    boundary_multiplier: float = 3.0
    rate_floor: float = 1e-3

    def __post_init__(self):
        check_positive_int(self.n_normal, "n_normal")
        check_rate(self.boundary_multiplier, "boundary_multiplier")
        check_rate(self.rate_floor, "rate_floor")


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia_path: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False


def kmeans_1d(x, k, max_iter=300):
    """Lloyd's algorithm on a 1-D sample with quantile initialisation.

    Empty clusters are dropped and duplicate centroids merged, so the number
    of returned centroids can be smaller than ``k``.  Iterates until the
    assignment stops changing.
    """
    x = np.sort(np.asarray(x, dtype=float))
    k = min(check_positive_int(k, "k"), len(np.unique(x)))
    centroids = np.unique(np.quantile(x, (np.arange(k) + 0.5) / k, method="linear"))
    labels = None
    inertia_path = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # sorted centroids partition the line at midpoints
        edges = (centroids[:-1] + centroids[1:]) / 2.0
        new_labels = np.searchsorted(edges, x, side="left")
        occupied = np.unique(new_labels)
        if len(occupied) < len(centroids):
            centroids = centroids[occupied]
            edges = (centroids[:-1] + centroids[1:]) / 2.0
            new_labels = np.searchsorted(edges, x, side="left")
        inertia_path.append(float(np.sum((x - centroids[new_labels]) ** 2)))
        centroids = np.array([x[new_labels == j].mean() for j in range(len(centroids))])
        centroids = np.unique(centroids)
        if labels is not None and np.array_equal(new_labels, labels):
            converged = True
            labels = new_labels
            break
        labels = new_labels
    edges = (centroids[:-1] + centroids[1:]) / 2.0
    labels = np.searchsorted(edges, x, side="left")
    inertia_path.append(float(np.sum((x - centroids[labels]) ** 2)))
    return KMeansResult(centroids, labels, inertia_path, it, converged)


def boundary_rates(normal_rates, multiplier, floor):
    """Abnormal rates ``multiplier`` Poisson standard deviations outside the ladder."""
    lo, hi = normal_rates[0], normal_rates[-1]
    return max(floor, lo - multiplier * math.sqrt(lo)), hi + multiplier * math.sqrt(hi)


def _enforce_order(rates, eps):
    out = list(rates)
    for i in range(1, len(out)):
        if out[i] <= out[i - 1]:
            out[i] = out[i - 1] + eps
    return out


def learn_ladder(data, cfg=None):
    """Fit ``lambda_1..lambda_N`` by 1-D k-means and add boundary rates.

    Returns ``(ladder, kmeans_result)``.  The effective number of normal states
    is ``ladder.normal_count`` and may be smaller than ``cfg.n_normal`` when the
    data has too few distinct values.
    """
    if not isinstance(data, TrainingSet):
        data = TrainingSet(data)
    cfg = cfg or LearnerConfig()
    km = kmeans_1d(data.counts, cfg.n_normal)
    if len(km.centroids) < cfg.n_normal:
        logger.warning(
            "only %d distinct clusters in %s; effective N reduced from %d",
            len(km.centroids), data.source_label or "training data", cfg.n_normal,
        )
    normal = [max(float(c), cfg.rate_floor) for c in km.centroids]
    low, high = boundary_rates(normal, cfg.boundary_multiplier, cfg.rate_floor)
    rates = _enforce_order([low] + normal + [high], cfg.rate_floor)
    return RateLadder(tuple(rates)), km


def default_transition(n, a_low=1.0, a_high=1.0):
    """Uniform ``pbar``: every normal state moves anywhere in 0..N+1 w.p. 1/(N+2)."""
    n = check_positive_int(n, "n")
    row = [Fraction(1, n + 2)] * (n + 2)
    assert sum(row) == 1
    return TransitionModel([[float(p) for p in row]] * n, a_low, a_high)


def reference_ladder(name):
    try:
        return RateLadder(REFERENCE_LADDERS[name])
    except KeyError:
        raise InvalidParameterError(
            f"unknown ladder {name!r}; choose from {sorted(REFERENCE_LADDERS)}"
        ) from None


class RateLearner(BaseEstimator):
    """Estimator wrapper around :func:`learn_ladder`.

    Parameters
    ----------
    n_normal : int
        Requested number of normal states N.
    boundary_multiplier : float
        Number of Poisson standard deviations between the extreme normal rates
        and the abnormal boundary rates.
    rate_floor : float
        Smallest admissible rate; also the tie-breaking nudge.

    Attributes
    ----------
    ladder_ : RateLadder
    effective_n_ : int
    kmeans_ : KMeansResult
    """

    def __init__(self, n_normal=5, boundary_multiplier=3.0, rate_floor=1e-3):
        self.n_normal = n_normal
        self.boundary_multiplier = boundary_multiplier
        self.rate_floor = rate_floor

    def fit(self, X, y=None):
        cfg = LearnerConfig(self.n_normal, self.boundary_multiplier, self.rate_floor)
        self.ladder_, self.kmeans_ = learn_ladder(TrainingSet(X), cfg)
        self.effective_n_ = self.ladder_.normal_count
        return self

    def predict(self, X):
        """Index (1..N) of the nearest normal rate for each count."""
        check_is_fitted(self, "ladder_")
        x = check_counts(X)
        normal = np.array(self.ladder_.rates[1:-1])
        return np.argmin(np.abs(x[:, None] - normal[None, :]), axis=1) + 1
