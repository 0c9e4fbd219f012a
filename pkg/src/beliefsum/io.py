"""Model configuration files and count-stream ingestion.

A model configuration is a JSON document::

    {
      "rates": [0.001, 5.0, 10.0, 15.0, 20.0, 25.0, 65.0],
      "n_normal": 5,
      "pbar": "uniform",
      "a_low": 1.0,
      "a_high": 1.0,
      "alpha": 0.5,
      "threshold": 0.8,
      "report_sum": true,
      "prior": "uniform",
      "binning": {"width": 6, "unit": "seconds"},
      "provenance": {...}
    }

``pbar`` may also be an explicit ``N x (N+2)`` matrix, ``prior`` a list of N
probabilities and ``binning.width`` null for no aggregation.  Floats are
written with ``repr`` precision so a file round-trips exactly.
"""

import csv
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .detector import DetectorConfig
from .exceptions import ConfigurationError, IngestError, InvalidParameterError
from .hmm import RateLadder, TransitionModel
from .learner import REFERENCE_LADDERS, default_transition

FIELDS = (
    "rates", "n_normal", "pbar", "a_low", "a_high", "alpha", "threshold",
    "report_sum", "prior", "binning",
)
BIN_UNITS = ("seconds", "rows")


@dataclass
class Binning:
    width: float | None = None
    unit: str = "seconds"

    def __post_init__(self):
        if self.unit not in BIN_UNITS:
            raise ConfigurationError(f"binning unit must be one of {BIN_UNITS}")
        if self.width is not None:
            if not (isinstance(self.width, (int, float)) and self.width > 0):
                raise ConfigurationError(f"bin width must be positive, got {self.width!r}")
            if self.unit == "rows" and float(self.width) != int(self.width):
                raise ConfigurationError("row binning needs an integer width")

    def to_dict(self):
        return {"width": self.width, "unit": self.unit}


@dataclass
class ModelConfigFile:
    rates: list
    n_normal: int
    pbar: object = "uniform"
    a_low: float = 1.0
    a_high: float = 1.0
    alpha: float = 0.5
    threshold: float = 0.8
    report_sum: bool = False
    prior: object = "uniform"
    binning: Binning = field(default_factory=Binning)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rates = [float(r) for r in self.rates]
        if isinstance(self.binning, dict):
            self.binning = Binning(**self.binning)
        elif self.binning is None:
            self.binning = Binning()
        if len(self.rates) != self.n_normal + 2:
            raise ConfigurationError(
                f"{len(self.rates)} rates given but n_normal={self.n_normal} needs "
                f"{self.n_normal + 2}"
            )
        if isinstance(self.pbar, str) and self.pbar != "uniform":
            raise ConfigurationError(f"pbar must be 'uniform' or a matrix, got {self.pbar!r}")
        if isinstance(self.prior, str) and self.prior != "uniform":
            raise ConfigurationError(f"prior must be 'uniform' or a list, got {self.prior!r}")
        # fail early if the models cannot be built
        try:
            self.detector_config()
        except InvalidParameterError as e:
            raise ConfigurationError(f"invalid model configuration: {e}") from None

    def ladder(self):
        return RateLadder(tuple(self.rates))

    def transition(self):
        if isinstance(self.pbar, str):
            return default_transition(self.n_normal, self.a_low, self.a_high)
        return TransitionModel(self.pbar, self.a_low, self.a_high)

    def detector_config(self, **overrides):
        kwargs = dict(alpha=self.alpha, threshold=self.threshold, report_sum=self.report_sum)
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        prior = None if isinstance(self.prior, str) else self.prior
        return DetectorConfig(self.ladder(), self.transition(), prior=prior, **kwargs)

    def to_dict(self):
        d = {
            "rates": list(self.rates),
            "n_normal": self.n_normal,
            "pbar": self.pbar if isinstance(self.pbar, str) else np.asarray(self.pbar).tolist(),
            "a_low": self.a_low,
            "a_high": self.a_high,
            "alpha": self.alpha,
            "threshold": self.threshold,
            "report_sum": self.report_sum,
            "prior": self.prior if isinstance(self.prior, str) else list(self.prior),
            "binning": self.binning.to_dict(),
        }
        if self.provenance:
            d["provenance"] = self.provenance
        return d

    @classmethod
    def from_dict(cls, d):
        missing = [k for k in ("rates", "n_normal") if k not in d]
        if missing:
            raise ConfigurationError(f"config is missing {missing}")
        unknown = set(d) - set(FIELDS) - {"provenance"}
        if unknown:
            raise ConfigurationError(f"unknown config fields {sorted(unknown)}")
        return cls(**d)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                d = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}: not valid JSON ({e})") from None
        if not isinstance(d, dict):
            raise ConfigurationError(f"{path}: top level must be an object")
        return cls.from_dict(d)


def named_config(name, **kwargs):
    """Configuration built around one of the shipped reference ladders."""
    if name not in REFERENCE_LADDERS:
        raise ConfigurationError(f"unknown config {name!r}; choose from {sorted(REFERENCE_LADDERS)}")
    rates = list(REFERENCE_LADDERS[name])
    return ModelConfigFile(rates=rates, n_normal=len(rates) - 2, **kwargs)


def load_config(name_or_path):
    """Load a config from a JSON file or by reference-ladder name."""
    if name_or_path in REFERENCE_LADDERS and not os.path.exists(name_or_path):
        return named_config(name_or_path)
    if not os.path.exists(name_or_path):
        raise ConfigurationError(f"config {name_or_path!r} not found")
    return ModelConfigFile.load(name_or_path)


def _parse_time(text, line):
    text = text.strip()
    try:
        return float(int(text))
    except ValueError:
        pass
    try:
        value = float(text)
        if math.isfinite(value):
            return value
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(text.replace("Z", "+00:00")).timestamp()
    except ValueError:
        raise IngestError(f"unparseable timestamp {text!r}", line) from None


@dataclass
class BinnedStream:
    counts: np.ndarray
    bin_starts: np.ndarray
    width: float | None
    unit: str
    dropped_rows: int = 0


def read_stream(path):
    """Parse a ``timestamp,count`` CSV; returns ``(times, counts)`` arrays.

    Extra columns are ignored.  Timestamps may be integers, decimal seconds or
    ISO-8601 text and must be non-decreasing.
    """
    times, counts = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise IngestError("empty file", 1) from None
        try:
            ti, ci = header.index("timestamp"), header.index("count")
        except ValueError:
            raise IngestError("header must contain 'timestamp' and 'count' columns", 1) from None
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) <= max(ti, ci):
                raise IngestError("too few columns", line)
            t = _parse_time(row[ti], line)
            try:
                c = int(row[ci].strip())
            except ValueError:
                raise IngestError(f"count {row[ci]!r} is not an integer", line) from None
            if c < 0:
                raise IngestError(f"negative count {c}", line)
            if times and t < times[-1]:
                raise IngestError("timestamps must be non-decreasing", line)
            times.append(t)
            counts.append(c)
    if not counts:
        raise IngestError("no data rows")
    return np.array(times), np.array(counts, dtype=np.int64)


def bin_counts(times, counts, width=None, unit="seconds"):
    """Sum counts in fixed-width bins aligned to the first timestamp.

    In ``seconds`` mode a row at time ``t`` falls in bin
    ``floor((t - t0) / width)``.  Each row is taken to cover one sampling
    period (the smallest positive timestamp gap), and only bins the data
    fully covers are kept: the trailing partial bin is dropped.  Bins with no
    rows inside the covered span count zero.  In ``rows`` mode consecutive
    groups of ``width`` rows are summed.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if width is None:
        return BinnedStream(counts.copy(), np.asarray(times, float).copy(), None, unit)
    if unit == "rows":
        w = int(width)
        n_bins = len(counts) // w
        binned = counts[: n_bins * w].reshape(n_bins, w).sum(axis=1)
        starts = np.asarray(times, float)[: n_bins * w : w]
        return BinnedStream(binned, starts, w, unit, len(counts) - n_bins * w)
    times = np.asarray(times, float)
    t0 = times[0]
    gaps = np.diff(times)
    gaps = gaps[gaps > 0]
    period = gaps.min() if gaps.size else 0.0
    span = times[-1] + period - t0
    n_bins = int(math.floor(span / width + 1e-9))
    idx = np.floor((times - t0) / width + 1e-9).astype(np.int64)
    keep = idx < n_bins
    binned = np.bincount(idx[keep], weights=counts[keep], minlength=n_bins).astype(np.int64)
    starts = t0 + width * np.arange(n_bins)
    return BinnedStream(binned, starts, width, unit, int((~keep).sum()))


def ingest(path, binning=None):
    """Read a stream file and apply ``binning`` (a :class:`Binning` or None)."""
    times, counts = read_stream(path)
    if binning is None or binning.width is None:
        return bin_counts(times, counts)
    return bin_counts(times, counts, binning.width, binning.unit)


def sum_streams(streams):
    """Element-wise sum of binned count sequences, truncated to the shortest."""
    n = min(len(s) for s in streams)
    return np.sum([np.asarray(s)[:n] for s in streams], axis=0)
