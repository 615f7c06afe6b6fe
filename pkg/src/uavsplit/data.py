"""Daily water-quality series: synthetic generator, CSV I/O, windowing, scaling.

The regression target is today's dissolved oxygen (DO). Each sample's
feature vector holds the previous ``lookback`` DO readings followed by
today's values of the seven other parameters (27 features at the default
lookback of 20).
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ContractViolation, ParseError, SchemaError, StorageError
from .numeric import DTYPE

TARGET = "dissolved_oxygen"
PARAMETERS = (
    "temperature",
    "ph",
    "conductivity",
    "dissolved_oxygen",
    "oxygen_saturation",
    "ammonium",
    "nitrite",
    "nitrate",
)
# Same order as PARAMETERS with the target removed.
OTHER_PARAMETERS = tuple(p for p in PARAMETERS if p != TARGET)
CSV_COLUMNS = ("date",) + PARAMETERS
DEFAULT_LOOKBACK = 20
LAYOUTS = ("scalar", "lagged")
DEFAULT_LAYOUT = "scalar"
START_DATE = dt.date(2013, 11, 1)
YEAR = 365.0


class DegenerateColumnError(ConfigurationError):
    pass


@dataclass
class RawSeries:
    dates: list[dt.date]
    values: np.ndarray  # (days, len(PARAMETERS)), columns in PARAMETERS order

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=DTYPE)
        if self.values.ndim != 2 or self.values.shape[1] != len(PARAMETERS):
            raise ContractViolation(f"series values must be (days, {len(PARAMETERS)}), got {self.values.shape}")
        if len(self.dates) != self.values.shape[0]:
            raise ContractViolation(f"{len(self.dates)} dates for {self.values.shape[0]} rows")
        if not np.all(np.isfinite(self.values)):
            raise ContractViolation("series contains non-finite values")

    @property
    def days(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, PARAMETERS.index(name)]


# --------------------------------------------------------------------------
# Synthetic generator
# --------------------------------------------------------------------------


def ar1(rng: np.random.Generator, n: int, phi: float, sigma: float) -> np.ndarray:
    """Stationary AR(1) path ``e_t = phi*e_{t-1} + sigma*eps_t``."""
    eps = rng.standard_normal(n)
    out = np.empty(n, dtype=DTYPE)
    out[0] = sigma * eps[0] / math.sqrt(1.0 - phi * phi)
    for t in range(1, n):
        out[t] = phi * out[t - 1] + sigma * eps[t]
    return out


def seasonal(t: np.ndarray, phase: float = 0.0) -> np.ndarray:
    return np.sin(2.0 * np.pi * t / YEAR + phase)


def do_mean(t: np.ndarray) -> np.ndarray:
    """Noise-free DO (mg/L) implied by the generator, temperature noise removed."""
    temp_dev = 8.0 * seasonal(t)
    return 8.0 + 2.0 * seasonal(t, np.pi) - 0.15 * temp_dev


def generate_synthetic(seed: int, n_days: int, noise: bool = True) -> RawSeries:
    """Seasonal-plus-AR(1) stand-in for a river monitoring station.

    ==================  =========================================================
    temperature (C)     15 + 8 s(t) + AR(0.8, 0.5)
    dissolved_oxygen    8 + 2 s(t+pi) - 0.15 (temp - 15) + AR(0.7, 0.3)
    ph                  7.9 + 0.12 (DO - 8) + 0.05 s(t) + AR(0.6, 0.05)
    conductivity        420 - 40 s(t) + AR(0.9, 15)
    oxygen_saturation   90 + 9 (DO - 8) + 0.8 (temp - 15) + AR(0.5, 2)
    ammonium            max(0.01, 0.15 + 0.08 s(t+pi) + AR(0.6, 0.03))
    nitrite             max(0.001, 0.03 + 0.01 s(t+pi/3) + AR(0.5, 0.004))
    nitrate             2 + 0.6 s(t+pi) + AR(0.8, 0.15)
    ==================  =========================================================

    ``s(t) = sin(2 pi t / 365)`` with ``t`` the day index from 0. pH and
    oxygen saturation are the two parameters linearly coupled to DO.
    ``noise=False`` zeroes every AR term.
    """
    if n_days < DEFAULT_LOOKBACK + 1:
        raise ConfigurationError(f"n_days must be at least {DEFAULT_LOOKBACK + 1}, got {n_days}")
    rng = np.random.default_rng(seed)
    t = np.arange(n_days, dtype=DTYPE)
    scale = 1.0 if noise else 0.0

    def noise_path(phi, sigma):
        # Always draw so that the stream layout does not depend on `noise`.
        return scale * ar1(rng, n_days, phi, sigma)

    temp = 15.0 + 8.0 * seasonal(t) + noise_path(0.8, 0.5)
    do = 8.0 + 2.0 * seasonal(t, np.pi) - 0.15 * (temp - 15.0) + noise_path(0.7, 0.3)
    ph = 7.9 + 0.12 * (do - 8.0) + 0.05 * seasonal(t) + noise_path(0.6, 0.05)
    cond = 420.0 - 40.0 * seasonal(t) + noise_path(0.9, 15.0)
    sat = 90.0 + 9.0 * (do - 8.0) + 0.8 * (temp - 15.0) + noise_path(0.5, 2.0)
    nh4 = np.maximum(0.01, 0.15 + 0.08 * seasonal(t, np.pi) + noise_path(0.6, 0.03))
    no2 = np.maximum(0.001, 0.03 + 0.01 * seasonal(t, np.pi / 3) + noise_path(0.5, 0.004))
    no3 = 2.0 + 0.6 * seasonal(t, np.pi) + noise_path(0.8, 0.15)

    columns = {
        "temperature": temp,
        "ph": ph,
        "conductivity": cond,
        "dissolved_oxygen": do,
        "oxygen_saturation": sat,
        "ammonium": nh4,
        "nitrite": no2,
        "nitrate": no3,
    }
    values = np.column_stack([columns[p] for p in PARAMETERS])
    dates = [START_DATE + dt.timedelta(days=i) for i in range(n_days)]
    return RawSeries(dates=dates, values=values)


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def write_csv(series: RawSeries, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for day, row in zip(series.dates, series.values):
                writer.writerow([day.isoformat()] + [repr(float(v)) for v in row])
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc.strerror or exc}") from exc


def ingest_csv(path) -> RawSeries:
    """Read a daily series. Columns may come in any order; extra columns are ignored."""
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc.strerror or exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: file is empty")
        header = [h.strip() for h in header]
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        idx = {c: header.index(c) for c in CSV_COLUMNS}
        dates, rows = [], []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise ParseError(f"{path}: row {row_no}: expected {len(header)} cells, got {len(row)}")
            try:
                dates.append(dt.date.fromisoformat(row[idx["date"]].strip()))
            except ValueError:
                raise ParseError(f"{path}: row {row_no}, column 'date': bad date {row[idx['date']]!r}") from None
            vals = []
            for name in PARAMETERS:
                cell = row[idx[name]].strip()
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise ParseError(f"{path}: row {row_no}, column {name!r}: cannot parse {cell!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return RawSeries(dates=dates, values=np.array(rows, dtype=DTYPE))


# --------------------------------------------------------------------------
# Samples
# --------------------------------------------------------------------------


@dataclass
class Sample:
    features: np.ndarray
    label: float
    day: int


@dataclass
class SampleSet:
    """Feature matrix, labels, and the series day index each row belongs to."""

    features: np.ndarray  # (n, lookback + 7)
    labels: np.ndarray  # (n,)
    days: np.ndarray  # (n,) int
    lookback: int = DEFAULT_LOOKBACK
    layout: str = DEFAULT_LAYOUT  # how sequences() arranges the features, see there

    def __len__(self) -> int:
        return self.labels.shape[0]

    def __getitem__(self, i) -> Sample | "SampleSet":
        if isinstance(i, (int, np.integer)):
            return Sample(self.features[i], float(self.labels[i]), int(self.days[i]))
        return SampleSet(self.features[i], self.labels[i], self.days[i], self.lookback, self.layout)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def sequences(self, layout: str | None = None) -> np.ndarray:
        """Model input built from the feature matrix.

        ``"lagged"``: shape ``(n, lookback, 1 + 7)``; step ``k`` carries the
        ``k``-th lagged DO value together with the current-day readings of
        the other seven parameters.
        ``"scalar"``: shape ``(n, lookback + 7, 1)``; every feature is one
        timestep of a univariate sequence.
        """
        layout = layout or self.layout
        if layout == "scalar":
            return np.ascontiguousarray(self.features[:, :, None])
        if layout != "lagged":
            raise ConfigurationError(f"unknown sequence layout {layout!r}, expected one of {LAYOUTS}")
        lags = self.features[:, : self.lookback]
        current = self.features[:, self.lookback :]
        n = len(self)
        seq = np.empty((n, self.lookback, 1 + current.shape[1]), dtype=DTYPE)
        seq[:, :, 0] = lags
        seq[:, :, 1:] = current[:, None, :]
        return seq


def make_windows(series: RawSeries, lookback: int = DEFAULT_LOOKBACK) -> SampleSet:
    if lookback < 1:
        raise ConfigurationError(f"lookback must be positive, got {lookback}")
    if series.days <= lookback:
        raise ConfigurationError(f"series has {series.days} days, need more than lookback={lookback}")
    do = series.column(TARGET)
    others = np.column_stack([series.column(p) for p in OTHER_PARAMETERS])
    days = np.arange(lookback, series.days)
    lags = np.lib.stride_tricks.sliding_window_view(do, lookback)[: len(days)]
    features = np.hstack([lags, others[days]])
    return SampleSet(features=features.astype(DTYPE), labels=do[days].copy(), days=days, lookback=lookback)


def chrono_split(samples: SampleSet, train_fraction: float = 0.7) -> tuple[SampleSet, SampleSet]:
    """Leading ``floor(train_fraction * n)`` samples train, the rest test. No shuffling."""
    n = len(samples)
    if n < 2:
        raise ContractViolation(f"need at least 2 samples to split, got {n}")
    if not 0.0 < train_fraction < 1.0:
        raise ConfigurationError(f"train_fraction must be in (0, 1), got {train_fraction}")
    cut = math.floor(train_fraction * n)
    return samples[:cut], samples[cut:]


# --------------------------------------------------------------------------
# Scaling to [-1, 1]
# --------------------------------------------------------------------------


@dataclass
class NormStats:
    feature_min: np.ndarray
    feature_max: np.ndarray
    label_min: float
    label_max: float

    def to_dict(self) -> dict:
        return {
            "feature_min": self.feature_min.tolist(),
            "feature_max": self.feature_max.tolist(),
            "label_min": self.label_min,
            "label_max": self.label_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(
            feature_min=np.array(d["feature_min"], dtype=DTYPE),
            feature_max=np.array(d["feature_max"], dtype=DTYPE),
            label_min=float(d["label_min"]),
            label_max=float(d["label_max"]),
        )


def _scale(v, lo, hi):
    return 2.0 * (v - lo) / (hi - lo) - 1.0


def _unscale(v, lo, hi):
    return (np.asarray(v) + 1.0) * (hi - lo) / 2.0 + lo


def fit_normalizer(samples: SampleSet) -> NormStats:
    if len(samples) == 0:
        raise ContractViolation("cannot fit a normalizer on an empty split")
    fmin = samples.features.min(axis=0)
    fmax = samples.features.max(axis=0)
    bad = np.flatnonzero(fmax <= fmin)
    if bad.size:
        raise DegenerateColumnError(f"feature column(s) {bad.tolist()} are constant on the fitting split")
    lmin, lmax = float(samples.labels.min()), float(samples.labels.max())
    if lmax <= lmin:
        raise DegenerateColumnError("label column is constant on the fitting split")
    return NormStats(fmin, fmax, lmin, lmax)


def apply_normalizer(stats: NormStats, samples: SampleSet) -> SampleSet:
    """Map into [-1, 1] with the fitted extremes. Values outside are not clipped."""
    return SampleSet(
        features=_scale(samples.features, stats.feature_min, stats.feature_max),
        labels=_scale(samples.labels, stats.label_min, stats.label_max),
        days=samples.days,
        lookback=samples.lookback,
        layout=samples.layout,
    )


def denormalize_labels(stats: NormStats, labels) -> np.ndarray:
    return _unscale(labels, stats.label_min, stats.label_max)


def denormalize_features(stats: NormStats, features) -> np.ndarray:
    return _unscale(features, stats.feature_min, stats.feature_max)


@dataclass
class PreparedData:
    train: SampleSet
    test: SampleSet
    stats: NormStats


def prepare(
    series: RawSeries, lookback: int = DEFAULT_LOOKBACK, train_fraction: float = 0.7, layout: str = DEFAULT_LAYOUT
) -> PreparedData:
    """Window, split chronologically, and scale with train-split statistics."""
    windows = make_windows(series, lookback)
    windows.layout = layout
    train, test = chrono_split(windows, train_fraction)
    stats = fit_normalizer(train)
    return PreparedData(apply_normalizer(stats, train), apply_normalizer(stats, test), stats)
