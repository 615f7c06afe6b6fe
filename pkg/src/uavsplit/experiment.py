"""Two-scenario experiment driver: train, sweep test erasure rates, select.

Scenario A degrades the edge-drone link during training, scenario B the
edge-server link. At test time the degraded link gets ``p1`` and the other
edge link gets ``p2 = p1 - 0.3``; the drone-server link stays at ``p_ds``.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path as FsPath
from typing import Callable, Iterable, Mapping

import numpy as np

from . import checkpoint as ckpt_io
from .channel import Link
from .checkpoint import Checkpoint
from .data import (
    DEFAULT_LAYOUT,
    DEFAULT_LOOKBACK,
    LAYOUTS,
    RawSeries,
    SampleSet,
    apply_normalizer,
    chrono_split,
    generate_synthetic,
    ingest_csv,
    make_windows,
    prepare,
)
from .errors import ConfigurationError, StorageError
from .layers import AdamHyper
from .network import CostModel, Strategy
from .sim import (
    DEFAULT_REPEATS,
    DEFAULT_TOLERANCE,
    SessionConfig,
    choose_strategy,
    evaluate,
    run_training_session,
    score_strategies,
)

log = logging.getLogger(__name__)

SCENARIOS = ("A", "B")
GAP = 0.3
DEFAULT_GRID = tuple(round(0.3 + 0.1 * i, 10) for i in range(7))
METRIC_COLUMNS = ("scenario", "strategy", "p1", "p2", "seed", "mse")
MEAN_COLUMNS = ("scenario", "strategy", "p1", "p2", "n_seeds", "mse_mean")

# (p_es, p_ed) used while training
TRAIN_PROBS = {"A": (0.1, 0.5), "B": (0.5, 0.1)}


def secondary_prob(p1: float) -> float:
    p2 = round(p1 - GAP, 10)
    if p2 < 0:
        raise ConfigurationError(f"p1={p1} gives p2=p1-{GAP} < 0")
    return p2


def scenario_train_probs(scenario: str, p_ds: float) -> dict[Link, float]:
    p_es, p_ed = TRAIN_PROBS[check_scenario(scenario)]
    return {Link.EDGE_SERVER: p_es, Link.EDGE_DRONE: p_ed, Link.DRONE_SERVER: p_ds}


def scenario_test_probs(scenario: str, p1: float, p_ds: float) -> dict[Link, float]:
    """Link probabilities at one sweep point: ``p1`` on the link degraded in training."""
    p2 = secondary_prob(p1)
    if check_scenario(scenario) == "A":
        return {Link.EDGE_DRONE: p1, Link.EDGE_SERVER: p2, Link.DRONE_SERVER: p_ds}
    return {Link.EDGE_SERVER: p1, Link.EDGE_DRONE: p2, Link.DRONE_SERVER: p_ds}


def check_scenario(scenario: str) -> str:
    if scenario not in SCENARIOS:
        raise ConfigurationError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
    return scenario


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------


@dataclass
class DatasetSource:
    kind: str = "synthetic"  # "synthetic" or "csv"
    n_days: int = 3264
    seed: int = 7
    path: str | None = None

    def validate(self) -> None:
        if self.kind == "csv":
            if not self.path:
                raise ConfigurationError("csv dataset needs a path")
        elif self.kind == "synthetic":
            if self.n_days <= DEFAULT_LOOKBACK:
                raise ConfigurationError(f"n_days must exceed {DEFAULT_LOOKBACK}, got {self.n_days}")
        else:
            raise ConfigurationError(f"dataset kind must be 'synthetic' or 'csv', got {self.kind!r}")

    def load(self) -> RawSeries:
        self.validate()
        if self.kind == "csv":
            return ingest_csv(self.path)
        return generate_synthetic(self.seed, self.n_days)


@dataclass
class ExperimentConfig:
    scenario: str = "A"
    grid: tuple[float, ...] = DEFAULT_GRID
    seeds: tuple[int, ...] = (0,)
    dataset: DatasetSource = field(default_factory=DatasetSource)
    epochs: int = 200
    p_ds: float = 0.05
    batch_size: int = 64
    hidden: int = 10
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    layout: str = DEFAULT_LAYOUT
    rescale: bool = False
    repeats: int = DEFAULT_REPEATS
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        self.grid = tuple(float(p) for p in self.grid)
        self.seeds = tuple(int(s) for s in self.seeds)
        for name in ("epochs", "batch_size", "hidden", "repeats"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ConfigurationError(f"{name} must be an integer, got {v!r}")
        for name in ("p_ds", "lr", "beta1", "beta2", "eps", "tolerance"):
            setattr(self, name, float(getattr(self, name)))
        if not isinstance(self.rescale, bool):
            raise ConfigurationError(f"rescale must be true or false, got {self.rescale!r}")

    def validate(self) -> None:
        check_scenario(self.scenario)
        if not self.grid:
            raise ConfigurationError("grid is empty")
        for p1 in self.grid:
            if not 0.0 <= p1 <= 1.0:
                raise ConfigurationError(f"grid point {p1} outside [0, 1]")
            secondary_prob(p1)
        if len(set(self.grid)) != len(self.grid):
            raise ConfigurationError(f"grid has duplicate points {self.grid}")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError(f"seeds must be non-empty and distinct, got {self.seeds}")
        if any(s < 0 for s in self.seeds):
            raise ConfigurationError(f"seeds must be non-negative, got {self.seeds}")
        if self.layout not in LAYOUTS:
            raise ConfigurationError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        if self.repeats < 1:
            raise ConfigurationError(f"repeats must be >= 1, got {self.repeats}")
        if self.tolerance < 0:
            raise ConfigurationError(f"tolerance must be >= 0, got {self.tolerance}")
        self.dataset.validate()
        self.session(self.seeds[0]).validate()

    def session(self, seed: int) -> SessionConfig:
        probs = scenario_train_probs(self.scenario, self.p_ds)
        return SessionConfig(
            seed=seed,
            epochs=self.epochs,
            batch_size=self.batch_size,
            p_es=probs[Link.EDGE_SERVER],
            p_ed=probs[Link.EDGE_DRONE],
            p_ds=probs[Link.DRONE_SERVER],
            hyper=AdamHyper(self.lr, self.beta1, self.beta2, self.eps),
            hidden=self.hidden,
            rescale=self.rescale,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigurationError(f"unknown config key(s) {unknown}")
        if "dataset" in d:
            ds = d["dataset"]
            if not isinstance(ds, Mapping):
                raise ConfigurationError("dataset must be an object")
            ds_known = {f.name for f in fields(DatasetSource)}
            bad = sorted(set(ds) - ds_known)
            if bad:
                raise ConfigurationError(f"unknown dataset key(s) {bad}")
            d["dataset"] = DatasetSource(**ds)
        try:
            cfg = cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad config value: {exc}") from None
        return cfg

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


# --------------------------------------------------------------------------
# Data
# --------------------------------------------------------------------------


def windows_for(series: RawSeries, layout: str) -> SampleSet:
    w = make_windows(series, DEFAULT_LOOKBACK)
    w.layout = layout
    return w


def held_out(series: RawSeries, ckpt: Checkpoint) -> SampleSet:
    """Held-out samples scaled with the statistics stored in the checkpoint."""
    _, test = chrono_split(windows_for(series, ckpt.config.get("layout", DEFAULT_LAYOUT)))
    return apply_normalizer(ckpt.normalizer, test)


def trained_with_rescale(ckpt: Checkpoint) -> bool:
    """Whether the checkpoint's links scaled surviving symbols; evaluation must match."""
    return bool(ckpt.config.get("experiment", {}).get("rescale", False))


def probe_samples(series: RawSeries, ckpt: Checkpoint) -> SampleSet:
    """Every window of a probe series, scaled with the checkpoint's statistics."""
    return apply_normalizer(ckpt.normalizer, windows_for(series, ckpt.config.get("layout", DEFAULT_LAYOUT)))


# --------------------------------------------------------------------------
# Commands, minus argument parsing
# --------------------------------------------------------------------------


@dataclass
class TrainOutput:
    checkpoint: Checkpoint
    losses: list[float]


def train(config: ExperimentConfig, seed: int, series: RawSeries | None = None, progress=None) -> TrainOutput:
    config.validate()
    series = series if series is not None else config.dataset.load()
    data = prepare(series, DEFAULT_LOOKBACK, layout=config.layout)
    session = config.session(seed)
    result = run_training_session(session, data.train, progress)
    echo = {"experiment": config.to_dict(), "session": session.to_dict(), "layout": config.layout, "seed": seed}
    ckpt = Checkpoint(
        network=result.network,
        optimizers=result.optimizers,
        normalizer=data.stats,
        steps=data.train.sequences().shape[1],
        config=echo,
    )
    return TrainOutput(ckpt, [e.train_loss for e in result.log])


def write_loss_log(losses: Iterable[float], path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("epoch", "train_loss"))
    for i, loss in enumerate(losses, start=1):
        w.writerow((i, repr(float(loss))))
    write_text(path, buf.getvalue())


def write_text(path, text: str) -> None:
    path = FsPath(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc.strerror or exc}") from exc


def checkpoint_path(directory, scenario: str, seed: int) -> FsPath:
    return FsPath(directory) / f"scenario_{scenario}_seed_{seed}.json"


def eval_seed(seed: int, grid_index: int) -> int:
    """Mask stream for one (training seed, grid point); shared by all strategies."""
    return int(np.random.SeedSequence([seed, grid_index]).generate_state(1)[0])


@dataclass(frozen=True)
class MetricRecord:
    scenario: str
    strategy: Strategy
    p1: float
    p2: float
    seed: int
    mse: float

    def row(self) -> tuple:
        return (self.scenario, self.strategy.value, repr(self.p1), repr(self.p2), self.seed, repr(self.mse))


def sweep_checkpoint(
    config: ExperimentConfig, ckpt: Checkpoint, test: SampleSet, seed: int
) -> list[MetricRecord]:
    records = []
    for i, p1 in enumerate(config.grid):
        probs = scenario_test_probs(config.scenario, p1, config.p_ds)
        p2 = secondary_prob(p1)
        for strategy in Strategy:
            mse = evaluate(ckpt.network, test, strategy, probs, eval_seed(seed, i), config.repeats, config.rescale)
            records.append(MetricRecord(config.scenario, strategy, p1, p2, seed, mse))
    return records


def run_sweep(
    config: ExperimentConfig,
    checkpoint_dir,
    train_first: bool = False,
    on_trained: Callable[[FsPath, TrainOutput], None] | None = None,
) -> list[MetricRecord]:
    """Evaluate every (seed, grid point, strategy); rows sorted by (strategy, p1, seed)."""
    config.validate()
    series = config.dataset.load()
    records: list[MetricRecord] = []
    for seed in config.seeds:
        path = checkpoint_path(checkpoint_dir, config.scenario, seed)
        if not path.exists():
            if not train_first:
                raise StorageError(
                    f"missing checkpoint {path}; run `train --seed {seed} --out {path}` "
                    "or pass --train-first"
                )
            out = train(config, seed, series)
            ckpt_io.save(out.checkpoint, path)
            if on_trained is not None:
                on_trained(path, out)
        ckpt = ckpt_io.load(path)
        records.extend(sweep_checkpoint(config, ckpt, held_out(series, ckpt), seed))
    order = list(Strategy)
    records.sort(key=lambda r: (order.index(r.strategy), r.p1, r.seed))
    return records


def metrics_csv(records: Iterable[MetricRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def mean_table(records: Iterable[MetricRecord]) -> dict[tuple[str, Strategy, float], tuple[float, int]]:
    """(scenario, strategy, p1) -> (mean MSE over seeds, seed count)."""
    groups: dict[tuple[str, Strategy, float], list[float]] = {}
    for r in records:
        groups.setdefault((r.scenario, r.strategy, r.p1), []).append(r.mse)
    return {k: (float(np.mean(v)), len(v)) for k, v in groups.items()}


def means_csv(records: list[MetricRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MEAN_COLUMNS)
    for (scenario, strategy, p1), (mean, n) in mean_table(records).items():
        w.writerow((scenario, strategy.value, repr(p1), repr(secondary_prob(p1)), n, repr(mean)))
    return buf.getvalue()


def means_path(metrics_path) -> FsPath:
    p = FsPath(metrics_path)
    return p.with_name(f"{p.stem}_mean{p.suffix or '.csv'}")


@dataclass
class SelectionReport:
    estimates: dict[Link, float]
    mses: dict[Strategy, float]
    cost_ranks: dict[Strategy, int]
    tolerance: float
    choice: Strategy

    def to_dict(self) -> dict:
        return {
            "estimates": {l.value: p for l, p in self.estimates.items()},
            "mse": {s.value: m for s, m in self.mses.items()},
            "cost_rank": {s.value: r for s, r in self.cost_ranks.items()},
            "tolerance": self.tolerance,
            "choice": self.choice.value,
        }


def select(
    ckpt: Checkpoint,
    probe: SampleSet,
    estimates: Mapping[Link, float],
    tolerance: float = DEFAULT_TOLERANCE,
    seed: int = 0,
    repeats: int = DEFAULT_REPEATS,
) -> SelectionReport:
    """Score all strategies on the probe and pick the cheapest near-best one."""
    if len(probe) == 0:
        raise ConfigurationError("probe set is empty")
    mses = score_strategies(ckpt.network, probe, estimates, seed, repeats, trained_with_rescale(ckpt))
    ranks = CostModel.for_network(ckpt.network, ckpt.steps).ranks()
    choice = choose_strategy(mses, ranks, tolerance)
    return SelectionReport(dict(estimates), mses, ranks, tolerance, choice)
