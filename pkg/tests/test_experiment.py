import itertools

import pytest

from uavsplit import experiment as ex
from uavsplit.channel import Link
from uavsplit.errors import ConfigurationError, StorageError
from uavsplit.network import Strategy


def tiny(**kw):
    base = dict(
        scenario="A",
        epochs=1,
        seeds=(0, 1),
        grid=(0.3, 0.6),
        repeats=2,
        dataset=ex.DatasetSource(n_days=120, seed=5),
    )
    base.update(kw)
    return ex.ExperimentConfig(**base)


def test_default_grid_and_secondary_rate():
    assert ex.DEFAULT_GRID == (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    assert [ex.secondary_prob(p) for p in ex.DEFAULT_GRID] == [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6]


def test_grid_point_below_gap_rejected():
    with pytest.raises(ConfigurationError, match="p2"):
        tiny(grid=(0.2,)).validate()


@pytest.mark.parametrize(
    "scenario, train, test",
    [
        ("A", (0.1, 0.5, 0.05), (0.4, 0.7, 0.05)),
        ("B", (0.5, 0.1, 0.05), (0.7, 0.4, 0.05)),
    ],
)
def test_scenario_channel_assignment(scenario, train, test):
    keys = (Link.EDGE_SERVER, Link.EDGE_DRONE, Link.DRONE_SERVER)
    tr = ex.scenario_train_probs(scenario, 0.05)
    te = ex.scenario_test_probs(scenario, 0.7, 0.05)
    assert tuple(tr[k] for k in keys) == train
    assert tuple(te[k] for k in keys) == test


def test_default_session_hyperparameters():
    s = ex.ExperimentConfig().session(0).to_dict()
    assert (s["lr"], s["beta1"], s["beta2"], s["eps"], s["batch_size"], s["hidden"]) == (
        0.01, 0.9, 0.999, 1e-8, 64, 10
    )
    assert (s["p_ed"], s["p_es"], s["p_ds"]) == (0.5, 0.1, 0.05)


def test_config_dict_round_trip():
    cfg = tiny(scenario="B", layout="lagged", rescale=True)
    assert ex.ExperimentConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize(
    "d",
    [{"bogus": 1}, {"dataset": {"kind": "synthetic", "colour": 2}}, {"dataset": 3}, {"epochs": "many"}, {"lr": "fast"}, {"grid": 0.5}, {"rescale": "yes"}],
)
def test_bad_config_dict_rejected(d):
    with pytest.raises(ConfigurationError):
        ex.ExperimentConfig.from_dict(d).validate()


@pytest.mark.parametrize(
    "kw",
    [
        dict(scenario="C"),
        dict(seeds=()),
        dict(seeds=(1, 1)),
        dict(grid=()),
        dict(grid=(0.5, 0.5)),
        dict(layout="diagonal"),
        dict(repeats=0),
        dict(tolerance=-1.0),
        dict(dataset=ex.DatasetSource(kind="csv")),
        dict(dataset=ex.DatasetSource(kind="parquet")),
    ],
)
def test_invalid_experiment_config(kw):
    with pytest.raises(ConfigurationError):
        tiny(**kw).validate()


def test_sweep_completeness_and_order(tmp_path):
    cfg = tiny()
    records = ex.run_sweep(cfg, tmp_path, train_first=True)
    assert len(records) == len(cfg.grid) * 4 * len(cfg.seeds)
    keys = [(r.scenario, r.strategy, r.p1, r.seed) for r in records]
    assert len(set(keys)) == len(keys)
    order = list(Strategy)
    assert keys == sorted(keys, key=lambda k: (order.index(k[1]), k[2], k[3]))
    assert all(r.mse >= 0 for r in records)
    assert {r.p2 for r in records if r.p1 == 0.3} == {0.0}
    assert sorted(p.name for p in tmp_path.iterdir()) == ["scenario_A_seed_0.json", "scenario_A_seed_1.json"]


def test_sweep_reuses_checkpoints(tmp_path):
    cfg = tiny(seeds=(3,))
    first = ex.metrics_csv(ex.run_sweep(cfg, tmp_path, train_first=True))
    second = ex.metrics_csv(ex.run_sweep(cfg, tmp_path, train_first=False))
    assert first == second


def test_sweep_without_checkpoint_names_expected_path(tmp_path):
    with pytest.raises(StorageError, match="scenario_A_seed_0.json"):
        ex.run_sweep(tiny(), tmp_path)


def test_mean_table_averages_over_seeds():
    recs = [
        ex.MetricRecord("A", Strategy.DIRECT_FC, 0.5, 0.2, seed, mse)
        for seed, mse in zip(range(3), (1.0, 2.0, 6.0))
    ]
    assert ex.mean_table(recs) == {("A", Strategy.DIRECT_FC, 0.5): (3.0, 3)}
    lines = ex.means_csv(recs).splitlines()
    assert lines == ["scenario,strategy,p1,p2,n_seeds,mse_mean", "A,direct_fc,0.5,0.2,3,3.0"]


def test_means_path_sits_next_to_metrics(tmp_path):
    assert ex.means_path(tmp_path / "m.csv") == tmp_path / "m_mean.csv"


def test_eval_seed_distinct_per_point():
    seeds = {ex.eval_seed(s, i) for s, i in itertools.product(range(5), range(7))}
    assert len(seeds) == 35


def test_select_report_lists_every_strategy(tmp_path):
    cfg = tiny(seeds=(0,))
    out = ex.train(cfg, 0)
    series = cfg.dataset.load()
    probe = ex.held_out(series, out.checkpoint)
    rep = ex.select(out.checkpoint, probe, ex.scenario_train_probs("B", 0.05), tolerance=1e9, repeats=2)
    assert rep.choice is Strategy.DIRECT_FC
    d = rep.to_dict()
    assert set(d["mse"]) == set(d["cost_rank"]) == {s.value for s in Strategy}
    assert d["cost_rank"] == {"direct_fc": 0, "relay_fc": 1, "direct_full": 2, "relay_full": 3}
    assert d["tolerance"] == 1e9 and d["choice"] == "direct_fc"


def test_rescale_flag_reaches_training_and_evaluation(tmp_path):
    for name in ("plain", "scaled"):
        (tmp_path / name).mkdir()
    plain = ex.run_sweep(tiny(seeds=(0,), grid=(0.6,)), tmp_path / "plain", train_first=True)
    scaled = ex.run_sweep(
        tiny(seeds=(0,), grid=(0.6,), rescale=True), tmp_path / "scaled", train_first=True
    )
    ckpt = ex.ckpt_io.load(ex.checkpoint_path(tmp_path / "scaled", "A", 0))
    assert ex.trained_with_rescale(ckpt)
    assert ckpt.config["session"]["rescale"] is True
    assert [r.mse for r in plain] != [r.mse for r in scaled]
