import json

import pytest

from uavsplit import checkpoint as ckpt_io
from uavsplit.cli import main
from uavsplit.data import ingest_csv
from uavsplit.network import SplitNetwork
from uavsplit.sim import session_streams

TINY = {
    "scenario": "B",
    "epochs": 1,
    "seeds": [0, 1],
    "grid": [0.3, 0.5, 0.9],
    "repeats": 2,
    "dataset": {"kind": "synthetic", "n_days": 120, "seed": 5},
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(TINY))
    return p


def test_gen_data_writes_rows_and_is_repeatable(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["gen-data", "--days", "300", "--seed", "7", "--out", str(a)]) == 0
    assert main(["gen-data", "--days", "300", "--seed", "7", "--out", str(b)]) == 0
    lines = a.read_text().splitlines()
    assert len(lines) == 301 and lines[0].startswith("date,")
    assert a.read_bytes() == b.read_bytes()
    assert ingest_csv(a).days == 300


def test_gen_data_default_scale(tmp_path):
    out = tmp_path / "d.csv"
    assert main(["gen-data", "--seed", "7", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 3265


def test_gen_data_too_short_is_config_error(tmp_path, capsys):
    assert main(["gen-data", "--days", "10", "--out", str(tmp_path / "x.csv")]) == 2
    assert "n_days" in capsys.readouterr().err


def test_unwritable_output_is_io_error(tmp_path, capsys):
    target = tmp_path / "missing_dir" / "x.csv"
    assert main(["gen-data", "--days", "50", "--out", str(target)]) == 3
    assert str(target) in capsys.readouterr().err


def test_unknown_command_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["bake"])
    assert exc.value.code == 2


def test_bad_config_file_is_config_error(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"scenario": "Z"}')
    assert main(["train", "--config", str(p), "--out", str(tmp_path / "c.ckpt")]) == 2
    p.write_text("{oops")
    assert main(["train", "--config", str(p), "--out", str(tmp_path / "c.ckpt")]) == 2


def test_missing_config_file_is_io_error(tmp_path):
    assert main(["train", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "c")]) == 3


def test_train_echoes_default_hyperparameters(tmp_path, cfg_path):
    out = tmp_path / "ck.json"
    assert main(["train", "--config", str(cfg_path), "--seed", "3", "--out", str(out)]) == 0
    echo = json.loads(out.read_text())["config"]
    s = echo["session"]
    assert (s["lr"], s["beta1"], s["beta2"], s["eps"], s["batch_size"], s["hidden"]) == (
        0.01, 0.9, 0.999, 1e-8, 64, 10
    )
    assert (s["p_es"], s["p_ed"], s["p_ds"]) == (0.5, 0.1, 0.05)
    assert echo["seed"] == 3
    log = (tmp_path / "ck_log.csv").read_text().splitlines()
    assert log[0] == "epoch,train_loss" and len(log) == 2


def test_train_zero_epochs_equals_initialisation(tmp_path, cfg_path):
    out = tmp_path / "ck.json"
    assert main(["train", "--config", str(cfg_path), "--epochs", "0", "--seed", "4", "--out", str(out)]) == 0
    ckpt = ckpt_io.load(out)
    init = SplitNetwork.init(int(session_streams(4)["init"].integers(2**63)), 1, 10)
    for name, arr in init.params().items():
        assert ckpt.network.params()[name].tobytes() == arr.tobytes()


def test_train_from_csv(tmp_path):
    data = tmp_path / "d.csv"
    main(["gen-data", "--days", "100", "--seed", "2", "--out", str(data)])
    out = tmp_path / "ck.json"
    assert main(["train", "--data", str(data), "--epochs", "1", "--out", str(out)]) == 0
    assert ckpt_io.load(out).config["experiment"]["dataset"]["path"] == str(data)


def test_emitted_checkpoint_round_trips(tmp_path, cfg_path):
    out = tmp_path / "ck.json"
    main(["train", "--config", str(cfg_path), "--out", str(out)])
    again = tmp_path / "again.json"
    ckpt_io.save(ckpt_io.load(out), again)
    assert out.read_bytes() == again.read_bytes()


def test_sweep_row_count_and_determinism(tmp_path, cfg_path, capsys):
    runs = []
    for tag in ("one", "two"):
        out = tmp_path / f"{tag}.csv"
        ck = tmp_path / f"ck_{tag}"
        assert main(["sweep", "--config", str(cfg_path), "--checkpoints", str(ck), "--train-first", "--out", str(out)]) == 0
        runs.append(out)
    rows = runs[0].read_text().splitlines()
    assert rows[0] == "scenario,strategy,p1,p2,seed,mse"
    assert len(rows) - 1 == 3 * 4 * 2
    assert runs[0].read_bytes() == runs[1].read_bytes()
    means = (tmp_path / "one_mean.csv").read_text().splitlines()
    assert len(means) - 1 == 3 * 4
    assert any(r.startswith("B,direct_full,0.3,0.0,") for r in rows)


def test_sweep_missing_checkpoint_names_path(tmp_path, cfg_path, capsys):
    code = main(["sweep", "--config", str(cfg_path), "--checkpoints", str(tmp_path), "--out", str(tmp_path / "m.csv")])
    assert code == 3
    assert str(tmp_path / "scenario_B_seed_0.json") in capsys.readouterr().err


@pytest.fixture
def trained_ckpt(tmp_path, cfg_path):
    out = tmp_path / "ck.json"
    main(["train", "--config", str(cfg_path), "--out", str(out)])
    return out


def test_select_huge_tolerance_picks_cheapest(trained_ckpt, tmp_path, capsys):
    report = tmp_path / "r.json"
    code = main(["select", "--checkpoint", str(trained_ckpt), "--tolerance", "1e9", "--repeats", "2", "--out", str(report)])
    assert code == 0
    assert capsys.readouterr().out.strip() == "direct_fc"
    d = json.loads(report.read_text())
    assert d["choice"] == "direct_fc" and d["tolerance"] == 1e9
    assert set(d["mse"]) == set(d["cost_rank"])
    assert d["estimates"] == {"es": 0.5, "ed": 0.1, "ds": 0.05}


def test_select_missing_probe_names_path(trained_ckpt, tmp_path, capsys):
    probe = tmp_path / "probe.csv"
    assert main(["select", "--checkpoint", str(trained_ckpt), "--probe", str(probe)]) == 3
    assert str(probe) in capsys.readouterr().err


def test_select_with_probe_file(trained_ckpt, tmp_path, capsys):
    probe = tmp_path / "probe.csv"
    main(["gen-data", "--days", "60", "--seed", "11", "--out", str(probe)])
    capsys.readouterr()
    assert main(["select", "--checkpoint", str(trained_ckpt), "--probe", str(probe), "--repeats", "2"]) == 0
    assert capsys.readouterr().out.strip() in {"direct_full", "direct_fc", "relay_full", "relay_fc"}


def test_select_p1_without_scenario_is_config_error(trained_ckpt):
    assert main(["select", "--checkpoint", str(trained_ckpt), "--p1", "0.5"]) == 2


def test_eval_prints_each_strategy(trained_ckpt, tmp_path, capsys):
    report = tmp_path / "e.json"
    code = main(["eval", "--checkpoint", str(trained_ckpt), "--scenario", "B", "--p1", "0.6", "--repeats", "2", "--out", str(report)])
    assert code == 0
    lines = capsys.readouterr().out.split("\n")
    assert [l.split()[0] for l in lines if l] == ["direct_full", "direct_fc", "relay_full", "relay_fc"]
    d = json.loads(report.read_text())
    assert d["estimates"] == {"es": 0.6, "ed": 0.3, "ds": 0.05}


def test_eval_corrupt_checkpoint_is_config_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"format_version": 99}))
    assert main(["eval", "--checkpoint", str(bad)]) == 2
