import json

import numpy as np
import pytest

from uavsplit import checkpoint as ckpt_io
from uavsplit.checkpoint import FORMAT_VERSION, Checkpoint
from uavsplit.errors import CheckpointError, StorageError
from uavsplit.network import Role
from uavsplit.sim import SessionConfig, run_training_session


@pytest.fixture(scope="module")
def trained(small_data):
    res = run_training_session(SessionConfig(seed=2, epochs=2, p_es=0.3, p_ed=0.2, p_ds=0.1), small_data.train)
    steps = small_data.train.sequences().shape[1]
    return Checkpoint(res.network, res.optimizers, small_data.stats, steps, {"note": "unit"})


def test_round_trip_is_bitwise(trained, tmp_path):
    path = tmp_path / "c.json"
    ckpt_io.save(trained, path)
    back = ckpt_io.load(path)
    for name, arr in trained.network.params().items():
        assert back.network.params()[name].tobytes() == arr.tobytes()
    for role in Role:
        a, b = trained.optimizers[role], back.optimizers[role]
        assert a.t == b.t == 2
        for k in a.m:
            assert a.m[k].tobytes() == b.m[k].tobytes()
            assert a.v[k].tobytes() == b.v[k].tobytes()
    assert np.array_equal(back.normalizer.feature_min, trained.normalizer.feature_min)
    assert back.config == {"note": "unit"}


def test_save_load_save_identical_bytes(trained, tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    ckpt_io.save(trained, first)
    ckpt_io.save(ckpt_io.load(first), second)
    assert first.read_bytes() == second.read_bytes()


def test_dims_and_declared_shapes(trained):
    d = json.loads(ckpt_io.dumps(trained))
    assert d["dims"] == {"N": 1, "M": 10, "H": 10, "T": 27, "L": 6}
    assert d["params"]["edge.0.w_ih"]["shape"] == [40, 1]
    assert d["params"]["head.w"]["shape"] == [1, 10]
    assert len(d["params"]["server.2.w_hh"]["values"]) == 400
    assert set(d["adam"]) == {"edge", "drone", "server"}


def test_version_mismatch_rejected(trained):
    d = ckpt_io.to_dict(trained)
    d["format_version"] = FORMAT_VERSION + 1
    with pytest.raises(CheckpointError, match="format_version"):
        ckpt_io.from_dict(d)


def test_shape_mismatch_rejected(trained):
    d = ckpt_io.to_dict(trained)
    d["params"]["head.w"]["shape"] = [10, 1]
    with pytest.raises(CheckpointError, match="head.w"):
        ckpt_io.from_dict(d)


def test_missing_parameter_rejected(trained):
    d = ckpt_io.to_dict(trained)
    del d["params"]["drone.1.b_hh"]
    with pytest.raises(CheckpointError, match="drone.1.b_hh"):
        ckpt_io.from_dict(d)


def test_value_count_mismatch_rejected(trained):
    d = ckpt_io.to_dict(trained)
    d["params"]["head.b"]["values"] = [0.0, 1.0]
    with pytest.raises(CheckpointError, match="head.b"):
        ckpt_io.from_dict(d)


def test_missing_file_names_path(tmp_path):
    with pytest.raises(StorageError, match="nope.json"):
        ckpt_io.load(tmp_path / "nope.json")


def test_invalid_json_rejected(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(CheckpointError):
        ckpt_io.load(p)
