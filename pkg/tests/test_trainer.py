import json

import numpy as np
import pytest

from hamr import weightnet
from hamr.errors import DivergenceError
from hamr.harness.artifact import SCHEMA_VERSION, RunArtifact
from hamr.harness.config import RunConfig
from hamr.harness.evaluate import evaluate
from hamr.harness.generate import generate_longtail, generate_sequences
from hamr.harness.trainer import rng_streams, train
from hamr.sampler import draw_batch, uniform_distribution


@pytest.fixture(scope="module")
def small():
    return generate_longtail(4, 6.0, 300, 4, 3.0, seed=2)


def cfg(**kw):
    base = dict(epochs=2, batch_size=16, learning_rate=0.01, wnet_lr=1.0, knn_k=5, seed=1)
    base.update(kw)
    return RunConfig(**base)


def test_zero_epochs_records_initial_model(small):
    art = train(cfg(method="plain", epochs=0), small)
    assert art.history == []
    assert set(art.final) == {"valid", "test"}
    init = evaluate(art, small, "test")
    assert art.final["test"]["f1"]["macro_f1"] == init.f1.macro_f1


def test_determinism_and_seed_sensitivity(small):
    a = train(cfg(), small).comparable()
    b = train(cfg(), small).comparable()
    assert json.dumps(a) == json.dumps(b)
    c = train(cfg(seed=2), small).comparable()
    assert c["model"]["flat"] != a["model"]["flat"]


@pytest.mark.parametrize("method", ["plain", "focal", "dice", "icf", "en"])
def test_baselines_never_build_weight_net(small, monkeypatch, method):
    def forbidden(*a, **k):
        raise AssertionError("weight net constructed for a baseline")

    monkeypatch.setattr(weightnet.WeightNetParams, "init", forbidden)
    art = train(cfg(method=method), small)
    assert art.weight_net is None and art.hardness is None
    assert len(art.history) == 2 and np.isfinite(art.history[-1]["train_loss"])


def test_frozen_hardness_limit_matches_uniform_batches(small):
    c = cfg(gamma_ema=1.0, knn_lambda=0.0, hardness_alpha=1e-9, verbose_trace=True)
    art = train(c, small)
    assert np.all(np.array(art.hardness["h"]) == 1.0)
    rng = rng_streams(c.seed)["sampling"]
    n_train = small.split_ids("train").size
    for rec in art.trace:
        expected = draw_batch(uniform_distribution(n_train), c.batch_size, rng)
        assert rec["batch_ids"] == expected.tolist()
    plain = train(cfg(method="plain"), small)
    assert plain.model.flat.tolist() != art.model.flat.tolist()


def test_trace_order_every_step(small):
    art = train(cfg(verbose_trace=True), small)
    steps = 2 * int(np.ceil(small.split_ids("train").size / 16))
    assert len(art.trace) == steps
    for rec in art.trace:
        assert rec["events"] == ["pre_weights", "inner_step", "meta_step", "post_weights", "outer_step"]
        assert abs(np.mean(rec["pre_weights"]) - 1) < 0.5


def test_boost_refresh_schedule(small):
    art = train(cfg(epochs=5, refresh_interval=2), small)
    assert [r["epoch"] for r in art.boost_refreshes] == [2, 4]
    assert art.hardness["last_refresh_epoch"] == 4
    assert max(art.hardness["b"]) == 1.0


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_divergence_guard(small):
    with pytest.raises(DivergenceError) as info:
        train(cfg(method="plain", learning_rate=1e308), small)
    assert info.value.exit_code == 4
    assert info.value.artifact.status == "diverged"


def test_artifact_round_trip(small, tmp_path):
    art = train(cfg(), small)
    art.save(tmp_path / "a.json")
    back = RunArtifact.load(tmp_path / "a.json")
    assert back.to_dict() == art.to_dict()
    assert json.loads((tmp_path / "a.json").read_text())["schema_version"] == SCHEMA_VERSION


def test_sequence_task():
    ds = generate_sequences(3, 4.0, 120, 6, seed=0)
    art = train(cfg(loss_agg="max", epochs=2, knn_k=3), ds)
    rep = art.final["test"]
    assert set(rep["f1"]["per_class"]) <= {"E1", "E2", "E3"}
    assert "token_f1" in rep
    assert len(rep["quartiles"]["quartile_assignment"]) == 3


def test_meta_batch_subsampling(small):
    art = train(cfg(meta_batch_size=8, rebuild_meta_set=True, epochs=2), small)
    assert art.status == "completed"
