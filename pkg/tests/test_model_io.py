"""Model archive save/load round trip."""

import json

import numpy as np
import pytest

from uncertlab.dataset import make_dataset
from uncertlab.errors import ConfigError
from uncertlab.model_io import load_model, save_model
from uncertlab.regression import build_model
from uncertlab.vi import VIConfig, train_vi


@pytest.fixture(scope="module")
def trained():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(60, 1))
    y = 1.0 + 2.0 * x[:, 0] + 0.1 * rng.standard_normal(60)
    data = make_dataset(x, y, ("x1",))
    model = build_model(data, mean_degree=1, noise_degree=0)
    cfg = VIConfig(seed=0, max_steps=400, window=400, tolerance=0.0)
    return model, train_vi(model, data, cfg), cfg, data


class TestRoundTrip:
    def test_posterior_and_model_survive(self, trained, tmp_path):
        model, train, cfg, data = trained
        path = str(tmp_path / "m.json")
        save_model(path, model, train, cfg, data.summary,
                   dataset_sha256="ab" * 32)
        model2, q2, doc = load_model(path)
        assert model2 == model
        np.testing.assert_allclose(q2.mu, train.posterior.mu, rtol=1e-15)
        np.testing.assert_allclose(q2.scale, train.posterior.scale,
                                   rtol=1e-15)
        assert doc["dataset_sha256"] == "ab" * 32
        assert doc["training"]["n_steps"] == train.n_steps

    def test_full_rank_scale_round_trips(self, trained, tmp_path):
        model, _, cfg_mf, data = trained
        cfg = VIConfig(family="full_rank", seed=1, max_steps=300,
                       window=300, tolerance=0.0)
        train = train_vi(model, data, cfg)
        path = str(tmp_path / "fr.json")
        save_model(path, model, train, cfg, data.summary)
        _, q2, _ = load_model(path)
        np.testing.assert_allclose(q2.scale, train.posterior.scale,
                                   rtol=1e-15)

    def test_trajectory_stored_only_on_request(self, trained, tmp_path):
        model, train, cfg, data = trained
        bare = str(tmp_path / "bare.json")
        full = str(tmp_path / "full.json")
        save_model(bare, model, train, cfg, data.summary)
        save_model(full, model, train, cfg, data.summary,
                   store_trajectory=True)
        assert "trajectory" not in json.load(open(bare))["training"]
        assert len(json.load(open(full))["training"]["trajectory"]) \
            == train.n_steps

    def test_version_guard(self, trained, tmp_path):
        model, train, cfg, data = trained
        path = str(tmp_path / "v.json")
        save_model(path, model, train, cfg, data.summary)
        doc = json.load(open(path))
        doc["schema_version"] = 999
        json.dump(doc, open(path, "w"))
        with pytest.raises(ConfigError, match="version"):
            load_model(path)

    def test_tamper_guard_on_weight_counts(self, trained, tmp_path):
        model, train, cfg, data = trained
        path = str(tmp_path / "t.json")
        save_model(path, model, train, cfg, data.summary)
        doc = json.load(open(path))
        doc["posterior"]["mu"] = doc["posterior"]["mu"][:-1]
        json.dump(doc, open(path, "w"))
        with pytest.raises(ConfigError):
            load_model(path)

    def test_file_is_deterministic(self, trained, tmp_path):
        model, train, cfg, data = trained
        a = str(tmp_path / "a.json")
        b = str(tmp_path / "b.json")
        save_model(a, model, train, cfg, data.summary)
        save_model(b, model, train, cfg, data.summary)
        assert open(a).read() == open(b).read()
