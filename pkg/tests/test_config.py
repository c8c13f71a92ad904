import json

import pytest

from config import load_config_file, merge_overrides, worker_limit
from errors import ConfigError
from schemas import MetricsRecord, MissingnessSpec, TrainConfig


class TestConfigFile:
    def test_flat_values(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"alpha": 0.5, "block_sizes": [10, 5]}))
        assert load_config_file(str(path)) == {"alpha": 0.5, "block_sizes": [10, 5]}

    def test_nested_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"train": {"alpha": 1}}))
        with pytest.raises(ConfigError, match="flat"):
            load_config_file(str(path))

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"alpah": 1}))
        with pytest.raises(ConfigError, match="alpah"):
            load_config_file(str(path), allowed_keys=TrainConfig.model_fields)

    def test_unreadable(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config_file(str(path))

    def test_cli_wins(self):
        merged = merge_overrides({"alpha": 1.0, "beta": 2.0}, {"alpha": 0.1, "beta": None, "epochs": 5})
        assert merged == {"alpha": 0.1, "beta": 2.0, "epochs": 5}


class TestWorkers:
    def test_explicit(self, monkeypatch):
        monkeypatch.setenv("BFTS_WORKERS", "3")
        assert worker_limit() == 3

    def test_zero_means_cpu_count(self, monkeypatch):
        monkeypatch.setenv("BFTS_WORKERS", "0")
        assert worker_limit() >= 1

    def test_invalid(self, monkeypatch):
        monkeypatch.setenv("BFTS_WORKERS", "many")
        with pytest.raises(ConfigError):
            worker_limit()


class TestSchemas:
    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(alpha=-1.0)

    def test_unknown_field_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(alhpa=1.0)

    def test_ce_means_zero_margin(self):
        assert TrainConfig(imputer_loss="ce", ldam_C=0.7).effective_ldam_C == 0.0

    def test_resolve_k(self):
        assert MissingnessSpec(observed_frac=0.25).resolve_k(40) == 10
        with pytest.raises(ValueError):
            MissingnessSpec(k_observed=50).resolve_k(40)

    def test_metrics_record_bounds(self):
        with pytest.raises(ValueError):
            MetricsRecord(mode="bfts", alpha=1, beta=1, observed_frac=0.3, seed=0, f1=1.2, avpr=0.5, ddp=0.1,
                          deqop=0.1, corr_true=0.4, corr_imputed=0.2, assortativity=0.5)
