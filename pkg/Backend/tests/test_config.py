import orjson
import pytest
from pydantic import ValidationError

from app.core.config import AnalysisConfig


def test_defaults():
    config = AnalysisConfig(_env_file=None)
    assert config.m == 128
    assert config.mode == "elastic"
    assert config.effective_seed_stride == 8
    assert config.draws == 100_000


def test_load_merges_file_under_overrides(tmp_path):
    path = tmp_path / "config.json"
    path.write_bytes(orjson.dumps({"m": 64, "mode": "nonelastic", "rng_seed": 3}))
    config = AnalysisConfig.load(path, rng_seed=9, workers=None)
    assert config.m == 64
    assert config.mode == "nonelastic"
    assert config.rng_seed == 9
    assert config.workers == 1


def test_environment_overrides_default(monkeypatch):
    monkeypatch.setenv("ELASTISHAPE_M", "256")
    assert AnalysisConfig(_env_file=None).m == 256


def test_digest_ignores_output_location():
    a = AnalysisConfig(output_dir="a", workers=1, _env_file=None)
    b = AnalysisConfig(output_dir="b", workers=4, _env_file=None)
    assert a.digest() == b.digest()
    assert a.digest() != AnalysisConfig(m=64, _env_file=None).digest()


def test_dump_round_trip(tmp_path):
    config = AnalysisConfig(m=96, seed_stride=12, _env_file=None)
    config.dump(tmp_path / "config.json")
    assert AnalysisConfig.load(tmp_path / "config.json").digest() == config.digest()


@pytest.mark.parametrize("values", [
    {"m": 16},
    {"seed_stride": 5},
    {"mode": "rigid"},
    {"draws": 100},
    {"permutations": 10},
    {"direction_steps": []},
])
def test_invalid_values(values):
    with pytest.raises(ValidationError):
        AnalysisConfig(_env_file=None, **values)
