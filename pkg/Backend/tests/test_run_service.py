import orjson

from app.core.config import AnalysisConfig
from app.services.run_service import RunService, run_id


def test_run_id_is_deterministic():
    config = AnalysisConfig(_env_file=None)
    first = run_id("distance", config.digest(), {"manifest": "a.json"})
    assert first == run_id("distance", config.digest(), {"manifest": "a.json"})
    assert first.version == 5
    assert first != run_id("distance", config.digest(), {"manifest": "b.json"})
    assert first != run_id("cluster", config.digest(), {"manifest": "a.json"})
    assert first != run_id("distance", AnalysisConfig(m=64, _env_file=None).digest(), {"manifest": "a.json"})


def test_record_id_survives_output_directory(tmp_path):
    ids = []
    for name in ("one", "two"):
        config = AnalysisConfig(output_dir=str(tmp_path / name), _env_file=None)
        with RunService("distance", config, parameters={"manifest": "m.json"}):
            pass
        ids.append(orjson.loads((tmp_path / name / "run.json").read_bytes())["id"])
    assert ids[0] == ids[1]
