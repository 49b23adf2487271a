import numpy as np
import orjson
import pytest
from typer.testing import CliRunner

from app.core.exceptions import INPUT_ERROR
from app.services.ensemble_io import DIGEST_PREFIX, write_points
from main import app
from tests.curves import blob

runner = CliRunner()

SMALL_CONFIG = {"m": 64, "geodesic_max_iter": 150, "mean_max_iter": 30, "draws": 20_000, "permutations": 99}
# Files that legitimately differ between two runs into different directories.
RUN_FILES = {"run.json", "config.json"}


def write_workspace(root, curves, covariates):
    entries = []
    for i, (points, values) in enumerate(zip(curves, covariates)):
        name = f"shape_{i}.csv"
        write_points(root / name, points)
        entries.append({"id": f"s{i}", "path": name, "covariates": values})
    (root / "manifest.json").write_bytes(orjson.dumps(entries))
    (root / "config.json").write_bytes(orjson.dumps(SMALL_CONFIG))
    return root


@pytest.fixture
def workspace(tmp_path):
    """Three contours, a manifest and a small config file."""
    curves = [blob(c, points=200) for c in ([0.1, 0.0], [0.25, 0.05], [0.05, 0.2])]
    return write_workspace(tmp_path, curves, [{"marker": i % 2} for i in range(3)])


@pytest.fixture
def copies(tmp_path):
    """Six copies of one contour with a group marker and a survival time."""
    curve = blob([0.2, 0.1], points=200)
    markers = [1, 1, 1, 0, 0, 0]
    survival = [5.0, 8.0, 12.0, 25.0, 30.0, 40.0]
    return write_workspace(tmp_path, [curve] * 6, [{"marker": g, "survival": s} for g, s in zip(markers, survival)])


@pytest.fixture
def families(tmp_path):
    """Three two-lobed and three three-lobed contours."""
    rng = np.random.default_rng(7)
    curves, covariates = [], []
    for group, base in enumerate(([0.3, 0.0], [0.0, 0.25])):
        for i in range(3):
            curves.append(blob(np.array(base) + 0.02 * rng.standard_normal(2), points=200))
            covariates.append({"group": group, "survival": float(10 + 10 * group + i)})
    return write_workspace(tmp_path, curves, covariates)


def invoke(*args):
    return runner.invoke(app, [str(a) for a in args])


def run_record(out):
    return orjson.loads((out / "run.json").read_bytes())


def table(path) -> list[list[str]]:
    lines = path.read_text().splitlines()
    assert lines[0].startswith(DIGEST_PREFIX)
    return [line.split(",") for line in lines[1:]]


def assert_same_outputs(first, second):
    names = sorted(p.name for p in first.iterdir())
    assert names == sorted(p.name for p in second.iterdir())
    for name in names:
        if name not in RUN_FILES:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name
    assert run_record(first)["id"] == run_record(second)["id"]


def test_distance_writes_matrix(workspace):
    out = workspace / "out"
    result = invoke("distance", "--manifest", workspace / "manifest.json", "--config", workspace / "config.json",
                    "--mode", "nonelastic", "--out", out)
    assert result.exit_code == 0, result.output

    lines = (out / "distances.csv").read_text().splitlines()
    assert lines[0].startswith(DIGEST_PREFIX)
    assert lines[1] == "id,s0,s1,s2"
    values = np.array([[float(v) for v in line.split(",")[1:]] for line in lines[2:]])
    assert values.shape == (3, 3)
    np.testing.assert_allclose(values, values.T)

    record = run_record(out)
    assert record["status"] == "completed"
    assert record["config_digest"] == lines[0][len(DIGEST_PREFIX):]
    assert "distances.csv" in record["outputs"]


def test_manifest_is_a_json_array(workspace):
    manifest = orjson.loads((workspace / "manifest.json").read_bytes())
    assert isinstance(manifest, list)
    (workspace / "wrapped.json").write_bytes(orjson.dumps({"shapes": manifest}))
    result = invoke("distance", "--manifest", workspace / "wrapped.json", "--config", workspace / "config.json",
                    "--out", workspace / "out")
    assert result.exit_code == INPUT_ERROR


def test_duplicate_ids_rejected(workspace):
    manifest = orjson.loads((workspace / "manifest.json").read_bytes())
    manifest[2]["id"] = "s0"
    (workspace / "manifest.json").write_bytes(orjson.dumps(manifest))
    result = invoke("distance", "--manifest", workspace / "manifest.json", "--config", workspace / "config.json",
                    "--out", workspace / "out")
    assert result.exit_code == INPUT_ERROR


def test_rerun_is_byte_identical(workspace):
    outputs = []
    for name in ("first", "second"):
        out = workspace / name
        result = invoke("distance", "--manifest", workspace / "manifest.json", "--config", workspace / "config.json",
                        "--mode", "nonelastic", "--out", out)
        assert result.exit_code == 0, result.output
        outputs.append(out)
    assert_same_outputs(*outputs)


def test_missing_contour_names_the_shape(workspace):
    (workspace / "shape_1.csv").unlink()
    out = workspace / "out"
    result = invoke("distance", "--manifest", workspace / "manifest.json", "--config", workspace / "config.json", "--out", out)
    assert result.exit_code == INPUT_ERROR
    record = run_record(out)
    assert record["status"] == "failed"
    assert record["failing_ids"] == ["s1"]
    assert not (out / "distances.csv").exists()


def test_invalid_config_is_an_input_error(workspace):
    (workspace / "config.json").write_bytes(orjson.dumps({"m": 8}))
    result = invoke("distance", "--manifest", workspace / "manifest.json", "--config", workspace / "config.json",
                    "--out", workspace / "out")
    assert result.exit_code == INPUT_ERROR


class TestGeodesic:
    def test_identical_ids(self, workspace):
        out = workspace / "out"
        result = invoke("geodesic", "--manifest", workspace / "manifest.json", "--config", workspace / "config.json",
                        "--id1", "s0", "--id2", "s0", "--out", out)
        assert result.exit_code == 0, result.output
        report = orjson.loads((out / "geodesic.json").read_bytes())
        assert report["distance"] == pytest.approx(0.0, abs=1e-6)
        assert report["nonelastic_distance"] == pytest.approx(0.0, abs=1e-6)
        assert (out / "geodesic.svg").exists()

    def test_missing_id(self, workspace):
        out = workspace / "out"
        result = invoke("geodesic", "--manifest", workspace / "manifest.json", "--config", workspace / "config.json",
                        "--id1", "s0", "--id2", "nope", "--out", out)
        assert result.exit_code == INPUT_ERROR
        assert run_record(out)["failing_ids"] == ["nope"]


class TestCluster:
    @pytest.mark.slow
    def test_planted_clusters(self, families):
        out = families / "out"
        result = invoke("cluster", "--manifest", families / "manifest.json", "--config", families / "config.json",
                        "--mode", "nonelastic", "--out", out)
        assert result.exit_code == 0, result.output
        rows = table(out / "labels.csv")
        assert rows[0] == ["id", "cluster"]
        assert [row[1] for row in rows[1:]] == ["1", "1", "1", "2", "2", "2"]

        survival = table(out / "survival.csv")
        assert survival[0] == ["cluster", "size", "observed", "mean", "median"]
        assert survival[1][:3] == ["1", "3", "3"] and float(survival[1][3]) == pytest.approx(11.0)
        assert survival[2][:3] == ["2", "3", "3"] and float(survival[2][3]) == pytest.approx(21.0)
        for name in ("mds.svg", "mds.csv", "cluster.json", "cluster_variance.csv", "distances.csv"):
            assert (out / name).exists()

    def test_single_cluster(self, workspace):
        (workspace / "config.json").write_bytes(orjson.dumps({**SMALL_CONFIG, "k_clusters": 1}))
        out = workspace / "out"
        result = invoke("cluster", "--manifest", workspace / "manifest.json", "--config", workspace / "config.json",
                        "--mode", "nonelastic", "--out", out)
        assert result.exit_code == 0, result.output
        assert [row[1] for row in table(out / "labels.csv")[1:]] == ["1", "1", "1"]
        assert not (out / "survival.csv").exists()


class TestPermtest:
    def test_identical_groups(self, copies):
        out = copies / "out"
        result = invoke("permtest", "--manifest", copies / "manifest.json", "--config", copies / "config.json",
                        "--covariate", "marker", "--mode", "nonelastic", "--out", out)
        assert result.exit_code == 0, result.output
        rows = table(out / "permtest.csv")
        assert rows[0] == ["covariate", "cutoff", "group_1", "group_0", "observed", "p_value", "B"]
        assert len(rows) == 2
        assert rows[1][2:4] == ["3", "3"]
        assert float(rows[1][5]) == 1.0
        assert rows[1][6] == "99"

    def test_cutoff_rows(self, copies):
        out = copies / "out"
        result = invoke("permtest", "--manifest", copies / "manifest.json", "--config", copies / "config.json",
                        "--covariate", "survival", "--cutoff", 10, "--cutoff", 20, "--mode", "nonelastic", "--out", out)
        assert result.exit_code == 0, result.output
        rows = table(out / "permtest.csv")[1:]
        assert [(float(r[1]), r[2], r[3]) for r in rows] == [(10.0, "4", "2"), (20.0, "3", "3")]
        assert all(float(r[5]) == 1.0 for r in rows)
        payload = orjson.loads((out / "permtest.json").read_bytes())
        assert [row["cutoff"] for row in payload["rows"]] == [10.0, 20.0]

    def test_group_too_small(self, copies):
        result = invoke("permtest", "--manifest", copies / "manifest.json", "--config", copies / "config.json",
                        "--covariate", "survival", "--cutoff", 6, "--mode", "nonelastic", "--out", copies / "out")
        assert result.exit_code == INPUT_ERROR


def test_loo_writes_report_and_overlays(workspace):
    out = workspace / "out"
    result = invoke("loo", "--manifest", workspace / "manifest.json", "--config", workspace / "config.json",
                    "--mode", "nonelastic", "--out", out)
    assert result.exit_code == 0, result.output
    report = orjson.loads((out / "loo.json").read_bytes())
    assert report["ids"] == ["s0", "s1", "s2"]
    assert len(report["per_shape_error"]) == 3
    assert set(report["order_statistics"]) == {"min", "median", "max"}
    for name in ("min", "median", "max"):
        assert (out / f"loo_{name}.svg").exists()


def test_enrich_from_labels(workspace):
    (workspace / "labels.csv").write_text("id,cluster\ns0,1\ns1,2\ns2,1\n")
    out = workspace / "out"
    result = invoke("enrich", "--labels", workspace / "labels.csv", "--manifest", workspace / "manifest.json",
                    "--config", workspace / "config.json", "--out", out)
    assert result.exit_code == 0, result.output

    lines = (out / "enrichment.csv").read_text().splitlines()
    assert lines[0].startswith(DIGEST_PREFIX)
    assert lines[1] == "covariate,probability,y1,n1,y2,n2,flag"
    assert lines[2].startswith("marker,")
    assert (out / "enrichment.svg").exists()


def test_enrich_needs_covariates(workspace):
    (workspace / "labels.csv").write_text("id,cluster\ns0,1\ns1,2\n")
    result = invoke("enrich", "--labels", workspace / "labels.csv", "--config", workspace / "config.json",
                    "--out", workspace / "out")
    assert result.exit_code == INPUT_ERROR


@pytest.mark.parametrize("command, extra", [
    ("geodesic", ["--id1", "s0", "--id2", "s2", "--mode", "nonelastic"]),
    pytest.param("cluster", ["--mode", "nonelastic"], marks=pytest.mark.slow),
    pytest.param("loo", ["--mode", "nonelastic"], marks=pytest.mark.slow),
    pytest.param("mean-pca", ["--mode", "nonelastic"], marks=pytest.mark.slow),
])
def test_seeded_rerun_is_byte_identical(workspace, command, extra):
    outputs = []
    for name in ("first", "second"):
        out = workspace / name
        result = invoke(command, "--manifest", workspace / "manifest.json", "--config", workspace / "config.json",
                        "--seed", 5, *extra, "--out", out)
        assert result.exit_code == 0, result.output
        outputs.append(out)
    assert_same_outputs(*outputs)


def test_seeded_permtest_rerun_is_byte_identical(copies):
    outputs = []
    for name in ("first", "second"):
        out = copies / name
        result = invoke("permtest", "--manifest", copies / "manifest.json", "--config", copies / "config.json",
                        "--covariate", "marker", "--seed", 5, "--mode", "nonelastic", "--out", out)
        assert result.exit_code == 0, result.output
        outputs.append(out)
    assert_same_outputs(*outputs)


def test_seeded_enrich_rerun_is_byte_identical(workspace):
    (workspace / "labels.csv").write_text("id,cluster\ns0,1\ns1,2\ns2,1\n")
    outputs = []
    for name in ("first", "second"):
        out = workspace / name
        result = invoke("enrich", "--labels", workspace / "labels.csv", "--manifest", workspace / "manifest.json",
                        "--config", workspace / "config.json", "--seed", 5, "--out", out)
        assert result.exit_code == 0, result.output
        outputs.append(out)
    assert_same_outputs(*outputs)


@pytest.mark.slow
def test_mean_pca_then_simulate(workspace):
    fit = workspace / "fit"
    result = invoke("mean-pca", "--manifest", workspace / "manifest.json", "--config", workspace / "config.json",
                    "--mode", "nonelastic", "--out", fit)
    assert result.exit_code == 0, result.output
    assert (fit / "spca.json").exists()

    empty = workspace / "empty"
    result = invoke("simulate", "--model", fit / "spca.json", "--count", 0, "--config", workspace / "config.json", "--out", empty)
    assert result.exit_code == 0, result.output
    assert sorted(p.name for p in empty.iterdir()) == ["config.json", "run.json"]

    drawn = []
    for name in ("drawn", "redrawn"):
        out = workspace / name
        result = invoke("simulate", "--model", fit / "spca.json", "--count", 2, "--seed", 5,
                        "--config", workspace / "config.json", "--out", out)
        assert result.exit_code == 0, result.output
        drawn.append(out)
    manifest = orjson.loads((drawn[0] / "manifest.json").read_bytes())
    assert [entry["id"] for entry in manifest] == ["sim_0000", "sim_0001"]
    assert_same_outputs(*drawn)


def test_simulate_rejects_negative_count(workspace):
    result = invoke("simulate", "--model", workspace / "missing.json", "--count", -1, "--out", workspace / "out")
    assert result.exit_code == 2
