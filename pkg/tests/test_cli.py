import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from houserisk.cli import main
from houserisk.imagery import write_fixture_image
from houserisk.synth import SynthConfig, export_fixtures, generate_portfolio


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("fixtures")
    result = generate_portfolio(SynthConfig(n_policies=2500, common_size=120, seed=4))
    export_fixtures(result, root)
    return root


def run(*args, expect_exit=0):
    runner = CliRunner()
    result = runner.invoke(main, list(args))
    assert result.exit_code == expect_exit, result.output + (result.stderr or "")
    return result


def test_synth_writes_fixture_dir(tmp_path):
    out = tmp_path / "fix"
    result = run("synth", "--out", str(out), "--seed", "2")
    paths = json.loads(result.output)
    for key in ("policies", "addresses", "annotations", "truth", "config", "common_set"):
        assert Path(paths[key]).exists()


def test_synth_deterministic_bytes(tmp_path):
    run("synth", "--out", str(tmp_path / "a"), "--seed", "3")
    run("synth", "--out", str(tmp_path / "b"), "--seed", "3")
    for name in ("policies.csv", "annotations.csv", "truth.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_kappa_outputs_per_variable_rows(fixture_dir, tmp_path):
    out = tmp_path / "kappa.csv"
    result = run(
        "kappa",
        "--annotations", str(fixture_dir / "annotations.csv"),
        "--common", str(fixture_dir / "common_set.txt"),
        "--out", str(out),
    )
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "variable,kappa,interpretation,items,raters"
    assert len(lines) == 8  # header + 7 variables
    assert result.output == out.read_text()


def test_calibrate_round_trips(fixture_dir, tmp_path):
    out = tmp_path / "calibrated.csv"
    result = run(
        "calibrate",
        "--annotations", str(fixture_dir / "annotations.csv"),
        "--out", str(out),
    )
    ack = json.loads(result.output)
    assert ack["records"] > 0
    assert out.exists()
    header = out.read_text().split("\n", 1)[0]
    assert header.startswith("address_id,annotator_id,timestamp")


def test_fit_writes_model_and_wald(fixture_dir, tmp_path):
    out = tmp_path / "model.json"
    result = run("fit", "--dataset", str(fixture_dir), "--out", str(out))
    ack = json.loads(result.output)
    assert ack["converged"] is True
    model = json.loads(out.read_text())
    assert "intercept" in model["names"]
    wald = Path(ack["wald"]).read_text().strip().split("\n")
    assert wald[0] == "variable,estimate,std_error,z,p_value"
    assert len(wald) == len(model["names"]) + 1


def test_evaluate_writes_report_and_figures(fixture_dir, tmp_path):
    out = tmp_path / "eval"
    result = run(
        "evaluate", "--dataset", str(fixture_dir), "--trials", "4",
        "--seed", "1", "--out", str(out),
    )
    summary = json.loads(result.output)
    assert summary["trials"] == 4
    for name in ("gini_report.json", "gini_trials.csv", "gini_trials.png", "gini_summary.png"):
        assert (out / name).exists(), name
    csv_lines = (out / "gini_trials.csv").read_text().strip().split("\n")
    assert csv_lines[0] == "trial_index,gini_A,gini_B,gini_C"
    assert len(csv_lines) == 5
    assert (out / "gini_trials.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_evaluate_deterministic(fixture_dir, tmp_path):
    r1 = run("evaluate", "--dataset", str(fixture_dir), "--trials", "3",
             "--seed", "7", "--out", str(tmp_path / "e1"))
    r2 = run("evaluate", "--dataset", str(fixture_dir), "--trials", "3",
             "--seed", "7", "--out", str(tmp_path / "e2"))
    assert r1.output == r2.output
    assert (tmp_path / "e1" / "gini_report.json").read_bytes() == \
        (tmp_path / "e2" / "gini_report.json").read_bytes()


def test_report_renders_markdown_with_figures(fixture_dir, tmp_path):
    out = tmp_path / "report"
    run("report", "--dataset", str(fixture_dir), "--trials", "4",
        "--seed", "1", "--out", str(out))
    text = (out / "report.md").read_text()
    assert "## Inter-rater agreement" in text
    assert "## Model comparison" in text
    assert "![Gini per trial](gini_trials.png)" in text
    assert (out / "gini_trials.png").exists()
    assert (out / "gini_summary.png").exists()
    assert (out / "gini_trials.csv").exists()


def test_geocode_and_fetch_images(fixture_dir, tmp_path):
    import csv as csv_mod

    # stage an addresses file with one unresolved row plus a fixture table
    addresses = tmp_path / "addresses.csv"
    with open(fixture_dir / "addresses.csv") as fh:
        rows = list(csv_mod.DictReader(fh))
    rows = rows[:3]
    rows[0].update({"status": "unresolved", "lat": "", "lon": ""})
    with open(addresses, "w", newline="") as fh:
        writer = csv_mod.DictWriter(fh, fieldnames=["address_id", "raw_address", "status", "lat", "lon"])
        writer.writeheader()
        writer.writerows(rows)

    fixtures = tmp_path / "provider"
    fixtures.mkdir()
    (fixtures / "geocode_table.json").write_text(json.dumps({
        rows[0]["raw_address"]: {"lat": 52.1, "lon": 20.9, "country": "PL"},
    }))
    for row in rows:
        write_fixture_image(fixtures, row["address_id"], "street")
        write_fixture_image(fixtures, row["address_id"], "satellite")

    result = run("geocode", "--addresses", str(addresses), "--fixtures", str(fixtures))
    assert json.loads(result.output) == {"addresses": 3, "newly_resolved": 1}
    with open(addresses) as fh:
        updated = {r["address_id"]: r for r in csv_mod.DictReader(fh)}
    assert updated[rows[0]["address_id"]]["status"] == "resolved"

    cache = tmp_path / "cache"
    result = run("fetch-images", "--addresses", str(addresses),
                 "--fixtures", str(fixtures), "--cache", str(cache), "--rate", "1000")
    assert json.loads(result.output) == {"fetched": 6, "missing_imagery": 0}
    # second run is served entirely from cache and stays idempotent
    result = run("fetch-images", "--addresses", str(addresses),
                 "--fixtures", str(fixtures), "--cache", str(cache), "--rate", "1000")
    assert json.loads(result.output) == {"fetched": 6, "missing_imagery": 0}


def test_errors_are_json_on_stderr(tmp_path):
    missing = tmp_path / "nope"
    result = run("evaluate", "--dataset", str(tmp_path), "--out", str(missing),
                 expect_exit=1)
    payload = json.loads(result.stderr.strip().split("\n")[-1])
    assert set(payload) == {"error", "message"}


def test_kappa_unanimous_fixture(tmp_path):
    from houserisk.annotations import write_annotations_csv, AnnotationRecord
    from houserisk.schema import default_schema

    schema = default_schema()
    values = {
        "neighbourhood": frozenset({"detached_houses"}),
        "density": 3,
        "sv_quality": "good",
        "house_type": "detached_single_family",
        "house_age": 2,
        "house_condition": 2,
        "wealth": 5,
    }
    records = []
    for address in ("A1", "A2"):
        v = dict(values, wealth=5 if address == "A1" else 7)
        for annotator in ("r1", "r2"):
            records.append(AnnotationRecord(address, annotator, "t", v))
    annotations = tmp_path / "annotations.csv"
    write_annotations_csv(records, schema, annotations)
    common = tmp_path / "common.txt"
    common.write_text("A1\nA2\n")
    result = run("kappa", "--annotations", str(annotations), "--common", str(common))
    rows = {line.split(",")[0]: line.split(",") for line in result.output.strip().split("\n")[1:]}
    assert rows["wealth"][1] == "1.0000"
    assert rows["wealth"][2] == "almost perfect agreement"
