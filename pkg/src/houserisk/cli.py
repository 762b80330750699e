"""Command-line pipeline orchestration.

Every subcommand is re-runnable and idempotent for fixed inputs; all
randomness is pinned by explicit seeds. Failures exit nonzero with a
machine-readable JSON object on stderr.
"""

from __future__ import annotations

import csv
import functools
import json
import sys
from pathlib import Path

import click

from . import glm
from .agreement import agreement_report
from .annotations import read_annotations_csv, write_annotations_csv
from .evaluation import bootstrap_evaluate
from .features import calibrate_annotators
from .imagery import FixtureProvider, ImageCache, ImageRequest, MissingImagery, RateLimiter, geocode
from .pipeline import build_modeling_dataset, fit_feature_model, load_fixture_dir, retained_feature_names
from .portfolio import ingest_addresses, write_addresses_csv
from .schema import AnnotationSchema, default_schema
from .synth import SynthConfig, export_fixtures, generate_portfolio


def json_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as exc:  # surfaced as machine-readable JSON
            payload = {"error": type(exc).__name__, "message": str(exc)}
            print(json.dumps(payload), file=sys.stderr)
            raise SystemExit(1)

    return wrapper


def _load_schema(schema_path) -> AnnotationSchema:
    return AnnotationSchema.load(schema_path) if schema_path else default_schema()


@click.group()
def main():
    """Address-level car-accident-risk toolkit."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="SynthConfig JSON; defaults apply when omitted.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@json_errors
def synth(config_path, out_dir, seed):
    """Generate a synthetic portfolio fixture directory."""
    config = SynthConfig.load(config_path) if config_path else SynthConfig()
    if seed is not None:
        config = SynthConfig.from_dict({**config.to_dict(), "seed": seed})
    result = generate_portfolio(config)
    paths = export_fixtures(result, out_dir)
    click.echo(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))


@main.command("geocode")
@click.option("--addresses", "addresses_path", type=click.Path(exists=True), required=True)
@click.option("--fixtures", "fixtures_dir", type=click.Path(exists=True), required=True,
              help="Fixture provider root (geocode_table.json + images/).")
@click.option("--country", default="PL", help="Domestic country; other hits become foreign.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Updated registry CSV (defaults to in-place).")
@json_errors
def geocode_cmd(addresses_path, fixtures_dir, country, out_path):
    """Resolve unresolved addresses through the fixture provider."""
    registry = ingest_addresses(addresses_path)
    provider = FixtureProvider(fixtures_dir)
    updated = []
    resolved = 0
    for entry in registry.entries.values():
        if entry.status == "unresolved":
            entry = geocode(entry.raw_address, provider, domestic_country=country,
                            address_id=entry.address_id)
            if entry.status == "resolved":
                resolved += 1
        updated.append(entry)
    write_addresses_csv(updated, out_path or addresses_path)
    click.echo(json.dumps({"addresses": len(updated), "newly_resolved": resolved}))


@main.command("fetch-images")
@click.option("--addresses", "addresses_path", type=click.Path(exists=True), required=True)
@click.option("--views", default="street,satellite")
@click.option("--fixtures", "fixtures_dir", type=click.Path(exists=True), required=True)
@click.option("--cache", "cache_dir", type=click.Path(), required=True)
@click.option("--rate", type=float, default=10.0, help="Provider requests per second.")
@json_errors
def fetch_images(addresses_path, views, fixtures_dir, cache_dir, rate):
    """Populate the image cache for all resolved addresses."""
    registry = ingest_addresses(addresses_path)
    provider = FixtureProvider(fixtures_dir)
    cache = ImageCache(cache_dir, provider, rate_limiter=RateLimiter(rate))
    fetched, missing = 0, 0
    for entry in registry.entries.values():
        if not registry.is_included(entry.address_id):
            continue
        for view in views.split(","):
            try:
                cache.fetch_image(entry, ImageRequest(address_id=entry.address_id, view=view))
                fetched += 1
            except MissingImagery:
                missing += 1
    click.echo(json.dumps({"fetched": fetched, "missing_imagery": missing}))


@main.command()
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
@click.option("--data", "data_dir", type=click.Path(), required=True,
              help="Service storage directory (logs/, state/, assignments.json).")
@click.option("--fixtures", "fixtures_dir", type=click.Path(exists=True), required=True,
              help="Fixture dir with addresses.csv (+ optional schema.json).")
@click.option("--annotators", default="ann-1,ann-2,ann-3,ann-4")
@click.option("--common-size", type=int, default=500)
@click.option("--seed", type=int, default=0)
@click.option("--image-cache", type=click.Path(), default=None)
@json_errors
def serve(port, host, data_dir, fixtures_dir, annotators, common_size, seed, image_cache):
    """Run the annotation service (plus UI assets when built)."""
    import uvicorn

    from .service import AnnotationService, SubmissionStore, assign_batches, create_app

    fixtures_dir = Path(fixtures_dir)
    schema_path = fixtures_dir / "schema.json"
    schema = AnnotationSchema.load(schema_path) if schema_path.exists() else default_schema()
    registry = ingest_addresses(fixtures_dir / "addresses.csv")
    addresses = sorted(registry.included_ids())
    batches = assign_batches(addresses, annotators.split(","), min(common_size, len(addresses)), seed)
    store = SubmissionStore(data_dir)
    service = AnnotationService.from_assignments(
        schema, store, batches,
        image_cache_root=Path(image_cache) if image_cache else None,
    )
    uvicorn.run(create_app(service), host=host, port=port)


@main.command()
@click.option("--annotations", "annotations_path", type=click.Path(exists=True), required=True)
@click.option("--common", "common_path", type=click.Path(exists=True), required=True,
              help="Text file with one common-set address_id per line.")
@click.option("--schema", "schema_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None, help="Report CSV path.")
@json_errors
def kappa(annotations_path, common_path, schema_path, out_path):
    """Inter-rater agreement per variable on the common set."""
    schema = _load_schema(schema_path)
    records = read_annotations_csv(annotations_path, schema)
    common = Path(common_path).read_text().split()
    common_set = set(common)
    report = agreement_report(
        [r for r in records if r.address_id in common_set], schema, common
    )
    lines = [["variable", "kappa", "interpretation", "items", "raters"]]
    for row in report.rows:
        lines.append([
            row.name,
            "" if row.kappa is None else f"{row.kappa:.4f}",
            row.band,
            str(row.item_count),
            str(row.rater_count),
        ])
    text = "\n".join(",".join(line) for line in lines) + "\n"
    if out_path:
        Path(out_path).write_text(text)
    click.echo(text, nl=False)


@main.command()
@click.option("--annotations", "annotations_path", type=click.Path(exists=True), required=True)
@click.option("--schema", "schema_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
@json_errors
def calibrate(annotations_path, schema_path, out_path):
    """Moment-match each annotator's ordinal ratings; write calibrated CSV."""
    schema = _load_schema(schema_path)
    records = read_annotations_csv(annotations_path, schema)
    calibrated = calibrate_annotators(records, schema)
    write_annotations_csv(calibrated, schema, out_path)
    click.echo(json.dumps({"records": len(calibrated), "out": str(out_path)}))


@main.command()
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True), required=True,
              help="Fixture directory (policies.csv, addresses.csv, annotations.csv).")
@click.option("--variables", "variables_path", type=click.Path(exists=True), default=None,
              help="JSON list of retained variable names.")
@click.option("--offset", type=click.Choice(["model_b", "exposure"]), default="model_b")
@click.option("--no-calibrate", is_flag=True, default=False)
@click.option("--out", "out_path", type=click.Path(), required=True, help="FittedModel JSON path.")
@json_errors
def fit(dataset_dir, variables_path, offset, no_calibrate, out_path):
    """Fit the offset Poisson GLM; write model JSON and a Wald table."""
    data = load_fixture_dir(dataset_dir)
    names = (
        json.loads(Path(variables_path).read_text())
        if variables_path
        else retained_feature_names(data.schema)
    )
    dataset = build_modeling_dataset(data, calibrate=not no_calibrate)
    model, _ = fit_feature_model(dataset, names, offset=offset)
    Path(out_path).write_text(model.to_json() + "\n")
    wald_path = Path(out_path).with_suffix(".wald.csv")
    with open(wald_path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variable", "estimate", "std_error", "z", "p_value"])
        for row in glm.wald_tests(model):
            writer.writerow([
                row.name,
                f"{row.estimate:.6f}",
                f"{row.std_error:.6f}",
                "" if row.z is None else f"{row.z:.4f}",
                "" if row.p_value is None else f"{row.p_value:.6f}",
            ])
    click.echo(json.dumps({
        "model": str(out_path),
        "wald": str(wald_path),
        "converged": model.converged,
        "deviance": model.deviance,
    }, indent=2))


@main.command()
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True), required=True)
@click.option("--variables", "variables_path", type=click.Path(exists=True), default=None)
@click.option("--trials", type=int, default=20)
@click.option("--split", type=float, default=0.2)
@click.option("--seed", type=int, default=0)
@click.option("--no-calibrate", is_flag=True, default=False)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@json_errors
def evaluate(dataset_dir, variables_path, trials, split, seed, no_calibrate, out_dir):
    """Repeated train/test Gini comparison of Models A, B, C."""
    data = load_fixture_dir(dataset_dir)
    names = (
        json.loads(Path(variables_path).read_text())
        if variables_path
        else retained_feature_names(data.schema)
    )
    dataset = build_modeling_dataset(data, calibrate=not no_calibrate)
    report = bootstrap_evaluate(dataset, names, trials=trials, split_fraction=split, base_seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "gini_report.json").write_text(report.to_json() + "\n")
    (out / "gini_trials.csv").write_text(report.to_plot_csv())
    from .plots import plot_gini_summary, plot_gini_trials

    plot_gini_trials(report, out / "gini_trials.png")
    plot_gini_summary(report, out / "gini_summary.png")
    click.echo(json.dumps(report.summary(), indent=2))


@main.command()
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True), required=True)
@click.option("--trials", type=int, default=20)
@click.option("--split", type=float, default=0.2)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@json_errors
def report(dataset_dir, trials, split, seed, out_dir):
    """Consolidated markdown summary with figures: agreement table, GLM
    Wald table, and the Gini trial comparison."""
    data = load_fixture_dir(dataset_dir)
    names = retained_feature_names(data.schema)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    lines = ["# Portfolio risk report", ""]

    if data.common_set:
        common_set = set(data.common_set)
        agreement = agreement_report(
            [r for r in data.annotations if r.address_id in common_set],
            data.schema,
            sorted(common_set),
        )
        lines += ["## Inter-rater agreement (common set)", "",
                  "| variable | kappa | interpretation |", "| --- | --- | --- |"]
        for row in agreement.rows:
            kappa_s = "-" if row.kappa is None else f"{row.kappa:.3f}"
            lines.append(f"| {row.name} | {kappa_s} | {row.band} |")
        lines.append("")

    dataset = build_modeling_dataset(data, calibrate=True)
    model, _ = fit_feature_model(dataset, names, offset="model_b")
    lines += ["## Residual feature model (model-B offset)", "",
              f"- policies: {len(dataset)}",
              f"- converged: {model.converged} in {model.iterations} iterations",
              f"- deviance: {model.deviance:.2f}", "",
              "| variable | estimate | std error | p-value |", "| --- | --- | --- | --- |"]
    for row in glm.wald_tests(model):
        p = "-" if row.p_value is None else f"{row.p_value:.4f}"
        se = f"{row.std_error:.4f}"
        lines.append(f"| {row.name} | {row.estimate:.4f} | {se} | {p} |")
    lines.append("")

    gini_report = bootstrap_evaluate(dataset, names, trials=trials, split_fraction=split, base_seed=seed)
    summary = gini_report.summary()
    (out / "gini_report.json").write_text(gini_report.to_json() + "\n")
    (out / "gini_trials.csv").write_text(gini_report.to_plot_csv())
    from .plots import plot_gini_summary, plot_gini_trials

    plot_gini_trials(gini_report, out / "gini_trials.png")
    plot_gini_summary(gini_report, out / "gini_summary.png")

    lines += ["## Model comparison (test Gini)", "",
              f"- trials: {summary['trials']} (failures: {summary['failures']})",
              f"- mean Gini A/B/C: {summary['mean_gini_A']:.4f} / "
              f"{summary['mean_gini_B']:.4f} / {summary['mean_gini_C']:.4f}",
              f"- C beats B in {summary['win_count_C_over_B']} of "
              f"{summary['trials'] - summary['failures']} trials",
              f"- mean improvement C - B: {summary['mean_delta_C_minus_B']:.4f}", "",
              "![Gini per trial](gini_trials.png)", "",
              "![Gini summary](gini_summary.png)", ""]

    (out / "report.md").write_text("\n".join(lines))
    click.echo(json.dumps({"report": str(out / "report.md"), **summary}, indent=2))


if __name__ == "__main__":
    main()
