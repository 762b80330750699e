"""Acceptance gate: one test per release criterion, each printing a single
PASS/FAIL line. Tolerances here are contractual; do not loosen them."""

import contextlib
import hashlib
import itertools
import json
import math
import random
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from houserisk import glm
from houserisk.agreement import DegenerateAgreement, fleiss_kappa, interpret_kappa
from houserisk.annotations import AnnotationRecord
from houserisk.cli import main as cli_main
from houserisk.evaluation import ScoredPolicy, bootstrap_evaluate, gini, lorenz_curve
from houserisk.features import calibrate_annotators, moment_match
from houserisk.glm import DesignMatrix, fit_poisson, normal_cdf, predict
from houserisk.pipeline import LoadedData, build_modeling_dataset, fit_feature_model
from houserisk.schema import AnnotationSchema, Variable
from houserisk.synth import SynthConfig, biased_annotators, generate_portfolio

RETAINED = ["neighbourhood", "sv_quality", "house_type", "house_age", "house_condition"]


@contextlib.contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    print(f"ACCEPTANCE {name}: PASS")


def loaded_from(result):
    return LoadedData(
        records=result.dataset.records,
        registry=result.registry,
        annotations=list(result.annotations),
        schema=result.schema,
        common_set=result.common_set,
    )


# --- 1. kappa oracle equivalence --------------------------------------------

def naive_kappa(table):
    n = sum(table[0])
    n_items = len(table)
    k = len(table[0])
    p_bar = sum(sum(c * (c - 1) for c in row) / (n * (n - 1)) for row in table) / n_items
    p_j = [sum(row[j] for row in table) / (n_items * n) for j in range(k)]
    p_e = sum(p * p for p in p_j)
    return (p_bar - p_e) / (1 - p_e)


def test_kappa_oracle_equivalence():
    with criterion("kappa-oracle-equivalence"):
        assert fleiss_kappa([[2, 0], [1, 1]]) == -1 / 3  # exact, rational arithmetic
        rng = random.Random(99)
        checked = 0
        while checked < 1000:
            n_items = rng.randint(2, 10)
            n = rng.randint(2, 5)
            k = rng.randint(2, 4)
            table = []
            for _ in range(n_items):
                row = [0] * k
                for _ in range(n):
                    row[rng.randrange(k)] += 1
                table.append(row)
            try:
                exact = fleiss_kappa(table)
            except DegenerateAgreement:
                continue
            assert abs(exact - naive_kappa(table)) < 1e-12
            checked += 1


# --- 2. kappa banding ---------------------------------------------------------

def test_kappa_banding_reference_values():
    with criterion("kappa-banding"):
        expected = {
            0.52: "moderate agreement",
            0.50: "moderate agreement",
            0.79: "substantial agreement",
            0.69: "substantial agreement",
            0.51: "moderate agreement",
            0.54: "moderate agreement",
            0.32: "fair agreement",
        }
        for kappa, band in expected.items():
            assert interpret_kappa(kappa) == band, kappa


# --- 3. GLM closed forms -------------------------------------------------------

def test_glm_closed_forms():
    with criterion("glm-closed-forms"):
        rng = np.random.default_rng(42)
        n = 500

        # intercept-only: beta0 = log(sum y / sum o) to 1e-8
        o = rng.uniform(0.2, 1.0, n)
        y = rng.poisson(0.08 * o)
        y[0] = max(y[0], 1)
        design = DesignMatrix(values=np.ones((n, 1)), names=("intercept",))
        fit = fit_poisson(design, y, o)
        assert abs(fit.coefficients[0] - math.log(y.sum() / o.sum())) < 1e-8

        # single binary covariate: group-ratio closed form to 1e-8
        x = rng.integers(0, 2, n).astype(float)
        y2 = rng.poisson(0.1 * np.exp(0.6 * x) * o)
        design2 = DesignMatrix(values=np.column_stack([np.ones(n), x]), names=("intercept", "x"))
        fit2 = fit_poisson(design2, y2, o)
        r0 = y2[x == 0].sum() / o[x == 0].sum()
        r1 = y2[x == 1].sum() / o[x == 1].sum()
        assert abs(fit2.coefficients[0] - math.log(r0)) < 1e-8
        assert abs(fit2.coefficients[1] - math.log(r1 / r0)) < 1e-8

        # training sum(mu) == sum(y) to 1e-6 relative
        mu = predict(fit2, design2, o)
        assert abs(mu.sum() - y2.sum()) <= 1e-6 * y2.sum()

        # offset scaling by c shifts only the intercept, by -log c, to 1e-8
        c = 2.5
        fit3 = fit_poisson(design2, y2, c * o)
        assert abs(fit3.coefficients[0] - (fit2.coefficients[0] - math.log(c))) < 1e-8
        assert abs(fit3.coefficients[1] - fit2.coefficients[1]) < 1e-8


# --- 4. inference ---------------------------------------------------------------

def test_inference_wald_and_null_false_significance():
    with criterion("inference-wald-and-null-rate"):
        p_crit = 2.0 * (1.0 - normal_cdf(1.959964))
        assert abs(p_crit - 0.05) < 1e-6

        # pure null: all relative risks 1, n=20,000, 200 seeded replications;
        # per-variable false-significance rate at alpha=0.05 must be mild
        significant = 0
        total = 0
        for seed in range(200):
            result = generate_portfolio(SynthConfig(seed=1000 + seed).null_effects())
            fit, _ = fit_feature_model(result.dataset, RETAINED, offset="exposure")
            for row in glm.wald_tests(fit):
                if row.name == "intercept" or row.p_value is None:
                    continue
                total += 1
                significant += row.p_value < 0.05
        rate = significant / total
        assert 0.01 <= rate <= 0.10, f"false-significance rate {rate:.4f} over {total}"


# --- 5. Gini ---------------------------------------------------------------------

def test_gini_hand_maximality_invariance():
    with criterion("gini-oracles"):
        # hand instances to 1e-12
        two = [ScoredPolicy(1.0, 1.0, 0), ScoredPolicy(2.0, 1.0, 1)]
        assert abs(gini(two) - 0.5) < 1e-12
        assert lorenz_curve(two) == [(0.0, 0.0), (0.5, 0.0), (1.0, 1.0)]
        tied = [ScoredPolicy(1.0, 1.0, 1), ScoredPolicy(1.0, 1.0, 0)]
        assert abs(gini(tied)) < 1e-12
        four = [
            ScoredPolicy(3.0, 1.0, 1),
            ScoredPolicy(1.0, 2.0, 0),
            ScoredPolicy(2.0, 1.0, 2),
            ScoredPolicy(4.0, 1.0, 3),
        ]
        # by hand: area 1 - [0.4*0 + 0.2*(0+1/3) + 0.2*(1/3+1/2) + 0.2*(1/2+1)]
        expected = 1.0 - (0.2 * (1 / 3) + 0.2 * (1 / 3 + 1 / 2) + 0.2 * (3 / 2))
        assert abs(gini(four) - expected) < 1e-12

        # brute-force maximality over all score orderings, n <= 6
        rng = np.random.default_rng(7)
        for _ in range(40):
            n = int(rng.integers(2, 7))
            weights = np.round(rng.uniform(0.1, 2.0, n), 3)
            outcomes = rng.poisson(1.0, n)
            if outcomes.sum() == 0:
                outcomes[0] = 1
            best = -2.0
            for perm in itertools.permutations(range(n)):
                scores = np.empty(n)
                for rank, idx in enumerate(perm):
                    scores[idx] = rank
                best = max(best, gini((scores, weights, outcomes)))
            by_rate = gini((outcomes / weights, weights, outcomes))
            assert abs(by_rate - best) < 1e-12

        # monotone-transform invariance on 1,000 random instances
        count = 0
        while count < 1000:
            n = int(rng.integers(2, 15))
            scores = np.round(rng.uniform(0, 1, n), 2)
            weights = rng.uniform(0.1, 2.0, n)
            outcomes = rng.poisson(0.8, n)
            if outcomes.sum() == 0:
                continue
            g = gini((scores, weights, outcomes))
            assert abs(gini((np.exp(3 * scores) + 5.0, weights, outcomes)) - g) < 1e-12
            count += 1


# --- 6. bootstrap model comparison -----------------------------------------------

def test_model_comparison_default_portfolio_and_null():
    with criterion("model-comparison"):
        # default 20k portfolio through the calibrated annotation pipeline
        result = generate_portfolio(SynthConfig())
        dataset = build_modeling_dataset(loaded_from(result), calibrate=True)
        report = bootstrap_evaluate(
            dataset, RETAINED, trials=20, split_fraction=0.2, base_seed=0
        )
        summary = report.summary()
        assert summary["failures"] == 0
        assert 0.30 <= summary["mean_gini_B"] <= 0.45, summary["mean_gini_B"]
        assert summary["win_count_C_over_B"] >= 15, summary["win_count_C_over_B"]
        assert summary["mean_delta_C_minus_B"] >= 0.01, summary["mean_delta_C_minus_B"]

        # pure-null config: no systematic C-over-B advantage; the mean win
        # count over 50 replications stays in the central 95% range of
        # Binomial(20, 0.5), i.e. [6, 14]
        wins = []
        for seed in range(50):
            null_result = generate_portfolio(SynthConfig(seed=seed).null_effects())
            null_report = bootstrap_evaluate(
                null_result.dataset, RETAINED, trials=20, split_fraction=0.2, base_seed=seed
            )
            wins.append(null_report.summary()["win_count_C_over_B"])
        mean_wins = float(np.mean(wins))
        assert 6.0 <= mean_wins <= 14.0, f"mean null win count {mean_wins}"


# --- 7. calibration ----------------------------------------------------------------

def test_calibration_moment_match_and_recovery_gain():
    with criterion("calibration"):
        assert abs(moment_match(4.0, 2.0, 1.0, 2.5, 0.5) - 3.5) < 1e-15

        # unclamped synthetic ratings: calibrated per-annotator mean/sd hit
        # the pooled targets within 1e-9
        schema = AnnotationSchema(
            variables=(Variable(name="wealth", kind="ordinal", ordinal_range=(1, 10)),)
        )
        rng = np.random.default_rng(12)
        records = []
        for annotator, bias, scale in [("a", 0.0, 1.0), ("b", 0.8, 1.2), ("c", -0.6, 0.8)]:
            for i in range(300):
                v = 5.5 + scale * rng.normal(0, 0.6) + bias
                records.append(AnnotationRecord(f"{annotator}{i}", annotator, "t", {"wealth": v}))
        pooled = np.array([r.values["wealth"] for r in records], dtype=float)
        calibrated = calibrate_annotators(records, schema)
        for annotator in ("a", "b", "c"):
            vals = np.array(
                [r.values["wealth"] for r in calibrated if r.annotator_id == annotator]
            )
            assert vals.min() > 1 and vals.max() < 10  # nothing clamped
            assert abs(vals.mean() - pooled.mean()) < 1e-9
            assert abs(vals.std() - pooled.std()) < 1e-9

        # planted-effect recovery improves with calibration over 20 seeds
        mae = {True: [], False: []}
        for seed in range(20):
            result = generate_portfolio(SynthConfig(seed=seed, annotators=biased_annotators()))
            truth = {k: math.log(v.relative_risk) for k, v in result.config.effects.items()}
            data = loaded_from(result)
            for calibrate in (True, False):
                dataset = build_modeling_dataset(data, calibrate=calibrate)
                fit, _ = fit_feature_model(dataset, RETAINED, offset="exposure")
                errors = [abs(fit.coefficient(n) - truth[n]) for n in RETAINED if n in fit.names]
                mae[calibrate].append(float(np.mean(errors)))
        assert np.mean(mae[True]) < np.mean(mae[False]), (
            f"calibrated MAE {np.mean(mae[True]):.4f} vs raw {np.mean(mae[False]):.4f}"
        )


# --- 8. pipeline determinism --------------------------------------------------------

def run_pipeline(root: Path) -> dict[str, str]:
    runner = CliRunner()
    root.mkdir(parents=True, exist_ok=True)
    fixtures = root / "fixtures"
    config = root / "config.json"
    config.write_text(json.dumps({"n_policies": 3000, "common_size": 150, "seed": 17}))

    steps = [
        ["synth", "--config", str(config), "--out", str(fixtures)],
        ["kappa", "--annotations", str(fixtures / "annotations.csv"),
         "--common", str(fixtures / "common_set.txt"), "--out", str(root / "kappa.csv")],
        ["calibrate", "--annotations", str(fixtures / "annotations.csv"),
         "--out", str(root / "calibrated.csv")],
        ["fit", "--dataset", str(fixtures), "--out", str(root / "model.json")],
        ["evaluate", "--dataset", str(fixtures), "--trials", "5", "--seed", "3",
         "--out", str(root / "eval")],
    ]
    for args in steps:
        outcome = runner.invoke(cli_main, args)
        assert outcome.exit_code == 0, (args[0], outcome.output)
    hashes = {}
    for path in sorted(root.rglob("*")):
        if path.is_file() and path != config:
            hashes[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return hashes


def test_pipeline_determinism(tmp_path):
    with criterion("pipeline-determinism"):
        first = run_pipeline(tmp_path / "run1")
        second = run_pipeline(tmp_path / "run2")
        assert first == second
