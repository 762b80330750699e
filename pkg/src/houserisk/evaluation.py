"""Lorenz curves, Gini coefficients, and the repeated train/test
comparison of the null model (A), the incumbent model (B, given as a
realization column), and the feature model (C, fitted on top of B's
offset).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import glm
from .portfolio import Dataset


class EvaluationError(ValueError):
    pass


class UndefinedLorenz(EvaluationError):
    """No observed outcomes: the Lorenz curve has no y-axis mass."""


@dataclass(frozen=True)
class ScoredPolicy:
    score: float      # predicted expected claim count
    weight: float     # exposure
    outcome: int      # observed claims


def _as_arrays(policies):
    if isinstance(policies, tuple) and len(policies) == 3:
        score, weight, outcome = (np.asarray(a, dtype=float) for a in policies)
    else:
        score = np.array([p.score for p in policies], dtype=float)
        weight = np.array([p.weight for p in policies], dtype=float)
        outcome = np.array([p.outcome for p in policies], dtype=float)
    if score.size == 0:
        raise EvaluationError("no policies")
    if np.any(weight <= 0):
        raise EvaluationError("weights must be positive")
    if np.any(outcome < 0):
        raise EvaluationError("outcomes must be nonnegative")
    return score, weight, outcome


def lorenz_curve(policies) -> list[tuple[float, float]]:
    """Lorenz points from (0,0) to (1,1): cumulative weight share vs
    cumulative outcome share under ascending score order, with exact-score
    ties merged into single segments.

    Accepts a sequence of ScoredPolicy or an (scores, weights, outcomes)
    array triple.
    """
    score, weight, outcome = _as_arrays(policies)
    total_outcome = outcome.sum()
    if total_outcome == 0:
        raise UndefinedLorenz("total outcomes are zero")
    total_weight = weight.sum()

    order = np.argsort(score, kind="stable")
    score, weight, outcome = score[order], weight[order], outcome[order]

    points = [(0.0, 0.0)]
    cw = co = 0.0
    i = 0
    n = score.size
    while i < n:
        j = i
        while j < n and score[j] == score[i]:
            j += 1
        cw += weight[i:j].sum()
        co += outcome[i:j].sum()
        points.append((cw / total_weight, co / total_outcome))
        i = j
    points[-1] = (1.0, 1.0)
    return points


def gini(policies) -> float:
    """Twice the area between the diagonal and the Lorenz curve, by the
    trapezoid rule: G = 1 - sum (x_k - x_{k-1})(y_k + y_{k-1})."""
    points = lorenz_curve(policies)
    area2 = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area2 += (x1 - x0) * (y1 + y0)
    return 1.0 - area2


@dataclass(frozen=True)
class TrialResult:
    trial_index: int
    seed: int
    test_gini_a: Optional[float] = None
    test_gini_b: Optional[float] = None
    test_gini_c: Optional[float] = None
    failed: bool = False
    error: Optional[str] = None


@dataclass(frozen=True)
class GiniReport:
    trials: tuple[TrialResult, ...]
    split_fraction: float
    base_seed: int
    feature_names: tuple[str, ...] = ()

    @property
    def successes(self) -> list[TrialResult]:
        return [t for t in self.trials if not t.failed]

    def summary(self) -> dict:
        return improvement_summary(self)

    def to_dict(self) -> dict:
        return {
            "base_seed": self.base_seed,
            "split_fraction": self.split_fraction,
            "feature_names": list(self.feature_names),
            "trials": [
                {
                    "trial_index": t.trial_index,
                    "seed": t.seed,
                    "test_gini_A": t.test_gini_a,
                    "test_gini_B": t.test_gini_b,
                    "test_gini_C": t.test_gini_c,
                    "failed": t.failed,
                    "error": t.error,
                }
                for t in self.trials
            ],
            "summary": self.summary(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_plot_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["trial_index", "gini_A", "gini_B", "gini_C"])
        for t in self.successes:
            writer.writerow([t.trial_index, repr(t.test_gini_a), repr(t.test_gini_b), repr(t.test_gini_c)])
        return buf.getvalue()


def improvement_summary(report: GiniReport) -> dict:
    """Per-model mean test Gini, C-over-B win count, and mean C - B delta
    over the successful trials."""
    ok = report.successes
    if not ok:
        raise EvaluationError("no successful trials to summarize")
    a = np.array([t.test_gini_a for t in ok])
    b = np.array([t.test_gini_b for t in ok])
    c = np.array([t.test_gini_c for t in ok])
    return {
        "trials": len(report.trials),
        "failures": len(report.trials) - len(ok),
        "mean_gini_A": float(a.mean()),
        "mean_gini_B": float(b.mean()),
        "mean_gini_C": float(c.mean()),
        "mean_delta_C_minus_B": float((c - b).mean()),
        "win_count_C_over_B": int(np.sum(c > b)),
    }


def _dataset_arrays(dataset: Dataset, feature_names: Sequence[str]):
    records = dataset.records
    address_ids = [r.address_id for r in records]
    y = np.array([r.claim_count for r in records], dtype=float)
    exposure = np.array([r.exposure for r in records], dtype=float)
    model_b = np.array([r.model_b_frequency for r in records], dtype=float)
    X = np.column_stack(
        [np.ones(len(records))]
        + [
            np.array([dataset.features[a][name] for a in address_ids], dtype=float)
            for name in feature_names
        ]
    )
    return X, y, exposure, model_b


def bootstrap_evaluate(
    dataset: Dataset,
    feature_names: Sequence[str],
    trials: int = 20,
    split_fraction: float = 0.2,
    base_seed: int = 0,
    with_replacement: bool = False,
    options: glm.FitOptions = glm.FitOptions(),
) -> GiniReport:
    """Repeated random train/test evaluation of Models A, B, C.

    Each trial t reseeds at base_seed + t, splits off a ``split_fraction``
    test set (uniform, without replacement by default), fits A
    (intercept-only, exposure offset) and C (features on top of the
    model-B offset) on the training part, and records test-set Ginis of
    all three scores. A failing trial is recorded, not fatal.
    """
    if trials < 1:
        raise EvaluationError("trials must be >= 1")
    if not 0.0 < split_fraction < 1.0:
        raise EvaluationError("split_fraction must lie in (0, 1)")

    X, y, exposure, model_b = _dataset_arrays(dataset, feature_names)
    n = y.size
    n_test = max(1, int(round(n * split_fraction)))
    names = (glm.INTERCEPT,) + tuple(feature_names)

    results = []
    for t in range(trials):
        seed = base_seed + t
        rng = np.random.default_rng(seed)
        if with_replacement:
            train_idx = rng.integers(0, n, size=n - n_test)
            test_mask = np.ones(n, dtype=bool)
            test_mask[np.unique(train_idx)] = False
            test_idx = np.flatnonzero(test_mask)
            if test_idx.size == 0:
                test_idx = rng.integers(0, n, size=n_test)
        else:
            perm = rng.permutation(n)
            test_idx, train_idx = perm[:n_test], perm[n_test:]

        try:
            design_a = glm.DesignMatrix(values=np.ones((train_idx.size, 1)), names=(glm.INTERCEPT,))
            fit_a = glm.fit_poisson(design_a, y[train_idx], exposure[train_idx], options)

            design_c = glm.DesignMatrix(values=X[train_idx], names=names)
            offset_c = model_b[train_idx] * exposure[train_idx]
            fit_c = glm.fit_poisson(design_c, y[train_idx], offset_c, options)

            score_a = glm.predict(
                fit_a,
                glm.DesignMatrix(values=np.ones((test_idx.size, 1)), names=(glm.INTERCEPT,)),
                exposure[test_idx],
            )
            score_b = model_b[test_idx] * exposure[test_idx]
            design_c_test = glm.DesignMatrix(values=X[test_idx], names=names).select(fit_c.names)
            score_c = glm.predict(fit_c, design_c_test, model_b[test_idx] * exposure[test_idx])

            w = exposure[test_idx]
            out = y[test_idx]
            results.append(
                TrialResult(
                    trial_index=t,
                    seed=seed,
                    test_gini_a=gini((score_a, w, out)),
                    test_gini_b=gini((score_b, w, out)),
                    test_gini_c=gini((score_c, w, out)),
                )
            )
        except (glm.GlmError, EvaluationError) as exc:
            results.append(TrialResult(trial_index=t, seed=seed, failed=True, error=str(exc)))

    return GiniReport(
        trials=tuple(results),
        split_fraction=split_fraction,
        base_seed=base_seed,
        feature_names=tuple(feature_names),
    )
