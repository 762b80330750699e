"""Seeded synthetic portfolio generator.

Produces a portfolio with planted house-feature effects, an incumbent
"model B" frequency column of tunable quality, and noisy multi-annotator
annotations, so the whole pipeline can be exercised quantitatively
without the private source data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .annotations import AnnotationRecord, write_annotations_csv
from .features import FeatureVector, feature_table
from .portfolio import (
    AddressEntry,
    AddressRegistry,
    Dataset,
    PolicyRecord,
    write_addresses_csv,
    write_policies_csv,
)
from .schema import (
    HOUSE_TYPE_CODES,
    NEIGHBOURHOOD_CODES,
    RESIDENTIAL_CODES,
    AnnotationSchema,
    default_schema,
)

TIMESTAMP = "2014-01-01T00:00:00"  # fixed; fixture files must be byte-stable

PLANTED_VARIABLES = ("neighbourhood", "sv_quality", "house_type", "house_age", "house_condition")


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureEffect:
    prevalence: float
    relative_risk: float

    def __post_init__(self) -> None:
        if not 0.0 < self.prevalence < 1.0:
            raise SynthError(f"prevalence must lie in (0,1): {self.prevalence}")
        if self.relative_risk <= 0:
            raise SynthError(f"relative risk must be positive: {self.relative_risk}")


@dataclass(frozen=True)
class AnnotatorSpec:
    annotator_id: str
    bias: float = 0.0        # additive shift on ordinal ratings
    scale: float = 1.0       # multiplicative stretch on ordinal ratings
    noise_sd: float = 0.0    # jitter sd on ordinal ratings
    flip_rate: float = 0.0   # symmetric category-flip probability on choice variables


def default_effects() -> dict[str, FeatureEffect]:
    return {
        "neighbourhood": FeatureEffect(prevalence=0.45, relative_risk=0.45),
        "sv_quality": FeatureEffect(prevalence=0.60, relative_risk=0.55),
        "house_type": FeatureEffect(prevalence=0.35, relative_risk=2.2),
        "house_age": FeatureEffect(prevalence=0.40, relative_risk=2.4),
        "house_condition": FeatureEffect(prevalence=0.40, relative_risk=2.0),
    }


def default_annotators() -> tuple[AnnotatorSpec, ...]:
    return (
        AnnotatorSpec("ann-1", bias=0.0, scale=1.0, noise_sd=0.2, flip_rate=0.04),
        AnnotatorSpec("ann-2", bias=0.4, scale=1.0, noise_sd=0.2, flip_rate=0.04),
        AnnotatorSpec("ann-3", bias=-0.4, scale=1.1, noise_sd=0.2, flip_rate=0.04),
        AnnotatorSpec("ann-4", bias=0.25, scale=0.9, noise_sd=0.2, flip_rate=0.04),
    )


def biased_annotators() -> tuple[AnnotatorSpec, ...]:
    """Annotators with pronounced systematic bias and dispersion mismatch,
    for exercising calibration."""
    return (
        AnnotatorSpec("ann-1", bias=0.0, scale=1.0, noise_sd=0.2, flip_rate=0.04),
        AnnotatorSpec("ann-2", bias=0.9, scale=1.0, noise_sd=0.2, flip_rate=0.04),
        AnnotatorSpec("ann-3", bias=-0.9, scale=1.2, noise_sd=0.2, flip_rate=0.04),
        AnnotatorSpec("ann-4", bias=0.5, scale=0.75, noise_sd=0.2, flip_rate=0.04),
    )


@dataclass(frozen=True)
class SynthConfig:
    n_policies: int = 20_000
    target_frequency: float = 0.05
    exposure_full_year_weight: float = 0.5
    exposure_min: float = 1.0 / 12.0
    effects: dict[str, FeatureEffect] = field(default_factory=default_effects)
    model_b_quality: float = 0.7   # share of latent log-frequency kept in model B
    model_b_noise_sd: float = 0.25
    annotators: tuple[AnnotatorSpec, ...] = field(default_factory=default_annotators)
    common_size: int = 500
    n_excluded_addresses: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_policies < 1:
            raise SynthError("n_policies must be >= 1")
        implied = self.target_frequency
        if not 0.0 < implied < 1.0:
            raise SynthError(f"target mean frequency must lie in (0,1): {implied}")
        worst = implied
        for eff in self.effects.values():
            worst *= max(eff.relative_risk, 1.0) / (1 - eff.prevalence + eff.prevalence * eff.relative_risk)
        if worst >= 1.0:
            raise SynthError(f"config implies per-policy frequencies up to {worst:.3f} >= 1")
        if not 0.0 <= self.model_b_quality <= 1.0:
            raise SynthError("model_b_quality must lie in [0,1]")

    def null_effects(self) -> "SynthConfig":
        """Same config with every relative risk forced to 1 (pure null)."""
        effects = {k: FeatureEffect(v.prevalence, 1.0) for k, v in self.effects.items()}
        return SynthConfig(
            n_policies=self.n_policies,
            target_frequency=self.target_frequency,
            exposure_full_year_weight=self.exposure_full_year_weight,
            exposure_min=self.exposure_min,
            effects=effects,
            model_b_quality=self.model_b_quality,
            model_b_noise_sd=self.model_b_noise_sd,
            annotators=self.annotators,
            common_size=self.common_size,
            n_excluded_addresses=self.n_excluded_addresses,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return {
            "n_policies": self.n_policies,
            "target_frequency": self.target_frequency,
            "exposure_full_year_weight": self.exposure_full_year_weight,
            "exposure_min": self.exposure_min,
            "effects": {
                k: {"prevalence": v.prevalence, "relative_risk": v.relative_risk}
                for k, v in self.effects.items()
            },
            "model_b_quality": self.model_b_quality,
            "model_b_noise_sd": self.model_b_noise_sd,
            "annotators": [
                {
                    "annotator_id": a.annotator_id,
                    "bias": a.bias,
                    "scale": a.scale,
                    "noise_sd": a.noise_sd,
                    "flip_rate": a.flip_rate,
                }
                for a in self.annotators
            ],
            "common_size": self.common_size,
            "n_excluded_addresses": self.n_excluded_addresses,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        kwargs = dict(d)
        if "effects" in kwargs:
            kwargs["effects"] = {k: FeatureEffect(**v) for k, v in kwargs["effects"].items()}
        if "annotators" in kwargs:
            kwargs["annotators"] = tuple(AnnotatorSpec(**a) for a in kwargs["annotators"])
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "SynthConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class SynthTruth:
    feature_indicators: dict[str, dict[str, int]]   # address_id -> variable -> 0/1
    latent_frequency: dict[str, float]
    expected_counts: dict[str, float]
    relative_risks: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "relative_risks": self.relative_risks,
            "addresses": {
                a: {
                    "features": self.feature_indicators[a],
                    "latent_frequency": self.latent_frequency[a],
                    "expected_count": self.expected_counts[a],
                }
                for a in sorted(self.feature_indicators)
            },
        }


@dataclass(frozen=True)
class SynthResult:
    config: SynthConfig
    dataset: Dataset              # policies joined to TRUE feature indicators
    registry: AddressRegistry
    annotations: tuple[AnnotationRecord, ...]
    common_set: tuple[str, ...]
    truth: SynthTruth
    schema: AnnotationSchema


def _true_annotation_values(rng, schema, x: dict[str, int], density: int, wealth: int) -> dict:
    """Raw 7-variable labels consistent with the binary truth."""
    residential = sorted(RESIDENTIAL_CODES)
    non_residential = [c for c in NEIGHBOURHOOD_CODES if c not in RESIDENTIAL_CODES]
    if x["neighbourhood"]:
        k = 1 + int(rng.integers(0, 2))
        codes = frozenset(rng.choice(residential, size=k, replace=False).tolist())
    else:
        codes = frozenset(
            {str(rng.choice(residential)), str(rng.choice(non_residential))}
        )
    sv = "good" if x["sv_quality"] else ("bad" if rng.random() < 0.8 else "missing")
    house_type = (
        "detached_single_family"
        if x["house_type"]
        else str(rng.choice([c for c in HOUSE_TYPE_CODES if c != "detached_single_family"]))
    )
    age = 3 if x["house_age"] else int(rng.integers(1, 3))
    condition = 3 if x["house_condition"] else int(rng.integers(1, 3))
    return {
        "neighbourhood": codes,
        "density": density,
        "sv_quality": sv,
        "house_type": house_type,
        "house_age": age,
        "house_condition": condition,
        "wealth": wealth,
    }


def _noisy_values(rng, schema, values: dict, spec: AnnotatorSpec) -> dict:
    out = dict(values)
    for variable in schema:
        if variable.kind == "ordinal":
            lo, hi = variable.ordinal_range
            x = float(values[variable.name])
            mid = (lo + hi) / 2.0
            noisy = mid + (x - mid) * spec.scale + spec.bias + spec.noise_sd * rng.standard_normal()
            out[variable.name] = int(min(max(round(noisy), lo), hi))
        elif variable.kind == "single-choice":
            if rng.random() < spec.flip_rate:
                others = [c for c in variable.codes if c != values[variable.name]]
                out[variable.name] = str(rng.choice(others))
        else:
            codes = set(values[variable.name])
            for code in variable.codes:
                if rng.random() < spec.flip_rate:
                    codes.symmetric_difference_update({code})
            if not codes:
                codes = {str(rng.choice(variable.codes))}
            out[variable.name] = frozenset(codes)
    return out


def generate_portfolio(config: SynthConfig) -> SynthResult:
    """Draw the full synthetic bundle: policies, address registry, true
    features, model-B realizations, and noisy annotations (including the
    common set labeled by every annotator)."""
    rng = np.random.default_rng(config.seed)
    schema = default_schema()
    n = config.n_policies

    address_ids = [f"SYN-{i:06d}" for i in range(n)]
    policy_ids = [f"POL-{i:06d}" for i in range(n)]

    # planted binary truth
    x = {}
    for name in PLANTED_VARIABLES:
        eff = config.effects[name]
        x[name] = (rng.random(n) < eff.prevalence).astype(int)
    density = rng.integers(1, 6, size=n)
    wealth = rng.integers(1, 11, size=n)

    # latent frequency, normalized so the expected mean hits the target
    base = config.target_frequency
    log_f = np.zeros(n)
    for name in PLANTED_VARIABLES:
        eff = config.effects[name]
        base /= 1 - eff.prevalence + eff.prevalence * eff.relative_risk
        log_f += x[name] * np.log(eff.relative_risk)
    log_f += np.log(base)
    latent = np.exp(log_f)

    # exposure: point mass at a full year plus uniform partial terms
    full = rng.random(n) < config.exposure_full_year_weight
    exposure = np.where(full, 1.0, rng.uniform(config.exposure_min, 1.0, size=n))

    claims = rng.poisson(latent * exposure)

    # model B: geometric mixing of the latent log-frequency with noise,
    # renormalized back to the target mean frequency
    centered = log_f - log_f.mean()
    log_b = config.model_b_quality * centered + config.model_b_noise_sd * rng.standard_normal(n)
    model_b = np.exp(log_b)
    model_b *= config.target_frequency / model_b.mean()

    records = tuple(
        PolicyRecord(
            policy_id=policy_ids[i],
            address_id=address_ids[i],
            exposure=float(exposure[i]),
            claim_count=int(claims[i]),
            model_b_frequency=float(model_b[i]),
        )
        for i in range(n)
    )

    registry = AddressRegistry()
    for i, address_id in enumerate(address_ids):
        lat = 52.0 + float(rng.uniform(-2.0, 2.0))
        lon = 19.0 + float(rng.uniform(-3.0, 3.0))
        registry.add(
            AddressEntry(
                address_id=address_id,
                raw_address=f"{i + 1} Synthetic Street, Testville",
                status="resolved",
                location=(round(lat, 6), round(lon, 6)),
            )
        )
    for j in range(config.n_excluded_addresses):
        status = "foreign" if j % 2 == 0 else "unresolved"
        aid = f"SYN-X{j:05d}"
        registry.add(AddressEntry(address_id=aid, raw_address=f"{j + 1} Elsewhere Road", status=status))
        registry.excluded[aid] = status

    # true feature vectors (the generator's own truth record)
    vectors = []
    for i, address_id in enumerate(address_ids):
        vectors.append(
            FeatureVector(
                address_id=address_id,
                indicators={name: int(x[name][i]) for name in PLANTED_VARIABLES},
                raw_ordinals={"density": float(density[i]), "wealth": float(wealth[i])},
            )
        )
    dataset = Dataset(records=records, features=feature_table(vectors), provenance="synthetic")

    # annotation campaign: common set for everyone, disjoint remainder
    order = rng.permutation(n)
    common = sorted(address_ids[i] for i in order[: min(config.common_size, n)])
    remainder = [address_ids[i] for i in order[min(config.common_size, n):]]
    batches: dict[str, list[str]] = {a.annotator_id: [] for a in config.annotators}
    for j, address_id in enumerate(remainder):
        spec = config.annotators[j % len(config.annotators)]
        batches[spec.annotator_id].append(address_id)

    index_of = {a: i for i, a in enumerate(address_ids)}
    true_values = {}
    for address_id in address_ids:
        i = index_of[address_id]
        true_values[address_id] = _true_annotation_values(
            rng, schema, {k: int(v[i]) for k, v in x.items()}, int(density[i]), int(wealth[i])
        )

    annotations = []
    for spec in config.annotators:
        for address_id in common + sorted(batches[spec.annotator_id]):
            values = _noisy_values(rng, schema, true_values[address_id], spec)
            annotations.append(
                AnnotationRecord(
                    address_id=address_id,
                    annotator_id=spec.annotator_id,
                    timestamp=TIMESTAMP,
                    values=values,
                )
            )

    truth = SynthTruth(
        feature_indicators={
            a: {name: int(x[name][index_of[a]]) for name in PLANTED_VARIABLES} for a in address_ids
        },
        latent_frequency={a: float(latent[index_of[a]]) for a in address_ids},
        expected_counts={a: float(latent[index_of[a]] * exposure[index_of[a]]) for a in address_ids},
        relative_risks={k: v.relative_risk for k, v in config.effects.items()},
    )

    return SynthResult(
        config=config,
        dataset=dataset,
        registry=registry,
        annotations=tuple(annotations),
        common_set=tuple(common),
        truth=truth,
        schema=schema,
    )


def export_fixtures(result: SynthResult, directory) -> dict[str, Path]:
    """Write policies.csv, addresses.csv, annotations.csv, truth.json,
    config.json, and common_set.txt; re-ingest reproduces the dataset."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "policies": directory / "policies.csv",
        "addresses": directory / "addresses.csv",
        "annotations": directory / "annotations.csv",
        "truth": directory / "truth.json",
        "config": directory / "config.json",
        "common_set": directory / "common_set.txt",
        "schema": directory / "schema.json",
    }
    write_policies_csv(result.dataset.records, paths["policies"])
    entries = [result.registry.entries[k] for k in sorted(result.registry.entries)]
    write_addresses_csv(entries, paths["addresses"])
    write_annotations_csv(result.annotations, result.schema, paths["annotations"])
    paths["truth"].write_text(json.dumps(result.truth.to_dict(), indent=2, sort_keys=True) + "\n")
    paths["config"].write_text(json.dumps(result.config.to_dict(), indent=2) + "\n")
    paths["common_set"].write_text("\n".join(result.common_set) + "\n")
    result.schema.save(paths["schema"])
    return paths
