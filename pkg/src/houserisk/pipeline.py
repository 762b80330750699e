"""End-to-end glue: load a fixture directory, run the annotation
processing, and produce modeling-ready datasets and fits."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import glm
from .annotations import AnnotationRecord, read_annotations_csv
from .features import calibrate_annotators, feature_table, simplify_features
from .portfolio import (
    AddressRegistry,
    Dataset,
    PolicyRecord,
    ingest_addresses,
    ingest_policies,
    join_dataset,
)
from .schema import AnnotationSchema, default_schema


@dataclass(frozen=True)
class LoadedData:
    records: tuple[PolicyRecord, ...]
    registry: AddressRegistry
    annotations: list[AnnotationRecord]
    schema: AnnotationSchema
    common_set: tuple[str, ...]


def load_fixture_dir(directory, schema: Optional[AnnotationSchema] = None) -> LoadedData:
    directory = Path(directory)
    if schema is None:
        schema_path = directory / "schema.json"
        schema = AnnotationSchema.load(schema_path) if schema_path.exists() else default_schema()
    result = ingest_policies(directory / "policies.csv")
    registry = ingest_addresses(directory / "addresses.csv")
    annotations = read_annotations_csv(directory / "annotations.csv", schema)
    common_path = directory / "common_set.txt"
    common = tuple(common_path.read_text().split()) if common_path.exists() else ()
    return LoadedData(
        records=result.records,
        registry=registry,
        annotations=annotations,
        schema=schema,
        common_set=common,
    )


def build_modeling_dataset(
    data: LoadedData, calibrate: bool = True, provenance: str = "real-ingest"
) -> Dataset:
    """Calibrate annotators, simplify to binary features, and join with
    the policy records (excluded addresses dropped)."""
    records = data.annotations
    if calibrate:
        records = calibrate_annotators(records, data.schema)
    vectors = simplify_features(records, data.schema)
    return join_dataset(data.records, data.registry, feature_table(vectors), provenance=provenance)


def fit_feature_model(
    dataset: Dataset,
    feature_names: Sequence[str],
    offset: str = "model_b",
    options: glm.FitOptions = glm.FitOptions(),
) -> tuple[glm.FittedModel, glm.DesignMatrix]:
    """Fit the claim-count GLM on the dataset's features.

    offset="model_b" uses model-B frequency x exposure (the residual
    feature model); offset="exposure" uses exposure alone.
    """
    address_ids = [r.address_id for r in dataset.records]
    design = glm.build_design(dataset.features, address_ids, list(feature_names))
    y = np.array([r.claim_count for r in dataset.records], dtype=float)
    exposure = np.array([r.exposure for r in dataset.records], dtype=float)
    if offset == "model_b":
        o = np.array([r.model_b_frequency for r in dataset.records]) * exposure
    elif offset == "exposure":
        o = exposure
    else:
        raise ValueError(f"unknown offset kind {offset!r}")
    return glm.fit_poisson(design, y, o, options), design


def retained_feature_names(schema: AnnotationSchema) -> list[str]:
    return [v.name for v in schema.retained]
