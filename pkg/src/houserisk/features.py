"""Annotator calibration and simplification of annotations into binary
modeling features.

Calibration affinely maps each annotator's ordinal ratings onto the
pooled mean and standard deviation, so systematic annotator bias and
dispersion differences wash out before thresholding.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from statistics import median
from typing import Optional, Sequence

import numpy as np

from .annotations import AnnotationRecord
from .schema import MULTI_CHOICE, ORDINAL, SINGLE_CHOICE, AnnotationSchema, SchemaError


@dataclass(frozen=True)
class FeatureVector:
    """Binary indicators for retained variables plus raw ordinals for the
    variables excluded from simplification."""

    address_id: str
    indicators: dict[str, int]
    raw_ordinals: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict[str, float]:
        out: dict[str, float] = dict(self.indicators)
        out.update(self.raw_ordinals)
        return out


def moment_match(x: float, own_mean: float, own_sd: float, pooled_mean: float, pooled_sd: float) -> float:
    """Affine calibration map: (x - m_a)/s_a * s + m when s_a > 0, else a
    pure shift x - m_a + m."""
    if own_sd > 0:
        return (x - own_mean) / own_sd * pooled_sd + pooled_mean
    return x - own_mean + pooled_mean


def calibrate_annotators(
    records: Sequence[AnnotationRecord], schema: AnnotationSchema
) -> list[AnnotationRecord]:
    """Moment-match each annotator's ordinal ratings to the pooled mean and
    standard deviation; choice variables pass through unchanged.

    Per annotator a and ordinal variable v with own stats (m_a, s_a) and
    pooled stats (m, s): x -> (x - m_a) / s_a * s + m when s_a > 0, else
    x -> x - m_a + m. Results are clamped to the variable's range.
    Annotators with a single rating for v pass through with a warning.
    """
    annotators = sorted({r.annotator_id for r in records})
    ordinals = [v for v in schema if v.kind == ORDINAL]

    maps: dict[tuple[str, str], tuple[float, float]] = {}  # (annotator, var) -> (scale, shift)
    for variable in ordinals:
        pooled = np.array([float(r.values[variable.name]) for r in records])
        if pooled.size == 0:
            continue
        m, s = float(pooled.mean()), float(pooled.std())
        for annotator in annotators:
            own = np.array(
                [float(r.values[variable.name]) for r in records if r.annotator_id == annotator]
            )
            if own.size == 0:
                continue
            if own.size == 1:
                warnings.warn(
                    f"annotator {annotator} has a single rating for {variable.name}; "
                    "passing through uncalibrated"
                )
                continue
            m_a, s_a = float(own.mean()), float(own.std())
            zero = moment_match(0.0, m_a, s_a, m, s)
            maps[(annotator, variable.name)] = (moment_match(1.0, m_a, s_a, m, s) - zero, zero)

    calibrated = []
    for record in records:
        values = dict(record.values)
        for variable in ordinals:
            key = (record.annotator_id, variable.name)
            if key not in maps:
                continue
            scale, shift = maps[key]
            lo, hi = variable.ordinal_range
            x = float(record.values[variable.name]) * scale + shift
            values[variable.name] = min(max(x, float(lo)), float(hi))
        calibrated.append(replace(record, values=values))
    return calibrated


def ordinal_thresholds(
    records: Sequence[AnnotationRecord], schema: AnnotationSchema
) -> dict[str, float]:
    """Binarization cut points: the schema's configured threshold, or the
    pooled median of (calibrated) values when none is configured."""
    thresholds = {}
    for variable in schema.retained:
        if variable.kind != ORDINAL:
            continue
        if variable.threshold is not None:
            thresholds[variable.name] = variable.threshold
        else:
            values = [float(r.values[variable.name]) for r in records]
            if not values:
                raise SchemaError(f"no values to derive a threshold for {variable.name}")
            thresholds[variable.name] = float(median(values))
    return thresholds


def _choice_indicator(variable, value) -> int:
    codes = {value} if variable.kind == SINGLE_CHOICE else set(value)
    unknown = codes - set(variable.codes)
    if unknown:
        raise SchemaError(f"{variable.name}: unmapped category code {sorted(unknown)[0]!r}")
    return int(codes <= variable.positive_codes)


def simplify_features(
    records: Sequence[AnnotationRecord],
    schema: AnnotationSchema,
    thresholds: Optional[dict[str, float]] = None,
) -> list[FeatureVector]:
    """Map calibrated annotations to one FeatureVector per address.

    Ordinals binarize as value > threshold; single-choice codes map to 1
    when in the variable's positive set; multi-choice sets map to 1 only
    when every selected code is positive. Addresses with several records
    take the one from the lexicographically smallest annotator_id.
    """
    if thresholds is None:
        thresholds = ordinal_thresholds(records, schema)

    chosen: dict[str, AnnotationRecord] = {}
    for record in records:
        current = chosen.get(record.address_id)
        if current is None or record.annotator_id < current.annotator_id:
            chosen[record.address_id] = record

    vectors = []
    for address_id in sorted(chosen):
        record = chosen[address_id]
        indicators: dict[str, int] = {}
        raw: dict[str, float] = {}
        for variable in schema:
            value = record.values[variable.name]
            if variable.excluded:
                if variable.kind == ORDINAL:
                    raw[variable.name] = float(value)
                continue
            if variable.kind == ORDINAL:
                cut = thresholds[variable.name]
                x = float(value)
                lo, hi = variable.ordinal_range
                assert lo <= x <= hi, f"{variable.name}: {x} escaped clamping"
                indicators[variable.name] = int(x > cut)
            else:
                indicators[variable.name] = _choice_indicator(variable, value)
        vectors.append(FeatureVector(address_id=address_id, indicators=indicators, raw_ordinals=raw))
    return vectors


def feature_table(vectors: Sequence[FeatureVector]) -> dict[str, dict[str, float]]:
    """Dataset-join form: address_id -> feature name -> value."""
    return {v.address_id: v.as_dict() for v in vectors}
