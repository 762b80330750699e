"""Annotation records and their CSV interchange format.

annotations.csv columns: address_id, annotator_id, timestamp, then one
column per schema variable. Multi-choice values are semicolon-joined code
lists; ordinals are numbers (real-valued after calibration).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

from .schema import MULTI_CHOICE, ORDINAL, SINGLE_CHOICE, AnnotationSchema, SchemaError

Value = Union[str, frozenset, float]

CSV_FIXED_COLUMNS = ["address_id", "annotator_id", "timestamp"]


@dataclass(frozen=True)
class AnnotationRecord:
    address_id: str
    annotator_id: str
    timestamp: str
    values: dict[str, Value]  # variable name -> code | frozenset of codes | number

    def value(self, name: str) -> Value:
        return self.values[name]


def validate_record(record: AnnotationRecord, schema: AnnotationSchema) -> None:
    """Raise SchemaError if any value falls outside its variable's domain."""
    for variable in schema:
        if variable.name not in record.values:
            raise SchemaError(f"missing value for {variable.name!r}")
        variable.validate_value(record.values[variable.name])
    extra = set(record.values) - set(schema.names)
    if extra:
        raise SchemaError(f"unknown variables: {sorted(extra)}")


def _format_value(variable, value) -> str:
    if variable.kind == MULTI_CHOICE:
        return ";".join(sorted(value))
    if variable.kind == ORDINAL:
        if isinstance(value, float) and not value.is_integer():
            return repr(value)
        return str(int(value))
    return str(value)


def _parse_value(variable, text: str):
    if variable.kind == MULTI_CHOICE:
        return frozenset(c for c in text.split(";") if c)
    if variable.kind == ORDINAL:
        number = float(text)
        return int(number) if number.is_integer() else number
    return text


def write_annotations_csv(records: Iterable[AnnotationRecord], schema: AnnotationSchema, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(annotations_csv_text(records, schema))


def annotations_csv_text(records: Iterable[AnnotationRecord], schema: AnnotationSchema) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIXED_COLUMNS + schema.names)
    for r in records:
        row = [r.address_id, r.annotator_id, r.timestamp]
        for variable in schema:
            row.append(_format_value(variable, r.values[variable.name]))
        writer.writerow(row)
    return buf.getvalue()


def read_annotations_csv(source, schema: AnnotationSchema) -> list[AnnotationRecord]:
    if isinstance(source, (str, Path)):
        stream = open(source, "r", encoding="utf-8", newline="")
        close = True
    else:
        stream, close = source, False
    try:
        reader = csv.reader(stream)
        header = next(reader, None)
        expected = CSV_FIXED_COLUMNS + schema.names
        if header != expected:
            raise SchemaError(f"annotations header mismatch: expected {expected}, got {header}")
        records = []
        for row in reader:
            if not row:
                continue
            address_id, annotator_id, timestamp = row[:3]
            values = {}
            for variable, text in zip(schema, row[3:]):
                values[variable.name] = _parse_value(variable, text)
            record = AnnotationRecord(
                address_id=address_id,
                annotator_id=annotator_id,
                timestamp=timestamp,
                values=values,
            )
            validate_record(record, schema)
            records.append(record)
        return records
    finally:
        if close:
            stream.close()
