"""Annotation schema: the seven house/neighbourhood variables and their
simplification into binary modeling features.

The default schema mirrors the variable set used throughout the toolkit:
a multi-choice neighbourhood type, ordinal building density, street-view
image quality, single-choice house type, ordinal house age and condition,
and an ordinal wealth estimate. Density and wealth are kept at original
granularity (no binary simplification) and are excluded from the default
design matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

SINGLE_CHOICE = "single-choice"
MULTI_CHOICE = "multi-choice"
ORDINAL = "ordinal"


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Variable:
    """One annotated variable.

    For choice variables ``codes`` lists the legal category codes and
    ``positive_codes`` drives the binary simplification (multi-choice sets
    map to 1 only when every selected code is positive). For ordinals,
    ``ordinal_range`` is the inclusive (lo, hi) integer range and
    ``threshold`` the binarization cut point; ``threshold=None`` means
    "use the pooled median of calibrated values". ``excluded=True`` keeps
    the variable out of the simplified feature set.
    """

    name: str
    kind: str
    codes: tuple[str, ...] = ()
    positive_codes: frozenset[str] = frozenset()
    ordinal_range: Optional[tuple[int, int]] = None
    threshold: Optional[float] = None
    excluded: bool = False

    def __post_init__(self) -> None:
        if self.kind not in (SINGLE_CHOICE, MULTI_CHOICE, ORDINAL):
            raise SchemaError(f"unknown variable kind: {self.kind!r}")
        if self.kind == ORDINAL:
            if self.ordinal_range is None:
                raise SchemaError(f"{self.name}: ordinal variable needs a range")
            lo, hi = self.ordinal_range
            if lo >= hi:
                raise SchemaError(f"{self.name}: empty ordinal range {self.ordinal_range}")
        elif not self.codes:
            raise SchemaError(f"{self.name}: choice variable needs category codes")

    @property
    def is_choice(self) -> bool:
        return self.kind in (SINGLE_CHOICE, MULTI_CHOICE)

    def validate_value(self, value) -> None:
        """Raise SchemaError unless ``value`` lies in this variable's domain."""
        if self.kind == ORDINAL:
            lo, hi = self.ordinal_range
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise SchemaError(f"{self.name}: expected a number, got {value!r}")
            if not (lo <= value <= hi):
                raise SchemaError(f"{self.name}: value {value} outside range [{lo}, {hi}]")
        elif self.kind == SINGLE_CHOICE:
            if value not in self.codes:
                raise SchemaError(f"{self.name}: unknown code {value!r}")
        else:
            values = value
            if isinstance(values, str) or not values:
                raise SchemaError(f"{self.name}: multi-choice value must be a nonempty set of codes")
            for code in values:
                if code not in self.codes:
                    raise SchemaError(f"{self.name}: unknown code {code!r}")


@dataclass(frozen=True)
class AnnotationSchema:
    variables: tuple[Variable, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate variable names in schema")

    def __iter__(self):
        return iter(self.variables)

    def __len__(self) -> int:
        return len(self.variables)

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise SchemaError(f"no such variable: {name!r}")

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def retained(self) -> list[Variable]:
        """Variables that simplify into binary features."""
        return [v for v in self.variables if not v.excluded]

    @property
    def ordinal_names(self) -> list[str]:
        return [v.name for v in self.variables if v.kind == ORDINAL]

    def to_dict(self) -> dict:
        out = []
        for v in self.variables:
            d: dict = {"name": v.name, "kind": v.kind}
            if v.is_choice:
                d["codes"] = list(v.codes)
                d["positive_codes"] = sorted(v.positive_codes)
            else:
                d["ordinal_range"] = list(v.ordinal_range)
                d["threshold"] = v.threshold
            d["excluded"] = v.excluded
            out.append(d)
        return {"variables": out}

    @classmethod
    def from_dict(cls, data: dict) -> "AnnotationSchema":
        variables = []
        for d in data["variables"]:
            variables.append(
                Variable(
                    name=d["name"],
                    kind=d["kind"],
                    codes=tuple(d.get("codes", ())),
                    positive_codes=frozenset(d.get("positive_codes", ())),
                    ordinal_range=tuple(d["ordinal_range"]) if d.get("ordinal_range") else None,
                    threshold=d.get("threshold"),
                    excluded=bool(d.get("excluded", False)),
                )
            )
        return cls(variables=tuple(variables))

    @classmethod
    def load(cls, path) -> "AnnotationSchema":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


NEIGHBOURHOOD_CODES = (
    "detached_houses",
    "terraced_houses",
    "blocks_of_flats",
    "farms",
    "commercial",
    "industrial",
    "greenery",
)
RESIDENTIAL_CODES = frozenset({"detached_houses", "terraced_houses", "blocks_of_flats"})

HOUSE_TYPE_CODES = (
    "detached_single_family",
    "semi_detached",
    "terraced",
    "apartment_block",
    "other",
)

SV_QUALITY_CODES = ("good", "bad", "missing")


def default_schema() -> AnnotationSchema:
    """The seven-variable schema with default simplification mappings."""
    return AnnotationSchema(
        variables=(
            Variable(
                name="neighbourhood",
                kind=MULTI_CHOICE,
                codes=NEIGHBOURHOOD_CODES,
                positive_codes=RESIDENTIAL_CODES,
            ),
            Variable(name="density", kind=ORDINAL, ordinal_range=(1, 5), excluded=True),
            Variable(
                name="sv_quality",
                kind=SINGLE_CHOICE,
                codes=SV_QUALITY_CODES,
                positive_codes=frozenset({"good"}),
            ),
            Variable(
                name="house_type",
                kind=SINGLE_CHOICE,
                codes=HOUSE_TYPE_CODES,
                positive_codes=frozenset({"detached_single_family"}),
            ),
            Variable(name="house_age", kind=ORDINAL, ordinal_range=(1, 3)),
            Variable(name="house_condition", kind=ORDINAL, ordinal_range=(1, 3)),
            Variable(name="wealth", kind=ORDINAL, ordinal_range=(1, 10), excluded=True),
        )
    )
