"""Inter-rater agreement: Fleiss' kappa and Landis-Koch interpretation.

Kappa is computed with exact rational arithmetic on the category counts,
with a single float division at the end, so small-sample ties come out
identically on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .annotations import AnnotationRecord
from .schema import MULTI_CHOICE, ORDINAL, AnnotationSchema, Variable


class AgreementError(ValueError):
    pass


class DegenerateAgreement(AgreementError):
    """All ratings fall in a single category: chance agreement is 1 and
    kappa is undefined."""


def fleiss_kappa(counts: Sequence[Sequence[int]]) -> float:
    """Fleiss' kappa from an items x categories count table.

    Every item must carry the same number of ratings n >= 2 and there must
    be >= 2 categories. Raises DegenerateAgreement when expected chance
    agreement equals 1.
    """
    if not counts:
        raise AgreementError("no items")
    k = len(counts[0])
    if k < 2:
        raise AgreementError("at least 2 categories required")
    n = sum(counts[0])
    if n < 2:
        raise AgreementError("at least 2 raters required")
    for i, row in enumerate(counts):
        if len(row) != k:
            raise AgreementError(f"item {i}: ragged category row")
        if sum(row) != n:
            raise AgreementError(f"item {i}: expected {n} ratings, got {sum(row)}")
        if any(c < 0 for c in row):
            raise AgreementError(f"item {i}: negative count")

    n_items = len(counts)
    p_bar = Fraction(0)
    for row in counts:
        p_bar += Fraction(sum(c * (c - 1) for c in row), n * (n - 1))
    p_bar /= n_items

    totals = [Fraction(sum(row[j] for row in counts), n_items * n) for j in range(k)]
    p_e = sum(p * p for p in totals)

    if p_e == 1:
        raise DegenerateAgreement("all ratings fall in one category")
    return float((p_bar - p_e) / (1 - p_e))


_BANDS = [
    (0.0, "poor agreement"),
    (0.20, "slight agreement"),
    (0.40, "fair agreement"),
    (0.60, "moderate agreement"),
    (0.80, "substantial agreement"),
    (1.0, "almost perfect agreement"),
]


def interpret_kappa(kappa: float) -> str:
    """Landis-Koch verbal band for a kappa value in [-1, 1]."""
    if not -1.0 <= kappa <= 1.0:
        raise AgreementError(f"kappa out of range: {kappa}")
    for upper, band in _BANDS:
        if kappa <= upper:
            return band
    return _BANDS[-1][1]


@dataclass(frozen=True)
class VariableAgreement:
    name: str
    kappa: Optional[float]
    band: str
    item_count: int
    rater_count: int
    per_choice: dict[str, Optional[float]] = field(default_factory=dict)
    degenerate: bool = False


@dataclass(frozen=True)
class KappaReport:
    rows: tuple[VariableAgreement, ...]
    raters: tuple[str, ...]

    def row(self, name: str) -> VariableAgreement:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "raters": list(self.raters),
            "variables": [
                {
                    "name": r.name,
                    "kappa": r.kappa,
                    "band": r.band,
                    "items": r.item_count,
                    "raters": r.rater_count,
                    "per_choice": r.per_choice or None,
                    "degenerate": r.degenerate,
                }
                for r in self.rows
            ],
        }


def _categories(variable: Variable) -> list:
    if variable.kind == ORDINAL:
        lo, hi = variable.ordinal_range
        return list(range(lo, hi + 1))
    return list(variable.codes)


def _count_table(
    variable: Variable,
    by_address: dict[str, dict[str, AnnotationRecord]],
    addresses: list[str],
    raters: list[str],
    category_of,
) -> list[list[int]]:
    categories = category_of
    index = {c: j for j, c in enumerate(categories)}
    table = []
    for address in addresses:
        row = [0] * len(categories)
        for rater in raters:
            value = by_address[address][rater].values[variable.name]
            if variable.kind == ORDINAL:
                value = int(round(value))
            row[index[value]] += 1
        table.append(row)
    return table


def _kappa_or_degenerate(table) -> tuple[Optional[float], bool]:
    try:
        return fleiss_kappa(table), False
    except DegenerateAgreement:
        return None, True


def agreement_report(
    records: Sequence[AnnotationRecord],
    schema: AnnotationSchema,
    common_set: Sequence[str],
) -> KappaReport:
    """Per-variable kappa over a common set annotated by every rater.

    Multi-choice variables are decomposed into one present/absent binary
    kappa per code; the variable's kappa is the unweighted mean over
    non-degenerate codes, with per-code values kept in the report.
    """
    raters = sorted({r.annotator_id for r in records})
    if len(raters) < 2:
        raise AgreementError("at least 2 raters required")
    addresses = sorted(set(common_set))
    if not addresses:
        raise AgreementError("empty common set")

    by_address: dict[str, dict[str, AnnotationRecord]] = {a: {} for a in addresses}
    for record in records:
        if record.address_id in by_address:
            by_address[record.address_id][record.annotator_id] = record
    for address in addresses:
        missing = [r for r in raters if r not in by_address[address]]
        if missing:
            raise AgreementError(f"address {address} lacks annotations from {missing}")

    rows = []
    for variable in schema:
        if variable.kind == MULTI_CHOICE:
            per_choice: dict[str, Optional[float]] = {}
            usable = []
            for code in variable.codes:
                table = []
                for address in addresses:
                    present = sum(
                        1 for r in raters if code in by_address[address][r].values[variable.name]
                    )
                    table.append([present, len(raters) - present])
                value, degenerate = _kappa_or_degenerate(table)
                per_choice[code] = value
                if not degenerate:
                    usable.append(value)
            if usable:
                kappa = sum(usable) / len(usable)
                rows.append(
                    VariableAgreement(
                        name=variable.name,
                        kappa=kappa,
                        band=interpret_kappa(kappa),
                        item_count=len(addresses),
                        rater_count=len(raters),
                        per_choice=per_choice,
                    )
                )
            else:
                rows.append(
                    VariableAgreement(
                        name=variable.name,
                        kappa=None,
                        band="degenerate",
                        item_count=len(addresses),
                        rater_count=len(raters),
                        per_choice=per_choice,
                        degenerate=True,
                    )
                )
            continue

        table = _count_table(variable, by_address, addresses, raters, _categories(variable))
        kappa, degenerate = _kappa_or_degenerate(table)
        rows.append(
            VariableAgreement(
                name=variable.name,
                kappa=kappa,
                band="degenerate" if degenerate else interpret_kappa(kappa),
                item_count=len(addresses),
                rater_count=len(raters),
                degenerate=degenerate,
            )
        )
    return KappaReport(rows=tuple(rows), raters=tuple(raters))
