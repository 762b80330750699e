"""Core portfolio types and CSV ingestion.

Policies and addresses arrive as CSV (UTF-8, '.' decimal separator, LF
line ends); malformed rows are rejected individually with row numbers and
reasons rather than aborting the whole file.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

POLICY_COLUMNS = ["policy_id", "address_id", "exposure", "claim_count", "model_b_frequency"]
ADDRESS_COLUMNS = ["address_id", "raw_address", "status", "lat", "lon"]

ADDRESS_STATUSES = ("unresolved", "foreign", "resolved")
EXCLUSION_REASONS = ("unresolved", "foreign")


class PortfolioError(ValueError):
    pass


@dataclass(frozen=True)
class PolicyRecord:
    policy_id: str
    address_id: str
    exposure: float          # fraction of year active, in (0, 1]
    claim_count: int
    model_b_frequency: float  # incumbent model's expected claims per unit exposure


@dataclass(frozen=True)
class AddressEntry:
    address_id: str
    raw_address: str
    status: str = "unresolved"
    location: Optional[tuple[float, float]] = None

    def __post_init__(self) -> None:
        if self.status not in ADDRESS_STATUSES:
            raise PortfolioError(f"unknown address status: {self.status!r}")
        if self.status == "resolved" and self.location is None:
            raise PortfolioError(f"{self.address_id}: resolved address needs a location")


@dataclass(frozen=True)
class Rejection:
    row: int      # 1-based data row number (header not counted)
    reason: str


@dataclass
class AddressRegistry:
    """Address book with exclusion flags; excluded addresses never join
    into modeling datasets."""

    entries: dict[str, AddressEntry] = field(default_factory=dict)
    excluded: dict[str, str] = field(default_factory=dict)  # address_id -> reason

    def add(self, entry: AddressEntry) -> None:
        self.entries[entry.address_id] = entry

    def included_ids(self) -> set[str]:
        return set(self.entries) - set(self.excluded)

    def is_included(self, address_id: str) -> bool:
        return address_id in self.entries and address_id not in self.excluded

    def exclusion_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for reason in self.excluded.values():
            counts[reason] = counts.get(reason, 0) + 1
        return counts


@dataclass(frozen=True)
class IngestResult:
    records: tuple[PolicyRecord, ...]
    rejections: tuple[Rejection, ...]


def _open_stream(source) -> io.TextIOBase:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline="")
    return source


def ingest_policies(source) -> IngestResult:
    """Read policies.csv; returns accepted records plus per-row rejections.

    Accepts a path or an open text stream. Rows violating the record
    invariants (exposure outside (0, 1], negative counts, missing or
    nonpositive model-B frequency) are rejected, not fatal.
    """
    stream = _open_stream(source)
    reader = csv.reader(stream)
    try:
        header = next(reader, None)
        if header != POLICY_COLUMNS:
            raise PortfolioError(
                f"policies header mismatch: expected {POLICY_COLUMNS}, got {header}"
            )
        records: list[PolicyRecord] = []
        rejections: list[Rejection] = []
        for row_no, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            reason = None
            if len(row) != len(POLICY_COLUMNS):
                reason = f"expected {len(POLICY_COLUMNS)} fields, got {len(row)}"
            else:
                policy_id, address_id, exposure_s, claims_s, freq_s = row
                try:
                    exposure = float(exposure_s)
                    claim_count = int(claims_s)
                    freq = float(freq_s) if freq_s.strip() else None
                except ValueError:
                    reason = "malformed numeric field"
                else:
                    if not policy_id or not address_id:
                        reason = "missing identifier"
                    elif exposure <= 0:
                        reason = "nonpositive exposure"
                    elif exposure > 1:
                        reason = "exposure above one year"
                    elif claim_count < 0:
                        reason = "negative claim count"
                    elif freq is None:
                        reason = "missing model_b_frequency"
                    elif freq <= 0:
                        reason = "nonpositive model_b_frequency"
            if reason is not None:
                rejections.append(Rejection(row=row_no, reason=reason))
            else:
                records.append(
                    PolicyRecord(
                        policy_id=policy_id,
                        address_id=address_id,
                        exposure=exposure,
                        claim_count=claim_count,
                        model_b_frequency=freq,
                    )
                )
        return IngestResult(records=tuple(records), rejections=tuple(rejections))
    finally:
        if isinstance(source, (str, Path)):
            stream.close()


def ingest_addresses(source) -> AddressRegistry:
    """Read addresses.csv into a registry; unresolved/foreign rows are
    auto-flagged for exclusion."""
    stream = _open_stream(source)
    reader = csv.reader(stream)
    try:
        header = next(reader, None)
        if header != ADDRESS_COLUMNS:
            raise PortfolioError(
                f"addresses header mismatch: expected {ADDRESS_COLUMNS}, got {header}"
            )
        registry = AddressRegistry()
        for row in reader:
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            address_id, raw_address, status, lat_s, lon_s = row
            location = (float(lat_s), float(lon_s)) if lat_s.strip() and lon_s.strip() else None
            registry.add(
                AddressEntry(
                    address_id=address_id,
                    raw_address=raw_address,
                    status=status,
                    location=location,
                )
            )
        for entry in registry.entries.values():
            if entry.status in EXCLUSION_REASONS:
                registry.excluded[entry.address_id] = entry.status
        return registry
    finally:
        if isinstance(source, (str, Path)):
            stream.close()


def exclude_addresses(registry: AddressRegistry, flags: dict[str, str]) -> AddressRegistry:
    """Flag addresses for exclusion. Idempotent and order-independent;
    unknown ids or reasons are errors."""
    out = AddressRegistry(entries=dict(registry.entries), excluded=dict(registry.excluded))
    for address_id, reason in flags.items():
        if reason not in EXCLUSION_REASONS:
            raise PortfolioError(f"unknown exclusion reason {reason!r} for {address_id}")
        if address_id not in out.entries:
            raise PortfolioError(f"unknown address_id: {address_id}")
        out.excluded[address_id] = reason
        entry = out.entries[address_id]
        if entry.status == "resolved":
            out.entries[address_id] = replace(entry, status=reason, location=None)
    return out


@dataclass(frozen=True)
class Dataset:
    """Policies joined to per-address feature vectors.

    ``features`` maps address_id to a dict of feature name -> value
    (binary indicators plus retained raw ordinals). The join must be
    total: every policy's address has features and is not excluded.
    """

    records: tuple[PolicyRecord, ...]
    features: dict[str, dict[str, float]]
    provenance: str = "real-ingest"

    def __post_init__(self) -> None:
        if self.provenance not in ("real-ingest", "synthetic"):
            raise PortfolioError(f"unknown provenance {self.provenance!r}")
        missing = [r.address_id for r in self.records if r.address_id not in self.features]
        if missing:
            raise PortfolioError(
                f"{len(missing)} policies reference addresses without features "
                f"(first: {missing[0]})"
            )

    def __len__(self) -> int:
        return len(self.records)


def join_dataset(
    records: Iterable[PolicyRecord],
    registry: AddressRegistry,
    features: dict[str, dict[str, float]],
    provenance: str = "real-ingest",
) -> Dataset:
    """Join policies to features, dropping policies at excluded addresses."""
    kept = tuple(
        r for r in records if registry.is_included(r.address_id) and r.address_id in features
    )
    return Dataset(records=kept, features=features, provenance=provenance)


def write_policies_csv(records: Iterable[PolicyRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(POLICY_COLUMNS)
        for r in records:
            writer.writerow(
                [r.policy_id, r.address_id, repr(r.exposure), r.claim_count, repr(r.model_b_frequency)]
            )


def write_addresses_csv(entries: Iterable[AddressEntry], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ADDRESS_COLUMNS)
        for e in entries:
            lat, lon = ("", "") if e.location is None else (repr(e.location[0]), repr(e.location[1]))
            writer.writerow([e.address_id, e.raw_address, e.status, lat, lon])
