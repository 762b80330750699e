"""Annotation campaign service: batch assignment, task serving, durable
submission storage, and live agreement feedback over HTTP+JSON.

Storage is an append-only JSONL log per annotator (full audit history)
with periodic compaction into a current-state table; the last accepted
record per (address, annotator) wins.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .agreement import AgreementError, agreement_report
from .annotations import (
    AnnotationRecord,
    annotations_csv_text,
    validate_record,
)
from .schema import MULTI_CHOICE, AnnotationSchema, SchemaError


class ServiceError(ValueError):
    pass


@dataclass(frozen=True)
class AnnotatorAccount:
    annotator_id: str
    display_name: str = ""
    retained: bool = True


@dataclass(frozen=True)
class BatchAssignment:
    annotator_id: str
    addresses: tuple[str, ...]
    phase: str  # "common" | "disjoint"


def assign_batches(
    addresses: Sequence[str],
    annotator_ids: Sequence[str],
    common_size: int,
    seed: int,
) -> list[BatchAssignment]:
    """Common random subset for everyone plus near-equal disjoint random
    batches covering the rest."""
    addresses = list(addresses)
    if not annotator_ids:
        raise ServiceError("at least one annotator required")
    if common_size > len(addresses):
        raise ServiceError(
            f"common_size {common_size} exceeds address count {len(addresses)}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(addresses))
    common = tuple(addresses[i] for i in order[:common_size])
    rest = [addresses[i] for i in order[common_size:]]

    assignments = []
    k = len(annotator_ids)
    for j, annotator_id in enumerate(annotator_ids):
        assignments.append(
            BatchAssignment(annotator_id=annotator_id, addresses=common, phase="common")
        )
        share = tuple(rest[j::k])
        assignments.append(
            BatchAssignment(annotator_id=annotator_id, addresses=share, phase="disjoint")
        )
    return assignments


class SubmissionStore:
    """Append-only per-annotator logs with compaction snapshots."""

    def __init__(self, root):
        self.root = Path(root)
        (self.root / "logs").mkdir(parents=True, exist_ok=True)
        (self.root / "state").mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._master = threading.Lock()
        self._current: dict[str, dict[str, dict]] = {}  # annotator -> address -> payload
        self._load()

    def _lock_for(self, annotator_id: str) -> threading.Lock:
        with self._master:
            return self._locks.setdefault(annotator_id, threading.Lock())

    def _load(self) -> None:
        for state_path in sorted((self.root / "state").glob("*.json")):
            annotator_id = state_path.stem
            self._current[annotator_id] = json.loads(state_path.read_text())
        for log_path in sorted((self.root / "logs").glob("*.jsonl")):
            annotator_id = log_path.stem
            table = self._current.setdefault(annotator_id, {})
            with open(log_path) as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        payload = json.loads(line)
                        table[payload["address_id"]] = payload

    def append(self, payload: dict) -> None:
        annotator_id = payload["annotator_id"]
        with self._lock_for(annotator_id):
            log_path = self.root / "logs" / f"{annotator_id}.jsonl"
            with open(log_path, "a") as fh:
                fh.write(json.dumps(payload, sort_keys=True) + "\n")
                fh.flush()
            self._current.setdefault(annotator_id, {})[payload["address_id"]] = payload

    def compact(self, annotator_id: str) -> None:
        """Snapshot current state; the log keeps the full audit history."""
        with self._lock_for(annotator_id):
            state_path = self.root / "state" / f"{annotator_id}.json"
            state_path.write_text(
                json.dumps(self._current.get(annotator_id, {}), indent=2, sort_keys=True)
            )

    def current(self, annotator_id: str) -> dict[str, dict]:
        return dict(self._current.get(annotator_id, {}))

    def all_current(self) -> list[dict]:
        out = []
        for annotator_id in sorted(self._current):
            for address_id in sorted(self._current[annotator_id]):
                out.append(self._current[annotator_id][address_id])
        return out


def _record_to_payload(record: AnnotationRecord, schema: AnnotationSchema) -> dict:
    values = {}
    for variable in schema:
        v = record.values[variable.name]
        values[variable.name] = sorted(v) if variable.kind == MULTI_CHOICE else v
    return {
        "address_id": record.address_id,
        "annotator_id": record.annotator_id,
        "timestamp": record.timestamp,
        "values": values,
    }


def _payload_to_record(payload: dict, schema: AnnotationSchema) -> AnnotationRecord:
    values = {}
    for variable in schema:
        v = payload["values"].get(variable.name)
        values[variable.name] = frozenset(v) if variable.kind == MULTI_CHOICE and v is not None else v
    return AnnotationRecord(
        address_id=payload["address_id"],
        annotator_id=payload["annotator_id"],
        timestamp=payload.get("timestamp", ""),
        values=values,
    )


@dataclass
class AnnotationService:
    schema: AnnotationSchema
    store: SubmissionStore
    assignments: dict[str, list[str]] = field(default_factory=dict)  # annotator -> ordered addresses
    common_set: tuple[str, ...] = ()
    image_cache_root: Optional[Path] = None
    min_common_items: int = 10
    show_agreement: bool = True

    @classmethod
    def from_assignments(
        cls,
        schema: AnnotationSchema,
        store: SubmissionStore,
        batches: Sequence[BatchAssignment],
        **kwargs,
    ) -> "AnnotationService":
        assignments: dict[str, list[str]] = {}
        common: tuple[str, ...] = ()
        for batch in batches:
            assignments.setdefault(batch.annotator_id, []).extend(batch.addresses)
            if batch.phase == "common":
                common = batch.addresses
        return cls(schema=schema, store=store, assignments=assignments, common_set=common, **kwargs)

    def next_task(self, annotator_id: str) -> Optional[dict]:
        if annotator_id not in self.assignments:
            raise ServiceError(f"unknown annotator {annotator_id!r}")
        done = set(self.store.current(annotator_id))
        for address_id in self.assignments[annotator_id]:
            if address_id not in done:
                return {
                    "address_id": address_id,
                    "images": {
                        "street": f"/api/images/{address_id}/street",
                        "satellite": f"/api/images/{address_id}/satellite",
                    },
                }
        return None

    def progress(self, annotator_id: str) -> dict:
        if annotator_id not in self.assignments:
            raise ServiceError(f"unknown annotator {annotator_id!r}")
        assigned = self.assignments[annotator_id]
        done = set(self.store.current(annotator_id)) & set(assigned)
        return {
            "annotator_id": annotator_id,
            "assigned": len(assigned),
            "completed": len(done),
            "remaining": len(assigned) - len(done),
        }

    def submit(self, record: AnnotationRecord) -> dict:
        validate_record(record, self.schema)
        assigned = self.assignments.get(record.annotator_id)
        if assigned is None:
            raise ServiceError(f"unknown annotator {record.annotator_id!r}")
        if record.address_id not in assigned:
            raise ServiceError(
                f"address {record.address_id} is not assigned to {record.annotator_id}"
            )
        replaced = record.address_id in self.store.current(record.annotator_id)
        self.store.append(_record_to_payload(record, self.schema))
        return {"status": "accepted", "replaced": replaced}

    def agreement(self) -> dict:
        per_annotator = {
            a: set(self.store.current(a)) & set(self.common_set) for a in self.assignments
        }
        ready = [a for a, addrs in per_annotator.items() if len(addrs) >= self.min_common_items]
        if len(ready) < 2:
            return {
                "status": "not yet computable",
                "reason": f"need >= 2 annotators with >= {self.min_common_items} common-set items",
            }
        overlap = set.intersection(*(per_annotator[a] for a in ready))
        if len(overlap) < self.min_common_items:
            return {
                "status": "not yet computable",
                "reason": f"common-set overlap has only {len(overlap)} items",
            }
        records = [
            _payload_to_record(self.store.current(a)[addr], self.schema)
            for a in ready
            for addr in overlap
        ]
        try:
            report = agreement_report(records, self.schema, sorted(overlap))
        except AgreementError as exc:
            return {"status": "not yet computable", "reason": str(exc)}
        return {"status": "ok", "report": report.to_dict()}

    def export_csv(self) -> str:
        records = [_payload_to_record(p, self.schema) for p in self.store.all_current()]
        records.sort(key=lambda r: (r.annotator_id, r.address_id))
        return annotations_csv_text(records, self.schema)


def create_app(service: AnnotationService):
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse
    from fastapi.staticfiles import StaticFiles

    app = FastAPI(title="houserisk annotation service")

    @app.get("/api/schema")
    def get_schema():
        return service.schema.to_dict()

    @app.get("/api/tasks/next")
    def get_next_task(annotator: str):
        try:
            task = service.next_task(annotator)
        except ServiceError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        if task is None:
            return {"done": True, "progress": service.progress(annotator)}
        return {"done": False, "task": task}

    @app.post("/api/annotations")
    def post_annotation(payload: dict):
        try:
            record = _payload_to_record(payload, service.schema)
            ack = service.submit(record)
        except SchemaError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except ServiceError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return ack

    @app.get("/api/progress")
    def get_progress(annotator: str):
        try:
            return service.progress(annotator)
        except ServiceError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.get("/api/agreement")
    def get_agreement():
        return service.agreement()

    @app.get("/api/export/annotations.csv")
    def export_annotations():
        return PlainTextResponse(service.export_csv(), media_type="text/csv")

    @app.get("/api/images/{address_id}/{view}")
    def get_image(address_id: str, view: str):
        if service.image_cache_root is None:
            raise HTTPException(status_code=404, detail="no imagery cache configured")
        path = Path(service.image_cache_root) / address_id / f"{view}.png"
        if not path.exists():
            return JSONResponse(status_code=404, content={"missing_imagery": True})
        return FileResponse(path, media_type="image/png")

    ui_dist = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if ui_dist.exists():
        app.mount("/", StaticFiles(directory=ui_dist, html=True), name="ui")

    return app
