import pytest
from fastapi.testclient import TestClient
from hypothesis import given, settings
from hypothesis import strategies as st

from houserisk.annotations import AnnotationRecord
from houserisk.schema import default_schema
from houserisk.service import (
    AnnotationService,
    ServiceError,
    SubmissionStore,
    assign_batches,
    create_app,
)

SCHEMA = default_schema()
ADDRESSES = [f"A{i:03d}" for i in range(30)]
ANNOTATORS = ["ann-1", "ann-2", "ann-3"]


def make_service(tmp_path, common_size=12, min_common_items=3):
    store = SubmissionStore(tmp_path / "store")
    batches = assign_batches(ADDRESSES, ANNOTATORS, common_size=common_size, seed=7)
    return AnnotationService.from_assignments(
        SCHEMA, store, batches, min_common_items=min_common_items
    )


def values(**overrides):
    base = {
        "neighbourhood": frozenset({"detached_houses"}),
        "density": 3,
        "sv_quality": "good",
        "house_type": "detached_single_family",
        "house_age": 2,
        "house_condition": 2,
        "wealth": 5,
    }
    base.update(overrides)
    return base


def record(address, annotator, **overrides):
    return AnnotationRecord(address, annotator, "2024-01-01T00:00:00", values(**overrides))


def payload(address, annotator, **overrides):
    vals = {
        k: sorted(v) if isinstance(v, frozenset) else v
        for k, v in values(**overrides).items()
    }
    return {
        "address_id": address,
        "annotator_id": annotator,
        "timestamp": "2024-01-01T00:00:00",
        "values": vals,
    }


# --- batch assignment --------------------------------------------------------

def test_assign_batches_invariants():
    batches = assign_batches(ADDRESSES, ANNOTATORS, common_size=10, seed=1)
    common = [b for b in batches if b.phase == "common"]
    disjoint = [b for b in batches if b.phase == "disjoint"]
    assert len(common) == len(disjoint) == 3
    assert len({c.addresses for c in common}) == 1  # identical common set
    assert len(common[0].addresses) == 10
    shares = [set(b.addresses) for b in disjoint]
    assert all(shares[i].isdisjoint(shares[j]) for i in range(3) for j in range(i + 1, 3))
    covered = set(common[0].addresses).union(*shares)
    assert covered == set(ADDRESSES)
    sizes = sorted(len(s) for s in shares)
    assert sizes[-1] - sizes[0] <= 1


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(1, 60),
    k=st.integers(1, 6),
    frac=st.floats(0.0, 1.0),
    seed=st.integers(0, 1000),
)
def test_assign_batches_property(n, k, frac, seed):
    addresses = [f"X{i}" for i in range(n)]
    annotators = [f"ann-{j}" for j in range(k)]
    common_size = int(frac * n)
    batches = assign_batches(addresses, annotators, common_size=common_size, seed=seed)
    common_sets = {b.addresses for b in batches if b.phase == "common"}
    assert len(common_sets) == 1
    shares = [b.addresses for b in batches if b.phase == "disjoint"]
    flat = [a for s in shares for a in s]
    assert len(flat) == len(set(flat)) == n - common_size
    sizes = sorted(len(s) for s in shares)
    assert sizes[-1] - sizes[0] <= 1


def test_assign_batches_errors():
    with pytest.raises(ServiceError):
        assign_batches(ADDRESSES, [], common_size=5, seed=0)
    with pytest.raises(ServiceError):
        assign_batches(ADDRESSES, ANNOTATORS, common_size=99, seed=0)


# --- core service ------------------------------------------------------------

def test_task_flow_and_progress(tmp_path):
    service = make_service(tmp_path)
    task = service.next_task("ann-1")
    assert task is not None and task["address_id"] == service.assignments["ann-1"][0]
    assert set(task["images"]) == {"street", "satellite"}

    service.submit(record(task["address_id"], "ann-1"))
    p = service.progress("ann-1")
    assert (p["completed"], p["remaining"]) == (1, p["assigned"] - 1)
    assert service.next_task("ann-1")["address_id"] == service.assignments["ann-1"][1]


def test_submit_rejects_unassigned_and_unknown(tmp_path):
    service = make_service(tmp_path)
    not_mine = next(
        a for a in ADDRESSES
        if a not in service.assignments["ann-1"]
    )
    with pytest.raises(ServiceError):
        service.submit(record(not_mine, "ann-1"))
    with pytest.raises(ServiceError):
        service.submit(record(ADDRESSES[0], "stranger"))


def test_resubmission_replaces_but_log_keeps_history(tmp_path):
    service = make_service(tmp_path)
    address = service.assignments["ann-1"][0]
    assert service.submit(record(address, "ann-1", wealth=4))["replaced"] is False
    assert service.submit(record(address, "ann-1", wealth=8))["replaced"] is True
    assert service.store.current("ann-1")[address]["values"]["wealth"] == 8
    log = (tmp_path / "store" / "logs" / "ann-1.jsonl").read_text().strip().split("\n")
    assert len(log) == 2  # full audit trail survives replacement


def test_durability_across_restart_with_and_without_compaction(tmp_path):
    service = make_service(tmp_path)
    a0, a1 = service.assignments["ann-1"][:2]
    service.submit(record(a0, "ann-1"))
    service.store.compact("ann-1")
    service.submit(record(a1, "ann-1", wealth=9))  # only in the log

    reopened = SubmissionStore(tmp_path / "store")
    current = reopened.current("ann-1")
    assert set(current) == {a0, a1}
    assert current[a1]["values"]["wealth"] == 9


def test_agreement_gates_then_reports(tmp_path):
    service = make_service(tmp_path, common_size=6, min_common_items=3)
    assert service.agreement()["status"] == "not yet computable"
    common = service.common_set
    for annotator in ("ann-1", "ann-2"):
        for address in common[:4]:
            service.submit(record(address, annotator))
    out = service.agreement()
    assert out["status"] == "ok"
    rows = {r["name"]: r for r in out["report"]["variables"]}
    assert rows["wealth"]["kappa"] == pytest.approx(1.0) or rows["wealth"]["degenerate"]


def test_export_csv_deterministic_and_sorted(tmp_path):
    service = make_service(tmp_path)
    for annotator in ANNOTATORS:
        for address in service.assignments[annotator][:3]:
            service.submit(record(address, annotator, wealth=hash(address) % 10 + 1))
    text = service.export_csv()
    assert text == service.export_csv()
    lines = text.strip().split("\r\n") if "\r\n" in text else text.strip().split("\n")
    body = [line.split(",")[:2] for line in lines[1:]]
    keys = [(annotator, address) for address, annotator in body]
    assert keys == sorted(keys)


# --- HTTP layer --------------------------------------------------------------

@pytest.fixture
def client(tmp_path):
    service = make_service(tmp_path)
    return TestClient(create_app(service)), service


def test_http_schema(client):
    c, _ = client
    response = c.get("/api/schema")
    assert response.status_code == 200
    names = [v["name"] for v in response.json()["variables"]]
    assert names == [
        "neighbourhood", "density", "sv_quality", "house_type",
        "house_age", "house_condition", "wealth",
    ]


def test_http_task_submit_cycle(client):
    c, service = client
    out = c.get("/api/tasks/next", params={"annotator": "ann-1"}).json()
    assert out["done"] is False
    address = out["task"]["address_id"]
    ack = c.post("/api/annotations", json=payload(address, "ann-1"))
    assert ack.status_code == 200 and ack.json() == {"status": "accepted", "replaced": False}
    progress = c.get("/api/progress", params={"annotator": "ann-1"}).json()
    assert progress["completed"] == 1


def test_http_completion_signals_done(client):
    c, service = client
    for address in service.assignments["ann-1"]:
        service.submit(record(address, "ann-1"))
    out = c.get("/api/tasks/next", params={"annotator": "ann-1"}).json()
    assert out["done"] is True
    assert out["progress"]["remaining"] == 0


def test_http_error_codes(client):
    c, service = client
    assert c.get("/api/tasks/next", params={"annotator": "ghost"}).status_code == 404
    assert c.get("/api/progress", params={"annotator": "ghost"}).status_code == 404
    bad = payload(service.assignments["ann-1"][0], "ann-1", wealth=99)
    assert c.post("/api/annotations", json=bad).status_code == 422
    unassigned = payload("A999", "ann-1")
    assert c.post("/api/annotations", json=unassigned).status_code == 400


def test_http_export_matches_service(client):
    c, service = client
    address = service.assignments["ann-2"][0]
    service.submit(record(address, "ann-2"))
    response = c.get("/api/export/annotations.csv")
    assert response.status_code == 200
    assert response.text == service.export_csv()
    assert "text/csv" in response.headers["content-type"]


def test_http_images_served_and_missing(tmp_path):
    from houserisk.imagery import write_fixture_image

    store = SubmissionStore(tmp_path / "store")
    batches = assign_batches(ADDRESSES, ANNOTATORS, common_size=5, seed=7)
    cache_root = tmp_path / "cache"
    write_fixture_image(tmp_path, "A000", "street")
    (cache_root / "A000").mkdir(parents=True)
    (cache_root / "A000" / "street.png").write_bytes(
        (tmp_path / "images" / "A000" / "street.png").read_bytes()
    )
    service = AnnotationService.from_assignments(
        SCHEMA, store, batches, image_cache_root=cache_root
    )
    c = TestClient(create_app(service))
    ok = c.get("/api/images/A000/street")
    assert ok.status_code == 200 and ok.headers["content-type"] == "image/png"
    missing = c.get("/api/images/A000/satellite")
    assert missing.status_code == 404
    assert missing.json() == {"missing_imagery": True}
