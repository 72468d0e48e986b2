import hashlib

import httpx
import pytest

from fairlake.errors import (
    AccessDenied,
    AlreadyBootstrapped,
    ChecksumMismatch,
    InvalidQuery,
    InvalidToken,
    NotFound,
    StaleWrite,
    ValidationFailed,
)

from test_catalog import lab_schema_doc


@pytest.fixture
def lab(service):
    service.curator.bootstrap("LAB", {"license": "CC-BY-4.0"})
    service.curator.define_schema(lab_schema_doc())
    return service


# ---------------------------------------------------------------------------
# authentication


def test_requests_without_token_are_rejected(service):
    for headers in ({}, {"Authorization": "Bearer nope"},
                    {"Authorization": "Basic abc"}):
        response = httpx.get(f"{service.base}/model", headers=headers)
        assert response.status_code == 401
        assert response.json()["error"] == "InvalidToken"


def test_whoami_reports_principal(service):
    who = service.alice.whoami()
    assert who["id"] == "alice"
    assert who["roles"] == ["writer"]
    with pytest.raises(InvalidToken):
        service.client_for("tk-bogus").whoami()


# ---------------------------------------------------------------------------
# typed errors cross the wire


def test_error_classes_round_trip(lab):
    with pytest.raises(AlreadyBootstrapped):
        lab.curator.bootstrap("LAB")

    with pytest.raises(ValidationFailed) as verr:
        lab.alice.insert("lab", "Sample", [{"Label": None}])
    assert verr.value.details["report"][0]["violations"]

    [record] = lab.alice.insert("lab", "Sample", [{"Label": "s"}])
    with pytest.raises(StaleWrite) as serr:
        lab.alice.update("lab", "Sample", record["rid"], revision=99,
                         values={"Mass": 1.0})
    assert serr.value.details["current_revision"] == 1

    with pytest.raises(AccessDenied):
        lab.bob.insert("lab", "Sample", [{"Label": "x"}])
    with pytest.raises(NotFound):
        lab.curator.get("lab", "Sample", "ZZZZ-ZZZZ")
    with pytest.raises(InvalidQuery):
        lab.curator.query("lab", "Sample", filters=["Ghost:eq:1"])


def test_http_statuses_match_error_kinds(lab):
    token = {"Authorization": "Bearer tk-writer-alice"}
    r = httpx.get(f"{lab.base}/entity/lab:Sample/ZZZZ-ZZZZ", headers=token)
    assert r.status_code == 404
    r = httpx.post(f"{lab.base}/entity/lab:Sample", headers=token,
                   json={"records": [{"Label": None}]})
    assert r.status_code == 422
    r = httpx.post(f"{lab.base}/catalog", headers=token,
                   json={"prefix": "X"})
    assert r.status_code == 403


# ---------------------------------------------------------------------------
# envelopes


def test_entity_responses_share_envelope(lab):
    token = {"Authorization": "Bearer tk-writer-alice"}
    inserted = httpx.post(f"{lab.base}/entity/lab:Sample", headers=token,
                          json={"records": [{"Label": "a"}, {"Label": "b"}]})
    body = inserted.json()
    assert set(body) == {"data", "count", "model_version"}
    assert body["count"] == 2
    assert body["model_version"] == 2

    queried = httpx.get(f"{lab.base}/entity/lab:Sample?limit=1",
                        headers=token).json()
    assert set(queried) == {"data", "count", "model_version"}
    assert queried["count"] == 2 and len(queried["data"]) == 1

    rid = body["data"][0]["rid"]
    single = httpx.get(f"{lab.base}/entity/lab:Sample/{rid}",
                       headers=token).json()
    assert single["data"][0]["rid"] == rid


def test_entity_path_needs_schema_and_type(lab):
    token = {"Authorization": "Bearer tk-writer-alice"}
    r = httpx.get(f"{lab.base}/entity/Sample", headers=token)
    assert r.status_code == 422
    assert r.json()["error"] == "InvalidQuery"


def test_query_parameters_travel(lab):
    lab.alice.insert("lab", "Sample", [
        {"Label": "a", "Mass": 1.0}, {"Label": "b", "Mass": 9.0}])
    rows, count = lab.alice.query("lab", "Sample",
                                  filters=["Mass:gt:5"],
                                  projection=["Label"])
    assert count == 1
    assert rows[0]["values"] == {"Label": "b"}


# ---------------------------------------------------------------------------
# store over HTTP


def test_store_headers_and_content(lab):
    lab.alice.store_mkdir("/files")
    data = b"stored bytes"
    digest = hashlib.sha256(data).hexdigest()
    version = lab.alice.store_put("/files/obj", data, content_sha256=digest,
                                  content_type="text/plain")
    assert version["version_id"] == "v00001"
    assert version["content_sha256"] == digest

    token = {"Authorization": "Bearer tk-reader-bob"}
    r = httpx.get(f"{lab.base}/store/files/obj", headers=token)
    assert r.content == data
    assert r.headers["X-Version-Id"] == "v00001"
    assert r.headers["X-Content-SHA256"] == digest
    assert r.headers["Content-Type"].startswith("text/plain")


def test_store_digest_mismatch_rejected(lab):
    lab.alice.store_mkdir("/files")
    with pytest.raises(ChecksumMismatch):
        lab.alice.store_put("/files/bad", b"data", content_sha256="0" * 64)


def test_store_acl_over_http(lab):
    lab.alice.store_mkdir("/files")
    lab.alice.store_put("/files/obj", b"x")
    with pytest.raises(AccessDenied):
        lab.bob.store_put("/files/obj", b"y")
    with pytest.raises(AccessDenied):
        lab.alice.store_delete("/files/obj", "v00001")
    lab.curator.store_delete("/files/obj", "v00001")
    versions = lab.curator.store_meta("/files/obj")
    assert versions[0]["deleted"] is True


# ---------------------------------------------------------------------------
# minids over HTTP


def test_minid_round_trip_over_http(lab):
    digest = hashlib.sha256(b"content").hexdigest()
    minted = lab.alice.minid_mint("a bag", digest,
                                  ["http://host/bag.tgz"], length=7)
    resolved = lab.bob.minid_resolve(minted["identifier"])
    assert resolved["content_sha256"] == digest
    assert resolved["creator"] == "alice"

    with pytest.raises(AccessDenied):
        lab.wendy.minid_update_locations(minted["identifier"], ["http://w"])
    lab.alice.minid_update_locations(minted["identifier"], ["http://new"])
    with pytest.raises(AccessDenied):
        lab.alice.minid_tombstone(minted["identifier"])
    tombstoned = lab.curator.minid_tombstone(minted["identifier"])
    assert tombstoned["status"] == "tombstoned"


# ---------------------------------------------------------------------------
# browser access


def test_cors_preflight_allows_any_origin(service):
    r = httpx.options(f"{service.base}/model", headers={
        "Origin": "http://localhost:5173",
        "Access-Control-Request-Method": "GET",
        "Access-Control-Request-Headers": "authorization",
    })
    assert r.status_code == 200
    assert r.headers["access-control-allow-origin"] == "*"


def test_model_introspection_over_http(lab):
    model = lab.bob.get_model()
    names = {doc["name"] for doc in model["schemas"]}
    assert names == {"ml", "lab"}
    assert model["prefix"] == "LAB"
