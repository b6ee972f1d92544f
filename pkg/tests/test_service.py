"""HTTP service tests: case lifecycle, labeling loop, persistence."""

import datetime as dt
import json

import pytest
from fastapi.testclient import TestClient

from triagekit.service import create_app
from triagekit.synthgen import ScenarioParams, default_clusters, emit, generate

BASE = dt.datetime(2019, 3, 1, tzinfo=dt.timezone.utc)


@pytest.fixture(scope="module")
def case_files(tmp_path_factory):
    out = tmp_path_factory.mktemp("uploads")
    params = ScenarioParams(n_benign=120, n_illegal=12,
                            clusters=default_clusters(BASE), seed=4)
    paths = emit(generate(params), out)
    return {
        "timeline": paths["timeline"].read_bytes(),
        "metadata": paths["artifacts"].read_bytes(),
        "known_seed": paths["known_seed"],
    }


@pytest.fixture()
def service(tmp_path, case_files):
    # the service appends confirmed labels to the global base file, so
    # every test gets a private copy of the seed
    seed = tmp_path / "known_seed.csv"
    seed.write_bytes(case_files["known_seed"].read_bytes())
    app = create_app(tmp_path / "data", known_base_path=seed)
    return TestClient(app)


def upload(client, case_files, **form):
    files = {
        "timeline": ("timeline.csv", case_files["timeline"], "text/csv"),
        "metadata": ("metadata.csv", case_files["metadata"], "text/csv"),
    }
    return client.post("/v1/cases", files=files, data=form)


def test_create_case(service, case_files):
    response = upload(service, case_files)
    assert response.status_code == 201
    body = response.json()
    assert body["case_id"] == "case-0001"
    assert body["status"] == "ingested"
    assert body["version"] == 0
    assert body["counts"]["artifacts"] == 132
    assert body["counts"]["known"] == 66       # int(120*.5) + int(12*.5)
    assert body["counts"]["known_illegal"] == 6
    assert body["counts"]["unknown"] == 66


def test_get_case_and_unknown_case(service, case_files):
    case_id = upload(service, case_files).json()["case_id"]
    assert service.get(f"/v1/cases/{case_id}").status_code == 200
    missing = service.get("/v1/cases/case-9999")
    assert missing.status_code == 404
    assert missing.json()["code"] == "not-found"
    assert "message" in missing.json()


@pytest.mark.parametrize("form,fragment", [
    (dict(metadata_format="xml"), "metadata_format"),
    (dict(algorithm="forest"), "algorithm"),
    (dict(test_fraction="1.5"), "test_fraction"),
])
def test_create_case_rejects_bad_options(service, case_files, form, fragment):
    response = upload(service, case_files, **form)
    assert response.status_code == 400
    body = response.json()
    assert body["code"] == "invalid-argument"
    assert fragment in body["message"]


def test_create_case_rejects_bad_header(service, case_files):
    files = {
        "timeline": ("timeline.csv", b"not,a,timeline\n1,2,3\n", "text/csv"),
        "metadata": ("metadata.csv", case_files["metadata"], "text/csv"),
    }
    response = service.post("/v1/cases", files=files)
    assert response.status_code == 400
    assert response.json()["code"] == "format-error"
    assert response.json()["diagnostics"]


def test_create_case_rejects_non_utf8(service, case_files):
    files = {
        "timeline": ("timeline.csv", b"\xff\xfe\x00\x00", "text/csv"),
        "metadata": ("metadata.csv", case_files["metadata"], "text/csv"),
    }
    response = service.post("/v1/cases", files=files)
    assert response.status_code == 400
    assert response.json()["code"] == "format-error"


def test_predictions_require_retrain(service, case_files):
    case_id = upload(service, case_files).json()["case_id"]
    response = service.get(f"/v1/cases/{case_id}/predictions")
    assert response.status_code == 409
    assert response.json()["code"] == "not-trained"
    report = service.get(f"/v1/cases/{case_id}/report")
    assert report.status_code == 409


def test_retrain_ranks_the_unknown_side(service, case_files):
    case_id = upload(service, case_files).json()["case_id"]
    response = service.post(f"/v1/cases/{case_id}/retrain")
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "ranked"
    assert body["version"] == 1

    listing = service.get(f"/v1/cases/{case_id}/predictions").json()
    assert listing["count"] == 66
    ranks = [p["rank"] for p in listing["predictions"]]
    assert ranks == list(range(1, 67))
    scores = [p["score"] for p in listing["predictions"]]
    assert scores == sorted(scores, reverse=True)
    top = listing["predictions"][0]
    assert set(top) >= {"rank", "path", "hash", "score", "predicted", "events"}

    sliced = service.get(
        f"/v1/cases/{case_id}/predictions", params={"top_n": 5}).json()
    assert sliced["count"] == 5
    assert sliced["predictions"] == listing["predictions"][:5]

    bad = service.get(f"/v1/cases/{case_id}/predictions",
                      params={"top_n": -1})
    assert bad.status_code == 400
    assert bad.json()["code"] == "invalid-argument"

    report = service.get(f"/v1/cases/{case_id}/report")
    assert report.status_code == 200
    assert report.json()["report"]["counts"]["artifacts"] == 132


def test_label_loop_removes_artifact_from_ranking(service, case_files):
    """Confirming a hash as illegal moves it to the known side on the
    next retrain and bumps the known-illegal count."""
    case_id = upload(service, case_files).json()["case_id"]
    service.post(f"/v1/cases/{case_id}/retrain")
    before = service.get(f"/v1/cases/{case_id}/predictions").json()
    target = before["predictions"][0]["hash"]
    illegal_before = service.get(
        f"/v1/cases/{case_id}").json()["counts"]["known_illegal"]

    response = service.post(f"/v1/cases/{case_id}/labels", json={
        "hash": target, "decision": "illegal", "investigator": "kim"})
    assert response.status_code == 200
    assert response.json()["result"] == "inserted"

    service.post(f"/v1/cases/{case_id}/retrain")
    after = service.get(f"/v1/cases/{case_id}/predictions").json()
    assert target not in {p["hash"] for p in after["predictions"]}
    assert after["count"] == before["count"] - 1
    counts = service.get(f"/v1/cases/{case_id}").json()["counts"]
    assert counts["known_illegal"] == illegal_before + 1


def test_duplicate_label_is_idempotent(service, case_files):
    case_id = upload(service, case_files).json()["case_id"]
    service.post(f"/v1/cases/{case_id}/retrain")
    target = service.get(
        f"/v1/cases/{case_id}/predictions").json()["predictions"][0]["hash"]

    first = service.post(f"/v1/cases/{case_id}/labels", json={
        "hash": target, "decision": "illegal"})
    second = service.post(f"/v1/cases/{case_id}/labels", json={
        "hash": target, "decision": "illegal"})
    assert first.json()["result"] == "inserted"
    assert second.json()["result"] == "replaced"

    service.post(f"/v1/cases/{case_id}/retrain")
    counts = service.get(f"/v1/cases/{case_id}").json()["counts"]
    assert counts["known_illegal"] == 7  # 6 seeded + 1, not + 2


def test_label_validation(service, case_files):
    case_id = upload(service, case_files).json()["case_id"]
    response = service.post(f"/v1/cases/{case_id}/labels", json={
        "hash": "f" * 64, "decision": "illegal"})
    assert response.status_code == 404
    assert response.json()["code"] == "not-found"

    # decision is vetted before hash membership
    response = service.post(f"/v1/cases/{case_id}/labels", json={
        "hash": "f" * 64, "decision": "suspicious"})
    assert response.status_code == 400
    assert response.json()["code"] == "invalid-argument"

    response = service.post("/v1/cases/case-9999/labels", json={
        "hash": "f" * 64, "decision": "illegal"})
    assert response.status_code == 404


def test_labels_are_logged(service, case_files, tmp_path):
    case_id = upload(service, case_files).json()["case_id"]
    service.post(f"/v1/cases/{case_id}/retrain")
    target = service.get(
        f"/v1/cases/{case_id}/predictions").json()["predictions"][0]["hash"]
    service.post(f"/v1/cases/{case_id}/labels", json={
        "hash": target, "decision": "benign", "investigator": "lee"})
    log = (tmp_path / "data" / case_id / "labels.log").read_text()
    entry = json.loads(log.splitlines()[0])
    assert entry["hash"] == target
    assert entry["decision"] == "benign"
    assert entry["investigator"] == "lee"


def test_labels_reach_later_cases(service, case_files):
    """A confirmed hash counts as known when the next case is created."""
    first = upload(service, case_files).json()
    service.post(f"/v1/cases/{first['case_id']}/retrain")
    target = service.get(
        f"/v1/cases/{first['case_id']}/predictions"
    ).json()["predictions"][0]["hash"]
    service.post(f"/v1/cases/{first['case_id']}/labels", json={
        "hash": target, "decision": "illegal"})

    second = upload(service, case_files).json()
    assert second["case_id"] == "case-0002"
    assert second["counts"]["known"] == first["counts"]["known"] + 1


def test_store_survives_restart(tmp_path, case_files):
    data_dir = tmp_path / "data"
    seed = tmp_path / "known_seed.csv"
    seed.write_bytes(case_files["known_seed"].read_bytes())
    client = TestClient(create_app(data_dir, known_base_path=seed))
    case_id = upload(client, case_files).json()["case_id"]
    client.post(f"/v1/cases/{case_id}/retrain")
    before = client.get(f"/v1/cases/{case_id}/predictions").json()

    # new app over the same directory: same cases, numbering continues
    reopened = TestClient(create_app(data_dir, known_base_path=seed))
    again = reopened.get(f"/v1/cases/{case_id}/predictions").json()
    assert again == before
    fresh = upload(reopened, case_files).json()
    assert fresh["case_id"] == "case-0002"


def test_retrain_without_known_matches_is_conflict(tmp_path, case_files):
    client = TestClient(create_app(tmp_path / "data"))  # empty global base
    case_id = upload(client, case_files).json()["case_id"]
    response = client.post(f"/v1/cases/{case_id}/retrain")
    assert response.status_code == 409
    assert response.json()["code"] == "degenerate-class"
