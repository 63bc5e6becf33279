import numpy as np
import pytest
from fastapi.testclient import TestClient

from mshem.cases import load_case_text
from mshem.service import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


@pytest.fixture(scope="module")
def case2_text():
    return load_case_text("case2.m")


@pytest.fixture(scope="module")
def case39_text():
    return load_case_text("case39.m")


def test_health(client):
    r = client.get("/health")
    assert r.status_code == 200
    assert r.json() == {"status": "ok"}


def test_solve_newton(client, case39_text):
    r = client.post("/solve", json={"case_text": case39_text})
    assert r.status_code == 200
    body = r.json()
    assert body["converged"]
    assert body["max_mismatch"] <= 1e-8
    assert len(body["buses"]) == 39
    slack = next(b for b in body["buses"] if b["bus_id"] == 31)
    assert slack["v_mag_pu"] == pytest.approx(0.982)


def test_solve_hem_matches_newton(client, case2_text):
    a = client.post("/solve", json={"case_text": case2_text, "lam": 1.5}).json()
    b = client.post("/solve", json={"case_text": case2_text, "lam": 1.5,
                                    "method": "hem"}).json()
    dv = max(abs(x["v_mag_pu"] - y["v_mag_pu"])
             for x, y in zip(a["buses"], b["buses"]))
    assert dv <= 1e-8


def test_input_error_maps_to_400(client):
    r = client.post("/solve", json={"case_text": "nonsense"})
    assert r.status_code == 400
    body = r.json()
    assert body["category"] == "input"
    assert body["error_type"] == "CaseFormatError"


def test_validation_error_maps_to_400(client, case2_text):
    r = client.post("/solve", json={"case_text": case2_text,
                                    "method": "sorcery"})
    assert r.status_code == 400
    assert r.json()["category"] == "input"


def test_numerical_error_maps_to_422(client, case2_text):
    r = client.post("/solve", json={"case_text": case2_text, "lam": 10.0})
    assert r.status_code == 422
    body = r.json()
    assert body["category"] == "numerical"
    assert body["error_type"] in ("NonConvergence", "SingularJacobian")


def test_trace_mshem(client, case2_text):
    r = client.post("/trace", json={"case_text": case2_text})
    assert r.status_code == 200
    body = r.json()
    assert body["bus_ids"] == [1, 2]
    curve = body["curves"]["mshem"]
    assert curve["summary"]["converged"]
    assert curve["summary"]["counters"]["stages"] >= 1
    # nose of the analytic case: 400 MW of added load
    assert curve["summary"]["nose_mw"] == pytest.approx(400.0, abs=1.0)
    for p in curve["points"]:
        assert p["max_mismatch_mva"] <= 1e-8 * 100.0


def test_trace_hem_single(client, case2_text):
    r = client.post("/trace", json={"case_text": case2_text,
                                    "method": "hem-single"})
    assert r.status_code == 200
    curve = r.json()["curves"]["hem-single"]
    # one uncorrected series cannot hold the tolerance up to the nose
    assert curve["summary"]["max_mismatch_mva"] > 1e-6 * 100.0


def test_trace_direction_dict(client, case39_text):
    r = client.post("/trace", json={
        "case_text": case39_text,
        "direction": {"d_pload_mw": {8: 500.0}, "d_qload_mvar": {8: 100.0}}})
    assert r.status_code == 200
    assert r.json()["curves"]["mshem"]["summary"]["converged"]


def test_compare(client, case2_text):
    r = client.post("/compare", json={"case_text": case2_text})
    assert r.status_code == 200
    body = r.json()
    assert body["cross_method"]["max_v_delta_pu"] <= 1e-6
    assert body["cross_method"]["points_exceeding_tolerance"] == []
    plateau = body["plateau"]
    assert plateau["hem_single_max_mismatch_mva"] > plateau["mshem_max_mismatch_mva"]
    assert body["mshem_summary"]["counters"]["stages"] >= 1
    assert body["cpf_summary"]["counters"]["cpf_steps"] > 100
