"""Tests for the HTTP API"""
import pytest
from fastapi.testclient import TestClient

from hauslev.main import app


@pytest.fixture
def client():
    with TestClient(app) as test_client:
        yield test_client


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "healthy"


def test_root(client):
    assert client.get("/").json()["docs"] == "/docs"


def test_estimate(client):
    payload = {"points": [[0.1], [0.2], [0.3], [0.45], [0.9]], "config": {"gamma": 1.0, "j_fixed": 1}}
    response = client.post("/api/v1/estimate", json=payload)
    assert response.status_code == 200
    body = response.json()
    assert body["estimate"] == {"d": 1, "j": 1, "cells": [[0]]}
    assert body["diagnostics"]["mode"] == "fixed"


def test_estimate_adaptive_trace(client):
    points = [[(k + 0.5) / 64] for k in range(64)]
    response = client.post("/api/v1/estimate", json={"points": points, "config": {"gamma": 0.5}})
    assert response.status_code == 200
    diagnostics = response.json()["diagnostics"]
    assert diagnostics["mode"] == "adaptive"
    assert len(diagnostics["records"]) == diagnostics["j_max"] + 1


def test_estimate_point_outside_domain(client):
    response = client.post("/api/v1/estimate", json={"points": [[0.1], [1.2]], "config": {"gamma": 1.0}})
    assert response.status_code == 422
    assert "[0, 1]" in response.json()["detail"]


def test_estimate_over_budget(client):
    payload = {"points": [[0.1], [0.2]], "config": {"gamma": 1.0, "j_fixed": 20, "cell_budget": 1024}}
    response = client.post("/api/v1/estimate", json=payload)
    assert response.status_code == 413


def test_estimate_missing_gamma(client):
    response = client.post("/api/v1/estimate", json={"points": [[0.1], [0.2]], "config": {}})
    assert response.status_code == 422
    assert response.json()["detail"] == "Validation error"


def test_hausdorff(client):
    payload = {"a": {"d": 1, "j": 1, "cells": [[0]]}, "b": {"d": 1, "j": 1, "cells": [[0], [1]]}}
    response = client.post("/api/v1/hausdorff", json=payload)
    assert response.status_code == 200
    assert response.json()["distance"] == 0.5


def test_hausdorff_dimension_mismatch(client):
    payload = {"a": {"d": 1, "j": 1, "cells": [[0]]}, "b": {"d": 2, "j": 1, "cells": [[0, 0]]}}
    assert client.post("/api/v1/hausdorff", json=payload).status_code == 422


def test_sample(client):
    payload = {"model": {"shape": "interval", "d": 1, "gamma": 0.8, "alpha": 1.0}, "n": 200, "seed": 3}
    first = client.post("/api/v1/sample", json=payload).json()
    second = client.post("/api/v1/sample", json=payload).json()
    assert first["n"] == 200
    assert len(first["points"]) == 200
    assert first["points"] == second["points"]


def test_sample_inadmissible_model(client):
    payload = {"model": {"shape": "interval", "d": 2}, "n": 10}
    assert client.post("/api/v1/sample", json=payload).status_code == 422
