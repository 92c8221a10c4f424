"""
Tests for the victim HTTP server, the wire format and the remote client.
"""

import base64
from concurrent.futures import ThreadPoolExecutor

import pytest
import torch
from fastapi.testclient import TestClient

from dfms.core.errors import BudgetExhaustedError, InvariantError
from dfms.victim import RemoteVictim, create_app
from dfms.victim.wire import decode_images, encode_images

from conftest import CHANNELS, IMAGE_SIZE, NUM_CLASSES, random_images


def _payload(n: int, mode: str = "hard", seed: int = 0) -> dict:
    images, shape = encode_images(random_images(n, seed=seed))
    return {"mode": mode, "images": images, "shape": shape}


@pytest.fixture
def client_for(make_oracle):
    def _make(budget=None):
        oracle = make_oracle(budget=budget)
        return oracle, TestClient(create_app(oracle))

    return _make


# ---- wire -----------------------------------------------------------------------


def test_wire_preserves_8bit_pixels():
    pixels = torch.randint(0, 256, (3, 1, 4, 4)).float()
    batch = pixels / 127.5 - 1.0
    payload, shape = encode_images(batch)
    assert shape == [3, 1, 4, 4]
    assert torch.allclose(decode_images(payload, shape), batch, atol=1e-6)


def test_wire_rejects_malformed_payloads():
    payload, shape = encode_images(torch.zeros((2, 1, 4, 4)))
    with pytest.raises(InvariantError):
        decode_images(payload, [2, 1, 4])
    with pytest.raises(InvariantError):
        decode_images(payload, [2, 1, 4, 5])
    with pytest.raises(InvariantError):
        decode_images("not base64!", shape)
    with pytest.raises(InvariantError):
        encode_images(torch.zeros((4, 4)))


# ---- server ---------------------------------------------------------------------


def test_health(client_for):
    _, client = client_for()
    assert client.get("/health").json() == {"status": "healthy"}


def test_hard_query_charges_ledger(client_for):
    oracle, client = client_for(budget=100)
    response = client.post("/v1/query", json=_payload(10))
    assert response.status_code == 200
    body = response.json()
    assert len(body["labels"]) == 10
    assert all(0 <= label < NUM_CLASSES for label in body["labels"])
    assert body["charged"] == 10
    assert body["queries_used"] == 10
    assert body["budget_remaining"] == 90
    assert oracle.ledger.phase_breakdown == {"remote": 10}


def test_soft_query_rows_sum_to_one(client_for):
    _, client = client_for()
    body = client.post("/v1/query", json=_payload(4, mode="soft")).json()
    probs = torch.tensor(body["probs"], dtype=torch.float64)
    assert probs.shape == (4, NUM_CLASSES)
    assert torch.allclose(probs.sum(dim=1), torch.ones(4, dtype=torch.float64))


def test_budget_exhausted_is_429(client_for):
    oracle, client = client_for(budget=15)
    assert client.post("/v1/query", json=_payload(10)).status_code == 200
    response = client.post("/v1/query", json=_payload(10))
    assert response.status_code == 429
    body = response.json()
    assert body["error"] == "budget_exhausted"
    assert (body["requested"], body["queries_used"], body["budget"]) == (10, 10, 15)
    assert oracle.queries_used == 10


def test_bad_shape_is_400_and_free(client_for):
    oracle, client = client_for(budget=100)
    images, _ = encode_images(torch.zeros((2, 3, IMAGE_SIZE, IMAGE_SIZE)))
    response = client.post("/v1/query", json={"mode": "hard", "images": images, "shape": [2, 3, IMAGE_SIZE, IMAGE_SIZE]})
    assert response.status_code == 400
    assert response.json()["error"] == "bad_shape"
    bad_b64 = {"mode": "hard", "images": base64.b64encode(b"xyz").decode(), "shape": [1, CHANNELS, IMAGE_SIZE, IMAGE_SIZE]}
    assert client.post("/v1/query", json=bad_b64).status_code == 400
    assert client.post("/v1/query", json={"mode": "psychic"}).status_code == 400
    assert oracle.queries_used == 0


def test_stats(client_for):
    _, client = client_for(budget=50)
    client.post("/v1/query", json={**_payload(5), "phase": "init_clone"})
    stats = client.get("/v1/stats").json()
    assert stats["used"] == 5
    assert stats["budget"] == 50
    assert stats["budget_remaining"] == 45
    assert stats["phase_breakdown"] == {"init_clone": 5}
    assert stats["num_classes"] == NUM_CLASSES
    assert stats["input_shape"] == [CHANNELS, IMAGE_SIZE, IMAGE_SIZE]


def test_sixteen_concurrent_clients_account_exactly(client_for):
    budget = 500
    oracle, client = client_for(budget=budget)
    payload = _payload(7)

    def hammer(_):
        charged = 0
        while True:
            response = client.post("/v1/query", json=payload)
            if response.status_code == 429:
                return charged
            assert response.status_code == 200
            charged += response.json()["charged"]

    with ThreadPoolExecutor(max_workers=16) as pool:
        charges = list(pool.map(hammer, range(16)))
    assert sum(charges) == oracle.queries_used
    assert oracle.queries_used <= budget
    assert oracle.queries_used == 7 * (budget // 7)


# ---- client ---------------------------------------------------------------------


def test_remote_victim_matches_local(client_for):
    oracle, client = client_for(budget=100)
    remote = RemoteVictim("http://testserver", client=client)
    assert remote.num_classes == NUM_CLASSES
    assert remote.input_shape == (CHANNELS, IMAGE_SIZE, IMAGE_SIZE)

    # stored 8-bit pixels survive the wire unchanged, so labels agree
    batch = torch.round((random_images(12, seed=3) + 1) * 127.5) / 127.5 - 1
    remote_labels = remote.hard_label_query(batch, "init_clone")
    local_labels = oracle.model.network(batch).argmax(dim=1)
    assert torch.equal(remote_labels, local_labels)
    assert remote.queries_used == 12
    assert remote.remaining == 88

    probs = remote.soft_label_query(batch[:3], "alternating")
    assert probs.shape == (3, NUM_CLASSES)
    snapshot = remote.ledger_snapshot()
    assert snapshot.phase_breakdown == {"init_clone": 12, "alternating": 3}


def test_remote_victim_maps_errors(client_for):
    _, client = client_for(budget=5)
    remote = RemoteVictim("http://testserver", client=client)
    with pytest.raises(BudgetExhaustedError):
        remote.hard_label_query(random_images(6), "alternating")
    with pytest.raises(InvariantError):
        remote.hard_label_query(torch.zeros((1, 3, IMAGE_SIZE, IMAGE_SIZE)), "alternating")
