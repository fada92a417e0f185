import io
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from inout.errors import InOutError
from inout.manifest import DatasetManifest, ImageSample
from inout.review import ReviewStore, build_app
from inout.seeding import derive_seed

RESOLUTION = (8, 12)  # (w, h)


def fake_generator(prompt, count, seed):
    rng = np.random.default_rng(seed)
    return [
        ImageSample(
            sample_id=f"fake-{seed}-{k:03d}",
            pixels=rng.random((RESOLUTION[1], RESOLUTION[0], 3)).astype(np.float32),
            label="positive",
            source="diffusion",
            split="train",
        )
        for k in range(count)
    ]


def failing_generator(prompt, count, seed):
    raise InOutError("backend exploded")


def wait_for_job(client, job_id, timeout=5.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        job = client.get(f"/jobs/{job_id}").json()
        if job["status"] != "running":
            return job
        time.sleep(0.02)
    raise AssertionError(f"job {job_id} still running after {timeout}s")


@pytest.fixture
def client(tmp_path):
    app = build_app(tmp_path / "state", generator=fake_generator)
    return TestClient(app)


def generate_and_wait(client, sid, count, seed=None):
    body = {"count": count}
    if seed is not None:
        body["seed"] = seed
    r = client.post(f"/sessions/{sid}/generate", json=body)
    assert r.status_code == 202
    job = wait_for_job(client, r.json()["job_id"])
    assert job["status"] == "done", job
    return job


def test_health(client):
    r = client.get("/health")
    assert r.status_code == 200
    assert r.json()["status"] == "ok"


def test_review_round_trip(tmp_path):
    app = build_app(tmp_path / "state", generator=fake_generator)
    client = TestClient(app)

    r = client.post("/sessions", json={"prompt": "skt background cracked",
                                       "seed": 3, "resolution": list(RESOLUTION)})
    assert r.status_code == 201
    sid = r.json()["session_id"]

    job = generate_and_wait(client, sid, 8)
    assert len(job["sample_ids"]) == 8

    view = client.get(f"/sessions/{sid}").json()
    ids = [s["sample_id"] for s in view["samples"]]
    assert all(s["state"] == "pending" for s in view["samples"])
    assert all(s["iteration"] == 1 for s in view["samples"])
    for sample_id in ids[:5]:
        r = client.post(f"/sessions/{sid}/samples/{sample_id}/decision",
                        json={"decision": "accepted"})
        assert r.status_code == 200
    for sample_id in ids[5:]:
        client.post(f"/sessions/{sid}/samples/{sample_id}/decision",
                    json={"decision": "rejected"})

    r = client.post(f"/sessions/{sid}/prompt", json={"prompt": "skt background scratched"})
    assert r.status_code == 200
    assert r.json()["iteration"] == 2
    job = generate_and_wait(client, sid, 4)
    view = client.get(f"/sessions/{sid}").json()
    assert [h["prompt"] for h in view["prompt_history"]] == [
        "skt background cracked", "skt background scratched",
    ]
    second = [s["sample_id"] for s in view["samples"] if s["batch"] == 1]
    assert len(second) == 4
    assert all(s["iteration"] == 2 for s in view["samples"] if s["batch"] == 1)
    client.post(f"/sessions/{sid}/samples/{second[0]}/decision",
                json={"decision": "accepted"})
    client.post(f"/sessions/{sid}/samples/{second[1]}/decision",
                json={"decision": "accepted"})

    r = client.post(f"/sessions/{sid}/export")
    assert r.status_code == 200
    exported = r.json()
    assert sorted(exported["accepted_ids"]) == sorted(ids[:5] + second[:2])

    fragment = DatasetManifest.load(tmp_path / "state" / exported["path"] / "manifest.jsonl")
    assert sorted(e.sample_id for e in fragment.entries) == sorted(exported["accepted_ids"])
    assert all(e.label == "positive" and e.source == "diffusion" for e in fragment.entries)
    assert all((tmp_path / "state" / exported["path"] / e.path).is_file()
               for e in fragment.entries)


def test_export_is_idempotent(client):
    sid = client.post("/sessions", json={"resolution": list(RESOLUTION)}).json()["session_id"]
    generate_and_wait(client, sid, 2)
    view = client.get(f"/sessions/{sid}").json()
    sample_id = view["samples"][0]["sample_id"]
    client.post(f"/sessions/{sid}/samples/{sample_id}/decision",
                json={"decision": "accepted"})
    first = client.post(f"/sessions/{sid}/export").json()
    second = client.post(f"/sessions/{sid}/export").json()
    assert second["export_id"] == first["export_id"]
    assert second["accepted_ids"] == first["accepted_ids"]
    assert second["already_exported"] is True


def test_exported_session_rejects_mutation(client):
    sid = client.post("/sessions", json={"resolution": list(RESOLUTION)}).json()["session_id"]
    generate_and_wait(client, sid, 2)
    view = client.get(f"/sessions/{sid}").json()
    first, second = (s["sample_id"] for s in view["samples"])
    client.post(f"/sessions/{sid}/samples/{first}/decision", json={"decision": "accepted"})
    assert client.post(f"/sessions/{sid}/export").status_code == 200

    r = client.post(f"/sessions/{sid}/samples/{second}/decision",
                    json={"decision": "accepted"})
    assert r.status_code == 409
    assert client.post(f"/sessions/{sid}/generate", json={"count": 1}).status_code == 409
    assert client.post(f"/sessions/{sid}/prompt", json={"prompt": "x"}).status_code == 409


def test_decisions_are_final(client):
    sid = client.post("/sessions", json={"resolution": list(RESOLUTION)}).json()["session_id"]
    generate_and_wait(client, sid, 1)
    sample_id = client.get(f"/sessions/{sid}").json()["samples"][0]["sample_id"]
    url = f"/sessions/{sid}/samples/{sample_id}/decision"
    assert client.post(url, json={"decision": "rejected"}).status_code == 200
    r = client.post(url, json={"decision": "accepted"})
    assert r.status_code == 409
    assert "final" in r.json()["detail"]


def test_export_without_accepted_conflicts(client):
    sid = client.post("/sessions", json={"resolution": list(RESOLUTION)}).json()["session_id"]
    generate_and_wait(client, sid, 1)
    r = client.post(f"/sessions/{sid}/export")
    assert r.status_code == 409


def test_not_found_and_validation(client):
    assert client.get("/sessions/session-9999").status_code == 404
    assert client.get("/jobs/job-x").status_code == 404
    sid = client.post("/sessions", json={"resolution": list(RESOLUTION)}).json()["session_id"]
    assert client.get(f"/sessions/{sid}/samples/zz/image").status_code == 404
    assert client.post(f"/sessions/{sid}/generate", json={"count": -1}).status_code == 422
    assert client.post(f"/sessions/{sid}/samples/zz/decision",
                       json={"decision": "maybe"}).status_code == 422
    assert client.post("/sessions", json={"prompt": "  "}).status_code == 400
    assert client.post(f"/sessions/{sid}/prompt", json={"prompt": " "}).status_code == 400
    assert client.post("/sessions", json={"resolution": [0, 5]}).status_code == 400


def test_zero_count_job_completes_empty(client):
    sid = client.post("/sessions", json={"resolution": list(RESOLUTION)}).json()["session_id"]
    r = client.post(f"/sessions/{sid}/generate", json={"count": 0})
    assert r.status_code == 202
    job = wait_for_job(client, r.json()["job_id"])
    assert job["status"] == "done"
    assert job["sample_ids"] == []
    assert client.get(f"/sessions/{sid}").json()["samples"] == []


def test_decision_note_is_recorded(client):
    sid = client.post("/sessions", json={"resolution": list(RESOLUTION)}).json()["session_id"]
    generate_and_wait(client, sid, 1)
    sample_id = client.get(f"/sessions/{sid}").json()["samples"][0]["sample_id"]
    r = client.post(f"/sessions/{sid}/samples/{sample_id}/decision",
                    json={"decision": "accepted", "note": "clean crack shape"})
    assert r.json()["note"] == "clean crack shape"
    view = client.get(f"/sessions/{sid}").json()
    assert view["samples"][0]["note"] == "clean crack shape"


def test_revising_with_same_text_still_appends(client):
    sid = client.post("/sessions", json={"prompt": "skt background cracked",
                                         "resolution": list(RESOLUTION)}).json()["session_id"]
    first = client.post(f"/sessions/{sid}/prompt",
                        json={"prompt": "skt background cracked"}).json()
    assert first["iteration"] == 2
    history = client.get(f"/sessions/{sid}").json()["prompt_history"]
    assert len(history) == 2


def test_image_endpoint_serves_png(client):
    sid = client.post("/sessions", json={"seed": 11,
                                         "resolution": list(RESOLUTION)}).json()["session_id"]
    generate_and_wait(client, sid, 1)
    sample_id = client.get(f"/sessions/{sid}").json()["samples"][0]["sample_id"]
    r = client.get(f"/sessions/{sid}/samples/{sample_id}/image")
    assert r.status_code == 200
    assert r.headers["content-type"] == "image/png"
    img = Image.open(io.BytesIO(r.content))
    assert img.size == RESOLUTION


def test_default_batch_seed_derives_from_session(client):
    sid = client.post("/sessions", json={"seed": 7,
                                         "resolution": list(RESOLUTION)}).json()["session_id"]
    r = client.post(f"/sessions/{sid}/generate", json={"count": 1})
    job_id = r.json()["job_id"]
    wait_for_job(client, job_id)
    store = client.app.state.store
    assert store.get_job(job_id).seed == derive_seed(7, "generate", 0)


def test_failed_generation_reports_error(tmp_path):
    app = build_app(tmp_path / "state", generator=failing_generator)
    client = TestClient(app)
    sid = client.post("/sessions", json={"resolution": list(RESOLUTION)}).json()["session_id"]
    r = client.post(f"/sessions/{sid}/generate", json={"count": 2})
    job = wait_for_job(client, r.json()["job_id"])
    assert job["status"] == "failed"
    assert "backend exploded" in job["error"]
    assert client.get(f"/sessions/{sid}").json()["samples"] == []


def test_short_generator_output_fails_job(tmp_path):
    app = build_app(tmp_path / "state",
                    generator=lambda p, c, s: fake_generator(p, c - 1, s))
    client = TestClient(app)
    sid = client.post("/sessions", json={"resolution": list(RESOLUTION)}).json()["session_id"]
    r = client.post(f"/sessions/{sid}/generate", json={"count": 3})
    job = wait_for_job(client, r.json()["job_id"])
    assert job["status"] == "failed"
    assert "wanted 3" in job["error"]


def test_replay_rebuilds_state(tmp_path):
    state_dir = tmp_path / "state"
    app = build_app(state_dir, generator=fake_generator)
    client = TestClient(app)
    sid = client.post("/sessions", json={"seed": 5,
                                         "resolution": list(RESOLUTION)}).json()["session_id"]
    generate_and_wait(client, sid, 3)
    view = client.get(f"/sessions/{sid}").json()
    ids = [s["sample_id"] for s in view["samples"]]
    client.post(f"/sessions/{sid}/samples/{ids[0]}/decision", json={"decision": "accepted"})
    client.post(f"/sessions/{sid}/samples/{ids[1]}/decision", json={"decision": "rejected"})
    client.post(f"/sessions/{sid}/prompt", json={"prompt": "skt background scratched"})
    client.post(f"/sessions/{sid}/export")

    rebuilt = ReviewStore(state_dir)
    assert rebuilt.state_fingerprint() == app.state.store.state_fingerprint()


def test_interrupted_job_replays_as_failed(tmp_path):
    store = ReviewStore(tmp_path / "state")
    session = store.create_session("skt background cracked", 0, RESOLUTION)
    job = store.request_generation(session.session_id, 4)
    # No completion event: the process died mid-generation.
    rebuilt = ReviewStore(tmp_path / "state")
    replayed = rebuilt.get_job(job.job_id)
    assert replayed.status == "failed"
    assert "restart" in replayed.error


def test_build_app_requires_generator_or_backend(tmp_path):
    with pytest.raises(InOutError, match="generator or a backend"):
        build_app(tmp_path / "state")
