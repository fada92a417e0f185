"""HTTP endpoints for reviewing generated defect images.

Generation is asynchronous: the request returns a job id immediately and a
worker thread produces the images, so a reviewer can keep deciding while a
batch renders. Everything else is synchronous against the event-log store.

The export fragment is a dataset manifest holding exactly the accepted
samples. Exporting freezes the session; repeating the call returns the same
fragment instead of writing a second one.
"""

import hashlib
import threading
from typing import Literal

from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel, Field

from ..diffusion import GenerationRequest, generate
from ..errors import InOutError
from ..imgio import file_digest, write_image
from ..manifest import (
    LABEL_POSITIVE,
    SOURCE_DIFFUSION,
    SPLIT_TRAIN,
    DatasetManifest,
    ManifestEntry,
)
from .store import ReviewConflict, ReviewNotFound, ReviewStore

DEFAULT_PROMPT = "skt background cracked"


class CreateSessionBody(BaseModel):
    prompt: str = DEFAULT_PROMPT
    seed: int = 0
    resolution: list | None = None


class GenerateBody(BaseModel):
    count: int = Field(ge=0, le=256)
    seed: int | None = None


class DecisionBody(BaseModel):
    decision: Literal["accepted", "rejected"]
    note: str = ""


class PromptBody(BaseModel):
    prompt: str = Field(min_length=1)


def default_generator(backend, adapter, alpha, resolution):
    """Wire the diffusion stack into the (prompt, count, seed) shape."""

    def generator(prompt, count, seed):
        request = GenerationRequest(
            prompts=(prompt,), count=count, seed=seed, resolution=resolution
        )
        return generate(backend, adapter, alpha, request)

    return generator


def _session_view(store: ReviewStore, session) -> dict:
    jobs = [
        {
            "job_id": j.job_id,
            "batch": j.batch,
            "status": j.status,
            "count": j.count,
            "sample_ids": list(j.sample_ids),
            "error": j.error,
        }
        for j in store.jobs.values()
        if j.session_id == session.session_id
    ]
    return {
        "session_id": session.session_id,
        "prompt": session.prompt,
        "iteration": session.iteration,
        "prompt_history": [
            {"iteration": it, "prompt": text} for it, text in session.prompt_history
        ],
        "seed": session.seed,
        "resolution": session.resolution,
        "status": session.status,
        "samples": [
            {
                "sample_id": s.sample_id,
                "state": s.state,
                "batch": s.batch,
                "iteration": s.iteration,
                "note": s.note,
            }
            for s in session.samples.values()
        ],
        "accepted_ids": store.accepted_ids(session.session_id),
        "export": session.export,
        "jobs": sorted(jobs, key=lambda j: j["batch"]),
    }


def build_app(state_dir, backend=None, adapter=None, alpha: float = 1.0,
              generator=None, resolution=None) -> FastAPI:
    """Assemble the review app around a state directory.

    ``generator`` is any callable ``(prompt, count, seed) -> [ImageSample]``;
    passing one keeps the service independent of the diffusion stack (tests,
    pre-rendered pools). Without one, ``backend`` is required.
    """
    if generator is None:
        if backend is None:
            raise InOutError("build_app needs either a generator or a backend")
        generator = default_generator(backend, adapter, alpha, resolution)

    store = ReviewStore(state_dir)
    app = FastAPI(title="inout review")
    app.state.store = store

    def _http(exc: InOutError) -> HTTPException:
        if isinstance(exc, ReviewNotFound):
            return HTTPException(status_code=404, detail=str(exc))
        if isinstance(exc, ReviewConflict):
            return HTTPException(status_code=409, detail=str(exc))
        return HTTPException(status_code=400, detail=str(exc))

    def _run_job(job_id: str) -> None:
        job = store.get_job(job_id)
        try:
            samples = generator(job.prompt, job.count, job.seed)
            if len(samples) != job.count:
                raise InOutError(
                    f"generator returned {len(samples)} samples, wanted {job.count}"
                )
            records = []
            for k, sample in enumerate(samples):
                sample_id = f"{job.batch:02d}-{k:03d}"
                rel = f"images/{job.session_id}/{sample_id}.png"
                write_image(store.state_dir / rel, sample.pixels)
                records.append((sample_id, sample.sample_id, rel))
            store.complete_generation(job_id, records)
        except InOutError as exc:
            store.fail_generation(job_id, str(exc))

    @app.get("/health")
    def health():
        return {"status": "ok", "sessions": len(store.sessions)}

    @app.get("/sessions")
    def list_sessions():
        with store.lock:
            return {
                "sessions": [
                    {
                        "session_id": s.session_id,
                        "prompt": s.prompt,
                        "status": s.status,
                        "num_samples": len(s.samples),
                    }
                    for s in store.sessions.values()
                ]
            }

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        resolution = body.resolution if body.resolution else [32, 96]
        if len(resolution) != 2 or any(int(v) < 1 for v in resolution):
            raise HTTPException(status_code=400, detail="resolution must be [w, h] >= 1")
        if not body.prompt.strip():
            raise HTTPException(status_code=400, detail="prompt must be nonempty")
        session = store.create_session(body.prompt, body.seed, resolution)
        return _session_view(store, session)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            return _session_view(store, store.get_session(session_id))
        except InOutError as exc:
            raise _http(exc) from exc

    @app.post("/sessions/{session_id}/generate", status_code=202)
    def request_generation(session_id: str, body: GenerateBody):
        try:
            job = store.request_generation(session_id, body.count, seed=body.seed)
        except InOutError as exc:
            raise _http(exc) from exc
        thread = threading.Thread(target=_run_job, args=(job.job_id,), daemon=True)
        thread.start()
        return {"job_id": job.job_id, "session_id": session_id, "status": job.status}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        try:
            job = store.get_job(job_id)
        except InOutError as exc:
            raise _http(exc) from exc
        return {
            "job_id": job.job_id,
            "session_id": job.session_id,
            "status": job.status,
            "sample_ids": list(job.sample_ids),
            "error": job.error,
        }

    @app.get("/sessions/{session_id}/samples/{sample_id}/image")
    def get_image(session_id: str, sample_id: str):
        try:
            sample = store.get_sample(session_id, sample_id)
        except InOutError as exc:
            raise _http(exc) from exc
        data = (store.state_dir / sample.path).read_bytes()
        return Response(content=data, media_type="image/png")

    @app.post("/sessions/{session_id}/samples/{sample_id}/decision")
    def record_decision(session_id: str, sample_id: str, body: DecisionBody):
        try:
            sample = store.record_decision(session_id, sample_id, body.decision,
                                           note=body.note)
        except InOutError as exc:
            raise _http(exc) from exc
        return {"sample_id": sample.sample_id, "state": sample.state, "note": sample.note}

    @app.post("/sessions/{session_id}/prompt")
    def update_prompt(session_id: str, body: PromptBody):
        if not body.prompt.strip():
            raise HTTPException(status_code=400, detail="prompt must be nonempty")
        try:
            session = store.update_prompt(session_id, body.prompt)
        except InOutError as exc:
            raise _http(exc) from exc
        return {
            "session_id": session.session_id,
            "prompt": session.prompt,
            "iteration": session.iteration,
        }

    @app.post("/sessions/{session_id}/export")
    def export_session(session_id: str):
        with store.lock:
            try:
                session = store.get_session(session_id)
            except InOutError as exc:
                raise _http(exc) from exc
            if session.status == "exported":
                return {"session_id": session_id, **session.export, "already_exported": True}
            accepted = [s for s in session.samples.values() if s.state == "accepted"]
            if not accepted:
                raise HTTPException(
                    status_code=409, detail="nothing to export: no accepted samples"
                )
            export_id = hashlib.sha256(
                "|".join(s.sample_id for s in accepted).encode()
            ).hexdigest()[:12]
            out_dir = store.state_dir / "exports" / session_id
            entries = []
            for s in accepted:
                rel = f"images/{s.sample_id}.png"
                dst = out_dir / rel
                dst.parent.mkdir(parents=True, exist_ok=True)
                dst.write_bytes((store.state_dir / s.path).read_bytes())
                entries.append(
                    ManifestEntry(
                        sample_id=s.sample_id,
                        path=rel,
                        label=LABEL_POSITIVE,
                        source=SOURCE_DIFFUSION,
                        split=SPLIT_TRAIN,
                        digest=file_digest(dst),
                    )
                )
            fragment = DatasetManifest.build(
                root=out_dir,
                target_resolution=tuple(session.resolution),
                entries=entries,
                meta={"session_id": session_id, "export_id": export_id},
            )
            fragment.save(out_dir / "manifest.jsonl")
            rel_out = str(out_dir.relative_to(store.state_dir))
            try:
                store.complete_export(
                    session_id, export_id, [s.sample_id for s in accepted], rel_out
                )
            except InOutError as exc:
                raise _http(exc) from exc
            return {"session_id": session_id, **store.get_session(session_id).export}

    return app
