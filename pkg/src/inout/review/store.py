"""Review state as an append-only event log.

Every mutation is validated against in-memory state, appended to
``events.jsonl``, and then folded into that state by the same ``_apply``
used at startup, so a restart replays the log into exactly the state a
continuously running process would hold. Generation jobs are the one
exception: a job that was requested but never completed cannot resume
after a restart and replays as failed.

All public methods are thread-safe behind a single re-entrant lock;
image files referenced by events live under the same state directory.
"""

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import InOutError


class ReviewNotFound(InOutError):
    """The referenced session, sample, or job does not exist."""


class ReviewConflict(InOutError):
    """The request is valid in shape but not in the current state."""


DECISIONS = ("accepted", "rejected")


@dataclass
class SampleRecord:
    sample_id: str
    origin_id: str
    batch: int
    iteration: int  # which prompt-history entry produced this sample
    path: str  # relative to the state directory
    state: str = "pending"  # pending | accepted | rejected
    note: str = ""


@dataclass
class JobRecord:
    job_id: str
    session_id: str
    batch: int
    iteration: int
    count: int
    seed: int
    prompt: str
    status: str = "running"  # running | done | failed
    sample_ids: list = field(default_factory=list)
    error: str = ""


@dataclass
class SessionRecord:
    session_id: str
    prompt_history: list  # ordered [iteration, prompt] pairs, append-only
    seed: int
    resolution: list
    status: str = "active"  # active | exported
    samples: dict = field(default_factory=dict)  # sample_id -> SampleRecord
    export: dict = field(default_factory=dict)  # set once, then immutable
    next_batch: int = 0

    @property
    def prompt(self) -> str:
        return self.prompt_history[-1][1]

    @property
    def iteration(self) -> int:
        return self.prompt_history[-1][0]


class ReviewStore:
    def __init__(self, state_dir):
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self.events_path = self.state_dir / "events.jsonl"
        self.lock = threading.RLock()
        self.sessions: dict = {}
        self.jobs: dict = {}
        self._seq = 0
        self._replay()

    # -- event plumbing -----------------------------------------------------

    def _replay(self) -> None:
        if not self.events_path.is_file():
            return
        with open(self.events_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    self._apply(json.loads(line))
        # A job mid-flight when the process died can never deliver.
        for job in self.jobs.values():
            if job.status == "running":
                job.status = "failed"
                job.error = "interrupted by restart"

    def _append(self, event: dict) -> None:
        self._seq += 1
        record = {"seq": self._seq, "ts": time.time(), **event}
        with open(self.events_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            fh.flush()
        self._apply(record)

    def _apply(self, event: dict) -> None:
        self._seq = max(self._seq, int(event.get("seq", 0)))
        kind = event["type"]
        if kind == "session_created":
            sid = event["session_id"]
            self.sessions[sid] = SessionRecord(
                session_id=sid,
                prompt_history=[[1, event["prompt"]]],
                seed=int(event["seed"]),
                resolution=list(event["resolution"]),
            )
        elif kind == "generation_requested":
            job = JobRecord(
                job_id=event["job_id"],
                session_id=event["session_id"],
                batch=int(event["batch"]),
                iteration=int(event["iteration"]),
                count=int(event["count"]),
                seed=int(event["seed"]),
                prompt=event["prompt"],
            )
            self.jobs[job.job_id] = job
            session = self.sessions[job.session_id]
            session.next_batch = max(session.next_batch, job.batch + 1)
        elif kind == "samples_added":
            session = self.sessions[event["session_id"]]
            job = self.jobs[event["job_id"]]
            for item in event["samples"]:
                record = SampleRecord(
                    sample_id=item["sample_id"],
                    origin_id=item["origin_id"],
                    batch=int(event["batch"]),
                    iteration=job.iteration,
                    path=item["path"],
                )
                session.samples[record.sample_id] = record
                job.sample_ids.append(record.sample_id)
            job.status = "done"
        elif kind == "job_failed":
            job = self.jobs[event["job_id"]]
            job.status = "failed"
            job.error = event["error"]
        elif kind == "decision_recorded":
            session = self.sessions[event["session_id"]]
            sample = session.samples[event["sample_id"]]
            sample.state = event["decision"]
            sample.note = event.get("note", "")
        elif kind == "prompt_updated":
            session = self.sessions[event["session_id"]]
            session.prompt_history.append([session.iteration + 1, event["prompt"]])
        elif kind == "export_completed":
            session = self.sessions[event["session_id"]]
            session.status = "exported"
            session.export = {
                "export_id": event["export_id"],
                "accepted_ids": list(event["accepted_ids"]),
                "path": event["path"],
            }
        else:
            raise InOutError(f"unknown event type {kind!r} in {self.events_path}")

    # -- lookups ------------------------------------------------------------

    def get_session(self, session_id: str) -> SessionRecord:
        with self.lock:
            if session_id not in self.sessions:
                raise ReviewNotFound(f"no session {session_id!r}")
            return self.sessions[session_id]

    def get_job(self, job_id: str) -> JobRecord:
        with self.lock:
            if job_id not in self.jobs:
                raise ReviewNotFound(f"no job {job_id!r}")
            return self.jobs[job_id]

    def get_sample(self, session_id: str, sample_id: str) -> SampleRecord:
        with self.lock:
            session = self.get_session(session_id)
            if sample_id not in session.samples:
                raise ReviewNotFound(f"no sample {sample_id!r} in session {session_id!r}")
            return session.samples[sample_id]

    def accepted_ids(self, session_id: str) -> list:
        with self.lock:
            session = self.get_session(session_id)
            return [s.sample_id for s in session.samples.values() if s.state == "accepted"]

    def _require_active(self, session_id: str) -> SessionRecord:
        session = self.get_session(session_id)
        if session.status != "active":
            raise ReviewConflict(f"session {session_id!r} is exported and read-only")
        return session

    # -- mutations ----------------------------------------------------------

    def create_session(self, prompt: str, seed: int, resolution) -> SessionRecord:
        with self.lock:
            sid = f"session-{len(self.sessions) + 1:04d}"
            self._append(
                {
                    "type": "session_created",
                    "session_id": sid,
                    "prompt": prompt,
                    "seed": int(seed),
                    "resolution": list(resolution),
                }
            )
            return self.sessions[sid]

    def request_generation(self, session_id: str, count: int, seed=None) -> JobRecord:
        from ..seeding import derive_seed

        with self.lock:
            session = self._require_active(session_id)
            batch = session.next_batch
            if seed is None:
                seed = derive_seed(session.seed, "generate", batch)
            job_id = f"job-{session_id}-{batch:02d}"
            self._append(
                {
                    "type": "generation_requested",
                    "session_id": session_id,
                    "job_id": job_id,
                    "batch": batch,
                    "iteration": session.iteration,
                    "count": int(count),
                    "seed": int(seed),
                    "prompt": session.prompt,
                }
            )
            return self.jobs[job_id]

    def complete_generation(self, job_id: str, samples) -> None:
        """``samples`` is a list of (sample_id, origin_id, relative_path)."""
        with self.lock:
            job = self.get_job(job_id)
            self._append(
                {
                    "type": "samples_added",
                    "session_id": job.session_id,
                    "job_id": job_id,
                    "batch": job.batch,
                    "samples": [
                        {"sample_id": sid, "origin_id": oid, "path": path}
                        for sid, oid, path in samples
                    ],
                }
            )

    def fail_generation(self, job_id: str, error: str) -> None:
        with self.lock:
            job = self.get_job(job_id)
            self._append(
                {
                    "type": "job_failed",
                    "session_id": job.session_id,
                    "job_id": job_id,
                    "error": error,
                }
            )

    def record_decision(self, session_id: str, sample_id: str, decision: str,
                        note: str = "") -> SampleRecord:
        if decision not in DECISIONS:
            raise ReviewConflict(f"decision must be one of {DECISIONS}, got {decision!r}")
        with self.lock:
            self._require_active(session_id)
            sample = self.get_sample(session_id, sample_id)
            if sample.state != "pending":
                raise ReviewConflict(
                    f"sample {sample_id!r} is already {sample.state}; decisions are final"
                )
            self._append(
                {
                    "type": "decision_recorded",
                    "session_id": session_id,
                    "sample_id": sample_id,
                    "decision": decision,
                    "note": note,
                }
            )
            return sample

    def update_prompt(self, session_id: str, prompt: str) -> SessionRecord:
        """Append a prompt revision; returns the session at its new iteration."""
        with self.lock:
            session = self._require_active(session_id)
            self._append(
                {"type": "prompt_updated", "session_id": session_id, "prompt": prompt}
            )
            return session

    def complete_export(self, session_id: str, export_id: str, accepted_ids, path: str) -> None:
        with self.lock:
            self._require_active(session_id)
            self._append(
                {
                    "type": "export_completed",
                    "session_id": session_id,
                    "export_id": export_id,
                    "accepted_ids": list(accepted_ids),
                    "path": path,
                }
            )

    # -- introspection ------------------------------------------------------

    def state_fingerprint(self) -> str:
        """Canonical JSON of the replayable state (jobs excluded: ephemeral)."""
        with self.lock:
            view = {
                sid: {
                    "prompt_history": s.prompt_history,
                    "seed": s.seed,
                    "resolution": s.resolution,
                    "status": s.status,
                    "export": s.export,
                    "samples": {
                        k: {
                            "origin_id": v.origin_id,
                            "batch": v.batch,
                            "iteration": v.iteration,
                            "path": v.path,
                            "state": v.state,
                            "note": v.note,
                        }
                        for k, v in s.samples.items()
                    },
                }
                for sid, s in self.sessions.items()
            }
            return json.dumps(view, sort_keys=True)
