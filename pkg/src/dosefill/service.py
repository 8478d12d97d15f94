"""HTTP service for live trial conduct.

Each trial is an append-only JSON-lines event log on disk; the in-memory
state is a pure fold of that log, so a service restart loses nothing and
replaying a log reproduces every recommendation (the posterior fit seed is
fixed per trial at creation).  What-if queries never touch the log.

Endpoints:
    POST /trials                   create a trial from a DesignConfig
    POST /trials/{id}/cohorts      enroll a cohort (escalation or backfill)
    POST /trials/{id}/outcomes     record per-patient cycle observations
    GET  /trials/{id}/state        posterior curves, rule status, history
    POST /trials/{id}/whatif       hypothetical outcomes, nothing persisted
    GET  /trials/{id}/log          the raw event log (JSON lines)
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Body, FastAPI, Header, HTTPException, Response
from fastapi.staticfiles import StaticFiles

from .model import UndefinedCVError, cv_mtd, dose_summaries, fit, mtd_draws, tox_quantiles
from .trial import (
    BACKFILL,
    CachedPosterior,
    CohortView,
    DesignConfig,
    ESCALATION,
    EngineInputs,
    HypotheticalOutcome,
    MalformedHypotheticalError,
    PatientView,
    _inputs_from_views,
    evaluate_position,
    what_if_on_views,
)

_ID_RE = re.compile(r"^[A-Za-z0-9_-]{1,64}$")


@dataclass
class PatientEntry:
    dose_idx: int
    kind: str
    cycles: dict[int, bool] = field(default_factory=dict)

    @property
    def cycles_observed(self) -> int:
        return len(self.cycles)

    @property
    def dlt_cycle(self) -> int | None:
        for c in sorted(self.cycles):
            if self.cycles[c]:
                return c
        return None


@dataclass
class Session:
    """In-memory fold of one trial's event log."""

    trial_id: str
    design: DesignConfig
    fit_seed: int
    events: list[dict] = field(default_factory=list)
    patients: dict[str, PatientEntry] = field(default_factory=dict)
    order: list[str] = field(default_factory=list)
    cohorts: list[dict] = field(default_factory=list)
    idempotency: dict[str, dict] = field(default_factory=dict)
    stopped: bool = False

    def apply(self, event: dict) -> None:
        self.events.append(event)
        kind = event["type"]
        if kind == "enroll":
            for pid in event["patients"]:
                self.patients[pid] = PatientEntry(
                    dose_idx=event["dose_level"] - 1, kind=event["kind"]
                )
                self.order.append(pid)
            self.cohorts.append(
                {"dose_level": event["dose_level"], "kind": event["kind"], "patients": event["patients"]}
            )
        elif kind in ("observe", "amend"):
            entry = self.patients[event["patient"]]
            entry.cycles[event["cycle"]] = bool(event["dlt"])
        elif kind == "decide":
            self.stopped = bool(event.get("stopped", False))
            key = event.get("idempotency_key")
            if key:
                self.idempotency[key] = event.get("response", {})

    def views(self) -> list[PatientView]:
        return [
            PatientView(
                dose_idx=e.dose_idx,
                kind=e.kind,
                cycles_observed=e.cycles_observed,
                dlt_cycle=e.dlt_cycle,
            )
            for e in (self.patients[pid] for pid in self.order)
        ]

    def cohort_views(self) -> list[CohortView]:
        out = []
        for c in self.cohorts:
            members = [self.patients[p] for p in c["patients"]]
            observed = bool(members) and all(m.cycles_observed >= 1 for m in members)
            out.append(
                CohortView(dose_idx=c["dose_level"] - 1, kind=c["kind"], observed=observed)
            )
        return out

    def inputs(self) -> EngineInputs:
        return _inputs_from_views(self.design, self.views(), self.cohort_views())


class FixedSeedPosterior:
    """Posterior provider for conduct mode: every refit uses the trial's
    fixed seed, and records are memoized by dataset content so the displayed
    summaries, quantile bands and recommendation all come from one fit."""

    def __init__(self, design: DesignConfig, seed: int, max_entries: int = 64):
        self.design = design
        self.seed = seed
        self.max_entries = max_entries
        self._memo: dict[tuple, object] = {}

    @staticmethod
    def _key(observations) -> tuple:
        groups: dict[tuple, int] = {}
        for obs in observations:
            k = (obs.dose, obs.weight, bool(obs.dlt))
            groups[k] = groups.get(k, 0) + 1
        return tuple(sorted(groups.items()))

    def record(self, observations):
        key = self._key(observations)
        found = self._memo.get(key)
        if found is not None:
            return found
        draws = fit(
            observations,
            prior=self.design.prior,
            config=self.design.sampler,
            seed=self.seed,
        )
        summaries = dose_summaries(draws, self.design.grid, (self.design.rules.tau1,))
        try:
            cv = cv_mtd(mtd_draws(draws, self.design.target))
        except UndefinedCVError:
            cv = None
        value = CachedPosterior(summaries=summaries, cv=cv, draws=draws)
        if len(self._memo) >= self.max_entries:
            self._memo.clear()
        self._memo[key] = value
        return value

    # PosteriorCache-compatible surface for evaluate_position / what_if
    def posterior(self, observations):
        return self.record(observations)


class LogStore:
    """Append-only JSONL persistence, one file per trial."""

    def __init__(self, data_dir: Path):
        self.data_dir = data_dir
        self.data_dir.mkdir(parents=True, exist_ok=True)

    def path(self, trial_id: str) -> Path:
        return self.data_dir / f"{trial_id}.jsonl"

    def append(self, trial_id: str, event: dict) -> None:
        with self.path(trial_id).open("a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def load(self, trial_id: str) -> list[dict]:
        path = self.path(trial_id)
        if not path.exists():
            raise KeyError(trial_id)
        return [json.loads(line) for line in path.read_text().splitlines() if line]

    def exists(self, trial_id: str) -> bool:
        return self.path(trial_id).exists()

    def trial_ids(self) -> list[str]:
        return sorted(p.stem for p in self.data_dir.glob("*.jsonl"))


def _position_payload(session: Session, cache: FixedSeedPosterior) -> dict:
    inputs = session.inputs()
    position = evaluate_position(session.design, inputs, cache)
    return {
        "recommendation_level": position.next_dose_idx + 1,
        "in_startup": position.in_startup,
        "stopped": position.decision.stopped,
        "stop_reason": position.decision.reason.value,
        "recommends_dose": position.decision.recommends_dose,
        "excluded_levels": [j + 1 for j, f in enumerate(position.excluded) if f],
        "mean_tox": list(position.summaries.mean_tox),
        "cv_mtd": position.cv,
        "n_enrolled": inputs.n_enrolled,
    }


def create_app(
    data_dir: str | os.PathLike | None = None,
    token: str | None = None,
    ui_dir: str | os.PathLike | None = None,
) -> FastAPI:
    data_dir = Path(
        data_dir or os.environ.get("DOSEFILL_DATA_DIR", "./dosefill-data")
    )
    token = token or os.environ.get("DOSEFILL_TOKEN")
    store = LogStore(data_dir)
    sessions: dict[str, Session] = {}
    caches: dict[str, FixedSeedPosterior] = {}
    locks: dict[str, threading.Lock] = {}
    global_lock = threading.Lock()

    app = FastAPI(title="dosefill conduct service")

    def check_token(x_auth_token: str | None) -> None:
        if token and x_auth_token != token:
            raise HTTPException(status_code=401, detail="missing or invalid token")

    def lock_for(trial_id: str) -> threading.Lock:
        with global_lock:
            return locks.setdefault(trial_id, threading.Lock())

    def session_for(trial_id: str) -> Session:
        found = sessions.get(trial_id)
        if found is not None:
            return found
        try:
            events = store.load(trial_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown trial {trial_id!r}")
        created = events[0]
        session = Session(
            trial_id=trial_id,
            design=DesignConfig.from_dict(created["config"]),
            fit_seed=created["fit_seed"],
        )
        for event in events[1:]:
            session.apply(event)
        session.events = events
        sessions[trial_id] = session
        return session

    def cache_for(session: Session) -> FixedSeedPosterior:
        cache = caches.get(session.trial_id)
        if cache is None:
            cache = FixedSeedPosterior(session.design, session.fit_seed)
            caches[session.trial_id] = cache
        return cache

    @app.post("/trials", status_code=201)
    def create_trial(
        payload: dict = Body(...),
        x_auth_token: str | None = Header(default=None),
    ):
        check_token(x_auth_token)
        config = payload.get("config")
        if config is None:
            raise HTTPException(status_code=422, detail="missing 'config'")
        try:
            design = DesignConfig.from_dict(config)
        except (ValueError, KeyError, TypeError) as err:
            raise HTTPException(status_code=422, detail=f"invalid config: {err}")
        trial_id = payload.get("trial_id") or uuid.uuid4().hex[:12]
        if not _ID_RE.match(trial_id):
            raise HTTPException(status_code=422, detail="invalid trial_id")
        with lock_for(trial_id):
            if store.exists(trial_id):
                raise HTTPException(status_code=409, detail=f"trial {trial_id!r} exists")
            fit_seed = payload.get("fit_seed")
            if fit_seed is None:
                fit_seed = int.from_bytes(
                    hashlib.sha256(trial_id.encode()).digest()[:8], "big"
                )
            event = {
                "type": "created",
                "trial_id": trial_id,
                "config": design.to_dict(),
                "fit_seed": int(fit_seed),
                "ts": time.time(),
            }
            store.append(trial_id, event)
            session = Session(trial_id=trial_id, design=design, fit_seed=int(fit_seed))
            session.events = [event]
            sessions[trial_id] = session
        return {"trial_id": trial_id, "fit_seed": int(fit_seed)}

    @app.post("/trials/{trial_id}/cohorts", status_code=201)
    def enroll_cohort(
        trial_id: str,
        payload: dict = Body(...),
        x_auth_token: str | None = Header(default=None),
    ):
        check_token(x_auth_token)
        with lock_for(trial_id):
            session = session_for(trial_id)
            if session.stopped:
                raise HTTPException(status_code=409, detail="trial already stopped")
            dose_level = payload.get("dose_level")
            kind = payload.get("kind", ESCALATION)
            if kind not in (ESCALATION, BACKFILL):
                raise HTTPException(status_code=422, detail="kind must be escalation or backfill")
            if (
                not isinstance(dose_level, int)
                or not 1 <= dose_level <= len(session.design.grid)
            ):
                raise HTTPException(status_code=422, detail="dose_level out of range")
            n = len(session.patients)
            if n + session.design.cohort_size > session.design.rules.n_max:
                raise HTTPException(status_code=409, detail="n_max reached")
            patients = payload.get("patients")
            if patients is None:
                patients = [
                    f"p{n + i + 1}" for i in range(session.design.cohort_size)
                ]
            if len(patients) != session.design.cohort_size:
                raise HTTPException(
                    status_code=422,
                    detail=f"a cohort holds exactly {session.design.cohort_size} patients",
                )
            dupes = [p for p in patients if p in session.patients]
            if dupes:
                raise HTTPException(status_code=409, detail=f"patients already enrolled: {dupes}")
            event = {
                "type": "enroll",
                "dose_level": dose_level,
                "kind": kind,
                "patients": list(patients),
                "ts": time.time(),
            }
            store.append(trial_id, event)
            session.apply(event)
        return {"trial_id": trial_id, "patients": patients, "n_enrolled": len(session.patients)}

    @app.post("/trials/{trial_id}/outcomes")
    def post_outcomes(
        trial_id: str,
        payload: dict = Body(...),
        x_auth_token: str | None = Header(default=None),
    ):
        check_token(x_auth_token)
        with lock_for(trial_id):
            session = session_for(trial_id)
            key = payload.get("idempotency_key")
            if key and key in session.idempotency:
                return session.idempotency[key]
            observations = payload.get("observations", [])
            amend = bool(payload.get("amend", False))
            if not observations:
                raise HTTPException(status_code=422, detail="no observations supplied")
            staged = []
            seen: set[tuple[str, int]] = set()
            for obs in observations:
                pid = obs.get("patient")
                cycle = obs.get("cycle")
                dlt = obs.get("dlt")
                if pid not in session.patients:
                    raise HTTPException(status_code=422, detail=f"unknown patient {pid!r}")
                if not isinstance(cycle, int) or not 1 <= cycle <= session.design.followup_cycles:
                    raise HTTPException(status_code=422, detail=f"bad cycle {cycle!r}")
                if not isinstance(dlt, bool):
                    raise HTTPException(status_code=422, detail="dlt must be boolean")
                if (pid, cycle) in seen:
                    raise HTTPException(status_code=409, detail=f"duplicate ({pid}, {cycle}) in request")
                seen.add((pid, cycle))
                staged.append((pid, cycle, dlt))
            # validate against current state: contiguous cycles, no duplicates
            counts = {pid: entry.cycles_observed for pid, entry in session.patients.items()}
            for pid, cycle, dlt in sorted(staged, key=lambda s: (s[0], s[1])):
                if amend:
                    if cycle > session.patients[pid].cycles_observed:
                        raise HTTPException(
                            status_code=422, detail=f"cannot amend unobserved cycle {cycle} of {pid}"
                        )
                    continue
                if cycle <= counts[pid]:
                    raise HTTPException(
                        status_code=409,
                        detail=f"cycle {cycle} of patient {pid} already recorded",
                    )
                if cycle != counts[pid] + 1:
                    raise HTTPException(
                        status_code=422,
                        detail=f"out-of-order cycle {cycle} for patient {pid} "
                        f"(next expected {counts[pid] + 1})",
                    )
                counts[pid] += 1
            for pid, cycle, dlt in staged:
                event = {
                    "type": "amend" if amend else "observe",
                    "patient": pid,
                    "cycle": cycle,
                    "dlt": dlt,
                    "ts": time.time(),
                }
                store.append(trial_id, event)
                session.apply(event)
            response = _position_payload(session, cache_for(session))
            decide_event = {
                "type": "decide",
                "stopped": response["stopped"],
                "response": response,
                "idempotency_key": key,
                "ts": time.time(),
            }
            store.append(trial_id, decide_event)
            session.apply(decide_event)
        return response

    @app.get("/trials/{trial_id}/state")
    def get_state(
        trial_id: str,
        x_auth_token: str | None = Header(default=None),
    ):
        check_token(x_auth_token)
        session = session_for(trial_id)
        design = session.design
        inputs = session.inputs()
        cache = cache_for(session)
        position = evaluate_position(design, inputs, cache)
        record = cache.record(inputs.observations)
        quantiles = tox_quantiles(record.draws, design.grid)
        tau1 = design.rules.tau1
        summ = record.summaries
        cv = record.cv
        return {
            "trial_id": trial_id,
            "config": design.to_dict(),
            "doses": list(design.grid.doses),
            "target": design.target,
            "n_enrolled": inputs.n_enrolled,
            "patients": [
                {
                    "id": pid,
                    "dose_level": session.patients[pid].dose_idx + 1,
                    "kind": session.patients[pid].kind,
                    "cycles_observed": session.patients[pid].cycles_observed,
                    "dlt_cycle": session.patients[pid].dlt_cycle,
                }
                for pid in session.order
            ],
            "cohorts": session.cohorts,
            "backfill_ledger": [c for c in session.cohorts if c["kind"] == BACKFILL],
            "summaries": {
                "mean_tox": list(summ.mean_tox),
                "tail_above_tau1": list(summ.tail_above[tau1]),
                "tail_below_tau1": list(summ.tail_below[tau1]),
                "quantiles": {repr(q): list(v) for q, v in quantiles.items()},
            },
            "rule_status": {
                "recommendation_level": position.next_dose_idx + 1,
                "in_startup": position.in_startup,
                "stopped": position.decision.stopped,
                "stop_reason": position.decision.reason.value,
                "recommends_dose": position.decision.recommends_dose,
                "excluded_levels": [j + 1 for j, f in enumerate(position.excluded) if f],
            },
            "cv_mtd": cv,
            "events": session.events,
        }

    @app.post("/trials/{trial_id}/whatif")
    def post_whatif(
        trial_id: str,
        payload: dict = Body(...),
        x_auth_token: str | None = Header(default=None),
    ):
        check_token(x_auth_token)
        session = session_for(trial_id)
        hypothetical = []
        index = {pid: i for i, pid in enumerate(session.order)}
        for h in payload.get("hypothetical", []):
            pid = h.get("patient")
            if pid not in index:
                raise HTTPException(status_code=422, detail=f"unknown patient {pid!r}")
            hypothetical.append(
                HypotheticalOutcome(
                    patient=index[pid], cycle=h.get("cycle"), dlt=bool(h.get("dlt"))
                )
            )
        try:
            result = what_if_on_views(
                session.design,
                session.views(),
                session.cohort_views(),
                hypothetical,
                cache_for(session),
            )
        except MalformedHypotheticalError as err:
            raise HTTPException(status_code=422, detail=str(err))
        return {
            "recommendation_level": result.recommendation_level,
            "stopped": result.decision.stopped,
            "stop_reason": result.decision.reason.value,
            "recommends_dose": result.decision.recommends_dose,
            "mean_tox": list(result.mean_tox),
            "cv_mtd": result.cv,
            "excluded_levels": list(result.excluded_levels),
        }

    @app.get("/trials/{trial_id}/log")
    def get_log(
        trial_id: str,
        x_auth_token: str | None = Header(default=None),
    ):
        check_token(x_auth_token)
        session_for(trial_id)  # 404 on unknown id
        text = store.path(trial_id).read_text()
        return Response(content=text, media_type="application/x-ndjson")

    @app.get("/trials")
    def list_trials(x_auth_token: str | None = Header(default=None)):
        check_token(x_auth_token)
        return {"trials": store.trial_ids()}

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
