"""Single-session discrete-event simulation of the outpatient department.

One run covers a 360-minute morning session: 368 walk-ins arrive along a
morning-peaked intensity, pass through a bank of registration desks, wait in
a shared pool partitioned across six physicians, and are seen in an order
decided by the active queueing strategy.  After closing time no new consults
start; consults already underway finish, everyone else counts as unserved.

Event ordering at equal timestamps is fixed (consult-end, reassessment,
registration-done, arrival, dispatch) so runs are exactly reproducible for a
given seed and configuration.
"""

from __future__ import annotations

import dataclasses
import enum
import heapq
import itertools
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .arrivals import IntensityProfile, default_profile, sample_arrivals
from .assignment import Physician, PhysicianStatus, assign, default_roster
from .errors import ValidationError
from .patients import HistoryRecord, N_PATIENTS, Patient, UrgencyLevel
from .triage import CalibratedTriageBackend, DriftParams
from .waitqueue import (
    AdaptiveQueue,
    CAUSE_DRIFT,
    CAUSE_MEMORY,
    EscalationEvent,
    PriorityWeights,
    QueueEntry,
    priority_score,
)

SESSION_MINUTES = 360.0
N_REGISTRATION_DESKS = 4

# Registration service time (minutes): manual desks vs. assisted intake used
# under the agentic strategy.
REG_MEAN_MANUAL = 5.5
REG_MEAN_ASSISTED = 3.3
REG_STD = 2.0
REG_MIN = 0.5

# Consult duration (mean, std) by the urgency the patient holds when called.
CONSULT_PARAMS = {
    UrgencyLevel.CRITICAL: (15.0, 4.0),
    UrgencyLevel.HIGH: (10.0, 3.0),
    UrgencyLevel.MEDIUM: (7.0, 2.5),
    UrgencyLevel.LOW: (5.0, 1.5),
}
CONSULT_MIN = 1.0

# Same-timestamp precedence: finish consults first so freed desks are visible,
# then reassess, complete registrations, admit arrivals, and dispatch last.
_EVT_CONSULT_END = 0
_EVT_REASSESS = 1
_EVT_REG_DONE = 2
_EVT_ARRIVAL = 3
_EVT_DISPATCH = 4

# RNG purpose streams within one run's seed.
_STREAM_ARRIVALS = 0
_STREAM_PAIRING = 1
_STREAM_REGISTRATION = 2
_STREAM_CONSULT = 3
_STREAM_BACKEND = 4

WITHIN_CRITICAL_FAST = 10.0
WITHIN_CRITICAL_OK = 15.0


class Strategy(enum.Enum):
    FCFS = "fcfs"
    RULE_BASED = "rule_based"
    AGENTIC = "agentic"


@dataclass
class StrategyConfig:
    """Everything that varies between experimental arms.

    Non-agentic strategies have no reassessment loop, so memory and drift
    flags are forced off for them.
    """

    strategy: Strategy = Strategy.AGENTIC
    memory_enabled: bool = True
    drift_enabled: bool = True
    registration_desks: int = N_REGISTRATION_DESKS
    registration_mean: float | None = None
    registration_std: float = REG_STD
    session_minutes: float = SESSION_MINUTES
    drift: DriftParams = field(default_factory=DriftParams)
    weights: PriorityWeights = field(default_factory=PriorityWeights)

    def __post_init__(self):
        if isinstance(self.strategy, str):
            try:
                self.strategy = Strategy(self.strategy)
            except ValueError as exc:
                raise ValidationError(f"unknown strategy {self.strategy!r}") from exc
        if self.strategy is not Strategy.AGENTIC:
            self.memory_enabled = False
            self.drift_enabled = False
        if self.registration_mean is None:
            self.registration_mean = (
                REG_MEAN_ASSISTED if self.strategy is Strategy.AGENTIC else REG_MEAN_MANUAL
            )
        if self.registration_desks < 1:
            raise ValidationError("need at least one registration desk")
        if self.registration_mean <= 0 or self.registration_std < 0:
            raise ValidationError("bad registration time parameters")
        if self.session_minutes <= 0:
            raise ValidationError("session must have positive length")

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "memory_enabled": self.memory_enabled,
            "drift_enabled": self.drift_enabled,
            "registration_desks": self.registration_desks,
            "registration_mean": self.registration_mean,
            "registration_std": self.registration_std,
            "session_minutes": self.session_minutes,
            "drift": self.drift.to_dict(),
            "weights": self.weights.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "StrategyConfig":
        d = dict(d)
        if "drift" in d:
            d["drift"] = DriftParams.from_dict(d["drift"])
        if "weights" in d:
            d["weights"] = PriorityWeights.from_dict(d["weights"])
        try:
            return StrategyConfig(**d)
        except TypeError as exc:
            raise ValidationError(f"bad config: {exc}") from exc


@dataclass
class ServedVisit:
    patient_id: str
    face_urgency: UrgencyLevel
    effective_urgency: UrgencyLevel
    required_specialty: str
    physician_id: str
    physician_specialty: str
    registered_at: float
    level_entered_at: float
    consult_start: float
    consult_end: float

    @property
    def wait_from_registration(self) -> float:
        return self.consult_start - self.registered_at

    @property
    def wait_from_level_entry(self) -> float:
        return self.consult_start - self.level_entered_at

    @property
    def specialty_matched(self) -> bool:
        return self.required_specialty == self.physician_specialty


@dataclass
class SessionMetrics:
    strategy: str
    seed: int
    session_minutes: float
    served_count: int
    unserved_count: int
    throughput_per_hour: float
    avg_wait: float | None
    median_wait: float | None
    p95_wait: float | None
    wait_by_face: dict[str, float | None]
    # Waits by the urgency held at consult, measured from the moment the
    # patient entered that level (registration, or the escalation instant).
    wait_by_effective: dict[str, float | None]
    critical_wait_mean: float | None
    pct_critical_within_10: float | None
    pct_critical_within_15: float | None
    critical_served: int
    critical_effective_count: int
    drift_event_count: int
    memory_escalation_count: int
    escalation_count: int
    final_composition: dict[str, int]
    specialty_match_rate: float | None
    per_physician_served: dict[str, int]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "SessionMetrics":
        try:
            return SessionMetrics(**d)
        except TypeError as exc:
            raise ValidationError(f"bad metrics record: {exc}") from exc


@dataclass
class SessionResult:
    metrics: SessionMetrics
    escalations: list[EscalationEvent]
    served: list[ServedVisit]
    trace: list[dict] = field(default_factory=list)


def _stream(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))


def _positive_normal(rng: np.random.Generator, mean: float, std: float, floor: float) -> float:
    """Normal draw resampled until it clears the floor (service times)."""
    if std == 0:
        return max(mean, floor)
    while True:
        x = float(rng.normal(mean, std))
        if x >= floor:
            return x


class _Session:
    def __init__(self, patients, history, config, seed, roster, profile, backend, collect_trace):
        self.patients = patients
        self.history = history
        self.config = config
        self.seed = seed
        self.roster = roster
        self.by_id = {p.physician_id: p for p in roster}
        self.profile = profile
        self.backend = backend
        self.collect_trace = collect_trace

        self.rng_reg = _stream(seed, _STREAM_REGISTRATION)
        self.rng_consult = _stream(seed, _STREAM_CONSULT)

        self.queue = AdaptiveQueue(config.weights)
        self.reg_queue: deque[Patient] = deque()
        self.free_desks = config.registration_desks
        self.rr_cursor = 0

        self.heap: list = []
        self._seq = itertools.count()

        self.served: list[ServedVisit] = []
        self.escalations: list[EscalationEvent] = []
        self.trace: list[dict] = []

    # -- plumbing ---------------------------------------------------------

    def push(self, time: float, precedence: int, kind: str, payload=None):
        heapq.heappush(self.heap, (time, precedence, next(self._seq), kind, payload))

    def record(self, time: float, kind: str, patient_id: str = "", physician_id: str = "", detail: str = ""):
        if self.collect_trace:
            self.trace.append(
                {
                    "time": round(time, 6),
                    "event": kind,
                    "patient_id": patient_id,
                    "physician_id": physician_id,
                    "detail": detail,
                }
            )

    def load_of(self, physician_id: str) -> float:
        longest = max(1, max(p.queue_length for p in self.roster))
        return self.by_id[physician_id].queue_length / longest

    # -- handlers ---------------------------------------------------------

    def on_arrival(self, t: float, patient: Patient):
        self.record(t, "arrival", patient.patient_id)
        if self.free_desks > 0:
            self._start_registration(t, patient)
        else:
            self.reg_queue.append(patient)

    def _start_registration(self, t: float, patient: Patient):
        self.free_desks -= 1
        dur = _positive_normal(
            self.rng_reg, self.config.registration_mean, self.config.registration_std, REG_MIN
        )
        self.push(t + dur, _EVT_REG_DONE, "reg_done", patient)

    def on_reg_done(self, t: float, patient: Patient):
        self.free_desks += 1
        # Desks stop taking new registrations at closing time.
        if self.reg_queue and t < self.config.session_minutes:
            self._start_registration(t, self.reg_queue.popleft())
        if t >= self.config.session_minutes:
            return  # registered too late to join the consult queue
        self.record(t, "reg_done", patient.patient_id)
        face = self.backend.triage_face_value(patient)
        entry = QueueEntry(
            patient=patient,
            enqueue_time=t,
            face_urgency=face.urgency,
            current_urgency=face.urgency,
            current_acuity=face.acuity,
            memory_available=patient.has_history and patient.patient_id in self.history,
        )
        physician = self._assign(patient)
        entry.assigned_physician = physician.physician_id
        physician.queue_length += 1
        entry.priority = priority_score(
            entry, t, self.load_of(physician.physician_id), self.config.weights
        )
        self.queue.enqueue(entry)
        self.record(t, "enqueue", patient.patient_id, physician.physician_id)
        self.push(t, _EVT_DISPATCH, "dispatch")

    def _assign(self, patient: Patient) -> Physician:
        physician = assign(patient, self.roster, self.config.strategy.value, self.rr_cursor)
        if self.config.strategy is Strategy.FCFS:
            self.rr_cursor += 1
        return physician

    def on_reassess(self, t: float):
        events = self.queue.reassess_tick(
            t,
            self.backend,
            self.history,
            memory_enabled=self.config.memory_enabled,
            drift_enabled=self.config.drift_enabled,
            load_of=self.load_of,
        )
        for ev in events:
            self.escalations.append(ev)
            self.record(t, "escalation", ev.patient_id, detail=f"{ev.from_level.value}->{ev.to_level.value}:{ev.cause}")
        if events:
            self.push(t, _EVT_DISPATCH, "dispatch")

    def on_dispatch(self, t: float):
        if t >= self.config.session_minutes:
            return
        # FCFS and rule-based patients wait at the desk they were assigned to
        # (token counters / specialty rooms).  The agentic orchestrator
        # instead hands whichever room frees up the highest-priority patient
        # in the shared pool; its assignment feeds the load-score terms only.
        pooled = self.config.strategy is Strategy.AGENTIC
        for physician in self.roster:
            if physician.status is not PhysicianStatus.IDLE:
                continue
            if pooled:
                if len(self.queue) == 0:
                    return
                entry = self.queue.dequeue_next(self.config.strategy.value)
            else:
                if physician.queue_length == 0:
                    continue
                entry = self.queue.dequeue_next(
                    self.config.strategy.value, physician_id=physician.physician_id
                )
            self.by_id[entry.assigned_physician].queue_length -= 1
            self._start_consult(t, physician, entry)

    def _start_consult(self, t: float, physician: Physician, entry: QueueEntry):
        physician.status = PhysicianStatus.BUSY
        mean, std = CONSULT_PARAMS[entry.current_urgency]
        dur = _positive_normal(self.rng_consult, mean, std, CONSULT_MIN)
        visit = ServedVisit(
            patient_id=entry.patient_id,
            face_urgency=entry.face_urgency,
            effective_urgency=entry.current_urgency,
            required_specialty=entry.patient.required_specialty.value,
            physician_id=physician.physician_id,
            physician_specialty=physician.specialty.value,
            registered_at=entry.enqueue_time,
            level_entered_at=entry.level_entry_time,
            consult_start=t,
            consult_end=t + dur,
        )
        self.served.append(visit)
        self.record(t, "consult_start", entry.patient_id, physician.physician_id, entry.current_urgency.value)
        self.push(t + dur, _EVT_CONSULT_END, "consult_end", physician)

    def on_consult_end(self, t: float, physician: Physician):
        physician.status = PhysicianStatus.IDLE
        physician.served_count += 1
        self.record(t, "consult_end", physician_id=physician.physician_id)
        self.push(t, _EVT_DISPATCH, "dispatch")

    # -- main loop --------------------------------------------------------

    def run(self):
        rng_arr = _stream(self.seed, _STREAM_ARRIVALS)
        rng_pair = _stream(self.seed, _STREAM_PAIRING)
        times = sample_arrivals(self.profile, len(self.patients), rng_arr)
        order = rng_pair.permutation(len(self.patients))
        for i in range(len(self.patients)):
            self.push(float(times[i]), _EVT_ARRIVAL, "arrival", self.patients[int(order[i])])

        # The reassessment loop exists only when drift monitoring is on;
        # memory escalation rides inside it, so memory alone (drift off)
        # produces no escalations at all.
        if self.config.drift_enabled:
            interval = self.config.drift.check_interval
            t = interval
            while t <= self.config.session_minutes:
                self.push(t, _EVT_REASSESS, "reassess")
                t += interval

        while self.heap:
            t, _prec, _seq, kind, payload = heapq.heappop(self.heap)
            if kind == "arrival":
                self.on_arrival(t, payload)
            elif kind == "reg_done":
                self.on_reg_done(t, payload)
            elif kind == "reassess":
                self.on_reassess(t)
            elif kind == "dispatch":
                self.on_dispatch(t)
            elif kind == "consult_end":
                self.on_consult_end(t, payload)
            else:  # pragma: no cover - guarded by construction
                raise ValidationError(f"unknown event {kind}")

        return self._finish()

    # -- metrics ----------------------------------------------------------

    def _finish(self) -> SessionResult:
        cfg = self.config
        served = self.served
        n = len(self.patients)
        served_ids = {v.patient_id for v in served}
        waiting = self.queue.entries()
        accounted = len(served) + len(waiting) + len(self.reg_queue)
        if accounted > n or len(served_ids) != len(served):
            raise ValidationError("patient accounting is inconsistent")

        composition = {lvl.value: 0 for lvl in UrgencyLevel}
        for v in served:
            composition[v.effective_urgency.value] += 1
        for e in waiting:
            composition[e.current_urgency.value] += 1
        untriaged = [p for p in self.patients if p.patient_id not in served_ids]
        queued_ids = {e.patient_id for e in waiting}
        for p in untriaged:
            if p.patient_id not in queued_ids:
                composition[p.face_urgency.value] += 1
        if sum(composition.values()) != n:
            raise ValidationError("composition does not cover the cohort")

        reg_waits = np.array([v.wait_from_registration for v in served])

        def _mean(x) -> float | None:
            return float(np.mean(x)) if len(x) else None

        wait_by_face = {}
        for lvl in UrgencyLevel:
            xs = [v.wait_from_registration for v in served if v.face_urgency is lvl]
            wait_by_face[lvl.value] = _mean(xs)

        wait_by_effective = {}
        for lvl in UrgencyLevel:
            xs = [v.wait_from_level_entry for v in served if v.effective_urgency is lvl]
            wait_by_effective[lvl.value] = _mean(xs)

        crit_waits = [
            v.wait_from_level_entry for v in served if v.effective_urgency is UrgencyLevel.CRITICAL
        ]
        pct10 = pct15 = None
        if crit_waits:
            pct10 = 100.0 * sum(1 for w in crit_waits if w < WITHIN_CRITICAL_FAST) / len(crit_waits)
            pct15 = 100.0 * sum(1 for w in crit_waits if w < WITHIN_CRITICAL_OK) / len(crit_waits)

        drift_n = sum(1 for e in self.escalations if e.cause == CAUSE_DRIFT)
        memory_n = sum(1 for e in self.escalations if e.cause == CAUSE_MEMORY)

        matches = [v for v in served if v.specialty_matched]

        metrics = SessionMetrics(
            strategy=cfg.strategy.value,
            seed=self.seed,
            session_minutes=cfg.session_minutes,
            served_count=len(served),
            unserved_count=n - len(served),
            throughput_per_hour=len(served) / (cfg.session_minutes / 60.0),
            avg_wait=_mean(reg_waits),
            median_wait=float(np.median(reg_waits)) if len(reg_waits) else None,
            p95_wait=float(np.percentile(reg_waits, 95)) if len(reg_waits) else None,
            wait_by_face=wait_by_face,
            wait_by_effective=wait_by_effective,
            critical_wait_mean=_mean(crit_waits),
            pct_critical_within_10=pct10,
            pct_critical_within_15=pct15,
            critical_served=len(crit_waits),
            critical_effective_count=composition[UrgencyLevel.CRITICAL.value],
            drift_event_count=drift_n,
            memory_escalation_count=memory_n,
            escalation_count=drift_n + memory_n,
            final_composition=composition,
            specialty_match_rate=(len(matches) / len(served)) if served else None,
            per_physician_served={p.physician_id: p.served_count for p in self.roster},
        )
        return SessionResult(
            metrics=metrics, escalations=self.escalations, served=served, trace=self.trace
        )


def run_session(
    patients: list[Patient],
    history: dict[str, HistoryRecord],
    config: StrategyConfig,
    seed: int,
    roster: list[Physician] | None = None,
    profile: IntensityProfile | None = None,
    backend_factory=None,
    collect_trace: bool = False,
) -> SessionResult:
    """Simulate one session and return its metrics, escalation log, and
    served-visit detail.  Deterministic in (config, seed, dataset, roster)."""
    if len(patients) != N_PATIENTS:
        raise ValidationError(f"expected the {N_PATIENTS}-patient cohort, got {len(patients)}")
    roster = [
        dataclasses.replace(p, status=PhysicianStatus.IDLE, queue_length=0, served_count=0)
        for p in (roster or default_roster())
    ]
    if not roster:
        raise ValidationError("empty roster")
    profile = profile or default_profile(len(patients))
    factory = backend_factory or CalibratedTriageBackend
    backend = factory(_stream(seed, _STREAM_BACKEND), config.drift)
    return _Session(
        patients, history, config, seed, roster, profile, backend, collect_trace
    ).run()


def run_experiment(
    patients,
    history,
    config: StrategyConfig,
    n_runs: int,
    base_seed: int,
    **kwargs,
) -> list[SessionResult]:
    """`n_runs` independent sessions seeded base_seed, base_seed+1, ..."""
    if n_runs < 1:
        raise ValidationError("n_runs must be at least 1")
    return [run_session(patients, history, config, base_seed + i, **kwargs) for i in range(n_runs)]


ABLATION_VARIANTS = {
    "full": dict(memory_enabled=True, drift_enabled=True),
    "no_memory": dict(memory_enabled=False, drift_enabled=True),
    "no_drift": dict(memory_enabled=True, drift_enabled=False),
    "neither": dict(memory_enabled=False, drift_enabled=False),
}


def run_ablations(
    patients,
    history,
    n_runs: int,
    base_seed: int,
    drift: DriftParams | None = None,
    **kwargs,
) -> dict[str, list[SessionResult]]:
    """The agentic strategy with memory/drift toggled through all four
    combinations, same seeds in every arm."""
    out = {}
    for name, flags in ABLATION_VARIANTS.items():
        config = StrategyConfig(
            strategy=Strategy.AGENTIC, drift=drift or DriftParams(), **flags
        )
        out[name] = run_experiment(patients, history, config, n_runs, base_seed, **kwargs)
    return out
