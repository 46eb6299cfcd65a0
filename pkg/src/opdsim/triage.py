"""Severity assessment backends.

A backend grades patients at registration (face-value triage), escalates
waiting patients whose stored medical history flags hidden risk, and models
condition drift — the chance that an untreated patient deteriorates while
queueing.  The simulation uses a calibrated stochastic backend; the adapter
class at the bottom is the seam where a live model-served triage service
would plug in.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .patients import (
    ESCALATION_ACUITY,
    HistoryRecord,
    Patient,
    Specialty,
    UrgencyLevel,
)

# Per-check deterioration probabilities by current level.  Medium sits highest:
# the band is wide and mid-acuity presentations are the least stable.
P_DRIFT_HIGH = 0.015
P_DRIFT_MEDIUM = 0.030
P_DRIFT_LOW = 0.020

# History-aware factors (pinned by the calibration sweep; see README).
HISTORY_DRIFT_MULTIPLIER = 1.2
P_HISTORY_ESCALATION = 0.145

REASSESS_INTERVAL = 5.0

RED_FLAG_TERMS = (
    "chest pain",
    "bleeding",
    "unconscious",
    "unresponsive",
    "seizure",
    "stroke",
    "breathless",
    "breathing",
    "severe",
    "high fever",
    "trauma",
    "accident",
)


@dataclass(frozen=True)
class DriftParams:
    """Knobs for deterioration and memory-driven escalation."""

    check_interval: float = REASSESS_INTERVAL
    p_high: float = P_DRIFT_HIGH
    p_medium: float = P_DRIFT_MEDIUM
    p_low: float = P_DRIFT_LOW
    history_multiplier: float = HISTORY_DRIFT_MULTIPLIER
    p_history_escalation: float = P_HISTORY_ESCALATION

    def __post_init__(self):
        for name in ("p_high", "p_medium", "p_low", "p_history_escalation"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be a probability, got {v}")
        if self.history_multiplier < 0:
            raise ValidationError("history_multiplier must be non-negative")
        if self.check_interval <= 0:
            raise ValidationError("check_interval must be positive")

    def drift_probability(self, level: UrgencyLevel, has_history: bool) -> float:
        base = {
            UrgencyLevel.HIGH: self.p_high,
            UrgencyLevel.MEDIUM: self.p_medium,
            UrgencyLevel.LOW: self.p_low,
        }[level]
        if has_history:
            base *= self.history_multiplier
        return min(base, 1.0)

    def to_dict(self) -> dict:
        return {
            "check_interval": self.check_interval,
            "p_high": self.p_high,
            "p_medium": self.p_medium,
            "p_low": self.p_low,
            "history_multiplier": self.history_multiplier,
            "p_history_escalation": self.p_history_escalation,
        }

    @staticmethod
    def from_dict(d: dict) -> "DriftParams":
        try:
            return DriftParams(**d)
        except TypeError as exc:
            raise ValidationError(f"bad drift params: {exc}") from exc


@dataclass
class TriageResult:
    urgency: UrgencyLevel
    acuity: int
    specialty: Specialty
    confidence: float
    reasoning: str
    red_flags: list[str] = field(default_factory=list)


def extract_red_flags(complaint: str) -> list[str]:
    low = complaint.lower()
    return [term for term in RED_FLAG_TERMS if term in low]


class TriageBackend(ABC):
    """One instance per session run.

    Backends own per-run state (at-most-once history escalation) and consume
    the RNG stream they are given, so reuse across runs would break
    reproducibility — construct a fresh one per run.
    """

    @abstractmethod
    def triage_face_value(self, patient: Patient) -> TriageResult:
        """Grade a presenting patient on visible signs alone."""

    @abstractmethod
    def assess_history_escalation(
        self, patient: Patient, record: HistoryRecord
    ) -> TriageResult | None:
        """Decide whether stored history flags this patient for escalation.

        Returns the escalated grade, or None.  Fires at most once per patient
        per session.
        """

    @abstractmethod
    def assess_drift(
        self, current: UrgencyLevel, has_history: bool
    ) -> UrgencyLevel | None:
        """One deterioration check; returns the new level or None.

        `has_history` means a record is available *and* visible to the
        assessor — callers pass False when memory is disabled, which switches
        the history risk multiplier off.
        """

    def generate_medication_alerts(self, record: HistoryRecord) -> list[str]:
        return [f"Allergy on record: {a}" for a in record.allergies]


class CalibratedTriageBackend(TriageBackend):
    """Stochastic assessor used by the simulation."""

    def __init__(self, rng: np.random.Generator, params: DriftParams | None = None):
        self.rng = rng
        self.params = params or DriftParams()
        self._memory_fired: set[str] = set()

    def triage_face_value(self, patient: Patient) -> TriageResult:
        confidence = 0.80 + 0.18 * float(self.rng.random())
        return TriageResult(
            urgency=patient.face_urgency,
            acuity=patient.face_acuity,
            specialty=patient.required_specialty,
            confidence=confidence,
            reasoning=f"presenting complaint graded {patient.face_urgency.value}",
            red_flags=extract_red_flags(patient.complaint),
        )

    def assess_history_escalation(self, patient, record):
        if record is None or not patient.has_history:
            raise ValidationError(
                f"history assessment called for {patient.patient_id} without a record"
            )
        if patient.patient_id in self._memory_fired:
            return None
        if float(self.rng.random()) >= self.params.p_history_escalation:
            return None
        self._memory_fired.add(patient.patient_id)
        target = record.escalation_rule.target
        return TriageResult(
            urgency=target,
            acuity=ESCALATION_ACUITY[target],
            specialty=patient.required_specialty,
            confidence=0.95,
            reasoning=record.escalation_rule.reason,
            red_flags=[c for c in record.conditions],
        )

    def assess_drift(self, current, has_history):
        if current is UrgencyLevel.CRITICAL:
            raise ValidationError("critical patients do not drift further")
        p = self.params.drift_probability(current, has_history)
        if float(self.rng.random()) < p:
            return current.next_higher()
        return None


class FixedLowBackend(TriageBackend):
    """Degenerate assessor: everyone is low urgency, nothing ever escalates.

    Exists to prove the engine is backend-agnostic (and as a floor for
    sanity checks).
    """

    def __init__(self, *args, **kwargs):
        pass

    def triage_face_value(self, patient):
        return TriageResult(
            urgency=UrgencyLevel.LOW,
            acuity=2,
            specialty=patient.required_specialty,
            confidence=1.0,
            reasoning="fixed grading",
            red_flags=[],
        )

    def assess_history_escalation(self, patient, record):
        if record is None or not patient.has_history:
            raise ValidationError(
                f"history assessment called for {patient.patient_id} without a record"
            )
        return None

    def assess_drift(self, current, has_history):
        if current is UrgencyLevel.CRITICAL:
            raise ValidationError("critical patients do not drift further")
        return None


class LlmTriageAdapter(TriageBackend):
    """Seam for a live model-served triage endpoint.

    Not used in simulation runs: request latency and a shared request budget
    (40 requests/min across the clinic) make the live path a deployment
    concern, not a modelling one.  Methods raise until wired to a client.
    """

    RATE_LIMIT_PER_MIN = 40

    def __init__(self, endpoint: str, budget_per_min: int = RATE_LIMIT_PER_MIN):
        self.endpoint = endpoint
        self.budget_per_min = budget_per_min

    def triage_face_value(self, patient):
        raise NotImplementedError("live triage endpoint not wired in this build")

    def assess_history_escalation(self, patient, record):
        raise NotImplementedError("live triage endpoint not wired in this build")

    def assess_drift(self, current, has_history):
        raise NotImplementedError("live triage endpoint not wired in this build")
