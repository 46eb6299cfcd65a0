"""Tests for the waiting pool: priority formula, dequeue rules, reassessment."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opdsim.errors import ValidationError
from opdsim.patients import (
    ESCALATION_ACUITY,
    AgeBand,
    Patient,
    Specialty,
    UrgencyLevel,
)
from opdsim.triage import CalibratedTriageBackend, DriftParams
from opdsim.waitqueue import (
    CAUSE_DRIFT,
    CAUSE_MEMORY,
    AdaptiveQueue,
    PriorityWeights,
    QueueEntry,
    priority_score,
)

TOL = 1e-12

ALWAYS_DRIFT = DriftParams(p_high=1.0, p_medium=1.0, p_low=1.0, history_multiplier=1.0)
NEVER_DRIFT = DriftParams(p_high=0.0, p_medium=0.0, p_low=0.0, p_history_escalation=0.0)


def _patient(pid="P9001", urgency=UrgencyLevel.LOW, acuity=2, has_history=False):
    return Patient(
        patient_id=pid,
        age=40,
        age_band=AgeBand.ADULT,
        gender="M",
        locality="urban",
        language="Hindi",
        payment="cash",
        complaint="persistent cough",
        face_urgency=urgency,
        face_acuity=acuity,
        required_specialty=Specialty.GENERAL_MEDICINE,
        has_history=has_history,
    )


def _entry(pid="P9001", t=0.0, urgency=UrgencyLevel.LOW, acuity=2,
           physician=None, memory=False, patient=None):
    p = patient if patient is not None else _patient(pid, urgency, acuity, memory)
    return QueueEntry(
        patient=p,
        enqueue_time=t,
        face_urgency=urgency,
        current_urgency=urgency,
        current_acuity=acuity,
        assigned_physician=physician,
        memory_available=memory,
    )


def _backend(params, seed=0):
    return CalibratedTriageBackend(np.random.default_rng(seed), params=params)


# ---------------------------------------------------------------- priority


def test_priority_critical_idle_anchor():
    # Top-urgency patient, max acuity, no wait yet, idle physician.
    e = _entry(urgency=UrgencyLevel.CRITICAL, acuity=10, t=0.0)
    assert abs(priority_score(e, now=0.0, physician_load=0.0) - 0.80) < TOL


def test_priority_low_saturated_anchor():
    # Lowest urgency, min acuity, wait past the horizon, fully loaded desk.
    e = _entry(urgency=UrgencyLevel.LOW, acuity=1, t=0.0)
    assert abs(priority_score(e, now=150.0, physician_load=1.0) - 0.1925) < TOL


def test_priority_wait_term_saturates():
    e = _entry(urgency=UrgencyLevel.MEDIUM, acuity=5, t=0.0)
    at_horizon = priority_score(e, now=120.0, physician_load=0.5)
    assert priority_score(e, now=240.0, physician_load=0.5) == at_horizon
    assert priority_score(e, now=500.0, physician_load=0.5) == at_horizon
    assert priority_score(e, now=119.0, physician_load=0.5) < at_horizon


def test_priority_monotone_in_each_component():
    base = _entry(urgency=UrgencyLevel.MEDIUM, acuity=5, t=0.0)
    p0 = priority_score(base, now=30.0, physician_load=0.5)

    hotter = _entry(urgency=UrgencyLevel.HIGH, acuity=5, t=0.0)
    assert priority_score(hotter, now=30.0, physician_load=0.5) > p0

    sicker = _entry(urgency=UrgencyLevel.MEDIUM, acuity=6, t=0.0)
    assert priority_score(sicker, now=30.0, physician_load=0.5) > p0

    assert priority_score(base, now=60.0, physician_load=0.5) > p0

    # Busier desk means a smaller idle-capacity term.
    assert priority_score(base, now=30.0, physician_load=0.9) < p0


@given(
    level=st.sampled_from(list(UrgencyLevel)),
    acuity=st.integers(min_value=1, max_value=10),
    wait=st.floats(min_value=0.0, max_value=600.0, allow_nan=False),
    load=st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
)
@settings(max_examples=200, deadline=None)
def test_priority_bounded(level, acuity, wait, load):
    e = _entry(urgency=level, acuity=acuity, t=0.0)
    p = priority_score(e, now=wait, physician_load=load)
    assert 0.0 <= p <= 1.0


def test_priority_rejects_time_before_enqueue():
    e = _entry(t=10.0)
    with pytest.raises(ValidationError):
        priority_score(e, now=5.0, physician_load=0.0)


def test_priority_weights_validated():
    with pytest.raises(ValidationError):
        PriorityWeights(urgency=0.5, acuity=0.2, waiting=0.2, load=0.15)
    with pytest.raises(ValidationError):
        PriorityWeights(wait_horizon=0.0)
    with pytest.raises(ValidationError):
        PriorityWeights.from_dict({"urgency": 0.45, "bogus": 1})
    w = PriorityWeights()
    assert PriorityWeights.from_dict(w.to_dict()) == w


# ---------------------------------------------------------------- dequeue


def test_enqueue_duplicate_rejected():
    q = AdaptiveQueue()
    q.enqueue(_entry("P0001", t=1.0))
    with pytest.raises(ValidationError):
        q.enqueue(_entry("P0001", t=2.0))


def test_dequeue_fcfs_takes_earliest():
    q = AdaptiveQueue()
    for pid, t in [("P0003", 3.0), ("P0001", 1.0), ("P0002", 2.0)]:
        q.enqueue(_entry(pid, t=t))
    first = q.dequeue_next("fcfs")
    assert first.patient_id == "P0001"
    assert len(q) == 2 and "P0001" not in q


def test_dequeue_rule_based_prefers_presenting_class():
    q = AdaptiveQueue()
    q.enqueue(_entry("P0001", t=0.0, urgency=UrgencyLevel.LOW))
    q.enqueue(_entry("P0002", t=50.0, urgency=UrgencyLevel.CRITICAL))
    assert q.dequeue_next("rule_based").patient_id == "P0002"


def test_dequeue_rule_based_fifo_within_class():
    q = AdaptiveQueue()
    q.enqueue(_entry("P0001", t=5.0, urgency=UrgencyLevel.MEDIUM))
    q.enqueue(_entry("P0002", t=3.0, urgency=UrgencyLevel.MEDIUM))
    assert q.dequeue_next("rule_based").patient_id == "P0002"


def test_dequeue_rule_based_ignores_later_escalation():
    # The static rule sorts on the class assigned at registration, so a
    # patient escalated afterwards still waits behind a hotter presenter.
    q = AdaptiveQueue()
    low = _entry("P0001", t=0.0, urgency=UrgencyLevel.LOW)
    q.enqueue(low)
    q.enqueue(_entry("P0002", t=10.0, urgency=UrgencyLevel.HIGH))
    q.apply_escalation(low, 20.0, UrgencyLevel.CRITICAL, CAUSE_DRIFT, "worsened")
    assert q.dequeue_next("rule_based").patient_id == "P0002"


def test_dequeue_agentic_highest_priority_wins():
    q = AdaptiveQueue()
    a = _entry("P0001", t=0.0)
    b = _entry("P0002", t=5.0)
    a.priority, b.priority = 0.5, 0.9
    q.enqueue(a)
    q.enqueue(b)
    assert q.dequeue_next("agentic").patient_id == "P0002"


def test_dequeue_agentic_tie_breaks_on_arrival_then_id():
    q = AdaptiveQueue()
    a = _entry("P0002", t=1.0)
    b = _entry("P0001", t=3.0)
    a.priority = b.priority = 0.7
    q.enqueue(a)
    q.enqueue(b)
    assert q.dequeue_next("agentic").patient_id == "P0002"

    q2 = AdaptiveQueue()
    c = _entry("P0002", t=1.0)
    d = _entry("P0001", t=1.0)
    c.priority = d.priority = 0.7
    q2.enqueue(c)
    q2.enqueue(d)
    assert q2.dequeue_next("agentic").patient_id == "P0001"


def test_dequeue_scoped_to_physician():
    q = AdaptiveQueue()
    q.enqueue(_entry("P0001", t=5.0, physician="GM-1"))
    q.enqueue(_entry("P0002", t=1.0, physician="GM-2"))
    assert q.dequeue_next("fcfs", physician_id="GM-1").patient_id == "P0001"
    assert q.queue_length_for("GM-2") == 1


def test_dequeue_empty_queue_is_contract_violation():
    q = AdaptiveQueue()
    with pytest.raises(ValidationError):
        q.dequeue_next("fcfs")
    q.enqueue(_entry("P0001", t=0.0, physician="GM-2"))
    with pytest.raises(ValidationError):
        q.dequeue_next("fcfs", physician_id="GM-1")


def test_dequeue_unknown_strategy_rejected():
    q = AdaptiveQueue()
    q.enqueue(_entry("P0001", t=0.0))
    with pytest.raises(ValidationError):
        q.dequeue_next("priority")


# ---------------------------------------------------------------- escalation


def test_apply_escalation_updates_entry():
    q = AdaptiveQueue()
    e = _entry("P0001", t=0.0, urgency=UrgencyLevel.LOW, acuity=2)
    q.enqueue(e)
    ev = q.apply_escalation(e, 30.0, UrgencyLevel.MEDIUM, CAUSE_DRIFT, "worsened")
    assert ev.from_level is UrgencyLevel.LOW and ev.to_level is UrgencyLevel.MEDIUM
    assert e.current_urgency is UrgencyLevel.MEDIUM
    assert e.current_acuity == ESCALATION_ACUITY[UrgencyLevel.MEDIUM]
    assert e.level_entry_time == 30.0
    assert e.face_urgency is UrgencyLevel.LOW  # presenting class untouched


def test_escalation_log_strictly_increasing():
    q = AdaptiveQueue()
    e = _entry("P0001", t=0.0, urgency=UrgencyLevel.LOW, acuity=2)
    q.enqueue(e)
    log = [
        q.apply_escalation(e, 30.0, UrgencyLevel.MEDIUM, CAUSE_DRIFT, ""),
        q.apply_escalation(e, 35.0, UrgencyLevel.HIGH, CAUSE_DRIFT, ""),
        q.apply_escalation(e, 40.0, UrgencyLevel.CRITICAL, CAUSE_MEMORY, ""),
    ]
    times = [ev.time for ev in log]
    ranks = [ev.to_level.rank for ev in log]
    assert times == sorted(times) and len(set(times)) == 3
    assert ranks == sorted(ranks) and len(set(ranks)) == 3


def test_apply_escalation_must_raise_level():
    q = AdaptiveQueue()
    e = _entry("P0001", t=0.0, urgency=UrgencyLevel.HIGH, acuity=7)
    q.enqueue(e)
    with pytest.raises(ValidationError):
        q.apply_escalation(e, 10.0, UrgencyLevel.HIGH, CAUSE_DRIFT, "")
    with pytest.raises(ValidationError):
        q.apply_escalation(e, 10.0, UrgencyLevel.MEDIUM, CAUSE_DRIFT, "")


def test_escalation_event_row_format():
    e = _entry("P0001", t=0.0, urgency=UrgencyLevel.LOW, acuity=2)
    q = AdaptiveQueue()
    q.enqueue(e)
    ev = q.apply_escalation(e, 12.345678, UrgencyLevel.MEDIUM, CAUSE_DRIFT, "worsened")
    row = ev.to_row()
    assert row["time"] == 12.3457
    assert row["from_level"] == "low" and row["to_level"] == "medium"
    assert row["cause"] == CAUSE_DRIFT


# ---------------------------------------------------------------- reassessment


def test_reassess_noop_when_drift_disabled(dataset42):
    patients, history = dataset42
    pid = next(iter(history))
    patient = next(p for p in patients if p.patient_id == pid)
    q = AdaptiveQueue()
    e = _entry(t=0.0, urgency=patient.face_urgency, acuity=patient.face_acuity,
               memory=True, patient=patient)
    e.priority = 0.123
    q.enqueue(e)
    backend = _backend(DriftParams(p_low=1.0, p_medium=1.0, p_high=1.0,
                                   p_history_escalation=1.0))
    events = q.reassess_tick(5.0, backend, history, memory_enabled=True,
                             drift_enabled=False, load_of=lambda pid: 0.0)
    assert events == []
    assert e.current_urgency is patient.face_urgency
    assert e.priority == 0.123  # not even refreshed


def test_reassess_memory_fires_once_then_ceiling(dataset42):
    patients, history = dataset42
    pid, record = next(
        (pid, r) for pid, r in history.items()
        if r.escalation_rule.target is UrgencyLevel.CRITICAL
    )
    patient = next(p for p in patients if p.patient_id == pid)
    q = AdaptiveQueue()
    e = _entry(t=0.0, urgency=patient.face_urgency, acuity=patient.face_acuity,
               memory=True, patient=patient)
    q.enqueue(e)
    backend = _backend(DriftParams(p_low=1.0, p_medium=1.0, p_high=1.0,
                                   p_history_escalation=1.0))
    first = q.reassess_tick(5.0, backend, history, memory_enabled=True,
                            drift_enabled=True, load_of=lambda pid: 0.0)
    assert len(first) == 1
    assert first[0].cause == CAUSE_MEMORY
    assert first[0].to_level is UrgencyLevel.CRITICAL
    assert e.current_urgency is UrgencyLevel.CRITICAL
    assert e.level_entry_time == 5.0
    # Next sweep: the history check already fired and critical cannot drift.
    second = q.reassess_tick(10.0, backend, history, memory_enabled=True,
                             drift_enabled=True, load_of=lambda pid: 0.0)
    assert second == []


def test_reassess_memory_preempts_drift_same_sweep(dataset42):
    # A certain-to-fire drift check must be skipped on the sweep where the
    # history rule escalates the same patient.
    patients, history = dataset42
    pid, record = next(
        (pid, r) for pid, r in history.items()
        if r.escalation_rule.target is UrgencyLevel.HIGH
    )
    patient = next(p for p in patients if p.patient_id == pid)
    q = AdaptiveQueue()
    e = _entry(t=0.0, urgency=patient.face_urgency, acuity=patient.face_acuity,
               memory=True, patient=patient)
    q.enqueue(e)
    backend = _backend(DriftParams(p_low=1.0, p_medium=1.0, p_high=1.0,
                                   p_history_escalation=1.0))
    events = q.reassess_tick(5.0, backend, history, memory_enabled=True,
                             drift_enabled=True, load_of=lambda pid: 0.0)
    assert [ev.cause for ev in events] == [CAUSE_MEMORY]
    assert e.current_urgency is UrgencyLevel.HIGH


def test_reassess_drift_climbs_one_level_per_sweep():
    q = AdaptiveQueue()
    e = _entry("P0001", t=0.0, urgency=UrgencyLevel.LOW, acuity=2)
    q.enqueue(e)
    backend = _backend(ALWAYS_DRIFT)
    seen = []
    for tick in (5.0, 10.0, 15.0, 20.0):
        seen += q.reassess_tick(tick, backend, {}, memory_enabled=False,
                                drift_enabled=True, load_of=lambda pid: 0.0)
    # Three sweeps climb low -> medium -> high -> critical; the fourth finds
    # the entry at the ceiling and leaves it alone.
    assert [ev.to_level for ev in seen] == [
        UrgencyLevel.MEDIUM, UrgencyLevel.HIGH, UrgencyLevel.CRITICAL,
    ]
    assert all(ev.cause == CAUSE_DRIFT for ev in seen)
    assert e.current_acuity == ESCALATION_ACUITY[UrgencyLevel.CRITICAL]


def test_reassess_refreshes_all_priorities():
    q = AdaptiveQueue()
    a = _entry("P0001", t=0.0, urgency=UrgencyLevel.LOW, acuity=2, physician="GM-1")
    b = _entry("P0002", t=10.0, urgency=UrgencyLevel.HIGH, acuity=8, physician="GM-2")
    q.enqueue(a)
    q.enqueue(b)
    loads = {"GM-1": 0.25, "GM-2": 1.0}
    backend = _backend(NEVER_DRIFT)
    events = q.reassess_tick(30.0, backend, {}, memory_enabled=False,
                             drift_enabled=True, load_of=loads.__getitem__)
    assert events == []
    for entry in (a, b):
        expected = priority_score(entry, 30.0, loads[entry.assigned_physician])
        assert abs(entry.priority - expected) < TOL


def test_reassess_memory_skipped_once_target_reached(dataset42):
    # If the entry already sits at (or above) the record's target level the
    # history rule has nothing to add, so drift is consulted instead.
    patients, history = dataset42
    pid, record = next(
        (pid, r) for pid, r in history.items()
        if r.escalation_rule.target is UrgencyLevel.HIGH
    )
    patient = next(p for p in patients if p.patient_id == pid)
    q = AdaptiveQueue()
    e = _entry(t=0.0, urgency=UrgencyLevel.HIGH, acuity=7, memory=True,
               patient=patient)
    q.enqueue(e)
    backend = _backend(DriftParams(p_low=1.0, p_medium=1.0, p_high=1.0,
                                   p_history_escalation=1.0))
    events = q.reassess_tick(5.0, backend, history, memory_enabled=True,
                             drift_enabled=True, load_of=lambda pid: 0.0)
    assert [ev.cause for ev in events] == [CAUSE_DRIFT]
    assert e.current_urgency is UrgencyLevel.CRITICAL
