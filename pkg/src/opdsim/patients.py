"""Synthetic OPD patient dataset.

Generates a deterministic cohort of 368 outpatients with demographics matching
the modelled catchment (central-India district hospital), presenting
complaints, a face-value urgency grade, and longitudinal history records for a
120-patient subset.  Each history record carries an escalation rule: the
urgency the patient should be raised to once their record is taken into
account, plus the clinical reason.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from hashlib import sha256
from pathlib import Path

import numpy as np

from .errors import ValidationError

N_PATIENTS = 368
N_HISTORY = 120

# RNG stream keys (SeedSequence spawn keys) so patient attributes and history
# selection draw from independent streams for the same seed.
_STREAM_PATIENTS = 0
_STREAM_HISTORY = 1


class UrgencyLevel(Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"

    @property
    def rank(self) -> int:
        return _URGENCY_RANK[self]

    @property
    def u_score(self) -> float:
        return _U_SCORE[self]

    def next_higher(self) -> "UrgencyLevel":
        if self is UrgencyLevel.CRITICAL:
            raise ValueError("critical has no higher level")
        return _URGENCY_ORDER[self.rank + 1]

    def __lt__(self, other: "UrgencyLevel") -> bool:
        return self.rank < other.rank

    def __le__(self, other: "UrgencyLevel") -> bool:
        return self.rank <= other.rank


_URGENCY_ORDER = [
    UrgencyLevel.LOW,
    UrgencyLevel.MEDIUM,
    UrgencyLevel.HIGH,
    UrgencyLevel.CRITICAL,
]
_URGENCY_RANK = {u: i for i, u in enumerate(_URGENCY_ORDER)}
_U_SCORE = {
    UrgencyLevel.CRITICAL: 1.0,
    UrgencyLevel.HIGH: 0.75,
    UrgencyLevel.MEDIUM: 0.50,
    UrgencyLevel.LOW: 0.25,
}

# Acuity (1-10) bands per urgency grade, and the band value applied when a
# patient is escalated into a grade mid-session.
ACUITY_BANDS = {
    UrgencyLevel.CRITICAL: (9, 10),
    UrgencyLevel.HIGH: (7, 8),
    UrgencyLevel.MEDIUM: (4, 6),
    UrgencyLevel.LOW: (1, 3),
}
ESCALATION_ACUITY = {
    UrgencyLevel.CRITICAL: 9,
    UrgencyLevel.HIGH: 7,
    UrgencyLevel.MEDIUM: 5,
}

# Face-value urgency mix of a session's 368 walk-ins.  Fixed counts, not a
# sampled prior: the comparison across queueing strategies needs an identical
# case mix in every run.
URGENCY_COUNTS = {
    UrgencyLevel.CRITICAL: 13,
    UrgencyLevel.HIGH: 36,
    UrgencyLevel.MEDIUM: 158,
    UrgencyLevel.LOW: 161,
}


class Specialty(Enum):
    GENERAL_MEDICINE = "general_medicine"
    PEDIATRICS = "pediatrics"
    OBGYN = "obgyn"
    ORTHOPEDICS = "orthopedics"
    SURGERY = "surgery"


class AgeBand(Enum):
    PEDIATRIC = "pediatric"
    YOUNG_ADULT = "young_adult"
    ADULT = "adult"
    MIDDLE_AGED = "middle_aged"
    ELDERLY = "elderly"


AGE_RANGES = {
    AgeBand.PEDIATRIC: (1, 14),
    AgeBand.YOUNG_ADULT: (15, 29),
    AgeBand.ADULT: (30, 44),
    AgeBand.MIDDLE_AGED: (45, 59),
    AgeBand.ELDERLY: (60, 85),
}

AGE_BAND_SHARES = (
    (AgeBand.PEDIATRIC, 0.15),
    (AgeBand.YOUNG_ADULT, 0.20),
    (AgeBand.ADULT, 0.25),
    (AgeBand.MIDDLE_AGED, 0.22),
    (AgeBand.ELDERLY, 0.18),
)
GENDER_SHARES = (("F", 0.62), ("M", 0.38))
LOCALITY_SHARES = (("urban", 0.45), ("semi_urban", 0.25), ("rural", 0.30))
LANGUAGE_SHARES = (("hindi", 0.85), ("bundeli", 0.10), ("english", 0.05))
PAYMENT_SHARES = (("ayushman", 0.35), ("self_pay", 0.40), ("other", 0.25))
# General medicine takes half the demand; with a 6-physician roster carrying
# two generalists this puts the uniform-assignment specialty-match baseline at
# exactly 25 %.
SPECIALTY_SHARES = (
    (Specialty.GENERAL_MEDICINE, 0.50),
    (Specialty.PEDIATRICS, 0.125),
    (Specialty.OBGYN, 0.125),
    (Specialty.ORTHOPEDICS, 0.125),
    (Specialty.SURGERY, 0.125),
)

# Unique-patient counts per chronic condition across the 120 history records.
# Multiple conditions per patient are allowed; each count is the number of
# distinct patients carrying that condition.
CONDITION_COUNTS = {
    "diabetes": 61,
    "hypertension": 46,
    "copd": 12,
    "chronic kidney disease": 12,
    "anaemia": 11,
    "high-risk pregnancy": 11,
    "tuberculosis": 10,
    "ischaemic heart disease": 5,
    "sickle cell disease": 5,
    "epilepsy": 4,
    "cancer": 3,
    "chronic liver disease": 2,
    "sle": 1,
}

MEDICATIONS_BY_CONDITION = {
    "diabetes": ("Metformin",),
    "hypertension": ("Amlodipine",),
    "copd": ("Tiotropium inhaler",),
    "chronic kidney disease": ("Calcium acetate",),
    "anaemia": ("Iron-folic acid",),
    "high-risk pregnancy": ("Iron-folic acid", "Calcium supplement"),
    "tuberculosis": ("Rifampicin", "Isoniazid"),
    "ischaemic heart disease": ("Aspirin", "Atorvastatin"),
    "sickle cell disease": ("Hydroxyurea",),
    "epilepsy": ("Levetiracetam",),
    "cancer": ("Tamoxifen",),
    "chronic liver disease": ("Propranolol",),
    "sle": ("Hydroxychloroquine",),
}

ESCALATION_REASONS = {
    "diabetes": "Poorly controlled diabetes - DKA risk on intercurrent illness",
    "hypertension": "Uncontrolled hypertension - hypertensive emergency risk",
    "copd": "Severe COPD with prior ICU admission",
    "chronic kidney disease": "CKD Stage 3 - hyperkalaemia and fluid-overload risk",
    "anaemia": "Severe chronic anaemia - decompensation risk",
    "high-risk pregnancy": "High-risk pregnancy - previous caesarean",
    "tuberculosis": "TB under treatment - haemoptysis risk",
    "ischaemic heart disease": "Known IHD - atypical complaints may be ischaemic",
    "sickle cell disease": "Sickle cell disease - crisis can present as mild pain",
    "epilepsy": "Prior status epilepticus - rapid escalation on seizure activity",
    "cancer": "On chemotherapy - neutropenic sepsis risk",
    "chronic liver disease": "Chronic liver disease - variceal bleeding risk",
    "sle": "Immunosuppressed (SLE) - masked infection risk",
}

ALLERGY_POOL = ("Penicillin", "Sulfa drugs", "NSAIDs")
ALLERGY_RATE = 0.15

# Deterioration archetypes: deceptively mild presentations whose history
# mandates escalation.  One record matching each is installed in every
# generated dataset (hosted on face-LOW patients with matching demographics).
ARCHETYPES = (
    {
        "key": "prior_tia",
        "age": 62, "gender": "M", "band": AgeBand.ELDERLY,
        "complaint": "Mild headache, dizziness",
        "target": UrgencyLevel.CRITICAL,
        "reason": "Prior TIA 6 months ago - stroke warning",
        "counted_condition": None,
        "extra_conditions": ("prior TIA",),
        "medications": ("Aspirin",),
        "allergies": (),
    },
    {
        "key": "warfarin",
        "age": 55, "gender": "F", "band": AgeBand.MIDDLE_AGED,
        "complaint": "Minor bruising, bleeding",
        "target": UrgencyLevel.CRITICAL,
        "reason": "On Warfarin - minor bleeding may signal serious haemorrhage",
        "counted_condition": None,
        "extra_conditions": ("atrial fibrillation",),
        "medications": ("Warfarin",),
        "allergies": (),
    },
    {
        "key": "ckd_stage3",
        "age": 48, "gender": "M", "band": AgeBand.MIDDLE_AGED,
        "complaint": "Nausea, weakness",
        "target": UrgencyLevel.HIGH,
        "reason": "CKD Stage 3 - hyperkalaemia risk",
        "counted_condition": "chronic kidney disease",
        "extra_conditions": (),
        "medications": ("Calcium acetate",),
        "allergies": (),
    },
    {
        "key": "high_risk_pregnancy",
        "age": 35, "gender": "F", "band": AgeBand.ADULT,
        "complaint": "Mild abdominal pain",
        "target": UrgencyLevel.CRITICAL,
        "reason": "High-risk pregnancy - previous caesarean",
        "counted_condition": "high-risk pregnancy",
        "extra_conditions": (),
        "medications": ("Iron-folic acid", "Calcium supplement"),
        "allergies": (),
    },
    {
        "key": "severe_copd",
        "age": 70, "gender": "M", "band": AgeBand.ELDERLY,
        "complaint": "Cough, mild fever",
        "target": UrgencyLevel.HIGH,
        "reason": "Severe COPD with prior ICU admission",
        "counted_condition": "copd",
        "extra_conditions": (),
        "medications": ("Tiotropium inhaler",),
        "allergies": (),
    },
    {
        "key": "status_epilepticus",
        "age": 28, "gender": "M", "band": AgeBand.YOUNG_ADULT,
        "complaint": "Drowsy, confused",
        "target": UrgencyLevel.HIGH,
        "reason": "Prior status epilepticus; documented Phenytoin allergy",
        "counted_condition": "epilepsy",
        "extra_conditions": (),
        "medications": ("Levetiracetam",),
        "allergies": ("Phenytoin",),
    },
    {
        "key": "sle_immunosuppressed",
        "age": 58, "gender": "F", "band": AgeBand.MIDDLE_AGED,
        "complaint": "Low-grade fever",
        "target": UrgencyLevel.HIGH,
        "reason": "Immunosuppressed (SLE on mycophenolate) - masked infection risk",
        "counted_condition": "sle",
        "extra_conditions": (),
        "medications": ("Mycophenolate mofetil", "Hydroxychloroquine"),
        "allergies": (),
    },
)

# History records attach only to non-critical, non-pediatric patients.  The
# face-urgency mix of the 120-record pool and the number of records whose
# escalation target is CRITICAL are fixed design constants: together with the
# escalation probability they set how many hidden-critical patients a session
# can surface.
HISTORY_FACE_MIX = {UrgencyLevel.HIGH: 6, UrgencyLevel.MEDIUM: 57, UrgencyLevel.LOW: 57}
N_EXTRA_CRITICAL_TARGETS = 3  # face-MEDIUM/LOW records (beyond archetypes) raised to critical

COMPLAINTS = {
    (UrgencyLevel.CRITICAL, Specialty.GENERAL_MEDICINE): (
        "Crushing chest pain radiating to left arm",
        "Severe breathlessness at rest",
        "Found unresponsive after collapse",
    ),
    (UrgencyLevel.CRITICAL, Specialty.PEDIATRICS): (
        "Infant limp with severe dehydration",
        "High fever with ongoing seizures",
        "Severe respiratory distress, bluish lips",
    ),
    (UrgencyLevel.CRITICAL, Specialty.OBGYN): (
        "Heavy vaginal bleeding in pregnancy",
        "Severe abdominal pain at 34 weeks",
        "Convulsions in late pregnancy",
    ),
    (UrgencyLevel.CRITICAL, Specialty.ORTHOPEDICS): (
        "Open leg fracture with heavy bleeding",
        "Crush injury to lower limb",
        "Hip deformity after fall from height",
    ),
    (UrgencyLevel.CRITICAL, Specialty.SURGERY): (
        "Rigid abdomen with severe pain",
        "Vomiting fresh blood",
        "Deep laceration with uncontrolled bleeding",
    ),
    (UrgencyLevel.HIGH, Specialty.GENERAL_MEDICINE): (
        "High fever with stiff neck",
        "Repeated vomiting and dizziness",
        "Severe asthma flare, speaking in phrases",
    ),
    (UrgencyLevel.HIGH, Specialty.PEDIATRICS): (
        "Child with persistent high fever",
        "Wheezing with fast breathing",
        "Refusing feeds, unusually listless",
    ),
    (UrgencyLevel.HIGH, Specialty.OBGYN): (
        "Reduced fetal movements since morning",
        "Severe vomiting of pregnancy with dehydration",
        "Fever after recent delivery",
    ),
    (UrgencyLevel.HIGH, Specialty.ORTHOPEDICS): (
        "Suspected forearm fracture after fall",
        "Severe back pain, unable to stand",
        "Hot swollen knee joint",
    ),
    (UrgencyLevel.HIGH, Specialty.SURGERY): (
        "Acute right-sided abdominal pain",
        "Painful hernia that will not reduce",
        "Wound infection with spreading redness",
    ),
    (UrgencyLevel.MEDIUM, Specialty.GENERAL_MEDICINE): (
        "Fever and body ache for three days",
        "Persistent cough with phlegm",
        "Recurrent headaches for two weeks",
    ),
    (UrgencyLevel.MEDIUM, Specialty.PEDIATRICS): (
        "Ear pain with mild fever",
        "Loose stools for two days",
        "Itchy skin rash spreading slowly",
    ),
    (UrgencyLevel.MEDIUM, Specialty.OBGYN): (
        "Irregular menstrual bleeding",
        "Antenatal check, mild ankle swelling",
        "Lower pelvic discomfort",
    ),
    (UrgencyLevel.MEDIUM, Specialty.ORTHOPEDICS): (
        "Chronic knee pain, worse this week",
        "Shoulder pain limiting movement",
        "Ankle sprain from yesterday",
    ),
    (UrgencyLevel.MEDIUM, Specialty.SURGERY): (
        "Painless lump in the breast",
        "Recurrent abdominal discomfort after meals",
        "Non-healing ulcer on the foot",
    ),
    (UrgencyLevel.LOW, Specialty.GENERAL_MEDICINE): (
        "Mild fever and runny nose",
        "General weakness and fatigue",
        "Acidity and bloating after meals",
    ),
    (UrgencyLevel.LOW, Specialty.PEDIATRICS): (
        "Routine vaccination visit",
        "Mild cold and cough",
        "Poor appetite for a week",
    ),
    (UrgencyLevel.LOW, Specialty.OBGYN): (
        "Routine antenatal visit",
        "Mild vaginal discharge",
        "Family planning consultation",
    ),
    (UrgencyLevel.LOW, Specialty.ORTHOPEDICS): (
        "Morning joint stiffness",
        "Old injury follow-up",
        "Mild lower back ache",
    ),
    (UrgencyLevel.LOW, Specialty.SURGERY): (
        "Small painless swelling on the wrist",
        "Suture removal follow-up",
        "Mild constipation",
    ),
}


@dataclass
class Patient:
    patient_id: str
    age: int
    age_band: AgeBand
    gender: str
    locality: str
    language: str
    payment: str
    complaint: str
    face_urgency: UrgencyLevel
    face_acuity: int
    required_specialty: Specialty
    has_history: bool = False

    def to_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "age": self.age,
            "age_band": self.age_band.value,
            "gender": self.gender,
            "locality": self.locality,
            "language": self.language,
            "payment": self.payment,
            "complaint": self.complaint,
            "face_urgency": self.face_urgency.value,
            "face_acuity": self.face_acuity,
            "required_specialty": self.required_specialty.value,
            "has_history": self.has_history,
        }

    @staticmethod
    def from_dict(d: dict) -> "Patient":
        try:
            return Patient(
                patient_id=str(d["patient_id"]),
                age=int(d["age"]),
                age_band=AgeBand(d["age_band"]),
                gender=str(d["gender"]),
                locality=str(d["locality"]),
                language=str(d["language"]),
                payment=str(d["payment"]),
                complaint=str(d["complaint"]),
                face_urgency=UrgencyLevel(d["face_urgency"]),
                face_acuity=int(d["face_acuity"]),
                required_specialty=Specialty(d["required_specialty"]),
                has_history=bool(d["has_history"]),
            )
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"bad patient entry: {exc}") from exc


@dataclass
class EscalationRule:
    target: UrgencyLevel
    reason: str

    def to_dict(self) -> dict:
        return {"target": self.target.value, "reason": self.reason}

    @staticmethod
    def from_dict(d: dict) -> "EscalationRule":
        return EscalationRule(UrgencyLevel(d["target"]), str(d["reason"]))


@dataclass
class HistoryRecord:
    patient_id: str
    conditions: list[str]
    medications: list[str]
    allergies: list[str]
    escalation_rule: EscalationRule

    def to_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "conditions": list(self.conditions),
            "medications": list(self.medications),
            "allergies": list(self.allergies),
            "escalation_rule": self.escalation_rule.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "HistoryRecord":
        try:
            return HistoryRecord(
                patient_id=str(d["patient_id"]),
                conditions=[str(c) for c in d["conditions"]],
                medications=[str(m) for m in d["medications"]],
                allergies=[str(a) for a in d["allergies"]],
                escalation_rule=EscalationRule.from_dict(d["escalation_rule"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad history entry: {exc}") from exc


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


def _apportion(total: int, shares) -> list[int]:
    """Largest-remainder rounding of `share * total` to integers summing to total."""
    raw = [s * total for _, s in shares]
    counts = [int(x) for x in raw]
    remainders = [x - c for x, c in zip(raw, counts)]
    short = total - sum(counts)
    # hand out the missing units to the largest remainders (ties: first wins)
    order = sorted(range(len(shares)), key=lambda i: (-remainders[i], i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def _shuffled_column(rng: np.random.Generator, shares, total: int = N_PATIENTS) -> list:
    values: list = []
    for (value, _), count in zip(shares, _apportion(total, shares)):
        values.extend([value] * count)
    perm = rng.permutation(total)
    return [values[i] for i in perm]


def generate_dataset(seed: int = 42) -> tuple[list[Patient], dict[str, HistoryRecord]]:
    """Build the 368-patient cohort plus its 120-record history store.

    Deterministic per seed.  Face-urgency counts and demographic marginals are
    exact for every seed (attribute columns are fixed-count lists shuffled
    independently); only the co-occurrence pattern varies.
    """
    rng = _rng(seed, _STREAM_PATIENTS)

    urgency_col: list[UrgencyLevel] = []
    for level, count in URGENCY_COUNTS.items():
        urgency_col.extend([level] * count)
    perm = rng.permutation(N_PATIENTS)
    urgency_col = [urgency_col[i] for i in perm]

    band_col = _shuffled_column(rng, AGE_BAND_SHARES)
    gender_col = _shuffled_column(rng, GENDER_SHARES)
    locality_col = _shuffled_column(rng, LOCALITY_SHARES)
    language_col = _shuffled_column(rng, LANGUAGE_SHARES)
    payment_col = _shuffled_column(rng, PAYMENT_SHARES)
    specialty_col = _assign_specialties(rng, band_col, gender_col)

    patients: list[Patient] = []
    for i in range(N_PATIENTS):
        band = band_col[i]
        lo, hi = AGE_RANGES[band]
        age = int(rng.integers(lo, hi + 1))
        urgency = urgency_col[i]
        a_lo, a_hi = ACUITY_BANDS[urgency]
        acuity = int(rng.integers(a_lo, a_hi + 1))
        options = COMPLAINTS[(urgency, specialty_col[i])]
        complaint = options[int(rng.integers(0, len(options)))]
        patients.append(
            Patient(
                patient_id=f"P{i + 1:04d}",
                age=age,
                age_band=band,
                gender=gender_col[i],
                locality=locality_col[i],
                language=language_col[i],
                payment=payment_col[i],
                complaint=complaint,
                face_urgency=urgency,
                face_acuity=acuity,
                required_specialty=specialty_col[i],
            )
        )

    history = generate_history_store(patients, seed)
    return patients, history


def _assign_specialties(rng, band_col, gender_col) -> list[Specialty]:
    """Exact-count specialty demand with two realism constraints: pediatric
    demand sits on pediatric-band patients, obgyn demand on female patients."""
    counts = dict(zip([s for s, _ in SPECIALTY_SHARES], _apportion(N_PATIENTS, SPECIALTY_SHARES)))
    col: list[Specialty | None] = [None] * N_PATIENTS

    ped_idx = [i for i in range(N_PATIENTS) if band_col[i] is AgeBand.PEDIATRIC]
    if len(ped_idx) < counts[Specialty.PEDIATRICS]:
        raise ValidationError("not enough pediatric patients for pediatric demand")
    for i in rng.choice(ped_idx, size=counts[Specialty.PEDIATRICS], replace=False):
        col[int(i)] = Specialty.PEDIATRICS

    fem_idx = [
        i for i in range(N_PATIENTS)
        if col[i] is None and gender_col[i] == "F" and band_col[i] is not AgeBand.PEDIATRIC
    ]
    if len(fem_idx) < counts[Specialty.OBGYN]:
        raise ValidationError("not enough adult female patients for obgyn demand")
    for i in rng.choice(fem_idx, size=counts[Specialty.OBGYN], replace=False):
        col[int(i)] = Specialty.OBGYN

    rest = [
        Specialty.GENERAL_MEDICINE,
    ] * counts[Specialty.GENERAL_MEDICINE] + [
        Specialty.ORTHOPEDICS,
    ] * counts[Specialty.ORTHOPEDICS] + [
        Specialty.SURGERY,
    ] * counts[Specialty.SURGERY]
    open_idx = [i for i in range(N_PATIENTS) if col[i] is None]
    perm = rng.permutation(len(rest))
    for slot, j in zip(open_idx, perm):
        col[slot] = rest[int(j)]
    return col  # type: ignore[return-value]


def _pick_archetype_host(rng, spec: dict, pool: list[Patient], taken: set[str]) -> Patient:
    """Choose a face-LOW history-eligible patient to carry an archetype record.

    Prefers an exact demographic match (gender + age band + general-medicine
    demand); relaxes stepwise rather than mutating marginal-bearing fields.
    """
    def candidates(check_band: bool, check_spec: bool) -> list[Patient]:
        out = []
        for p in pool:
            if p.patient_id in taken or p.gender != spec["gender"]:
                continue
            if check_band and p.age_band is not spec["band"]:
                continue
            if check_spec and p.required_specialty is not Specialty.GENERAL_MEDICINE:
                continue
            out.append(p)
        return out

    for check_band, check_spec in ((True, True), (True, False), (False, False)):
        cand = candidates(check_band, check_spec)
        if cand:
            host = cand[int(rng.integers(0, len(cand)))]
            if host.age_band is spec["band"]:
                host.age = spec["age"]
            host.complaint = spec["complaint"]
            return host
    raise ValidationError(f"no eligible host patient for archetype {spec['key']}")


def generate_history_store(patients: list[Patient], seed: int) -> dict[str, HistoryRecord]:
    """Attach longitudinal records to exactly 120 eligible patients.

    Eligible = non-critical face urgency and non-pediatric age band.  Resets
    and re-marks `has_history` on the given patients.
    """
    rng = _rng(seed, _STREAM_HISTORY)
    for p in patients:
        p.has_history = False

    eligible = [
        p for p in patients
        if p.face_urgency is not UrgencyLevel.CRITICAL and p.age_band is not AgeBand.PEDIATRIC
    ]
    if len(eligible) < N_HISTORY:
        raise ValidationError(
            f"dataset lacks {N_HISTORY} eligible (non-critical adult) patients for history"
        )

    by_face = {
        UrgencyLevel.HIGH: [p for p in eligible if p.face_urgency is UrgencyLevel.HIGH],
        UrgencyLevel.MEDIUM: [p for p in eligible if p.face_urgency is UrgencyLevel.MEDIUM],
        UrgencyLevel.LOW: [p for p in eligible if p.face_urgency is UrgencyLevel.LOW],
    }
    for level, need in HISTORY_FACE_MIX.items():
        if len(by_face[level]) < need:
            raise ValidationError(f"not enough eligible {level.value}-urgency patients for history")

    records: dict[str, HistoryRecord] = {}
    taken: set[str] = set()
    archetype_hosts: list[tuple[Patient, dict]] = []
    for spec in ARCHETYPES:
        host = _pick_archetype_host(rng, spec, by_face[UrgencyLevel.LOW], taken)
        taken.add(host.patient_id)
        archetype_hosts.append((host, spec))

    chosen: list[Patient] = [h for h, _ in archetype_hosts]
    for level, need in HISTORY_FACE_MIX.items():
        pool = [p for p in by_face[level] if p.patient_id not in taken]
        already = sum(1 for p in chosen if p.face_urgency is level)
        extra = need - already
        idx = rng.choice(len(pool), size=extra, replace=False)
        for i in sorted(int(j) for j in idx):
            chosen.append(pool[i])
            taken.add(pool[i].patient_id)

    for p in chosen:
        p.has_history = True

    # Escalation targets: face-HIGH records can only rise to CRITICAL; the
    # archetypes carry their scripted targets; a fixed handful of the rest are
    # hidden-critical, everyone else rises to HIGH.
    archetype_ids = {h.patient_id for h, _ in archetype_hosts}
    targets: dict[str, UrgencyLevel] = {}
    reasons: dict[str, str] = {}
    rest: list[Patient] = []
    for p in chosen:
        if p.patient_id in archetype_ids:
            continue
        if p.face_urgency is UrgencyLevel.HIGH:
            targets[p.patient_id] = UrgencyLevel.CRITICAL
        else:
            rest.append(p)
    crit_idx = set(int(i) for i in rng.choice(len(rest), size=N_EXTRA_CRITICAL_TARGETS, replace=False))
    for i, p in enumerate(rest):
        targets[p.patient_id] = UrgencyLevel.CRITICAL if i in crit_idx else UrgencyLevel.HIGH

    conditions = _deal_conditions(rng, chosen, archetype_hosts)

    for p in chosen:
        conds = conditions[p.patient_id]
        if p.patient_id in archetype_ids:
            continue
        primary = conds[0]
        reasons[p.patient_id] = ESCALATION_REASONS[primary]

    for p in chosen:
        conds = conditions[p.patient_id]
        meds: list[str] = []
        for c in conds:
            for m in MEDICATIONS_BY_CONDITION.get(c, ()):
                if m not in meds:
                    meds.append(m)
        allergies: list[str] = []
        if p.patient_id not in archetype_ids and rng.random() < ALLERGY_RATE:
            allergies.append(ALLERGY_POOL[int(rng.integers(0, len(ALLERGY_POOL)))])
        records[p.patient_id] = HistoryRecord(
            patient_id=p.patient_id,
            conditions=conds,
            medications=meds,
            allergies=allergies,
            escalation_rule=EscalationRule(
                target=targets.get(p.patient_id, UrgencyLevel.HIGH),
                reason=reasons.get(p.patient_id, ""),
            ),
        )

    for host, spec in archetype_hosts:
        rec = records[host.patient_id]
        rec.escalation_rule = EscalationRule(target=spec["target"], reason=spec["reason"])
        for m in spec["medications"]:
            if m not in rec.medications:
                rec.medications.insert(0, m)
        rec.allergies = list(spec["allergies"]) + [a for a in rec.allergies if a not in spec["allergies"]]

    _check_history_invariants(patients, records)
    return records


def _deal_conditions(rng, chosen: list[Patient], archetype_hosts) -> dict[str, list[str]]:
    """Two-phase deal hitting the unique-patient condition counts exactly.

    Phase A covers every non-archetype record with one condition; phase B
    spreads the remaining tags as comorbidities over non-carriers.  High-risk
    pregnancy only lands on female young-adult/adult patients.
    """
    remaining = dict(CONDITION_COUNTS)
    conditions: dict[str, list[str]] = {p.patient_id: [] for p in chosen}

    for host, spec in archetype_hosts:
        conds = list(spec["extra_conditions"])
        if spec["counted_condition"]:
            conds.insert(0, spec["counted_condition"])
            remaining[spec["counted_condition"]] -= 1
        conditions[host.patient_id] = conds

    archetype_ids = {h.patient_id for h, _ in archetype_hosts}
    uncovered = [p for p in chosen if p.patient_id not in archetype_ids]
    perm = rng.permutation(len(uncovered))
    uncovered = [uncovered[int(i)] for i in perm]

    tokens: list[str] = []
    for cond in sorted(remaining, key=lambda c: -remaining[c]):
        tokens.extend([cond] * remaining[cond])

    def hrp_ok(p: Patient) -> bool:
        return p.gender == "F" and p.age_band in (AgeBand.YOUNG_ADULT, AgeBand.ADULT)

    # phase A: one condition each (token order keeps high-count conditions up
    # front, so the pregnancy constraint never binds here; assert regardless)
    for p, cond in zip(uncovered, tokens):
        if cond == "high-risk pregnancy" and not hrp_ok(p):
            raise ValidationError("condition deal hit an ineligible pregnancy assignment")
        conditions[p.patient_id].append(cond)

    # phase B: leftovers become comorbidities
    for cond in tokens[len(uncovered):]:
        pool = [
            p for p in chosen
            if cond not in conditions[p.patient_id] and (cond != "high-risk pregnancy" or hrp_ok(p))
        ]
        if not pool:
            raise ValidationError(f"no eligible patient left for condition {cond!r}")
        p = pool[int(rng.integers(0, len(pool)))]
        conditions[p.patient_id].append(cond)

    return conditions


def _check_history_invariants(patients: list[Patient], records: dict[str, HistoryRecord]) -> None:
    if len(records) != N_HISTORY:
        raise ValidationError(f"history store has {len(records)} records, wanted {N_HISTORY}")
    by_id = {p.patient_id: p for p in patients}
    counts: dict[str, int] = {}
    for rec in records.values():
        p = by_id[rec.patient_id]
        if p.face_urgency is UrgencyLevel.CRITICAL:
            raise ValidationError("history attached to a critical-face patient")
        if not rec.escalation_rule.target > p.face_urgency:
            raise ValidationError("escalation target must exceed face urgency")
        for c in set(rec.conditions):
            counts[c] = counts.get(c, 0) + 1
    for cond, want in CONDITION_COUNTS.items():
        if counts.get(cond, 0) != want:
            raise ValidationError(f"condition {cond!r}: {counts.get(cond, 0)} patients, wanted {want}")


# ---------------------------------------------------------------------------
# serialization

DATASET_SCHEMA_VERSION = 1


def dataset_to_dict(patients: list[Patient], history: dict[str, HistoryRecord]) -> dict:
    return {
        "schema_version": DATASET_SCHEMA_VERSION,
        "patients": [p.to_dict() for p in patients],
        "history": {pid: rec.to_dict() for pid, rec in sorted(history.items())},
    }


def dataset_from_dict(d: dict) -> tuple[list[Patient], dict[str, HistoryRecord]]:
    try:
        raw_patients = d["patients"]
        raw_history = d["history"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"dataset file missing section: {exc}") from exc
    patients = [Patient.from_dict(x) for x in raw_patients]
    history = {pid: HistoryRecord.from_dict(x) for pid, x in raw_history.items()}
    _validate_dataset(patients, history)
    return patients, history


def _validate_dataset(patients: list[Patient], history: dict[str, HistoryRecord]) -> None:
    if len(patients) != N_PATIENTS:
        raise ValidationError(f"dataset has {len(patients)} patients, schema requires {N_PATIENTS}")
    ids = [p.patient_id for p in patients]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate patient ids")
    by_id = {p.patient_id: p for p in patients}
    for p in patients:
        lo, hi = ACUITY_BANDS[p.face_urgency]
        if not (lo <= p.face_acuity <= hi):
            raise ValidationError(f"{p.patient_id}: acuity {p.face_acuity} outside {p.face_urgency.value} band")
    for pid, rec in history.items():
        if pid != rec.patient_id or pid not in by_id:
            raise ValidationError(f"history key {pid!r} does not match a patient")
        p = by_id[pid]
        if p.face_urgency is UrgencyLevel.CRITICAL:
            raise ValidationError(f"{pid}: history on critical-face patient")
        if not rec.escalation_rule.target > p.face_urgency:
            raise ValidationError(f"{pid}: escalation target not above face urgency")
    flagged = {p.patient_id for p in patients if p.has_history}
    if flagged != set(history):
        raise ValidationError("has_history flags disagree with history store keys")


def export_dataset(path: str | Path, patients: list[Patient], history: dict[str, HistoryRecord]) -> None:
    payload = json.dumps(dataset_to_dict(patients, history), indent=2, sort_keys=True)
    tmp = Path(path).with_suffix(".tmp")
    tmp.write_text(payload + "\n")
    tmp.replace(path)


def import_dataset(path: str | Path) -> tuple[list[Patient], dict[str, HistoryRecord]]:
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise exc
    try:
        d = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"dataset file is not valid JSON: {exc}") from exc
    return dataset_from_dict(d)


def dataset_fingerprint(patients: list[Patient], history: dict[str, HistoryRecord]) -> str:
    canonical = json.dumps(dataset_to_dict(patients, history), sort_keys=True, separators=(",", ":"))
    return sha256(canonical.encode()).hexdigest()
