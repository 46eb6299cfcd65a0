"""Arrival-time sampling.

Walk-ins follow a non-homogeneous Poisson process with a morning-peaked
piecewise-linear intensity.  Sampling uses thinning (rejection against the
profile's peak rate); the session generator resamples whole trajectories until
the realised count matches the cohort size exactly, so every run sees all 368
patients while inter-arrival statistics stay Poisson.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .patients import N_PATIENTS

SESSION_MINUTES = 360.0

# Intensity shape anchors (minute, multiplier): ramp up into a mid-morning
# peak, taper toward closing.  The profile is scaled so its integral equals
# the cohort size exactly.
DEFAULT_SHAPE = ((0.0, 0.8), (90.0, 1.6), (360.0, 0.4))

MAX_RESAMPLE_ATTEMPTS = 1000


@dataclass(frozen=True)
class IntensityProfile:
    """Piecewise-linear arrival intensity λ(t), in patients per minute."""

    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.breakpoints) < 2:
            raise ValidationError("intensity profile needs at least two breakpoints")
        times = [t for t, _ in self.breakpoints]
        rates = [r for _, r in self.breakpoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("intensity breakpoints must be strictly increasing in time")
        if any(r < 0 for r in rates):
            raise ValidationError("intensity must be non-negative")
        if max(rates) <= 0:
            raise ValidationError("intensity must be positive somewhere")

    @property
    def start_time(self) -> float:
        return self.breakpoints[0][0]

    @property
    def end_time(self) -> float:
        return self.breakpoints[-1][0]

    @property
    def lambda_max(self) -> float:
        return max(r for _, r in self.breakpoints)

    def rate(self, t) -> float | np.ndarray:
        """λ(t); vectorised over array input.  Zero outside the profile span."""
        times = np.array([x for x, _ in self.breakpoints])
        rates = np.array([r for _, r in self.breakpoints])
        return np.interp(t, times, rates, left=0.0, right=0.0)

    def integral(self) -> float:
        """Expected arrival count over the whole span (trapezoid, exact for
        piecewise-linear rates)."""
        times = np.array([x for x, _ in self.breakpoints])
        rates = np.array([r for _, r in self.breakpoints])
        return float(np.trapezoid(rates, times))

    @property
    def mean_rate(self) -> float:
        return self.integral() / (self.end_time - self.start_time)

    def scaled_to_total(self, total: float) -> "IntensityProfile":
        factor = total / self.integral()
        return IntensityProfile(tuple((t, r * factor) for t, r in self.breakpoints))

    def to_dict(self) -> dict:
        return {"breakpoints": [[t, r] for t, r in self.breakpoints]}

    @staticmethod
    def from_dict(d: dict) -> "IntensityProfile":
        try:
            pts = tuple((float(t), float(r)) for t, r in d["breakpoints"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad intensity profile: {exc}") from exc
        return IntensityProfile(pts)


def default_profile(total: int = N_PATIENTS) -> IntensityProfile:
    shape = IntensityProfile(DEFAULT_SHAPE)
    return shape.scaled_to_total(total)


@dataclass
class ThinningStats:
    proposals: int
    accepted: int

    @property
    def acceptance_ratio(self) -> float:
        return self.accepted / self.proposals if self.proposals else 0.0


def _as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def sample_poisson_process(
    profile: IntensityProfile,
    seed_or_rng,
    collect_stats: bool = False,
):
    """One thinned trajectory over the profile span (sorted times, minutes).

    Homogeneous candidates at the peak rate are generated by exponential gaps
    and accepted with probability λ(t)/λ_max.
    """
    rng = _as_rng(seed_or_rng)
    lam_max = profile.lambda_max
    t0, t1 = profile.start_time, profile.end_time

    chunks = []
    t = t0
    block = max(64, int(lam_max * (t1 - t0) * 1.25) + 32)
    while t < t1:
        gaps = rng.exponential(1.0 / lam_max, size=block)
        ts = t + np.cumsum(gaps)
        chunks.append(ts)
        t = float(ts[-1])
        block = 64
    candidates = np.concatenate(chunks)
    candidates = candidates[candidates < t1]

    u = rng.random(candidates.size)
    keep = u < profile.rate(candidates) / lam_max
    times = candidates[keep]

    if collect_stats:
        return times, ThinningStats(proposals=int(candidates.size), accepted=int(times.size))
    return times


def sample_arrivals(
    profile: IntensityProfile,
    n_patients: int,
    seed_or_rng,
    max_attempts: int = MAX_RESAMPLE_ATTEMPTS,
) -> np.ndarray:
    """Exactly `n_patients` arrival times: resample whole trajectories until
    the realised count matches.

    The count requirement is part of the experimental design (identical case
    mix in every run), so a mismatched dataset size is a caller error.
    """
    if n_patients != N_PATIENTS:
        raise ValueError(f"arrival sampling is defined for the {N_PATIENTS}-patient cohort")
    if abs(profile.integral() - n_patients) > 0.5 * n_patients:
        raise ValidationError("profile integral is far from the requested count; resampling would stall")
    rng = _as_rng(seed_or_rng)
    for _ in range(max_attempts):
        times = sample_poisson_process(profile, rng)
        if times.size == n_patients:
            return times
    raise ValidationError(
        f"could not realise exactly {n_patients} arrivals in {max_attempts} attempts"
    )
