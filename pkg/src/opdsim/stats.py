"""Statistics for cross-run comparison.

Implements exactly what the experiment reports need — Welch's unequal-variance
t-test with a two-sided p-value, Cohen's d, and Wilson score intervals — on
top of a regularized incomplete beta function (continued fraction), so the
simulation package has no runtime dependency beyond numpy.  scipy is used in
the test suite only, as an independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

Z_95 = 1.959963984540054  # two-sided 95% normal quantile

_BETACF_MAX_ITER = 300
_BETACF_EPS = 3e-14
_FPMIN = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise ValidationError("incomplete beta did not converge")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValidationError("beta parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValidationError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # Use the fraction directly where it converges fast, else the symmetry.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_cdf(t: float, df: float) -> float:
    """Student-t CDF via the incomplete beta."""
    if df <= 0:
        raise ValidationError("degrees of freedom must be positive")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    tail = 0.5 * betainc_regularized(df / 2.0, 0.5, x)
    return 1.0 - tail if t > 0 else tail


def t_sf_two_sided(t: float, df: float) -> float:
    """Two-sided p-value for a t statistic."""
    return 2.0 * (1.0 - t_cdf(abs(t), df))


@dataclass
class WelchResult:
    mean_a: float
    mean_b: float
    t_stat: float
    df: float
    p_value: float
    cohen_d: float
    n_a: int
    n_b: int
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "mean_a": self.mean_a,
            "mean_b": self.mean_b,
            "t_stat": self.t_stat,
            "df": self.df,
            "p_value": self.p_value,
            "cohen_d": self.cohen_d,
            "n_a": self.n_a,
            "n_b": self.n_b,
            "degenerate": self.degenerate,
        }


def cohen_d(a, b) -> float:
    """Pooled-standard-deviation effect size."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise ValidationError("need at least two observations per group")
    va, vb = float(np.var(a, ddof=1)), float(np.var(b, ddof=1))
    pooled = math.sqrt(((na - 1) * va + (nb - 1) * vb) / (na + nb - 2))
    diff = float(np.mean(a) - np.mean(b))
    if pooled == 0.0:
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    return diff / pooled


def welch_t(a, b) -> WelchResult:
    """Welch's t-test (unequal variances), two-sided."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise ValidationError("need at least two observations per group")
    ma, mb = float(np.mean(a)), float(np.mean(b))
    va, vb = float(np.var(a, ddof=1)), float(np.var(b, ddof=1))
    sa, sb = va / na, vb / nb
    if sa + sb == 0.0:
        # Identical constants in both groups: no evidence of difference.
        same = ma == mb
        return WelchResult(
            mean_a=ma,
            mean_b=mb,
            t_stat=0.0 if same else math.copysign(math.inf, ma - mb),
            df=float(na + nb - 2),
            p_value=1.0 if same else 0.0,
            cohen_d=cohen_d(a, b),
            n_a=na,
            n_b=nb,
            degenerate=True,
        )
    t = (ma - mb) / math.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (na - 1) + sb**2 / (nb - 1))
    return WelchResult(
        mean_a=ma,
        mean_b=mb,
        t_stat=t,
        df=df,
        p_value=t_sf_two_sided(t, df),
        cohen_d=cohen_d(a, b),
        n_a=na,
        n_b=nb,
    )


@dataclass
class WilsonInterval:
    p_hat: float
    low: float
    high: float

    def to_dict(self) -> dict:
        return {"p_hat": self.p_hat, "low": self.low, "high": self.high}


def wilson_ci(successes: int, n: int, z: float = Z_95) -> WilsonInterval:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValidationError("n must be positive")
    if not 0 <= successes <= n:
        raise ValidationError("successes must lie in [0, n]")
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
    return WilsonInterval(p_hat=p, low=max(0.0, centre - half), high=min(1.0, centre + half))


def p95(values) -> float:
    """95th percentile, linear interpolation."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValidationError("p95 of empty sample")
    return float(np.percentile(arr, 95))


# ---------------------------------------------------------------------------
# Cross-run summaries

METRIC_FIELDS = (
    "avg_wait",
    "median_wait",
    "p95_wait",
    "throughput_per_hour",
    "served_count",
    "unserved_count",
    "critical_wait_mean",
    "pct_critical_within_10",
    "pct_critical_within_15",
    "critical_served",
    "critical_effective_count",
    "drift_event_count",
    "memory_escalation_count",
    "escalation_count",
    "specialty_match_rate",
)


@dataclass
class MetricSummary:
    mean: float
    std: float
    n: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "n": self.n}


def summarize_runs(metrics_list) -> dict[str, MetricSummary]:
    """Per-metric mean and sample std across runs (None values dropped)."""
    if not metrics_list:
        raise ValidationError("no runs to summarize")
    out: dict[str, MetricSummary] = {}
    for name in METRIC_FIELDS:
        vals = [getattr(m, name) for m in metrics_list]
        vals = [v for v in vals if v is not None]
        if not vals:
            continue
        arr = np.asarray(vals, dtype=float)
        std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
        out[name] = MetricSummary(mean=float(np.mean(arr)), std=std, n=int(arr.size))
    # Mean final composition and wait-by-urgency per level across runs.
    for level in ("critical", "high", "medium", "low"):
        vals = [m.final_composition[level] for m in metrics_list]
        arr = np.asarray(vals, dtype=float)
        std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
        out[f"composition_{level}"] = MetricSummary(
            mean=float(np.mean(arr)), std=std, n=int(arr.size)
        )
        waits = [m.wait_by_effective.get(level) for m in metrics_list]
        waits = [w for w in waits if w is not None]
        if waits:
            arr = np.asarray(waits, dtype=float)
            std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
            out[f"wait_eff_{level}"] = MetricSummary(
                mean=float(np.mean(arr)), std=std, n=int(arr.size)
            )
    return out


def summary_table(summaries: dict[str, dict[str, MetricSummary]], fields=None) -> str:
    """Markdown table: one row per metric, one column per arm."""
    arms = list(summaries)
    fields = fields or sorted({k for s in summaries.values() for k in s})
    lines = ["| metric | " + " | ".join(arms) + " |", "|---" * (len(arms) + 1) + "|"]
    for f in fields:
        cells = []
        for arm in arms:
            s = summaries[arm].get(f)
            cells.append(f"{s.mean:.2f} ± {s.std:.2f}" if s else "—")
        lines.append(f"| {f} | " + " | ".join(cells) + " |")
    return "\n".join(lines)
