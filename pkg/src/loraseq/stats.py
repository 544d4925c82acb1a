"""Paired t-test machinery: the sum-of-differences t statistic, Student-t
tail probabilities via the regularized incomplete beta function, critical
values by bisection, and a full comparison report.

The t statistic is computed two ways and cross-checked:

    t = sum(d) / sqrt((n * sum(d^2) - sum(d)^2) / (n - 1))
    t = mean(d) / (s_d / sqrt(n))

which are algebraically identical for paired differences d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DegenerateSampleError, EvaluationError

_BETACF_MAX_ITER = 300
_BETACF_EPS = 1e-15
_TINY = 1e-300


@dataclass
class PairedSample:
    labels: list[str]
    a: list[float]
    b: list[float]

    def __post_init__(self):
        if not (len(self.labels) == len(self.a) == len(self.b)):
            raise EvaluationError(
                f"misaligned sample: {len(self.labels)} labels, "
                f"{len(self.a)} vs {len(self.b)} scores"
            )
        if len(self.a) < 2:
            raise EvaluationError("need >= 2 paired observations")


@dataclass
class TTestReport:
    n: int
    df: int
    mean_a: float
    mean_b: float
    var_a: float
    var_b: float
    sum_d: float
    sum_d2: float
    t: float
    p_two_tailed: float
    alpha: float
    critical: float
    reject: bool
    verdict: str
    mismatches: list[str] = field(default_factory=list)


def sample_mean_var(xs: list[float]) -> tuple[float, float]:
    """Arithmetic mean and sample variance (n - 1 denominator)."""
    n = len(xs)
    if n < 2:
        raise EvaluationError(f"need >= 2 values for a sample variance, got {n}")
    mean = sum(xs) / n
    var = sum((x - mean) ** 2 for x in xs) / (n - 1)
    return mean, var


def paired_t(sample: PairedSample) -> tuple[float, int]:
    d = [ai - bi for ai, bi in zip(sample.a, sample.b)]
    n = len(d)
    sum_d = sum(d)
    sum_d2 = sum(x * x for x in d)
    denom_sq = (n * sum_d2 - sum_d * sum_d) / (n - 1)
    if denom_sq <= 0:
        raise DegenerateSampleError("all paired differences are identical; t is undefined")
    t = sum_d / math.sqrt(denom_sq)
    # cross-check against the textbook mean/std form
    mean_d = sum_d / n
    s_d = math.sqrt((sum_d2 - sum_d * sum_d / n) / (n - 1))
    t_alt = mean_d / (s_d / math.sqrt(n))
    assert abs(t - t_alt) <= 1e-12 * max(1.0, abs(t)), (t, t_alt)
    return t, n - 1


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction failed to converge at x={x}")


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
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
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_cdf(t: float, df: int) -> float:
    """Student-t cumulative probability."""
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    tail = 0.5 * reg_inc_beta(df / 2.0, 0.5, x)
    return 1.0 - tail if t > 0 else tail


def two_tailed_p(t: float, df: int) -> float:
    return 2.0 * (1.0 - t_cdf(abs(t), df))


def critical_value(alpha: float, df: int) -> float:
    """t* with two_tailed_p(t*, df) == alpha, by bisection."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    lo, hi = 0.0, 1.0
    while two_tailed_p(hi, df) > alpha:
        hi *= 2.0
        if hi > 1e12:
            raise ArithmeticError("critical value search diverged")
    while hi - lo > 1e-9 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if two_tailed_p(mid, df) > alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def compare_models(
    sample: PairedSample,
    alpha: float = 0.05,
    expected: dict[str, float] | None = None,
) -> TTestReport:
    """Full paired-test report; any user-supplied expected values (keys among
    't', 'df', 'p') are compared against the recomputed statistics and
    mismatches are flagged rather than trusted."""
    t, df = paired_t(sample)
    d = [ai - bi for ai, bi in zip(sample.a, sample.b)]
    mean_a, var_a = sample_mean_var(sample.a)
    mean_b, var_b = sample_mean_var(sample.b)
    p = two_tailed_p(t, df)
    crit = critical_value(alpha, df)
    reject = p < alpha
    assert reject == (abs(t) > crit), (t, p, crit)
    mismatches = []
    for key, recomputed, tol in (
        ("t", t, 5e-3),
        ("df", float(df), 0.0),
        ("p", p, 5e-3),
    ):
        if expected and key in expected and abs(expected[key] - recomputed) > tol:
            mismatches.append(
                f"supplied {key}={expected[key]:g} does not match recomputed {recomputed:.6g}"
            )
    verdict = "reject the null hypothesis" if reject else "fail to reject the null hypothesis"
    return TTestReport(
        n=len(d),
        df=df,
        mean_a=mean_a,
        mean_b=mean_b,
        var_a=var_a,
        var_b=var_b,
        sum_d=sum(d),
        sum_d2=sum(x * x for x in d),
        t=t,
        p_two_tailed=p,
        alpha=alpha,
        critical=crit,
        reject=reject,
        verdict=verdict,
        mismatches=mismatches,
    )
