import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loraseq.errors import DegenerateSampleError, EvaluationError
from loraseq.stats import (
    PairedSample,
    compare_models,
    critical_value,
    paired_t,
    reg_inc_beta,
    sample_mean_var,
    t_cdf,
    two_tailed_p,
)

# F1 percentages per task for the two models under comparison
MODEL_A_F1 = [89.0, 89.0, 73.0]
MODEL_B_F1 = [90.0, 97.0, 97.0]
TASKS = ["ner", "pos", "dep"]


def mpmath_t_cdf(t, df):
    """High-precision oracle for the Student-t CDF."""
    with mpmath.workdps(50):
        t = mpmath.mpf(t)
        df = mpmath.mpf(df)
        x = df / (df + t * t)
        tail = mpmath.betainc(df / 2, mpmath.mpf(1) / 2, 0, x, regularized=True) / 2
        return float(1 - tail if t > 0 else tail) if t != 0 else 0.5


scores = st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=10)


class TestPairedT:
    def test_sum_formula_on_task_triples(self):
        # d = (-1, -8, -24); t = -33 / sqrt((3*641 - 1089) / 2)
        t, df = paired_t(PairedSample(TASKS, MODEL_A_F1, MODEL_B_F1))
        assert t == pytest.approx(-33.0 / math.sqrt(417.0), abs=1e-12)
        assert t == pytest.approx(-1.616, abs=1e-3)
        assert df == 2

    def test_identical_columns_degenerate(self):
        with pytest.raises(DegenerateSampleError):
            paired_t(PairedSample(["a", "b"], [1.0, 2.0], [1.0, 2.0]))

    def test_constant_nonzero_difference_degenerate(self):
        with pytest.raises(DegenerateSampleError):
            paired_t(PairedSample(["a", "b"], [3.0, 4.0], [1.0, 2.0]))

    def test_symmetric_differences_give_zero(self):
        t, _ = paired_t(PairedSample(["a", "b"], [1.0, -1.0], [0.0, 0.0]))
        assert t == 0.0

    def test_short_sample_rejected(self):
        with pytest.raises(EvaluationError):
            PairedSample(["a"], [1.0], [2.0])

    @given(scores, scores)
    @settings(max_examples=200, deadline=None)
    def test_properties(self, a, b):
        n = min(len(a), len(b))
        a, b = a[:n], b[:n]
        if n < 2:
            return
        labels = [str(i) for i in range(n)]
        try:
            t, df = paired_t(PairedSample(labels, a, b))
            # antisymmetry
            t_swapped, _ = paired_t(PairedSample(labels, b, a))
            assert t_swapped == pytest.approx(-t, rel=1e-9, abs=1e-9)
            # shift invariance
            t_shift, _ = paired_t(
                PairedSample(labels, [x + 7.5 for x in a], [x + 7.5 for x in b])
            )
            assert t_shift == pytest.approx(t, rel=1e-6, abs=1e-6)
            # scale invariance
            t_scale, _ = paired_t(PairedSample(labels, [x * 10 for x in a], [x * 10 for x in b]))
            assert t_scale == pytest.approx(t, rel=1e-9, abs=1e-9)
        except DegenerateSampleError:
            # (near-)constant differences, possibly only after shifting: no t
            return


class TestSampleMeanVar:
    def test_model_a_triple(self):
        mean, var = sample_mean_var(MODEL_A_F1)
        assert mean == pytest.approx(83.67, abs=0.05)
        assert var == pytest.approx(85.31, abs=0.05)

    def test_model_b_triple(self):
        mean, var = sample_mean_var(MODEL_B_F1)
        assert mean == pytest.approx(94.67, abs=0.05)
        assert var == pytest.approx(16.34, abs=0.05)

    def test_constant_sequence(self):
        _, var = sample_mean_var([4.0, 4.0, 4.0])
        assert var == 0.0

    def test_too_short(self):
        with pytest.raises(EvaluationError):
            sample_mean_var([1.0])


class TestTCdf:
    def test_zero_is_half(self):
        for df in (1, 2, 10, 30):
            assert t_cdf(0.0, df) == 0.5

    def test_cauchy_closed_form(self):
        # df=1 is the Cauchy distribution: F(t) = 1/2 + arctan(t)/pi
        for t in (-3.0, -1.0, 0.5, 1.0, 2.5, 10.0):
            expected = 0.5 + math.atan(t) / math.pi
            assert t_cdf(t, 1) == pytest.approx(expected, abs=1e-12)

    def test_df4_critical_quantile(self):
        assert t_cdf(2.776, 4) == pytest.approx(0.975, abs=5e-5)

    def test_against_high_precision_oracle(self):
        for df in (1, 2, 3, 4, 5, 10, 20, 30):
            for t in (-8.0, -2.776, -1.0, -0.1, 0.1, 0.5, 1.0, 2.0, 4.5, 12.0):
                assert abs(t_cdf(t, df) - mpmath_t_cdf(t, df)) < 1e-10

    def test_reflection_identity(self):
        for df in (1, 4, 17):
            for t in (0.3, 1.7, 6.0):
                assert t_cdf(-t, df) + t_cdf(t, df) == pytest.approx(1.0, abs=1e-12)

    def test_bad_df(self):
        with pytest.raises(ValueError):
            t_cdf(1.0, 0)


class TestRegIncBeta:
    def test_boundaries(self):
        assert reg_inc_beta(2.0, 3.0, 0.0) == 0.0
        assert reg_inc_beta(2.0, 3.0, 1.0) == 1.0

    def test_uniform_case(self):
        # I_x(1, 1) = x
        for x in (0.1, 0.5, 0.9):
            assert reg_inc_beta(1.0, 1.0, x) == pytest.approx(x, abs=1e-14)

    def test_against_oracle(self):
        with mpmath.workdps(50):
            for a, b in ((0.5, 0.5), (2.0, 3.0), (10.0, 0.5), (15.0, 15.0)):
                for x in (0.01, 0.25, 0.5, 0.75, 0.99):
                    want = float(mpmath.betainc(a, b, 0, x, regularized=True))
                    assert abs(reg_inc_beta(a, b, x) - want) < 1e-12


class TestCriticalValue:
    def test_table_value_df4(self):
        assert critical_value(0.05, 4) == pytest.approx(2.776, abs=1e-3)

    def test_cauchy_df1(self):
        # tan(pi * 0.475)
        assert critical_value(0.05, 1) == pytest.approx(12.706, abs=1e-2)

    def test_monotone_in_df(self):
        values = [critical_value(0.05, df) for df in range(1, 31)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_quantile_round_trip(self):
        for alpha in (0.10, 0.05, 0.01):
            for df in range(1, 31):
                crit = critical_value(alpha, df)
                assert abs(two_tailed_p(crit, df) - alpha) < 1e-8

    def test_bad_alpha(self):
        with pytest.raises(ValueError):
            critical_value(1.5, 4)


class TestCompareModels:
    def test_task_triples_fail_to_reject(self):
        report = compare_models(PairedSample(TASKS, MODEL_A_F1, MODEL_B_F1), alpha=0.05)
        assert report.t == pytest.approx(-1.616, abs=1e-3)
        assert report.df == 2
        assert report.p_two_tailed == pytest.approx(0.2476, abs=1e-3)
        assert report.critical == pytest.approx(4.303, abs=1e-3)
        assert not report.reject
        assert report.verdict == "fail to reject the null hypothesis"

    def test_expected_values_flagged_on_mismatch(self):
        report = compare_models(
            PairedSample(TASKS, MODEL_A_F1, MODEL_B_F1),
            alpha=0.05,
            expected={"t": 0.12, "df": 4.0},
        )
        assert len(report.mismatches) == 2
        assert any("t=0.12" in m for m in report.mismatches)

    def test_expected_values_accepted_when_close(self):
        report = compare_models(
            PairedSample(TASKS, MODEL_A_F1, MODEL_B_F1),
            alpha=0.05,
            expected={"df": 2.0},
        )
        assert report.mismatches == []

    def test_identical_models_degenerate(self):
        with pytest.raises(DegenerateSampleError):
            compare_models(PairedSample(["a", "b"], [1.0, 2.0], [1.0, 2.0]))

    def test_scaling_preserves_verdict(self):
        base = compare_models(PairedSample(TASKS, MODEL_A_F1, MODEL_B_F1))
        scaled = compare_models(
            PairedSample(TASKS, [x * 10 for x in MODEL_A_F1], [x * 10 for x in MODEL_B_F1])
        )
        assert scaled.t == pytest.approx(base.t, rel=1e-12)
        assert scaled.p_two_tailed == pytest.approx(base.p_two_tailed, rel=1e-9)
        assert scaled.reject == base.reject

    def test_reject_characterizations_agree(self):
        report = compare_models(PairedSample(TASKS, [10.0, 20.0, 30.0], [1.0, 2.0, 3.0]))
        assert report.reject == (report.p_two_tailed < report.alpha)
        assert report.reject == (abs(report.t) > report.critical)
