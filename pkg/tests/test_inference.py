import math

import numpy as np
import pytest
from scipy import stats as sps

from reofair import (
    BoundaryVarianceError,
    ConfigError,
    DegenerateGroupError,
    FoldDegenerateError,
    GroupTally,
    InsufficientDataError,
    RecordArrays,
    UnstableBootstrapError,
    ab_bootstrap_test,
    ab_delta_test,
    ab_partition_test,
    bootstrap_bias,
    bootstrap_report,
    delta_method_report,
    ground_truth_penalty,
    sample_records,
    sample_tally,
    tally_from_arrays,
)
from reofair import TestMethod as Method
from reofair.inference import welch_df
from reofair.synthetic import SimulationConfig, boosted_sample, study_setting


def simple_tally(pos_rand, n_rand, pos_rec, n_rec):
    return GroupTally(
        k=len(pos_rand), n_rand=n_rand, n_rec=n_rec,
        pos_rand=tuple(pos_rand), pos_rec=tuple(pos_rec),
    )


# P=(0.05, 0.1), Q=(0.1, 0.3), utilities (2, 3): a boundary-free fixture.
PLAIN = simple_tally((50, 100), 1000, (30, 90), 300)


class TestDeltaMethodReport:
    def test_symmetric_tally_hits_zero_boundary(self):
        t = simple_tally((100, 100), 1000, (300, 300), 1000)
        report = delta_method_report(t)
        assert report.delta_u == (0.0, 0.0)
        assert report.delta_reo == 0.0
        sigma = report.propagation.sigma
        assert sigma[0, 0] == pytest.approx(sigma[1, 1], rel=1e-12)
        assert report.se_delta_u[0] > 0
        assert report.se_delta_reo is None and report.ci_delta_reo is None
        assert any("boundary" in note for note in report.notes)

    def test_jacobian_for_equal_utilities(self):
        t = simple_tally((100, 200), 1000, (100, 200), 1000)
        report = delta_method_report(t)
        expected = np.array([[0.5, -0.5], [-0.5, 0.5]])
        assert np.allclose(report.propagation.jacobian, expected, atol=1e-15)

    def test_rate_variance_matrix_against_hand_formula(self):
        report = delta_method_report(PLAIN)
        p = np.array([0.05, 0.1])
        q = np.array([0.1, 0.3])
        u = q / p
        expected = u**2 * ((1 - q) / q / 300 + (1 - p) / p / 1000)
        assert np.allclose(np.diag(report.propagation.gamma), expected, rtol=1e-12)
        # Off-diagonal rate covariance is zero: independent sample means.
        assert np.allclose(report.propagation.gamma, np.diag(expected))

    def test_penalty_gradient_formula(self):
        report = delta_method_report(PLAIN)
        du = np.asarray(report.delta_u)
        expected = du / (2 * report.delta_reo)
        assert np.allclose(report.propagation.gradient, expected, rtol=1e-12)

    def test_sigma_is_symmetric_positive_semidefinite(self):
        for t in (PLAIN, simple_tally((10, 30, 60), 500, (20, 20, 40), 400)):
            sigma = delta_method_report(t).propagation.sigma
            assert np.abs(sigma - sigma.T).max() <= 1e-10
            eigenvalues = np.linalg.eigvalsh(sigma)
            assert eigenvalues.min() >= -1e-10 * np.trace(sigma)

    def test_divisor_conventions_give_identical_z_scores(self):
        # Switching the std divisor rescales the penalty and its standard
        # error by the same sqrt(K/(K-1)) factor.
        population = delta_method_report(PLAIN, std_divisor="K")
        sample = delta_method_report(PLAIN, std_divisor="K-1")
        ratio = sample.delta_reo / population.delta_reo
        assert ratio == pytest.approx(math.sqrt(2), rel=1e-12)
        assert sample.se_delta_reo / population.se_delta_reo == pytest.approx(ratio, rel=1e-12)

    def test_jacobian_rows_sum_to_zero(self):
        jac = delta_method_report(PLAIN).propagation.jacobian
        assert np.abs(jac.sum(axis=1)).max() <= 1e-10 * PLAIN.k

    def test_intervals_bracket_estimates(self):
        report = delta_method_report(PLAIN)
        low, high = report.ci_delta_reo
        assert low <= report.delta_reo <= high
        for value, (lo, hi) in zip(report.delta_u, report.ci_delta_u):
            assert lo <= value <= hi

    def test_se_scales_as_inverse_sqrt_n(self):
        # Doubling every count leaves the rates identical and halves the
        # penalty variance.
        doubled = simple_tally((100, 200), 2000, (60, 180), 600)
        xi_1 = delta_method_report(PLAIN).propagation.xi
        xi_2 = delta_method_report(doubled).propagation.xi
        assert xi_2 == pytest.approx(xi_1 / 2, rel=1e-12)

    def test_boundary_rates_rejected(self):
        with pytest.raises(BoundaryVarianceError) as excinfo:
            delta_method_report(simple_tally((50, 50), 1000, (0, 90), 300))
        assert excinfo.value.group == 1
        with pytest.raises(BoundaryVarianceError):
            delta_method_report(simple_tally((50, 50), 1000, (300, 0), 300))

    def test_zero_randomized_rate_rejected(self):
        with pytest.raises(DegenerateGroupError):
            delta_method_report(simple_tally((0, 50), 1000, (30, 90), 300))

    def test_bad_confidence_rejected(self):
        with pytest.raises(ConfigError):
            delta_method_report(PLAIN, confidence=1.0)


class TestAbDeltaTest:
    def test_identical_arms(self):
        arm = simple_tally((0, 0), 0, (30, 90), 300)
        shared = simple_tally((50, 100), 1000, (0, 0), 0)
        report = ab_delta_test(arm, arm, shared)
        assert report.d_u == (0.0, 0.0)
        assert report.d_reo == 0.0
        assert report.significant_d_reo is False
        assert all(not flag for flag in report.significant_d_u)
        assert report.shared_n_rand == 1000

    def test_antisymmetry_is_exact(self):
        control = simple_tally((0, 0), 0, (30, 90), 300)
        treatment = simple_tally((0, 0), 0, (80, 100), 400)
        shared = simple_tally((50, 100), 1000, (0, 0), 0)
        forward = ab_delta_test(control, treatment, shared)
        backward = ab_delta_test(treatment, control, shared)
        assert forward.d_reo == -backward.d_reo
        assert forward.d_u == tuple(-v for v in backward.d_u)
        assert forward.se_d_reo == backward.se_d_reo

    def test_independent_arms_need_their_own_randomized_counts(self):
        arm = simple_tally((0, 0), 0, (30, 90), 300)
        with pytest.raises(InsufficientDataError) as excinfo:
            ab_delta_test(arm, arm, None)
        assert "control arm" in str(excinfo.value)

    def test_interval_covers_known_difference(self):
        # Arms with independent probes and true penalties 1/3 and 23/60, so
        # the true difference is exactly 0.05.
        control_cfg = SimulationConfig(k=2, p=(0.01, 0.05), q=(0.1, 0.25))
        treatment_q1 = 83.0 / 37.0 * 5.0 * 0.01
        treatment_cfg = SimulationConfig(k=2, p=(0.01, 0.05), q=(treatment_q1, 0.25))
        true_d = ground_truth_penalty(treatment_cfg) - ground_truth_penalty(control_cfg)
        assert true_d == pytest.approx(0.05, abs=1e-12)
        n = 1_000_000
        reps = 500
        children = np.random.SeedSequence(20240 ).spawn(reps)
        covered = 0
        for child in children:
            rng = np.random.default_rng(child)
            control = sample_tally(control_cfg, n, n, rng)
            treatment = sample_tally(treatment_cfg, n, n, rng)
            report = ab_delta_test(control, treatment, None)
            low, high = report.ci_d_reo
            covered += low <= true_d <= high
        assert 0.93 <= covered / reps <= 0.97

    def test_boost_direction_is_significant_at_daily_scale(self):
        # Group 1 is advantaged (utility ratio 1.5); doubling its sampling
        # weight should significantly raise the penalty in most replicates.
        cfg = SimulationConfig(k=2, p=(0.01, 0.05), q=(0.075, 0.25))
        significant_up = 0
        reps = 20
        children = np.random.SeedSequence(7).spawn(reps)
        for child in children:
            rng = np.random.default_rng(child)
            rec, rand = sample_records(cfg, 150_000, 150_000, rng)
            boosted = boosted_sample(rec, {1: 2.0, 2: 1.0}, rng=rng)
            control = tally_from_arrays(2, default=rec)
            treatment = tally_from_arrays(2, default=boosted)
            shared = tally_from_arrays(2, random=rand)
            report = ab_delta_test(control, treatment, shared)
            significant_up += report.d_reo > 0 and report.significant_d_reo
        assert significant_up > reps / 2


class TestWelchDf:
    @pytest.mark.parametrize("m", [2, 5, 10, 50])
    def test_equal_variances_simplify(self, m):
        # With equal fold variances and counts the Welch-Satterthwaite
        # expression reduces algebraically to 2(M-1).
        assert welch_df(0.37, m, 0.37, m) == 2 * (m - 1)

    def test_hand_computed_case(self):
        # se2 = 1/10 + 2/5 = 0.5; denom = 1/900 + 4/100 = 0.0411..; floor -> 6.
        assert welch_df(1.0, 10, 2.0, 5) == 6

    def test_zero_variance_degenerates_to_pooled(self):
        assert welch_df(0.0, 10, 0.0, 10) == 18


class TestAbPartitionTest:
    def test_identical_streams_interval_contains_zero(self):
        cfg = study_setting(1)
        rec, rand = sample_records(cfg, 20_000, 20_000, np.random.default_rng(5))
        report = ab_partition_test(rec, rec, rand, 2, 10, 10, seed=3)
        low, high = report.ci_d_reo
        assert low <= 0.0 <= high
        assert report.method is Method.PARTITION
        assert report.welch_df >= 1

    def test_deterministic_given_seed(self):
        cfg = study_setting(1)
        rec, rand = sample_records(cfg, 5_000, 5_000, np.random.default_rng(5))
        a = ab_partition_test(rec, rec, rand, 2, 5, 5, seed=11)
        b = ab_partition_test(rec, rec, rand, 2, 5, 5, seed=11)
        assert a.d_reo == b.d_reo and a.ci_d_reo == b.ci_d_reo

    def test_fold_degenerate_error_names_fold(self):
        # A single randomized positive for group 2 cannot appear in both folds.
        rand = RecordArrays(
            y=np.array([True] * 10 + [True] + [False] * 9),
            s=np.array([1] * 10 + [2] + [2] * 9),
        )
        rec = RecordArrays(y=np.array([True, False] * 10), s=np.array([1, 2] * 10))
        with pytest.raises(FoldDegenerateError) as excinfo:
            ab_partition_test(rec, rec, rand, 2, 2, 2, seed=0)
        assert excinfo.value.fold is not None

    def test_too_few_folds_rejected(self):
        rec = RecordArrays(y=np.array([True]), s=np.array([1]))
        with pytest.raises(ConfigError):
            ab_partition_test(rec, rec, rec, 1, 1, 2)

    def test_type_one_error_rate(self):
        # Both arms drawn from the same distribution: the 95% interval should
        # exclude zero in at most ~5% of replicates (7% allowed for noise).
        cfg = study_setting(1)
        p_full, q_full = cfg.probability_vectors()
        folds, fold_size = 4, 100_000
        n = folds * fold_size
        reps = 300
        children = np.random.SeedSequence(99).spawn(reps)
        false_positives = 0
        for rep, child in enumerate(children):
            rng = np.random.default_rng(child)

            def draw(probs):
                counts = rng.multinomial(n, probs)
                categories = np.repeat(np.arange(4), counts)
                return RecordArrays(y=categories < 2, s=(categories % 2) + 1)

            control, treatment, randomized = draw(q_full), draw(q_full), draw(p_full)
            report = ab_partition_test(
                control, treatment, randomized, 2, folds, folds, seed=rep
            )
            false_positives += bool(report.significant_d_reo)
        assert false_positives / reps <= 0.07


def constant_arrays(n, group=1):
    return RecordArrays(y=np.ones(n, dtype=bool), s=np.full(n, group))


class TestAbBootstrapTest:
    def test_all_rows_identical_collapses_to_point(self):
        rows = constant_arrays(50)
        report = ab_bootstrap_test(rows, rows, rows, k=1, b=60)
        assert report.d_reo == 0.0
        assert report.se_d_reo == 0.0
        assert report.ci_d_reo == (0.0, 0.0)
        assert report.significant_d_reo is False

    def test_unstable_bootstrap_rejected(self):
        rec = RecordArrays(y=np.array([True] * 10), s=np.array([1] * 5 + [2] * 5))
        rand = RecordArrays(y=np.array([True] * 10), s=np.array([1] + [2] * 9))
        with pytest.raises(UnstableBootstrapError):
            ab_bootstrap_test(rec, rec, rand, k=2, b=100, seed=4)

    def test_deterministic_and_thread_invariant(self):
        cfg = study_setting(1)
        rec, rand = sample_records(cfg, 20_000, 20_000, np.random.default_rng(2))
        serial = ab_bootstrap_test(rec, rec, rand, k=2, b=40, seed=9, threads=1)
        again = ab_bootstrap_test(rec, rec, rand, k=2, b=40, seed=9, threads=1)
        pooled = ab_bootstrap_test(rec, rec, rand, k=2, b=40, seed=9, threads=4)
        for other in (again, pooled):
            assert serial.d_reo == other.d_reo
            assert serial.se_d_reo == other.se_d_reo
            assert serial.ci_d_reo == other.ci_d_reo
            assert serial.d_u == other.d_u

    def test_standard_interval_is_centered_on_the_point(self):
        cfg = study_setting(1)
        rec, rand = sample_records(cfg, 30_000, 30_000, np.random.default_rng(3))
        boosted = boosted_sample(rec, {1: 1.5, 2: 1.0}, rng=np.random.default_rng(4))
        report = ab_bootstrap_test(rec, boosted, rand, k=2, b=80, seed=1)
        low, high = report.ci_d_reo
        assert (low + high) / 2 == pytest.approx(report.d_reo, rel=1e-12, abs=1e-15)

    def test_bca_variant_reports_percentile_interval(self):
        cfg = study_setting(1)
        rec, rand = sample_records(cfg, 30_000, 30_000, np.random.default_rng(6))
        boosted = boosted_sample(rec, {1: 1.5, 2: 1.0}, rng=np.random.default_rng(7))
        standard = ab_bootstrap_test(rec, boosted, rand, k=2, b=100, seed=2)
        bca = ab_bootstrap_test(rec, boosted, rand, k=2, b=100, seed=2, variant="bca")
        assert bca.method is Method.BCA_BOOTSTRAP
        width_ratio = (bca.ci_d_reo[1] - bca.ci_d_reo[0]) / (
            standard.ci_d_reo[1] - standard.ci_d_reo[0]
        )
        assert 0.7 <= width_ratio <= 1.3
        assert bca.ci_d_reo[0] <= bca.d_reo <= bca.ci_d_reo[1]


class TestSingleArmBootstrap:
    def test_interval_widths_agree_with_delta_method(self):
        cfg = study_setting(1)
        rec, rand = sample_records(cfg, 150_000, 150_000, np.random.default_rng(12))
        delta = delta_method_report(tally_from_arrays(2, rec, rand))
        boot = bootstrap_report(rec, rand, k=2, b=100, seed=12)
        delta_width = delta.ci_delta_reo[1] - delta.ci_delta_reo[0]
        boot_width = boot.ci_delta_reo[1] - boot.ci_delta_reo[0]
        assert abs(boot_width - delta_width) / delta_width <= 0.20
        assert boot.delta_reo == delta.delta_reo

    def test_bca_close_to_standard_at_scale(self):
        cfg = study_setting(1)
        rec, rand = sample_records(cfg, 150_000, 150_000, np.random.default_rng(13))
        standard = bootstrap_report(rec, rand, k=2, b=100, seed=13)
        bca = bootstrap_report(rec, rand, k=2, b=100, seed=13, variant="bca")
        assert bca.method == "bca"
        standard_width = standard.ci_delta_reo[1] - standard.ci_delta_reo[0]
        bca_width = bca.ci_delta_reo[1] - bca.ci_delta_reo[0]
        assert abs(bca_width - standard_width) / standard_width <= 0.35
        assert bca.ci_delta_reo[0] <= bca.delta_reo <= bca.ci_delta_reo[1]

    def test_small_bootstrap_size_rejected(self):
        rows = constant_arrays(10)
        with pytest.raises(ConfigError):
            bootstrap_report(rows, rows, k=1, b=1)


class TestBootstrapBias:
    def test_degenerate_data_has_zero_bias(self):
        rows = constant_arrays(30)
        bias = bootstrap_bias(rows, rows, k=1, b=50)
        assert bias.delta_reo == 0.0
        assert bias.delta_u == (0.0,)

    def test_daily_scale_bias_is_small(self):
        cfg = study_setting(1)
        rec, rand = sample_records(cfg, 150_000, 150_000, np.random.default_rng(21))
        bias = bootstrap_bias(rec, rand, k=2, b=100, seed=21)
        assert abs(bias.delta_reo) < 0.03

    def test_bias_matches_exact_resampling_expectation(self):
        # 20-row miniature where the conditional expectation over all
        # resamples can be enumerated exactly; the replicate mean must land
        # within two standard errors of it.
        rec = RecordArrays(
            y=np.array([True] * 14 + [False] * 6),
            s=np.array([1] * 8 + [2] * 6 + [1] * 3 + [2] * 3),
        )
        rand = RecordArrays(
            y=np.array([True] * 14 + [False] * 6),
            s=np.array([1] * 5 + [2] * 9 + [1] * 3 + [2] * 3),
        )
        n = 20
        b = 10_000
        seed = 11

        def compositions():
            for a in range(n + 1):
                for bb in range(n + 1 - a):
                    yield a, bb, n - a - bb

        rec_combos = np.array(list(compositions()))
        rand_combos = rec_combos
        rec_weights = sps.multinomial(n, [8 / 20, 6 / 20, 6 / 20]).pmf(rec_combos)
        rand_weights = sps.multinomial(n, [5 / 20, 9 / 20, 6 / 20]).pmf(rand_combos)
        total = 0.0
        weighted_value = 0.0
        for (c1, c2, _), w_rec in zip(rec_combos, rec_weights):
            for (d1, d2, _), w_rand in zip(rand_combos, rand_weights):
                if d1 == 0 or d2 == 0 or (c1 == 0 and c2 == 0):
                    continue
                u1 = (c1 / n) / (d1 / n)
                u2 = (c2 / n) / (d2 / n)
                mean = (u1 + u2) / 2
                du1, du2 = u1 / mean - 1, u2 / mean - 1
                penalty = math.sqrt((du1 * du1 + du2 * du2) / 2)
                weight = w_rec * w_rand
                total += weight
                weighted_value += weight * penalty
        oracle_mean = weighted_value / total
        report = bootstrap_report(rec, rand, k=2, b=b, seed=seed)
        bias = bootstrap_bias(rec, rand, k=2, b=b, seed=seed)
        replicate_mean = report.delta_reo * (1 + bias.delta_reo)
        se_mean = report.se_delta_reo / math.sqrt(b - bias.discarded)
        assert abs(replicate_mean - oracle_mean) <= 2 * se_mean
