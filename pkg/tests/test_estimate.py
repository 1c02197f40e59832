import json
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.special import ndtri

from src.core.errors import (
    BadStartError,
    DegenerateOutcomeError,
    InvalidLikelihoodError,
    LRStatisticWarning,
    MismatchedModelsError,
    ShapeError,
    SingularInformationWarning,
)
from src.core.estimate import (
    FitOptions,
    FitResult,
    fit,
    fit_stats,
    fit_univariate,
    lr_test_independence,
    null_loglik,
    std_errors,
)
from src.core.likelihood import ObservationTable, loglik
from src.core.model import EquationSpec, ModelSpec, ParameterSet
from src.core.optimizer import bfgs_maximize
from src.core.simulate import sample_dataset

from conftest import (
    corr_matrix,
    make_bi_params,
    make_bi_spec,
    make_generator,
    make_tri_params,
    make_tri_spec,
)


def single_equation_table(stages):
    spec = ModelSpec((EquationSpec("walk", int(max(stages)) + 1, ()),), ("walk_stage",))
    return spec, ObservationTable(covariates={}, outcomes={"walk_stage": np.asarray(stages)})


@pytest.fixture(scope="module")
def bivariate_fits():
    spec = make_bi_spec()
    data = sample_dataset(spec, make_bi_params(), 2000, make_generator(), seed=11)
    joint = fit(spec, data)
    indep = fit(spec, data, FitOptions(independent=True))
    return spec, data, joint, indep


class TestFitStats:
    @pytest.mark.parametrize("ll, ll_null, k, expected", [
        (-932.19, -1096.69, 16, (0.150, 1896.38, 1971.85)),
        (-904.08, -1054.94, 20, (0.143, 1848.16, 1942.49)),
    ])
    def test_reported_values(self, ll, ll_null, k, expected):
        stats = fit_stats(ll, ll_null, k, 826)
        assert stats.rho2 == pytest.approx(expected[0], abs=0.01)
        assert stats.aic == pytest.approx(expected[1], abs=0.01)
        assert stats.bic == pytest.approx(expected[2], abs=0.01)

    def test_null_fit_has_zero_rho2(self):
        assert fit_stats(-500.0, -500.0, 3, 100).rho2 == 0.0

    @pytest.mark.parametrize("ll, ll_null, k, n", [
        (1.0, -10.0, 2, 10),
        (-1.0, 0.0, 2, 10),
        (-1.0, -10.0, 0, 10),
        (-1.0, -10.0, 2, 0),
    ])
    def test_invalid(self, ll, ll_null, k, n):
        with pytest.raises(InvalidLikelihoodError):
            fit_stats(ll, ll_null, k, n)


class TestNullLoglik:
    def test_even_split(self):
        spec, table = single_equation_table([0] * 50 + [1] * 50)
        assert null_loglik(spec, table) == pytest.approx(100 * math.log(0.5), abs=1e-9)

    def test_uneven_split(self):
        spec, table = single_equation_table([0] * 100 + [1] * 300)
        assert null_loglik(spec, table) == pytest.approx(-224.92, abs=0.01)

    def test_matches_loglik_at_share_thresholds(self, tri_spec, tri_data):
        thresholds = []
        for col, eq in zip(tri_spec.outcome_columns, tri_spec.equations):
            counts = np.bincount(tri_data.outcomes[col].astype(int), minlength=eq.n_stages)
            thresholds.append(ndtri(np.cumsum(counts)[:-1] / counts.sum()))
        params = ParameterSet.null(tri_spec, thresholds)
        assert null_loglik(tri_spec, tri_data) == pytest.approx(loglik(params, tri_data, tri_spec), abs=1e-6)

    def test_sum_over_equations(self, tri_spec, tri_data):
        parts = [null_loglik(tri_spec.subset([e]), tri_data) for e in range(3)]
        assert null_loglik(tri_spec, tri_data) == pytest.approx(sum(parts), abs=1e-9)

    def test_constant_outcome(self):
        spec, table = single_equation_table([0, 0, 0, 1])
        table.outcomes["walk_stage"][:] = 0
        with pytest.raises(DegenerateOutcomeError):
            null_loglik(spec, table)


class TestOptimizer:
    def test_quadratic(self):
        target = np.array([1.0, -2.0, 0.5])
        result = bfgs_maximize(lambda x: -float(np.sum((x - target) ** 2)),
                               lambda x: -2.0 * (x - target), np.zeros(3))
        assert result.converged
        assert np.allclose(result.x, target, atol=1e-5)
        assert all(b >= a for a, b in zip(result.trace, result.trace[1:]))

    def test_non_finite_start(self):
        with pytest.raises(BadStartError):
            bfgs_maximize(lambda x: float("nan"), lambda x: x, np.zeros(2))
        with pytest.raises(BadStartError):
            bfgs_maximize(lambda x: 0.0, lambda x: np.full(2, np.nan), np.zeros(2))

    @pytest.mark.parametrize("failure", ["raise", "nan"])
    def test_gradient_failure_backtracks(self, failure):
        def grad(x):
            if x[0] > 2.5:
                if failure == "raise":
                    raise InvalidLikelihoodError("outside the region")
                return np.array([np.nan])
            return -2.0 * (x - 3.0)

        result = bfgs_maximize(lambda x: -float((x[0] - 3.0) ** 2), grad, np.zeros(1))
        assert result.x[0] == pytest.approx(2.5)
        assert not result.converged
        assert result.message == "line search could not increase the objective"
        assert all(b >= a for a, b in zip(result.trace, result.trace[1:]))


class TestFit:
    def test_recovers_truth(self, bivariate_fits):
        spec, _, joint, _ = bivariate_fits
        truth = make_bi_params().constrained_vector()
        assert joint.converged
        assert joint.k == spec.n_params
        assert np.all(np.isfinite(joint.std_errors))
        gaps = np.abs(joint.estimates - truth) / joint.std_errors
        # each parameter lands inside 2 SE about 95% of the time
        assert np.count_nonzero(gaps <= 2.0) >= joint.k - 2
        assert np.all(gaps <= 4.0)

    def test_covariate_rescaling_rescales_coefficient(self, bi_spec, bi_data):
        c = 10.0
        data = bi_data.take(range(800))
        scaled = ObservationTable(covariates=dict(data.covariates, x2=data.covariates["x2"] * c),
                                  outcomes=dict(data.outcomes))
        opts = FitOptions(compute_std_errors=False)
        base = fit(bi_spec, data, opts)
        other = fit(bi_spec, scaled, opts)
        assert other.ll == pytest.approx(base.ll, rel=1e-7)
        i = base.names.index("walk:beta:x2")
        assert other.estimates[i] * c == pytest.approx(base.estimates[i], abs=5e-3)
        rest = [j for j in range(base.k) if j != i]
        assert np.allclose(other.estimates[rest], base.estimates[rest], atol=2e-3)

    def test_trace_is_nondecreasing(self, bivariate_fits):
        _, _, joint, _ = bivariate_fits
        assert all(b >= a for a, b in zip(joint.trace, joint.trace[1:]))
        assert joint.trace[-1] == joint.ll

    def test_statistics_consistent(self, bivariate_fits):
        _, data, joint, _ = bivariate_fits
        assert joint.rho2 == pytest.approx(1.0 - joint.ll / joint.ll_null)
        assert joint.aic == pytest.approx(2 * joint.k - 2 * joint.ll)
        assert joint.bic == pytest.approx(joint.k * math.log(data.n) - 2 * joint.ll)

    def test_p_values_match_z(self, bivariate_fits):
        _, _, joint, _ = bivariate_fits
        i = joint.names.index("rho:walk,cycle")
        assert joint.z_values[i] == pytest.approx(joint.estimates[i] / joint.std_errors[i])
        assert joint.p_values[i] < 0.001

    def test_independent_fit_fixes_correlation(self, bivariate_fits):
        spec, _, joint, indep = bivariate_fits
        i = indep.names.index("rho:walk,cycle")
        assert indep.independent
        assert indep.k == spec.n_params - 1
        assert indep.estimates[i] == 0.0
        assert math.isnan(indep.std_errors[i])
        assert indep.ll < joint.ll

    def test_serialized_result_is_strict_json(self, bivariate_fits):
        _, _, _, indep = bivariate_fits
        text = json.dumps(indep.to_dict(), allow_nan=False)
        back = FitResult.from_dict(json.loads(text))
        assert back.spec == indep.spec
        assert np.allclose(back.estimates, indep.estimates)
        assert math.isnan(back.std_errors[indep.names.index("rho:walk,cycle")])

    def test_degenerate_outcome(self, bi_spec, bi_data):
        data = bi_data.take(range(100))
        data.outcomes["walk_stage"][:] = 1
        with pytest.raises(DegenerateOutcomeError):
            fit(bi_spec, data)

    def test_bad_start(self, bi_spec, bi_data):
        with pytest.raises(BadStartError):
            fit(bi_spec, bi_data, FitOptions(start=np.full(bi_spec.n_params, np.nan)))
        with pytest.raises(ShapeError):
            fit(bi_spec, bi_data, FitOptions(start=np.zeros(3)))

    def test_iteration_cap_reports_not_converged(self, bi_spec, bi_data):
        result = fit(bi_spec, bi_data.take(range(300)),
                     FitOptions(max_iterations=1, compute_std_errors=False))
        assert not result.converged
        assert result.iterations == 1
        assert np.all(np.isnan(result.std_errors))

    @pytest.mark.parametrize("kwargs", [{"max_iterations": 0}, {"grad_tolerance": 0.0},
                                        {"rel_ll_tolerance": -1.0}])
    def test_invalid_options(self, kwargs):
        with pytest.raises(ValueError):
            FitOptions(**kwargs)

    def test_univariate_fits(self, bi_spec, bi_data):
        fits = fit_univariate(bi_spec, bi_data.take(range(500)), FitOptions(compute_std_errors=False))
        assert [f.spec.equations[0].name for f in fits] == ["walk", "cycle"]
        assert [f.k for f in fits] == [4, 4]


class TestStdErrors:
    def test_unidentified_coefficient_is_absent(self, bi_data):
        spec = ModelSpec((EquationSpec("walk", 3, ("x1", "zero")),), ("walk_stage",))
        covariates = dict(bi_data.covariates, zero=np.zeros(bi_data.n))
        data = ObservationTable(covariates=covariates, outcomes=bi_data.outcomes)
        params = ParameterSet(beta=([0.6, 0.0],), thresholds=([-0.4, 0.7],))
        with pytest.warns(SingularInformationWarning):
            result = std_errors(params, data, spec)
        assert math.isnan(result.std_errors[1])
        assert np.all(np.isfinite(result.std_errors[[0, 2, 3]]))


class TestLRTest:
    def test_detects_correlation(self, bivariate_fits):
        _, _, joint, indep = bivariate_fits
        test = lr_test_independence(joint, indep)
        assert test.df == 1
        assert test.stat == pytest.approx(2 * (joint.ll - indep.ll))
        assert test.p_value < 0.01

    def test_equal_likelihoods(self, bivariate_fits):
        _, _, joint, indep = bivariate_fits
        test = lr_test_independence(joint, replace(indep, ll=joint.ll))
        assert test.stat == 0.0
        assert test.p_value == 1.0

    def test_negative_statistic_is_clamped(self, bivariate_fits):
        _, _, joint, indep = bivariate_fits
        with pytest.warns(LRStatisticWarning):
            test = lr_test_independence(joint, replace(indep, ll=joint.ll + 1.0))
        assert test.stat == 0.0

    def test_mismatched_fits(self, bivariate_fits):
        _, _, joint, indep = bivariate_fits
        with pytest.raises(MismatchedModelsError):
            lr_test_independence(joint, joint)
        with pytest.raises(MismatchedModelsError):
            lr_test_independence(joint, replace(indep, n=indep.n - 1))
        single = joint.spec.subset([0])
        with pytest.raises(MismatchedModelsError):
            lr_test_independence(replace(joint, spec=single), replace(indep, spec=single))


@pytest.mark.slow
def test_single_equation_recovery():
    spec = ModelSpec((EquationSpec("walk", 3, ("x1",)),), ("walk_stage",))
    params = ParameterSet(beta=([1.0],), thresholds=([-0.5, 0.5],))
    data = sample_dataset(spec, params, 5000, make_generator(), seed=3)
    result = fit(spec, data)
    assert np.all(np.abs(result.estimates - params.constrained_vector()) <= 2.0 * result.std_errors)


@pytest.mark.slow
def test_trivariate_correlation_recovery():
    spec, truth = make_tri_spec(), make_tri_params()
    data = sample_dataset(spec, truth, 5000, make_generator(), seed=5)
    result = fit(spec, data)
    assert np.all(np.abs(result.params.correlations() - truth.correlations()) <= 0.05)


@pytest.mark.slow
def test_identity_truth_gives_small_correlations():
    spec, truth = make_tri_spec(), make_tri_params(0.0, 0.0, 0.0)
    data = sample_dataset(spec, truth, 5000, make_generator(), seed=6)
    result = fit(spec, data, FitOptions(compute_std_errors=False))
    assert np.all(np.abs(result.params.correlations()) <= 0.05)


@pytest.mark.slow
def test_lr_test_calibration_under_independence():
    spec, truth = make_tri_spec(), make_tri_params(0.0, 0.0, 0.0)
    opts = FitOptions(compute_std_errors=False)
    rejections = 0
    for seed in range(20):
        data = sample_dataset(spec, truth, 1000, make_generator(), seed=100 + seed)
        joint = fit(spec, data, opts)
        indep = fit(spec, data, replace(opts, independent=True))
        rejections += lr_test_independence(joint, indep).p_value < 0.05
    assert rejections <= 4


@pytest.mark.slow
def test_lr_test_power_at_survey_correlations():
    spec, truth = make_tri_spec(), make_tri_params()
    opts = FitOptions(compute_std_errors=False)
    rejections = 0
    for seed in range(20):
        data = sample_dataset(spec, truth, 2000, make_generator(), seed=200 + seed)
        joint = fit(spec, data, opts)
        indep = fit(spec, data, replace(opts, independent=True))
        rejections += lr_test_independence(joint, indep).p_value < 0.01
    assert rejections >= 19


@pytest.mark.slow
def test_confidence_interval_coverage():
    spec = ModelSpec((EquationSpec("walk", 3, ("x1",)),), ("walk_stage",))
    params = ParameterSet(beta=([0.8],), thresholds=([-0.5, 0.5],))
    truth = params.constrained_vector()
    covered = 0
    for seed in range(100):
        data = sample_dataset(spec, params, 500, make_generator(), seed=300 + seed)
        result = fit(spec, data)
        covered += abs(result.estimates[0] - truth[0]) <= 1.96 * result.std_errors[0]
    assert 89 <= covered <= 99


def test_survey_correlation_matrix_is_valid():
    ParameterSet(beta=([], [], []), thresholds=([0.0], [0.0], [0.0]),
                 corr=corr_matrix(0.439, 0.181, -0.097)).validate()


@pytest.mark.slow
def test_trivariate_recovery_over_seeds():
    spec, truth = make_tri_spec(), make_tri_params()
    target = truth.constrained_vector()
    # betas and thresholds; correlations come last
    head = slice(0, spec.n_params - spec.n_correlations)
    hits = total = 0
    for seed in range(20):
        data = sample_dataset(spec, truth, 1500, make_generator(), seed=400 + seed)
        result = fit(spec, data)
        gaps = np.abs(result.estimates[head] - target[head]) / result.std_errors[head]
        hits += np.count_nonzero(gaps <= 2.0)
        total += gaps.size
    assert hits >= 0.9 * total
