import numpy as np
import pytest
from scipy.special import ndtr

from src.core.errors import (
    DataFormatError,
    EmptyDataError,
    InvalidCellError,
    MissingColumnError,
    OutcomeRangeError,
    ShapeError,
)
from src.core.likelihood import (
    ObservationTable,
    cell_prob_joint,
    cell_prob_uni,
    linear_predictor,
    loglik,
    loglik_grad,
    loglik_obs,
)
from src.core.model import EquationSpec, ParameterSet, from_unconstrained, to_unconstrained


class TestCellProbUni:
    def test_stages_sum_to_one(self):
        eq = EquationSpec("walk", 4, ("x",))
        mu = [-0.5, 0.3, 1.2]
        xb = np.linspace(-3, 3, 7)
        total = sum(cell_prob_uni(eq, mu, j, xb) for j in range(4))
        assert np.allclose(total, 1.0, atol=1e-14)

    def test_known_value(self):
        eq = EquationSpec("walk", 3, ())
        assert cell_prob_uni(eq, [-1.0, 1.0], 1, 0.0) == pytest.approx(ndtr(1.0) - ndtr(-1.0), abs=1e-15)

    def test_far_right_tail_keeps_precision(self):
        eq = EquationSpec("walk", 3, ())
        p = cell_prob_uni(eq, [9.0, 9.5], 1, 0.0)
        assert p > 0.0
        assert p == pytest.approx(ndtr(-9.0) - ndtr(-9.5), rel=1e-10)

    def test_stage_out_of_range(self):
        eq = EquationSpec("walk", 3, ())
        with pytest.raises(InvalidCellError):
            cell_prob_uni(eq, [0.0, 1.0], 3, 0.0)

    def test_threshold_count(self):
        eq = EquationSpec("walk", 3, ())
        with pytest.raises(ShapeError):
            cell_prob_uni(eq, [0.0], 1, 0.0)


def test_linear_predictor_shapes():
    assert linear_predictor([1.0, 2.0], [3.0, 4.0]) == 11.0
    assert linear_predictor([1.0, 2.0], np.ones((5, 2))).shape == (5,)
    with pytest.raises(ShapeError):
        linear_predictor([1.0, 2.0], [1.0, 2.0, 3.0])


class TestCellProbJoint:
    def test_partition_sums_to_one(self, tri_spec):
        rng = np.random.default_rng(42)
        stages = np.indices((3, 3, 4))
        for _ in range(100):
            params = from_unconstrained(rng.normal(0.0, 1.0, tri_spec.n_params), tri_spec)
            xb = rng.normal(0.0, 1.0, 3)
            total = np.sum(cell_prob_joint(params, list(stages), list(xb)))
            assert total == pytest.approx(1.0, abs=1e-10)

    def test_independence_factorizes(self, tri_spec, tri_params):
        params = tri_params.with_identity_corr()
        xb = [0.3, -0.2, 0.8]
        joint = cell_prob_joint(params, [1, 2, 0], xb)
        expected = np.prod([
            cell_prob_uni(eq, t, j, x)
            for eq, t, j, x in zip(tri_spec.equations, params.thresholds, [1, 2, 0], xb)
        ])
        assert joint == pytest.approx(expected, abs=1e-14)

    def test_wrong_arity(self, tri_params):
        with pytest.raises(ShapeError):
            cell_prob_joint(tri_params, [0, 0], [0.0, 0.0])

    def test_stage_out_of_range(self, tri_params):
        with pytest.raises(InvalidCellError):
            cell_prob_joint(tri_params, [0, 0, 4], [0.0, 0.0, 0.0])


class TestObservationTable:
    def test_missing_outcome(self, bi_spec):
        table = ObservationTable(covariates={"x1": [0.0], "x2": [0.0], "x3": [1.0]}, outcomes={"walk_stage": [0]})
        with pytest.raises(MissingColumnError) as info:
            table.validate(bi_spec)
        assert info.value.column == "cycle_stage"

    def test_stage_out_of_range_reports_row(self, bi_spec):
        table = ObservationTable(
            covariates={"x1": [0.0, 1.0], "x2": [0.0, 0.5], "x3": [1.0, 0.0]},
            outcomes={"walk_stage": [0, 3], "cycle_stage": [1, 1]},
        )
        with pytest.raises(OutcomeRangeError) as info:
            table.validate(bi_spec)
        assert (info.value.row, info.value.column) == (2, "walk_stage")

    def test_fractional_stage(self, bi_spec):
        table = ObservationTable(
            covariates={"x1": [0.0], "x2": [0.0], "x3": [1.0]},
            outcomes={"walk_stage": [0.5], "cycle_stage": [1]},
        )
        with pytest.raises(DataFormatError):
            table.validate(bi_spec)

    def test_empty(self, bi_spec):
        table = ObservationTable(covariates={"x1": [], "x2": [], "x3": []},
                                 outcomes={"walk_stage": [], "cycle_stage": []})
        with pytest.raises(EmptyDataError):
            table.validate(bi_spec)

    def test_ragged_columns(self):
        with pytest.raises(ShapeError):
            ObservationTable(covariates={"a": [1.0, 2.0]}, outcomes={"y": [0]})


class TestLoglik:
    def test_independence_matches_univariate_sum(self, tri_spec, tri_params, tri_data):
        params = tri_params.with_identity_corr()
        total = loglik(params, tri_data, tri_spec)
        expected = 0.0
        for eq, b, t, col in zip(tri_spec.equations, params.beta, params.thresholds, tri_spec.outcome_columns):
            xb = tri_data.design(eq) @ b
            expected += np.sum(np.log(cell_prob_uni(eq, t, tri_data.outcomes[col].astype(int), xb)))
        assert total == pytest.approx(expected, abs=1e-8)

    def test_worker_count_does_not_change_result(self, bi_spec, bi_params, bi_data):
        assert bi_data.n > 1024
        assert loglik(bi_params, bi_data, bi_spec, workers=1) == loglik(bi_params, bi_data, bi_spec, workers=4)

    def test_obs_in_row_order(self, tri_spec, tri_params, tri_data):
        obs = loglik_obs(tri_params, tri_data, tri_spec)
        first = loglik_obs(tri_params, tri_data.take([0, 1, 2]), tri_spec)
        assert obs.shape == (tri_data.n,)
        assert np.allclose(obs[:3], first, atol=1e-15)
        assert np.all(obs < 0)

    def test_true_params_beat_null(self, tri_spec, tri_params, tri_data):
        null = tri_params.with_identity_corr()
        null.beta = tuple(np.zeros_like(b) for b in null.beta)
        assert loglik(tri_params, tri_data, tri_spec) > loglik(null, tri_data, tri_spec)


class TestGradient:
    def test_indices_leave_other_coordinates_zero(self, bi_spec, bi_params, bi_data):
        theta = to_unconstrained(bi_params)
        grad = loglik_grad(theta, bi_data.take(range(200)), bi_spec, indices=[0, 3])
        assert np.count_nonzero(grad[[1, 2, 4, 5, 6, 7, 8]]) == 0
        assert grad[0] != 0.0

    def test_unknown_scheme(self, bi_spec, bi_params, bi_data):
        with pytest.raises(ValueError):
            loglik_grad(to_unconstrained(bi_params), bi_data, bi_spec, scheme="backward")

    def test_forward_difference_error_is_first_order(self, bi_spec, bi_params, bi_data):
        data = bi_data.take(range(500))
        theta = to_unconstrained(bi_params)
        reference = loglik_grad(theta, data, bi_spec, indices=[0])[0]
        gaps = [
            abs(loglik_grad(theta, data, bi_spec, step=h, scheme="forward", indices=[0])[0] - reference)
            for h in (1e-2, 1e-3, 1e-4)
        ]
        for wide, narrow in zip(gaps, gaps[1:]):
            assert 5.0 <= wide / narrow <= 20.0

    def test_central_matches_numeric_slope(self, bi_spec, bi_params, bi_data):
        data = bi_data.take(range(300))
        theta = to_unconstrained(bi_params)
        grad = loglik_grad(theta, data, bi_spec)
        i, h = 8, 1e-4
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        slope = (loglik(from_unconstrained(up, bi_spec), data, bi_spec)
                 - loglik(from_unconstrained(down, bi_spec), data, bi_spec)) / (2 * h)
        assert grad[i] == pytest.approx(slope, rel=1e-5, abs=1e-6)


def reflected(data, spec):
    """Stages reversed in every equation"""
    outcomes = {
        col: eq.n_stages - 1 - data.outcomes[col].astype(int)
        for eq, col in zip(spec.equations, spec.outcome_columns)
    }
    return ObservationTable(covariates=dict(data.covariates), outcomes=outcomes)


class TestInvariances:
    def test_covariate_shift_absorbed_by_thresholds(self, bi_spec, bi_params, bi_data):
        c = 3.0
        shifted = ObservationTable(covariates=dict(bi_data.covariates, x1=bi_data.covariates["x1"] + c),
                                   outcomes=dict(bi_data.outcomes))
        # x1 enters both equations first
        moved = ParameterSet(
            beta=bi_params.beta,
            thresholds=tuple(t + b[0] * c for t, b in zip(bi_params.thresholds, bi_params.beta)),
            corr=bi_params.corr,
        )
        assert loglik(moved, shifted, bi_spec) == pytest.approx(loglik(bi_params, bi_data, bi_spec), rel=1e-10)

    def test_duplicated_rows_double_loglik(self, tri_spec, tri_params, tri_data):
        doubled = tri_data.take(np.concatenate([np.arange(tri_data.n), np.arange(tri_data.n)]))
        single = loglik(tri_params, tri_data, tri_spec)
        assert loglik(tri_params, doubled, tri_spec) == pytest.approx(2.0 * single, rel=1e-12)

    def test_reflection_flips_beta_gradient(self, bi_spec, bi_params, bi_data):
        data = bi_data.take(range(400))
        mirror = ParameterSet(
            beta=tuple(-b for b in bi_params.beta),
            thresholds=tuple(-t[::-1] for t in bi_params.thresholds),
            corr=bi_params.corr,
        )
        flipped = reflected(data, bi_spec)
        assert loglik(mirror, flipped, bi_spec) == pytest.approx(loglik(bi_params, data, bi_spec), rel=1e-10)

        betas = list(range(4))
        grad = loglik_grad(to_unconstrained(bi_params), data, bi_spec, indices=betas)[betas]
        grad_mirror = loglik_grad(to_unconstrained(mirror), flipped, bi_spec, indices=betas)[betas]
        assert np.allclose(grad_mirror, -grad, rtol=1e-6, atol=1e-6)

    def test_gradient_at_truth_grows_like_root_n(self, bi_spec, bi_params, bi_data):
        theta = to_unconstrained(bi_params)
        blocks = np.array_split(np.arange(bi_data.n), 8)

        def spread(point):
            full = np.sum(loglik_grad(point, bi_data, bi_spec) ** 2)
            parts = np.mean([np.sum(loglik_grad(point, bi_data.take(b), bi_spec) ** 2) for b in blocks])
            return full / parts

        # 8x the rows: about 8x the squared norm at the truth, about 64x away from it
        assert 0.5 < spread(theta) < 32.0
        off = theta.copy()
        off[:4] += 0.5
        assert spread(off) > 32.0


def test_gradient_matches_five_point_stencil(tri_spec, tri_data):
    data = tri_data.take(range(200))
    rng = np.random.default_rng(77)
    h = 1e-3

    def f(v):
        return loglik(from_unconstrained(v, tri_spec), data, tri_spec)

    for _ in range(20):
        theta = rng.normal(0.0, 0.5, tri_spec.n_params)
        grad = loglik_grad(theta, data, tri_spec)
        for i in range(theta.size):
            step = np.zeros(theta.size)
            step[i] = h
            slope = (f(theta - 2 * step) - 8 * f(theta - step) + 8 * f(theta + step) - f(theta + 2 * step)) / (12 * h)
            assert grad[i] == pytest.approx(slope, rel=1e-5, abs=1e-5)
