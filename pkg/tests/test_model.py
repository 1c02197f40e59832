import itertools

import numpy as np
import pytest

from src.core.errors import InvalidParameterError, ModelError, ShapeError
from src.core.model import (
    EquationSpec,
    ModelSpec,
    ParameterSet,
    corr_from_raw,
    correlation_slice,
    from_unconstrained,
    raw_from_corr,
    to_unconstrained,
)


class TestEquationSpec:
    def test_counts(self):
        eq = EquationSpec("walk", 4, ("age", "income"))
        assert eq.n_thresholds == 3
        assert eq.n_params == 5

    @pytest.mark.parametrize("stages", [1, 0, 2.5])
    def test_needs_two_stages(self, stages):
        with pytest.raises(ModelError):
            EquationSpec("walk", stages, ("age",))

    def test_intercept_rejected(self):
        with pytest.raises(ModelError, match="intercept"):
            EquationSpec("walk", 3, ("age", "Intercept"))

    def test_duplicate_covariate(self):
        with pytest.raises(ModelError, match="duplicate"):
            EquationSpec("walk", 3, ("age", "age"))


class TestModelSpec:
    def test_param_names_order(self, bi_spec):
        assert bi_spec.param_names() == [
            "walk:beta:x1", "walk:beta:x2", "cycle:beta:x1", "cycle:beta:x3",
            "walk:mu:1", "walk:mu:2", "cycle:mu:1", "cycle:mu:2",
            "rho:walk,cycle",
        ]
        assert bi_spec.n_params == 9

    def test_covariate_union(self, tri_spec):
        assert tri_spec.covariate_columns == ["x1", "x2", "x3"]
        assert tri_spec.pairs == [(0, 1), (0, 2), (1, 2)]

    def test_equation_count(self):
        eq = EquationSpec("a", 2, ())
        with pytest.raises(ModelError):
            ModelSpec(equations=(), outcome_columns=())
        four = tuple(EquationSpec(f"e{i}", 2, ()) for i in range(4))
        with pytest.raises(ModelError):
            ModelSpec(equations=four, outcome_columns=("a", "b", "c", "d"))
        assert ModelSpec((eq,), ("y",)).n_correlations == 0

    def test_outcome_as_covariate(self):
        with pytest.raises(ModelError, match="outcome and covariate"):
            ModelSpec((EquationSpec("a", 3, ("y2",)), EquationSpec("b", 3, ())), ("y1", "y2"))

    def test_equation_index(self, tri_spec):
        assert tri_spec.equation_index("bikeshare") == 2
        assert tri_spec.equation_index(1) == 1
        with pytest.raises(ModelError):
            tri_spec.equation_index("bus")

    def test_dict_roundtrip(self, tri_spec):
        assert ModelSpec.from_dict(tri_spec.to_dict()) == tri_spec

    def test_subset(self, tri_spec):
        sub = tri_spec.subset([2])
        assert sub.n_equations == 1
        assert sub.outcome_columns == ("bikeshare_stage",)


class TestParameterSet:
    def test_valid(self, tri_params, tri_spec):
        assert tri_params.validate(tri_spec) is tri_params

    def test_thresholds_must_increase(self, bi_spec):
        p = ParameterSet(beta=([0.1, 0.2], [0.0, 0.0]), thresholds=([0.5, 0.5], [0.0, 1.0]), corr=np.eye(2))
        with pytest.raises(InvalidParameterError, match="strictly increasing"):
            p.validate(bi_spec)

    def test_corr_not_positive_definite(self, tri_spec, tri_params):
        bad = np.array([[1.0, 0.9, 0.9], [0.9, 1.0, -0.9], [0.9, -0.9, 1.0]])
        p = ParameterSet(tri_params.beta, tri_params.thresholds, bad)
        with pytest.raises(InvalidParameterError):
            p.validate(tri_spec)

    def test_shape_mismatch(self, bi_spec):
        p = ParameterSet(beta=([0.1], [0.0, 0.0]), thresholds=([0.0, 1.0], [0.0, 1.0]))
        with pytest.raises(InvalidParameterError, match="coefficients"):
            p.validate(bi_spec)

    def test_constrained_vector_roundtrip(self, tri_spec, tri_params):
        vec = tri_params.constrained_vector()
        back = ParameterSet.from_constrained_vector(vec, tri_spec)
        assert np.array_equal(back.constrained_vector(), vec)
        with pytest.raises(ShapeError):
            ParameterSet.from_constrained_vector(vec[:-1], tri_spec)

    def test_dict_fills_missing_coefficients(self, bi_spec):
        data = {
            "equations": {
                "walk": {"beta": {"x1": 0.3}, "thresholds": [-1.0, 1.0]},
                "cycle": {"beta": {}, "thresholds": [0.0, 0.5]},
            },
            "correlations": {"cycle,walk": 0.25},
        }
        p = ParameterSet.from_dict(data, bi_spec)
        assert p.beta[0].tolist() == [0.3, 0.0]
        assert p.corr[0, 1] == 0.25

    def test_dict_unknown_covariate(self, bi_spec):
        data = {"equations": {"walk": {"beta": {"x9": 1.0}, "thresholds": [0.0, 1.0]},
                              "cycle": {"thresholds": [0.0, 1.0]}}}
        with pytest.raises(InvalidParameterError, match="unknown covariates"):
            ParameterSet.from_dict(data, bi_spec)

    def test_subset(self, tri_params):
        sub = tri_params.subset([0, 2])
        assert sub.corr[0, 1] == pytest.approx(0.18)
        assert sub.thresholds[1].size == 3


class TestTransforms:
    def test_zero_raw_is_identity(self):
        for n in (2, 3):
            assert np.array_equal(corr_from_raw(np.zeros(n * (n - 1) // 2), n), np.eye(n))

    def test_corr_raw_roundtrip(self):
        corr = np.array([[1.0, 0.44, 0.18], [0.44, 1.0, -0.1], [0.18, -0.1, 1.0]])
        assert np.allclose(corr_from_raw(raw_from_corr(corr), 3), corr, atol=1e-12)

    def test_parameter_roundtrip(self, tri_spec, tri_params):
        back = from_unconstrained(to_unconstrained(tri_params), tri_spec)
        assert np.allclose(back.constrained_vector(), tri_params.constrained_vector(), atol=1e-12)

    def test_any_vector_is_valid(self, tri_spec):
        rng = np.random.default_rng(0)
        for _ in range(200):
            v = rng.normal(0.0, 5.0, tri_spec.n_params)
            p = from_unconstrained(v, tri_spec)
            p.validate(tri_spec)
            assert np.all(np.abs(p.correlations()) < 1.0)

    @pytest.mark.parametrize("raw", list(itertools.product((-50.0, 0.0, 50.0), repeat=3)))
    def test_extreme_correlation_raws_stay_valid(self, tri_spec, raw):
        v = np.zeros(tri_spec.n_params)
        v[correlation_slice(tri_spec)] = raw
        p = from_unconstrained(v, tri_spec)
        p.validate(tri_spec)
        corr = p.kernel_corr()
        assert corr.determinant > 0.0
        assert np.all(np.linalg.eigvalsh(p.corr) > 0.0)

    @pytest.mark.parametrize("value", [-50.0, 50.0])
    def test_extreme_vector_is_valid(self, tri_spec, bi_spec, value):
        for spec in (tri_spec, bi_spec):
            for sign_pattern in (1.0, -1.0):
                v = np.full(spec.n_params, value)
                v[::2] *= sign_pattern
                from_unconstrained(v, spec).validate(spec)

    def test_random_parameter_sets_roundtrip(self, tri_spec):
        rng = np.random.default_rng(5)
        for _ in range(100):
            beta = tuple(rng.normal(0.0, 1.0, len(eq.covariates)) for eq in tri_spec.equations)
            thresholds = tuple(rng.normal(0.0, 1.0) + np.cumsum(np.r_[0.0, rng.uniform(0.05, 2.0, eq.n_thresholds - 1)])
                               for eq in tri_spec.equations)
            corr = corr_from_raw(rng.uniform(-3.0, 3.0, 3), 3)
            params = ParameterSet(beta, thresholds, corr).validate(tri_spec)
            back = from_unconstrained(to_unconstrained(params), tri_spec)
            assert np.allclose(back.constrained_vector(), params.constrained_vector(), atol=1e-9)

    def test_extreme_spacing_stays_increasing(self, bi_spec):
        v = np.zeros(bi_spec.n_params)
        v[4:8] = [0.0, -800.0, 3.0, 900.0]
        p = from_unconstrained(v, bi_spec)
        assert p.thresholds[0][1] > p.thresholds[0][0]
        assert np.isfinite(p.thresholds[1]).all()

    def test_non_finite_rejected(self, bi_spec):
        v = np.zeros(bi_spec.n_params)
        v[0] = np.nan
        with pytest.raises(InvalidParameterError):
            from_unconstrained(v, bi_spec)
        with pytest.raises(ShapeError):
            from_unconstrained(np.zeros(3), bi_spec)

    def test_correlation_slice(self, tri_spec):
        assert correlation_slice(tri_spec) == slice(tri_spec.n_params - 3, tri_spec.n_params)
