"""
Shared fixtures: small bivariate and trivariate models with simulated data
"""

import numpy as np
import pytest

from src.core.model import EquationSpec, ModelSpec, ParameterSet
from src.core.simulate import ColumnDistribution, CovariateGenerator, sample_dataset

# Walking / cycling / bike share correlations of a fitted three-equation model
SURVEY_CORR = (0.439, 0.181, -0.097)


def corr_matrix(r12, r13=0.0, r23=0.0, n=3):
    if n == 2:
        return np.array([[1.0, r12], [r12, 1.0]])
    return np.array([[1.0, r12, r13], [r12, 1.0, r23], [r13, r23, 1.0]])


def make_bi_spec():
    return ModelSpec(
        equations=(EquationSpec("walk", 3, ("x1", "x2")), EquationSpec("cycle", 3, ("x1", "x3"))),
        outcome_columns=("walk_stage", "cycle_stage"),
    )


def make_bi_params(rho=0.4):
    return ParameterSet(
        beta=([0.6, -0.4], [0.5, 0.3]),
        thresholds=([-0.4, 0.7], [-0.2, 0.8]),
        corr=corr_matrix(rho, n=2),
    )


def make_tri_spec():
    return ModelSpec(
        equations=(
            EquationSpec("walk", 3, ("x1", "x2")),
            EquationSpec("cycle", 3, ("x1", "x3")),
            EquationSpec("bikeshare", 4, ("x2", "x3")),
        ),
        outcome_columns=("walk_stage", "cycle_stage", "bikeshare_stage"),
    )


def make_tri_params(r12=0.44, r13=0.18, r23=-0.10):
    return ParameterSet(
        beta=([0.5, -0.3], [0.4, 0.6], [-0.2, 0.3]),
        thresholds=([-0.5, 0.6], [-0.2, 0.9], [-0.8, 0.1, 1.0]),
        corr=corr_matrix(r12, r13, r23),
    )


def make_generator():
    return CovariateGenerator({
        "x1": ColumnDistribution("normal"),
        "x2": ColumnDistribution("uniform", low=-1.0, high=1.0),
        "x3": ColumnDistribution("bernoulli", p=0.4),
    })


@pytest.fixture
def bi_spec():
    return make_bi_spec()


@pytest.fixture
def bi_params():
    return make_bi_params()


@pytest.fixture
def tri_spec():
    return make_tri_spec()


@pytest.fixture
def tri_params():
    return make_tri_params()


@pytest.fixture
def generator():
    return make_generator()


@pytest.fixture
def tri_data(tri_spec, tri_params, generator):
    return sample_dataset(tri_spec, tri_params, 1000, generator, seed=7)


@pytest.fixture
def bi_data(bi_spec, bi_params, generator):
    return sample_dataset(bi_spec, bi_params, 2000, generator, seed=11)
