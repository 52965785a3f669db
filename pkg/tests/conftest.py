"""Shared fixtures: the jump and swirl study pipelines at desk scale.

Session scope: profile construction and the eps sweeps dominate the
suite's runtime, and every consumer treats the results as read-only.
"""

from __future__ import annotations

import pytest

from llx.expansion import (StudyConfig, build_expansion_pieces,
                           convergence_study)
from llx.fields import constant_per_side, named_field

HEADLINE_EPSILONS = (0.1, 0.05, 0.025, 0.0125)
SWIRL_EPSILONS = (0.1, 0.05, 0.025)


@pytest.fixture(scope="session")
def study_cfg():
    return StudyConfig()


@pytest.fixture(scope="session")
def jump_data():
    return constant_per_side((0.6, 0.8, 0.0), (-0.6, 0.8, 0.0))


@pytest.fixture(scope="session")
def swirl_data():
    return named_field("swirl")


@pytest.fixture(scope="session")
def jump_pieces(jump_data, study_cfg):
    return build_expansion_pieces(jump_data, study_cfg)


@pytest.fixture(scope="session")
def jump_study(jump_data, study_cfg, jump_pieces):
    return convergence_study(list(HEADLINE_EPSILONS), jump_data, study_cfg,
                             pieces=jump_pieces)


@pytest.fixture(scope="session")
def swirl_pieces(swirl_data, study_cfg):
    return build_expansion_pieces(swirl_data, study_cfg)


@pytest.fixture(scope="session")
def swirl_study(swirl_data, study_cfg, swirl_pieces):
    return convergence_study(list(SWIRL_EPSILONS), swirl_data, study_cfg,
                             pieces=swirl_pieces)
