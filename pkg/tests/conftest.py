# -*- coding: utf-8 -*-
"""
共享 fixture: 固定种子的随机数发生器与参考单纯形。
"""

import numpy as np
import pytest

from app.services.geometry import reference_simplex


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def ref_tri():
    return reference_simplex(2)


@pytest.fixture
def ref_tet():
    return reference_simplex(3)
