from __future__ import annotations

import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from localbs.rng import stream

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng(request):
    """A stream addressed by the test's node id, so every test is reproducible."""
    return stream(20240917, request.node.nodeid)


def seeded(label: str, *index: int) -> np.random.Generator:
    return stream(20240917, label, *index)
