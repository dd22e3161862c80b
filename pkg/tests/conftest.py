import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def toy():
    from hinwalk.graph import load_toy
    return load_toy()


@pytest.fixture
def toy_aug(toy):
    from hinwalk.graph import add_inverse_relations, derive_schema_graph
    return add_inverse_relations(toy, derive_schema_graph(toy))
