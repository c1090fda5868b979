import json
import os
from functools import lru_cache

import pytest
from hypothesis import HealthCheck, settings

from unroll import ADMISSIBLE, DEFECTS, RulingField, build_immersion, make_preset, reduced_energy, verify_isometry

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))

HERE = os.path.dirname(os.path.abspath(__file__))


@lru_cache(maxsize=None)
def oracle_values() -> dict:
    with open(os.path.join(HERE, "oracles", "values.json"), encoding="utf-8") as fh:
        return json.load(fh)


@lru_cache(maxsize=None)
def preset(name: str):
    return make_preset(name)


@lru_cache(maxsize=None)
def field(name: str, n_alpha: int = 4096):
    p = preset(name)
    return RulingField(p.framed, p.region, n_alpha)


@lru_cache(maxsize=None)
def energy(name: str):
    return reduced_energy(field(name))


@lru_cache(maxsize=None)
def immersion(name: str):
    p = preset(name)
    return build_immersion(p.framed, p.region, field(name))


@lru_cache(maxsize=None)
def regularity(name: str):
    return verify_isometry(immersion(name))


@pytest.fixture(scope="session")
def oracles():
    return oracle_values()


@pytest.fixture(params=sorted(ADMISSIBLE))
def admissible_name(request):
    return request.param


@pytest.fixture(params=sorted(DEFECTS))
def defect_name(request):
    return request.param


@lru_cache(maxsize=None)
def cylinder_descent():
    from unroll.optimizer import cylinder_radius_family, descend

    family = cylinder_radius_family()
    p, trace = descend(family, [0.5])
    return family, p, trace
