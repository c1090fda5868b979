import json
import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unroll import SchemaError, load_config, make_preset, save_config
from unroll.config import (SCHEMA_FILES, canonical_json, check_sampled, config_from_dict, preset_config,
                           read_sampled, resolve_input, sample_preset, schema)
from unroll.presets import CATALOG

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def pointer_of(raw):
    with pytest.raises(SchemaError) as err:
        config_from_dict(raw)
    return err.value.pointer


def test_documented_schemas_match_the_packaged_ones():
    for name in SCHEMA_FILES:
        with open(os.path.join(ROOT, "docs", "schemas", "v1", name), encoding="utf-8") as fh:
            assert json.load(fh) == schema(name)


def test_defaults_are_filled():
    cfg = preset_config("cylinder_wrap")
    assert cfg.n_alpha == 4096
    assert cfg.input["preset"]["params"] == {"L": 2.0, "W": 1.0, "R": 0.5, "axial_scale": 1.0}
    assert cfg.tolerances["closure_tol"] is None
    assert cfg.quadrature["epsabs"] == 1e-10
    assert cfg.outputs["dir"] == "unroll-out"
    assert cfg.options["mesh"] == {"n_along": 200, "n_across": 50}


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_every_preset_config_round_trips(tmp_path, name):
    cfg = preset_config(name)
    path = tmp_path / "c.json"
    text = save_config(cfg, path)
    again = load_config(path)
    assert save_config(again, tmp_path / "d.json") == text
    assert (tmp_path / "d.json").read_bytes() == path.read_bytes()
    assert again.sha256 == cfg.sha256


@given(st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.integers(64, 10000))
def test_round_trip_is_byte_identical(R, W, n):
    cfg = preset_config("cylinder_wrap", {"R": R, "W": W}, n_alpha=n)
    assert config_from_dict(json.loads(cfg.canonical())).canonical() == cfg.canonical()


def test_canonical_form():
    text = canonical_json({"b": 1, "a": [1, 2]})
    assert text == '{\n  "a": [\n    1,\n    2\n  ],\n  "b": 1\n}\n'
    with pytest.raises(ValueError):
        canonical_json({"x": float("nan")})


def test_error_pointers():
    assert pointer_of({"input": {"preset": {"name": "cylinder_wrap", "params": {"R": -1}}}}) == \
        "/input/preset/params/R"
    assert pointer_of({"input": {"preset": {"name": "cylinder_wrap"}}, "bogus": 1}) == "/"
    assert pointer_of({"input": {"preset": {"name": "cylinder_wrap"}}, "tolerances": {"nope": 1}}) == "/tolerances"
    assert pointer_of({"input": {"preset": {"name": "cylinder_wrap"}}, "n_alpha": 8}) == "/n_alpha"
    assert pointer_of({"input": {"preset": {"name": "no_such"}}}).startswith("/input")
    assert pointer_of({}) == "/"


def test_cone_angle_must_be_acute():
    assert pointer_of({"input": {"preset": {"name": "cone_sector", "params": {"gamma": 2.0}}}}) == \
        "/input/preset/params/gamma"


def sampled_disk(n=64):
    return sample_preset(make_preset("disk_roll"), n)


def test_sampled_array_checks():
    data = sampled_disk()
    data["d"] = data["d"][:-1]
    assert pointer_of({"input": {"sampled": {"data": data}}}) == "/input/sampled/data/d"
    data = sampled_disk()
    data["alpha"][5] += 1e-3
    assert pointer_of({"input": {"sampled": {"data": data}}}) == "/input/sampled/data/alpha/5"
    data = sampled_disk()
    data["n"][7] = [0.0, 0.0, 0.0]
    assert pointer_of({"input": {"sampled": {"data": data}}}) == "/input/sampled/data/n/7"
    data = sampled_disk()
    data["corners"] = [100.0]
    assert pointer_of({"input": {"sampled": {"data": data}}}) == "/input/sampled/data/corners/0"


def test_sampled_file_input(tmp_path):
    data = sampled_disk(256)
    (tmp_path / "curve.json").write_text(json.dumps(data))
    (tmp_path / "run.json").write_text(json.dumps({"input": {"sampled": {"path": "curve.json"}}, "n_alpha": 256}))
    cfg = load_config(tmp_path / "run.json")
    p, digest = resolve_input(cfg)
    _, digest_again = read_sampled(tmp_path / "curve.json")
    assert digest == digest_again
    assert p.region.length == pytest.approx(np.pi)
    assert cfg.stem() == "sampled"


def test_missing_sampled_file(tmp_path):
    (tmp_path / "run.json").write_text(json.dumps({"input": {"sampled": {"path": "absent.json"}}}))
    cfg = load_config(tmp_path / "run.json")
    with pytest.raises(SchemaError) as err:
        resolve_input(cfg)
    assert err.value.pointer == "/input/sampled/path"


def test_invalid_json(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(SchemaError) as err:
        load_config(tmp_path / "bad.json")
    assert err.value.pointer == "/"


def test_check_sampled_accepts_generated_samples():
    check_sampled(sampled_disk(128))
