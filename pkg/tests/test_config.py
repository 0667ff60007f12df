import json

import pytest

from dswave.config import (PRESETS, load_config, spec_from_config, spec_to_config,
                           validate_config, with_overrides)
from dswave.scale_factor import check_admissible
from dswave.solver import ConfigError


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load_and_validate(name):
    cfg = load_config(name)
    spec = spec_from_config(cfg)
    spec.validate()
    if not cfg["problem"].get("validation"):
        assert check_admissible(spec.sf).admissible


def test_load_from_path_and_dict(tmp_path):
    cfg = load_config("desitter_p2")
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert load_config(path) == cfg
    assert load_config(cfg) == cfg and load_config(cfg) is not cfg


def test_spec_roundtrip():
    spec = spec_from_config(load_config("flrw_accelerated"))
    assert spec_from_config(spec_to_config(spec)) == spec


@pytest.mark.parametrize("mutate", [
    lambda c: c["problem"].update(bogus=1),
    lambda c: c["problem"].pop("p"),
    lambda c: c.update(scale_factor={"kind": "desitter"}),
    lambda c: c["problem"].update(nonlinearity="cubic"),
    lambda c: c.setdefault("experiment", {}).update(ratio=0.8),
    lambda c: c.setdefault("experiment", {}).update(count=3),
])
def test_schema_rejects(mutate):
    cfg = load_config("desitter_p2")
    mutate(cfg)
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_bad_sources(tmp_path):
    with pytest.raises(ConfigError):
        load_config("no_such_preset")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_semantic_errors_become_config_errors():
    cfg = load_config("desitter_p2")
    cfg["problem"]["data"]["R"] = 0.0
    with pytest.raises(ConfigError):
        spec_from_config(cfg)


def test_overrides():
    cfg = with_overrides(load_config("desitter_p2"), p=3.0, epsilon=None)
    assert cfg["problem"]["p"] == 3.0 and cfg["problem"]["epsilon"] == 1.0
