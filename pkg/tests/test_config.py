import json
import math
from pathlib import Path

import numpy as np
import pytest

from coevo.config import NumericsConfig, PhaseConfig, RunConfig, load_config, parse_config
from coevo.errors import ConfigError
from coevo.graphon import KernelFamily
from coevo.model import CouplingFamily, FrequencyFamily


def _study_manifest() -> dict:
    return {
        "model": {"omega0": 1.0, "a": 0.3, "epsilon": 0.05, "T": 4.0, "preset": "hebbian"},
        "kernel": {"family": "cosine-shift", "c": 1.0, "amplitude": 0.5},
        "initial_phase": {"family": "linear", "offset": 0.0, "slope": 2 * math.pi},
        "numerics": {"ns": [8, 16, 32], "n_ref": 64, "dt": 2e-3, "dt_ref": 5e-4, "stride": 200},
        "output": {"directory": "study"},
    }


def test_defaults_are_valid() -> None:
    config = RunConfig().validate()
    assert config.numerics == NumericsConfig()
    assert config.model.build().name == "berner"


def test_parse_study_manifest() -> None:
    config = parse_config(_study_manifest())
    model = config.model.build()
    assert model.name == "berner-hebbian"
    assert model.H.lag == 0.0
    assert model.T == 4.0
    kernel = config.kernel.build()
    assert kernel.family == KernelFamily.COSINE_SHIFT
    assert kernel.inf_bound == 0.5
    phi0 = config.initial_phase.build()
    np.testing.assert_allclose(phi0(np.array([0.0, 0.5])), [0.0, math.pi])
    assert config.numerics.ns == [8, 16, 32]
    assert config.output.directory == "study"
    config.validate(require_ns=True)


def test_unknown_block_is_rejected() -> None:
    with pytest.raises(ConfigError) as excinfo:
        parse_config({"modle": {}})
    assert excinfo.value.field == "config"


@pytest.mark.parametrize("block, key, value, field", [
    ("model", "epsilon", "fast", "model.epsilon"),
    ("numerics", "n", 2.5, "numerics.n"),
    ("kernel", "c", None, "kernel.c"),
])
def test_field_level_messages(block: str, key: str, value, field: str) -> None:
    manifest = _study_manifest()
    manifest[block][key] = value
    with pytest.raises(ConfigError) as excinfo:
        parse_config(manifest)
    assert excinfo.value.field == field
    assert str(excinfo.value).startswith(field)


@pytest.mark.parametrize("overrides, field", [
    ({"epsilon": -0.1}, "model.epsilon"),
    ({"T": 0.0}, "model.T"),
    ({"dt": 0.0}, "numerics.dt"),
    ({"n": 0}, "numerics.n"),
])
def test_validate_ranges(overrides: dict, field: str) -> None:
    with pytest.raises(ConfigError) as excinfo:
        RunConfig().with_overrides(**overrides).validate()
    assert excinfo.value.field == field


def test_divisibility_is_checked_when_sizes_are_required() -> None:
    config = RunConfig().with_overrides(ns=[8, 24], n_ref=64)
    config.validate()
    with pytest.raises(ConfigError) as excinfo:
        config.validate(require_ns=True)
    assert excinfo.value.field == "numerics.ns"
    with pytest.raises(ConfigError):
        RunConfig().validate(require_ns=True)


def test_flags_override_file_values() -> None:
    config = parse_config(_study_manifest()).with_overrides(n=32, epsilon=0.1, preset="stdp", out="elsewhere",
                                                           workers=None)
    assert config.numerics.n == 32
    assert config.numerics.workers == 1
    assert config.model.epsilon == 0.1
    assert config.model.build().H.lag == pytest.approx(-math.pi / 2)
    assert config.output.directory == "elsewhere"


def test_custom_frequency_and_amplitudes_mark_model_custom() -> None:
    manifest = {"model": {"omega0": 0.5, "omega": {"slope": 0.2}, "D": {"amplitude": 2.0}}}
    model = parse_config(manifest).model.build()
    assert model.name == "custom"
    assert model.omega.family == FrequencyFamily.AFFINE
    assert model.D.amplitude == 2.0


def test_referenced_files_must_exist(tmp_path: Path) -> None:
    with pytest.raises(ConfigError) as excinfo:
        parse_config({"kernel": {"family": "tabulated", "csv": "missing.csv"}}, str(tmp_path))
    assert excinfo.value.field == "kernel.csv"
    with pytest.raises(ConfigError):
        parse_config({"kernel": {"family": "tabulated"}}, str(tmp_path))


def test_tabulated_inputs_resolve_relative_to_manifest(tmp_path: Path) -> None:
    (tmp_path / "kernel.csv").write_text("2\n1,2\n2,1\n")
    grid = 2 * math.pi * np.arange(4) / 4
    table = np.sin(grid[:, None] - grid[None, :])
    np.savetxt(tmp_path / "H.csv", table, delimiter=",", header="4", comments="")
    manifest = {"kernel": {"family": "tabulated", "csv": "kernel.csv"}, "model": {"H": {"csv": "H.csv"}}}
    (tmp_path / "run.json").write_text(json.dumps(manifest))
    config = load_config(str(tmp_path / "run.json"))
    kernel = config.kernel.build()
    assert kernel.family == KernelFamily.TABULATED
    assert (kernel.inf_bound, kernel.sup_bound) == (1.0, 2.0)
    model = config.model.build()
    assert model.H.family == CouplingFamily.TABULATED
    assert model.name == "custom"


def test_load_config_wraps_bad_json(tmp_path: Path) -> None:
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(path))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.json"))


def test_phase_perturbation_adds_sine_bump() -> None:
    config = parse_config({"initial_phase": {"family": "linear", "slope": 1.0, "perturbation": 1e-3}})
    assert config.initial_phase.perturbation == 1e-3
    assert config.initial_phase.params == {"slope": 1.0}
    assert config.initial_phase.build()(0.25) == pytest.approx(0.25 + 1e-3)
    assert PhaseConfig("linear", {"offset": 0.0, "slope": 1.0}).build()(0.25) == pytest.approx(0.25)
    with pytest.raises(ConfigError) as excinfo:
        parse_config({"initial_phase": {"family": "linear", "perturbation": "small"}})
    assert excinfo.value.field == "initial_phase.perturbation"
    with pytest.raises(ConfigError):
        PhaseConfig("square").build()
