"""Tests for YAML study config loading and Pydantic validation."""

import textwrap
from pathlib import Path

import pytest

from selrand.config import SamplerSettings, StudyConfig, load_config
from selrand.inference.pvalues import ExactMethod, RejectionMethod, RwmMethod


@pytest.fixture
def minimal_yaml(tmp_path: Path) -> Path:
    config = tmp_path / "config.yaml"
    config.write_text("replications: 3\n")
    return config


@pytest.fixture
def full_yaml(tmp_path: Path) -> Path:
    config = tmp_path / "config.yaml"
    config.write_text(textwrap.dedent("""\
        replications: 50
        seed: 7
        threads: 4
        alpha: 0.05
        tau_grid: "-0.5:0.5:0.25"
        methods: [naive, srt_exact]
        windows: [3, 6]

        sampler:
          kind: rwm
          num_samples: 400
          window: 3
          burn_in: 20

        enrichment:
          n1: 20
          n2: 8
          tau_true:
            low: 0.0
            high: 0.5

        holdout:
          grid: [-1.0, 1.0, 0.5]
          datasets: 2

        real_data:
          n1: 300
          target_group: "70-79"
    """))
    return config


def test_load_minimal_config(minimal_yaml: Path):
    cfg = load_config(minimal_yaml)
    assert cfg.replications == 3
    assert cfg.alpha == 0.1  # default
    assert cfg.tau_grid == (-1.0, 1.0, 0.2)
    assert cfg.methods == ["naive", "split", "srt_rejection", "srt_rwm"]
    assert cfg.sampler.kind == "rejection"
    assert cfg.enrichment.n1 == 100
    assert cfg.holdout.grid == (-2.0, 3.0, 0.1)
    assert cfg.real_data.dataset is None
    assert cfg.timing_enabled is False


def test_load_full_config(full_yaml: Path):
    cfg = load_config(full_yaml)
    assert cfg.seed == 7
    assert cfg.threads == 4
    assert cfg.tau_grid == (-0.5, 0.5, 0.25)
    assert cfg.methods == ["naive", "srt_exact"]
    assert cfg.sampler.kind == "rwm"
    assert cfg.enrichment.tau_true == {"low": 0.0, "high": 0.5}
    assert cfg.holdout.grid == (-1.0, 1.0, 0.5)
    assert cfg.holdout.datasets == 2
    assert cfg.real_data.target_group == "70-79"


def test_shipped_default_config_loads():
    default = Path(__file__).parent.parent / "config" / "default.yaml"
    cfg = load_config(default)
    assert cfg.model_dump() == StudyConfig().model_dump()


def test_env_var_resolution(tmp_path: Path, monkeypatch: pytest.MonkeyPatch):
    monkeypatch.setenv("SPRINT_CSV", "/data/sprint.csv")
    config = tmp_path / "config.yaml"
    config.write_text(textwrap.dedent("""\
        real_data:
          dataset: "${SPRINT_CSV}"
    """))
    cfg = load_config(config)
    assert cfg.real_data.dataset == "/data/sprint.csv"


def test_missing_env_var_raises(tmp_path: Path, monkeypatch: pytest.MonkeyPatch):
    monkeypatch.delenv("NONEXISTENT_VAR", raising=False)
    config = tmp_path / "config.yaml"
    config.write_text('real_data:\n  dataset: "${NONEXISTENT_VAR}"\n')
    with pytest.raises(ValueError, match="NONEXISTENT_VAR is not set"):
        load_config(config)


@pytest.mark.parametrize(
    "body",
    [
        "alpha: 1.5\n",
        "methods: [bootstrap]\n",
        "methods: []\n",
        "windows: [0]\n",
        'tau_grid: "1:0:0.1"\n',
        "enrichment:\n  n1: 9\n",
        "coverage:\n  bracket: [1.0, -1.0]\n",
        "real_data:\n  p: 1.0\n",
    ],
)
def test_invalid_values_raise(tmp_path: Path, body: str):
    config = tmp_path / "config.yaml"
    config.write_text(body)
    with pytest.raises(ValueError):
        load_config(config)


def test_missing_config_file_raises():
    with pytest.raises(FileNotFoundError):
        load_config("/nonexistent/path/config.yaml")


def test_config_path_from_env(tmp_path: Path, monkeypatch: pytest.MonkeyPatch):
    config = tmp_path / "env_config.yaml"
    config.write_text("replications: 11\n")
    monkeypatch.setenv("SELRAND_CONFIG", str(config))
    assert load_config().replications == 11


class TestSamplerSettings:
    def test_builds_each_kind(self):
        settings = SamplerSettings(num_samples=200, exact_cap=500)
        assert settings.build("exact") == ExactMethod(cap=500)
        rejection = settings.build("rejection", threads=3)
        assert isinstance(rejection, RejectionMethod)
        assert rejection.threads == 3
        assert isinstance(settings.build("rwm"), RwmMethod)

    def test_rwm_chain_keeps_num_samples_after_burn_in(self):
        cfg = SamplerSettings(num_samples=200).rwm_config()
        assert cfg.num_samples == 220
        assert cfg.effective_burn_in == 20

    def test_rwm_window_override(self):
        assert SamplerSettings(window=5).rwm_config(window=2).window == 2
