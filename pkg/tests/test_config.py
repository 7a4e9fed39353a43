"""
Tests de la configuration (réglages du processus et fichier d'expérience)
"""
import pytest

from core.config import Config, RunConfig, StateBackend, parse_list
from core.errors import ConfigError


class TestRunConfig:
    def test_defaults(self):
        rc = RunConfig()
        assert (rc.T, rc.learning_rate, rc.batch_size) == (1000, 1e-4, 32)
        assert (rc.L, rc.P) == (200, 0.5)
        assert (rc.median_kernel, rc.seg_threshold, rc.min_component) == (5, 0.5, 10)

    def test_flat_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("T: 50\nP: 0.3\ncodec_kind: learned\nP_grid: 0.1,0.2\n")
        rc = RunConfig.from_file(path)
        assert rc.T == 50
        assert rc.P == 0.3
        assert rc.codec_kind == "learned"
        assert rc.grid()["P"] == [0.1, 0.2]

    def test_save_and_reload(self, tmp_path):
        rc = RunConfig(T=123, L=45, P_grid="0.2,0.4")
        assert RunConfig.from_file(rc.save(tmp_path / "saved.cfg")) == rc

    @pytest.mark.parametrize(
        "content",
        ["schedule:\n  T: 10\n", "unknown_key: 1\n", "T: many\n", "- T\n"],
    )
    def test_invalid_files(self, tmp_path, content):
        path = tmp_path / "bad.cfg"
        path.write_text(content)
        with pytest.raises(ConfigError):
            RunConfig.from_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig.from_file(tmp_path / "absent.cfg")

    def test_override_skips_unset_flags(self):
        rc = RunConfig(L=100).override(L=None, P=0.7)
        assert rc.L == 100
        assert rc.P == 0.7

    def test_override_is_validated(self):
        with pytest.raises(ConfigError):
            RunConfig().override(T="not a number")

    def test_grid_lists(self):
        grid = RunConfig(P_grid=" 0.3, 0.5 ,0.7", L_grid="100,200,300").grid()
        assert grid == {"P": [0.3, 0.5, 0.7], "L": [100, 200, 300]}

    def test_bad_grid(self):
        with pytest.raises(ConfigError):
            RunConfig(L_grid="100,abc").grid()


class TestTypedViews:
    def test_schedule(self):
        schedule = RunConfig(T=20, beta_start=0.01, beta_end=0.2).schedule()
        assert schedule.T == 20
        assert schedule.beta_at(20) == pytest.approx(0.2)

    def test_unknown_schedule_kind(self):
        with pytest.raises(ConfigError):
            RunConfig(schedule_kind="quadratic").schedule()

    def test_invalid_codec(self):
        with pytest.raises(ConfigError):
            RunConfig(codec_kind="bitplane", image_channels=3, latent_channels=4).codec_spec()

    def test_invalid_threshold(self):
        with pytest.raises(ConfigError):
            RunConfig(P=1.5).inference_config(seed=0)

    def test_inference_settings(self):
        cfg = RunConfig(L=30, P=0.2, median_kernel=3).inference_config(seed=9, keep_trace=True)
        assert (cfg.L, cfg.P, cfg.seed, cfg.median_kernel, cfg.keep_trace) == (30, 0.2, 9, 3, True)

    def test_architecture_follows_latent_channels(self):
        assert RunConfig(latent_channels=8).architecture().latent_channels == 8


def test_parse_list():
    assert parse_list("1,2", int) == [1, 2]
    with pytest.raises(ConfigError):
        parse_list(" , ")


def test_settings_read_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("BERNOULLI_AD_DEBUG", "true")
    monkeypatch.setenv("BERNOULLI_AD_STATE_BACKEND", "file")
    monkeypatch.setenv("BERNOULLI_AD_OUTPUT_DIR", str(tmp_path / "out"))
    config = Config()
    assert config.debug is True
    assert config.state_backend == StateBackend.FILE
    config.ensure_dirs()
    assert (tmp_path / "out").is_dir()


def test_single_point_grid_from_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("P_grid: 0.5\nL_grid: 100\n")
    assert RunConfig.from_file(path).grid() == {"P": [0.5], "L": [100]}
