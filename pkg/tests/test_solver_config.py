"""
Unit tests for solver_config.py module
"""
import pytest
import yaml
from pydantic import ValidationError

from solver_config import (
    DEFAULT_CONFIG_PATH,
    SolverSettings,
    get_settings,
    load_settings,
    reset_settings,
    set_settings,
)


class TestLoadSettings:
    """Test YAML loading"""

    def test_bundled_defaults(self):
        """Test the shipped file matches the built-in defaults"""
        assert DEFAULT_CONFIG_PATH.exists()
        settings = load_settings()
        assert settings.lp.feasibility_tolerance == 1e-7
        assert settings.separation.violation_tolerance == 1e-6
        assert settings.separation.extra_iterations == 10
        assert settings.exact.dp_state_cap == 100_000_000
        assert settings.rounding.gamma == 4.0
        assert settings.rounding.max_samples == 100
        assert settings.rounding.exact_shortcut is True
        assert settings == SolverSettings()

    def test_custom_file(self, tmp_path):
        """Test a partial YAML file keeps the other defaults"""
        path = tmp_path / "solver.yaml"
        path.write_text(yaml.safe_dump({"rounding": {"gamma": 2.0, "seed": 9}}))
        settings = load_settings(str(path))
        assert settings.rounding.gamma == 2.0
        assert settings.rounding.seed == 9
        assert settings.rounding.max_samples == 100

    def test_missing_explicit_file(self, tmp_path):
        """Test an explicit path that does not exist"""
        with pytest.raises(FileNotFoundError):
            load_settings(str(tmp_path / "missing.yaml"))

    def test_env_path(self, tmp_path, monkeypatch):
        """Test PDLS_CONFIG selects the file"""
        path = tmp_path / "env.yaml"
        path.write_text(yaml.safe_dump({"exact": {"brute_force_cap": 5}}))
        monkeypatch.setenv("PDLS_CONFIG", str(path))
        assert load_settings().exact.brute_force_cap == 5

    def test_invalid_values(self, tmp_path):
        """Test non-positive tolerances and unknown keys"""
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.safe_dump({"lp": {"feasibility_tolerance": 0}}))
        with pytest.raises(ValidationError):
            load_settings(str(path))
        path.write_text(yaml.safe_dump({"rounding": {"gama": 1.0}}))
        with pytest.raises(ValidationError):
            load_settings(str(path))


class TestGlobalSettings:
    """Test the process-wide settings"""

    def test_get_is_cached(self):
        """Test repeated calls return one object"""
        assert get_settings() is get_settings()

    def test_set_and_reset(self):
        """Test overriding and resetting"""
        custom = SolverSettings().with_overrides(rounding={"gamma": 3.0})
        set_settings(custom)
        assert get_settings().rounding.gamma == 3.0
        reset_settings()
        assert get_settings().rounding.gamma == 4.0

    def test_overrides_ignore_none(self):
        """Test None leaves a field unchanged"""
        settings = SolverSettings().with_overrides(rounding={"gamma": None, "seed": 5})
        assert settings.rounding.gamma == 4.0
        assert settings.rounding.seed == 5
