import json
import math

import numpy as np
import pytest
from pytest import approx

from classes.optomechanics.core import DriveState, shifted_cavity_frequency
from classes.optomechanics.errors import SettingsError
from classes.optomechanics.fit import NoiseModel, synthesize
from classes.optomechanics.response import default_grid, mech_trace
from classes.utilities.settings import (build_drive, build_fit_config, build_grid, build_noise, build_system,
                                        load_settings, merge_settings, read_json)
from classes.utilities.tracefile import TraceFile
from classes.utilities.utilities import Utilities
from tests.conftest import F_CAVITY, F_MECH, G0, REPO_ROOT, TWO_PI, drive_at


class TestUtilities:

    def test_unit_conversion(self):
        assert Utilities.hz_to_rad(1.0) == approx(TWO_PI)
        assert Utilities.rad_to_hz(Utilities.hz_to_rad(F_CAVITY)) == approx(F_CAVITY, rel=1e-15)
        values = np.array([1.0, 9.696e6, 6.506e9])
        np.testing.assert_allclose(Utilities.rad_to_hz(Utilities.hz_to_rad(values)), values, rtol=1e-15)

    def test_real_numbers(self):
        assert Utilities.is_real_number(1)
        assert Utilities.is_real_number(np.float64(2.5))
        assert not Utilities.is_real_number(True)
        assert not Utilities.is_real_number(math.inf)
        assert not Utilities.is_real_number("1")

    def test_atomic_write(self, tmp_path):
        path = tmp_path / "nested" / "out.txt"
        Utilities.atomic_write_text(path, "first\n")
        Utilities.atomic_write_text(path, "second\n")
        assert path.read_text() == "second\n"
        assert [p.name for p in path.parent.iterdir()] == ["out.txt"]

    def test_records_are_strict_json(self):
        text = Utilities.dump_record({"b": math.nan, "a": [np.float64(1.5), math.inf], "c": np.bool_(True)})
        assert json.loads(text) == {"a": [1.5, None], "b": None, "c": True}
        assert text == Utilities.dump_record({"c": True, "a": [1.5, math.inf], "b": math.nan})


class TestTraceFile:

    def test_round_trip(self, tmp_path, device):
        drive = drive_at(device, 3.83e6)
        original = synthesize(device, drive, default_grid(device, drive, 101), NoiseModel(sigma=1e-3, seed=5))
        path = tmp_path / "trace.csv"
        TraceFile.write(path, original)
        loaded = TraceFile.read(path)
        assert loaded.quantity == "transmission"
        np.testing.assert_array_equal(loaded.values, original.values)
        np.testing.assert_allclose(loaded.frequencies, original.frequencies, rtol=1e-15)
        assert loaded.metadata["drive_frequency"] == approx(drive.drive_frequency, rel=1e-15)
        assert loaded.metadata["photon_number"] == drive.photon_number
        assert loaded.metadata["seed"] == 5
        assert loaded.metadata["sigma"] == 1e-3

    def test_header(self, device):
        drive = drive_at(device, 1e6)
        text = TraceFile.dumps(mech_trace(device, drive, np.array([1.0, 2.0])))
        lines = text.splitlines()
        assert lines[0] == "# quantity: mech_susceptibility_normalized"
        assert lines[1].startswith("# drive_frequency_hz: ")
        assert lines[3] == "frequency_hz,re,im"
        assert len(lines) == 6

    def test_written_bytes_are_deterministic(self, tmp_path, device):
        drive = DriveState.red_sideband(device, 1e6)
        trace = synthesize(device, drive, default_grid(device, drive, 51), NoiseModel(sigma=1e-3, seed=1))
        TraceFile.write(tmp_path / "a.csv", trace)
        TraceFile.write(tmp_path / "b.csv", trace)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    @pytest.mark.parametrize("text", [
        "",
        "# quantity: transmission\nfrequency_hz,re,im\n",
        "frequency_hz,re,im\n1.0,0.0,0.0\n",
        "# quantity: transmission\nfrequency_hz,re,im\n2.0,0.0,0.0\n1.0,0.0,0.0\n",
        "# quantity: transmission\nfrequency,real,imag\n1.0,0.0,0.0\n",
        "# quantity transmission\nfrequency_hz,re,im\n1.0,0.0,0.0\n",
        "# quantity: transmission\nfrequency_hz,re,im\n1.0,abc,0.0\n",
    ])
    def test_malformed_files(self, tmp_path, text):
        path = tmp_path / "bad.csv"
        path.write_text(text)
        with pytest.raises(SettingsError):
            TraceFile.read(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(SettingsError):
            TraceFile.read(tmp_path / "absent.csv")


class TestSettings:

    def test_bundled_defaults_describe_the_device(self):
        system = build_system(load_settings())
        assert system.cavity.resonance_frequency / TWO_PI == approx(F_CAVITY, rel=1e-12)
        assert system.fundamental.resonance_frequency / TWO_PI == approx(F_MECH, rel=1e-12)
        assert system.fundamental.single_photon_coupling / TWO_PI == approx(G0, rel=1e-12)
        assert system.thermal_occupancy == 76.0

    def test_device_config(self):
        settings = load_settings(REPO_ROOT / "configs" / "measured_device.json")
        system = build_system(settings)
        assert system.cavity.total_linewidth / TWO_PI == approx(1.2e6, rel=1e-12)
        assert system.uncertainties["coupling_hz"] == 2.0
        assert settings["drive"]["track_detuning"]
        assert system.kinetic_shift_per_photon / TWO_PI == approx(-4e-3, rel=1e-12)
        shift = shifted_cavity_frequency(system, 8.4e8) - system.cavity.resonance_frequency
        assert shift / TWO_PI == approx(-8.19e6, rel=0.01)

    def test_merge_keeps_defaults(self):
        defaults = {"a": 1.0, "b": {"c": "x", "d": False}}
        merged = merge_settings(defaults, {"b": {"d": True}})
        assert merged == {"a": 1.0, "b": {"c": "x", "d": True}}
        assert defaults["b"]["d"] is False

    @pytest.mark.parametrize("overrides, key", [
        ({"system": {"cavity": {"frequency": 1.0}}}, "system.cavity.frequency"),
        ({"noise": {"seed": "zero"}}, "noise.seed"),
        ({"fit": {"magnitude_only": 1}}, "fit.magnitude_only"),
        ({"fit": {"weights": 1.0}}, "fit.weights"),
        ({"system": {"modes": [{"frequency_hz": 1e6}]}}, "system.modes[0]"),
        ({"sweep": {"photon_numbers": 3}}, "sweep.photon_numbers"),
        ({"grid": 5}, "grid"),
    ])
    def test_merge_rejects_bad_configs(self, overrides, key):
        with pytest.raises(SettingsError) as error:
            merge_settings(load_settings(), overrides)
        assert error.value.key == key

    def test_json_errors_carry_line_numbers(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{\n  "noise": {\n    "seed": 1,\n  }\n}\n')
        with pytest.raises(SettingsError) as error:
            read_json(path)
        assert error.value.line == 4
        with pytest.raises(SettingsError):
            read_json(tmp_path / "absent.json")

    def test_drive_builder(self, device):
        settings = load_settings()
        settings["drive"]["photon_number"] = 1e6
        fixed = build_drive(settings, device)
        assert fixed.drive_frequency == approx(device.cavity.resonance_frequency
                                               - device.fundamental.resonance_frequency, rel=1e-15)
        settings["drive"]["track_detuning"] = True
        tracked = build_drive(settings, device)
        assert tracked.detuning == approx(-device.fundamental.resonance_frequency, rel=1e-9)
        settings["drive"]["drive_frequency_hz"] = 6.5e9
        with pytest.raises(SettingsError):
            build_drive(settings, device)
        settings["drive"]["track_detuning"] = False
        assert build_drive(settings, device).drive_frequency == approx(TWO_PI * 6.5e9)

    def test_grid_builder(self, device):
        settings = load_settings()
        drive = DriveState.red_sideband(device, 0.0)
        settings["grid"].update({"frame": "drive", "start_hz": 9e6, "stop_hz": 10e6, "points": 11})
        grid = build_grid(settings, device, drive)
        assert grid.size == 11
        assert grid[0] == approx(drive.drive_frequency + TWO_PI * 9e6)
        settings["grid"]["frame"] = "absolute"
        assert build_grid(settings, device, drive)[-1] == approx(TWO_PI * 10e6)
        settings["grid"]["stop_hz"] = 8e6
        with pytest.raises(SettingsError):
            build_grid(settings, device, drive)
        settings["grid"]["frame"] = "lab"
        with pytest.raises(SettingsError):
            build_grid(settings, device, drive)

    def test_noise_builder(self):
        settings = load_settings()
        settings["noise"].update({"sigma": 0.01, "relative_sigma": True, "seed": 4})
        noise = build_noise(settings, scale=0.5)
        assert noise.sigma == approx(0.005)
        assert noise.seed == 4

    def test_fit_config_builder(self):
        settings = merge_settings(load_settings(), {"fit": {"bounds": {"coupling": [1e6, 5e6], "weight_2": [0, 1]},
                                                            "initial": {"kappa_i": 8e4}}})
        config = build_fit_config(settings)
        assert config.bounds["coupling"] == approx((TWO_PI * 1e6, TWO_PI * 5e6))
        assert config.bounds["weight_2"] == (0.0, 1.0)
        assert config.initial["kappa_i"] == approx(TWO_PI * 8e4)
        bad = merge_settings(load_settings(), {"fit": {"bounds": {"coupling": [1e6]}}})
        with pytest.raises(SettingsError):
            build_fit_config(bad)

    def test_fit_config_acceptance_and_weights(self):
        defaults = build_fit_config(load_settings())
        assert defaults.acceptance_tolerance == 1e-3
        assert defaults.weights is None
        assert defaults.vary_weights and defaults.detect_modes
        settings = merge_settings(load_settings(), {"fit": {"acceptance_tolerance": 1e-5, "weights": [1, 0.5, 2],
                                                            "vary_weights": False, "detect_modes": False}})
        config = build_fit_config(settings)
        assert config.acceptance_tolerance == 1e-5
        assert config.weights == (1.0, 0.5, 2.0)
        assert config.varied(5) == config.vary
        bad = merge_settings(load_settings(), {"fit": {"weights": [1, "heavy"]}})
        with pytest.raises(SettingsError) as error:
            build_fit_config(bad)
        assert error.value.key == "fit.weights"
