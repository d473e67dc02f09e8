import math

import numpy as np
import pytest
from pytest import approx
from scipy.signal import find_peaks

from classes.optomechanics.core import Cavity, DriveState, MechMode
from classes.optomechanics.response import (ComplexTrace, chi_cavity, chi_cavity_effective, chi_mech,
                                            chi_mech_effective, chi_mech_multimode, default_grid, mech_trace,
                                            mode_coupling_matrix, normalized_mech_susceptibility,
                                            reconstruct_chi_m, trace, transmission)
from classes.optomechanics.spectrum import eigenvalues_closed_form
from tests.conftest import G_MAX, KAPPA, TWO_PI, drive_at, make_device, make_multimode

rng = np.random.default_rng(1234)


class TestBareSusceptibilities:

    def test_cavity_on_resonance(self, device):
        kappa = device.cavity.total_linewidth
        value = chi_cavity(device.cavity.resonance_frequency, device.cavity)
        assert value == approx(-2j / kappa, rel=1e-12)
        half = chi_cavity(device.cavity.resonance_frequency + kappa / 2, device.cavity)
        assert abs(half) == approx(math.sqrt(2) / kappa, rel=1e-9)

    def test_cavity_symmetry(self):
        cavity = Cavity(100.0, 1.0, 1.0, 2.0)
        offsets = np.linspace(0.1, 20, 50)
        above = chi_cavity(100.0 + offsets, cavity)
        below = chi_cavity(100.0 - offsets, cavity)
        np.testing.assert_allclose(above, -np.conj(below), rtol=1e-14)

    def test_mechanics(self):
        mode = MechMode(TWO_PI * 9.696e6, TWO_PI * 31.0, TWO_PI * 167.0)
        omega = mode.resonance_frequency
        assert chi_mech(0.0, mode) == approx(-2 / omega, rel=1e-15)
        assert chi_mech(omega, mode) == approx(-2j / mode.intrinsic_linewidth, rel=1e-12)
        nu = np.linspace(0.1, 2, 30) * omega
        np.testing.assert_allclose(chi_mech(-nu, mode), np.conj(chi_mech(nu, mode)), rtol=1e-14)

    def test_multimode_single_mode_is_bare(self, device):
        nu = np.linspace(0.5, 1.5, 101) * device.fundamental.resonance_frequency
        np.testing.assert_array_equal(chi_mech_multimode(nu, device.modes), chi_mech(nu, device.fundamental))

    def test_multimode_identical_modes_double(self):
        mode = MechMode(10.0, 0.1, 1.0)
        nu = np.linspace(1, 20, 40)
        np.testing.assert_allclose(chi_mech_multimode(nu, [mode, mode]), 2 * chi_mech(nu, mode), rtol=1e-15)

    def test_multimode_weighted_sum(self, multimode):
        nu = np.linspace(0.2, 3.0, 301) * multimode.fundamental.resonance_frequency
        g0_1 = multimode.fundamental.single_photon_coupling
        expected = sum((mode.single_photon_coupling / g0_1) ** 2 * chi_mech(nu, mode) for mode in multimode.modes)
        np.testing.assert_allclose(chi_mech_multimode(nu, multimode.modes), expected, rtol=1e-12)

    def test_multimode_needs_coupled_fundamental(self):
        with pytest.raises(ValueError):
            chi_mech_multimode(1.0, [MechMode(10.0, 0.1, 0.0), MechMode(20.0, 0.1, 1.0)])


class TestEffectiveSusceptibilities:

    def test_no_drive_reduces_to_bare(self, device):
        drive = DriveState.red_sideband(device, 0.0)
        omega = device.cavity.resonance_frequency + np.linspace(-5, 5, 201) * device.cavity.total_linewidth
        np.testing.assert_allclose(chi_cavity_effective(omega, device, drive), chi_cavity(omega, device.cavity),
                                   rtol=1e-14)
        nu = np.linspace(0.5, 1.5, 201) * device.fundamental.resonance_frequency
        np.testing.assert_array_equal(chi_mech_effective(nu, device, drive), chi_mech_multimode(nu, device.modes))

    def test_quality_factor_at_zero_coupling(self, device):
        drive = DriveState.red_sideband(device, 0.0)
        value = normalized_mech_susceptibility(device.fundamental.resonance_frequency, device, drive)
        assert abs(value) == approx(device.fundamental.quality_factor, rel=1e-12)
        assert abs(value) == approx(312774, rel=1e-5)

    def test_weak_coupling_feature_width(self):
        system = make_device()
        drive = drive_at(system, 20e3)
        omega = system.fundamental.resonance_frequency
        nu = omega + TWO_PI * np.linspace(-10e3, 10e3, 20001)
        power = np.abs(chi_mech_effective(nu, system, drive)) ** 2
        above = nu[power >= power.max() / 2]
        width = (above[-1] - above[0]) / TWO_PI
        expected = 31.0 + 4 * 20e3 ** 2 / KAPPA
        assert width == approx(expected, rel=0.02)

    def test_counter_rotating_term(self, device):
        kappa = device.cavity.total_linewidth

        def without_conjugate(system, drive, omega):
            nu = omega - drive.drive_frequency
            mechanical = 1 / chi_mech_multimode(nu, system.modes)
            return 1 / (nu + drive.detuning + 0.5j * kappa - drive.coupling ** 2 / mechanical)

        def relative_change(g_hz):
            drive = drive_at(device, g_hz)
            omega = drive.cavity_frequency + kappa
            full = chi_cavity_effective(omega, device, drive)
            return abs(full - without_conjugate(device, drive, omega)) / abs(full)

        assert relative_change(KAPPA / 4) < 1e-3
        assert relative_change(9.696e6 / 2.5) > 0.1

    def test_coupling_matrix_inverse(self):
        system = make_device()
        drive = drive_at(system, 0.9e6)
        omega = system.fundamental.resonance_frequency
        for nu in (0.9 * omega, 1.1 * omega):
            inverse = np.linalg.inv(mode_coupling_matrix(nu, system, drive))
            assert inverse[0, 0] == approx(chi_cavity_effective(drive.drive_frequency + nu, system, drive), rel=1e-9)
            assert inverse[1, 1] == approx(chi_mech_effective(nu, system, drive), rel=1e-9)

    def test_finite_everywhere(self, multimode):
        drive = drive_at(multimode, G_MAX)
        omega = multimode.fundamental.resonance_frequency
        frequencies = drive.drive_frequency + rng.uniform(-3 * omega, 3 * omega, 10 ** 6)
        assert np.all(np.isfinite(chi_cavity_effective(frequencies, multimode, drive)))
        assert np.all(np.isfinite(chi_mech_effective(frequencies - drive.drive_frequency, multimode, drive)))

    def test_higher_modes_without_coupling_change_nothing(self):
        single = make_device()
        uncoupled = make_multimode(weights=[0.0, 0.0, 0.0, 0.0])
        drive_single = drive_at(single, 1e6)
        drive_multi = drive_at(uncoupled, 1e6)
        grid = default_grid(single, drive_single)
        np.testing.assert_allclose(transmission(grid, uncoupled, drive_multi),
                                   transmission(grid, single, drive_single), rtol=1e-14)

    def test_ultrastrong_mechanical_response_shape(self, device):
        drive = drive_at(device, G_MAX)
        omega = device.fundamental.resonance_frequency
        kappa = device.cavity.total_linewidth
        nu = np.linspace(0, 2 * omega, 4001)
        magnitude = np.abs(normalized_mech_susceptibility(nu, device, drive))
        peaks, _ = find_peaks(magnitude, prominence=0.2 * magnitude.max())
        assert peaks.size == 2
        eigen = eigenvalues_closed_form(device, drive)
        assert nu[peaks[0]] == approx(eigen.omega_minus, abs=kappa / 2)
        assert nu[peaks[1]] == approx(eigen.omega_plus, abs=kappa / 2)
        heights = magnitude[peaks]
        assert max(heights) / min(heights) > 1.2
        assert magnitude[0] > 1


class TestTransmission:

    def test_bare_peak(self, device):
        drive = DriveState.red_sideband(device, 0.0)
        peak = abs(transmission(device.cavity.resonance_frequency, device, drive))
        cavity = device.cavity
        assert peak == approx(2 * math.sqrt(cavity.port1_coupling * cavity.port2_coupling) / cavity.total_linewidth,
                              rel=1e-12)
        assert peak == approx(0.276, abs=1e-3)
        far = abs(transmission(cavity.resonance_frequency + 1000 * cavity.total_linewidth, device, drive))
        assert far < 1e-3

    def test_needs_both_ports(self):
        system = make_device(kappa_2=0.0)
        with pytest.raises(ValueError):
            transmission(system.cavity.resonance_frequency, system, DriveState.red_sideband(system, 0.0))

    def test_trace_samples_pointwise(self, device):
        drive = drive_at(device, 1e6)
        grid = drive.cavity_frequency + np.array([-1.0, 0.0, 1.0]) * device.cavity.total_linewidth
        sampled = trace(device, drive, grid)
        assert len(sampled) == 3
        for frequency, value in zip(grid, sampled.values):
            assert value == approx(transmission(frequency, device, drive), rel=1e-15)
        assert sampled.metadata["photon_number"] == drive.photon_number
        assert sampled.metadata["drive_frequency"] == drive.drive_frequency

    def test_trace_rejects_bad_grids(self, device):
        drive = DriveState.red_sideband(device, 0.0)
        with pytest.raises(ValueError):
            trace(device, drive, [])
        with pytest.raises(ValueError):
            trace(device, drive, [2.0, 1.0])
        with pytest.raises(ValueError):
            trace(device, drive, [1.0, 1.0])

    def test_trace_arrays_are_read_only(self, device):
        drive = DriveState.red_sideband(device, 0.0)
        sampled = trace(device, drive, default_grid(device, drive, 11))
        with pytest.raises(ValueError):
            sampled.values[0] = 0

    def test_complex_trace_validation(self):
        with pytest.raises(ValueError):
            ComplexTrace("voltage", [1.0], [1.0])
        with pytest.raises(ValueError):
            ComplexTrace("transmission", [1.0, 2.0], [1.0])

    def test_default_grid_covers_features(self, device):
        drive = drive_at(device, 50e3)
        grid = default_grid(device, drive)
        assert np.all(np.diff(grid) > 0)
        kappa = device.cavity.total_linewidth
        assert grid[0] < drive.cavity_frequency - 2 * kappa
        assert grid[-1] > drive.cavity_frequency + 2 * kappa
        feature = drive.drive_frequency + device.fundamental.resonance_frequency
        near = grid[np.abs(grid - feature) < TWO_PI * 5e3]
        assert near.size > 50


class TestReconstruction:

    @pytest.mark.parametrize("g_hz", [0.9e6, G_MAX])
    def test_recovers_mechanical_response(self, device, g_hz):
        drive = drive_at(device, g_hz)
        omega = device.fundamental.resonance_frequency
        grid = drive.drive_frequency + np.linspace(-0.5, 2.0, 2001) * omega
        reconstructed = reconstruct_chi_m(trace(device, drive, grid), device, drive)
        np.testing.assert_allclose(reconstructed.frequencies, grid - drive.drive_frequency)
        np.testing.assert_allclose(reconstructed.values,
                                   normalized_mech_susceptibility(reconstructed.frequencies, device, drive), rtol=1e-8)

    def test_weak_drive_returns_bare_response(self, device):
        drive = DriveState.red_sideband(device, 1e-2)
        mode = device.fundamental
        grid = drive.drive_frequency + mode.resonance_frequency + np.linspace(-5, 5, 201) * mode.intrinsic_linewidth
        reconstructed = reconstruct_chi_m(trace(device, drive, grid), device, drive)
        bare = mode.resonance_frequency * chi_mech(reconstructed.frequencies, mode) / 2
        np.testing.assert_allclose(reconstructed.values, bare, rtol=1e-3)
        assert np.max(np.abs(reconstructed.values)) == approx(mode.quality_factor, rel=1e-3)

    def test_zero_coupling_rejected(self, device):
        drive = DriveState.red_sideband(device, 0.0)
        sampled = trace(device, drive, default_grid(device, drive, 11))
        with pytest.raises(ValueError):
            reconstruct_chi_m(sampled, device, drive)

    def test_mechanical_trace_quantity(self, device):
        drive = drive_at(device, 1e6)
        sampled = mech_trace(device, drive, np.linspace(1.0, 2.0, 5) * device.fundamental.resonance_frequency)
        with pytest.raises(ValueError):
            reconstruct_chi_m(sampled, device, drive)
