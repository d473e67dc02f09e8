# Command classes of the optomechanics command line
# Every command prepares the system from settings, runs its sections, executes its computation
# and finalizes by writing its output file and printing a one-line JSON summary.

# Libraries
from collections import OrderedDict
import json
import logging
import math
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

# Local imports
from classes.cli.sweep_section import DrivePointSection, Section
from classes.optomechanics.errors import SettingsError
from classes.optomechanics.fit import fit, power_sweep_extract, synthesize
from classes.optomechanics.response import reconstruct_chi_m, trace
from classes.optomechanics.core import DriveState
from classes.optomechanics.spectrum import (classify_regime, device_trajectory, eigen_sweep, instability_threshold,
                                            regime_boundaries, trajectory_crossings)
from classes.utilities.settings import build_drive, build_fit_config, build_grid, build_noise, build_system
from classes.utilities.tracefile import TraceFile
from classes.utilities.utilities import Utilities

logger = logging.getLogger(__name__)


class Command:
    def __init__(self,
                 name: str,  # Name of the command
                 settings: dict,  # Merged settings (bundled defaults plus user config)
                 output_path: Optional[str] = None) -> None:
        self.name = name
        self.settings = settings
        self.output_path = Path(output_path) if output_path is not None else None
        self.summary = OrderedDict(command=name)
        self.sections: List[Section] = []
        self.section_results = []

    def setup_sections(self) -> None:
        """Sets the sections of the command; most commands have none"""
        self.sections = []

    def require_output(self) -> Path:
        if self.output_path is None:
            raise SettingsError(f"the {self.name} command needs --out")
        return self.output_path

    def write_table(self, table: pd.DataFrame, path: Optional[Path] = None) -> None:
        """Writes a table as CSV to path (default: the output path) or to standard output"""
        text = table.to_csv(index=False)
        path = path or self.output_path
        if path is None:
            print(text, end="")
        else:
            Utilities.atomic_write_text(path, text)

    def prepare_command(self) -> None:
        """Functions that should be run before the section loop"""
        print("Building system...")
        self.system = build_system(self.settings)
        self.setup_sections()

    def execute(self) -> None:
        """Main computation of the command"""
        raise NotImplementedError

    def finalize_command(self) -> None:
        """Prints the summary record"""
        print(json.dumps(Utilities.json_safe(self.summary), sort_keys=True))

    def run(self) -> dict:
        """Prepares, runs, and finalizes the command"""
        # Prepare
        self.prepare_command()

        # Run
        if self.sections:
            print("Running through sections...")
        for section in self.sections:
            print(section.name)
            self.section_results.append(section.run())
        self.execute()

        # Finalize
        self.finalize_command()
        return self.summary


def _hz(value: float) -> float:
    return value / (2 * math.pi)


class SimulateCommand(Command):
    def __init__(self, settings: dict, output_path: Optional[str] = None) -> None:
        super().__init__("simulate", settings, output_path)

    def execute(self) -> None:
        path = self.require_output()
        drive = build_drive(self.settings, self.system)
        grid = build_grid(self.settings, self.system, drive)
        print("Simulating transmission...")
        scale = float(np.max(np.abs(trace(self.system, drive, grid).values)))
        noise = build_noise(self.settings, scale)
        simulated = synthesize(self.system, drive, grid, noise)
        TraceFile.write(path, simulated)
        report = classify_regime(self.system, drive)
        self.summary.update({
            "photon_number": drive.photon_number,
            "g_hz": _hz(drive.coupling),
            "detuning_hz": _hz(drive.detuning),
            "drive_frequency_hz": _hz(drive.drive_frequency),
            "cavity_frequency_hz": _hz(drive.cavity_frequency),
            "regime": report.label,
            "near_boundary": report.near_boundary,
            "points": len(simulated),
            "sigma": noise.sigma,
            "seed": noise.seed,
            "peak_magnitude": float(np.max(np.abs(simulated.values))),
            "output": str(path),
        })


class EigenCommand(Command):
    def __init__(self, settings: dict, output_path: Optional[str] = None) -> None:
        super().__init__("eigen", settings, output_path)

    def execute(self) -> None:
        eigen = self.settings["eigen"]
        if not isinstance(eigen["points"], int) or eigen["points"] < 1:
            raise SettingsError("points must be a positive integer", key="eigen.points")
        couplings = np.linspace(Utilities.hz_to_rad(eigen["coupling_start_hz"]),
                                Utilities.hz_to_rad(eigen["coupling_stop_hz"]), eigen["points"])
        print("Solving eigenfrequencies...")
        table = eigen_sweep(self.system, couplings)
        self.write_table(table)
        kappa = self.system.cavity.total_linewidth
        omega = self.system.fundamental.resonance_frequency
        self.summary.update({
            "rows": len(table),
            "critical_coupling_hz": _hz(instability_threshold(-omega, kappa, omega)),
            "max_stable_splitting_hz": float(table.loc[table["stable"], "splitting_hz"].max())
            if table["stable"].any() else None,
        })


class RegimeCommand(Command):
    def __init__(self, settings: dict, output_path: Optional[str] = None) -> None:
        super().__init__("regime", settings, output_path)

    def execute(self) -> None:
        regime = self.settings["regime"]
        drive = build_drive(self.settings, self.system)
        report = classify_regime(self.system, drive)
        self.summary.update({"photon_number": drive.photon_number, "g_hz": _hz(drive.coupling)})
        self.summary.update(report.to_dict())
        crossings = trajectory_crossings(self.system, regime["deviation_threshold"])
        self.summary["crossings"] = dict(sorted(crossings.items()))
        if self.output_path is None:
            return
        print("Writing regime boundaries...")
        boundaries = regime_boundaries(self.system, (regime["kappa_ratio_start"], regime["kappa_ratio_stop"]),
                                       regime["points"])
        self.write_table(boundaries)
        photon_numbers = np.logspace(math.log10(regime["photon_number_start"]),
                                     math.log10(regime["photon_number_stop"]), regime["trajectory_points"])
        trajectory = device_trajectory(self.system, photon_numbers, regime["deviation_threshold"])
        trajectory_path = self.output_path.with_name(f"{self.output_path.stem}_trajectory.csv")
        self.write_table(trajectory, trajectory_path)
        self.summary["trajectory"] = str(trajectory_path)


class FitCommand(Command):
    def __init__(self, settings: dict, trace_path: str, output_path: Optional[str] = None) -> None:
        super().__init__("fit", settings, output_path)
        self.trace_path = trace_path

    def execute(self) -> None:
        measured = TraceFile.read(self.trace_path)
        config = build_fit_config(self.settings)
        print("Fitting transmission...")
        result = fit(measured, self.system, config)
        record = result.to_record()
        if self.output_path is not None:
            Utilities.atomic_write_text(self.output_path, Utilities.dump_record(record))
        self.summary.update({
            "converged": result.converged,
            "cost": result.cost,
            "iterations": result.iterations,
            "g_hz": record["parameters"]["coupling"],
            "g_sigma_hz": record["sigmas"].get("coupling"),
            "splitting_hz": record["derived"]["splitting_hz"],
            "message": result.message,
        })
        self.result = result

    def finalize_command(self) -> None:
        super().finalize_command()
        self.result.raise_for_status()


class ReconstructCommand(Command):
    def __init__(self, settings: dict, trace_path: str, output_path: Optional[str] = None) -> None:
        super().__init__("reconstruct", settings, output_path)
        self.trace_path = trace_path

    def execute(self) -> None:
        path = self.require_output()
        measured = TraceFile.read(self.trace_path)
        if "drive_frequency" in measured.metadata and "photon_number" in measured.metadata:
            drive = DriveState.from_system(self.system, measured.metadata["photon_number"],
                                           measured.metadata["drive_frequency"])
        else:
            drive = build_drive(self.settings, self.system)
        print("Reconstructing mechanical susceptibility...")
        chi_m = reconstruct_chi_m(measured, self.system, drive)
        TraceFile.write(path, chi_m)
        magnitude = np.abs(chi_m.values)
        self.summary.update({
            "g_hz": _hz(drive.coupling),
            "peak_magnitude": float(np.max(magnitude)),
            "peak_frequency_hz": _hz(float(chi_m.frequencies[np.argmax(magnitude)])),
            "magnitude_near_zero": float(magnitude[np.argmin(np.abs(chi_m.frequencies))]),
            "output": str(path),
        })


class SweepCommand(Command):
    def __init__(self, settings: dict, output_path: Optional[str] = None) -> None:
        super().__init__("sweep", settings, output_path)

    def setup_sections(self) -> None:
        """One section per configured photon number, in increasing order"""
        photon_numbers = sorted(float(n) for n in self.settings["sweep"]["photon_numbers"])
        self.sections = [DrivePointSection(f"n_d = {n:g}", self.settings, self.system, n, i)
                         for i, n in enumerate(photon_numbers)]

    def execute(self) -> None:
        if not self.sections:
            raise SettingsError("sweep needs at least one photon number", key="sweep.photon_numbers")
        traces = [(section.data["photon_number"], result) for section, result in zip(self.sections, self.section_results)]
        print("Fitting sweep...")
        table = power_sweep_extract(traces, self.system, build_fit_config(self.settings),
                                    warm_start=self.settings["sweep"]["warm_start"])
        self.write_table(table)
        self.summary.update({
            "points": len(table),
            "converged": int(table["converged"].sum()),
            "regimes": list(table["regime"].fillna("")),
        })
