# DrivePointSection Class
# One drive point of a power sweep. Sections are built by the sweep command and run in order.

# Libraries
import copy

import numpy as np

# Local imports
from classes.optomechanics.core import OptomechSystem
from classes.optomechanics.fit import synthesize
from classes.optomechanics.response import ComplexTrace, trace
from classes.utilities.settings import build_drive, build_grid, build_noise


class Section:
    def __init__(self,
                 name: str,  # Name shown in the progress output
                 data: dict) -> None:  # Row of bookkeeping values owned by the section
        self.name = name
        self.data = data

    def run(self):
        """Runs the section and returns its product (or None)"""
        raise NotImplementedError


class DrivePointSection(Section):
    """Synthesizes the transmission trace of one photon number from the command's settings"""

    def __init__(self, name: str, settings: dict, system: OptomechSystem, photon_number: float, index: int) -> None:
        super().__init__(name, data={"photon_number": float(photon_number), "index": index})
        self.settings = copy.deepcopy(settings)
        self.settings["drive"]["photon_number"] = float(photon_number)
        # consecutive seeds keep the points independent and the sweep reproducible
        self.settings["noise"]["seed"] = settings["noise"]["seed"] + index
        self.system = system

    def run(self) -> ComplexTrace:
        drive = build_drive(self.settings, self.system)
        grid = build_grid(self.settings, self.system, drive)
        scale = float(np.max(np.abs(trace(self.system, drive, grid).values)))
        noise = build_noise(self.settings, scale)
        self.data["points"] = grid.size
        self.data["sigma"] = noise.sigma
        return synthesize(self.system, drive, grid, noise)
