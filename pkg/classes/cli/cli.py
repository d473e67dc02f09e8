# Command line front end
# Exit codes: 0 success, 2 parse error, 3 invariant violation, 4 solver failure.

# Libraries
import argparse
import logging
import sys
from typing import List, Optional

# Local imports
from classes.cli.command import (EigenCommand, FitCommand, ReconstructCommand, RegimeCommand, SimulateCommand,
                                 SweepCommand)
from classes.optomechanics.errors import SettingsError, SolverError
from classes.utilities.settings import load_settings

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INVARIANT = 3
EXIT_SOLVER = 4


def parse_grid(text: str):
    """'start,stop,points' with start and stop in Hz"""
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("grid must be start,stop,points")
    try:
        start, stop, points = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as error:
        raise argparse.ArgumentTypeError(f"grid must be start,stop,points: {error}")
    if points < 1 or not stop > start:
        raise argparse.ArgumentTypeError("grid needs stop > start and points >= 1")
    return start, stop, points


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config merged over the bundled defaults")
    common.add_argument("--out", help="output file")
    common.add_argument("--seed", type=int, help="noise seed")
    common.add_argument("--grid", type=parse_grid, help="absolute frequency grid start,stop,points in Hz")
    common.add_argument("--track-detuning", action="store_true", help="keep the drive on the shifted red sideband")
    common.add_argument("--modes", type=int, help="use only the lowest N mechanical modes")
    common.add_argument("--photon-number", type=float, help="intracavity photon number of the drive")
    common.add_argument("--magnitude-only", action="store_true", help="fit |T| instead of the complex trace")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="run_optomech", description="Linearized cavity optomechanics toolkit")
    subparsers = parser.add_subparsers(dest="command", required=True)
    subparsers.add_parser("simulate", parents=[common], help="write a transmission trace")
    subparsers.add_parser("eigen", parents=[common], help="eigenfrequencies versus coupling")
    subparsers.add_parser("regime", parents=[common], help="coupling regime report and boundary tables")
    for name, text in (("fit", "fit a transmission trace"), ("reconstruct", "infer the mechanical susceptibility")):
        sub = subparsers.add_parser(name, parents=[common], help=text)
        sub.add_argument("trace", help="trace file")
    subparsers.add_parser("sweep", parents=[common], help="synthesize and fit a drive-power series")
    return parser


def apply_overrides(settings: dict, args: argparse.Namespace) -> dict:
    """Folds command line flags into the merged settings"""
    if args.seed is not None:
        if args.seed < 0:
            raise SettingsError("seed must be >= 0", key="--seed")
        settings["noise"]["seed"] = args.seed
    if args.grid is not None:
        start, stop, points = args.grid
        settings["grid"].update({"frame": "absolute", "start_hz": start, "stop_hz": stop, "points": points})
    if args.track_detuning:
        settings["drive"]["track_detuning"] = True
    if args.photon_number is not None:
        settings["drive"]["photon_number"] = args.photon_number
    if args.modes is not None:
        modes = settings["system"]["modes"]
        if not 1 <= args.modes <= len(modes):
            raise SettingsError(f"--modes must be between 1 and {len(modes)}", key="--modes")
        settings["system"]["modes"] = modes[:args.modes]
    if args.magnitude_only:
        settings["fit"]["magnitude_only"] = True
    return settings


def make_command(args: argparse.Namespace, settings: dict):
    if args.command == "simulate":
        return SimulateCommand(settings, args.out)
    if args.command == "eigen":
        return EigenCommand(settings, args.out)
    if args.command == "regime":
        return RegimeCommand(settings, args.out)
    if args.command == "fit":
        return FitCommand(settings, args.trace, args.out)
    if args.command == "reconstruct":
        return ReconstructCommand(settings, args.trace, args.out)
    return SweepCommand(settings, args.out)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return EXIT_PARSE if exit_.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = apply_overrides(load_settings(args.config), args)
        make_command(args, settings).run()
    except SettingsError as error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_PARSE
    except SolverError as error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK
