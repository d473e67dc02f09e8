# Entry point of the optomechanics command line, e.g.
#   python run_optomech.py simulate --config configs/measured_device.json --photon-number 3e6 --track-detuning --out trace.csv

# Libraries
import sys

# Local imports
from classes.cli.cli import main

# Run the command
sys.exit(main())
