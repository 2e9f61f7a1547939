"""Simulator for manybody Ramsey interferometry on a Bose-Hubbard chain."""

__version__ = "0.1.0"

from .fock import SectorBasis, enumerate_basis, sector_dimension
from .hamiltonian import LatticeSpec, ModulationSpec, Schedule, build_hamiltonian, preset
from .dynamics import StateVector, evolve, instantaneous_eigensystem, top_state
from .protocol import (
    RamseyConfig,
    number_superposition_config,
    run_manybody_ramsey,
    run_volume_ramsey,
    volume_superposition_config,
)
from .spectro import fft_spectrum, find_dominant_peak, find_peaks, ramp_scan
from .thermo import FermionModel, ThermoPoint, extract_mu, extract_pressure, ff_mu, ff_pressure
