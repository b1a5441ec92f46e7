"""Desk-scale simulator for high-baud PAM IM/DD links (single wavelength, WDM and DR8)."""

from .core import (
    DEFAULT_FEC_LEDGER,
    PAM4,
    PAM6,
    PAM8,
    FecCode,
    FiberSpec,
    LaserSpec,
    ModulationFormat,
    build_wdm_grid,
    dispersion_parameter,
    net_rate,
    select_fec,
    wavelength_from_temperature,
)
from .config import LinkConfig
from .harness import LinkResult, SweepSpec, run_dr8, run_link, run_wdm, sweep

__version__ = "0.1.0"
