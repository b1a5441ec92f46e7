"""Domain types and link-budget arithmetic.

Modulation formats, FEC overhead/threshold bookkeeping, the WDM grid,
the fiber dispersion model and the uncooled-laser temperature model.
Everything here is immutable and cheap; the heavy lifting lives in the
DSP modules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

# speed of light in nm * THz
C_NM_THZ = 299_792.458
# speed of light in m/s
C_M_S = 299_792_458.0

WAVELENGTH_RANGE_NM = (1200.0, 1400.0)


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    return 10.0 * math.log10(mw)


# ---------------------------------------------------------------------------
# Modulation
# ---------------------------------------------------------------------------

_PAM_ORDERS = {"PAM4": 4, "PAM6": 6, "PAM8": 8}


def _pam6_pair_energy_scale() -> float:
    raw = np.arange(1, 7) * 2.0 - 7.0
    a, b = np.meshgrid(raw, raw, indexing="ij")
    energy = (a**2 + b**2).ravel()
    # the four corner pairs carry the largest energy and are never sent
    kept = np.sort(energy)[:32]
    return math.sqrt(kept.mean() / 2.0)


@dataclass(frozen=True)
class ModulationFormat:
    """PAM-M alphabet with unit average power.

    ``levels`` are ordered from most negative to most positive. PAM6 is
    normalized over the 32 pairs actually used by the 5-bit/2-symbol code,
    not over the full 6x6 grid.
    """

    name: str
    levels: tuple[float, ...]
    bits_per_symbol: Fraction

    @classmethod
    def from_name(cls, name: str) -> "ModulationFormat":
        key = name.upper()
        if key not in _PAM_ORDERS:
            raise ValueError(f"unknown modulation format {name!r}; expected one of {sorted(_PAM_ORDERS)}")
        m = _PAM_ORDERS[key]
        raw = np.arange(1, m + 1) * 2.0 - m - 1
        if m == 6:
            scale = _pam6_pair_energy_scale()
            bps = Fraction(5, 2)
        else:
            scale = math.sqrt((m * m - 1) / 3.0)
            bps = Fraction(int(math.log2(m)))
        return cls(key, tuple(float(v) for v in raw / scale), bps)

    @property
    def order(self) -> int:
        return len(self.levels)

    @property
    def level_array(self) -> np.ndarray:
        return np.asarray(self.levels)

    @property
    def min_distance(self) -> float:
        return self.levels[1] - self.levels[0]


PAM4 = ModulationFormat.from_name("PAM4")
PAM6 = ModulationFormat.from_name("PAM6")
PAM8 = ModulationFormat.from_name("PAM8")


# ---------------------------------------------------------------------------
# FEC ledger
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FecCode:
    name: str
    overhead: float
    ber_threshold: float

    def __post_init__(self):
        if not self.overhead > 0:
            raise ValueError(f"FEC {self.name}: overhead must be positive, got {self.overhead}")
        if not 0 < self.ber_threshold < 0.5:
            raise ValueError(f"FEC {self.name}: BER threshold must lie in (0, 0.5), got {self.ber_threshold}")

    @property
    def overhead_pct(self) -> float:
        return round(self.overhead * 100, 4)


# KP4's 2.2e-4 is the usual IEEE 802.3 pre-FEC figure; every other entry
# pairs an overhead with the threshold it was quoted against.
DEFAULT_FEC_LEDGER: tuple[FecCode, ...] = (
    FecCode("KP4", 0.058, 2.2e-4),
    FecCode("HD-FEC", 0.07, 4.5e-3),
    FecCode("SD-FEC-20", 0.20, 2.4e-2),
    FecCode("SD-FEC-25", 0.25, 5.0e-2),
)


def select_fec(ber: float, ledger: Sequence[FecCode] = DEFAULT_FEC_LEDGER) -> Optional[FecCode]:
    """Return the cheapest code that corrects ``ber``.

    ``None`` means the link is unrecoverable with every code in the ledger;
    callers are expected to report it as such.
    """
    if not ledger:
        raise ValueError("FEC ledger is empty")
    if not 0 <= ber <= 1 or math.isnan(ber):
        raise ValueError(f"BER must be a probability, got {ber}")
    usable = [code for code in ledger if ber <= code.ber_threshold]
    if not usable:
        return None
    return min(usable, key=lambda code: code.overhead)


def truncate(value: float, step: float) -> float:
    """Round ``value`` down onto a ``step`` grid (tolerating float fuzz)."""
    n = math.floor(value / step + 1e-9)
    return round(n * step, 10)


def net_rate(symbol_rate_gbd: float, modulation: ModulationFormat, fec: FecCode) -> float:
    """Post-FEC line rate in Gb/s, truncated to 0.1 Gb/s.

    Truncation never overstates the rate; it also lands exactly on the
    customary figures (450 / 1.07 = 420.56 -> 420.5).
    """
    raw = symbol_rate_gbd * float(modulation.bits_per_symbol) / (1.0 + fec.overhead)
    return truncate(raw, 0.1)


def aggregate_rate_tbps(lane_rate_gbps: float, lanes: int) -> float:
    return truncate(lane_rate_gbps * lanes / 1000.0, 0.01)


# ---------------------------------------------------------------------------
# WDM grid and fiber
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WdmChannel:
    index: int
    frequency_thz: float
    wavelength_nm: float


@dataclass(frozen=True)
class WdmChannelPlan:
    channels: tuple[WdmChannel, ...]

    def __len__(self) -> int:
        return len(self.channels)

    def __getitem__(self, index: int) -> WdmChannel:
        # 1-based, like the channel labels
        if not 1 <= index <= len(self.channels):
            raise IndexError(f"channel {index} outside plan 1..{len(self.channels)}")
        return self.channels[index - 1]

    @property
    def wavelengths_nm(self) -> np.ndarray:
        return np.array([ch.wavelength_nm for ch in self.channels])

    def nearest(self, wavelength_nm: float) -> WdmChannel:
        return min(self.channels, key=lambda ch: abs(ch.wavelength_nm - wavelength_nm))


def build_wdm_grid(start_wavelength_nm: float, spacing_ghz: float, count: int) -> WdmChannelPlan:
    """Uniform frequency grid starting at ``start_wavelength_nm``.

    Channel 1 sits at the start wavelength and each following channel is
    one spacing lower in frequency (longer wavelength). Wavelengths keep
    full precision; round only for display.
    """
    if count < 1:
        raise ValueError(f"channel count must be >= 1, got {count}")
    if not spacing_ghz > 0:
        raise ValueError(f"channel spacing must be positive, got {spacing_ghz} GHz")
    lo, hi = WAVELENGTH_RANGE_NM
    if not lo < start_wavelength_nm < hi:
        raise ValueError(f"start wavelength {start_wavelength_nm} nm outside ({lo}, {hi}) nm")
    f1 = C_NM_THZ / start_wavelength_nm
    channels = []
    for k in range(1, count + 1):
        f = f1 - (k - 1) * spacing_ghz * 1e-3
        if f <= 0:
            raise ValueError("grid runs past zero frequency")
        channels.append(WdmChannel(k, f, C_NM_THZ / f))
    return WdmChannelPlan(tuple(channels))


@dataclass(frozen=True)
class FiberSpec:
    length_km: float = 0.0
    zero_dispersion_wavelength_nm: float = 1310.0
    dispersion_slope_ps_nm2_km: float = 0.092
    loss_db_per_km: float = 0.32

    def __post_init__(self):
        if self.length_km < 0:
            raise ValueError(f"fiber length must be >= 0, got {self.length_km}")
        if not self.dispersion_slope_ps_nm2_km > 0:
            raise ValueError("dispersion slope must be positive")
        if self.loss_db_per_km < 0:
            raise ValueError("fiber loss must be >= 0")

    @property
    def loss_db(self) -> float:
        return self.length_km * self.loss_db_per_km


def dispersion_parameter(wavelength_nm: float, fiber: FiberSpec) -> float:
    """Chromatic dispersion in ps/(nm km) from the G.652 slope model."""
    lo, hi = WAVELENGTH_RANGE_NM
    if not lo < wavelength_nm < hi:
        raise ValueError(f"wavelength {wavelength_nm} nm outside ({lo}, {hi}) nm")
    l0 = fiber.zero_dispersion_wavelength_nm
    return fiber.dispersion_slope_ps_nm2_km / 4.0 * (wavelength_nm - l0**4 / wavelength_nm**3)


# ---------------------------------------------------------------------------
# Laser
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LaserSpec:
    """DFB laser with a linear wavelength-vs-temperature calibration.

    The two anchors default to the measured uncooled QD DFB points
    (30 C -> 1308.3 nm, 85 C -> 1315.7 nm). Output power wobbles with
    temperature as a sinusoid of ``power_ripple_db`` peak-to-peak.
    """

    power_dbm: float = 9.0
    wavelength_nm: float = 1310.0
    cal_low_temperature_c: float = 30.0
    cal_low_wavelength_nm: float = 1308.3
    cal_high_temperature_c: float = 85.0
    cal_high_wavelength_nm: float = 1315.7
    power_ripple_db: float = 0.8
    ripple_period_c: float = 27.5

    def __post_init__(self):
        if not self.cal_high_temperature_c > self.cal_low_temperature_c:
            raise ValueError("calibration temperatures must be strictly increasing")
        if not self.cal_high_wavelength_nm > self.cal_low_wavelength_nm:
            raise ValueError("calibration wavelengths must increase with temperature")
        if self.power_ripple_db < 0:
            raise ValueError("power ripple must be >= 0")
        if not self.ripple_period_c > 0:
            raise ValueError("ripple period must be positive")

    @property
    def tuning_nm_per_c(self) -> float:
        return (self.cal_high_wavelength_nm - self.cal_low_wavelength_nm) / (
            self.cal_high_temperature_c - self.cal_low_temperature_c
        )

    def _check_temperature(self, temperature_c: float) -> None:
        lo = self.cal_low_temperature_c - 20.0
        hi = self.cal_high_temperature_c + 20.0
        if not lo <= temperature_c <= hi:
            raise ValueError(f"temperature {temperature_c} C outside the model range [{lo}, {hi}] C")

    def power_at(self, temperature_c: float) -> float:
        """Laser output power (dBm) at ``temperature_c``."""
        self._check_temperature(temperature_c)
        phase = 2 * math.pi * (temperature_c - self.cal_low_temperature_c) / self.ripple_period_c
        return self.power_dbm + 0.5 * self.power_ripple_db * math.sin(phase)


def wavelength_from_temperature(temperature_c: float, laser: LaserSpec) -> float:
    laser._check_temperature(temperature_c)
    dt = temperature_c - laser.cal_low_temperature_c
    return laser.cal_low_wavelength_nm + dt * laser.tuning_nm_per_c


# ---------------------------------------------------------------------------
# Seeds
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    x = (x + _GOLDEN_GAMMA) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix_seed(base_seed: int, *indices: int) -> int:
    """Derive a child seed from ``base_seed`` and an index path.

    SplitMix64 folded over the indices; stable across platforms and
    Python versions, so sweep points reproduce regardless of scheduling.
    """
    x = splitmix64(base_seed & _MASK64)
    for i in indices:
        x = splitmix64(x ^ (i & _MASK64))
    return x


@dataclass(frozen=True)
class FecVerdict:
    code: Optional[FecCode]
    net_rate_gbps: Optional[float] = field(default=None)

    @property
    def recoverable(self) -> bool:
        return self.code is not None


def fec_verdict(ber: float, symbol_rate_gbd: float, modulation: ModulationFormat,
                ledger: Sequence[FecCode] = DEFAULT_FEC_LEDGER) -> FecVerdict:
    code = select_fec(ber, ledger)
    if code is None:
        return FecVerdict(None, None)
    return FecVerdict(code, net_rate(symbol_rate_gbd, modulation, code))
