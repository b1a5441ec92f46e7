"""Experiment description: everything a link run needs, with units in the field names."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .channel import MzmSpec, NoiseSpec, PdSpec, bessel_lowpass
from .core import DEFAULT_FEC_LEDGER, FecCode, FiberSpec, LaserSpec, ModulationFormat, wavelength_from_temperature
from .rxdsp import EqualizerConfig, EqualizerKind
from .signal import FrequencyResponse


class ConfigError(ValueError):
    """Validation failure carrying every problem found, not just the first."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class AnalogResponse:
    """One analog block: a Bessel-like roll-off, a flat line, a measured table,
    or an electrical reflection (echo of relative amplitude ``reflection``
    arriving ``echo_delay_ps`` after the main path, DC gain normalized to 1).
    """

    kind: str = "bessel"
    name: str = ""
    order: int = 2
    bandwidth_ghz: float = 110.0
    table_path: Optional[str] = None
    reflection: float = 0.0
    echo_delay_ps: float = 0.0

    def __post_init__(self):
        if self.kind not in ("bessel", "flat", "table", "echo"):
            raise ValueError(f"response kind must be bessel, flat, table or echo, got {self.kind!r}")
        if self.kind == "echo":
            if not -1 < self.reflection < 1:
                raise ValueError("echo reflection must lie in (-1, 1)")
            if self.echo_delay_ps < 0:
                raise ValueError("echo delay must be >= 0")
        if self.kind == "bessel":
            if not 1 <= self.order <= 8:
                raise ValueError("Bessel response order must be 1..8")
            if not self.bandwidth_ghz > 0:
                raise ValueError("response bandwidth must be positive")
        if self.kind == "table" and not self.table_path:
            raise ValueError("table response needs table_path")

    def build(self, f_max_ghz: float, base_dir: Optional[Path] = None) -> FrequencyResponse:
        if self.kind == "flat":
            return FrequencyResponse.flat(self.name)
        if self.kind == "bessel":
            return bessel_lowpass(self.order, self.bandwidth_ghz, f_max_ghz, name=self.name)
        if self.kind == "echo":
            r, tau = self.reflection, self.echo_delay_ps * 1e-3
            # dense grid: the ripple period is 1/tau GHz
            points = max(8193, int(40 * f_max_ghz * tau) + 1)
            f = np.linspace(0.0, f_max_ghz, points)
            return FrequencyResponse(f, (1 + r * np.exp(-2j * np.pi * f * tau)) / (1 + r), self.name or "echo")
        from .io import load_response_table

        path = Path(self.table_path)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return load_response_table(path)


def _default_tx_responses() -> tuple[AnalogResponse, ...]:
    return (
        AnalogResponse("bessel", "dac", 2, 110.0),
        AnalogResponse("bessel", "driver", 2, 105.0),
        AnalogResponse("bessel", "mzm", 2, 110.0),
    )


def _default_rx_responses() -> tuple[AnalogResponse, ...]:
    return (AnalogResponse("bessel", "scope", 4, 110.0),)


@dataclass(frozen=True)
class TxSettings:
    preemphasis: bool = True
    max_boost_db: float = 18.0
    clip_ratio: float = 2.5
    dac_bits: int = 7
    full_scale_vpp: float = 0.6
    driver_gain_db: float = 3.0
    responses: tuple[AnalogResponse, ...] = field(default_factory=_default_tx_responses)

    def __post_init__(self):
        if not self.clip_ratio > 0:
            raise ValueError("clip_ratio must be positive")
        if not 2 <= self.dac_bits <= 16:
            raise ValueError("dac_bits must be 2..16")
        if not self.full_scale_vpp > 0:
            raise ValueError("full_scale_vpp must be positive")
        if self.max_boost_db < 0:
            raise ValueError("max_boost_db must be >= 0")


@dataclass(frozen=True)
class ChannelSettings:
    mzm: MzmSpec = field(default_factory=MzmSpec)
    pd: PdSpec = field(default_factory=PdSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    rx_responses: tuple[AnalogResponse, ...] = field(default_factory=_default_rx_responses)
    optical_gain_db: float = 0.0
    soa_noise_sigma: float = 0.0
    rop_dbm: Optional[float] = None
    sim_oversampling: int = 4
    adc_rate_gsa: Optional[float] = 256.0

    def __post_init__(self):
        if self.sim_oversampling < 2:
            raise ValueError("sim_oversampling must be >= 2")
        if self.soa_noise_sigma < 0:
            raise ValueError("soa_noise_sigma must be >= 0")
        if self.adc_rate_gsa is not None and not self.adc_rate_gsa > 0:
            raise ValueError("adc_rate_gsa must be positive")


def _default_equalizers() -> tuple[EqualizerConfig, ...]:
    return (
        EqualizerConfig(EqualizerKind.FFE, 51, 0),
        EqualizerConfig(EqualizerKind.FFE_MLSE, 51, 0),
        EqualizerConfig(EqualizerKind.DFE, 51, 21),
        EqualizerConfig(EqualizerKind.DFE_MLSE, 51, 21),
    )


@dataclass(frozen=True)
class RxSettings:
    equalizers: tuple[EqualizerConfig, ...] = field(default_factory=_default_equalizers)


@dataclass(frozen=True)
class LinkConfig:
    modulation: str = "PAM4"
    symbol_rate_gbd: float = 225.0
    dac_rate_gsa: float = 225.0
    num_symbols: int = 65536
    seed: int = 7
    generator: str = "mt19937"
    laser_temperature_c: Optional[float] = None
    fiber: FiberSpec = field(default_factory=FiberSpec)
    laser: LaserSpec = field(default_factory=LaserSpec)
    tx: TxSettings = field(default_factory=TxSettings)
    channel: ChannelSettings = field(default_factory=ChannelSettings)
    rx: RxSettings = field(default_factory=RxSettings)
    fec_ledger: tuple[FecCode, ...] = DEFAULT_FEC_LEDGER

    def __post_init__(self):
        errors = self.problems()
        if errors:
            raise ConfigError(errors)

    def problems(self) -> list[str]:
        errors = []
        try:
            fmt = ModulationFormat.from_name(self.modulation)
        except ValueError as exc:
            errors.append(f"modulation: {exc}")
            fmt = None
        if not self.symbol_rate_gbd > 0:
            errors.append("symbol_rate_gbd: must be positive")
        if self.symbol_rate_gbd > self.dac_rate_gsa:
            errors.append(
                f"symbol_rate_gbd ({self.symbol_rate_gbd}) exceeds dac_rate_gsa ({self.dac_rate_gsa})")
        if self.num_symbols < 4096:
            errors.append(f"num_symbols: must be >= 4096, got {self.num_symbols}")
        if fmt is not None and fmt.order == 6 and self.num_symbols % 2:
            errors.append("num_symbols: PAM6 needs an even symbol count")
        if not 0 <= self.seed < 2**64:
            errors.append("seed: must be a 64-bit unsigned integer")
        if self.generator.lower() not in ("mt19937", "pcg64"):
            errors.append(f"generator: unknown generator {self.generator!r}")
        if not self.fec_ledger:
            errors.append("fec_ledger: must not be empty")
        if not self.rx.equalizers:
            errors.append("rx.equalizers: at least one equalizer is required")
        for i, eq in enumerate(self.rx.equalizers):
            if eq.training_symbols > self.num_symbols:
                errors.append(
                    f"rx.equalizers[{i}].training_symbols ({eq.training_symbols}) exceeds num_symbols ({self.num_symbols})")
        adc = self.channel.adc_rate_gsa
        if adc is not None and adc < self.symbol_rate_gbd:
            errors.append(f"channel.adc_rate_gsa ({adc}) is below symbol_rate_gbd ({self.symbol_rate_gbd})")
        if self.laser_temperature_c is not None:
            try:
                wavelength_from_temperature(self.laser_temperature_c, self.laser)
            except ValueError as exc:
                errors.append(f"laser_temperature_c: {exc}")
        return errors

    @property
    def format(self) -> ModulationFormat:
        return ModulationFormat.from_name(self.modulation)

    @property
    def wavelength_nm(self) -> float:
        if self.laser_temperature_c is not None:
            return wavelength_from_temperature(self.laser_temperature_c, self.laser)
        return self.laser.wavelength_nm

    @property
    def laser_power_dbm(self) -> float:
        if self.laser_temperature_c is not None:
            return self.laser.power_at(self.laser_temperature_c)
        return self.laser.power_dbm

    def evolve(self, **changes) -> "LinkConfig":
        return replace(self, **changes)
