"""Physical channel: analog responses, MZM, fiber dispersion, photodiode, noise."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .core import C_M_S, FiberSpec, dispersion_parameter
from .signal import FrequencyResponse, Waveform, apply_response, fft_frequencies

__all__ = [
    "MzmSpec", "PdSpec", "NoiseSpec",
    "bessel_polynomial", "bessel_lowpass", "design_bessel_thomson", "apply_response",
    "mzm_modulate", "dispersion_phase", "propagate_dispersion", "fading_nulls",
    "photodetect", "coloring_response", "add_noise", "apply_gain",
]


@dataclass(frozen=True)
class MzmSpec:
    v_pi_v: float = 2.0
    bias: float = 0.5
    insertion_loss_db: float = 0.0
    chirp_free: bool = True

    def __post_init__(self):
        if not self.v_pi_v > 0:
            raise ValueError("MZM V_pi must be positive")
        if not 0 < self.bias < 1:
            raise ValueError("MZM bias must be a fraction of V_pi in (0, 1)")
        if not self.chirp_free:
            raise ValueError("only chirp-free MZMs are modelled")


@dataclass(frozen=True)
class PdSpec:
    responsivity_a_per_w: float = 0.7
    bandwidth_ghz: float = 110.0
    order: int = 4

    def __post_init__(self):
        if not self.responsivity_a_per_w > 0:
            raise ValueError("PD responsivity must be positive")
        if not self.bandwidth_ghz > 0:
            raise ValueError("PD bandwidth must be positive")


@dataclass(frozen=True)
class NoiseSpec:
    """Receiver noise: white Gaussian, shaped by a resonant PSD bump.

    ``white_sigma`` is relative to the RMS of the received signal at
    ``reference_rop_dbm`` (or at whatever power arrives, if that is None).
    """

    white_sigma: float = 0.0
    coloring_peak_ghz: float = 110.0
    coloring_gain_db: float = 0.0
    coloring_q: float = 1.0
    reference_rop_dbm: float | None = None

    def __post_init__(self):
        if self.white_sigma < 0:
            raise ValueError("white_sigma must be >= 0")
        if not self.coloring_peak_ghz > 0:
            raise ValueError("coloring peak must be positive")
        if not self.coloring_q > 0:
            raise ValueError("coloring Q must be positive")


# ---------------------------------------------------------------------------
# Filters
# ---------------------------------------------------------------------------


def bessel_polynomial(order: int) -> np.ndarray:
    """Reverse Bessel polynomial coefficients, highest power first."""
    n = order
    coeffs = [
        math.factorial(2 * n - k) // (2 ** (n - k) * math.factorial(k) * math.factorial(n - k))
        for k in range(n + 1)
    ]
    return np.array(coeffs[::-1], dtype=float)


@lru_cache(maxsize=None)
def _bessel_3db_omega(order: int) -> float:
    poly = bessel_polynomial(order)

    def excess(w):
        return abs(poly[-1] / np.polyval(poly, 1j * w)) ** 2 - 0.5

    return brentq(excess, 1e-6, 10.0 * order + 10.0)


def bessel_lowpass(order: int, f3db_ghz: float, f_max_ghz: float, points: int = 8193,
                   name: str = "bessel") -> FrequencyResponse:
    """Analog Bessel low-pass sampled on [0, f_max_ghz], -3 dB at ``f3db_ghz``."""
    if not 1 <= order <= 8:
        raise ValueError(f"Bessel order must be 1..8, got {order}")
    if not f3db_ghz > 0:
        raise ValueError("cutoff must be positive")
    poly = bessel_polynomial(order)
    w3 = _bessel_3db_omega(order)
    f = np.linspace(0.0, f_max_ghz, points)
    s = 1j * w3 * f / f3db_ghz
    return FrequencyResponse(f, poly[-1] / np.polyval(poly, s), name)


def design_bessel_thomson(order: int, cutoff_ghz: float, sample_rate_gsa: float) -> FrequencyResponse:
    """Bessel-Thomson reference receiver filter, frequency-sampled to Nyquist."""
    if not 0 < cutoff_ghz < sample_rate_gsa / 2:
        raise ValueError(f"cutoff {cutoff_ghz} GHz must lie in (0, {sample_rate_gsa / 2}) GHz")
    return bessel_lowpass(order, cutoff_ghz, sample_rate_gsa / 2, name=f"bt{order}")


# ---------------------------------------------------------------------------
# Electro-optic and optical stages
# ---------------------------------------------------------------------------


def mzm_modulate(drive: Waveform, spec: MzmSpec, input_power_mw: float) -> Waveform:
    """Chirp-free MZM: field = sqrt(P) * cos(pi * (v + bias * Vpi) / (2 Vpi)).

    The returned complex envelope is in sqrt(mW).
    """
    if drive.is_complex:
        raise ValueError("MZM drive must be real")
    if input_power_mw < 0:
        raise ValueError("optical input power must be >= 0")
    amp = math.sqrt(input_power_mw) * 10 ** (-spec.insertion_loss_db / 20)
    arg = np.pi * (drive.samples + spec.bias * spec.v_pi_v) / (2 * spec.v_pi_v)
    return Waveform((amp * np.cos(arg)).astype(complex), drive.sample_rate_gsa, "channel")


def dispersion_phase(f_ghz: np.ndarray, dl_ps_nm: float, wavelength_nm: float) -> np.ndarray:
    """Spectral phase pi * D L lambda^2 f^2 / c in radians."""
    # ps/nm -> s/m is 1e-3; nm^2 * GHz^2 -> m^2 * Hz^2 is 1
    return np.pi * dl_ps_nm * 1e-3 * wavelength_nm**2 * np.asarray(f_ghz) ** 2 / C_M_S


def propagate_dispersion(field: Waveform, fiber: FiberSpec, wavelength_nm: float) -> Waveform:
    """All-pass chromatic dispersion on a complex envelope."""
    if not field.is_complex:
        raise ValueError("dispersion acts on the complex optical field")
    dl = dispersion_parameter(wavelength_nm, fiber) * fiber.length_km
    if dl == 0:
        return field
    f = fft_frequencies(len(field), field.sample_rate_gsa, real=False)
    spec = np.fft.fft(field.samples) * np.exp(1j * dispersion_phase(f, dl, wavelength_nm))
    return field.with_samples(np.fft.ifft(spec))


def fading_nulls(d_ps_nm_km: float, length_km: float, wavelength_nm: float, f_max_ghz: float) -> list[float]:
    """Frequencies (GHz) of the IM/DD power-fading nulls below ``f_max_ghz``."""
    if not f_max_ghz > 0:
        raise ValueError("f_max must be positive")
    dl = abs(d_ps_nm_km * length_km)
    if dl == 0:
        return []
    base = C_M_S / (2 * dl * 1e-3 * wavelength_nm**2)  # GHz^2 per (1 + 2k)
    nulls = []
    k = 0
    while True:
        f = math.sqrt(base * (1 + 2 * k))
        if f >= f_max_ghz:
            return nulls
        nulls.append(f)
        k += 1


def photodetect(field: Waveform, pd: PdSpec) -> Waveform:
    """Square-law detection (mA for a field in sqrt(mW)) then the PD roll-off."""
    current = pd.responsivity_a_per_w * np.abs(field.samples) ** 2
    out = Waveform(current, field.sample_rate_gsa, "channel")
    return apply_response(out, bessel_lowpass(pd.order, pd.bandwidth_ghz, field.sample_rate_gsa / 2, name="pd"))


def apply_gain(w: Waveform, gain_db: float) -> Waveform:
    """Scale amplitude by 10^(gain/20); for a field that is a power gain of ``gain_db``."""
    if not math.isfinite(gain_db):
        raise ValueError("gain must be finite")
    return w.with_samples(w.samples * 10 ** (gain_db / 20))


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------


def coloring_response(spec: NoiseSpec, f_ghz: np.ndarray) -> np.ndarray:
    """Amplitude shaping whose PSD excess in dB follows a resonant peak.

    excess_dB(f) = gain_dB * |B(f)|^2 with B a second-order band-pass of
    quality ``coloring_q`` centred on the peak, so the excess is 0 dB at
    DC and exactly ``gain_dB`` at the peak.
    """
    x = np.abs(np.asarray(f_ghz, dtype=float)) / spec.coloring_peak_ghz
    bp2 = x**2 / (spec.coloring_q**2 * (1 - x**2) ** 2 + x**2)
    return 10 ** (spec.coloring_gain_db * bp2 / 20)


def add_noise(w: Waveform, spec: NoiseSpec, seed: int, sigma: float | None = None) -> Waveform:
    """Add seeded Gaussian noise of RMS ``sigma`` (default ``spec.white_sigma``), colored by ``spec``."""
    sigma = spec.white_sigma if sigma is None else sigma
    if sigma < 0:
        raise ValueError("noise sigma must be >= 0")
    if sigma == 0:
        return w
    rng = np.random.Generator(np.random.PCG64(seed))
    n = len(w)
    if w.is_complex:
        noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * (sigma / math.sqrt(2))
    else:
        noise = rng.standard_normal(n) * sigma
    if spec.coloring_gain_db != 0:
        if w.is_complex:
            h = coloring_response(spec, fft_frequencies(n, w.sample_rate_gsa, real=False))
            noise = np.fft.ifft(np.fft.fft(noise) * h)
        else:
            h = coloring_response(spec, fft_frequencies(n, w.sample_rate_gsa, real=True))
            noise = np.fft.irfft(np.fft.rfft(noise) * h, n)
    return w.with_samples(w.samples + noise)


def coloring_power_gain(spec: NoiseSpec, sample_rate_gsa: float, n: int = 1 << 14) -> float:
    """Mean |H|^2 of the coloring filter across the full band."""
    f = fft_frequencies(n, sample_rate_gsa, real=False)
    return float(np.mean(coloring_response(spec, f) ** 2))
