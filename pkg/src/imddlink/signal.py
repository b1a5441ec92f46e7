"""Sampled waveforms and tabulated frequency responses.

Every waveform in the simulator is treated as one period of a periodic
signal: filtering is circular (FFT multiply) and resampling is done by
spectral truncation / zero padding. That keeps rate conversion exact and
lets the receiver synchronize with a circular correlation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.signal

_DB_FLOOR = -300.0


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate_gsa: float
    origin: str = "tx"

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 1:
            raise ValueError("waveform samples must be one-dimensional")
        if not self.sample_rate_gsa > 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_gsa}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains NaN or Inf samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.samples)

    @property
    def duration_ns(self) -> float:
        return len(self.samples) / self.sample_rate_gsa

    @property
    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))

    def with_samples(self, samples: np.ndarray, **changes) -> "Waveform":
        return replace(self, samples=samples, **changes)


def fft_resample(w: Waveform, sample_rate_gsa: float, origin: str | None = None) -> Waveform:
    """Band-limited periodic resampling onto ``sample_rate_gsa``.

    The output length is the nearest integer to ``len * fs_out / fs_in``;
    the reported rate is adjusted so the record duration is unchanged.
    """
    n_in = len(w)
    n_out = int(round(n_in * sample_rate_gsa / w.sample_rate_gsa))
    if n_out < 1:
        raise ValueError("resampling would produce an empty waveform")
    fs_out = n_out / w.duration_ns
    if n_out == n_in:
        out = w.samples.copy()
    else:
        out = scipy.signal.resample(w.samples, n_out)
    return Waveform(out, fs_out, origin or w.origin)


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    """Complex gain tabulated on a non-negative frequency grid (GHz).

    Magnitude is interpolated linearly in dB and phase linearly (after
    unwrapping); outside the table the edge values are held. Negative
    frequencies use conjugate symmetry, i.e. the response is that of a
    real-valued impulse response.
    """

    frequency_ghz: np.ndarray
    gain: np.ndarray
    name: str = ""
    _mag_db: np.ndarray = field(init=False, repr=False)
    _phase: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        f = np.asarray(self.frequency_ghz, dtype=float)
        g = np.asarray(self.gain, dtype=complex)
        if f.ndim != 1 or f.shape != g.shape or len(f) < 1:
            raise ValueError("frequency grid and gain must be matching 1-D arrays")
        if f[0] != 0:
            raise ValueError("frequency grid must start at 0 GHz")
        if np.any(np.diff(f) <= 0):
            raise ValueError("frequency grid must be strictly increasing")
        if not np.all(np.isfinite(g)):
            raise ValueError("response gain must be finite")
        object.__setattr__(self, "frequency_ghz", f)
        object.__setattr__(self, "gain", g)
        mag = np.abs(g)
        with np.errstate(divide="ignore"):
            mag_db = np.maximum(20 * np.log10(mag), _DB_FLOOR)
        object.__setattr__(self, "_mag_db", mag_db)
        object.__setattr__(self, "_phase", np.unwrap(np.angle(g)))

    @classmethod
    def flat(cls, name: str = "flat") -> "FrequencyResponse":
        return cls(np.array([0.0]), np.array([1.0 + 0j]), name)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], f_max_ghz: float,
                      points: int = 4097, name: str = "") -> "FrequencyResponse":
        f = np.linspace(0.0, f_max_ghz, points)
        return cls(f, fn(f), name)

    @property
    def f_max_ghz(self) -> float:
        return float(self.frequency_ghz[-1])

    def magnitude_db(self, f_ghz) -> np.ndarray:
        f = np.abs(np.asarray(f_ghz, dtype=float))
        return np.interp(f, self.frequency_ghz, self._mag_db)

    def __call__(self, f_ghz) -> np.ndarray:
        f = np.asarray(f_ghz, dtype=float)
        af = np.abs(f)
        mag = 10 ** (np.interp(af, self.frequency_ghz, self._mag_db) / 20)
        phase = np.interp(af, self.frequency_ghz, self._phase)
        phase = np.where(f < 0, -phase, phase)
        return mag * np.exp(1j * phase)

    def __mul__(self, other: "FrequencyResponse") -> "FrequencyResponse":
        grid = np.union1d(self.frequency_ghz, other.frequency_ghz)
        name = "*".join(n for n in (self.name, other.name) if n)
        return FrequencyResponse(grid, self(grid) * other(grid), name)

    def inverse(self, max_boost_db: float | None = None) -> "FrequencyResponse":
        """1/H with its magnitude optionally capped at ``max_boost_db``."""
        mag_db = -self._mag_db
        if max_boost_db is not None:
            mag_db = np.minimum(mag_db, max_boost_db)
        gain = 10 ** (mag_db / 20) * np.exp(-1j * self._phase)
        return FrequencyResponse(self.frequency_ghz, gain, f"inv({self.name})")


def cascade(responses) -> FrequencyResponse:
    total = FrequencyResponse.flat("")
    for r in responses:
        total = total * r
    return total


def fft_frequencies(n: int, sample_rate_gsa: float, real: bool) -> np.ndarray:
    if real:
        return np.fft.rfftfreq(n, 1.0 / sample_rate_gsa)
    return np.fft.fftfreq(n, 1.0 / sample_rate_gsa)


def apply_response(w: Waveform, r: FrequencyResponse) -> Waveform:
    """Circular filtering of ``w`` by ``r`` (FFT, multiply, inverse FFT)."""
    n = len(w)
    if n < 2:
        raise ValueError("waveform must have at least 2 samples")
    if w.is_complex:
        spec = np.fft.fft(w.samples)
        h = r(fft_frequencies(n, w.sample_rate_gsa, real=False))
        return w.with_samples(np.fft.ifft(spec * h))
    spec = np.fft.rfft(w.samples)
    h = r(fft_frequencies(n, w.sample_rate_gsa, real=True))
    return w.with_samples(np.fft.irfft(spec * h, n))


def rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.abs(x) ** 2)))
