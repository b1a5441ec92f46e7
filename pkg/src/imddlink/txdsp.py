"""Transmitter DSP: bits, PAM mapping, DAC resampling, pre-emphasis, clipping, quantization."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .core import ModulationFormat
from .signal import FrequencyResponse, Waveform, apply_response, fft_resample, rms


@dataclass(frozen=True, eq=False)
class SymbolSequence:
    indices: np.ndarray
    format: ModulationFormat
    rate_gbd: Optional[float] = None

    def __post_init__(self):
        idx = np.asarray(self.indices)
        if idx.size and (idx.min() < 0 or idx.max() >= self.format.order):
            raise ValueError(f"symbol indices must lie in [0, {self.format.order})")
        object.__setattr__(self, "indices", idx.astype(np.int8))

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def levels(self) -> np.ndarray:
        return self.format.level_array[self.indices]


@dataclass(frozen=True)
class ClipSpec:
    clip_ratio: float = 2.5

    def __post_init__(self):
        if not self.clip_ratio > 0:
            raise ValueError(f"clip ratio must be positive, got {self.clip_ratio}")


def generate_bits(seed: int, count: int, generator: str = "mt19937") -> np.ndarray:
    """Seeded uniform bits as a uint8 array of 0/1.

    ``generator`` selects the bit generator: ``"mt19937"`` (Mersenne
    Twister, the default) or ``"pcg64"``.
    """
    if count <= 0:
        raise ValueError(f"bit count must be positive, got {count}")
    kinds = {"mt19937": np.random.MT19937, "pcg64": np.random.PCG64}
    try:
        bitgen = kinds[generator.lower()](seed)
    except KeyError:
        raise ValueError(f"unknown generator {generator!r}") from None
    return np.random.Generator(bitgen).integers(0, 2, size=count, dtype=np.uint8)


# ---------------------------------------------------------------------------
# Bit labelling
# ---------------------------------------------------------------------------


def gray_labels(order: int) -> np.ndarray:
    """Bit label (as an integer) of each level, lowest level first."""
    m = np.arange(order)
    return m ^ (m >> 1)


@lru_cache(maxsize=None)
def pam6_pairs() -> np.ndarray:
    """The 32 level-index pairs of the 5-bit PAM6 code, in label order.

    All 36 pairs sorted by energy with lexicographic tie-break; the four
    highest-energy pairs (the corners) are dropped, and the survivors are
    labelled 0..31 in lexicographic order.
    """
    raw = np.arange(6) * 2 - 5
    pairs = [(a, b) for a in range(6) for b in range(6)]
    by_energy = sorted(pairs, key=lambda p: (raw[p[0]] ** 2 + raw[p[1]] ** 2, p))
    kept = sorted(by_energy[:32])
    return np.array(kept, dtype=np.int8)


@lru_cache(maxsize=None)
def _pam6_lookup() -> np.ndarray:
    """6x6 table mapping a pair to its 5-bit label (corners -> nearest used pair)."""
    pairs = pam6_pairs()
    table = np.full((6, 6), -1, dtype=np.int16)
    for label, (a, b) in enumerate(pairs):
        table[a, b] = label
    for a in (0, 5):
        for b in (0, 5):
            # a decided corner is pulled one level inwards on the second symbol
            table[a, b] = table[a, 1 if b == 0 else 4]
    return table


def _bits_to_ints(bits: np.ndarray, width: int) -> np.ndarray:
    groups = bits.reshape(-1, width).astype(np.int64)
    weights = 1 << np.arange(width - 1, -1, -1)
    return groups @ weights


def _ints_to_bits(values: np.ndarray, width: int) -> np.ndarray:
    shifts = np.arange(width - 1, -1, -1)
    return ((np.asarray(values, dtype=np.int64)[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def map_symbols(bits: np.ndarray, fmt: ModulationFormat, rate_gbd: Optional[float] = None) -> SymbolSequence:
    """Gray-map bits onto PAM level indices (MSB first).

    PAM4/PAM8 use reflected Gray labels. PAM6 packs 5 bits into a pair of
    symbols drawn from :func:`pam6_pairs`.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    if fmt.order == 6:
        if bits.size % 5:
            raise ValueError(f"PAM6 needs a multiple of 5 bits, got {bits.size}")
        labels = _bits_to_ints(bits, 5)
        return SymbolSequence(pam6_pairs()[labels].ravel(), fmt, rate_gbd)
    width = int(fmt.bits_per_symbol)
    if bits.size % width:
        raise ValueError(f"{fmt.name} needs a multiple of {width} bits, got {bits.size}")
    labels = _bits_to_ints(bits, width)
    label_to_index = np.argsort(gray_labels(fmt.order))
    return SymbolSequence(label_to_index[labels], fmt, rate_gbd)


def demap(symbols: SymbolSequence) -> np.ndarray:
    """Inverse of :func:`map_symbols`."""
    fmt = symbols.format
    idx = symbols.indices.astype(np.int64)
    if idx.size == 0:
        return np.zeros(0, dtype=np.uint8)
    if fmt.order == 6:
        if idx.size % 2:
            raise ValueError("PAM6 demapping needs an even number of symbols")
        pairs = idx.reshape(-1, 2)
        labels = _pam6_lookup()[pairs[:, 0], pairs[:, 1]]
        return _ints_to_bits(labels, 5)
    return _ints_to_bits(gray_labels(fmt.order)[idx], int(fmt.bits_per_symbol))


# ---------------------------------------------------------------------------
# Waveform stages
# ---------------------------------------------------------------------------


def resample_to_dac(symbols: SymbolSequence, dac_rate_gsa: float, symbol_rate_gbd: Optional[float] = None) -> Waveform:
    """Band-limited interpolation of the symbol levels onto the DAC grid."""
    rate = symbol_rate_gbd or symbols.rate_gbd
    if rate is None:
        raise ValueError("symbol rate unknown; pass symbol_rate_gbd")
    if dac_rate_gsa < rate:
        raise ValueError(f"DAC rate {dac_rate_gsa} GSa/s below symbol rate {rate} GBd")
    one_sps = Waveform(symbols.levels.astype(float), rate, "tx")
    return fft_resample(one_sps, dac_rate_gsa)


def apply_preemphasis(w: Waveform, response: FrequencyResponse, max_boost_db: float = 18.0) -> Waveform:
    """Pre-distort ``w`` by the inverse of ``response``, boost capped at ``max_boost_db``."""
    return apply_response(w, response.inverse(max_boost_db))


def clip_level(x: np.ndarray, clip_ratio: float) -> float:
    """Saturation level A with A = clip_ratio * RMS(clipped signal).

    Tying the level to the RMS of the *output* is what pins the output
    PAPR at 20 log10(clip_ratio). Returns inf when no clipping is needed.
    """
    x = np.abs(x)
    peak = x.max()
    if peak == 0 or peak <= clip_ratio * rms(x):
        return np.inf
    if clip_ratio <= 1:
        return rms(x)
    lo, hi = 0.0, peak
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if clip_ratio * rms(np.minimum(x, mid)) > mid:
            lo = mid
        else:
            hi = mid
    return lo


def clip(w: Waveform, spec: ClipSpec) -> Waveform:
    level = clip_level(w.samples, spec.clip_ratio)
    if not np.isfinite(level):
        return w
    return w.with_samples(np.clip(w.samples, -level, level))


def quantize(w: Waveform, bits: int, full_scale: float) -> Waveform:
    """Uniform mid-rise quantizer over [-full_scale/2, +full_scale/2]."""
    if not 2 <= bits <= 16:
        raise ValueError(f"quantizer resolution must be 2..16 bits, got {bits}")
    step = full_scale / 2**bits
    code = np.floor(w.samples / step)
    code = np.clip(code, -(2 ** (bits - 1)), 2 ** (bits - 1) - 1)
    return w.with_samples((code + 0.5) * step)
