"""Receiver DSP: resampling, synchronization, FFE/DFE, 1-tap MLSE, demapping, BER."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from . import _kernels
from .core import ModulationFormat
from .signal import Waveform, fft_resample
from .txdsp import SymbolSequence, demap

__all__ = [
    "EqualizerKind", "EqualizerConfig", "EqualizerOutput", "BerReport",
    "SyncError", "AdaptationError",
    "resample_to_2sps", "synchronize", "normalize", "slice_levels",
    "ffe_equalize", "dfe_equalize", "ls_equalizer", "mlse_1tap", "estimate_postcursor",
    "detect", "demap", "measure_ber", "guard_symbols",
]


class SyncError(RuntimeError):
    pass


class AdaptationError(RuntimeError):
    pass


class EqualizerKind(str, Enum):
    FFE = "FFE"
    FFE_MLSE = "FFE+MLSE1"
    DFE = "DFE"
    DFE_MLSE = "DFE+MLSE1"

    @property
    def uses_feedback(self) -> bool:
        return self in (EqualizerKind.DFE, EqualizerKind.DFE_MLSE)

    @property
    def uses_mlse(self) -> bool:
        return self in (EqualizerKind.FFE_MLSE, EqualizerKind.DFE_MLSE)


@dataclass(frozen=True)
class EqualizerConfig:
    kind: EqualizerKind = EqualizerKind.DFE_MLSE
    ff_taps: int = 51
    fb_taps: int = 21
    step_size: float = 2e-3
    training_symbols: int = 16384
    training_passes: int = 6
    step_decay: float = 0.6
    dd_step_size: Optional[float] = None

    def __post_init__(self):
        kind = EqualizerKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.ff_taps < 1 or self.ff_taps % 2 == 0:
            raise ValueError(f"ff_taps must be odd and >= 1, got {self.ff_taps}")
        if self.fb_taps < 0:
            raise ValueError("fb_taps must be >= 0")
        if kind.uses_feedback and self.fb_taps < 1:
            raise ValueError(f"{kind.value} needs at least one feedback tap")
        if not kind.uses_feedback and self.fb_taps != 0:
            object.__setattr__(self, "fb_taps", 0)
        if not 0 < self.step_size < 1:
            raise ValueError(f"step size must lie in (0, 1), got {self.step_size}")
        if self.dd_step_size is not None and not 0 <= self.dd_step_size < 1:
            raise ValueError("dd_step_size must lie in [0, 1)")
        if self.training_symbols < 1 or self.training_passes < 1:
            raise ValueError("training needs at least one symbol and one pass")
        if not 0 < self.step_decay <= 1:
            raise ValueError("step_decay must lie in (0, 1]")

    @property
    def final_step_size(self) -> float:
        """Step size of the last training pass; the decision-directed default."""
        return self.step_size * self.step_decay ** (self.training_passes - 1)

    @property
    def name(self) -> str:
        return self.kind.value


@dataclass(frozen=True, eq=False)
class EqualizerOutput:
    soft: np.ndarray
    decisions: np.ndarray
    ff_taps: np.ndarray
    fb_taps: np.ndarray
    pr_soft: np.ndarray
    training_mse: float


@dataclass(frozen=True)
class BerReport:
    bit_errors: int
    bits_compared: int
    symbol_errors: Optional[int] = None
    symbols_compared: Optional[int] = None

    def __post_init__(self):
        if self.bits_compared <= 0:
            raise ValueError("BER window is empty")

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_compared

    @property
    def ser(self) -> Optional[float]:
        if self.symbol_errors is None:
            return None
        return self.symbol_errors / self.symbols_compared

    @property
    def upper_bound(self) -> float:
        """95% upper bound; the rule of three when no errors were seen."""
        if self.bit_errors == 0:
            return 3.0 / self.bits_compared
        return self.ber

    @property
    def sigma(self) -> float:
        """Binomial standard deviation of the BER estimate."""
        p = self.ber
        return math.sqrt(p * (1 - p) / self.bits_compared)


# ---------------------------------------------------------------------------
# Front end
# ---------------------------------------------------------------------------


def resample_to_2sps(w: Waveform, symbol_rate_gbd: float) -> Waveform:
    if w.sample_rate_gsa < symbol_rate_gbd:
        raise ValueError(
            f"input rate {w.sample_rate_gsa} GSa/s is below the symbol rate {symbol_rate_gbd} GBd")
    out = fft_resample(w, 2 * symbol_rate_gbd, origin="rx")
    return out.with_samples(out.samples, sample_rate_gsa=2 * symbol_rate_gbd)


def _reference_2sps(reference: SymbolSequence) -> np.ndarray:
    levels = Waveform(reference.levels.astype(float), 1.0)
    return fft_resample(levels, 2.0).samples


def synchronize(rx: Waveform, reference: SymbolSequence, min_peak_to_rms: float = 5.0) -> tuple[Waveform, int]:
    """Align a 2 sps capture to the reference symbols by circular correlation.

    Returns the aligned (and polarity-corrected) waveform and the delay in
    samples. Raises SyncError when the correlation peak is not significant:
    below ``min_peak_to_rms`` times the correlation RMS, or below the level
    Gaussian noise would reach by chance over this many lags.
    """
    ref = _reference_2sps(reference)
    x = np.real(rx.samples) - np.mean(np.real(rx.samples))
    n = max(len(x), len(ref))
    if len(x) < len(ref) // 2:
        raise SyncError(f"capture of {len(x)} samples too short for {len(reference)} reference symbols")
    corr = np.fft.irfft(np.fft.rfft(x, n) * np.conj(np.fft.rfft(ref, n)), n)
    peak = int(np.argmax(np.abs(corr)))
    corr_rms = math.sqrt(np.mean(corr**2))
    threshold = max(min_peak_to_rms, math.sqrt(2 * math.log(n)) + 1.5)
    if corr_rms == 0 or abs(corr[peak]) < threshold * corr_rms:
        raise SyncError(
            f"no significant correlation peak (peak/rms = {abs(corr[peak]) / max(corr_rms, 1e-300):.2f}, "
            f"need {threshold:.2f})")
    aligned = np.roll(x, -peak)[: len(ref)]
    if corr[peak] < 0:
        aligned = -aligned
    return rx.with_samples(aligned, origin="rx"), peak


def normalize(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    scale = math.sqrt(np.mean(x**2))
    return x / scale if scale > 0 else x


def slice_levels(y: np.ndarray, fmt: ModulationFormat) -> np.ndarray:
    """Nearest-level decisions (level indices)."""
    lv = fmt.level_array
    idx = np.floor((np.asarray(y) - lv[0]) / fmt.min_distance + 0.5)
    return np.clip(idx, 0, fmt.order - 1).astype(np.int8)


# ---------------------------------------------------------------------------
# Adaptive equalizers
# ---------------------------------------------------------------------------


def _padded(x2: np.ndarray, n_ff: int) -> np.ndarray:
    half = n_ff // 2
    return np.pad(np.ascontiguousarray(x2, dtype=float), (half, half + 1), mode="wrap")


def _equalize(rx: Waveform, config: EqualizerConfig, reference: SymbolSequence,
              force: Optional[tuple[int, int]] = None) -> EqualizerOutput:
    fmt = reference.format
    n_sym = len(reference)
    x2 = np.asarray(rx.samples, dtype=float)
    if len(x2) < 2 * n_sym:
        raise ValueError(f"need {2 * n_sym} samples at 2 sps, got {len(x2)}")
    if config.training_symbols > n_sym:
        raise ValueError(f"training length {config.training_symbols} exceeds {n_sym} reference symbols")
    x2 = normalize(x2[: 2 * n_sym])
    xpad = _padded(x2, config.ff_taps)
    levels = fmt.level_array.astype(float)
    ref_idx = reference.indices.astype(np.int64)

    w = np.zeros(config.ff_taps)
    w[config.ff_taps // 2] = 1.0
    fb = np.zeros(config.fb_taps)
    bias = np.zeros(1)

    n_train = config.training_symbols
    errors = np.empty(n_train * config.training_passes)
    for p in range(config.training_passes):
        mu = config.step_size * config.step_decay**p
        status = _kernels.adapt_taps(xpad, w, fb, bias, mu, levels, ref_idx,
                                     n_train, 0, errors[p * n_train:(p + 1) * n_train])
        if status != _kernels.OK:
            raise AdaptationError(f"{config.name}: LMS diverged during training (step size {config.step_size})")
    # divergence check on the first pass, where the step size is largest
    chunk = max(n_train // 10, 1)
    first = errors[:chunk].mean()
    last = errors[n_train - chunk:n_train].mean()
    if not np.isfinite(last) or last > 10 * first:
        raise AdaptationError(
            f"{config.name}: training MSE grew from {first:.3g} to {last:.3g} (step size {config.step_size})")

    soft = np.empty(n_sym)
    pr_soft = np.empty(n_sym)
    dec = np.empty(n_sym, dtype=np.int8)
    mu_dd = config.final_step_size if config.dd_step_size is None else config.dd_step_size
    fk, fi = force if force is not None else (-1, 0)
    status = _kernels.run_decision_directed(xpad, w, fb, bias, mu_dd, levels, n_sym, soft, pr_soft, dec, fk, fi)
    if status != _kernels.OK:
        raise AdaptationError(f"{config.name}: decision-directed adaptation diverged")
    return EqualizerOutput(soft, dec, w, fb, pr_soft, float(errors[-chunk:].mean()))


def ffe_equalize(rx: Waveform, config: EqualizerConfig, reference: SymbolSequence) -> EqualizerOutput:
    """T/2-spaced linear equalizer: LMS on the training prefix, then decision-directed."""
    if config.fb_taps:
        config = replace(config, kind=EqualizerKind.FFE, fb_taps=0)
    return _equalize(rx, config, reference)


def dfe_equalize(rx: Waveform, config: EqualizerConfig, reference: SymbolSequence,
                 force_decision: Optional[tuple[int, int]] = None) -> EqualizerOutput:
    """T/2 feed-forward section plus T-spaced decision feedback.

    ``force_decision=(k, index)`` overwrites the slicer output at symbol k
    (error-propagation probe).
    """
    if config.fb_taps < 1:
        raise ValueError("DFE needs at least one feedback tap")
    return _equalize(rx, config, reference, force_decision)


def ls_equalizer(rx: Waveform, reference: SymbolSequence, ff_taps: int, fb_taps: int = 0,
                 n_symbols: Optional[int] = None) -> tuple[np.ndarray, np.ndarray, float]:
    """Block least-squares (Wiener) taps with known-symbol feedback.

    A deterministic cross-check for the LMS solution (which, like this
    solver, carries a DC term). Returns (feed-forward taps, feedback taps,
    residual MSE).
    """
    fmt = reference.format
    n_sym = len(reference) if n_symbols is None else n_symbols
    x2 = normalize(np.asarray(rx.samples, dtype=float)[: 2 * len(reference)])
    xpad = _padded(x2, ff_taps)
    k = np.arange(n_sym)
    ff_rows = xpad[2 * k[:, None] + np.arange(ff_taps)[None, :]]
    s = reference.levels.astype(float)
    cols = [ff_rows, np.ones((n_sym, 1))]
    if fb_taps:
        cols.append(np.stack([np.roll(s, j + 1)[:n_sym] for j in range(fb_taps)], axis=1))
    a = np.hstack(cols)
    taps, *_ = np.linalg.lstsq(a, s[:n_sym], rcond=None)
    mse = float(np.mean((a @ taps - s[:n_sym]) ** 2))
    return taps[:ff_taps], taps[ff_taps + 1:], mse


# ---------------------------------------------------------------------------
# Sequence detection
# ---------------------------------------------------------------------------


def mlse_1tap(soft: np.ndarray, h1: float, fmt: ModulationFormat, initial_level: float = 0.0) -> np.ndarray:
    """Viterbi detection for the two-tap model y_k = s_k + h1 s_{k-1} + noise.

    The symbol before the block is taken as ``initial_level`` (0 means no
    ISI into the first symbol). Returns level indices.
    """
    if not abs(h1) < 1:
        raise ValueError(f"postcursor must satisfy |h1| < 1, got {h1}")
    y = np.ascontiguousarray(soft, dtype=float)
    return _kernels.viterbi_1tap(y, fmt.level_array.astype(float), float(h1), float(initial_level))


def estimate_postcursor(soft: np.ndarray, decisions: np.ndarray) -> float:
    """First-postcursor estimate: lag-1 correlation of (soft - decision) with the previous decision.

    ``decisions`` are decided levels (not indices).
    """
    soft = np.asarray(soft, dtype=float)
    d = np.asarray(decisions, dtype=float)
    if len(soft) < 1000:
        raise ValueError(f"need at least 1000 symbols to estimate the postcursor, got {len(soft)}")
    resid = soft[1:] - d[1:]
    prev = d[:-1]
    power = np.dot(prev, prev)
    return float(np.dot(resid, prev) / power) if power > 0 else 0.0


@dataclass(frozen=True, eq=False)
class Detection:
    decisions: np.ndarray
    soft: np.ndarray
    postcursor: float = 0.0


def detect(rx: Waveform, config: EqualizerConfig, reference: SymbolSequence) -> Detection:
    """Run one of the four receiver equalizers and return symbol decisions.

    FFE+MLSE1 trains its FFE toward the partial-response target
    s_k + h1 s_{k-1} (h1 learned jointly, via one reference-fed feedback
    tap) and lets the MLSE resolve h1; no decision is ever fed back into
    its output. DFE+MLSE1 hands the first postcursor back to the MLSE and
    keeps feedback for the tail.
    """
    fmt = reference.format
    lv = fmt.level_array
    if config.kind is EqualizerKind.FFE_MLSE:
        out = _equalize(rx, replace(config, kind=EqualizerKind.DFE, fb_taps=1), reference)
        h1 = float(np.clip(-out.fb_taps[0], -0.95, 0.95))
        z = out.pr_soft
        return Detection(mlse_1tap(z, h1, fmt), z, h1)
    if config.kind.uses_feedback:
        out = dfe_equalize(rx, config, reference)
    else:
        out = ffe_equalize(rx, config, reference)
    if not config.kind.uses_mlse:
        return Detection(out.decisions, out.soft)
    z = out.pr_soft
    h1 = estimate_postcursor(z, lv[out.decisions])
    h1 = float(np.clip(h1, -0.95, 0.95))
    return Detection(mlse_1tap(z, h1, fmt), z, h1)


# ---------------------------------------------------------------------------
# Bits
# ---------------------------------------------------------------------------


def guard_symbols(config: EqualizerConfig) -> int:
    return max(config.ff_taps, config.fb_taps, 64)


def measure_ber(rx_bits: np.ndarray, tx_bits: np.ndarray, guard_symbols: int = 0,
                bits_per_symbol: float = 1.0, rx_symbols: Optional[np.ndarray] = None,
                tx_symbols: Optional[np.ndarray] = None) -> BerReport:
    """Count bit (and optionally symbol) errors, skipping ``guard_symbols`` at each end."""
    rx_bits = np.asarray(rx_bits)
    tx_bits = np.asarray(tx_bits)
    if rx_bits.shape != tx_bits.shape:
        raise ValueError(f"bit sequences differ in length ({rx_bits.size} vs {tx_bits.size})")
    guard_bits = int(math.ceil(guard_symbols * bits_per_symbol))
    if bits_per_symbol % 1:
        # PAM6 labels span symbol pairs; keep the window on 5-bit boundaries
        guard_bits = 5 * math.ceil(guard_bits / 5)
    window = slice(guard_bits, rx_bits.size - guard_bits)
    errors = int(np.count_nonzero(rx_bits[window] != tx_bits[window]))
    compared = rx_bits[window].size
    sym_err = sym_n = None
    if rx_symbols is not None and tx_symbols is not None:
        g = int(guard_symbols)
        rs = np.asarray(rx_symbols)[g:len(rx_symbols) - g]
        ts = np.asarray(tx_symbols)[g:len(tx_symbols) - g]
        sym_err, sym_n = int(np.count_nonzero(rs != ts)), rs.size
    return BerReport(errors, compared, sym_err, sym_n)
