"""Experiment orchestration: end-to-end link runs, sweeps, WDM/DR8 campaigns and eyes."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.signal

from . import channel as ch
from .config import ChannelSettings, LinkConfig, RxSettings
from .core import (
    FecVerdict,
    WdmChannelPlan,
    aggregate_rate_tbps,
    build_wdm_grid,
    dbm_to_mw,
    dispersion_parameter,
    fec_verdict,
    mix_seed,
    mw_to_dbm,
    select_fec,
    net_rate,
)
from .rxdsp import (
    BerReport,
    EqualizerConfig,
    EqualizerKind,
    detect,
    ffe_equalize,
    guard_symbols,
    measure_ber,
    normalize,
    resample_to_2sps,
    synchronize,
)
from .signal import Waveform, apply_response, cascade, fft_resample, rms
from .txdsp import ClipSpec, SymbolSequence, apply_preemphasis, clip, demap, generate_bits, map_symbols, quantize, resample_to_dac

log = logging.getLogger(__name__)

# stream ids for per-stage seeds derived from a link seed
_BITS, _NOISE, _SOA = 1, 2, 3
_DR8_STREAM = 0xD8


class StageError(RuntimeError):
    """A link stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")


@dataclass(frozen=True, eq=False)
class EyeHistogram:
    counts: np.ndarray  # (time bins, amplitude bins)
    time_edges_ui: np.ndarray
    amplitude_edges: np.ndarray
    symbol_rate_gbd: float
    averages: int = 1


@dataclass(eq=False)
class LinkResult:
    config: LinkConfig
    reports: dict[str, BerReport] = field(default_factory=dict)
    verdicts: dict[str, FecVerdict] = field(default_factory=dict)
    info: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    error: Optional[str] = None
    spectrum: Optional[tuple[np.ndarray, np.ndarray]] = None
    eye: Optional[EyeHistogram] = None

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def ok(self) -> bool:
        return self.error is None

    def ber(self, equalizer: str) -> float:
        return self.reports[equalizer].ber


# ---------------------------------------------------------------------------
# Single link
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _TxOut:
    bits: np.ndarray
    symbols: SymbolSequence
    drive: Waveform  # volts at the simulation rate, after the Tx analog chain


def _sim_rate(config: LinkConfig) -> float:
    return config.symbol_rate_gbd * config.channel.sim_oversampling


def transmit(config: LinkConfig) -> _TxOut:
    fmt = config.format
    n_bits = int(config.num_symbols * fmt.bits_per_symbol)
    bits = generate_bits(mix_seed(config.seed, _BITS), n_bits, config.generator)
    symbols = map_symbols(bits, fmt, config.symbol_rate_gbd)
    dac = resample_to_dac(symbols, config.dac_rate_gsa)
    tx = config.tx
    if tx.preemphasis:
        chain = cascade(r.build(config.dac_rate_gsa / 2) for r in tx.responses)
        dac = apply_preemphasis(dac, chain, tx.max_boost_db)
    dac = clip(dac, ClipSpec(tx.clip_ratio))
    peak = np.max(np.abs(dac.samples))
    # the clip level lands on the DAC's full-scale rails
    dac = dac.with_samples(dac.samples * (tx.full_scale_vpp / 2) / peak)
    dac = quantize(dac, tx.dac_bits, tx.full_scale_vpp)
    analog = fft_resample(dac, _sim_rate(config), origin="channel")
    for r in tx.responses:
        analog = apply_response(analog, r.build(analog.sample_rate_gsa / 2))
    drive = ch.apply_gain(analog, tx.driver_gain_db)
    return _TxOut(bits, symbols, drive)


def propagate(config: LinkConfig, drive: Waveform, launch_power_dbm: float, wavelength_nm: float,
              info: dict) -> Waveform:
    """Tx drive -> MZM -> fiber -> optical gain -> PD -> Rx analog chain -> noise, at the ADC rate."""
    chs: ChannelSettings = config.channel
    field_ = ch.mzm_modulate(drive, chs.mzm, dbm_to_mw(launch_power_dbm))
    field_ = ch.apply_gain(field_, -config.fiber.loss_db)
    field_ = ch.propagate_dispersion(field_, config.fiber, wavelength_nm)
    field_ = ch.apply_gain(field_, chs.optical_gain_db)
    if chs.soa_noise_sigma > 0:
        sigma = chs.soa_noise_sigma * math.sqrt(field_.power)
        field_ = ch.add_noise(field_, ch.NoiseSpec(), mix_seed(config.seed, _SOA), sigma=sigma)
    if chs.rop_dbm is not None:
        field_ = ch.apply_gain(field_, chs.rop_dbm - mw_to_dbm(field_.power))
    rop_dbm = mw_to_dbm(max(field_.power, 1e-30))
    info["rop_dbm"] = round(rop_dbm, 4)

    elec = ch.photodetect(field_, chs.pd)
    for r in chs.rx_responses:
        elec = apply_response(elec, r.build(elec.sample_rate_gsa / 2))
    if chs.adc_rate_gsa is not None:
        elec = fft_resample(elec, chs.adc_rate_gsa, origin="rx")

    noise = chs.noise
    if noise.white_sigma > 0:
        signal_rms = rms(elec.samples - elec.samples.mean())
        if noise.reference_rop_dbm is not None:
            # thermal floor fixed in absolute terms: referenced to the signal at reference_rop
            signal_rms *= 10 ** ((noise.reference_rop_dbm - rop_dbm) / 10)
        elec = ch.add_noise(elec, noise, mix_seed(config.seed, _NOISE), sigma=noise.white_sigma * signal_rms)
    return elec


def run_link(config: LinkConfig, *, launch_power_dbm: Optional[float] = None,
             wavelength_nm: Optional[float] = None, info: Optional[dict] = None,
             capture_spectrum: bool = False) -> LinkResult:
    """Tx -> channel -> Rx for every configured equalizer on one received waveform.

    Raises StageError naming the failing stage.
    """
    info = dict(info or {})
    launch = config.laser_power_dbm if launch_power_dbm is None else launch_power_dbm
    wavelength = config.wavelength_nm if wavelength_nm is None else wavelength_nm
    fiber = config.fiber
    info.update(
        wavelength_nm=round(wavelength, 4),
        dispersion_ps_nm=round(dispersion_parameter(wavelength, fiber) * fiber.length_km, 6),
        launch_power_dbm=round(launch, 4),
    )
    try:
        tx = transmit(config)
    except Exception as exc:
        raise StageError("tx", exc) from exc
    try:
        elec = propagate(config, tx.drive, launch, wavelength, info)
    except Exception as exc:
        raise StageError("channel", exc) from exc
    result = LinkResult(config, info=info)
    if capture_spectrum:
        f, psd = scipy.signal.welch(elec.samples - elec.samples.mean(), fs=elec.sample_rate_gsa,
                                    nperseg=min(4096, len(elec)))
        result.spectrum = (f, psd)
    try:
        rx2 = resample_to_2sps(elec, config.symbol_rate_gbd)
        aligned, delay = synchronize(rx2, tx.symbols)
    except Exception as exc:
        raise StageError("sync", exc) from exc
    result.info["sync_delay_samples"] = int(delay)

    fmt = config.format
    for eq in config.rx.equalizers:
        try:
            det = detect(aligned, eq, tx.symbols)
        except Exception as exc:
            raise StageError(f"equalizer {eq.name}", exc) from exc
        rx_bits = demap(SymbolSequence(det.decisions, fmt))
        report = measure_ber(rx_bits, tx.bits, guard_symbols(eq), float(fmt.bits_per_symbol),
                             det.decisions, tx.symbols.indices)
        result.reports[eq.name] = report
        result.verdicts[eq.name] = fec_verdict(report.ber, config.symbol_rate_gbd, fmt, config.fec_ledger)
        if eq.kind.uses_mlse:
            result.info[f"{eq.name} postcursor"] = round(det.postcursor, 6)
    return result


# ---------------------------------------------------------------------------
# Campaigns
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WdmSettings:
    start_wavelength_nm: float = 1295.56
    spacing_ghz: float = 400.0
    count: int = 8
    decorrelation_delay_symbols: int = 64
    coupler_loss_db: float = 3.01

    @property
    def plan(self) -> WdmChannelPlan:
        return build_wdm_grid(self.start_wavelength_nm, self.spacing_ghz, self.count)


@dataclass(frozen=True)
class Dr8Settings:
    laser_power_dbm: float = 23.0
    splitter_excess_loss_db: float = 0.0
    v_pi_v: float = 4.5
    lanes: int = 8


def run_wdm(base: LinkConfig, plan: WdmChannelPlan, cut_index: int, decorrelation_delay: int,
            coupler_loss_db: float = 3.01, capture_spectrum: bool = False) -> LinkResult:
    """Channel-under-test run on a WDM grid.

    The CUT sees dispersion at its own wavelength. The other channels are
    linear bystanders: they only enter the launched-power bookkeeping.
    """
    cut = plan[cut_index]
    launch = base.laser_power_dbm - coupler_loss_db
    total_mw = len(plan) * dbm_to_mw(launch)
    info = {"cut_index": cut_index, "channels": len(plan),
            "fiber_launch_total_dbm": round(mw_to_dbm(total_mw), 4),
            "decorrelation_delay_symbols": decorrelation_delay}
    result = run_link(base, launch_power_dbm=launch, wavelength_nm=cut.wavelength_nm, info=info,
                      capture_spectrum=capture_spectrum)
    if decorrelation_delay == 0:
        result.warnings.append("decorrelation delay is 0: aggressor channels carry the CUT's pattern")
    return result


def dr8_launch_power(laser_power_dbm: float, splitter_excess_loss_db: float = 0.0, lanes: int = 8) -> float:
    return laser_power_dbm - 10 * math.log10(lanes) - splitter_excess_loss_db


def run_dr8(base: LinkConfig, lane: int, laser_power_dbm: float = 23.0, splitter_excess_loss_db: float = 0.0,
            v_pi_v: float = 4.5, lanes: int = 8) -> LinkResult:
    """One DR8 lane: shared laser split 1:8, lane MZM with the differential V_pi."""
    if not 1 <= lane <= lanes:
        raise ValueError(f"lane must be 1..{lanes}, got {lane}")
    launch = dr8_launch_power(laser_power_dbm, splitter_excess_loss_db, lanes)
    mzm = replace(base.channel.mzm, v_pi_v=v_pi_v)
    cfg = base.evolve(seed=mix_seed(base.seed, _DR8_STREAM, lane),
                      channel=replace(base.channel, mzm=mzm))
    if base.laser_temperature_c is not None:
        # the ripple model moves the shared laser's power with temperature
        launch += base.laser_power_dbm - base.laser.power_dbm
    return run_link(cfg, launch_power_dbm=launch, info={"lane": lane})


VARIABLES = ("symbol_rate", "rop", "temperature", "wdm_channel", "dr8_lane")


@dataclass(frozen=True)
class SweepSpec:
    base: LinkConfig
    variable: str
    values: tuple[float, ...]
    equalizers: tuple[EqualizerConfig, ...] = ()
    wdm: Optional[WdmSettings] = None
    dr8: Optional[Dr8Settings] = None

    def __post_init__(self):
        if self.variable not in VARIABLES:
            raise ValueError(f"sweep variable must be one of {VARIABLES}, got {self.variable!r}")
        if not self.values:
            raise ValueError("sweep values must not be empty")
        if list(self.values) != sorted(self.values):
            raise ValueError("sweep values must be sorted")
        if not self.equalizers and not self.base.rx.equalizers:
            raise ValueError("sweep needs at least one equalizer")
        if self.variable == "wdm_channel" and self.wdm is None:
            object.__setattr__(self, "wdm", WdmSettings())
        if self.variable == "dr8_lane" and self.dr8 is None:
            object.__setattr__(self, "dr8", Dr8Settings())

    def point_config(self, index: int) -> LinkConfig:
        base = self.base
        if self.equalizers:
            base = base.evolve(rx=RxSettings(tuple(self.equalizers)))
        return base.evolve(seed=mix_seed(base.seed, index))


def _run_point(spec: SweepSpec, index: int) -> LinkResult:
    value = spec.values[index]
    cfg = spec.point_config(index)
    label = {"point": index, "variable": spec.variable, "value": value}
    try:
        if spec.variable == "symbol_rate":
            cfg = cfg.evolve(symbol_rate_gbd=float(value), dac_rate_gsa=max(cfg.dac_rate_gsa, float(value)))
            result = run_link(cfg, info=label)
        elif spec.variable == "rop":
            cfg = cfg.evolve(channel=replace(cfg.channel, rop_dbm=float(value)))
            result = run_link(cfg, info=label)
        elif spec.variable == "temperature":
            cfg = cfg.evolve(laser_temperature_c=float(value))
            if spec.dr8 is not None:
                d = spec.dr8
                lane = run_dr8(cfg, 1, d.laser_power_dbm, d.splitter_excess_loss_db, d.v_pi_v, d.lanes)
                lane.info.update(label)
                result = lane
            else:
                result = run_link(cfg, info=label)
        elif spec.variable == "wdm_channel":
            w = spec.wdm
            result = run_wdm(cfg, w.plan, int(value), w.decorrelation_delay_symbols, w.coupler_loss_db)
            result.info.update(label)
        else:
            d = spec.dr8
            result = run_dr8(cfg, int(value), d.laser_power_dbm, d.splitter_excess_loss_db, d.v_pi_v, d.lanes)
            result.info.update(label)
    except Exception as exc:
        log.warning("sweep point %d (%s=%s) failed: %s", index, spec.variable, value, exc)
        return LinkResult(cfg, info=label, error=str(exc))
    return result


def sweep(spec: SweepSpec, jobs: int = 1) -> list[LinkResult]:
    """Run every sweep point; results come back in point order whatever ``jobs`` is.

    Point i runs with seed mix_seed(base.seed, i), so results do not depend
    on scheduling. A failing point is recorded and the sweep carries on.
    """
    indices = range(len(spec.values))
    if jobs <= 1:
        return [_run_point(spec, i) for i in indices]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_point, [spec] * len(spec.values), indices))


def sweep_temperature(base: LinkConfig, temps: Sequence[float], dr8: Optional[Dr8Settings] = None,
                      jobs: int = 1) -> list[LinkResult]:
    return sweep(SweepSpec(base, "temperature", tuple(sorted(temps)), dr8=dr8), jobs)


@dataclass(frozen=True)
class AggregateRow:
    equalizer: str
    fec: Optional[str]
    overhead: Optional[float]
    ber_threshold: Optional[float]
    symbol_rate_gbd: float
    modulation: str
    lanes: int
    worst_ber: float
    net_rate_gbps: Optional[float]
    aggregate_tbps: Optional[float]


def aggregate(results: Sequence[LinkResult], equalizer: str) -> AggregateRow:
    """Common-FEC aggregate over lanes/channels: one code must cover the worst lane."""
    ok = [r for r in results if r.ok]
    if not ok:
        raise ValueError("no successful results to aggregate")
    cfg = ok[0].config
    worst = max(r.reports[equalizer].ber for r in ok)
    code = select_fec(worst, cfg.fec_ledger)
    lanes = len(results)
    if code is None or len(ok) != lanes:
        return AggregateRow(equalizer, None, None, None, cfg.symbol_rate_gbd, cfg.modulation, lanes, worst, None, None)
    rate = net_rate(cfg.symbol_rate_gbd, cfg.format, code)
    return AggregateRow(equalizer, code.name, code.overhead, code.ber_threshold, cfg.symbol_rate_gbd,
                        cfg.modulation, lanes, worst, rate, aggregate_rate_tbps(rate, lanes))


# ---------------------------------------------------------------------------
# Eyes
# ---------------------------------------------------------------------------


def eye_diagram(w, symbol_rate_gbd: float, averages: int = 1, bins: tuple[int, int] = (64, 128),
                amplitude_range: Optional[tuple[float, float]] = None) -> EyeHistogram:
    """Fold a trace modulo two unit intervals into a (time, amplitude) histogram.

    ``w`` is a Waveform or a sequence of Waveforms holding repeated
    captures of the same pattern; the first ``averages`` are averaged
    sample-by-sample before folding.
    """
    traces = [w] if isinstance(w, Waveform) else list(w)
    if averages < 1 or averages > len(traces):
        raise ValueError(f"asked for {averages} averages but got {len(traces)} traces")
    first = traces[0]
    x = np.mean([np.real(t.samples) for t in traces[:averages]], axis=0)
    trace = first.with_samples(x)
    n_t, n_a = bins
    sps = trace.sample_rate_gsa / symbol_rate_gbd
    if trace.duration_ns * symbol_rate_gbd < 100:
        raise ValueError("eye diagram needs at least 100 symbols")
    want = n_t / 2
    if sps < want or abs(sps - round(sps)) > 1e-9:
        trace = fft_resample(trace, symbol_rate_gbd * math.ceil(max(want, sps)))
        sps = trace.sample_rate_gsa / symbol_rate_gbd
    y = np.real(trace.samples)
    phase = np.mod(np.arange(len(y)) / sps, 2.0)
    if amplitude_range is None:
        lo, hi = float(y.min()), float(y.max())
        pad = 0.05 * (hi - lo or 1.0)
        amplitude_range = (lo - pad, hi + pad)
    t_edges = np.linspace(0.0, 2.0, n_t + 1)
    a_edges = np.linspace(amplitude_range[0], amplitude_range[1], n_a + 1)
    counts, _, _ = np.histogram2d(phase, y, bins=(t_edges, a_edges))
    return EyeHistogram(counts.astype(np.int64), t_edges, a_edges, symbol_rate_gbd, averages)


def capture_eye(config: LinkConfig, averages: int = 10, ff_taps: int = 51, bt_filter: bool = True,
                bins: tuple[int, int] = (64, 128), samples_per_ui: int = 32) -> EyeHistogram:
    """Equalized eye of a link: averaged captures, optional 4th-order BT filter, T/2 FFE.

    Each capture repeats the same pattern with a fresh noise seed. The
    FFE is trained on the averaged trace and then run over every 2 sps
    sample, so the eye shows the equalized waveform between decisions too.
    """
    tx = transmit(config)
    launch, wavelength = config.laser_power_dbm, config.wavelength_nm
    captures = []
    for a in range(averages):
        cfg = config if a == 0 else config.evolve(seed=mix_seed(config.seed, 0xEE, a))
        elec = propagate(cfg, tx.drive, launch, wavelength, {})
        captures.append(resample_to_2sps(elec, config.symbol_rate_gbd))
    mean = captures[0].with_samples(np.mean([c.samples for c in captures], axis=0))
    if bt_filter:
        bt = ch.design_bessel_thomson(4, config.symbol_rate_gbd / 2, mean.sample_rate_gsa)
        mean = apply_response(mean, bt)
    aligned, _ = synchronize(mean, tx.symbols)
    eq = EqualizerConfig(EqualizerKind.FFE, ff_taps, 0, training_symbols=min(8192, len(tx.symbols)))
    taps = ffe_equalize(aligned, eq, tx.symbols).ff_taps
    half = ff_taps // 2
    xpad = np.pad(normalize(aligned.samples), (half, half), mode="wrap")
    filtered = np.correlate(xpad, taps, mode="valid")
    trace = fft_resample(aligned.with_samples(filtered), config.symbol_rate_gbd * samples_per_ui)
    return eye_diagram(trace, config.symbol_rate_gbd, 1, bins)
