"""Per-band transmit chain and band combining.

Each band is framed as ``[fill | training | payload | fill]``. The random
fill keeps every subcarrier busy for the full waveform so the combined
signal is stationary and the receiver sees a single training occurrence.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._validation import ParameterError, check_positive, check_symbols
from .bandplan import Band, BandPlan
from .modem import ModulationSpec, PcsModem, make_constellation
from .sigkit import ComplexWaveform, RealWaveform, as_fraction, design_rrc, fir_filter, frequency_shift, resample

__all__ = [
    "FrameSpec",
    "TxConfig",
    "TruthRecord",
    "TxResult",
    "shape_band",
    "combine_bands",
    "build_frame",
    "build_tx",
    "net_rate",
    "training_symbols",
    "band_modem",
    "shaping_factors",
    "multicarrier_reference",
]

POLICIES = ("equal-symbol-power", "equal-psd")


@dataclass(frozen=True)
class FrameSpec:
    training_len: int = 300
    payload_len: int = 1 << 16
    training_seed: int = 1

    def __post_init__(self):
        if int(self.training_len) < 0 or int(self.payload_len) < 0:
            raise ParameterError("training_len and payload_len must be >= 0")

    @property
    def length(self) -> int:
        return int(self.training_len) + int(self.payload_len)


@dataclass(frozen=True)
class TxConfig:
    """Transmitter settings.

    ``band_gains_db`` applies an extra per-band amplitude weight after the
    power policy. ``guard_symbols`` of random fill precede each frame.
    """

    fs_dac: float
    plan: BandPlan
    frames: tuple
    band_power_policy: str = "equal-symbol-power"
    band_gains_db: Optional[tuple] = None
    rrc_span: int = 256
    guard_symbols: int = 256
    ccdm_block_len: int = 256
    payload_seed: int = 0

    def __post_init__(self):
        check_positive(self.fs_dac, "fs_dac")
        frames = tuple(self.frames)
        if len(frames) != len(self.plan):
            raise ParameterError(f"need one FrameSpec per band, got {len(frames)} for {len(self.plan)} bands")
        object.__setattr__(self, "frames", frames)
        if self.band_power_policy not in POLICIES:
            raise ParameterError(f"band_power_policy must be one of {POLICIES}")
        if self.band_gains_db is not None and len(self.band_gains_db) != len(self.plan):
            raise ParameterError("band_gains_db must have one entry per band")
        top = max(b.occupied[1] for b in self.plan)
        if self.fs_dac < 2 * top:
            raise ParameterError(f"fs_dac {self.fs_dac:g} below twice the top occupied frequency {top:g}")


def shaping_factors(baud: float, fs: float):
    """Integer up-sampling factor and the residual rational resampling ratio."""
    L = int(math.floor(fs / baud))
    if L < 1:
        raise ParameterError(f"baud {baud:g} exceeds sample rate {fs:g}")
    return L, as_fraction(fs / (baud * L))


def shape_band(symbols, band: Band, fs_dac: float, span: int = 256) -> ComplexWaveform:
    """Up-sample, RRC-shape, resample to ``fs_dac`` and shift to ``band.f_center``.

    The RRC is scaled by ``sqrt(L)`` so the shaped baseband has the mean
    power of the symbols.
    """
    s = check_symbols(symbols, "symbols")
    lo, hi = band.occupied
    if lo < 0 or hi > fs_dac / 2:
        raise ParameterError(f"band {band.index} occupies [{lo:g}, {hi:g}] Hz beyond Nyquist {fs_dac / 2:g}")
    L, ratio = shaping_factors(band.baud, fs_dac)
    up = np.zeros(s.size * L, dtype=np.complex128)
    up[::L] = s
    taps = design_rrc(band.rolloff, span, L)
    x = fir_filter(ComplexWaveform(up, band.baud * L), taps.coefficients * math.sqrt(L))
    if ratio != 1:
        x = resample(x, ratio)
    x = ComplexWaveform(x.samples, fs_dac)
    return frequency_shift(x, band.f_center)


def combine_bands(band_waveforms: Sequence[ComplexWaveform], bands: Optional[Sequence[Band]] = None,
                  weights: Optional[Sequence[float]] = None, normalize: bool = True) -> RealWaveform:
    """Sum of the real parts, optionally weighted, scaled to unit RMS."""
    if not band_waveforms:
        raise ParameterError("need at least one band waveform")
    fs = band_waveforms[0].sample_rate_hz
    if any(w.sample_rate_hz != fs for w in band_waveforms):
        raise ParameterError("band waveforms must share a sample rate")
    if bands is not None:
        occ = sorted((b.occupied for b in bands))
        for (a0, a1), (b0, b1) in zip(occ, occ[1:]):
            if a1 > b0:
                raise ParameterError("bands overlap")
    n = max(len(w) for w in band_waveforms)
    wts = np.ones(len(band_waveforms)) if weights is None else np.asarray(weights, dtype=np.float64)
    out = np.zeros(n)
    for w, g in zip(band_waveforms, wts):
        out[: len(w)] += g * w.samples.real
    if normalize:
        rms = math.sqrt(float(np.mean(out**2)))
        if rms == 0:
            raise ParameterError("combined signal has zero power")
        out /= rms
    return RealWaveform(out, fs)


def training_symbols(n: int, seed: int) -> np.ndarray:
    """Unit-energy QPSK sequence from a seeded generator."""
    rng = np.random.default_rng(seed)
    b = rng.integers(0, 4, int(n))
    return ((1 - 2 * (b & 1)) + 1j * (1 - 2 * (b >> 1))) / math.sqrt(2)


def band_modem(spec: ModulationSpec, block_len: int = 256) -> PcsModem:
    return PcsModem(spec.kind, spec.order, spec.entropy, block_len).fit()


@dataclass
class TruthRecord:
    """What the receiver is scored against for one band."""

    band_index: int
    modulation: dict
    training_len: int
    payload_len: int
    training_seed: int
    frame_start: int
    bits: np.ndarray
    indices: np.ndarray
    training: np.ndarray
    priors: np.ndarray = field(default=None)

    def to_dict(self):
        return {
            "band_index": self.band_index,
            "modulation": self.modulation,
            "training_len": self.training_len,
            "payload_len": self.payload_len,
            "training_seed": self.training_seed,
            "frame_start": self.frame_start,
            "n_bits": int(self.bits.size),
            "bits_hex": np.packbits(self.bits).tobytes().hex(),
            "indices": self.indices.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, d, block_len=256):
        spec = ModulationSpec.from_dict(d["modulation"])
        bits = np.unpackbits(np.frombuffer(bytes.fromhex(d["bits_hex"]), dtype=np.uint8))[: d["n_bits"]]
        modem = band_modem(spec, block_len)
        return cls(int(d["band_index"]), d["modulation"], int(d["training_len"]), int(d["payload_len"]),
                   int(d["training_seed"]), int(d["frame_start"]), bits.astype(np.uint8),
                   np.asarray(d["indices"], dtype=np.int64), training_symbols(d["training_len"], d["training_seed"]),
                   modem.constellation_.priors)


def build_frame(band: Band, spec: FrameSpec, payload_bits, block_len: int = 256):
    """``[training | payload]`` symbols for ``band`` and the truth record.

    ``payload_bits`` must fill the payload exactly: ``payload_len * m`` bits
    for uniform formats, or whole PAS blocks for PCS.
    """
    modem = band_modem(band.modulation, block_len)
    bits = np.asarray(payload_bits, dtype=np.uint8).ravel()
    idx = modem.bits_to_indices(bits) if bits.size else np.empty(0, dtype=np.int64)
    if idx.size != spec.payload_len:
        raise ParameterError(f"band {band.index}: {bits.size} bits give {idx.size} symbols, "
                             f"payload_len is {spec.payload_len}")
    train = training_symbols(spec.training_len, spec.training_seed)
    symbols = np.concatenate([train, modem.constellation_.points[idx]])
    rec = TruthRecord(band.index, band.modulation.to_dict(), int(spec.training_len), int(spec.payload_len),
                      int(spec.training_seed), 0, bits, idx, train, modem.constellation_.priors)
    return symbols, rec


def payload_bit_count(spec: ModulationSpec, payload_len: int, block_len: int = 256) -> int:
    modem = band_modem(spec, block_len)
    if payload_len % modem.symbols_per_block_:
        raise ParameterError(f"PCS payload length {payload_len} must be a multiple of {modem.symbols_per_block_}")
    return payload_len // modem.symbols_per_block_ * modem.bits_per_block_


@dataclass
class TxResult:
    waveform: RealWaveform
    truths: list
    band_powers: np.ndarray
    config: TxConfig

    def truth_json(self) -> str:
        return json.dumps({"schema_version": 1, "bands": [t.to_dict() for t in self.truths]})


def build_tx(cfg: TxConfig) -> TxResult:
    """Frame, shape and combine every band into one unit-RMS drive waveform."""
    plan = cfg.plan
    g = int(cfg.guard_symbols)
    duration = max((f.length + 2 * g) / b.baud for b, f in zip(plan, cfg.frames))
    n_samples = int(math.ceil(duration * cfg.fs_dac))
    waves, truths, powers = [], [], []
    for k, (band, fr) in enumerate(zip(plan, cfg.frames)):
        rng = np.random.default_rng([cfg.payload_seed, band.index])
        nbits = payload_bit_count(band.modulation, fr.payload_len, cfg.ccdm_block_len)
        bits = rng.integers(0, 2, nbits, dtype=np.uint8)
        frame, rec = build_frame(band, fr, bits, cfg.ccdm_block_len)
        slots = int(math.ceil(duration * band.baud)) + 1
        const = band_modem(band.modulation, cfg.ccdm_block_len).constellation_
        fill = const.points[rng.choice(const.order, size=slots, p=const.priors)]
        fill[g:g + frame.size] = frame
        rec.frame_start = g
        w = shape_band(fill, band, cfg.fs_dac, cfg.rrc_span)
        gain = 1.0
        if cfg.band_power_policy == "equal-psd":
            gain = math.sqrt(band.baud / np.mean([b.baud for b in plan]))
        if cfg.band_gains_db is not None:
            gain *= 10 ** (cfg.band_gains_db[k] / 20)
        waves.append(ComplexWaveform(w.samples[:n_samples] * gain, cfg.fs_dac))
        powers.append(float(np.mean(waves[-1].samples.real ** 2)))
        truths.append(rec)
    wave = combine_bands(waves, list(plan))
    total = sum(powers)
    return TxResult(wave, truths, np.asarray(powers) / total, cfg)


def net_rate(plan: BandPlan, frames: Sequence[FrameSpec]) -> float:
    """Line rate after removing the training overhead of each band."""
    if len(frames) != len(plan):
        raise ParameterError("need one FrameSpec per band")
    total = 0.0
    for b, f in zip(plan, frames):
        if f.length == 0:
            continue
        total += b.baud * b.modulation.rate_bits * f.payload_len / f.length
    return float(total)


def multicarrier_reference(rate_bps: float, fs: float, n_subcarriers: int = 256, order: int = 16,
                           n_blocks: int = 4096, seed: int = 0) -> RealWaveform:
    """Real-valued multicarrier (DMT) signal with the same line rate as an SCM plan.

    ``n_subcarriers`` QAM-``order`` tones fill ``[df, n_subcarriers * df]``
    with ``df`` chosen so the tones carry ``rate_bps``. Each block is one
    inverse FFT of a Hermitian-symmetric spectrum of ``fs / df`` bins, with
    no cyclic prefix. Returned at unit RMS, for PAPR comparison.
    """
    check_positive(rate_bps, "rate_bps")
    check_positive(fs, "fs")
    m = math.log2(order)
    df = rate_bps / (n_subcarriers * m)
    nfft = int(round(fs / df))
    if nfft < 2 * n_subcarriers + 2:
        raise ParameterError(f"fs {fs:g} too low for {n_subcarriers} tones at {df:g} Hz spacing")
    const = make_constellation(ModulationSpec("uniform", int(order)))
    rng = np.random.default_rng(seed)
    spec = np.zeros((int(n_blocks), nfft // 2 + 1), dtype=np.complex128)
    spec[:, 1:n_subcarriers + 1] = const.points[rng.integers(0, order, (int(n_blocks), n_subcarriers))]
    x = np.fft.irfft(spec, n=nfft, axis=1).ravel()
    return RealWaveform(x / math.sqrt(float(np.mean(x**2))), df * nfft)
