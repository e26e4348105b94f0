"""Physical link models: push-pull MZM, dispersive fiber, square-law PD,
noise injection and band-limited front ends.

Optical fields are complex envelopes in sqrt(W); photocurrents are in A.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import signal

from ._validation import ParameterError, check_positive
from .sigkit import ComplexWaveform, RealWaveform

__all__ = [
    "FiberParams",
    "MzmParams",
    "NoiseSpec",
    "FrontEnd",
    "small_signal_response",
    "null_frequencies",
    "mzm_modulate",
    "propagate_field",
    "photodetect",
    "compute_cspr",
    "scale_to_power",
    "add_noise",
    "frontend_response",
    "apply_frontend",
    "quantize",
    "REFERENCE_BANDWIDTH_HZ",
]

# 0.1 nm at 1550 nm
REFERENCE_BANDWIDTH_HZ = 12.5e9


@dataclass(frozen=True)
class FiberParams:
    """Group-velocity dispersion ``beta2`` in ps^2/km and length in km."""

    beta2: float = -21.7
    length: float = 50.0

    def __post_init__(self):
        if self.length < 0:
            raise ParameterError(f"fiber length must be >= 0, got {self.length}")

    @property
    def beta2_l_s2(self) -> float:
        """Accumulated dispersion beta2 * L in s^2."""
        return self.beta2 * 1e-24 * self.length


@dataclass(frozen=True)
class MzmParams:
    """Push-pull MZM. Field transfer is ``cos(pi/2 * (drive_scale*x + bias) / v_pi)``."""

    v_pi: float = 4.0
    bias: float = 2.0
    drive_scale: float = 0.35

    def __post_init__(self):
        check_positive(self.v_pi, "v_pi")


@dataclass(frozen=True)
class NoiseSpec:
    """Noise injection settings.

    ``mode`` is ``"osnr"`` (``value`` in dB over 0.1 nm, carrier included),
    ``"rop"`` (``value`` is the received power in dBm; thermal noise of
    ``thermal_density`` A/sqrt(Hz) one-sided is added after detection) or
    ``"off"``.
    """

    mode: str = "off"
    value: float = 0.0
    rng_seed: int = 0
    thermal_density: float = 20e-12

    def __post_init__(self):
        if self.mode not in ("osnr", "rop", "off"):
            raise ParameterError(f"unknown noise mode {self.mode!r}")
        if not math.isfinite(self.value):
            raise ParameterError("noise value must be finite")
        if self.mode == "rop" and not self.thermal_density > 0:
            raise ParameterError("thermal_density must be positive")


@dataclass(frozen=True)
class FrontEnd:
    """Band-limited converter or detector.

    Low-pass response is a Bessel (maximally flat delay) filter of ``order``
    with its 3 dB point at ``bandwidth_3db_hz``. Optional uniform mid-rise
    quantisation clips at ``clip_ratio`` times the RMS. ``quantize_first``
    puts the quantiser ahead of the filter, as in a DAC.
    """

    bandwidth_3db_hz: float
    order: int = 4
    resolution_bits: Optional[int] = None
    clip_ratio: Optional[float] = None
    quantize_first: bool = False

    def __post_init__(self):
        check_positive(self.bandwidth_3db_hz, "bandwidth_3db_hz")
        if int(self.order) < 1:
            raise ParameterError("front-end order must be >= 1")
        if self.resolution_bits is not None and not 4 <= int(self.resolution_bits) <= 16:
            raise ParameterError(f"resolution_bits must be in [4, 16], got {self.resolution_bits}")


def small_signal_response(fiber: FiberParams, f):
    """Power-fading gain ``cos(2 pi^2 beta2 L f^2)`` of a DSB IM/DD link."""
    f = np.asarray(f, dtype=np.float64)
    return np.cos(2 * np.pi**2 * fiber.beta2_l_s2 * f**2)


def null_frequencies(fiber: FiberParams, f_max: float):
    """Closed-form zeros of :func:`small_signal_response` below ``f_max``."""
    b2l = abs(fiber.beta2_l_s2)
    if b2l == 0:
        return np.array([])
    k_max = int(np.floor(4 * np.pi * b2l * f_max**2 / 2 - 0.5)) + 1
    k = np.arange(max(k_max, 0) + 1)
    f = np.sqrt((2 * k + 1) / (4 * np.pi * b2l))
    return f[f <= f_max]


def mzm_modulate(drive: RealWaveform, p: MzmParams, carrier_power: float) -> ComplexWaveform:
    """Chirp-free push-pull modulation of a CW carrier of ``carrier_power`` mW.

    The returned envelope is in sqrt(W), so ``|E|^2`` is optical power in W.
    """
    if not isinstance(drive, RealWaveform):
        raise ParameterError("MZM drive must be a RealWaveform")
    amp = math.sqrt(carrier_power * 1e-3)
    phase = (np.pi / 2) * (p.drive_scale * drive.samples + p.bias) / p.v_pi
    return ComplexWaveform(amp * np.cos(phase), drive.sample_rate_hz)


def _omega(n, fs):
    return 2 * np.pi * np.fft.fftfreq(n, 1.0 / fs)


def propagate_field(field: ComplexWaveform, fiber: FiberParams) -> ComplexWaveform:
    """All-pass dispersion ``exp(+j beta2/2 w^2 L)`` applied circularly."""
    if fiber.length == 0 or fiber.beta2 == 0:
        return ComplexWaveform(field.samples, field.sample_rate_hz)
    w = _omega(len(field), field.sample_rate_hz)
    h = np.exp(0.5j * fiber.beta2_l_s2 * w**2)
    return ComplexWaveform(np.fft.ifft(np.fft.fft(field.samples) * h), field.sample_rate_hz)


def photodetect(field: ComplexWaveform, responsivity: float = 1.0) -> RealWaveform:
    """Square-law detection, ``responsivity * |E|^2``."""
    return RealWaveform(responsivity * np.abs(field.samples) ** 2, field.sample_rate_hz)


def compute_cspr(field: ComplexWaveform) -> float:
    """Carrier-to-signal power ratio in dB."""
    x = field.samples
    mu = x.mean()
    p_carrier = abs(mu) ** 2
    p_signal = float(np.mean(np.abs(x - mu) ** 2))
    if p_signal <= 1e-300 or p_signal <= 1e-24 * p_carrier:
        raise ParameterError("unmodulated field: signal power is zero")
    if p_carrier <= 1e-20 * p_signal:
        raise ParameterError("field has no carrier: CSPR is -inf")
    return float(10 * np.log10(p_carrier / p_signal))


def scale_to_power(field: ComplexWaveform, power_dbm: float) -> ComplexWaveform:
    """Scale a field so its mean power equals ``power_dbm``."""
    p = float(np.mean(np.abs(field.samples) ** 2))
    if p <= 0:
        raise ParameterError("cannot scale a zero-power field")
    target = 1e-3 * 10 ** (power_dbm / 10)
    return ComplexWaveform(field.samples * math.sqrt(target / p), field.sample_rate_hz)


def add_noise(x, spec: NoiseSpec, rng: Optional[np.random.Generator] = None):
    """Inject noise according to ``spec``.

    OSNR mode takes an optical field and adds complex white ASE whose power
    in 12.5 GHz is the total field power divided by the OSNR. ROP mode takes
    a photocurrent and adds white thermal noise of the configured one-sided
    density (the field must already be scaled with :func:`scale_to_power`).
    ``rng`` defaults to a generator seeded from ``spec.rng_seed``.
    """
    if spec.mode == "off":
        return x.with_samples(x.samples)
    rng = np.random.default_rng(spec.rng_seed) if rng is None else rng
    fs = x.sample_rate_hz
    if spec.mode == "osnr":
        if not isinstance(x, ComplexWaveform):
            raise ParameterError("OSNR noise applies to an optical field")
        p_total = float(np.mean(np.abs(x.samples) ** 2))
        density = p_total / (10 ** (spec.value / 10) * REFERENCE_BANDWIDTH_HZ)
        var = density * fs
        if not var > 0:
            raise ParameterError("OSNR target gives non-positive noise power")
        n = rng.standard_normal((2, len(x)))
        return ComplexWaveform(x.samples + math.sqrt(var / 2) * (n[0] + 1j * n[1]), fs)
    if not isinstance(x, RealWaveform):
        raise ParameterError("thermal noise applies to a detected photocurrent")
    var = spec.thermal_density**2 * fs / 2
    return RealWaveform(x.samples + math.sqrt(var) * rng.standard_normal(len(x)), fs)


def frontend_response(fe: FrontEnd, f):
    """Complex Bessel response at ``f`` (Hz) with its DC group delay removed."""
    b, a = signal.bessel(fe.order, 2 * np.pi * fe.bandwidth_3db_hz, analog=True, norm="mag")
    w = 2 * np.pi * np.asarray(f, dtype=np.float64)
    _, h = signal.freqs(b, a, w)
    # DC group delay of the all-pole Bessel prototype: a1 / a0
    tau0 = a[-2] / a[-1]
    return h * np.exp(1j * w * tau0)


def quantize(samples, bits: int, clip_ratio: float):
    """Uniform mid-rise quantiser with full scale ``clip_ratio * RMS``."""
    x = np.asarray(samples)
    if np.iscomplexobj(x):
        return quantize(x.real, bits, clip_ratio) + 1j * quantize(x.imag, bits, clip_ratio)
    rms = math.sqrt(float(np.mean(x**2)))
    if rms == 0:
        return x.copy()
    full = clip_ratio * rms
    step = 2 * full / 2**bits
    q = step * (np.floor(x / step) + 0.5)
    return np.clip(q, -full + step / 2, full - step / 2)


def apply_frontend(x, fe: FrontEnd):
    """Low-pass filter (circular, delay-compensated) and optional quantiser."""
    def _q(s):
        if fe.resolution_bits is None:
            return s
        return quantize(s, int(fe.resolution_bits), fe.clip_ratio if fe.clip_ratio else 4.0)

    s = np.asarray(x.samples)
    if fe.quantize_first:
        s = _q(s)
    n, fs = s.size, x.sample_rate_hz
    if isinstance(x, RealWaveform):
        h = frontend_response(fe, np.fft.rfftfreq(n, 1.0 / fs))
        s = np.fft.irfft(np.fft.rfft(s) * h, n)
    else:
        h = frontend_response(fe, np.abs(np.fft.fftfreq(n, 1.0 / fs)))
        # negative frequencies see the conjugate response of a real filter
        neg = np.fft.fftfreq(n, 1.0 / fs) < 0
        h[neg] = np.conj(h[neg])
        s = np.fft.ifft(np.fft.fft(s) * h)
    if not fe.quantize_first:
        s = _q(s)
    return x.with_samples(s)
