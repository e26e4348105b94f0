"""Waveform containers and generic DSP primitives.

Everything here is a pure function of its inputs. Filtering and resampling
compensate their own group delay, so the output of every stage stays
time-aligned with its input.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import signal

from ._validation import ParameterError

__all__ = [
    "ComplexWaveform",
    "RealWaveform",
    "FilterTaps",
    "design_rrc",
    "fir_filter",
    "frequency_shift",
    "resample",
    "as_fraction",
    "measure_papr",
    "mean_power",
    "write_waveform",
    "read_waveform",
    "export_csv",
]


class _Waveform:
    samples: np.ndarray
    sample_rate_hz: float

    def _check(self, dtype):
        x = np.array(self.samples, dtype=dtype, copy=True).ravel()
        if x.size < 1:
            raise ParameterError("waveform must contain at least one sample")
        if not np.all(np.isfinite(x)):
            raise ParameterError("waveform samples must be finite")
        rate = float(self.sample_rate_hz)
        if not (rate > 0 and math.isfinite(rate)):
            raise ParameterError(f"sample_rate_hz must be positive, got {rate}")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", rate)

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def with_samples(self, samples):
        """Return a waveform of the same kind and rate holding ``samples``."""
        return type(self)(samples, self.sample_rate_hz)


@dataclass(frozen=True, eq=False)
class ComplexWaveform(_Waveform):
    """Uniformly sampled complex signal. Samples are read-only."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        self._check(np.complex128)


@dataclass(frozen=True, eq=False)
class RealWaveform(_Waveform):
    """Uniformly sampled real signal. Samples are read-only."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        if np.iscomplexobj(self.samples):
            raise ParameterError("RealWaveform cannot hold complex samples")
        self._check(np.float64)


def _wrap_like(x, samples, rate=None):
    rate = x.sample_rate_hz if rate is None else rate
    if isinstance(x, RealWaveform):
        return RealWaveform(np.real(samples), rate)
    return ComplexWaveform(samples, rate)


@dataclass(frozen=True, eq=False)
class FilterTaps:
    """FIR coefficients with a declared gain normalisation.

    ``normalization`` is ``"energy"`` (sum of squares is one) or ``"dc"``
    (sum is one).
    """

    coefficients: np.ndarray
    normalization: str = "energy"

    def __post_init__(self):
        h = np.array(self.coefficients, dtype=np.float64, copy=True).ravel()
        if h.size < 1 or not np.all(np.isfinite(h)):
            raise ParameterError("filter taps must be a non-empty finite sequence")
        if self.normalization not in ("energy", "dc"):
            raise ParameterError(f"unknown normalization {self.normalization!r}")
        h.flags.writeable = False
        object.__setattr__(self, "coefficients", h)

    def __len__(self):
        return self.coefficients.size


def design_rrc(rolloff: float, span_symbols: int = 256, samples_per_symbol: int = 4) -> FilterTaps:
    """Root-raised-cosine taps of ``span_symbols * samples_per_symbol + 1`` length.

    The response is evaluated on a grid symmetric about the centre tap and
    mirrored, so the two halves are bit-identical. The points
    ``t = +-T / (4 rolloff)`` use the analytic limit. Taps have unit energy.
    """
    if not 0.0 <= rolloff <= 1.0:
        raise ParameterError(f"rolloff must be in [0, 1], got {rolloff}")
    if int(span_symbols) < 1 or int(samples_per_symbol) < 1:
        raise ParameterError("span_symbols and samples_per_symbol must be positive")
    sps = int(samples_per_symbol)
    n = int(span_symbols) * sps + 1
    centre = (n - 1) / 2
    t = (np.arange(math.ceil(centre), n) - centre) / sps  # non-negative half, in symbols
    b = float(rolloff)
    if b == 0.0:
        h = np.sinc(t)
    else:
        h = np.empty_like(t)
        zero = t == 0
        sing = np.isclose(t, 1.0 / (4.0 * b), rtol=0, atol=1e-9)
        ok = ~(zero | sing)
        tt = t[ok]
        num = np.sin(np.pi * tt * (1 - b)) + 4 * b * tt * np.cos(np.pi * tt * (1 + b))
        h[ok] = num / (np.pi * tt * (1 - (4 * b * tt) ** 2))
        h[zero] = 1.0 - b + 4.0 * b / np.pi
        h[sing] = (b / np.sqrt(2)) * (
            (1 + 2 / np.pi) * np.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
        )
    taps = np.concatenate([h[:0:-1] if n % 2 else h[::-1], h])
    taps /= np.sqrt(np.sum(taps**2))
    return FilterTaps(taps, "energy")


def fir_filter(x, h: FilterTaps | np.ndarray):
    """Linear convolution with the ``(len(h) - 1) / 2`` group delay removed.

    The output has the same length and sample rate as ``x``.
    """
    coeffs = h.coefficients if isinstance(h, FilterTaps) else np.asarray(h, dtype=np.float64)
    n = coeffs.size
    y = signal.oaconvolve(x.samples, coeffs) if n > 64 else np.convolve(x.samples, coeffs)
    start = (n - 1) // 2
    return _wrap_like(x, y[start:start + len(x)])


def frequency_shift(x: ComplexWaveform, f_c: float) -> ComplexWaveform:
    """Multiply sample ``n`` by ``exp(+j 2 pi f_c n / fs)``."""
    if f_c == 0:
        return ComplexWaveform(x.samples, x.sample_rate_hz)
    n = np.arange(len(x))
    # reduce the phase increment modulo one cycle to keep the argument small
    step = math.fmod(f_c / x.sample_rate_hz, 1.0)
    phase = 2 * np.pi * np.mod(step * n, 1.0)
    return ComplexWaveform(x.samples * np.exp(1j * phase), x.sample_rate_hz)


def as_fraction(ratio, max_denominator: int = 4096) -> Fraction:
    """Reduce ``ratio`` (number, Fraction or (num, den)) to a positive Fraction."""
    if isinstance(ratio, tuple):
        ratio = Fraction(int(ratio[0]), int(ratio[1]))
    elif not isinstance(ratio, Fraction):
        ratio = Fraction(ratio).limit_denominator(max_denominator)
    if ratio <= 0:
        raise ParameterError(f"resampling ratio must be positive, got {ratio}")
    return ratio


def _kaiser_beta(atten_db):
    if atten_db > 50:
        return 0.1102 * (atten_db - 8.7)
    if atten_db > 21:
        return 0.5842 * (atten_db - 21) ** 0.4 + 0.07886 * (atten_db - 21)
    return 0.0


@lru_cache(maxsize=64)
def _prototype(max_rate, half_length, atten_db):
    n_taps = 2 * half_length * max_rate + 1
    h = signal.firwin(n_taps, 1.0 / max_rate, window=("kaiser", _kaiser_beta(atten_db)))
    h.setflags(write=False)
    return h


def resample(x, ratio, *, image_rejection_db: float = 60.0, half_length: int = 32):
    """Rational resampling by ``ratio = up / down`` with a polyphase filter.

    The prototype is a Kaiser-windowed sinc cut off at the narrower Nyquist
    band, ``half_length`` zero crossings per side. Output rate is exactly
    ``fs * up / down`` and sample 0 of the output sits at sample 0 of the
    input.
    """
    frac = as_fraction(ratio)
    up, down = frac.numerator, frac.denominator
    if up == down:
        return _wrap_like(x, x.samples)
    h = _prototype(max(up, down), half_length, float(image_rejection_db))
    y = signal.resample_poly(x.samples, up, down, window=h)
    return _wrap_like(x, y, x.sample_rate_hz * up / down)


def mean_power(x) -> float:
    return float(np.mean(np.abs(x.samples) ** 2))


def measure_papr(x, percentile: float = 100.0) -> float:
    """Peak-to-average power ratio in dB at the given percentile of ``|x|^2``."""
    if not 0 < percentile <= 100:
        raise ParameterError(f"percentile must be in (0, 100], got {percentile}")
    p = np.abs(x.samples) ** 2
    avg = p.mean()
    if avg <= 0:
        raise ParameterError("cannot measure PAPR of a zero-power signal")
    peak = p.max() if percentile == 100 else np.percentile(p, percentile)
    return float(10 * np.log10(peak / avg))


# -- waveform files ---------------------------------------------------------

_MAGIC = b"WVFM"
_VERSION = 1
_HEADER = struct.Struct("<4sIdQI4x")  # 32 bytes, trailing pad reserved
_FLAG_COMPLEX = 0x1


def write_waveform(path, x) -> None:
    """Dump a waveform as a 32-byte header followed by float32 samples.

    Complex samples are interleaved (re, im).
    """
    is_complex = isinstance(x, ComplexWaveform)
    header = _HEADER.pack(_MAGIC, _VERSION, x.sample_rate_hz, len(x), _FLAG_COMPLEX if is_complex else 0)
    if is_complex:
        body = np.empty(2 * len(x), dtype="<f4")
        body[0::2] = x.samples.real
        body[1::2] = x.samples.imag
    else:
        body = x.samples.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body.tobytes())


def read_waveform(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ParameterError(f"{path}: truncated waveform header")
    magic, version, rate, length, flags = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ParameterError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise ParameterError(f"{path}: unsupported waveform version {version}")
    body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if flags & _FLAG_COMPLEX:
        if body.size != 2 * length:
            raise ParameterError(f"{path}: expected {2 * length} floats, found {body.size}")
        return ComplexWaveform(body[0::2].astype(np.float64) + 1j * body[1::2], rate)
    if body.size != length:
        raise ParameterError(f"{path}: expected {length} floats, found {body.size}")
    return RealWaveform(body.astype(np.float64), rate)


def export_csv(path, x) -> None:
    """Write ``index, re, im`` rows for inspection."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "re", "im"])
        s = x.samples
        for i in range(len(x)):
            w.writerow([i, repr(float(np.real(s[i]))), repr(float(np.imag(s[i])))])
