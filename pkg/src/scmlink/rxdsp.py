"""Per-band receive chain: down-conversion, matched filtering,
synchronisation, LMS feed-forward equalisation, two-tap post filter and
one-memory MLSE.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np
from sklearn.base import BaseEstimator

from ._validation import EqualizerDivergedError, ParameterError, SyncError, check_symbols
from .bandplan import Band
from .modem import ShapedConstellation
from .sigkit import ComplexWaveform, RealWaveform, design_rrc, fir_filter, frequency_shift, resample

__all__ = [
    "EqualizerConfig",
    "PostFilterCoef",
    "MlseConfig",
    "RxDspParams",
    "downconvert_band",
    "synchronize",
    "ffe_equalize",
    "post_filter",
    "mlse_detect",
    "recover_band",
    "calibrate_alpha",
    "LmsEqualizer",
    "PostFilter",
    "MlseDetector",
    "BandRecovery",
]


@dataclass(frozen=True)
class EqualizerConfig:
    num_taps: int = 21
    mu_train: float = 5e-3
    mu_dd: float = 1e-3
    train_passes: int = 3
    divergence_window: int = 256

    def __post_init__(self):
        if int(self.num_taps) < 1 or int(self.num_taps) % 2 == 0:
            raise ParameterError(f"num_taps must be a positive odd integer, got {self.num_taps}")
        for name in ("mu_train", "mu_dd"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ParameterError(f"{name} must be in (0, 1), got {v}")
        if int(self.train_passes) < 1:
            raise ParameterError("train_passes must be >= 1")


@dataclass(frozen=True)
class PostFilterCoef:
    alpha: float = 0.0

    def __post_init__(self):
        if not -1 < self.alpha < 1:
            raise ParameterError(f"post-filter alpha must satisfy |alpha| < 1, got {self.alpha}")


@dataclass(frozen=True)
class MlseConfig:
    memory: int = 1
    traceback_depth: int = 32
    use_priors: bool = False

    def __post_init__(self):
        if self.memory != 1:
            raise ParameterError("only memory 1 is supported")
        if int(self.traceback_depth) < 8:
            raise ParameterError("traceback_depth must be >= 8")


# -- down-conversion ----------------------------------------------------------

def downconvert_band(rx: RealWaveform, band: Band, samples_per_symbol: int = 4, span: int = 256,
                     return_phases: bool = False):
    """Shift ``band`` to baseband, matched-filter and pick one sample per symbol.

    The signal is resampled to ``samples_per_symbol * baud``, filtered with
    the band's RRC, and decimated at the phase with the largest mean power.
    Output is scaled by ``sqrt(2)`` so that a unit-power band comes back at
    unit symbol energy (the real part halves the power).
    """
    fs = rx.sample_rate_hz
    if band.occupied[1] > fs / 2:
        raise ParameterError(f"band {band.index} lies above the receiver Nyquist frequency")
    sps = int(samples_per_symbol)
    x = frequency_shift(ComplexWaveform(rx.samples, fs), -band.f_center)
    x = resample(x, band.baud * sps / fs)
    x = ComplexWaveform(x.samples, band.baud * sps)
    taps = design_rrc(band.rolloff, span, sps).coefficients
    # a matched filter normalised so the Nyquist pulse peaks at one
    y = fir_filter(x, taps / math.sqrt(sps)).samples * math.sqrt(2)
    n = y.size // sps
    y = y[: n * sps].reshape(n, sps)
    power = np.mean(np.abs(y) ** 2, axis=0)
    phase = int(np.argmax(power))
    out = y[:, phase].copy()
    return (out, phase, power) if return_phases else out


# -- synchronisation ----------------------------------------------------------

def synchronize(symbols, training, min_ratio: float = 3.0, return_details: bool = False):
    """Offset of ``training`` inside ``symbols`` by FFT cross-correlation.

    The quarter-turn ambiguity is resolved by picking the rotation that
    makes the peak correlation most nearly real and positive; the complex
    gain at the peak is also returned when ``return_details`` is set.
    """
    y = check_symbols(symbols, "symbols")
    t = check_symbols(training, "training")
    if t.size > y.size:
        raise SyncError("training is longer than the received stream")
    n = 1 << int(math.ceil(math.log2(y.size + t.size)))
    c = np.fft.ifft(np.fft.fft(y, n) * np.conj(np.fft.fft(t, n)))[: y.size - t.size + 1]
    mag = np.abs(c)
    k = int(np.argmax(mag))
    peak = mag[k]
    if not peak > 0:
        raise SyncError("training not found: received stream is silent")
    side = np.delete(mag, np.arange(max(0, k - 2), min(mag.size, k + 3)))
    ref = float(np.sqrt(np.mean(side**2))) if side.size else 0.0
    ratio = peak / ref if ref > 0 else np.inf
    if not ratio >= min_ratio:
        raise SyncError(f"training not found: peak-to-side ratio {ratio:.2f} < {min_ratio}")
    gain = c[k] / float(np.vdot(t, t).real)
    rot = int(np.round(np.angle(gain) / (np.pi / 2))) % 4
    if return_details:
        return k, {"gain": complex(gain), "rotation": rot, "peak_to_side": float(ratio)}
    return k


# -- LMS feed-forward equaliser ----------------------------------------------

@numba.njit(cache=True)
def _nearest_point(v, pts):
    best = 0
    bd = np.inf
    for i in range(pts.size):
        d = (v.real - pts[i].real) ** 2 + (v.imag - pts[i].imag) ** 2
        if d < bd:
            bd = d
            best = i
    return pts[best]


@numba.njit(cache=True)
def _lms_core(y, train, pts, w, mu_t, mu_dd, passes, n_out, window):
    """Returns (q, w, status, mse_train, last_good_w).

    ``y`` is padded by ``ntap // 2`` zeros on both sides; output sample n
    uses ``y[n : n + ntap]`` (reversed against the taps).
    """
    ntap = w.size
    T = train.size
    q = np.zeros(n_out, dtype=np.complex128)
    good = w.copy()
    mse_t = 0.0
    for p in range(passes):
        acc = 0.0
        for n in range(T):
            seg = y[n:n + ntap][::-1]
            out = 0j
            for k in range(ntap):
                out += w[k] * seg[k]
            e = train[n] - out
            acc += e.real * e.real + e.imag * e.imag
            for k in range(ntap):
                w[k] += mu_t * e * np.conj(seg[k])
        mse_t = acc / max(T, 1)
    good[:] = w
    best = np.inf
    wacc = 0.0
    wcnt = 0
    for n in range(n_out):
        seg = y[n:n + ntap][::-1]
        out = 0j
        for k in range(ntap):
            out += w[k] * seg[k]
        q[n] = out
        if n < T:
            d = train[n]
        else:
            d = _nearest_point(out, pts)
        e = d - out
        if n >= T:
            for k in range(ntap):
                w[k] += mu_dd * e * np.conj(seg[k])
        wacc += e.real * e.real + e.imag * e.imag
        wcnt += 1
        if wcnt == window:
            m = wacc / window
            if not np.isfinite(m) or (m > 10.0 * best and m > 1e-3):
                return q, w, 1, mse_t, good
            if m < best:
                best = m
                good[:] = w
            wacc = 0.0
            wcnt = 0
    return q, w, 0, mse_t, good


def ffe_equalize(symbols, training, cfg: EqualizerConfig, constellation: ShapedConstellation,
                 return_details: bool = False):
    """Symbol-spaced complex FFE: LMS on the training block, then DD-LMS.

    ``symbols`` starts with the training block. Taps start as a centre
    spike and are trained for ``cfg.train_passes`` passes over the training
    block before switching to decision-directed tracking.
    """
    y = check_symbols(symbols, "symbols")
    t = check_symbols(training, "training", min_length=0) if np.size(training) else np.zeros(0, complex)
    ntap = int(cfg.num_taps)
    if t.size < 3 * ntap:
        warnings.warn(f"training of {t.size} symbols is short for {ntap} taps", RuntimeWarning, stacklevel=2)
    h = ntap // 2
    ypad = np.concatenate([np.zeros(h, complex), y, np.zeros(h, complex)])
    w = np.zeros(ntap, dtype=np.complex128)
    w[h] = 1.0
    q, w, status, mse_t, good = _lms_core(ypad, t, np.ascontiguousarray(constellation.points), w,
                                          float(cfg.mu_train), float(cfg.mu_dd), int(cfg.train_passes),
                                          y.size, int(cfg.divergence_window))
    if status:
        raise EqualizerDivergedError("LMS diverged: windowed MSE grew tenfold", taps=good)
    if return_details:
        e = q[: t.size] - t
        mse = float(np.mean(np.abs(e) ** 2)) if t.size else float("nan")
        return q, {"taps": w, "mse_train": mse_t, "mse_db": 10 * math.log10(mse) if mse > 0 else -np.inf}
    return q


# -- post filter and MLSE -----------------------------------------------------

def post_filter(q, coef: PostFilterCoef):
    """``p(n) = q(n) + alpha q(n-1)`` with ``q(-1) = 0``."""
    q = np.asarray(q, dtype=np.complex128).ravel()
    p = q.copy()
    if coef.alpha:
        p[1:] += coef.alpha * q[:-1]
    return p


@numba.njit(cache=True)
def _viterbi(p, pts, alpha, logp, weight, depth):
    N = p.size
    M = pts.size
    out = np.empty(N, dtype=np.int64)
    if N == 0:
        return out
    surv = np.empty((N, M), dtype=np.int32)
    cost = np.empty(M)
    new = np.empty(M)
    for s in range(M):
        d = p[0] - pts[s]
        cost[s] = d.real * d.real + d.imag * d.imag - weight * logp[s]
        surv[0, s] = -1
    for n in range(1, N):
        for s in range(M):
            r = p[n] - pts[s]
            bm_best = np.inf
            arg = 0
            for u in range(M):
                d = r - alpha * pts[u]
                c = cost[u] + d.real * d.real + d.imag * d.imag
                if c < bm_best:
                    bm_best = c
                    arg = u
            new[s] = bm_best - weight * logp[s]
            surv[n, s] = arg
        mn = np.inf
        for s in range(M):
            cost[s] = new[s]
            if cost[s] < mn:
                mn = cost[s]
        for s in range(M):
            cost[s] -= mn
        if n >= depth:
            # fixed-lag decision for symbol n - depth
            b = 0
            for s in range(1, M):
                if cost[s] < cost[b]:
                    b = s
            st = b
            for k in range(n, n - depth, -1):
                st = surv[k, st]
            out[n - depth] = st
    b = 0
    for s in range(1, M):
        if cost[s] < cost[b]:
            b = s
    st = b
    start = max(N - depth, 0)
    for k in range(N - 1, start - 1, -1):
        out[k] = st
        if k > 0:
            st = surv[k, st]
    return out


def mlse_detect(p, coef: PostFilterCoef, constellation: ShapedConstellation, cfg: MlseConfig = MlseConfig(),
                noise_var: Optional[float] = None, return_indices: bool = False):
    """Viterbi detection of the known one-tap ISI left by :func:`post_filter`.

    Branch metric ``|p(n) - s_n - alpha s_{n-1}|^2`` with ``s_{-1} = 0``;
    with ``cfg.use_priors`` the metric also subtracts ``noise_var ln P(s_n)``.
    Decisions use a fixed lag of ``cfg.traceback_depth`` and the tail is
    flushed from the best final state.
    """
    p = np.asarray(p, dtype=np.complex128).ravel()
    pts = np.ascontiguousarray(constellation.points)
    weight = 0.0
    if cfg.use_priors:
        if noise_var is None or not noise_var > 0:
            raise ParameterError("prior-weighted MLSE needs a positive noise_var")
        weight = float(noise_var)
    logp = np.log(np.maximum(constellation.priors, 1e-300))
    idx = _viterbi(p, pts, float(coef.alpha), logp, weight, int(cfg.traceback_depth))
    return idx if return_indices else constellation.points[idx]


# -- estimator wrappers -------------------------------------------------------

class LmsEqualizer(BaseEstimator):
    """``fit(X, y)`` adapts on received ``X`` whose head matches training ``y``."""

    def __init__(self, num_taps=21, mu_train=5e-3, mu_dd=1e-3, train_passes=3, constellation=None):
        self.num_taps = num_taps
        self.mu_train = mu_train
        self.mu_dd = mu_dd
        self.train_passes = train_passes
        self.constellation = constellation

    def _cfg(self):
        return EqualizerConfig(self.num_taps, self.mu_train, self.mu_dd, self.train_passes)

    def fit(self, X, y):
        q, det = ffe_equalize(X, y, self._cfg(), self.constellation, return_details=True)
        self.taps_ = det["taps"]
        self.mse_db_ = det["mse_db"]
        self.output_ = q
        return self

    def fit_transform(self, X, y):
        return self.fit(X, y).output_


class PostFilter(BaseEstimator):
    def __init__(self, alpha=0.0):
        self.alpha = alpha

    def fit(self, X=None, y=None):
        self.coef_ = PostFilterCoef(self.alpha)
        return self

    def transform(self, X):
        return post_filter(X, PostFilterCoef(self.alpha))


class MlseDetector(BaseEstimator):
    def __init__(self, alpha=0.0, constellation=None, traceback_depth=32, use_priors=False, noise_var=None):
        self.alpha = alpha
        self.constellation = constellation
        self.traceback_depth = traceback_depth
        self.use_priors = use_priors
        self.noise_var = noise_var

    def fit(self, X=None, y=None):
        return self

    def predict(self, X):
        return mlse_detect(X, PostFilterCoef(self.alpha), self.constellation,
                           MlseConfig(1, self.traceback_depth, self.use_priors), self.noise_var,
                           return_indices=True)


# -- full band chain ----------------------------------------------------------

@dataclass(frozen=True)
class RxDspParams:
    equalizer: EqualizerConfig = EqualizerConfig()
    post_filter: PostFilterCoef = PostFilterCoef()
    mlse: MlseConfig = MlseConfig()
    use_mlse: bool = True
    samples_per_symbol: int = 4
    rrc_span: int = 256


@dataclass
class BandRecovery:
    indices: np.ndarray          # decided payload point indices
    q: np.ndarray                # FFE output over training + payload
    p: np.ndarray                # post-filter output
    soft: np.ndarray             # p with the decided ISI term removed (LLR input)
    noise_var: float
    diagnostics: dict = field(default_factory=dict)


def _evm_db(y, ref):
    e = np.mean(np.abs(y - ref) ** 2)
    return float(10 * np.log10(e / np.mean(np.abs(ref) ** 2))) if e > 0 else -np.inf


def recover_band(rx: RealWaveform, band: Band, training, payload_len: int, constellation: ShapedConstellation,
                 params: RxDspParams = RxDspParams()) -> BandRecovery:
    """Downconvert, synchronise, equalise, post-filter and detect one band.

    Returns the decided payload indices and the soft symbols used for LLRs.
    With ``params.use_mlse`` off, decisions are minimum-distance on the FFE
    output and the post filter is skipped.
    """
    t = np.asarray(training, dtype=np.complex128)
    y = downconvert_band(rx, band, params.samples_per_symbol, params.rrc_span)
    off, det = synchronize(y, t, return_details=True)
    L = t.size + int(payload_len)
    if off + L > y.size:
        raise SyncError(f"band {band.index}: frame at {off} runs past the end of the capture")
    seg = y[off: off + L] / det["gain"]
    evm_sync = _evm_db(seg[: t.size], t)
    q, eq = ffe_equalize(seg, t, params.equalizer, constellation, return_details=True)
    alpha = params.post_filter.alpha if params.use_mlse else 0.0
    p = post_filter(q, PostFilterCoef(alpha))
    # reference for the known ISI over the training block
    t_prev = np.concatenate([[0], t[:-1]]) if t.size else t
    err_t = p[: t.size] - (t + alpha * t_prev)
    noise_var = float(np.mean(np.abs(err_t) ** 2)) if t.size else float(np.mean(np.abs(q - constellation.points[constellation.nearest(q)]) ** 2))
    noise_var = max(noise_var, 1e-12)
    pay_p = p[t.size:]
    if params.use_mlse:
        # start the trellis on the last training symbol so s_{-1} is known
        lead = p[t.size:].copy()
        if t.size:
            lead[0] -= alpha * t[-1]
        idx = mlse_detect(lead, PostFilterCoef(alpha), constellation, params.mlse, noise_var, return_indices=True)
    else:
        idx = constellation.nearest(q[t.size:])
    dec = constellation.points[idx]
    prev = np.concatenate([[t[-1] if t.size else 0], dec[:-1]])
    soft = pay_p - alpha * prev
    diag = {
        "sync_offset": int(off),
        "sync_peak_to_side": det["peak_to_side"],
        "mse_db": eq["mse_db"],
        "evm_sync_db": evm_sync,
        "evm_ffe_db": _evm_db(q[t.size:], dec),
        "noise_var": noise_var,
        "alpha": alpha,
    }
    return BandRecovery(idx, q, p, soft, noise_var, diag)


def calibrate_alpha(q_train, training, constellation: ShapedConstellation, grid=None, cfg: MlseConfig = MlseConfig()):
    """Pick the post-filter alpha that minimises symbol errors over the training block."""
    grid = np.round(np.arange(0.0, 0.75, 0.1), 2) if grid is None else np.asarray(grid)
    t = np.asarray(training, dtype=np.complex128)
    best, best_err = 0.0, np.inf
    for a in grid:
        p = post_filter(q_train, PostFilterCoef(float(a)))
        d = mlse_detect(p, PostFilterCoef(float(a)), constellation, cfg)
        err = int(np.sum(np.abs(d - t) > 1e-9))
        if err < best_err:
            best, best_err = float(a), err
    return best
