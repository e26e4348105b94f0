"""Channel estimation from a wideband probe and multi-rate band planning.

The planner splits the spectrum at the power-fading nulls, then inside each
inter-null segment keeps the stretch whose response stays within
``drop_db`` of the segment peak. Each stretch becomes one subcarrier band.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage, signal
from sklearn.base import BaseEstimator

from ._validation import ChannelUnusableError, ParameterError, check_positive
from .modem import ModulationSpec
from .sigkit import RealWaveform

__all__ = [
    "ChannelEstimate",
    "Band",
    "BandPlan",
    "estimate_channel",
    "analytic_estimate",
    "find_spectral_nulls",
    "plan_bands",
    "assign_rolloff",
    "aggregate_rate",
    "BandPlanner",
    "ROLLOFF_CANDIDATES",
]

ROLLOFF_CANDIDATES = (0.1, 0.05, 0.01)
FLOOR_DB = -60.0


@dataclass(frozen=True, eq=False)
class ChannelEstimate:
    """Magnitude response in dB on an ascending frequency grid."""

    freqs: np.ndarray
    magnitude_db: np.ndarray
    resolution_hz: float

    def __post_init__(self):
        f = np.array(self.freqs, dtype=np.float64, copy=True).ravel()
        m = np.array(self.magnitude_db, dtype=np.float64, copy=True).ravel()
        if f.size != m.size or f.size < 3:
            raise ParameterError("freqs and magnitude_db must have equal length >= 3")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(m))):
            raise ParameterError("channel estimate must be finite")
        if np.any(np.diff(f) <= 0):
            raise ParameterError("freqs must be strictly ascending")
        check_positive(self.resolution_hz, "resolution_hz")
        f.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "magnitude_db", m)
        object.__setattr__(self, "resolution_hz", float(self.resolution_hz))

    def gain_at(self, f):
        """Linearly interpolated dB response at ``f``."""
        return np.interp(f, self.freqs, self.magnitude_db)


@dataclass(frozen=True)
class Band:
    """One subcarrier band. ``segment`` is the inter-null interval it lives in."""

    index: int
    f_center: float
    baud: float
    rolloff: float = 0.1
    modulation: ModulationSpec = field(default_factory=ModulationSpec)
    segment: Optional[tuple] = None

    def __post_init__(self):
        check_positive(self.baud, "baud")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ParameterError(f"rolloff must be in [0, 1], got {self.rolloff}")

    @property
    def occupied(self):
        half = (1 + self.rolloff) * self.baud / 2
        return self.f_center - half, self.f_center + half

    def to_dict(self):
        d = {
            "index": self.index,
            "f_center_hz": self.f_center,
            "baud_hz": self.baud,
            "rolloff": self.rolloff,
            "modulation": self.modulation.to_dict(),
        }
        if self.segment is not None:
            d["segment_hz"] = list(self.segment)
        return d

    @classmethod
    def from_dict(cls, d):
        seg = d.get("segment_hz")
        return cls(
            int(d["index"]),
            float(d["f_center_hz"]),
            float(d["baud_hz"]),
            float(d.get("rolloff", 0.1)),
            ModulationSpec.from_dict(d.get("modulation", {"order": 4})),
            tuple(seg) if seg is not None else None,
        )


@dataclass(frozen=True)
class BandPlan:
    bands: tuple
    f_max: float
    drop_db: float = 10.0

    def __post_init__(self):
        bands = tuple(self.bands)
        if not bands:
            raise ParameterError("a band plan needs at least one band")
        object.__setattr__(self, "bands", bands)
        centers = [b.f_center for b in bands]
        if any(b <= a for a, b in zip(centers, centers[1:])):
            raise ParameterError("bands must be ordered by ascending center frequency")
        for b in bands:
            lo, hi = b.occupied
            if lo < -1e-6 or hi > self.f_max * (1 + 1e-9) + 1e-6:
                raise ParameterError(
                    f"band {b.index} occupies [{lo:.4g}, {hi:.4g}] Hz, outside [0, {self.f_max:.4g}]"
                )
        for a, b in zip(bands, bands[1:]):
            if a.occupied[1] > b.occupied[0]:
                raise ParameterError(f"bands {a.index} and {b.index} overlap")

    def __len__(self):
        return len(self.bands)

    def __iter__(self):
        return iter(self.bands)

    def __getitem__(self, i):
        return self.bands[i]

    def with_bands(self, bands):
        return replace(self, bands=tuple(bands))

    def to_dict(self):
        return {
            "f_max_hz": self.f_max,
            "drop_db": self.drop_db,
            "bands": [b.to_dict() for b in self.bands],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(Band.from_dict(b) for b in d["bands"]), float(d["f_max_hz"]),
                   float(d.get("drop_db", 10.0)))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def estimate_channel(tx_probe: RealWaveform, rx_probe: RealWaveform, resolution_hz: float,
                     smoothing_bins: int = 5, method: str = "h1") -> ChannelEstimate:
    """Power gain of the link seen by a wideband probe, from Welch spectra.

    ``method="h1"`` uses the cross-spectral estimate ``|Pxy / Pxx|^2``,
    which averages out noise and distortion uncorrelated with the probe
    (the probes must be time aligned to well within one segment).
    ``method="ratio"`` uses ``Pyy / Pxx`` and needs no alignment but counts
    noise as signal.

    Segments are ``fs / resolution_hz`` samples long with a Hann window. The
    linear gain is smoothed by a ``smoothing_bins`` moving average, then
    converted to dB, normalised to a 0 dB maximum and floored at -60 dB.
    Bins where the probe carries no power are set to the floor.
    """
    if method not in ("h1", "ratio"):
        raise ParameterError(f"unknown estimation method {method!r}")
    fs = tx_probe.sample_rate_hz
    if rx_probe.sample_rate_hz != fs:
        raise ParameterError("tx and rx probes must share a sample rate")
    check_positive(resolution_hz, "resolution_hz")
    nper = int(round(fs / resolution_hz))
    n = min(len(tx_probe), len(rx_probe))
    if nper < 8 or nper > n:
        raise ParameterError(f"resolution {resolution_hz:g} Hz incompatible with probe length {n}")
    f, sx = signal.welch(tx_probe.samples[:n], fs, nperseg=nper)
    if method == "h1":
        _, sxy = signal.csd(tx_probe.samples[:n], rx_probe.samples[:n], fs, nperseg=nper)
        sy = np.abs(sxy) ** 2 / np.where(sx > 0, sx, 1.0)
    else:
        _, sy = signal.welch(rx_probe.samples[:n], fs, nperseg=nper)
    dead = sx <= 1e-12 * max(sx.max(), 1e-300)
    ratio = np.where(dead, 0.0, sy / np.where(dead, 1.0, sx))
    if smoothing_bins > 1:
        ratio = ndimage.uniform_filter1d(ratio, int(smoothing_bins), mode="nearest")
    peak = ratio.max()
    if peak <= 0:
        raise ChannelUnusableError("received probe carries no power")
    with np.errstate(divide="ignore"):
        db = 10 * np.log10(ratio / peak)
    db = np.maximum(db, FLOOR_DB)
    db[dead] = FLOOR_DB
    return ChannelEstimate(f, db, fs / nper)


def analytic_estimate(fiber, f_max: float, resolution_hz: float, frontends: Sequence = ()) -> ChannelEstimate:
    """Noise-free estimate from the small-signal fading law times front-end roll-offs."""
    from .channel import frontend_response, small_signal_response

    f = np.arange(0.0, f_max + resolution_hz / 2, resolution_hz)
    lin = np.abs(small_signal_response(fiber, f))
    for fe in frontends:
        lin = lin * np.abs(frontend_response(fe, f))
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(lin / lin.max())
    return ChannelEstimate(f, np.maximum(db, FLOOR_DB), resolution_hz)


def find_spectral_nulls(est: ChannelEstimate, floor_db: float = -15.0):
    """Local minima of the response below ``floor_db``, refined by parabolic fit.

    Flat-bottomed minima (plateaus) count once, at their centre.
    """
    d = est.magnitude_db
    f = est.freqs
    df = est.resolution_hz
    out = []
    i, n = 1, d.size
    while i < n - 1:
        if d[i] >= floor_db or d[i] > d[i - 1]:
            i += 1
            continue
        j = i
        while j + 1 < n and d[j + 1] == d[i]:
            j += 1
        if j + 1 >= n or d[j + 1] < d[i] or d[i - 1] == d[i]:
            i = j + 1
            continue
        if j > i:
            fn = 0.5 * (f[i] + f[j])
        else:
            y0, y1, y2 = d[i - 1], d[i], d[i + 1]
            den = y0 - 2 * y1 + y2
            shift = 0.5 * (y0 - y2) / den if den > 0 else 0.0
            fn = f[i] + float(np.clip(shift, -0.5, 0.5)) * (f[i + 1] - f[i])
        if out and fn - out[-1] < 2 * df:
            # keep the deeper of two close minima
            if d[i] < est.gain_at(out[-1]):
                out[-1] = fn
        else:
            out.append(fn)
        i = j + 1
    return out


def _walk(freqs, db, lo, hi, drop_db):
    """Interpolated ``-drop_db`` crossings around the peak inside [lo, hi]."""
    m = (freqs >= lo) & (freqs <= hi)
    idx = np.nonzero(m)[0]
    if idx.size < 2:
        return None
    seg = db[idx]
    p = int(np.argmax(seg))
    thr = seg[p] - drop_db
    a = p
    while a > 0 and seg[a - 1] >= thr:
        a -= 1
    b = p
    while b < seg.size - 1 and seg[b + 1] >= thr:
        b += 1
    fs_ = freqs[idx]

    def cross(k_in, k_out):
        y0, y1 = seg[k_in], seg[k_out]
        t = (y0 - thr) / (y0 - y1) if y0 != y1 else 0.0
        return fs_[k_in] + t * (fs_[k_out] - fs_[k_in])

    f_lo = cross(a, a - 1) if a > 0 else None
    f_hi = cross(b, b + 1) if b < seg.size - 1 else None
    return f_lo, f_hi, float(seg[p])


def plan_bands(est: ChannelEstimate, f_max: float, drop_db: float = 10.0, guard_hz: float = 100e6,
               *, floor_db: float = -15.0, min_baud_hz: float = 0.5e9, dc_guard_hz: float = 0.5e9,
               rolloff: float = min(ROLLOFF_CANDIDATES)) -> BandPlan:
    """Derive one band per inter-null segment.

    The first segment starts at ``dc_guard_hz`` so band 1 keeps clear of the
    optical carrier. Within each segment the two ``drop_db`` crossings
    around the peak define the band: baud is their spacing less
    ``guard_hz`` and the centre is their midpoint. If the walk reaches a
    null without crossing (shallow or smoothed-over null), that edge is
    placed ``guard_hz`` short of the null. Bands at or below
    ``min_baud_hz`` are dropped. Every band starts with the smallest
    candidate ``rolloff``; :func:`assign_rolloff` widens it where affordable.
    """
    check_positive(f_max, "f_max")
    if not drop_db > 0:
        raise ParameterError("drop_db must be positive")
    if est.freqs[-1] < f_max - est.resolution_hz:
        raise ParameterError("channel estimate does not cover f_max")
    nulls = [x for x in find_spectral_nulls(est, floor_db) if 0 < x < f_max]
    edges = [min(dc_guard_hz, f_max)] + nulls + [f_max]
    bands = []
    for k, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        if hi - lo <= 0:
            continue
        w = _walk(est.freqs, est.magnitude_db, lo, hi, drop_db)
        if w is None:
            continue
        f_lo, f_hi, _ = w
        # a walk that runs into a null without crossing stops short of it
        if f_lo is None:
            f_lo = lo if k == 0 else lo + guard_hz
        if f_hi is None:
            f_hi = hi if hi >= f_max else hi - guard_hz
        f_lo, f_hi = max(f_lo, lo), min(f_hi, hi)
        baud = (f_hi - f_lo) - guard_hz
        if baud <= min_baud_hz:
            continue
        bands.append(Band(len(bands) + 1, 0.5 * (f_lo + f_hi), baud, rolloff,
                          segment=(float(0.0 if lo == edges[0] else lo), float(hi))))
    if not bands:
        raise ChannelUnusableError(f"channel unusable at requested drop_db={drop_db}")
    return BandPlan(tuple(bands), f_max, drop_db)


def _fits_segment(b: Band, margin=0.0):
    if b.segment is None:
        return True
    lo, hi = b.occupied
    return lo >= b.segment[0] + margin and hi <= b.segment[1] - margin


def assign_rolloff(plan: BandPlan, candidates: Sequence[float] = ROLLOFF_CANDIDATES,
                   clearance_hz: float = 150e6) -> BandPlan:
    """Give each band the largest candidate roll-off it can afford.

    A candidate is affordable when the occupied band keeps ``clearance_hz``
    away from both ends of its inter-null segment and does not reach the
    neighbouring bands. Bands without a recorded segment are only checked
    against ``[0, f_max]`` and their neighbours. When nothing fits, the
    smallest candidate is used.
    """
    cands = sorted({float(c) for c in candidates}, reverse=True)
    if not cands:
        raise ParameterError("need at least one roll-off candidate")
    bands = list(plan)
    out = []
    for k, b in enumerate(bands):
        chosen = cands[-1]
        for c in cands:
            nb = replace(b, rolloff=c)
            lo, hi = nb.occupied
            if lo < 0 or hi > plan.f_max or not _fits_segment(nb, clearance_hz):
                continue
            if out and lo < out[-1].occupied[1]:
                continue
            if k + 1 < len(bands) and hi > bands[k + 1].occupied[0]:
                continue
            chosen = c
            break
        out.append(replace(b, rolloff=chosen))
    return plan.with_bands(out)


def aggregate_rate(plan: BandPlan) -> float:
    """Sum of baud times bits (or entropy) per symbol, in bit/s."""
    return float(sum(b.baud * b.modulation.rate_bits for b in plan))


class BandPlanner(BaseEstimator):
    """Estimator wrapper: ``fit`` on an estimate (or probe pair), read ``plan_``.

    Parameters
    ----------
    f_max : float
        Upper edge of usable spectrum in Hz.
    drop_db : float
        Response drop that bounds each band.
    guard_hz, min_baud_hz, dc_guard_hz, floor_db : float
        See :func:`plan_bands`.
    resolution_hz : float
        Welch resolution when fitting on probes.
    """

    def __init__(self, f_max=31e9, drop_db=10.0, guard_hz=100e6, min_baud_hz=0.5e9,
                 dc_guard_hz=0.5e9, floor_db=-15.0, resolution_hz=200e6, clearance_hz=150e6, method="h1"):
        self.f_max = f_max
        self.drop_db = drop_db
        self.guard_hz = guard_hz
        self.min_baud_hz = min_baud_hz
        self.dc_guard_hz = dc_guard_hz
        self.floor_db = floor_db
        self.resolution_hz = resolution_hz
        self.clearance_hz = clearance_hz
        self.method = method

    def fit(self, X, y=None):
        """``X`` is a :class:`ChannelEstimate`, or a tx probe with ``y`` the rx probe."""
        est = X if isinstance(X, ChannelEstimate) else estimate_channel(X, y, self.resolution_hz, method=self.method)
        self.estimate_ = est
        self.nulls_ = find_spectral_nulls(est, self.floor_db)
        plan = plan_bands(est, self.f_max, self.drop_db, self.guard_hz, floor_db=self.floor_db,
                          min_baud_hz=self.min_baud_hz, dc_guard_hz=self.dc_guard_hz)
        self.plan_ = assign_rolloff(plan, clearance_hz=self.clearance_hz)
        return self

    def transform(self, X=None):
        return self.plan_
