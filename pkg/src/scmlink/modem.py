"""Constellations, bit labelling, Maxwell-Boltzmann shaping, CCDM and
entropy loading across bands.

Bit labels are integers read MSB first. PCS uses probabilistic amplitude
shaping: each real dimension of a square QAM carries a CCDM-shaped
amplitude and a uniform sign bit. With binary-reflected Gray labels the
sign is the MSB of the per-dimension label and the remaining bits depend
only on the amplitude, so the two halves separate cleanly.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import ParameterError, check_bits, check_positive

__all__ = [
    "ModulationSpec",
    "ShapedConstellation",
    "CcdmCode",
    "EntropyLoadingPlan",
    "make_constellation",
    "mb_for_entropy",
    "entropy_loading",
    "initial_entropy",
    "ccdm_encode",
    "ccdm_decode",
    "pcs_constellation",
    "pcs_map",
    "pcs_demap_hard",
    "pcs_indices_to_bits",
    "pas_code",
    "mb_nu",
    "PcsModem",
    "gray",
    "SUPPORTED_ORDERS",
]

SUPPORTED_ORDERS = (2, 4, 8, 16, 32, 64, 128, 256)


def gray(i):
    return i ^ (i >> 1)


@dataclass(frozen=True)
class ModulationSpec:
    """Per-band format.

    ``kind`` is ``"uniform"`` (plain Gray-labelled ``order``-QAM) or
    ``"pcs"`` (square base ``order`` shaped to ``entropy`` bits/symbol).
    """

    kind: str = "uniform"
    order: int = 4
    entropy: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("uniform", "pcs"):
            raise ParameterError(f"unknown modulation kind {self.kind!r}")
        if self.order not in SUPPORTED_ORDERS:
            raise ParameterError(f"unsupported modulation order {self.order}")
        if self.kind == "pcs":
            if self.order < 4 or int(round(math.log2(self.order))) % 2:
                raise ParameterError("PCS needs a square QAM base order")
            if self.entropy is not None and not 2.0 - 1e-12 <= self.entropy <= math.log2(self.order) + 1e-12:
                raise ParameterError(f"PCS entropy {self.entropy} outside [2, {math.log2(self.order)}]")

    @property
    def bits_per_symbol(self) -> int:
        return int(round(math.log2(self.order)))

    @property
    def rate_bits(self) -> float:
        """Bits per symbol counted toward the line rate (entropy for PCS)."""
        if self.kind == "pcs" and self.entropy is not None:
            return float(self.entropy)
        return float(self.bits_per_symbol)

    def to_dict(self):
        d = {"kind": self.kind, "order": self.order}
        if self.entropy is not None:
            d["entropy"] = self.entropy
        return d

    @classmethod
    def from_dict(cls, d):
        ent = d.get("entropy")
        return cls(d.get("kind", "uniform"), int(d["order"]), None if ent is None else float(ent))


@dataclass(frozen=True, eq=False)
class ShapedConstellation:
    """Points with integer bit labels and prior probabilities.

    Points are rescaled to unit mean energy under the priors.
    """

    points: np.ndarray
    labels: np.ndarray
    priors: np.ndarray
    name: str = ""

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.complex128, copy=True).ravel()
        lab = np.array(self.labels, dtype=np.int64, copy=True).ravel()
        pri = np.array(self.priors, dtype=np.float64, copy=True).ravel()
        m = pts.size
        if m < 2 or m & (m - 1):
            raise ParameterError("constellation size must be a power of two >= 2")
        if lab.size != m or pri.size != m:
            raise ParameterError("points, labels and priors must have equal length")
        if sorted(lab.tolist()) != list(range(m)):
            raise ParameterError("labels must be a permutation of 0..M-1")
        if np.any(pri < 0) or not np.isfinite(pri).all():
            raise ParameterError("priors must be nonnegative")
        pri = pri / pri.sum()
        energy = float(np.sum(pri * np.abs(pts) ** 2))
        if energy <= 0:
            raise ParameterError("constellation has zero energy")
        pts = pts / math.sqrt(energy)
        for a in (pts, lab, pri):
            a.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "priors", pri)
        inv = np.empty(m, dtype=np.int64)
        inv[lab] = np.arange(m)
        inv.flags.writeable = False
        object.__setattr__(self, "_index_of_label", inv)

    @property
    def order(self) -> int:
        return self.points.size

    @property
    def bits_per_symbol(self) -> int:
        return self.points.size.bit_length() - 1

    @property
    def entropy(self) -> float:
        p = self.priors[self.priors > 0]
        return float(-np.sum(p * np.log2(p)))

    @property
    def is_uniform(self) -> bool:
        return bool(np.allclose(self.priors, 1.0 / self.order, rtol=0, atol=1e-15))

    @property
    def bit_matrix(self) -> np.ndarray:
        """``(M, m)`` array of the label bits of each point, MSB first."""
        m = self.bits_per_symbol
        return ((self.labels[:, None] >> np.arange(m - 1, -1, -1)) & 1).astype(np.uint8)

    def map_bits(self, bits) -> np.ndarray:
        """Group ``m`` bits MSB first into labels and return the points."""
        return self.points[self.bits_to_indices(bits)]

    def bits_to_indices(self, bits) -> np.ndarray:
        b = check_bits(bits)
        m = self.bits_per_symbol
        if b.size % m:
            raise ParameterError(f"bit count {b.size} not a multiple of {m}")
        lab = b.reshape(-1, m).astype(np.int64) @ (1 << np.arange(m - 1, -1, -1))
        return self._index_of_label[lab]

    def indices_to_bits(self, idx) -> np.ndarray:
        return self.bit_matrix[np.asarray(idx, dtype=np.int64)].ravel()

    def nearest(self, y) -> np.ndarray:
        """Minimum-distance point index for each sample of ``y``."""
        y = np.asarray(y, dtype=np.complex128).ravel()
        out = np.empty(y.size, dtype=np.int64)
        step = max(1, 2**20 // self.order)
        for s in range(0, y.size, step):
            d = np.abs(y[s:s + step, None] - self.points[None, :])
            out[s:s + step] = np.argmin(d, axis=1)
        return out

    def demap_hard(self, y) -> np.ndarray:
        return self.indices_to_bits(self.nearest(y))

    def to_dict(self):
        return {
            "name": self.name,
            "points_re": self.points.real.tolist(),
            "points_im": self.points.imag.tolist(),
            "labels": self.labels.tolist(),
            "priors": self.priors.tolist(),
            "entropy": self.entropy,
        }

    @classmethod
    def from_dict(cls, d):
        pts = np.asarray(d["points_re"]) + 1j * np.asarray(d["points_im"])
        return cls(pts, d["labels"], d["priors"], d.get("name", ""))


# -- geometries ---------------------------------------------------------------

def _pam_levels(n):
    return np.arange(-(n - 1), n, 2, dtype=np.float64)


def _square(M):
    k = int(round(math.log2(M))) // 2
    n = 1 << k
    lv = _pam_levels(n)
    i, q = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    pts = lv[i] + 1j * lv[q]
    lab = (np.vectorize(gray)(i) << k) | np.vectorize(gray)(q)
    return pts.ravel(), lab.ravel()


def _rect(n_i, n_q):
    ki, kq = n_i.bit_length() - 1, n_q.bit_length() - 1
    i, q = np.meshgrid(np.arange(n_i), np.arange(n_q), indexing="ij")
    pts = _pam_levels(n_i)[i] + 1j * _pam_levels(n_q)[q]
    lab = (np.vectorize(gray)(i) << kq) | np.vectorize(gray)(q)
    return pts.ravel(), lab.ravel(), ki


def _cross(M):
    """Cross constellation folded from a 2:1 Gray rectangle.

    Columns beyond the cross half-width are rotated into the missing top
    and bottom rows with their labels. The fold alone leaves a few seam
    pairs three bits apart, so a deterministic pairwise-swap descent then
    repairs the labels until every nearest-neighbour pair differs in at
    most two bits.
    """
    k = (int(round(math.log2(M))) - 1) // 2
    pts, lab, _ = _rect(1 << (k + 1), 1 << k)
    s = 3 * (1 << (k - 1)) - 1
    out = pts.copy()
    re, im = pts.real, pts.imag
    o = np.abs(re) > s
    out[o] = np.sign(re[o]) * np.abs(im[o]) + 1j * np.sign(im[o]) * (np.abs(re[o]) - (1 << (k - 1)))
    return out, _repair_labels(out, lab)


def _repair_labels(pts, lab):
    M = pts.size
    d = np.abs(pts[:, None] - pts[None, :])
    np.fill_diagonal(d, np.inf)
    adj = np.isclose(d, d.min())
    pc = np.array([bin(x).count("1") for x in range(M)])

    def score(lb):
        h = pc[lb[:, None] ^ lb[None, :]][adj]
        return int(100 * np.sum(np.maximum(h - 2, 0)) + np.sum(h))

    lab = lab.copy()
    best = score(lab)
    improved = True
    while improved:
        improved = False
        for i in range(M):
            for j in range(i + 1, M):
                lab[i], lab[j] = lab[j], lab[i]
                sc = score(lab)
                if sc < best:
                    best, improved = sc, True
                else:
                    lab[i], lab[j] = lab[j], lab[i]
    return lab


@lru_cache(maxsize=None)
def _geometry(M):
    if M == 2:
        return np.array([-1.0 + 0j, 1.0 + 0j]), np.array([1, 0])
    if M == 8:
        pts, lab, _ = _rect(4, 2)
        return pts, lab
    if M in (32, 128):
        return _cross(M)
    if M in (4, 16, 64, 256):
        return _square(M)
    raise ParameterError(f"unsupported modulation order {M}")


def make_constellation(spec) -> ShapedConstellation:
    """Unit-energy Gray (or quasi-Gray) constellation for ``spec``.

    ``spec`` is a :class:`ModulationSpec` or an order. PCS specs with an
    entropy return the Maxwell-Boltzmann constellation of that entropy.
    """
    if isinstance(spec, ModulationSpec):
        if spec.kind == "pcs" and spec.entropy is not None:
            return mb_for_entropy(spec.order, spec.entropy)
        M = spec.order
    else:
        M = int(spec)
    pts, lab = _geometry(M)
    name = {2: "BPSK", 4: "QPSK"}.get(M, f"{M}QAM")
    return ShapedConstellation(pts, lab, np.full(M, 1.0 / M), name)


# -- Maxwell-Boltzmann shaping -----------------------------------------------

def _entropy_bits(p):
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def _mb(energies, nu):
    w = np.exp(-nu * (energies - energies.min()))
    return w / w.sum()


_MB_LOCK = threading.Lock()


@lru_cache(maxsize=256)
def _solve_nu(M, target):
    pts, _ = _geometry(M)
    e = np.abs(pts) ** 2
    e = e / e.mean()
    n_min = int(np.sum(np.isclose(e, e.min())))
    h_max = math.log2(M)
    if target >= h_max - 1e-12:
        return 0.0
    if target <= math.log2(n_min) + 1e-12:
        raise ParameterError(f"entropy {target} not reachable: floor is {math.log2(n_min)}")
    lo, hi = 0.0, 1.0
    while _entropy_bits(_mb(e, hi)) > target:
        hi *= 2
        if hi > 1e6:
            raise ParameterError(f"entropy {target} not reachable for M={M}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _entropy_bits(_mb(e, mid)) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def mb_for_entropy(order: int, target_entropy: float) -> ShapedConstellation:
    """Maxwell-Boltzmann priors ``exp(-nu |x|^2)`` with the requested entropy.

    ``nu`` (on the unit-average-energy uniform grid) is found by bisection
    and memoised per ``(order, target)``.
    """
    M = int(order)
    if M not in SUPPORTED_ORDERS:
        raise ParameterError(f"unsupported modulation order {M}")
    t = float(target_entropy)
    if not 1.0 < t <= math.log2(M) + 1e-12:
        raise ParameterError(f"target entropy {t} outside (1, {math.log2(M)}]")
    with _MB_LOCK:
        nu = _solve_nu(M, round(t, 12))
    pts, lab = _geometry(M)
    e = np.abs(pts) ** 2
    pri = _mb(e / e.mean(), nu)
    return ShapedConstellation(pts, lab, pri, f"PCS-{M}QAM(H={t:.4f})")


def mb_nu(order: int, target_entropy: float) -> float:
    """The shaping parameter behind :func:`mb_for_entropy`."""
    with _MB_LOCK:
        return _solve_nu(int(order), round(float(target_entropy), 12))


# -- entropy loading -----------------------------------------------------------

@dataclass(frozen=True)
class EntropyLoadingPlan:
    h0: tuple
    h: tuple
    baud: tuple
    rs_target: float
    clamped: tuple = ()

    @property
    def rate(self) -> float:
        return float(sum(h * r for h, r in zip(self.h, self.baud)))

    def to_dict(self):
        return {"h0": list(self.h0), "h": list(self.h), "baud_hz": list(self.baud),
                "rs_target_bps": self.rs_target, "clamped": list(self.clamped)}


def entropy_loading(h0: Sequence[float], baud: Sequence[float], rs_target: float,
                    h_max: Optional[Sequence[float]] = None, h_min=1.0) -> EntropyLoadingPlan:
    """Shift every band's entropy by the same amount to hit ``rs_target``.

    ``H_i = H0_i + (RS_target - sum(H0_t RS_t)) / sum(RS_t)``. Bands pushed
    outside ``[h_min, h_max_i]`` are pinned at the bound and the shortfall is
    spread over the remaining bands the same way, repeating until no band
    moves.
    """
    h0 = np.asarray(h0, dtype=np.float64).ravel()
    rs = np.asarray(baud, dtype=np.float64).ravel()
    if h0.size != rs.size or h0.size == 0:
        raise ParameterError("h0 and baud must be non-empty and equally long")
    if np.any(rs <= 0):
        raise ParameterError("baud rates must be positive")
    check_positive(rs_target, "rs_target")
    hi = np.full(h0.size, np.inf) if h_max is None else np.asarray(h_max, dtype=np.float64).ravel()
    lo = np.broadcast_to(np.asarray(h_min, dtype=np.float64), h0.shape).astype(np.float64)
    if hi.size != h0.size:
        raise ParameterError("h_max must match h0 in length")
    lo_rate, hi_rate = float(lo @ rs), float(hi @ rs)
    if not lo_rate - 1e-9 * rs_target <= rs_target <= hi_rate + 1e-9 * rs_target:
        raise ParameterError(
            f"target {rs_target:.6g} bit/s unreachable: achievable range [{lo_rate:.6g}, {hi_rate:.6g}]"
        )
    h = h0.copy()
    free = np.ones(h.size, dtype=bool)
    for _ in range(h.size + 1):
        fixed_rate = float(h[~free] @ rs[~free])
        h[free] = h0[free] + (rs_target - fixed_rate - float(h0[free] @ rs[free])) / rs[free].sum()
        over = free & ((h > hi) | (h < lo))
        if not over.any():
            break
        h[over] = np.clip(h[over], lo[over], hi[over])
        free &= ~over
        if not free.any():
            break
    clamped = tuple(int(i) for i in np.nonzero(~free)[0])
    return EntropyLoadingPlan(tuple(h0.tolist()), tuple(h.tolist()), tuple(rs.tolist()), float(rs_target), clamped)


def _mi_gauss_hermite(points, priors, snr_lin, order=24):
    """Symbol-wise AWGN mutual information, 2-D Gauss-Hermite quadrature."""
    x, w = np.polynomial.hermite.hermgauss(order)
    sigma2 = 1.0 / snr_lin  # unit-energy constellation
    s = math.sqrt(sigma2)
    zr, zi = np.meshgrid(x, x, indexing="ij")
    z = (s * (zr + 1j * zi)).ravel()
    wz = (np.outer(w, w) / np.pi).ravel()
    total = 0.0
    for a, pa in zip(points, priors):
        if pa == 0:
            continue
        d = a - points  # (M,)
        arg = -(np.abs(d[None, :] + z[:, None]) ** 2 - np.abs(z[:, None]) ** 2) / sigma2
        arg = arg + np.log(np.maximum(priors, 1e-300))[None, :]
        m = arg.max(axis=1, keepdims=True)
        lse = (m[:, 0] + np.log(np.exp(arg - m).sum(axis=1)))
        total += pa * float(wz @ lse)
    # H(X|Y) = H(X) + total / ln 2, so the prior terms cancel in H(X) - H(X|Y)
    return -total / math.log(2)


def initial_entropy(snr_db, order: int):
    """AWGN mutual information of uniform ``order``-QAM, clipped to [1, log2 M].

    Accepts a scalar or a sequence of SNRs (dB, Es/N0).
    """
    c = make_constellation(int(order))
    scalar = np.ndim(snr_db) == 0
    out = []
    for s in np.atleast_1d(np.asarray(snr_db, dtype=np.float64)):
        if not np.isfinite(s):
            if s > 0:
                out.append(float(c.bits_per_symbol))
                continue
            raise ParameterError("snr_db must be finite")
        mi = _mi_gauss_hermite(c.points, c.priors, 10 ** (s / 10))
        out.append(float(np.clip(mi, 1.0, c.bits_per_symbol)))
    return out[0] if scalar else np.array(out)


# -- constant composition distribution matching -------------------------------

def _multinomial(counts):
    n = sum(counts)
    r = math.factorial(n)
    for c in counts:
        r //= math.factorial(c)
    return r


@dataclass(frozen=True)
class CcdmCode:
    """Fixed-composition code over ``len(composition)`` amplitude levels.

    ``input_bits`` is ``floor(log2(multinomial(n; composition)))``.
    """

    block_len: int
    composition: tuple
    input_bits: int = field(init=False)

    def __post_init__(self):
        comp = tuple(int(c) for c in self.composition)
        if any(c < 0 for c in comp) or not comp:
            raise ParameterError("composition counts must be nonnegative")
        if sum(comp) != int(self.block_len):
            raise ParameterError(f"composition sums to {sum(comp)}, expected {self.block_len}")
        object.__setattr__(self, "composition", comp)
        object.__setattr__(self, "block_len", int(self.block_len))
        object.__setattr__(self, "input_bits", _multinomial(comp).bit_length() - 1)

    @property
    def rate(self) -> float:
        """Input bits per output amplitude."""
        return self.input_bits / self.block_len

    @property
    def pmf(self) -> np.ndarray:
        return np.asarray(self.composition, dtype=np.float64) / self.block_len

    @property
    def entropy(self) -> float:
        return _entropy_bits(self.pmf)

    @classmethod
    def from_pmf(cls, pmf, block_len: int = 256):
        """Composition closest to ``pmf`` with the given block length.

        Counts are ``floor(n p)`` plus one for the largest remainders.
        """
        p = np.asarray(pmf, dtype=np.float64).ravel()
        if p.size < 1 or np.any(p < 0) or p.sum() <= 0:
            raise ParameterError("pmf must be nonnegative with positive mass")
        n = int(block_len)
        if n < 1:
            raise ParameterError("block_len must be positive")
        p = p / p.sum()
        base = np.floor(n * p).astype(np.int64)
        rem = n * p - base
        for i in np.argsort(-rem, kind="stable")[: n - int(base.sum())]:
            base[i] += 1
        return cls(n, tuple(base.tolist()))

    def to_dict(self):
        return {"block_len": self.block_len, "composition": list(self.composition), "input_bits": self.input_bits}


def _bits_to_int(bits):
    v = 0
    for b in bits.tolist():
        v = (v << 1) | b
    return v


def _int_to_bits(v, k):
    return np.array([(v >> (k - 1 - i)) & 1 for i in range(k)], dtype=np.uint8)


def _encode_block(r, comp):
    counts = list(comp)
    n = sum(counts)
    total = _multinomial(counts)
    out = np.empty(n, dtype=np.int64)
    for pos in range(n):
        for a, c in enumerate(counts):
            if c == 0:
                continue
            sub = total * c // (n - pos)
            if r < sub:
                out[pos] = a
                counts[a] -= 1
                total = sub
                break
            r -= sub
    return out


def _decode_block(seq, comp, strict):
    counts = list(comp)
    n = sum(counts)
    total = _multinomial(counts)
    r = 0
    for pos, a in enumerate(seq.tolist()):
        if not 0 <= a < len(counts) or counts[a] == 0:
            if strict:
                raise ParameterError("sequence does not have the code's composition")
            # nearest level that still has budget
            avail = [j for j, c in enumerate(counts) if c > 0]
            a = min(avail, key=lambda j: (abs(j - a), j))
        for j in range(a):
            if counts[j]:
                r += total * counts[j] // (n - pos)
        total = total * counts[a] // (n - pos)
        counts[a] -= 1
    return r


def ccdm_encode(bits, code: CcdmCode) -> np.ndarray:
    """Map blocks of ``code.input_bits`` bits to amplitude-index sequences.

    The bits of each block, read MSB first, give a rank among all sequences
    of the code's composition in lexicographic order; the output is that
    sequence. Returns a flat array of level indices.
    """
    b = check_bits(bits)
    k = code.input_bits
    if k == 0:
        if b.size:
            raise ParameterError("this code carries no information bits")
        return np.empty(0, dtype=np.int64)
    if b.size % k:
        raise ParameterError(f"bit count {b.size} is not a multiple of k={k}")
    blocks = [_encode_block(_bits_to_int(b[s:s + k]), code.composition) for s in range(0, b.size, k)]
    return np.concatenate(blocks) if blocks else np.empty(0, dtype=np.int64)


def ccdm_decode(amplitudes, code: CcdmCode, strict: bool = True) -> np.ndarray:
    """Inverse of :func:`ccdm_encode`.

    With ``strict`` a block whose composition differs from the code's raises
    :class:`ParameterError`. Otherwise offending symbols are replaced by the
    nearest level with remaining budget and an out-of-range rank saturates,
    which is what a receiver facing channel errors needs.
    """
    a = np.asarray(amplitudes, dtype=np.int64).ravel()
    n, k = code.block_len, code.input_bits
    if a.size % n:
        raise ParameterError(f"amplitude count {a.size} is not a multiple of n={n}")
    out = []
    for s in range(0, a.size, n):
        blk = a[s:s + n]
        if strict and tuple(np.bincount(blk, minlength=len(code.composition)).tolist()) != code.composition:
            raise ParameterError("sequence does not have the code's composition")
        r = _decode_block(blk, code.composition, strict)
        out.append(_int_to_bits(min(r, (1 << k) - 1), k))
    return np.concatenate(out) if out else np.empty(0, dtype=np.uint8)


# -- probabilistic amplitude shaping ------------------------------------------

def _pas_layout(order):
    k = int(round(math.log2(order))) // 2
    n_levels = 1 << k
    return k, n_levels // 2


def pcs_constellation(order: int, code: CcdmCode) -> ShapedConstellation:
    """Square QAM whose priors are the product of the code's per-dimension pmf.

    Each dimension uses amplitude ``2j+1`` with probability ``pmf[j] / 2``
    on either sign.
    """
    k, n_amp = _pas_layout(order)
    if len(code.composition) != n_amp:
        raise ParameterError(f"{order}-QAM needs a {n_amp}-level composition, got {len(code.composition)}")
    pts, lab = _geometry(int(order))
    amp_idx_i = ((np.abs(pts.real) - 1) / 2).round().astype(int)
    amp_idx_q = ((np.abs(pts.imag) - 1) / 2).round().astype(int)
    pmf = code.pmf
    pri = pmf[amp_idx_i] * pmf[amp_idx_q] / 4
    return ShapedConstellation(pts, lab, pri, f"PCS-{order}QAM(n={code.block_len})")


def pas_code(order: int, entropy: float, block_len: int = 256) -> CcdmCode:
    """CCDM code for one real dimension of a PCS square QAM of the given entropy.

    The per-dimension amplitude pmf is the marginal of the 2-D
    Maxwell-Boltzmann priors (which factor over I and Q).
    """
    k, n_amp = _pas_layout(order)
    if entropy >= 2 * k - 1e-12:
        return CcdmCode.from_pmf(np.ones(n_amp), block_len)
    c = mb_for_entropy(order, entropy)
    raw = np.round(np.abs(_geometry(order)[0].real)).astype(int)
    pmf = [c.priors[raw == 2 * j + 1].sum() for j in range(n_amp)]
    return CcdmCode.from_pmf(pmf, block_len)


def _pas_bits_per_block(code: CcdmCode):
    return code.input_bits + code.block_len


def pcs_map(bits, shaped: ShapedConstellation, code: CcdmCode) -> np.ndarray:
    """PAS mapping: CCDM amplitudes plus uniform sign bits per dimension.

    Each block consumes ``k + n`` bits: ``k`` for the CCDM, then ``n`` sign
    bits, and emits ``n / 2`` symbols (I and Q amplitudes interleaved).
    Returns indices into ``shaped.points``.
    """
    b = check_bits(bits)
    M = shaped.order
    k_dim, n_amp = _pas_layout(M)
    if len(code.composition) != n_amp:
        raise ParameterError(f"composition has {len(code.composition)} levels, {M}-QAM needs {n_amp}")
    if code.block_len % 2:
        raise ParameterError("PAS block length must be even")
    per = _pas_bits_per_block(code)
    if b.size % per:
        raise ParameterError(f"bit count {b.size} is not a multiple of {per} (k + n)")
    nblk = b.size // per
    blocks = b.reshape(nblk, per)
    amps = ccdm_encode(blocks[:, : code.input_bits].ravel(), code).reshape(nblk, code.block_len)
    signs = blocks[:, code.input_bits:]
    # amplitude index j, sign bit s -> PAM level index: s=1 upper half
    half = n_amp
    lvl = np.where(signs == 1, half + amps, half - 1 - amps).ravel()
    li, lq = lvl[0::2], lvl[1::2]
    return _level_pair_to_index(M, li, lq)


@lru_cache(maxsize=None)
def _level_lookup(M):
    k = int(round(math.log2(M))) // 2
    n = 1 << k
    pts, _ = _geometry(M)
    lv = _pam_levels(n)
    i = np.searchsorted(lv, pts.real.round())
    q = np.searchsorted(lv, pts.imag.round())
    table = np.empty((n, n), dtype=np.int64)
    table[i, q] = np.arange(M)
    return table, i, q


def _level_pair_to_index(M, li, lq):
    table, _, _ = _level_lookup(M)
    return table[li, lq]


def pcs_indices_to_bits(idx, shaped: ShapedConstellation, code: CcdmCode, strict: bool = False) -> np.ndarray:
    """Invert :func:`pcs_map` from decided point indices."""
    M = shaped.order
    _, n_amp = _pas_layout(M)
    _, li, lq = _level_lookup(M)
    idx = np.asarray(idx, dtype=np.int64).ravel()
    per_sym = code.block_len // 2
    if idx.size % per_sym:
        raise ParameterError(f"symbol count {idx.size} is not a multiple of {per_sym}")
    lvl = np.empty(2 * idx.size, dtype=np.int64)
    lvl[0::2] = li[idx]
    lvl[1::2] = lq[idx]
    signs = (lvl >= n_amp).astype(np.uint8)
    amps = np.where(signs == 1, lvl - n_amp, n_amp - 1 - lvl)
    nblk = lvl.size // code.block_len
    info = ccdm_decode(amps, code, strict=strict).reshape(nblk, code.input_bits)
    return np.concatenate([info, signs.reshape(nblk, code.block_len)], axis=1).ravel()


def pcs_demap_hard(symbols, shaped: ShapedConstellation, code: CcdmCode, strict: bool = False) -> np.ndarray:
    """Minimum-distance decisions followed by sign extraction and CCDM decoding."""
    return pcs_indices_to_bits(shaped.nearest(symbols), shaped, code, strict=strict)


class PcsModem(BaseEstimator, TransformerMixin):
    """Bits-to-symbols mapper for a :class:`ModulationSpec`.

    ``fit`` builds the constellation (and the CCDM code for PCS);
    ``transform`` maps bits to symbols; ``inverse_transform`` hard-demaps.

    Parameters
    ----------
    kind, order, entropy
        As in :class:`ModulationSpec`.
    block_len : int
        CCDM block length in amplitudes.
    """

    def __init__(self, kind="uniform", order=16, entropy=None, block_len=256):
        self.kind = kind
        self.order = order
        self.entropy = entropy
        self.block_len = block_len

    def fit(self, X=None, y=None):
        spec = ModulationSpec(self.kind, self.order, self.entropy)
        self.spec_ = spec
        if spec.kind == "pcs":
            h = spec.entropy if spec.entropy is not None else math.log2(spec.order)
            self.code_ = pas_code(spec.order, h, self.block_len)
            self.constellation_ = pcs_constellation(spec.order, self.code_)
            self.bits_per_block_ = _pas_bits_per_block(self.code_)
            self.symbols_per_block_ = self.block_len // 2
        else:
            self.code_ = None
            self.constellation_ = make_constellation(spec.order)
            self.bits_per_block_ = self.constellation_.bits_per_symbol
            self.symbols_per_block_ = 1
        return self

    @property
    def info_bits_per_symbol(self) -> float:
        return self.bits_per_block_ / self.symbols_per_block_

    def transform(self, bits):
        return self.constellation_.points[self.bits_to_indices(bits)]

    def bits_to_indices(self, bits):
        if self.code_ is None:
            return self.constellation_.bits_to_indices(bits)
        return pcs_map(bits, self.constellation_, self.code_)

    def indices_to_bits(self, idx):
        if self.code_ is None:
            return self.constellation_.indices_to_bits(idx)
        return pcs_indices_to_bits(idx, self.constellation_, self.code_)

    def inverse_transform(self, symbols):
        return self.indices_to_bits(self.constellation_.nearest(symbols))
