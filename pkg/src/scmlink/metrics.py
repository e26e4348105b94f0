"""Bit error rate, bit-wise LLRs, NGMI, FEC overhead prediction and the
link report.

LLR sign convention: ``L = ln P(b=0 | y) / P(b=1 | y)``, so a positive value
favours bit 0. With that convention the per-bit NGMI penalty is
``log2(1 + exp(-(1 - 2b) L))``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from ._validation import ParameterError, check_symbols
from .modem import ShapedConstellation

__all__ = [
    "BER_HD_FEC",
    "BER_SD_FEC",
    "NGMI_HD_FEC",
    "NGMI_SD_FEC",
    "LLR_CLAMP",
    "BitLlrRecord",
    "BandReport",
    "LinkReport",
    "ber",
    "compute_llrs",
    "ngmi",
    "fec_overhead",
    "average_ngmi",
    "band_flags",
    "assemble_report",
    "SCHEMA_VERSION",
]

BER_HD_FEC = 3.8e-3
BER_SD_FEC = 2.2e-2
NGMI_HD_FEC = 0.9346
NGMI_SD_FEC = 0.858
LLR_CLAMP = 50.0
SCHEMA_VERSION = 1


@dataclass
class BitLlrRecord:
    """Transmitted label bits and their LLRs, both shaped ``(S, m)``."""

    bits: np.ndarray
    llrs: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        self.llrs = np.asarray(self.llrs, dtype=np.float64)
        if self.bits.shape != self.llrs.shape or self.bits.ndim != 2:
            raise ParameterError(f"bits {self.bits.shape} and llrs {self.llrs.shape} must share a 2-D shape")

    @property
    def num_symbols(self) -> int:
        return self.bits.shape[0]


def ber(tx_bits, rx_bits) -> float:
    """Fraction of positions where the two bit streams differ."""
    a = np.asarray(tx_bits).ravel()
    b = np.asarray(rx_bits).ravel()
    if a.size != b.size:
        raise ParameterError(f"bit streams differ in length: {a.size} vs {b.size}")
    if a.size == 0:
        raise ParameterError("empty bit streams")
    return float(np.count_nonzero(a != b)) / a.size


def compute_llrs(y, constellation: ShapedConstellation, noise_var: float, tx_indices=None,
                 chunk: int = 1 << 14) -> BitLlrRecord | np.ndarray:
    """Exact bit-wise LLRs under circular Gaussian noise of variance ``noise_var``.

    Priors enter the numerator and denominator sums, so shaped formats get
    prior-aware LLRs. Values are clamped to ``+-LLR_CLAMP``. When
    ``tx_indices`` is given the transmitted label bits are attached and a
    :class:`BitLlrRecord` is returned, otherwise just the ``(S, m)`` array.
    """
    y = check_symbols(y, "y")
    if not noise_var > 0:
        raise ParameterError(f"noise_var must be positive, got {noise_var}")
    pts = constellation.points
    bm = constellation.bit_matrix.astype(bool)
    logp = np.log(np.maximum(constellation.priors, 1e-300))
    m = bm.shape[1]
    out = np.empty((y.size, m))
    for s in range(0, y.size, chunk):
        blk = y[s:s + chunk, None]
        metric = logp[None, :] - np.abs(blk - pts[None, :]) ** 2 / noise_var
        for i in range(m):
            out[s:s + chunk, i] = logsumexp(metric[:, ~bm[:, i]], axis=1) - logsumexp(metric[:, bm[:, i]], axis=1)
    np.clip(out, -LLR_CLAMP, LLR_CLAMP, out=out)
    if tx_indices is None:
        return out
    idx = np.asarray(tx_indices, dtype=np.int64).ravel()
    if idx.size != y.size:
        raise ParameterError("tx_indices must match the received symbol count")
    return BitLlrRecord(constellation.bit_matrix[idx], out)


def ngmi(rec: BitLlrRecord, m: Optional[int] = None) -> float:
    """Normalised GMI estimate ``1 - (1/mS) sum log2(1 + exp(-(1-2b) L))``.

    ``m`` defaults to the record's bits per symbol. The raw value is
    returned, so garbage LLRs can give a negative result.
    """
    S, mm = rec.bits.shape
    m = mm if m is None else int(m)
    if S < 1:
        raise ParameterError("need at least one symbol")
    sign = 1.0 - 2.0 * rec.bits
    pen = np.logaddexp(0.0, -sign * rec.llrs).sum() / math.log(2)
    return float(1.0 - pen / (m * S))


def fec_overhead(ngmi_value: float) -> float:
    """Predicted FEC overhead ``(1 - NGMI) / NGMI``."""
    if not ngmi_value > 0:
        raise ParameterError(f"NGMI must be positive, got {ngmi_value}")
    if ngmi_value > 1 + 1e-12:
        raise ParameterError(f"NGMI must not exceed 1, got {ngmi_value}")
    return (1.0 - ngmi_value) / ngmi_value


def average_ngmi(per_band: Sequence) -> float:
    """Rate-weighted NGMI ``sum RS m NGMI / sum RS m`` over ``(RS, m, NGMI)`` tuples."""
    rows = [tuple(map(float, r)) for r in per_band]
    if not rows:
        raise ParameterError("need at least one band")
    num = den = 0.0
    for rs, m, g in rows:
        if not (rs > 0 and m > 0):
            raise ParameterError("baud and bits/symbol must be positive")
        num += rs * m * g
        den += rs * m
    return num / den


def band_flags(ber_value: float, ngmi_value: float) -> dict:
    return {
        "ber_hd_fec": bool(ber_value < BER_HD_FEC),
        "ber_sd_fec": bool(ber_value < BER_SD_FEC),
        "ngmi_hd_fec": bool(ngmi_value >= NGMI_HD_FEC),
        "ngmi_sd_fec": bool(ngmi_value >= NGMI_SD_FEC),
    }


@dataclass
class BandReport:
    i: int
    baud_hz: float
    m: float
    ber: float
    ngmi: float
    mse_db: float
    flags: dict
    ser: float = 0.0
    ber_info: float = 0.0
    entropy: float = 0.0
    n_bits: int = 0
    diagnostics: dict = field(default_factory=dict)


@dataclass
class LinkReport:
    bands: list
    aggregate: dict
    schema_version: int = SCHEMA_VERSION
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.aggregate.get("pass", False))

    def to_dict(self) -> dict:
        return {"schema_version": self.schema_version, "bands": [asdict(b) for b in self.bands],
                "aggregate": dict(self.aggregate), "meta": dict(self.meta)}

    def to_json(self, **kw) -> str:
        return json.dumps(_jsonable(self.to_dict()), **kw)

    @classmethod
    def from_dict(cls, d) -> "LinkReport":
        return cls([BandReport(**b) for b in d["bands"]], dict(d["aggregate"]), int(d.get("schema_version", 1)),
                   dict(d.get("meta", {})))

    @classmethod
    def from_json(cls, text) -> "LinkReport":
        return cls.from_dict(json.loads(text))


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, float) and not math.isfinite(o):
        return None if math.isnan(o) else (1e308 if o > 0 else -1e308)
    return o


def assemble_report(truths: Sequence, recovered: Sequence, bauds: Sequence[float], *, gross_bps: float,
                    net_bps: float, papr_db: float = float("nan"), cspr_db: float = float("nan"),
                    meta: Optional[dict] = None) -> LinkReport:
    """Build a :class:`LinkReport` from per-band truth and receiver output.

    Each ``recovered`` entry is a mapping with keys ``bits`` (decoded
    information bits), ``indices``, ``soft``, ``noise_var``, ``constellation``
    and optionally ``mse_db`` and ``diagnostics``.

    ``ber`` counts errors on the constellation label bits of the decided
    symbols, which is what a decoder placed ahead of distribution matching
    sees; ``ber_info`` counts errors on the recovered information bits
    (after CCDM decoding for PCS, identical to ``ber`` for uniform QAM).
    NGMI in the report is clamped to ``[0, 1]``; the raw value is kept in
    the diagnostics.
    """
    if len(truths) != len(recovered) or len(truths) != len(bauds):
        raise ParameterError(f"band counts differ: {len(truths)} truth, {len(recovered)} recovered, {len(bauds)} bauds")
    rows = []
    for t, r, rs in zip(truths, recovered, bauds):
        if int(t.band_index) != int(r.get("band_index", t.band_index)):
            raise ParameterError(f"band mismatch: truth {t.band_index} vs recovered {r['band_index']}")
        const = r["constellation"]
        b_info = ber(t.bits, r["bits"])
        b = ber(const.bit_matrix[t.indices], const.bit_matrix[np.asarray(r["indices"])])
        ser = float(np.mean(np.asarray(r["indices"]) != t.indices)) if t.indices.size else 0.0
        rec = compute_llrs(r["soft"], const, r["noise_var"], tx_indices=t.indices)
        g_raw = ngmi(rec)
        g = min(max(g_raw, 0.0), 1.0)
        diag = dict(r.get("diagnostics", {}))
        diag["ngmi_raw"] = g_raw
        rows.append(BandReport(int(t.band_index), float(rs), int(const.bits_per_symbol), b, g,
                               float(r.get("mse_db", float("nan"))), band_flags(b, g), ser, b_info,
                               float(const.entropy), int(t.indices.size * const.bits_per_symbol), diag))
    avg = average_ngmi([(x.baud_hz, x.m, x.ngmi) for x in rows])
    agg = {
        "avg_ngmi": avg,
        "gross_bps": float(gross_bps),
        "net_bps": float(net_bps),
        "papr_db": float(papr_db),
        "cspr_db": float(cspr_db),
        "oh_pred": fec_overhead(avg) if avg > 0 else float("inf"),
        "max_ber": max(x.ber for x in rows),
        "pass": bool(all(x.flags["ber_hd_fec"] for x in rows) and avg >= NGMI_HD_FEC),
    }
    bits = sum(x.n_bits for x in rows)
    agg["ber"] = sum(x.ber * x.n_bits for x in rows) / bits if bits else 0.0
    return LinkReport(rows, agg, SCHEMA_VERSION, dict(meta or {}))
