import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scmlink import ParameterError
from scmlink.metrics import (
    BER_HD_FEC,
    LLR_CLAMP,
    NGMI_HD_FEC,
    BitLlrRecord,
    LinkReport,
    assemble_report,
    average_ngmi,
    band_flags,
    ber,
    compute_llrs,
    fec_overhead,
    ngmi,
)
from scmlink.modem import make_constellation, mb_for_entropy
from scmlink.txdsp import TruthRecord


def test_ber_basic():
    assert ber([0, 1, 1, 0], [0, 1, 0, 0]) == 0.25
    assert ber(np.zeros(10), np.zeros(10)) == 0.0
    with pytest.raises(ParameterError):
        ber([0, 1], [0])
    with pytest.raises(ParameterError):
        ber([], [])


@given(st.integers(1, 500), st.integers(0, 2**31))
def test_ber_counts_flips(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 2, n)
    flips = rng.random(n) < 0.3
    assert ber(a, a ^ flips) == pytest.approx(flips.sum() / n)


# -- LLRs ----------------------------------------------------------------------------

def test_bpsk_llr_closed_form():
    c = make_constellation(2)
    y = np.linspace(-2, 2, 41)
    n0 = 0.7
    llr = compute_llrs(y, c, n0)[:, 0]
    # the +1 point carries label 0, so LLR = ln p(y|+1)/p(y|-1) = 4y/N0
    assert c.labels[np.argmax(c.points.real)] == 0
    assert np.allclose(llr, np.clip(4 * y / n0, -LLR_CLAMP, LLR_CLAMP))


def test_llr_sign_favours_transmitted_bits():
    c = make_constellation(16)
    llr = compute_llrs(c.points, c, 0.01)
    assert np.all(np.sign(llr) == 1 - 2 * c.bit_matrix.astype(int))
    assert np.all(np.abs(llr) <= LLR_CLAMP)


def test_llr_priors_shift_decisions():
    c = mb_for_entropy(16, 3.0)
    u = make_constellation(16)
    y = np.array([0.0 + 0.0j])
    # at the origin the uniform LLRs are symmetric about zero for the outer bits
    lu = compute_llrs(y, u, 1.0)
    lp = compute_llrs(y, c, 1.0)
    assert not np.allclose(lu, lp)


def test_llr_validation():
    c = make_constellation(4)
    with pytest.raises(ParameterError):
        compute_llrs([1.0], c, 0.0)
    with pytest.raises(ParameterError):
        compute_llrs([1.0, 2.0], c, 1.0, tx_indices=[0])
    with pytest.raises(ParameterError):
        BitLlrRecord(np.zeros((3, 2)), np.zeros((3, 1)))


# -- NGMI ----------------------------------------------------------------------------

def test_ngmi_limits():
    bits = np.random.default_rng(0).integers(0, 2, (1000, 4))
    sure = 50.0 * (1 - 2 * bits)
    assert ngmi(BitLlrRecord(bits, sure)) == pytest.approx(1.0, abs=1e-12)
    assert ngmi(BitLlrRecord(bits, np.zeros(bits.shape))) == pytest.approx(0.0, abs=1e-12)
    assert ngmi(BitLlrRecord(bits, -sure)) < -10


def test_ngmi_bsc_closed_form():
    # consistent LLRs on a binary symmetric channel give 1 - h2(p)
    p = 0.05
    rng = np.random.default_rng(1)
    bits = rng.integers(0, 2, (200000, 1))
    flip = rng.random(bits.shape) < p
    mag = math.log((1 - p) / p)
    llr = mag * (1 - 2 * (bits ^ flip))
    h2 = -p * math.log2(p) - (1 - p) * math.log2(1 - p)
    assert ngmi(BitLlrRecord(bits, llr)) == pytest.approx(1 - h2, abs=3e-3)


def test_ngmi_improves_with_snr():
    c = make_constellation(16)
    rng = np.random.default_rng(2)
    idx = rng.integers(0, 16, 20000)
    vals = []
    for snr_db in (8, 12, 16, 20):
        nv = 10 ** (-snr_db / 10)
        y = c.points[idx] + math.sqrt(nv / 2) * (rng.standard_normal(idx.size) + 1j * rng.standard_normal(idx.size))
        vals.append(ngmi(compute_llrs(y, c, nv, tx_indices=idx)))
    assert np.all(np.diff(vals) > 0) and vals[-1] > 0.99


def test_fec_overhead():
    assert fec_overhead(NGMI_HD_FEC) == pytest.approx(0.0700, abs=1e-4)
    assert fec_overhead(1.0) == 0.0
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ParameterError):
            fec_overhead(bad)


def test_average_ngmi_weights():
    assert average_ngmi([(1e9, 2, 1.0), (3e9, 2, 0.5)]) == pytest.approx((2 + 3) / 8)
    with pytest.raises(ParameterError):
        average_ngmi([])
    with pytest.raises(ParameterError):
        average_ngmi([(0.0, 2, 1.0)])


def test_band_flags_thresholds():
    f = band_flags(BER_HD_FEC, NGMI_HD_FEC)
    assert not f["ber_hd_fec"] and f["ber_sd_fec"] and f["ngmi_hd_fec"] and f["ngmi_sd_fec"]
    f = band_flags(0.03, 0.85)
    assert not any(f.values())


# -- report ------------------------------------------------------------------------------

def _truth(idx, const, band=1):
    bits = const.bit_matrix[idx].ravel()
    return TruthRecord(band, {"kind": "uniform", "order": const.order}, 0, idx.size, 1, 0, bits, idx,
                       np.zeros(0, complex), const.priors)


def test_assemble_report():
    c = make_constellation(4)
    rng = np.random.default_rng(3)
    idx = rng.integers(0, 4, 1000)
    rx_idx = idx.copy()
    rx_idx[:5] = (rx_idx[:5] + 1) % 4
    rec = {"bits": c.bit_matrix[rx_idx].ravel(), "indices": rx_idx, "soft": c.points[idx] + 0.01,
           "noise_var": 0.01, "constellation": c, "mse_db": -20.0}
    t = _truth(idx, c)
    rep = assemble_report([t, t], [rec, rec], [2e9, 1e9], gross_bps=6e9, net_bps=5.5e9, meta={"seed": 1})
    b0 = rep.bands[0]
    assert b0.ser == pytest.approx(0.005)
    assert b0.ber == b0.ber_info
    assert 0 < b0.ber < BER_HD_FEC and b0.n_bits == 2000
    assert 0.99 < b0.ngmi <= 1.0
    assert rep.aggregate["ber"] == pytest.approx(b0.ber)
    assert rep.aggregate["max_ber"] == b0.ber
    assert rep.passed
    assert rep.aggregate["oh_pred"] == pytest.approx(fec_overhead(rep.aggregate["avg_ngmi"]))
    with pytest.raises(ParameterError):
        assemble_report([t], [rec, rec], [1e9], gross_bps=1, net_bps=1)


def test_report_json_round_trip():
    c = make_constellation(4)
    idx = np.arange(40) % 4
    rec = {"bits": c.bit_matrix[idx].ravel(), "indices": idx, "soft": c.points[idx], "noise_var": 0.1,
           "constellation": c}
    rep = assemble_report([_truth(idx, c)], [rec], [1e9], gross_bps=2e9, net_bps=2e9)
    text = rep.to_json()
    d = json.loads(text)
    assert d["schema_version"] == 1
    assert d["bands"][0]["mse_db"] is None  # NaN becomes null
    back = LinkReport.from_json(text)
    assert back.bands[0].ber == rep.bands[0].ber
    assert back.aggregate["avg_ngmi"] == rep.aggregate["avg_ngmi"]
