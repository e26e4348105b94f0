import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from conftest import PUBLISHED_BAUDS

from scmlink import ParameterError
from scmlink.modem import (
    SUPPORTED_ORDERS,
    CcdmCode,
    ModulationSpec,
    PcsModem,
    ShapedConstellation,
    ccdm_decode,
    ccdm_encode,
    entropy_loading,
    initial_entropy,
    make_constellation,
    mb_for_entropy,
    mb_nu,
    pas_code,
    pcs_constellation,
    pcs_demap_hard,
    pcs_map,
)


def _nn_hamming(c):
    d = np.abs(c.points[:, None] - c.points[None, :])
    np.fill_diagonal(d, np.inf)
    adj = np.isclose(d, d.min())
    x = c.labels[:, None] ^ c.labels[None, :]
    pc = np.vectorize(lambda v: bin(v).count("1"))(x)
    return pc[adj]


# -- constellations ----------------------------------------------------------------

@pytest.mark.parametrize("M", SUPPORTED_ORDERS)
def test_constellation_unit_energy_and_labels(M):
    c = make_constellation(M)
    assert c.order == M and c.bits_per_symbol == int(math.log2(M))
    assert np.sum(c.priors * np.abs(c.points) ** 2) == pytest.approx(1.0, rel=1e-12)
    assert sorted(c.labels.tolist()) == list(range(M))
    assert np.unique(np.round(c.points, 9)).size == M
    assert c.is_uniform


@pytest.mark.parametrize("M", [2, 4, 8, 16, 64, 256])
def test_gray_labels_on_rectangular_grids(M):
    assert np.all(_nn_hamming(make_constellation(M)) == 1)


@pytest.mark.parametrize("M", [32, 128])
def test_cross_labels_quasi_gray(M):
    h = _nn_hamming(make_constellation(M))
    assert h.max() <= 2
    assert np.mean(h == 1) > 0.6


def test_cross_geometry():
    pts = make_constellation(128).points
    pts = pts / np.min(np.abs(pts.real[np.abs(pts.real) > 0]))
    assert np.max(np.abs(pts.real)) == pytest.approx(11.0)
    assert not np.any((np.abs(pts.real) > 8) & (np.abs(pts.imag) > 8))


@given(st.sampled_from(SUPPORTED_ORDERS), st.integers(0, 2**31))
def test_map_demap_round_trip(M, seed):
    c = make_constellation(M)
    bits = np.random.default_rng(seed).integers(0, 2, 50 * c.bits_per_symbol)
    assert np.array_equal(c.demap_hard(c.map_bits(bits)), bits)


def test_qpsk_msb_first():
    c = make_constellation(4)
    p = c.map_bits([0, 0, 1, 1])
    assert p[0] == -np.conj(p[1]) or p[0] == -p[1]


def test_constellation_validation():
    with pytest.raises(ParameterError):
        ShapedConstellation([1, -1, 1j], [0, 1, 2], [1, 1, 1])
    with pytest.raises(ParameterError):
        ShapedConstellation([1, -1], [0, 0], [1, 1])
    with pytest.raises(ParameterError):
        make_constellation(12)
    with pytest.raises(ParameterError):
        make_constellation(4).map_bits([0, 1, 1])
    with pytest.raises(ParameterError):
        make_constellation(4).map_bits([0, 2])


def test_constellation_dict_round_trip():
    c = mb_for_entropy(16, 3.4)
    back = ShapedConstellation.from_dict(c.to_dict())
    assert np.allclose(back.points, c.points) and np.allclose(back.priors, c.priors)


def test_modulation_spec():
    assert ModulationSpec("pcs", 16, 3.3).rate_bits == 3.3
    assert ModulationSpec("uniform", 128).rate_bits == 7.0
    assert ModulationSpec.from_dict(ModulationSpec("pcs", 256, 5.7).to_dict()) == ModulationSpec("pcs", 256, 5.7)
    for bad in (("qam", 4, None), ("uniform", 12, None), ("pcs", 8, 2.5), ("pcs", 16, 4.5), ("pcs", 16, 1.5)):
        with pytest.raises(ParameterError):
            ModulationSpec(*bad)


# -- Maxwell-Boltzmann -------------------------------------------------------------------

@given(st.sampled_from([16, 64, 256]), st.floats(0.0, 1.0))
def test_mb_hits_target_entropy(M, frac):
    target = 2.05 + frac * (math.log2(M) - 2.1)
    c = mb_for_entropy(M, target)
    assert c.entropy == pytest.approx(target, abs=1e-9)
    assert np.sum(c.priors * np.abs(c.points) ** 2) == pytest.approx(1.0)


def test_mb_priors_decrease_with_energy():
    c = mb_for_entropy(64, 4.5)
    e = np.abs(c.points) ** 2
    o = np.argsort(e)
    assert np.all(np.diff(c.priors[o]) <= 1e-15)


def test_mb_full_entropy_is_uniform():
    assert mb_for_entropy(16, 4.0).is_uniform
    assert mb_nu(16, 4.0) == 0.0
    assert mb_nu(16, 3.0) > mb_nu(16, 3.5) > 0


def test_mb_entropy_out_of_range():
    with pytest.raises(ParameterError):
        mb_for_entropy(16, 4.5)
    with pytest.raises(ParameterError):
        mb_for_entropy(16, 1.0)
    with pytest.raises(ParameterError):
        mb_for_entropy(12, 3.0)


# -- entropy loading --------------------------------------------------------------------

def test_loading_equal_shift_hits_target():
    h0 = [6.2, 4.0, 3.9, 3.8, 3.7, 3.5, 3.3]
    plan = entropy_loading(h0, PUBLISHED_BAUDS, 100e9)
    assert plan.rate == pytest.approx(100e9, rel=1e-12)
    shift = np.array(plan.h) - np.array(h0)
    assert np.allclose(shift, shift[0])
    assert plan.clamped == ()


def test_loading_clamps_and_redistributes():
    h0 = [7.9, 3.0, 3.0]
    baud = [5e9, 2e9, 2e9]
    plan = entropy_loading(h0, baud, 5e9 * 8 + 2e9 * 3.6 * 2, h_max=[8, 4, 4])
    assert plan.h[0] == 8.0 and plan.clamped == (0,)
    assert plan.h[1] == pytest.approx(plan.h[2])
    assert plan.rate == pytest.approx(plan.rs_target)


def test_loading_unreachable():
    with pytest.raises(ParameterError):
        entropy_loading([3.0, 3.0], [1e9, 1e9], 20e9, h_max=[4, 4])
    with pytest.raises(ParameterError):
        entropy_loading([3.0], [1e9, 1e9], 1e9)


@given(st.lists(st.floats(2.5, 7.5), min_size=1, max_size=7), st.floats(0.8, 1.2))
def test_loading_rate_property(h0, scale):
    baud = np.linspace(7e9, 2e9, len(h0))
    target = float(np.dot(h0, baud)) * scale
    plan = entropy_loading(h0, baud, target, h_max=[8.0] * len(h0), h_min=1.0)
    if not plan.clamped or plan.rate > 0:
        assert plan.rate == pytest.approx(target, rel=1e-9)
    assert all(1.0 - 1e-12 <= h <= 8.0 + 1e-12 for h in plan.h)


def test_initial_entropy():
    h = initial_entropy([0.0, 10.0, 20.0, 40.0], 16)
    assert np.all(np.diff(h) > 0)
    assert h[-1] == pytest.approx(4.0, abs=1e-6)
    assert initial_entropy(-20.0, 4) == 1.0
    assert initial_entropy(float("inf"), 64) == 6.0
    # QPSK at 10 dB Es/N0 carries roughly 1.99 bits
    assert initial_entropy(10.0, 4) == pytest.approx(1.99, abs=0.02)


# -- CCDM ---------------------------------------------------------------------------------

def test_ccdm_code_properties():
    code = CcdmCode(8, (4, 2, 1, 1))
    assert code.input_bits == math.floor(math.log2(8 * 7 * 6 * 5 * 4 * 3 * 2 / (24 * 2)))
    assert code.rate == code.input_bits / 8
    with pytest.raises(ParameterError):
        CcdmCode(8, (4, 2, 1))
    with pytest.raises(ParameterError):
        CcdmCode(2, (3, -1))


def test_ccdm_rank_zero_is_sorted_sequence():
    code = CcdmCode(6, (3, 2, 1))
    out = ccdm_encode(np.zeros(code.input_bits, dtype=int), code)
    assert out.tolist() == [0, 0, 0, 1, 1, 2]


@given(st.lists(st.integers(0, 6), min_size=2, max_size=4).filter(lambda c: sum(c) >= 4), st.integers(0, 2**31))
def test_ccdm_round_trip(comp, seed):
    code = CcdmCode(sum(comp), tuple(comp))
    if code.input_bits == 0:
        return
    bits = np.random.default_rng(seed).integers(0, 2, 5 * code.input_bits)
    amps = ccdm_encode(bits, code)
    for blk in amps.reshape(5, -1):
        assert tuple(np.bincount(blk, minlength=len(comp)).tolist()) == code.composition
    assert np.array_equal(ccdm_decode(amps, code), bits)


def test_ccdm_strict_and_lenient_decode():
    code = CcdmCode(8, (4, 2, 1, 1))
    amps = ccdm_encode(np.ones(code.input_bits, dtype=int), code)
    amps[0] = (amps[0] + 1) % 4
    with pytest.raises(ParameterError):
        ccdm_decode(amps, code)
    out = ccdm_decode(amps, code, strict=False)
    assert out.size == code.input_bits
    with pytest.raises(ParameterError):
        ccdm_decode(amps[:-1], code)


def test_ccdm_from_pmf():
    code = CcdmCode.from_pmf([0.5, 0.3, 0.15, 0.05], 256)
    assert sum(code.composition) == 256
    assert np.allclose(code.pmf, [0.5, 0.3, 0.15, 0.05], atol=1 / 256)


def test_ccdm_rate_loss_shrinks_with_length():
    pmf = [0.4, 0.3, 0.2, 0.1]
    loss = [CcdmCode.from_pmf(pmf, n).entropy - CcdmCode.from_pmf(pmf, n).rate for n in (32, 128, 512)]
    assert loss[0] > loss[1] > loss[2] > 0


# -- PAS ------------------------------------------------------------------------------------

@given(st.sampled_from([16, 64, 256]), st.integers(0, 2**31))
def test_pas_round_trip(M, seed):
    code = pas_code(M, 0.8 * math.log2(M), 64)
    shaped = pcs_constellation(M, code)
    per = code.input_bits + code.block_len
    bits = np.random.default_rng(seed).integers(0, 2, 3 * per)
    idx = pcs_map(bits, shaped, code)
    assert idx.size == 3 * code.block_len // 2
    assert np.array_equal(pcs_demap_hard(shaped.points[idx], shaped, code, strict=True), bits)


def test_pas_symbol_statistics_follow_priors():
    code = pas_code(16, 3.4, 256)
    shaped = pcs_constellation(16, code)
    per = code.input_bits + code.block_len
    bits = np.random.default_rng(0).integers(0, 2, 400 * per)
    idx = pcs_map(bits, shaped, code)
    freq = np.bincount(idx, minlength=16) / idx.size
    assert np.max(np.abs(freq - shaped.priors)) < 0.01
    assert shaped.entropy == pytest.approx(3.4, abs=0.05)


def test_pas_code_full_entropy_is_uniform():
    code = pas_code(16, 4.0)
    assert code.composition == (128, 128)


def test_pas_layout_errors():
    code = CcdmCode(8, (4, 4))
    with pytest.raises(ParameterError):
        pcs_constellation(64, code)
    with pytest.raises(ParameterError):
        pcs_map(np.zeros(7, dtype=int), pcs_constellation(16, code), code)


# -- estimator --------------------------------------------------------------------------------

def test_pcs_modem_estimator():
    m = PcsModem(kind="pcs", order=64, entropy=5.0, block_len=128).fit()
    assert m.get_params() == {"kind": "pcs", "order": 64, "entropy": 5.0, "block_len": 128}
    bits = np.random.default_rng(1).integers(0, 2, 4 * m.bits_per_block_)
    sym = m.transform(bits)
    assert sym.size == 4 * m.symbols_per_block_
    assert np.array_equal(m.inverse_transform(sym), bits)
    assert m.info_bits_per_symbol < 6.0


def test_uniform_modem_estimator():
    m = PcsModem("uniform", 8).fit()
    bits = np.random.default_rng(2).integers(0, 2, 300)
    assert np.array_equal(m.inverse_transform(m.transform(bits)), bits)
    assert m.info_bits_per_symbol == 3.0
    with pytest.raises(ParameterError):
        PcsModem("uniform", 9).fit()
