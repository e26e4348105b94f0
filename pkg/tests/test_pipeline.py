import numpy as np
import pytest

from scmlink.bandplan import aggregate_rate
from scmlink.harness import PRESETS, StageError, preset, preset_names, prepare, run_link
from scmlink.harness.config import ConfigError, LinkConfig
from scmlink.harness.pipeline import (
    frame_specs,
    handoff,
    load_pcs,
    papr_comparison,
    resolve_plan,
    run_rx,
    simulate_channel,
)
from scmlink.metrics import BER_HD_FEC
from scmlink.sigkit import RealWaveform


def fast_cfg(**over):
    """Back-to-back link on the explicit published plan with short frames."""
    base = LinkConfig().replace(channel={"length_km": 0.0, "rop_dbm": -4.0, "osnr_db": 47.67},
                                txdsp={"payload_len": 1024})
    return base.replace(**over) if over else base


def _strip(rep):
    d = rep.to_dict()
    d["meta"].pop("elapsed_s", None)
    return d


@pytest.fixture(scope="module")
def fast_report():
    return run_link(fast_cfg())


# -- presets -------------------------------------------------------------------------

def test_presets_listed_and_valid():
    assert set(preset_names()) == set(PRESETS) >= {"paper-50km-uniform", "paper-50km-pcs", "obtb-uniform",
                                                   "obtb-pcs", "desk-scale-fast"}
    for name in preset_names():
        cfg = preset(name)
        assert cfg.harness.preset == name
        assert cfg.channel.rop_dbm == -4.0 and cfg.channel.osnr_db == 47.67
    assert preset("obtb-pcs").channel.length_km == 0.0
    assert preset("obtb-pcs").bandplan.probe_length_km == 50.0
    assert preset("paper-50km-pcs").modem.orders == (256, 16, 16, 16, 16, 16, 16)


def test_preset_overrides_and_unknown():
    assert preset("desk-scale-fast", harness={"seed": 9}).harness.seed == 9
    with pytest.raises(ConfigError, match="unknown preset"):
        preset("moon-link")


# -- plan and framing ----------------------------------------------------------------

def test_explicit_plan_attaches_modulation():
    plan = resolve_plan(LinkConfig())
    assert len(plan) == 7
    assert [b.modulation.order for b in plan] == [128, 16, 8, 8, 4, 4, 2]
    assert aggregate_rate(plan) == pytest.approx(102.18e9)


def test_auto_plan_band_count_mismatch_is_stage_error():
    cfg = LinkConfig().replace(bandplan={"source": "auto", "probe_symbols": 1 << 14},
                               modem={"orders": [16, 16]}, txdsp={"training_lens": [300, 300]},
                               rxdsp={"ffe_taps": [21, 21], "alphas": [0.3, 0.3]})
    with pytest.raises(StageError) as exc:
        resolve_plan(cfg)
    assert exc.value.stage == "plan"


def test_frame_specs_precedence():
    cfg = LinkConfig()
    plan = resolve_plan(cfg)
    assert [f.payload_len for f in frame_specs(cfg, plan)] == [1 << 15] * 7
    assert [f.payload_len for f in frame_specs(cfg, plan, payload=100)] == [100] * 7
    total = frame_specs(cfg.replace(txdsp={"total_payload_bits": 378260}), plan)
    per = round(378260 / sum(b.modulation.rate_bits for b in plan))
    assert [f.payload_len for f in total] == [per] * 7
    dur = frame_specs(cfg.replace(txdsp={"frame_duration_s": 1e-6}), plan)
    assert dur[0].payload_len == int(1e-6 * 7.01e9) - 500
    assert [f.training_len for f in dur] == [500, 300, 300, 300, 200, 200, 100]


def test_frame_specs_pcs_whole_blocks():
    cfg = LinkConfig().replace(modem={"kind": "pcs", "orders": [256] + [16] * 6, "entropies": [6.0] + [3.5] * 6},
                               txdsp={"payload_len": 1000})
    for f in frame_specs(cfg, resolve_plan(cfg)):
        assert f.payload_len == 896


def test_handoff_is_float32_rounding():
    w = RealWaveform(np.array([1 / 3, 0.1]), 1.0)
    h = handoff(w)
    assert h.samples.dtype == np.float64
    assert np.array_equal(h.samples, np.float32(w.samples).astype(np.float64))
    assert np.array_equal(handoff(h).samples, h.samples)


# -- channel -----------------------------------------------------------------------------

def test_simulate_channel_rates_and_noise_seed():
    cfg = fast_cfg()
    x = RealWaveform(np.random.default_rng(0).standard_normal(9000), 90e9)
    a = simulate_channel(x, cfg, seed=3)
    b = simulate_channel(x, cfg, seed=3)
    c = simulate_channel(x, cfg, seed=4)
    assert a.rx.sample_rate_hz == 80e9
    assert np.array_equal(a.rx.samples, b.rx.samples)
    assert not np.array_equal(a.rx.samples, c.rx.samples)
    assert a.received_power_dbm == pytest.approx(-4.0, abs=0.01)
    assert abs(np.mean(a.rx.samples)) < 1e-3 * np.std(a.rx.samples)


# -- end to end ------------------------------------------------------------------------------

def test_fast_link_report(fast_report):
    rep = fast_report
    assert len(rep.bands) == 7
    assert rep.aggregate["gross_bps"] == pytest.approx(102.18e9)
    assert rep.aggregate["net_bps"] < rep.aggregate["gross_bps"]
    assert all(b.ber < BER_HD_FEC for b in rep.bands[1:])
    assert rep.aggregate["avg_ngmi"] > 0.9
    assert 5 < rep.aggregate["cspr_db"] < 30
    assert rep.meta["config_hash"] == fast_cfg().config_hash()
    assert rep.meta["seeds"]["master"] == 0


def test_link_is_deterministic(fast_report):
    assert _strip(run_link(fast_cfg())) == _strip(fast_report)


def test_seed_changes_payload(fast_report):
    other = run_link(fast_cfg(harness={"seed": 5}))
    assert other.meta["seeds"]["master"] == 5
    assert _strip(other) != _strip(fast_report)


def test_high_snr_back_to_back_is_error_free():
    cfg = fast_cfg(channel={"osnr_db": None, "rop_dbm": None, "bias_v": 2.0, "drive_scale": 0.25})
    rep = run_link(cfg)
    assert all(b.ber == 0.0 for b in rep.bands)
    assert rep.passed


def test_rx_stage_error_on_silent_capture():
    cfg = fast_cfg()
    state = prepare(cfg)
    from scmlink.harness.pipeline import run_tx
    txr = run_tx(cfg, state.plan)
    with pytest.raises(StageError) as exc:
        run_rx(cfg, state.plan, txr.truths, RealWaveform(np.zeros(100000), 80e9))
    assert exc.value.stage == "rx"


def test_pcs_loading_from_given_snr():
    cfg = fast_cfg(modem={"kind": "pcs", "orders": [256] + [16] * 6})
    plan = resolve_plan(cfg)
    lp, snr = load_pcs(cfg, plan, snr_db=[20, 18, 17, 15, 14, 12, 11])
    assert lp.rate == pytest.approx(103e9)
    assert all(2.0 <= h <= 8.0 for h in lp.h)


def test_papr_comparison_schema():
    d = papr_comparison(fast_cfg())
    assert d["schema_version"] == 1 and d["percentile"] == 99.99
    assert d["rate_bps"] == pytest.approx(102.18e9)
    assert 5 < d["scm_papr_db"] < 20 and 5 < d["multicarrier_papr_db"] < 20
