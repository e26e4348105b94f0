"""End-to-end link simulation: plan, transmit, channel, receive, report."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .._validation import ScmError
from ..bandplan import Band, BandPlan, BandPlanner, aggregate_rate
from ..channel import (
    FiberParams,
    FrontEnd,
    MzmParams,
    NoiseSpec,
    add_noise,
    apply_frontend,
    compute_cspr,
    mzm_modulate,
    photodetect,
    propagate_field,
    scale_to_power,
)
from ..metrics import SCHEMA_VERSION, LinkReport, assemble_report
from ..modem import ModulationSpec, entropy_loading, initial_entropy
from ..rxdsp import EqualizerConfig, MlseConfig, PostFilterCoef, RxDspParams, recover_band
from ..sigkit import RealWaveform, measure_papr, resample
from ..txdsp import FrameSpec, TruthRecord, TxConfig, TxResult, band_modem, build_tx, multicarrier_reference, net_rate
from .config import LinkConfig

__all__ = [
    "StageError",
    "LinkState",
    "resolve_plan",
    "probe_channel",
    "frame_specs",
    "run_tx",
    "run_channel",
    "run_rx",
    "run_link",
    "measure_band_snr",
    "load_pcs",
    "prepare",
    "papr_comparison",
    "simulate_channel",
    "handoff",
    "ChannelOutput",
    "truths_from_json",
]


class StageError(ScmError):
    """A pipeline stage failed; ``stage`` names it and ``cause`` holds the original error."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def _staged(stage):
    def deco(fn):
        def wrapper(*a, **kw):
            try:
                return fn(*a, **kw)
            except StageError:
                raise
            except ScmError as e:
                raise StageError(stage, e) from e
            except (ValueError, FloatingPointError, np.linalg.LinAlgError) as e:
                raise StageError(stage, e) from e
        wrapper.__name__ = fn.__name__
        wrapper.__doc__ = fn.__doc__
        wrapper.__wrapped__ = fn
        return wrapper
    return deco


# -- channel ------------------------------------------------------------------

def _fiber(cfg):
    return FiberParams(cfg.channel.beta2_ps2_per_km, cfg.channel.length_km)


def _dac(cfg):
    ch = cfg.channel
    return FrontEnd(ch.dac_bandwidth_hz, ch.frontend_order, ch.dac_bits, ch.dac_clip, quantize_first=True)


def _pd(cfg):
    return FrontEnd(cfg.channel.pd_bandwidth_hz, cfg.channel.frontend_order)


def _adc(cfg):
    ch = cfg.channel
    return FrontEnd(ch.adc_bandwidth_hz, ch.frontend_order, ch.adc_bits, ch.adc_clip)


@dataclass
class ChannelOutput:
    rx: RealWaveform
    cspr_db: float
    papr_db: float
    received_power_dbm: float


def simulate_channel(drive: RealWaveform, cfg: LinkConfig, seed: int, drive_scale: Optional[float] = None,
                     noise: bool = True) -> ChannelOutput:
    """DAC, MZM, fiber, optional noise, photodiode and digitiser.

    The optical section runs at ``fs_sim_hz`` so the square-law products of
    the widest band do not alias. The detected photocurrent is AC coupled
    before the digitiser.
    """
    ch = cfg.channel
    if drive.sample_rate_hz != ch.fs_dac_hz:
        drive = RealWaveform(resample(drive, ch.fs_dac_hz / drive.sample_rate_hz).samples, ch.fs_dac_hz)
    papr = measure_papr(drive, 99.99)
    x = apply_frontend(drive, _dac(cfg))
    x = resample(x, ch.fs_sim_hz / ch.fs_dac_hz)
    x = RealWaveform(x.samples, ch.fs_sim_hz)
    mzm = MzmParams(ch.v_pi, ch.bias_v, ch.drive_scale if drive_scale is None else drive_scale)
    carrier_mw = 10 ** (ch.carrier_power_dbm / 10)
    field = mzm_modulate(x, mzm, carrier_mw)
    cspr = compute_cspr(field)
    field = propagate_field(field, _fiber(cfg))
    rng = np.random.default_rng(seed)
    if ch.rop_dbm is not None:
        field = scale_to_power(field, ch.rop_dbm)
    if noise and ch.osnr_db is not None:
        field = add_noise(field, NoiseSpec("osnr", ch.osnr_db), rng=rng)
    p_rx = float(np.mean(np.abs(field.samples) ** 2))
    i = photodetect(field)
    if noise and ch.rop_dbm is not None:
        i = add_noise(i, NoiseSpec("rop", ch.rop_dbm, thermal_density=ch.thermal_density), rng=rng)
    i = apply_frontend(i, _pd(cfg))
    i = RealWaveform(i.samples - i.samples.mean(), i.sample_rate_hz)
    y = resample(i, ch.fs_adc_hz / ch.fs_sim_hz)
    y = apply_frontend(RealWaveform(y.samples, ch.fs_adc_hz), _adc(cfg))
    return ChannelOutput(y, cspr, papr, 10 * math.log10(p_rx / 1e-3))


# -- planning -----------------------------------------------------------------

def probe_channel(cfg: LinkConfig):
    """Send a wideband OOK probe through the link; returns (tx probe at fs_adc, rx probe)."""
    bp, ch = cfg.bandplan, cfg.channel
    rng = np.random.default_rng(cfg.seeds["probe"])
    sym = 2.0 * rng.integers(0, 2, int(bp.probe_symbols)) - 1.0
    # NRZ at the probe rate, then to the DAC rate
    sps = 4
    nrz = RealWaveform(np.repeat(sym, sps), bp.probe_baud_hz * sps)
    tx = resample(nrz, ch.fs_dac_hz / nrz.sample_rate_hz)
    tx = RealWaveform(tx.samples / tx.samples.std(), ch.fs_dac_hz)
    pcfg = cfg if bp.probe_length_km is None else cfg.replace(channel={"length_km": bp.probe_length_km})
    out = simulate_channel(tx, pcfg, cfg.seeds["probe"], drive_scale=bp.probe_drive_scale)
    ref = resample(tx, ch.fs_adc_hz / ch.fs_dac_hz)
    return RealWaveform(ref.samples, ch.fs_adc_hz), out.rx


@_staged("plan")
def resolve_plan(cfg: LinkConfig, entropies=None) -> BandPlan:
    """Band plan with per-band modulation specs attached.

    ``entropies`` overrides the configured PCS entropies.
    """
    bp, md = cfg.bandplan, cfg.modem
    if bp.source == "auto":
        tx, rx = probe_channel(cfg)
        planner = BandPlanner(f_max=bp.f_max_hz, drop_db=bp.drop_db, guard_hz=bp.guard_hz,
                              resolution_hz=bp.resolution_hz).fit(tx, rx)
        geom = [(b.f_center, b.baud, b.rolloff, b.segment) for b in planner.plan_]
        if len(geom) != len(md.orders):
            raise ValueError(f"auto plan found {len(geom)} bands but {len(md.orders)} modem orders are configured")
    else:
        geom = [(c, b, r, None) for c, b, r in zip(bp.centers_hz, bp.bauds_hz, bp.rolloffs)]
    ent = entropies if entropies is not None else md.entropies
    bands = []
    for k, ((fc, rs, ro, seg), order) in enumerate(zip(geom, md.orders)):
        if md.kind == "pcs":
            h = None if ent is None else float(ent[k])
            spec = ModulationSpec("pcs", int(order), h)
        else:
            spec = ModulationSpec("uniform", int(order))
        bands.append(Band(k + 1, fc, rs, ro, spec, seg))
    return BandPlan(tuple(bands), bp.f_max_hz, bp.drop_db)


def frame_specs(cfg: LinkConfig, plan: BandPlan, payload: Optional[int] = None):
    """One :class:`FrameSpec` per band.

    Payload length, in order of precedence: the explicit ``payload``
    argument; ``total_payload_bits`` split so every band carries the same
    number of payload symbols; ``frame_duration_s`` (faster bands carry
    more symbols); ``payload_len``. PCS payloads are rounded down to whole
    CCDM blocks.
    """
    tx, md = cfg.txdsp, cfg.modem
    out = []
    per_band = None
    if payload is None and tx.total_payload_bits is not None:
        per_band = int(round(tx.total_payload_bits / sum(b.modulation.rate_bits for b in plan)))
    for k, b in enumerate(plan):
        t = int(tx.training_lens[k])
        if payload is not None:
            p = int(payload)
        elif per_band is not None:
            p = per_band
        elif tx.frame_duration_s is not None:
            p = int(math.floor(tx.frame_duration_s * b.baud)) - t
        elif isinstance(tx.payload_len, tuple):
            p = int(tx.payload_len[k])
        else:
            p = int(tx.payload_len)
        if b.modulation.kind == "pcs":
            q = md.ccdm_block_len // 2
            p = max(q, p // q * q)
        out.append(FrameSpec(t, max(p, 1), tx.training_seed))
    return tuple(out)


# -- stages -------------------------------------------------------------------

@_staged("tx")
def run_tx(cfg: LinkConfig, plan: BandPlan, payload: Optional[int] = None) -> TxResult:
    tx = cfg.txdsp
    tc = TxConfig(cfg.channel.fs_dac_hz, plan, frame_specs(cfg, plan, payload), tx.power_policy,
                  tx.band_gains_db, tx.rrc_span, tx.guard_symbols, cfg.modem.ccdm_block_len,
                  cfg.seeds["payload"])
    return build_tx(tc)


def handoff(w):
    """Round a waveform to float32, the precision of the on-disk format.

    Applied at every stage boundary so a monolithic run and a staged run
    through waveform files see identical samples.
    """
    return w.with_samples(np.asarray(w.samples, dtype=np.float32).astype(np.float64))


@_staged("channel")
def run_channel(cfg: LinkConfig, drive: RealWaveform) -> ChannelOutput:
    out = simulate_channel(handoff(drive), cfg, cfg.seeds["noise"])
    out.rx = handoff(out.rx)
    return out


def _rx_params(cfg: LinkConfig, k: int, use_priors: bool) -> RxDspParams:
    rx = cfg.rxdsp
    return RxDspParams(
        EqualizerConfig(int(rx.ffe_taps[k]), rx.mu_train, rx.mu_dd, rx.train_passes),
        PostFilterCoef(float(rx.alphas[k])),
        MlseConfig(1, rx.traceback_depth, use_priors),
        rx.use_mlse,
        rx.samples_per_symbol,
        cfg.txdsp.rrc_span,
    )


def recover_all(cfg: LinkConfig, plan: BandPlan, truths, rx: RealWaveform):
    """Per-band receiver; returns the list of mappings consumed by the report."""
    out = []
    for k, (band, t) in enumerate(zip(plan, truths)):
        modem = band_modem(band.modulation, cfg.modem.ccdm_block_len)
        const = modem.constellation_
        shaped = not const.is_uniform
        params = _rx_params(cfg, k, cfg.rxdsp.use_priors and shaped)
        r = recover_band(rx, band, t.training, t.payload_len, const, params)
        bits = modem.indices_to_bits(r.indices)
        out.append({"band_index": band.index, "bits": bits, "indices": r.indices, "soft": r.soft,
                    "noise_var": r.noise_var, "constellation": const, "mse_db": r.diagnostics["mse_db"],
                    "diagnostics": r.diagnostics})
    return out


@_staged("rx")
def run_rx(cfg: LinkConfig, plan: BandPlan, truths, rx: RealWaveform, papr_db=float("nan"),
           cspr_db=float("nan"), meta: Optional[dict] = None) -> LinkReport:
    rec = recover_all(cfg, plan, truths, rx)
    frames = [FrameSpec(t.training_len, t.payload_len, t.training_seed) for t in truths]
    return assemble_report(truths, rec, [b.baud for b in plan], gross_bps=aggregate_rate(plan),
                           net_bps=net_rate(plan, frames), papr_db=papr_db, cspr_db=cspr_db, meta=meta)


# -- PCS entropy loading -------------------------------------------------------

def measure_band_snr(cfg: LinkConfig, plan: BandPlan) -> np.ndarray:
    """Per-band SNR (dB) from a short uniform pilot frame at the configured operating point."""
    pilot_cfg = cfg.replace(modem={"kind": "uniform", "entropies": None})
    pilot_plan = plan.with_bands([Band(b.index, b.f_center, b.baud, b.rolloff, ModulationSpec("uniform", 4),
                                       b.segment) for b in plan])
    txr = run_tx(pilot_cfg, pilot_plan, payload=cfg.modem.pilot_payload)
    ch = run_channel(pilot_cfg, txr.waveform)
    snr = []
    for k, (band, t) in enumerate(zip(pilot_plan, txr.truths)):
        const = band_modem(band.modulation).constellation_
        p = _rx_params(pilot_cfg, k, False)
        # linear FFE only: the SNR seen by a memoryless demapper
        p = RxDspParams(p.equalizer, PostFilterCoef(0.0), p.mlse, False, p.samples_per_symbol, p.rrc_span)
        r = recover_band(ch.rx, band, t.training, t.payload_len, const, p)
        ref = const.points[t.indices]
        err = float(np.mean(np.abs(r.q[t.training_len:] - ref) ** 2))
        snr.append(10 * math.log10(1.0 / max(err, 1e-12)))
    return np.asarray(snr)


@_staged("modem")
def load_pcs(cfg: LinkConfig, plan: BandPlan, snr_db=None):
    """Entropy loading from measured (or given) per-band SNR.

    ``H0`` is the AWGN mutual information of the uniform base QAM at each
    band's SNR; the loader shifts all entropies equally to meet
    ``rs_target_bps`` with each band held inside ``[2, log2 M]``.
    """
    if snr_db is None:
        snr_db = measure_band_snr(cfg, plan)
    orders = cfg.modem.orders
    h0 = [initial_entropy(s, int(m)) for s, m in zip(snr_db, orders)]
    bauds = [b.baud for b in plan]
    lp = entropy_loading(h0, bauds, cfg.modem.rs_target_bps, h_max=[math.log2(m) for m in orders], h_min=2.0)
    return lp, np.asarray(snr_db)


# -- orchestration --------------------------------------------------------------

@dataclass
class LinkState:
    """Everything produced along the way; handy for the staged CLI and tests."""

    cfg: LinkConfig
    plan: BandPlan
    tx: Optional[TxResult] = None
    channel: Optional[ChannelOutput] = None
    report: Optional[LinkReport] = None
    loading: Optional[dict] = None


def prepare(cfg: LinkConfig) -> LinkState:
    """Resolve the band plan, running entropy loading for PCS when no entropies are configured."""
    plan = resolve_plan(cfg)
    loading = None
    if cfg.modem.kind == "pcs" and cfg.modem.entropies is None:
        lp, snr = load_pcs(cfg, plan)
        plan = resolve_plan(cfg.replace(bandplan={"source": "explicit",
                                                  "centers_hz": [b.f_center for b in plan],
                                                  "bauds_hz": [b.baud for b in plan],
                                                  "rolloffs": [b.rolloff for b in plan]}), lp.h)
        loading = dict(lp.to_dict(), snr_db=snr.tolist())
    return LinkState(cfg, plan, loading=loading)


def report_meta(cfg: LinkConfig, state: LinkState, elapsed: float) -> dict:
    meta = {
        "config_hash": cfg.config_hash(),
        "seeds": cfg.seeds,
        "config": cfg.to_dict(),
        "plan": state.plan.to_dict(),
        "elapsed_s": round(elapsed, 3),
    }
    if state.loading is not None:
        meta["entropy_loading"] = state.loading
    if state.channel is not None:
        meta["received_power_dbm"] = state.channel.received_power_dbm
    return meta


def run_link(cfg: LinkConfig, state: Optional[LinkState] = None) -> LinkReport:
    """Full pipeline for one operating point."""
    t0 = time.perf_counter()
    state = prepare(cfg) if state is None else state
    state.tx = run_tx(cfg, state.plan)
    state.channel = run_channel(cfg, state.tx.waveform)
    meta = report_meta(cfg, state, 0.0)
    rep = run_rx(cfg, state.plan, state.tx.truths, state.channel.rx, state.channel.papr_db,
                 state.channel.cspr_db, meta)
    rep.meta["elapsed_s"] = round(time.perf_counter() - t0, 3)
    state.report = rep
    return rep


def truths_from_json(d: dict, block_len: int = 256):
    return [TruthRecord.from_dict(t, block_len) for t in d["bands"]]


def papr_comparison(cfg: LinkConfig, state: Optional[LinkState] = None, percentile: float = 99.99,
                    n_subcarriers: int = 256) -> dict:
    """PAPR of the SCM drive against a multicarrier signal of equal line rate."""
    state = prepare(cfg) if state is None else state
    txr = state.tx if state.tx is not None else run_tx(cfg, state.plan)
    rate = aggregate_rate(state.plan)
    fs = cfg.channel.fs_dac_hz
    n_blocks = max(1, len(txr.waveform) // (2 * n_subcarriers)) + 1
    mc = multicarrier_reference(rate, fs, n_subcarriers, 16, n_blocks, cfg.seeds["payload"])
    return {
        "schema_version": SCHEMA_VERSION,
        "percentile": percentile,
        "scm_papr_db": measure_papr(txr.waveform, percentile),
        "multicarrier_papr_db": measure_papr(mc, percentile),
        "n_subcarriers": n_subcarriers,
        "rate_bps": rate,
        "scm_samples": len(txr.waveform),
        "multicarrier_samples": len(mc),
        "config_hash": cfg.config_hash(),
    }
