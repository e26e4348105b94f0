"""Named operating points.

The 50 km presets plan their bands from a probe of the simulated fiber
(``source = "auto"``) rather than reusing the published centre frequencies,
because those were measured on hardware whose fading nulls sit slightly
apart from the ideal fiber model. The back-to-back presets probe a 50 km
link so they carry the same band plan with the fiber removed.

============================  ==============================================
name                          operating point
============================  ==============================================
``obtb-uniform``              uniform QAM, 0 km, ROP -4 dBm, OSNR 47.67 dB
``obtb-pcs``                  PCS, 0 km, same powers
``paper-50km-uniform``        uniform QAM, 50 km, ROP -4 dBm, OSNR 47.67 dB
``paper-50km-pcs``            PCS, 50 km, same powers
``desk-scale-fast``           50 km uniform with short frames and probe
============================  ==============================================
"""
from __future__ import annotations

import copy

from .config import ConfigError, LinkConfig

__all__ = ["PRESETS", "preset", "preset_names"]

_LINK = {
    "channel": {"length_km": 50.0, "bias_v": 2.6, "rop_dbm": -4.0, "osnr_db": 47.67},
    "bandplan": {"source": "auto"},
    "txdsp": {"payload_len": 1 << 15},
}
_PCS = {"kind": "pcs", "orders": [256, 16, 16, 16, 16, 16, 16]}
_UNIFORM = {"kind": "uniform", "orders": [128, 16, 8, 8, 4, 4, 2]}


def _merge(base, **upd):
    out = copy.deepcopy(base)
    for sec, vals in upd.items():
        out.setdefault(sec, {}).update(vals)
    return out


PRESETS = {
    "paper-50km-uniform": _merge(_LINK, modem=_UNIFORM),
    "paper-50km-pcs": _merge(_LINK, modem=_PCS),
    "obtb-uniform": _merge(_LINK, modem=_UNIFORM, channel={"length_km": 0.0},
                           bandplan={"probe_length_km": 50.0}),
    "obtb-pcs": _merge(_LINK, modem=_PCS, channel={"length_km": 0.0}, bandplan={"probe_length_km": 50.0}),
    "desk-scale-fast": _merge(_LINK, modem=_UNIFORM, txdsp={"payload_len": 2048},
                              bandplan={"probe_symbols": 1 << 16}),
}


def preset_names():
    return sorted(PRESETS)


def preset(name: str, **overrides) -> LinkConfig:
    """Config for a named preset, with optional per-section overrides."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(preset_names())}")
    d = _merge(PRESETS[name], harness={"preset": name})
    for sec, vals in overrides.items():
        d.setdefault(sec, {}).update(vals)
    return LinkConfig.from_dict(d)
