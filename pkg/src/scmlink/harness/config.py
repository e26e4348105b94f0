"""Link configuration: typed sections, file loading and validation.

A configuration file has one table per module::

    [channel]
    length_km = 50.0
    osnr_db = 47.67

    [modem]
    kind = "pcs"
    orders = [256, 16, 16, 16, 16, 16, 16]

Files are TOML (parsed with ``tomli``); a ``.json`` file with the same
nesting is accepted too. Every error names the offending line when the
source text is available.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import tomli

from .._validation import ParameterError

__all__ = [
    "ConfigError",
    "ChannelSection",
    "BandplanSection",
    "ModemSection",
    "TxSection",
    "RxSection",
    "HarnessSection",
    "LinkConfig",
    "load_config",
    "parse_config",
    "parse_config_dict",
    "read_config_text",
    "PUBLISHED_CENTERS_HZ",
    "PUBLISHED_BAUDS_HZ",
    "PUBLISHED_ROLLOFFS",
]

PUBLISHED_CENTERS_HZ = (3.9e9, 12e9, 17.3e9, 21.3e9, 24.5e9, 27.4e9, 29.95e9)
PUBLISHED_BAUDS_HZ = (7.01e9, 5.11e9, 3.81e9, 2.76e9, 2.9e9, 2.62e9, 1.92e9)
PUBLISHED_ROLLOFFS = (0.1, 0.1, 0.1, 0.01, 0.01, 0.01, 0.01)


class ConfigError(ParameterError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message, line: Optional[int] = None, path: Optional[str] = None):
        where = ""
        if path and line:
            where = f"{path}:{line}: "
        elif line:
            where = f"line {line}: "
        elif path:
            where = f"{path}: "
        super().__init__(where + message)
        self.line = line
        self.path = path


@dataclass(frozen=True)
class ChannelSection:
    beta2_ps2_per_km: float = -21.7
    length_km: float = 50.0
    v_pi: float = 4.0
    bias_v: float = 2.0
    drive_scale: float = 0.35
    carrier_power_dbm: float = 6.56
    osnr_db: Optional[float] = None
    rop_dbm: Optional[float] = None
    thermal_density: float = 20e-12
    fs_dac_hz: float = 90e9
    dac_bandwidth_hz: float = 16e9
    dac_bits: Optional[int] = 8
    dac_clip: float = 4.0
    fs_sim_hz: float = 180e9
    pd_bandwidth_hz: float = 31e9
    fs_adc_hz: float = 80e9
    adc_bandwidth_hz: float = 36e9
    adc_bits: Optional[int] = 8
    adc_clip: float = 4.0
    frontend_order: int = 4


@dataclass(frozen=True)
class BandplanSection:
    source: str = "explicit"
    centers_hz: tuple = PUBLISHED_CENTERS_HZ
    bauds_hz: tuple = PUBLISHED_BAUDS_HZ
    rolloffs: tuple = PUBLISHED_ROLLOFFS
    f_max_hz: float = 31e9
    drop_db: float = 10.0
    guard_hz: float = 100e6
    resolution_hz: float = 200e6
    probe_baud_hz: float = 64e9
    probe_symbols: int = 1 << 18
    probe_drive_scale: float = 0.1
    probe_length_km: Optional[float] = None


@dataclass(frozen=True)
class ModemSection:
    kind: str = "uniform"
    orders: tuple = (128, 16, 8, 8, 4, 4, 2)
    entropies: Optional[tuple] = None
    rs_target_bps: float = 103e9
    ccdm_block_len: int = 256
    pilot_payload: int = 4096


@dataclass(frozen=True)
class TxSection:
    training_lens: tuple = (500, 300, 300, 300, 200, 200, 100)
    payload_len: object = 1 << 15
    frame_duration_s: Optional[float] = None
    total_payload_bits: Optional[int] = None
    training_seed: int = 1
    power_policy: str = "equal-symbol-power"
    band_gains_db: Optional[tuple] = None
    rrc_span: int = 256
    guard_symbols: int = 256


@dataclass(frozen=True)
class RxSection:
    ffe_taps: tuple = (31, 31, 21, 21, 21, 21, 21)
    mu_train: float = 5e-3
    mu_dd: float = 1e-3
    train_passes: int = 3
    alphas: tuple = (0.3, 0.4, 0.4, 0.4, 0.5, 0.5, 0.2)
    use_mlse: bool = True
    use_priors: bool = True
    traceback_depth: int = 32
    samples_per_symbol: int = 4


@dataclass(frozen=True)
class HarnessSection:
    seed: int = 0
    workers: int = 1
    sweep_axis: Optional[str] = None
    sweep_values: Optional[tuple] = None
    preset: Optional[str] = None


SECTIONS = {
    "channel": ChannelSection,
    "bandplan": BandplanSection,
    "modem": ModemSection,
    "txdsp": TxSection,
    "rxdsp": RxSection,
    "harness": HarnessSection,
}

SWEEP_AXES = ("rop_dbm", "osnr_db", "cspr_bias_v", "drop_db")


@dataclass(frozen=True)
class LinkConfig:
    channel: ChannelSection = field(default_factory=ChannelSection)
    bandplan: BandplanSection = field(default_factory=BandplanSection)
    modem: ModemSection = field(default_factory=ModemSection)
    txdsp: TxSection = field(default_factory=TxSection)
    rxdsp: RxSection = field(default_factory=RxSection)
    harness: HarnessSection = field(default_factory=HarnessSection)

    def __post_init__(self):
        _validate(self)

    def to_dict(self) -> dict:
        return {name: _plain(dataclasses.asdict(getattr(self, name))) for name in SECTIONS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form, ignoring the worker count."""
        d = self.to_dict()
        d["harness"] = {k: v for k, v in d["harness"].items() if k != "workers"}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def replace(self, **sections) -> "LinkConfig":
        """New config with per-section overrides, e.g. ``replace(channel={"osnr_db": 40})``."""
        out = {}
        for name, upd in sections.items():
            if name not in SECTIONS:
                raise ConfigError(f"unknown section [{name}]")
            out[name] = dataclasses.replace(getattr(self, name), **{k: _coerce(SECTIONS[name], k, v, None)
                                                                     for k, v in upd.items()})
        return dataclasses.replace(self, **out)

    @property
    def n_bands(self) -> int:
        return len(self.modem.orders)

    @property
    def seeds(self) -> dict:
        """Per-stage seeds derived from the master seed."""
        s = int(self.harness.seed)
        return {"master": s, "payload": s, "noise": s + 1, "probe": s + 2,
                "training": int(self.txdsp.training_seed)}

    @classmethod
    def from_dict(cls, d: dict, text: Optional[str] = None, path: Optional[str] = None) -> "LinkConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a table of sections", path=path)
        kw = {}
        for name, sec in d.items():
            if name not in SECTIONS:
                raise ConfigError(f"unknown section [{name}]", _find_line(text, name, None), path)
            if not isinstance(sec, dict):
                raise ConfigError(f"[{name}] must be a table", _find_line(text, name, None), path)
            known = {f.name for f in fields(SECTIONS[name])}
            vals = {}
            for k, v in sec.items():
                if k not in known:
                    raise ConfigError(f"unknown key {k!r} in [{name}]", _find_line(text, name, k), path)
                try:
                    vals[k] = _coerce(SECTIONS[name], k, v, None)
                except ConfigError as e:
                    raise ConfigError(f"[{name}] {k}: {e}", _find_line(text, name, k), path) from None
            kw[name] = SECTIONS[name](**vals)
        try:
            return cls(**kw)
        except ConfigError as e:
            raise ConfigError(str(e), e.line or _find_line(text, getattr(e, "section", None),
                                                           getattr(e, "key", None)), path) from None


def _plain(o):
    if isinstance(o, dict):
        return {k: _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    return o


def _type_of(cls, key):
    return {f.name: f for f in fields(cls)}[key]


def _coerce(cls, key, v, _line):
    """Coerce a parsed value to the field's declared kind."""
    f = _type_of(cls, key)
    default = f.default if f.default is not dataclasses.MISSING else None
    ann = str(f.type)
    if v is None:
        if "Optional" in ann:
            return None
        raise ConfigError("value may not be empty")
    if ann == "object":
        if isinstance(v, (list, tuple)):
            return tuple(_as_int(x) for x in v)
        return _as_int(v)
    if "tuple" in ann:
        if not isinstance(v, (list, tuple)):
            raise ConfigError(f"expected a list, got {type(v).__name__}")
        return tuple(_as_number(x) if not isinstance(x, str) else x for x in v)
    if "bool" in ann:
        if not isinstance(v, bool):
            raise ConfigError(f"expected true/false, got {v!r}")
        return v
    if "int" in ann:
        return _as_int(v)
    if "float" in ann:
        return _as_float(v)
    if "str" in ann:
        if not isinstance(v, str):
            raise ConfigError(f"expected a string, got {v!r}")
        return v
    return v if default is None else type(default)(v)


def _as_number(x):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"expected a number, got {x!r}")
    return x


def _as_float(x):
    x = float(_as_number(x))
    if not math.isfinite(x):
        raise ConfigError("value must be finite")
    return x


def _as_int(x):
    x = _as_number(x)
    if float(x) != int(x):
        raise ConfigError(f"expected an integer, got {x!r}")
    return int(x)


def _find_line(text, section, key):
    """1-based line of ``key`` inside ``[section]`` (or of the section header)."""
    if not text:
        return None
    cur = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"^\[\s*([A-Za-z0-9_]+)\s*\]", line)
        if m:
            cur = m.group(1)
            if key is None and cur == section:
                return n
            continue
        if key is not None and (section is None or cur == section):
            if re.match(rf'^"?{re.escape(key)}"?\s*[=:]', line):
                return n
    return None


class _FieldError(ConfigError):
    def __init__(self, section, key, message):
        super().__init__(f"[{section}] {key}: {message}")
        self.section = section
        self.key = key


def _validate(cfg: LinkConfig):
    ch, bp, md, tx, rx, hs = cfg.channel, cfg.bandplan, cfg.modem, cfg.txdsp, cfg.rxdsp, cfg.harness
    n = len(md.orders)

    def need(cond, section, key, msg):
        if not cond:
            raise _FieldError(section, key, msg)

    need(n >= 1, "modem", "orders", "at least one band is required")
    need(ch.length_km >= 0, "channel", "length_km", "must be >= 0")
    need(ch.v_pi > 0, "channel", "v_pi", "must be positive")
    for k in ("fs_dac_hz", "fs_sim_hz", "fs_adc_hz", "dac_bandwidth_hz", "pd_bandwidth_hz", "adc_bandwidth_hz",
              "thermal_density"):
        need(getattr(ch, k) > 0, "channel", k, "must be positive")
    for k in ("dac_bits", "adc_bits"):
        v = getattr(ch, k)
        need(v is None or 4 <= v <= 16, "channel", k, "must lie in [4, 16]")
    need(ch.fs_sim_hz >= ch.fs_dac_hz, "channel", "fs_sim_hz", "must be at least fs_dac_hz")
    need(bp.source in ("auto", "explicit"), "bandplan", "source", "must be 'auto' or 'explicit'")
    if bp.source == "explicit":
        need(len(bp.centers_hz) == n, "bandplan", "centers_hz", f"needs {n} entries (one per modem order)")
        need(len(bp.bauds_hz) == n, "bandplan", "bauds_hz", f"needs {n} entries")
        need(len(bp.rolloffs) == n, "bandplan", "rolloffs", f"needs {n} entries")
        top = max(c + b * (1 + r) / 2 for c, b, r in zip(bp.centers_hz, bp.bauds_hz, bp.rolloffs))
        need(ch.fs_dac_hz >= 2 * top, "channel", "fs_dac_hz", f"below twice the top occupied frequency {top:g}")
        need(ch.fs_adc_hz >= 2 * top, "channel", "fs_adc_hz", f"below twice the top occupied frequency {top:g}")
    need(bp.f_max_hz > 0, "bandplan", "f_max_hz", "must be positive")
    need(md.kind in ("uniform", "pcs"), "modem", "kind", "must be 'uniform' or 'pcs'")
    if md.entropies is not None:
        need(len(md.entropies) == n, "modem", "entropies", f"needs {n} entries")
    need(md.ccdm_block_len >= 2 and md.ccdm_block_len % 2 == 0, "modem", "ccdm_block_len", "must be even")
    need(len(tx.training_lens) == n, "txdsp", "training_lens", f"needs {n} entries")
    if isinstance(tx.payload_len, tuple):
        need(len(tx.payload_len) == n, "txdsp", "payload_len", f"needs {n} entries")
    need(tx.total_payload_bits is None or tx.total_payload_bits > 0, "txdsp", "total_payload_bits",
         "must be positive")
    need(bp.probe_length_km is None or bp.probe_length_km >= 0, "bandplan", "probe_length_km", "must be >= 0")
    need(tx.frame_duration_s is None or tx.frame_duration_s > 0, "txdsp", "frame_duration_s", "must be positive")
    need(tx.power_policy in ("equal-symbol-power", "equal-psd"), "txdsp", "power_policy",
         "must be 'equal-symbol-power' or 'equal-psd'")
    if tx.band_gains_db is not None:
        need(len(tx.band_gains_db) == n, "txdsp", "band_gains_db", f"needs {n} entries")
    need(len(rx.ffe_taps) == n, "rxdsp", "ffe_taps", f"needs {n} entries")
    need(all(int(t) % 2 == 1 for t in rx.ffe_taps), "rxdsp", "ffe_taps", "tap counts must be odd")
    need(len(rx.alphas) == n, "rxdsp", "alphas", f"needs {n} entries")
    need(all(-1 < a < 1 for a in rx.alphas), "rxdsp", "alphas", "each alpha must satisfy |alpha| < 1")
    need(0 < rx.mu_train < 1 and 0 < rx.mu_dd < 1, "rxdsp", "mu_train", "step sizes must lie in (0, 1)")
    need(hs.workers >= 1, "harness", "workers", "must be >= 1")
    need(hs.seed >= 0, "harness", "seed", "must be >= 0")
    if hs.sweep_axis is not None:
        need(hs.sweep_axis in SWEEP_AXES, "harness", "sweep_axis", f"must be one of {SWEEP_AXES}")


def parse_config(text: str, fmt: str = "toml", path: Optional[str] = None) -> LinkConfig:
    """Parse configuration text (``fmt`` is ``"toml"`` or ``"json"``)."""
    return LinkConfig.from_dict(parse_config_dict(text, fmt, path), text, path)


def parse_config_dict(text: str, fmt: str = "toml", path: Optional[str] = None) -> dict:
    """Syntax-check configuration text and return the raw section tables."""
    if fmt == "json":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed JSON: {e.msg}", e.lineno, path) from None
    else:
        try:
            d = tomli.loads(text)
        except tomli.TOMLDecodeError as e:
            m = re.search(r"line (\d+)", str(e))
            raise ConfigError(f"malformed config: {e}", int(m.group(1)) if m else None, path) from None
    return d


def read_config_text(path):
    """``(text, fmt)`` of a config file; JSON when the suffix or content says so."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", path=str(p)) from None
    fmt = "json" if p.suffix.lower() == ".json" or text.lstrip().startswith("{") else "toml"
    return text, fmt


def load_config(path) -> LinkConfig:
    text, fmt = read_config_text(path)
    return parse_config(text, fmt, str(path))
