"""Command-line interface.

::

    scmlink run --preset paper-50km-pcs --seed 7 --out out/
    scmlink plan --config configs/fiber50.toml
    scmlink tx --preset obtb-uniform && scmlink channel && scmlink rx
    scmlink sweep --preset desk-scale-fast --axis osnr_db --values 30,35,40,45
    scmlink papr --preset paper-50km-uniform

Global flags (accepted before or after the subcommand): ``--config``,
``--seed``, ``--out`` (default ``out``) and ``--preset``. A preset is the
base configuration, a config file overrides it and ``--seed`` overrides
both.

Files written to the output directory, all JSON carrying ``schema_version``:

=============  ===================  ============================================
subcommand     reads                writes
=============  ===================  ============================================
``plan``                            ``plan.json``
``tx``                              ``tx.wvfm``, ``truth.json``
``channel``    ``tx.wvfm``,         ``rx.wvfm``, ``channel.json``
               ``truth.json``
``rx``         ``rx.wvfm``,         ``report.json``
               ``truth.json``,
               ``channel.json``
``run``                             ``report.json``
``sweep``                           ``sweep.csv``, ``sweep.json``
``papr``                            ``papr.json``
=============  ===================  ============================================

``channel`` and ``rx`` reuse the configuration embedded in ``truth.json``;
if flags are given as well they must resolve to the same configuration.

Exit status: 0 on success, 1 for configuration or usage errors, 2 when a
processing stage fails.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .._validation import ScmError
from ..bandplan import BandPlan
from ..metrics import SCHEMA_VERSION
from ..sigkit import read_waveform, write_waveform
from .config import SWEEP_AXES, ConfigError, LinkConfig, parse_config_dict, read_config_text
from .pipeline import (
    ChannelOutput,
    LinkState,
    StageError,
    papr_comparison,
    prepare,
    report_meta,
    run_channel,
    run_link,
    run_rx,
    run_tx,
    truths_from_json,
)
from .presets import PRESETS, preset_names
from .sweep import sweep

__all__ = ["main", "build_parser", "resolve_config"]

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _common(defaults: bool) -> argparse.ArgumentParser:
    d = {} if defaults else {"default": argparse.SUPPRESS}
    p = _Parser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="TOML or JSON configuration file", **d)
    p.add_argument("--seed", type=int, metavar="U64", help="master seed", **d)
    p.add_argument("--out", metavar="DIR", help="output directory (default: out)", **d)
    p.add_argument("--preset", choices=preset_names(), metavar="NAME",
                   help=f"base configuration: {', '.join(preset_names())}", **d)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scmlink", description="Subcarrier-multiplexed direct-detection link simulator.",
                     parents=[_common(True)])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    common = _common(False)
    sub.add_parser("plan", parents=[common], help="probe the channel and write the band plan")
    sub.add_parser("tx", parents=[common], help="build the transmit waveform and truth record")
    p = sub.add_parser("channel", parents=[common], help="pass tx.wvfm through the optical channel")
    p.add_argument("--input", metavar="PATH", help="transmit waveform (default: OUT/tx.wvfm)")
    p = sub.add_parser("rx", parents=[common], help="recover rx.wvfm and write the link report")
    p.add_argument("--input", metavar="PATH", help="received waveform (default: OUT/rx.wvfm)")
    sub.add_parser("run", parents=[common], help="full link in one go")
    p = sub.add_parser("sweep", parents=[common], help="sweep one parameter and write CSV")
    p.add_argument("--axis", choices=SWEEP_AXES, help="parameter to sweep (default: harness.sweep_axis)")
    p.add_argument("--values", help="comma-separated grid (default: harness.sweep_values)")
    p.add_argument("--workers", type=int, help="parallel points (default: harness.workers)")
    sub.add_parser("papr", parents=[common], help="compare drive PAPR with a multicarrier signal")
    return parser


def resolve_config(config=None, preset=None, seed=None) -> LinkConfig:
    """Preset, then config file, then seed, merged into one validated config."""
    raw, text, path = {}, None, None
    if config is not None:
        text, fmt = read_config_text(config)
        path = str(config)
        raw = parse_config_dict(text, fmt, path)
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a table of sections", path=path)
    name = preset or (raw.get("harness", {}) or {}).get("preset")
    merged = {}
    if name is not None:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(preset_names())}", path=path)
        merged = json.loads(json.dumps(PRESETS[name]))
        merged.setdefault("harness", {})["preset"] = name
    for sec, vals in raw.items():
        if isinstance(vals, dict) and isinstance(merged.get(sec), dict):
            merged[sec].update(vals)
        else:
            merged[sec] = vals
    if seed is not None:
        if seed < 0 or seed >= 1 << 64:
            raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {seed}")
        merged.setdefault("harness", {})["seed"] = int(seed)
    return LinkConfig.from_dict(merged, text, path)


def _write_text(path: Path, text: str) -> None:
    # the output directory appears only once there is something to put in it
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _write_wvfm(path: Path, x) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    write_waveform(path, x)


def _write_json(path: Path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON: {e.msg}", e.lineno, str(path)) from None


def _staged_config(ns, truth: dict) -> LinkConfig:
    embedded = LinkConfig.from_dict(truth["config"])
    if ns.config is None and ns.preset is None and ns.seed is None:
        return embedded
    cfg = resolve_config(ns.config, ns.preset, ns.seed)
    if cfg.config_hash() != embedded.config_hash():
        raise ConfigError("configuration differs from the one recorded in truth.json; rerun `tx` first")
    return cfg


def _plan_doc(cfg, state):
    return {"schema_version": SCHEMA_VERSION, "config_hash": cfg.config_hash(), "seeds": cfg.seeds,
            **state.plan.to_dict(), "entropy_loading": state.loading}


def _cmd_plan(ns, out):
    cfg = resolve_config(ns.config, ns.preset, ns.seed)
    state = prepare(cfg)
    _write_json(out / "plan.json", _plan_doc(cfg, state))
    for b in state.plan:
        print(f"band {b.index}: fc {b.f_center / 1e9:.3f} GHz  baud {b.baud / 1e9:.3f} GBd  "
              f"rolloff {b.rolloff:g}  {b.modulation.kind}-{b.modulation.order}")


def _cmd_tx(ns, out):
    cfg = resolve_config(ns.config, ns.preset, ns.seed)
    state = prepare(cfg)
    txr = run_tx(cfg, state.plan)
    _write_wvfm(out / "tx.wvfm", txr.waveform)
    doc = {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict(), "config_hash": cfg.config_hash(),
           "seeds": cfg.seeds, "plan": state.plan.to_dict(), "entropy_loading": state.loading,
           "bands": [t.to_dict() for t in txr.truths]}
    _write_json(out / "truth.json", doc)
    print(f"tx: {len(txr.waveform)} samples at {txr.waveform.sample_rate_hz / 1e9:g} GSa/s")


def _cmd_channel(ns, out):
    truth = _read_json(out / "truth.json")
    cfg = _staged_config(ns, truth)
    src = Path(ns.input) if ns.input else out / "tx.wvfm"
    ch = run_channel(cfg, _read_wave(src))
    _write_wvfm(out / "rx.wvfm", ch.rx)
    _write_json(out / "channel.json", {"schema_version": SCHEMA_VERSION, "config_hash": cfg.config_hash(),
                                       "cspr_db": ch.cspr_db, "papr_db": ch.papr_db,
                                       "received_power_dbm": ch.received_power_dbm})
    print(f"channel: CSPR {ch.cspr_db:.2f} dB  PAPR {ch.papr_db:.2f} dB")


def _read_wave(path: Path):
    if not path.exists():
        raise ConfigError(f"missing input waveform {path}")
    try:
        return read_waveform(path)
    except ScmError as e:
        raise StageError("io", e) from e


def _cmd_rx(ns, out):
    truth = _read_json(out / "truth.json")
    cfg = _staged_config(ns, truth)
    chan = _read_json(out / "channel.json")
    src = Path(ns.input) if ns.input else out / "rx.wvfm"
    rx = _read_wave(src)
    plan = BandPlan.from_dict(truth["plan"])
    truths = truths_from_json(truth, cfg.modem.ccdm_block_len)
    state = LinkState(cfg, plan, channel=ChannelOutput(rx, chan["cspr_db"], chan["papr_db"],
                                                       chan["received_power_dbm"]),
                      loading=truth.get("entropy_loading"))
    rep = run_rx(cfg, plan, truths, rx, chan["papr_db"], chan["cspr_db"], report_meta(cfg, state, 0.0))
    _finish_report(rep, out)


def _finish_report(rep, out):
    _write_text(out / "report.json", rep.to_json(indent=1, sort_keys=True) + "\n")
    for b in rep.bands:
        print(f"band {b.i}: BER {b.ber:.3e}  NGMI {b.ngmi:.4f}  MSE {b.mse_db:.1f} dB")
    a = rep.aggregate
    print(f"aggregate: BER {a['ber']:.3e}  avg NGMI {a['avg_ngmi']:.4f}  net {a['net_bps'] / 1e9:.2f} Gb/s  "
          f"{'PASS' if rep.passed else 'FAIL'}")


def _cmd_run(ns, out):
    cfg = resolve_config(ns.config, ns.preset, ns.seed)
    _finish_report(run_link(cfg), out)


def _cmd_sweep(ns, out):
    cfg = resolve_config(ns.config, ns.preset, ns.seed)
    axis = ns.axis or cfg.harness.sweep_axis
    if axis is None:
        raise ConfigError("no sweep axis: pass --axis or set harness.sweep_axis")
    if ns.values is not None:
        try:
            values = [float(v) for v in ns.values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"--values must be comma-separated numbers, got {ns.values!r}") from None
    else:
        values = cfg.harness.sweep_values
    if not values:
        raise ConfigError("no sweep values: pass --values or set harness.sweep_values")
    if ns.workers is not None and ns.workers < 1:
        raise ConfigError("--workers must be >= 1")
    res = sweep(cfg, axis, values, ns.workers)
    _write_text(out / "sweep.csv", res.to_csv())
    _write_text(out / "sweep.json", res.to_json() + "\n")
    for v, r in zip(res.values, res.reports):
        print(f"{axis}={v:g}: " + (f"BER {r.aggregate['ber']:.3e}  avg NGMI {r.aggregate['avg_ngmi']:.4f}"
                                    if r is not None else f"failed ({res.errors[v]})"))


def _cmd_papr(ns, out):
    cfg = resolve_config(ns.config, ns.preset, ns.seed)
    res = papr_comparison(cfg)
    _write_json(out / "papr.json", res)
    print(f"PAPR @{res['percentile']}%: SCM {res['scm_papr_db']:.2f} dB  "
          f"{res['n_subcarriers']}-tone multicarrier {res['multicarrier_papr_db']:.2f} dB")


_COMMANDS = {"plan": _cmd_plan, "tx": _cmd_tx, "channel": _cmd_channel, "rx": _cmd_rx, "run": _cmd_run,
             "sweep": _cmd_sweep, "papr": _cmd_papr}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except _UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as e:  # --help
        return EXIT_OK if not e.code else EXIT_CONFIG
    ns.out = getattr(ns, "out", None) or "out"
    for k in ("config", "seed", "preset"):
        setattr(ns, k, getattr(ns, k, None))
    for k in ("input", "axis", "values", "workers"):
        setattr(ns, k, getattr(ns, k, None))
    out = Path(ns.out)
    try:
        _COMMANDS[ns.command](ns, out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (StageError, ScmError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
