import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from test_pipeline import fast_cfg

from scmlink import ParameterError
from scmlink.harness import required_snr, run_link, sweep
from scmlink.harness.sweep import CSV_COLUMNS, apply_axis


def _strip(rep):
    d = rep.to_dict()
    d["meta"].pop("elapsed_s", None)
    return d


def test_apply_axis_fields():
    cfg = fast_cfg()
    assert apply_axis(cfg, "osnr_db", 33).channel.osnr_db == 33.0
    assert apply_axis(cfg, "rop_dbm", -8).channel.rop_dbm == -8.0
    assert apply_axis(cfg, "cspr_bias_v", 2.2).channel.bias_v == 2.2
    assert apply_axis(cfg, "drop_db", 8).bandplan.drop_db == 8.0
    with pytest.raises(ParameterError):
        apply_axis(cfg, "humidity", 1)


def test_sweep_value_checks():
    with pytest.raises(ParameterError):
        sweep(fast_cfg(), "osnr_db", [])
    with pytest.raises(ParameterError):
        sweep(fast_cfg(), "osnr_db", [30, 40, 35])


@pytest.fixture(scope="module")
def osnr_sweep():
    return sweep(fast_cfg(txdsp={"payload_len": 512}), "osnr_db", [30.0, 45.0], workers=1)


def test_sweep_points_match_single_runs(osnr_sweep):
    single = run_link(apply_axis(fast_cfg(txdsp={"payload_len": 512}), "osnr_db", 45.0))
    assert _strip(osnr_sweep.reports[1]) == _strip(single)
    ber = osnr_sweep.series("ber")
    assert ber[0] > ber[1]


def test_sweep_parallel_matches_serial(osnr_sweep):
    par = sweep(fast_cfg(txdsp={"payload_len": 512}), "osnr_db", [30.0, 45.0], workers=2)
    assert [_strip(r) for r in par.reports] == [_strip(r) for r in osnr_sweep.reports]


def test_sweep_csv_and_json(osnr_sweep):
    rows = list(csv.reader(io.StringIO(osnr_sweep.to_csv())))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 1 + 2 * 7
    assert rows[1][:4] == ["1", "osnr_db", "30.0", "1"]
    d = json.loads(osnr_sweep.to_json())
    assert d["axis"] == "osnr_db" and len(d["reports"]) == 2


def test_sweep_records_failed_points():
    # a bias at the null of the modulator leaves no carrier to detect
    res = sweep(fast_cfg(txdsp={"payload_len": 256}), "cspr_bias_v", [2.0, 4.0])
    assert res.reports[0] is not None and res.reports[1] is None
    assert 4.0 in res.errors
    assert math.isnan(res.series("ber")[1])
    last = list(csv.reader(io.StringIO(res.to_csv())))[-1]
    assert last[3] == "0" and last[-1]


def test_required_snr_interpolation():
    x = [30, 35, 40]
    y = [1e-1, 1e-2, 1e-4]
    t = 10 ** -3
    assert required_snr(x, y, t) == pytest.approx(37.5)
    assert required_snr(x, [1e-4] * 3, t) == 30
    assert required_snr(x, [1e-1] * 3, t) == math.inf
    with pytest.raises(ParameterError):
        required_snr([1, 2], [0.1])


@given(st.floats(-3.0, -1.0), st.floats(0.05, 0.5))
def test_required_snr_on_exponential_curve(log_target, slope):
    x = np.linspace(20, 50, 31)
    y = 10 ** (-slope * (x - 20))
    target = 10**log_target
    expect = 20 + (-log_target) / slope
    got = required_snr(x, y, target)
    if expect <= 50:
        assert got == pytest.approx(expect, abs=1e-9)
    else:
        assert got == math.inf
