"""Parameter sweeps over one axis of the link configuration.

CSV columns (one row per band per point, tidy for external plotting):

``schema_version, axis, axis_value, band, ber, ngmi, avg_ngmi, flags, error``

``flags`` lists the thresholds a band meets, separated by ``;``
(``ber_hd_fec;ber_sd_fec;ngmi_hd_fec;ngmi_sd_fec``). A failed point
contributes one row with ``band = 0`` and the error text.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .._validation import ParameterError
from ..metrics import SCHEMA_VERSION
from .config import SWEEP_AXES, LinkConfig
from .pipeline import LinkState, prepare, run_link

__all__ = ["SweepResult", "sweep", "apply_axis", "CSV_COLUMNS", "required_snr"]

CSV_COLUMNS = ("schema_version", "axis", "axis_value", "band", "ber", "ngmi", "avg_ngmi", "flags", "error")

_AXIS_FIELD = {
    "rop_dbm": ("channel", "rop_dbm"),
    "osnr_db": ("channel", "osnr_db"),
    "cspr_bias_v": ("channel", "bias_v"),
    "drop_db": ("bandplan", "drop_db"),
}


def apply_axis(cfg: LinkConfig, axis: str, value: float) -> LinkConfig:
    if axis not in _AXIS_FIELD:
        raise ParameterError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    sec, key = _AXIS_FIELD[axis]
    return cfg.replace(**{sec: {key: float(value)}})


@dataclass
class SweepResult:
    """One report (or error) per grid point, in grid order."""

    axis: str
    values: list
    reports: list
    errors: dict = field(default_factory=dict)

    def series(self, key: str = "ber") -> np.ndarray:
        """Aggregate ``key`` per point, NaN where the point failed."""
        return np.array([np.nan if r is None else float(r.aggregate[key]) for r in self.reports])

    def rows(self):
        for v, r in zip(self.values, self.reports):
            if r is None:
                yield (SCHEMA_VERSION, self.axis, v, 0, "", "", "", "", self.errors.get(v, ""))
                continue
            for b in r.bands:
                flags = ";".join(k for k, ok in b.flags.items() if ok)
                yield (SCHEMA_VERSION, self.axis, v, b.i, b.ber, b.ngmi, r.aggregate["avg_ngmi"], flags, "")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(self.rows())
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "schema_version": SCHEMA_VERSION,
            "axis": self.axis,
            "values": self.values,
            "reports": [None if r is None else json.loads(r.to_json()) for r in self.reports],
            "errors": {str(k): v for k, v in self.errors.items()},
        })


def _point(args):
    cfg, state = args
    try:
        return run_link(cfg, state), None
    except Exception as e:  # recorded per point; the sweep carries on
        return None, f"{type(e).__name__}: {e}"


def sweep(cfg: LinkConfig, axis: str, values: Sequence[float], workers: Optional[int] = None,
          state: Optional[LinkState] = None) -> SweepResult:
    """Run the link at every value of ``axis``.

    Points share the base configuration's seeds, so each point is exactly
    the run :func:`run_link` would give for that configuration. The band
    plan (and PCS entropies) are resolved once at the base point, except
    for ``drop_db`` which changes the plan itself. Points run in a process
    pool when ``workers > 1``; results come back in grid order.
    """
    values = [float(v) for v in values]
    if not values:
        raise ParameterError("need at least one sweep value")
    d = np.diff(values)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ParameterError("sweep values must be strictly monotone")
    cfgs = [apply_axis(cfg, axis, v) for v in values]
    if axis == "drop_db":
        states = [None] * len(values)
    else:
        base = state if state is not None else prepare(cfg)
        states = [LinkState(c, base.plan, loading=base.loading) for c in cfgs]
    workers = int(cfg.harness.workers if workers is None else workers)
    jobs = list(zip(cfgs, states))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            out = list(ex.map(_point, jobs))
    else:
        out = [_point(j) for j in jobs]
    reports = [r for r, _ in out]
    errors = {v: e for v, (_, e) in zip(values, out) if e is not None}
    return SweepResult(axis, values, reports, errors)


def required_snr(values, ber, target: float = 3.8e-3) -> float:
    """First axis value where ``ber`` falls to ``target``, interpolating log10(BER) linearly.

    ``values`` must increase. Returns ``inf`` if the curve never reaches the
    target and the first value if it starts below it.
    """
    x = np.asarray(values, dtype=float)
    y = np.asarray(ber, dtype=float)
    if x.size != y.size or x.size == 0:
        raise ParameterError("values and ber must be equally long and non-empty")
    ly = np.log10(np.maximum(y, 1e-12))
    lt = math.log10(target)
    if ly[0] <= lt:
        return float(x[0])
    for i in range(1, x.size):
        if ly[i] <= lt:
            f = (ly[i - 1] - lt) / (ly[i - 1] - ly[i])
            return float(x[i - 1] + f * (x[i] - x[i - 1]))
    return float("inf")
