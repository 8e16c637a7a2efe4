"""Validation-side tools: run the estimator over a trace, score the
estimates against simulator truth, and report identified parameters.

All exports are plain delimited text with `# key=value` comment lines
for provenance; numeric fields carry 12 significant digits so files
round-trip through float64 to ~1e-9 relative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ecm, network
from .errors import DataError

VALIDATION_COLUMNS = ("time_s", "z_true", "z_hat", "vc_true", "vc_hat", "v_true", "v_hat")
IDENT_HEADER = "parameter,true_value,identified_value,rel_error_pct"
STATE_ERRORS_HEADER = "metric,value"
_CHUNK = 8192  # windows per forward pass, to bound transient memory


@dataclass
class StateEstimate:
    """Estimator outputs over one trace, defined from sample `offset` on
    (the first samples only ever appear inside an input window)."""

    offset: int
    z: np.ndarray
    vc: np.ndarray
    v: np.ndarray

    def __len__(self):
        return self.z.size


def estimate_states(
    net: network.NetworkParams,
    lam: ecm.LambdaVec,
    coeffs,
    trace,
    norm: network.NormSpec,
    window: int,
) -> StateEstimate:
    """Estimate (z, vc) at every sample j >= window of a trace, plus the
    terminal voltage those estimates imply."""
    n = len(trace)
    if n < window + 1:
        raise DataError(f"trace has {n} samples; need at least window+1 = {window + 1}")
    ni, nv = network.normalize_inputs(trace.currents, trace.voltages, norm)
    win_i = network.sliding_windows(ni, window + 1)
    win_v = network.sliding_windows(nv, window + 1)
    zs, vcs = [], []
    for s in range(0, win_i.shape[0], _CHUNK):
        z, vc = network.forward(
            net, win_i[s : s + _CHUNK], win_v[s : s + _CHUNK], window_len=window + 1
        )
        zs.append(np.atleast_1d(z))
        vcs.append(np.atleast_1d(vc))
    z = np.concatenate(zs)
    vc = np.concatenate(vcs)
    cur = np.asarray(trace.currents, dtype=np.float64)[window:]
    v = ecm.g_output(ecm.EcmState(z=z, vc=vc), cur, lam, coeffs)
    return StateEstimate(offset=window, z=z, vc=vc, v=v)


def _mae(err: np.ndarray) -> float:
    return float(np.mean(np.abs(err)))


def _rmse(err: np.ndarray) -> float:
    return float(np.sqrt(np.mean(err * err)))


def state_errors(trace, est: StateEstimate) -> dict:
    """Error metrics of an estimate against a trace with simulator truth.

    SoC errors are in percentage points, capacitor/terminal voltage
    errors in millivolts; z_out_of_range counts estimates outside [0, 1].
    """
    if not trace.has_truth:
        raise DataError("trace carries no hidden-state truth to score against")
    j = est.offset
    z_true = np.asarray(trace.soc, dtype=np.float64)[j:]
    vc_true = np.asarray(trace.vc, dtype=np.float64)[j:]
    v_true = np.asarray(trace.voltages, dtype=np.float64)[j:]
    if z_true.size != len(est):
        raise DataError(
            f"estimate covers {len(est)} samples but trace provides {z_true.size}"
        )
    ez = est.z - z_true
    evc = est.vc - vc_true
    ev = est.v - v_true
    return {
        "n_samples": len(est),
        "soc_mae_pp": _mae(ez) * 100.0,
        "soc_rmse_pp": _rmse(ez) * 100.0,
        "vc_mae_mv": _mae(evc) * 1000.0,
        "vc_rmse_mv": _rmse(evc) * 1000.0,
        "v_mae_mv": _mae(ev) * 1000.0,
        "v_rmse_mv": _rmse(ev) * 1000.0,
        "z_out_of_range": int(np.sum((est.z < 0.0) | (est.z > 1.0))),
    }


def ident_report(true: ecm.EcmParams, r0: float, r1: float, c: float):
    """Rows (name, true, identified, relative error in % of truth).

    Identified values are raw floats, not a validated parameter set, so
    a diverged run still gets an honest report instead of an exception.
    """
    rows = []
    for name, t, i in (("r0", true.r0, r0), ("r1", true.r1, r1), ("c", true.c, c)):
        rows.append((name, t, i, abs(i - t) / abs(t) * 100.0))
    return rows


# -- delimited exports -------------------------------------------------------

def _write_comments(fh, comments):
    for key, val in (comments or {}).items():
        fh.write(f"# {key}={val}\n")


def export_ident_csv(path, rows, comments: dict | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        _write_comments(fh, comments)
        fh.write(IDENT_HEADER + "\n")
        for name, t, i, pct in rows:
            fh.write(f"{name},{t:.12g},{i:.12g},{pct:.12g}\n")


def export_state_errors_csv(path, metrics: dict, comments: dict | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        _write_comments(fh, comments)
        fh.write(STATE_ERRORS_HEADER + "\n")
        for key, val in metrics.items():
            text = str(val) if isinstance(val, int) else f"{val:.12g}"
            fh.write(f"{key},{text}\n")


def export_validation_trace_csv(path, trace, est: StateEstimate,
                                comments: dict | None = None):
    """Per-sample truth vs estimate for every scored sample."""
    if not trace.has_truth:
        raise DataError("trace carries no hidden-state truth to export")
    j = est.offset
    times = trace.times[j:]
    cols = (
        times,
        np.asarray(trace.soc)[j:],
        est.z,
        np.asarray(trace.vc)[j:],
        est.vc,
        np.asarray(trace.voltages)[j:],
        est.v,
    )
    with open(path, "w", encoding="utf-8") as fh:
        _write_comments(fh, comments)
        fh.write(",".join(VALIDATION_COLUMNS) + "\n")
        for row in zip(*cols):
            fh.write(",".join(f"{x:.12g}" for x in row) + "\n")


def load_validation_trace_csv(path) -> dict:
    """Read a validation trace back as {column: float64 array}."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0] != ",".join(VALIDATION_COLUMNS):
        head = lines[0] if lines else "<empty>"
        raise DataError(f"{path}: expected header {','.join(VALIDATION_COLUMNS)}, got {head}")
    rows = [ln.split(",") for ln in lines[1:]]
    if any(len(r) != len(VALIDATION_COLUMNS) for r in rows):
        raise DataError(f"{path}: ragged rows in validation trace")
    data = np.asarray(rows, dtype=np.float64)
    return {name: data[:, k] for k, name in enumerate(VALIDATION_COLUMNS)}
