"""Ground-truth simulation of the equivalent-circuit model.

Integrates the cell dynamics over a current profile with classical RK4
(stage currents: start, midpoint, midpoint, end of each sample period)
and records the full state plus terminal voltage. Because dz/dt
depends only on the current, the RK4 SoC update collapses to the exact
midpoint-rule charge count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ecm, rng
from .errors import DataError
from .profiles import CurrentProfile

TRACE_COLUMNS = ("time_s", "current_A", "voltage_V")
TRACE_HIDDEN_COLUMNS = ("soc", "vc_V")


@dataclass
class SimTrace:
    """A simulated (or measured) cell trace.

    soc/vc are the hidden true states; they are None for traces loaded
    from measurement-only files, which is how training is kept blind to
    anything but (current, voltage).
    """

    dt: float
    currents: np.ndarray
    voltages: np.ndarray
    soc: np.ndarray | None = None
    vc: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.dt > 0.0):
            raise ValueError(f"dt must be > 0, got {self.dt}")
        n = len(self.currents)
        if len(self.voltages) != n:
            raise ValueError("currents and voltages must have equal length")
        for name in ("soc", "vc"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise ValueError(f"{name} length {len(arr)} != {n}")

    def __len__(self):
        return len(self.currents)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.currents), dtype=np.float64) * self.dt

    @property
    def has_truth(self) -> bool:
        return self.soc is not None and self.vc is not None


def simulate(
    params: ecm.EcmParams,
    coeffs,
    profile: CurrentProfile,
    z0: float = 0.8,
    vc0: float = 0.0,
) -> SimTrace:
    """Integrate the true model over a profile from (z0, vc0).

    Aborts with the offending sample index if SoC leaves [0, 1].
    """
    if not 0.0 <= z0 <= 1.0:
        raise DataError(f"initial SoC {z0} outside [0, 1]")
    lam = ecm.lambda_from_params(params)
    cur = profile.currents
    n = len(profile)
    dt = profile.dt

    z = np.empty(n)
    vc = np.empty(n)
    z[0], vc[0] = z0, vc0

    def f(x, u):
        return ecm.f_dynamics(ecm.EcmState(z=x[0], vc=x[1]), u, lam, params.q)

    state = (float(z0), float(vc0))
    for j in range(n - 1):
        i0 = float(cur[j])
        i1 = float(cur[j + 1])
        im = (i0 + i1) / 2.0
        state = ecm.rk4_step(f, state, (i0, im, i1), dt)
        if not 0.0 <= state[0] <= 1.0:
            raise DataError(
                f"SoC left [0, 1] at sample {j + 1}: z={state[0]:.6f}"
            )
        z[j + 1], vc[j + 1] = state

    v = ecm.g_output(ecm.EcmState(z=z, vc=vc), cur, lam, coeffs)
    meta = {
        "params": {"r0": params.r0, "r1": params.r1, "c": params.c, "q": params.q},
        "z0": z0,
        "vc0": vc0,
        **profile.meta,
    }
    return SimTrace(dt=dt, currents=cur.copy(), voltages=v, soc=z, vc=vc, meta=meta)


def add_gaussian_noise(trace: SimTrace, sigma_v: float, seed: int) -> SimTrace:
    """Additive white Gaussian noise on the measured voltage only."""
    if sigma_v < 0:
        raise ValueError(f"sigma_v must be >= 0, got {sigma_v}")
    noisy = trace.voltages + sigma_v * rng.normals(seed, len(trace))
    meta = dict(trace.meta, noise_sigma_v=sigma_v, noise_seed=seed)
    return SimTrace(
        dt=trace.dt,
        currents=trace.currents,
        voltages=noisy,
        soc=trace.soc,
        vc=trace.vc,
        meta=meta,
    )


def export_trace_csv(
    trace: SimTrace, path, include_hidden: bool = False, comments: dict | None = None
):
    """Write a trace CSV at 12 significant digits.

    Columns time_s,current_A,voltage_V, plus soc,vc_V when
    include_hidden is set (requires the trace to carry true states).
    Training-facing exports leave the hidden columns out so downstream
    consumers physically cannot see the true states.
    """
    if include_hidden and not trace.has_truth:
        raise DataError("trace has no true states to export")
    cols = TRACE_COLUMNS + (TRACE_HIDDEN_COLUMNS if include_hidden else ())
    with open(path, "w", encoding="utf-8") as fh:
        for key, val in (comments or {}).items():
            fh.write(f"# {key}={val}\n")
        fh.write(",".join(cols) + "\n")
        t = trace.times
        for k in range(len(trace)):
            row = [f"{t[k]:.12g}", f"{trace.currents[k]:.12g}", f"{trace.voltages[k]:.12g}"]
            if include_hidden:
                row.append(f"{trace.soc[k]:.12g}")
                row.append(f"{trace.vc[k]:.12g}")
            fh.write(",".join(row) + "\n")


def load_trace_csv(path) -> SimTrace:
    """Read a trace CSV; hidden-state columns are optional."""
    rows = []
    header = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = tuple(line.split(","))
                if header not in (TRACE_COLUMNS, TRACE_COLUMNS + TRACE_HIDDEN_COLUMNS):
                    raise DataError(f"{path}: unexpected trace header {line!r}")
                continue
            parts = line.split(",")
            if len(parts) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} columns, got {len(parts)}"
                )
            try:
                rows.append([float(x) for x in parts])
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed row {line!r}") from None
    if header is None or len(rows) < 2:
        raise DataError(f"{path}: no data rows (need at least 2)")
    data = np.asarray(rows)
    gaps = np.diff(data[:, 0])
    dt = float(gaps[0])
    if dt <= 0 or not np.allclose(gaps, dt, rtol=1e-9, atol=1e-9):
        raise DataError(f"{path}: time column is not uniformly spaced")
    hidden = len(header) == 5
    return SimTrace(
        dt=dt,
        currents=data[:, 1],
        voltages=data[:, 2],
        soc=data[:, 3] if hidden else None,
        vc=data[:, 4] if hidden else None,
        meta={"source": str(path)},
    )
