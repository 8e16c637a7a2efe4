"""Current drive profiles: synthesis and CSV I/O.

A profile is a uniformly sampled current signal (A, positive =
charging). Synthetic profiles are piecewise constant with random
segment lengths and amplitudes plus a constant discharge bias, giving
dynamic cycles that drain the cell by a configured number of SoC
percentage points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import DataError

PROFILE_HEADER = "time_s,current_A"


@dataclass(frozen=True)
class CurrentProfile:
    dt: float  # sample period, s
    currents: np.ndarray  # amps, one sample per dt
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.dt > 0.0) or not np.isfinite(self.dt):
            raise ValueError(f"dt must be finite and > 0, got {self.dt}")
        cur = np.asarray(self.currents, dtype=np.float64)
        if cur.ndim != 1 or cur.size == 0:
            raise ValueError("currents must be a non-empty 1-D array")
        if not np.all(np.isfinite(cur)):
            raise ValueError("currents contain non-finite samples")
        object.__setattr__(self, "currents", cur)

    def __len__(self):
        return self.currents.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.currents.size, dtype=np.float64) * self.dt


def current_at(profile: CurrentProfile, t: float) -> float:
    """Zero-order-hold lookup: sample floor(t/dt). Errors outside range."""
    n = len(profile)
    k = int(np.floor(t / profile.dt))
    if t < 0.0 or k > n - 1:
        raise ValueError(
            f"t={t} outside profile range [0, {(n - 1) * profile.dt}]"
        )
    return float(profile.currents[k])


def current_mid(profile: CurrentProfile, j: int) -> float:
    """Midpoint current between samples j and j+1."""
    n = len(profile)
    if not 0 <= j <= n - 2:
        raise ValueError(f"j={j} outside [0, {n - 2}]")
    c = profile.currents
    return float((c[j] + c[j + 1]) / 2.0)


def _midpoint_integral(currents: np.ndarray, dt: float) -> float:
    """Integral of current by the midpoint rule, A*s (matches RK4 SoC)."""
    mids = (currents[:-1] + currents[1:]) / 2.0
    return float(np.sum(mids) * dt)


def synth_dynamic_profile(
    duration_s: float,
    dt: float,
    seed: int,
    mean_segment_s: float = 10.0,
    max_c_rate: float = 2.0,
    capacity_ah: float = 2.0,
    soc_drop: float = 0.6,
) -> CurrentProfile:
    """Synthesize a piecewise-constant dynamic discharge cycle.

    Segment lengths are geometric with mean mean_segment_s/dt samples;
    amplitudes are uniform in +-(max_c_rate * capacity_ah). A constant
    bias, solved by bisection after clipping to the amplitude limit,
    makes the midpoint-rule charge integral equal a net SoC drop of
    soc_drop (fraction of capacity) over the cycle. Deterministic in
    the seed.
    """
    if duration_s <= 0 or dt <= 0:
        raise ValueError("duration_s and dt must be > 0")
    if mean_segment_s < dt:
        raise ValueError(f"mean_segment_s must be >= dt, got {mean_segment_s} < {dt}")
    if max_c_rate <= 0 or capacity_ah <= 0:
        raise ValueError("max_c_rate and capacity_ah must be > 0")
    if not 0.0 <= soc_drop < 1.0:
        raise ValueError(f"soc_drop must be in [0, 1), got {soc_drop}")

    n = int(round(duration_s / dt))
    if n < 2:
        raise ValueError("profile needs at least 2 samples")
    imax = max_c_rate * capacity_ah

    # geometric segment lengths, inverse-CDF from the uniform stream
    p = dt / mean_segment_s
    max_segments = n  # worst case: every segment 1 sample
    u_len = rng.uniforms(rng.derive(seed, 1), max_segments)
    if p >= 1.0:
        lengths = np.ones(max_segments, dtype=np.int64)
    else:
        lengths = np.ceil(np.log1p(-u_len) / np.log1p(-p)).astype(np.int64)
        lengths = np.maximum(lengths, 1)
    u_amp = rng.uniforms(rng.derive(seed, 2), max_segments)
    amps = (2.0 * u_amp - 1.0) * imax

    raw = np.empty(n)
    pos = 0
    for length, amp in zip(lengths, amps):
        if pos >= n:
            break
        end = min(pos + int(length), n)
        raw[pos:end] = amp
        pos = end

    # Solve for the constant bias so the post-clip midpoint integral
    # hits the target drop. One-shot biasing misses by several SoC
    # points once clipping bites, hence the bisection.
    target_As = -soc_drop * capacity_ah * 3600.0  # amp-seconds
    lo, hi = -2.0 * imax, imax

    def integral(bias):
        return _midpoint_integral(np.clip(raw + bias, -imax, imax), dt)

    if not integral(lo) <= target_As <= integral(hi):
        raise ValueError(
            f"soc_drop={soc_drop} unreachable with max_c_rate={max_c_rate}"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if integral(mid) < target_As:
            lo = mid
        else:
            hi = mid
    bias = 0.5 * (lo + hi)
    currents = np.clip(raw + bias, -imax, imax)

    achieved_drop = -_midpoint_integral(currents, dt) / (capacity_ah * 3600.0)
    meta = {
        "seed": seed,
        "style": "synthetic_dynamic",
        "mean_segment_s": mean_segment_s,
        "max_c_rate": max_c_rate,
        "capacity_ah": capacity_ah,
        "soc_drop_target": soc_drop,
        "soc_drop_achieved": achieved_drop,
        "bias_A": bias,
    }
    return CurrentProfile(dt=dt, currents=currents, meta=meta)


def load_profile_csv(path) -> CurrentProfile:
    """Read a profile CSV: header time_s,current_A then one row per sample.

    Leading '#' comment lines are skipped. Time must be uniformly
    spaced; dt is inferred from the time column.
    """
    times, currents = [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line
                if header != PROFILE_HEADER:
                    raise DataError(
                        f"{path}: expected header {PROFILE_HEADER!r}, got {header!r}"
                    )
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 columns, got {len(parts)}")
            try:
                times.append(float(parts[0]))
                currents.append(float(parts[1]))
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed row {line!r}") from None
    if header is None or len(times) < 2:
        raise DataError(f"{path}: no data rows (need at least 2)")
    t = np.asarray(times)
    gaps = np.diff(t)
    dt = float(gaps[0])
    if dt <= 0 or not np.allclose(gaps, dt, rtol=1e-9, atol=1e-9):
        raise DataError(f"{path}: time column is not uniformly spaced")
    return CurrentProfile(dt=dt, currents=np.asarray(currents), meta={"source": str(path)})


def export_profile_csv(profile: CurrentProfile, path, comments: dict | None = None):
    """Write a profile CSV (12 significant digits, optional # comments)."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, val in (comments or {}).items():
            fh.write(f"# {key}={val}\n")
        fh.write(PROFILE_HEADER + "\n")
        for t, i in zip(profile.times, profile.currents):
            fh.write(f"{t:.12g},{i:.12g}\n")
