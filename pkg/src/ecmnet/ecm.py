"""First-order equivalent-circuit battery cell model.

State x = (z, vc): z the state of charge (dimensionless, 0..1) and vc
the voltage across the RC pair (V). Positive current charges the cell.

    dz/dt  = i / (3600 * q)
    dvc/dt = -vc / (r1 * c) + i / c
    v      = ocv(z) + vc + r0 * i

with q the capacity in Ah, r0/r1 in ohm, c in farad. The dynamics are
linear in lam = (l1, l2, l3) = (-1/(r1*c), 1/c, r0), the form the
identification code optimizes.

All model math here is written against plain arithmetic operators, so
it runs unchanged on floats, numpy arrays, and autodiff tape variables.
That single code path is what makes a perfect state estimate reproduce
the simulator bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff

from .errors import DataError

# Open-circuit voltage polynomial for the simulated 2 Ah cell,
# v = sum_k a_k z^k, a0 first.
OCV_COEFFS_DEFAULT: tuple[float, ...] = (
    3.039475779,
    9.620312047,
    -77.31237098,
    327.4461809,
    -763.3324119,
    988.4086711,
    -662.9843922,
    179.3018624,
)

SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class EcmParams:
    """Physical circuit parameters. All strictly positive."""

    r0: float  # series resistance, ohm
    r1: float  # RC-branch resistance, ohm
    c: float  # RC-branch capacitance, F
    q: float  # cell capacity, Ah

    def __post_init__(self):
        for name in ("r0", "r1", "c", "q"):
            v = getattr(self, name)
            if not (v > 0.0) or not np.isfinite(v):
                raise ValueError(f"EcmParams.{name} must be finite and > 0, got {v}")


@dataclass(frozen=True)
class LambdaVec:
    """Identification parameters (l1, l2, l3) = (-1/(r1*c), 1/c, r0).

    Entries are floats in physical use; during training they may be
    tape variables, so sign checks happen in params_from_lambda rather
    than here.
    """

    l1: object
    l2: object
    l3: object

    def astuple(self):
        return (self.l1, self.l2, self.l3)


@dataclass
class EcmState:
    """Model state. Entries may be floats, arrays, or tape variables.

    z is only guaranteed to lie in [0, 1] for ground-truth simulation;
    estimator outputs are deliberately left unclamped.
    """

    z: object
    vc: object


def lambda_from_params(params: EcmParams) -> LambdaVec:
    """(r0, r1, c) -> (l1, l2, l3). Example: r1=0.03, c=1000 -> l1 = -1/30."""
    return LambdaVec(
        l1=-1.0 / (params.r1 * params.c),
        l2=1.0 / params.c,
        l3=params.r0,
    )


def params_from_lambda(lam: LambdaVec, q: float) -> EcmParams:
    """Invert lambda_from_params. Rejects unphysical lambda."""
    l1, l2, l3 = float(lam.l1), float(lam.l2), float(lam.l3)
    if l1 >= 0.0:
        raise ValueError(f"l1 must be < 0 (got {l1}): RC time constant unphysical")
    if l2 <= 0.0:
        raise ValueError(f"l2 must be > 0 (got {l2}): capacitance unphysical")
    if l3 <= 0.0:
        raise ValueError(f"l3 must be > 0 (got {l3}): series resistance unphysical")
    return EcmParams(r0=l3, r1=-l2 / l1, c=1.0 / l2, q=q)


def ocv(coeffs: Sequence[float], z):
    """Open-circuit voltage: Horner evaluation of the OCV polynomial.

    Accepts floats, arrays, or tape variables for z. No domain clamp;
    values of z outside [0, 1] extrapolate the polynomial (evaluation
    reports count such samples).
    """
    if type(z) is autodiff.Var:
        # fused tape node; its Horner loop matches the one below bit for bit
        return autodiff.polyval(coeffs, z)
    acc = coeffs[-1]
    for k in range(len(coeffs) - 2, -1, -1):
        acc = acc * z + coeffs[k]
    return acc


def ocv_slope(coeffs: Sequence[float], z):
    """d ocv / dz, Horner on the derivative coefficients."""
    n = len(coeffs)
    acc = (n - 1) * coeffs[-1]
    for k in range(n - 2, 0, -1):
        acc = acc * z + k * coeffs[k]
    return acc


def load_ocv_coeffs(path) -> tuple[float, ...]:
    """Load OCV coefficients from plain text, one per line, a0 first."""
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise DataError(f"{path}:{lineno}: not a number: {line!r}") from None
    if len(values) != 8:
        raise DataError(f"{path}: expected exactly 8 OCV coefficients, got {len(values)}")
    return tuple(values)


def f_dynamics(x: EcmState, i, lam: LambdaVec, q: float):
    """State derivative (dz/dt, dvc/dt) at current i (A).

    dz/dt depends on the current alone, so with true lam and vc where
    l1*vc = -l2*i the vc derivative vanishes (RC equilibrium).
    """
    dz = i / (SECONDS_PER_HOUR * q)
    dvc = lam.l1 * x.vc + lam.l2 * i
    return (dz, dvc)


def g_output(x: EcmState, i, lam: LambdaVec, coeffs: Sequence[float]):
    """Terminal voltage v = ocv(z) + vc + l3 * i."""
    return ocv(coeffs, x.z) + x.vc + lam.l3 * i


def rk4_step(f, x: tuple, u_stages: tuple, dt: float) -> tuple:
    """One classical RK4 step for dx/dt = f(x, u) with per-stage inputs.

    u_stages = (u at step start, u at midpoint, u at step end); the four
    stages use (u0, um, um, u1). x is a tuple of state components. This
    is the single step routine shared by the truth simulator and the
    training rollout, so both integrate with identical arithmetic.
    """
    u0, um, u1 = u_stages
    k1 = f(x, u0)
    x2 = tuple(xi + (dt / 2.0) * k1i for xi, k1i in zip(x, k1))
    k2 = f(x2, um)
    x3 = tuple(xi + (dt / 2.0) * k2i for xi, k2i in zip(x, k2))
    k3 = f(x3, um)
    x4 = tuple(xi + dt * k3i for xi, k3i in zip(x, k3))
    k4 = f(x4, u1)
    return tuple(
        xi + (dt / 6.0) * (k1i + 2.0 * k2i + 2.0 * k3i + k4i)
        for xi, k1i, k2i, k3i, k4i in zip(x, k1, k2, k3, k4)
    )
