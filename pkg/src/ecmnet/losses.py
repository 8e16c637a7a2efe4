"""Training losses that couple the estimator to the system physics.

Two routes to a trainable objective:

* integration_loss — the estimator predicts the state once per window;
  that estimate is integrated forward n steps through the known
  dynamics (classical RK4, midpoint stage currents) and mapped through
  the output function. Only *measured* outputs enter the residual, so
  the loss has one weighted term per output (plus optional algebraic
  constraints): no per-state residual weights to tune, and unmeasurable
  states never need labels.

* standard_pinn_loss — the conventional multi-term objective for
  comparison: one dynamics residual per state (time derivative of the
  estimate vs f) plus the output residual, each with its own weight.
  The estimate's time derivative comes from a forward difference of two
  adjacent network evaluations.

Both losses sort the window starts ascending before evaluating, so the
value is bitwise independent of batch ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from . import ecm, network


@dataclass(frozen=True)
class OdeSystemSpec:
    """An ODE system dx/dt = f(x, u; lam), y = g(x, u; lam), 0 = h(...).

    f, g, h act on tuples of state components and may be called with
    floats, arrays, or tape variables. g returns a tuple of n_outputs
    values; h (optional) a tuple of n_constraints residuals.
    """

    n_states: int
    n_outputs: int
    n_constraints: int
    f: Callable
    g: Callable
    h: Callable | None = None
    state_names: tuple = ()
    output_names: tuple = ()
    constraint_names: tuple = ()

    def __post_init__(self):
        if self.n_states < 1 or self.n_outputs < 1 or self.n_constraints < 0:
            raise ValueError("need n_states >= 1, n_outputs >= 1, n_constraints >= 0")
        if self.n_constraints > 0 and self.h is None:
            raise ValueError("n_constraints > 0 requires an h function")


def ecm_system(q_cap: float, coeffs: Sequence[float]) -> OdeSystemSpec:
    """The equivalent-circuit cell as a pluggable system (2 states, 1 output)."""

    def f(x: tuple, u, lam: ecm.LambdaVec):
        return ecm.f_dynamics(ecm.EcmState(z=x[0], vc=x[1]), u, lam, q_cap)

    def g(x: tuple, u, lam: ecm.LambdaVec):
        return (ecm.g_output(ecm.EcmState(z=x[0], vc=x[1]), u, lam, coeffs),)

    return OdeSystemSpec(
        n_states=2,
        n_outputs=1,
        n_constraints=0,
        f=f,
        g=g,
        state_names=("soc", "vc"),
        output_names=("voltage",),
    )


@dataclass(frozen=True)
class LossConfig:
    """Loss shape: rollout length and per-term weights."""

    rollout: int = 30  # integration steps per window
    w_out: tuple = (1.0,)  # one weight per measured output
    w_state: tuple = (1.0, 1.0)  # dynamics-residual weights (baseline only)
    w_con: tuple = ()  # constraint weights

    def __post_init__(self):
        if self.rollout < 1:
            raise ValueError(f"rollout must be >= 1, got {self.rollout}")
        for name in ("w_out", "w_state", "w_con"):
            if any(w < 0 for w in getattr(self, name)):
                raise ValueError(f"{name} entries must be >= 0")


@dataclass
class LossValue:
    """Scalar objective plus its weighted per-term breakdown."""

    total: object  # tape variable (or float when nothing was recorded)
    terms: dict  # name -> weighted value, as plain floats

    @property
    def value(self) -> float:
        return float(getattr(self.total, "val", self.total))


@dataclass
class SignalData:
    """Measurable signals of one (possibly concatenated) trace, plus the
    normalized copies the network consumes."""

    dt: float
    currents: np.ndarray
    voltages: np.ndarray
    norm_i: np.ndarray
    norm_v: np.ndarray


def signal_data(trace, norm: network.NormSpec) -> SignalData:
    """Prepare a trace's measurable signals for loss evaluation."""
    ni, nv = network.normalize_inputs(trace.currents, trace.voltages, norm)
    return SignalData(
        dt=trace.dt,
        currents=np.asarray(trace.currents, dtype=np.float64),
        voltages=np.asarray(trace.voltages, dtype=np.float64),
        norm_i=ni,
        norm_v=nv,
    )


def rk4_rollout(system: OdeSystemSpec, x0: tuple, seg_currents, lam, dt: float, n: int):
    """Integrate x0 forward n steps with classical RK4.

    seg_currents holds the n+1 current samples covering the rollout
    ((B, n+1) for a batch, (n+1,) for one window); the four stage
    currents of step k are (i_k, i_mid, i_mid, i_{k+1}) with i_mid the
    sample midpoint. Returns the n+1 states including x0. The estimator
    is never re-invoked here: gradients flow into x0 and lam only.
    """
    seg = np.asarray(seg_currents, dtype=np.float64)
    if seg.shape[-1] != n + 1:
        raise ValueError(f"need n+1={n + 1} current samples, got {seg.shape[-1]}")

    def f(x, u):
        return system.f(x, u, lam)

    states = [tuple(x0)]
    x = tuple(x0)
    for k in range(n):
        i0 = seg[..., k]
        i1 = seg[..., k + 1]
        im = (i0 + i1) / 2.0
        x = ecm.rk4_step(f, x, (i0, im, i1), dt)
        states.append(x)
    return states


def _gather(arr: np.ndarray, starts: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Rows arr[j+lo .. j+hi] for each start j -> (B, hi-lo+1)."""
    return arr[starts[:, None] + np.arange(lo, hi + 1)[None, :]]


def _estimate(net, win_i, win_v, window: int):
    """Run the estimator on a batch of windows.

    net is NetworkParams, or any callable(win_i, win_v) -> state tuple —
    the hook for plugging in reference estimators (e.g. one that returns
    the exact simulator states when probing the loss's zero point).
    """
    if callable(net):
        return net(win_i, win_v)
    return network.forward(net, win_i, win_v, window_len=window + 1)


def _check_starts(starts: np.ndarray, window: int, horizon: int, length: int):
    if starts.size == 0:
        raise ValueError("empty batch of window starts")
    bad = (starts < window) | (starts + horizon >= length)
    if np.any(bad):
        j = int(starts[np.argmax(bad)])
        raise ValueError(
            f"window start {j} invalid: need {window} <= j and "
            f"j + {horizon} < {length}"
        )


def integration_loss(
    data: SignalData,
    starts,
    net: network.NetworkParams,
    lam: ecm.LambdaVec,
    system: OdeSystemSpec,
    cfg: LossConfig,
    window: int,
) -> LossValue:
    """Integration-embedded output loss over a batch of windows.

    For each start j: estimate x at j from the normalized window
    (j-window .. j), RK4-integrate it cfg.rollout steps, map every state
    through g, and accumulate the squared output residuals at
    j .. j+rollout. Weighted per output (plus h-constraint terms when
    the system has them), normalized by rollout * batch, exactly one
    weighted term per output and per constraint.
    """
    n = cfg.rollout
    starts = np.sort(np.asarray(starts, dtype=np.int64))
    length = data.currents.size
    _check_starts(starts, window, n, length)
    if len(cfg.w_out) != system.n_outputs:
        raise ValueError(
            f"w_out has {len(cfg.w_out)} weights for {system.n_outputs} outputs"
        )
    if len(cfg.w_con) != system.n_constraints:
        raise ValueError(
            f"w_con has {len(cfg.w_con)} weights for {system.n_constraints} constraints"
        )
    batch = starts.size

    win_i = _gather(data.norm_i, starts, -window, 0)
    win_v = _gather(data.norm_v, starts, -window, 0)
    x_hat = _estimate(net, win_i, win_v, window)

    seg = _gather(data.currents, starts, 0, n)
    states = rk4_rollout(system, x_hat, seg, lam, data.dt, n)

    # (B, n+1) per state component; g and h evaluate on the whole block
    stacked = tuple(
        ad.stack_last([states[k][s] for k in range(n + 1)])
        for s in range(system.n_states)
    )
    outputs = system.g(stacked, seg, lam)

    scale = 1.0 / (n * batch)
    terms = {}
    total = None
    y_obs = (_gather(data.voltages, starts, 0, n),)
    for name, w, y_hat, y in zip(system.output_names, cfg.w_out, outputs, y_obs):
        r = y - y_hat
        term = ad.sum_all(r * r) * (w * scale)
        terms[f"out_{name}"] = float(getattr(term, "val", term))
        total = term if total is None else total + term
    if system.n_constraints:
        residuals = system.h(stacked, seg, lam)
        for name, w, r in zip(system.constraint_names, cfg.w_con, residuals):
            term = ad.sum_all(r * r) * (w * scale)
            terms[f"con_{name}"] = float(getattr(term, "val", term))
            total = total + term
    return LossValue(total=total, terms=terms)


def standard_pinn_loss(
    data: SignalData,
    starts,
    net: network.NetworkParams,
    lam: ecm.LambdaVec,
    system: OdeSystemSpec,
    cfg: LossConfig,
    window: int,
) -> LossValue:
    """Conventional multi-term physics loss (comparison baseline).

    One dynamics-residual term per state — d/dt of the estimate (forward
    difference of the estimates at j and j+1) against f — plus one
    output-residual term per output, each with its own weight; per-batch
    mean. Exposes n_states + n_outputs (+ constraints) weighted terms.
    """
    starts = np.sort(np.asarray(starts, dtype=np.int64))
    length = data.currents.size
    _check_starts(starts, window, 1, length)
    if len(cfg.w_state) != system.n_states:
        raise ValueError(
            f"w_state has {len(cfg.w_state)} weights for {system.n_states} states"
        )
    batch = starts.size
    scale = 1.0 / batch

    x_now = _estimate(
        net,
        _gather(data.norm_i, starts, -window, 0),
        _gather(data.norm_v, starts, -window, 0),
        window,
    )
    x_next = _estimate(
        net,
        _gather(data.norm_i, starts, -window + 1, 1),
        _gather(data.norm_v, starts, -window + 1, 1),
        window,
    )

    u_now = data.currents[starts]
    fx = system.f(x_now, u_now, lam)

    terms = {}
    total = None
    for name, w, xn, xn1, fi in zip(
        system.state_names, cfg.w_state, x_now, x_next, fx
    ):
        r = (xn1 - xn) * (1.0 / data.dt) - fi
        term = ad.sum_all(r * r) * (w * scale)
        terms[f"dyn_{name}"] = float(getattr(term, "val", term))
        total = term if total is None else total + term

    outputs = system.g(x_now, u_now, lam)
    y_obs = (data.voltages[starts],)
    for name, w, y_hat, y in zip(system.output_names, cfg.w_out, outputs, y_obs):
        r = y - y_hat
        term = ad.sum_all(r * r) * (w * scale)
        terms[f"out_{name}"] = float(getattr(term, "val", term))
        total = total + term
    if system.n_constraints:
        residuals = system.h(x_now, u_now, lam)
        for name, w, r in zip(system.constraint_names, cfg.w_con, residuals):
            term = ad.sum_all(r * r) * (w * scale)
            terms[f"con_{name}"] = float(getattr(term, "val", term))
            total = total + term
    return LossValue(total=total, terms=terms)


# -- lambda boxes ----------------------------------------------------------

@dataclass(frozen=True)
class LambdaBounds:
    """Componentwise clamp box for (l1, l2, l3); +-inf = unconstrained."""

    lo: tuple = (-np.inf, -np.inf, -np.inf)
    hi: tuple = (np.inf, np.inf, np.inf)

    def __post_init__(self):
        if len(self.lo) != 3 or len(self.hi) != 3:
            raise ValueError("bounds must have 3 components")
        for a, b in zip(self.lo, self.hi):
            if not a <= b:
                raise ValueError(f"invalid bounds: lo {a} > hi {b}")


def bounds_from_params(
    true_params: ecm.EcmParams, lo_frac: float = 0.5, hi_frac: float = 2.0
) -> LambdaBounds:
    """Search box from fractional bounds on r1 and c (l3 unconstrained).

    r1, c in [lo_frac, hi_frac] x truth maps to
    l1 in [-1/(lo^2 r1 c), -1/(hi^2 r1 c)] and l2 in [1/(hi c), 1/(lo c)].
    """
    if not 0 < lo_frac <= 1 <= hi_frac:
        raise ValueError(f"need 0 < lo_frac <= 1 <= hi_frac, got {lo_frac}, {hi_frac}")
    rc = true_params.r1 * true_params.c
    return LambdaBounds(
        lo=(-1.0 / (lo_frac * lo_frac * rc), 1.0 / (hi_frac * true_params.c), -np.inf),
        hi=(-1.0 / (hi_frac * hi_frac * rc), 1.0 / (lo_frac * true_params.c), np.inf),
    )


def project_lambda(lam: ecm.LambdaVec, bounds: LambdaBounds) -> ecm.LambdaVec:
    """Clamp lambda into its box (identity when already inside)."""
    vals = [
        min(max(float(v), lo), hi)
        for v, lo, hi in zip(lam.astuple(), bounds.lo, bounds.hi)
    ]
    return ecm.LambdaVec(*vals)
