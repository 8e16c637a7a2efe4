"""Training loop: windowed dataset, Adam, checkpoints, gradient checks.

The trainable vector is flat: network weights in NETWORK_FIELDS order
(row-major), then the three identification parameters in *scaled* form
p_i = l_i / l_i,init (all start at exactly 1.0, which equalizes their
step sizes regardless of physical magnitude). After every Adam step the
scaled parameters are clamped into the configured search box.

An epoch is one full pass over every valid window start of every
training trace, in shuffled minibatches; the shuffle for epoch e is
seeded by (shuffle_seed, e), so any epoch is reproducible in isolation
and training can resume from a checkpoint bit-exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import ecm, losses, network, rng
from .errors import DataError, NumericsError

CHECKPOINT_FORMAT = "ecmnet-checkpoint"
CHECKPOINT_VERSION = 1
HISTORY_HEADER = "epoch,loss,r0,r1,c"


# -- dataset ---------------------------------------------------------------

@dataclass
class WindowDataset:
    """All valid training windows of one or more traces.

    Traces are concatenated into one signal buffer; a start j is valid
    when the input window (j-window .. j) and the rollout horizon
    (j .. j+rollout) both stay inside j's source trace, which the start
    list guarantees by construction.
    """

    data: losses.SignalData
    starts: np.ndarray
    window: int
    rollout: int
    trace_lengths: tuple

    def __len__(self):
        return self.starts.size


def build_windows(traces, window: int, rollout: int, norm: network.NormSpec) -> WindowDataset:
    """Collect valid window starts (trace order fixed, starts ascending).

    Each trace contributes length - window - rollout starts; a trace
    shorter than window + rollout + 1 is an error.
    """
    if not traces:
        raise DataError("no traces given")
    dt = traces[0].dt
    currents, voltages, starts = [], [], []
    offset = 0
    for k, tr in enumerate(traces):
        if tr.dt != dt:
            raise DataError(f"trace {k} has dt={tr.dt}, expected {dt}")
        n = len(tr)
        if n < window + rollout + 1:
            raise DataError(
                f"trace {k} too short: {n} samples < window+rollout+1 = "
                f"{window + rollout + 1}"
            )
        currents.append(np.asarray(tr.currents, dtype=np.float64))
        voltages.append(np.asarray(tr.voltages, dtype=np.float64))
        starts.append(np.arange(offset + window, offset + n - rollout, dtype=np.int64))
        offset += n
    cur = np.concatenate(currents)
    vol = np.concatenate(voltages)
    ni, nv = network.normalize_inputs(cur, vol, norm)
    return WindowDataset(
        data=losses.SignalData(dt=dt, currents=cur, voltages=vol, norm_i=ni, norm_v=nv),
        starts=np.concatenate(starts),
        window=window,
        rollout=rollout,
        trace_lengths=tuple(len(t) for t in traces),
    )


# -- optimizer -------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), t=0)


def adam_step(params, grads, state: AdamState, lr, beta1, beta2, eps):
    """One bias-corrected Adam update; returns (new params, new state)."""
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * (grads * grads)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new, AdamState(m=m, v=v, t=t)


# -- config and flat parameter layout ---------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    lam_init: ecm.LambdaVec
    minibatch: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    window: int = 30  # input window length l (window has l+1 samples)
    init_seed: int = 1
    shuffle_seed: int = 2
    checkpoint_every: int = 0  # epochs between checkpoints; 0 = final only
    bounds: losses.LambdaBounds = field(default_factory=losses.LambdaBounds)

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.minibatch < 1:
            raise ValueError(f"minibatch must be >= 1, got {self.minibatch}")
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        for b in (self.beta1, self.beta2):
            if not 0.0 <= b < 1.0:
                raise ValueError(f"Adam betas must be in [0, 1), got {b}")
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")


def flatten_network(net: network.NetworkParams) -> np.ndarray:
    return np.concatenate([np.asarray(p, dtype=np.float64).ravel() for p in net.astuple()])


def initial_vector(cfg: TrainConfig, shapes=None) -> np.ndarray:
    """Fresh flat vector: seeded weight init + scaled lambda at 1.0."""
    net = network.init_weights(cfg.init_seed)
    return np.concatenate([flatten_network(net), np.ones(3)])


def _views(w: np.ndarray, shapes):
    out, off = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        out.append(w[off : off + size].reshape(shape))
        off += size
    return out, off


def unflatten(w: np.ndarray, shapes=None):
    """Flat vector -> (NetworkParams views, scaled-lambda array view)."""
    shapes = shapes or network.param_shapes()
    views, off = _views(w, shapes)
    return network.NetworkParams(*views), w[off : off + 3]


def lambda_physical(p_scaled, lam_init: ecm.LambdaVec) -> ecm.LambdaVec:
    return ecm.LambdaVec(
        l1=float(p_scaled[0]) * lam_init.l1,
        l2=float(p_scaled[1]) * lam_init.l2,
        l3=float(p_scaled[2]) * lam_init.l3,
    )


def scaled_box(bounds: losses.LambdaBounds, lam_init: ecm.LambdaVec):
    """The lambda box mapped into scaled (p = l/l_init) coordinates."""
    lo, hi = [], []
    for b_lo, b_hi, li in zip(bounds.lo, bounds.hi, lam_init.astuple()):
        a, b = b_lo / li, b_hi / li
        if a > b:
            a, b = b, a
        lo.append(a)
        hi.append(b)
    return np.asarray(lo), np.asarray(hi)


# -- loss evaluation over the flat vector ------------------------------------

LOSS_KINDS = ("integration", "standard")


def batch_loss(
    w: np.ndarray,
    dataset: WindowDataset,
    starts,
    system: losses.OdeSystemSpec,
    loss_cfg: losses.LossConfig,
    lam_init: ecm.LambdaVec,
    kind: str = "integration",
    tape: ad.Tape | None = None,
):
    """Evaluate one minibatch loss; with a tape, parameters are
    registered on it (network fields first, then the 3 scaled lambdas)
    so tape.backward yields the flat gradient layout."""
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {kind!r}")
    shapes = network.param_shapes()
    views, off = _views(w, shapes)
    p = w[off : off + 3]
    if tape is not None:
        views = [tape.param(v) for v in views]
        p_vars = [tape.param(float(p[i])) for i in range(3)]
    else:
        p_vars = [float(p[i]) for i in range(3)]
    net = network.NetworkParams(*views)
    lam = ecm.LambdaVec(
        l1=p_vars[0] * lam_init.l1,
        l2=p_vars[1] * lam_init.l2,
        l3=p_vars[2] * lam_init.l3,
    )
    fn = losses.integration_loss if kind == "integration" else losses.standard_pinn_loss
    return fn(dataset.data, starts, net, lam, system, loss_cfg, dataset.window)


def loss_gradient(w, dataset, starts, system, loss_cfg, lam_init, kind="integration"):
    """Loss value, per-term values, and flat gradient for one minibatch."""
    tape = ad.Tape()
    lv = batch_loss(w, dataset, starts, system, loss_cfg, lam_init, kind, tape)
    grads = tape.backward(lv.total)
    flat = np.concatenate(
        [np.asarray(g, dtype=np.float64).ravel() for g in grads[:-3]]
        + [np.asarray(grads[-3:], dtype=np.float64)]
    )
    return lv, flat


# -- history ---------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    loss: float
    terms: dict
    r0: float
    r1: float
    c: float

    def history_row(self) -> str:
        return (
            f"{self.epoch},{self.loss:.12g},{self.r0:.12g},"
            f"{self.r1:.12g},{self.c:.12g}"
        )


def raw_circuit_values(lam: ecm.LambdaVec):
    """(r0, r1, c) implied by lambda, without physical-validity checks.

    Used for history rows, where a transiently nonphysical lambda (e.g.
    a negative l3 early in training) must be recorded, not rejected.
    """
    c = np.inf if lam.l2 == 0 else 1.0 / lam.l2
    r1 = np.inf if lam.l1 * c == 0 else -1.0 / (lam.l1 * c)
    return lam.l3, r1, c


def write_history(path, records, comments: dict | None = None):
    """History CSV: epoch,loss,r0,r1,c (lambda in physical units)."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, val in (comments or {}).items():
            fh.write(f"# {key}={val}\n")
        fh.write(HISTORY_HEADER + "\n")
        for rec in records:
            fh.write(rec.history_row() + "\n")


def write_loss_terms(path, records, comments: dict | None = None):
    """Per-term loss history CSV: epoch then one column per weighted term."""
    names = list(records[0].terms) if records else []
    with open(path, "w", encoding="utf-8") as fh:
        for key, val in (comments or {}).items():
            fh.write(f"# {key}={val}\n")
        fh.write(",".join(["epoch"] + names) + "\n")
        for rec in records:
            row = [str(rec.epoch)] + [f"{rec.terms[n]:.12g}" for n in names]
            fh.write(",".join(row) + "\n")


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(path, *, epoch, w, adam: AdamState, lam_init: ecm.LambdaVec,
                    config_hash: str = ""):
    """Write a self-describing text checkpoint (exact float64 via hex)."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "epoch": int(epoch),
        "adam_t": int(adam.t),
        "config_hash": config_hash,
        "shapes": [list(s) for s in network.param_shapes()],
        "lambda_init": [float.hex(float(x)) for x in lam_init.astuple()],
        "w": [float.hex(float(x)) for x in w],
        "adam_m": [float.hex(float(x)) for x in adam.m],
        "adam_v": [float.hex(float(x)) for x in adam.v],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path):
    """Read a checkpoint; returns (epoch, w, AdamState, lam_init, config_hash)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not a valid checkpoint: {exc}") from None
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise DataError(
            f"{path}: checkpoint version {payload.get('version')} "
            f"unsupported (expected {CHECKPOINT_VERSION})"
        )
    shapes = [tuple(s) for s in payload["shapes"]]
    if shapes != list(network.param_shapes()):
        raise DataError(f"{path}: parameter shapes do not match this build")
    expect = sum(int(np.prod(s)) for s in shapes) + 3
    try:
        w = np.asarray([float.fromhex(x) for x in payload["w"]])
        m = np.asarray([float.fromhex(x) for x in payload["adam_m"]])
        v = np.asarray([float.fromhex(x) for x in payload["adam_v"]])
        lam_init = ecm.LambdaVec(*[float.fromhex(x) for x in payload["lambda_init"]])
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: corrupted checkpoint payload: {exc}") from None
    if not (w.size == m.size == v.size == expect):
        raise DataError(
            f"{path}: expected {expect} parameters, got {w.size}/{m.size}/{v.size}"
        )
    adam = AdamState(m=m, v=v, t=int(payload["adam_t"]))
    return int(payload["epoch"]), w, adam, lam_init, payload.get("config_hash", "")


# -- the loop ----------------------------------------------------------------

@dataclass
class TrainResult:
    w: np.ndarray
    net: network.NetworkParams
    lam: ecm.LambdaVec
    adam: AdamState
    history: list


def train(
    dataset: WindowDataset,
    system: losses.OdeSystemSpec,
    loss_cfg: losses.LossConfig,
    cfg: TrainConfig,
    *,
    loss_kind: str = "integration",
    w0: np.ndarray | None = None,
    adam0: AdamState | None = None,
    start_epoch: int = 0,
    out_dir=None,
    config_hash: str = "",
    log=None,
) -> TrainResult:
    """Run cfg.epochs training epochs (possibly resuming at start_epoch).

    Aborts with NumericsError on a non-finite loss (checkpoints already
    written are retained). With epochs == 0 returns the inputs unchanged
    and an empty history.
    """
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    if dataset.rollout != loss_cfg.rollout:
        raise ValueError(
            f"dataset rollout {dataset.rollout} != loss rollout {loss_cfg.rollout}"
        )
    if dataset.window != cfg.window:
        raise ValueError(f"dataset window {dataset.window} != config {cfg.window}")
    lam_init = cfg.lam_init
    w = np.array(initial_vector(cfg) if w0 is None else w0, dtype=np.float64)
    adam = adam0 if adam0 is not None else AdamState.zeros(w.size)
    p_lo, p_hi = scaled_box(cfg.bounds, lam_init)
    w[-3:] = np.clip(w[-3:], p_lo, p_hi)

    n_starts = len(dataset)
    history = []

    def record(epoch, mean_loss, mean_terms):
        r0, r1, c = raw_circuit_values(lambda_physical(w[-3:], lam_init))
        history.append(
            EpochRecord(epoch=epoch, loss=mean_loss, terms=mean_terms, r0=r0, r1=r1, c=c)
        )

    def checkpoint(name_epoch, final=False):
        if out_dir is None:
            return
        name = "checkpoint_final.json" if final else f"checkpoint_ep{name_epoch:06d}.json"
        save_checkpoint(
            os.path.join(out_dir, name),
            epoch=name_epoch,
            w=w,
            adam=adam,
            lam_init=lam_init,
            config_hash=config_hash,
        )

    end_epoch = start_epoch + cfg.epochs
    for epoch in range(start_epoch, end_epoch):
        perm = rng.permutation(rng.derive(cfg.shuffle_seed, epoch), n_starts)
        loss_sum = 0.0
        term_sums: dict = {}
        for s0 in range(0, n_starts, cfg.minibatch):
            idx = dataset.starts[perm[s0 : s0 + cfg.minibatch]]
            lv, grad = loss_gradient(
                w, dataset, idx, system, loss_cfg, lam_init, loss_kind
            )
            if not np.isfinite(lv.value):
                checkpoint(epoch)
                raise NumericsError(
                    f"non-finite loss {lv.value} at epoch {epoch}, "
                    f"batch starting at shuffled index {s0}"
                )
            w, adam = adam_step(w, grad, adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
            w[-3:] = np.clip(w[-3:], p_lo, p_hi)
            nb = idx.size
            loss_sum += lv.value * nb
            for name, val in lv.terms.items():
                term_sums[name] = term_sums.get(name, 0.0) + val * nb
        mean_terms = {k: v / n_starts for k, v in term_sums.items()}
        record(epoch + 1, loss_sum / n_starts, mean_terms)
        if log is not None and (
            epoch == end_epoch - 1 or (epoch - start_epoch) % max(1, cfg.epochs // 50) == 0
        ):
            rec = history[-1]
            log(
                f"epoch {epoch + 1}/{end_epoch} loss={rec.loss:.6e} "
                f"r0={rec.r0:.5f} r1={rec.r1:.5f} c={rec.c:.2f}"
            )
        if cfg.checkpoint_every and (epoch + 1 - start_epoch) % cfg.checkpoint_every == 0:
            checkpoint(epoch + 1)

    checkpoint(end_epoch, final=True)
    net, p = unflatten(w)
    return TrainResult(
        w=w,
        net=net,
        lam=lambda_physical(p, lam_init),
        adam=adam,
        history=history,
    )


# -- finite-difference verification ------------------------------------------

def gradient_check(
    seed: int = 20240,
    n_theta: int = 50,
    window: int = 5,
    rollout: int = 2,
    h: float = 1e-6,
    kind: str = "integration",
):
    """Verify tape gradients against central finite differences.

    Small seeded instance: a 60-sample synthetic cycle through the true
    cell, two windows, a freshly initialized network, lambda at 150% of
    truth. Checks n_theta randomly chosen network weights plus all three
    lambda entries. Returns (ok, max_tolerance_ratio, n_checked) where
    the ratio compares each entry's |ad - fd| against its tolerance
    max(1e-6 |fd|, 1e-9), so <= 1 passes.
    """
    from . import profiles, simulate  # local import keeps module deps one-way

    params = ecm.EcmParams(r0=0.06, r1=0.03, c=1000.0, q=2.0)
    coeffs = ecm.OCV_COEFFS_DEFAULT
    prof = profiles.synth_dynamic_profile(
        duration_s=60.0, dt=1.0, seed=rng.derive(seed, 1), soc_drop=0.005
    )
    trace = simulate.simulate(params, coeffs, prof, z0=0.6)
    dataset = build_windows([trace], window, rollout, network.NormSpec())
    starts = dataset.starts[[0, len(dataset) // 2]]

    system = losses.ecm_system(params.q, coeffs)
    loss_cfg = losses.LossConfig(rollout=rollout)
    lam_true = ecm.lambda_from_params(params)
    lam_init = ecm.LambdaVec(
        l1=lam_true.l1 * 1.5, l2=lam_true.l2 * 1.5, l3=lam_true.l3 * 1.5
    )
    cfg = TrainConfig(epochs=0, lam_init=lam_init, window=window, init_seed=seed)
    w = initial_vector(cfg)

    lv, g_ad = loss_gradient(w, dataset, starts, system, loss_cfg, lam_init, kind)
    n_net = w.size - 3
    pick = rng.permutation(rng.derive(seed, 2), n_net)[:n_theta]
    indices = np.concatenate([np.sort(pick), [n_net, n_net + 1, n_net + 2]])

    def f(wx):
        return batch_loss(wx, dataset, starts, system, loss_cfg, lam_init, kind).value

    g_fd = ad.finite_difference(f, w, indices, h)
    ok, max_rel = ad.fd_compare(g_ad[indices], g_fd)
    return ok, max_rel, len(indices)
