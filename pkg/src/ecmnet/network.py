"""Recurrent state-estimator network.

Maps a window of normalized (current, voltage) samples, oldest first,
to a state estimate (z, vc) at the window's final instant. One tanh
recurrent layer feeds a ReLU fully-connected layer and a linear
two-unit head. The hidden state starts at zero for every window, so
windows are independent and can be evaluated batched along the leading
axis.

Parameters may be numpy arrays (inference) or tape variables
(training); the forward code is identical for both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import rng

# field order fixes the flat parameter layout everywhere (gradients,
# Adam state, checkpoints): row-major w_in, w_rec, b_rec, w_fc, b_fc,
# w_out, b_out
NETWORK_FIELDS = ("w_in", "w_rec", "b_rec", "w_fc", "b_fc", "w_out", "b_out")


@dataclass
class NetworkParams:
    w_in: object  # (hidden, n_in)
    w_rec: object  # (hidden, hidden)
    b_rec: object  # (hidden,)
    w_fc: object  # (fc, hidden)
    b_fc: object  # (fc,)
    w_out: object  # (n_out, fc)
    b_out: object  # (n_out,)

    def astuple(self):
        return tuple(getattr(self, f) for f in NETWORK_FIELDS)

    @property
    def n_scalars(self) -> int:
        return sum(np.size(getattr(self, f)) for f in NETWORK_FIELDS)


def param_shapes(n_in=2, hidden=20, fc=200, n_out=2):
    return (
        (hidden, n_in),
        (hidden, hidden),
        (hidden,),
        (fc, hidden),
        (fc,),
        (n_out, fc),
        (n_out,),
    )


def init_weights(seed: int, n_in=2, hidden=20, fc=200, n_out=2) -> NetworkParams:
    """Deterministic Glorot-uniform init from the portable PRNG.

    Each weight matrix (rows, cols) is drawn row-major from one stream,
    uniform in +-sqrt(6 / (rows + cols)), matrices in NETWORK_FIELDS
    order; biases start at zero.
    """
    offset = 0

    def draw(rows, cols):
        nonlocal offset
        u = rng.uniforms(seed, rows * cols, offset=offset)
        offset += rows * cols
        bound = np.sqrt(6.0 / (rows + cols))
        return ((2.0 * u - 1.0) * bound).reshape(rows, cols)

    return NetworkParams(
        w_in=draw(hidden, n_in),
        w_rec=draw(hidden, hidden),
        b_rec=np.zeros(hidden),
        w_fc=draw(fc, hidden),
        b_fc=np.zeros(fc),
        w_out=draw(n_out, fc),
        b_out=np.zeros(n_out),
    )


@dataclass(frozen=True)
class NormSpec:
    """Input scaling: i -> i/i_scale, v -> (v - v_low)/(v_high - v_low)."""

    i_scale: float = 4.0
    v_low: float = 2.5
    v_high: float = 4.2

    def __post_init__(self):
        if not self.i_scale > 0:
            raise ValueError(f"i_scale must be > 0, got {self.i_scale}")
        if not self.v_low < self.v_high:
            raise ValueError(
                f"need v_low < v_high, got [{self.v_low}, {self.v_high}]"
            )


def normalize_inputs(currents, voltages, norm: NormSpec):
    """Scale raw signals into the network's input range."""
    return (
        currents / norm.i_scale,
        (voltages - norm.v_low) / (norm.v_high - norm.v_low),
    )


def sliding_windows(arr: np.ndarray, width: int) -> np.ndarray:
    """(N,) -> (N - width + 1, width) view of all length-width windows."""
    return np.lib.stride_tricks.sliding_window_view(arr, width)


def forward(params: NetworkParams, win_i, win_v, window_len: int | None = None):
    """Estimate (z, vc) from normalized input windows, oldest sample first.

    win_i / win_v: (B, L) arrays, or (L,) for a single window. Returns
    a pair of length-B values (floats for a single plain-numpy window).
    """
    win_i = np.asarray(win_i, dtype=np.float64)
    win_v = np.asarray(win_v, dtype=np.float64)
    single = win_i.ndim == 1
    if single:
        win_i = win_i[None, :]
        win_v = win_v[None, :]
    if win_i.shape != win_v.shape:
        raise ValueError(f"window shapes differ: {win_i.shape} vs {win_v.shape}")
    n_steps = win_i.shape[1]
    if window_len is not None and n_steps != window_len:
        raise ValueError(f"window length {n_steps} != expected {window_len}")

    h = None  # the zero initial state; every window starts fresh
    for t in range(n_steps):
        x_t = np.stack([win_i[:, t], win_v[:, t]], axis=1)
        h = ad.rnn_cell(x_t, h, params.w_in, params.w_rec, params.b_rec)
    a = ad.relu(ad.affine(h, params.w_fc, params.b_fc))
    out = ad.affine(a, params.w_out, params.b_out)
    z, vc = ad.col(out, 0), ad.col(out, 1)
    if single and isinstance(z, np.ndarray):
        return float(z[0]), float(vc[0])
    return z, vc
