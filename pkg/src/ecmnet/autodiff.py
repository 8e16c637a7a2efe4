"""Reverse-mode automatic differentiation on a flat tape.

A Tape records every primitive operation as a node (operands always
precede results, so the record order is a topological order). Nodes
hold float64 numpy arrays or python floats; training batches windows
along the leading axis, which is what makes 20k-epoch runs affordable
in CPython. backward() walks the record once in reverse, accumulating
adjoints by summation in that deterministic order, returns gradients
for the registered parameters in registration order, and clears the
tape for reuse.

All primitives also accept plain numbers/arrays: with no tape variable
among the operands they just compute (constant folding), which doubles
as the inference path of everything built on top.

Peak memory is proportional to batch_size x recorded ops per window
(roughly window length + rollout length, times network width), since
every node keeps its forward value until backward.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericsError


class AutodiffError(NumericsError):
    """Tape misuse or numerical failure (e.g. division by zero)."""


def _shape(x):
    return x.shape if isinstance(x, np.ndarray) else ()


def _unbroadcast(g, shape):
    """Reduce gradient g back to an operand's shape after broadcasting."""
    if _shape(g) == shape:
        return g
    if shape == ():
        return float(np.sum(g))
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Var:
    """Handle to one tape node."""

    __slots__ = ("tape", "idx", "val")

    # Opt out of numpy's elementwise dispatch: `ndarray <op> Var` must
    # fall back to the reflected Var operator on the whole array, never
    # build an object array of per-element Vars.
    __array_ufunc__ = None

    def __init__(self, tape, idx, val):
        self.tape = tape
        self.idx = idx
        self.val = val

    # -- arithmetic (Var op Var | Var op const) -------------------------
    def __add__(self, other):
        t = self.tape
        if type(other) is Var:
            t._check(other)
            return t._rec("add", self.val + other.val, self.idx, other.idx, None)
        return t._rec("addc", self.val + other, self.idx, -1, None)

    __radd__ = __add__

    def __sub__(self, other):
        t = self.tape
        if type(other) is Var:
            t._check(other)
            return t._rec("sub", self.val - other.val, self.idx, other.idx, None)
        return t._rec("addc", self.val - other, self.idx, -1, None)

    def __rsub__(self, other):
        return self.tape._rec("csub", other - self.val, self.idx, -1, None)

    def __mul__(self, other):
        t = self.tape
        if type(other) is Var:
            t._check(other)
            return t._rec("mul", self.val * other.val, self.idx, other.idx, None)
        return t._rec("mulc", self.val * other, self.idx, -1, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        t = self.tape
        if type(other) is Var:
            t._check(other)
            t._nonzero(other.val)
            return t._rec("div", self.val / other.val, self.idx, other.idx, None)
        t._nonzero(other)
        return t._rec("mulc", self.val / other, self.idx, -1, 1.0 / other)

    def __rtruediv__(self, other):
        t = self.tape
        t._nonzero(self.val)
        return t._rec("cdiv", other / self.val, self.idx, -1, None)

    def __neg__(self):
        return self.tape._rec("neg", -self.val, self.idx, -1, None)

    def __pow__(self, k):
        return powi(self, k)


class Tape:
    """Operation record plus parameter registry."""

    def __init__(self):
        self._nodes = []
        self._param_ids = []
        self.last_backward_visits = 0

    # -- recording ------------------------------------------------------
    def _rec(self, op, val, pa, pb, aux) -> Var:
        idx = len(self._nodes)
        self._nodes.append((op, val, pa, pb, aux))
        return Var(self, idx, val)

    def _check(self, other: Var):
        if other.tape is not self:
            raise AutodiffError("operands recorded on different tapes")

    def _nonzero(self, den):
        if np.any(np.asarray(den) == 0.0):
            raise AutodiffError(f"division by zero recording node {len(self._nodes)}")

    def param(self, value) -> Var:
        """Register a trainable leaf (float or float64 array)."""
        v = self._rec("leaf", value, -1, -1, None)
        self._param_ids.append(v.idx)
        return v

    @property
    def n_nodes(self) -> int:
        return len(self._nodes)

    @property
    def n_params(self) -> int:
        return len(self._param_ids)

    def reset(self):
        self._nodes = []
        self._param_ids = []

    # -- reverse sweep ----------------------------------------------------
    def backward(self, out: Var) -> list:
        """Adjoints of a scalar output w.r.t. the registered parameters.

        Returns one gradient per parameter in registration order (floats
        stay floats, arrays match the parameter shape; parameters the
        output does not depend on get zeros). The tape is cleared
        afterwards.
        """
        if type(out) is not Var or out.tape is not self:
            raise AutodiffError("backward target is not a variable of this tape")
        if np.size(out.val) != 1:
            raise AutodiffError(
                f"backward target must be scalar, got shape {_shape(out.val)}"
            )
        nodes = self._nodes
        adj = [None] * len(nodes)
        adj[out.idx] = 1.0
        visits = 0

        for i in range(out.idx, -1, -1):
            g = adj[i]
            if g is None:
                continue
            op, val, pa, pb, aux = nodes[i]
            if op == "leaf":
                continue
            visits += 1
            if op == "add":
                ga = _unbroadcast(g, _shape(nodes[pa][1]))
                gb = _unbroadcast(g, _shape(nodes[pb][1]))
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
                adj[pb] = gb if adj[pb] is None else adj[pb] + gb
            elif op == "mul":
                ga = _unbroadcast(g * nodes[pb][1], _shape(nodes[pa][1]))
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
                gb = _unbroadcast(g * nodes[pa][1], _shape(nodes[pb][1]))
                adj[pb] = gb if adj[pb] is None else adj[pb] + gb
            elif op == "mulc":
                ga = _unbroadcast(g * aux, _shape(nodes[pa][1]))
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
            elif op == "addc":
                ga = _unbroadcast(g, _shape(nodes[pa][1]))
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
            elif op == "tanh":
                ga = g * (1.0 - val * val)
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
            elif op == "sub":
                ga = _unbroadcast(g, _shape(nodes[pa][1]))
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
                gb = _unbroadcast(-g, _shape(nodes[pb][1]))
                adj[pb] = gb if adj[pb] is None else adj[pb] + gb
            elif op == "csub" or op == "neg":
                ga = _unbroadcast(-g, _shape(nodes[pa][1]))
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
            elif op == "relu":
                ga = g * (val > 0.0)
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
            elif op == "mm":
                a, b = nodes[pa][1], nodes[pb][1]
                ga = _mm_grad_a(g, a, b)
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
                gb = _mm_grad_b(g, a, b)
                adj[pb] = gb if adj[pb] is None else adj[pb] + gb
            elif op == "cmm":
                gb = _mm_grad_b(g, aux, nodes[pa][1])
                adj[pa] = gb if adj[pa] is None else adj[pa] + gb
            elif op == "mmc":
                ga = _mm_grad_a(g, nodes[pa][1], aux)
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
            elif op == "transpose":
                ga = g.T
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
            elif op == "div":
                b = nodes[pb][1]
                ga = _unbroadcast(g / b, _shape(nodes[pa][1]))
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
                gb = _unbroadcast(-g * val / b, _shape(b))
                adj[pb] = gb if adj[pb] is None else adj[pb] + gb
            elif op == "cdiv":
                a = nodes[pa][1]
                ga = _unbroadcast(-g * val / a, _shape(a))
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
            elif op == "powi":
                a = nodes[pa][1]
                k = aux
                ga = g * (k * a ** (k - 1)) if k != 0 else 0.0 * g
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
            elif op == "poly":
                dcoef = aux
                ga = g * _horner(dcoef, nodes[pa][1])
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
            elif op == "stack":
                for k, pid in enumerate(aux):
                    gk = g[..., k]
                    adj[pid] = gk if adj[pid] is None else adj[pid] + gk
            elif op == "col":
                a = nodes[pa][1]
                ga = np.zeros_like(a)
                ga[:, aux] = g
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
            elif op == "sum":
                a = nodes[pa][1]
                ga = np.full(_shape(a), g) if isinstance(a, np.ndarray) else g
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
            elif op == "dot":
                a, b = nodes[pa][1], nodes[pb][1]
                ga = g * b
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
                gb = g * a
                adj[pb] = gb if adj[pb] is None else adj[pb] + gb
            elif op == "dotc":
                ga = g * aux
                adj[pa] = ga if adj[pa] is None else adj[pa] + ga
            elif op == "rnn":
                x, iw, ir, ib, hv, rv = aux
                gh = g * (1.0 - val * val)
                if pa >= 0:
                    ga = gh @ rv
                    adj[pa] = ga if adj[pa] is None else adj[pa] + ga
                if iw >= 0:
                    gw = gh.T @ x
                    adj[iw] = gw if adj[iw] is None else adj[iw] + gw
                if ir >= 0 and hv is not None:
                    gr = gh.T @ hv
                    adj[ir] = gr if adj[ir] is None else adj[ir] + gr
                if ib >= 0:
                    gb = gh.sum(axis=0)
                    adj[ib] = gb if adj[ib] is None else adj[ib] + gb
            elif op == "affine":
                iw, ib, av, wv = aux
                if pa >= 0:
                    ga = g @ wv
                    adj[pa] = ga if adj[pa] is None else adj[pa] + ga
                if iw >= 0:
                    gw = g.T @ av
                    adj[iw] = gw if adj[iw] is None else adj[iw] + gw
                if ib >= 0:
                    gb = g.sum(axis=0)
                    adj[ib] = gb if adj[ib] is None else adj[ib] + gb
            else:  # pragma: no cover - every op above is exhaustive
                raise AutodiffError(f"no backward rule for op {op!r}")

        self.last_backward_visits = visits
        grads = []
        for pid in self._param_ids:
            gp = adj[pid]
            if gp is None:
                pv = nodes[pid][1]
                gp = np.zeros_like(pv) if isinstance(pv, np.ndarray) else 0.0
            grads.append(gp)
        self.reset()
        return grads


# -- matmul gradients ----------------------------------------------------

def _mm_grad_a(g, a, b):
    if a.ndim == 1:
        return b @ g if b.ndim == 2 else g * b
    if b.ndim == 1:
        return np.outer(g, b)
    return g @ b.T


def _mm_grad_b(g, a, b):
    if b.ndim == 1:
        return a.T @ g if a.ndim == 2 else g * a
    if a.ndim == 1:
        return np.outer(a, g)
    return a.T @ g


def _horner(coeffs, z):
    acc = coeffs[-1]
    for k in range(len(coeffs) - 2, -1, -1):
        acc = acc * z + coeffs[k]
    return acc


# -- primitives (Var or plain operands) -----------------------------------

def tanh(x):
    if type(x) is Var:
        return x.tape._rec("tanh", np.tanh(x.val), x.idx, -1, None)
    return np.tanh(x)


def relu(x):
    if type(x) is Var:
        return x.tape._rec("relu", np.maximum(x.val, 0.0), x.idx, -1, None)
    return np.maximum(x, 0.0)


def powi(x, k):
    """x**k for integer k (the tape's scalar-power primitive)."""
    if not isinstance(k, (int, np.integer)):
        raise AutodiffError(f"powi exponent must be an integer, got {k!r}")
    k = int(k)
    if type(x) is Var:
        t = x.tape
        if k < 0:
            t._nonzero(x.val)
        return t._rec("powi", x.val ** k, x.idx, -1, k)
    return x ** k


def matmul(a, b):
    """Matrix product with 1-D or 2-D operands (numpy @ semantics)."""
    av, bv = type(a) is Var, type(b) is Var
    if av and bv:
        a.tape._check(b)
        return a.tape._rec("mm", a.val @ b.val, a.idx, b.idx, None)
    if av:
        return a.tape._rec("mmc", a.val @ b, a.idx, -1, b)
    if bv:
        return b.tape._rec("cmm", a @ b.val, b.idx, -1, a)
    return a @ b


def transpose(a):
    if type(a) is Var:
        return a.tape._rec("transpose", a.val.T, a.idx, -1, None)
    return a.T


def dot(a, b):
    """Dot product of two 1-D vectors."""
    av, bv = type(a) is Var, type(b) is Var
    if av and bv:
        a.tape._check(b)
        return a.tape._rec("dot", float(np.dot(a.val, b.val)), a.idx, b.idx, None)
    if av:
        return a.tape._rec("dotc", float(np.dot(a.val, b)), a.idx, -1, np.asarray(b))
    if bv:
        return b.tape._rec("dotc", float(np.dot(a, b.val)), b.idx, -1, np.asarray(a))
    return float(np.dot(a, b))


def polyval(coeffs, z):
    """Polynomial evaluation sum_k coeffs[k] z^k by Horner's rule."""
    if type(z) is Var:
        dcoef = tuple(k * coeffs[k] for k in range(1, len(coeffs)))
        return z.tape._rec("poly", _horner(coeffs, z.val), z.idx, -1, dcoef)
    return _horner(coeffs, z)


def _operand(v):
    """(tape or None, node id, value) of a Var or constant operand."""
    if type(v) is Var:
        return v.tape, v.idx, v.val
    return None, -1, v


def rnn_cell(x, h, w_in, w_rec, b):
    """Fused recurrent step: tanh(x @ w_in.T + h @ w_rec.T + b).

    x is the (B, n_in) input slice (always a constant); h the previous
    (B, hidden) state or None for the all-zero initial state (whose
    w_rec product vanishes identically and is skipped); w_in (hidden,
    n_in), w_rec (hidden, hidden) and b (hidden,) the step parameters.
    One tape node replaces the two matmuls, two adds and tanh, and the
    forward pass accumulates in place instead of allocating per op.
    """
    th, ih, hv = _operand(h)
    tw, iw, wv = _operand(w_in)
    tr, ir, rv = _operand(w_rec)
    tb, ib, bv = _operand(b)
    tape = th or tw or tr or tb
    acc = x @ wv.T
    if hv is not None:
        acc += hv @ rv.T
    acc += bv
    np.tanh(acc, out=acc)
    if tape is None:
        return acc
    for t in (th, tw, tr, tb):
        if t is not None and t is not tape:
            raise AutodiffError("operands recorded on different tapes")
    return tape._rec("rnn", acc, ih, -1, (x, iw, ir, ib, hv, rv))


def affine(a, w, b):
    """Fused dense layer a @ w.T + b as one tape node."""
    ta, ia, av = _operand(a)
    tw, iw, wv = _operand(w)
    tb, ib, bv = _operand(b)
    tape = ta or tw or tb
    out = av @ wv.T
    out += bv
    if tape is None:
        return out
    for t in (ta, tw, tb):
        if t is not None and t is not tape:
            raise AutodiffError("operands recorded on different tapes")
    return tape._rec("affine", out, ia, -1, (iw, ib, av, wv))


def stack_last(xs):
    """Stack equal-shape operands along a new trailing axis."""
    if any(type(x) is Var for x in xs):
        tape = next(x.tape for x in xs if type(x) is Var)
        vals, ids = [], []
        for x in xs:
            if type(x) is Var:
                tape._check(x)
                vals.append(x.val)
                ids.append(x.idx)
            else:
                # promote constants so every slice has a parent
                c = tape._rec("leaf", x, -1, -1, None)
                vals.append(c.val)
                ids.append(c.idx)
        return tape._rec("stack", np.stack(vals, axis=-1), -1, -1, tuple(ids))
    return np.stack(xs, axis=-1)


def col(x, j):
    """Select column j of a 2-D value."""
    if type(x) is Var:
        return x.tape._rec("col", x.val[:, j], x.idx, -1, j)
    return x[:, j]


def sum_all(x):
    """Sum every element into a scalar."""
    if type(x) is Var:
        return x.tape._rec("sum", float(np.sum(x.val)), x.idx, -1, None)
    return float(np.sum(x))


# -- finite differences ----------------------------------------------------

def finite_difference(f, w: np.ndarray, indices, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar f(w) at the given flat indices."""
    out = np.empty(len(indices))
    for m, i in enumerate(indices):
        wp = w.copy()
        wp[i] += h
        wm = w.copy()
        wm[i] -= h
        out[m] = (f(wp) - f(wm)) / (2.0 * h)
    return out


def fd_compare(g_ad, g_fd, rel_tol: float = 1e-6, abs_tol: float = 1e-9):
    """Compare gradients entrywise: pass if |ad-fd| <= max(rel*|fd|, abs).

    Returns (ok, max_ratio) with max_ratio the worst |ad-fd| relative to
    its entry's tolerance max(rel_tol*|fd|, abs_tol); 1.0 sits exactly
    at tolerance, so ok == (max_ratio <= 1).
    """
    g_ad = np.asarray(g_ad, dtype=np.float64)
    g_fd = np.asarray(g_fd, dtype=np.float64)
    diff = np.abs(g_ad - g_fd)
    tol = np.maximum(rel_tol * np.abs(g_fd), abs_tol)
    max_ratio = float(np.max(diff / tol))
    return max_ratio <= 1.0, max_ratio
