"""Reverse-mode automatic differentiation on numpy arrays.

A Tape records every primitive applied to traced tensors, in execution
order.  backward() sweeps the tape once in reverse index order,
accumulating cotangents additively over fan-out.  The forward value of
every primitive is computed by the same numpy expression whether or not
the inputs are traced, so tracing never changes results: it only appends
bookkeeping.

Precision is fixed at float64 for the whole build; finite-difference
gradient checks are not reliable at float32.
"""

from __future__ import annotations

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand shapes cannot be combined."""


class Tensor:
    """A numpy array plus an optional position on a tape.

    tape/node are None for plain (untraced) values.  External inputs are
    rejected if they contain NaN or Inf; internal op results skip the
    check so that intermediate overflow surfaces at the sampler's own
    finiteness guards instead of deep inside an expression.
    """

    __slots__ = ("data", "tape", "node")

    def __init__(self, data):
        arr = np.asarray(data, dtype=DTYPE)
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite values in tensor input")
        self.data = arr
        self.tape = None
        self.node = None

    @classmethod
    def _make(cls, data, tape=None, node=None):
        t = object.__new__(cls)
        t.data = data
        t.tape = tape
        t.node = node
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def traced(self):
        return self.tape is not None

    def item(self):
        return float(self.data)

    def __repr__(self):
        tag = f" tape@{self.node}" if self.traced else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # operator sugar; all routes through the module-level primitives
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return multiply(self, -1.0)

    def square(self):
        return square(self)

    def sqrt(self):
        return sqrt(self)

    def sum(self, axis=None):
        return tsum(self, axis=axis)

    def mean(self, axis=None):
        return tmean(self, axis=axis)


class TapeNode:
    """One recorded primitive application.

    inputs holds parent node indices, all strictly smaller than this
    node's own index (the tape is acyclic by construction).  backward
    maps the output cotangent to one cotangent per recorded input; it
    closes over whatever forward values the rule needs.
    """

    __slots__ = ("op", "inputs", "backward", "shape")

    def __init__(self, op, inputs, backward, shape):
        self.op = op
        self.inputs = inputs
        self.backward = backward
        self.shape = shape


class Tape:
    """An append-only record of primitives, confined to one thread."""

    def __init__(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def leaf(self, data):
        """Register an external input as a traced leaf."""
        t = Tensor(data)  # finite check applies to leaves
        idx = self._record("leaf", (), None, t.data.shape)
        t.tape = self
        t.node = idx
        return t

    def _record(self, op, input_nodes, backward_fn, shape):
        idx = len(self.nodes)
        self.nodes.append(TapeNode(op, tuple(input_nodes), backward_fn, shape))
        return idx


class GradientMap:
    """Cotangents produced by one backward sweep, indexed by tensor."""

    def __init__(self, tape, grads):
        self._tape = tape
        self._grads = grads

    def __getitem__(self, tensor):
        if tensor.tape is not self._tape:
            raise ValueError("tensor does not belong to this tape")
        if tensor.node >= len(self._grads):
            return np.zeros(tensor.data.shape, dtype=DTYPE)
        g = self._grads[tensor.node]
        if g is None:
            return np.zeros(tensor.data.shape, dtype=DTYPE)
        # reductions can leave 0-d grads for 0-d nodes; normalize dtype/shape
        return np.asarray(g, dtype=DTYPE).reshape(tensor.data.shape)


def backward(root, seed=None):
    """Reverse sweep from root, returning a GradientMap.

    root must be scalar unless a seed of matching shape is supplied.
    Accumulation over fan-out is additive; the sweep visits nodes in
    strictly decreasing tape index, which fixes the floating-point
    evaluation order and makes repeated runs bit-identical.
    """
    if not isinstance(root, Tensor) or root.tape is None:
        raise ValueError("backward requires a traced tensor")
    tape = root.tape
    if seed is None:
        if root.data.shape != ():
            raise ValueError(
                f"backward root must be scalar (shape {root.data.shape}); pass a seed"
            )
        seed_arr = np.ones((), dtype=DTYPE)
    else:
        seed_arr = np.asarray(getattr(seed, "data", seed), dtype=DTYPE)
        if seed_arr.shape != root.data.shape:
            raise ShapeError(
                f"backward: seed shape mismatch: {seed_arr.shape} vs {root.data.shape}"
            )
    grads = [None] * (root.node + 1)
    grads[root.node] = seed_arr
    for idx in range(root.node, -1, -1):
        g = grads[idx]
        if g is None:
            continue
        node = tape.nodes[idx]
        if not node.inputs:
            continue
        parent_grads = node.backward(g)
        for pidx, pg in zip(node.inputs, parent_grads):
            if pg is None:
                continue
            if grads[pidx] is None:
                grads[pidx] = pg
            else:
                # out-of-place add: contributions may alias saved arrays
                grads[pidx] = grads[pidx] + pg
    return GradientMap(tape, grads)


# ---------------------------------------------------------------------------
# primitive plumbing

def _wrap(value):
    if isinstance(value, Tensor):
        return value
    return Tensor._make(np.asarray(value, dtype=DTYPE))


def _result_tape(op, *tensors):
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is None:
                tape = t.tape
            elif tape is not t.tape:
                raise ValueError(f"{op}: operands live on different tapes")
    return tape


def _emit(op, out_data, parents, grad_rules):
    """Record a node if any parent is traced.

    parents: tensors in rule order; grad_rules: one callable per parent,
    grad_out -> cotangent contribution (or None for untraced parents,
    which are constants and receive no gradient).
    """
    tape = _result_tape(op, *parents)
    if tape is None:
        return Tensor._make(out_data)
    input_nodes = []
    rules = []
    for p, rule in zip(parents, grad_rules):
        if p.tape is not None:
            input_nodes.append(p.node)
            rules.append(rule)

    def bwd(g, rules=tuple(rules)):
        return tuple(rule(g) for rule in rules)

    idx = tape._record(op, input_nodes, bwd, out_data.shape)
    return Tensor._make(out_data, tape, idx)


def _check_broadcast(op, sa, sb):
    try:
        np.broadcast_shapes(sa, sb)
    except ValueError:
        raise ShapeError(f"{op}: shape mismatch: {sa} vs {sb}") from None


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to the operand's shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise primitives (numpy broadcasting; scalar operands included)

def add(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("add", a.data.shape, b.data.shape)
    out = a.data + b.data
    sa, sb = a.data.shape, b.data.shape
    return _emit("add", out, (a, b), (
        lambda g: _unbroadcast(g, sa),
        lambda g: _unbroadcast(g, sb),
    ))


def subtract(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("subtract", a.data.shape, b.data.shape)
    out = a.data - b.data
    sa, sb = a.data.shape, b.data.shape
    return _emit("subtract", out, (a, b), (
        lambda g: _unbroadcast(g, sa),
        lambda g: _unbroadcast(-g, sb),
    ))


def multiply(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("multiply", a.data.shape, b.data.shape)
    out = a.data * b.data
    sa, sb = a.data.shape, b.data.shape
    da, db = a.data, b.data
    return _emit("multiply", out, (a, b), (
        lambda g: _unbroadcast(g * db, sa),
        lambda g: _unbroadcast(g * da, sb),
    ))


def divide(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("divide", a.data.shape, b.data.shape)
    out = a.data / b.data
    sa, sb = a.data.shape, b.data.shape
    da, db = a.data, b.data
    return _emit("divide", out, (a, b), (
        lambda g: _unbroadcast(g / db, sa),
        lambda g: _unbroadcast(-g * da / (db * db), sb),
    ))


def square(a):
    a = _wrap(a)
    out = a.data * a.data
    da = a.data
    return _emit("square", out, (a,), (lambda g: g * (2.0 * da),))


def sqrt(a):
    a = _wrap(a)
    out = np.sqrt(a.data)
    return _emit("sqrt", out, (a,), (lambda g: g / (2.0 * out),))


def exp(a):
    a = _wrap(a)
    out = np.exp(a.data)
    return _emit("exp", out, (a,), (lambda g: g * out,))


def log(a):
    a = _wrap(a)
    out = np.log(a.data)
    da = a.data
    return _emit("log", out, (a,), (lambda g: g / da,))


def tanh(a):
    a = _wrap(a)
    out = np.tanh(a.data)
    return _emit("tanh", out, (a,), (lambda g: g * (1.0 - out * out),))


def clamp(a, lo, hi):
    """Elementwise clip; gradient passes inside [lo, hi], boundary included."""
    a = _wrap(a)
    out = np.clip(a.data, lo, hi)
    passmask = (a.data >= lo) & (a.data <= hi)
    return _emit("clamp", out, (a,), (lambda g: g * passmask,))


# ---------------------------------------------------------------------------
# reductions

def tsum(a, axis=None):
    a = _wrap(a)
    out = np.sum(a.data, axis=axis)
    shape = a.data.shape

    def bwd(g):
        if axis is None:
            return np.broadcast_to(g, shape)
        return np.broadcast_to(np.expand_dims(g, axis), shape)

    return _emit("sum", out, (a,), (bwd,))


def tmean(a, axis=None):
    a = _wrap(a)
    out = np.mean(a.data, axis=axis)
    shape = a.data.shape
    count = a.data.size if axis is None else shape[axis]

    def bwd(g):
        if axis is None:
            return np.broadcast_to(g / count, shape)
        return np.broadcast_to(np.expand_dims(g / count, axis), shape)

    return _emit("mean", out, (a,), (bwd,))


def logsumexp(a, axis=None):
    """log(sum(exp(a))), shifted by the max for stability.

    Backward is the softmax of (a - out): exact, no re-shift needed.
    """
    a = _wrap(a)
    da = a.data
    m = np.max(da, axis=axis, keepdims=True)
    out = (m + np.log(np.sum(np.exp(da - m), axis=axis, keepdims=True)))
    if axis is None:
        out = out.reshape(())
    else:
        out = np.squeeze(out, axis=axis)

    def bwd(g):
        if axis is None:
            soft = np.exp(da - out)
            return g * soft
        gk = np.expand_dims(g, axis)
        ok = np.expand_dims(out, axis)
        return gk * np.exp(da - ok)

    return _emit("logsumexp", out, (a,), (bwd,))


def norm2(a):
    """Euclidean norm of the flattened tensor (composed primitive)."""
    return sqrt(tsum(square(a)))


# ---------------------------------------------------------------------------
# structural primitives

def stack(tensors):
    """Stack same-shaped tensors along a new leading axis."""
    ts = [_wrap(t) for t in tensors]
    base = ts[0].data.shape
    for t in ts[1:]:
        if t.data.shape != base:
            raise ShapeError(f"stack: shape mismatch: {base} vs {t.data.shape}")
    out = np.stack([t.data for t in ts], axis=0)

    # per-parent slice of the output cotangent
    def rule_for(i):
        return lambda g: g[i]

    return _emit("stack", out, tuple(ts), tuple(rule_for(i) for i in range(len(ts))))


def shift_next(a, axis):
    """out[..., j, ...] = a[..., j+1, ...], replicating the far edge.

    Building block for forward differences: shift_next(a, ax) - a gives
    the forward difference with a zero in the last slot along ax.
    """
    a = _wrap(a)
    n = a.data.shape[axis]
    idx = np.minimum(np.arange(1, n + 1), n - 1)
    out = np.take(a.data, idx, axis=axis)
    shape = a.data.shape

    def sl(first, last):
        s = [slice(None)] * len(shape)
        s[axis] = slice(first, last)
        return tuple(s)

    def bwd(g):
        d = np.zeros(shape, dtype=DTYPE)
        d[sl(1, None)] = g[sl(0, -1)]
        d[sl(n - 1, n)] += g[sl(n - 1, n)]
        return d

    return _emit("shift_next", out, (a,), (bwd,))


def conv2d(x, k):
    """2D convolution, stride 1, zero padding, channels-last.

    x: (H, W, Cin); k: (kh, kw, Cin, Cout) with odd kh, kw (same-size
    output).  Cross-correlation orientation, as every practical conv
    layer implements.
    """
    x, k = _wrap(x), _wrap(k)
    if x.data.ndim != 3 or k.data.ndim != 4:
        raise ShapeError(
            f"conv2d: need (H,W,Cin) and (kh,kw,Cin,Cout): {x.data.shape} vs {k.data.shape}"
        )
    H, W, cin = x.data.shape
    kh, kw, kcin, cout = k.data.shape
    if kcin != cin:
        raise ShapeError(f"conv2d: shape mismatch: {x.data.shape} vs {k.data.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel extents must be odd, got {k.data.shape}")
    ph, pw = kh // 2, kw // 2
    xp = np.zeros((H + kh - 1, W + kw - 1, cin), dtype=DTYPE)
    xp[ph:ph + H, pw:pw + W] = x.data
    # windows: (H, W, Cin, kh, kw)
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(0, 1))
    out = np.einsum("hwcij,ijco->hwo", win, k.data, optimize=True)
    kd = k.data

    def bwd_x(g):
        gk = np.einsum("hwo,ijco->hwijc", g, kd, optimize=True)
        dxp = np.zeros_like(xp)
        for di in range(kh):
            for dj in range(kw):
                dxp[di:di + H, dj:dj + W] += gk[:, :, di, dj, :]
        return dxp[ph:ph + H, pw:pw + W]

    def bwd_k(g):
        return np.einsum("hwcij,hwo->ijco", win, g, optimize=True)

    return _emit("conv2d", out, (x, k), (bwd_x, bwd_k))
