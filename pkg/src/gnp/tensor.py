"""Dense float64 tensors with reverse-mode automatic differentiation.

A ``Tape`` records one forward pass; ``backward`` replays it in reverse and
returns a gradient for every node that influenced the root. Tapes are built
per forward pass and discarded after backward (define-by-run), which keeps
episode-varying shapes trivial. Tensors without a tape attachment are plain
immutable value wrappers and all ops degrade to ordinary numpy calls.

Everything is float64. Gaussian log-likelihoods with near-singular
covariances are the main consumer and are numerically hostile below that.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .linalg import cholesky_with_jitter

__all__ = [
    "ShapeError",
    "Tape",
    "Tensor",
    "tensor",
    "add", "sub", "mul", "div", "neg", "matmul",
    "exp", "log", "tanh", "relu", "softplus", "sigmoid",
    "tsum", "tmean", "transpose", "reshape", "concat", "narrow",
    "softmax", "diagonal", "cholesky", "trisolve",
    "conv1d", "sqdist",
    "backward",
]

# Opt-in forward finiteness checks (used by tests; too costly for training).
CHECK_FINITE = False


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class Tape:
    """Ordered record of one forward pass.

    Node ids are list indices, so topological order (inputs before
    consumers) holds by construction.
    """

    __slots__ = ("nodes",)

    def __init__(self):
        # each node: (op kind, input node ids, backward closure or None)
        self.nodes = []

    def _push(self, op, input_ids, bwd):
        self.nodes.append((op, input_ids, bwd))
        return len(self.nodes) - 1

    def watch(self, t):
        """Register ``t`` as a leaf whose gradient should be tracked."""
        if t.tape is not None:
            raise ValueError("tensor is already attached to a tape")
        t.tape = self
        t.node_id = self._push("leaf", (), None)
        return t

    def __len__(self):
        return len(self.nodes)


class Tensor:
    """Row-major float64 array, optionally attached to a tape node."""

    __slots__ = ("data", "tape", "node_id")

    def __init__(self, data, tape=None, node_id=None):
        self.data = data
        self.tape = tape
        self.node_id = node_id

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, tape={self.tape is not None})"

    # arithmetic sugar; right-hand scalars/arrays are lifted to constants
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def tensor(data):
    """Wrap ``data`` as a constant (tape-free) float64 tensor."""
    return Tensor(np.asarray(data, dtype=np.float64))


def _lift(x):
    if isinstance(x, Tensor):
        return x
    return tensor(x)


def _tape_of(*tensors):
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is None:
                tape = t.tape
            elif tape is not t.tape:
                raise ValueError("operands belong to different tapes")
    return tape


def _record(op, inputs, out_data, bwd_builder):
    """Create the output tensor, recording a node if any input is taped.

    ``bwd_builder`` is called lazily (only when recording) and must return a
    closure mapping the output gradient to a tuple of input gradients,
    positionally matching ``inputs`` (None allowed for constants).
    """
    if CHECK_FINITE and not np.all(np.isfinite(out_data)):
        raise FloatingPointError(f"non-finite values produced by op '{op}'")
    tape = _tape_of(*inputs)
    out = Tensor(out_data)
    if tape is not None:
        ids = tuple(t.node_id if t.tape is not None else None for t in inputs)
        out.tape = tape
        out.node_id = tape._push(op, ids, bwd_builder())
    return out


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(
            f"{op}: shapes {a.shape} and {b.shape} do not broadcast"
        ) from None


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = _lift(a), _lift(b)
    _check_broadcast(a.data, b.data, "add")

    def bwd_builder():
        sa, sb = a.data.shape, b.data.shape

        def bwd(g):
            return _unbroadcast(g, sa), _unbroadcast(g, sb)

        return bwd

    return _record("add", (a, b), a.data + b.data, bwd_builder)


def sub(a, b):
    a, b = _lift(a), _lift(b)
    _check_broadcast(a.data, b.data, "sub")

    def bwd_builder():
        sa, sb = a.data.shape, b.data.shape

        def bwd(g):
            return _unbroadcast(g, sa), -_unbroadcast(g, sb)

        return bwd

    return _record("sub", (a, b), a.data - b.data, bwd_builder)


def mul(a, b):
    a, b = _lift(a), _lift(b)
    _check_broadcast(a.data, b.data, "mul")

    def bwd_builder():
        ad, bd = a.data, b.data

        def bwd(g):
            return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

        return bwd

    return _record("mul", (a, b), a.data * b.data, bwd_builder)


def div(a, b):
    a, b = _lift(a), _lift(b)
    _check_broadcast(a.data, b.data, "div")
    out = a.data / b.data

    def bwd_builder():
        ad, bd = a.data, b.data

        def bwd(g):
            ga = _unbroadcast(g / bd, ad.shape)
            gb = _unbroadcast(-g * ad / (bd * bd), bd.shape)
            return ga, gb

        return bwd

    return _record("div", (a, b), out, bwd_builder)


def neg(a):
    a = _lift(a)

    def bwd_builder():
        def bwd(g):
            return (-g,)

        return bwd

    return _record("neg", (a,), -a.data, bwd_builder)


# ---------------------------------------------------------------------------
# elementwise nonlinearities
# ---------------------------------------------------------------------------

def exp(a):
    a = _lift(a)
    out = np.exp(a.data)

    def bwd_builder():
        def bwd(g):
            return (g * out,)

        return bwd

    return _record("exp", (a,), out, bwd_builder)


def log(a):
    a = _lift(a)

    def bwd_builder():
        ad = a.data

        def bwd(g):
            return (g / ad,)

        return bwd

    return _record("log", (a,), np.log(a.data), bwd_builder)


def tanh(a):
    a = _lift(a)
    out = np.tanh(a.data)

    def bwd_builder():
        def bwd(g):
            return (g * (1.0 - out * out),)

        return bwd

    return _record("tanh", (a,), out, bwd_builder)


def relu(a):
    a = _lift(a)
    out = np.maximum(a.data, 0.0)

    def bwd_builder():
        mask = a.data > 0.0

        def bwd(g):
            return (g * mask,)

        return bwd

    return _record("relu", (a,), out, bwd_builder)


def _sigmoid(x):
    # stable for large |x|
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def softplus(a):
    """log(1 + e^x), computed stably; derivative is the logistic sigmoid."""
    a = _lift(a)
    out = np.logaddexp(0.0, a.data)

    def bwd_builder():
        sig = _sigmoid(a.data)

        def bwd(g):
            return (g * sig,)

        return bwd

    return _record("softplus", (a,), out, bwd_builder)


def sigmoid(a):
    a = _lift(a)
    out = _sigmoid(a.data)

    def bwd_builder():
        def bwd(g):
            return (g * out * (1.0 - out),)

        return bwd

    return _record("sigmoid", (a,), out, bwd_builder)


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    a = _lift(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd_builder():
        shape = a.data.shape

        def bwd(g):
            if axis is None:
                return (np.broadcast_to(g, shape).copy() if np.ndim(g) == 0
                        else np.full(shape, g.item()),)
            gg = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gg, shape).copy(),)

        return bwd

    return _record("sum", (a,), out, bwd_builder)


def tmean(a, axis=None, keepdims=False):
    a = _lift(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def transpose(a):
    a = _lift(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected 2-D, got shape {a.data.shape}")

    def bwd_builder():
        def bwd(g):
            return (g.T,)

        return bwd

    return _record("transpose", (a,), a.data.T.copy(), bwd_builder)


def reshape(a, shape):
    a = _lift(a)
    out = a.data.reshape(shape)

    def bwd_builder():
        orig = a.data.shape

        def bwd(g):
            return (g.reshape(orig),)

        return bwd

    return _record("reshape", (a,), out, bwd_builder)


def concat(tensors, axis=0):
    tensors = [_lift(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def bwd_builder():
        sizes = [t.data.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]

        def bwd(g):
            return tuple(np.split(g, splits, axis=axis))

        return bwd

    return _record("concat", tuple(tensors), out, bwd_builder)


def narrow(a, axis, start, length):
    """Contiguous slice of ``length`` elements along ``axis``."""
    a = _lift(a)
    if not (0 <= start and start + length <= a.data.shape[axis]):
        raise ShapeError(
            f"narrow: [{start}:{start + length}) out of range for axis {axis} "
            f"of shape {a.data.shape}"
        )
    idx = tuple(
        slice(start, start + length) if d == axis else slice(None)
        for d in range(a.data.ndim)
    )
    out = a.data[idx].copy()

    def bwd_builder():
        shape = a.data.shape

        def bwd(g):
            full = np.zeros(shape)
            full[idx] = g
            return (full,)

        return bwd

    return _record("narrow", (a,), out, bwd_builder)


def softmax(a, axis):
    a = _lift(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd_builder():
        def bwd(g):
            inner = (g * out).sum(axis=axis, keepdims=True)
            return ((g - inner) * out,)

        return bwd

    return _record("softmax", (a,), out, bwd_builder)


def diagonal(a):
    a = _lift(a)
    n, m = a.data.shape
    if n != m:
        raise ShapeError(f"diagonal: expected square matrix, got {a.data.shape}")
    out = np.diagonal(a.data).copy()

    def bwd_builder():
        def bwd(g):
            full = np.zeros((n, n))
            np.fill_diagonal(full, g)
            return (full,)

        return bwd

    return _record("diagonal", (a,), out, bwd_builder)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b):
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul: shapes {a.data.shape} and {b.data.shape} do not conform"
        )

    def bwd_builder():
        ad, bd = a.data, b.data

        def bwd(g):
            return g @ bd.T, ad.T @ g

        return bwd

    return _record("matmul", (a, b), a.data @ b.data, bwd_builder)


def cholesky(a):
    """Lower Cholesky factor of a symmetric PSD matrix.

    Applies the shared jitter escalation policy on failure; the recorded
    backward differentiates through the factorization that actually ran
    (i.e. with jitter included), using the standard triangular-solve pullback
    with the result symmetrized over the input.
    """
    a = _lift(a)
    n, m = a.data.shape
    if n != m:
        raise ShapeError(f"cholesky: expected square matrix, got {a.data.shape}")
    L, _ = cholesky_with_jitter(a.data)

    def bwd_builder():
        def bwd(g):
            # phi(L^T g) with the diagonal halved, then two triangular solves
            p = np.tril(L.T @ g)
            p[np.diag_indices(n)] *= 0.5
            right = solve_triangular(L, p.T, lower=True, trans="T").T
            ga = solve_triangular(L, right, lower=True, trans="T")
            return (0.5 * (ga + ga.T),)

        return bwd

    return _record("cholesky", (a,), L, bwd_builder)


def trisolve(l, b):
    """Solve ``L x = b`` with L lower-triangular."""
    l, b = _lift(l), _lift(b)
    if l.data.shape[0] != l.data.shape[1] or l.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"trisolve: shapes {l.data.shape} and {b.data.shape} do not conform"
        )
    x = solve_triangular(l.data, b.data, lower=True)

    def bwd_builder():
        ld = l.data

        def bwd(g):
            gb = solve_triangular(ld, g, lower=True, trans="T")
            gl = -np.tril(gb @ x.T)
            return gl, gb

        return bwd

    return _record("trisolve", (l, b), x, bwd_builder)


# ---------------------------------------------------------------------------
# composite ops (autodiff through the primitives above)
# ---------------------------------------------------------------------------

def conv1d(x, w, b, dilation=1):
    """1-D convolution, stride 1, symmetric zero padding (length-preserving).

    x: [C_in, G]; w: [C_out, K * C_in] with taps stacked tap-major;
    b: [C_out, 1]. Implemented as im2col (stack shifted slices, one matmul);
    grids are at most a few hundred points so no FFT is warranted.
    """
    x, w, b = _lift(x), _lift(w), _lift(b)
    c_in, g_len = x.data.shape
    c_out, kc = w.data.shape
    if kc % c_in != 0:
        raise ShapeError(
            f"conv1d: weight shape {w.data.shape} incompatible with input "
            f"shape {x.data.shape}"
        )
    k = kc // c_in
    pad = (k - 1) // 2 * dilation
    zeros = tensor(np.zeros((c_in, pad)))
    xp = concat([zeros, x, zeros], axis=1)
    taps = [narrow(xp, 1, tap * dilation, g_len) for tap in range(k)]
    stacked = concat(taps, axis=0)  # [K*C_in, G]
    return add(matmul(w, stacked), b)


def sqdist(a, b):
    """Pairwise squared Euclidean distances, rows of a vs rows of b.

    Uses ||u - v||^2 = ||u||^2 + ||v||^2 - 2 u.v, clamped at zero so
    round-off never goes negative inside a downstream exp.
    """
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[1]:
        raise ShapeError(
            f"sqdist: shapes {a.data.shape} and {b.data.shape} do not conform"
        )
    sa = tsum(mul(a, a), axis=1, keepdims=True)        # [N, 1]
    sb = transpose(tsum(mul(b, b), axis=1, keepdims=True))  # [1, M]
    cross = matmul(a, transpose(b))
    return relu(sub(add(sa, sb), mul(cross, 2.0)))


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------

def backward(root):
    """Reverse-mode sweep from a scalar root.

    Returns {node_id: gradient ndarray} for every node that received one;
    the root's own gradient is 1. Each node is visited exactly once.
    """
    if root.tape is None:
        raise ValueError("backward: root is not attached to a tape")
    if root.data.size != 1:
        raise ShapeError(f"backward: root must be scalar, got shape {root.data.shape}")
    nodes = root.tape.nodes
    grads = [None] * len(nodes)
    grads[root.node_id] = np.ones_like(root.data)
    for nid in range(root.node_id, -1, -1):
        g = grads[nid]
        if g is None:
            continue
        _, input_ids, bwd = nodes[nid]
        if bwd is None:
            continue
        for iid, gin in zip(input_ids, bwd(g)):
            if iid is None:
                continue
            if grads[iid] is None:
                grads[iid] = gin
            else:
                grads[iid] = grads[iid] + gin
    return {i: g for i, g in enumerate(grads) if g is not None}
