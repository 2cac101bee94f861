"""Dense float64 tensors with taped reverse-mode differentiation.

All learnable state in this package lives in `Tensor` leaves; every forward
computation is a chain of the primitives defined here, each of which records
its adjoint closure on the active tape. `backward` replays the tape in reverse
topological order. No external autodiff framework is involved anywhere.
"""

from __future__ import annotations

import contextlib
import itertools
import json

import numpy as np


class AutodiffError(Exception):
    """Base class for tensor-engine failures."""


class ShapeMismatch(AutodiffError):
    pass


class DomainError(AutodiffError):
    pass


class TapeError(AutodiffError):
    pass


_ids = itertools.count()


class Tape:
    """Append-only record of one forward/backward cycle.

    `version` counts recorded nodes; `consumed_version` remembers where the
    last backward ran so a second backward without new recording is rejected.
    """

    def __init__(self):
        self.nodes = []
        self.consumed_version = -1

    @property
    def version(self):
        return len(self.nodes)

    def record(self, t):
        self.nodes.append(t)

    def dump(self):
        """JSON-serializable description of the recorded graph, for debugging."""
        out = []
        for t in self.nodes:
            out.append({
                "id": t.id,
                "op": t.op,
                "shape": list(t.shape),
                "parents": [p.id for p in t._parents],
            })
        return out

    def dump_json(self):
        return json.dumps(self.dump())


_tape = Tape()
_grad_enabled = True


def active_tape():
    return _tape


def reset_tape():
    """Start a fresh tape. Call between training steps; old nodes are dropped."""
    global _tape
    _tape = Tape()
    return _tape


@contextlib.contextmanager
def no_grad():
    """Disable recording; results inside are constants."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(g, shape):
    """Sum `g` down to `shape` (reverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "name", "tape", "id",
                 "_parents", "_bwd")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self.name = name
        self.tape = None
        self.id = next(_ids)
        self._parents = ()
        self._bwd = None

    # -- construction of op results ------------------------------------------

    @staticmethod
    def _result(data, op, parents, bwd):
        t = Tensor.__new__(Tensor)
        t.data = data
        t.grad = None
        t.name = None
        t.id = next(_ids)
        t.op = op
        if _grad_enabled and any(p.requires_grad for p in parents):
            t.requires_grad = True
            t._parents = tuple(parents)
            t._bwd = bwd
            t.tape = _tape
            _tape.record(t)
        else:
            t.requires_grad = False
            t._parents = ()
            t._bwd = None
            t.tape = None
        return t

    # -- basics --------------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return self.data.item()

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def zero_grad(self):
        self.grad = None

    # -- binary elementwise ---------------------------------------------------

    @staticmethod
    def _coerce(other):
        if isinstance(other, Tensor):
            return other
        if isinstance(other, (int, float, np.floating, np.integer, np.ndarray)):
            return Tensor(other)
        return None

    def __add__(self, other):
        o = Tensor._coerce(other)
        if o is None:
            return NotImplemented
        try:
            data = self.data + o.data
        except ValueError:
            raise ShapeMismatch(f"add: shapes {self.shape} vs {o.shape}")
        a, b = self, o

        def bwd(g):
            _accum(a, _unbroadcast(g, a.shape))
            _accum(b, _unbroadcast(g, b.shape))

        return Tensor._result(data, "add", (a, b), bwd)

    __radd__ = __add__

    def __sub__(self, other):
        o = Tensor._coerce(other)
        if o is None:
            return NotImplemented
        try:
            data = self.data - o.data
        except ValueError:
            raise ShapeMismatch(f"sub: shapes {self.shape} vs {o.shape}")
        a, b = self, o

        def bwd(g):
            _accum(a, _unbroadcast(g, a.shape))
            _accum(b, _unbroadcast(-g, b.shape))

        return Tensor._result(data, "sub", (a, b), bwd)

    def __rsub__(self, other):
        o = Tensor._coerce(other)
        if o is None:
            return NotImplemented
        return o.__sub__(self)

    def __mul__(self, other):
        o = Tensor._coerce(other)
        if o is None:
            return NotImplemented
        try:
            data = self.data * o.data
        except ValueError:
            raise ShapeMismatch(f"mul: shapes {self.shape} vs {o.shape}")
        a, b = self, o

        def bwd(g):
            _accum(a, _unbroadcast(g * b.data, a.shape))
            _accum(b, _unbroadcast(g * a.data, b.shape))

        return Tensor._result(data, "mul", (a, b), bwd)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = Tensor._coerce(other)
        if o is None:
            return NotImplemented
        try:
            data = self.data / o.data
        except ValueError:
            raise ShapeMismatch(f"div: shapes {self.shape} vs {o.shape}")
        a, b = self, o

        def bwd(g):
            _accum(a, _unbroadcast(g / b.data, a.shape))
            _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

        return Tensor._result(data, "div", (a, b), bwd)

    def __rtruediv__(self, other):
        o = Tensor._coerce(other)
        if o is None:
            return NotImplemented
        return o.__truediv__(self)

    def __neg__(self):
        a = self

        def bwd(g):
            _accum(a, -g)

        return Tensor._result(-a.data, "neg", (a,), bwd)

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            return NotImplemented
        p = float(p)
        if p != round(p) and np.any(self.data < 0):
            raise DomainError("pow: fractional power of negative input")
        a = self
        data = a.data ** p

        def bwd(g):
            _accum(a, g * p * a.data ** (p - 1.0))

        return Tensor._result(data, "pow", (a,), bwd)

    def __matmul__(self, other):
        o = Tensor._coerce(other)
        if o is None:
            return NotImplemented
        return matmul(self, o)

    def __rmatmul__(self, other):
        o = Tensor._coerce(other)
        if o is None:
            return NotImplemented
        return matmul(o, self)

    def __getitem__(self, key):
        a = self
        data = a.data[key]
        if np.isscalar(data) or data.ndim == 0:
            data = np.asarray(data)

        def bwd(g):
            buf = np.zeros_like(a.data)
            buf[key] += g
            _accum(a, buf)

        return Tensor._result(data, "slice", (a,), bwd)

    # -- unary elementwise -----------------------------------------------------

    def exp(self):
        a = self
        data = np.exp(a.data)

        def bwd(g):
            _accum(a, g * data)

        return Tensor._result(data, "exp", (a,), bwd)

    def log(self):
        if np.any(self.data < 0):
            raise DomainError("log: negative input")
        a = self
        with np.errstate(divide="ignore"):
            data = np.log(a.data)

        def bwd(g):
            _accum(a, g / a.data)

        return Tensor._result(data, "log", (a,), bwd)

    def sqrt(self):
        if np.any(self.data < 0):
            raise DomainError("sqrt: negative input")
        a = self
        data = np.sqrt(a.data)

        def bwd(g):
            _accum(a, g / (2.0 * data))

        return Tensor._result(data, "sqrt", (a,), bwd)

    def tanh(self):
        a = self
        data = np.tanh(a.data)

        def bwd(g):
            _accum(a, g * (1.0 - data * data))

        return Tensor._result(data, "tanh", (a,), bwd)

    def sin(self):
        a = self
        data = np.sin(a.data)

        def bwd(g):
            _accum(a, g * np.cos(a.data))

        return Tensor._result(data, "sin", (a,), bwd)

    def cos(self):
        a = self
        data = np.cos(a.data)

        def bwd(g):
            _accum(a, -g * np.sin(a.data))

        return Tensor._result(data, "cos", (a,), bwd)

    def abs(self):
        a = self
        data = np.abs(a.data)

        def bwd(g):
            # sign(0) = 0: deterministic subgradient at the kink
            _accum(a, g * np.sign(a.data))

        return Tensor._result(data, "abs", (a,), bwd)

    def sigmoid(self):
        a = self
        data = 1.0 / (1.0 + np.exp(-np.clip(a.data, -500, 500)))

        def bwd(g):
            _accum(a, g * data * (1.0 - data))

        return Tensor._result(data, "sigmoid", (a,), bwd)

    def softplus(self):
        a = self
        data = np.logaddexp(0.0, a.data)

        def bwd(g):
            _accum(a, g / (1.0 + np.exp(-np.clip(a.data, -500, 500))))

        return Tensor._result(data, "softplus", (a,), bwd)

    def clamp(self, lo=None, hi=None):
        a = self
        data = np.clip(a.data, lo, hi)
        inside = np.ones_like(a.data)
        if lo is not None:
            inside = inside * (a.data >= lo)
        if hi is not None:
            inside = inside * (a.data <= hi)

        def bwd(g):
            _accum(a, g * inside)

        return Tensor._result(data, "clamp", (a,), bwd)

    # -- structure -------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        try:
            data = a.data.reshape(shape)
        except ValueError:
            raise ShapeMismatch(f"reshape: {a.shape} -> {shape}")
        orig = a.shape

        def bwd(g):
            _accum(a, g.reshape(orig))

        return Tensor._result(data, "reshape", (a,), bwd)

    def transpose(self, axes=None):
        a = self
        data = np.transpose(a.data, axes)
        if axes is None:
            inv = None
        else:
            inv = np.argsort(axes)

        def bwd(g):
            _accum(a, np.transpose(g, inv))

        return Tensor._result(data, "transpose", (a,), bwd)

    @property
    def T(self):
        return self.transpose()

    def broadcast_to(self, shape):
        a = self
        try:
            data = np.broadcast_to(a.data, shape)
        except ValueError:
            raise ShapeMismatch(f"broadcast: {a.shape} -> {shape}")
        data = np.ascontiguousarray(data)

        def bwd(g):
            _accum(a, _unbroadcast(g, a.shape))

        return Tensor._result(data, "broadcast", (a,), bwd)

    # -- reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        a = self
        data = a.data.sum(axis=axis, keepdims=keepdims)
        data = np.asarray(data)

        def bwd(g):
            gg = g
            if not keepdims and axis is not None:
                gg = np.expand_dims(gg, axis)
            _accum(a, np.broadcast_to(gg, a.shape).copy())

        return Tensor._result(data, "sum", (a,), bwd)

    def mean(self, axis=None, keepdims=False):
        a = self
        data = np.asarray(a.data.mean(axis=axis, keepdims=keepdims))
        if axis is None:
            n = a.data.size
        elif isinstance(axis, tuple):
            n = int(np.prod([a.data.shape[ax] for ax in axis]))
        else:
            n = a.data.shape[axis]

        def bwd(g):
            gg = g / n
            if not keepdims and axis is not None:
                gg = np.expand_dims(gg, axis)
            _accum(a, np.broadcast_to(gg, a.shape).copy())

        return Tensor._result(data, "mean", (a,), bwd)

    def max(self, axis=None, keepdims=False):
        a = self
        data = np.asarray(a.data.max(axis=axis, keepdims=keepdims))

        def bwd(g):
            buf = np.zeros_like(a.data)
            if axis is None:
                # first maximal element in C order
                idx = np.unravel_index(np.argmax(a.data), a.shape)
                buf[idx] = g if np.isscalar(g) or g.ndim == 0 else g.reshape(())
            else:
                idx = np.expand_dims(np.argmax(a.data, axis=axis), axis)
                gg = g if keepdims else np.expand_dims(g, axis)
                np.put_along_axis(buf, idx, gg, axis=axis)
            _accum(a, buf)

        return Tensor._result(data, "max", (a,), bwd)

    def var(self, axis=None, keepdims=False):
        """Population variance (ddof = 0)."""
        a = self
        data = np.asarray(a.data.var(axis=axis, keepdims=keepdims))
        n = a.data.size if axis is None else a.data.shape[axis]
        mu = a.data.mean(axis=axis, keepdims=True)

        def bwd(g):
            gg = g
            if not keepdims and axis is not None:
                gg = np.expand_dims(gg, axis)
            _accum(a, 2.0 / n * (a.data - mu) * gg)

        return Tensor._result(data, "var", (a,), bwd)

    # -- normalizations --------------------------------------------------------

    def softmax(self, axis=-1):
        a = self
        shifted = a.data - a.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        data = e / e.sum(axis=axis, keepdims=True)

        def bwd(g):
            inner = (g * data).sum(axis=axis, keepdims=True)
            _accum(a, data * (g - inner))

        return Tensor._result(data, "softmax", (a,), bwd)

    def layer_norm(self, axis=-1, eps=1e-5):
        a = self
        mu = a.data.mean(axis=axis, keepdims=True)
        var = a.data.var(axis=axis, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        y = (a.data - mu) * inv
        n = a.data.shape[axis]

        def bwd(g):
            gm = g.mean(axis=axis, keepdims=True)
            gy = (g * y).mean(axis=axis, keepdims=True)
            _accum(a, inv * (g - gm - y * gy))

        return Tensor._result(y, "layer_norm", (a,), bwd)


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


# -- free-function primitives ------------------------------------------------


def matmul(a, b):
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch(
            f"matmul: operands must be >= 2-D, got {a.shape} @ {b.shape}")
    try:
        data = a.data @ b.data
    except ValueError:
        raise ShapeMismatch(f"matmul: shapes {a.shape} @ {b.shape}")

    def bwd(g):
        _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return Tensor._result(data, "matmul", (a, b), bwd)


def concat(tensors, axis=0):
    tensors = list(tensors)
    if not tensors:
        raise ShapeMismatch("concat: empty input list")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatch(
            f"concat: shapes {[t.shape for t in tensors]} along axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(t, g[tuple(sl)])

    return Tensor._result(data, "concat", tuple(tensors), bwd)


def gather_rows(t, idx):
    idx = np.asarray(idx)
    if idx.dtype.kind not in "iu":
        raise ShapeMismatch("gather_rows: index must be integer")
    a = t
    data = a.data[idx]

    def bwd(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        _accum(a, buf)

    return Tensor._result(data, "gather_rows", (a,), bwd)


def scatter_add_rows(src, idx, num_rows):
    """Sum rows of `src` into `num_rows` output rows; duplicates accumulate."""
    idx = np.asarray(idx)
    if idx.dtype.kind not in "iu":
        raise ShapeMismatch("scatter_add_rows: index must be integer")
    if idx.shape[0] != src.shape[0]:
        raise ShapeMismatch(
            f"scatter_add_rows: {src.shape[0]} rows vs {idx.shape[0]} indices")
    a = src
    data = np.zeros((num_rows,) + a.shape[1:], dtype=np.float64)
    np.add.at(data, idx, a.data)

    def bwd(g):
        _accum(a, g[idx])

    return Tensor._result(data, "scatter_add_rows", (a,), bwd)


def segment_max(src, idx, num_rows):
    """Per-segment max over rows; empty segments give zeros.

    Tie/adjoint rule: the gradient routes to the first row (in input order)
    attaining the segment max, independently per feature column.
    """
    idx = np.asarray(idx)
    if src.ndim != 2:
        raise ShapeMismatch(f"segment_max: rows must be 2-D, got {src.shape}")
    if idx.shape[0] != src.shape[0]:
        raise ShapeMismatch(
            f"segment_max: {src.shape[0]} rows vs {idx.shape[0]} indices")
    a = src
    n_edges = a.shape[0]
    data = np.full((num_rows,) + a.shape[1:], -np.inf)
    np.maximum.at(data, idx, a.data)
    counts = np.bincount(idx, minlength=num_rows)
    data[counts == 0] = 0.0

    def bwd(g):
        if n_edges == 0:
            _accum(a, np.zeros_like(a.data))
            return
        is_max = a.data == data[idx]
        pos = np.where(is_max, np.arange(n_edges)[:, None], n_edges)
        first = np.full(data.shape, n_edges, dtype=np.int64)
        np.minimum.at(first, idx, pos)
        buf = np.zeros_like(a.data)
        seg, col = np.nonzero(first < n_edges)
        buf[first[seg, col], col] += g[seg, col]
        _accum(a, buf)

    return Tensor._result(data, "segment_max", (a,), bwd)


def interp_linear(u, table, counter=None):
    """Piecewise-linear sample of tabulated functions at points in [0, 1].

    `u` is a Tensor of query points (any shape); `table` is a constant
    (q, grid) array of function values on a uniform grid over [0, 1]. Output
    has shape u.shape + (q,). Queries outside [0, 1] are clipped; if `counter`
    is a dict its "clipped" entry is incremented by the number of such points.
    """
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or table.shape[1] < 2:
        raise ShapeMismatch(f"interp_linear: table shape {table.shape}")
    a = u
    grid_n = table.shape[1]
    raw = a.data
    clipped = np.clip(raw, 0.0, 1.0)
    if counter is not None:
        counter["clipped"] = counter.get("clipped", 0) + int(
            np.sum((raw < 0.0) | (raw > 1.0)))
    pos = clipped * (grid_n - 1)
    k = np.minimum(pos.astype(np.int64), grid_n - 2)
    frac = pos - k
    left = table.T[k]            # u.shape + (q,)
    right = table.T[k + 1]
    data = left + frac[..., None] * (right - left)
    slope = (right - left) * (grid_n - 1)
    inside = ((raw >= 0.0) & (raw <= 1.0)).astype(np.float64)

    def bwd(g):
        _accum(a, (g * slope).sum(axis=-1) * inside)

    return Tensor._result(data, "interp_linear", (a,), bwd)


# -- backward ----------------------------------------------------------------


def backward(loss):
    """Reverse-mode sweep from a scalar `loss` recorded on the active tape."""
    if not isinstance(loss, Tensor):
        raise TapeError("backward: root must be a Tensor")
    if loss.data.size != 1:
        raise TapeError(f"backward: root must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise TapeError("backward: root does not depend on any parameter")
    tape = _tape
    if loss._bwd is None:
        # scalar leaf: gradient is trivially one
        loss.grad = np.ones_like(loss.data)
        return
    if loss.tape is not tape:
        raise TapeError("backward: root was recorded on a stale tape; "
                        "re-run the forward pass after reset_tape()")
    if tape.consumed_version == tape.version:
        raise TapeError("backward: tape already consumed; record new ops first")

    # iterative topological sort (tapes can exceed the recursion limit)
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    for node in topo:
        if node is not loss:
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._bwd is not None and node.grad is not None:
            node._bwd(node.grad)
    tape.consumed_version = tape.version


def zeros(shape, requires_grad=False):
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape, requires_grad=False):
    return Tensor(np.ones(shape), requires_grad=requires_grad)
