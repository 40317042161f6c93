"""Reverse-mode automatic differentiation over numpy arrays, plus the small
neural-network and optimizer pieces built on top of it.

The kernel is a Wengert list: every operation appends a node to a
:class:`Tape` in execution order, and :meth:`Tape.backward` replays the list
in reverse, accumulating vector-Jacobian products into each node.  Nodes hold
float64 numpy arrays, so a single tape pass differentiates a whole batch.
Only the primitives needed by the density and flow code are provided
(arithmetic, exp, log, tanh, abs, reductions, reshape, row repetition and a
fused affine map); each is a closed-form local derivative, no numerical
approximation anywhere.

Design notes
------------
* Gradients of ``max`` follow the argmax convention: ties send the full
  gradient to the lowest flat index, matching ``numpy.argmax``.
* :class:`Parameter` objects are persistent slots.  A tape binds them to leaf
  nodes via :meth:`Tape.leaf`; after a backward sweep the node gradient is
  added into ``Parameter.grad``, so gradients accumulate across sweeps until
  the caller zeroes them.
* Everything is plain float64 numpy, so repeated runs on the same inputs are
  bit-identical.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError, TrainingError

__all__ = [
    "Parameter",
    "Var",
    "Tape",
    "affine",
    "grad",
    "Mlp",
    "mlp_forward",
    "Adam",
]


class Parameter:
    """A trainable array with an accumulated-gradient slot."""

    __slots__ = ("data", "grad", "name")

    def __init__(self, data, name: str = ""):
        self.data = np.array(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)
        self.name = name

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.data.shape})"


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape``, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class Var:
    """A node on a tape: a value plus the local backward rule."""

    __slots__ = ("data", "grad", "tape", "_bwd")

    def __init__(self, data: np.ndarray, tape: "Tape", bwd=None):
        self.data = data
        self.grad = None
        self.tape = tape
        self._bwd = bwd
        tape._nodes.append(self)

    # -- plumbing ---------------------------------------------------------

    def _acc(self, g: np.ndarray) -> None:
        # gradients are only ever combined out of place, so the first
        # contribution can be adopted without a copy
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def _coerce(self, other):
        if isinstance(other, Var):
            if other.tape is not self.tape:
                raise InputError("operands recorded on different tapes")
            return other, True
        return np.asarray(other, dtype=np.float64), False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other, is_var = self._coerce(other)
        if is_var:
            out = Var(self.data + other.data, self.tape)

            def bwd(g, a=self, b=other):
                a._acc(_unbroadcast(g, a.data.shape))
                b._acc(_unbroadcast(g, b.data.shape))

        else:
            out = Var(self.data + other, self.tape)

            def bwd(g, a=self):
                a._acc(_unbroadcast(g, a.data.shape))

        out._bwd = bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Var(-self.data, self.tape)

        def bwd(g, a=self):
            a._acc(_unbroadcast(-g, a.data.shape))

        out._bwd = bwd
        return out

    def __sub__(self, other):
        other, is_var = self._coerce(other)
        if is_var:
            out = Var(self.data - other.data, self.tape)

            def bwd(g, a=self, b=other):
                a._acc(_unbroadcast(g, a.data.shape))
                b._acc(_unbroadcast(-g, b.data.shape))

        else:
            out = Var(self.data - other, self.tape)

            def bwd(g, a=self):
                a._acc(_unbroadcast(g, a.data.shape))

        out._bwd = bwd
        return out

    def __rsub__(self, other):
        c = np.asarray(other, dtype=np.float64)
        out = Var(c - self.data, self.tape)

        def bwd(g, a=self):
            a._acc(_unbroadcast(-g, a.data.shape))

        out._bwd = bwd
        return out

    def __mul__(self, other):
        other, is_var = self._coerce(other)
        if is_var:
            out = Var(self.data * other.data, self.tape)

            def bwd(g, a=self, b=other):
                a._acc(_unbroadcast(g * b.data, a.data.shape))
                b._acc(_unbroadcast(g * a.data, b.data.shape))

        else:
            out = Var(self.data * other, self.tape)

            def bwd(g, a=self, c=other):
                a._acc(_unbroadcast(g * c, a.data.shape))

        out._bwd = bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other, is_var = self._coerce(other)
        if is_var:
            out = Var(self.data / other.data, self.tape)

            def bwd(g, a=self, b=other, o=out):
                a._acc(_unbroadcast(g / b.data, a.data.shape))
                b._acc(_unbroadcast(-g * o.data / b.data, b.data.shape))

        else:
            out = Var(self.data / other, self.tape)

            def bwd(g, a=self, c=other):
                a._acc(_unbroadcast(g / c, a.data.shape))

        out._bwd = bwd
        return out

    def __rtruediv__(self, other):
        c = np.asarray(other, dtype=np.float64)
        out = Var(c / self.data, self.tape)

        def bwd(g, a=self, o=out):
            a._acc(_unbroadcast(-g * o.data / a.data, a.data.shape))

        out._bwd = bwd
        return out

    # -- elementwise ------------------------------------------------------

    def exp(self):
        out = Var(np.exp(self.data), self.tape)

        def bwd(g, a=self, o=out):
            a._acc(g * o.data)

        out._bwd = bwd
        return out

    def log(self):
        out = Var(np.log(self.data), self.tape)

        def bwd(g, a=self):
            a._acc(g / a.data)

        out._bwd = bwd
        return out

    def tanh(self):
        out = Var(np.tanh(self.data), self.tape)

        def bwd(g, a=self, o=out):
            a._acc(g * (1.0 - o.data * o.data))

        out._bwd = bwd
        return out

    def abs(self):
        out = Var(np.abs(self.data), self.tape)

        def bwd(g, a=self):
            a._acc(g * np.sign(a.data))

        out._bwd = bwd
        return out

    # -- reductions and shape ops ----------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = Var(self.data.sum(axis=axis, keepdims=keepdims), self.tape)

        def bwd(g, a=self, ax=axis, kd=keepdims):
            if ax is not None and not kd:
                g = np.expand_dims(g, ax)
            a._acc(np.broadcast_to(g, a.data.shape).copy())

        out._bwd = bwd
        return out

    def max(self, axis=None, keepdims: bool = False):
        """Maximum reduction.  On ties the gradient goes to the first
        (lowest-index) maximizer, matching numpy.argmax."""
        data = self.data
        out = Var(data.max(axis=axis, keepdims=keepdims), self.tape)
        if axis is None:
            flat_idx = int(np.argmax(data))

            def bwd(g, a=self, fi=flat_idx):
                gz = np.zeros_like(a.data)
                gz.flat[fi] = np.sum(g)
                a._acc(gz)

        else:
            idx = np.argmax(data, axis=axis)

            def bwd(g, a=self, ax=axis, ix=idx, kd=keepdims):
                if kd:
                    g = np.squeeze(g, axis=ax)
                gz = np.zeros_like(a.data)
                np.put_along_axis(
                    gz, np.expand_dims(ix, ax), np.expand_dims(g, ax), ax
                )
                a._acc(gz)

        out._bwd = bwd
        return out

    def reshape(self, shape):
        out = Var(self.data.reshape(shape), self.tape)

        def bwd(g, a=self):
            a._acc(g.reshape(a.data.shape))

        out._bwd = bwd
        return out

    def repeat_rows(self, k: int):
        """Repeat each row ``k`` times: (n, d) -> (n*k, d)."""
        if self.data.ndim != 2:
            raise InputError("repeat_rows expects a 2-d array")
        n, d = self.data.shape
        out = Var(np.repeat(self.data, k, axis=0), self.tape)

        def bwd(g, a=self, n=n, k=k, d=d):
            a._acc(g.reshape(n, k, d).sum(axis=1))

        out._bwd = bwd
        return out


def affine(x: Var, w: Var, b: Var) -> Var:
    """Fused ``x @ w + b`` for a batch: (n, i) @ (i, o) + (o,) -> (n, o)."""
    if x.tape is not w.tape or x.tape is not b.tape:
        raise InputError("operands recorded on different tapes")
    out = Var(x.data @ w.data + b.data, x.tape)

    def bwd(g, x=x, w=w, b=b):
        x._acc(g @ w.data.T)
        w._acc(x.data.T @ g)
        b._acc(g.sum(axis=0))

    out._bwd = bwd
    return out


class Tape:
    """Execution-order list of :class:`Var` nodes with a reverse sweep."""

    def __init__(self):
        self._nodes: list[Var] = []
        self._leaves: list[tuple[Var, Parameter]] = []

    def constant(self, data) -> Var:
        """Record a value that receives no gradient."""
        return Var(np.asarray(data, dtype=np.float64), self)

    def leaf(self, p: Parameter) -> Var:
        """Bind a parameter slot to this tape.  After backward() the node
        gradient is added into ``p.grad``."""
        v = Var(p.data, self)
        self._leaves.append((v, p))
        return v

    def backward(self, out: Var) -> None:
        """Reverse sweep from a scalar output, filling parameter gradients."""
        if out.tape is not self:
            raise InputError("output was not recorded on this tape")
        if np.size(out.data) != 1:
            raise InputError("backward expects a scalar output")
        for v in self._nodes:
            v.grad = None
        out.grad = np.ones_like(out.data)
        for v in reversed(self._nodes):
            if v.grad is not None and v._bwd is not None:
                v._bwd(v.grad)
                v.grad = None
        for v, p in self._leaves:
            if v.grad is not None:
                p.grad += v.grad

    def release(self) -> None:
        """Drop the recorded graph.  Nodes form reference cycles through
        their backward closures; breaking them here frees the arrays by
        reference counting instead of waiting for the cycle collector."""
        for v in self._nodes:
            v._bwd = None
            v.grad = None
        self._nodes.clear()
        self._leaves.clear()


def grad(tape: Tape, out: Var) -> dict:
    """Zero the tape's parameter slots, sweep backward from ``out`` and
    return a dict mapping each bound :class:`Parameter` to a gradient copy."""
    for _, p in tape._leaves:
        p.zero_grad()
    tape.backward(out)
    return {p: p.grad.copy() for _, p in tape._leaves}


class Mlp:
    """Fully connected tanh network operating on tape nodes.

    Hidden layers use Glorot-uniform weight initialization; if ``zero_last``
    is set the output layer starts at exactly zero so the whole map is the
    zero function at initialization.
    """

    def __init__(
        self,
        input_dim: int,
        hidden_dims: tuple[int, ...],
        output_dim: int,
        rng: np.random.Generator | None = None,
        zero_last: bool = False,
        name: str = "mlp",
    ):
        if input_dim < 1 or output_dim < 1:
            raise InputError("layer widths must be positive")
        if any(h < 1 for h in hidden_dims):
            raise InputError("layer widths must be positive")
        if rng is None:
            rng = np.random.default_rng(0)
        self.input_dim = int(input_dim)
        self.hidden_dims = tuple(int(h) for h in hidden_dims)
        self.output_dim = int(output_dim)
        self.weights: list[Parameter] = []
        self.biases: list[Parameter] = []
        widths = [self.input_dim, *self.hidden_dims, self.output_dim]
        last = len(widths) - 2
        for k, (fi, fo) in enumerate(zip(widths[:-1], widths[1:])):
            if zero_last and k == last:
                w = np.zeros((fi, fo))
            else:
                limit = np.sqrt(6.0 / (fi + fo))
                w = rng.uniform(-limit, limit, size=(fi, fo))
            self.weights.append(Parameter(w, name=f"{name}.w{k}"))
            self.biases.append(Parameter(np.zeros(fo), name=f"{name}.b{k}"))

    def parameters(self) -> list[Parameter]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def __call__(self, x: Var) -> Var:
        if x.data.ndim != 2 or x.data.shape[1] != self.input_dim:
            raise InputError(
                f"expected input of shape (n, {self.input_dim}), "
                f"got {x.data.shape}"
            )
        tape = x.tape
        h = x
        n_layers = len(self.weights)
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = affine(h, tape.leaf(w), tape.leaf(b))
            if k < n_layers - 1:
                h = h.tanh()
        return h


def mlp_forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Evaluate a network on a plain array (single point or batch)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    tape = Tape()
    y = net(tape.constant(x)).data
    tape.release()
    return y[0] if single else y


class Adam:
    """Adam optimizer over a list of :class:`Parameter` slots.

    Moment estimates m, v are kept per slot; the update is the standard
    bias-corrected rule x -= lr * m_hat / (sqrt(v_hat) + eps).
    """

    def __init__(
        self,
        params: list[Parameter],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise InputError("learning rate must be positive")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise InputError("decay rates must lie in [0, 1)")
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for i, p in enumerate(self.params):
            if not np.all(np.isfinite(p.grad)):
                raise TrainingError(
                    f"non-finite gradient in parameter slot {i} "
                    f"({p.name or 'unnamed'})"
                )
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
