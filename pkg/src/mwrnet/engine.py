"""Reverse-mode automatic differentiation over 2-D float64 arrays.

Every value flowing through a model is a :class:`Tensor` of shape
``(rows, cols)``. Operations record their parents and a backward closure;
:func:`backward` walks the recorded graph in reverse topological order and
accumulates gradients into ``Tensor.grad``.

Rows are treated as independent samples wherever an operation normalizes or
reduces "per sample" (layer norm, l2 normalization, ``reduce(axis=1)``), so a
batch of B samples is simply a ``B x n`` tensor.
"""
from __future__ import annotations

import contextlib
import zlib
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor", "ShapeError", "NumericError", "make_rng", "glorot_uniform",
    "matmul", "add", "sub", "mul", "scale", "absolute", "relu", "tanh",
    "sigmoid", "activation", "elementwise", "layer_norm", "l2_normalize",
    "threshold_gate", "reduce", "concat", "take_rows", "reshape", "custom_op", "backward",
    "no_grad", "grad_check", "zero_grad", "track_kinks", "note_kink",
    "kink_signature", "kink_margin",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph (inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


_KINK_LOG: list | None = None


@contextlib.contextmanager
def track_kinks():
    """Record every non-smooth op evaluated inside the block.

    Yields a list of ``(distance, signs)`` entries: the smallest non-zero
    distance of the op's argument to its kink, and the packed sign pattern of
    that argument. Two evaluations whose concatenated sign patterns agree lie
    on the same smooth piece of the function.
    """
    global _KINK_LOG
    prev = _KINK_LOG
    _KINK_LOG = []
    try:
        yield _KINK_LOG
    finally:
        _KINK_LOG = prev


def note_kink(distance: np.ndarray) -> None:
    """Record signed distances to a kink (no-op unless inside :func:`track_kinks`).

    Exact zeros are left out of the distance: they come from structurally
    equal operands (two dead relu units, say) that move together under any
    perturbation. They still appear in the sign pattern.
    """
    if _KINK_LOG is None or not distance.size:
        return
    d = np.abs(distance)
    d = d[d > 0]
    _KINK_LOG.append((float(d.min()) if d.size else np.inf,
                      np.sign(distance).astype(np.int8).tobytes()))


def kink_signature(log: list) -> bytes:
    return b"".join(signs for _, signs in log)


def kink_margin(log: list) -> float:
    return min((d for d, _ in log), default=np.inf)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, op: str = "const"):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim > 2:
            raise ShapeError(f"rank {arr.ndim} tensors are not supported")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = op

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __abs__(self):
        return absolute(self)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _result(data: np.ndarray, parents: Sequence[Tensor], op: str,
            backward_fn: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    out._parents = ()
    out._backward = None
    out.requires_grad = False
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    (ar, ac), (br, bc) = a.shape, b.shape
    rows_ok = ar == br or br == 1 or ar == 1
    cols_ok = ac == bc or bc == 1 or ac == 1
    if not (rows_ok and cols_ok):
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not match")


# ---------------------------------------------------------------------------
# randomness and initialization

def _stream_key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & 0xFFFFFFFFFFFFFFFF


def make_rng(seed: int, *stream) -> np.random.Generator:
    """PCG64 generator keyed by ``seed`` and an optional stream path.

    ``make_rng(1, "init")`` and ``make_rng(1, "shuffle")`` are independent
    streams; the same arguments always give the same draws.
    """
    key = [_stream_key(seed)] + [_stream_key(p) for p in stream]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> Tensor:
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"glorot_uniform needs positive fans, got ({fan_in}, {fan_out})")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
    return Tensor(w, requires_grad=True, op="param")


# ---------------------------------------------------------------------------
# primitives

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), "matmul", bw)


def add(a: Tensor, b) -> Tensor:
    """Sum with row/column broadcasting of size-1 axes (bias addition)."""
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a, b, "add")

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), "add", bw)


def sub(a: Tensor, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a, b, "sub")

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), "sub", bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a, b, "mul")

    def bw(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), "mul", bw)


def scale(a: Tensor, c: float) -> Tensor:
    a = _wrap(a)
    c = float(c)
    return _result(a.data * c, (a,), "scale", lambda g: _accumulate(a, g * c))


def absolute(a: Tensor) -> Tensor:
    # sign(0) == 0
    a = _wrap(a)
    note_kink(a.data)
    sign = np.sign(a.data)
    return _result(np.abs(a.data), (a,), "abs", lambda g: _accumulate(a, g * sign))


def elementwise(kind: str, a: Tensor, b=None) -> Tensor:
    if kind == "add":
        return add(a, b)
    if kind == "sub":
        return sub(a, b)
    if kind == "abs":
        return absolute(a)
    if kind == "scale":
        return scale(a, b)
    raise ValueError(f"unknown elementwise kind {kind!r}")


def relu(x: Tensor) -> Tensor:
    x = _wrap(x)
    note_kink(x.data)
    mask = x.data > 0.0
    return _result(np.where(mask, x.data, 0.0), (x,), "relu",
                   lambda g: _accumulate(x, g * mask))


def tanh(x: Tensor) -> Tensor:
    x = _wrap(x)
    y = np.tanh(x.data)
    return _result(y, (x,), "tanh", lambda g: _accumulate(x, g * (1.0 - y * y)))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    x = _wrap(x)
    y = _sigmoid(x.data)
    return _result(y, (x,), "sigmoid", lambda g: _accumulate(x, g * y * (1.0 - y)))


def activation(kind: str, x: Tensor) -> Tensor:
    try:
        fn = {"relu": relu, "tanh": tanh, "sigmoid": sigmoid}[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(x)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row over its features, then apply the affine (gamma, beta)."""
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    n = x.shape[1]
    if n < 1:
        raise ShapeError("layer_norm over zero features")
    if gamma.shape != (1, n) or beta.shape != (1, n):
        raise ShapeError(f"layer_norm: affine shapes {gamma.shape}, {beta.shape} for width {n}")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def bw(g):
        if gamma.requires_grad:
            _accumulate(gamma, (g * xhat).sum(axis=0, keepdims=True))
        if beta.requires_grad:
            _accumulate(beta, g.sum(axis=0, keepdims=True))
        if x.requires_grad:
            dxhat = g * gamma.data
            dx = inv * (dxhat - dxhat.mean(axis=1, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
            _accumulate(x, dx)

    return _result(xhat * gamma.data + beta.data, (x, gamma, beta), "layer_norm", bw)


def l2_normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Row-wise ``x / max(||x||, eps)``."""
    x = _wrap(x)
    norm = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True))
    big = norm >= eps
    denom = np.where(big, norm, eps)
    y = x.data / denom

    def bw(g):
        radial = (g * y).sum(axis=1, keepdims=True)
        dx = np.where(big, (g - y * radial) / denom, g / eps)
        _accumulate(x, dx)

    return _result(y, (x,), "l2_normalize", bw)


def threshold_gate(x: Tensor, t: Tensor, mode: str = "soft", steepness: float = 10.0) -> Tensor:
    """Suppress entries of ``x`` below the learnable scalar threshold ``t``.

    hard: ``x * [x >= t]`` (no gradient reaches ``t``).
    soft: ``x * sigmoid(steepness * (x - t))``, differentiable in ``x`` and ``t``.
    """
    x, t = _wrap(x), _wrap(t)
    if not steepness > 0:
        raise ValueError(f"steepness must be positive, got {steepness}")
    if t.shape != (1, 1):
        raise ShapeError(f"threshold must be a 1x1 tensor, got {t.shape}")
    if mode == "hard":
        note_kink(x.data - t.data[0, 0])
        mask = (x.data >= t.data[0, 0]).astype(np.float64)
        return _result(x.data * mask, (x, t), "gate_hard",
                       lambda g: _accumulate(x, g * mask))
    if mode != "soft":
        raise ValueError(f"unknown gate mode {mode!r}")
    s = _sigmoid(steepness * (x.data - t.data[0, 0]))
    ds = steepness * s * (1.0 - s)

    def bw(g):
        if x.requires_grad:
            _accumulate(x, g * (s + x.data * ds))
        if t.requires_grad:
            _accumulate(t, np.array([[-(g * x.data * ds).sum()]]))

    return _result(x.data * s, (x, t), "gate_soft", bw)


def reduce(kind: str, x: Tensor, axis: int | None = None) -> Tensor:
    """Sum or mean over all entries (``axis=None``, 1x1 result) or along an axis."""
    x = _wrap(x)
    if x.data.size == 0:
        raise ValueError("reduce over an empty tensor")
    if kind not in ("sum", "mean"):
        raise ValueError(f"unknown reduction {kind!r}")
    if axis is None:
        count = x.data.size
        val = x.data.sum().reshape(1, 1)
    else:
        count = x.shape[axis]
        val = x.data.sum(axis=axis, keepdims=True)
    factor = 1.0 / count if kind == "mean" else 1.0
    shape = x.shape

    def bw(g):
        _accumulate(x, np.broadcast_to(g * factor, shape))

    return _result(val * factor, (x,), kind, bw)


def concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Order-preserving concatenation (along columns by default)."""
    parts = [_wrap(p) for p in parts]
    if not parts:
        raise ValueError("concat of an empty list")
    try:
        data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def bw(g):
        for p, piece in zip(parts, np.split(g, bounds, axis=axis)):
            _accumulate(p, piece)

    return _result(data, parts, "concat", bw)


def take_rows(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous row slice ``x[start:stop]``."""
    x = _wrap(x)
    if not 0 <= start <= stop <= x.shape[0]:
        raise ShapeError(f"row slice [{start}:{stop}] out of range for {x.shape}")
    shape = x.shape

    def bw(g):
        full = np.zeros(shape)
        full[start:stop] = g
        _accumulate(x, full)

    return _result(x.data[start:stop], (x,), "take_rows", bw)


def reshape(x: Tensor, rows: int, cols: int) -> Tensor:
    x = _wrap(x)
    if rows * cols != x.data.size:
        raise ShapeError(f"cannot reshape {x.shape} to ({rows}, {cols})")
    shape = x.shape
    return _result(x.data.reshape(rows, cols), (x,), "reshape",
                   lambda g: _accumulate(x, g.reshape(shape)))


def custom_op(name: str, inputs: Sequence[Tensor], value: np.ndarray,
              grads_fn: Callable[[np.ndarray], Iterable[np.ndarray | None]]) -> Tensor:
    """Record a fused operation whose forward value was computed outside the engine.

    ``grads_fn(upstream)`` returns one gradient array (or None) per input.
    """
    inputs = [_wrap(t) for t in inputs]

    def bw(g):
        for t, gi in zip(inputs, grads_fn(g)):
            if gi is not None:
                _accumulate(t, gi)

    return _result(np.atleast_2d(np.asarray(value, dtype=np.float64)), inputs, name, bw)


# ---------------------------------------------------------------------------
# backward pass

def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> list[Tensor]:
    """Accumulate d(loss)/d(node) into ``.grad`` of every reachable tensor.

    Returns the recorded nodes in topological order. Gradients from multiple
    uses of the same tensor (shared weights) are summed.
    """
    if loss.shape != (1, 1):
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _topological(loss)
    for node in order:
        if node._backward is not None:
            node.grad = None
    loss.grad = np.ones((1, 1))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    return order


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-6,
               max_coords: int | None = None, rng: np.random.Generator | None = None,
               floor: float = 1e-8, skip_kinks: bool = False, stats: dict | None = None,
               order: int = 2) -> float:
    """Largest relative error ``|a - n| / max(|a|, |n|, floor)`` between backward
    gradients ``a`` and central differences ``n``.

    ``f`` recomputes a scalar loss from the current values of ``params`` (which
    are perturbed in place). With ``max_coords`` set, only that many randomly
    chosen coordinates of each parameter are probed.

    ``order=2`` is the plain central difference; ``order=4`` uses the five-point
    stencil, whose O(eps**4) truncation error allows a larger ``eps`` and so
    less roundoff.

    With ``skip_kinks`` a probe is discarded when either perturbed evaluation
    changes the sign pattern of any relu/abs/gate/clamp argument, since the
    central difference then straddles a kink. ``stats`` (if given) receives
    the ``probed`` and ``skipped`` counts.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if order not in (2, 4):
        raise ValueError(f"order must be 2 or 4, got {order}")
    offsets = (1.0, -1.0) if order == 2 else (1.0, -1.0, 2.0, -2.0)
    zero_grad(params)
    loss = f()
    if not np.isfinite(loss.data).all():
        raise NumericError("loss is not finite")
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    rng = rng if rng is not None else make_rng(0, "grad_check")

    def evaluate():
        if not skip_kinks:
            return f().item(), None
        with track_kinks() as log:
            value = f().item()
        return value, kink_signature(log)

    worst = 0.0
    probed = skipped = 0
    with no_grad():
        _, base_sig = evaluate()
        for p, a in zip(params, analytic):
            flat = p.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                idx = rng.choice(flat.size, size=max_coords, replace=False)
            for i in idx:
                orig = flat[i]
                vals, sigs = [], []
                for k in offsets:
                    flat[i] = orig + k * eps
                    v, sig = evaluate()
                    vals.append(v)
                    sigs.append(sig)
                flat[i] = orig
                if not np.isfinite(vals).all():
                    raise NumericError("loss became non-finite during perturbation")
                probed += 1
                if skip_kinks and any(sig != base_sig for sig in sigs):
                    skipped += 1
                    continue
                if order == 2:
                    num = (vals[0] - vals[1]) / (2.0 * eps)
                else:
                    num = (8.0 * (vals[0] - vals[1]) - (vals[2] - vals[3])) / (12.0 * eps)
                ana = a.reshape(-1)[i]
                err = abs(ana - num) / max(abs(ana), abs(num), floor)
                worst = max(worst, err)
    if stats is not None:
        stats.update(probed=probed, skipped=skipped)
    return worst
